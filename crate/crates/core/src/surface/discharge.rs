//! Inter-zone discharge relations. Both return a signed discharge in m3/s,
//! positive from zone `a` to zone `b`, and are exactly antisymmetric in their
//! level arguments.

pub const GRAVITY: f64 = 9.81;

/// Broad-crested weir with a submergence correction.
///
/// Free flow: `Q = 2/3 * cd * sqrt(2g) * length * H^1.5`, with `H` the
/// upstream head over the crest. When the downstream level is also above the
/// crest the discharge is reduced by `(1 - (H_down/H_up)^1.5)^0.385`.
pub fn weir_discharge(h_a: f64, h_b: f64, crest: f64, length: f64, cd: f64) -> f64 {
    if h_a == h_b {
        return 0.0;
    }
    let (up, down, sign) = if h_a > h_b { (h_a, h_b, 1.0) } else { (h_b, h_a, -1.0) };
    let head_up = up - crest;
    if head_up <= 0.0 {
        return 0.0;
    }
    let mut q = 2.0 / 3.0 * cd * (2.0 * GRAVITY).sqrt() * length * head_up.powf(1.5);
    let head_down = down - crest;
    if head_down > 0.0 {
        q *= (1.0 - (head_down / head_up).powf(1.5)).powf(0.385);
    }
    sign * q
}

/// Wide-channel Manning relation across a zone boundary:
/// `Q = length * d^(5/3) * sqrt(s) / n` with flow depth `d` over the crest
/// and water-surface slope `s = |h_a - h_b| / distance`.
pub fn manning_discharge(h_a: f64, h_b: f64, crest: f64, length: f64, distance: f64, n: f64) -> f64 {
    if h_a == h_b {
        return 0.0;
    }
    let (up, down, sign) = if h_a > h_b { (h_a, h_b, 1.0) } else { (h_b, h_a, -1.0) };
    let depth = up - crest;
    if depth <= 0.0 {
        return 0.0;
    }
    let slope = (up - down) / distance;
    sign * length * depth.powf(5.0 / 3.0) * slope.sqrt() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weir_equal_levels_and_dry_crest_give_zero() {
        assert_eq!(weir_discharge(1.0, 1.0, 0.0, 10.0, 0.6), 0.0);
        assert_eq!(weir_discharge(0.4, 0.1, 0.5, 10.0, 0.6), 0.0);
        assert_eq!(weir_discharge(0.5, 0.1, 0.5, 10.0, 0.6), 0.0);
    }

    #[test]
    fn weir_free_flow_regression() {
        // 2/3 * 0.6 * sqrt(19.62) * 10 * 0.5^1.5
        let by_hand = 2.0 / 3.0 * 0.6 * 19.62f64.sqrt() * 10.0 * 0.5f64.powf(1.5);
        let q = weir_discharge(1.5, 0.0, 1.0, 10.0, 0.6);
        assert_eq!(q, by_hand);
        assert!((q - 6.264_183_905_346_331).abs() < 1e-12, "q = {q:.15}");
        assert_eq!(weir_discharge(0.0, 1.5, 1.0, 10.0, 0.6), -q);
    }

    #[test]
    fn weir_submergence_reduces_flow() {
        let free = weir_discharge(1.5, 0.9, 1.0, 10.0, 0.6);
        let drowned = weir_discharge(1.5, 1.25, 1.0, 10.0, 0.6);
        let factor = (1.0 - 0.5f64.powf(1.5)).powf(0.385);
        assert!((drowned - free * factor).abs() < 1e-12);
    }

    #[test]
    fn manning_regression() {
        // n = 0.05, length 10, depth 1, slope 0.001
        let q = manning_discharge(1.1, 1.0, 0.1, 10.0, 100.0, 0.05);
        let by_hand = (1.0 / 0.05) * 10.0 * 1.0 * 0.001f64.sqrt();
        assert!((q - by_hand).abs() < 1e-9, "{q} vs {by_hand}");
        assert!((by_hand - 6.324_555_320_336_758).abs() < 1e-12);
    }

    #[test]
    fn manning_zero_cases() {
        assert_eq!(manning_discharge(2.0, 2.0, 0.0, 10.0, 5.0, 0.05), 0.0);
        assert_eq!(manning_discharge(0.5, 0.2, 1.0, 10.0, 5.0, 0.05), 0.0);
    }

    proptest! {
        #[test]
        fn both_laws_are_antisymmetric(
            a in -5.0f64..5.0, b in -5.0f64..5.0, crest in -5.0f64..5.0,
            len in 0.1f64..100.0, dist in 0.1f64..100.0,
        ) {
            prop_assert_eq!(weir_discharge(a, b, crest, len, 0.6), -weir_discharge(b, a, crest, len, 0.6));
            prop_assert_eq!(manning_discharge(a, b, crest, len, dist, 0.05), -manning_discharge(b, a, crest, len, dist, 0.05));
            let q = weir_discharge(a, b, crest, len, 0.6);
            prop_assert!(q == 0.0 || (q > 0.0) == (a > b));
        }
    }
}
