use super::*;
use crate::izmesh::{ImpactZone, LevelVolumeTable, ZoneEdge};
use proptest::prelude::*;

/// Flat-bottomed zones (prisms) joined by the given edges.
fn prisms(zones: &[(f64, f64)], edges: &[(usize, usize, f64, f64)]) -> ZoneMesh {
    let zones = zones
        .iter()
        .enumerate()
        .map(|(id, &(z_min, area))| ImpactZone {
            id,
            cells: Vec::new(),
            z_min,
            spill_elevation: z_min,
            level_volume: LevelVolumeTable::from_breakpoints(&[(z_min, 0.0), (z_min + 100.0, 100.0 * area)]).unwrap(),
            plan_area: area,
            centroid: (id as f64 * 10.0, 0.0),
        })
        .collect();
    let edges = edges
        .iter()
        .map(|&(a, b, crest, length)| ZoneEdge {
            zone_a: a,
            zone_b: b,
            crest_elevation: crest,
            boundary_length: length,
            flow_distance: 10.0,
        })
        .collect();
    ZoneMesh {
        ncols: 0,
        nrows: 0,
        cellsize: 1.0,
        zones,
        edges,
        labels: Vec::new(),
    }
}

fn run(state: &mut SurfaceState, mesh: &ZoneMesh, cfg: &SurfaceConfig, steps: usize) {
    let src = ExternalSources::zeros(mesh.zone_count());
    for _ in 0..steps {
        advance(state, mesh, cfg, &src).unwrap();
    }
}

#[test]
fn two_prisms_equalize_without_reversal() {
    let mesh = prisms(&[(0.0, 100.0), (0.0, 100.0)], &[(0, 1, 0.0, 10.0)]);
    let cfg = SurfaceConfig::default();
    let mut s = SurfaceState::from_levels(&mesh, 0.0, &[2.0, 1.0]).unwrap();
    for _ in 0..2000 {
        let before = s.level[0] - s.level[1];
        run(&mut s, &mesh, &cfg, 1);
        let after = s.level[0] - s.level[1];
        assert!(after >= 0.0 && after <= before);
    }
    assert!((s.level[0] - 1.5).abs() < 1e-6, "{:?}", s.level);
    assert!((s.level[1] - 1.5).abs() < 1e-6);
    assert!(s.mass_balance_error() < 1e-12);
}

#[test]
fn equal_levels_are_a_fixed_point() {
    let mesh = prisms(&[(0.0, 50.0), (0.5, 80.0), (0.2, 30.0)], &[(0, 1, 0.6, 5.0), (1, 2, 0.7, 5.0)]);
    let s0 = SurfaceState::from_levels(&mesh, 0.0, &[1.0, 1.0, 1.0]).unwrap();
    let mut s = s0.clone();
    run(&mut s, &mesh, &SurfaceConfig::default(), 50);
    assert_eq!(s.volume, s0.volume);
    assert_eq!(s.level, s0.level);
    assert!(s.discharge.iter().all(|&q| q == 0.0));
}

#[test]
fn water_below_crest_stays_put() {
    let mesh = prisms(&[(0.0, 100.0), (0.0, 100.0)], &[(0, 1, 1.0, 10.0)]);
    let mut s = SurfaceState::from_levels(&mesh, 0.0, &[0.9, 0.0]).unwrap();
    run(&mut s, &mesh, &SurfaceConfig::default(), 100);
    assert_eq!(s.level[1], 0.0);
    assert_eq!(s.volume[1], 0.0);
}

#[test]
fn spill_over_crest_stops_at_crest() {
    let mesh = prisms(&[(0.0, 100.0), (-5.0, 1000.0)], &[(0, 1, 1.0, 10.0)]);
    let mut s = SurfaceState::from_levels(&mesh, 0.0, &[2.0, -5.0]).unwrap();
    run(&mut s, &mesh, &SurfaceConfig::default(), 5000);
    assert!(s.level[0] >= 1.0 - 1e-12);
    assert!((s.level[0] - 1.0).abs() < 1e-3, "{}", s.level[0]);
    assert!(s.mass_balance_error() < 1e-12);
}

#[test]
fn steady_inflow_gives_two_and_a_half_centimetres_per_hour() {
    // 360 km2 receiving 2500 m3/s for one hour.
    let mesh = prisms(&[(0.0, 360.0e6)], &[]);
    let cfg = SurfaceConfig::default();
    let mut s = SurfaceState::dry(&mesh, 0.0);
    let src = ExternalSources {
        boundary: vec![2500.0 * cfg.dt],
        surcharge: vec![0.0],
    };
    for _ in 0..360 {
        advance(&mut s, &mesh, &cfg, &src).unwrap();
    }
    assert!((s.volume[0] - 9.0e6).abs() < 1e-6);
    assert!((s.depth(&mesh, 0) - 0.025).abs() < 1e-12);
}

#[test]
fn sea_below_threshold_floods_nothing() {
    let mesh = prisms(&[(0.5, 1000.0), (0.2, 1000.0)], &[(0, 1, 0.8, 20.0)]);
    let cfg = SurfaceConfig {
        waterfront: vec![WaterfrontSegment {
            zone: 0,
            length: 100.0,
            delay: 0.0,
        }],
        ..SurfaceConfig::default()
    };
    let hydro = Hydrograph::new(vec![(0.0, 1.0), (3600.0, 1.2999), (7200.0, 1.0)]).unwrap();
    let mut s = SurfaceState::dry(&mesh, 0.0);
    while s.t < 7200.0 {
        let boundary = boundary_inflow(&hydro, &s, &mesh, &cfg).unwrap();
        assert!(boundary.iter().all(|&v| v == 0.0));
        advance(&mut s, &mesh, &cfg, &ExternalSources { boundary, surcharge: vec![0.0; 2] }).unwrap();
    }
    assert_eq!(s.total_volume(), 0.0);
}

#[test]
fn boundary_inflow_regression() {
    let mesh = prisms(&[(0.0, 1.0e6)], &[]);
    let cfg = SurfaceConfig {
        waterfront: vec![WaterfrontSegment {
            zone: 0,
            length: 100.0,
            delay: 0.0,
        }],
        ..SurfaceConfig::default()
    };
    let hydro = Hydrograph::constant(1.8, 0.0, 100.0);
    let s = SurfaceState::dry(&mesh, 0.0);
    let v = boundary_inflow(&hydro, &s, &mesh, &cfg).unwrap();
    assert!((v[0] - 626.418_390_534_633_1).abs() < 1e-9, "{}", v[0]);
}

#[test]
fn inflow_never_lifts_zone_above_sea() {
    let mesh = prisms(&[(1.0, 10.0)], &[]);
    let cfg = SurfaceConfig {
        waterfront: vec![WaterfrontSegment {
            zone: 0,
            length: 100.0,
            delay: 0.0,
        }],
        ..SurfaceConfig::default()
    };
    let hydro = Hydrograph::constant(1.8, 0.0, 10000.0);
    let mut s = SurfaceState::dry(&mesh, 0.0);
    for _ in 0..100 {
        let boundary = boundary_inflow(&hydro, &s, &mesh, &cfg).unwrap();
        advance(&mut s, &mesh, &cfg, &ExternalSources { boundary, surcharge: vec![0.0] }).unwrap();
        assert!(s.level[0] <= 1.8 + 1e-12);
    }
    assert!((s.level[0] - 1.8).abs() < 1e-12);
}

#[test]
fn sinks_are_clipped_and_recorded() {
    let mesh = prisms(&[(0.0, 100.0)], &[]);
    let cfg = SurfaceConfig::default();
    let mut s = SurfaceState::from_volumes(&mesh, 0.0, vec![50.0]).unwrap();
    let src = ExternalSources {
        boundary: vec![0.0],
        surcharge: vec![-80.0],
    };
    advance(&mut s, &mesh, &cfg, &src).unwrap();
    assert_eq!(s.volume[0], 0.0);
    assert_eq!(s.clip_ledger, 30.0);
    assert_eq!(s.surcharge_ledger, -80.0);
    assert!(s.mass_balance_error() < 1e-15);
}

#[test]
fn surcharge_rate_uses_plan_area_when_dry() {
    let mesh = prisms(&[(0.0, 400.0)], &[]);
    let cfg = SurfaceConfig::default();
    let s = SurfaceState::dry(&mesh, 0.0);
    let v = apply_surcharge_rates(&s, &mesh, &[1e-3], &cfg).unwrap();
    assert!((v[0] - 1e-3 * 400.0 * 10.0).abs() < 1e-15);
}

#[test]
fn overflow_is_an_error() {
    let mesh = prisms(&[(0.0, 1.0)], &[]);
    let mut s = SurfaceState::dry(&mesh, 0.0);
    let src = ExternalSources {
        boundary: vec![1000.0],
        surcharge: vec![0.0],
    };
    let err = advance(&mut s, &mesh, &SurfaceConfig::default(), &src).unwrap_err();
    assert!(matches!(err, SurfaceError::LevelOverflow { zone: 0, .. }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn config_validation() {
    let mesh = prisms(&[(0.0, 1.0)], &[]);
    assert!(SurfaceConfig::default().validate(&mesh).is_ok());
    let bad = SurfaceConfig {
        limiter_fraction: 0.9,
        ..SurfaceConfig::default()
    };
    assert!(bad.validate(&mesh).is_err());
    let bad = SurfaceConfig {
        waterfront: vec![WaterfrontSegment {
            zone: 3,
            length: 1.0,
            delay: 0.0,
        }],
        ..SurfaceConfig::default()
    };
    assert!(bad.validate(&mesh).is_err());
}

fn chain() -> ZoneMesh {
    prisms(
        &[(0.0, 2.0e4), (0.1, 1.5e4), (-0.2, 3.0e4), (0.3, 1.0e4), (0.0, 2.5e4)],
        &[(0, 1, 0.4, 12.0), (1, 2, 0.5, 8.0), (0, 2, 0.45, 5.0), (2, 3, 0.6, 10.0), (3, 4, 0.5, 9.0), (1, 4, 0.55, 7.0)],
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn network_conserves_mass_and_never_reverses(
        levels in proptest::collection::vec(0.0f64..3.0, 5),
        manning in any::<bool>(),
    ) {
        let mesh = chain();
        let cfg = SurfaceConfig {
            law: if manning { DischargeLaw::Manning } else { DischargeLaw::Weir },
            ..SurfaceConfig::default()
        };
        let mut s = SurfaceState::from_levels(&mesh, 0.0, &levels).unwrap();
        let src = ExternalSources::zeros(5);
        for _ in 0..200 {
            let prev = s.clone();
            advance(&mut s, &mesh, &cfg, &src).unwrap();
            prop_assert!(s.volume.iter().all(|&v| v >= 0.0));
            for e in &mesh.edges {
                let (a, b) = (e.zone_a, e.zone_b);
                if prev.level[a].max(prev.level[b]) <= e.crest_elevation {
                    continue;
                }
                let before = prev.level[a] - prev.level[b];
                let after = s.level[a] - s.level[b];
                prop_assert!(before * after >= 0.0, "edge {a}-{b}: {before} -> {after}");
            }
        }
        prop_assert!(s.mass_balance_error() < 1e-12);
        prop_assert!(s.check(&mesh).is_ok());
    }

    #[test]
    fn higher_sea_never_lowers_any_level(peak in 1.35f64..2.0, extra in 0.0f64..0.5) {
        let mesh = chain();
        let cfg = SurfaceConfig {
            waterfront: vec![WaterfrontSegment { zone: 0, length: 50.0, delay: 0.0 }],
            ..SurfaceConfig::default()
        };
        let trajectory = |lift: f64| {
            let hydro = Hydrograph::new(vec![(0.0, 1.0 + lift), (500.0, peak + lift), (1000.0, 1.0 + lift)]).unwrap();
            let mut s = SurfaceState::dry(&mesh, 0.0);
            let mut levels = Vec::new();
            while s.t < 1000.0 {
                let boundary = boundary_inflow(&hydro, &s, &mesh, &cfg).unwrap();
                advance(&mut s, &mesh, &cfg, &ExternalSources { boundary, surcharge: vec![0.0; 5] }).unwrap();
                levels.push(s.level.clone());
            }
            levels
        };
        let (low, high) = (trajectory(0.0), trajectory(extra));
        for (a, b) in low.iter().zip(&high) {
            for k in 0..5 {
                prop_assert!(b[k] >= a[k], "zone {k}: {} < {}", b[k], a[k]);
            }
        }
    }
}

#[test]
fn stepping_is_deterministic() {
    let mesh = chain();
    let cfg = SurfaceConfig::default();
    let s0 = SurfaceState::from_levels(&mesh, 0.0, &[2.0, 0.5, 0.0, 1.0, 0.3]).unwrap();
    let mut a = s0.clone();
    let mut b = s0;
    run(&mut a, &mesh, &cfg, 300);
    run(&mut b, &mesh, &cfg, 300);
    assert_eq!(a, b);
}

