use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, Error, PartialEq)]
pub enum TableError {
    #[error("volume exceeds table capacity by {excess} m3")]
    VolumeOverflow { excess: f64 },
    #[error("level {level} m is above the table maximum {max} m")]
    LevelOverflow { level: f64, max: f64 },
}

/// Stored volume as a function of water level for one Impact Zone.
///
/// Exact for the cell-based terrain: between consecutive distinct cell
/// elevations the wetted area is constant, so the relation is piecewise linear
/// and convex, with one breakpoint per distinct elevation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelVolumeTable {
    levels: Vec<f64>,
    volumes: Vec<f64>,
}

impl LevelVolumeTable {
    /// Builds the table from the elevations of a zone's cells, extending it to
    /// `top`. Cells above `top` never get wet within the table range.
    pub fn from_elevations(elevations: &[f64], cell_area: f64, top: f64) -> Self {
        assert!(!elevations.is_empty(), "zone has no cells");
        let mut z: Vec<f64> = elevations.to_vec();
        z.sort_by(f64::total_cmp);
        let z_min = z[0];
        let top = if top > z_min { top } else { z_min + 1.0 };

        let mut levels = vec![z_min];
        let mut volumes = vec![0.0];
        let mut wet = 0usize;
        let mut i = 0;
        while i < z.len() && z[i] < top {
            let e = z[i];
            if e > *levels.last().unwrap() {
                let v = volumes.last().unwrap() + wet as f64 * cell_area * (e - levels.last().unwrap());
                levels.push(e);
                volumes.push(v);
            }
            while i < z.len() && z[i] == e {
                wet += 1;
                i += 1;
            }
        }
        let v = volumes.last().unwrap() + wet as f64 * cell_area * (top - levels.last().unwrap());
        levels.push(top);
        volumes.push(v);
        LevelVolumeTable { levels, volumes }
    }

    /// Builds a table from explicit breakpoints. Levels and volumes must be
    /// strictly increasing, starting at volume 0, with nondecreasing slopes.
    pub fn from_breakpoints(points: &[(f64, f64)]) -> Option<Self> {
        if points.len() < 2 || points[0].1 != 0.0 {
            return None;
        }
        let mut last_slope = 0.0;
        for w in points.windows(2) {
            let (dh, dv) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            if !(dh > 0.0 && dv > 0.0) {
                return None;
            }
            let slope = dv / dh;
            if slope < last_slope * (1.0 - 1e-12) {
                return None;
            }
            last_slope = slope;
        }
        Some(LevelVolumeTable {
            levels: points.iter().map(|p| p.0).collect(),
            volumes: points.iter().map(|p| p.1).collect(),
        })
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.levels.iter().copied().zip(self.volumes.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn z_min(&self) -> f64 {
        self.levels[0]
    }

    pub fn max_level(&self) -> f64 {
        *self.levels.last().unwrap()
    }

    pub fn max_volume(&self) -> f64 {
        *self.volumes.last().unwrap()
    }

    #[inline]
    fn slope(&self, seg: usize) -> f64 {
        (self.volumes[seg + 1] - self.volumes[seg]) / (self.levels[seg + 1] - self.levels[seg])
    }

    /// Index of the segment `[levels[i], levels[i+1])` containing `h`.
    #[inline]
    fn segment_for_level(&self, h: f64) -> usize {
        let n = self.levels.len();
        self.levels.partition_point(|&l| l <= h).clamp(1, n - 1) - 1
    }

    /// Stored volume at level `h`; zero at or below the zone bottom.
    pub fn volume_from_level(&self, h: f64) -> Result<f64, TableError> {
        if h > self.max_level() {
            return Err(TableError::LevelOverflow {
                level: h,
                max: self.max_level(),
            });
        }
        Ok(self.volume_extrapolated(h))
    }

    /// Like [`volume_from_level`](Self::volume_from_level) but continues the
    /// last segment linearly above the table top.
    pub fn volume_extrapolated(&self, h: f64) -> f64 {
        if h <= self.levels[0] {
            return 0.0;
        }
        let s = self.segment_for_level(h);
        self.volumes[s] + (h - self.levels[s]) * self.slope(s)
    }

    /// Inverse of the level-volume relation.
    pub fn level_from_volume(&self, v: f64) -> Result<f64, TableError> {
        if v <= 0.0 {
            return Ok(self.levels[0]);
        }
        let vmax = self.max_volume();
        if v > vmax {
            return Err(TableError::VolumeOverflow { excess: v - vmax });
        }
        let n = self.volumes.len();
        let s = self.volumes.partition_point(|&x| x <= v).clamp(1, n - 1) - 1;
        Ok(self.levels[s] + (v - self.volumes[s]) / self.slope(s))
    }

    /// Wetted plan area at level `h`: the slope of the relation there.
    pub fn wetted_area(&self, h: f64) -> f64 {
        if h < self.levels[0] {
            return 0.0;
        }
        self.slope(self.segment_for_level(h))
    }

    /// Breakpoint levels strictly between `lo` and `hi`.
    pub(crate) fn levels_between(&self, lo: f64, hi: f64) -> &[f64] {
        let a = self.levels.partition_point(|&l| l <= lo);
        let b = self.levels.partition_point(|&l| l < hi);
        if a < b {
            &self.levels[a..b]
        } else {
            &[]
        }
    }
}

/// The common level two zones reach when their combined volume is shared
/// between them with equal surfaces. `h_a`, `h_b` are the current levels.
pub fn equalization_level(a: &LevelVolumeTable, h_a: f64, b: &LevelVolumeTable, h_b: f64) -> f64 {
    let (lo, hi) = if h_a <= h_b { (h_a, h_b) } else { (h_b, h_a) };
    let total = a.volume_extrapolated(h_a) + b.volume_extrapolated(h_b);
    let f = |h: f64| a.volume_extrapolated(h) + b.volume_extrapolated(h);
    let mut pts: Vec<f64> = Vec::with_capacity(8);
    pts.push(lo);
    let (ka, kb) = (a.levels_between(lo, hi), b.levels_between(lo, hi));
    let (mut i, mut j) = (0, 0);
    while i < ka.len() || j < kb.len() {
        let next = match (ka.get(i), kb.get(j)) {
            (Some(&x), Some(&y)) if x <= y => {
                i += 1;
                if x == y {
                    j += 1;
                }
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        pts.push(next);
    }
    pts.push(hi);
    // f is linear between consecutive points; find the bracketing segment.
    let mut f_lo = f(pts[0]);
    if f_lo >= total {
        return lo;
    }
    for w in pts.windows(2) {
        let f_hi = f(w[1]);
        if f_hi >= total {
            if f_hi == f_lo {
                return w[1];
            }
            let h = w[0] + (total - f_lo) * (w[1] - w[0]) / (f_hi - f_lo);
            return h.clamp(lo, hi);
        }
        f_lo = f_hi;
    }
    hi
}
