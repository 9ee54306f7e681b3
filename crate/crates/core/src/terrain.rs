//! Digital terrain model rasters: ESRI ASCII grid I/O and synthetic test terrains.
//!
//! Rasters are stored row-major, north-up: row 0 is the northernmost row
//! (largest y), column 0 the westernmost. Cells equal to the nodata sentinel
//! are masked out of every downstream computation.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TerrainError {
    #[error("line {line}: malformed header: {msg}")]
    Header { line: usize, msg: String },
    #[error("line {line}, token {position}: non-numeric value {token:?}")]
    BadToken {
        line: usize,
        position: usize,
        token: String,
    },
    #[error("expected {expected} values after the header, found {found}")]
    ValueCount { expected: usize, found: usize },
    #[error("invalid raster: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtmRaster {
    pub ncols: usize,
    pub nrows: usize,
    pub cellsize: f64,
    pub xll: f64,
    pub yll: f64,
    pub nodata: f64,
    pub elevation: Vec<f64>,
}

impl DtmRaster {
    /// Builds a raster and checks its invariants.
    pub fn new(
        ncols: usize,
        nrows: usize,
        cellsize: f64,
        xll: f64,
        yll: f64,
        nodata: f64,
        elevation: Vec<f64>,
    ) -> Result<Self, TerrainError> {
        let r = DtmRaster {
            ncols,
            nrows,
            cellsize,
            xll,
            yll,
            nodata,
            elevation,
        };
        r.validate()?;
        Ok(r)
    }

    /// A raster of the same geometry with every cell set to `value`.
    pub fn filled_like(&self, value: f64) -> DtmRaster {
        DtmRaster {
            elevation: vec![value; self.elevation.len()],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        if self.ncols == 0 || self.nrows == 0 {
            return Err(TerrainError::Invalid("ncols and nrows must be positive".into()));
        }
        if !(self.cellsize > 0.0) || !self.cellsize.is_finite() {
            return Err(TerrainError::Invalid(format!(
                "cellsize must be positive, got {}",
                self.cellsize
            )));
        }
        if self.ncols * self.nrows != self.elevation.len() {
            return Err(TerrainError::Invalid(format!(
                "{}x{} grid but {} elevation values",
                self.ncols,
                self.nrows,
                self.elevation.len()
            )));
        }
        if let Some(i) = (0..self.len()).find(|&i| self.is_valid(i) && !self.elevation[i].is_finite()) {
            return Err(TerrainError::Invalid(format!("cell {i} has non-finite elevation")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.elevation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elevation.is_empty()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    #[inline]
    pub fn row_col(&self, idx: usize) -> (usize, usize) {
        (idx / self.ncols, idx % self.ncols)
    }

    /// True when the cell holds data (not the nodata sentinel, not NaN).
    #[inline]
    pub fn is_valid(&self, idx: usize) -> bool {
        let z = self.elevation[idx];
        z != self.nodata && !z.is_nan()
    }

    pub fn valid_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_valid(i)).count()
    }

    pub fn cell_area(&self) -> f64 {
        self.cellsize * self.cellsize
    }

    /// Map coordinates of a cell center.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.xll + (col as f64 + 0.5) * self.cellsize;
        let y = self.yll + (self.nrows as f64 - row as f64 - 0.5) * self.cellsize;
        (x, y)
    }

    /// The 8-connected neighbors of a cell that lie inside the grid, in
    /// lexicographic (row, col) order.
    pub fn neighbors8(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = self.row_col(idx);
        let (r, c) = (r as isize, c as isize);
        const OFFSETS: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        OFFSETS.iter().filter_map(move |&(dr, dc)| {
            let (nr, nc) = (r + dr, c + dc);
            if nr < 0 || nc < 0 || nr >= self.nrows as isize || nc >= self.ncols as isize {
                None
            } else {
                Some(nr as usize * self.ncols + nc as usize)
            }
        })
    }
}

const HEADER_KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

/// Parses an ESRI ASCII grid.
pub fn parse_ascii_grid(text: &str) -> Result<DtmRaster, TerrainError> {
    let mut lines = text.lines().enumerate();
    let mut header = [None::<f64>; 6];
    for (expected, key) in HEADER_KEYS.iter().enumerate() {
        let (lineno, line) = lines.next().ok_or_else(|| TerrainError::Header {
            line: expected + 1,
            msg: format!("missing header key {key}"),
        })?;
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap_or("");
        if !name.eq_ignore_ascii_case(key) {
            return Err(TerrainError::Header {
                line: lineno + 1,
                msg: format!("expected key {key}, found {name:?}"),
            });
        }
        let value = parts.next().ok_or_else(|| TerrainError::Header {
            line: lineno + 1,
            msg: format!("{key} has no value"),
        })?;
        if parts.next().is_some() {
            return Err(TerrainError::Header {
                line: lineno + 1,
                msg: format!("trailing tokens after {key}"),
            });
        }
        let v: f64 = value.parse().map_err(|_| TerrainError::Header {
            line: lineno + 1,
            msg: format!("{key} value {value:?} is not a number"),
        })?;
        header[expected] = Some(v);
    }
    let [ncols, nrows, xll, yll, cellsize, nodata] = header.map(|v| v.unwrap());
    let as_count = |v: f64, key: &str, line: usize| {
        if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
            Ok(v as usize)
        } else {
            Err(TerrainError::Header {
                line,
                msg: format!("{key} must be a positive integer, got {v}"),
            })
        }
    };
    let ncols = as_count(ncols, "ncols", 1)?;
    let nrows = as_count(nrows, "nrows", 2)?;
    if !(cellsize > 0.0) {
        return Err(TerrainError::Header {
            line: 5,
            msg: format!("cellsize must be positive, got {cellsize}"),
        });
    }

    let expected = ncols * nrows;
    let mut elevation = Vec::with_capacity(expected);
    let mut found = 0usize;
    for (lineno, line) in lines {
        for (pos, tok) in line.split_whitespace().enumerate() {
            found += 1;
            if found > expected {
                continue;
            }
            let v: f64 = tok.parse().map_err(|_| TerrainError::BadToken {
                line: lineno + 1,
                position: pos + 1,
                token: tok.to_string(),
            })?;
            elevation.push(v);
        }
    }
    if found != expected {
        return Err(TerrainError::ValueCount { expected, found });
    }
    DtmRaster::new(ncols, nrows, cellsize, xll, yll, nodata, elevation)
}

/// Writes an ESRI ASCII grid. Values use the shortest representation that
/// parses back to the identical `f64`.
pub fn write_ascii_grid(raster: &DtmRaster) -> String {
    let mut out = String::with_capacity(raster.len() * 8 + 128);
    let _ = writeln!(out, "ncols {}", raster.ncols);
    let _ = writeln!(out, "nrows {}", raster.nrows);
    let _ = writeln!(out, "xllcorner {}", raster.xll);
    let _ = writeln!(out, "yllcorner {}", raster.yll);
    let _ = writeln!(out, "cellsize {}", raster.cellsize);
    let _ = writeln!(out, "NODATA_value {}", raster.nodata);
    for row in raster.elevation.chunks(raster.ncols) {
        let mut first = true;
        for &z in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let z = if z.is_nan() { raster.nodata } else { z };
            let _ = write!(out, "{z}");
        }
        out.push('\n');
    }
    out
}

pub fn read_ascii_grid(path: &std::path::Path) -> Result<DtmRaster, crate::Error> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    Ok(parse_ascii_grid(&text)?)
}

pub fn save_ascii_grid(path: &std::path::Path, raster: &DtmRaster) -> Result<(), crate::Error> {
    std::fs::write(path, write_ascii_grid(raster)).map_err(|e| crate::Error::io(path, e))
}

/// Named analytic terrain shapes. Distances are measured in cells between
/// cell centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum TerrainShape {
    Flat {
        z0: f64,
    },
    /// Paraboloid bowl `rim - depth * (1 - (r/R)^2)` inside radius R, flat
    /// at `rim` outside.
    SingleBasin {
        center_row: f64,
        center_col: f64,
        radius: f64,
        depth: f64,
        rim: f64,
    },
    /// Two paraboloid bowls centered on the middle row at a quarter and three
    /// quarters of the width, meeting on a ridge whose lowest point is
    /// exactly `saddle`.
    TwoBasin {
        saddle: f64,
        #[serde(default)]
        floor: f64,
    },
    /// Plane rising eastward from `z0` at the west edge.
    CoastalSlope {
        gradient: f64,
        #[serde(default)]
        z0: f64,
    },
    /// Rectangular island whose whole outline is waterfront: a flat coastal
    /// apron at `coast_z`, a slope up to a rim ring at `rim_z`, and a central
    /// depression whose floor is `rim_z - depression_depth`.
    IslandWithLoweredCenter {
        rim_z: f64,
        depression_depth: f64,
        #[serde(default = "default_coast_z")]
        coast_z: f64,
        #[serde(default = "default_apron_width")]
        apron_width: f64,
        #[serde(default = "default_rim_distance")]
        rim_distance: f64,
    },
    /// Smoothed pseudo-random relief with fine-scale roughness.
    Rough {
        seed: u64,
        relief: f64,
        #[serde(default = "default_roughness")]
        roughness: f64,
        #[serde(default = "default_correlation")]
        correlation: usize,
    },
}

fn default_coast_z() -> f64 {
    0.3
}
fn default_apron_width() -> f64 {
    4.0
}
fn default_rim_distance() -> f64 {
    10.0
}
fn default_roughness() -> f64 {
    0.05
}
fn default_correlation() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    pub ncols: usize,
    pub nrows: usize,
    pub cellsize: f64,
    #[serde(flatten)]
    pub shape: TerrainShape,
}

/// Generates a synthetic terrain. Deterministic: identical specs produce
/// bitwise-identical rasters.
pub fn synth_terrain(spec: &TerrainSpec) -> Result<DtmRaster, TerrainError> {
    let (nc, nr) = (spec.ncols, spec.nrows);
    if nc == 0 || nr == 0 || !(spec.cellsize > 0.0) {
        return Err(TerrainError::Invalid(format!(
            "terrain dimensions must be positive: {nc}x{nr} at cellsize {}",
            spec.cellsize
        )));
    }
    let mut z = vec![0.0; nc * nr];
    match spec.shape {
        TerrainShape::Flat { z0 } => z.fill(z0),
        TerrainShape::SingleBasin {
            center_row,
            center_col,
            radius,
            depth,
            rim,
        } => {
            if !(radius > 0.0) {
                return Err(TerrainError::Invalid("basin radius must be positive".into()));
            }
            for r in 0..nr {
                for c in 0..nc {
                    let d2 = (r as f64 - center_row).powi(2) + (c as f64 - center_col).powi(2);
                    let q = d2 / (radius * radius);
                    z[r * nc + c] = if q < 1.0 { rim - depth * (1.0 - q) } else { rim };
                }
            }
        }
        TerrainShape::TwoBasin { saddle, floor } => {
            if nc < 4 {
                return Err(TerrainError::Invalid("two_basin needs at least 4 columns".into()));
            }
            let crow = (nr / 2) as f64;
            let c1 = (nc / 4) as f64;
            let c2 = (3 * nc / 4) as f64;
            let half = (c2 - c1) / 2.0;
            for r in 0..nr {
                for c in 0..nc {
                    let dr2 = (r as f64 - crow).powi(2);
                    let d2 = (dr2 + (c as f64 - c1).powi(2)).min(dr2 + (c as f64 - c2).powi(2));
                    z[r * nc + c] = floor + (saddle - floor) * d2 / (half * half);
                }
            }
        }
        TerrainShape::CoastalSlope { gradient, z0 } => {
            for r in 0..nr {
                for c in 0..nc {
                    z[r * nc + c] = z0 + gradient * c as f64 * spec.cellsize;
                }
            }
        }
        TerrainShape::IslandWithLoweredCenter {
            rim_z,
            depression_depth,
            coast_z,
            apron_width,
            rim_distance,
        } => {
            let dmax = ((nr.min(nc) - 1) / 2) as f64;
            if !(apron_width >= 1.0 && rim_distance > apron_width && rim_distance < dmax) {
                return Err(TerrainError::Invalid(format!(
                    "island needs 1 <= apron_width < rim_distance < {dmax}"
                )));
            }
            for r in 0..nr {
                for c in 0..nc {
                    let d = r.min(c).min(nr - 1 - r).min(nc - 1 - c) as f64;
                    z[r * nc + c] = if d < apron_width {
                        coast_z
                    } else if d <= rim_distance {
                        coast_z + (rim_z - coast_z) * (d - apron_width + 1.0) / (rim_distance - apron_width + 1.0)
                    } else {
                        let s = (d - rim_distance) / (dmax - rim_distance);
                        rim_z - depression_depth * s
                    };
                }
            }
        }
        TerrainShape::Rough {
            seed,
            relief,
            roughness,
            correlation,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Value noise on a coarse lattice, bilinearly interpolated.
            let step = correlation.max(1);
            let lr = nr / step + 2;
            let lc = nc / step + 2;
            let lattice: Vec<f64> = (0..lr * lc).map(|_| rng.random::<f64>()).collect();
            for r in 0..nr {
                let fr = r as f64 / step as f64;
                let (i0, tr) = (fr.floor() as usize, fr.fract());
                for c in 0..nc {
                    let fc = c as f64 / step as f64;
                    let (j0, tc) = (fc.floor() as usize, fc.fract());
                    let v00 = lattice[i0 * lc + j0];
                    let v01 = lattice[i0 * lc + j0 + 1];
                    let v10 = lattice[(i0 + 1) * lc + j0];
                    let v11 = lattice[(i0 + 1) * lc + j0 + 1];
                    let smooth = v00 * (1.0 - tr) * (1.0 - tc) + v01 * (1.0 - tr) * tc + v10 * tr * (1.0 - tc) + v11 * tr * tc;
                    z[r * nc + c] = relief * smooth + roughness * rng.random::<f64>();
                }
            }
        }
    }
    DtmRaster::new(nc, nr, spec.cellsize, 0.0, 0.0, -9999.0, z)
}
