//! Depth frames as images, and wet-region analysis of frames.
//!
//! Images are binary PPM (P6). Dry cells show a grayscale hillshade of the
//! terrain (Horn gradient, sun at azimuth 315°, altitude 45°). Wet cells use
//! a fixed palette independent of the hillshade, so a given depth always
//! maps to the same color: the color ramps linearly in RGB from
//! [`SHALLOW`] at 0 m to [`DEEP`] at [`DEPTH_SCALE`] and stays at [`DEEP`]
//! beyond. Nodata cells are black.

use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, RgbImage};
use serde::Serialize;

use crate::terrain::{read_ascii_grid, DtmRaster};
use crate::Error;

pub const SHALLOW: [u8; 3] = [170, 215, 255];
pub const DEEP: [u8; 3] = [8, 40, 140];
/// Depth at which the palette saturates, meters.
pub const DEPTH_SCALE: f64 = 2.0;
pub const SUN_AZIMUTH: f64 = 315.0;
pub const SUN_ALTITUDE: f64 = 45.0;

/// Palette color for a positive depth.
pub fn depth_color(depth: f64) -> [u8; 3] {
    let t = (depth / DEPTH_SCALE).clamp(0.0, 1.0);
    let mut c = [0u8; 3];
    for i in 0..3 {
        let (a, b) = (SHALLOW[i] as f64, DEEP[i] as f64);
        c[i] = (a + (b - a) * t).round() as u8;
    }
    c
}

/// Hillshade intensity in [0, 1] per cell. Nodata neighbors are replaced by
/// the center value and the grid edge is clamped.
pub fn hillshade(dtm: &DtmRaster) -> Vec<f64> {
    let (nr, nc) = (dtm.nrows as isize, dtm.ncols as isize);
    let zenith = (90.0 - SUN_ALTITUDE).to_radians();
    let azimuth = (360.0 - SUN_AZIMUTH + 90.0).rem_euclid(360.0).to_radians();
    let mut out = vec![0.0; dtm.len()];
    for r in 0..nr {
        for c in 0..nc {
            let i = dtm.index(r as usize, c as usize);
            if !dtm.is_valid(i) {
                continue;
            }
            let z0 = dtm.elevation[i];
            let z = |dr: isize, dc: isize| {
                let (rr, cc) = ((r + dr).clamp(0, nr - 1), (c + dc).clamp(0, nc - 1));
                let j = dtm.index(rr as usize, cc as usize);
                if dtm.is_valid(j) {
                    dtm.elevation[j]
                } else {
                    z0
                }
            };
            let w = 8.0 * dtm.cellsize;
            // Rows run north to south, so +row is -y.
            let dzdx = ((z(-1, 1) + 2.0 * z(0, 1) + z(1, 1)) - (z(-1, -1) + 2.0 * z(0, -1) + z(1, -1))) / w;
            let dzdy = ((z(1, -1) + 2.0 * z(1, 0) + z(1, 1)) - (z(-1, -1) + 2.0 * z(-1, 0) + z(-1, 1))) / w;
            let slope = dzdx.hypot(dzdy).atan();
            let aspect = if dzdx != 0.0 {
                let a = dzdy.atan2(-dzdx);
                if a < 0.0 {
                    a + 2.0 * std::f64::consts::PI
                } else {
                    a
                }
            } else if dzdy > 0.0 {
                std::f64::consts::FRAC_PI_2
            } else if dzdy < 0.0 {
                1.5 * std::f64::consts::PI
            } else {
                0.0
            };
            let shade = zenith.cos() * slope.cos() + zenith.sin() * slope.sin() * (azimuth - aspect).cos();
            out[i] = shade.clamp(0.0, 1.0);
        }
    }
    out
}

/// Composes one frame from precomputed hillshade and a depth raster on the
/// same grid.
pub fn render_frame(dtm: &DtmRaster, shade: &[f64], depth: &DtmRaster) -> Result<RgbImage, Error> {
    if (depth.ncols, depth.nrows) != (dtm.ncols, dtm.nrows) {
        return Err(Error::Render(format!(
            "depth frame is {}x{}, terrain is {}x{}",
            depth.ncols, depth.nrows, dtm.ncols, dtm.nrows
        )));
    }
    let mut img = RgbImage::new(dtm.ncols as u32, dtm.nrows as u32);
    for r in 0..dtm.nrows {
        for c in 0..dtm.ncols {
            let i = dtm.index(r, c);
            let px = if !dtm.is_valid(i) {
                [0, 0, 0]
            } else if depth.is_valid(i) && depth.elevation[i] > 0.0 {
                depth_color(depth.elevation[i])
            } else {
                let g = (shade[i] * 255.0).round() as u8;
                [g, g, g]
            };
            img.put_pixel(c as u32, r as u32, image::Rgb(px));
        }
    }
    Ok(img)
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<(), Error> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(BufWriter::new(f))
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)
        .map_err(|e| Error::Render(format!("{}: {e}", path.display())))
}

/// Depth frames of a run directory, in order.
pub fn depth_frames(run_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let dir = run_dir.join("frames");
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut frames: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("depth_") && n.ends_with(".asc"))
        })
        .collect();
    frames.sort();
    if frames.is_empty() {
        return Err(Error::Render(format!("no depth frames in {}", dir.display())));
    }
    Ok(frames)
}

/// Renders every depth frame of a run into `out_dir` (default: the run's
/// frames directory). Returns the image paths.
pub fn render_run(run_dir: &Path, out_dir: Option<&Path>) -> Result<Vec<PathBuf>, Error> {
    let dtm = read_ascii_grid(&run_dir.join("terrain.asc"))?;
    let frames = depth_frames(run_dir)?;
    let out_dir = out_dir.map_or_else(|| run_dir.join("frames"), Path::to_path_buf);
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let shade = hillshade(&dtm);
    let mut written = Vec::with_capacity(frames.len());
    for f in frames {
        let depth = read_ascii_grid(&f)?;
        let img = render_frame(&dtm, &shade, &depth)?;
        let name = f.with_extension("ppm");
        let path = out_dir.join(name.file_name().unwrap_or_default());
        write_ppm(&path, &img)?;
        written.push(path);
    }
    Ok(written)
}

/// A 4-connected set of wet cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WetRegion {
    pub cells: usize,
    /// Inclusive `(row_min, col_min, row_max, col_max)`.
    pub bounds: (usize, usize, usize, usize),
    pub touches_border: bool,
    pub max_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameAnalysis {
    pub wet_cells: usize,
    /// Largest first.
    pub regions: Vec<WetRegion>,
}

impl FrameAnalysis {
    /// Wet cells in regions that do not reach the grid border.
    pub fn interior_wet_cells(&self) -> usize {
        self.regions.iter().filter(|r| !r.touches_border).map(|r| r.cells).sum()
    }

    pub fn border_wet_cells(&self) -> usize {
        self.wet_cells - self.interior_wet_cells()
    }
}

/// Splits the wet cells (depth > 0) of a frame into connected regions.
pub fn analyze_frame(depth: &DtmRaster) -> FrameAnalysis {
    let (nr, nc) = (depth.nrows, depth.ncols);
    let wet = |i: usize| depth.is_valid(i) && depth.elevation[i] > 0.0;
    let mut seen = vec![false; depth.len()];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..depth.len() {
        if seen[start] || !wet(start) {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (r0, c0) = depth.row_col(start);
        let mut reg = WetRegion {
            cells: 0,
            bounds: (r0, c0, r0, c0),
            touches_border: false,
            max_depth: 0.0,
        };
        while let Some(i) = queue.pop_front() {
            let (r, c) = depth.row_col(i);
            reg.cells += 1;
            reg.bounds = (reg.bounds.0.min(r), reg.bounds.1.min(c), reg.bounds.2.max(r), reg.bounds.3.max(c));
            reg.touches_border |= r == 0 || c == 0 || r + 1 == nr || c + 1 == nc;
            reg.max_depth = reg.max_depth.max(depth.elevation[i]);
            let mut push = |j: usize| {
                if !seen[j] && wet(j) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                push(i - nc);
            }
            if r + 1 < nr {
                push(i + nc);
            }
            if c > 0 {
                push(i - 1);
            }
            if c + 1 < nc {
                push(i + 1);
            }
        }
        regions.push(reg);
    }
    regions.sort_by_key(|r| std::cmp::Reverse(r.cells));
    FrameAnalysis {
        wet_cells: regions.iter().map(|r| r.cells).sum(),
        regions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{synth_terrain, TerrainShape, TerrainSpec};

    fn flat(n: usize, z: f64) -> DtmRaster {
        DtmRaster::new(n, n, 10.0, 0.0, 0.0, -9999.0, vec![z; n * n]).unwrap()
    }

    #[test]
    fn palette_end_points() {
        assert_eq!(depth_color(0.0), SHALLOW);
        assert_eq!(depth_color(DEPTH_SCALE), DEEP);
        assert_eq!(depth_color(50.0), DEEP);
        assert_eq!(depth_color(1.0), [89, 128, 198]);
    }

    #[test]
    fn flat_terrain_shades_at_sun_altitude() {
        let shade = hillshade(&flat(5, 3.0));
        let want = 45f64.to_radians().sin();
        assert!(shade.iter().all(|s| (s - want).abs() < 1e-12));
    }

    #[test]
    fn slope_facing_the_sun_is_brighter() {
        // Elevation rises to the east: the surface faces west, toward a
        // north-west sun, so it is lit more than its east-facing mirror.
        let n = 5;
        let z: Vec<f64> = (0..n * n).map(|i| (i % n) as f64).collect();
        let west = DtmRaster::new(n, n, 1.0, 0.0, 0.0, -9999.0, z.clone()).unwrap();
        let east = DtmRaster::new(n, n, 1.0, 0.0, 0.0, -9999.0, z.iter().map(|v| -v).collect()).unwrap();
        let (a, b) = (hillshade(&west)[12], hillshade(&east)[12]);
        assert!(a > b, "{a} {b}");
        // Horn's oracle for a 45° west-facing plane with the sun at 315°/45°.
        let want = 0.5f64.sqrt() * 0.5f64.sqrt() + 0.5f64.sqrt() * 0.5f64.sqrt() * (45f64.to_radians()).cos();
        assert!((a - want).abs() < 1e-12, "{a} {want}");
    }

    #[test]
    fn dry_frame_is_pure_hillshade() {
        let dtm = synth_terrain(&TerrainSpec {
            ncols: 12,
            nrows: 9,
            cellsize: 5.0,
            shape: TerrainShape::TwoBasin { saddle: 1.0, floor: 0.0 },
        })
        .unwrap();
        let shade = hillshade(&dtm);
        let img = render_frame(&dtm, &shade, &dtm.filled_like(0.0)).unwrap();
        for (i, px) in img.pixels().enumerate() {
            let g = (shade[i] * 255.0).round() as u8;
            assert_eq!(px.0, [g, g, g]);
        }
    }

    #[test]
    fn uniform_puddle_has_one_color() {
        let dtm = flat(6, 0.0);
        let mut depth = dtm.filled_like(0.0);
        for r in 1..4 {
            for c in 2..5 {
                let i = depth.index(r, c);
                depth.elevation[i] = 0.5;
            }
        }
        let img = render_frame(&dtm, &hillshade(&dtm), &depth).unwrap();
        let want = depth_color(0.5);
        let mut n = 0;
        for (i, px) in img.pixels().enumerate() {
            if depth.elevation[i] > 0.0 {
                assert_eq!(px.0, want);
                n += 1;
            } else {
                assert_ne!(px.0, want);
            }
        }
        assert_eq!(n, 9);
    }

    #[test]
    fn ppm_round_trips_through_the_decoder() {
        let tmp = tempfile::tempdir().unwrap();
        let dtm = flat(4, 1.0);
        let mut depth = dtm.filled_like(0.0);
        depth.elevation[5] = 1.0;
        let img = render_frame(&dtm, &hillshade(&dtm), &depth).unwrap();
        let p = tmp.path().join("f.ppm");
        write_ppm(&p, &img).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P6"));
        let back = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
            .unwrap()
            .to_rgb8();
        assert_eq!(back, img);
    }

    #[test]
    fn regions_are_four_connected() {
        let mut d = flat(6, 0.0);
        for (r, c) in [(0, 0), (0, 1), (1, 1), (3, 3), (4, 4), (3, 4)] {
            let i = d.index(r, c);
            d.elevation[i] = 0.2;
        }
        let i = d.index(2, 2);
        d.elevation[i] = 0.9;
        let a = analyze_frame(&d);
        assert_eq!(a.wet_cells, 7);
        assert_eq!(a.regions.len(), 3);
        assert_eq!(a.regions[0].cells, 3);
        assert_eq!(a.border_wet_cells(), 3);
        assert_eq!(a.interior_wet_cells(), 4);
        assert!(a.regions.iter().any(|r| r.max_depth == 0.9 && r.bounds == (2, 2, 2, 2)));
    }

    #[test]
    fn missing_frames_are_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        fs::create_dir(tmp.path().join("frames")).unwrap();
        assert!(matches!(depth_frames(tmp.path()), Err(Error::Render(_))));
        assert!(matches!(render_run(tmp.path(), None), Err(Error::Io { .. })));
    }
}
