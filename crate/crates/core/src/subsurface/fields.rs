//! Quantities derived from the head field.

use super::{SubsurfaceError, SubsurfaceGrid, NO_COLUMN};
use crate::izmesh::ZoneMesh;
use crate::terrain::DtmRaster;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Vertical,
    Lateral,
    /// Land surface above the top layer.
    Surface,
    /// Side of the domain next to the grid edge or inactive columns.
    Embankment,
    Bottom,
}

/// A fixed-head boundary face, or a face in a velocity listing.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub cell: usize,
    pub column: usize,
    pub kind: FaceKind,
    /// Flux per unit head difference, m2/s.
    pub transmissibility: f64,
    pub area: f64,
    /// Head on the far side, meters.
    pub head: f64,
}

/// Darcy velocity through one face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVelocity {
    pub from: usize,
    /// Neighbor cell, `None` for boundary faces.
    pub to: Option<usize>,
    pub kind: FaceKind,
    pub area: f64,
    /// Positive from `from` towards `to`, or out of the domain, m/s.
    pub velocity: f64,
}

impl FaceVelocity {
    pub fn flux(&self) -> f64 {
        self.velocity * self.area
    }
}

/// Pressure per cell, Pa.
pub fn pressure_field(grid: &SubsurfaceGrid) -> Vec<f64> {
    let rg = grid.params.rho_g();
    let mut p = vec![0.0; grid.cells()];
    for col in 0..grid.columns() {
        if !grid.active[col] {
            continue;
        }
        for k in 0..grid.nz {
            let i = grid.cell(col, k);
            p[i] = rg * (grid.head[i] - grid.z_center(col, k));
        }
    }
    p
}

/// Pressure at the land surface, extrapolated linearly from the two top layers.
pub fn surface_pressure(grid: &SubsurfaceGrid) -> Vec<f64> {
    let rg = grid.params.rho_g();
    (0..grid.columns())
        .map(|col| {
            if !grid.active[col] {
                return 0.0;
            }
            let (i0, i1) = (grid.cell(col, 0), grid.cell(col, 1));
            let p0 = rg * (grid.head[i0] - grid.z_center(col, 0));
            let p1 = rg * (grid.head[i1] - grid.z_center(col, 1));
            1.5 * p0 - 0.5 * p1
        })
        .collect()
}

/// Surcharge depth per column: positive surface pressure as a water column,
/// zero where the column is held at the overland level.
pub fn h_filtr_field(grid: &SubsurfaceGrid) -> Vec<f64> {
    let rg = grid.params.rho_g();
    surface_pressure(grid)
        .into_iter()
        .enumerate()
        .map(|(col, p)| {
            if grid.flooded.get(col).copied().unwrap_or(false) || p <= 0.0 {
                0.0
            } else {
                p / rg
            }
        })
        .collect()
}

pub fn h_total_field(h_in: &[f64], h_filtr: &[f64]) -> Result<Vec<f64>, SubsurfaceError> {
    if h_in.len() != h_filtr.len() {
        return Err(SubsurfaceError::Shape {
            what: "h_filtr",
            expected: h_in.len(),
            got: h_filtr.len(),
        });
    }
    Ok(h_in.iter().zip(h_filtr).map(|(a, b)| a + b).collect())
}

/// Darcy velocities on all interior faces and on the boundary faces of the
/// last step, from the same transmissibilities as the assembled operator.
pub fn darcy_velocity(grid: &SubsurfaceGrid) -> Vec<FaceVelocity> {
    let mut out = Vec::new();
    for (i, j, t) in grid.interior_faces() {
        let vertical = j == i + 1 && i / grid.nz == j / grid.nz;
        let area = if vertical { grid.dx * grid.dx } else { grid.dx * grid.dz };
        out.push(FaceVelocity {
            from: i,
            to: Some(j),
            kind: if vertical { FaceKind::Vertical } else { FaceKind::Lateral },
            area,
            velocity: t * (grid.head[i] - grid.head[j]) / area,
        });
    }
    for f in &grid.boundary {
        out.push(FaceVelocity {
            from: f.cell,
            to: None,
            kind: f.kind,
            area: f.area,
            velocity: f.transmissibility * (grid.head[f.cell] - f.head) / f.area,
        });
    }
    out
}

/// Per-zone surcharge rate in m/s from per-column upward surface flux
/// (m3/s). Each column's flux is shared equally among its valid DTM cells
/// and counted only where the column is flooded, seeping, or pressurized.
pub fn surcharge_rates(grid: &SubsurfaceGrid, mesh: &ZoneMesh, column_flux: &[f64]) -> Result<Vec<f64>, SubsurfaceError> {
    if column_flux.len() != grid.columns() {
        return Err(SubsurfaceError::Shape {
            what: "column flux",
            expected: grid.columns(),
            got: column_flux.len(),
        });
    }
    if mesh.labels.len() != grid.column_of_cell.len() {
        return Err(SubsurfaceError::Shape {
            what: "zone labels",
            expected: grid.column_of_cell.len(),
            got: mesh.labels.len(),
        });
    }
    let hf = h_filtr_field(grid);
    let counted: Vec<bool> = (0..grid.columns())
        .map(|c| grid.active[c] && (grid.flooded.get(c).copied().unwrap_or(false) || grid.seepage[c] || hf[c] > 0.0))
        .collect();
    let mut volume = vec![0.0; mesh.zone_count()];
    for (cell, &col) in grid.column_of_cell.iter().enumerate() {
        if col == NO_COLUMN {
            continue;
        }
        let col = col as usize;
        if !counted[col] || column_flux[col] == 0.0 {
            continue;
        }
        if let Some(z) = mesh.label(cell) {
            volume[z] += column_flux[col] / grid.n_valid[col] as f64;
        }
    }
    Ok(volume
        .iter()
        .zip(&mesh.zones)
        .map(|(v, z)| v / z.plan_area)
        .collect())
}

/// Expands per-column values onto the DTM grid, with the DTM's nodata
/// sentinel under nodata.
pub fn column_raster(grid: &SubsurfaceGrid, values: &[f64], dtm: &DtmRaster) -> DtmRaster {
    let mut out = dtm.filled_like(dtm.nodata);
    for (i, &col) in grid.column_of_cell.iter().enumerate() {
        if col != NO_COLUMN {
            out.elevation[i] = values[col as usize];
        }
    }
    out
}
