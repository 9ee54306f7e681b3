//! Impact Zone mesh: zones delineated around terrain depressions, their
//! level-volume tables, and the adjacency graph used for inter-zone discharge.

mod delineate;
mod table;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::terrain::DtmRaster;

pub use table::{equalization_level, LevelVolumeTable, TableError};

/// Label of cells that belong to no zone (nodata).
pub const NO_ZONE: u32 = u32::MAX;

const MESH_FORMAT: &str = "izflood-mesh";
const MESH_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("raster has no valid cells")]
    AllNodata,
    #[error("invalid mesh file: {0}")]
    Format(String),
    #[error("mesh does not match the terrain: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshOptions {
    /// Table extent above the spill elevation, meters.
    pub headroom: f64,
    /// When set, zones shallower than this (spill minus bottom) are merged
    /// into their spill neighbor.
    pub merge_epsilon: Option<f64>,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions {
            headroom: 10.0,
            merge_epsilon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactZone {
    pub id: usize,
    pub cells: Vec<usize>,
    pub z_min: f64,
    pub spill_elevation: f64,
    pub level_volume: LevelVolumeTable,
    pub plan_area: f64,
    /// Mean of member cell centers in map coordinates.
    pub centroid: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneEdge {
    pub zone_a: usize,
    pub zone_b: usize,
    pub crest_elevation: f64,
    pub boundary_length: f64,
    pub flow_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneMesh {
    pub ncols: usize,
    pub nrows: usize,
    pub cellsize: f64,
    pub zones: Vec<ImpactZone>,
    pub edges: Vec<ZoneEdge>,
    /// Cell to zone label, row-major; [`NO_ZONE`] on nodata cells.
    pub labels: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    mesh: ZoneMesh,
}

/// Builds a level-volume table for a set of cells.
pub fn build_level_volume_table(dtm: &DtmRaster, cells: &[usize], top: f64) -> LevelVolumeTable {
    let z: Vec<f64> = cells.iter().map(|&c| dtm.elevation[c]).collect();
    LevelVolumeTable::from_elevations(&z, dtm.cell_area(), top)
}

/// Partitions the raster into Impact Zones.
pub fn delineate_zones(dtm: &DtmRaster, options: &MeshOptions) -> Result<ZoneMesh, MeshError> {
    if dtm.valid_count() == 0 {
        return Err(MeshError::AllNodata);
    }
    let recv = delineate::receivers(dtm);
    let (mut label, mut count) = delineate::label_minima(dtm, &recv);

    if let Some(eps) = options.merge_epsilon {
        let mut z_min = vec![f64::INFINITY; count];
        for (i, &l) in label.iter().enumerate() {
            if l != usize::MAX {
                z_min[l] = z_min[l].min(dtm.elevation[i]);
            }
        }
        let adjacency = delineate::zone_adjacency(dtm, &label);
        let root = delineate::merge_shallow(count, &z_min, &adjacency, eps);
        // renumber survivors in order of their lowest cell index
        let mut renumber = vec![usize::MAX; count];
        let mut next = 0;
        for l in label.iter_mut() {
            if *l == usize::MAX {
                continue;
            }
            let r = root[*l];
            if renumber[r] == usize::MAX {
                renumber[r] = next;
                next += 1;
            }
            *l = renumber[r];
        }
        count = next;
    }

    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (i, &l) in label.iter().enumerate() {
        if l != usize::MAX {
            cells[l].push(i);
        }
    }
    let adjacency = delineate::zone_adjacency(dtm, &label);

    let mut spill = vec![f64::INFINITY; count];
    for (&(a, b), e) in &adjacency {
        spill[a] = spill[a].min(e.crest);
        spill[b] = spill[b].min(e.crest);
    }

    let zones: Vec<ImpactZone> = cells
        .into_iter()
        .enumerate()
        .map(|(id, cells)| {
            let z_min = cells.iter().map(|&c| dtm.elevation[c]).fold(f64::INFINITY, f64::min);
            let spill_elevation = if spill[id].is_finite() {
                spill[id]
            } else {
                cells.iter().map(|&c| dtm.elevation[c]).fold(f64::NEG_INFINITY, f64::max)
            };
            let (mut sx, mut sy) = (0.0, 0.0);
            for &c in &cells {
                let (r, col) = dtm.row_col(c);
                let (x, y) = dtm.cell_center(r, col);
                sx += x;
                sy += y;
            }
            let n = cells.len() as f64;
            let level_volume = build_level_volume_table(dtm, &cells, spill_elevation + options.headroom);
            ImpactZone {
                id,
                plan_area: n * dtm.cell_area(),
                centroid: (sx / n, sy / n),
                cells,
                z_min,
                spill_elevation,
                level_volume,
            }
        })
        .collect();

    let edges = adjacency
        .iter()
        .map(|(&(a, b), e)| {
            let (ca, cb) = (zones[a].centroid, zones[b].centroid);
            let dist = ((ca.0 - cb.0).powi(2) + (ca.1 - cb.1).powi(2)).sqrt();
            ZoneEdge {
                zone_a: a,
                zone_b: b,
                crest_elevation: e.crest,
                boundary_length: e.shared_edges as f64 * dtm.cellsize,
                flow_distance: dist.max(dtm.cellsize),
            }
        })
        .collect();

    let labels = label
        .iter()
        .map(|&l| if l == usize::MAX { NO_ZONE } else { l as u32 })
        .collect();

    Ok(ZoneMesh {
        ncols: dtm.ncols,
        nrows: dtm.nrows,
        cellsize: dtm.cellsize,
        zones,
        edges,
        labels,
    })
}

impl ZoneMesh {
    pub fn zone_count(&self) -> usize {
        self.zones.len()
    }

    pub fn label(&self, cell: usize) -> Option<usize> {
        match self.labels[cell] {
            NO_ZONE => None,
            l => Some(l as usize),
        }
    }

    /// Checks that the mesh was built for a raster of this geometry.
    pub fn check_against(&self, dtm: &DtmRaster) -> Result<(), MeshError> {
        if self.ncols != dtm.ncols || self.nrows != dtm.nrows || self.cellsize != dtm.cellsize {
            return Err(MeshError::Mismatch(format!(
                "mesh is {}x{} at {} m, terrain is {}x{} at {} m",
                self.ncols, self.nrows, self.cellsize, dtm.ncols, dtm.nrows, dtm.cellsize
            )));
        }
        for i in 0..dtm.len() {
            if dtm.is_valid(i) == (self.labels[i] == NO_ZONE) {
                return Err(MeshError::Mismatch(format!("cell {i} validity differs")));
            }
        }
        Ok(())
    }

    /// Edge indices incident to each zone.
    pub fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.zones.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            inc[edge.zone_a].push(e);
            inc[edge.zone_b].push(e);
        }
        inc
    }

    /// Per-zone length of cell edges on the domain outline: the grid border
    /// or a border with nodata cells.
    pub fn waterfront_lengths(&self) -> Vec<f64> {
        let mut len = vec![0.0; self.zones.len()];
        let (nc, nr) = (self.ncols, self.nrows);
        for r in 0..nr {
            for c in 0..nc {
                let Some(z) = self.label(r * nc + c) else { continue };
                let mut open = 0;
                for (dr, dc) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr < 0 || cc < 0 || rr >= nr as isize || cc >= nc as isize {
                        open += 1;
                    } else if self.labels[rr as usize * nc + cc as usize] == NO_ZONE {
                        open += 1;
                    }
                }
                len[z] += open as f64 * self.cellsize;
            }
        }
        len
    }

    /// A 48-bit digest of the mesh geometry, exact in an `f64`.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.ncols as u64).to_le_bytes());
        h.update((self.nrows as u64).to_le_bytes());
        h.update(self.cellsize.to_le_bytes());
        for l in &self.labels {
            h.update(l.to_le_bytes());
        }
        let d = h.finalize();
        let mut b = [0u8; 8];
        b[..6].copy_from_slice(&d[..6]);
        u64::from_le_bytes(b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MeshFile {
            format: MESH_FORMAT.into(),
            version: MESH_VERSION,
            mesh: self.clone(),
        })
        .expect("mesh serializes")
    }

    pub fn from_json(text: &str) -> Result<ZoneMesh, MeshError> {
        let f: MeshFile = serde_json::from_str(text).map_err(|e| MeshError::Format(e.to_string()))?;
        if f.format != MESH_FORMAT || f.version != MESH_VERSION {
            return Err(MeshError::Format(format!(
                "unsupported format {} version {}",
                f.format, f.version
            )));
        }
        if f.mesh.labels.len() != f.mesh.ncols * f.mesh.nrows {
            return Err(MeshError::Format("label raster size mismatch".into()));
        }
        Ok(f.mesh)
    }

    pub fn save(&self, path: &Path) -> Result<(), crate::Error> {
        std::fs::write(path, self.to_json()).map_err(|e| crate::Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ZoneMesh, crate::Error> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(ZoneMesh::from_json(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshStats {
    pub cells: usize,
    pub zones: usize,
    pub edges: usize,
    /// Zones per cell.
    pub reduction_ratio: f64,
    /// `(min cells, max cells, zone count)` in power-of-two bins.
    pub histogram: Vec<(usize, usize, usize)>,
}

pub fn mesh_stats(mesh: &ZoneMesh) -> MeshStats {
    let cells: usize = mesh.zones.iter().map(|z| z.cells.len()).sum();
    let mut bins: BTreeMap<u32, usize> = BTreeMap::new();
    for z in &mesh.zones {
        *bins.entry(usize::BITS - 1 - z.cells.len().leading_zeros()).or_default() += 1;
    }
    MeshStats {
        cells,
        zones: mesh.zones.len(),
        edges: mesh.edges.len(),
        reduction_ratio: mesh.zones.len() as f64 / cells.max(1) as f64,
        histogram: bins
            .into_iter()
            .map(|(b, n)| (1usize << b, (1usize << (b + 1)) - 1, n))
            .collect(),
    }
}

impl std::fmt::Display for MeshStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "cells: {}", self.cells)?;
        writeln!(f, "zones: {}", self.zones)?;
        writeln!(f, "edges: {}", self.edges)?;
        writeln!(f, "zones/cells: {:.4}", self.reduction_ratio)?;
        writeln!(f, "cells per zone:")?;
        for (lo, hi, n) in &self.histogram {
            writeln!(f, "  {lo:>8}..{hi:<8} {n}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{synth_terrain, TerrainShape, TerrainSpec};

    fn terrain(ncols: usize, nrows: usize, shape: TerrainShape) -> DtmRaster {
        synth_terrain(&TerrainSpec {
            ncols,
            nrows,
            cellsize: 1.0,
            shape,
        })
        .unwrap()
    }

    #[test]
    fn flat_terrain_is_one_zone() {
        let dtm = terrain(100, 100, TerrainShape::Flat { z0: 1.0 });
        let mesh = delineate_zones(&dtm, &MeshOptions::default()).unwrap();
        assert_eq!(mesh.zones.len(), 1);
        assert!(mesh.edges.is_empty());
        let stats = mesh_stats(&mesh);
        assert_eq!(stats.cells, 10_000);
        assert_eq!(stats.zones, 1);
    }

    #[test]
    fn all_nodata_is_an_error() {
        let dtm = DtmRaster::new(2, 2, 1.0, 0.0, 0.0, -1.0, vec![-1.0; 4]).unwrap();
        assert!(matches!(
            delineate_zones(&dtm, &MeshOptions::default()),
            Err(MeshError::AllNodata)
        ));
    }

    #[test]
    fn nodata_cells_are_unlabeled() {
        let mut z = vec![1.0; 9];
        z[4] = -9999.0;
        let dtm = DtmRaster::new(3, 3, 1.0, 0.0, 0.0, -9999.0, z).unwrap();
        let mesh = delineate_zones(&dtm, &MeshOptions::default()).unwrap();
        assert_eq!(mesh.labels[4], NO_ZONE);
        let total: usize = mesh.zones.iter().map(|z| z.cells.len()).sum();
        assert_eq!(total, 8);
        assert_eq!(mesh.waterfront_lengths().iter().sum::<f64>(), 12.0 + 4.0);
    }

    #[test]
    fn single_basin_on_plateau_is_one_zone() {
        let dtm = terrain(
            25,
            25,
            TerrainShape::SingleBasin {
                center_row: 12.0,
                center_col: 12.0,
                radius: 8.0,
                depth: 2.0,
                rim: 5.0,
            },
        );
        let mesh = delineate_zones(&dtm, &MeshOptions::default()).unwrap();
        assert_eq!(mesh.zones.len(), 1);
        assert_eq!(mesh.zones[0].z_min, 3.0);
    }

    #[test]
    fn two_basins_share_one_edge() {
        let dtm = terrain(41, 21, TerrainShape::TwoBasin { saddle: 5.0, floor: 0.0 });
        let mesh = delineate_zones(&dtm, &MeshOptions::default()).unwrap();
        assert_eq!(mesh.zones.len(), 2);
        assert_eq!(mesh.edges.len(), 1);
        let e = &mesh.edges[0];
        assert!(e.crest_elevation >= 5.0);
        assert!(e.boundary_length > 0.0);
    }

    #[test]
    fn island_has_apron_and_basin() {
        let dtm = terrain(
            40,
            40,
            TerrainShape::IslandWithLoweredCenter {
                rim_z: 2.0,
                depression_depth: 1.8,
                coast_z: 0.3,
                apron_width: 4.0,
                rim_distance: 10.0,
            },
        );
        let mesh = delineate_zones(&dtm, &MeshOptions::default()).unwrap();
        assert_eq!(mesh.zones.len(), 2);
        assert_eq!(mesh.edges.len(), 1);
        assert_eq!(mesh.edges[0].crest_elevation, 2.0);
        let wf = mesh.waterfront_lengths();
        let apron = mesh.label(0).unwrap();
        assert_eq!(wf[apron], 160.0);
        assert_eq!(wf[1 - apron], 0.0);
    }

    #[test]
    fn merge_pass_absorbs_shallow_dimples() {
        // a gently tilted plane with one sub-millimetre dimple
        let mut z: Vec<f64> = (0..100).map(|i| (i % 10) as f64 * 1e-4).collect();
        z[55] = -1e-4;
        let dtm = DtmRaster::new(10, 10, 1.0, 0.0, 0.0, -9999.0, z).unwrap();
        let plain = delineate_zones(&dtm, &MeshOptions::default()).unwrap();
        assert_eq!(plain.zones.len(), 2);
        let merged = delineate_zones(
            &dtm,
            &MeshOptions {
                merge_epsilon: Some(0.01),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(merged.zones.len(), 1);
        assert!(merged.edges.is_empty());
        assert_eq!(merged.zones[0].cells.len(), 100);
    }

    #[test]
    fn mesh_json_round_trip() {
        let dtm = terrain(41, 21, TerrainShape::TwoBasin { saddle: 5.0, floor: 0.0 });
        let mesh = delineate_zones(&dtm, &MeshOptions::default()).unwrap();
        let back = ZoneMesh::from_json(&mesh.to_json()).unwrap();
        assert_eq!(back, mesh);
        assert_eq!(back.fingerprint(), mesh.fingerprint());
        assert!(ZoneMesh::from_json("{\"format\":\"other\"}").is_err());
    }
}
