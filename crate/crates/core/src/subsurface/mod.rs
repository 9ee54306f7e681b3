//! Transient Darcy flow in the porous layer beneath the city.
//!
//! Cell-centered finite volumes on terrain-following columns. The unknown is
//! the piezometric head `H = p / (rho g) + z`; pressure is derived from it.
//! Each step is one backward-Euler SPD solve.

mod fields;
mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::terrain::DtmRaster;

pub use fields::{
    column_raster, darcy_velocity, h_filtr_field, h_total_field, pressure_field, surcharge_rates, surface_pressure, Face, FaceVelocity,
    FaceKind,
};
pub use solver::{solve_spd, CsrMatrix, SolveStats};

pub const NO_COLUMN: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubsurfaceError {
    #[error("linear solve did not converge in {iterations} iterations (relative residual {residual:e}); history {history:?}")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("matrix is not positive definite (row {row}, diagonal {diagonal})")]
    NotPositiveDefinite { row: usize, diagonal: f64 },
    #[error("invalid subsurface parameters: {0}")]
    Params(String),
    #[error("the terrain has no valid cells")]
    AllNodata,
    #[error("{what}: expected {expected} values, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("steady solve needs at least one fixed-head boundary")]
    Singular,
}

impl SubsurfaceError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SubsurfaceError::NoConvergence { .. } | SubsurfaceError::NotPositiveDefinite { .. } | SubsurfaceError::Singular => 3,
            _ => 2,
        }
    }
}

fn default_viscosity() -> f64 {
    1.0e-3
}
fn default_density() -> f64 {
    1000.0
}
fn default_gravity() -> f64 {
    9.81
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorousParams {
    /// Specific storage, 1/Pa.
    pub storage: f64,
    /// Intrinsic permeability, m2.
    pub permeability: f64,
    /// Dynamic viscosity, Pa s.
    #[serde(default = "default_viscosity")]
    pub viscosity: f64,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

impl PorousParams {
    pub fn new(storage: f64, permeability: f64) -> Self {
        PorousParams {
            storage,
            permeability,
            viscosity: default_viscosity(),
            density: default_density(),
            gravity: default_gravity(),
        }
    }

    pub fn validate(&self) -> Result<(), SubsurfaceError> {
        for (name, v) in [
            ("storage", self.storage),
            ("permeability", self.permeability),
            ("viscosity", self.viscosity),
            ("density", self.density),
            ("gravity", self.gravity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SubsurfaceError::Params(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn rho_g(&self) -> f64 {
        self.density * self.gravity
    }

    /// Pressure diffusivity `K / (mu S)`, m2/s.
    pub fn diffusivity(&self) -> f64 {
        self.permeability / (self.viscosity * self.storage)
    }
}

/// Treatment of the land surface over dry columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DryMode {
    /// Fixed zero piezometric head.
    ZeroHead,
    /// Closed, opening as a seepage face (zero pressure) once the surface
    /// pressure turns positive, and closing again when flow turns downward.
    #[default]
    NoFlow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "type", content = "head")]
pub enum BottomBc {
    #[default]
    NoFlow,
    FixedHead(f64),
}

/// How surcharge rates are derived from the subsurface state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurchargeMode {
    /// Upward Darcy flux through the land surface.
    #[default]
    Flux,
    /// Rate of change of the surcharge depth.
    HfiltrRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CoarsenRepr", into = "CoarsenRepr")]
pub enum Coarsening {
    Auto,
    Factor(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CoarsenRepr {
    Factor(usize),
    Word(String),
}

impl TryFrom<CoarsenRepr> for Coarsening {
    type Error = String;
    fn try_from(r: CoarsenRepr) -> Result<Self, String> {
        match r {
            CoarsenRepr::Factor(0) => Err("coarsening factor must be >= 1".into()),
            CoarsenRepr::Factor(c) => Ok(Coarsening::Factor(c)),
            CoarsenRepr::Word(w) if w == "auto" => Ok(Coarsening::Auto),
            CoarsenRepr::Word(w) => Err(format!("coarsening must be \"auto\" or an integer, got {w:?}")),
        }
    }
}

impl From<Coarsening> for CoarsenRepr {
    fn from(c: Coarsening) -> Self {
        match c {
            Coarsening::Auto => CoarsenRepr::Word("auto".into()),
            Coarsening::Factor(c) => CoarsenRepr::Factor(c),
        }
    }
}

impl Coarsening {
    /// Factor for a DTM, picking the smallest one that keeps the grid at or
    /// below `target_cells` in `Auto` mode.
    pub fn factor(self, ncols: usize, nrows: usize, nz: usize, target_cells: usize) -> usize {
        match self {
            Coarsening::Factor(c) => c,
            Coarsening::Auto => (1..=ncols.max(nrows))
                .find(|&c| ncols.div_ceil(c) * nrows.div_ceil(c) * nz <= target_cells)
                .unwrap_or(ncols.max(nrows)),
        }
    }
}

fn default_depth() -> f64 {
    20.0
}
fn default_layers() -> usize {
    10
}
fn default_target() -> usize {
    50_000
}
fn default_true() -> bool {
    true
}
fn default_dt() -> f64 {
    60.0
}
fn default_tolerance() -> f64 {
    1e-10
}
fn default_coarsen() -> Coarsening {
    Coarsening::Auto
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsurfaceConfig {
    #[serde(default = "default_depth")]
    pub depth: f64,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_coarsen")]
    pub coarsen: Coarsening,
    #[serde(default = "default_target")]
    pub target_cells: usize,
    #[serde(flatten)]
    pub params: PorousParams,
    #[serde(default)]
    pub dry_mode: DryMode,
    #[serde(default = "default_true")]
    pub embankments: bool,
    #[serde(default)]
    pub bottom: BottomBc,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub surcharge_mode: SurchargeMode,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl SubsurfaceConfig {
    pub fn new(params: PorousParams) -> Self {
        SubsurfaceConfig {
            depth: default_depth(),
            layers: default_layers(),
            coarsen: Coarsening::Auto,
            target_cells: default_target(),
            params,
            dry_mode: DryMode::NoFlow,
            embankments: true,
            bottom: BottomBc::NoFlow,
            dt: default_dt(),
            surcharge_mode: SurchargeMode::Flux,
            tolerance: default_tolerance(),
        }
    }

    pub fn validate(&self) -> Result<(), SubsurfaceError> {
        self.params.validate()?;
        if !(self.depth > 0.0 && self.depth.is_finite()) {
            return Err(SubsurfaceError::Params(format!("depth must be positive, got {}", self.depth)));
        }
        if self.layers < 2 {
            return Err(SubsurfaceError::Params(format!("need at least 2 layers, got {}", self.layers)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SubsurfaceError::Params(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(SubsurfaceError::Params(format!("tolerance must be in (0, 1), got {}", self.tolerance)));
        }
        if self.target_cells == 0 {
            return Err(SubsurfaceError::Params("target_cells must be positive".into()));
        }
        Ok(())
    }

    pub fn build(&self, dtm: &DtmRaster) -> Result<SubsurfaceGrid, SubsurfaceError> {
        self.validate()?;
        let c = self.coarsen.factor(dtm.ncols, dtm.nrows, self.layers, self.target_cells);
        let mut grid = build_grid(dtm, self.depth, self.layers, self.params.clone(), c)?;
        grid.embankments = self.embankments;
        grid.bottom = self.bottom;
        grid.tolerance = self.tolerance;
        Ok(grid)
    }
}

/// Land-surface boundary data for one subsurface step.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceBC {
    /// Overland water depth per column, meters; zero where dry.
    pub depth: Vec<f64>,
    pub dry_mode: DryMode,
}

impl SurfaceBC {
    pub fn dry(grid: &SubsurfaceGrid, dry_mode: DryMode) -> Self {
        SurfaceBC {
            depth: vec![0.0; grid.columns()],
            dry_mode,
        }
    }

    /// Column depths as the mean over each column's valid DTM cells.
    pub fn from_cell_depths(grid: &SubsurfaceGrid, cell_depth: &[f64], dry_mode: DryMode) -> Result<Self, SubsurfaceError> {
        if cell_depth.len() != grid.column_of_cell.len() {
            return Err(SubsurfaceError::Shape {
                what: "cell depths",
                expected: grid.column_of_cell.len(),
                got: cell_depth.len(),
            });
        }
        let mut depth = vec![0.0; grid.columns()];
        for (i, &col) in grid.column_of_cell.iter().enumerate() {
            if col != NO_COLUMN {
                depth[col as usize] += cell_depth[i].max(0.0);
            }
        }
        for (d, &n) in depth.iter_mut().zip(&grid.n_valid) {
            if n > 0 {
                *d /= n as f64;
            }
        }
        Ok(SurfaceBC { depth, dry_mode })
    }
}

/// Diagnostics of one solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub t: f64,
    pub iterations: usize,
    pub relative_residual: f64,
    /// Water volume released from storage change, m3.
    pub storage_change: f64,
    /// Net volume entering through all boundaries, m3.
    pub boundary_inflow: f64,
    pub mass_balance_error: f64,
    pub seepage_columns: usize,
    pub flooded_columns: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsurfaceGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// DTM cells per column side.
    pub coarsen: usize,
    pub dtm_ncols: usize,
    pub dtm_nrows: usize,
    /// Column width, meters.
    pub dx: f64,
    pub dz: f64,
    pub depth: f64,
    pub z_top: Vec<f64>,
    pub active: Vec<bool>,
    /// Valid DTM cells in each column.
    pub n_valid: Vec<usize>,
    /// Column index of every DTM cell, `NO_COLUMN` under nodata.
    pub column_of_cell: Vec<u32>,
    /// Piezometric head per cell, meters; column-major with layer 0 on top.
    pub head: Vec<f64>,
    /// Permeability per cell, m2.
    pub permeability: Vec<f64>,
    pub params: PorousParams,
    pub embankments: bool,
    pub bottom: BottomBc,
    pub tolerance: f64,
    pub t: f64,
    /// Dry columns currently acting as seepage outlets.
    pub seepage: Vec<bool>,
    /// Columns held at the overland water level in the last step.
    pub flooded: Vec<bool>,
    /// Boundary faces of the last step.
    pub boundary: Vec<Face>,
    /// Upward volume through the land surface per column since the last
    /// [`take_surface_flux`](Self::take_surface_flux), m3.
    pub surface_volume: Vec<f64>,
    pub accumulated_time: f64,
    pub last: Option<StepReport>,
}

/// Builds a grid under `dtm` with `coarsen x coarsen` DTM cells per column,
/// initially hydrostatic with the water table at z = 0.
pub fn build_grid(
    dtm: &DtmRaster,
    depth: f64,
    nz: usize,
    params: PorousParams,
    coarsen: usize,
) -> Result<SubsurfaceGrid, SubsurfaceError> {
    params.validate()?;
    if !(depth > 0.0) || nz < 2 || coarsen == 0 {
        return Err(SubsurfaceError::Params(format!(
            "need depth > 0, nz >= 2, coarsening >= 1; got {depth}, {nz}, {coarsen}"
        )));
    }
    let nx = dtm.ncols.div_ceil(coarsen);
    let ny = dtm.nrows.div_ceil(coarsen);
    let ncol = nx * ny;
    let mut z_sum = vec![0.0; ncol];
    let mut n_valid = vec![0usize; ncol];
    let mut column_of_cell = vec![NO_COLUMN; dtm.len()];
    for r in 0..dtm.nrows {
        for c in 0..dtm.ncols {
            let i = dtm.index(r, c);
            if !dtm.is_valid(i) {
                continue;
            }
            let col = (r / coarsen) * nx + c / coarsen;
            column_of_cell[i] = col as u32;
            z_sum[col] += dtm.elevation[i];
            n_valid[col] += 1;
        }
    }
    if n_valid.iter().all(|&n| n == 0) {
        return Err(SubsurfaceError::AllNodata);
    }
    let active: Vec<bool> = n_valid.iter().map(|&n| n > 0).collect();
    let z_top: Vec<f64> = z_sum
        .iter()
        .zip(&n_valid)
        .map(|(&s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    let ncell = ncol * nz;
    Ok(SubsurfaceGrid {
        nx,
        ny,
        nz,
        coarsen,
        dtm_ncols: dtm.ncols,
        dtm_nrows: dtm.nrows,
        dx: dtm.cellsize * coarsen as f64,
        dz: depth / nz as f64,
        depth,
        z_top,
        active,
        n_valid,
        column_of_cell,
        head: vec![0.0; ncell],
        permeability: vec![params.permeability; ncell],
        params,
        embankments: true,
        bottom: BottomBc::NoFlow,
        tolerance: 1e-10,
        t: 0.0,
        seepage: vec![false; ncol],
        flooded: vec![false; ncol],
        boundary: Vec::new(),
        surface_volume: vec![0.0; ncol],
        accumulated_time: 0.0,
        last: None,
    })
}

impl SubsurfaceGrid {
    pub fn columns(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cells(&self) -> usize {
        self.columns() * self.nz
    }

    pub fn active_cells(&self) -> usize {
        self.active.iter().filter(|&&a| a).count() * self.nz
    }

    #[inline]
    pub fn cell(&self, col: usize, layer: usize) -> usize {
        col * self.nz + layer
    }

    /// Elevation of a cell center.
    pub fn z_center(&self, col: usize, layer: usize) -> f64 {
        self.z_top[col] - (layer as f64 + 0.5) * self.dz
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dx * self.dz
    }

    /// Columns touching this one across its four sides; `None` where the
    /// side lies on the grid edge.
    fn lateral(&self, col: usize) -> [Option<usize>; 4] {
        let (r, c) = (col / self.nx, col % self.nx);
        [
            (r > 0).then(|| col - self.nx),
            (c > 0).then(|| col - 1),
            (c + 1 < self.nx).then(|| col + 1),
            (r + 1 < self.ny).then(|| col + self.nx),
        ]
    }

    #[inline]
    fn mobility(&self, cell: usize) -> f64 {
        self.permeability[cell] / self.params.viscosity
    }

    fn harmonic(&self, a: usize, b: usize) -> f64 {
        let (ka, kb) = (self.mobility(a), self.mobility(b));
        2.0 * ka * kb / (ka + kb)
    }

    /// Interior faces as `(cell_a, cell_b, transmissibility)`, each once.
    pub(crate) fn interior_faces(&self) -> Vec<(usize, usize, f64)> {
        let rg = self.params.rho_g();
        let mut out = Vec::with_capacity(self.cells() * 3);
        for col in 0..self.columns() {
            if !self.active[col] {
                continue;
            }
            for k in 0..self.nz {
                let i = self.cell(col, k);
                if k + 1 < self.nz {
                    let j = i + 1;
                    out.push((i, j, rg * self.harmonic(i, j) * self.dx * self.dx / self.dz));
                }
                for nb in self.lateral(col).into_iter().flatten() {
                    if nb > col && self.active[nb] {
                        let j = self.cell(nb, k);
                        out.push((i, j, rg * self.harmonic(i, j) * self.dz));
                    }
                }
            }
        }
        out
    }

    /// Boundary faces implied by `bc` and the grid's side and bottom settings.
    pub(crate) fn boundary_faces(&self, bc: &SurfaceBC) -> Vec<Face> {
        let rg = self.params.rho_g();
        let mut out = Vec::new();
        for col in 0..self.columns() {
            if !self.active[col] {
                continue;
            }
            let flooded = bc.depth[col] > 0.0;
            let top_head = if flooded {
                Some(self.z_top[col] + bc.depth[col])
            } else {
                match bc.dry_mode {
                    DryMode::ZeroHead => Some(0.0),
                    DryMode::NoFlow if self.seepage[col] => Some(self.z_top[col]),
                    DryMode::NoFlow => None,
                }
            };
            let top = self.cell(col, 0);
            if let Some(head) = top_head {
                out.push(Face {
                    cell: top,
                    column: col,
                    kind: FaceKind::Surface,
                    transmissibility: rg * self.mobility(top) * self.dx * self.dx / (0.5 * self.dz),
                    area: self.dx * self.dx,
                    head,
                });
            }
            if self.embankments {
                let side_head = if flooded { self.z_top[col] + bc.depth[col] } else { 0.0 };
                for nb in self.lateral(col) {
                    if nb.is_some_and(|n| self.active[n]) {
                        continue;
                    }
                    for k in 0..self.nz {
                        let i = self.cell(col, k);
                        out.push(Face {
                            cell: i,
                            column: col,
                            kind: FaceKind::Embankment,
                            transmissibility: rg * self.mobility(i) * self.dz / 0.5,
                            area: self.dx * self.dz,
                            head: side_head,
                        });
                    }
                }
            }
            if let BottomBc::FixedHead(head) = self.bottom {
                let i = self.cell(col, self.nz - 1);
                out.push(Face {
                    cell: i,
                    column: col,
                    kind: FaceKind::Bottom,
                    transmissibility: rg * self.mobility(i) * self.dx * self.dx / (0.5 * self.dz),
                    area: self.dx * self.dx,
                    head,
                });
            }
        }
        out
    }

    fn check_bc(&self, bc: &SurfaceBC) -> Result<(), SubsurfaceError> {
        if bc.depth.len() != self.columns() {
            return Err(SubsurfaceError::Shape {
                what: "surface depths",
                expected: self.columns(),
                got: bc.depth.len(),
            });
        }
        if let Some(d) = bc.depth.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(SubsurfaceError::Params(format!("surface depth must be finite and >= 0, got {d}")));
        }
        Ok(())
    }

    /// Solves for the head increment with storage coefficient `c` per cell
    /// (zero for a steady solve).
    fn solve_increment(&mut self, faces: &[Face], storage: f64) -> Result<(SolveStats, Vec<f64>), SubsurfaceError> {
        let n = self.cells();
        let mut triplets = Vec::with_capacity(n * 7);
        let mut rhs = vec![0.0; n];
        for col in 0..self.columns() {
            for k in 0..self.nz {
                let i = self.cell(col, k);
                triplets.push((i, i, if self.active[col] { storage } else { 1.0 }));
            }
        }
        for (i, j, t) in self.interior_faces() {
            triplets.push((i, i, t));
            triplets.push((j, j, t));
            triplets.push((i, j, -t));
            triplets.push((j, i, -t));
            let q = t * (self.head[j] - self.head[i]);
            rhs[i] += q;
            rhs[j] -= q;
        }
        for f in faces {
            triplets.push((f.cell, f.cell, f.transmissibility));
            rhs[f.cell] += f.transmissibility * (f.head - self.head[f.cell]);
        }
        let a = CsrMatrix::from_triplets(n, &triplets);
        let mut delta = vec![0.0; n];
        let stats = solve_spd(&a, &rhs, &mut delta, self.tolerance, 10 * n)?;
        Ok((stats, delta))
    }

    /// Volume entering through boundary faces per unit time at the current heads.
    fn boundary_rate(&self) -> f64 {
        self.boundary
            .iter()
            .map(|f| f.transmissibility * (f.head - self.head[f.cell]))
            .sum()
    }

    fn update_seepage(&mut self, bc: &SurfaceBC) {
        let ps = surface_pressure(self);
        let mut up = vec![0.0; self.columns()];
        for f in &self.boundary {
            if f.kind == FaceKind::Surface {
                up[f.column] += f.transmissibility * (self.head[f.cell] - f.head);
            }
        }
        for col in 0..self.columns() {
            self.seepage[col] = self.active[col]
                && bc.dry_mode == DryMode::NoFlow
                && bc.depth[col] == 0.0
                && if self.seepage[col] { up[col] > 0.0 } else { ps[col] > 0.0 };
        }
    }

    /// Upward flux through the land surface per column at the current heads, m3/s.
    pub fn surface_flux(&self) -> Vec<f64> {
        let mut up = vec![0.0; self.columns()];
        for f in &self.boundary {
            if f.kind == FaceKind::Surface {
                up[f.column] += f.transmissibility * (self.head[f.cell] - f.head);
            }
        }
        up
    }

    /// Time-averaged upward surface flux since the last call, m3/s per
    /// column; resets the accumulator.
    pub fn take_surface_flux(&mut self) -> Vec<f64> {
        let t = self.accumulated_time;
        let out = if t > 0.0 {
            self.surface_volume.iter().map(|v| v / t).collect()
        } else {
            vec![0.0; self.columns()]
        };
        self.surface_volume.iter_mut().for_each(|v| *v = 0.0);
        self.accumulated_time = 0.0;
        out
    }

    /// Pressure field, Pa.
    pub fn pressure(&self) -> Vec<f64> {
        pressure_field(self)
    }

    /// Sets the head to `h` everywhere (a flat water table at elevation `h`).
    pub fn set_uniform_head(&mut self, h: f64) {
        self.head.iter_mut().for_each(|x| *x = h);
    }
}

/// One backward-Euler step of length `dt`.
pub fn step_subsurface(grid: &mut SubsurfaceGrid, bc: &SurfaceBC, dt: f64) -> Result<StepReport, SubsurfaceError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SubsurfaceError::Params(format!("dt must be positive, got {dt}")));
    }
    grid.check_bc(bc)?;
    let faces = grid.boundary_faces(bc);
    let c = grid.params.storage * grid.params.rho_g() * grid.cell_volume() / dt;
    let (stats, delta) = grid.solve_increment(&faces, c)?;
    for (h, d) in grid.head.iter_mut().zip(&delta) {
        *h += d;
    }
    grid.boundary = faces;
    grid.flooded = bc.depth.iter().map(|&d| d > 0.0).collect();
    grid.t += dt;

    let storage_change: f64 = c * dt * grid
        .active
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .map(|(col, _)| (0..grid.nz).map(|k| delta[grid.cell(col, k)]).sum::<f64>())
        .sum::<f64>();
    let boundary_inflow = grid.boundary_rate() * dt;
    let gross = grid
        .boundary
        .iter()
        .map(|f| (f.transmissibility * (f.head - grid.head[f.cell])).abs())
        .sum::<f64>()
        * dt;
    let up = grid.surface_flux();
    for (acc, q) in grid.surface_volume.iter_mut().zip(&up) {
        *acc += q * dt;
    }
    grid.accumulated_time += dt;
    grid.update_seepage(bc);

    // Inflow and outflow nearly cancel near equilibrium, so the gross
    // boundary exchange is the scale.
    let scale = storage_change.abs().max(gross);
    let report = StepReport {
        t: grid.t,
        iterations: stats.iterations,
        relative_residual: stats.relative_residual,
        storage_change,
        boundary_inflow,
        mass_balance_error: if scale > 0.0 { (storage_change - boundary_inflow).abs() / scale } else { 0.0 },
        seepage_columns: grid.seepage.iter().filter(|&&s| s).count(),
        flooded_columns: grid.flooded.iter().filter(|&&f| f).count(),
    };
    grid.last = Some(report.clone());
    Ok(report)
}

/// Solves the steady problem for `bc` in place.
pub fn solve_steady(grid: &mut SubsurfaceGrid, bc: &SurfaceBC) -> Result<SolveStats, SubsurfaceError> {
    grid.check_bc(bc)?;
    let faces = grid.boundary_faces(bc);
    if faces.is_empty() {
        return Err(SubsurfaceError::Singular);
    }
    let (stats, delta) = grid.solve_increment(&faces, 0.0)?;
    for (h, d) in grid.head.iter_mut().zip(&delta) {
        *h += d;
    }
    grid.boundary = faces;
    grid.flooded = bc.depth.iter().map(|&d| d > 0.0).collect();
    Ok(stats)
}
