//! Rapid flood spreading over Impact Zones.
//!
//! Each step is two-phase: every edge discharge is computed from the levels
//! at the start of the step, limited, and only then applied. External sources
//! (sea boundary inflow and subsurface surcharge) are added afterwards.

mod discharge;
mod hydrograph;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::izmesh::{equalization_level, TableError, ZoneMesh};
use crate::terrain::DtmRaster;

pub use discharge::{manning_discharge, weir_discharge, GRAVITY};
pub use hydrograph::Hydrograph;

#[derive(Debug, Error, PartialEq)]
pub enum SurfaceError {
    #[error("zone {zone} overflowed its level-volume table by {excess} m3 at t = {t} s; increase the mesh headroom")]
    LevelOverflow { zone: usize, excess: f64, t: f64 },
    #[error("t = {t} s is outside the hydrograph range [{start}, {end}] s")]
    HydrographRange { t: f64, start: f64, end: f64 },
    #[error("hydrograph: {0}")]
    Hydrograph(String),
    #[error("invalid surface configuration: {0}")]
    Config(String),
    #[error("{what} has {got} entries, mesh has {zones} zones")]
    Length { what: &'static str, got: usize, zones: usize },
}

impl SurfaceError {
    /// 3 for numerical failures, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            SurfaceError::LevelOverflow { .. } => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DischargeLaw {
    Weir,
    Manning,
}

/// Area over which a surcharge rate (m/s) is converted to a volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SurchargeArea {
    /// Plan area while the zone is dry, wetted area once it holds water.
    #[default]
    PlanWhenDry,
    /// Always the full plan area.
    Plan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfrontSegment {
    pub zone: usize,
    /// Length of the overtopped boundary, meters.
    pub length: f64,
    /// Overtopping delay relative to the sea signal, seconds.
    #[serde(default)]
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    pub dt: f64,
    pub law: DischargeLaw,
    pub weir_coefficient: f64,
    pub manning_n: f64,
    pub limiter_fraction: f64,
    pub waterfront: Vec<WaterfrontSegment>,
    /// Crest elevation of the waterfront; the sea overtops above it.
    pub flood_threshold: f64,
    pub surcharge_area: SurchargeArea,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        SurfaceConfig {
            dt: 10.0,
            law: DischargeLaw::Weir,
            weir_coefficient: 0.6,
            manning_n: 0.05,
            limiter_fraction: 0.25,
            waterfront: Vec::new(),
            flood_threshold: 1.30,
            surcharge_area: SurchargeArea::PlanWhenDry,
        }
    }
}

impl SurfaceConfig {
    pub fn validate(&self, mesh: &ZoneMesh) -> Result<(), SurfaceError> {
        let bad = |m: String| Err(SurfaceError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.weir_coefficient > 0.0 && self.weir_coefficient <= 1.5) {
            return bad(format!("weir coefficient must be in (0, 1.5], got {}", self.weir_coefficient));
        }
        if !(self.manning_n > 0.0) {
            return bad(format!("Manning n must be positive, got {}", self.manning_n));
        }
        if !(self.limiter_fraction > 0.0 && self.limiter_fraction <= 0.5) {
            return bad(format!("limiter fraction must be in (0, 0.5], got {}", self.limiter_fraction));
        }
        if !self.flood_threshold.is_finite() {
            return bad("flood threshold must be finite".into());
        }
        for w in &self.waterfront {
            if w.zone >= mesh.zone_count() {
                return bad(format!("waterfront zone {} does not exist", w.zone));
            }
            if !(w.length > 0.0) || !(w.delay >= 0.0) {
                return bad(format!("waterfront zone {}: length must be > 0 and delay >= 0", w.zone));
            }
        }
        Ok(())
    }
}

/// Volumes added to each zone during one step, m3.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExternalSources {
    pub boundary: Vec<f64>,
    pub surcharge: Vec<f64>,
}

impl ExternalSources {
    pub fn zeros(zones: usize) -> Self {
        ExternalSources {
            boundary: vec![0.0; zones],
            surcharge: vec![0.0; zones],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceState {
    pub t: f64,
    pub volume: Vec<f64>,
    pub level: Vec<f64>,
    /// Gross edge discharge through each zone over the last step, m3/s.
    pub discharge: Vec<f64>,
    /// Discharge-weighted mean edge velocity over the last step, m/s.
    pub velocity: Vec<f64>,
    /// Cumulative sea boundary inflow, m3.
    pub inflow_ledger: f64,
    /// Cumulative requested surcharge volume (negative for sinks), m3.
    pub surcharge_ledger: f64,
    /// Cumulative volume that sinks could not remove from empty zones, m3.
    pub clip_ledger: f64,
    pub initial_volume: f64,
}

impl SurfaceState {
    /// All zones empty at time `t`.
    pub fn dry(mesh: &ZoneMesh, t: f64) -> Self {
        let n = mesh.zone_count();
        SurfaceState {
            t,
            volume: vec![0.0; n],
            level: mesh.zones.iter().map(|z| z.z_min).collect(),
            discharge: vec![0.0; n],
            velocity: vec![0.0; n],
            inflow_ledger: 0.0,
            surcharge_ledger: 0.0,
            clip_ledger: 0.0,
            initial_volume: 0.0,
        }
    }

    pub fn from_volumes(mesh: &ZoneMesh, t: f64, volume: Vec<f64>) -> Result<Self, SurfaceError> {
        check_len("volume", volume.len(), mesh)?;
        let mut s = SurfaceState::dry(mesh, t);
        for (k, &v) in volume.iter().enumerate() {
            if !(v >= 0.0) {
                return Err(SurfaceError::Config(format!("zone {k} has negative volume {v}")));
            }
            s.level[k] = level_of(mesh, k, v, t)?;
        }
        s.initial_volume = volume.iter().sum();
        s.volume = volume;
        Ok(s)
    }

    pub fn from_levels(mesh: &ZoneMesh, t: f64, levels: &[f64]) -> Result<Self, SurfaceError> {
        check_len("levels", levels.len(), mesh)?;
        let volume = mesh
            .zones
            .iter()
            .zip(levels)
            .map(|(z, &h)| z.level_volume.volume_extrapolated(h))
            .collect();
        SurfaceState::from_volumes(mesh, t, volume)
    }

    pub fn total_volume(&self) -> f64 {
        self.volume.iter().sum()
    }

    /// Relative mismatch between stored water and the ledgers.
    pub fn mass_balance_error(&self) -> f64 {
        let stored = self.total_volume();
        let expected = self.initial_volume + self.inflow_ledger + self.surcharge_ledger + self.clip_ledger;
        let scale = stored
            .abs()
            .max(self.initial_volume.abs() + self.inflow_ledger.abs() + self.surcharge_ledger.abs() + self.clip_ledger.abs())
            .max(f64::MIN_POSITIVE);
        (stored - expected).abs() / scale
    }

    /// Water depth above the zone bottom.
    pub fn depth(&self, mesh: &ZoneMesh, zone: usize) -> f64 {
        (self.level[zone] - mesh.zones[zone].z_min).max(0.0)
    }

    /// Checks volumes are nonnegative and levels agree with the tables.
    pub fn check(&self, mesh: &ZoneMesh) -> Result<(), String> {
        for (k, z) in mesh.zones.iter().enumerate() {
            let v = self.volume[k];
            if !(v >= 0.0) {
                return Err(format!("zone {k}: volume {v}"));
            }
            let h = z.level_volume.level_from_volume(v).map_err(|e| format!("zone {k}: {e}"))?;
            if (h - self.level[k]).abs() > 1e-9 {
                return Err(format!("zone {k}: level {} but table gives {h}", self.level[k]));
            }
        }
        Ok(())
    }
}

fn check_len(what: &'static str, got: usize, mesh: &ZoneMesh) -> Result<(), SurfaceError> {
    if got != mesh.zone_count() {
        return Err(SurfaceError::Length {
            what,
            got,
            zones: mesh.zone_count(),
        });
    }
    Ok(())
}

fn level_of(mesh: &ZoneMesh, zone: usize, v: f64, t: f64) -> Result<f64, SurfaceError> {
    mesh.zones[zone].level_volume.level_from_volume(v).map_err(|e| match e {
        TableError::VolumeOverflow { excess } => SurfaceError::LevelOverflow { zone, excess, t },
        TableError::LevelOverflow { .. } => unreachable!(),
    })
}

/// Rounds of transfer halving before offending edges are frozen outright.
const HALVING_ROUNDS: usize = 40;

/// Advances the surface state by one constant time step.
pub fn step_surface(
    state: &SurfaceState,
    mesh: &ZoneMesh,
    config: &SurfaceConfig,
    sources: &ExternalSources,
) -> Result<SurfaceState, SurfaceError> {
    let mut next = state.clone();
    advance(&mut next, mesh, config, sources)?;
    Ok(next)
}

/// In-place form of [`step_surface`].
pub fn advance(
    state: &mut SurfaceState,
    mesh: &ZoneMesh,
    config: &SurfaceConfig,
    sources: &ExternalSources,
) -> Result<(), SurfaceError> {
    let nz = mesh.zone_count();
    check_len("boundary sources", sources.boundary.len(), mesh)?;
    check_len("surcharge sources", sources.surcharge.len(), mesh)?;
    let dt = config.dt;
    let level = &state.level;
    let volume = &state.volume;

    // Phase 1: limited edge transfers from start-of-step levels.
    let mut transfer = vec![0.0; mesh.edges.len()];
    for (e, edge) in mesh.edges.iter().enumerate() {
        let (a, b) = (edge.zone_a, edge.zone_b);
        let (ha, hb) = (level[a], level[b]);
        let q = match config.law {
            DischargeLaw::Weir => weir_discharge(ha, hb, edge.crest_elevation, edge.boundary_length, config.weir_coefficient),
            DischargeLaw::Manning => manning_discharge(
                ha,
                hb,
                edge.crest_elevation,
                edge.boundary_length,
                edge.flow_distance,
                config.manning_n,
            ),
        };
        if q == 0.0 {
            continue;
        }
        let (donor, recv) = if q > 0.0 { (a, b) } else { (b, a) };
        let td = &mesh.zones[donor].level_volume;
        let heq = equalization_level(td, level[donor], &mesh.zones[recv].level_volume, level[recv]).max(edge.crest_elevation);
        let to_equal = (volume[donor] - td.volume_extrapolated(heq)).max(0.0);
        let dv = (q.abs() * dt).min(config.limiter_fraction * volume[donor]).min(to_equal);
        transfer[e] = if q > 0.0 { dv } else { -dv };
    }

    // Scale the outflows of over-demanded donors.
    let mut demand = vec![0.0; nz];
    for (edge, &t) in mesh.edges.iter().zip(&transfer) {
        if t > 0.0 {
            demand[edge.zone_a] += t;
        } else if t < 0.0 {
            demand[edge.zone_b] -= t;
        }
    }
    for (edge, t) in mesh.edges.iter().zip(transfer.iter_mut()) {
        let donor = if *t > 0.0 { edge.zone_a } else { edge.zone_b };
        if *t != 0.0 && demand[donor] > volume[donor] {
            *t *= volume[donor] / demand[donor];
        }
    }

    // Guard against any edge overshooting equalization through the combined
    // effect of several simultaneous transfers.
    let mut new_volume;
    let mut new_level = level.clone();
    let mut round = 0;
    loop {
        new_volume = volume.clone();
        for (edge, &t) in mesh.edges.iter().zip(&transfer) {
            new_volume[edge.zone_a] -= t;
            new_volume[edge.zone_b] += t;
        }
        for k in 0..nz {
            new_level[k] = if new_volume[k] == volume[k] {
                level[k]
            } else {
                level_of(mesh, k, new_volume[k].max(0.0), state.t)?
            };
        }
        let mut offending = vec![false; nz];
        let mut any = false;
        for edge in &mesh.edges {
            let (a, b) = (edge.zone_a, edge.zone_b);
            if level[a].max(level[b]) <= edge.crest_elevation {
                continue;
            }
            let before = level[a] - level[b];
            let after = new_level[a] - new_level[b];
            if (before > 0.0 && after < 0.0) || (before < 0.0 && after > 0.0) {
                offending[a] = true;
                offending[b] = true;
                any = true;
            }
        }
        if !any {
            break;
        }
        let factor = if round < HALVING_ROUNDS { 0.5 } else { 0.0 };
        for (edge, t) in mesh.edges.iter().zip(transfer.iter_mut()) {
            if offending[edge.zone_a] || offending[edge.zone_b] {
                *t *= factor;
            }
        }
        round += 1;
    }

    // Phase 2: sources, ledgers, levels.
    let mut clipped = 0.0;
    for k in 0..nz {
        let mut v = new_volume[k];
        if v < 0.0 {
            clipped -= v;
            v = 0.0;
        }
        v += sources.boundary[k] + sources.surcharge[k];
        if v < 0.0 {
            clipped -= v;
            v = 0.0;
        }
        new_volume[k] = v;
    }
    state.inflow_ledger += sources.boundary.iter().sum::<f64>();
    state.surcharge_ledger += sources.surcharge.iter().sum::<f64>();
    state.clip_ledger += clipped;

    let t_next = state.t + dt;
    for k in 0..nz {
        if new_volume[k] != volume[k] {
            new_level[k] = level_of(mesh, k, new_volume[k], t_next)?;
        } else {
            new_level[k] = level[k];
        }
    }

    let mut gross = vec![0.0; nz];
    let mut weighted = vec![0.0; nz];
    for (edge, &t) in mesh.edges.iter().zip(&transfer) {
        if t == 0.0 {
            continue;
        }
        let q = t.abs() / dt;
        let depth = level[edge.zone_a].max(level[edge.zone_b]) - edge.crest_elevation;
        let v = if depth > 0.0 { q / (edge.boundary_length * depth) } else { 0.0 };
        for k in [edge.zone_a, edge.zone_b] {
            gross[k] += q;
            weighted[k] += q * v;
        }
    }
    state.velocity = gross
        .iter()
        .zip(&weighted)
        .map(|(&g, &w)| if g > 0.0 { w / g } else { 0.0 })
        .collect();
    state.discharge = gross;
    state.volume = new_volume;
    state.level = new_level;
    state.t = t_next;
    Ok(())
}

/// Sea overtopping volumes for one step. The sea is an infinite reservoir
/// behind a weir whose crest is the flood threshold; inflow never lifts a
/// zone above the sea level and return flow never drains it below the sea
/// level or the crest.
pub fn boundary_inflow(
    hydrograph: &Hydrograph,
    state: &SurfaceState,
    mesh: &ZoneMesh,
    config: &SurfaceConfig,
) -> Result<Vec<f64>, SurfaceError> {
    let mut out = vec![0.0; mesh.zone_count()];
    if config.waterfront.is_empty() {
        return Ok(out);
    }
    hydrograph.level_at(state.t)?;
    for w in &config.waterfront {
        let sea = hydrograph.level_at((state.t - w.delay).max(hydrograph.start()))?;
        let h = state.level[w.zone];
        let q = weir_discharge(sea, h, config.flood_threshold, w.length, config.weir_coefficient);
        if q == 0.0 {
            continue;
        }
        let table = &mesh.zones[w.zone].level_volume;
        let v = state.volume[w.zone];
        let dv = if q > 0.0 {
            (q * config.dt).min(table.volume_extrapolated(sea) - v).max(0.0)
        } else {
            let floor = table.volume_extrapolated(sea.max(config.flood_threshold));
            -(-q * config.dt).min(config.limiter_fraction * v).min((v - floor).max(0.0))
        };
        out[w.zone] += dv;
    }
    Ok(out)
}

/// Converts per-zone surcharge rates (m/s of level change, negative for
/// sinks) into requested volumes for one step. Sinks larger than the stored
/// water are clipped when the step applies them.
pub fn apply_surcharge_rates(
    state: &SurfaceState,
    mesh: &ZoneMesh,
    rates: &[f64],
    config: &SurfaceConfig,
) -> Result<Vec<f64>, SurfaceError> {
    check_len("surcharge rates", rates.len(), mesh)?;
    Ok(mesh
        .zones
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let rate = rates[k];
            if rate == 0.0 {
                return 0.0;
            }
            let area = match config.surcharge_area {
                SurchargeArea::PlanWhenDry if state.volume[k] > 0.0 => z.level_volume.wetted_area(state.level[k]),
                _ => z.plan_area,
            };
            rate * area * config.dt
        })
        .collect())
}

/// Per-cell water depth `max(0, zone level - cell elevation)`.
pub fn depth_raster(state: &SurfaceState, mesh: &ZoneMesh, dtm: &DtmRaster) -> DtmRaster {
    let mut out = dtm.filled_like(dtm.nodata);
    for (i, d) in out.elevation.iter_mut().enumerate() {
        if let Some(k) = mesh.label(i) {
            *d = if state.volume[k] > 0.0 {
                (state.level[k] - dtm.elevation[i]).max(0.0)
            } else {
                0.0
            };
        }
    }
    out
}

#[cfg(test)]
mod tests;
