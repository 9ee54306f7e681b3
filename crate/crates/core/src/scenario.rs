//! Scenario files and the run driver.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! [terrain]
//! dtm = "dtm.asc"            # or an inline [terrain.synthetic] table
//!
//! [mesh]
//! path = "mesh.json"         # omit to delineate at startup
//! headroom = 10.0
//! merge_epsilon = 0.05
//!
//! [hydrograph]
//! path = "sea.csv"           # or points = [[0.0, 1.0], [3600.0, 1.8]]
//!
//! [surface]
//! dt = 10.0
//! flood_threshold = 1.30
//! waterfront = "auto"        # or [{ zone = 0, length = 250.0, delay = 0.0 }]
//!
//! [subsurface]               # needed for in_process coupling and serving
//! storage = 1e-7
//! permeability = 1e-8
//! layers = 10
//!
//! [coupling]
//! mode = "in_process"        # off | in_process | connect
//! endpoint = "127.0.0.1:7070"
//! interval = 60.0
//!
//! [run]
//! end_time = 7200.0
//! output_interval = 600.0
//! output_dir = "out"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::fs::{self, File};
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::coupling::{
    run_coupled, serve_on, CouplingSchedule, Exchange, LocalPeer, RemotePeer, RunSummary, SubsurfacePeer, SubsurfaceSide,
    SurfaceModel,
};
use crate::izmesh::{delineate_zones, MeshOptions, ZoneMesh};
use crate::subsurface::{h_filtr_field, StepReport, SubsurfaceConfig, SubsurfaceGrid, NO_COLUMN};
use crate::surface::{
    depth_raster, DischargeLaw, Hydrograph, SurchargeArea, SurfaceConfig, SurfaceState, WaterfrontSegment,
};
use crate::terrain::{read_ascii_grid, save_ascii_grid, synth_terrain, DtmRaster, TerrainSpec};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub terrain: TerrainSource,
    #[serde(default)]
    pub mesh: MeshSection,
    pub hydrograph: HydrographSource,
    #[serde(default)]
    pub surface: SurfaceSection,
    #[serde(default)]
    pub subsurface: Option<SubsurfaceConfig>,
    #[serde(default)]
    pub coupling: CouplingSection,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtm: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<TerrainSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub headroom: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merge_epsilon: Option<f64>,
}

impl Default for MeshSection {
    fn default() -> Self {
        let d = MeshOptions::default();
        MeshSection {
            path: None,
            headroom: d.headroom,
            merge_epsilon: d.merge_epsilon,
        }
    }
}

impl MeshSection {
    pub fn options(&self) -> MeshOptions {
        MeshOptions {
            headroom: self.headroom,
            merge_epsilon: self.merge_epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydrographSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WaterfrontSpec {
    /// Every zone touching the grid border or nodata, with its exposed length.
    Auto(Auto),
    Segments(Vec<WaterfrontSegment>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceSection {
    pub dt: f64,
    pub law: DischargeLaw,
    pub weir_coefficient: f64,
    pub manning_n: f64,
    pub limiter_fraction: f64,
    pub flood_threshold: f64,
    pub surcharge_area: SurchargeArea,
    pub waterfront: WaterfrontSpec,
    /// Delay applied to every segment found by `waterfront = "auto"`.
    pub waterfront_delay: f64,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        let d = SurfaceConfig::default();
        SurfaceSection {
            dt: d.dt,
            law: d.law,
            weir_coefficient: d.weir_coefficient,
            manning_n: d.manning_n,
            limiter_fraction: d.limiter_fraction,
            flood_threshold: d.flood_threshold,
            surcharge_area: d.surcharge_area,
            waterfront: WaterfrontSpec::Auto(Auto::Auto),
            waterfront_delay: 0.0,
        }
    }
}

impl SurfaceSection {
    pub fn config(&self, mesh: &ZoneMesh) -> SurfaceConfig {
        let waterfront = match &self.waterfront {
            WaterfrontSpec::Segments(s) => s.clone(),
            WaterfrontSpec::Auto(_) => mesh
                .waterfront_lengths()
                .into_iter()
                .enumerate()
                .filter(|(_, l)| *l > 0.0)
                .map(|(zone, length)| WaterfrontSegment {
                    zone,
                    length,
                    delay: self.waterfront_delay,
                })
                .collect(),
        };
        SurfaceConfig {
            dt: self.dt,
            law: self.law,
            weir_coefficient: self.weir_coefficient,
            manning_n: self.manning_n,
            limiter_fraction: self.limiter_fraction,
            waterfront,
            flood_threshold: self.flood_threshold,
            surcharge_area: self.surcharge_area,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    #[default]
    Off,
    InProcess,
    Connect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSection {
    pub mode: CouplingMode,
    /// Peer address for `connect`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Address the subsurface server listens on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
    /// Coupling interval, seconds.
    pub interval: f64,
    /// Socket timeout, seconds.
    pub timeout: f64,
    /// Request surcharge depth fields from the subsurface.
    pub h_filtr: bool,
}

impl Default for CouplingSection {
    fn default() -> Self {
        CouplingSection {
            mode: CouplingMode::Off,
            endpoint: None,
            listen: None,
            interval: 60.0,
            timeout: 60.0,
            h_filtr: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Defaults to the hydrograph start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    pub end_time: f64,
    /// Defaults to the coupling interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_interval: Option<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a scenario file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.terrain.dtm.as_mut().map(fix);
        self.mesh.path.as_mut().map(fix);
        self.hydrograph.path.as_mut().map(fix);
        fix(&mut self.run.output_dir);
    }

    pub fn load_terrain(&self) -> Result<DtmRaster, Error> {
        match (&self.terrain.dtm, &self.terrain.synthetic) {
            (Some(p), None) => read_ascii_grid(p),
            (None, Some(spec)) => Ok(synth_terrain(spec)?),
            _ => Err(Error::Config("terrain needs exactly one of `dtm` or `synthetic`".into())),
        }
    }

    /// Loads the mesh file or delineates one, and checks it fits `dtm`.
    pub fn load_mesh(&self, dtm: &DtmRaster) -> Result<ZoneMesh, Error> {
        let mesh = match &self.mesh.path {
            Some(p) => ZoneMesh::load(p)?,
            None => delineate_zones(dtm, &self.mesh.options())?,
        };
        mesh.check_against(dtm)?;
        Ok(mesh)
    }

    pub fn load_hydrograph(&self) -> Result<Hydrograph, Error> {
        match (&self.hydrograph.path, &self.hydrograph.points) {
            (Some(p), None) => Hydrograph::load(p),
            (None, Some(points)) => Ok(Hydrograph::new(points.clone())?),
            _ => Err(Error::Config("hydrograph needs exactly one of `path` or `points`".into())),
        }
    }
}

/// A fully validated scenario, ready to run. Nothing has been written yet.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub dtm: DtmRaster,
    pub surface: SurfaceModel,
    pub schedule: CouplingSchedule,
    pub output_interval: f64,
    /// Subsurface grid geometry for h_filtr rasters, when configured.
    pub grid: Option<SubsurfaceGrid>,
    pub side: Option<SubsurfaceSide>,
}

impl Scenario {
    /// Loads every input and checks every setting.
    pub fn prepare(config: ScenarioConfig) -> Result<Scenario, Error> {
        let dtm = config.load_terrain()?;
        let mesh = config.load_mesh(&dtm)?;
        let hydrograph = config.load_hydrograph()?;
        let surface_config = config.surface.config(&mesh);
        surface_config.validate(&mesh)?;
        if !(config.surface.flood_threshold >= 0.0) {
            return Err(Error::Config(format!(
                "flood threshold must be >= 0, got {}",
                config.surface.flood_threshold
            )));
        }

        let coupling = &config.coupling;
        let sub = config.subsurface.as_ref();
        match coupling.mode {
            CouplingMode::InProcess if sub.is_none() => {
                return Err(Error::Config("in_process coupling needs a [subsurface] section".into()))
            }
            CouplingMode::Connect if coupling.endpoint.is_none() => {
                return Err(Error::Config("connect coupling needs `coupling.endpoint`".into()))
            }
            _ => {}
        }
        if !(coupling.timeout > 0.0 && coupling.timeout.is_finite()) {
            return Err(Error::Config(format!("timeout must be positive, got {}", coupling.timeout)));
        }
        let start = config.run.start.unwrap_or(hydrograph.start());
        let schedule = CouplingSchedule {
            dt_surface: surface_config.dt,
            dt_subsurface: sub.map_or(coupling.interval, |s| s.dt),
            interval: coupling.interval,
            start,
            end: config.run.end_time,
        };
        schedule.validate()?;
        if start < hydrograph.start() || schedule.end > hydrograph.end() {
            return Err(Error::Config(format!(
                "run [{start}, {}] is outside the hydrograph [{}, {}]",
                schedule.end,
                hydrograph.start(),
                hydrograph.end()
            )));
        }
        let output_interval = config.run.output_interval.unwrap_or(schedule.interval);
        let ratio = output_interval / schedule.interval;
        if !(ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9) {
            return Err(Error::Config(format!(
                "output interval {output_interval} is not a multiple of the coupling interval {}",
                schedule.interval
            )));
        }

        let (grid, side) = match sub {
            Some(s) => {
                let grid = s.build(&dtm)?;
                let side = if coupling.mode == CouplingMode::InProcess {
                    let mut side = SubsurfaceSide::new(&dtm, mesh.clone(), s.clone())?;
                    side.set_schedule(&schedule)?;
                    Some(side)
                } else {
                    None
                };
                (Some(grid), side)
            }
            None => (None, None),
        };
        let state = SurfaceState::dry(&mesh, start);
        Ok(Scenario {
            surface: SurfaceModel {
                mesh,
                config: surface_config,
                hydrograph,
                state,
            },
            dtm,
            schedule,
            output_interval,
            grid,
            side,
            config,
        })
    }

    fn wants_h_filtr(&self) -> bool {
        self.config.coupling.h_filtr && self.config.coupling.mode != CouplingMode::Off && self.grid.is_some()
    }

    /// Runs the scenario and writes its outputs. On failure the outputs
    /// written so far are kept and the manifest records the error.
    pub fn run(mut self) -> Result<RunSummary, Error> {
        let started = Instant::now();
        let mut out = Outputs::create(&self.config.run.output_dir)?;
        save_ascii_grid(&out.dir.join("terrain.asc"), &self.dtm)?;
        let want_h_filtr = self.wants_h_filtr();
        let every = (self.output_interval / self.schedule.interval).round() as usize;
        let initial_h_filtr = self.grid.as_ref().map(h_filtr_field);

        let mut local = self.side.take().map(LocalPeer::new);
        let mut remote = None;
        let result = (|| -> Result<RunSummary, Error> {
            let peer: Option<&mut dyn SubsurfacePeer> = match self.config.coupling.mode {
                CouplingMode::Off => None,
                CouplingMode::InProcess => local.as_mut().map(|p| p as &mut dyn SubsurfacePeer),
                CouplingMode::Connect => {
                    let addr = self.config.coupling.endpoint.as_deref().unwrap_or_default();
                    let timeout = Duration::from_secs_f64(self.config.coupling.timeout);
                    remote = Some(RemotePeer::connect(addr, timeout)?);
                    remote.as_mut().map(|p| p as &mut dyn SubsurfacePeer)
                }
            };
            let (dtm, grid) = (&self.dtm, self.grid.as_ref());
            let mesh = &self.surface.mesh.clone();
            let mut observer = |x: &Exchange| -> Result<(), Error> {
                if !x.interval.is_multiple_of(every) {
                    return Ok(());
                }
                let rates = x.result.map(|r| r.rates.as_slice());
                let h_filtr = match x.result {
                    Some(r) => r.h_filtr.as_deref(),
                    None if want_h_filtr => initial_h_filtr.as_deref(),
                    None => None,
                };
                out.frame(x.t, x.state, mesh, dtm, rates, grid.zip(h_filtr))
            };
            run_coupled(&mut self.surface, peer, &self.schedule, want_h_filtr, &mut observer)
        })();

        let log = local.as_ref().map(|p| p.side.log.as_slice());
        let finished = out.finish(&self, log, &result, started.elapsed().as_secs_f64());
        let summary = result?;
        finished?;
        Ok(summary)
    }
}

#[derive(Serialize)]
struct ZoneRow {
    t: f64,
    zone: usize,
    level: f64,
    depth: f64,
    volume: f64,
    discharge: f64,
    velocity: f64,
    surcharge_rate: f64,
}

#[derive(Serialize)]
struct BalanceRow {
    t: f64,
    total_volume: f64,
    initial_volume: f64,
    inflow: f64,
    surcharge: f64,
    clip: f64,
    relative_error: f64,
}

struct Outputs {
    dir: PathBuf,
    zones: csv::Writer<File>,
    balance: csv::Writer<File>,
    frames: usize,
    written: Vec<String>,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let kind = match e.kind() {
        csv::ErrorKind::Io(io) => io.kind(),
        _ => std::io::ErrorKind::Other,
    };
    Error::io(path, std::io::Error::new(kind, e.to_string()))
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self, Error> {
        fs::create_dir_all(dir.join("frames")).map_err(|e| Error::io(dir, e))?;
        let open = |name: &str| {
            let p = dir.join(name);
            csv::Writer::from_path(&p).map_err(|e| csv_error(&p, e))
        };
        Ok(Outputs {
            dir: dir.to_path_buf(),
            zones: open("zones.csv")?,
            balance: open("mass_balance.csv")?,
            frames: 0,
            written: vec!["terrain.asc".into(), "zones.csv".into(), "mass_balance.csv".into()],
        })
    }

    fn frame(
        &mut self,
        t: f64,
        state: &SurfaceState,
        mesh: &ZoneMesh,
        dtm: &DtmRaster,
        rates: Option<&[f64]>,
        h_filtr: Option<(&SubsurfaceGrid, &[f64])>,
    ) -> Result<(), Error> {
        let zp = self.dir.join("zones.csv");
        for k in 0..mesh.zone_count() {
            self.zones
                .serialize(ZoneRow {
                    t,
                    zone: k,
                    level: state.level[k],
                    depth: state.depth(mesh, k),
                    volume: state.volume[k],
                    discharge: state.discharge[k],
                    velocity: state.velocity[k],
                    surcharge_rate: rates.map_or(0.0, |r| r[k]),
                })
                .map_err(|e| csv_error(&zp, e))?;
        }
        self.zones.flush().map_err(|e| Error::io(&zp, e))?;
        let bp = self.dir.join("mass_balance.csv");
        self.balance
            .serialize(BalanceRow {
                t,
                total_volume: state.total_volume(),
                initial_volume: state.initial_volume,
                inflow: state.inflow_ledger,
                surcharge: state.surcharge_ledger,
                clip: state.clip_ledger,
                relative_error: state.mass_balance_error(),
            })
            .map_err(|e| csv_error(&bp, e))?;
        self.balance.flush().map_err(|e| Error::io(&bp, e))?;

        let depth = depth_raster(state, mesh, dtm);
        let name = format!("frames/depth_{:05}.asc", self.frames);
        save_ascii_grid(&self.dir.join(&name), &depth)?;
        self.written.push(name);
        if let Some((grid, hf)) = h_filtr {
            let mut hf_cells = dtm.filled_like(dtm.nodata);
            let mut total = depth.clone();
            for (i, &col) in grid.column_of_cell.iter().enumerate() {
                if col != NO_COLUMN {
                    hf_cells.elevation[i] = hf[col as usize];
                    total.elevation[i] += hf[col as usize];
                }
            }
            for (prefix, raster) in [("hfiltr", &hf_cells), ("htotal", &total)] {
                let name = format!("frames/{prefix}_{:05}.asc", self.frames);
                save_ascii_grid(&self.dir.join(&name), raster)?;
                self.written.push(name);
            }
        }
        self.frames += 1;
        Ok(())
    }

    fn finish(
        &mut self,
        sc: &Scenario,
        log: Option<&[StepReport]>,
        result: &Result<RunSummary, Error>,
        wall_time: f64,
    ) -> Result<(), Error> {
        if let Some(log) = log {
            write_solver_log(&self.dir.join("solver_log.csv"), log)?;
            self.written.push("solver_log.csv".into());
        }
        let status = match result {
            Ok(summary) => json!({ "status": "ok", "summary": summary }),
            Err(e) => json!({
                "status": "failed",
                "error": e.to_string(),
                "exit_code": e.exit_code(),
            }),
        };
        let manifest = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "config": sc.config,
            "inputs": input_digests(&sc.config),
            "mesh_fingerprint": format!("{:012x}", sc.surface.mesh.fingerprint()),
            "zones": sc.surface.mesh.zone_count(),
            "subsurface_columns": sc.grid.as_ref().map(|g| g.columns()),
            "schedule": sc.schedule,
            "output_interval": sc.output_interval,
            "frames": self.frames,
            "final_mass_balance_error": sc.surface.state.mass_balance_error(),
            "result": status,
            "outputs": self.written,
            "wall_time_s": wall_time,
        });
        write_json(&self.dir.join("manifest.json"), &manifest)
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}

pub fn write_solver_log(path: &Path, log: &[StepReport]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in log {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn input_digests(cfg: &ScenarioConfig) -> serde_json::Value {
    let digest = |p: &Option<PathBuf>| {
        p.as_ref().map(|p| match fs::read(p) {
            Ok(bytes) => json!({ "path": p, "sha256": hex(&Sha256::digest(&bytes)) }),
            Err(e) => json!({ "path": p, "error": e.to_string() }),
        })
    };
    json!({
        "dtm": digest(&cfg.terrain.dtm),
        "mesh": digest(&cfg.mesh.path),
        "hydrograph": digest(&cfg.hydrograph.path),
    })
}

/// Validates `config` and runs it.
pub fn run_scenario(config: ScenarioConfig) -> Result<RunSummary, Error> {
    Scenario::prepare(config)?.run()
}

/// The subsurface side of a distributed scenario.
pub struct SubsurfaceServer {
    pub config: ScenarioConfig,
    pub side: SubsurfaceSide,
    pub timeout: Duration,
}

impl SubsurfaceServer {
    pub fn prepare(config: ScenarioConfig) -> Result<Self, Error> {
        let sub = config
            .subsurface
            .clone()
            .ok_or_else(|| Error::Config("serving needs a [subsurface] section".into()))?;
        if !(config.coupling.timeout > 0.0 && config.coupling.timeout.is_finite()) {
            return Err(Error::Config(format!("timeout must be positive, got {}", config.coupling.timeout)));
        }
        let dtm = config.load_terrain()?;
        let mesh = config.load_mesh(&dtm)?;
        let side = SubsurfaceSide::new(&dtm, mesh, sub)?;
        Ok(SubsurfaceServer {
            timeout: Duration::from_secs_f64(config.coupling.timeout),
            config,
            side,
        })
    }

    /// Serves one peer on `listener`, then writes the solver log and a
    /// manifest to the output directory, also after a failure.
    pub fn serve(mut self, listener: TcpListener) -> Result<usize, Error> {
        let started = Instant::now();
        let result = serve_on(listener, &mut self.side, self.timeout);
        let dir = &self.config.run.output_dir;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_solver_log(&dir.join("serve_solver_log.csv"), &self.side.log)?;
        let status = match &result {
            Ok(n) => json!({ "status": "ok", "exchanges": n }),
            Err(e) => json!({ "status": "failed", "error": e.to_string(), "exit_code": e.exit_code() }),
        };
        let manifest = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "role": "subsurface",
            "config": self.config,
            "inputs": input_digests(&self.config),
            "mesh_fingerprint": format!("{:012x}", self.side.mesh.fingerprint()),
            "columns": self.side.grid.columns(),
            "steps": self.side.log.len(),
            "result": status,
            "wall_time_s": started.elapsed().as_secs_f64(),
        });
        write_json(&dir.join("serve_manifest.json"), &manifest)?;
        result
    }
}
