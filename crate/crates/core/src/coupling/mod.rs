//! Lockstep exchange between the surface and subsurface models.
//!
//! At every coupling time `T` the surface side sends its zone levels, the
//! subsurface side advances to `T + dt_c` with those levels held fixed and
//! answers with per-zone surcharge rates, and the surface side then advances
//! to `T + dt_c` using the rates as constant sources.

mod server;
pub mod wire;

use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::izmesh::ZoneMesh;
use crate::subsurface::{
    h_filtr_field, step_subsurface, surcharge_rates, StepReport, SubsurfaceConfig, SubsurfaceGrid,
    SurchargeMode, SurfaceBC,
};
use crate::surface::{
    advance, apply_surcharge_rates, boundary_inflow, ExternalSources, Hydrograph, SurfaceConfig, SurfaceState,
};
use crate::terrain::DtmRaster;

pub use server::{serve_on, serve_subsurface};
pub use wire::{decode_message, encode_message, Message, MessageKind, WireError, PROTOCOL_VERSION};

/// Codes carried in the first payload value of an ERROR message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    GeometryMismatch = 1,
    Schedule = 2,
    Protocol = 3,
    Numerical = 4,
}

impl ErrorCode {
    pub fn from_f64(v: f64) -> Option<Self> {
        match v as i64 {
            1 => Some(ErrorCode::GeometryMismatch),
            2 => Some(ErrorCode::Schedule),
            3 => Some(ErrorCode::Protocol),
            4 => Some(ErrorCode::Numerical),
            _ => None,
        }
    }
}

impl std::fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ErrorCode::GeometryMismatch => "GEOMETRY_MISMATCH",
            ErrorCode::Schedule => "SCHEDULE",
            ErrorCode::Protocol => "PROTOCOL",
            ErrorCode::Numerical => "NUMERICAL",
        })
    }
}

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("wire: {0}")]
    Wire(#[from] WireError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("peer reported {}: {detail}", code.map_or("an unknown error".into(), |c| c.to_string()))]
    Remote { code: Option<ErrorCode>, detail: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CouplingError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CouplingError::Schedule(_) => 2,
            CouplingError::Remote {
                code: Some(ErrorCode::Numerical),
                ..
            } => 3,
            _ => 4,
        }
    }

    fn code(&self) -> ErrorCode {
        match self {
            CouplingError::GeometryMismatch(_) => ErrorCode::GeometryMismatch,
            CouplingError::Schedule(_) => ErrorCode::Schedule,
            _ => ErrorCode::Protocol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSchedule {
    pub dt_surface: f64,
    pub dt_subsurface: f64,
    /// Coupling interval, seconds.
    pub interval: f64,
    pub start: f64,
    pub end: f64,
}

/// `n` when `a` is `n` whole multiples of `b`, to rounding.
fn whole_multiple(a: f64, b: f64) -> Option<usize> {
    if !(a > 0.0 && b > 0.0) {
        return None;
    }
    let n = (a / b).round();
    (n >= 1.0 && (n * b - a).abs() <= 1e-9 * a).then_some(n as usize)
}

impl CouplingSchedule {
    pub fn validate(&self) -> Result<(), CouplingError> {
        let bad = |m: String| Err(CouplingError::Schedule(m));
        for (name, v) in [
            ("surface dt", self.dt_surface),
            ("subsurface dt", self.dt_subsurface),
            ("coupling interval", self.interval),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if whole_multiple(self.interval, self.dt_surface).is_none() {
            return bad(format!("interval {} is not a multiple of surface dt {}", self.interval, self.dt_surface));
        }
        if whole_multiple(self.interval, self.dt_subsurface).is_none() {
            return bad(format!(
                "interval {} is not a multiple of subsurface dt {}",
                self.interval, self.dt_subsurface
            ));
        }
        if !(self.end > self.start) || whole_multiple(self.end - self.start, self.interval).is_none() {
            return bad(format!(
                "run length {} is not a positive multiple of the interval {}",
                self.end - self.start,
                self.interval
            ));
        }
        Ok(())
    }

    pub fn intervals(&self) -> usize {
        whole_multiple(self.end - self.start, self.interval).unwrap_or(0)
    }

    pub fn surface_steps(&self) -> usize {
        whole_multiple(self.interval, self.dt_surface).unwrap_or(0)
    }

    pub fn subsurface_steps(&self) -> usize {
        whole_multiple(self.interval, self.dt_subsurface).unwrap_or(0)
    }

    /// Start time of interval `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.interval
    }
}

/// Geometry and schedule declared by each side at connection time.
#[derive(Debug, Clone, PartialEq)]
pub struct Handshake {
    pub zones: usize,
    pub columns: usize,
    pub fingerprint: u64,
    pub schedule: CouplingSchedule,
    pub want_h_filtr: bool,
}

impl Handshake {
    pub fn to_payload(&self) -> Vec<f64> {
        let s = &self.schedule;
        vec![
            self.zones as f64,
            self.columns as f64,
            self.fingerprint as f64,
            s.dt_surface,
            s.dt_subsurface,
            s.interval,
            s.start,
            s.end,
            if self.want_h_filtr { 1.0 } else { 0.0 },
        ]
    }

    pub fn from_payload(p: &[f64]) -> Result<Self, CouplingError> {
        if p.len() != 9 {
            return Err(CouplingError::Protocol(format!("HELLO carries {} values, expected 9", p.len())));
        }
        Ok(Handshake {
            zones: p[0] as usize,
            columns: p[1] as usize,
            fingerprint: p[2] as u64,
            schedule: CouplingSchedule {
                dt_surface: p[3],
                dt_subsurface: p[4],
                interval: p[5],
                start: p[6],
                end: p[7],
            },
            want_h_filtr: p[8] != 0.0,
        })
    }

    /// Checks a peer's declaration against ours. A column count of 0 means
    /// the side does not know it.
    pub fn check(&self, other: &Handshake) -> Result<(), CouplingError> {
        if self.zones != other.zones || self.fingerprint != other.fingerprint {
            return Err(CouplingError::GeometryMismatch(format!(
                "zones {} vs {}, mesh fingerprint {:012x} vs {:012x}",
                self.zones, other.zones, self.fingerprint, other.fingerprint
            )));
        }
        if self.columns != 0 && other.columns != 0 && self.columns != other.columns {
            return Err(CouplingError::GeometryMismatch(format!(
                "subsurface columns {} vs {}",
                self.columns, other.columns
            )));
        }
        if self.schedule != other.schedule {
            return Err(CouplingError::Schedule(format!("{:?} vs {:?}", self.schedule, other.schedule)));
        }
        Ok(())
    }
}

/// What the subsurface returns for one coupling interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsurfaceResult {
    /// Per-zone surcharge rate, m/s.
    pub rates: Vec<f64>,
    /// Per-column surcharge depth at the end of the interval, if requested.
    pub h_filtr: Option<Vec<f64>>,
}

/// The subsurface half of a coupled run.
pub trait SubsurfacePeer {
    fn handshake(&mut self, ours: &Handshake) -> Result<Handshake, crate::Error>;
    /// Advances from `t` by one coupling interval with the given zone levels.
    fn exchange(&mut self, t: f64, levels: &[f64]) -> Result<SubsurfaceResult, crate::Error>;
    fn halt(&mut self) -> Result<(), crate::Error>;
}

/// A peer that always answers with zero rates.
#[derive(Debug, Clone)]
pub struct ZeroPeer {
    zones: usize,
    columns: usize,
}

impl ZeroPeer {
    pub fn new(zones: usize, columns: usize) -> Self {
        ZeroPeer { zones, columns }
    }
}

impl SubsurfacePeer for ZeroPeer {
    fn handshake(&mut self, ours: &Handshake) -> Result<Handshake, crate::Error> {
        Ok(Handshake {
            zones: self.zones,
            columns: self.columns,
            ..ours.clone()
        })
    }

    fn exchange(&mut self, _t: f64, _levels: &[f64]) -> Result<SubsurfaceResult, crate::Error> {
        Ok(SubsurfaceResult {
            rates: vec![0.0; self.zones],
            h_filtr: None,
        })
    }

    fn halt(&mut self) -> Result<(), crate::Error> {
        Ok(())
    }
}

/// The subsurface model with everything needed to answer exchanges. Used
/// directly in process and behind the socket server.
#[derive(Debug, Clone)]
pub struct SubsurfaceSide {
    pub grid: SubsurfaceGrid,
    pub mesh: ZoneMesh,
    pub cell_z: Vec<f64>,
    pub config: SubsurfaceConfig,
    pub log: Vec<StepReport>,
    interval: f64,
    steps: usize,
}

impl SubsurfaceSide {
    pub fn new(dtm: &DtmRaster, mesh: ZoneMesh, config: SubsurfaceConfig) -> Result<Self, crate::Error> {
        mesh.check_against(dtm)?;
        let grid = config.build(dtm)?;
        Ok(SubsurfaceSide {
            grid,
            mesh,
            cell_z: dtm.elevation.clone(),
            config,
            log: Vec::new(),
            interval: 0.0,
            steps: 0,
        })
    }

    pub fn handshake(&self, want_h_filtr: bool, schedule: CouplingSchedule) -> Handshake {
        Handshake {
            zones: self.mesh.zone_count(),
            columns: self.grid.columns(),
            fingerprint: self.mesh.fingerprint(),
            schedule,
            want_h_filtr,
        }
    }

    /// Fixes the interval length and substep count for later exchanges.
    pub fn set_schedule(&mut self, schedule: &CouplingSchedule) -> Result<(), CouplingError> {
        schedule.validate()?;
        if (schedule.dt_subsurface - self.config.dt).abs() > 1e-12 * self.config.dt {
            return Err(CouplingError::Schedule(format!(
                "subsurface dt {} differs from the configured {}",
                schedule.dt_subsurface, self.config.dt
            )));
        }
        self.interval = schedule.interval;
        self.steps = schedule.subsurface_steps();
        Ok(())
    }

    /// Per-cell overland depth implied by zone levels.
    pub fn cell_depths(&self, levels: &[f64]) -> Vec<f64> {
        self.cell_z
            .iter()
            .enumerate()
            .map(|(i, &z)| match self.mesh.label(i) {
                Some(k) => (levels[k] - z).max(0.0),
                None => 0.0,
            })
            .collect()
    }

    pub fn advance(&mut self, levels: &[f64], want_h_filtr: bool) -> Result<SubsurfaceResult, crate::Error> {
        if levels.len() != self.mesh.zone_count() {
            return Err(CouplingError::Protocol(format!(
                "{} zone levels for {} zones",
                levels.len(),
                self.mesh.zone_count()
            ))
            .into());
        }
        if self.steps == 0 {
            return Err(CouplingError::Schedule("no schedule set".into()).into());
        }
        let bc = SurfaceBC::from_cell_depths(&self.grid, &self.cell_depths(levels), self.config.dry_mode)?;
        self.grid.take_surface_flux();
        let before = h_filtr_field(&self.grid);
        let dt = self.interval / self.steps as f64;
        for _ in 0..self.steps {
            let report = step_subsurface(&mut self.grid, &bc, dt)?;
            self.log.push(report);
        }
        let flux = self.grid.take_surface_flux();
        let after = h_filtr_field(&self.grid);
        let column_flux = match self.config.surcharge_mode {
            SurchargeMode::Flux => flux,
            SurchargeMode::HfiltrRate => {
                let area = self.grid.dx * self.grid.dx;
                before.iter().zip(&after).map(|(b, a)| (a - b) * area / self.interval).collect()
            }
        };
        let rates = surcharge_rates(&self.grid, &self.mesh, &column_flux).map_err(crate::Error::from)?;
        Ok(SubsurfaceResult {
            rates,
            h_filtr: want_h_filtr.then_some(after),
        })
    }
}

/// In-process subsurface peer.
pub struct LocalPeer {
    pub side: SubsurfaceSide,
    want_h_filtr: bool,
}

impl LocalPeer {
    pub fn new(side: SubsurfaceSide) -> Self {
        LocalPeer {
            side,
            want_h_filtr: false,
        }
    }
}

impl SubsurfacePeer for LocalPeer {
    fn handshake(&mut self, ours: &Handshake) -> Result<Handshake, crate::Error> {
        self.side.set_schedule(&ours.schedule)?;
        self.want_h_filtr = ours.want_h_filtr;
        Ok(self.side.handshake(ours.want_h_filtr, ours.schedule.clone()))
    }

    fn exchange(&mut self, _t: f64, levels: &[f64]) -> Result<SubsurfaceResult, crate::Error> {
        self.side.advance(levels, self.want_h_filtr)
    }

    fn halt(&mut self) -> Result<(), crate::Error> {
        Ok(())
    }
}

/// Subsurface peer in another process, reached over TCP.
pub struct RemotePeer {
    stream: TcpStream,
    send_seq: u64,
    recv_seq: Option<u64>,
    zones: usize,
    columns: usize,
    want_h_filtr: bool,
}

impl RemotePeer {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, CouplingError> {
        let io = |context: String| move |source| CouplingError::Io { context, source };
        let target = addr
            .to_socket_addrs()
            .map_err(io(format!("resolving {addr}")))?
            .next()
            .ok_or_else(|| CouplingError::Protocol(format!("{addr} resolves to nothing")))?;
        let stream = TcpStream::connect_timeout(&target, timeout).map_err(io(format!("connecting to {addr}")))?;
        stream.set_read_timeout(Some(timeout)).map_err(io("socket timeout".into()))?;
        stream.set_nodelay(true).map_err(io("socket option".into()))?;
        Ok(RemotePeer {
            stream,
            send_seq: 0,
            recv_seq: None,
            zones: 0,
            columns: 0,
            want_h_filtr: false,
        })
    }

    fn send(&mut self, kind: MessageKind, t: f64, payload: Vec<f64>) -> Result<(), CouplingError> {
        wire::write_message(&mut self.stream, &Message::new(kind, self.send_seq, t, payload))?;
        self.send_seq += 1;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, CouplingError> {
        let msg = wire::read_message(&mut self.stream)?;
        check_seq(&mut self.recv_seq, msg.seq)?;
        if msg.kind == MessageKind::Error {
            return Err(remote_error(&msg.payload));
        }
        Ok(msg)
    }
}

pub(crate) fn check_seq(last: &mut Option<u64>, seq: u64) -> Result<(), CouplingError> {
    let expected = last.map_or(0, |s| s + 1);
    if seq != expected {
        return Err(CouplingError::Protocol(format!("sequence {seq}, expected {expected}")));
    }
    *last = Some(seq);
    Ok(())
}

fn remote_error(payload: &[f64]) -> CouplingError {
    let code = payload.first().and_then(|&c| ErrorCode::from_f64(c));
    let detail = match payload.get(1..) {
        Some(rest) if !rest.is_empty() => format!("{rest:?}"),
        _ => "no detail".into(),
    };
    CouplingError::Remote { code, detail }
}

impl SubsurfacePeer for RemotePeer {
    fn handshake(&mut self, ours: &Handshake) -> Result<Handshake, crate::Error> {
        self.send(MessageKind::Hello, ours.schedule.start, ours.to_payload())?;
        let reply = self.recv()?;
        if reply.kind != MessageKind::Hello {
            return Err(CouplingError::Protocol(format!("expected HELLO, got {:?}", reply.kind)).into());
        }
        let theirs = Handshake::from_payload(&reply.payload)?;
        ours.check(&theirs)?;
        self.zones = theirs.zones;
        self.columns = theirs.columns;
        self.want_h_filtr = ours.want_h_filtr;
        Ok(theirs)
    }

    fn exchange(&mut self, t: f64, levels: &[f64]) -> Result<SubsurfaceResult, crate::Error> {
        self.send(MessageKind::SurfaceState, t, levels.to_vec())?;
        let reply = self.recv()?;
        if reply.kind != MessageKind::SubsurfaceResult {
            return Err(CouplingError::Protocol(format!("expected SUBSURFACE_RESULT, got {:?}", reply.kind)).into());
        }
        let expected = self.zones + if self.want_h_filtr { self.columns } else { 0 };
        if reply.payload.len() != expected {
            return Err(
                CouplingError::Protocol(format!("result carries {} values, expected {expected}", reply.payload.len())).into(),
            );
        }
        let mut rates = reply.payload;
        let h_filtr = self.want_h_filtr.then(|| rates.split_off(self.zones));
        Ok(SubsurfaceResult { rates, h_filtr })
    }

    fn halt(&mut self) -> Result<(), crate::Error> {
        self.send(MessageKind::Halt, 0.0, Vec::new())?;
        let reply = self.recv()?;
        if reply.kind != MessageKind::Halt {
            return Err(CouplingError::Protocol(format!("expected HALT, got {:?}", reply.kind)).into());
        }
        Ok(())
    }
}

/// The surface model and its forcing.
#[derive(Debug, Clone)]
pub struct SurfaceModel {
    pub mesh: ZoneMesh,
    pub config: SurfaceConfig,
    pub hydrograph: Hydrograph,
    pub state: SurfaceState,
}

impl SurfaceModel {
    /// Advances one surface step with constant surcharge `rates`.
    pub fn step(&mut self, rates: &[f64]) -> Result<(), crate::Error> {
        let boundary = boundary_inflow(&self.hydrograph, &self.state, &self.mesh, &self.config)?;
        let surcharge = apply_surcharge_rates(&self.state, &self.mesh, rates, &self.config)?;
        advance(&mut self.state, &self.mesh, &self.config, &ExternalSources { boundary, surcharge })?;
        Ok(())
    }
}

/// Snapshot handed to the observer after each coupling interval.
pub struct Exchange<'a> {
    pub interval: usize,
    pub t: f64,
    pub state: &'a SurfaceState,
    pub result: Option<&'a SubsurfaceResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub intervals: usize,
    pub surface_steps: usize,
    pub end_time: f64,
}

/// Runs the schedule. Without a peer the surface runs alone with zero
/// surcharge. The observer sees the initial state (interval 0, no result)
/// and the state after every interval.
pub fn run_coupled(
    surface: &mut SurfaceModel,
    mut peer: Option<&mut dyn SubsurfacePeer>,
    schedule: &CouplingSchedule,
    want_h_filtr: bool,
    observer: &mut dyn FnMut(&Exchange) -> Result<(), crate::Error>,
) -> Result<RunSummary, crate::Error> {
    schedule.validate()?;
    if (schedule.dt_surface - surface.config.dt).abs() > 1e-12 * surface.config.dt {
        return Err(CouplingError::Schedule(format!(
            "surface dt {} differs from the configured {}",
            schedule.dt_surface, surface.config.dt
        ))
        .into());
    }
    let zones = surface.mesh.zone_count();
    if let Some(p) = peer.as_deref_mut() {
        let ours = Handshake {
            zones,
            columns: 0,
            fingerprint: surface.mesh.fingerprint(),
            schedule: schedule.clone(),
            want_h_filtr,
        };
        let theirs = p.handshake(&ours)?;
        let ours = Handshake {
            columns: theirs.columns,
            ..ours
        };
        ours.check(&theirs)?;
    }
    observer(&Exchange {
        interval: 0,
        t: surface.state.t,
        state: &surface.state,
        result: None,
    })?;
    let zero = vec![0.0; zones];
    let steps = schedule.surface_steps();
    let mut total_steps = 0;
    let run = (|| -> Result<(), crate::Error> {
        for i in 0..schedule.intervals() {
            let t = schedule.time(i);
            let result = match peer.as_deref_mut() {
                Some(p) => {
                    let r = p.exchange(t, &surface.state.level)?;
                    if r.rates.len() != zones || r.rates.iter().any(|x| !x.is_finite()) {
                        return Err(CouplingError::Protocol("peer returned malformed rates".into()).into());
                    }
                    Some(r)
                }
                None => None,
            };
            let rates = result.as_ref().map_or(&zero, |r| &r.rates);
            for _ in 0..steps {
                surface.step(rates)?;
                total_steps += 1;
            }
            observer(&Exchange {
                interval: i + 1,
                t: surface.state.t,
                state: &surface.state,
                result: result.as_ref(),
            })?;
        }
        Ok(())
    })();
    if let Some(p) = peer {
        match run {
            Ok(()) => p.halt()?,
            Err(e) => {
                let _ = p.halt();
                return Err(e);
            }
        }
    }
    run?;
    Ok(RunSummary {
        intervals: schedule.intervals(),
        surface_steps: total_steps,
        end_time: surface.state.t,
    })
}

pub(crate) fn error_payload(err: &crate::Error) -> Vec<f64> {
    let code = match err {
        crate::Error::Coupling(c) => c.code(),
        crate::Error::Subsurface(_) | crate::Error::Surface(_) => ErrorCode::Numerical,
        _ => ErrorCode::Protocol,
    };
    vec![code as u8 as f64]
}
