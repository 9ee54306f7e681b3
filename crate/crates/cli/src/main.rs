//! `izflood`: preprocess terrain, run scenarios, serve the subsurface model
//! and render depth frames.
//!
//! Exit codes: 0 ok, 2 input error, 3 numerical failure, 4 peer or protocol
//! failure.

use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use izflood::izmesh::{delineate_zones, mesh_stats, MeshOptions};
use izflood::render::render_run;
use izflood::scenario::{CouplingMode, Scenario, ScenarioConfig, SubsurfaceServer};
use izflood::terrain::read_ascii_grid;
use izflood::Error;

#[derive(Parser)]
#[command(name = "izflood", version, about = "Coupled surface and subsurface urban flood simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Delineate impact zones from a DTM and write the mesh file.
    Preprocess(PreprocessArgs),
    /// Run a scenario.
    Run(RunArgs),
    /// Serve the subsurface model to one remote surface run.
    Serve(ServeArgs),
    /// Render the depth frames of a run directory as PPM images.
    Render(RenderArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// DTM in ESRI ASCII grid format. Defaults to the scenario's terrain.
    dtm: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh file to write.
    #[arg(long, default_value = "mesh.json")]
    out: PathBuf,
    /// Level-volume table extent above each zone's spill elevation, m.
    #[arg(long)]
    headroom: Option<f64>,
    /// Merge zones shallower than this into their spill neighbor, m.
    #[arg(long)]
    merge_epsilon: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `run.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// End time in seconds, overriding `run.end_time`.
    #[arg(long)]
    until: Option<f64>,
    #[arg(long)]
    output_interval: Option<f64>,
    /// Couple with a subsurface server at host:port.
    #[arg(long)]
    connect: Option<String>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
    /// host:port to listen on, overriding `coupling.listen`.
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Run output directory. Defaults to the scenario's output directory.
    run_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Image directory. Defaults to the run's frames directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Preprocess(a) => preprocess(a),
        Command::Run(a) => run(a),
        Command::Serve(a) => serve(a),
        Command::Render(a) => render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn preprocess(a: PreprocessArgs) -> Result<(), Error> {
    let cfg = a.config.as_deref().map(ScenarioConfig::load).transpose()?;
    let dtm = match (&a.dtm, &cfg) {
        (Some(p), _) => read_ascii_grid(p)?,
        (None, Some(c)) => c.load_terrain()?,
        (None, None) => return Err(Error::Config("give a DTM path or --config".into())),
    };
    let mut options = cfg.as_ref().map_or_else(MeshOptions::default, |c| c.mesh.options());
    if let Some(h) = a.headroom {
        options.headroom = h;
    }
    if a.merge_epsilon.is_some() {
        options.merge_epsilon = a.merge_epsilon;
    }
    let mesh = delineate_zones(&dtm, &options)?;
    mesh.save(&a.out)?;
    print!("{}", mesh_stats(&mesh));
    println!("mesh: {}", a.out.display());
    Ok(())
}

fn run(a: RunArgs) -> Result<(), Error> {
    let mut cfg = ScenarioConfig::load(&a.config)?;
    if let Some(out) = a.out {
        cfg.run.output_dir = out;
    }
    if let Some(t) = a.until {
        cfg.run.end_time = t;
    }
    if a.output_interval.is_some() {
        cfg.run.output_interval = a.output_interval;
    }
    if let Some(endpoint) = a.connect {
        cfg.coupling.mode = CouplingMode::Connect;
        cfg.coupling.endpoint = Some(endpoint);
    }
    let out = cfg.run.output_dir.clone();
    let summary = Scenario::prepare(cfg)?.run()?;
    println!(
        "{} intervals, {} surface steps, t = {} s; outputs in {}",
        summary.intervals,
        summary.surface_steps,
        summary.end_time,
        out.display()
    );
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), Error> {
    let mut cfg = ScenarioConfig::load(&a.config)?;
    if let Some(out) = a.out {
        cfg.run.output_dir = out;
    }
    let addr = a
        .listen
        .or_else(|| cfg.coupling.listen.clone())
        .ok_or_else(|| Error::Config("give --listen or `coupling.listen`".into()))?;
    let server = SubsurfaceServer::prepare(cfg)?;
    let listener = TcpListener::bind(&addr).map_err(|e| Error::io(Path::new(&addr), e))?;
    let local = listener.local_addr().map_err(|e| Error::io(Path::new(&addr), e))?;
    println!("listening on {local}");
    let _ = std::io::stdout().flush();
    let served = server.serve(listener)?;
    println!("served {served} exchanges");
    Ok(())
}

fn render(a: RenderArgs) -> Result<(), Error> {
    let dir = match (a.run_dir, a.config) {
        (Some(d), _) => d,
        (None, Some(c)) => ScenarioConfig::load(&c)?.run.output_dir,
        (None, None) => return Err(Error::Config("give a run directory or --config".into())),
    };
    let images = render_run(&dir, a.out.as_deref())?;
    println!("{} images", images.len());
    Ok(())
}
