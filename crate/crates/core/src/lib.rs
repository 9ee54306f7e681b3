//! Coupled surface and subsurface urban flood simulation.
//!
//! The overland model spreads flood volumes between Impact Zones (terrain
//! depressions with exact level-volume tables) using weir or Manning
//! discharge at a constant time step. The subsurface model treats the city's
//! drainage network as a porous medium and solves transient Darcy flow on a
//! structured grid below the terrain. The two exchange boundary data on the
//! land surface in lockstep, either in one process or across a socket.

pub mod coupling;
pub mod izmesh;
pub mod render;
pub mod scenario;
pub mod subsurface;
pub mod surface;
pub mod terrain;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Terrain(#[from] terrain::TerrainError),
    #[error(transparent)]
    Mesh(#[from] izmesh::MeshError),
    #[error(transparent)]
    Surface(#[from] surface::SurfaceError),
    #[error(transparent)]
    Subsurface(#[from] subsurface::SubsurfaceError),
    #[error(transparent)]
    Coupling(#[from] coupling::CouplingError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("render: {0}")]
    Render(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 input error, 3 numerical failure, 4 peer or
    /// protocol failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Terrain(_) | Error::Mesh(_) | Error::Config(_) | Error::Render(_) => 2,
            Error::Surface(e) => e.exit_code(),
            Error::Subsurface(e) => e.exit_code(),
            Error::Coupling(e) => e.exit_code(),
        }
    }
}
