use std::path::PathBuf;

use thiserror::Error;

use crate::coord::Coord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("invalid tree configuration: {0}")]
    Config(String),
    #[error("coordinate {0} is outside the packable domain")]
    Domain(Coord),
    #[error("invalid grid state: {0}")]
    State(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EdtError {
    #[error("invalid field configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("region of {cells} cells exceeds the oracle limit of {limit}")]
    RegionTooLarge { cells: u64, limit: u64 },
    #[error("region dimensions must be positive, got {0:?}")]
    EmptyRegion([u32; 3]),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("event {index} at {coord} lies outside the scenario region")]
    OutOfRegion { index: usize, coord: Coord },
    #[error("invalid generator settings: {0}")]
    Spec(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Edt(#[from] EdtError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("{0} is not a free cell inside the search region")]
    BlockedEndpoint(Coord),
    #[error("alpha must lie in [0, 1], got {0}")]
    Alpha(String),
    #[error("turn bound must be positive, got {0}")]
    Theta(String),
    #[error("field has pending changes; run the transform first")]
    NotQuiescent,
    #[error("no path between the endpoints")]
    NoPath,
    #[error(transparent)]
    Grid(#[from] GridError),
}
