//! Incremental truncated Euclidean distance transform over a sparse,
//! VDB-style voxel tree.

pub mod bench;
pub mod coord;
pub mod edt;
pub mod error;
pub mod grid;
pub mod oracle;
pub mod planner;
pub mod queue;
pub mod scenario;

pub use coord::{adj26, sqdist, Coord};
pub use edt::{CellRecord, DistanceQuery, EdtField, Mode, TransformMetrics, NOT_RAISE};
pub use error::{EdtError, GridError, OracleError, PlanError, ScenarioError};
pub use grid::{Accessor, GridStats, SparseGrid, TreeConfig};
pub use oracle::{brute_force_edt, compare, CompareReport, DenseField, Region};
pub use queue::WaveQueue;
pub use scenario::{
    generate_scenario, load_obstacle_map, load_scenario, save_scenario, Event, GeneratorSpec, Layout, Scenario,
    ScenarioHeader, SliceFormat, SplitMix64,
};
pub use bench::{run_ablation, run_scenario, verify_scenario, Runner, VerifyReport, AblationAxis, AblationRow, AblationSettings, FrameRow, RunResult};
pub use planner::{plan_path, PathQuery, PlannedPath};

/// Planner types in double precision.
pub type PathQuery64 = PathQuery<f64>;
pub type PlannedPath64 = PlannedPath<f64>;
/// Planner types in single precision.
pub type PathQuery32 = PathQuery<f32>;
pub type PlannedPath32 = PlannedPath<f32>;
