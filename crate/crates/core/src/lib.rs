//! Design-space exploration for 3D heterogeneous networks-on-chip: design
//! representation and routing, synthetic traffic, analytical objectives,
//! Pareto bookkeeping with hypervolume, a learned state evaluator, and the
//! search algorithms that tie them together.

pub mod error;
pub mod experiments;
pub mod learner;
pub mod objectives;
pub mod pareto;
pub mod search;
pub mod topology;
pub mod traffic;

pub use error::{Error, Result};
pub use experiments::{
    AlgoId, CaseSummary, DegradationReport, ExperimentConfig, LayerRow, TrafficSource,
};
pub use learner::{EvalModel, FeatureVector, ForestParams, TrainingSet};
pub use objectives::{
    ContextConstants, DesignEvaluation, EnergyModel, EvalContext, ObjectiveId, ObjectiveSet,
    ObjectiveVector, PowerModel, ThermalModel,
};
pub use pareto::{ArchiveEntry, Bounds, ParetoArchive};
pub use search::{
    MosaSchedule, ProgressRecord, SearchContext, SearchReport, Snapshot, Trajectory,
    TrajectoryStep,
};
pub use topology::{CoreKind, Design, Link, Move, MoveKinds, Path, SystemConfig};
pub use traffic::{SyntheticSpec, TrafficProfile};
