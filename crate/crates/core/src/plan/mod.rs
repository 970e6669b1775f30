//! Decision layer on top of the coupled flow: where to build coupling
//! devices, how storage shaves peaks, and what that means for grid limits.

mod flex;
mod placement;

use thiserror::Error;

use crate::multigrid::MultiGridError;

pub use flex::{
    expansion_compare, flex_dispatch, DemandProfiles, DispatchResult, ExpansionReport, ModeReport,
    NodeStorage, StorageUnit,
};
pub use placement::{
    place_evolutionary, place_greedy, Candidate, Evaluation, PlacementProblem, PlacementResult,
    Snapshot, TraceStep,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid placement problem: {0}")]
    InvalidProblem(String),
    #[error("base snapshot `{snapshot}` is infeasible: {source}")]
    InfeasibleBase {
        snapshot: String,
        source: MultiGridError,
    },
    #[error("invalid storage: {0}")]
    InvalidStorage(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error(transparent)]
    Flow(#[from] MultiGridError),
}

impl PlanError {
    pub fn code(&self) -> &'static str {
        match self {
            PlanError::InvalidProblem(_) => "InvalidProblem",
            PlanError::InfeasibleBase { .. } => "InfeasibleBase",
            PlanError::InvalidStorage(_) => "InvalidStorage",
            PlanError::InvalidProfile(_) => "InvalidProfile",
            PlanError::UnknownNode(_) => "UnknownNode",
            PlanError::Flow(e) => e.code(),
        }
    }
}
