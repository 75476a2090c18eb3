//! Multinomial logistic transition models with automatically discovered curve
//! transforms.
//!
//! The library fits one model per start status over a panel of observed
//! transitions. Power scores for each reachable end status are linear in
//! intercepts, flag betas, and the outputs of logistic or gaussian curves
//! applied to real regressors. Curves are added greedily, one at a time, and
//! each addition must pay for its parameters under an information criterion
//! (AIC or BIC) before it is kept.
//!
//! Model selection is driven by a subsampled comparator: two candidate
//! parameter points are compared on a growing prefix of the data until their
//! mean objective difference is statistically significant, so most decisions
//! never touch the full dataset. Fitted models can be projected forward with a
//! transition-matrix recursion, path simulation, or a hybrid scheme that
//! simulates only the rare delinquency branch.

pub mod curves;
pub mod data;
pub mod fitter;
pub mod likelihood;
pub mod model;
pub mod optimizer;
pub mod projection;
pub mod serial;

pub use curves::CurveError;
pub use data::{
    ColumnRole, ColumnSchema, DataError, RegressorDistribution, SyntheticSample, SyntheticSpec,
};
pub use fitter::{CandidateContext, CandidateResult, FitError};
pub use likelihood::{LikelihoodError, ModelGradient, PowerScores};
pub use model::{
    Criterion, CurveFamily, CurveSpec, FitConfig, FitReport, ItemModel, ModelError,
    ObservationGrid, RegressorKind, RegressorMeta, ReportEntry, StatusSpace, StopReason, Violation,
};
pub use optimizer::{
    AdaptiveComparator, CompareOutcome, CompareResult, MinimizeOptions, Minimized, OptError,
    RowObjective, StopCause,
};
pub use projection::{
    HybridStates, HybridTrace, PathAllocation, ProjError, ProjectionResult, TransitionModel,
};
