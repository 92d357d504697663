//! Error types shared across the estimation pipeline.

use thiserror::Error;

/// Errors produced by solvers, filters, moment construction, samplers and tests.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// More stable generalized eigenvalues than predetermined states.
    #[error("indeterminate model: {stable} stable roots for {predetermined} predetermined states")]
    Indeterminate { stable: usize, predetermined: usize },

    /// Fewer stable generalized eigenvalues than predetermined states.
    #[error("no stable solution: {stable} stable roots for {predetermined} predetermined states")]
    NoStableSolution { stable: usize, predetermined: usize },

    /// Pencil decomposition or a linear solve was ill-conditioned beyond `cond_max`.
    #[error("numerical failure in {context}: {detail}")]
    NumericalFailure { context: &'static str, detail: String },

    /// Riccati iteration did not reach its fixed point.
    #[error("Riccati iteration did not converge within {iters} iterations (last step {last_step:e})")]
    RiccatiDivergence { iters: usize, last_step: f64 },

    /// A finite-difference perturbation left the solvable region.
    #[error("model solve failed at perturbation of coordinate {coord}: {source}")]
    SolveFailedAtPerturbation {
        coord: usize,
        #[source]
        source: Box<Error>,
    },

    /// `F Γ − G` is rank deficient and the caller did not allow a pseudo-inverse.
    #[error("F*Gamma - G is rank deficient (rank {rank} of {dim}) and pseudo-inverse was not allowed")]
    SingularMapUnflagged { rank: usize, dim: usize },

    /// Fixture calibration violates the validity region of the friction example.
    #[error("calibration outside valid region for {economy}: {detail}")]
    CalibrationOutsideValidRegion { economy: &'static str, detail: String },

    /// Covariance lost positive semi-definiteness beyond the Joseph-form guard.
    #[error("covariance lost positive semi-definiteness at t={t} (min eigenvalue {min_eig:e})")]
    NonPSDCovariance { t: usize, min_eig: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// Survey series is degenerate in a way the restriction cannot use.
    #[error("degenerate survey series: {0}")]
    DegenerateSurvey(String),

    /// The necessary (alpha) moment block is rank deficient.
    #[error("alpha moment block rank deficient: rank {rank} of {rows} rows")]
    AlphaBlockRankDeficient { rank: usize, rows: usize },

    /// A criterion evaluation could not solve the model at this draw.
    #[error("model solve failed during criterion evaluation: {0}")]
    SolveFailed(Box<Error>),

    /// Every proposal was rejected; the proposal scale is pathological.
    #[error("all {0} proposals rejected; proposal scaling is pathological")]
    AllProposalsRejected(usize),

    #[error("criterion not finite at the initial point")]
    NonFiniteCriterion,

    /// All draws exceed the requested cutoff.
    #[error("set estimate empty at cutoff {cutoff}; smallest feasible cutoff is {smallest_feasible}")]
    EmptySetAtCutoff { cutoff: f64, smallest_feasible: f64 },

    #[error("moment covariance matrix is singular (rcond {rcond:e})")]
    SingularMomentCovariance { rcond: f64 },

    /// The weight program constraint set is empty.
    #[error("quadratic program infeasible: {detail}")]
    QpInfeasible { detail: String },

    #[error("variance estimate singular on tested coordinates: {0:?}")]
    SingularVarianceOnTestedCoords(Vec<usize>),

    /// All bootstrap replicates coincide; the statistic carries no sampling variation.
    #[error("degenerate bootstrap distribution: all {0} replicates equal")]
    DegenerateBootstrapDistribution(usize),

    #[error("parameter {index} = {value} outside bounds [{lo}, {hi}]")]
    ParameterOutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
