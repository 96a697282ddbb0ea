use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
    #[error("epsilon must lie in (0, 1/2), got {0}")]
    Epsilon(f64),
    #[error("p must exceed epsilon (p = {p}, epsilon = {epsilon})")]
    PNotAboveEpsilon { p: f64, epsilon: f64 },
    #[error("p must be below 1 - epsilon (p = {p}, epsilon = {epsilon})")]
    PNotBelowOneMinusEpsilon { p: f64, epsilon: f64 },
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("log-likelihood steps are degenerate (delta_h = {delta_h}, delta_t = {delta_t})")]
    DegenerateSteps { delta_h: f64, delta_t: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("a winner has already been declared; no further coin can be selected")]
    AlreadyFinished,
    #[error("coin index {index} is out of range ({opened} coins opened)")]
    UnknownCoin { index: usize, opened: usize },
    #[error("round-robin pool size must be at least 1")]
    EmptyPool,
    #[error("unknown strategy name `{0}`")]
    UnknownName(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("walk drift is zero; no root of phi other than 1 exists")]
    ZeroDrift,
    #[error("invalid walk: {0}")]
    InvalidWalk(&'static str),
    #[error("rho must be positive, got {0}")]
    NonPositiveRho(f64),
    #[error("positive-drift bound needs rho0")]
    MissingRho0,
    #[error("failed to bracket the root of phi(rho) = 1")]
    NoBracket,
    #[error("boundary B = {b} is below 2 * max(delta_h, delta_t) = {required}")]
    BoundaryTooSmall { b: f64, required: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradeError {
    #[error("lattice depth must be positive, got {0}")]
    Depth(f64),
    #[error("lattice exceeds {limit} states; raise the limit or set a toss horizon")]
    LatticeTooLarge { limit: usize },
    #[error("joint lattice has {states} states, above the limit of {limit}")]
    JointTooLarge { states: usize, limit: usize },
    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("quit cost must be non-negative and finite, got {0}")]
    QuitCost(f64),
    #[error("state index {0} is not in the lattice")]
    UnknownState(usize),
    #[error("grade search could not bracket the crossover below {0}")]
    GradeBracket(f64),
}
