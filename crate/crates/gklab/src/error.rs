use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("metric is singular or not positive definite")]
    DegenerateMetric,
    #[error("matrix is singular")]
    Singular,
    #[error("form rank {0} exceeds the dimension 4")]
    RankOverflow(usize),
    #[error("expected a form of rank {expected}, got rank {got}")]
    RankMismatch { expected: usize, got: usize },
    #[error("rank {rank} form needs a different number of components than {got}")]
    ComponentCount { rank: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate metric at sample {index} (t = {t})")]
    DegenerateMetric { index: usize, t: f64 },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("serialization: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum HopfError {
    #[error("invalid Hopf parameters: {0}")]
    InvalidParams(String),
    #[error("profile leaves (-1, 1) at t = {t} (p = {p})")]
    ProfileRange { t: f64, p: f64 },
    #[error("I {sign} J is singular at t = {t}")]
    LogDegenerate { sign: char, t: f64 },
    #[error("Lee form equation is singular at t = {t}")]
    LeeSingular { t: f64 },
    #[error("nonpositive determinant in potential at t = {t}")]
    NonpositiveDeterminant { t: f64 },
    #[error("potential normalization failed: {0}")]
    Normalization(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Error)]
pub enum SolitonError {
    #[error("boundary conditions violated by the initial profile: {0}")]
    BoundaryCondition(String),
    #[error("Newton iteration diverged at iteration {iteration} (residual {residual:e})")]
    Divergence { iteration: usize, residual: f64 },
    #[error("profile left (-1, 1) during the iteration")]
    ProfileExit,
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error(transparent)]
    Hopf(#[from] HopfError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("metric lost positivity at time {time}")]
    LostPositivity { time: f64 },
    #[error("watchdog: residual {name} = {value:e} exceeds {limit:e} at time {time}")]
    Watchdog { name: String, value: f64, limit: f64, time: f64 },
    #[error("invalid flow settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Hopf(#[from] HopfError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Soliton(#[from] SolitonError),
}
