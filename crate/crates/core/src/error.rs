use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("newton iteration did not converge after {iterations} iterations (|grad V| = {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("not a nondegenerate minimum (lambda_min = {lambda_min})")]
    NotNondegenerateMinimum { lambda_min: f64 },
    #[error("coercivity violated: {0}")]
    CoercivityViolated(String),
    #[error("delta'' too large: lambda_min({lambda_min}) <= 0 inside the ball of radius {delta2}")]
    DeltaTooLarge { delta2: f64, lambda_min: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("blow-up detected at t = {time}")]
    BlowUp { time: f64 },
    #[error("window too short: {0}")]
    WindowTooShort(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("r_esc_init too small: {0}")]
    REscInitTooSmall(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
