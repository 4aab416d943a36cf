use thiserror::Error;

/// Failures of the single-diode model evaluations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    /// Lambert-W auxiliary value at or below one: no usable maximum power point.
    #[error("degenerate operating condition (omega = {omega})")]
    Degenerate { omega: f64 },
    /// Log argument of the KCL residual is not positive.
    #[error("infeasible point: measured current exceeds available photocurrent")]
    Infeasible,
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Configuration errors raised by the optimizers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid optimizer configuration: {0}")]
    Pso(String),
    #[error("invalid bounds: {0}")]
    Bounds(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("insufficient data: {got} points, need at least {need}")]
    InsufficientData { got: usize, need: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("domain error: {0}")]
    Domain(String),
}
