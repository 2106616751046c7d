use alloc::string::String;

/// Errors raised by the models, environments and controllers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("singular configuration: |delta| = {0:e}")]
    Singular(f64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid action {0}")]
    InvalidAction(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cycle does not close in shape space")]
    OpenCycle,
    #[error("no sign convention reproduces the closed-form velocities (best error {0:e})")]
    NoConvention(f64),
    #[error("displacement {x} below transform baseline {x_min}")]
    Range { x: f64, x_min: f64 },
    #[error("unresolved template placeholder `{0}`")]
    Template(String),
    #[error("no action found in response: {0:?}")]
    Parse(String),
    #[error("replay recording exhausted after {0} responses")]
    ReplayExhausted(usize),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("usage: {0}")]
    Usage(String),
}

pub type Result<T> = core::result::Result<T, Error>;
