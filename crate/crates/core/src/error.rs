use thiserror::Error;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("reaction term evaluated non-finite at u = {at}")]
    ReactionEvaluation { at: f64 },

    #[error("reaction term failed validation: {0}")]
    ReactionInvalid(String),

    #[error("kernel configuration error: {0}")]
    KernelConfig(String),

    #[error("kernel is not positive semidefinite: {0}")]
    KernelPsd(String),

    #[error("kernel Gram matrix could not be factored (jitter exhausted at {jitter:.3e})")]
    KernelConditioning { jitter: f64 },

    #[error("kernel lacks the capability: {0}")]
    KernelCapability(String),

    #[error("mollifier resolution error: {0}")]
    MollifierResolution(String),

    #[error("scalar flow diverged: |Y| = {value:.3} > {bound:.3} at tau = {tau:.6}")]
    FlowDivergence { value: f64, bound: f64, tau: f64 },

    #[error("step size {step:.3e} too large: {why}")]
    StepSize { step: f64, why: String },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("initial condition rejected: {0}")]
    InitialCondition(String),

    #[error("field blow-up at t = {t:.6}, step {step}: {diag}")]
    BlowUp { t: f64, step: usize, diag: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("horizon error: super/sub argument left [-2C0, 2C0] at t = {t:.6}")]
    Horizon { t: f64 },

    #[error("interface lost: no sign change at t = {t:.6}")]
    InterfaceLost { t: f64 },

    #[error("standing wave construction failed: {0}")]
    StandingWave(String),

    #[error("log-domain error: nonpositive statistic {value:.3e} at eps = {eps:.3e}")]
    LogDomain { value: f64, eps: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
