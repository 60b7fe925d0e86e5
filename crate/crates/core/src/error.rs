use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel is not normalized: integral = {integral}")]
    KernelNotNormalized { integral: f64 },

    #[error("grid step {grid_step} exceeds half the kernel support radius {radius}")]
    Undersampled { grid_step: f64, radius: f64 },

    #[error("query x = {x} lies outside the field window [{lo}, {hi}]")]
    OutOfWindow { x: f64, lo: f64, hi: f64 },

    #[error("Riccati solution left the admissible band at x = {x}: u = {u}, band = [{lo}, {hi}]")]
    RiccatiBand { x: f64, u: f64, lo: f64, hi: f64 },

    #[error("root not bracketed on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NonBracketing {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    #[error(
        "operation requires the strong-control regime (beta < c^2/2); got beta = {beta}, c = {c}"
    )]
    WeakRegime { beta: f64, c: f64 },

    #[error(
        "path left the field window at t = {t}: x = {x}; required half-width about {required}"
    )]
    WindowExit { t: f64, x: f64, required: f64 },

    #[error("field window [{lo}, {hi}] too small: need [{need_lo}, {need_hi}]")]
    WindowTooSmall {
        lo: f64,
        hi: f64,
        need_lo: f64,
        need_hi: f64,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("unreliable estimate: effective sample size {ess:.1} below {min_ess:.1}")]
    UnreliableEstimate { ess: f64, min_ess: f64 },

    #[error("no surviving particles in batch {batch} at t = {t}; increase n_paths")]
    ZeroSurvivors { batch: usize, t: f64 },

    #[error("CFL condition violated: ratio {ratio}")]
    Cfl { ratio: f64 },

    #[error("gradient blow-up: |p| = {p} exceeds bound {bound} at t = {t}")]
    GradientBlowup { p: f64, bound: f64, t: f64 },

    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
