use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter regime undefined: {0}")]
    RegimeUndefined(String),
    #[error("point ({x}, {y}) is not an equilibrium (residual {residual:.3e})")]
    NotAnEquilibrium { x: f64, y: f64, residual: f64 },
    #[error("linearization is not a center candidate: {0}")]
    NotACenterCandidate(String),
    #[error("equilibrium is not a saddle: {0}")]
    NotASaddle(String),
    #[error("K has the wrong sign for this seed: {0}")]
    BadK(String),
    #[error("step size underflow at t = {t}: h = {h:.3e}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("state norm exceeded blow-up guard at t = {t}")]
    BlowupGuard { t: f64 },
    #[error("no limit cycle found: {0}")]
    NoCycleFound(String),
    #[error("coordinate transform invalid: {0}")]
    TransformInvalid(String),
    #[error("operation outside its parameter regime: {0}")]
    RegimeMismatch(String),
    #[error("trajectory classification undetermined: {0}")]
    UndeterminedTrajectory(String),
    #[error("malformed document: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
