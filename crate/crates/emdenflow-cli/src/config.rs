use emdenflow::integrator::IntegratorOptions;
use emdenflow::ProblemParams;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::Cli;

/// Process failure carrying the exit code: 2 parameter/regime, 3 numerical,
/// 4 I/O or malformed document.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<emdenflow::Error> for Failure {
    fn from(e: emdenflow::Error) -> Self {
        use emdenflow::Error as E;
        let code = match &e {
            E::RegimeUndefined(_)
            | E::NotAnEquilibrium { .. }
            | E::NotACenterCandidate(_)
            | E::NotASaddle(_)
            | E::BadK(_)
            | E::RegimeMismatch(_) => 2,
            E::StepUnderflow { .. }
            | E::BlowupGuard { .. }
            | E::NoCycleFound(_)
            | E::TransformInvalid(_)
            | E::UndeterminedTrajectory(_) => 3,
            E::Format(_) | E::Io(_) => 4,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 4, message: format!("i/o error: {e}") }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { code: 4, message: format!("malformed document: {e}") }
    }
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileParams {
    n: Option<u32>,
    p: Option<f64>,
    m: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileIntegrator {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    max_steps: Option<usize>,
    t_span: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileOutput {
    path: Option<PathBuf>,
    format: Option<String>,
}

/// On-disk run configuration; every field optional, flags take precedence.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    command: Option<String>,
    params: FileParams,
    integrator: FileIntegrator,
    output: FileOutput,
}

/// Fully resolved invocation: defaults, then config file, then flags.
pub struct Resolved {
    pub params: ProblemParams,
    pub opts: IntegratorOptions,
    pub t_span: f64,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    /// --seed-eps flag, else EMDENFLOW_SEED_EPS, else None (per-anchor
    /// default applies)
    pub seed_eps: Option<f64>,
}

pub const DEFAULT_T_SPAN: f64 = 400.0;

pub fn resolve(cli: &Cli, command: &str) -> Result<Resolved, Failure> {
    let file: RunConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::new(4, format!("malformed config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(pinned) = &file.command {
        if pinned != command {
            return Err(Failure::new(
                2,
                format!("config file pins command '{pinned}' but '{command}' was invoked"),
            ));
        }
    }

    let n = cli
        .n
        .or(file.params.n)
        .ok_or_else(|| Failure::new(2, "missing dimension N (--dim or config params.n)"))?;
    let p = cli
        .p
        .or(file.params.p)
        .ok_or_else(|| Failure::new(2, "missing exponent p (--p or config params.p)"))?;
    let m = cli.m.or(file.params.m).unwrap_or(0.0);
    let params = ProblemParams::new(n, p, m)?;

    let mut opts = IntegratorOptions::default();
    if let Some(v) = file.integrator.rel_tol {
        opts.rel_tol = v;
    }
    if let Some(v) = file.integrator.abs_tol {
        opts.abs_tol = v;
    }
    if let Some(v) = file.integrator.max_steps {
        opts.max_steps = v;
    }
    if let Some(v) = cli.rel_tol {
        opts.rel_tol = v;
    }
    if let Some(v) = cli.abs_tol {
        opts.abs_tol = v;
    }
    if let Some(v) = cli.max_steps {
        opts.max_steps = v;
    }
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(Failure::new(2, "tolerances must be positive"));
    }

    let t_span = cli.t_span.or(file.integrator.t_span).unwrap_or(DEFAULT_T_SPAN);
    if !(t_span > 0.0) {
        return Err(Failure::new(2, format!("t-span must be positive, got {t_span}")));
    }

    let seed_eps = match cli.seed_eps {
        Some(v) => Some(v),
        None => match std::env::var("EMDENFLOW_SEED_EPS") {
            Ok(raw) => Some(raw.parse::<f64>().map_err(|_| {
                Failure::new(2, format!("EMDENFLOW_SEED_EPS is not a number: {raw:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(eps) = seed_eps {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Failure::new(2, format!("seed eps must be positive, got {eps}")));
        }
    }

    Ok(Resolved {
        params,
        opts,
        t_span,
        out: cli.out.clone().or(file.output.path),
        format: cli.format.clone().or(file.output.format),
        seed_eps,
    })
}
