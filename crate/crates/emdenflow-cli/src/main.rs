//! Command-line surface: constants, equilibria, trajectory classification,
//! CSV trajectory dumps, SVG phase portraits, diagnostics, shooting scans
//! and full JSON reports.
//!
//! Exit codes: 0 success, 2 parameter/regime error, 3 numerical failure,
//! 4 I/O or document error.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

mod commands;
mod config;
mod emit;

use config::{resolve, Failure};

#[derive(Parser)]
#[command(
    name = "emdenflow",
    version,
    about = "Phase-plane and bifurcation analysis of -Δu = u^p + M|∇u|^{2p/(p+1)}"
)]
struct Cli {
    /// JSON run configuration; explicit flags override its fields
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// space dimension N
    #[arg(short = 'n', long = "dim", global = true)]
    n: Option<u32>,
    /// nonlinearity exponent p (> 1)
    #[arg(short, long, global = true)]
    p: Option<f64>,
    /// gradient coefficient M
    #[arg(short, long, global = true, allow_negative_numbers = true)]
    m: Option<f64>,
    /// output file (stdout when omitted)
    #[arg(short, long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    /// output format; each command accepts exactly one (json/csv/svg)
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long, global = true)]
    rel_tol: Option<f64>,
    #[arg(long, global = true)]
    abs_tol: Option<f64>,
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// integration budget in t-units
    #[arg(long, global = true)]
    t_span: Option<f64>,
    /// manifold seed offset; overrides EMDENFLOW_SEED_EPS and the default
    #[arg(long, global = true)]
    seed_eps: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Branch {
    /// regular trajectory T_reg (u(0) = 1, u'(0) = 0), forward
    Reg,
    /// origin-stable trajectory T_st (K > 0), backward
    OriginStable,
    /// slow exit direction of the origin (K < 0), forward
    OriginSlow,
    /// constant solution U_M sitting at an interior equilibrium
    Equilibrium,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    G,
    H,
}

#[derive(Subcommand)]
enum Command {
    /// Derived and critical constants as JSON
    Constants,
    /// Interior equilibria and origin linearization as JSON
    Equilibria,
    /// Long-run verdict for a distinguished trajectory
    Classify {
        #[arg(long, value_enum, default_value_t = Branch::Reg)]
        branch: Branch,
    },
    /// Integrate one trajectory to CSV plus a JSON sidecar
    Trajectory {
        #[arg(long, value_enum, default_value_t = Branch::Reg)]
        branch: Branch,
        /// uniform output step in t (dense-output resampling); one row per
        /// accepted step when omitted
        #[arg(long)]
        dt: Option<f64>,
        /// equilibrium index for --branch equilibrium
        #[arg(long, default_value_t = 0)]
        eq_index: usize,
    },
    /// SVG phase portrait: nullclines, quiver, equilibria, region labels
    Portrait {
        #[arg(long, default_value_t = 760)]
        width: u32,
        #[arg(long, default_value_t = 560)]
        height: u32,
        /// quiver arrows per axis
        #[arg(long, default_value_t = 18)]
        quiver: usize,
        /// overlay the regular trajectory
        #[arg(long)]
        overlay_reg: bool,
        /// overlay the origin-stable trajectory (needs K > 0)
        #[arg(long)]
        overlay_stable: bool,
    },
    /// Functional diagnostics (F, V, Z, G, Sobolev energy) along a trajectory
    Diagnose {
        #[arg(long, value_enum, default_value_t = Branch::Reg)]
        branch: Branch,
    },
    /// Scan a shooting function over an M-grid and refine its zeros
    Shoot {
        #[arg(long, value_enum)]
        target: TargetArg,
        #[arg(long, allow_negative_numbers = true)]
        m_lo: f64,
        #[arg(long, allow_negative_numbers = true)]
        m_hi: f64,
        /// grid points, geometrically spaced in |M|
        #[arg(long, default_value_t = 64)]
        grid: usize,
        /// worker threads (hardware count when omitted)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Full JSON report; --verify re-reads one and checks it reproduces
    Report {
        #[arg(long, value_enum)]
        target: Option<TargetArg>,
        #[arg(long, allow_negative_numbers = true)]
        m_lo: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        m_hi: Option<f64>,
        #[arg(long, default_value_t = 16)]
        grid: usize,
        /// re-check a stored report; parameters are read from the file
        #[arg(long, value_name = "FILE", conflicts_with_all = ["target", "m_lo", "m_hi"])]
        verify: Option<PathBuf>,
    },
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Constants => "constants",
        Command::Equilibria => "equilibria",
        Command::Classify { .. } => "classify",
        Command::Trajectory { .. } => "trajectory",
        Command::Portrait { .. } => "portrait",
        Command::Diagnose { .. } => "diagnose",
        Command::Shoot { .. } => "shoot",
        Command::Report { .. } => "report",
    }
}

fn expected_format(cmd: &Command) -> &'static str {
    match cmd {
        Command::Trajectory { .. } => "csv",
        Command::Portrait { .. } => "svg",
        _ => "json",
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let name = command_name(&cli.command);
    if let Command::Report { verify: Some(path), .. } = &cli.command {
        if let Some(fmt) = &cli.format {
            if fmt != "json" {
                return Err(Failure::new(2, format!("report emits json, not {fmt}")));
            }
        }
        return commands::verify_report(path, cli.out.as_deref());
    }
    let rc = resolve(&cli, name)?;
    if let Some(fmt) = &rc.format {
        let want = expected_format(&cli.command);
        if fmt != want {
            return Err(Failure::new(
                2,
                format!("{name} emits {want}, not {fmt}"),
            ));
        }
    }
    match cli.command {
        Command::Constants => commands::constants(&rc),
        Command::Equilibria => commands::equilibria(&rc),
        Command::Classify { branch } => commands::classify(&rc, branch),
        Command::Trajectory { branch, dt, eq_index } => {
            commands::trajectory(&rc, branch, dt, eq_index)
        }
        Command::Portrait { width, height, quiver, overlay_reg, overlay_stable } => {
            commands::portrait(&rc, width, height, quiver, overlay_reg, overlay_stable)
        }
        Command::Diagnose { branch } => commands::diagnose(&rc, branch),
        Command::Shoot { target, m_lo, m_hi, grid, threads } => {
            commands::shoot(&rc, target, m_lo, m_hi, grid, threads)
        }
        Command::Report { target, m_lo, m_hi, grid, .. } => {
            commands::report(&rc, target, m_lo, m_hi, grid)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
