use crate::classifier::{find_cycle, return_map, section_event};
use crate::equilibria::{find_equilibria, lyapunov_coefficient, trace_det_at};
use crate::error::{Error, Result};
use crate::integrator::{integrate, Direction, EventSpec, IntegratorOptions, Termination};
use crate::manifolds::{default_seed_eps, seed_origin_stable, seed_regular, seed_saddle_branches};
use crate::params::{critical_constants, derive_constants, regime_of, ProblemParams, RootCase};
use serde::{Deserialize, Serialize};

pub const M_BISECT_TOL: f64 = 1e-8;
pub const M_BISECT_MAX_ITERS: usize = 40;
pub const DEFAULT_GRID_POINTS: usize = 64;
const SHOOT_SPAN: f64 = 400.0;
const REGULAR_SEED_DELTA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShootTarget {
    G,
    H,
}

/// Section-crossing conventions differ between the three existence proofs;
/// each grid point records which one applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShootBranch {
    /// one equilibrium, M > 0: first crossing of T_reg vs. first backward
    /// crossing of the origin-stable trajectory
    SupercriticalPositive,
    /// one equilibrium, M < 0: first crossing of T_reg (or X_M on monotone
    /// convergence) vs. farthest backward crossing of the origin-stable
    /// trajectory
    SupercriticalNegative,
    /// two equilibria, M < -mu*: farthest crossings; the comparison
    /// trajectory is the saddle's upper stable separatrix
    TwoEquilibria,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitFate {
    ExitsQuadrant,
    ConvergesToEquilibrium,
    ApproachesCycle,
    /// left every bounded set before an axis crossing (guard truncation);
    /// the recorded crossings bound the farthest section point from below
    Escapes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub m: f64,
    /// g = x_reg - x_st (or h = x_{1,3} - x_{1,2}); positive means the
    /// regular trajectory exits the quadrant region-first (no ground state)
    pub value: Option<f64>,
    pub x_reg: Option<f64>,
    pub x_target: Option<f64>,
    pub reg_fate: Option<OrbitFate>,
    pub target_fate: Option<OrbitFate>,
    pub branch: Option<ShootBranch>,
    /// the farthest-crossing value was read off a budget-truncated orbit
    /// (cycle limit); the recorded crossing gap bounds the proxy error
    pub proxy_used: bool,
    pub proxy_gap: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinedRoot {
    pub m: f64,
    /// |g| (x-units) re-evaluated at the refined parameter
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootResult {
    pub target: ShootTarget,
    pub grid: Vec<GridPoint>,
    pub brackets: Vec<(f64, f64)>,
    pub refined: Vec<RefinedRoot>,
    pub refine_failures: Vec<String>,
    /// spread of the refined roots (0 for a single root); evidence for the
    /// conjecture that the minimal and maximal connection parameters agree
    pub root_gap: Option<f64>,
    pub gap_below_resolution: Option<bool>,
}

struct SectionPass {
    crossings: Vec<f64>,
    fate: OrbitFate,
    converged_x: Option<f64>,
    settled_gap: Option<f64>,
    /// largest x reached before guard truncation; lower-bounds the pending
    /// section crossing of an escaping orbit
    escape_x: Option<f64>,
}

fn exit_axis_events<'a>() -> Vec<EventSpec<'a>> {
    vec![
        EventSpec::new("exit-x", Direction::Falling, true, |_t, s: [f64; 2]| s[0]),
        EventSpec::new("exit-y", Direction::Falling, true, |_t, s: [f64; 2]| s[1]),
    ]
}

/// Integrates from `state`, recording every crossing of the line nullcline
/// until the orbit exits the quadrant, is captured by an equilibrium, or
/// its crossing sequence settles (cycle limit). `span < 0` runs backward.
fn section_pass(params: &ProblemParams, state: [f64; 2], t0: f64, span: f64) -> Result<SectionPass> {
    let eqs = find_equilibria(params);
    let mut watch: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    watch.extend(eqs.iter().map(|e| [e.x, e.y]));

    let mut events = vec![section_event(params, Direction::Any, false)];
    events.extend(exit_axis_events());

    let opts = IntegratorOptions::default();
    let traj = integrate(params, state, t0, t0 + span, &opts, &events, &watch)?;
    let crossings: Vec<f64> = traj.events.iter().filter(|h| h.event == 0).map(|h| h.state[0]).collect();

    match traj.termination {
        Termination::Event { .. } => Ok(SectionPass {
            crossings,
            fate: OrbitFate::ExitsQuadrant,
            converged_x: None,
            settled_gap: None,
            escape_x: None,
        }),
        Termination::Equilibrium { target, .. } => Ok(SectionPass {
            crossings,
            fate: OrbitFate::ConvergesToEquilibrium,
            converged_x: Some(watch[target][0]),
            settled_gap: None,
            escape_x: None,
        }),
        // backward continuations of stable branches generically escape to
        // infinity inside the quadrant; the crossings harvested up to the
        // guard, or failing those the largest x reached, bound the farthest
        // section point from below
        Termination::Blowup { .. } => Ok(SectionPass {
            crossings,
            fate: OrbitFate::Escapes,
            converged_x: None,
            settled_gap: None,
            escape_x: traj.states.iter().map(|s| s[0]).fold(None, |acc: Option<f64>, x| {
                Some(acc.map_or(x, |a| a.max(x)))
            }),
        }),
        Termination::TimeEnd | Termination::MaxSteps => {
            // crossings alternate between the two sides of a loop; compare
            // same-parity neighbours to detect settling onto a cycle
            let n = crossings.len();
            if n >= 5 {
                let d1 = (crossings[n - 1] - crossings[n - 3]).abs();
                let d2 = (crossings[n - 2] - crossings[n - 4]).abs();
                let gap = d1.max(d2);
                if gap < 1e-6 * (1.0 + crossings[n - 1].abs()) {
                    return Ok(SectionPass {
                        crossings,
                        fate: OrbitFate::ApproachesCycle,
                        converged_x: None,
                        settled_gap: Some(gap),
                        escape_x: None,
                    });
                }
            }
            Err(Error::UndeterminedTrajectory(format!(
                "no exit, capture or cycle settling within span {span} ({n} section crossings)"
            )))
        }
    }
}

fn pass_with_widening(params: &ProblemParams, state: [f64; 2], t0: f64, span: f64) -> Result<SectionPass> {
    match section_pass(params, state, t0, span) {
        Err(Error::UndeterminedTrajectory(_)) => section_pass(params, state, t0, 4.0 * span),
        other => other,
    }
}

fn shoot_branch(params: &ProblemParams) -> Result<ShootBranch> {
    let case = regime_of(params).root_case;
    match case {
        RootCase::One if params.m >= 0.0 => Ok(ShootBranch::SupercriticalPositive),
        RootCase::One => Ok(ShootBranch::SupercriticalNegative),
        RootCase::Two => Ok(ShootBranch::TwoEquilibria),
        RootCase::None | RootCase::Double => Err(Error::RegimeMismatch(format!(
            "shooting needs one or two equilibria, found {case:?} at M = {}",
            params.m
        ))),
    }
}

fn max_crossing(pass: &SectionPass) -> Option<f64> {
    pass.crossings.iter().copied().fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.max(x))))
}

/// Farthest section point of the pass closure: the largest recorded
/// crossing, extended by the escape bound when the orbit left bounded range.
fn farthest_crossing(pass: &SectionPass) -> Option<f64> {
    match (max_crossing(pass), pass.escape_x) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

/// g(M) at a single parameter value.  Sign semantics are normalized across
/// the three branches: g > 0 means the regular trajectory exits the
/// quadrant (no ground state), g < 0 means it is trapped
/// (cycle/convergence), g = 0 flags the connecting orbit.
pub fn shoot_g_at(params: &ProblemParams) -> Result<GridPoint> {
    let branch = shoot_branch(params)?;
    let reg_seed = seed_regular(params, REGULAR_SEED_DELTA)?;
    let reg = pass_with_widening(params, reg_seed.state, reg_seed.t0, SHOOT_SPAN)?;

    let eqs = find_equilibria(params);
    let target_pass = match branch {
        ShootBranch::SupercriticalPositive | ShootBranch::SupercriticalNegative => {
            let st_seed = seed_origin_stable(params, default_seed_eps([0.0, 0.0]))?;
            pass_with_widening(params, st_seed.state, st_seed.t0, -SHOOT_SPAN)?
        }
        ShootBranch::TwoEquilibria => {
            let saddle = &eqs[0];
            let branches = seed_saddle_branches(params, saddle, default_seed_eps([saddle.x, saddle.y]))?;
            pass_with_widening(params, branches.stable_plus.state, 0.0, -SHOOT_SPAN)?
        }
    };
    let x_target = match branch {
        ShootBranch::SupercriticalPositive => *target_pass.crossings.first().ok_or_else(|| {
            Error::UndeterminedTrajectory("the comparison orbit never met the section".into())
        })?,
        _ => farthest_crossing(&target_pass).ok_or_else(|| {
            Error::UndeterminedTrajectory("the comparison orbit never met the section".into())
        })?,
    };
    let mut proxy = matches!(target_pass.fate, OrbitFate::ApproachesCycle | OrbitFate::Escapes);
    let mut proxy_gap = target_pass.settled_gap;

    let x_reg = match branch {
        ShootBranch::SupercriticalPositive => *reg.crossings.first().ok_or_else(|| {
            Error::UndeterminedTrajectory("regular trajectory never met the section".into())
        })?,
        ShootBranch::SupercriticalNegative => match reg.crossings.first() {
            Some(&x) => x,
            // monotone convergence: the closure meets the section at the
            // equilibrium itself
            None => reg.converged_x.ok_or_else(|| {
                Error::UndeterminedTrajectory("regular trajectory never met the section".into())
            })?,
        },
        ShootBranch::TwoEquilibria => {
            let mut cands = max_crossing(&reg);
            if let Some(cx) = reg.converged_x {
                cands = Some(cands.map_or(cx, |a| a.max(cx)));
            }
            if reg.fate == OrbitFate::ApproachesCycle {
                proxy = true;
                proxy_gap = Some(proxy_gap.unwrap_or(0.0).max(reg.settled_gap.unwrap_or(0.0)));
            }
            cands.ok_or_else(|| {
                Error::UndeterminedTrajectory("regular trajectory never met the section".into())
            })?
        }
    };

    Ok(GridPoint {
        m: params.m,
        value: Some(x_reg - x_target),
        x_reg: Some(x_reg),
        x_target: Some(x_target),
        reg_fate: Some(reg.fate),
        target_fate: Some(target_pass.fate),
        branch: Some(branch),
        proxy_used: proxy,
        proxy_gap,
        failure: None,
    })
}

/// h(M) = x_{1,3} - x_{1,2}: first section crossing of the saddle's lower
/// unstable separatrix against the last (farthest) crossing of its upper
/// stable separatrix; h = 0 flags a homoclinic loop at the saddle.
pub fn shoot_h_at(params: &ProblemParams) -> Result<GridPoint> {
    let branch = shoot_branch(params)?;
    if branch != ShootBranch::TwoEquilibria {
        return Err(Error::RegimeMismatch(format!(
            "h is defined in the two-equilibria regime only (branch {branch:?} at M = {})",
            params.m
        )));
    }
    let eqs = find_equilibria(params);
    let saddle = &eqs[0];
    let branches = seed_saddle_branches(params, saddle, default_seed_eps([saddle.x, saddle.y]))?;

    let unst = pass_with_widening(params, branches.unstable_plus.state, 0.0, SHOOT_SPAN)?;
    let x13 = match unst.crossings.first() {
        Some(&x) => x,
        None => unst.converged_x.ok_or_else(|| {
            Error::UndeterminedTrajectory("lower unstable separatrix never met the section".into())
        })?,
    };

    let st = pass_with_widening(params, branches.stable_plus.state, 0.0, -SHOOT_SPAN)?;
    let x12 = farthest_crossing(&st).ok_or_else(|| {
        Error::UndeterminedTrajectory("upper stable separatrix never met the section".into())
    })?;

    Ok(GridPoint {
        m: params.m,
        value: Some(x13 - x12),
        x_reg: Some(x13),
        x_target: Some(x12),
        reg_fate: Some(unst.fate),
        target_fate: Some(st.fate),
        branch: Some(branch),
        proxy_used: matches!(st.fate, OrbitFate::ApproachesCycle | OrbitFate::Escapes)
            || unst.fate == OrbitFate::ApproachesCycle,
        proxy_gap: match (st.settled_gap, unst.settled_gap) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        },
        failure: None,
    })
}

/// n points spaced geometrically in |M| between the endpoints (linear when
/// the interval touches or straddles zero); endpoints included exactly.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "grid needs at least the two endpoints");
    let mut out = Vec::with_capacity(n);
    if lo != 0.0 && hi != 0.0 && (lo > 0.0) == (hi > 0.0) {
        let sign = lo.signum();
        let (la, lb) = (lo.abs().ln(), hi.abs().ln());
        for i in 0..n {
            let f = i as f64 / (n - 1) as f64;
            out.push(sign * (la + f * (lb - la)).exp());
        }
    } else {
        for i in 0..n {
            let f = i as f64 / (n - 1) as f64;
            out.push(lo + f * (hi - lo));
        }
    }
    out[0] = lo;
    out[n - 1] = hi;
    out
}

fn eval_point(base: &ProblemParams, target: ShootTarget, m: f64) -> GridPoint {
    let params = base.with_m(m);
    let res = match target {
        ShootTarget::G => shoot_g_at(&params),
        ShootTarget::H => shoot_h_at(&params),
    };
    res.unwrap_or_else(|e| GridPoint {
        m,
        value: None,
        x_reg: None,
        x_target: None,
        reg_fate: None,
        target_fate: None,
        branch: None,
        proxy_used: false,
        proxy_gap: None,
        failure: Some(e.to_string()),
    })
}

/// Scans the shooting function over a geometric M-grid, brackets its sign
/// changes and refines each bracket by bisection.  Grid points are
/// evaluated concurrently; failures are recorded per point, never skipped.
pub fn scan(base: &ProblemParams, target: ShootTarget, m_lo: f64, m_hi: f64, n: usize) -> ShootResult {
    scan_with_threads(base, target, m_lo, m_hi, n, None)
}

/// As `scan`, with the worker pool capped at `threads` (`None` uses the
/// hardware thread count).
pub fn scan_with_threads(
    base: &ProblemParams,
    target: ShootTarget,
    m_lo: f64,
    m_hi: f64,
    n: usize,
    threads: Option<usize>,
) -> ShootResult {
    let ms = log_grid(m_lo, m_hi, n.max(2));
    let mut grid: Vec<Option<GridPoint>> = (0..ms.len()).map(|_| None).collect();

    let workers = threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1))
        .clamp(1, ms.len());
    let chunk = ms.len().div_ceil(workers);
    std::thread::scope(|scope| {
        for (slot_chunk, m_chunk) in grid.chunks_mut(chunk).zip(ms.chunks(chunk)) {
            scope.spawn(move || {
                for (slot, &m) in slot_chunk.iter_mut().zip(m_chunk) {
                    *slot = Some(eval_point(base, target, m));
                }
            });
        }
    });
    let grid: Vec<GridPoint> = grid.into_iter().map(Option::unwrap).collect();

    let mut brackets = Vec::new();
    for w in grid.windows(2) {
        if let (Some(a), Some(b)) = (w[0].value, w[1].value) {
            if a * b < 0.0 {
                brackets.push((w[0].m, w[1].m));
            }
        }
    }

    let mut refined = Vec::new();
    let mut refine_failures = Vec::new();
    for &(lo, hi) in &brackets {
        match bisect_on_m(base, target, lo, hi) {
            Ok(root) => refined.push(root),
            Err(e) => refine_failures.push(format!("bracket [{lo}, {hi}]: {e}")),
        }
    }

    let root_gap = if refined.is_empty() {
        None
    } else {
        let min = refined.iter().map(|r| r.m).fold(f64::INFINITY, f64::min);
        let max = refined.iter().map(|r| r.m).fold(f64::NEG_INFINITY, f64::max);
        Some(max - min)
    };
    let gap_below_resolution = root_gap.map(|g| g <= 2.0 * M_BISECT_TOL);

    ShootResult { target, grid, brackets, refined, refine_failures, root_gap, gap_below_resolution }
}

/// Bisection in M on a strict sign-change bracket of the shooting function,
/// to 1e-8 in M or 40 iterations.
pub fn bisect_on_m(base: &ProblemParams, target: ShootTarget, lo: f64, hi: f64) -> Result<RefinedRoot> {
    let value = |m: f64| -> Result<f64> {
        let gp = eval_point(base, target, m);
        gp.value.ok_or_else(|| {
            Error::UndeterminedTrajectory(gp.failure.unwrap_or_else(|| "no value".into()))
        })
    };
    let (mut lo, mut hi) = (lo, hi);
    let mut f_lo = value(lo)?;
    let f_hi = value(hi)?;
    if f_lo == 0.0 {
        return Ok(RefinedRoot { m: lo, residual: 0.0 });
    }
    if f_hi == 0.0 {
        return Ok(RefinedRoot { m: hi, residual: 0.0 });
    }
    if f_lo * f_hi > 0.0 {
        return Err(Error::UndeterminedTrajectory(format!(
            "no sign change on [{lo}, {hi}]: {f_lo} and {f_hi}"
        )));
    }
    for _ in 0..M_BISECT_MAX_ITERS {
        if (hi - lo).abs() <= M_BISECT_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = value(mid)?;
        if f_mid == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if f_lo * f_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    let m = 0.5 * (lo + hi);
    Ok(RefinedRoot { m, residual: value(m)?.abs() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfAmplitude {
    pub offset: f64,
    pub m: f64,
    pub amplitude: f64,
    pub x_section: f64,
    pub period: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HopfReport {
    /// closed-form trace-zero parameter
    pub m_bar: f64,
    /// trace-zero location found by bisection on the linearization
    pub trace_zero: Option<f64>,
    pub closed_form_agreement: Option<f64>,
    pub lyapunov: Option<f64>,
    /// negative first Lyapunov coefficient: stable cycle on the source side
    pub supercritical: Option<bool>,
    /// +1 when the probed cycles live at M > m_bar, -1 below
    pub cycle_side: Option<i8>,
    pub amplitudes: Vec<HopfAmplitude>,
    /// amplitude ratio between the last and first probed offsets
    pub amplitude_ratio: Option<f64>,
    /// ln(amp_j/amp_0) / ln(off_j/off_0); 0.5 under the square-root law
    pub sqrt_law_exponent: Option<f64>,
}

fn trace_at(base: &ProblemParams, m: f64) -> Option<f64> {
    let params = base.with_m(m);
    let eqs = find_equilibria(&params);
    eqs.last().map(|eq| trace_det_at(&params, eq.y).0)
}

/// Locates the trace-zero crossing of the linearization at the outer
/// equilibrium and probes the emerging cycle branch at the given offsets
/// from it, measuring amplitudes for the square-root law.
pub fn hopf_scan(base: &ProblemParams, offsets: &[f64]) -> Result<HopfReport> {
    let consts = critical_constants(base);
    let Some(m_bar) = consts.m_bar else {
        return Err(Error::RegimeMismatch(
            "the trace-zero parameter is defined for N >= 2 only".into(),
        ));
    };
    let c = derive_constants(base);

    if c.l.abs() <= 1e-12 {
        // trace = Phi - L with Phi -> 0 at M = 0: boundary case, no crossing
        return Ok(HopfReport {
            m_bar,
            trace_zero: None,
            closed_form_agreement: None,
            lyapunov: None,
            supercritical: None,
            cycle_side: None,
            amplitudes: Vec::new(),
            amplitude_ratio: None,
            sqrt_law_exponent: None,
        });
    }

    // bracket the trace zero around the closed form
    let mut w = 0.05 * (1.0 + m_bar.abs());
    let mut bracket = None;
    for _ in 0..6 {
        let (lo, hi) = (m_bar - w, m_bar + w);
        if let (Some(t_lo), Some(t_hi)) = (trace_at(base, lo), trace_at(base, hi)) {
            if t_lo * t_hi < 0.0 {
                bracket = Some((lo, hi));
                break;
            }
        }
        w *= 0.5;
    }
    let trace_zero = bracket.map(|(mut lo, mut hi)| {
        let mut t_lo = trace_at(base, lo).unwrap();
        for _ in 0..200 {
            if (hi - lo).abs() <= 1e-14 * (1.0 + hi.abs()) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let t_mid = trace_at(base, mid).unwrap_or(f64::NAN);
            if !t_mid.is_finite() || t_lo * t_mid <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
                t_lo = t_mid;
            }
        }
        0.5 * (lo + hi)
    });

    let at_bar = base.with_m(m_bar);
    let eq_bar = find_equilibria(&at_bar).last().copied();
    let lyapunov = eq_bar.and_then(|eq| lyapunov_coefficient(&at_bar, &eq).ok());

    let mut amplitudes = Vec::new();
    let mut cycle_side = None;
    if let Some(lam) = lyapunov {
        if lam != 0.0 {
            // stable cycles appear where the equilibrium has lost stability
            // (M > m_bar) for supercritical, unstable ones on the sink side
            let side: i8 = if lam < 0.0 { 1 } else { -1 };
            let backward = lam > 0.0;
            cycle_side = Some(side);
            for &off in offsets {
                let m = m_bar + f64::from(side) * off;
                let params = base.with_m(m);
                let eqs = find_equilibria(&params);
                let Some(eq) = eqs.last() else { continue };
                let mut s = eq.x * 1.02 + 1e-6;
                for _ in 0..15 {
                    match return_map(&params, s, backward) {
                        Ok((ps, _, _)) => {
                            let done = (ps - s).abs() <= 1e-9 * (1.0 + s.abs());
                            s = ps;
                            if done {
                                break;
                            }
                        }
                        Err(_) => break,
                    }
                }
                if let Ok(cycle) = find_cycle(&params, s, backward) {
                    amplitudes.push(HopfAmplitude {
                        offset: off,
                        m,
                        amplitude: 0.5 * (cycle.x_max - cycle.x_min),
                        x_section: cycle.x_section,
                        period: cycle.period,
                    });
                }
            }
        }
    }

    let amplitude_ratio = (amplitudes.len() >= 2)
        .then(|| amplitudes.last().unwrap().amplitude / amplitudes[0].amplitude);
    let sqrt_law_exponent = (amplitudes.len() >= 2).then(|| {
        let a = &amplitudes[0];
        let b = amplitudes.last().unwrap();
        (b.amplitude / a.amplitude).ln() / (b.offset / a.offset).ln()
    });

    Ok(HopfReport {
        m_bar,
        trace_zero,
        closed_form_agreement: trace_zero.map(|m| (m - m_bar).abs()),
        lyapunov,
        supercritical: lyapunov.map(|l| l < 0.0),
        cycle_side,
        amplitudes,
        amplitude_ratio,
        sqrt_law_exponent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MBAR_N3_P7: f64 = 0.5465113757551417;
    const M0_N3_P7: f64 = 3.6190630133837303;
    const MBAR_N3_P2: f64 = -1.3158079821957898;
    const MU_STAR_1_P2: f64 = 2.47644543667097;

    fn params(n: u32, p: f64, m: f64) -> ProblemParams {
        ProblemParams::new(n, p, m).unwrap()
    }

    #[test]
    fn grid_is_geometric_and_signed() {
        let g = log_grid(0.5, 4.0, 7);
        assert_eq!(g.len(), 7);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[6], 4.0);
        for w in g.windows(3) {
            let (r1, r2) = (w[1] / w[0], w[2] / w[1]);
            assert!((r1 - r2).abs() < 1e-12, "not geometric: {r1} vs {r2}");
        }
        let neg = log_grid(-2.4, -1.4, 5);
        assert!(neg.iter().all(|&m| m < 0.0));
        assert!(neg.windows(2).all(|w| w[1] > w[0]));
        let lin = log_grid(-1.0, 1.0, 5);
        assert_eq!(lin[2], 0.0);
    }

    #[test]
    fn g_signs_one_equilibrium_m_positive() {
        let base = params(3, 7.0, 1.0);
        let inside = shoot_g_at(&base.with_m(MBAR_N3_P7 + 0.02)).unwrap();
        assert_eq!(inside.branch, Some(ShootBranch::SupercriticalPositive));
        assert!(inside.value.unwrap() < 0.0, "g = {:?}", inside.value);
        assert_eq!(inside.reg_fate, Some(OrbitFate::ApproachesCycle));

        let outside = shoot_g_at(&base.with_m(M0_N3_P7)).unwrap();
        assert!(outside.value.unwrap() > 0.0, "g = {:?}", outside.value);
        assert_eq!(outside.reg_fate, Some(OrbitFate::ExitsQuadrant));
    }

    #[test]
    fn g_bisection_finds_homoclinic_parameter() {
        let base = params(3, 7.0, 1.0);
        let root = bisect_on_m(&base, ShootTarget::G, MBAR_N3_P7 + 0.02, M0_N3_P7).unwrap();
        assert!(root.m > MBAR_N3_P7 && root.m < M0_N3_P7, "M* = {}", root.m);
        assert!(root.residual <= 1e-6, "|g(M*)| = {}", root.residual);
    }

    #[test]
    fn g_signs_two_equilibria() {
        let base = params(3, 2.0, -2.0);
        let near_bar = shoot_g_at(&base.with_m(MBAR_N3_P2 - 0.05)).unwrap();
        assert_eq!(near_bar.branch, Some(ShootBranch::TwoEquilibria));
        assert!(near_bar.value.unwrap() > 0.0, "g = {:?}", near_bar.value);
        assert_eq!(near_bar.reg_fate, Some(OrbitFate::ExitsQuadrant));

        let deep = shoot_g_at(&base.with_m(-MU_STAR_1_P2 + 0.05)).unwrap();
        assert!(deep.value.unwrap() < 0.0, "g = {:?}", deep.value);
        assert_ne!(deep.reg_fate, Some(OrbitFate::ExitsQuadrant));
    }

    #[test]
    fn h_positive_near_bar_and_scan_refines() {
        let base = params(3, 2.0, -2.0);
        let near_bar = shoot_h_at(&base.with_m(MBAR_N3_P2 - 0.02)).unwrap();
        assert!(near_bar.value.unwrap() > 0.0, "h = {:?}", near_bar.value);

        let res = scan(&base, ShootTarget::H, -2.4, MBAR_N3_P2 - 0.02, 9);
        assert!(res.grid.iter().all(|gp| gp.value.is_some()), "grid failures: {:?}", res.grid);
        assert!(!res.brackets.is_empty(), "no sign change of h found");
        let root = &res.refined[0];
        assert!(root.residual <= 1e-6, "|h| = {}", root.residual);
        assert!(root.m > -MU_STAR_1_P2 && root.m < MBAR_N3_P2);
    }

    #[test]
    fn scan_records_regime_failures() {
        // (3, 2): no equilibria for M in (-mu*, 0); those grid points must
        // carry failures while valid ones still evaluate
        let base = params(3, 2.0, -2.0);
        let res = scan(&base, ShootTarget::G, -1.5, -0.9, 4);
        let failed: Vec<_> = res.grid.iter().filter(|gp| gp.failure.is_some()).collect();
        let ok: Vec<_> = res.grid.iter().filter(|gp| gp.value.is_some()).collect();
        assert!(!failed.is_empty(), "expected regime failures above -mu*");
        assert!(!ok.is_empty(), "expected valid points below m_bar");
        assert_eq!(failed.len() + ok.len(), res.grid.len());
    }

    #[test]
    fn hopf_supercritical_branch() {
        let rep = hopf_scan(&params(3, 7.0, 1.0), &[0.01, 0.04]).unwrap();
        assert!((rep.trace_zero.unwrap() - MBAR_N3_P7).abs() < 1e-8);
        assert_eq!(rep.supercritical, Some(true));
        assert_eq!(rep.cycle_side, Some(1));
        assert_eq!(rep.amplitudes.len(), 2);
        let ratio = rep.amplitude_ratio.unwrap();
        assert!(ratio > 1.4 && ratio < 2.8, "amplitude ratio {ratio}");
    }

    #[test]
    fn hopf_subcritical_branch() {
        let rep = hopf_scan(&params(3, 2.0, -2.0), &[0.01, 0.04]).unwrap();
        assert!((rep.trace_zero.unwrap() - MBAR_N3_P2).abs() < 1e-8);
        assert_eq!(rep.supercritical, Some(false));
        assert_eq!(rep.cycle_side, Some(-1));
        assert_eq!(rep.amplitudes.len(), 2);
        let ratio = rep.amplitude_ratio.unwrap();
        assert!(ratio > 1.4 && ratio < 2.8, "amplitude ratio {ratio}");
    }

    #[test]
    fn hopf_boundary_case_has_no_crossing() {
        let rep = hopf_scan(&params(3, 5.0, 0.0), &[0.01]).unwrap();
        assert_eq!(rep.m_bar, 0.0);
        assert!(rep.trace_zero.is_none());
        assert!(rep.amplitudes.is_empty());
    }

    #[test]
    fn g_sign_single_equilibrium_negative_m() {
        // N/(N-2) < p < (N+2)/(N-2): one equilibrium for all M < 0
        let base = params(3, 4.0, -1.0);
        let cc = critical_constants(&base);
        let m_bar = cc.m_bar.unwrap();
        let near_bar = shoot_g_at(&base.with_m(m_bar - 0.05)).unwrap();
        assert_eq!(near_bar.branch, Some(ShootBranch::SupercriticalNegative));
        assert!(near_bar.value.unwrap() > 0.0, "g = {:?}", near_bar.value);

        let deep = shoot_g_at(&base.with_m(-cc.mu_star_1 + 0.1)).unwrap();
        assert!(deep.value.unwrap() < 0.0, "g = {:?}", deep.value);
    }
}
