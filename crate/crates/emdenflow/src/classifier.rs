use crate::equilibria::find_equilibria;
use crate::error::{Error, Result};
use crate::field::{eval_h, lnull};
use crate::integrator::{integrate, Direction, EventSpec, IntegratorOptions, Termination, Trajectory};
use crate::manifolds::Seed;
use crate::params::{derive_constants, ProblemParams};
use serde::{Deserialize, Serialize};

pub const DEFAULT_CLASSIFY_SPAN: f64 = 400.0;
const CYCLE_FIXED_POINT_TOL: f64 = 1e-8;
const CYCLE_MAX_ITERS: usize = 60;
const RETURN_MAP_SPAN: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    /// x-coordinate of the fixed point of the return map on the section
    /// {y = 2x/(p-1), x decreasing}
    pub x_section: f64,
    pub period: f64,
    pub x_min: f64,
    pub x_max: f64,
    /// true when the cycle was located with the backward-time return map
    /// (repelling cycles)
    pub backward: bool,
    /// false when neighbouring section points are also fixed (a center
    /// family rather than an isolated cycle)
    pub isolated: bool,
    /// integral of the divergence over one period (the nontrivial Floquet
    /// exponent); negative means attracting
    pub floquet_exponent: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrajectoryClass {
    ExitsQuadrant { t: f64, state: [f64; 2] },
    ConvergesToEquilibrium { x: f64, y: f64, t: f64 },
    LimitCycle { cycle: Cycle },
    Blowup { t: f64 },
}

pub(crate) fn section_event<'a>(
    params: &ProblemParams,
    direction: Direction,
    terminal: bool,
) -> EventSpec<'a> {
    let p = params.p;
    EventSpec::new("section", direction, terminal, move |_t, s: [f64; 2]| {
        s[1] - 2.0 * s[0] / (p - 1.0)
    })
}

pub(crate) fn exit_event<'a>() -> EventSpec<'a> {
    EventSpec::new("exit-x", Direction::Falling, true, |_t, s: [f64; 2]| s[0])
}

/// Forward-time fate of the trajectory started at `seed`.  Integrates over
/// `t_span`, watching for quadrant exit, equilibrium capture, blowup and
/// section-crossing convergence; widens the span once (×4) before giving
/// up with `UndeterminedTrajectory`.
pub fn classify_limit(params: &ProblemParams, seed: &Seed, t_span: f64) -> Result<TrajectoryClass> {
    match classify_once(params, seed, t_span)? {
        Some(class) => Ok(class),
        None => match classify_once(params, seed, 4.0 * t_span)? {
            Some(class) => Ok(class),
            None => Err(Error::UndeterminedTrajectory(format!(
                "no exit, equilibrium capture or cycle convergence within t-span {} (widened from {})",
                4.0 * t_span,
                t_span
            ))),
        },
    }
}

fn classify_once(params: &ProblemParams, seed: &Seed, t_span: f64) -> Result<Option<TrajectoryClass>> {
    let eqs = find_equilibria(params);
    let mut watch: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    watch.extend(eqs.iter().map(|e| [e.x, e.y]));

    let events = vec![exit_event(), section_event(params, Direction::Rising, false)];
    let opts = IntegratorOptions::default();
    let traj = integrate(params, seed.state, seed.t0, seed.t0 + t_span, &opts, &events, &watch)?;

    match traj.termination {
        Termination::Event { t, state, .. } => Ok(Some(TrajectoryClass::ExitsQuadrant { t, state })),
        Termination::Equilibrium { target, t } => {
            let [x, y] = watch[target];
            Ok(Some(TrajectoryClass::ConvergesToEquilibrium { x, y, t }))
        }
        Termination::Blowup { t } => Ok(Some(TrajectoryClass::Blowup { t })),
        Termination::TimeEnd | Termination::MaxSteps => {
            let xs: Vec<f64> = traj.events.iter().filter(|h| h.event == 1).map(|h| h.state[0]).collect();
            if xs.len() < 3 {
                return Ok(None);
            }
            let x_last = xs[xs.len() - 1];
            let d_last = (x_last - xs[xs.len() - 2]).abs();
            if d_last > 1e-5 * (1.0 + x_last.abs()) {
                return Ok(None);
            }
            // crossings have settled: equilibrium spiral or closed orbit?
            for eq in &eqs {
                let gap = (x_last - eq.x).abs();
                let closing = (xs[xs.len() - 1] - eq.x).abs() < (xs[xs.len() - 2] - eq.x).abs()
                    && (xs[xs.len() - 2] - eq.x).abs() < (xs[xs.len() - 3] - eq.x).abs();
                if gap < 1e-3 * (1.0 + eq.x.abs()) && closing {
                    return Ok(Some(TrajectoryClass::ConvergesToEquilibrium {
                        x: eq.x,
                        y: eq.y,
                        t: traj.final_t(),
                    }));
                }
            }
            match find_cycle(params, x_last, false) {
                Ok(mut cycle) => {
                    if let Ok(rep) = kolmogorov_floquet(params, &cycle) {
                        cycle.floquet_exponent = Some(rep.floquet_exponent);
                    }
                    Ok(Some(TrajectoryClass::LimitCycle { cycle }))
                }
                Err(_) => Ok(None),
            }
        }
    }
}

/// One application of the Poincaré return map on the decreasing-x section
/// of the line nullcline, from the section point with abscissa s.
pub(crate) fn return_map(
    params: &ProblemParams,
    s: f64,
    backward: bool,
) -> Result<(f64, f64, Trajectory)> {
    let dir = if backward { Direction::Falling } else { Direction::Rising };
    let events = vec![section_event(params, dir, true), exit_event()];
    let opts = IntegratorOptions::default();
    let t_end = if backward { -RETURN_MAP_SPAN } else { RETURN_MAP_SPAN };
    let y0 = [s, lnull(params, s)];
    let traj = integrate(params, y0, 0.0, t_end, &opts, &events, &[])?;
    match traj.termination {
        Termination::Event { index: 0, t, state } => Ok((state[0], t.abs(), traj)),
        other => Err(Error::NoCycleFound(format!(
            "return map from s = {s} did not re-cross the section ({other:?})"
        ))),
    }
}

/// Locates a periodic orbit as a fixed point of the return map.  Brackets
/// the fixed point by marching from the guess in the map's drift direction
/// (shrinking the step when a probe orbit fails to return), then closes in
/// by secant iteration alternated with bisection.  `backward` selects the
/// backward-time map (for repelling cycles).
pub fn find_cycle(params: &ProblemParams, s_guess: f64, backward: bool) -> Result<Cycle> {
    if !(s_guess > 0.0 && s_guess.is_finite()) {
        return Err(Error::NoCycleFound(format!("bad section guess {s_guess}")));
    }
    let f = |s: f64| -> Result<f64> { return_map(params, s, backward).map(|(ps, _, _)| ps - s) };

    let mut a = s_guess;
    let mut fa = f(a)?;
    let mut s_best = a;
    let mut f_best = fa.abs();

    if f_best > CYCLE_FIXED_POINT_TOL {
        // the map orientation is chosen so iteration drifts toward the
        // cycle, hence sgn(P(s)-s) points at the fixed point; a failed
        // probe means the step left the region of returning orbits
        let dir = fa.signum();
        let mut step = 0.01 * (1.0 + a.abs());
        let mut bracket = None;
        for _ in 0..CYCLE_MAX_ITERS {
            let c = a + dir * step;
            if c <= 0.0 {
                break;
            }
            match f(c) {
                Ok(fc) if fa * fc <= 0.0 => {
                    bracket = Some((c, fc));
                    break;
                }
                Ok(fc) => {
                    a = c;
                    fa = fc;
                    if fc.abs() < f_best {
                        f_best = fc.abs();
                        s_best = c;
                    }
                    step *= 1.7;
                }
                Err(_) => {
                    step *= 0.3;
                    if step < 1e-12 * (1.0 + a.abs()) {
                        break;
                    }
                }
            }
        }
        let Some((mut b, mut fb)) = bracket else {
            return Err(Error::NoCycleFound(format!(
                "no sign change of the return-map defect near s = {s_guess} (|P(s)-s| = {f_best:.3e})"
            )));
        };
        for it in 0..CYCLE_MAX_ITERS {
            if f_best <= CYCLE_FIXED_POINT_TOL || (b - a).abs() <= 1e-14 * (1.0 + a.abs()) {
                break;
            }
            let (lo, hi) = (a.min(b), a.max(b));
            let mut mid = if it % 2 == 0 && (fb - fa).abs() > 1e-300 {
                b - fb * (b - a) / (fb - fa)
            } else {
                0.5 * (lo + hi)
            };
            if !mid.is_finite() || mid <= lo || mid >= hi {
                mid = 0.5 * (lo + hi);
            }
            let fm = f(mid)?;
            if fm.abs() < f_best {
                f_best = fm.abs();
                s_best = mid;
            }
            if fa * fm <= 0.0 {
                b = mid;
                fb = fm;
            } else {
                a = mid;
                fa = fm;
            }
        }
    }

    if f_best > CYCLE_FIXED_POINT_TOL {
        return Err(Error::NoCycleFound(format!(
            "return map fixed point not resolved: |P(s)-s| = {f_best:.3e} at s = {s_best}"
        )));
    }

    let (_, period, traj) = return_map(params, s_best, backward)?;
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for st in &traj.states {
        x_min = x_min.min(st[0]);
        x_max = x_max.max(st[0]);
    }
    let amplitude = 0.5 * (x_max - x_min);
    if amplitude < 1e-6 * (1.0 + s_best) {
        return Err(Error::NoCycleFound(format!(
            "return-map fixed point at s = {s_best} has no amplitude (equilibrium, not a cycle)"
        )));
    }
    // isolated unless a displaced section point is also (nearly) fixed;
    // probe inward so a center orbit near its separatrix stays in the family
    let probe = s_best - 0.05 * amplitude;
    let isolated = match f(probe) {
        Ok(fp) => fp.abs() > 1e-6 * (1.0 + probe),
        Err(_) => true,
    };

    Ok(Cycle {
        x_section: s_best,
        period,
        x_min,
        x_max,
        backward,
        isolated,
        floquet_exponent: None,
    })
}

const GL_NODES: [f64; 5] = [
    -0.906179845938664,
    -0.5384693101056831,
    0.0,
    0.5384693101056831,
    0.906179845938664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.23692688505618908,
    0.47862867049936647,
    0.5688888888888889,
    0.47862867049936647,
    0.23692688505618908,
];

/// Consistency report for a periodic orbit, tying the planar divergence
/// integral to the Kolmogorov-coordinates one and to the equilibrium-
/// referenced mean identities:
///   I_xy      = ∮ (q M y^{(p-1)/(p+1)} - L) dt
///   I_sigma_z = ∮ ((2-p)σ + 2 - z + M (p-1) J/(p+1)) dt
///   ∮ (z - z_M) dt = -M ∮ (J - J_M) dt
///   I/τ = q M Y_M^{(p-1)/(p+1)} - L - (q/τ) ∮ (z - z_M) dt
/// with J = y^{(p-1)/(p+1)}, z = x^p/y, σ = y/x and ∮ σ dt = 2τ/(p-1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloquetReport {
    pub tau: f64,
    pub y_mean: f64,
    pub j_mean: f64,
    pub z_mean: f64,
    pub sigma_mean: f64,
    pub i_xy: f64,
    pub i_sigma_z: f64,
    pub divergence_mismatch: f64,
    pub m14_residual: f64,
    pub m17_residual: f64,
    pub sigma_bar_residual: f64,
    /// (mean of y)^{(p-1)/(p+1)} - mean of y^{(p-1)/(p+1)} (>= 0 by Jensen)
    pub jensen_gap: f64,
    pub floquet_exponent: f64,
    pub attracting: bool,
}

pub fn kolmogorov_floquet(params: &ProblemParams, cycle: &Cycle) -> Result<FloquetReport> {
    let p = params.p;
    let c = derive_constants(params);

    // one closed loop, forward in time
    let events = vec![section_event(params, Direction::Rising, true)];
    let opts = IntegratorOptions::default();
    let s = cycle.x_section;
    let traj = integrate(
        params,
        [s, lnull(params, s)],
        0.0,
        2.0 * cycle.period + 10.0,
        &opts,
        &events,
        &[],
    )?;
    let tau = match traj.termination {
        Termination::Event { t, .. } => t,
        other => {
            return Err(Error::NoCycleFound(format!(
                "periodic orbit did not close within 2 periods ({other:?})"
            )))
        }
    };

    let mut i_y = 0.0;
    let mut i_j = 0.0;
    let mut i_z = 0.0;
    let mut i_sigma = 0.0;
    for step in &traj.steps {
        let h = step.h();
        for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let t = step.t0 + 0.5 * h * (1.0 + node);
            let [x, y] = step.eval(t);
            let wh = 0.5 * h * w;
            i_y += wh * y;
            i_j += wh * y.powf((p - 1.0) / (p + 1.0));
            i_z += wh * x.powf(p) / y;
            i_sigma += wh * y / x;
        }
    }

    let eqs = find_equilibria(params);
    let enclosed: Vec<_> = eqs.iter().filter(|e| cycle.x_min < e.x && e.x < cycle.x_max).collect();
    let eq = enclosed
        .iter()
        .min_by(|a, b| {
            let mid = 0.5 * (cycle.x_min + cycle.x_max);
            (a.x - mid).abs().partial_cmp(&(b.x - mid).abs()).unwrap()
        })
        .ok_or_else(|| Error::NoCycleFound("cycle encloses no equilibrium".into()))?;
    let y_m = eq.y;
    let j_m = y_m.powf((p - 1.0) / (p + 1.0));
    let z_m = ((p - 1.0) / 2.0f64).powf(p) * y_m.powf(p - 1.0);

    let i_xy = c.q * params.m * i_j - c.l * tau;
    let i_sigma_z = (2.0 - p) * i_sigma + 2.0 * tau - i_z + params.m * (p - 1.0) * i_j / (p + 1.0);

    let zbar = i_z - z_m * tau;
    let m14_lhs = zbar;
    let m14_rhs = -params.m * (i_j - j_m * tau);
    let m17_lhs = i_sigma_z / tau;
    let m17_rhs = c.q * params.m * j_m - c.l - (c.q / tau) * zbar;

    let y_mean = i_y / tau;
    let j_mean = i_j / tau;

    Ok(FloquetReport {
        tau,
        y_mean,
        j_mean,
        z_mean: i_z / tau,
        sigma_mean: i_sigma / tau,
        i_xy,
        i_sigma_z,
        divergence_mismatch: (i_xy - i_sigma_z).abs() / (1.0 + i_xy.abs()),
        m14_residual: (m14_lhs - m14_rhs).abs() / (1.0 + m14_lhs.abs()),
        m17_residual: (m17_lhs - m17_rhs).abs() / (1.0 + m17_lhs.abs()),
        sigma_bar_residual: (i_sigma - 2.0 * tau / (p - 1.0)).abs() / tau,
        jensen_gap: y_mean.powf((p - 1.0) / (p + 1.0)) - j_mean,
        floquet_exponent: i_xy,
        attracting: i_xy < 0.0,
    })
}

/// Worst violation of the one-crossing property: along the trajectory,
/// wherever sigma = y/x >= 2/(p-1), sigma must be nondecreasing.  Returns
/// the maximum of -sigma_t over qualifying nodes (<= 0 means monotone),
/// or None if the trajectory never reaches sigma >= 2/(p-1).
pub fn sigma_monotonicity_check(params: &ProblemParams, traj: &Trajectory) -> Option<f64> {
    let threshold = 2.0 / (params.p - 1.0);
    let mut worst: Option<f64> = None;
    for st in &traj.states {
        let (x, y) = (st[0], st[1]);
        if x <= 0.0 || y <= 0.0 {
            continue;
        }
        if y / x < threshold {
            continue;
        }
        let [xt, yt] = eval_h(params, x, y);
        let sigma_t = yt / x - y * xt / (x * x);
        let v = -sigma_t;
        worst = Some(match worst {
            Some(w) => w.max(v),
            None => v,
        });
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::seed_regular;
    use crate::params::critical_constants;

    fn params(n: u32, p: f64, m: f64) -> ProblemParams {
        ProblemParams::new(n, p, m).unwrap()
    }

    #[test]
    fn t_reg_converges_to_equilibrium_small_positive_m() {
        let pr = params(3, 7.0, 0.1);
        let seed = seed_regular(&pr, 1e-3).unwrap();
        let class = classify_limit(&pr, &seed, DEFAULT_CLASSIFY_SPAN).unwrap();
        let eq = find_equilibria(&pr)[0];
        match class {
            TrajectoryClass::ConvergesToEquilibrium { x, y, .. } => {
                assert!((x - eq.x).abs() < 1e-3 && (y - eq.y).abs() < 1e-3);
            }
            other => panic!("expected equilibrium convergence, got {other:?}"),
        }
    }

    #[test]
    fn t_reg_limit_cycle_past_hopf() {
        let mb = critical_constants(&params(3, 7.0, 0.0)).m_bar.unwrap();
        let pr = params(3, 7.0, mb + 0.01);
        let seed = seed_regular(&pr, 1e-3).unwrap();
        let class = classify_limit(&pr, &seed, DEFAULT_CLASSIFY_SPAN).unwrap();
        match class {
            TrajectoryClass::LimitCycle { cycle } => {
                assert!(cycle.isolated);
                assert!(!cycle.backward);
                let eq = find_equilibria(&pr)[0];
                assert!(cycle.x_min < eq.x && eq.x < cycle.x_max, "cycle must enclose P");
                assert!(cycle.floquet_exponent.unwrap() < 0.0, "attracting cycle");
            }
            other => panic!("expected limit cycle, got {other:?}"),
        }
    }

    #[test]
    fn t_reg_exits_for_large_m() {
        let cc = critical_constants(&params(3, 7.0, 0.0));
        let pr = params(3, 7.0, 2.0 * cc.m_node_hi.unwrap());
        let seed = seed_regular(&pr, 1e-3).unwrap();
        let class = classify_limit(&pr, &seed, DEFAULT_CLASSIFY_SPAN).unwrap();
        match class {
            TrajectoryClass::ExitsQuadrant { state, .. } => {
                assert!(state[0].abs() < 1e-9, "exit through x = 0, got {state:?}");
                assert!(state[1] > 0.0);
            }
            other => panic!("expected quadrant exit, got {other:?}"),
        }
    }

    #[test]
    fn t_reg_exits_in_no_ground_state_band() {
        for m in [-0.5, -1.1905507889761495, -1.25] {
            let pr = params(3, 2.0, m);
            let seed = seed_regular(&pr, 1e-3).unwrap();
            let class = classify_limit(&pr, &seed, DEFAULT_CLASSIFY_SPAN).unwrap();
            assert!(
                matches!(class, TrajectoryClass::ExitsQuadrant { .. }),
                "M={m}: expected exit, got {class:?}"
            );
        }
    }

    #[test]
    fn t_reg_captured_below_m1() {
        let pr = params(3, 2.0, -3.0);
        let seed = seed_regular(&pr, 1e-3).unwrap();
        let class = classify_limit(&pr, &seed, DEFAULT_CLASSIFY_SPAN).unwrap();
        let eqs = find_equilibria(&pr);
        match class {
            TrajectoryClass::ConvergesToEquilibrium { x, .. } => {
                assert!((x - eqs[1].x).abs() < 1e-3 * (1.0 + eqs[1].x), "lands on P2");
            }
            other => panic!("expected convergence to P2, got {other:?}"),
        }
    }

    #[test]
    fn floquet_identities_on_attracting_cycle() {
        let mb = critical_constants(&params(3, 7.0, 0.0)).m_bar.unwrap();
        let pr = params(3, 7.0, mb + 0.02);
        let seed = seed_regular(&pr, 1e-3).unwrap();
        let class = classify_limit(&pr, &seed, DEFAULT_CLASSIFY_SPAN).unwrap();
        let cycle = match class {
            TrajectoryClass::LimitCycle { cycle } => cycle,
            other => panic!("expected cycle, got {other:?}"),
        };
        let rep = kolmogorov_floquet(&pr, &cycle).unwrap();
        assert!(rep.divergence_mismatch < 1e-6, "divergence mismatch {}", rep.divergence_mismatch);
        assert!(rep.m14_residual < 1e-6, "m14 residual {}", rep.m14_residual);
        assert!(rep.m17_residual < 1e-6, "m17 residual {}", rep.m17_residual);
        assert!(rep.sigma_bar_residual < 1e-6, "sigma mean {}", rep.sigma_bar_residual);
        assert!(rep.jensen_gap > -1e-9, "Jensen gap {}", rep.jensen_gap);
        assert!(rep.attracting && rep.floquet_exponent < 0.0);
        assert!((rep.sigma_mean - 2.0 / (pr.p - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn center_family_not_isolated() {
        // Sobolev-critical M = 0: every orbit around P is closed.
        let pr = params(3, 5.0, 0.0);
        let eq = find_equilibria(&pr)[0];
        let s = eq.x * 1.3;
        let cycle = find_cycle(&pr, s, false).unwrap();
        assert!(!cycle.isolated, "center orbits are not isolated");
        let rep = kolmogorov_floquet(&pr, &cycle).unwrap();
        assert!(rep.floquet_exponent.abs() < 1e-6, "conservative loop: {}", rep.floquet_exponent);
    }

    #[test]
    fn repelling_cycle_via_backward_map() {
        // (3, 2): the weak focus at m_bar is a weak source; slightly below
        // m_bar the second equilibrium is a sink surrounded by a repelling
        // cycle, visible to the backward-time return map.
        let mb = critical_constants(&params(3, 2.0, 0.0)).m_bar.unwrap();
        let pr = params(3, 2.0, mb - 0.02);
        let eqs = find_equilibria(&pr);
        let p2 = eqs[1];
        // harvest a guess by running the backward map from near P2
        let mut s_guess = p2.x * 1.02;
        for _ in 0..40 {
            match return_map(&pr, s_guess, true) {
                Ok((ps, _, _)) => {
                    if (ps - s_guess).abs() < 1e-9 * (1.0 + s_guess) {
                        break;
                    }
                    s_guess = ps;
                }
                Err(e) => panic!("backward map failed: {e}"),
            }
        }
        let cycle = find_cycle(&pr, s_guess, true).unwrap();
        assert!(cycle.isolated);
        assert!(cycle.x_min < p2.x && p2.x < cycle.x_max);
        let rep = kolmogorov_floquet(&pr, &cycle).unwrap();
        assert!(rep.floquet_exponent > 0.0, "repelling cycle, got {}", rep.floquet_exponent);
    }

    #[test]
    fn sigma_monotone_at_critical_m() {
        let mu = critical_constants(&params(3, 2.0, 0.0)).mu_star.unwrap();
        let pr = params(3, 2.0, -mu);
        let seed = seed_regular(&pr, 1e-3).unwrap();
        let events = vec![exit_event()];
        let opts = IntegratorOptions::default();
        let traj =
            integrate(&pr, seed.state, seed.t0, seed.t0 + 400.0, &opts, &events, &[]).unwrap();
        let worst = sigma_monotonicity_check(&pr, &traj).expect("trajectory crosses the line");
        assert!(worst <= 1e-9, "sigma decreased above the line: {worst}");
    }

    #[test]
    fn undetermined_on_hopeless_span() {
        // A tiny span cannot resolve the fate near the weak focus.
        let mb = critical_constants(&params(3, 7.0, 0.0)).m_bar.unwrap();
        let pr = params(3, 7.0, mb);
        let seed = seed_regular(&pr, 1e-3).unwrap();
        let res = classify_limit(&pr, &seed, 1.0);
        assert!(matches!(res, Err(Error::UndeterminedTrajectory(_))), "{res:?}");
    }
}
