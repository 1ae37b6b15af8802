use crate::error::{Error, Result};
use crate::field::{eval_h, region_of_with, Region};
use crate::integrator::Trajectory;
use crate::params::{critical_constants, derive_constants, ProblemParams};
use serde::{Deserialize, Serialize};

pub fn x_dot(params: &ProblemParams, x: f64, y: f64) -> f64 {
    2.0 * x / (params.p - 1.0) - y
}

/// Emden-type energy F = x_t²/2 + |x|^{p+1}/(p+1) - K x²/(p-1);
/// along the flow F_t = -(L x_t + M y^q) x_t.
pub fn f_functional(params: &ProblemParams, x: f64, y: f64) -> f64 {
    let p = params.p;
    let k = derive_constants(params).k;
    let xt = x_dot(params, x, y);
    0.5 * xt * xt + x.abs().powf(p + 1.0) / (p + 1.0) - k * x * x / (p - 1.0)
}

pub fn f_derivative(params: &ProblemParams, x: f64, y: f64) -> f64 {
    let c = derive_constants(params);
    let xt = x_dot(params, x, y);
    -(c.l * xt + params.m * y.abs().powf(c.q)) * xt
}

/// Dual energy V = K x²/(p-1) - |x|^{p+1}/(p+1)
///   - M (2/(p-1))^q (p+1) |x|^{q+1}/(3p+1) - x_t²/2;
/// along the flow V_t = L x_t² - M ((2x/(p-1))^q - y^q) x_t, so V is
/// monotone on the quadrant when L and -M have the same sign.
pub fn v_functional(params: &ProblemParams, x: f64, y: f64) -> f64 {
    let p = params.p;
    let c = derive_constants(params);
    let xt = x_dot(params, x, y);
    let cv = (2.0 / (p - 1.0)).powf(c.q) * (p + 1.0) / (3.0 * p + 1.0);
    c.k * x * x / (p - 1.0) - x.abs().powf(p + 1.0) / (p + 1.0)
        - params.m * cv * x.abs().powf(c.q + 1.0)
        - 0.5 * xt * xt
}

pub fn v_derivative(params: &ProblemParams, x: f64, y: f64) -> f64 {
    let p = params.p;
    let c = derive_constants(params);
    let xt = x_dot(params, x, y);
    let lterm = (2.0 * x / (p - 1.0)).abs().powf(c.q) - y.abs().powf(c.q);
    c.l * xt * xt - params.m * lterm * xt
}

fn a_coefficient(params: &ProblemParams) -> f64 {
    2.0 * (params.p + 1.0) * (params.nf() - 1.0) / (params.p + 3.0)
}

fn lambda_z(params: &ProblemParams) -> f64 {
    2.0 * (params.p + 1.0) * derive_constants(params).l / (params.p + 3.0)
}

fn w_kernel(params: &ProblemParams, x: f64, y: f64) -> f64 {
    let p = params.p;
    let q = derive_constants(params).q;
    let a = a_coefficient(params);
    0.5 * (p + 1.0) * y * y + x.abs().powf(p + 1.0) - a * x * y
        + params.m * x * y.abs().powf(q)
}

/// Anisotropic energy Z = r^a ((p+1)u_r²/2 + u^{p+1} + a u u_r/r
/// + M u |u_r|^{2p/(p+1)}) = e^{2(p+1)Lt/(p+3)} W(x, y).
pub fn z_functional(params: &ProblemParams, t: f64, x: f64, y: f64) -> f64 {
    (lambda_z(params) * t).exp() * w_kernel(params, x, y)
}

/// Both sides of the differential relation satisfied by Z:
///   Z_r - q M |u_r|^{(p-1)/(p+1)} Z = r^{a-1} U,
///   U = (2(N-1)(p²-1)/(p+3)²) (u|u_r|/r) (-L + (p(p+3)/(p+1)²) M r |u_r|^{(p-1)/(p+1)})
/// written out in (t, x, y).  Dividing by the common r-power, the relation
/// is the algebraic identity returned by `z_relation_residual`.
pub fn z_relation_sides(params: &ProblemParams, t: f64, x: f64, y: f64) -> (f64, f64) {
    let lam = lambda_z(params);
    let (b_lhs, b_rhs) = z_relation_kernels(params, x, y);
    let factor = ((lam - 1.0) * t).exp();
    (factor * b_lhs, factor * b_rhs)
}

fn z_relation_kernels(params: &ProblemParams, x: f64, y: f64) -> (f64, f64) {
    let p = params.p;
    let n = params.nf();
    let c = derive_constants(params);
    let a = a_coefficient(params);
    let lam = lambda_z(params);
    let q = c.q;

    let w = w_kernel(params, x, y);
    let [xt, yt] = eval_h(params, x, y);
    let dwdx = (p + 1.0) * x.abs().powf(p - 1.0) * x - a * y + params.m * y.abs().powf(q);
    let dwdy = (p + 1.0) * y - a * x + q * params.m * x * y.abs().powf(q - 1.0) * y.signum();
    let w_t = dwdx * xt + dwdy * yt;
    let ypow = y.abs().powf(q - 1.0);

    let b_lhs = lam * w + w_t - q * params.m * ypow * w;
    let cu = 2.0 * (n - 1.0) * (p * p - 1.0) / (p + 3.0) / (p + 3.0);
    let d = p * (p + 3.0) / (p + 1.0) / (p + 1.0);
    let b_rhs = cu * x * y * (-c.l + d * params.m * ypow);
    (b_lhs, b_rhs)
}

/// Normalized defect of the Z relation at a point; identically zero (up to
/// rounding) everywhere by construction of Z.
pub fn z_relation_residual(params: &ProblemParams, x: f64, y: f64) -> f64 {
    let (b_lhs, b_rhs) = z_relation_kernels(params, x, y);
    let scale = 1.0 + b_lhs.abs().max(b_rhs.abs()).max(w_kernel(params, x, y).abs());
    (b_lhs - b_rhs).abs() / scale
}

/// Pohozaev-type functional G = r^{-2(p+1)/(p-1)} (y² - q x^{p+1})/2.
pub fn g_functional(params: &ProblemParams, t: f64, x: f64, y: f64) -> f64 {
    (-2.0 * (params.p + 1.0) * t / (params.p - 1.0)).exp() * 0.5 * g_kernel(params, x, y)
}

/// Sign-carrying kernel of G (the prefactor is positive).
pub fn g_kernel(params: &ProblemParams, x: f64, y: f64) -> f64 {
    y * y - derive_constants(params).q * x.abs().powf(params.p + 1.0)
}

/// Conserved energy of the Sobolev-critical gradient-free system
/// (M = 0, p = (N+2)/(N-2)): E = y²/2 + x^{p+1}/(p+1) - (N-2)/2 xy.
pub fn e_sobolev(params: &ProblemParams, x: f64, y: f64) -> Result<f64> {
    let n = params.nf();
    if params.n < 3 {
        return Err(Error::RegimeMismatch(format!(
            "Sobolev-critical energy needs N >= 3, got N = {}",
            params.n
        )));
    }
    let p_crit = (n + 2.0) / (n - 2.0);
    if (params.p - p_crit).abs() > 1e-12 * p_crit || params.m.abs() > 1e-12 {
        return Err(Error::RegimeMismatch(format!(
            "energy is conserved only at p = {p_crit}, M = 0 (got p = {}, M = {})",
            params.p, params.m
        )));
    }
    Ok(0.5 * y * y + x.abs().powf(params.p + 1.0) / (params.p + 1.0) - 0.5 * (n - 2.0) * x * y)
}

/// Asymptotic floor for persistent trajectories:
/// liminf x >= (2(p+1)/(p(p-1)²))^{1/(p-1)}.
pub fn m21_bound(params: &ProblemParams) -> f64 {
    let p = params.p;
    (2.0 * (p + 1.0) / (p * (p - 1.0) * (p - 1.0))).powf(1.0 / (p - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSample {
    pub t: f64,
    pub r: f64,
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub ur: f64,
    pub region: Region,
    pub f: f64,
    pub v: f64,
    pub z: f64,
    pub g: f64,
}

pub fn eval_diagnostics(params: &ProblemParams, traj: &Trajectory) -> Vec<DiagnosticSample> {
    let p = params.p;
    let y_first = crate::equilibria::find_equilibria(params).first().map(|e| e.y);
    traj.ts
        .iter()
        .zip(&traj.states)
        .map(|(&t, &[x, y])| {
            let r = t.exp();
            DiagnosticSample {
                t,
                r,
                x,
                y,
                u: r.powf(-2.0 / (p - 1.0)) * x,
                ur: -r.powf(-(p + 1.0) / (p - 1.0)) * y,
                region: region_of_with(params, y_first, x, y),
                f: f_functional(params, x, y),
                v: v_functional(params, x, y),
                z: z_functional(params, t, x, y),
                g: g_functional(params, t, x, y),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VTrend {
    NonIncreasing,
    NonDecreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VMonotonicity {
    pub trend: VTrend,
    /// maximum signed violation of the expected V_t sign over the
    /// trajectory nodes (<= 0 means the monotonicity holds everywhere)
    pub worst_violation: f64,
}

/// V is nonincreasing when M >= 0 and L <= 0, nondecreasing when M <= 0
/// and L >= 0; other sign combinations are rejected.
pub fn check_v_monotonicity(params: &ProblemParams, traj: &Trajectory) -> Result<VMonotonicity> {
    let l = derive_constants(params).l;
    let trend = if params.m >= 0.0 && l <= 0.0 {
        VTrend::NonIncreasing
    } else if params.m <= 0.0 && l >= 0.0 {
        VTrend::NonDecreasing
    } else {
        return Err(Error::RegimeMismatch(format!(
            "V is monotone only when L and -M share a sign (L = {l}, M = {})",
            params.m
        )));
    };
    let sign = match trend {
        VTrend::NonIncreasing => 1.0,
        VTrend::NonDecreasing => -1.0,
    };
    let mut worst = f64::NEG_INFINITY;
    for st in &traj.states {
        let vt = v_derivative(params, st[0], st[1]);
        worst = worst.max(sign * vt / (1.0 + vt.abs()));
    }
    Ok(VMonotonicity { trend, worst_violation: worst })
}

/// Largest Z-relation defect over dense samples of the trajectory.
pub fn check_z_relation(params: &ProblemParams, traj: &Trajectory, per_step: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for st in &traj.states {
        worst = worst.max(z_relation_residual(params, st[0], st[1]));
    }
    for step in &traj.steps {
        for i in 1..=per_step {
            let t = step.t0 + step.h() * i as f64 / (per_step as f64 + 1.0);
            let s = step.eval(t);
            worst = worst.max(z_relation_residual(params, s[0], s[1]));
        }
    }
    worst
}

/// Largest value of the G kernel along the trajectory; applicable (and
/// expected negative) for M <= -mu_star(1) when N >= 2, or M < -mu_star(1)
/// when N = 1.
pub fn check_g_negative(params: &ProblemParams, traj: &Trajectory) -> Result<f64> {
    let mu1 = critical_constants(params).mu_star_1;
    let ok = if params.n >= 2 {
        params.m <= -mu1 + 1e-12 * mu1
    } else {
        params.m < -mu1 - 1e-12 * mu1
    };
    if !ok {
        return Err(Error::RegimeMismatch(format!(
            "negativity of G requires M {} -mu_star(1) = {} (got M = {})",
            if params.n >= 2 { "<=" } else { "<" },
            -mu1,
            params.m
        )));
    }
    let mut worst = f64::NEG_INFINITY;
    for st in &traj.states {
        worst = worst.max(g_kernel(params, st[0], st[1]));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{integrate, IntegratorOptions};
    use crate::manifolds::seed_regular;

    fn params(n: u32, p: f64, m: f64) -> ProblemParams {
        ProblemParams::new(n, p, m).unwrap()
    }

    fn run(pr: &ProblemParams, y0: [f64; 2], t0: f64, t1: f64) -> Trajectory {
        integrate(pr, y0, t0, t1, &IntegratorOptions::default(), &[], &[]).unwrap()
    }

    /// Integration clipped to the closed quadrant (terminal at the axes).
    fn run_in_q(pr: &ProblemParams, y0: [f64; 2], t0: f64, t1: f64) -> Trajectory {
        use crate::integrator::{Direction, EventSpec};
        let events = [
            EventSpec::new("x=0", Direction::Falling, true, |_t, s: [f64; 2]| s[0]),
            EventSpec::new("y=0", Direction::Falling, true, |_t, s: [f64; 2]| s[1]),
        ];
        integrate(pr, y0, t0, t1, &IntegratorOptions::default(), &events, &[]).unwrap()
    }

    #[test]
    fn f_and_v_derivatives_match_finite_differences() {
        let pr = params(3, 2.0, -2.0);
        let traj = run(&pr, [0.2, 0.1], 0.0, 3.0);
        for w in traj.ts.windows(2).step_by(7) {
            let (t0, t1) = (w[0], w[1]);
            let mid = 0.5 * (t0 + t1);
            let h = 1e-5;
            let sa = traj.sample(mid - h).unwrap();
            let sb = traj.sample(mid + h).unwrap();
            let sm = traj.sample(mid).unwrap();
            let df = (f_functional(&pr, sb[0], sb[1]) - f_functional(&pr, sa[0], sa[1])) / (2.0 * h);
            let dv = (v_functional(&pr, sb[0], sb[1]) - v_functional(&pr, sa[0], sa[1])) / (2.0 * h);
            assert!((df - f_derivative(&pr, sm[0], sm[1])).abs() < 1e-6 * (1.0 + df.abs()), "F_t");
            assert!((dv - v_derivative(&pr, sm[0], sm[1])).abs() < 1e-6 * (1.0 + dv.abs()), "V_t");
        }
    }

    #[test]
    fn v_monotone_by_regime() {
        // The sign claims hold on the quadrant, so clip at the axes.
        // M > 0, L <= 0: V nonincreasing.
        let pr = params(4, 3.0, 0.7);
        let seed = seed_regular(&pr, 1e-3).unwrap();
        let traj = run_in_q(&pr, seed.state, seed.t0, seed.t0 + 20.0);
        let rep = check_v_monotonicity(&pr, &traj).unwrap();
        assert_eq!(rep.trend, VTrend::NonIncreasing);
        assert!(rep.worst_violation <= 1e-12, "violation {}", rep.worst_violation);

        // M < 0, L >= 0: V nondecreasing.
        let pr = params(3, 7.0, -1.0);
        let seed = seed_regular(&pr, 1e-3).unwrap();
        let traj = run_in_q(&pr, seed.state, seed.t0, seed.t0 + 20.0);
        let rep = check_v_monotonicity(&pr, &traj).unwrap();
        assert_eq!(rep.trend, VTrend::NonDecreasing);
        assert!(rep.worst_violation <= 1e-12, "violation {}", rep.worst_violation);

        // mismatched signs rejected
        let pr = params(3, 7.0, 1.0);
        let traj = run(&pr, [0.3, 0.4], 0.0, 1.0);
        assert!(matches!(check_v_monotonicity(&pr, &traj), Err(Error::RegimeMismatch(_))));
    }

    #[test]
    fn v_derivative_vanishes_exactly_on_the_line() {
        let pr = params(3, 2.0, -2.0);
        for x in [0.3, 1.0, 2.5] {
            let y = 2.0 * x / (pr.p - 1.0);
            assert_eq!(v_derivative(&pr, x, y), 0.0);
        }
    }

    #[test]
    fn v_zero_locus_off_the_line_sits_on_h_curve() {
        // LM > 0 case: V_t = 0 off the line iff the difference quotient of
        // s -> s^q between 2x/(p-1) and y equals L/M.
        let pr = params(3, 2.0, -2.0);
        let c = derive_constants(&pr);
        let x = 1.0;
        let a = 2.0 * x / (pr.p - 1.0);
        // find y != a with v_derivative = 0 by bisection; the difference
        // quotient equals L/M = 1.5 below the slope of s^q at s = a, so the
        // second zero lies below the line
        let f = |y: f64| v_derivative(&pr, x, y);
        let (mut lo, mut hi) = (0.2, 1.5);
        assert!(f(lo) * f(hi) < 0.0, "bracket: {} {}", f(lo), f(hi));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let y = 0.5 * (lo + hi);
        let quot = (a.powf(c.q) - y.powf(c.q)) / (a - y);
        assert!(
            (quot - c.l / pr.m).abs() < 1e-6,
            "difference quotient {quot} vs L/M = {}",
            c.l / pr.m
        );
    }

    #[test]
    fn z_relation_holds_pointwise() {
        for &(n, p, m) in &[
            (3u32, 2.0, -2.0),
            (3, 7.0, 1.0),
            (3, 7.0, 0.5465113757551417),
            (2, 3.0, -1.0),
            (1, 3.0, -3.2),
            (11, 1.3, -1.0),
            (4, 3.0, 0.7),
        ] {
            let pr = params(n, p, m);
            for &(x, y) in &[(0.7, 0.4), (1.3, 2.9), (0.05, 0.9), (3.0, 0.2)] {
                let r = z_relation_residual(&pr, x, y);
                assert!(r < 1e-12, "Z-relation defect {r} at N={n} p={p} M={m} ({x},{y})");
            }
        }
    }

    #[test]
    fn z_relation_along_trajectory() {
        let pr = params(3, 2.0, -2.0);
        let seed = seed_regular(&pr, 1e-3).unwrap();
        let traj = run(&pr, seed.state, seed.t0, seed.t0 + 15.0);
        let worst = check_z_relation(&pr, &traj, 3);
        assert!(worst < 1e-12, "max Z-relation defect {worst}");
    }

    #[test]
    fn z_sides_scale_consistently() {
        let pr = params(3, 2.0, -2.0);
        let (l0, r0) = z_relation_sides(&pr, 0.0, 0.8, 0.6);
        assert!((l0 - r0).abs() < 1e-12 * (1.0 + l0.abs()));
        let (l1, r1) = z_relation_sides(&pr, 2.0, 0.8, 0.6);
        assert!((l1 - r1).abs() < 1e-10 * (1.0 + l1.abs()));
        // the t-dependence is a pure exponential factor
        let lam = 2.0 * (pr.p + 1.0) * derive_constants(&pr).l / (pr.p + 3.0);
        assert!((l1 / l0 - ((lam - 1.0) * 2.0).exp()).abs() < 1e-9 * (1.0 + (l1 / l0).abs()));
    }

    #[test]
    fn g_negative_and_floor_in_deep_negative_m() {
        let pr = params(3, 2.0, -3.0);
        let seed = seed_regular(&pr, 1e-3).unwrap();
        let traj = run(&pr, seed.state, seed.t0, seed.t0 + 60.0);
        let worst = check_g_negative(&pr, &traj).unwrap();
        assert!(worst < 0.0, "G kernel reached {worst}");
        // trajectory persists: its tail stays above the universal floor
        let floor = m21_bound(&pr);
        assert!((floor - 3.0).abs() < 1e-12, "floor at p = 2 is exactly 3");
        let tail = traj.final_state();
        assert!(tail[0] >= floor * (1.0 - 1e-3), "tail x = {} under floor {floor}", tail[0]);

        // regime guard
        let pr2 = params(3, 2.0, -1.0);
        let traj2 = run(&pr2, [0.2, 0.1], 0.0, 1.0);
        assert!(matches!(check_g_negative(&pr2, &traj2), Err(Error::RegimeMismatch(_))));
    }

    #[test]
    fn sobolev_energy_conserved() {
        let pr = params(3, 5.0, 0.0);
        let e0 = e_sobolev(&pr, 1.0, 0.3).unwrap();
        let traj = run(&pr, [1.0, 0.3], 0.0, 30.0);
        for st in &traj.states {
            let e = e_sobolev(&pr, st[0], st[1]).unwrap();
            assert!((e - e0).abs() < 1e-9 * (1.0 + e0.abs()), "E drift: {e} vs {e0}");
        }
        assert!(e_sobolev(&params(3, 4.0, 0.0), 1.0, 0.3).is_err());
        assert!(e_sobolev(&params(3, 5.0, 0.1), 1.0, 0.3).is_err());
        assert!(e_sobolev(&params(2, 3.0, 0.0), 1.0, 0.3).is_err());
    }

    #[test]
    fn diagnostic_samples_consistent() {
        let pr = params(3, 7.0, 1.0);
        let seed = seed_regular(&pr, 1e-3).unwrap();
        let traj = run(&pr, seed.state, seed.t0, seed.t0 + 5.0);
        let samples = eval_diagnostics(&pr, &traj);
        assert_eq!(samples.len(), traj.ts.len());
        for s in &samples {
            assert!((s.r - s.t.exp()).abs() <= 1e-12 * s.r);
            assert!((s.u * s.r.powf(2.0 / (pr.p - 1.0)) - s.x).abs() < 1e-12 * (1.0 + s.x.abs()));
            assert!(s.f.is_finite() && s.v.is_finite() && s.z.is_finite() && s.g.is_finite());
        }
        // early samples sit below the line nullcline (region B or C)
        assert!(matches!(samples[0].region, Region::B | Region::C));
    }
}
