use crate::equilibria::{classify_equilibrium, Equilibrium, EquilibriumKind};
use crate::error::{Error, Result};
use crate::params::{derive_constants, ProblemParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub t0: f64,
    pub state: [f64; 2],
    /// Estimated relative size of the first neglected term of the
    /// expansion behind the seed (0 for eigenvector seeds).
    pub truncation: f64,
}

pub fn default_seed_eps(anchor: [f64; 2]) -> f64 {
    1e-7 * (1.0 + (anchor[0].powi(2) + anchor[1].powi(2)).sqrt())
}

/// Second-order coefficient of the regular expansion:
///   x(t) = e^{2t/(p-1)} (1 - e^{2t}/(2N) - C e^{(q+2)t})
///   y(t) = e^{2pt/(p-1)} (1/N + (q+2) C e^{qt})
/// matching u(r) = 1 - r²/(2N) - ... with the gradient correction.
fn regular_c(params: &ProblemParams) -> f64 {
    let p = params.p;
    let n = params.nf();
    let q = derive_constants(params).q;
    params.m * (p + 1.0) / ((q + 2.0) * (n * (p + 1.0) + 2.0 * p) * n.powf(q))
}

/// Default seeding offset for T_reg.  The expansion is in powers of
/// r = delta^{(p-1)/2}, so for p near 1 a fixed delta leaves r large and
/// the neglected r^4 term visible; aim for r ~ 0.05 instead.
pub fn regular_delta(p: f64) -> f64 {
    0.05f64.powf(2.0 / (p - 1.0)).clamp(1e-12, 1e-3)
}

/// Seed for the regular trajectory T_reg (the solution with u(0) = 1,
/// u'(0) = 0), placed where e^{2 t0/(p-1)} = delta.
pub fn seed_regular(params: &ProblemParams, delta: f64) -> Result<Seed> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::RegimeUndefined(format!("delta = {delta} not in (0, 0.5]")));
    }
    let p = params.p;
    let n = params.nf();
    let q = derive_constants(params).q;
    let c = regular_c(params);
    let t0 = 0.5 * (p - 1.0) * delta.ln();

    let e2 = (2.0 * t0).exp();
    let eq2 = ((q + 2.0) * t0).exp();
    let eqq = (q * t0).exp();
    let x = delta * (1.0 - e2 / (2.0 * n) - c * eq2);
    let y = (2.0 * p * t0 / (p - 1.0)).exp() * (1.0 / n + (q + 2.0) * c * eqq);

    // retained relative corrections; the first neglected one is their square
    let corr = e2 / (2.0 * n) + c.abs() * eq2 + n * (q + 2.0) * c.abs() * eqq;
    Ok(Seed { t0, state: [x, y], truncation: corr * corr })
}

/// Seed on the stable manifold of the origin (eigenvalue -K, K > 0),
/// tangent to (1, N-2); trace backward from here to follow T_st.
pub fn seed_origin_stable(params: &ProblemParams, eps: f64) -> Result<Seed> {
    let c = derive_constants(params);
    if c.k <= 0.0 {
        return Err(Error::BadK(format!(
            "origin has no stable direction in the quadrant for K = {} <= 0",
            c.k
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::RegimeUndefined(format!("eps = {eps} must be positive")));
    }
    let n = params.nf();
    let norm = (1.0 + (n - 2.0) * (n - 2.0)).sqrt();
    Ok(Seed { t0: 0.0, state: [eps / norm, eps * (n - 2.0) / norm], truncation: 0.0 })
}

/// Seed on the slow unstable direction of the origin for K < 0 (a
/// repelling node; every quadrant orbit leaves tangent to this direction).
/// For N >= 3 this is the eigendirection (1, N-2) of -K; for N = 1 the
/// slow mode is 2/(p-1) with direction (1, 0).  N = 2 is the Jordan-block
/// case x(t) = -t e^{lambda t}, y(t) = e^{lambda t}: the seed solves
/// |t0| e^{lambda t0} = eps on the deep branch t0 < -1/lambda.
pub fn seed_origin_slow(params: &ProblemParams, eps: f64) -> Result<Seed> {
    let c = derive_constants(params);
    if c.k >= 0.0 {
        return Err(Error::BadK(format!("slow-exit seeding needs K < 0, got K = {}", c.k)));
    }
    if !(eps > 0.0 && eps < 0.1) {
        return Err(Error::RegimeUndefined(format!("eps = {eps} not in (0, 0.1)")));
    }
    match params.n {
        1 => Ok(Seed { t0: 0.0, state: [eps, 0.0], truncation: 0.0 }),
        2 => {
            let lambda = 2.0 / (params.p - 1.0);
            let mut t0 = -2.0 / lambda;
            for _ in 0..200 {
                let next = (eps.ln() - (-t0).ln()) / lambda;
                if (next - t0).abs() < 1e-15 * t0.abs() {
                    t0 = next;
                    break;
                }
                t0 = next;
            }
            let y = eps / (-t0);
            Ok(Seed { t0, state: [eps, y], truncation: 1.0 / t0.abs() })
        }
        _ => {
            let n = params.nf();
            let norm = (1.0 + (n - 2.0) * (n - 2.0)).sqrt();
            Ok(Seed { t0: 0.0, state: [eps / norm, eps * (n - 2.0) / norm], truncation: 0.0 })
        }
    }
}

/// The four local separatrix seeds of a saddle equilibrium.  Eigenvectors
/// are v(lambda) = (1, 2/(p-1) - lambda) normalised with positive x
/// component; the stable branch has slope 2/(p-1) + |lambda_s| (steeper
/// than the line nullcline), the unstable one slope 2/(p-1) - lambda_u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleBranches {
    pub lambda_stable: f64,
    pub lambda_unstable: f64,
    pub v_stable: [f64; 2],
    pub v_unstable: [f64; 2],
    /// seed above the line nullcline on the stable branch (x > X)
    pub stable_plus: Seed,
    /// seed below it on the stable branch (x < X)
    pub stable_minus: Seed,
    /// unstable branch heading to larger x (toward the second equilibrium)
    pub unstable_plus: Seed,
    /// unstable branch heading toward the origin
    pub unstable_minus: Seed,
}

pub fn seed_saddle_branches(
    params: &ProblemParams,
    eq: &Equilibrium,
    eps: f64,
) -> Result<SaddleBranches> {
    let class = classify_equilibrium(params, eq)?;
    if class.kind != EquilibriumKind::Saddle {
        return Err(Error::NotASaddle(format!(
            "equilibrium at ({}, {}) classifies as {:?}",
            eq.x, eq.y, class.kind
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::RegimeUndefined(format!("eps = {eps} must be positive")));
    }
    let (l_s, l_u) = (class.eigenvalues.0.re, class.eigenvalues.1.re);
    debug_assert!(l_s < 0.0 && l_u > 0.0);
    let vec_of = |lam: f64| -> [f64; 2] {
        let v = [1.0, 2.0 / (params.p - 1.0) - lam];
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        [v[0] / n, v[1] / n]
    };
    let v_s = vec_of(l_s);
    let v_u = vec_of(l_u);
    let seed = |sign: f64, v: [f64; 2]| Seed {
        t0: 0.0,
        state: [eq.x + sign * eps * v[0], eq.y + sign * eps * v[1]],
        truncation: 0.0,
    };
    Ok(SaddleBranches {
        lambda_stable: l_s,
        lambda_unstable: l_u,
        v_stable: v_s,
        v_unstable: v_u,
        stable_plus: seed(1.0, v_s),
        stable_minus: seed(-1.0, v_s),
        unstable_plus: seed(1.0, v_u),
        unstable_minus: seed(-1.0, v_u),
    })
}
