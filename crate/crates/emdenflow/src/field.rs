use crate::equilibria::find_equilibria;
use crate::error::{Error, Result};
use crate::params::{derive_constants, ProblemParams};
use serde::{Deserialize, Serialize};

/// Planar field of the autonomous system in (x, y) = (r^{2/(p-1)} u, -r^{(p+1)/(p-1)} u_r),
/// t = log r:
///   x_t = 2x/(p-1) - y
///   y_t = -K y + |x|^{p-1} x + M |y|^{2p/(p+1)}
/// The powers are extended off the first quadrant so the field stays C¹
/// (the exponents p and q = 2p/(p+1) both exceed 1).
pub fn eval_h(params: &ProblemParams, x: f64, y: f64) -> [f64; 2] {
    let p = params.p;
    let c = derive_constants(params);
    [
        2.0 * x / (p - 1.0) - y,
        -c.k * y + x.abs().powf(p - 1.0) * x + params.m * y.abs().powf(c.q),
    ]
}

pub fn eval_h_jacobian(params: &ProblemParams, x: f64, y: f64) -> [[f64; 2]; 2] {
    let p = params.p;
    let c = derive_constants(params);
    [
        [2.0 / (p - 1.0), -1.0],
        [
            p * x.abs().powf(p - 1.0),
            -c.k + c.q * params.m * y.abs().powf(c.q - 1.0) * y.signum(),
        ],
    ]
}

/// Kolmogorov form in sigma = y/x, z = x^p / y:
///   sigma_t = sigma (sigma + 2 - N + z + M J)
///   z_t     = z (N - p sigma - z - M J)
/// with the common nonsmooth factor J = (sigma^p z)^{1/(p+1)} = y^{(p-1)/(p+1)}.
pub fn eval_v(params: &ProblemParams, sigma: f64, z: f64) -> [f64; 2] {
    let p = params.p;
    let n = params.nf();
    let j = (sigma.abs().powf(p) * z.abs()).powf(1.0 / (p + 1.0));
    [
        sigma * (sigma + 2.0 - n + z + params.m * j),
        z * (n - p * sigma - z - params.m * j),
    ]
}

/// Smallest integer k with k > p + 1; the substitution
/// sigma = s^{2k+1}, z = w^{2k+1} makes J a C¹ function of (s, w).
pub fn desingularization_exponent(p: f64) -> u32 {
    (p + 1.0).floor() as u32 + 1
}

/// Desingularized Kolmogorov field in (s, w) with sigma = s^{2k+1},
/// z = w^{2k+1}; time is rescaled by 1/(2k+1).  J becomes
/// (|s|^p |w|)^{(2k+1)/(p+1)}, which is C¹ since (2k+1)/(p+1) > 1.
pub fn eval_v_desingularized(params: &ProblemParams, s: f64, w: f64) -> Result<[f64; 2]> {
    let p = params.p;
    let n = params.nf();
    let k = desingularization_exponent(p);
    let e = (2 * k + 1) as f64;
    if e <= p + 1.0 {
        return Err(Error::TransformInvalid(format!(
            "exponent 2k+1 = {e} must exceed p+1 = {}",
            p + 1.0
        )));
    }
    let sigma = s.powi(2 * k as i32 + 1);
    let z = w.powi(2 * k as i32 + 1);
    let j = (s.abs().powf(p) * w.abs()).powf(e / (p + 1.0));
    Ok([
        s * (sigma + 2.0 - n + z + params.m * j) / e,
        w * (n - p * sigma - z - params.m * j) / e,
    ])
}

/// The line nullcline L = {x_t = 0}: y = 2x/(p-1).
pub fn lnull(params: &ProblemParams, x: f64) -> f64 {
    2.0 * x / (params.p - 1.0)
}

/// The curve nullcline C = {y_t = 0}: x = psi(y) = (K y - M y^q)^{1/p},
/// defined where the argument is nonnegative.
pub fn psi(params: &ProblemParams, y: f64) -> Option<f64> {
    let c = derive_constants(params);
    let arg = c.k * y - params.m * y.powf(c.q);
    if arg >= 0.0 {
        Some(arg.powf(1.0 / params.p))
    } else {
        None
    }
}

/// Interior maximum of psi at y = (K/(qM))^{(p+1)/(p-1)} when K and M are
/// both positive; returns (y*, psi(y*)).
pub fn psi_max(params: &ProblemParams) -> Option<(f64, f64)> {
    let c = derive_constants(params);
    if c.k <= 0.0 || params.m <= 0.0 {
        return None;
    }
    let y_star = (c.k / (c.q * params.m)).powf((params.p + 1.0) / (params.p - 1.0));
    psi(params, y_star).map(|x| (y_star, x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    A,
    B,
    C,
    D,
    E,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Sign-pattern region of a point of the open quadrant.  Below L (x_t > 0):
/// C where y_t > 0, B where y_t < 0.  Above L: A where y_t < 0; where
/// y_t > 0 the strip below the first equilibrium ordinate is E (present
/// only when an interior equilibrium exists with K < 0), the rest is D.
pub fn region_of_with(params: &ProblemParams, y_first: Option<f64>, x: f64, y: f64) -> Region {
    let [xt, yt] = eval_h(params, x, y);
    if xt > 0.0 {
        if yt >= 0.0 {
            Region::C
        } else {
            Region::B
        }
    } else if yt < 0.0 {
        Region::A
    } else {
        match y_first {
            Some(y1) if derive_constants(params).k < 0.0 && y < y1 => Region::E,
            _ => Region::D,
        }
    }
}

pub fn region_of(params: &ProblemParams, x: f64, y: f64) -> Region {
    let y_first = find_equilibria(params).first().map(|e| e.y);
    region_of_with(params, y_first, x, y)
}

/// A-priori ceilings for trajectories that stay in the quadrant:
///   x(t) ≤ min{ (2N/(p-1))^{1/(p-1)}, ((p-1)/2)(K/M)^{(p+1)/(p-1)} }
///   y(t) ≤ min{ (N-2)(2N/(p-1))^{1/(p-1)}, (K/M)^{(p+1)/(p-1)} }
/// The M-dependent terms require K > 0 and M > 0; the (N-2) term
/// requires N ≥ 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ceilings {
    pub x: Option<f64>,
    pub y: Option<f64>,
}

pub fn apriori_ceilings(params: &ProblemParams) -> Ceilings {
    let p = params.p;
    let n = params.nf();
    let c = derive_constants(params);
    let base = (2.0 * n / (p - 1.0)).powf(1.0 / (p - 1.0));
    let grad = if c.k > 0.0 && params.m > 0.0 {
        Some((c.k / params.m).powf((p + 1.0) / (p - 1.0)))
    } else {
        None
    };
    let x = match grad {
        Some(g) => Some(base.min(0.5 * (p - 1.0) * g)),
        None => Some(base),
    };
    let y = if n >= 3.0 {
        let yb = (n - 2.0) * base;
        Some(match grad {
            Some(g) => yb.min(g),
            None => yb,
        })
    } else {
        grad
    };
    Ceilings { x, y }
}
