use crate::error::{Error, Result};
use crate::params::{derive_constants, regime_of, ProblemParams, RootCase};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumIndex {
    Origin,
    Single,
    First,
    Second,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Multiplicity {
    Simple,
    Double,
}

/// Interior fixed point (X, Y) of the planar system, with Y the root of
///   f_M(y) = ((p-1)/2)^p y^{p-1} + M y^{(p-1)/(p+1)} - K = 0
/// and X = (p-1)Y/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub x: f64,
    pub y: f64,
    pub index: EquilibriumIndex,
    pub multiplicity: Multiplicity,
}

pub fn f_m(params: &ProblemParams, y: f64) -> f64 {
    let p = params.p;
    let k = derive_constants(params).k;
    ((p - 1.0) / 2.0).powf(p) * y.powf(p - 1.0) + params.m * y.powf((p - 1.0) / (p + 1.0)) - k
}

fn f_m_prime(params: &ProblemParams, y: f64) -> f64 {
    let p = params.p;
    ((p - 1.0) / 2.0).powf(p) * (p - 1.0) * y.powf(p - 2.0)
        + params.m * ((p - 1.0) / (p + 1.0)) * y.powf((p - 1.0) / (p + 1.0) - 1.0)
}

/// Minimiser of f_M for M < 0 and the value of f_M there.
pub fn f_m_minimum(params: &ProblemParams) -> Option<(f64, f64)> {
    if params.m >= 0.0 {
        return None;
    }
    let p = params.p;
    let y0 = ((2.0 / (p - 1.0)) * (-params.m / (p + 1.0)).powf(1.0 / p)).powf((p + 1.0) / (p - 1.0));
    Some((y0, f_m(params, y0)))
}

/// Bisection to near machine precision followed by a few Newton polishing
/// steps.  The bracket is assumed valid: f(a) f(b) ≤ 0.
fn refine_root(params: &ProblemParams, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f_m(params, a);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        let fm = f_m(params, mid);
        if (fa <= 0.0) == (fm <= 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    let mut y = 0.5 * (a + b);
    for _ in 0..4 {
        let d = f_m_prime(params, y);
        if d == 0.0 || !d.is_finite() {
            break;
        }
        let step = f_m(params, y) / d;
        let y_next = y - step;
        if y_next > 0.0 && y_next.is_finite() {
            y = y_next;
        } else {
            break;
        }
    }
    y
}

fn make_eq(params: &ProblemParams, y: f64, index: EquilibriumIndex, multiplicity: Multiplicity) -> Equilibrium {
    Equilibrium { x: (params.p - 1.0) * y / 2.0, y, index, multiplicity }
}

/// All interior equilibria, sorted ascending in x.  The origin is not
/// listed; see `classify_origin`.
pub fn find_equilibria(params: &ProblemParams) -> Vec<Equilibrium> {
    let p = params.p;
    let m = params.m;
    let c = derive_constants(params);
    let tag = regime_of(params);

    match tag.root_case {
        RootCase::None => Vec::new(),
        RootCase::One => {
            // K ≥ 0 (positive for M ≥ 0).  f(0+) = -K ≤ 0 and for M < 0 the
            // gradient term keeps f negative near zero even when K = 0.
            let y_hi = if m > 0.0 {
                // upper root bound for M > 0
                (c.k / m).powf((p + 1.0) / (p - 1.0))
            } else if m == 0.0 {
                (c.k * (2.0 / (p - 1.0)).powf(p)).powf(1.0 / (p - 1.0))
            } else {
                // upper bound for M < 0, K ≥ 0 (in x, converted to y)
                let x0 = (2.0 * c.k / (p - 1.0)).max(0.0).powf(1.0 / (p - 1.0));
                let grad = (2.0 / (p - 1.0)).powf(2.0 / (p - 1.0)) * m.abs().powf((p + 1.0) / (p * (p - 1.0)));
                (2.0 / (p - 1.0)) * 2f64.powf(2.0 / (p - 1.0)) * (x0 + grad)
            };
            let mut hi = y_hi.max(1e-300) * 1.0000001;
            let mut guard = 0;
            while f_m(params, hi) <= 0.0 && guard < 1100 {
                hi *= 2.0;
                guard += 1;
            }
            let lo = if m < 0.0 { f_m_minimum(params).unwrap().0 } else { hi * 1e-200 };
            let y = refine_root(params, lo, hi);
            vec![make_eq(params, y, EquilibriumIndex::Single, Multiplicity::Simple)]
        }
        RootCase::Double => {
            let (y0, _) = f_m_minimum(params).expect("double root requires M < 0");
            vec![make_eq(params, y0, EquilibriumIndex::Double, Multiplicity::Double)]
        }
        RootCase::Two => {
            let (y0, fmin) = f_m_minimum(params).expect("two roots require M < 0");
            debug_assert!(fmin < 0.0);
            // f(0+) = -K > 0 here; the first root sits in (0, y0).
            let y1 = refine_root(params, y0 * 1e-200, y0);
            // Upper bound for the second root, doubled until f > 0.
            let mut hi = (2.0 / (p - 1.0)).powf((p + 1.0) / (p - 1.0)) * (-m).powf((p + 1.0) / (p * (p - 1.0)));
            hi = hi.max(2.0 * y0) * 1.0000001;
            let mut guard = 0;
            while f_m(params, hi) <= 0.0 && guard < 1100 {
                hi *= 2.0;
                guard += 1;
            }
            let y2 = refine_root(params, y0, hi);
            vec![
                make_eq(params, y1, EquilibriumIndex::First, Multiplicity::Simple),
                make_eq(params, y2, EquilibriumIndex::Second, Multiplicity::Simple),
            ]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    Saddle,
    Sink,
    Source,
    NodeAttracting,
    NodeRepelling,
    DegenerateNode,
    SpiralAttracting,
    SpiralRepelling,
    CenterCandidate,
    WeakSink,
    WeakSource,
    BtDegenerate,
    /// One eigenvalue zero (saddle-node / semi-hyperbolic point).
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub eigenvalues: (Complex, Complex),
    pub trace: f64,
    pub det: f64,
    pub discriminant: f64,
    pub kind: EquilibriumKind,
    pub lyapunov_coeff: Option<f64>,
    pub alpha_sq: Option<f64>,
    /// Eigenvectors (unit-normalised, x-component ≥ 0) for real eigenvalues,
    /// columns matching the eigenvalue order.
    pub eigenvectors: Option<[[f64; 2]; 2]>,
}

const TRACE_TOL: f64 = 1e-9;
const DET_TOL: f64 = 1e-9;

/// Classification of the origin: eigenvalues (-K, 2/(p-1)); the stable /
/// slow direction has slope N-2 and the fast direction slope 0.
pub fn classify_origin(params: &ProblemParams) -> Classification {
    let c = derive_constants(params);
    let p = params.p;
    let n = params.nf();
    let l1 = -c.k;
    let l2 = 2.0 / (p - 1.0);
    let trace = l1 + l2;
    let det = l1 * l2;
    let discriminant = (l1 - l2) * (l1 - l2);

    let kind = if (l1 - l2).abs() <= TRACE_TOL {
        // N = 2: -K = 2/(p-1) exactly
        EquilibriumKind::DegenerateNode
    } else if c.k.abs() <= DET_TOL {
        EquilibriumKind::Degenerate
    } else if c.k > 0.0 {
        EquilibriumKind::Saddle
    } else {
        EquilibriumKind::Source
    };

    // Eigenvector of -K is (1, N-2); of 2/(p-1) it is (1, 0).
    let v1_raw = [1.0, n - 2.0];
    let norm1 = (1.0 + (n - 2.0) * (n - 2.0)).sqrt();
    let v1 = [v1_raw[0] / norm1, v1_raw[1] / norm1];
    let v2 = [1.0, 0.0];

    Classification {
        eigenvalues: (Complex { re: l1, im: 0.0 }, Complex { re: l2, im: 0.0 }),
        trace,
        det,
        discriminant,
        kind,
        lyapunov_coeff: None,
        alpha_sq: None,
        eigenvectors: Some([v1, v2]),
    }
}

/// Trace and determinant of the linearization at an interior equilibrium:
///   T(λ) = λ² − (q M Y^{(p-1)/(p+1)} − L) λ + 2K − q M Y^{(p-1)/(p+1)}.
pub fn trace_det_at(params: &ProblemParams, y: f64) -> (f64, f64) {
    let c = derive_constants(params);
    let phi = c.q * params.m * y.powf((params.p - 1.0) / (params.p + 1.0));
    (phi - c.l, 2.0 * c.k - phi)
}

pub fn residual_tolerance(params: &ProblemParams) -> f64 {
    1e-10 * (1.0 + derive_constants(params).k.abs())
}

pub fn classify_equilibrium(params: &ProblemParams, eq: &Equilibrium) -> Result<Classification> {
    let resid = f_m(params, eq.y).abs();
    // The huge-root regimes lose absolute precision in f_M; scale by the
    // magnitude of the dominant term.
    let scale = 1.0 + ((params.p - 1.0) / 2.0).powf(params.p) * eq.y.powf(params.p - 1.0);
    if resid > residual_tolerance(params) * scale {
        return Err(Error::NotAnEquilibrium { x: eq.x, y: eq.y, residual: resid });
    }

    let (trace, det) = trace_det_at(params, eq.y);
    let discriminant = trace * trace - 4.0 * det;

    let (eigenvalues, eigenvectors) = if discriminant >= 0.0 {
        let s = discriminant.sqrt();
        let l1 = 0.5 * (trace - s);
        let l2 = 0.5 * (trace + s);
        let vec_of = |lam: f64| -> [f64; 2] {
            // first Jacobian row: (2/(p-1) - λ) v_x - v_y = 0
            let v = [1.0, 2.0 / (params.p - 1.0) - lam];
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            [v[0] / n, v[1] / n]
        };
        (
            (Complex { re: l1, im: 0.0 }, Complex { re: l2, im: 0.0 }),
            Some([vec_of(l1), vec_of(l2)]),
        )
    } else {
        let im = (-discriminant).sqrt() * 0.5;
        let re = 0.5 * trace;
        ((Complex { re, im }, Complex { re, im: -im }), None)
    };

    let mut lyapunov_coeff = None;
    let mut alpha_sq = None;

    let kind = if det < -DET_TOL {
        EquilibriumKind::Saddle
    } else if det.abs() <= DET_TOL {
        if trace.abs() <= TRACE_TOL {
            EquilibriumKind::BtDegenerate
        } else {
            EquilibriumKind::Degenerate
        }
    } else if trace.abs() <= TRACE_TOL {
        // Center candidate: refine with the Lyapunov coefficient when the
        // closed form applies (N ≥ 3).
        if params.n >= 3 {
            match lyapunov_closed_form(params, eq.y) {
                Some(lam) if lam != 0.0 => {
                    lyapunov_coeff = Some(lam);
                    alpha_sq = Some(alpha_sq_of(params));
                    if lam < 0.0 {
                        EquilibriumKind::WeakSink
                    } else {
                        EquilibriumKind::WeakSource
                    }
                }
                _ => EquilibriumKind::CenterCandidate,
            }
        } else {
            EquilibriumKind::CenterCandidate
        }
    } else if discriminant < 0.0 {
        if trace < 0.0 {
            EquilibriumKind::SpiralAttracting
        } else {
            EquilibriumKind::SpiralRepelling
        }
    } else if discriminant.abs() <= DET_TOL * (1.0 + trace * trace) {
        EquilibriumKind::DegenerateNode
    } else if trace < 0.0 {
        EquilibriumKind::NodeAttracting
    } else {
        EquilibriumKind::NodeRepelling
    };

    Ok(Classification {
        eigenvalues,
        trace,
        det,
        discriminant,
        kind,
        lyapunov_coeff,
        alpha_sq,
        eigenvectors,
    })
}

pub fn alpha_sq_of(params: &ProblemParams) -> f64 {
    4.0 / (params.p - 1.0).powi(2) + params.nf() - 2.0
}

/// Closed-form Lyapunov coefficient at the trace-zero equilibrium:
///   sqrt(N-2) Λ = −α² (p−1)(N+1) L / ((p+1)² Y²),  α² = 4/(p−1)² + N − 2.
fn lyapunov_closed_form(params: &ProblemParams, y: f64) -> Option<f64> {
    let n = params.nf();
    if n <= 2.0 {
        return None;
    }
    let p = params.p;
    let l = derive_constants(params).l;
    let a2 = alpha_sq_of(params);
    Some(-a2 * (p - 1.0) * (n + 1.0) * l / ((n - 2.0).sqrt() * (p + 1.0).powi(2) * y * y))
}

/// Lyapunov coefficient of the weak focus at M = m_bar.  Errors unless the
/// linearization at `eq` really has (numerically) zero trace and N ≥ 3.
pub fn lyapunov_coefficient(params: &ProblemParams, eq: &Equilibrium) -> Result<f64> {
    let (trace, det) = trace_det_at(params, eq.y);
    if trace.abs() > 1e-8 * (1.0 + det.abs()) {
        return Err(Error::NotACenterCandidate(format!(
            "trace {trace:.3e} is not numerically zero"
        )));
    }
    if det <= 0.0 {
        return Err(Error::NotACenterCandidate(format!("determinant {det:.3e} not positive")));
    }
    lyapunov_closed_form(params, eq.y).ok_or_else(|| {
        Error::NotACenterCandidate("closed form requires N ≥ 3 (N = 2 is the degenerate double-zero case)".into())
    })
}
