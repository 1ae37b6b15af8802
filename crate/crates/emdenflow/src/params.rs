use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Relative tolerance used to resolve regime boundaries (p at a critical
/// exponent, M at a threshold) instead of raw float equality.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Problem data for -Δu = |u|^{p-1}u + M|∇u|^{2p/(p+1)} in dimension N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub n: u32,
    pub p: f64,
    pub m: f64,
}

impl ProblemParams {
    pub fn new(n: u32, p: f64, m: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::RegimeUndefined("N must be a positive integer".into()));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::RegimeUndefined(format!("p must be finite and > 1, got {p}")));
        }
        if !m.is_finite() {
            return Err(Error::RegimeUndefined(format!("M must be finite, got {m}")));
        }
        Ok(Self { n, p, m })
    }

    pub fn nf(&self) -> f64 {
        f64::from(self.n)
    }

    pub fn with_m(&self, m: f64) -> Self {
        Self { m, ..*self }
    }
}

/// The exponent-derived constants of the planar reduction
///   x_t = 2x/(p-1) - y,   y_t = -K y + |x|^{p-1} x + M |y|^q.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub k: f64,
    pub l: f64,
    pub q: f64,
}

pub fn derive_constants(params: &ProblemParams) -> DerivedConstants {
    let n = params.nf();
    let p = params.p;
    DerivedConstants {
        k: ((n - 2.0) * p - n) / (p - 1.0),
        l: ((n - 2.0) * p - (n + 2.0)) / (p - 1.0),
        q: 2.0 * p / (p + 1.0),
    }
}

/// Threshold values of M at which the phase portrait changes character.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalConstants {
    /// Self-similar existence threshold: equilibria exist for M ≤ -mu_star
    /// when K < 0.  Defined for N ≤ 2 or p ≤ N/(N-2).
    pub mu_star: Option<f64>,
    /// The N = 1 value of mu_star; global gradient-domination threshold.
    pub mu_star_1: f64,
    /// The N = 2 value of mu_star.
    pub mu_star_2: f64,
    /// Trace-zero (Hopf candidate) value of M at the interior equilibrium.
    /// Defined for N ≥ 2.
    pub m_bar: Option<f64>,
    /// Upper node threshold M_0: eigenvalues at the last equilibrium are
    /// real (node) for M ≥ M_0.
    pub m_node_hi: Option<f64>,
    /// Lower node threshold M_1: node for M ≤ M_1.
    pub m_node_lo: Option<f64>,
}

fn mu_star_of(n: f64, p: f64) -> Option<f64> {
    let arg = (n - (n - 2.0) * p) / (2.0 * p);
    if arg >= 0.0 {
        Some((p + 1.0) * arg.powf(p / (p + 1.0)))
    } else {
        None
    }
}

fn m_bar_of(n: f64, p: f64) -> f64 {
    let num = (p + 1.0) * ((n - 2.0) * p - (n + 2.0));
    let den = (4.0 * p).powf(p / (p + 1.0)) * ((n - 2.0) * (p - 1.0).powi(2) + 4.0).powf(1.0 / (p + 1.0));
    num / den
}

/// Closed form for the node thresholds: solves
///   (2p/(p+1)) M Y_M^{(p-1)/(p+1)} = target
/// along the relevant root branch, using Y^{p-1} = (2/(p-1))^p B with
/// B = K - (p+1) target/(2p).
fn node_threshold(k: f64, p: f64, target: f64) -> Option<f64> {
    let b = k - (p + 1.0) * target / (2.0 * p);
    if b <= 0.0 {
        return None;
    }
    let m = ((p + 1.0) * target / (2.0 * p)) * ((p - 1.0) / 2.0).powf(p / (p + 1.0)) / b.powf(1.0 / (p + 1.0));
    Some(m)
}

pub fn critical_constants(params: &ProblemParams) -> CriticalConstants {
    let n = params.nf();
    let p = params.p;
    let c = derive_constants(params);

    let mu_star = mu_star_of(n, p);
    let mu_star_1 = mu_star_of(1.0, p).expect("argument positive for N = 1");
    let mu_star_2 = mu_star_of(2.0, p).expect("argument positive for N = 2");
    let m_bar = if params.n >= 2 { Some(m_bar_of(n, p)) } else { None };

    let sqrt_nm1 = (n - 1.0).sqrt();
    let target_hi = c.l - 2.0 + 2.0 * sqrt_nm1;
    let target_lo = c.l - 2.0 - 2.0 * sqrt_nm1;

    let (mut m_node_hi, mut m_node_lo) = (None, None);
    if params.n >= 3 {
        let p_class = classify_p(n, p);
        match p_class {
            PClass::Supercritical => {
                m_node_hi = node_threshold(c.k, p, target_hi);
                // A positive M_1 exists only when L - 2 - 2 sqrt(N-1) > 0,
                // which needs N ≥ 11 and large p.
                if target_lo > 0.0 {
                    m_node_lo = node_threshold(c.k, p, target_lo);
                }
            }
            PClass::SerrinCritical | PClass::Intermediate => {
                m_node_lo = node_threshold(c.k, p, target_lo);
                if target_hi < 0.0 {
                    m_node_hi = node_threshold(c.k, p, target_hi);
                }
            }
            PClass::SubSerrin => {
                m_node_hi = node_threshold(c.k, p, target_hi);
                m_node_lo = node_threshold(c.k, p, target_lo);
            }
            PClass::SobolevCritical => {}
        }
    } else if params.n == 2 {
        // Only the lower threshold survives in the plane.
        m_node_lo = node_threshold(c.k, p, target_lo);
    }

    CriticalConstants { mu_star, mu_star_1, mu_star_2, m_bar, m_node_hi, m_node_lo }
}

/// Position of p relative to the two critical exponents N/(N-2) (sign of K)
/// and (N+2)/(N-2) (sign of L).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PClass {
    /// K < 0 (always the case for N ≤ 2).
    SubSerrin,
    /// p = N/(N-2): K = 0.
    SerrinCritical,
    /// K > 0, L < 0.
    Intermediate,
    /// p = (N+2)/(N-2): L = 0.
    SobolevCritical,
    /// L > 0.
    Supercritical,
}

fn classify_p(n: f64, p: f64) -> PClass {
    if n <= 2.0 {
        return PClass::SubSerrin;
    }
    let serrin = n / (n - 2.0);
    let sobolev = (n + 2.0) / (n - 2.0);
    if (p - serrin).abs() <= BOUNDARY_TOL * serrin {
        PClass::SerrinCritical
    } else if p < serrin {
        PClass::SubSerrin
    } else if (p - sobolev).abs() <= BOUNDARY_TOL * sobolev {
        PClass::SobolevCritical
    } else if p < sobolev {
        PClass::Intermediate
    } else {
        PClass::Supercritical
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MSign {
    Negative,
    Zero,
    Positive,
}

/// Number and nature of interior equilibria, following the root case table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootCase {
    /// M ≥ 0 with K ≤ 0, or K < 0 with -mu_star < M < 0: no equilibrium.
    None,
    /// Exactly one equilibrium (K > 0, or K = 0 with M < 0).
    One,
    /// K < 0 and M = -mu_star: double root.
    Double,
    /// K < 0 and M < -mu_star: two simple roots.
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeTag {
    pub p_class: PClass,
    pub m_sign: MSign,
    pub root_case: RootCase,
    /// For K < 0 and M < 0: sign of M - (-mu_star), resolved with
    /// BOUNDARY_TOL.  None outside that regime.
    pub m_vs_minus_mu_star: Option<MSign>,
}

pub fn regime_of(params: &ProblemParams) -> RegimeTag {
    let n = params.nf();
    let p = params.p;
    let m = params.m;
    let p_class = classify_p(n, p);

    let m_sign = if m.abs() <= BOUNDARY_TOL {
        MSign::Zero
    } else if m > 0.0 {
        MSign::Positive
    } else {
        MSign::Negative
    };

    let k_nonneg = matches!(p_class, PClass::SerrinCritical | PClass::Intermediate | PClass::SobolevCritical | PClass::Supercritical);

    let mut m_vs = None;
    let root_case = match (m_sign, k_nonneg) {
        (MSign::Positive | MSign::Zero, true) => {
            // K = 0 with M = 0 or M > 0 has no interior root.
            if matches!(p_class, PClass::SerrinCritical) {
                RootCase::None
            } else {
                RootCase::One
            }
        }
        (MSign::Positive | MSign::Zero, false) => RootCase::None,
        (MSign::Negative, true) => RootCase::One,
        (MSign::Negative, false) => {
            let mu = mu_star_of(n, p).expect("mu_star defined when K < 0");
            let diff = m + mu; // sign of M - (-mu_star)
            let sign = if diff.abs() <= BOUNDARY_TOL * mu.max(1.0) {
                MSign::Zero
            } else if diff > 0.0 {
                MSign::Positive
            } else {
                MSign::Negative
            };
            m_vs = Some(sign);
            match sign {
                MSign::Positive => RootCase::None,
                MSign::Zero => RootCase::Double,
                MSign::Negative => RootCase::Two,
            }
        }
    };

    RegimeTag { p_class, m_sign, root_case, m_vs_minus_mu_star: m_vs }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u32, p: f64, m: f64) -> ProblemParams {
        ProblemParams::new(n, p, m).unwrap()
    }

    #[test]
    fn derived_constants_hand_values() {
        let c = derive_constants(&params(3, 7.0, 0.0));
        assert!((c.k - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.l - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.q - 7.0 / 4.0).abs() < 1e-15);

        let c = derive_constants(&params(3, 5.0, 0.0));
        assert!((c.k - 0.5).abs() < 1e-15);
        assert!(c.l.abs() < 1e-15);

        let c = derive_constants(&params(3, 2.0, 0.0));
        assert!((c.k + 1.0).abs() < 1e-15);
        assert!((c.l + 3.0).abs() < 1e-15);
    }

    #[test]
    fn l_identity() {
        for &(n, p) in &[(1u32, 1.7), (2, 3.4), (3, 2.2), (4, 5.0), (11, 1.3), (12, 8.0)] {
            let c = derive_constants(&params(n, p, 0.0));
            let rhs = c.k - 2.0 / (p - 1.0);
            assert!((c.l - rhs).abs() <= 1e-14 * (1.0 + c.k.abs()), "N={n} p={p}");
            assert!(c.q > 1.0 && c.q < 2.0);
        }
    }

    #[test]
    fn mu_star_1_closed_form() {
        let p = 3.0;
        let cc = critical_constants(&params(1, p, 0.0));
        let alt = ((p + 1.0).powf(2.0 * p + 1.0) / (2.0 * p).powf(p)).powf(1.0 / (p + 1.0));
        assert!((cc.mu_star_1 - alt).abs() < 1e-12);
        assert!((cc.mu_star_1 - 2.9511517858675242).abs() < 1e-12);
        assert_eq!(cc.mu_star, Some(cc.mu_star_1));
        assert!(cc.m_bar.is_none());
    }

    #[test]
    fn m_bar_sign_tracks_l() {
        for &(n, p, sign) in &[(3u32, 7.0, 1.0), (3, 5.0, 0.0), (3, 2.0, -1.0), (4, 3.0, 0.0), (11, 1.3, -1.0)] {
            let cc = critical_constants(&params(n, p, 0.0));
            let mb = cc.m_bar.unwrap();
            if sign == 0.0 {
                assert!(mb.abs() < 1e-12, "N={n} p={p}");
            } else {
                assert!(mb.signum() == sign, "N={n} p={p} m_bar={mb}");
            }
        }
    }

    #[test]
    fn lemma_comp_n2_and_subserrin() {
        // N = 2: m_bar coincides with -mu_star_2.
        for p in [2.0, 3.0, 5.0, 9.5] {
            let cc = critical_constants(&params(2, p, 0.0));
            assert!((cc.m_bar.unwrap() + cc.mu_star_2).abs() <= 1e-12);
        }
        // N ≥ 3, p < N/(N-2): m_bar < -mu_star.
        for &(n, p) in &[(3u32, 1.5), (3, 2.0), (3, 2.9), (4, 1.3), (5, 1.5)] {
            let cc = critical_constants(&params(n, p, 0.0));
            assert!(cc.m_bar.unwrap() < -cc.mu_star.unwrap(), "N={n} p={p}");
        }
    }

    #[test]
    fn node_threshold_ordering() {
        // All three defined: M_1 < m_bar < M_0.
        for &(n, p) in &[(3u32, 2.0), (11, 1.3), (12, 8.0)] {
            let cc = critical_constants(&params(n, p, 0.0));
            let (m0, m1, mb) = (cc.m_node_hi.unwrap(), cc.m_node_lo.unwrap(), cc.m_bar.unwrap());
            assert!(m1 < mb && mb < m0, "N={n} p={p}: {m1} {mb} {m0}");
        }
        // (3,7): only M_0 (N < 11 kills the positive M_1).
        let cc = critical_constants(&params(3, 7.0, 0.0));
        assert!(cc.m_node_hi.is_some() && cc.m_node_lo.is_none());
        // Sobolev-critical: neither.
        let cc = critical_constants(&params(3, 5.0, 0.0));
        assert!(cc.m_node_hi.is_none() && cc.m_node_lo.is_none());
    }

    #[test]
    fn regime_case_table() {
        assert_eq!(regime_of(&params(3, 2.0, 1.0)).root_case, RootCase::None);
        assert_eq!(regime_of(&params(3, 7.0, 1.0)).root_case, RootCase::One);
        assert_eq!(regime_of(&params(3, 7.0, -4.0)).root_case, RootCase::One);
        assert_eq!(regime_of(&params(3, 2.0, -0.5)).root_case, RootCase::None);
        let mu = critical_constants(&params(3, 2.0, 0.0)).mu_star.unwrap();
        assert_eq!(regime_of(&params(3, 2.0, -mu)).root_case, RootCase::Double);
        assert_eq!(regime_of(&params(3, 2.0, -2.0)).root_case, RootCase::Two);
        // Serrin-critical: no root for M ≥ 0, one root for M < 0.
        assert_eq!(regime_of(&params(4, 2.0, 0.0)).root_case, RootCase::None);
        assert_eq!(regime_of(&params(4, 2.0, -1.0)).root_case, RootCase::One);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ProblemParams::new(0, 2.0, 0.0).is_err());
        assert!(ProblemParams::new(3, 1.0, 0.0).is_err());
        assert!(ProblemParams::new(3, f64::NAN, 0.0).is_err());
        assert!(ProblemParams::new(3, 2.0, f64::INFINITY).is_err());
    }
}
