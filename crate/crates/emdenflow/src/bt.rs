use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Bogdanov–Takens data at the double-zero point of the N = 2 system.
///
/// At N = 2 the trace and determinant of the linearization vanish together
/// at M = -mu_star(2), where the equilibrium ordinate is
///   y0 = p^{-1/(p-1)} (2/(p-1))^{(p+1)/(p-1)}.
/// Unfolding in (alpha1, alpha2) = (M + mu_star(2), K) and reducing to
///   xi1' = xi2,  xi2' = beta1 + beta2 xi1 + xi1^2 + s xi1 xi2
/// gives quadratic coefficients A(0), B(0) = 2 A(0), s = sign(A B) = +1, and
/// unfolding parameters linear in alpha1 along the K = 0 slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtNormalForm {
    pub mu_star_2: f64,
    pub y0: f64,
    pub a_coeff: f64,
    pub b_coeff: f64,
    pub sign_ba: i8,
    pub beta1: f64,
    pub beta2: f64,
    pub discriminant: f64,
}

pub fn bt_normal_form(p: f64, alpha1: f64) -> Result<BtNormalForm> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::RegimeUndefined(format!("p = {p} must be finite and > 1")));
    }
    if !alpha1.is_finite() {
        return Err(Error::RegimeUndefined(format!("alpha1 = {alpha1} must be finite")));
    }
    let mu_star_2 = (p + 1.0) * p.powf(-p / (p + 1.0));
    let y0 = p.powf(-1.0 / (p - 1.0)) * (2.0 / (p - 1.0)).powf((p + 1.0) / (p - 1.0));
    let a_coeff = -(2.0 * p / (p + 1.0)) * p.powf(-p / (p + 1.0)) * y0.powf(-2.0 / (p + 1.0));
    let b_coeff = 2.0 * a_coeff;
    let ypow = y0.powf((p - 1.0) / (p + 1.0));
    let beta1 = -64.0 / (p * p - 1.0) * alpha1 * ypow;
    let beta2 = 8.0 * (p * p + 2.0 * p - 1.0) / (p * p - 1.0) * alpha1 * ypow;
    Ok(BtNormalForm {
        mu_star_2,
        y0,
        a_coeff,
        b_coeff,
        sign_ba: 1,
        beta1,
        beta2,
        discriminant: beta2 * beta2 - 4.0 * beta1,
    })
}
