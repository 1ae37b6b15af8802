//! Phase-plane and bifurcation toolkit for the radial quasilinear problem
//! -Δu = u^p + M |∇u|^{2p/(p+1)} via its autonomous planar reduction
//!   x_t = 2x/(p-1) - y,  y_t = -Ky + |x|^{p-1}x + M|y|^{2p/(p+1)},
//! with r = e^t, u = r^{-2/(p-1)} x, u_r = -r^{-(p+1)/(p-1)} y.

pub mod bifurcation;
pub mod bt;
pub mod classifier;
pub mod diagnostics;
pub mod equilibria;
pub mod error;
pub mod field;
pub mod integrator;
pub mod manifolds;
pub mod params;
pub mod portrait;
pub mod report;

pub use error::{Error, Result};
pub use params::{
    critical_constants, derive_constants, regime_of, CriticalConstants, DerivedConstants,
    ProblemParams, RegimeTag,
};
