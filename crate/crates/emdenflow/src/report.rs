use crate::bifurcation::ShootResult;
use crate::equilibria::{classify_equilibrium, find_equilibria};
use crate::error::{Error, Result};
use crate::params::{critical_constants, derive_constants, ProblemParams};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsBlock {
    pub n: u32,
    pub p: f64,
    pub m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsBlock {
    pub k: f64,
    pub l: f64,
    pub q: f64,
    pub mu_star: Option<f64>,
    pub mu_star_1: f64,
    pub mu_star_2: f64,
    pub m_bar: Option<f64>,
    pub m0: Option<f64>,
    pub m1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumBlock {
    pub x: f64,
    pub y: f64,
    pub kind: String,
    /// eigenvalue pair as [re, im] rows
    pub eigs: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootBlock {
    pub target: String,
    pub grid: Vec<crate::bifurcation::GridPoint>,
    pub brackets: Vec<(f64, f64)>,
    pub refined: Vec<crate::bifurcation::RefinedRoot>,
    /// spread |M_max - M_min| of the refined connection parameters; the
    /// uniqueness conjecture predicts 0
    pub conjecture_gap: Option<f64>,
    pub gap_below_resolution: Option<bool>,
}

impl From<ShootResult> for ShootBlock {
    fn from(res: ShootResult) -> Self {
        ShootBlock {
            target: format!("{:?}", res.target).to_lowercase(),
            grid: res.grid,
            brackets: res.brackets,
            refined: res.refined,
            conjecture_gap: res.root_gap,
            gap_below_resolution: res.gap_below_resolution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub params: ParamsBlock,
    pub constants: ConstantsBlock,
    pub equilibria: Vec<EquilibriumBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shoot: Option<ShootBlock>,
}

pub fn build_report(params: &ProblemParams, shoot: Option<ShootResult>) -> Report {
    let c = derive_constants(params);
    let cc = critical_constants(params);
    let equilibria = find_equilibria(params)
        .iter()
        .map(|eq| {
            let (kind, eigs) = match classify_equilibrium(params, eq) {
                Ok(cl) => (
                    format!("{:?}", cl.kind),
                    [
                        [cl.eigenvalues.0.re, cl.eigenvalues.0.im],
                        [cl.eigenvalues.1.re, cl.eigenvalues.1.im],
                    ],
                ),
                Err(_) => ("Unclassified".into(), [[f64::NAN; 2]; 2]),
            };
            EquilibriumBlock { x: eq.x, y: eq.y, kind, eigs }
        })
        .collect();

    Report {
        schema_version: SCHEMA_VERSION,
        params: ParamsBlock { n: params.n, p: params.p, m: params.m },
        constants: ConstantsBlock {
            k: c.k,
            l: c.l,
            q: c.q,
            mu_star: cc.mu_star,
            mu_star_1: cc.mu_star_1,
            mu_star_2: cc.mu_star_2,
            m_bar: cc.m_bar,
            m0: cc.m_node_hi,
            m1: cc.m_node_lo,
        },
        equilibria,
        shoot: shoot.map(ShootBlock::from),
    }
}

pub fn to_json(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn from_json(json: &str) -> Result<Report> {
    let report: Report = serde_json::from_str(json).map_err(|e| Error::Format(e.to_string()))?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            report.schema_version
        )));
    }
    Ok(report)
}

fn opt17(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.16e}"),
        None => "-".into(),
    }
}

/// Human-readable digest of a report.  Byte-stable for a given report, so
/// a report parsed back from its own JSON regenerates the same text.
pub fn summary(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "N = {}, p = {:.16e}, M = {:.16e}",
        report.params.n, report.params.p, report.params.m
    );
    let c = &report.constants;
    let _ = writeln!(out, "K = {:.16e}, L = {:.16e}, q = {:.16e}", c.k, c.l, c.q);
    let _ = writeln!(
        out,
        "mu* = {}, mu*(1) = {:.16e}, mu*(2) = {:.16e}",
        opt17(c.mu_star),
        c.mu_star_1,
        c.mu_star_2
    );
    let _ = writeln!(out, "Mbar = {}, M0 = {}, M1 = {}", opt17(c.m_bar), opt17(c.m0), opt17(c.m1));
    let _ = writeln!(out, "equilibria: {}", report.equilibria.len());
    for eq in &report.equilibria {
        let _ = writeln!(
            out,
            "  ({:.16e}, {:.16e}) {} eigs [{:.16e} {:+.16e}i, {:.16e} {:+.16e}i]",
            eq.x, eq.y, eq.kind, eq.eigs[0][0], eq.eigs[0][1], eq.eigs[1][0], eq.eigs[1][1]
        );
    }
    if let Some(shoot) = &report.shoot {
        let values = shoot.grid.iter().filter(|g| g.value.is_some()).count();
        let _ = writeln!(
            out,
            "shoot {}: {} grid points ({} valued), {} brackets",
            shoot.target,
            shoot.grid.len(),
            values,
            shoot.brackets.len()
        );
        for r in &shoot.refined {
            let _ = writeln!(out, "  root M = {:.16e} (residual {:.3e})", r.m, r.residual);
        }
        let _ = writeln!(
            out,
            "  conjecture gap: {} (below resolution: {:?})",
            opt17(shoot.conjecture_gap),
            shoot.gap_below_resolution
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bifurcation::{scan, ShootTarget};

    fn params(n: u32, p: f64, m: f64) -> ProblemParams {
        ProblemParams::new(n, p, m).unwrap()
    }

    #[test]
    fn round_trip_identity() {
        let pr = params(3, 2.0, -2.0);
        let rep = build_report(&pr, None);
        let parsed = from_json(&to_json(&rep)).unwrap();
        assert_eq!(rep, parsed);
        assert_eq!(summary(&rep), summary(&parsed));
    }

    #[test]
    fn round_trip_with_shoot_block() {
        let pr = params(3, 2.0, -2.0);
        let res = scan(&pr, ShootTarget::H, -1.5, -1.34, 3);
        let rep = build_report(&pr, Some(res));
        let parsed = from_json(&to_json(&rep)).unwrap();
        assert_eq!(summary(&rep), summary(&parsed));
        assert_eq!(rep, parsed);
        assert_eq!(rep.shoot.as_ref().unwrap().target, "h");
    }

    #[test]
    fn schema_version_checked() {
        let pr = params(3, 7.0, 1.0);
        let mut rep = build_report(&pr, None);
        rep.schema_version = 99;
        let err = from_json(&to_json(&rep)).unwrap_err();
        assert!(err.to_string().contains("schema version"));
    }

    #[test]
    fn constants_block_contents() {
        let rep = build_report(&params(3, 7.0, 1.0), None);
        assert_eq!(rep.schema_version, 1);
        assert!(rep.constants.mu_star.is_none(), "K > 0: no self-similar threshold");
        assert!(rep.constants.m_bar.is_some());
        assert!(rep.constants.m0.is_some());
        assert_eq!(rep.equilibria.len(), 1);
        assert!(rep.equilibria[0].eigs[0][1] != 0.0, "spiral eigenvalues at M = 1");
    }
}
