use emdenflow::bifurcation::{scan_with_threads, ShootResult, ShootTarget};
use emdenflow::classifier::classify_limit;
use emdenflow::diagnostics::{
    check_g_negative, check_v_monotonicity, check_z_relation, e_sobolev, eval_diagnostics,
    f_functional, g_functional, m21_bound, v_functional, z_functional,
};
use emdenflow::equilibria::{classify_origin, find_equilibria, Equilibrium};
use emdenflow::field::region_of_with;
use emdenflow::integrator::{integrate, residual_check, Direction, EventSpec, Termination};
use emdenflow::manifolds::{
    default_seed_eps, regular_delta, seed_origin_slow, seed_origin_stable, seed_regular, Seed,
};
use emdenflow::params::{regime_of, RootCase};
use emdenflow::portrait::{render_portrait, PortraitOptions};
use emdenflow::report::{build_report, from_json, summary, to_json};
use emdenflow::Error;
use serde_json::json;
use std::path::Path;

use crate::config::{Failure, Resolved};
use crate::emit::{fmt17, sidecar_path, write_out};
use crate::{Branch, TargetArg};

impl From<TargetArg> for ShootTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::G => ShootTarget::G,
            TargetArg::H => ShootTarget::H,
        }
    }
}

fn branch_name(branch: Branch) -> &'static str {
    match branch {
        Branch::Reg => "reg",
        Branch::OriginStable => "origin-stable",
        Branch::OriginSlow => "origin-slow",
        Branch::Equilibrium => "equilibrium",
    }
}

/// Seed for the requested branch plus the time direction it is meant to be
/// followed in (+1 forward, -1 backward).
fn make_seed(rc: &Resolved, branch: Branch, eq_index: usize) -> Result<(Seed, f64), Error> {
    let params = &rc.params;
    match branch {
        Branch::Reg => Ok((seed_regular(params, regular_delta(params.p))?, 1.0)),
        Branch::OriginStable => {
            let eps = rc.seed_eps.unwrap_or_else(|| default_seed_eps([0.0, 0.0]));
            Ok((seed_origin_stable(params, eps)?, -1.0))
        }
        Branch::OriginSlow => {
            let eps = rc.seed_eps.unwrap_or_else(|| default_seed_eps([0.0, 0.0]));
            Ok((seed_origin_slow(params, eps)?, 1.0))
        }
        Branch::Equilibrium => {
            let eqs = find_equilibria(params);
            let eq: &Equilibrium = eqs.get(eq_index).ok_or_else(|| {
                Error::RegimeMismatch(format!(
                    "equilibrium index {eq_index} out of range ({} interior equilibria)",
                    eqs.len()
                ))
            })?;
            Ok((Seed { t0: 0.0, state: [eq.x, eq.y], truncation: 0.0 }, 1.0))
        }
    }
}

fn seed_json(seed: &Seed, eps: Option<f64>) -> serde_json::Value {
    json!({
        "t0": seed.t0,
        "state": seed.state,
        "truncation": seed.truncation,
        "eps": eps,
    })
}

fn verdict_of(term: &Termination) -> &'static str {
    match term {
        Termination::TimeEnd | Termination::MaxSteps => "budget-exhausted",
        Termination::Event { .. } => "exits-quadrant",
        Termination::Blowup { .. } => "blowup",
        Termination::Equilibrium { .. } => "converges-to-equilibrium",
    }
}

fn quadrant_exit_events<'a>() -> Vec<EventSpec<'a>> {
    vec![
        EventSpec::new("exit-x", Direction::Falling, true, |_t, s: [f64; 2]| s[0]),
        EventSpec::new("exit-y", Direction::Falling, true, |_t, s: [f64; 2]| s[1]),
    ]
}

const CSV_HEADER: &str = "t,r,x,y,u,ur,region,F,V,Z,G\n";

fn csv_row(
    params: &emdenflow::ProblemParams,
    y_first: Option<f64>,
    t: f64,
    x: f64,
    y: f64,
) -> String {
    let p = params.p;
    let r = t.exp();
    let u = r.powf(-2.0 / (p - 1.0)) * x;
    let ur = -r.powf(-(p + 1.0) / (p - 1.0)) * y;
    let region = region_of_with(params, y_first, x, y);
    let cells = [
        fmt17(t),
        fmt17(r),
        fmt17(x),
        fmt17(y),
        fmt17(u),
        fmt17(ur),
        region.to_string(),
        fmt17(f_functional(params, x, y)),
        fmt17(v_functional(params, x, y)),
        fmt17(z_functional(params, t, x, y)),
        fmt17(g_functional(params, t, x, y)),
    ];
    cells.join(",") + "\n"
}

/// Writes the CSV and its sidecar; to stdout both run in sequence
/// separated by a blank line.
fn emit_csv_pair(rc: &Resolved, csv: &str, sidecar: &serde_json::Value) -> Result<(), Failure> {
    let sidecar_text = serde_json::to_string_pretty(sidecar)? + "\n";
    match &rc.out {
        Some(path) => {
            write_out(Some(path), csv)?;
            write_out(Some(&sidecar_path(path)), &sidecar_text)?;
        }
        None => {
            write_out(None, csv)?;
            write_out(None, "\n")?;
            write_out(None, &sidecar_text)?;
        }
    }
    Ok(())
}

/// CSV for the constant solution sitting at an interior equilibrium.
fn constant_rows(
    rc: &Resolved,
    seed: &Seed,
    dt: Option<f64>,
    eq_index: usize,
) -> Result<(), Failure> {
    let params = &rc.params;
    let y_first = find_equilibria(params).first().map(|e| e.y);
    let [x, y] = seed.state;
    let step = dt.unwrap_or(rc.t_span / 100.0);
    if !(step > 0.0) {
        return Err(Failure::new(2, format!("--dt must be positive, got {step}")));
    }
    let mut csv = String::from(CSV_HEADER);
    let mut t = 0.0;
    let mut rows = 0usize;
    while t <= rc.t_span + 0.5 * step {
        csv.push_str(&csv_row(params, y_first, t, x, y));
        rows += 1;
        t += step;
    }
    let sidecar = json!({
        "schema_version": 1,
        "params": { "n": params.n, "p": params.p, "m": params.m },
        "branch": branch_name(Branch::Equilibrium),
        "verdict": "constant-solution",
        "termination": Termination::Equilibrium { target: eq_index + 1, t: rc.t_span },
        "events": [],
        "seed": seed_json(seed, rc.seed_eps),
        "rows": rows,
    });
    emit_csv_pair(rc, &csv, &sidecar)
}

fn emit_json(rc: &Resolved, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_out(rc.out.as_deref(), &text)?;
    Ok(())
}

pub fn constants(rc: &Resolved) -> Result<(), Failure> {
    let rep = build_report(&rc.params, None);
    emit_json(
        rc,
        &json!({
            "schema_version": rep.schema_version,
            "params": rep.params,
            "constants": rep.constants,
        }),
    )
}

pub fn equilibria(rc: &Resolved) -> Result<(), Failure> {
    let params = &rc.params;
    let mut interior = Vec::new();
    for eq in find_equilibria(params) {
        let cls = emdenflow::equilibria::classify_equilibrium(params, &eq)?;
        interior.push(json!({
            "x": eq.x,
            "y": eq.y,
            "index": eq.index,
            "multiplicity": eq.multiplicity,
            "classification": cls,
        }));
    }
    emit_json(
        rc,
        &json!({
            "schema_version": 1,
            "params": { "n": params.n, "p": params.p, "m": params.m },
            "origin": classify_origin(params),
            "interior": interior,
        }),
    )
}

pub fn classify(rc: &Resolved, branch: Branch) -> Result<(), Failure> {
    let (seed, dir) = make_seed(rc, branch, 0)?;
    let class = classify_limit(&rc.params, &seed, dir * rc.t_span)?;
    emit_json(
        rc,
        &json!({
            "schema_version": 1,
            "params": { "n": rc.params.n, "p": rc.params.p, "m": rc.params.m },
            "branch": branch_name(branch),
            "seed": seed_json(&seed, rc.seed_eps),
            "verdict": class,
        }),
    )
}

pub fn trajectory(
    rc: &Resolved,
    branch: Branch,
    dt: Option<f64>,
    eq_index: usize,
) -> Result<(), Failure> {
    let params = &rc.params;
    let (seed, dir) = make_seed(rc, branch, eq_index)?;
    let eqs = find_equilibria(params);

    if matches!(branch, Branch::Equilibrium) {
        // U_M is an exact constant solution; integrating it would only
        // amplify roundoff off the repelling cases, so emit it directly
        return constant_rows(rc, &seed, dt, eq_index);
    }

    let mut watch: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    watch.extend(eqs.iter().map(|e| [e.x, e.y]));
    let events = quadrant_exit_events();
    let traj = integrate(
        params,
        seed.state,
        seed.t0,
        seed.t0 + dir * rc.t_span,
        &rc.opts,
        &events,
        &watch,
    )?;

    let mut csv = String::from(CSV_HEADER);
    let y_first = eqs.first().map(|e| e.y);
    let mut rows = 0usize;
    match dt {
        Some(step) => {
            if !(step > 0.0) {
                return Err(Failure::new(2, format!("--dt must be positive, got {step}")));
            }
            let t_end = traj.final_t();
            let mut t = seed.t0;
            while (t - t_end) * dir < 0.0 {
                if let Some([x, y]) = traj.sample(t) {
                    csv.push_str(&csv_row(params, y_first, t, x, y));
                    rows += 1;
                }
                t += dir * step;
            }
            let [x, y] = traj.final_state();
            csv.push_str(&csv_row(params, y_first, t_end, x, y));
            rows += 1;
        }
        None => {
            for (&t, &[x, y]) in traj.ts.iter().zip(&traj.states) {
                csv.push_str(&csv_row(params, y_first, t, x, y));
                rows += 1;
            }
        }
    }

    let sidecar = json!({
        "schema_version": 1,
        "params": { "n": params.n, "p": params.p, "m": params.m },
        "branch": branch_name(branch),
        "verdict": verdict_of(&traj.termination),
        "termination": traj.termination,
        "events": traj.events,
        "seed": seed_json(&seed, rc.seed_eps),
        "rows": rows,
    });
    emit_csv_pair(rc, &csv, &sidecar)
}

pub fn portrait(
    rc: &Resolved,
    width: u32,
    height: u32,
    quiver: usize,
    overlay_reg: bool,
    overlay_stable: bool,
) -> Result<(), Failure> {
    let opts = PortraitOptions {
        width,
        height,
        quiver,
        overlay_regular: overlay_reg,
        overlay_origin_stable: overlay_stable,
        overlay_span: rc.t_span.min(PortraitOptions::default().overlay_span),
    };
    let svg = render_portrait(&rc.params, &opts)?;
    write_out(rc.out.as_deref(), &svg)?;
    Ok(())
}

pub fn diagnose(rc: &Resolved, branch: Branch) -> Result<(), Failure> {
    let params = &rc.params;
    let (seed, dir) = make_seed(rc, branch, 0)?;
    let eqs = find_equilibria(params);
    let mut watch: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    watch.extend(eqs.iter().map(|e| [e.x, e.y]));
    let events = quadrant_exit_events();
    let traj = integrate(
        params,
        seed.state,
        seed.t0,
        seed.t0 + dir * rc.t_span,
        &rc.opts,
        &events,
        &watch,
    )?;
    let samples = eval_diagnostics(params, &traj);
    let first = samples.first().copied();
    let last = samples.last().copied();

    let v_mono = check_v_monotonicity(params, &traj).ok();
    let g_max = check_g_negative(params, &traj).ok();
    let energy = |s: Option<emdenflow::diagnostics::DiagnosticSample>| {
        s.and_then(|s| e_sobolev(params, s.x, s.y).ok())
    };

    emit_json(
        rc,
        &json!({
            "schema_version": 1,
            "params": { "n": params.n, "p": params.p, "m": params.m },
            "branch": branch_name(branch),
            "verdict": verdict_of(&traj.termination),
            "termination": traj.termination,
            "v_monotonicity": v_mono,
            "g_max": g_max,
            "z_worst_residual": check_z_relation(params, &traj, 4),
            "radial_residual": residual_check(params, &traj, 4),
            "m21_bound": m21_bound(params),
            "sobolev_energy": { "initial": energy(first), "final": energy(last) },
            "first": first,
            "final": last,
        }),
    )
}

fn check_shoot_regime(rc: &Resolved, target: ShootTarget, m_lo: f64, m_hi: f64) -> Result<(), Failure> {
    for m in [m_lo, m_hi] {
        let case = regime_of(&rc.params.with_m(m)).root_case;
        let ok = match target {
            ShootTarget::G => matches!(case, RootCase::One | RootCase::Two),
            ShootTarget::H => matches!(case, RootCase::Two),
        };
        if !ok {
            return Err(Failure::from(Error::RegimeMismatch(format!(
                "target {target:?} needs {} at M = {m}, found {case:?}",
                match target {
                    ShootTarget::G => "an equilibrium",
                    ShootTarget::H => "the two-equilibria regime",
                }
            ))));
        }
    }
    Ok(())
}

fn shoot_result_json(rc: &Resolved, res: &ShootResult) -> serde_json::Value {
    json!({
        "schema_version": 1,
        "params": { "n": rc.params.n, "p": rc.params.p, "m": rc.params.m },
        "target": res.target,
        "grid": res.grid,
        "brackets": res.brackets,
        "refined": res.refined,
        "refine_failures": res.refine_failures,
        "conjecture_gap": res.root_gap,
        "gap_below_resolution": res.gap_below_resolution,
    })
}

pub fn shoot(
    rc: &Resolved,
    target: TargetArg,
    m_lo: f64,
    m_hi: f64,
    grid: usize,
    threads: Option<usize>,
) -> Result<(), Failure> {
    let target = ShootTarget::from(target);
    if !(m_lo < m_hi) {
        return Err(Failure::new(2, format!("need m_lo < m_hi, got [{m_lo}, {m_hi}]")));
    }
    check_shoot_regime(rc, target, m_lo, m_hi)?;
    let res = scan_with_threads(&rc.params, target, m_lo, m_hi, grid.max(2), threads);
    emit_json(rc, &shoot_result_json(rc, &res))
}

pub fn report(
    rc: &Resolved,
    target: Option<TargetArg>,
    m_lo: Option<f64>,
    m_hi: Option<f64>,
    grid: usize,
) -> Result<(), Failure> {
    let shoot = match target {
        Some(t) => {
            let (lo, hi) = match (m_lo, m_hi) {
                (Some(lo), Some(hi)) if lo < hi => (lo, hi),
                _ => {
                    return Err(Failure::new(
                        2,
                        "report --target needs --m-lo < --m-hi for the scan window",
                    ))
                }
            };
            let t = ShootTarget::from(t);
            check_shoot_regime(rc, t, lo, hi)?;
            Some(scan_with_threads(&rc.params, t, lo, hi, grid.max(2), None))
        }
        None => None,
    };
    let rep = build_report(&rc.params, shoot);
    write_out(rc.out.as_deref(), &(to_json(&rep) + "\n"))?;
    Ok(())
}

/// Reads a report back, re-derives the parameter-determined blocks, and
/// checks the document survives a parse/print cycle with an identical
/// summary.
pub fn verify_report(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path)?;
    let rep = from_json(&text)?;
    let params = emdenflow::ProblemParams::new(
        rep.params.n,
        rep.params.p,
        rep.params.m,
    )?;
    let rebuilt = build_report(&params, None);
    if rebuilt.constants != rep.constants || rebuilt.equilibria != rep.equilibria {
        return Err(Failure::new(
            3,
            "stored constants/equilibria do not match re-derivation from the stored parameters",
        ));
    }
    let reparsed = from_json(&to_json(&rep))?;
    if summary(&reparsed) != summary(&rep) {
        return Err(Failure::new(3, "summary changed across a parse/print round trip"));
    }
    let doc = json!({
        "schema_version": 1,
        "verified": path.display().to_string(),
        "round_trip": "ok",
    });
    write_out(out, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    Ok(())
}
