use crate::equilibria::{classify_equilibrium, find_equilibria, EquilibriumKind};
use crate::error::Result;
use crate::field::{eval_h, lnull, psi, region_of_with, Region};
use crate::integrator::{integrate, Direction, EventSpec, IntegratorOptions};
use crate::manifolds::{default_seed_eps, regular_delta, seed_origin_stable, seed_regular};
use crate::params::{derive_constants, ProblemParams};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortraitOptions {
    pub width: u32,
    pub height: u32,
    /// quiver arrows per axis
    pub quiver: usize,
    /// overlay the regular trajectory (forward from its expansion seed)
    pub overlay_regular: bool,
    /// overlay the origin-stable trajectory backward (drawn only in the
    /// regimes where it exists, i.e. K > 0)
    pub overlay_origin_stable: bool,
    pub overlay_span: f64,
}

impl Default for PortraitOptions {
    fn default() -> Self {
        PortraitOptions {
            width: 760,
            height: 560,
            quiver: 18,
            overlay_regular: false,
            overlay_origin_stable: false,
            overlay_span: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEquilibrium {
    pub x: f64,
    pub y: f64,
    pub kind: String,
}

/// Topology summary embedded verbatim in the SVG's <metadata> element so
/// the picture can be checked programmatically without re-deriving it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortraitMeta {
    pub schema_version: u32,
    pub n: u32,
    pub p: f64,
    pub m: f64,
    pub equilibrium_count: usize,
    pub equilibria: Vec<MetaEquilibrium>,
    /// the curve nullcline is a bounded arc (K > 0, M > 0) rather than
    /// reaching y = +infinity
    pub c_bounded: bool,
    /// region tags present in the viewport, sorted
    pub regions: Vec<String>,
    pub x_max: f64,
    pub y_max: f64,
}

struct Frame {
    x_max: f64,
    y_max: f64,
    w: f64,
    h: f64,
    margin: f64,
}

impl Frame {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let px = self.margin + x / self.x_max * (self.w - 2.0 * self.margin);
        let py = self.h - self.margin - y / self.y_max * (self.h - 2.0 * self.margin);
        (px, py)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= self.x_max * 1.0005 && y <= self.y_max * 1.0005
    }
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

fn polyline(out: &mut String, frame: &Frame, pts: &[(f64, f64)], class: &str) {
    if pts.len() < 2 {
        return;
    }
    let mut d = String::new();
    for (i, &(x, y)) in pts.iter().enumerate() {
        let (px, py) = frame.map(x, y);
        let _ = write!(d, "{}{},{}", if i == 0 { "M" } else { " L" }, fmt2(px), fmt2(py));
    }
    let _ = writeln!(out, r#"<path class="{class}" d="{d}"/>"#);
}

/// Draws the points as polyline segments, breaking where the orbit leaves
/// the viewport.
fn clipped_polyline(out: &mut String, frame: &Frame, pts: &[[f64; 2]], class: &str) {
    let mut seg: Vec<(f64, f64)> = Vec::new();
    for &[x, y] in pts {
        if frame.contains(x, y) {
            seg.push((x.min(frame.x_max), y.min(frame.y_max)));
        } else {
            polyline(out, frame, &seg, class);
            seg.clear();
        }
    }
    polyline(out, frame, &seg, class);
}

fn region_scan(params: &ProblemParams, frame: &Frame, n: usize) -> (Vec<Region>, Vec<(Region, f64, f64)>) {
    let y_first = find_equilibria(params).first().map(|e| e.y);
    let mut sums: Vec<(usize, f64, f64)> = vec![(0, 0.0, 0.0); 5];
    for i in 0..n {
        let x = (i as f64 + 0.5) / n as f64 * frame.x_max;
        for j in 0..n {
            let y = (j as f64 + 0.5) / n as f64 * frame.y_max;
            let r = region_of_with(params, y_first, x, y);
            let slot = &mut sums[r as usize];
            slot.0 += 1;
            slot.1 += x;
            slot.2 += y;
        }
    }
    let mut present = Vec::new();
    let mut anchors = Vec::new();
    for (idx, &(count, sx, sy)) in sums.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let region = [Region::A, Region::B, Region::C, Region::D, Region::E][idx];
        present.push(region);
        anchors.push((region, sx / count as f64, sy / count as f64));
    }
    (present, anchors)
}

fn overlay_points(params: &ProblemParams, state: [f64; 2], t0: f64, span: f64) -> Vec<[f64; 2]> {
    let events = [
        EventSpec::new("exit-x", Direction::Falling, true, |_t, s: [f64; 2]| s[0]),
        EventSpec::new("exit-y", Direction::Falling, true, |_t, s: [f64; 2]| s[1]),
    ];
    match integrate(params, state, t0, t0 + span, &IntegratorOptions::default(), &events, &[]) {
        Ok(traj) => traj.states,
        Err(_) => Vec::new(),
    }
}

/// Renders the phase portrait as a standalone SVG document.  The output is
/// a pure function of (params, opts): floats are formatted with fixed
/// precision and every collection is iterated in a fixed order, so repeated
/// runs on the same build emit identical bytes.
pub fn render_portrait(params: &ProblemParams, opts: &PortraitOptions) -> Result<String> {
    let eqs = find_equilibria(params);
    let c = derive_constants(params);

    let x_max = eqs.iter().map(|e| e.x).fold(f64::NAN, f64::max);
    let x_max = if x_max.is_nan() { 2.0 } else { 2.0 * x_max };
    let y_eq = eqs.iter().map(|e| e.y).fold(f64::NAN, f64::max);
    let y_max = if y_eq.is_nan() {
        // no interior equilibrium: make sure the curve nullcline's onset
        // ordinate (K/M)^{(p+1)/(p-1)} is visible (K < 0, M < 0 regimes)
        let mut y = lnull(params, x_max).max(1.0);
        if c.k < 0.0 && params.m < 0.0 {
            y = y.max(1.5 * (c.k / params.m).powf((params.p + 1.0) / (params.p - 1.0)));
        }
        y
    } else {
        (2.0 * y_eq).max(lnull(params, x_max))
    };

    let frame = Frame {
        x_max,
        y_max,
        w: f64::from(opts.width),
        h: f64::from(opts.height),
        margin: 34.0,
    };

    let (present, anchors) = region_scan(params, &frame, 160);

    let meta = PortraitMeta {
        schema_version: 1,
        n: params.n,
        p: params.p,
        m: params.m,
        equilibrium_count: eqs.len(),
        equilibria: eqs
            .iter()
            .map(|eq| MetaEquilibrium {
                x: eq.x,
                y: eq.y,
                kind: classify_equilibrium(params, eq)
                    .map(|cl| format!("{:?}", cl.kind))
                    .unwrap_or_else(|_| "Unclassified".into()),
            })
            .collect(),
        c_bounded: c.k > 0.0 && params.m > 0.0,
        regions: present.iter().map(|r| r.to_string()).collect(),
        x_max,
        y_max,
    };
    let meta_json = serde_json::to_string(&meta).expect("meta serializes");

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = opts.width,
        h = opts.height
    );
    let _ = writeln!(svg, "<metadata id=\"topology\">{meta_json}</metadata>");
    svg.push_str(concat!(
        "<style>\n",
        ".frame{fill:white;stroke:#444;stroke-width:1}\n",
        ".lnull{fill:none;stroke:#1f77b4;stroke-width:1.6}\n",
        ".cnull{fill:none;stroke:#d62728;stroke-width:1.6}\n",
        ".quiver{stroke:#999;stroke-width:0.9}\n",
        ".t-reg{fill:none;stroke:#2ca02c;stroke-width:1.4}\n",
        ".t-st{fill:none;stroke:#9467bd;stroke-width:1.4;stroke-dasharray:5 3}\n",
        ".eq-attract{fill:#1f77b4;stroke:#123}\n",
        ".eq-repel{fill:#d62728;stroke:#311}\n",
        ".eq-other{fill:#e6b420;stroke:#431}\n",
        ".saddle{stroke:#222;stroke-width:1.8}\n",
        ".label{font-family:monospace;font-size:15px;fill:#333}\n",
        ".axis{font-family:monospace;font-size:11px;fill:#555}\n",
        "</style>\n"
    ));

    let (fx0, fy0) = frame.map(0.0, frame.y_max);
    let (fx1, fy1) = frame.map(frame.x_max, 0.0);
    let _ = writeln!(
        svg,
        r#"<rect class="frame" x="{}" y="{}" width="{}" height="{}"/>"#,
        fmt2(fx0),
        fmt2(fy0),
        fmt2(fx1 - fx0),
        fmt2(fy1 - fy0)
    );

    // curve nullcline C, sampled on y and broken where undefined/offscreen
    let samples = 480;
    let mut seg: Vec<(f64, f64)> = Vec::new();
    for j in 0..=samples {
        let y = j as f64 / samples as f64 * frame.y_max;
        match psi(params, y) {
            Some(x) if x <= frame.x_max * 1.0005 => seg.push((x.min(frame.x_max), y)),
            _ => {
                polyline(&mut svg, &frame, &seg, "cnull");
                seg.clear();
            }
        }
    }
    polyline(&mut svg, &frame, &seg, "cnull");

    // line nullcline L, clipped to the viewport
    let x_line_end = frame.x_max.min(0.5 * (params.p - 1.0) * frame.y_max);
    polyline(
        &mut svg,
        &frame,
        &[(0.0, 0.0), (x_line_end, lnull(params, x_line_end))],
        "lnull",
    );

    // normalized direction field
    let nq = opts.quiver.max(2);
    let cell = (frame.x_max / nq as f64).min(frame.y_max / nq as f64);
    let arrow = 0.42 * cell;
    for i in 0..nq {
        let x = (i as f64 + 0.5) / nq as f64 * frame.x_max;
        for j in 0..nq {
            let y = (j as f64 + 0.5) / nq as f64 * frame.y_max;
            let [hx, hy] = eval_h(params, x, y);
            let norm = hx.hypot(hy);
            if norm < 1e-12 {
                continue;
            }
            let (ux, uy) = (hx / norm * arrow, hy / norm * arrow);
            let (px0, py0) = frame.map(x - 0.5 * ux, y - 0.5 * uy);
            let (px1, py1) = frame.map(x + 0.5 * ux, y + 0.5 * uy);
            let _ = writeln!(
                svg,
                r#"<line class="quiver" x1="{}" y1="{}" x2="{}" y2="{}" marker-end="url(#ah)"/>"#,
                fmt2(px0),
                fmt2(py0),
                fmt2(px1),
                fmt2(py1)
            );
        }
    }
    svg.push_str(concat!(
        "<defs><marker id=\"ah\" viewBox=\"0 0 6 6\" refX=\"5\" refY=\"3\" ",
        "markerWidth=\"5\" markerHeight=\"5\" orient=\"auto-start-reverse\">",
        "<path d=\"M0,0 L6,3 L0,6 z\" fill=\"#999\"/></marker></defs>\n"
    ));

    if opts.overlay_regular {
        if let Ok(seed) = seed_regular(params, regular_delta(params.p)) {
            let pts = overlay_points(params, seed.state, seed.t0, opts.overlay_span);
            clipped_polyline(&mut svg, &frame, &pts, "t-reg");
        }
    }
    if opts.overlay_origin_stable {
        if let Ok(seed) = seed_origin_stable(params, default_seed_eps([0.0, 0.0])) {
            let pts = overlay_points(params, seed.state, seed.t0, -opts.overlay_span);
            clipped_polyline(&mut svg, &frame, &pts, "t-st");
        }
    }

    // equilibrium markers: saddles as crosses, others as discs by stability
    for eq in &eqs {
        let (px, py) = frame.map(eq.x, eq.y);
        let kind = classify_equilibrium(params, eq).map(|cl| cl.kind);
        match kind {
            Ok(EquilibriumKind::Saddle) => {
                let r = 5.0;
                let _ = writeln!(
                    svg,
                    r#"<path class="saddle" d="M{},{} L{},{} M{},{} L{},{}"/>"#,
                    fmt2(px - r),
                    fmt2(py - r),
                    fmt2(px + r),
                    fmt2(py + r),
                    fmt2(px - r),
                    fmt2(py + r),
                    fmt2(px + r),
                    fmt2(py - r)
                );
            }
            Ok(k) => {
                let class = match k {
                    EquilibriumKind::Sink
                    | EquilibriumKind::NodeAttracting
                    | EquilibriumKind::SpiralAttracting
                    | EquilibriumKind::WeakSink => "eq-attract",
                    EquilibriumKind::Source
                    | EquilibriumKind::NodeRepelling
                    | EquilibriumKind::SpiralRepelling
                    | EquilibriumKind::WeakSource => "eq-repel",
                    _ => "eq-other",
                };
                let _ = writeln!(svg, r#"<circle class="{class}" cx="{}" cy="{}" r="4.5"/>"#, fmt2(px), fmt2(py));
            }
            Err(_) => {
                let _ = writeln!(svg, r#"<circle class="eq-other" cx="{}" cy="{}" r="4.5"/>"#, fmt2(px), fmt2(py));
            }
        }
    }
    // the origin is always an equilibrium of the planar system
    let (ox, oy) = frame.map(0.0, 0.0);
    let _ = writeln!(svg, r##"<circle cx="{}" cy="{}" r="3.5" fill="white" stroke="#222"/>"##, fmt2(ox), fmt2(oy));

    // region tags at the centroid of their scan samples
    for (region, ax, ay) in &anchors {
        let (px, py) = frame.map(*ax, *ay);
        let _ = writeln!(svg, r#"<text class="label" x="{}" y="{}">{}</text>"#, fmt2(px), fmt2(py), region);
    }

    let _ = writeln!(
        svg,
        r#"<text class="axis" x="{}" y="{}">x = {}</text>"#,
        fmt2(fx1 - 60.0),
        fmt2(fy1 + 14.0),
        fmt2(frame.x_max)
    );
    let _ = writeln!(
        svg,
        r#"<text class="axis" x="{}" y="{}">y = {}</text>"#,
        fmt2(fx0 + 2.0),
        fmt2(fy0 - 6.0),
        fmt2(frame.y_max)
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Parses the topology summary back out of a rendered document.
pub fn extract_meta(svg: &str) -> Result<PortraitMeta> {
    let start = svg
        .find("<metadata id=\"topology\">")
        .ok_or_else(|| crate::error::Error::Format("no topology metadata element".into()))?;
    let rest = &svg[start + "<metadata id=\"topology\">".len()..];
    let end = rest
        .find("</metadata>")
        .ok_or_else(|| crate::error::Error::Format("unterminated metadata element".into()))?;
    serde_json::from_str(&rest[..end]).map_err(|e| crate::error::Error::Format(e.to_string()))
}
