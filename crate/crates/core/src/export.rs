//! File outputs: per-slot traces, ensemble summaries, sweep tables and
//! simple SVG charts.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::analysis::SweepPoint;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::scenario::Scenario;
use crate::sim::{EnsembleSummary, RunTrace};

pub const TRACE_HEADER: [&str; 10] = [
    "slot",
    "node",
    "flow",
    "Q",
    "E",
    "R",
    "P_total",
    "mu_total",
    "e_harvested",
    "S_summary",
];

/// Writes a recorded run. Each slot has one row per `(node, flow)` with
/// backlog, admission and the rate sent for that flow, then one energy row
/// per node with battery level, transmit power, total outgoing rate,
/// accepted harvest and the gains of its out-links (`;`-separated).
pub fn write_trace<T: Scalar, W: Write>(
    scenario: &Scenario<T>,
    trace: &RunTrace<T>,
    out: W,
) -> Result<()> {
    let net = &scenario.net;
    let f = net.num_flows();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    let s = |x: T| x.to_string();
    for rec in &trace.records {
        let slot = rec.state.slot.to_string();
        for n in 0..net.num_nodes() {
            let node = net.label(n).to_string();
            for k in 0..f {
                let sent = net
                    .out_links(n)
                    .iter()
                    .fold(T::zero(), |a, &l| a + rec.decision.rate(l, k, f));
                w.write_record([
                    slot.as_str(),
                    &node,
                    &net.label(net.flow_dest(k)).to_string(),
                    &s(rec.state.q(n, k)),
                    "",
                    &s(rec.decision.admit[n * f + k]),
                    "",
                    &s(sent),
                    "",
                    "",
                ])?;
            }
        }
        for n in 0..net.num_nodes() {
            let outs = net.out_links(n);
            let mu = outs
                .iter()
                .fold(T::zero(), |a, &l| a + rec.decision.link_rate[l]);
            let gains: Vec<String> = outs
                .iter()
                .map(|&l| {
                    let lk = net.link(l);
                    s(rec.env.channel.gain(lk.from, lk.to))
                })
                .collect();
            w.write_record([
                slot.as_str(),
                &net.label(n).to_string(),
                "",
                "",
                &s(rec.state.energy[n]),
                "",
                &s(rec.decision.node_power(net, n)),
                &s(mu),
                &s(rec.decision.harvest[n]),
                &gains.join(";"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(summary: &EnsembleSummary, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, summary)?;
    Ok(())
}

pub fn read_summary<R: Read>(input: R) -> Result<EnsembleSummary> {
    Ok(serde_json::from_reader(input)?)
}

pub const SWEEP_HEADER: [&str; 5] = [
    "param_value",
    "algorithm",
    "mean_utility",
    "std_utility",
    "energy_utilization",
];

/// One row per completed point; skipped points are left out.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for p in points {
        if let Some(s) = &p.summary {
            w.write_record([
                p.param_value.to_string(),
                p.algorithm.name().to_string(),
                s.utility.mean.to_string(),
                s.utility.std.to_string(),
                s.energy_utilization.mean.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A named polyline for [`line_chart_svg`].
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Standalone SVG line chart with axes, tick labels and a legend.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 70.0;
    const R: f64 = 150.0;
    const T: f64 = 40.0;
    const B: f64 = 50.0;
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    ];

    let all = series.iter().flat_map(|s| s.points.iter().copied());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (x, y) in all.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - (y - y0) / (y1 - y0) * (H - T - B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (L + W - R) / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{L}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{L}" y1="{T}" x2="{L}" y2="{}" stroke="black"/>"#,
        H - B,
        W - R,
        H - B,
        H - B
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * f64::from(i) / 4.0;
        let fy = y0 + (y1 - y0) * f64::from(i) / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            px(fx),
            H - B + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            L - 6.0,
            py(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (L + W - R) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (T + H - B) / 2.0,
        (T + H - B) / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (cx, cy) = p.split_once(',').unwrap();
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = T + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            W - R + 10.0,
            W - R + 30.0,
            W - R + 36.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
