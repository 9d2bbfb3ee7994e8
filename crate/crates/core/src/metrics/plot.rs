//! Minimal SVG bar charts of per-variant metric means.

use std::fmt::Write as _;

use super::report::{ComparisonReport, Variant};
use super::MetricsBundle;

const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart of labelled values.
pub fn bar_chart(title: &str, unit: &str, bars: &[(String, f64)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, W / 2.0, escape(title));
    let max = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let top = if max > 0.0 { max * 1.1 } else { 1.0 };
    let plot_h = H - 2.0 * MARGIN;
    let base_y = H - MARGIN;
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{base_y}" x2="{}" y2="{base_y}" stroke="black"/>"#,
        W - MARGIN / 2.0
    );
    let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{base_y}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = top * k as f64 / 4.0;
        let y = base_y - plot_h * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, MARGIN - 6.0, y + 4.0, v);
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(unit)
    );
    let n = bars.len().max(1) as f64;
    let slot = (W - 1.5 * MARGIN) / n;
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = plot_h * (v.max(0.0) / top);
        let x = MARGIN + slot * i as f64 + slot * 0.15;
        let _ = writeln!(
            s,
            r##"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="#4a7ab5"/>"##,
            base_y - h,
            slot * 0.7
        );
        let cx = x + slot * 0.35;
        let _ = writeln!(s, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, base_y + 16.0, escape(label));
        let _ = writeln!(s, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{v:.3}</text>"#, base_y - h - 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn means(report: &ComparisonReport, f: fn(&MetricsBundle) -> f64) -> Vec<(String, f64)> {
    let mut order: Vec<(String, Variant)> = Vec::new();
    for r in &report.runs {
        let k = (r.scenario.clone(), r.variant);
        if !order.contains(&k) {
            order.push(k);
        }
    }
    let multi = order.iter().any(|(s, _)| *s != order[0].0);
    order
        .into_iter()
        .map(|(sc, v)| {
            let xs: Vec<f64> = report
                .runs
                .iter()
                .filter(|r| r.scenario == sc && r.variant == v)
                .map(|r| f(&r.metrics))
                .collect();
            let label = if multi { format!("{sc}/{v}") } else { v.to_string() };
            (label, xs.iter().sum::<f64>() / xs.len() as f64)
        })
        .collect()
}

type MetricSpec = (&'static str, &'static str, &'static str, fn(&MetricsBundle) -> f64);

/// One chart per headline metric: (file name, SVG text).
pub fn metric_plots(report: &ComparisonReport) -> Vec<(String, String)> {
    let specs: [MetricSpec; 4] = [
        ("availability.svg", "Availability", "fraction of time", |m| m.availability),
        ("initial_time.svg", "Available-initial-time", "seconds", |m| m.available_initial_time_s),
        ("data_loss.svg", "Data loss", "fraction of solicitations", |m| m.data_loss),
        ("packet_delay.svg", "Mean packet delay", "seconds", |m| m.mean_packet_delay_s),
    ];
    specs
        .iter()
        .map(|(file, title, unit, f)| (file.to_string(), bar_chart(title, unit, &means(report, *f))))
        .collect()
}
