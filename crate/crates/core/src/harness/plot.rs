//! Minimal SVG line charts.

use std::fmt::Write as _;

use super::report::EnvelopeTable;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

const PALETTE: [&str; 6] = ["#c0392b", "#8e44ad", "#d35400", "#16a085", "#2c3e50", "#7f8c8d"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
    /// Symmetric error half-widths, drawn as bars.
    pub errors: Option<Vec<f64>>,
}

/// Chooses a log y-axis when the positive values span more than three decades.
fn use_log(series: &[Series]) -> bool {
    let vals = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).filter(|v| *v > 0.0 && v.is_finite());
    let (lo, hi) = vals.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi > 0.0 && hi / lo > 1e3
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.0 {
        2.0
    } else if f < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.0e}")
    }
}

/// Renders `series` against a shared x/y frame.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let log = use_log(series);
    let ty = |v: f64| if log { v.log10() } else { v };
    let keep = |v: f64| v.is_finite() && (!log || v > 0.0);

    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for s in series {
        for (i, &(x, y)) in s.points.iter().enumerate() {
            if !keep(y) {
                continue;
            }
            let e = s.errors.as_ref().map_or(0.0, |e| e[i]);
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            for v in [y - e, y, y + e] {
                if keep(v) {
                    y_lo = y_lo.min(ty(v));
                    y_hi = y_hi.max(ty(v));
                }
            }
        }
    }
    if !x_lo.is_finite() {
        (x_lo, x_hi, y_lo, y_hi) = (0.0, 1.0, 0.0, 1.0);
    }
    if !log {
        y_lo = y_lo.min(0.0);
    }
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| TOP + ph - (ty(y) - y_lo) / (y_hi - y_lo) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, esc(title));
    let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);

    let xs = nice_step(x_hi - x_lo, 6);
    let mut x = (x_lo / xs).ceil() * xs;
    while x <= x_hi + 1e-9 * xs {
        let px = sx(x);
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="#ddd"/>"##, TOP, TOP + ph);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, fmt_tick(x));
        x += xs;
    }
    let ys = if log { 1.0f64.max(nice_step(y_hi - y_lo, 6).round()) } else { nice_step(y_hi - y_lo, 6) };
    let mut y = (y_lo / ys).ceil() * ys;
    while y <= y_hi + 1e-9 * ys {
        let py = TOP + ph - (y - y_lo) / (y_hi - y_lo) * ph;
        let label = if log { fmt_tick(10f64.powf(y)) } else { fmt_tick(y) };
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 6.0, py + 4.0);
        y += ys;
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 14.0, esc(x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        esc(&format!("{y_label}{}", if log { " (log)" } else { "" }))
    );

    for (k, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| keep(p.1))
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        if pts.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="2"{dash} points="{}"/>"#,
                ser.color,
                pts.join(" ")
            );
        }
        if let Some(errs) = &ser.errors {
            for (&(x, y), &e) in ser.points.iter().zip(errs) {
                if e > 0.0 && keep(y - e) && keep(y + e) {
                    let px = sx(x);
                    let _ = writeln!(
                        s,
                        r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="{}"/>"#,
                        sy(y - e),
                        sy(y + e),
                        ser.color
                    );
                }
            }
        }
        for &(x, y) in ser.points.iter().filter(|p| keep(p.1)) {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#, sx(x), sy(y), ser.color);
        }
        let ly = TOP + 14.0 + 20.0 * k as f64;
        let lx = W - RIGHT + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/>"#,
            lx + 24.0,
            ser.color
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, esc(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Figure for one order: Ŵ_p^p with 3·SE bars, the moment curve, the oracle
/// when known, and each envelope.
pub fn order_figure(p: f64, tables: &[&EnvelopeTable]) -> String {
    let Some(first) = tables.first() else {
        return line_chart(&format!("p = {p}"), "t", "W_p^p", &[]);
    };
    let rows = &first.rows;
    let mut series = vec![
        Series {
            label: "Ŵ_p^p (±3 SE)".into(),
            color: "#2471a3".into(),
            dashed: false,
            points: rows.iter().map(|r| (r.t, r.w_hat_pp)).collect(),
            errors: Some(rows.iter().map(|r| 3.0 * r.w_hat_se).collect()),
        },
        Series {
            label: "E|X−X′|^p".into(),
            color: "#27ae60".into(),
            dashed: true,
            points: rows.iter().map(|r| (r.t, r.moment_pp)).collect(),
            errors: None,
        },
    ];
    if rows.iter().all(|r| r.oracle.is_some()) {
        series.push(Series {
            label: "oracle".into(),
            color: "#000000".into(),
            dashed: true,
            points: rows.iter().map(|r| (r.t, r.oracle.unwrap_or(f64::NAN))).collect(),
            errors: None,
        });
    }
    for (i, t) in tables.iter().enumerate() {
        let mut label = t.kind.name().to_string();
        if t.vacuous.is_some() {
            label.push_str(" (vacuous)");
        }
        series.push(Series {
            label,
            color: PALETTE[i % PALETTE.len()].into(),
            dashed: false,
            points: t.rows.iter().map(|r| (r.t, r.envelope)).collect(),
            errors: None,
        });
    }
    line_chart(&format!("p = {p}"), "t", "W_p^p", &series)
}
