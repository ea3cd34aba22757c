//! Dependency-free SVG bar charts. Coordinates are printed with fixed
//! precision so identical data gives identical files.

use std::fmt::Write;

pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 110.0;
const PALETTE: [&str; 6] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// A grouped bar chart: one group per category, one bar per series.
/// Negative values hang below the zero line.
pub fn bar_chart(title: &str, y_label: &str, categories: &[String], series: &[Series]) -> String {
    assert!(series.iter().all(|s| s.values.len() == categories.len()));
    let values = series.iter().flat_map(|s| &s.values).copied();
    let (lo, hi) = values.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let plot_h = HEIGHT - TOP - BOTTOM;
    let plot_w = WIDTH - LEFT - RIGHT;
    let y = |v: f64| TOP + (hi - v) / span * plot_h;
    let group_w = plot_w / categories.len().max(1) as f64;
    let bar_w = group_w * 0.8 / series.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="Helvetica, Arial, sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    for i in 0..=4 {
        let v = lo + span * f64::from(i) / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            WIDTH - RIGHT,
            y(v),
            y(v),
            LEFT - 6.0,
            y(v) + 4.0,
            tick(v)
        );
    }
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for (c, &v) in ser.values.iter().enumerate() {
            let x = LEFT + c as f64 * group_w + group_w * 0.1 + k as f64 * bar_w;
            let (top, bottom) = (y(v.max(0.0)), y(v.min(0.0)));
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{top:.2}" width="{bar_w:.2}" height="{:.2}" fill="{color}"><title>{}: {v:.4}</title></rect>"#,
                bottom - top,
                escape(&categories[c])
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#,
        WIDTH - RIGHT,
        y(0.0),
        y(0.0)
    );
    let base = HEIGHT - BOTTOM + 14.0;
    for (c, name) in categories.iter().enumerate() {
        let x = LEFT + (c as f64 + 0.5) * group_w;
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{base:.1}" text-anchor="end" transform="rotate(-40 {x:.2} {base:.1})">{}</text>"#,
            escape(name)
        );
    }
    if series.len() > 1 {
        for (k, ser) in series.iter().enumerate() {
            let x = WIDTH - RIGHT - 90.0;
            let ly = TOP + 4.0 + 18.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{ly:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                PALETTE[k % PALETTE.len()],
                x + 18.0,
                ly + 10.0,
                escape(&ser.name)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}
