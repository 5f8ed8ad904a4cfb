//! Violin-style distribution plots as standalone SVG.
//!
//! Each group is drawn as a mirrored Gaussian kernel density estimate
//! (Silverman bandwidth) with a median tick. Output is a pure function of
//! the input values.

use std::fmt::Write as _;

use crate::stats;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const GRID: usize = 64;

fn kde(values: &[f64], at: f64, bw: f64) -> f64 {
    let norm = 1.0 / (values.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    values.iter().map(|v| (-0.5 * ((at - v) / bw).powi(2)).exp()).sum::<f64>() * norm
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn violins(title: &str, y_label: &str, groups: &[(&str, &[f64])]) -> String {
    let finite: Vec<Vec<f64>> = groups
        .iter()
        .map(|(_, v)| v.iter().copied().filter(|x| x.is_finite()).collect())
        .collect();
    let all: Vec<f64> = finite.iter().flatten().copied().collect();
    let (mut lo, mut hi) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let y_of = |v: f64| MARGIN + plot_h * (hi - v) / (hi - lo);
    let slot = (WIDTH - 2.0 * MARGIN) / groups.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" transform="rotate(-90 14 {:.2})" text-anchor="middle">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{:.2}" stroke="#333"/>"##,
        HEIGHT - MARGIN
    );
    for tick in 0..=4 {
        let v = lo + (hi - lo) * tick as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
            MARGIN - 4.0,
            y + 4.0,
            v
        );
    }
    let palette = ["#4c78a8", "#f58518", "#54a24b", "#e45756"];
    for (g, ((label, _), values)) in groups.iter().zip(&finite).enumerate() {
        let cx = MARGIN + slot * (g as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle">{} (n={})</text>"#,
            HEIGHT - MARGIN + 18.0,
            escape(label),
            values.len()
        );
        if values.len() < 2 {
            continue;
        }
        let sd = stats::std_dev(values);
        let bw = if sd > 0.0 { 1.06 * sd * (values.len() as f64).powf(-0.2) } else { (hi - lo) / 50.0 };
        let grid: Vec<(f64, f64)> = (0..=GRID)
            .map(|i| {
                let v = lo + (hi - lo) * i as f64 / GRID as f64;
                (v, kde(values, v, bw))
            })
            .collect();
        let peak = grid.iter().map(|p| p.1).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let half = 0.4 * slot;
        let mut pts: Vec<String> = grid
            .iter()
            .map(|(v, d)| format!("{:.2},{:.2}", cx + half * d / peak, y_of(*v)))
            .collect();
        pts.extend(grid.iter().rev().map(|(v, d)| format!("{:.2},{:.2}", cx - half * d / peak, y_of(*v))));
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{}" fill-opacity="0.6" stroke="{}"/>"#,
            pts.join(" "),
            palette[g % palette.len()],
            palette[g % palette.len()]
        );
        let my = y_of(stats::median(values));
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{my:.2}" x2="{:.2}" y2="{my:.2}" stroke="#000" stroke-width="2"/>"##,
            cx - 0.15 * slot,
            cx + 0.15 * slot
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let a = [0.1, 0.2, 0.25, 0.3, 0.5];
        let b = [-0.1, 0.0, 0.05];
        let s1 = violins("Matched vs random", "r", &[("matched", &a), ("random", &b)]);
        let s2 = violins("Matched vs random", "r", &[("matched", &a), ("random", &b)]);
        assert_eq!(s1, s2);
        assert!(s1.starts_with("<svg") && s1.trim_end().ends_with("</svg>"));
        assert_eq!(s1.matches("<polygon").count(), 2);
        assert!(violins("empty", "y", &[("none", &[])]).contains("n=0"));
    }
}
