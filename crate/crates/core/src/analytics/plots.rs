//! Plain SVG renderings of the analysis results. Output depends only on the
//! input values, so identical inputs give identical files.

use std::fmt::Write as _;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD: f64 = 40.0;
const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

fn open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r##"<line x1="{PAD}" y1="{y}" x2="{x}" y2="{y}" stroke="#333"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{y}" stroke="#333"/>"##,
        y = H - PAD,
        x = W - PAD
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Scale {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, from: f64, to: f64) -> Scale {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
        Scale { lo, hi, from, to }
    }

    fn at(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }
}

fn bounds(vs: impl Iterator<Item = f64>) -> (f64, f64) {
    vs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Histogram of scores on 0..100 in bins of `bin_width`.
pub fn histogram_svg(title: &str, values: &[f64], bin_width: f64) -> String {
    let bins = (100.0 / bin_width).ceil() as usize;
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = ((v / bin_width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let x = Scale::new(0.0, 100.0, PAD, W - PAD);
    let y = Scale::new(0.0, max, H - PAD, PAD);
    let mut s = open(title);
    for (i, c) in counts.iter().enumerate() {
        let x0 = x.at(i as f64 * bin_width);
        let x1 = x.at(((i + 1) as f64 * bin_width).min(100.0));
        let top = y.at(*c as f64);
        let _ = writeln!(
            s,
            r##"<rect x="{x0:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="#7570b3" stroke="#fff"><title>{}-{}: {c}</title></rect>"##,
            x1 - x0,
            (H - PAD) - top,
            i as f64 * bin_width,
            (i + 1) as f64 * bin_width
        );
    }
    for t in [0, 25, 50, 75, 100] {
        let _ =
            writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{t}</text>"#, x.at(t as f64), H - PAD + 14.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Bars of rubric means with ±1 sd whiskers.
pub fn rubric_bars_svg(title: &str, labels: &[String], means: &[f64], sds: &[f64]) -> String {
    let n = means.len().max(1);
    let x_step = (W - 2.0 * PAD) / n as f64;
    let y = Scale::new(0.0, 100.0, H - PAD, PAD);
    let mut s = open(title);
    for (i, (m, sd)) in means.iter().zip(sds).enumerate() {
        let x0 = PAD + i as f64 * x_step + x_step * 0.2;
        let w = x_step * 0.6;
        let top = y.at(*m);
        let _ = writeln!(
            s,
            r##"<rect x="{x0:.2}" y="{top:.2}" width="{w:.2}" height="{:.2}" fill="{}"><title>{}: {m:.2}</title></rect>"##,
            (H - PAD) - top,
            PALETTE[i % PALETTE.len()],
            escape(&labels[i])
        );
        let cx = x0 + w / 2.0;
        let _ = writeln!(
            s,
            r##"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="#333"/>"##,
            y.at((m - sd).max(0.0)),
            y.at((m + sd).min(100.0))
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#,
            H - PAD + 14.0,
            escape(&labels[i])
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Scatter of the first two principal-component scores, coloured by label.
pub fn pca_scatter_svg(title: &str, points: &[Vec<f64>], labels: &[usize]) -> String {
    let (xlo, xhi) = bounds(points.iter().map(|p| p[0]));
    let (ylo, yhi) = bounds(points.iter().map(|p| p.get(1).copied().unwrap_or(0.0)));
    let x = Scale::new(xlo, xhi, PAD + 6.0, W - PAD - 6.0);
    let y = Scale::new(ylo, yhi, H - PAD - 6.0, PAD + 6.0);
    let mut s = open(title);
    for (p, l) in points.iter().zip(labels) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"><title>cluster {l}</title></circle>"#,
            x.at(p[0]),
            y.at(p.get(1).copied().unwrap_or(0.0)),
            PALETTE[l % PALETTE.len()]
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">PC1</text>"#, W / 2.0, H - 8.0);
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">PC2</text>"#,
        H / 2.0,
        H / 2.0
    );
    s.push_str("</svg>\n");
    s
}

/// Bland–Altman plot: pair mean against difference, with bias and limits.
pub fn bland_altman_svg(title: &str, points: &[(f64, f64)], bias: f64, loa_low: f64, loa_high: f64) -> String {
    let (xlo, xhi) = bounds(points.iter().map(|p| p.0));
    let (ylo, yhi) = bounds(points.iter().map(|p| p.1).chain([loa_low, loa_high]));
    let x = Scale::new(xlo, xhi, PAD + 6.0, W - PAD - 6.0);
    let y = Scale::new(ylo, yhi, H - PAD - 6.0, PAD + 6.0);
    let mut s = open(title);
    for (v, dash) in [(bias, ""), (loa_low, r#" stroke-dasharray="4 3""#), (loa_high, r#" stroke-dasharray="4 3""#)] {
        let _ = writeln!(
            s,
            r##"<line x1="{PAD}" y1="{yy:.2}" x2="{}" y2="{yy:.2}" stroke="#d95f02"{dash}><title>{v:.3}</title></line>"##,
            W - PAD,
            yy = y.at(v)
        );
    }
    for (m, d) in points {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1b9e77"/>"##, x.at(*m), y.at(*d));
    }
    s.push_str("</svg>\n");
    s
}
