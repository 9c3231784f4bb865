//! Static SVG plot of a fitted spectrum: data points with Poisson error bars
//! and the fitted α/E curve, both axes logarithmic.

use std::fmt::Write;

use crate::fit::FitResult;
use crate::spectrum::BinnedSpectrum;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 55.0;

struct LogAxis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl LogAxis {
    fn map(&self, v: f64) -> f64 {
        let t = (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10());
        self.px_lo + t * (self.px_hi - self.px_lo)
    }

    /// Decade values inside the range, plus 2 and 5 multiples when the range
    /// spans less than two decades.
    fn ticks(&self) -> Vec<f64> {
        let fine = self.hi / self.lo < 100.0;
        let mut out = Vec::new();
        let mut decade = 10f64.powf(self.lo.log10().floor());
        while decade <= self.hi {
            for m in [1.0, 2.0, 5.0] {
                if m != 1.0 && !fine {
                    continue;
                }
                let v = decade * m;
                if v >= self.lo && v <= self.hi {
                    out.push(v);
                }
            }
            decade *= 10.0;
        }
        out
    }
}

fn fmt_tick(v: f64) -> String {
    if (1e-2..1e4).contains(&v) {
        format!("{}", (v * 1e4).round() / 1e4)
    } else {
        format!("{v:.0e}")
    }
}

/// Renders counts/keV per bin against bin-centre energy, with the model curve
/// `α̂/E` overlaid. Empty bins are omitted (they have no position on a log axis).
pub fn render_fit_svg(spectrum: &BinnedSpectrum, fit: &FitResult, title: &str) -> String {
    let points: Vec<(f64, f64, f64)> = spectrum
        .bins()
        .zip(spectrum.raw_counts())
        .filter(|(_, n)| *n > 0.0)
        .map(|((lo, hi), n)| {
            let w = hi - lo;
            (0.5 * (lo + hi), n / w, n.sqrt() / w)
        })
        .collect();

    let (e_lo, e_hi) = (spectrum.e_min(), spectrum.e_max());
    let curve_at = |e: f64| fit.alpha_hat / e;
    let mut y_min = curve_at(e_hi).min(curve_at(e_lo));
    let mut y_max = curve_at(e_lo).max(curve_at(e_hi));
    for &(_, y, err) in &points {
        let low = if y - err > 0.0 { y - err } else { y * 0.5 };
        y_min = y_min.min(low);
        y_max = y_max.max(y + err);
    }
    if !(y_min > 0.0) {
        y_min = y_max.max(1.0) * 1e-3;
    }
    let x = LogAxis { lo: e_lo, hi: e_hi, px_lo: MARGIN_LEFT, px_hi: WIDTH - MARGIN_RIGHT };
    let y = LogAxis { lo: y_min / 1.3, hi: y_max * 1.3, px_lo: HEIGHT - MARGIN_BOTTOM, px_hi: MARGIN_TOP };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // frame and ticks
    let (x0, x1, y0, y1) = (x.px_lo, x.px_hi, y.px_lo, y.px_hi);
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for t in x.ticks() {
        let px = x.map(t);
        let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/>"#, y0 - 5.0);
        let _ = writeln!(svg, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, y0 + 16.0, fmt_tick(t));
    }
    for t in y.ticks() {
        let py = y.map(t);
        let _ = writeln!(svg, r#"<line x1="{x0}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="black"/>"#, x0 + 5.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 6.0, py + 4.0, fmt_tick(t));
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">Energy (keV)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">Counts / keV</text>"#,
        (y0 + y1) / 2.0
    );

    // data
    let _ = writeln!(svg, r#"<g class="data" stroke="black" fill="black">"#);
    for &(e, v, err) in &points {
        let px = x.map(e);
        let top = y.map((v + err).min(y.hi));
        let bottom = y.map(if v - err > y.lo { v - err } else { y.lo });
        let _ = writeln!(svg, r#"<line x1="{px:.2}" y1="{top:.2}" x2="{px:.2}" y2="{bottom:.2}"/>"#);
        let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{:.2}" r="2.5"/>"#, y.map(v));
    }
    let _ = writeln!(svg, "</g>");

    // model curve
    let n = 200;
    let path: Vec<String> = (0..=n)
        .map(|i| {
            let e = e_lo * (e_hi / e_lo).powf(i as f64 / n as f64);
            format!("{:.2},{:.2}", x.map(e), y.map(curve_at(e)))
        })
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline class="model" points="{}" fill="none" stroke="red" stroke-width="1.5"/>"#,
        path.join(" ")
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="end" fill="red">α/E, α = {:.1} ± {:.1}, χ²/ndf = {:.2}</text>"#,
        x1 - 8.0,
        y1 + 18.0,
        fit.alpha_hat,
        fit.alpha_err,
        fit.chi2_per_ndf
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::fit_alpha_wls;
    use crate::spectrum::Normalization;

    #[test]
    fn renders_points_and_curve() {
        let s = BinnedSpectrum::from_edges(
            &[4.5, 5.5, 6.5, 7.5, 8.5],
            vec![20.0, 0.0, 15.0, 12.0],
            80.0,
            Normalization::CountsPerBin,
        )
        .unwrap();
        let f = fit_alpha_wls(&s).unwrap();
        let svg = render_fit_svg(&s, &f, "fit <test>");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("class=\"model\""));
        assert!(svg.contains("fit &lt;test&gt;"));
        assert!(!svg.contains("NaN"));
    }
}
