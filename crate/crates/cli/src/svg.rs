//! Log-log plot of a tail curve.

use std::fmt::Write;

use rmtlab::experiments::{ExponentFit, TailCurve};

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 60.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, lx: f64) -> f64 {
        PAD + (lx - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }
    fn py(&self, ly: f64) -> f64 {
        H - PAD - (ly - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn polyline(out: &mut String, frame: &Frame, class: &str, colour: &str, pts: &[(f64, f64)]) {
    let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
    let _ = writeln!(
        out,
        r#"<polyline class="{class}" fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
        coords.join(" ")
    );
}

/// Points with positive estimates as circles, the fitted line over its window, and a
/// reference line of slope `predicted` through the centre of the fit window.
pub fn render(curve: &TailCurve, fit: Option<&ExponentFit>, predicted: Option<f64>) -> String {
    let pts: Vec<(f64, f64)> =
        curve.points.iter().filter(|p| p.p_hat > 0.0).map(|p| (p.eps.ln(), p.p_hat.ln())).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, 0.0f64);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0) = (-1.0, 0.0, -1.0);
    }
    if x1 - x0 < 1e-9 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-9 {
        y0 = y1 - 1.0;
    }
    let frame = Frame { x0, x1, y0, y1 };
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">ln eps</text>"#, W / 2.0, H - 15.0);
    let _ = writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">ln P</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(out, r#"<text x="{}" y="30" text-anchor="middle">{}</text>"#, W / 2.0, curve.statistic);
    for &(x, y) in &pts {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="black"/>"#, frame.px(x), frame.py(y));
    }
    if let Some(f) = fit {
        let (a, b) = (f.window.0.ln(), f.window.1.ln());
        polyline(&mut out, &frame, "fit", "steelblue", &[(a, f.intercept + f.slope * a), (b, f.intercept + f.slope * b)]);
        if let Some(p) = predicted {
            let mid = 0.5 * (a + b);
            let ym = f.intercept + f.slope * mid;
            polyline(&mut out, &frame, "predicted", "firebrick", &[(a, ym + p * (a - mid)), (b, ym + p * (b - mid))]);
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rmtlab::experiments::{fit_exponent, TailPoint};

    #[test]
    fn two_reference_lines() {
        let points = (0..8)
            .map(|j| {
                let e = 0.05 * 1.3f64.powi(j);
                TailPoint::new(e, (e * e * 1e6).round() as u64, 1_000_000)
            })
            .collect();
        let curve = TailCurve { statistic: "gap".into(), scale: 1.0, trials: 1_000_000, points };
        let fit = fit_exponent(&curve).unwrap();
        let svg = render(&curve, Some(&fit), Some(1.0));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 8);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn empty_curve_still_renders() {
        let curve = TailCurve { statistic: "gap".into(), scale: 1.0, trials: 0, points: vec![] };
        let svg = render(&curve, None, None);
        assert_eq!(svg.matches("<polyline").count(), 0);
    }
}
