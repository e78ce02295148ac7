//! Log-log line plots written as plain SVG.
//!
//! Coordinates are printed with two decimals so the bytes depend only on the
//! data, not on float formatting quirks.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::observables::DecayFit;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    /// Decade-aligned range covering the positive data.
    fn covering(vals: impl Iterator<Item = f64>) -> Option<Axis> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in vals {
            lo = lo.min(v.log10());
            hi = hi.max(v.log10());
        }
        if !lo.is_finite() {
            return None;
        }
        let (lo, mut hi) = (lo.floor(), hi.ceil());
        if hi <= lo {
            hi = lo + 1.0;
        }
        Some(Axis { lo, hi })
    }

    fn frac(&self, v: f64) -> f64 {
        (v.log10() - self.lo) / (self.hi - self.lo)
    }

    /// Tick values: decades, plus 2 and 5 when the range is short.
    fn ticks(&self) -> Vec<(f64, bool)> {
        let mut out = Vec::new();
        let dense = self.hi - self.lo <= 2.0;
        let mut d = self.lo as i32;
        while d as f64 <= self.hi {
            let base = 10f64.powi(d);
            out.push((base, true));
            if dense && (d as f64) < self.hi {
                out.push((2.0 * base, false));
                out.push((5.0 * base, false));
            }
            d += 1;
        }
        out
    }
}

fn tick_label(v: f64) -> String {
    let e = v.log10().floor() as i32;
    let m = (v / 10f64.powi(e)).round() as i32;
    if (-2..=3).contains(&e) {
        let s = format!("{:.*}", (-e).max(0) as usize, v);
        return s;
    }
    if m == 1 {
        format!("1e{e}")
    } else {
        format!("{m}e{e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Plots `ys` against `times` on log-log axes, with the fitted power law
/// drawn over its window when given. Non-positive samples are skipped.
pub fn loglog_svg(title: &str, times: &[f64], ys: &[f64], fit: Option<&DecayFit>) -> Result<String> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(ys)
        .filter(|(t, y)| **t > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(t, y)| (*t, *y))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Usage(format!("{title}: fewer than two positive samples to plot")));
    }
    let fit_pts = fit.map(|f| {
        let y = |t: f64| (f.log_amplitude + f.exponent * t.ln()).exp();
        [(f.window[0], y(f.window[0])), (f.window[1], y(f.window[1]))]
    });
    let xa = Axis::covering(pts.iter().map(|p| p.0)).unwrap();
    let extra = fit_pts.iter().flatten().map(|p| p.1).filter(|v| *v > 0.0 && v.is_finite());
    let ya = Axis::covering(pts.iter().map(|p| p.1).chain(extra)).unwrap();
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |t: f64| LEFT + pw * xa.frac(t);
    let py = |y: f64| TOP + ph * (1.0 - ya.frac(y));

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        W / 2.0,
        escape(title)
    );
    for (v, major) in xa.ticks() {
        let x = px(v);
        let stroke = if major { "#bbbbbb" } else { "#e5e5e5" };
        let _ = writeln!(s, "<line x1=\"{x:.2}\" y1=\"{TOP:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"{stroke}\"/>", TOP + ph);
        let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", TOP + ph + 16.0, tick_label(v));
    }
    for (v, major) in ya.ticks() {
        let y = py(v);
        let stroke = if major { "#bbbbbb" } else { "#e5e5e5" };
        let _ = writeln!(s, "<line x1=\"{LEFT:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{stroke}\"/>", LEFT + pw);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", LEFT - 6.0, y + 4.0, tick_label(v));
    }
    let _ = writeln!(
        s,
        "<rect x=\"{LEFT:.2}\" y=\"{TOP:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">t</text>", LEFT + pw / 2.0, H - 12.0);

    let mut path = String::new();
    for (k, (t, y)) in pts.iter().enumerate() {
        let _ = write!(path, "{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, px(*t), py(*y));
    }
    let _ = writeln!(s, "<path d=\"{path}\" fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1.5\"/>");

    if let (Some(f), Some([a, b])) = (fit, fit_pts) {
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#c23b22\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>",
            px(a.0),
            py(a.1),
            px(b.0),
            py(b.1)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"#c23b22\">slope {:.4} on [{:.2}, {:.2}], r2 {:.4}</text>",
            LEFT + pw - 8.0,
            TOP + 16.0,
            f.exponent,
            f.window[0],
            f.window[1],
            f.r_squared
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
