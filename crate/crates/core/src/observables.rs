//! Measured quantities: conserved quantities, norms, localized quadratic
//! norms, scattering diagnostics and power-law fits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{bessel_power, lp_multiplier, inhom_multiplier, riesz_convolve, PotentialParams};
use crate::spectral::{Field, Multiplier};

/// `‖u‖₂`.
pub fn mass(u: &Field) -> f64 {
    u.l2_norm()
}

/// `E(u) = ½∫ū⟨D⟩u − (λ/4)∫(|x|^{−γ}∗|u|²)|u|²`, the quantity conserved by the flow.
pub fn energy(u: &Field, p: &PotentialParams) -> Result<f64> {
    u.require_physical("energy")?;
    let spec = u.to_spectral()?;
    let m2 = p.mass() * p.mass();
    let g = u.grid();
    let kinetic: f64 = spec
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let [a, b] = g.xi(i);
            (m2 + a * a + b * b).sqrt() * v.norm_sqr()
        })
        .sum::<f64>()
        * (g.dxi() * g.dxi())
        / (2.0 * std::f64::consts::PI).powi(2);
    if p.lambda() == 0.0 {
        return Ok(0.5 * kinetic);
    }
    let dens = u.abs_sq()?;
    let pot = riesz_convolve(&dens, p)?;
    let interaction: f64 = pot
        .values()
        .iter()
        .zip(dens.values())
        .map(|(v, d)| v.re * d.re)
        .sum::<f64>()
        * g.dx()
        * g.dx();
    Ok(0.5 * kinetic - 0.25 * p.lambda() * interaction)
}

/// `‖⟨D⟩^s u‖₂`.
pub fn sobolev_norm(u: &Field, s: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(u.l2_norm());
    }
    Ok(bessel_power(u, s)?.l2_norm())
}

pub fn sup_norm(u: &Field) -> Result<f64> {
    u.require_physical("sup_norm")?;
    Ok(u.max_abs())
}

/// `W^{k,∞}` proxy `‖⟨D⟩^k u‖_∞`.
pub fn wkinf_norm(u: &Field, k: u32) -> Result<f64> {
    u.require_physical("wkinf_norm")?;
    if k == 0 {
        return Ok(u.max_abs());
    }
    Ok(bessel_power(u, k as f64)?.max_abs())
}

/// Fraction of `‖f‖₂²` lying outside `|x| ≤ extent/4`.
pub fn boundary_mass_fraction(f: &Field) -> Result<f64> {
    f.require_physical("boundary_mass_fraction")?;
    let g = f.grid();
    let r = 0.25 * g.extent();
    let (mut outside, mut total) = (0.0, 0.0);
    for (i, v) in f.values().iter().enumerate() {
        let [x, y] = g.x(i);
        let w = v.norm_sqr();
        total += w;
        if x * x + y * y > r * r {
            outside += w;
        }
    }
    Ok(if total > 0.0 { outside / total } else { 0.0 })
}

/// `‖⟨x⟩^k f‖_{H^s}` with `x` the centred torus coordinate.
///
/// Logs a warning when more than `1e-6` of the mass sits outside
/// `|x| ≤ extent/4`, where the torus weight stops resembling the planar one.
pub fn weighted_profile_norm(f: &Field, weight_power: u32, s: f64) -> Result<f64> {
    if !(1..=2).contains(&weight_power) {
        return Err(Error::Usage(format!("weight_power must be 1 or 2, got {weight_power}")));
    }
    let frac = boundary_mass_fraction(f)?;
    if frac > 1e-6 {
        log::warn!("weighted norm: {frac:e} of the mass lies outside |x| <= extent/4");
    }
    let g = f.grid().clone();
    let weighted = f.zip_with(&Field::from_fn(&g, |x, y| {
        Complex64::new((1.0 + x * x + y * y).powf(0.5 * weight_power as f64), 0.0)
    }), |a, b| a * b)?;
    sobolev_norm(&weighted, s)
}

/// Localized norms of the density `|u|²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpQuadratic {
    /// `(L, ‖P_L|u|²‖₂, ‖P_L|u|²‖_∞)`
    pub homogeneous: Vec<(f64, f64, f64)>,
    /// `(N, ‖S_N|u|²‖_∞)`
    pub inhomogeneous: Vec<(f64, f64)>,
}

pub fn lp_quadratic_norms(u: &Field, scales: &[f64], inhom: &[f64]) -> Result<LpQuadratic> {
    u.require_physical("lp_quadratic_norms")?;
    let g = u.grid();
    let dens = u.abs_sq()?.into_spectral();
    let mut homogeneous = Vec::with_capacity(scales.len());
    for &l in scales {
        let p = lp_multiplier(g, l)?.apply(&dens)?.into_physical();
        homogeneous.push((l, p.l2_norm(), p.max_abs()));
    }
    let mut inhomogeneous = Vec::with_capacity(inhom.len());
    for &n in inhom {
        let p = inhom_multiplier(g, n)?.apply(&dens)?.into_physical();
        inhomogeneous.push((n, p.max_abs()));
    }
    Ok(LpQuadratic {
        homogeneous,
        inhomogeneous,
    })
}

/// Sampled channels on a common time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub channels: Vec<(String, Vec<f64>)>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl TimeSeries {
    pub fn new(names: impl IntoIterator<Item = String>, metadata: serde_json::Value) -> Self {
        TimeSeries {
            times: Vec::new(),
            channels: names.into_iter().map(|n| (n, Vec::new())).collect(),
            metadata,
        }
    }

    pub fn push(&mut self, t: f64, values: &[f64]) -> Result<()> {
        if values.len() != self.channels.len() {
            return Err(Error::Usage(format!(
                "expected {} channel values, got {}",
                self.channels.len(),
                values.len()
            )));
        }
        if let Some(&last) = self.times.last() {
            if t.partial_cmp(&last) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Usage(format!("times must increase: {t} after {last}")));
            }
        }
        self.times.push(t);
        for ((_, ch), &v) in self.channels.iter_mut().zip(values) {
            ch.push(v);
        }
        Ok(())
    }

    /// Adds a channel sampled on the existing time axis.
    pub fn add_channel(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.times.len() {
            return Err(Error::Usage(format!(
                "channel {name} has {} values for {} times",
                values.len(),
                self.times.len()
            )));
        }
        if self.channel(&name).is_some() {
            return Err(Error::Usage(format!("duplicate channel {name}")));
        }
        self.channels.push((name, values));
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with a `t` column followed by the channels in declaration order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for (n, _) in &self.channels {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&t.to_string());
            for (_, ch) in &self.channels {
                out.push(',');
                out.push_str(&ch[i].to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty CSV".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("t") {
            return Err(Error::Config("CSV must start with a t column".into()));
        }
        let mut ts = TimeSeries::new(cols.map(String::from), serde_json::Value::Null);
        for (k, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("CSV row {}: {e}", k + 2)))?;
            ts.push(vals[0], &vals[1..])?;
        }
        Ok(ts)
    }
}

/// Least-squares power law `y ≈ C t^p` on a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub log_amplitude: f64,
    pub r_squared: f64,
    pub window: [f64; 2],
    pub samples: usize,
}

/// Fits `log y = log C + p log t` on samples with `t_min < t < t_max`.
pub fn fit_decay(ts: &TimeSeries, channel: &str, window: [f64; 2]) -> Result<DecayFit> {
    let ys = ts
        .channel(channel)
        .ok_or_else(|| Error::Usage(format!("no channel named {channel}")))?;
    fit_power_law(&ts.times, ys, window)
}

pub fn fit_power_law(times: &[f64], ys: &[f64], window: [f64; 2]) -> Result<DecayFit> {
    let [lo, hi] = window;
    let mut pts = Vec::new();
    for (&t, &y) in times.iter().zip(ys) {
        if t > lo && t < hi {
            if !(y.is_finite() && y > 0.0) {
                return Err(Error::Fit(format!("non-positive value {y} at t = {t}")));
            }
            pts.push((t.ln(), y.ln()));
        }
    }
    if pts.len() < 8 {
        return Err(Error::Fit(format!(
            "need at least 8 samples in ({lo}, {hi}), found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("degenerate time window".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(DecayFit {
        exponent: slope,
        log_amplitude: intercept,
        r_squared,
        window,
        samples: pts.len(),
    })
}

/// Whether a sequence never increases.
pub fn is_monotone_decreasing(ys: &[f64]) -> bool {
    ys.windows(2).all(|w| w[1] <= w[0])
}

/// Profile snapshot `f(t) = e^{it⟨D⟩}u(t)`.
#[derive(Debug, Clone)]
pub struct ProfileSnapshot {
    pub t: f64,
    pub profile: Field,
}

/// Which scattering channels to compute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringSpec {
    /// Sobolev index of the unweighted channels.
    pub s: f64,
    pub weight_power: u32,
    /// Sobolev index of the weighted channels.
    pub weighted_s: f64,
}

impl Default for ScatteringSpec {
    fn default() -> Self {
        ScatteringSpec {
            s: 1.0,
            weight_power: 2,
            weighted_s: 5.0,
        }
    }
}

/// Scattering channels built from profile snapshots.
///
/// `end` channels compare against `f(t_end)` (the `v₊` surrogate) for
/// `t ≤ t_end/2`; `cauchy` channels use `f(2t) − f(t)` for every `t` whose
/// double is also a snapshot time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringChannels {
    pub end: TimeSeries,
    pub cauchy: TimeSeries,
}

pub fn scattering_diagnostics(snapshots: &[ProfileSnapshot], spec: &ScatteringSpec) -> Result<ScatteringChannels> {
    let last = snapshots
        .last()
        .ok_or_else(|| Error::Usage("no profile snapshots recorded".into()))?;
    let hs = format!("hs{}", spec.s);
    let ws = format!("x{}_hs{}", spec.weight_power, spec.weighted_s);
    let mut end = TimeSeries::new([hs.clone(), ws.clone()], serde_json::Value::Null);
    let t_end = last.t;
    let s_mult = Multiplier::real(last.profile.grid(), |xi| {
        (1.0 + xi[0] * xi[0] + xi[1] * xi[1]).powf(0.5 * spec.s)
    })?;
    let channel = |a: &Field, b: &Field| -> Result<[f64; 2]> {
        let d = a.sub(b)?;
        Ok([s_mult.apply(&d)?.l2_norm(), weighted_profile_norm(&d, spec.weight_power, spec.weighted_s)?])
    };
    for snap in snapshots.iter().filter(|s| s.t <= 0.5 * t_end) {
        end.push(snap.t, &channel(&snap.profile, &last.profile)?)?;
    }
    let mut cauchy = TimeSeries::new([hs, ws], serde_json::Value::Null);
    let tol = 1e-9 * t_end.max(1.0);
    for snap in snapshots {
        if snap.t <= 0.0 {
            continue;
        }
        let target = 2.0 * snap.t;
        if let Some(other) = snapshots.iter().find(|o| (o.t - target).abs() <= tol) {
            cauchy.push(snap.t, &channel(&other.profile, &snap.profile)?)?;
        }
    }
    Ok(ScatteringChannels { end, cauchy })
}
