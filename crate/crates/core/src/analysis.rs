//! Direct checks of the standalone inequalities: phase functions, the
//! resonance multiplier and its bounds, the localized dispersive estimate,
//! the HLS-type bound and a small-grid Coifman–Meyer norm estimate.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::fit_power_law;
use crate::operators::{bracket, inhom_multiplier, riesz_convolve, LpBump, PotentialParams, ZeroModePolicy};
use crate::spectral::{Field, Grid, Space};

/// Widening applied to fitted constants before counting held-out violations.
pub const CONSTANT_SLACK: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PhasePoint {
    pub xi: [f64; 2],
    pub eta: [f64; 2],
    pub sigma: [f64; 2],
}

#[inline]
fn jb(v: [f64; 2]) -> f64 {
    bracket(v, 1.0)
}

#[inline]
fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// `φ(ξ,η) = ⟨ξ⟩ − ⟨ξ−η⟩`, written without cancellation.
pub fn phase(p: &PhasePoint) -> f64 {
    let [x0, x1] = p.xi;
    let [e0, e1] = p.eta;
    let d = [x0 - e0, x1 - e1];
    (2.0 * (x0 * e0 + x1 * e1) - (e0 * e0 + e1 * e1)) / (jb(p.xi) + jb(d))
}

/// `∇_σ(⟨σ+η⟩ − ⟨σ⟩) = (σ+η)/⟨σ+η⟩ − σ/⟨σ⟩`, stable for small `η`.
pub fn grad_sigma_difference(eta: [f64; 2], sigma: [f64; 2]) -> [f64; 2] {
    let a = [sigma[0] + eta[0], sigma[1] + eta[1]];
    let (ba, bs) = (jb(a), jb(sigma));
    let q = (eta[0] * (2.0 * sigma[0] + eta[0]) + eta[1] * (2.0 * sigma[1] + eta[1])) / ((ba + bs) * ba * bs);
    [eta[0] / ba - sigma[0] * q, eta[1] / ba - sigma[1] * q]
}

/// `∇_ξφ(ξ,η) = ξ/⟨ξ⟩ − (ξ−η)/⟨ξ−η⟩`.
pub fn grad_xi_phase(p: &PhasePoint) -> [f64; 2] {
    grad_sigma_difference(p.eta, [p.xi[0] - p.eta[0], p.xi[1] - p.eta[1]])
}

/// `m(η,σ) = g/|g|²` with `g = ∇_σ(⟨σ+η⟩ − ⟨σ⟩)`.
pub fn resonance_multiplier(p: &PhasePoint) -> Result<[f64; 2]> {
    m_vec(p.eta, p.sigma)
}

fn m_vec(eta: [f64; 2], sigma: [f64; 2]) -> Result<[f64; 2]> {
    let g = grad_sigma_difference(eta, sigma);
    let n2 = g[0] * g[0] + g[1] * g[1];
    if n2 == 0.0 || !n2.is_finite() {
        return Err(Error::Numeric(format!(
            "resonance multiplier is singular at eta = ({}, {}), sigma = ({}, {})",
            eta[0], eta[1], sigma[0], sigma[1]
        )));
    }
    Ok([g[0] / n2, g[1] / n2])
}

/// Outcome of a sampled inequality check.
///
/// Constants are fitted on one sample stream and violations are counted on
/// an independent stream of the same size with the constants widened by
/// [`CONSTANT_SLACK`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub n_samples: usize,
    pub violations: usize,
    pub worst_ratio: f64,
    pub empirical_constants: (f64, f64),
}

/// Log-uniform magnitudes with uniform directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub min_norm: f64,
    pub max_norm: f64,
    pub seed: u64,
}

impl SamplerSpec {
    pub fn new(seed: u64) -> Self {
        SamplerSpec {
            min_norm: 1e-3,
            max_norm: 1e3,
            seed,
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        let r = rng.gen_range(self.min_norm.ln()..=self.max_norm.ln()).exp();
        let th = rng.gen_range(0.0..2.0 * PI);
        [r * th.cos(), r * th.sin()]
    }
}

fn max_min(eta: [f64; 2], sigma: [f64; 2]) -> (f64, f64) {
    let a = jb([eta[0] + sigma[0], eta[1] + sigma[1]]);
    let b = jb(sigma);
    (a.max(b), a.min(b))
}

/// Two-sided bound `|η|/(max·min²) ≲ |g(η,σ)| ≲ |η|/max` with
/// `max, min` of `⟨η+σ⟩, ⟨σ⟩`.
pub fn verify_null_structure(spec: &SamplerSpec, n: usize) -> Result<SampleStats> {
    if n < 10_000 {
        return Err(Error::Usage(format!("need at least 10^4 samples, got {n}")));
    }
    let ratios = |stream: u64| {
        let mut rng = spec.rng(stream);
        (0..n)
            .map(|_| {
                let eta = spec.draw(&mut rng);
                let sigma = spec.draw(&mut rng);
                let g = norm(grad_sigma_difference(eta, sigma));
                let (mx, mn) = max_min(eta, sigma);
                let e = norm(eta);
                (g * mx * mn * mn / e, g * mx / e)
            })
            .collect::<Vec<_>>()
    };
    let fit = ratios(0);
    let c_lower = fit.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let c_upper = fit.iter().map(|r| r.1).fold(0.0, f64::max);
    let held = ratios(1);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for (lo, up) in held {
        if lo < c_lower / CONSTANT_SLACK || up > c_upper * CONSTANT_SLACK {
            violations += 1;
        }
        worst = worst.max(c_lower / lo).max(up / c_upper);
    }
    Ok(SampleStats {
        n_samples: n,
        violations,
        worst_ratio: worst,
        empirical_constants: (c_lower, c_upper),
    })
}

fn fd_step(sigma: [f64; 2]) -> f64 {
    1e-5 * (1.0 + norm(sigma))
}

/// Largest `|∂_σ^α m|` over multi-indices of the given order (0, 1 or 2),
/// by central differences.
pub fn m_derivative_norm(eta: [f64; 2], sigma: [f64; 2], order: u32) -> Result<f64> {
    let h = fd_step(sigma);
    let at = |d0: f64, d1: f64| m_vec(eta, [sigma[0] + d0, sigma[1] + d1]);
    let sub = |a: [f64; 2], b: [f64; 2]| [a[0] - b[0], a[1] - b[1]];
    match order {
        0 => Ok(norm(at(0.0, 0.0)?)),
        1 => {
            let d0 = sub(at(h, 0.0)?, at(-h, 0.0)?);
            let d1 = sub(at(0.0, h)?, at(0.0, -h)?);
            Ok(norm(d0).max(norm(d1)) / (2.0 * h))
        }
        2 => {
            let c = at(0.0, 0.0)?;
            let second = |p: [f64; 2], q: [f64; 2]| [p[0] + q[0] - 2.0 * c[0], p[1] + q[1] - 2.0 * c[1]];
            let d00 = second(at(h, 0.0)?, at(-h, 0.0)?);
            let d11 = second(at(0.0, h)?, at(0.0, -h)?);
            let pp = at(h, h)?;
            let pm = at(h, -h)?;
            let mp = at(-h, h)?;
            let mm = at(-h, -h)?;
            let d01 = [pp[0] - pm[0] - mp[0] + mm[0], pp[1] - pm[1] - mp[1] + mm[1]];
            Ok((norm(d00) / (h * h)).max(norm(d11) / (h * h)).max(norm(d01) / (4.0 * h * h)))
        }
        _ => Err(Error::Usage(format!("derivative order must be at most 2, got {order}"))),
    }
}

/// `|∂_σ^α m| ≲ |η|^{−1} max · min^{2+|α|}`, one result per order `0..=max_order`.
pub fn verify_m_derivatives(max_order: u32, spec: &SamplerSpec, n: usize) -> Result<Vec<SampleStats>> {
    if max_order > 2 {
        return Err(Error::Usage(format!("max_order must be at most 2, got {max_order}")));
    }
    let ratios = |stream: u64, order: u32| -> Result<Vec<f64>> {
        let mut rng = spec.rng(stream);
        (0..n)
            .map(|_| {
                let eta = spec.draw(&mut rng);
                let sigma = spec.draw(&mut rng);
                let (mx, mn) = max_min(eta, sigma);
                let bound = mx * mn.powi(2 + order as i32) / norm(eta);
                Ok(m_derivative_norm(eta, sigma, order)? / bound)
            })
            .collect()
    };
    (0..=max_order)
        .map(|order| {
            let c = ratios(2 * order as u64, order)?.into_iter().fold(0.0, f64::max);
            let held = ratios(2 * order as u64 + 1, order)?;
            let violations = held.iter().filter(|&&r| r > c * CONSTANT_SLACK).count();
            let worst = held.iter().fold(0.0_f64, |a, &r| a.max(r / c));
            Ok(SampleStats {
                n_samples: n,
                violations,
                worst_ratio: worst,
                empirical_constants: (0.0, c),
            })
        })
        .collect()
}

/// Per-`N` summary of the localized dispersive check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersiveRow {
    pub n: f64,
    pub sup_ratio: f64,
    pub exponent: f64,
    pub window: [f64; 2],
    /// `‖e^{it⟨D⟩}S_Nφ‖_∞` at each requested time.
    pub sup: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersiveReport {
    pub times: Vec<f64>,
    pub l1_norm: f64,
    pub rows: Vec<DispersiveRow>,
}

impl DispersiveReport {
    pub fn sup_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.sup_ratio).fold(0.0, f64::max)
    }
}

/// Ratios `‖e^{it⟨D⟩}S_Nφ‖_∞ ⟨t⟩ / (N²‖φ‖₁)` and the decay exponent of the
/// left side over the upper half of the time range.
pub fn verify_dispersive(n_list: &[f64], t_list: &[f64], datum: &Field) -> Result<DispersiveReport> {
    datum.require_physical("verify_dispersive")?;
    let g = datum.grid();
    let r0 = mass_radius(datum, 0.9999);
    let t_safe = 0.5 * g.extent() - r0 - 0.125 * g.extent();
    let t_max = t_list.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if t_max > t_safe {
        return Err(Error::Config(format!(
            "t = {t_max} exceeds the finite-speed horizon {t_safe:.3} of this grid"
        )));
    }
    let l1 = datum.values().iter().map(|v| v.norm()).sum::<f64>() * g.dx() * g.dx();
    if l1 == 0.0 {
        return Err(Error::Usage("datum is identically zero".into()));
    }
    let brackets: Vec<f64> = (0..g.len()).map(|i| jb(g.xi(i))).collect();
    let spec = datum.to_spectral()?;
    let window = [0.5 * t_max - 0.5, t_max + 0.5];
    let mut rows = Vec::new();
    for &n in n_list {
        let local = inhom_multiplier(g, n)?.apply(&spec)?;
        let mut sup = Vec::with_capacity(t_list.len());
        let mut sup_ratio: f64 = 0.0;
        for &t in t_list {
            let vals = local
                .values()
                .iter()
                .zip(&brackets)
                .map(|(z, b)| z * Complex64::from_polar(1.0, t * b))
                .collect();
            let s = Field::new(g, vals, Space::Spectral)?.into_physical().max_abs();
            sup_ratio = sup_ratio.max(s * (1.0 + t * t).sqrt() / (n * n * l1));
            sup.push(s);
        }
        if !sup_ratio.is_finite() {
            return Err(Error::Numeric(format!("dispersive ratio is not finite for N = {n}")));
        }
        let fit = fit_power_law(t_list, &sup, window)?;
        rows.push(DispersiveRow {
            n,
            sup_ratio,
            exponent: fit.exponent,
            window,
            sup,
        });
    }
    Ok(DispersiveReport {
        times: t_list.to_vec(),
        l1_norm: l1,
        rows,
    })
}

/// Smallest centred radius holding `fraction` of the mass.
pub fn mass_radius(f: &Field, fraction: f64) -> f64 {
    let g = f.grid();
    let mut pts: Vec<(f64, f64)> = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let [x, y] = g.x(i);
            (x.hypot(y), v.norm_sqr())
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for (r, w) in pts {
        acc += w;
        if acc >= fraction * total {
            return r;
        }
    }
    0.0
}

/// `2π/(2−γ) + 1`.
pub fn hls_constant(gamma_exp: f64) -> f64 {
    2.0 * PI / (2.0 - gamma_exp) + 1.0
}

/// Sum of one to four random complex Gaussians near the origin.
pub fn random_smooth_field(grid: &Grid, rng: &mut impl Rng) -> Field {
    let k = rng.gen_range(1..=4);
    let bumps: Vec<_> = (0..k)
        .map(|_| {
            (
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(1.0..3.0),
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            )
        })
        .collect();
    Field::from_fn(grid, |x, y| {
        bumps
            .iter()
            .map(|&(cx, cy, w, a)| a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * w * w)).exp())
            .sum()
    })
}

/// Ratio `‖|x|^{−γ}∗|u|²‖_∞ / (‖u‖₂^{2−γ}‖u‖_∞^γ)`; `None` for `u ≡ 0`.
pub fn hls_ratio(u: &Field, p: &PotentialParams) -> Result<Option<f64>> {
    let l2 = u.l2_norm();
    let sup = u.max_abs();
    if l2 == 0.0 || sup == 0.0 {
        return Ok(None);
    }
    let v = riesz_convolve(&u.abs_sq()?, p)?;
    let lhs = v.values().iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    Ok(Some(lhs / (l2.powf(2.0 - p.gamma()) * sup.powf(p.gamma()))))
}

/// HLS-type bound with the explicit constant `2π/(2−γ)+1`, on random smooth
/// fields of a 64² grid with side 32. The convolution uses the free-space
/// zero mode so it approximates the planar integral.
///
/// `empirical_constants` holds the smallest and largest observed ratio;
/// `worst_ratio` is the largest ratio divided by the explicit constant.
pub fn verify_hls(gamma_exp: f64, n_fields: usize, seed: u64) -> Result<SampleStats> {
    let p = PotentialParams::new(gamma_exp, 1.0)?.with_zero_mode(ZeroModePolicy::FreeSpace);
    let grid = Grid::new(64, 32.0)?;
    let c = hls_constant(gamma_exp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    let mut violations = 0;
    for _ in 0..n_fields {
        let u = random_smooth_field(&grid, &mut rng);
        if let Some(r) = hls_ratio(&u, &p)? {
            lo = lo.min(r);
            hi = hi.max(r);
            if r > c {
                violations += 1;
            }
        }
    }
    Ok(SampleStats {
        n_samples: n_fields,
        violations,
        worst_ratio: hi / c,
        empirical_constants: (lo, hi),
    })
}

/// Sampling box for [`estimate_cm_norm`]: `ξ ∈ [−xi_half, xi_half)²`,
/// `η ∈ [−eta_half, eta_half)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmBox {
    pub xi_half: f64,
    pub eta_half: f64,
}

/// Points per axis and zero-padding factor of the 4D transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmGrid {
    pub n_xi: usize,
    pub n_eta: usize,
    pub oversample: usize,
}

/// Largest 4D array [`estimate_cm_norm`] will allocate.
pub const CM_MAX_POINTS: usize = 1 << 24;

/// Estimate of `‖∬ m(ξ,η) e^{ix·ξ} e^{iy·η} dη dξ‖_{L¹_{x,y}}`.
///
/// The symbol is sampled on the box, zero-padded by `oversample` per axis
/// and transformed; the `L¹` norm is the Riemann sum over one period of the
/// resulting kernel. This is an estimate only: truncation and the period
/// both bias it, so compare values computed with the same grid.
pub fn estimate_cm_norm(
    mut symbol: impl FnMut([f64; 2], [f64; 2]) -> Complex64,
    truncation: CmBox,
    grid: CmGrid,
) -> Result<f64> {
    let CmGrid { n_xi, n_eta, oversample } = grid;
    if n_xi == 0 || n_eta == 0 || oversample == 0 {
        return Err(Error::Usage("C(m) grid sizes must be positive".into()));
    }
    let mx = n_xi * oversample;
    let me = n_eta * oversample;
    let total = mx
        .checked_pow(2)
        .and_then(|a| me.checked_pow(2).and_then(|b| a.checked_mul(b)))
        .unwrap_or(usize::MAX);
    if total > CM_MAX_POINTS {
        return Err(Error::Size(format!(
            "C(m) grid of {total} points exceeds the limit of {CM_MAX_POINTS}"
        )));
    }
    let dxi = 2.0 * truncation.xi_half / n_xi as f64;
    let deta = 2.0 * truncation.eta_half / n_eta as f64;
    let shape = [mx, mx, me, me];
    let mut data = vec![Complex64::default(); total];
    let idx = |a: usize, b: usize, c: usize, d: usize| ((a * mx + b) * me + c) * me + d;
    for a in 0..n_xi {
        for b in 0..n_xi {
            let xi = [-truncation.xi_half + a as f64 * dxi, -truncation.xi_half + b as f64 * dxi];
            for c in 0..n_eta {
                for d in 0..n_eta {
                    let eta = [-truncation.eta_half + c as f64 * deta, -truncation.eta_half + d as f64 * deta];
                    let v = symbol(xi, eta);
                    if !(v.re.is_finite() && v.im.is_finite()) {
                        return Err(Error::Numeric(format!(
                            "symbol is not finite at xi = ({}, {}), eta = ({}, {})",
                            xi[0], xi[1], eta[0], eta[1]
                        )));
                    }
                    data[idx(a, b, c, d)] = v;
                }
            }
        }
    }
    fft_nd(&mut data, &shape);
    // dξ·dx = 2π/M per axis, so the quadrature weights collapse
    let w = (2.0 * PI / mx as f64).powi(2) * (2.0 * PI / me as f64).powi(2);
    Ok(data.iter().map(|z| z.norm()).sum::<f64>() * w)
}

/// 2D analogue of [`estimate_cm_norm`]: `‖∫ a(ξ) e^{ix·ξ} dξ‖_{L¹_x}`.
pub fn estimate_kernel_l1_2d(symbol: impl Fn([f64; 2]) -> Complex64, half: f64, n: usize, oversample: usize) -> Result<f64> {
    if n == 0 || oversample == 0 {
        return Err(Error::Usage("grid sizes must be positive".into()));
    }
    let m = n * oversample;
    if m * m > CM_MAX_POINTS {
        return Err(Error::Size(format!("grid of {} points exceeds the limit of {CM_MAX_POINTS}", m * m)));
    }
    let d = 2.0 * half / n as f64;
    let mut data = vec![Complex64::default(); m * m];
    for a in 0..n {
        for b in 0..n {
            let v = symbol([-half + a as f64 * d, -half + b as f64 * d]);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Numeric(format!("symbol is not finite at index ({a}, {b})")));
            }
            data[a * m + b] = v;
        }
    }
    fft_nd(&mut data, &[m, m]);
    Ok(data.iter().map(|z| z.norm()).sum::<f64>() * (2.0 * PI / m as f64).powi(2))
}

/// In-place unnormalized FFT along every axis of a row-major array.
fn fft_nd(data: &mut [Complex64], shape: &[usize]) {
    let mut planner = FftPlanner::<f64>::new();
    let total = data.len();
    let mut stride = total;
    for &len in shape {
        stride /= len;
        if len == 1 {
            continue;
        }
        let fft = planner.plan_fft_forward(len);
        let mut line = vec![Complex64::default(); len];
        let block = len * stride;
        for base in (0..total).step_by(block) {
            for off in 0..stride {
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + off + k * stride];
                }
                fft.process(&mut line);
                for (k, v) in line.iter().enumerate() {
                    data[base + off + k * stride] = *v;
                }
            }
        }
    }
}

/// `∇_σ·m` by central differences.
fn div_m(eta: [f64; 2], sigma: [f64; 2]) -> Result<f64> {
    let h = fd_step(sigma);
    let a = m_vec(eta, [sigma[0] + h, sigma[1]])?[0] - m_vec(eta, [sigma[0] - h, sigma[1]])?[0];
    let b = m_vec(eta, [sigma[0], sigma[1] + h])?[1] - m_vec(eta, [sigma[0], sigma[1] - h])?[1];
    Ok((a + b) / (2.0 * h))
}

/// `∇_σ·(m ∇_σ·m)(η,σ) χ_L(η) ρ_{N₁}(η+σ) ρ_{N₂}(σ)`; zero wherever the
/// cutoffs vanish, so `η = 0` is never evaluated.
pub fn m1_symbol(eta: [f64; 2], sigma: [f64; 2], l: f64, n1: f64, n2: f64) -> Result<f64> {
    let cut = LpBump::annulus(eta, l) * LpBump::rho([eta[0] + sigma[0], eta[1] + sigma[1]], n1) * LpBump::rho(sigma, n2);
    if cut == 0.0 {
        return Ok(0.0);
    }
    let h = 1e-4 * (1.0 + norm(sigma));
    let f = |s: [f64; 2]| -> Result<[f64; 2]> {
        let m = m_vec(eta, s)?;
        let d = div_m(eta, s)?;
        Ok([m[0] * d, m[1] * d])
    };
    let a = f([sigma[0] + h, sigma[1]])?[0] - f([sigma[0] - h, sigma[1]])?[0];
    let b = f([sigma[0], sigma[1] + h])?[1] - f([sigma[0], sigma[1] - h])?[1];
    Ok(cut * (a + b) / (2.0 * h))
}

/// `C(m₁)` estimate at scale `L`; the `η` box scales with `L`.
pub fn estimate_m1_norm(l: f64, n1: f64, n2: f64, grid: CmGrid) -> Result<f64> {
    let mut err = None;
    let boxed = CmBox {
        xi_half: 2.0 * l,
        eta_half: 2.0 * n2,
    };
    let v = estimate_cm_norm(
        |eta, sigma| match m1_symbol(eta, sigma, l, n1, n2) {
            Ok(v) => Complex64::new(v, 0.0),
            Err(e) => {
                err.get_or_insert(e);
                Complex64::default()
            }
        },
        boxed,
        grid,
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{hartree_term, PotentialParams};

    fn pt(xi: [f64; 2], eta: [f64; 2], sigma: [f64; 2]) -> PhasePoint {
        PhasePoint { xi, eta, sigma }
    }

    #[test]
    fn phase_examples() {
        let p = pt([0.3, -2.0], [0.0, 0.0], [0.0; 2]);
        assert_eq!(phase(&p), 0.0);
        assert_eq!(grad_xi_phase(&p), [0.0, 0.0]);
        let p = pt([1.0, 0.0], [1.0, 0.0], [0.0; 2]);
        assert!((phase(&p) - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let xi = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let eta = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let p = pt(xi, eta, [0.0; 2]);
            let naive = jb(xi) - jb([xi[0] - eta[0], xi[1] - eta[1]]);
            assert!((phase(&p) - naive).abs() < 1e-12);
            // swapping the roles of ξ and ξ−η flips the sign
            let q = pt([xi[0] - eta[0], xi[1] - eta[1]], [-eta[0], -eta[1]], [0.0; 2]);
            assert!((phase(&p) + phase(&q)).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_xi_phase_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let xi = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let eta = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let h = 1e-5 * (1.0 + norm(xi));
            let g = grad_xi_phase(&pt(xi, eta, [0.0; 2]));
            for k in 0..2 {
                let mut a = xi;
                let mut b = xi;
                a[k] += h;
                b[k] -= h;
                let fd = (phase(&pt(a, eta, [0.0; 2])) - phase(&pt(b, eta, [0.0; 2]))) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn multiplier_examples() {
        let m = resonance_multiplier(&pt([0.0; 2], [1.0, 0.0], [0.0, 0.0])).unwrap();
        assert!((m[0] - 2f64.sqrt()).abs() < 1e-14 && m[1] == 0.0);
        assert!(matches!(
            resonance_multiplier(&pt([0.0; 2], [0.0, 0.0], [1.0, 2.0])),
            Err(Error::Numeric(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = SamplerSpec::new(0);
        for _ in 0..1000 {
            let eta = spec.draw(&mut rng);
            let sigma = spec.draw(&mut rng);
            let m = m_vec(eta, sigma).unwrap();
            let g = grad_sigma_difference(eta, sigma);
            assert!((norm(m) * norm(g) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn multiplier_grows_like_inverse_eta() {
        let sigma = [0.7, -0.2];
        let dir = [0.6, 0.8];
        let at = |e: f64| norm(m_vec([dir[0] * e, dir[1] * e], sigma).unwrap()).ln();
        let slope = (at(1e-6) - at(1e-4)) / ((1e-6f64).ln() - (1e-4f64).ln());
        assert!((slope + 1.0).abs() < 1e-3, "{slope}");
    }

    #[test]
    fn null_structure_saturation() {
        // collinear, small η: |g| ≈ |η|/⟨σ⟩³
        let sigma = [3.0, 4.0];
        let eta = [3e-6, 4e-6];
        let g = norm(grad_sigma_difference(eta, sigma));
        let want = norm(eta) / jb(sigma).powi(3);
        assert!((g / want - 1.0).abs() < 1e-5);
        // perpendicular, large σ: |g| ≈ |η|/⟨σ⟩
        let sigma = [1e3, 0.0];
        let eta = [0.0, 1e-2];
        let g = norm(grad_sigma_difference(eta, sigma));
        assert!((g * jb(sigma) / norm(eta) - 1.0).abs() < 1e-6);
        assert_eq!(norm(grad_sigma_difference([0.0; 2], sigma)), 0.0);
    }

    #[test]
    fn null_structure_sampler() {
        let s = verify_null_structure(&SamplerSpec::new(1), 10_000).unwrap();
        assert_eq!(s.violations, 0, "{s:?}");
        assert!(s.empirical_constants.0 > 0.1 && s.empirical_constants.1 < 10.0);
        assert!(verify_null_structure(&SamplerSpec::new(1), 100).is_err());
    }

    #[test]
    fn m_derivative_orders() {
        let stats = verify_m_derivatives(2, &SamplerSpec::new(2), 100_000).unwrap();
        assert_eq!(stats.len(), 3);
        for s in &stats {
            assert_eq!(s.violations, 0, "{s:?}");
            assert!(s.empirical_constants.1.is_finite() && s.empirical_constants.1 > 0.0);
        }
        assert!(verify_m_derivatives(3, &SamplerSpec::new(2), 10).is_err());
    }

    #[test]
    fn m_first_derivative_against_closed_form_scaling() {
        // m is homogeneous of degree -1 in η as η → 0, so ∂_σ m is too
        let sigma = [0.5, 1.5];
        let a = m_derivative_norm([1e-4, 2e-4], sigma, 1).unwrap();
        let b = m_derivative_norm([2e-4, 4e-4], sigma, 1).unwrap();
        assert!((a / b - 2.0).abs() < 1e-2, "{}", a / b);
    }

    #[test]
    fn hls_examples() {
        let p = PotentialParams::new(1.5, 1.0).unwrap().with_zero_mode(ZeroModePolicy::FreeSpace);
        let g = Grid::new(64, 32.0).unwrap();
        assert_eq!(hls_ratio(&Field::zeros(&g, Space::Physical), &p).unwrap(), None);
        let u = Field::from_fn(&g, |x, y| Complex64::new((-(x * x + y * y) / 2.0).exp(), 0.0));
        let r = hls_ratio(&u, &p).unwrap().unwrap();
        // |u|² = e^{-|x|²}: sup of the potential is π Γ(1/4) at the origin,
        // ‖u‖₂ = √π, ‖u‖_∞ = 1
        let exact = PI * statrs::function::gamma::gamma(0.25) / PI.powf(0.25);
        assert!((r - exact).abs() / exact < 1e-3, "{r} vs {exact}");
        assert!(r < hls_constant(1.5));
        let r2 = hls_ratio(&u.scale(Complex64::new(0.0, 3.0)), &p).unwrap().unwrap();
        assert!((r - r2).abs() < 1e-12 * r);
    }

    #[test]
    fn hls_sampler_and_hartree_bound() {
        let s = verify_hls(1.5, 200, 3).unwrap();
        assert_eq!(s.violations, 0);
        assert!(s.worst_ratio < 1.0);
        // ‖N(u,u,u)‖₂ ≤ C‖u‖₂^{2−γ}‖u‖_∞^γ‖u‖₂ on 20 fields
        let p = PotentialParams::new(1.5, 1.0).unwrap().with_zero_mode(ZeroModePolicy::FreeSpace);
        let g = Grid::new(64, 32.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let u = random_smooth_field(&g, &mut rng);
            let lhs = hartree_term(&u, &u, &u, &p).unwrap().l2_norm();
            let (l2, sup) = (u.l2_norm(), u.max_abs());
            assert!(lhs <= hls_constant(1.5) * l2.powf(0.5) * sup.powf(1.5) * l2);
        }
    }

    #[test]
    fn dispersive_basic() {
        let g = Grid::new(128, 64.0).unwrap();
        let u = Field::from_fn(&g, |x, y| Complex64::new((-(x * x + y * y) / 0.5).exp(), 0.0));
        let ts: Vec<f64> = (0..=16).map(|k| k as f64).collect();
        let rep = verify_dispersive(&[1.0, 2.0], &ts, &u).unwrap();
        assert!(rep.sup_ratio().is_finite());
        // t = 0, N = 1: ‖S₁φ‖_∞/‖φ‖₁
        let s1 = inhom_multiplier(&g, 1.0).unwrap().apply(&u).unwrap();
        assert!((rep.rows[0].sup[0] - s1.max_abs()).abs() < 1e-12);
        let scaled = verify_dispersive(&[1.0, 2.0], &ts, &u.scale(Complex64::new(-4.0, 0.0))).unwrap();
        assert!((scaled.sup_ratio() - rep.sup_ratio()).abs() < 1e-12 * rep.sup_ratio());
        let long: Vec<f64> = (0..=30).map(|k| k as f64).collect();
        assert!(matches!(verify_dispersive(&[1.0], &long, &u), Err(Error::Config(_))));
    }

    fn dirichlet_l1(n: usize, m: usize) -> f64 {
        // one period of |Σ_{k<n} e^{2πijk/m}| sampled at the m dual points
        (0..m)
            .map(|j| {
                if j == 0 {
                    n as f64
                } else {
                    let th = PI * j as f64 / m as f64;
                    ((n as f64 * th).sin() / th.sin()).abs()
                }
            })
            .sum::<f64>()
            * 2.0
            * PI
            / m as f64
    }

    #[test]
    fn cm_box_symbol_is_dirichlet_product() {
        let grid = CmGrid {
            n_xi: 6,
            n_eta: 4,
            oversample: 4,
        };
        let b = CmBox {
            xi_half: 1.0,
            eta_half: 3.0,
        };
        let c = estimate_cm_norm(|_, _| Complex64::new(1.0, 0.0), b, grid).unwrap();
        let want = dirichlet_l1(6, 24).powi(2) * dirichlet_l1(4, 16).powi(2);
        assert!((c - want).abs() < 1e-10 * want, "{c} vs {want}");
    }

    #[test]
    fn cm_separable_symbol() {
        let grid = CmGrid {
            n_xi: 16,
            n_eta: 16,
            oversample: 2,
        };
        let b = CmBox {
            xi_half: 2.0,
            eta_half: 4.0,
        };
        let a = |x: [f64; 2]| LpBump::chi(x);
        let bb = |y: [f64; 2]| LpBump::annulus(y, 1.0);
        let full = estimate_cm_norm(|x, y| Complex64::new(a(x) * bb(y), 0.0), b, grid).unwrap();
        let ca = estimate_kernel_l1_2d(|x| Complex64::new(a(x), 0.0), 2.0, 16, 2).unwrap();
        let cb = estimate_kernel_l1_2d(|y| Complex64::new(bb(y), 0.0), 4.0, 16, 2).unwrap();
        assert!((full - ca * cb).abs() < 0.01 * ca * cb, "{full} vs {}", ca * cb);
    }

    #[test]
    fn cm_size_limit() {
        let r = estimate_cm_norm(
            |_, _| Complex64::new(1.0, 0.0),
            CmBox { xi_half: 1.0, eta_half: 1.0 },
            CmGrid { n_xi: 64, n_eta: 64, oversample: 2 },
        );
        assert!(matches!(r, Err(Error::Size(_))));
    }

    #[test]
    fn m1_vanishes_off_support() {
        assert_eq!(m1_symbol([0.0, 0.0], [0.5, 0.5], 0.25, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(m1_symbol([0.2, 0.0], [5.0, 0.0], 0.25, 1.0, 1.0).unwrap(), 0.0);
        assert!(m1_symbol([0.2, 0.0], [0.5, 0.1], 0.25, 1.0, 1.0).unwrap().abs() > 0.0);
    }
}
