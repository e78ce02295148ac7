//! Concrete operators of the equation: `⟨D⟩^s`, the half-wave group, the
//! Riesz potential, the Hartree nonlinearity and Littlewood–Paley pieces.

mod bump;
mod potential;

pub use bump::LpBump;
pub use potential::{free_space_offset, riesz_constant, PotentialParams, RieszKernel, ZeroModePolicy};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{Field, Grid, Multiplier, Space};

/// `⟨ξ⟩_m = √(m² + |ξ|²)`.
#[inline]
pub fn bracket(xi: [f64; 2], mass: f64) -> f64 {
    (mass * mass + xi[0] * xi[0] + xi[1] * xi[1]).sqrt()
}

/// `⟨D⟩^s f`.
pub fn bessel_power(f: &Field, s: f64) -> Result<Field> {
    Multiplier::real(f.grid(), |xi| (1.0 + xi[0] * xi[0] + xi[1] * xi[1]).powf(0.5 * s))?.apply(f)
}

/// `e^{it⟨D⟩} f`; `half_wave(f, -t)` is the free evolution over time `t`.
pub fn half_wave(f: &Field, t: f64) -> Result<Field> {
    half_wave_with_mass(f, t, 1.0)
}

/// `e^{it√(m²−Δ)} f`.
pub fn half_wave_with_mass(f: &Field, t: f64, mass: f64) -> Result<Field> {
    half_wave_multiplier(f.grid(), t, mass)?.apply(f)
}

pub(crate) fn half_wave_multiplier(grid: &Grid, t: f64, mass: f64) -> Result<Multiplier> {
    Multiplier::from_fn(grid, |xi| Complex64::from_polar(1.0, t * bracket(xi, mass)))
}

fn require_finite(f: &Field, what: &str) -> Result<()> {
    if let Some(i) = f
        .values()
        .iter()
        .position(|v| !(v.re.is_finite() && v.im.is_finite()))
    {
        return Err(Error::Numeric(format!("{what}: non-finite input at index {i}")));
    }
    Ok(())
}

/// `|x|^{−γ} ∗ g` evaluated on the grid, zero mode per `p`'s policy.
pub fn riesz_convolve(g: &Field, p: &PotentialParams) -> Result<Field> {
    g.require_physical("riesz_convolve")?;
    require_finite(g, "riesz_convolve")?;
    RieszKernel::new(g.grid(), p)?.multiplier().apply(g)
}

/// `N_γ(u,v,w) = (|x|^{−γ} ∗ (u v̄)) w`; the coupling `λ` is not included.
pub fn hartree_term(u: &Field, v: &Field, w: &Field, p: &PotentialParams) -> Result<Field> {
    let kernel = RieszKernel::new(u.grid(), p)?;
    hartree_term_with(&kernel, u, v, w)
}

pub(crate) fn hartree_term_with(kernel: &RieszKernel, u: &Field, v: &Field, w: &Field) -> Result<Field> {
    for f in [u, v, w] {
        f.require_physical("hartree_term")?;
        u.require_same_grid(f)?;
    }
    let density = u.zip_with(v, |a, b| a * b.conj())?;
    require_finite(&density, "hartree_term")?;
    let pot = kernel.multiplier().apply(&density)?;
    pot.mul(w)
}

/// Checks that `scale` is a power of two.
fn dyadic_exponent(scale: f64) -> Option<i32> {
    if !(scale.is_finite() && scale > 0.0) {
        return None;
    }
    let e = scale.log2().round();
    (2f64.powi(e as i32) == scale).then_some(e as i32)
}

/// Powers of two inside the grid's resolvable band, increasing.
pub fn resolvable_scales(grid: &Grid) -> Vec<f64> {
    let (lo, hi) = grid.resolvable_band();
    let mut e = lo.log2().ceil() as i32;
    let mut out = Vec::new();
    while 2f64.powi(e) <= hi {
        out.push(2f64.powi(e));
        e += 1;
    }
    out
}

/// Symbol `χ_L` after validating `L` against the grid's band.
pub fn lp_multiplier(grid: &Grid, scale: f64) -> Result<Multiplier> {
    let (lo, hi) = grid.resolvable_band();
    if dyadic_exponent(scale).is_none() {
        return Err(Error::Usage(format!("Littlewood-Paley scale must be a power of two, got {scale}")));
    }
    if scale < lo || scale > hi {
        return Err(Error::Range {
            what: "L",
            value: scale,
            lo,
            hi,
        });
    }
    Multiplier::real(grid, |xi| LpBump::annulus(xi, scale))
}

/// Symbol `ρ_N` after validating `N`.
pub fn inhom_multiplier(grid: &Grid, n: f64) -> Result<Multiplier> {
    let (_, hi) = grid.resolvable_band();
    match dyadic_exponent(n) {
        Some(e) if e >= 0 => {}
        _ => {
            return Err(Error::Usage(format!(
                "inhomogeneous scale must be a power of two >= 1, got {n}"
            )))
        }
    }
    if n > hi {
        return Err(Error::Range {
            what: "N",
            value: n,
            lo: 1.0,
            hi,
        });
    }
    Multiplier::real(grid, |xi| LpBump::rho(xi, n))
}

/// `P_L f`.
pub fn lp_project(f: &Field, scale: f64) -> Result<Field> {
    lp_multiplier(f.grid(), scale)?.apply(f)
}

/// `S_N f`.
pub fn lp_project_inhom(f: &Field, n: f64) -> Result<Field> {
    inhom_multiplier(f.grid(), n)?.apply(f)
}

/// Real and imaginary parts split; convenience for real-valued results.
pub fn max_imag(f: &Field) -> f64 {
    debug_assert_eq!(f.space(), Space::Physical);
    f.values().iter().map(|v| v.im.abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn gaussian(grid: &Grid, amp: f64, w: f64) -> Field {
        Field::from_fn(grid, |x, y| Complex64::new(amp * (-(x * x + y * y) / (2.0 * w * w)).exp(), 0.0))
    }

    fn random_field(grid: &Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Field::new(grid, values, Space::Physical).unwrap()
    }

    /// A few randomly placed complex Gaussians.
    fn smooth_field(grid: &Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bumps: Vec<_> = (0..4)
            .map(|_| {
                (
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(0.8..2.0),
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

    fn rel(a: &Field, b: &Field) -> f64 {
        a.sub(b).unwrap().l2_norm() / b.l2_norm().max(1e-300)
    }

    #[test]
    fn bessel_power_identities() {
        let g = Grid::new(32, 10.0).unwrap();
        let u = random_field(&g, 1);
        assert!(rel(&bessel_power(&u, 0.0).unwrap(), &u) < 1e-14);
        let c = Field::from_fn(&g, |_, _| Complex64::new(3.0, -1.0));
        assert!(rel(&bessel_power(&c, 5.0).unwrap(), &c) < 1e-12);
        let back = bessel_power(&bessel_power(&u, 1.0).unwrap(), -1.0).unwrap();
        assert!(rel(&back, &u) < 1e-12);
    }

    #[test]
    fn half_wave_unitary_group() {
        let g = Grid::new(32, 12.0).unwrap();
        for seed in 0..100 {
            let u = random_field(&g, seed);
            assert!(rel(&half_wave(&u, 0.0).unwrap(), &u) < 1e-14);
            let v = half_wave(&u, 37.5).unwrap();
            assert!((v.l2_norm() - u.l2_norm()).abs() / u.l2_norm() < 1e-12);
            let two = half_wave(&half_wave(&u, 1.25).unwrap(), -3.5).unwrap();
            let one = half_wave(&u, -2.25).unwrap();
            assert!(rel(&two, &one) < 1e-12);
        }
    }

    #[test]
    fn riesz_of_zero_is_zero() {
        let g = Grid::new(32, 16.0).unwrap();
        let p = PotentialParams::new(1.5, 1.0).unwrap();
        let v = riesz_convolve(&Field::zeros(&g, Space::Physical), &p).unwrap();
        assert_eq!(v.max_abs(), 0.0);
    }

    #[test]
    fn riesz_rejects_non_finite_and_spectral() {
        let g = Grid::new(16, 16.0).unwrap();
        let p = PotentialParams::new(1.5, 1.0).unwrap();
        let mut u = Field::zeros(&g, Space::Physical);
        u.values_mut()[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(riesz_convolve(&u, &p), Err(Error::Numeric(_))));
        let s = Field::zeros(&g, Space::Spectral);
        assert!(matches!(riesz_convolve(&s, &p), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_mode_policies_differ_by_constant() {
        let g = Grid::new(64, 32.0).unwrap();
        let dens = gaussian(&g, 1.0, 1.5).abs_sq().unwrap();
        let mass_int: f64 = dens.values().iter().map(|v| v.re).sum::<f64>() * g.dx() * g.dx();
        let p0 = PotentialParams::new(1.3, 1.0).unwrap();
        let c = 0.37;
        let pc = p0.with_zero_mode(ZeroModePolicy::Value(c));
        let v0 = riesz_convolve(&dens, &p0).unwrap();
        let vc = riesz_convolve(&dens, &pc).unwrap();
        for (a, b) in v0.values().iter().zip(vc.values()) {
            assert!(((b - a).re - c * mass_int).abs() < 1e-12);
            assert!((b - a).im.abs() < 1e-12);
        }
    }

    #[test]
    fn riesz_at_origin_matches_closed_form() {
        // normalized Gaussian of width s: (|x|^{-γ} ∗ g)(0) = 2^{-γ/2} s^{-γ} Γ(1-γ/2)
        let g = Grid::new(512, 64.0).unwrap();
        let s = 1.5;
        let dens = gaussian(&g, 1.0 / (2.0 * PI * s * s), s);
        let centre = (g.n() / 2) * g.n() + g.n() / 2;
        for gamma_exp in [1.2, 1.5, 1.8] {
            let p = PotentialParams::new(gamma_exp, 1.0)
                .unwrap()
                .with_zero_mode(ZeroModePolicy::FreeSpace);
            let v = riesz_convolve(&dens, &p).unwrap();
            let exact = 2f64.powf(-0.5 * gamma_exp)
                * s.powf(-gamma_exp)
                * statrs::function::gamma::gamma(1.0 - 0.5 * gamma_exp);
            let got = v.values()[centre].re;
            assert!((got - exact).abs() / exact < 1e-3, "gamma {gamma_exp}: {got} vs {exact}");
        }
    }

    #[test]
    fn free_space_offset_matches_calibration() {
        // offsets measured by matching a Gaussian potential against its closed form, L = 128
        for (gamma_exp, c) in [(1.2, 0.016066), (1.5, 0.0069586), (1.8, 0.0046498)] {
            let got = free_space_offset(128.0, gamma_exp);
            assert!((got - c).abs() / c < 2e-3, "gamma {gamma_exp}: {got} vs {c}");
        }
    }

    #[test]
    fn riesz_output_real_for_real_input() {
        let g = Grid::new(64, 32.0).unwrap();
        let dens = smooth_field(&g, 7).abs_sq().unwrap();
        let p = PotentialParams::new(1.7, 1.0).unwrap();
        let v = riesz_convolve(&dens, &p).unwrap();
        assert!(max_imag(&v) < 1e-12 * v.max_abs());
    }

    #[test]
    fn riesz_commutes_with_lattice_shift() {
        let g = Grid::new(64, 32.0).unwrap();
        let dens = smooth_field(&g, 3).abs_sq().unwrap();
        let p = PotentialParams::new(1.4, 1.0).unwrap();
        let a = riesz_convolve(&dens.shift(5, -11).unwrap(), &p).unwrap();
        let b = riesz_convolve(&dens, &p).unwrap().shift(5, -11).unwrap();
        assert!(rel(&a, &b) < 1e-12);
    }

    #[test]
    fn hartree_trilinear_and_positive() {
        let g = Grid::new(64, 32.0).unwrap();
        let p = PotentialParams::new(1.5, -1.0).unwrap();
        let u = smooth_field(&g, 1);
        let z = Field::zeros(&g, Space::Physical);
        assert_eq!(hartree_term(&z, &u, &u, &p).unwrap().max_abs(), 0.0);
        assert_eq!(hartree_term(&u, &z, &u, &p).unwrap().max_abs(), 0.0);
        assert_eq!(hartree_term(&u, &u, &z, &p).unwrap().max_abs(), 0.0);

        // real non-negative u: the true convolution is positive, so use the
        // free-space zero mode
        let pf = p.with_zero_mode(ZeroModePolicy::FreeSpace);
        let r = gaussian(&g, 0.8, 1.7);
        let n = hartree_term(&r, &r, &r, &pf).unwrap();
        let peak = n.max_abs();
        for v in n.values() {
            assert!(v.im.abs() < 1e-12 * peak);
            assert!(v.re > -1e-9 * peak);
        }

        let v = smooth_field(&g, 2);
        let w = smooth_field(&g, 3);
        let a = Complex64::new(0.7, 0.2);
        let lhs = hartree_term(&u.scale(a), &v, &w, &p).unwrap();
        let rhs = hartree_term(&u, &v, &w, &p).unwrap().scale(a);
        assert!(rel(&lhs, &rhs) < 1e-12);
        let lhs = hartree_term(&u, &v.scale(a), &w, &p).unwrap();
        let rhs = hartree_term(&u, &v, &w, &p).unwrap().scale(a.conj());
        assert!(rel(&lhs, &rhs) < 1e-12);
        let lhs = hartree_term(&u, &v, &w.add(&u).unwrap(), &p).unwrap();
        let rhs = hartree_term(&u, &v, &w, &p)
            .unwrap()
            .add(&hartree_term(&u, &v, &u, &p).unwrap())
            .unwrap();
        assert!(rel(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn hartree_self_potential_real() {
        let g = Grid::new(64, 32.0).unwrap();
        let p = PotentialParams::new(1.5, 1.0).unwrap();
        let u = smooth_field(&g, 4);
        let dens = u.zip_with(&u, |a, b| a * b.conj()).unwrap();
        let pot = riesz_convolve(&dens, &p).unwrap();
        assert!(max_imag(&pot) < 1e-12 * pot.max_abs());
        let swapped = hartree_term(&u.conj().unwrap(), &u.conj().unwrap(), &u, &p).unwrap();
        let direct = hartree_term(&u, &u, &u, &p).unwrap();
        assert!(rel(&swapped, &direct) < 1e-12);
    }

    #[test]
    fn hartree_grid_mismatch() {
        let g1 = Grid::new(16, 16.0).unwrap();
        let g2 = Grid::new(32, 16.0).unwrap();
        let p = PotentialParams::new(1.5, 1.0).unwrap();
        let a = Field::zeros(&g1, Space::Physical);
        let b = Field::zeros(&g2, Space::Physical);
        assert!(matches!(hartree_term(&a, &b, &a, &p), Err(Error::Usage(_))));
    }

    #[test]
    fn lp_band_enforced() {
        let g = Grid::new(64, 32.0).unwrap();
        let u = random_field(&g, 0);
        let (lo, hi) = g.resolvable_band();
        assert!(lo < 0.5 && hi >= 2.0);
        assert!(matches!(lp_project(&u, 0.25), Err(Error::Range { .. })));
        assert!(matches!(lp_project(&u, 8.0), Err(Error::Range { .. })));
        assert!(matches!(lp_project(&u, 0.75), Err(Error::Usage(_))));
        assert!(lp_project(&u, 0.5).is_ok());
        assert!(matches!(lp_project_inhom(&u, 0.5), Err(Error::Usage(_))));
        assert!(matches!(lp_project_inhom(&u, 8.0), Err(Error::Range { .. })));
        assert_eq!(resolvable_scales(&g), vec![0.5, 1.0, 2.0]);
    }

    fn band_limited(grid: &Grid, lo: f64, hi: f64, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::spectral_from_fn(grid, |[a, b]| {
            let r = a.hypot(b);
            let v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if r >= lo && r <= hi {
                v
            } else {
                Complex64::default()
            }
        })
        .into_physical()
    }

    #[test]
    fn lp_sum_recovers_band_limited_field() {
        let g = Grid::new(128, 64.0).unwrap();
        let scales = resolvable_scales(&g);
        let lo = scales[0];
        let hi = *scales.last().unwrap();
        // χ_L = 1 on the annulus exactly where neighbours vanish, so the sum
        // over all resolvable L is the identity on [lo, hi]
        let f = band_limited(&g, lo, hi, 9);
        let mut acc = Field::zeros(&g, Space::Physical);
        for &l in &scales {
            acc = acc.add(&lp_project(&f, l).unwrap()).unwrap();
        }
        assert!(rel(&acc, &f) < 1e-10, "{}", rel(&acc, &f));
    }

    #[test]
    fn lp_annulus_support() {
        let g = Grid::new(128, 64.0).unwrap();
        let l = 0.5;
        let f = band_limited(&g, l * 0.98, l * 1.02, 2);
        for &lp in &resolvable_scales(&g) {
            if (lp / l).log2().abs() >= 2.0 {
                assert!(lp_project(&f, lp).unwrap().l2_norm() < 1e-14 * f.l2_norm());
            }
        }
    }

    #[test]
    fn lp_almost_orthogonal() {
        let g = Grid::new(128, 64.0).unwrap();
        let f = random_field(&g, 12);
        let scales = resolvable_scales(&g);
        let proj: Vec<Field> = scales.iter().map(|&l| lp_project(&f, l).unwrap()).collect();
        for i in 0..proj.len() {
            for j in 0..proj.len() {
                if (i as i32 - j as i32).abs() >= 2 {
                    let ip: Complex64 = proj[i]
                        .values()
                        .iter()
                        .zip(proj[j].values())
                        .map(|(a, b)| a * b.conj())
                        .sum();
                    assert!(ip.norm() < 1e-10 * f.l2_norm().powi(2) / (g.dx() * g.dx()));
                }
            }
        }
    }

    #[test]
    fn lp_gaussian_energy_fraction() {
        // oracle: radial quadrature of (2π)^{-2} ∫ χ₁(ξ)² |ĝ(ξ)|² dξ with ĝ = 2π e^{-|ξ|²/2}
        // the lower transition of χ₁ is only 1/4 wide; the lattice must resolve it
        let g = Grid::new(512, 128.0).unwrap();
        let u = gaussian(&g, 1.0, 1.0);
        let p = lp_project(&u, 1.0).unwrap();
        let measured = p.l2_norm().powi(2);
        let m = 200_000;
        let (a, b) = (0.5, 2.0);
        let h = (b - a) / m as f64;
        let f = |r: f64| {
            let c = LpBump::annulus([r, 0.0], 1.0);
            c * c * (-r * r).exp() * r
        };
        let mut s = f(a) + f(b);
        for k in 1..m {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let oracle = s * h / 3.0 * 2.0 * PI * (2.0 * PI).powi(2) / (2.0 * PI).powi(2);
        assert!((measured - oracle).abs() / oracle < 1e-6, "{measured} vs {oracle}");
    }

    #[test]
    fn inhomogeneous_partition() {
        let g = Grid::new(128, 32.0).unwrap();
        let (_, hi) = g.resolvable_band();
        let top = *resolvable_scales(&g).last().unwrap();
        let f = band_limited(&g, 0.0, top, 4);
        let mut acc = Field::zeros(&g, Space::Physical);
        let mut n = 1.0;
        while n <= hi {
            acc = acc.add(&lp_project_inhom(&f, n).unwrap()).unwrap();
            n *= 2.0;
        }
        assert!(rel(&acc, &f) < 1e-10);

        let low = band_limited(&g, 0.0, 1.9, 5);
        assert!(lp_project_inhom(&low, 4.0).unwrap().l2_norm() < 1e-14 * low.l2_norm());
    }

    #[test]
    fn sobolev_equivalence_constant() {
        // Σ N^{2s} ‖S_N f‖² vs ‖f‖²_{H^s}, s = 3, smooth fields
        let g = Grid::new(128, 32.0).unwrap();
        let (_, hi) = g.resolvable_band();
        let s = 3.0;
        let bracket_s = Multiplier::real(&g, |xi| (1.0 + xi[0] * xi[0] + xi[1] * xi[1]).powf(0.5 * s)).unwrap();
        for seed in 0..10 {
            let f = smooth_field(&g, 100 + seed);
            let hs = bracket_s.apply(&f).unwrap().l2_norm().powi(2);
            let mut sum = 0.0;
            let mut n = 1.0;
            while n <= hi {
                sum += n.powf(2.0 * s) * lp_project_inhom(&f, n).unwrap().l2_norm().powi(2);
                n *= 2.0;
            }
            let ratio = sum / hs;
            assert!((0.25..=4.0).contains(&ratio), "seed {seed}: ratio {ratio}");
        }
    }
}
