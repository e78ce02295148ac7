//! Periodic grid, complex fields and the continuum-scaled discrete Fourier pair.
//!
//! The forward transform approximates `û(ξ) = ∫ e^{-ix·ξ} u(x) dx` by a
//! Riemann sum (it carries `dx²`), the inverse approximates
//! `u(x) = (2π)⁻² ∫ e^{ix·ξ} û(ξ) dξ` (it carries `(2π)⁻² dξ² = extent⁻²`).
//! Continuum formulas can therefore be applied to spectra without extra
//! bookkeeping. Spectra are stored in natural FFT order; every public symbol
//! evaluation receives the true signed frequency.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Rows shorter than this are transformed sequentially.
const PAR_MIN_N: usize = 512;

struct GridInner {
    n: usize,
    extent: f64,
    dx: f64,
    freqs: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Square periodic grid on `[-extent/2, extent/2)²` with `n` points per axis.
///
/// Cloning is cheap; FFT plans are shared between clones.
#[derive(Clone)]
pub struct Grid(Arc<GridInner>);

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.0.n)
            .field("extent", &self.0.extent)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || (self.0.n == other.0.n && self.0.extent == other.0.extent)
    }
}

impl Grid {
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid size must be a power of two >= 8, got {n}"
            )));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::Config(format!(
                "grid extent must be positive and finite, got {extent}"
            )));
        }
        let dxi = 2.0 * PI / extent;
        let freqs = (0..n).map(|k| signed_index(k, n) as f64 * dxi).collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Ok(Grid(Arc::new(GridInner {
            n,
            extent,
            dx: extent / n as f64,
            freqs,
            fwd,
            inv,
        })))
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn extent(&self) -> f64 {
        self.0.extent
    }

    pub fn dx(&self) -> f64 {
        self.0.dx
    }

    /// Frequency spacing `2π / extent`.
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.0.extent
    }

    /// Number of grid points, `n²`.
    pub fn len(&self) -> usize {
        self.0.n * self.0.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `π n / extent`, the magnitude of the (single) Nyquist frequency.
    pub fn nyquist(&self) -> f64 {
        PI * self.0.n as f64 / self.0.extent
    }

    /// Per-axis frequencies in natural FFT order.
    pub fn freqs(&self) -> &[f64] {
        &self.0.freqs
    }

    /// Per-axis frequencies in increasing order, `2πk/extent` for `k = -n/2 .. n/2-1`.
    pub fn freq_lattice(&self) -> Vec<f64> {
        let n = self.0.n as i64;
        (-n / 2..n / 2).map(|k| k as f64 * self.dxi()).collect()
    }

    /// Per-axis physical coordinates `x_j = -extent/2 + j dx`.
    pub fn coords(&self) -> Vec<f64> {
        (0..self.0.n)
            .map(|j| -0.5 * self.0.extent + j as f64 * self.0.dx)
            .collect()
    }

    /// Dyadic band `[4π/extent, nyquist/2]` inside which Littlewood–Paley
    /// pieces are resolved without aliasing.
    pub fn resolvable_band(&self) -> (f64, f64) {
        (4.0 * PI / self.0.extent, 0.5 * self.nyquist())
    }

    /// Signed frequency vector at flat index `idx`.
    #[inline]
    pub fn xi(&self, idx: usize) -> [f64; 2] {
        let n = self.0.n;
        [self.0.freqs[idx / n], self.0.freqs[idx % n]]
    }

    /// Physical position at flat index `idx`.
    #[inline]
    pub fn x(&self, idx: usize) -> [f64; 2] {
        let n = self.0.n;
        let h = -0.5 * self.0.extent;
        [h + (idx / n) as f64 * self.0.dx, h + (idx % n) as f64 * self.0.dx]
    }

    /// `|ξ|²` for every lattice point, natural order.
    pub fn xi_sq(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let [a, b] = self.xi(i);
                a * a + b * b
            })
            .collect()
    }

    fn fft_rows(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.0.n;
        let plan = if inverse { &self.0.inv } else { &self.0.fwd };
        if n >= PAR_MIN_N {
            data.par_chunks_mut(n).for_each(|row| plan.process(row));
        } else {
            let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
            for row in data.chunks_mut(n) {
                plan.process_with_scratch(row, &mut scratch);
            }
        }
    }

    /// Unnormalized 2D DFT in place (natural order on both sides).
    pub(crate) fn raw_fft2(&self, data: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(data.len(), self.len());
        let n = self.0.n;
        self.fft_rows(data, inverse);
        transpose_square(data, n);
        self.fft_rows(data, inverse);
        transpose_square(data, n);
    }

    /// Continuum-scaled forward transform of raw physical samples.
    pub(crate) fn forward_in_place(&self, data: &mut [Complex64]) {
        self.raw_fft2(data, false);
        let s = self.0.dx * self.0.dx;
        self.apply_checkerboard(data, s);
    }

    /// Continuum-scaled inverse transform of raw spectral samples.
    pub(crate) fn inverse_in_place(&self, data: &mut [Complex64]) {
        let s = 1.0 / (self.0.extent * self.0.extent);
        self.apply_checkerboard(data, s);
        self.raw_fft2(data, true);
    }

    /// Multiplies by `scale · (-1)^{i+j}`; the sign accounts for the grid
    /// starting at `-extent/2` rather than at the origin.
    fn apply_checkerboard(&self, data: &mut [Complex64], scale: f64) {
        let n = self.0.n;
        for (i, row) in data.chunks_mut(n).enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v *= if (i + j) % 2 == 0 { scale } else { -scale };
            }
        }
    }
}

#[inline]
fn signed_index(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    const B: usize = 32;
    for bi in (0..n).step_by(B) {
        for bj in (bi..n).step_by(B) {
            for i in bi..(bi + B).min(n) {
                let j0 = if bi == bj { i + 1 } else { bj };
                for j in j0..(bj + B).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

/// Representation a [`Field`] is currently held in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Physical,
    Spectral,
}

/// Complex samples on a [`Grid`], either in physical or in frequency space.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
    space: Space,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<Complex64>, space: Space) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Usage(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            values,
            space,
        })
    }

    pub fn zeros(grid: &Grid, space: Space) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![Complex64::default(); grid.len()],
            space,
        }
    }

    /// Physical field sampled from `f(x, y)`.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let [x, y] = grid.x(i);
                f(x, y)
            })
            .collect();
        Field {
            grid: grid.clone(),
            values,
            space: Space::Physical,
        }
    }

    /// Spectral field sampled from `f(ξ)`.
    pub fn spectral_from_fn(grid: &Grid, mut f: impl FnMut([f64; 2]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.xi(i))).collect();
        Field {
            grid: grid.clone(),
            values,
            space: Space::Spectral,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn to_spectral(&self) -> Result<Field> {
        if self.space != Space::Physical {
            return Err(Error::Usage("to_spectral expects a physical-space field".into()));
        }
        Ok(self.clone().into_spectral())
    }

    pub fn to_physical(&self) -> Result<Field> {
        if self.space != Space::Spectral {
            return Err(Error::Usage("to_physical expects a spectral-space field".into()));
        }
        Ok(self.clone().into_physical())
    }

    /// Converts to spectral space if needed.
    pub fn into_spectral(mut self) -> Field {
        if self.space == Space::Physical {
            self.grid.forward_in_place(&mut self.values);
            self.space = Space::Spectral;
        }
        self
    }

    /// Converts to physical space if needed.
    pub fn into_physical(mut self) -> Field {
        if self.space == Space::Spectral {
            self.grid.inverse_in_place(&mut self.values);
            self.space = Space::Physical;
        }
        self
    }

    pub(crate) fn into_space(self, space: Space) -> Field {
        match space {
            Space::Physical => self.into_physical(),
            Space::Spectral => self.into_spectral(),
        }
    }

    pub(crate) fn require_physical(&self, what: &str) -> Result<()> {
        if self.space != Space::Physical {
            return Err(Error::Usage(format!("{what} expects a physical-space field")));
        }
        Ok(())
    }

    pub(crate) fn require_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Usage(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// `L²` norm consistent with the continuum convention in either space.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        match self.space {
            Space::Physical => (s * self.grid.dx() * self.grid.dx()).sqrt(),
            Space::Spectral => (s * self.grid.dxi() * self.grid.dxi()).sqrt() / (2.0 * PI),
        }
    }

    /// Largest sample modulus (meaningful in physical space).
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            space: self.space,
        }
    }

    pub fn scale(&self, a: Complex64) -> Field {
        self.map(|v| v * a)
    }

    pub fn conj(&self) -> Result<Field> {
        self.require_physical("conj")?;
        Ok(self.map(|v| v.conj()))
    }

    /// Pointwise combination of two fields held in the same space on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Field> {
        self.require_same_grid(other)?;
        if self.space != other.space {
            return Err(Error::Usage("fields are in different spaces".into()));
        }
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            space: self.space,
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product; both fields must be physical.
    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.require_physical("mul")?;
        self.zip_with(other, |a, b| a * b)
    }

    /// `|u|²` as a (real-valued) physical field.
    pub fn abs_sq(&self) -> Result<Field> {
        self.require_physical("abs_sq")?;
        Ok(self.map(|v| Complex64::new(v.norm_sqr(), 0.0)))
    }

    /// Translation by a whole number of lattice cells (periodic).
    pub fn shift(&self, di: isize, dj: isize) -> Result<Field> {
        self.require_physical("shift")?;
        let n = self.grid.n() as isize;
        let mut out = vec![Complex64::default(); self.values.len()];
        for i in 0..n {
            for j in 0..n {
                let ti = (i + di).rem_euclid(n);
                let tj = (j + dj).rem_euclid(n);
                out[(ti * n + tj) as usize] = self.values[(i * n + j) as usize];
            }
        }
        Ok(Field {
            grid: self.grid.clone(),
            values: out,
            space: Space::Physical,
        })
    }
}

/// A Fourier symbol tabulated on a grid's frequency lattice.
#[derive(Debug, Clone)]
pub struct Multiplier {
    grid: Grid,
    values: Vec<Complex64>,
}

impl Multiplier {
    /// Tabulates `symbol` on the full lattice (including `ξ = 0`).
    ///
    /// Fails with a numeric error naming the first lattice point where the
    /// symbol is not finite.
    pub fn from_fn(grid: &Grid, symbol: impl Fn([f64; 2]) -> Complex64 + Sync) -> Result<Self> {
        let values: Vec<Complex64> = (0..grid.len())
            .into_par_iter()
            .map(|i| symbol(grid.xi(i)))
            .collect();
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            let [a, b] = grid.xi(i);
            return Err(Error::Numeric(format!(
                "symbol is not finite at xi = ({a}, {b}): {}",
                values[i]
            )));
        }
        Ok(Multiplier {
            grid: grid.clone(),
            values,
        })
    }

    pub fn real(grid: &Grid, symbol: impl Fn([f64; 2]) -> f64 + Sync) -> Result<Self> {
        Self::from_fn(grid, |xi| Complex64::new(symbol(xi), 0.0))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Pointwise product of two symbols.
    pub fn compose(&self, other: &Multiplier) -> Result<Multiplier> {
        if self.grid != other.grid {
            return Err(Error::Usage("multipliers live on different grids".into()));
        }
        Ok(Multiplier {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    /// Multiplies the spectrum of `f` by the symbol; output is in `f`'s space.
    pub fn apply(&self, f: &Field) -> Result<Field> {
        if self.grid != f.grid {
            return Err(Error::Usage("multiplier and field live on different grids".into()));
        }
        let space = f.space;
        let mut g = f.clone().into_spectral();
        self.apply_spectral_in_place(&mut g.values);
        Ok(g.into_space(space))
    }

    pub(crate) fn apply_spectral_in_place(&self, spec: &mut [Complex64]) {
        for (v, m) in spec.iter_mut().zip(&self.values) {
            *v *= m;
        }
    }
}

/// `m(D) f`: multiplies the spectrum of `f` by `symbol(ξ)`.
pub fn apply_multiplier(
    f: &Field,
    symbol: impl Fn([f64; 2]) -> Complex64 + Sync,
) -> Result<Field> {
    Multiplier::from_fn(f.grid(), symbol)?.apply(f)
}
