use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::spectral::{Grid, Multiplier};

/// How the `ξ = 0` mode of the Riesz symbol `c|ξ|^{γ−2}` is treated.
///
/// The symbol is singular at the origin. On the torus only the mean of the
/// density is affected, which shifts the potential by a spatial constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum ZeroModePolicy {
    /// Drop the mean: the potential has zero average over the torus.
    #[default]
    Zero,
    /// Add `c · ∫g` to the zero-mean potential.
    Value(f64),
    /// `Value(c)` with `c` chosen so the periodic kernel matches `|x|^{−γ}`
    /// at the origin (see [`free_space_offset`]).
    FreeSpace,
}

/// Equation parameters: exponent `γ ∈ (1,2)`, coupling `λ`, mass `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    gamma: f64,
    lambda: f64,
    mass: f64,
    zero_mode: ZeroModePolicy,
}

impl PotentialParams {
    pub fn new(gamma: f64, lambda: f64) -> Result<Self> {
        if !(gamma > 1.0 && gamma < 2.0) {
            return Err(Error::Config(format!("gamma must lie in (1, 2), got {gamma}")));
        }
        if !lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be finite, got {lambda}")));
        }
        Ok(PotentialParams {
            gamma,
            lambda,
            mass: 1.0,
            zero_mode: ZeroModePolicy::Zero,
        })
    }

    pub fn with_mass(mut self, mass: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Config(format!("mass must be positive, got {mass}")));
        }
        self.mass = mass;
        Ok(self)
    }

    pub fn with_zero_mode(mut self, policy: ZeroModePolicy) -> Self {
        self.zero_mode = policy;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn zero_mode(&self) -> ZeroModePolicy {
        self.zero_mode
    }

    /// `c_{2,γ}` such that the Fourier transform of `|x|^{−γ}` is `c|ξ|^{γ−2}`.
    pub fn riesz_constant(&self) -> f64 {
        riesz_constant(self.gamma)
    }

    /// Constant added per unit `∫g` on the given grid.
    pub fn dc_offset(&self, grid: &Grid) -> f64 {
        match self.zero_mode {
            ZeroModePolicy::Zero => 0.0,
            ZeroModePolicy::Value(c) => c,
            ZeroModePolicy::FreeSpace => free_space_offset(grid.extent(), self.gamma),
        }
    }
}

/// `2^{2−γ} π Γ((2−γ)/2) / Γ(γ/2)`.
pub fn riesz_constant(gamma_exp: f64) -> f64 {
    2f64.powf(2.0 - gamma_exp) * PI * gamma(1.0 - 0.5 * gamma_exp) / gamma(0.5 * gamma_exp)
}

/// Offset `c` with `|x|^{−γ} ∗ g ≈ K_per ∗ g + c ∫g` for data concentrated
/// well inside a torus of side `extent`, where `K_per` is the zero-mean
/// periodic kernel with symbol `c_{2,γ}|ξ|^{γ−2}`.
///
/// `c = −lim_{x→0}(K_per(x) − |x|^{−γ})`, evaluated by Ewald splitting of
/// `r^{−γ} = Γ(γ/2)⁻¹ ∫₀^∞ τ^{γ/2−1} e^{−τr²} dτ` at `τ = π/extent²`.
pub fn free_space_offset(extent: f64, gamma_exp: f64) -> f64 {
    ewald_offset(extent, gamma_exp, 1.0)
}

/// Ewald evaluation with splitting parameter `split · π / extent²`.
fn ewald_offset(extent: f64, gamma_exp: f64, split: f64) -> f64 {
    let s = 0.5 * gamma_exp;
    let a = split * PI / (extent * extent);
    let g_s = gamma(s);
    let g_1ms = gamma(1.0 - s);
    let area = extent * extent;
    const IMAGES: i64 = 8;

    // r^{-γ} P(s, a r²) → a^s / Γ(s+1) as r → 0
    let self_term = -a.powf(s) / gamma(s + 1.0);
    let mut real_sum = 0.0;
    let mut recip_sum = 0.0;
    for i in -IMAGES..=IMAGES {
        for j in -IMAGES..=IMAGES {
            if i == 0 && j == 0 {
                continue;
            }
            let r2 = ((i * i + j * j) as f64) * area;
            real_sum += r2.powf(-s) * gamma_ur(s, a * r2);
            let xi2 = ((i * i + j * j) as f64) * (2.0 * PI / extent).powi(2);
            recip_sum += (0.25 * xi2).powf(s - 1.0) * g_1ms * gamma_ur(1.0 - s, xi2 / (4.0 * a));
        }
    }
    recip_sum *= PI / g_s / area;
    let short_range_mean = PI * a.powf(s - 1.0) / (g_s * (1.0 - s)) / area;
    let h0 = self_term + real_sum - short_range_mean + recip_sum;
    -h0
}

/// The Riesz symbol tabulated on a grid, zero mode resolved.
#[derive(Debug, Clone)]
pub struct RieszKernel {
    multiplier: Multiplier,
}

impl RieszKernel {
    pub fn new(grid: &Grid, params: &PotentialParams) -> Result<Self> {
        let c = params.riesz_constant();
        let expo = 0.5 * (params.gamma() - 2.0);
        // the inverse transform divides by extent², so this DC entry adds dc·ĝ(0)
        let dc = params.dc_offset(grid) * grid.extent() * grid.extent();
        let multiplier = Multiplier::real(grid, |[a, b]| {
            let r2 = a * a + b * b;
            if r2 == 0.0 {
                dc
            } else {
                c * r2.powf(expo)
            }
        })?;
        Ok(RieszKernel { multiplier })
    }

    pub fn multiplier(&self) -> &Multiplier {
        &self.multiplier
    }

    /// Kernel with its symbol multiplied by `mask`.
    pub fn masked(&self, mask: &Multiplier) -> Result<Self> {
        Ok(RieszKernel {
            multiplier: self.multiplier.compose(mask)?,
        })
    }
}
