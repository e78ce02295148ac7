//! Time integration of `∂ₜu = −i⟨D⟩u + iλ(|x|^{−γ}∗|u|²)u` and profile
//! extraction `f(t) = e^{it⟨D⟩}u(t)`.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observables::{self, ProfileSnapshot, TimeSeries};
use crate::operators::{
    bracket, half_wave, hartree_term_with, inhom_multiplier, lp_multiplier, PotentialParams, RieszKernel,
    ZeroModePolicy,
};
use crate::spectral::{Field, Grid, Multiplier, Space};

/// Mass fraction that must lie inside the declared radius.
pub const RADIUS_MASS_FRACTION: f64 = 0.9999;
/// Largest accepted time step.
pub const MAX_DT: f64 = 0.5;
/// Abort once the sup-norm exceeds this multiple of its initial value.
pub const BLOWUP_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Strang,
    Rk4Interaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Dealias {
    #[default]
    None,
    /// Truncate the potential to the inner 2/3 of each frequency axis.
    TwoThirds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitialKind {
    Gaussian { width: f64 },
    ModulatedGaussian { width: f64, carrier: [f64; 2] },
    /// JSON file `{"n": .., "extent": .., "re": [..], "im": [..]}`, row-major.
    Custom { path: PathBuf },
}

/// `u₀ = ε·profile`; `declared_radius` bounds the support for the
/// finite-speed guard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub kind: InitialKind,
    pub amplitude: f64,
    pub declared_radius: f64,
}

#[derive(Deserialize)]
struct CustomFile {
    n: usize,
    extent: f64,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Radius holding `RADIUS_MASS_FRACTION` of the mass of `e^{−|x|²/(2w²)}`.
pub fn gaussian_radius(width: f64) -> f64 {
    width * (-(1.0 - RADIUS_MASS_FRACTION).ln()).sqrt()
}

impl InitialData {
    pub fn gaussian(width: f64, amplitude: f64, declared_radius: f64) -> Result<Self> {
        let d = InitialData {
            kind: InitialKind::Gaussian { width },
            amplitude,
            declared_radius,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn modulated_gaussian(width: f64, carrier: [f64; 2], amplitude: f64, declared_radius: f64) -> Result<Self> {
        let d = InitialData {
            kind: InitialKind::ModulatedGaussian { width, carrier },
            amplitude,
            declared_radius,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn custom(path: impl Into<PathBuf>, amplitude: f64, declared_radius: f64) -> Result<Self> {
        let d = InitialData {
            kind: InitialKind::Custom { path: path.into() },
            amplitude,
            declared_radius,
        };
        d.validate()?;
        Ok(d)
    }

    /// Checks parameters that do not need a grid.
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::Config(format!("amplitude must be positive, got {}", self.amplitude)));
        }
        if !(self.declared_radius.is_finite() && self.declared_radius > 0.0) {
            return Err(Error::Config(format!(
                "declared radius must be positive, got {}",
                self.declared_radius
            )));
        }
        match &self.kind {
            InitialKind::Gaussian { width } | InitialKind::ModulatedGaussian { width, .. } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::Config(format!("width must be positive, got {width}")));
                }
                let r = gaussian_radius(*width);
                if self.declared_radius < r {
                    return Err(Error::Config(format!(
                        "declared radius {} holds less than 99.99% of the mass; need at least {r:.4}",
                        self.declared_radius
                    )));
                }
            }
            InitialKind::Custom { .. } => {}
        }
        Ok(())
    }

    pub fn build(&self, grid: &Grid) -> Result<Field> {
        self.validate()?;
        let eps = self.amplitude;
        let u = match &self.kind {
            InitialKind::Gaussian { width } => {
                let w2 = 2.0 * width * width;
                Field::from_fn(grid, |x, y| Complex64::new(eps * (-(x * x + y * y) / w2).exp(), 0.0))
            }
            InitialKind::ModulatedGaussian { width, carrier } => {
                let w2 = 2.0 * width * width;
                Field::from_fn(grid, |x, y| {
                    Complex64::from_polar(eps * (-(x * x + y * y) / w2).exp(), carrier[0] * x + carrier[1] * y)
                })
            }
            InitialKind::Custom { path } => {
                let u = load_custom(path, grid)?.scale(Complex64::new(eps, 0.0));
                let frac = mass_outside(&u, self.declared_radius);
                if frac > 1.0 - RADIUS_MASS_FRACTION {
                    return Err(Error::Config(format!(
                        "custom data: {frac:e} of the mass lies outside the declared radius {}",
                        self.declared_radius
                    )));
                }
                u
            }
        };
        Ok(u)
    }
}

fn load_custom(path: &Path, grid: &Grid) -> Result<Field> {
    let text = std::fs::read_to_string(path)?;
    let f: CustomFile = serde_json::from_str(&text)?;
    if f.n != grid.n() || f.extent != grid.extent() {
        return Err(Error::Config(format!(
            "custom data is on a {}/{} grid, config asks for {}/{}",
            f.n,
            f.extent,
            grid.n(),
            grid.extent()
        )));
    }
    if f.re.len() != grid.len() || f.im.len() != grid.len() {
        return Err(Error::Config(format!("custom data must hold {} values per part", grid.len())));
    }
    let values = f.re.iter().zip(&f.im).map(|(&a, &b)| Complex64::new(a, b)).collect();
    Field::new(grid, values, Space::Physical)
}

fn mass_outside(u: &Field, radius: f64) -> f64 {
    let g = u.grid();
    let (mut out, mut tot) = (0.0, 0.0);
    for (i, v) in u.values().iter().enumerate() {
        let [x, y] = g.x(i);
        tot += v.norm_sqr();
        if x * x + y * y > radius * radius {
            out += v.norm_sqr();
        }
    }
    if tot > 0.0 {
        out / tot
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub extent: f64,
    pub potential: PotentialParams,
    pub initial: InitialData,
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub dealias: Dealias,
    /// Skip the finite-speed guard; results past `t_safe` feel the periodic images.
    #[serde(default)]
    pub allow_wraparound: bool,
}

impl SimConfig {
    pub fn new(n: usize, extent: f64, potential: PotentialParams, initial: InitialData, dt: f64, t_end: f64) -> Self {
        SimConfig {
            n,
            extent,
            potential,
            initial,
            dt,
            t_end,
            sample_every: 1,
            integrator: Integrator::Strang,
            dealias: Dealias::None,
            allow_wraparound: false,
        }
    }

    /// `extent/2 − R₀ − extent/8`.
    pub fn t_safe(&self) -> f64 {
        0.5 * self.extent - self.initial.declared_radius - 0.125 * self.extent
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.extent)
    }

    pub fn validate(&self) -> Result<()> {
        Grid::new(self.n, self.extent)?;
        self.initial.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::Config(format!("dt must lie in (0, {MAX_DT}], got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::Config(format!(
                "t_end = {} is not a whole number of steps of {}",
                self.t_end, self.dt
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be at least 1".into()));
        }
        if !self.allow_wraparound && self.t_end > self.t_safe() {
            return Err(Error::Config(format!(
                "t_end = {} exceeds the finite-speed horizon {:.4} (extent/2 - R0 - extent/8); \
                 enlarge the domain or set allow_wraparound",
                self.t_end,
                self.t_safe()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub u: Field,
    pub step_count: u64,
}

impl SimState {
    pub fn initial(cfg: &SimConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        Ok(SimState {
            t: 0.0,
            u: cfg.initial.build(&grid)?,
            step_count: 0,
        })
    }
}

/// Precomputed tables for one `(grid, potential, dt)` combination.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid,
    lambda: f64,
    dt: f64,
    kernel: RieszKernel,
    brackets: Vec<f64>,
    half_step: Multiplier,
    integrator: Integrator,
}

impl Stepper {
    /// `dt` may be negative, which runs the scheme backwards.
    pub fn new(grid: &Grid, p: &PotentialParams, dt: f64, integrator: Integrator, dealias: Dealias) -> Result<Self> {
        let mut kernel = RieszKernel::new(grid, p)?;
        if dealias == Dealias::TwoThirds {
            let cut = 2.0 / 3.0 * grid.nyquist();
            let mask = Multiplier::real(grid, |xi| {
                if xi[0].abs() <= cut && xi[1].abs() <= cut {
                    1.0
                } else {
                    0.0
                }
            })?;
            kernel = kernel.masked(&mask)?;
        }
        let m = p.mass();
        let brackets = (0..grid.len()).map(|i| bracket(grid.xi(i), m)).collect();
        Ok(Stepper {
            grid: grid.clone(),
            lambda: p.lambda(),
            dt,
            kernel,
            brackets,
            half_step: Multiplier::from_fn(grid, |xi| Complex64::from_polar(1.0, -0.5 * dt * bracket(xi, m)))?,
            integrator,
        })
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        Self::new(&cfg.grid()?, &cfg.potential, cfg.dt, cfg.integrator, cfg.dealias)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn kernel(&self) -> &RieszKernel {
        &self.kernel
    }

    /// `|x|^{−γ} ∗ |u|²` with this stepper's kernel, real part only.
    pub fn potential(&self, u: &Field) -> Result<Field> {
        let v = self.kernel.multiplier().apply(&u.abs_sq()?)?;
        Ok(v.map(|z| Complex64::new(z.re, 0.0)))
    }

    pub fn step(&self, state: &SimState) -> Result<SimState> {
        let u = match self.integrator {
            Integrator::Strang => self.strang(&state.u)?,
            Integrator::Rk4Interaction => self.rk4(&state.u, state.t)?,
        };
        if let Some(i) = u.values().iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Numeric(format!(
                "non-finite value at index {i} after step {} (t = {})",
                state.step_count + 1,
                state.t + self.dt
            )));
        }
        Ok(SimState {
            t: state.t + self.dt,
            u,
            step_count: state.step_count + 1,
        })
    }

    fn strang(&self, u: &Field) -> Result<Field> {
        let mut spec = u.to_spectral()?;
        self.half_step.apply_spectral_in_place(spec.values_mut());
        let mut phys = spec.into_physical();
        if self.lambda != 0.0 {
            let v = self.potential(&phys)?;
            let c = self.lambda * self.dt;
            for (z, p) in phys.values_mut().iter_mut().zip(v.values()) {
                *z *= Complex64::from_polar(1.0, c * p.re);
            }
        }
        let mut spec = phys.into_spectral();
        self.half_step.apply_spectral_in_place(spec.values_mut());
        Ok(spec.into_physical())
    }

    /// `e^{iτ⟨ξ⟩}` applied to a spectral field in place.
    fn rotate(&self, spec: &mut Field, tau: f64) {
        for (z, b) in spec.values_mut().iter_mut().zip(&self.brackets) {
            *z *= Complex64::from_polar(1.0, tau * b);
        }
    }

    /// `∂ₜf̂ = iλ e^{it⟨ξ⟩} F[N(u)]`, `û = e^{−it⟨ξ⟩}f̂`.
    fn interaction_rhs(&self, f_hat: &Field, t: f64) -> Result<Field> {
        let mut u_hat = f_hat.clone();
        self.rotate(&mut u_hat, -t);
        let u = u_hat.into_physical();
        let n = hartree_term_with(&self.kernel, &u, &u, &u)?;
        let mut n_hat = n.into_spectral();
        self.rotate(&mut n_hat, t);
        Ok(n_hat.scale(Complex64::new(0.0, self.lambda)))
    }

    fn rk4(&self, u: &Field, t: f64) -> Result<Field> {
        let dt = self.dt;
        let mut f = u.to_spectral()?;
        self.rotate(&mut f, t);
        if self.lambda != 0.0 {
            let axpy = |a: &Field, h: f64, k: &Field| a.zip_with(k, |x, y| x + h * y);
            let k1 = self.interaction_rhs(&f, t)?;
            let k2 = self.interaction_rhs(&axpy(&f, 0.5 * dt, &k1)?, t + 0.5 * dt)?;
            let k3 = self.interaction_rhs(&axpy(&f, 0.5 * dt, &k2)?, t + 0.5 * dt)?;
            let k4 = self.interaction_rhs(&axpy(&f, dt, &k3)?, t + dt)?;
            let w = dt / 6.0;
            let vals = f
                .values()
                .iter()
                .enumerate()
                .map(|(i, &z)| {
                    z + w * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i])
                })
                .collect();
            f = Field::new(&self.grid, vals, Space::Spectral)?;
        }
        self.rotate(&mut f, -(t + dt));
        Ok(f.into_physical())
    }
}

/// One step of the Strang splitting.
pub fn strang_step(state: &SimState, cfg: &SimConfig) -> Result<SimState> {
    Stepper::new(&cfg.grid()?, &cfg.potential, cfg.dt, Integrator::Strang, cfg.dealias)?.step(state)
}

/// One classical RK4 step of the interaction-picture equation.
pub fn rk4_interaction_step(state: &SimState, cfg: &SimConfig) -> Result<SimState> {
    Stepper::new(&cfg.grid()?, &cfg.potential, cfg.dt, Integrator::Rk4Interaction, cfg.dealias)?.step(state)
}

/// `f(t) = e^{it⟨D⟩}u(t)`.
pub fn interaction_profile(state: &SimState) -> Result<Field> {
    half_wave(&state.u, state.t)
}

/// Observables that `run` can sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "arg")]
pub enum Probe {
    Mass,
    Energy,
    Sup,
    Sobolev(f64),
    Wkinf(u32),
    /// `‖(|x|^{−γ}∗|u|²)u‖₂` with the given parameters (λ ignored).
    Nonlinear(PotentialParams),
    /// `‖P_L|u|²‖₂`
    LpL2(f64),
    /// `‖P_L|u|²‖_∞`
    LpSup(f64),
    /// `‖S_N|u|²‖_∞`
    InhomSup(f64),
}

impl Probe {
    pub fn name(&self) -> String {
        match self {
            Probe::Mass => "mass".into(),
            Probe::Energy => "energy".into(),
            Probe::Sup => "sup".into(),
            Probe::Sobolev(s) => format!("h{s}"),
            Probe::Wkinf(k) => format!("w{k}inf"),
            Probe::Nonlinear(p) => format!("nonlinear_g{}", p.gamma()),
            Probe::LpL2(l) => format!("pl_l2_{l}"),
            Probe::LpSup(l) => format!("pl_sup_{l}"),
            Probe::InhomSup(n) => format!("sn_sup_{n}"),
        }
    }

    /// Inverse of [`Probe::name`] for the probes that need no extra parameters
    /// beyond what the name carries; `nonlinear_g*` uses `base` for λ, mass and zero mode.
    pub fn parse(name: &str, base: &PotentialParams) -> Result<Probe> {
        let bad = || Error::Config(format!("unknown probe {name}"));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(match name {
            "mass" => Probe::Mass,
            "energy" => Probe::Energy,
            "sup" => Probe::Sup,
            _ => {
                if let Some(rest) = name.strip_prefix("nonlinear_g") {
                    let p = PotentialParams::new(num(rest)?, base.lambda())?
                        .with_mass(base.mass())?
                        .with_zero_mode(base.zero_mode());
                    Probe::Nonlinear(p)
                } else if let Some(rest) = name.strip_prefix("pl_l2_") {
                    Probe::LpL2(num(rest)?)
                } else if let Some(rest) = name.strip_prefix("pl_sup_") {
                    Probe::LpSup(num(rest)?)
                } else if let Some(rest) = name.strip_prefix("sn_sup_") {
                    Probe::InhomSup(num(rest)?)
                } else if let Some(k) = name.strip_prefix('w').and_then(|r| r.strip_suffix("inf")) {
                    Probe::Wkinf(k.parse().map_err(|_| bad())?)
                } else if let Some(rest) = name.strip_prefix('h') {
                    Probe::Sobolev(num(rest)?)
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

enum Prepared {
    Mass,
    Energy(PotentialParams),
    Sup,
    Multiplied { m: Multiplier, sup: bool },
    Nonlinear(RieszKernel),
    Density { m: Multiplier, sup: bool },
}

impl Prepared {
    fn new(probe: &Probe, grid: &Grid, p: &PotentialParams) -> Result<Self> {
        let bessel = |s: f64| Multiplier::real(grid, move |xi| (1.0 + xi[0] * xi[0] + xi[1] * xi[1]).powf(0.5 * s));
        Ok(match probe {
            Probe::Mass => Prepared::Mass,
            Probe::Energy => Prepared::Energy(*p),
            Probe::Sup => Prepared::Sup,
            Probe::Sobolev(s) => Prepared::Multiplied {
                m: bessel(*s)?,
                sup: false,
            },
            Probe::Wkinf(k) => Prepared::Multiplied {
                m: bessel(*k as f64)?,
                sup: true,
            },
            Probe::Nonlinear(q) => Prepared::Nonlinear(RieszKernel::new(grid, q)?),
            Probe::LpL2(l) => Prepared::Density {
                m: lp_multiplier(grid, *l)?,
                sup: false,
            },
            Probe::LpSup(l) => Prepared::Density {
                m: lp_multiplier(grid, *l)?,
                sup: true,
            },
            Probe::InhomSup(n) => Prepared::Density {
                m: inhom_multiplier(grid, *n)?,
                sup: true,
            },
        })
    }

    fn eval(&self, u: &Field, density_hat: &mut Option<Field>) -> Result<f64> {
        Ok(match self {
            Prepared::Mass => observables::mass(u),
            Prepared::Energy(p) => observables::energy(u, p)?,
            Prepared::Sup => u.max_abs(),
            Prepared::Multiplied { m, sup } => {
                let v = m.apply(u)?;
                if *sup {
                    v.max_abs()
                } else {
                    v.l2_norm()
                }
            }
            Prepared::Nonlinear(k) => hartree_term_with(k, u, u, u)?.l2_norm(),
            Prepared::Density { m, sup } => {
                if density_hat.is_none() {
                    *density_hat = Some(u.abs_sq()?.into_spectral());
                }
                let v = m.apply(density_hat.as_ref().unwrap())?.into_physical();
                if *sup {
                    v.max_abs()
                } else {
                    v.l2_norm()
                }
            }
        })
    }
}

/// Options for [`run_with`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep the interaction profile at every sample time.
    pub keep_profiles: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: TimeSeries,
    pub final_state: SimState,
    pub profiles: Vec<ProfileSnapshot>,
}

/// Integrates to `t_end`, sampling `probes` every `sample_every` steps
/// (including `t = 0` and the final step).
pub fn run(cfg: &SimConfig, probes: &[Probe]) -> Result<RunOutput> {
    run_with(cfg, probes, &RunOptions::default())
}

pub fn run_with(cfg: &SimConfig, probes: &[Probe], opts: &RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let stepper = Stepper::from_config(cfg)?;
    let prepared = probes
        .iter()
        .map(|p| Prepared::new(p, &grid, &cfg.potential))
        .collect::<Result<Vec<_>>>()?;
    let meta = serde_json::to_value(cfg)?;
    let mut series = TimeSeries::new(probes.iter().map(Probe::name), meta);
    let mut profiles = Vec::new();
    let mut state = SimState::initial(cfg)?;
    let sup0 = state.u.max_abs();
    let threshold = BLOWUP_FACTOR * sup0;
    let mut sup_history = vec![(0.0, sup0)];
    let steps = cfg.steps();

    let sample = |state: &SimState, series: &mut TimeSeries, profiles: &mut Vec<ProfileSnapshot>| -> Result<()> {
        let mut dens = None;
        let vals = prepared
            .iter()
            .map(|p| p.eval(&state.u, &mut dens))
            .collect::<Result<Vec<_>>>()?;
        series.push(state.t, &vals)?;
        if opts.keep_profiles {
            profiles.push(ProfileSnapshot {
                t: state.t,
                profile: interaction_profile(state)?,
            });
        }
        Ok(())
    };
    sample(&state, &mut series, &mut profiles)?;
    for k in 1..=steps {
        let next = match stepper.step(&state) {
            Ok(s) => s,
            Err(Error::Numeric(_)) => {
                return Err(blow_up(state.t + cfg.dt, f64::NAN, threshold, sup_history, series));
            }
            Err(e) => return Err(e),
        };
        // use the nominal time to avoid drift from repeated addition
        state = SimState {
            t: k as f64 * cfg.dt,
            ..next
        };
        let sup = state.u.max_abs();
        if k % cfg.sample_every == 0 || k == steps {
            sup_history.push((state.t, sup));
        }
        if sup > threshold {
            return Err(blow_up(state.t, sup, threshold, sup_history, series));
        }
        if k % cfg.sample_every == 0 || k == steps {
            sample(&state, &mut series, &mut profiles)?;
        }
    }
    Ok(RunOutput {
        series,
        final_state: state,
        profiles,
    })
}

fn blow_up(t: f64, sup: f64, threshold: f64, sup_history: Vec<(f64, f64)>, series: TimeSeries) -> Error {
    Error::BlowUp {
        t,
        sup,
        threshold,
        sup_history,
        partial: Box::new(series),
    }
}

/// Outcome of comparing two zero-mode policies on the same run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaugeReport {
    /// Offset used for the second run.
    pub offset: f64,
    /// `‖|u₁| − |u₂|‖_∞` at `t_end`.
    pub modulus_diff: f64,
    /// Largest relative difference among mass, sup and `H¹` norms.
    pub norm_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Runs `cfg` with the `Zero` policy and with `Value(c_{2,γ})` and compares moduli.
pub fn gauge_invariance_check(cfg: &SimConfig) -> Result<GaugeReport> {
    let offset = cfg.potential.riesz_constant();
    let mut a = cfg.clone();
    a.potential = a.potential.with_zero_mode(ZeroModePolicy::Zero);
    let mut b = cfg.clone();
    b.potential = b.potential.with_zero_mode(ZeroModePolicy::Value(offset));
    let probes = [Probe::Mass, Probe::Sup, Probe::Sobolev(1.0)];
    let ra = run(&a, &probes)?;
    let rb = run(&b, &probes)?;
    let ua = &ra.final_state.u;
    let ub = &rb.final_state.u;
    let modulus_diff = ua
        .values()
        .iter()
        .zip(ub.values())
        .map(|(x, y)| (x.norm() - y.norm()).abs())
        .fold(0.0, f64::max);
    let mut norm_diff: f64 = 0.0;
    for ((_, x), (_, y)) in ra.series.channels.iter().zip(&rb.series.channels) {
        for (p, q) in x.iter().zip(y) {
            norm_diff = norm_diff.max((p - q).abs() / p.abs().max(f64::MIN_POSITIVE));
        }
    }
    let tolerance = 1e-8;
    Ok(GaugeReport {
        offset,
        modulus_diff,
        norm_diff,
        tolerance,
        passed: modulus_diff < tolerance && norm_diff < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::hartree_term;

    fn cfg(lambda: f64, eps: f64, dt: f64, t_end: f64) -> SimConfig {
        let p = PotentialParams::new(1.5, lambda).unwrap();
        let init = InitialData::gaussian(1.5, eps, 5.0).unwrap();
        SimConfig::new(64, 32.0, p, init, dt, t_end)
    }

    fn rel(a: &Field, b: &Field) -> f64 {
        a.sub(b).unwrap().l2_norm() / b.l2_norm()
    }

    #[test]
    fn initial_data_checks() {
        assert!(InitialData::gaussian(1.0, 0.0, 5.0).is_err());
        assert!(InitialData::gaussian(1.0, 0.1, 3.0).is_err());
        assert!(InitialData::gaussian(1.0, 0.1, 3.04).is_ok());
        assert!((gaussian_radius(1.0) - 3.0349).abs() < 1e-4);
        let g = Grid::new(64, 32.0).unwrap();
        let u = InitialData::modulated_gaussian(1.0, [1.0, 0.0], 0.2, 4.0).unwrap().build(&g).unwrap();
        assert!((u.max_abs() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn custom_initial_data() {
        let g = Grid::new(16, 16.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u0.json");
        let mut re = vec![0.0; 256];
        re[8 * 16 + 8] = 1.0;
        let im = vec![0.0; 256];
        std::fs::write(&path, serde_json::json!({"n": 16, "extent": 16.0, "re": re, "im": im}).to_string()).unwrap();
        let u = InitialData::custom(&path, 2.0, 1.0).unwrap().build(&g).unwrap();
        assert_eq!(u.values()[8 * 16 + 8], Complex64::new(2.0, 0.0));
        let g2 = Grid::new(32, 16.0).unwrap();
        assert!(matches!(InitialData::custom(&path, 2.0, 1.0).unwrap().build(&g2), Err(Error::Config(_))));
        re[0] = 1.0;
        std::fs::write(&path, serde_json::json!({"n": 16, "extent": 16.0, "re": re, "im": im}).to_string()).unwrap();
        assert!(matches!(InitialData::custom(&path, 2.0, 1.0).unwrap().build(&g), Err(Error::Config(_))));
    }

    #[test]
    fn config_guards() {
        let c = cfg(1.0, 0.05, 0.05, 5.0);
        assert!(c.validate().is_ok());
        assert!((c.t_safe() - 7.0).abs() < 1e-12);
        let mut bad = c.clone();
        bad.t_end = 8.0;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        bad.allow_wraparound = true;
        assert!(bad.validate().is_ok());
        let mut bad = c.clone();
        bad.dt = 0.6;
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.t_end = 5.01;
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.sample_every = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn linear_strang_is_free_flow() {
        let c = cfg(0.0, 0.05, 0.1, 1.0);
        let s0 = SimState::initial(&c).unwrap();
        let s1 = strang_step(&s0, &c).unwrap();
        let free = half_wave(&s0.u, -0.1).unwrap();
        assert!(rel(&s1.u, &free) < 1e-13);
        let s1 = rk4_interaction_step(&s0, &c).unwrap();
        assert!(rel(&s1.u, &free) < 1e-13);
    }

    #[test]
    fn mass_conserved_over_many_steps() {
        let mut c = cfg(-1.0, 0.3, 0.05, 5.0);
        c.allow_wraparound = true;
        let st = Stepper::from_config(&c).unwrap();
        let mut s = SimState::initial(&c).unwrap();
        let m0 = s.u.l2_norm();
        for _ in 0..1000 {
            s = st.step(&s).unwrap();
        }
        assert!((s.u.l2_norm() - m0).abs() / m0 < 1e-10);
    }

    #[test]
    fn strang_time_reversible() {
        let c = cfg(1.0, 0.5, 0.1, 1.0);
        let g = c.grid().unwrap();
        let fwd = Stepper::new(&g, &c.potential, 0.1, Integrator::Strang, Dealias::None).unwrap();
        let back = Stepper::new(&g, &c.potential, -0.1, Integrator::Strang, Dealias::None).unwrap();
        let s0 = SimState::initial(&c).unwrap();
        let mut s = s0.clone();
        for _ in 0..10 {
            s = fwd.step(&s).unwrap();
        }
        for _ in 0..10 {
            s = back.step(&s).unwrap();
        }
        assert!(rel(&s.u, &s0.u) < 1e-10);
    }

    #[test]
    fn rk4_first_step_matches_duhamel() {
        let mut c = cfg(1.0, 0.01, 1e-4, 1e-4);
        c.integrator = Integrator::Rk4Interaction;
        let s0 = SimState::initial(&c).unwrap();
        let s1 = rk4_interaction_step(&s0, &c).unwrap();
        let f1 = interaction_profile(&s1).unwrap();
        let got = f1.sub(&s0.u).unwrap().l2_norm();
        let n = hartree_term(&s0.u, &s0.u, &s0.u, &c.potential).unwrap().l2_norm();
        let want = 1e-4 * n;
        assert!((got - want).abs() / want < 0.05, "{got} vs {want}");
    }

    #[test]
    fn profile_constant_under_free_flow() {
        let mut c = cfg(0.0, 0.1, 0.25, 5.0);
        c.sample_every = 4;
        let out = run_with(&c, &[Probe::Mass], &RunOptions { keep_profiles: true }).unwrap();
        let f0 = &out.profiles[0].profile;
        assert_eq!(out.profiles.len(), 6);
        for snap in &out.profiles {
            assert!(rel(&snap.profile, f0) < 1e-12);
        }
        let s0 = SimState::initial(&c).unwrap();
        assert!(rel(&interaction_profile(&s0).unwrap(), &s0.u) < 1e-15);
    }

    #[test]
    fn run_samples_and_is_deterministic() {
        let mut c = cfg(1.0, 0.1, 0.1, 2.0);
        c.sample_every = 5;
        let probes = [Probe::Mass, Probe::Energy, Probe::Sup, Probe::Wkinf(2), Probe::LpL2(0.5)];
        let a = run(&c, &probes).unwrap();
        let b = run(&c, &probes).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.series.times, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let names: Vec<_> = a.series.names().collect();
        assert_eq!(names, ["mass", "energy", "sup", "w2inf", "pl_l2_0.5"]);
        for p in &probes {
            assert_eq!(&Probe::parse(&p.name(), &c.potential).unwrap(), p);
        }
    }

    #[test]
    fn energy_drift_second_order() {
        let drift = |dt: f64| {
            let c = cfg(1.0, 0.5, dt, 2.0);
            let out = run(&c, &[Probe::Energy]).unwrap();
            let e = out.series.channel("energy").unwrap();
            e.iter().map(|v| (v - e[0]).abs()).fold(0.0, f64::max)
        };
        let r = drift(0.1) / drift(0.05);
        assert!((3.2..=4.8).contains(&r), "{r}");
    }

    #[test]
    fn focusing_blow_up_reported() {
        // Strang is unitary, so its sup-norm is bounded by mass/dx; an
        // overdriven explicit RK4 is the way to trip the detector
        let p = PotentialParams::new(1.9, -1e3).unwrap();
        let init = InitialData::gaussian(1.5, 1.0, 5.0).unwrap();
        let mut c = SimConfig::new(32, 32.0, p, init, 0.5, 5.0);
        c.allow_wraparound = true;
        c.integrator = Integrator::Rk4Interaction;
        match run(&c, &[Probe::Sup]) {
            Err(Error::BlowUp { sup_history, partial, .. }) => {
                assert!(!sup_history.is_empty());
                assert!(!partial.is_empty());
            }
            other => panic!("expected blow-up, got {:?}", other.map(|o| o.final_state.t)),
        }
    }

    #[test]
    fn gauge_policies_agree() {
        let rep = gauge_invariance_check(&cfg(1.0, 0.3, 0.1, 3.0)).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn dealias_is_small_perturbation_for_smooth_data() {
        let mut c = cfg(1.0, 0.2, 0.1, 1.0);
        let a = run(&c, &[Probe::Mass]).unwrap().final_state.u;
        c.dealias = Dealias::TwoThirds;
        let b = run(&c, &[Probe::Mass]).unwrap().final_state.u;
        let d = rel(&a, &b);
        assert!(d > 0.0 && d < 1e-3, "{d}");
    }
}
