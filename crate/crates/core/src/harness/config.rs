//! Experiment configuration.
//!
//! Files are TOML restricted to flat dotted keys (`grid.n = 256`), though
//! `[section]` headers parse too. Unknown keys anywhere are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{gaussian_radius, Dealias, InitialData, Integrator, SimConfig};
use crate::error::{Error, Result};
use crate::operators::{PotentialParams, ZeroModePolicy};

/// The subcommands that take an experiment config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    LinearDecay,
    Scattering,
    Verify,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::LinearDecay => "linear-decay",
            Command::Scattering => "scattering",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => Command::Simulate,
            "linear-decay" => Command::LinearDecay,
            "scattering" => Command::Scattering,
            "verify" => Command::Verify,
            "sweep" => Command::Sweep,
            _ => return Err(Error::Config(format!("unknown command {s}"))),
        })
    }

    /// Keys that differ from the struct defaults for this command.
    fn defaults(self) -> &'static str {
        match self {
            Command::Simulate | Command::Sweep => "",
            Command::LinearDecay => {
                "grid.n = 256\ngrid.extent = 128.0\npotential.lambda = 0.0\npotential.zero_mode = \"free_space\"\n\
                 initial.amplitude = 1.0\n\
                 time.dt = 0.5\ntime.t_end = 41.5\n"
            }
            Command::Scattering => {
                "grid.n = 256\ngrid.extent = 128.0\npotential.zero_mode = \"free_space\"\n\
                 initial.width = 2.1\ninitial.amplitude = 0.01\ninitial.radius = 6.5\n\
                 time.dt = 0.05\ntime.t_end = 41.0\ntime.sample_every = 10\n"
            }
            Command::Verify => "grid.n = 1024\ngrid.extent = 192.0\n",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub extent: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n: 256, extent: 64.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSection {
    pub gamma: f64,
    pub lambda: f64,
    pub mass: f64,
    /// `zero`, `free_space` or `value` (with `zero_mode_value`).
    pub zero_mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_mode_value: Option<f64>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        PotentialSection {
            gamma: 1.5,
            lambda: 1.0,
            mass: 1.0,
            zero_mode: "zero".into(),
            zero_mode_value: None,
        }
    }
}

impl PotentialSection {
    pub fn params(&self) -> Result<PotentialParams> {
        let policy = match (self.zero_mode.as_str(), self.zero_mode_value) {
            ("zero", None) => ZeroModePolicy::Zero,
            ("free_space", None) => ZeroModePolicy::FreeSpace,
            ("value", Some(c)) => ZeroModePolicy::Value(c),
            ("value", None) => return Err(Error::Config("potential.zero_mode = value needs potential.zero_mode_value".into())),
            (_, Some(_)) => {
                return Err(Error::Config(
                    "potential.zero_mode_value is only valid with potential.zero_mode = value".into(),
                ))
            }
            (other, None) => return Err(Error::Config(format!("unknown potential.zero_mode {other}"))),
        };
        Ok(PotentialParams::new(self.gamma, self.lambda)?
            .with_mass(self.mass)?
            .with_zero_mode(policy))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    /// `gaussian`, `modulated_gaussian` or `custom`.
    pub kind: String,
    pub width: f64,
    pub amplitude: f64,
    /// Declared support radius; Gaussians default to their 99.99% mass radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub carrier: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection {
            kind: "gaussian".into(),
            width: 2.0,
            amplitude: 0.05,
            radius: None,
            carrier: [0.0, 0.0],
            path: None,
        }
    }
}

impl InitialSection {
    pub fn data(&self) -> Result<InitialData> {
        let radius = || self.radius.unwrap_or_else(|| gaussian_radius(self.width));
        match self.kind.as_str() {
            "gaussian" => InitialData::gaussian(self.width, self.amplitude, radius()),
            "modulated_gaussian" => InitialData::modulated_gaussian(self.width, self.carrier, self.amplitude, radius()),
            "custom" => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("initial.kind = custom needs initial.path".into()))?;
                let r = self
                    .radius
                    .ok_or_else(|| Error::Config("initial.kind = custom needs initial.radius".into()))?;
                InitialData::custom(path, self.amplitude, r)
            }
            other => Err(Error::Config(format!("unknown initial.kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub integrator: Integrator,
    pub dealias: Dealias,
    pub allow_wraparound: bool,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            dt: 0.05,
            t_end: 10.0,
            sample_every: 1,
            integrator: Integrator::Strang,
            dealias: Dealias::None,
            allow_wraparound: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbesSection {
    /// Probe names as produced by `Probe::name`.
    pub channels: Vec<String>,
}

impl Default for ProbesSection {
    fn default() -> Self {
        ProbesSection {
            channels: vec!["mass".into(), "energy".into(), "sup".into()],
        }
    }
}

/// Power-law fits for `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub channels: Vec<String>,
    /// Defaults to `[10, t_safe]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// Expected exponents, one per channel; empty means no verdicts.
    pub expect: Vec<f64>,
    pub tolerance: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            channels: vec![],
            window: None,
            expect: vec![],
            tolerance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearSection {
    /// Exponents of the nonlinear-term probes; empty means `potential.gamma`.
    pub gammas: Vec<f64>,
    pub lp_scales: Vec<f64>,
    pub window_start: f64,
}

impl Default for LinearSection {
    fn default() -> Self {
        LinearSection {
            gammas: vec![],
            lp_scales: vec![0.25, 0.5, 1.0],
            window_start: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScatteringSection {
    pub k: u32,
    pub s: f64,
    pub weight_power: u32,
    pub weighted_s: f64,
    /// Start of the decay fit of `‖u‖_{W^{k,∞}}`.
    pub fit_start: f64,
    /// Start of the Cauchy-channel window; the end is `t_end/2`.
    pub cauchy_start: f64,
}

impl Default for ScatteringSection {
    fn default() -> Self {
        ScatteringSection {
            k: 7,
            s: 1.0,
            weight_power: 2,
            weighted_s: 5.0,
            fit_start: 10.0,
            cauchy_start: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub samples: usize,
    pub max_order: u32,
    /// Defaults to `potential.gamma`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hls_gamma: Option<f64>,
    pub dispersive: bool,
    pub dispersive_n: Vec<f64>,
    pub dispersive_t_max: usize,
    pub dispersive_width: f64,
    pub cm: bool,
    pub cm_l: f64,
    pub cm_points: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            samples: 100_000,
            max_order: 2,
            hls_gamma: None,
            dispersive: true,
            dispersive_n: vec![1.0, 2.0, 4.0, 8.0],
            dispersive_t_max: 64,
            dispersive_width: 0.25,
            cm: true,
            cm_l: 0.125,
            cm_points: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// `simulate`, `linear-decay` or `scattering`.
    pub command: String,
    pub gammas: Vec<f64>,
    /// Empty means `initial.amplitude`.
    pub epsilons: Vec<f64>,
    pub lambda_signs: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            command: "simulate".into(),
            gammas: vec![1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9],
            epsilons: vec![],
            lambda_signs: vec![1.0, -1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub potential: PotentialSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub probes: ProbesSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub linear: LinearSection,
    #[serde(default)]
    pub scattering: ScatteringSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("{origin}: {e}")))
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults for `command`.
    pub fn from_str_for(command: Command, text: &str) -> Result<Self> {
        Self::layered(command, &[(text, "config")])
    }

    /// Command defaults, then each layer in order, later keys winning.
    pub fn layered(command: Command, layers: &[(&str, &str)]) -> Result<Self> {
        let mut table = parse_table(command.defaults(), "defaults")?;
        for (text, origin) in layers {
            merge(&mut table, parse_table(text, origin)?);
        }
        let cfg: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        if command == Command::Sweep && cfg.sweep.is_none() {
            return Ok(ExperimentConfig {
                sweep: Some(SweepSection::default()),
                ..cfg
            });
        }
        if command != Command::Sweep && cfg.sweep.is_some() {
            return Err(Error::Config("sweep.* keys are only valid for the sweep command".into()));
        }
        Ok(cfg)
    }

    /// Reads `path` (if any) and applies `key=value` overrides and the seed flag.
    pub fn load(command: Command, path: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<Self> {
        let file = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut extra = String::new();
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {s} is not key=value")))?;
            let v = v.trim();
            // bare words are strings
            let v = if parse_table(&format!("x = {v}"), "").is_ok() {
                v.to_string()
            } else {
                format!("{v:?}")
            };
            extra.push_str(&format!("{} = {v}\n", k.trim()));
        }
        if let Some(seed) = seed {
            extra.push_str(&format!("seed = {seed}\n"));
        }
        let origin = path.map(|p| p.display().to_string()).unwrap_or_default();
        Self::layered(command, &[(&file, &origin), (&extra, "overrides")])
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::new(
            self.grid.n,
            self.grid.extent,
            self.potential.params()?,
            self.initial.data()?,
            self.time.dt,
            self.time.t_end,
        );
        cfg.sample_every = self.time.sample_every;
        cfg.integrator = self.time.integrator;
        cfg.dealias = self.time.dealias;
        cfg.allow_wraparound = self.time.allow_wraparound;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the command and the canonical JSON of the config.
    pub fn hash(&self, command: Command) -> String {
        let json = serde_json::to_string(&(command.name(), self)).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_and_defaults() {
        let c = ExperimentConfig::from_str_for(Command::Simulate, "grid.n = 128\npotential.gamma = 1.2\n").unwrap();
        assert_eq!(c.grid.n, 128);
        assert_eq!(c.grid.extent, 64.0);
        assert_eq!(c.potential.gamma, 1.2);
        let s = ExperimentConfig::from_str_for(Command::Scattering, "").unwrap();
        assert_eq!(s.initial.amplitude, 0.01);
        assert_eq!(s.potential.zero_mode, "free_space");
    }

    #[test]
    fn unknown_keys_fail() {
        for bad in ["grid.nn = 3", "typo = 1", "potential.gama = 1.5", "time.integrator = \"euler\""] {
            let e = ExperimentConfig::from_str_for(Command::Simulate, bad).unwrap_err();
            assert!(matches!(e, Error::Config(_)), "{bad}: {e}");
        }
        assert!(ExperimentConfig::from_str_for(Command::Simulate, "sweep.gammas = [1.5]").is_err());
    }

    #[test]
    fn overrides_and_seed() {
        let sets = vec!["grid.n=64".to_string(), "time.integrator=rk4_interaction".to_string()];
        let c = ExperimentConfig::load(Command::Simulate, None, &sets, Some(9)).unwrap();
        assert_eq!(c.grid.n, 64);
        assert_eq!(c.time.integrator, Integrator::Rk4Interaction);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let c = ExperimentConfig::from_str_for(Command::LinearDecay, "linear.gammas = [1.2, 1.8]").unwrap();
        let back = ExperimentConfig::from_str_for(Command::LinearDecay, &c.to_toml()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(Command::LinearDecay), back.hash(Command::LinearDecay));
        assert_ne!(c.hash(Command::LinearDecay), c.hash(Command::Simulate));
    }

    #[test]
    fn zero_mode_keys() {
        let c = ExperimentConfig::from_str_for(
            Command::Simulate,
            "potential.zero_mode = \"value\"\npotential.zero_mode_value = 0.5",
        )
        .unwrap();
        assert_eq!(c.potential.params().unwrap().zero_mode(), ZeroModePolicy::Value(0.5));
        let c = ExperimentConfig::from_str_for(Command::Simulate, "potential.zero_mode = \"value\"").unwrap();
        assert!(c.potential.params().is_err());
    }

    #[test]
    fn sim_config_validates() {
        let c = ExperimentConfig::from_str_for(Command::Simulate, "time.t_end = 100.0").unwrap();
        assert!(matches!(c.sim_config(), Err(Error::Config(_))));
        let c = ExperimentConfig::from_str_for(Command::LinearDecay, "").unwrap();
        c.sim_config().unwrap();
    }
}
