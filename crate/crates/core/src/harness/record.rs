use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Command, ExperimentConfig};
use crate::error::{Error, Result};
use crate::observables::DecayFit;

/// A CSV file written next to the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRef {
    pub name: String,
    /// Relative to the record's directory.
    pub path: String,
    pub channels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    pub series: String,
    pub channel: String,
    pub fit: DecayFit,
}

/// A named pass/fail check. `measured` is `None` when the value was not finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    pub measured: Option<f64>,
    pub requirement: String,
    pub passed: bool,
}

impl Verdict {
    pub fn new(name: impl Into<String>, measured: f64, requirement: impl Into<String>, passed: bool) -> Self {
        Verdict {
            name: name.into(),
            series: None,
            channel: None,
            measured: measured.is_finite().then_some(measured),
            requirement: requirement.into(),
            passed,
        }
    }

    pub fn on(mut self, series: &str, channel: &str) -> Self {
        self.series = Some(series.into());
        self.channel = Some(channel.into());
        self
    }
}

/// Everything a command produced, minus wall-clock timing (kept in
/// `timing.json` so this file is reproducible byte for byte).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: Command,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub series: Vec<SeriesRef>,
    pub fits: Vec<ChannelFit>,
    pub verdicts: Vec<Verdict>,
    /// Command-specific measurements.
    #[serde(default)]
    pub details: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn new(command: Command, config: &ExperimentConfig) -> Self {
        RunRecord {
            command,
            config_hash: config.hash(command),
            seed: config.seed,
            config: config.clone(),
            series: vec![],
            fits: vec![],
            verdicts: vec![],
            details: serde_json::Value::Null,
            error: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && self.verdicts.iter().all(|v| v.passed)
    }

    pub fn fit(&self, channel: &str) -> Option<&ChannelFit> {
        self.fits.iter().find(|f| f.channel == channel)
    }

    /// Verdicts and fits may only name channels of recorded series.
    pub fn check(&self) -> Result<()> {
        let known = |s: &str, c: &str| {
            self.series
                .iter()
                .any(|r| r.name == s && r.channels.iter().any(|x| x == c))
        };
        for v in &self.verdicts {
            match (&v.series, &v.channel) {
                (Some(s), Some(c)) if !known(s, c) => {
                    return Err(Error::Usage(format!("verdict {} names unknown channel {s}/{c}", v.name)))
                }
                (Some(_), None) | (None, Some(_)) => {
                    return Err(Error::Usage(format!("verdict {} must name both series and channel", v.name)))
                }
                _ => {}
            }
        }
        for f in &self.fits {
            if !known(&f.series, &f.channel) {
                return Err(Error::Usage(format!("fit names unknown channel {}/{}", f.series, f.channel)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
