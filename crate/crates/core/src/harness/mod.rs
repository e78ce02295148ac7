//! Experiment runner behind the `relhartree` CLI.
//!
//! Each command writes into `<root>/<command>-<hash>/`, where the hash is
//! taken over the command name and the resolved config:
//!
//! - `summary.json`: the [`RunRecord`]
//! - `*.csv`: time series (`t` first, then channels)
//! - `*.svg`: log-log plots of fitted channels
//! - `timing.json`: wall-clock times, the only non-reproducible file

mod config;
mod record;
mod svg;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{
    Command, ExperimentConfig, FitSection, GridSection, InitialSection, LinearSection, PotentialSection,
    ProbesSection, ScatteringSection, SweepSection, TimeSection, VerifySection,
};
pub use record::{ChannelFit, RunRecord, SeriesRef, Verdict};
pub use svg::loglog_svg;

use crate::analysis::{
    estimate_cm_norm, estimate_kernel_l1_2d, estimate_m1_norm, verify_dispersive, verify_hls, verify_m_derivatives,
    verify_null_structure, CmBox, CmGrid, SampleStats, SamplerSpec,
};
use crate::dynamics::{run_with, Probe, RunOptions};
use crate::error::{Error, Result};
use crate::observables::{fit_decay, is_monotone_decreasing, scattering_diagnostics, ScatteringSpec, TimeSeries};
use crate::operators::{inhom_multiplier, LpBump, PotentialParams};
use crate::spectral::{Field, Grid};

/// Environment variable overriding the default output root.
pub const OUT_ENV: &str = "RELHARTREE_OUT";

/// `flag`, else `$RELHARTREE_OUT`, else `./relhartree-out`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("relhartree-out")),
    }
}

/// A finished command: its record and where it was written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub record: RunRecord,
    pub dir: PathBuf,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.record.passed() {
            0
        } else {
            1
        }
    }
}

#[derive(Serialize)]
struct Timing {
    started_unix_s: f64,
    elapsed_s: f64,
}

struct Writer {
    dir: PathBuf,
    record: RunRecord,
    started: (SystemTime, Instant),
}

impl Writer {
    fn new(root: &Path, command: Command, cfg: &ExperimentConfig) -> Result<Self> {
        let record = RunRecord::new(command, cfg);
        let dir = root.join(format!("{}-{}", command.name(), &record.config_hash[..16]));
        std::fs::create_dir_all(&dir)?;
        Ok(Writer {
            dir,
            record,
            started: (SystemTime::now(), Instant::now()),
        })
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), text)?;
        Ok(())
    }

    fn series(&mut self, name: &str, ts: &TimeSeries) -> Result<()> {
        let path = format!("{name}.csv");
        self.write(&path, &ts.to_csv())?;
        self.record.series.push(SeriesRef {
            name: name.into(),
            path,
            channels: ts.names().map(String::from).collect(),
        });
        Ok(())
    }

    /// Fits `channel` of `ts` (already written as `series`) and plots it.
    fn fit(&mut self, series: &str, ts: &TimeSeries, channel: &str, window: [f64; 2]) -> Result<f64> {
        let fit = fit_decay(ts, channel, window)?;
        let title = format!("{channel} ({})", self.record.command.name());
        let svg = loglog_svg(&title, &ts.times, ts.channel(channel).unwrap(), Some(&fit))?;
        self.write(&format!("{series}_{channel}.svg"), &svg)?;
        self.record.fits.push(ChannelFit {
            series: series.into(),
            channel: channel.into(),
            fit,
        });
        Ok(fit.exponent)
    }

    fn verdict(&mut self, v: Verdict) {
        log::debug!(
            "{}: {} ({:?}, need {})",
            v.name,
            if v.passed { "pass" } else { "FAIL" },
            v.measured,
            v.requirement
        );
        self.record.verdicts.push(v);
    }

    fn finish(self) -> Result<Outcome> {
        self.record.check()?;
        self.write("summary.json", &self.record.to_json()?)?;
        let timing = Timing {
            started_unix_s: self.started.0.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            elapsed_s: self.started.1.elapsed().as_secs_f64(),
        };
        self.write("timing.json", &serde_json::to_string_pretty(&timing)?)?;
        Ok(Outcome {
            record: self.record,
            dir: self.dir,
        })
    }

    /// Records a blow-up: writes the partial series and the summary, then
    /// hands the error back.
    fn abort(mut self, e: Error) -> Error {
        if let Error::BlowUp { partial, .. } = &e {
            let _ = self.series("series", partial);
        }
        self.record.error = Some(e.to_string());
        if let Err(w) = self.record.to_json().and_then(|j| self.write("summary.json", &j)) {
            log::error!("could not write summary after failure: {w}");
        }
        e
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn default_window(start: f64, t_safe: f64) -> [f64; 2] {
    [start, t_safe]
}

/// Runs the configured probes and fits the `fit.*` channels.
pub fn simulate(cfg: &ExperimentConfig, root: &Path) -> Result<Outcome> {
    let sim = cfg.sim_config()?;
    let probes = cfg
        .probes
        .channels
        .iter()
        .map(|n| Probe::parse(n, &sim.potential))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = probes.iter().map(Probe::name).collect();
    for c in &cfg.fit.channels {
        if !names.contains(c) {
            return Err(Error::Config(format!("fit channel {c} is not among probes.channels")));
        }
    }
    if !cfg.fit.expect.is_empty() && cfg.fit.expect.len() != cfg.fit.channels.len() {
        return Err(Error::Config("fit.expect needs one value per fit channel".into()));
    }
    let window = cfg.fit.window.unwrap_or(default_window(10.0, sim.t_safe()));

    let mut w = Writer::new(root, Command::Simulate, cfg)?;
    let out = match run_with(&sim, &probes, &RunOptions::default()) {
        Ok(o) => o,
        Err(e) => return Err(w.abort(e)),
    };
    w.series("series", &out.series)?;
    for (k, c) in cfg.fit.channels.iter().enumerate() {
        let p = w.fit("series", &out.series, c, window)?;
        if let Some(&target) = cfg.fit.expect.get(k) {
            let tol = cfg.fit.tolerance;
            w.verdict(
                Verdict::new(format!("{c} exponent"), p, format!("{target} +/- {tol}"), within(p, target, tol))
                    .on("series", c),
            );
        }
    }
    w.finish()
}

/// Linear flow: sup-norm, nonlinear term and dyadic quadratic decay rates.
pub fn linear_decay(cfg: &ExperimentConfig, root: &Path) -> Result<Outcome> {
    let sim = cfg.sim_config()?;
    if sim.potential.lambda() != 0.0 {
        return Err(Error::Config("linear-decay runs the free flow; set potential.lambda = 0".into()));
    }
    let gammas = if cfg.linear.gammas.is_empty() {
        vec![cfg.potential.gamma]
    } else {
        cfg.linear.gammas.clone()
    };
    let mut probes = vec![Probe::Sup];
    for &g in &gammas {
        let p = PotentialParams::new(g, 1.0)?
            .with_mass(sim.potential.mass())?
            .with_zero_mode(sim.potential.zero_mode());
        probes.push(Probe::Nonlinear(p));
    }
    probes.extend(cfg.linear.lp_scales.iter().map(|&l| Probe::LpL2(l)));
    let window = default_window(cfg.linear.window_start, sim.t_safe());

    let mut w = Writer::new(root, Command::LinearDecay, cfg)?;
    let ts = match run_with(&sim, &probes, &RunOptions::default()) {
        Ok(o) => o.series,
        Err(e) => return Err(w.abort(e)),
    };
    w.series("series", &ts)?;
    let p = w.fit("series", &ts, "sup", window)?;
    w.verdict(Verdict::new("sup-norm decay", p, "-1 +/- 0.1", within(p, -1.0, 0.1)).on("series", "sup"));
    for (probe, g) in probes[1..=gammas.len()].iter().zip(&gammas) {
        let c = probe.name();
        let p = w.fit("series", &ts, &c, window)?;
        w.verdict(
            Verdict::new(format!("nonlinear term decay, gamma={g}"), p, format!("{} +/- 0.15", -g), within(p, -g, 0.15))
                .on("series", &c),
        );
    }
    for probe in &probes[1 + gammas.len()..] {
        let c = probe.name();
        let p = w.fit("series", &ts, &c, window)?;
        w.verdict(Verdict::new(format!("{c} decay"), p, "<= -2.5", p <= -2.5).on("series", &c));
    }
    w.finish()
}

/// Small-data nonlinear run with profile Cauchy diagnostics.
pub fn scattering(cfg: &ExperimentConfig, root: &Path) -> Result<Outcome> {
    let sim = cfg.sim_config()?;
    let sc = &cfg.scattering;
    let gamma = cfg.potential.gamma;
    let probes = [Probe::Mass, Probe::Energy, Probe::Wkinf(sc.k)];
    let wk = probes[2].name();

    let mut w = Writer::new(root, Command::Scattering, cfg)?;
    let out = match run_with(&sim, &probes, &RunOptions { keep_profiles: true }) {
        Ok(o) => o,
        Err(e) => return Err(w.abort(e)),
    };
    w.series("series", &out.series)?;
    let p = w.fit("series", &out.series, &wk, default_window(sc.fit_start, sim.t_safe()))?;
    w.verdict(
        Verdict::new(format!("W^{{{},inf}} decay", sc.k), p, "in [-1.15, -0.85]", (-1.15..=-0.85).contains(&p))
            .on("series", &wk),
    );

    let spec = ScatteringSpec {
        s: sc.s,
        weight_power: sc.weight_power,
        weighted_s: sc.weighted_s,
    };
    let diag = scattering_diagnostics(&out.profiles, &spec)?;
    w.series("end", &diag.end)?;
    w.series("cauchy", &diag.cauchy)?;
    let half = 0.5 * sim.t_end;
    // fit windows are open intervals; nudge so both endpoints count
    let window = [sc.cauchy_start - 1e-9, half + 1e-9];
    let targets = [
        (format!("hs{}", sc.s), -(gamma - 1.0) + 0.15),
        (format!("x{}_hs{}", sc.weight_power, sc.weighted_s), -(gamma - 1.0) / 3.0 + 0.1),
    ];
    for (c, bound) in targets {
        let ys: Vec<f64> = diag
            .cauchy
            .times
            .iter()
            .zip(diag.cauchy.channel(&c).unwrap())
            .filter(|(t, _)| **t > window[0] && **t < window[1])
            .map(|(_, y)| *y)
            .collect();
        let mono = is_monotone_decreasing(&ys);
        w.verdict(
            Verdict::new(format!("{c} Cauchy channel monotone"), mono as u8 as f64, "1 (decreasing)", mono)
                .on("cauchy", &c),
        );
        let p = w.fit("cauchy", &diag.cauchy, &c, window)?;
        w.verdict(
            Verdict::new(format!("{c} Cauchy channel rate"), p, format!("<= {bound}"), p <= bound).on("cauchy", &c),
        );
    }
    w.finish()
}

fn stats_json(s: &SampleStats) -> serde_json::Value {
    json!({
        "n_samples": s.n_samples,
        "violations": s.violations,
        "worst_ratio": s.worst_ratio,
        "constants": [s.empirical_constants.0, s.empirical_constants.1],
    })
}

fn stable(a: f64, b: f64) -> (f64, bool) {
    let r = b / a;
    (r, (1.0 / 1.2..=1.2).contains(&r))
}

/// Sampled inequality checks, the localized dispersive estimate and `C(m)` scaling.
pub fn verify(cfg: &ExperimentConfig, root: &Path) -> Result<Outcome> {
    let v = &cfg.verify;
    let n = v.samples;
    let spec = SamplerSpec::new(cfg.seed);
    let grid = Grid::new(cfg.grid.n, cfg.grid.extent)?;
    if v.dispersive {
        // fail on unresolvable scales before the long sampling runs
        for &n in &v.dispersive_n {
            inhom_multiplier(&grid, n)?;
        }
    }
    let mut w = Writer::new(root, Command::Verify, cfg)?;
    let mut details = serde_json::Map::new();

    let sample_verdicts = |w: &mut Writer, name: &str, a: &SampleStats, b: &SampleStats, lower: bool| {
        w.verdict(Verdict::new(
            format!("{name} violations"),
            (a.violations + b.violations) as f64,
            "0",
            a.violations + b.violations == 0,
        ));
        let (r, ok_hi) = stable(a.empirical_constants.1, b.empirical_constants.1);
        w.verdict(Verdict::new(format!("{name} upper constant stability"), r, "in [1/1.2, 1.2]", ok_hi));
        if lower {
            let (r, ok) = stable(a.empirical_constants.0, b.empirical_constants.0);
            w.verdict(Verdict::new(format!("{name} lower constant stability"), r, "in [1/1.2, 1.2]", ok));
        }
    };

    let a = verify_null_structure(&spec, n)?;
    let b = verify_null_structure(&spec, 2 * n)?;
    sample_verdicts(&mut w, "null structure", &a, &b, true);
    details.insert("null_structure".into(), json!([stats_json(&a), stats_json(&b)]));

    let a = verify_m_derivatives(v.max_order, &spec, n)?;
    let b = verify_m_derivatives(v.max_order, &spec, 2 * n)?;
    let mut per_order = Vec::new();
    for (k, (x, y)) in a.iter().zip(&b).enumerate() {
        sample_verdicts(&mut w, &format!("m derivative order {k}"), x, y, false);
        per_order.push(json!([stats_json(x), stats_json(y)]));
    }
    details.insert("m_derivatives".into(), per_order.into());

    let hg = v.hls_gamma.unwrap_or(cfg.potential.gamma);
    let a = verify_hls(hg, n, cfg.seed)?;
    let b = verify_hls(hg, 2 * n, cfg.seed)?;
    sample_verdicts(&mut w, "HLS", &a, &b, false);
    details.insert("hls".into(), json!({"gamma": hg, "runs": [stats_json(&a), stats_json(&b)]}));

    if v.dispersive {
        let wd = v.dispersive_width;
        let datum = Field::from_fn(&grid, |x, y| Complex64::new((-(x * x + y * y) / (2.0 * wd * wd)).exp(), 0.0));
        let times: Vec<f64> = (1..=v.dispersive_t_max).map(|k| k as f64).collect();
        let rep = verify_dispersive(&v.dispersive_n, &times, &datum)?;
        let mut ts = TimeSeries::new(std::iter::empty(), serde_json::Value::Null);
        ts.times = times;
        for row in &rep.rows {
            ts.add_channel(format!("n{}", row.n), row.sup.clone())?;
        }
        w.series("dispersive", &ts)?;
        let ratio = rep.sup_ratio();
        w.verdict(Verdict::new("dispersive sup-ratio", ratio, "finite", ratio.is_finite()));
        for row in &rep.rows {
            let c = format!("n{}", row.n);
            let p = w.fit("dispersive", &ts, &c, row.window)?;
            w.verdict(
                Verdict::new(format!("dispersive decay N={}", row.n), p, "in [-1.15, -0.85]", (-1.15..=-0.85).contains(&p))
                    .on("dispersive", &c),
            );
        }
        details.insert("dispersive".into(), json!({"l1_norm": rep.l1_norm, "sup_ratio": ratio}));
    }

    if v.cm {
        let g = CmGrid {
            n_xi: v.cm_points,
            n_eta: v.cm_points,
            oversample: 2,
        };
        let c1 = estimate_m1_norm(v.cm_l, 1.0, 1.0, g)?;
        let c2 = estimate_m1_norm(2.0 * v.cm_l, 1.0, 1.0, g)?;
        let ratio = c1 / c2;
        w.verdict(Verdict::new("C(m1) ratio L vs 2L", ratio, "in [1, 16]", (1.0..=16.0).contains(&ratio)));
        let full = estimate_cm_norm(
            |x, y| Complex64::new(LpBump::chi(x) * LpBump::annulus(y, 1.0), 0.0),
            CmBox {
                xi_half: 2.0,
                eta_half: 4.0,
            },
            g,
        )?;
        let prod = estimate_kernel_l1_2d(|x| Complex64::new(LpBump::chi(x), 0.0), 2.0, v.cm_points, 2)?
            * estimate_kernel_l1_2d(|y| Complex64::new(LpBump::annulus(y, 1.0), 0.0), 4.0, v.cm_points, 2)?;
        let mismatch = (full - prod).abs() / prod;
        w.verdict(Verdict::new("C(m) separable cross-check", mismatch, "< 0.01", mismatch < 0.01));
        details.insert("cm".into(), json!({"l": v.cm_l, "c_l": c1, "c_2l": c2, "separable": [full, prod]}));
    }

    w.record.details = details.into();
    w.finish()
}

/// Dispatches a single-run command.
pub fn run_command(command: Command, cfg: &ExperimentConfig, root: &Path) -> Result<Outcome> {
    match command {
        Command::Simulate => simulate(cfg, root),
        Command::LinearDecay => linear_decay(cfg, root),
        Command::Scattering => scattering(cfg, root),
        Command::Verify => verify(cfg, root),
        Command::Sweep => Err(Error::Usage("use sweep() for sweeps".into())),
    }
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub epsilon: f64,
    pub lambda: f64,
    /// `pass`, `fail` or the error message.
    pub status: String,
    pub exit_code: i32,
    /// Cell directory relative to the sweep directory.
    pub dir: Option<String>,
    pub exponents: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub rows: Vec<SweepRow>,
}

impl SweepOutcome {
    /// Worst exit code over the cells.
    pub fn exit_code(&self) -> i32 {
        self.rows.iter().map(|r| r.exit_code).max().unwrap_or(0)
    }
}

/// The per-cell configs of a sweep, in table order (γ outermost).
pub fn sweep_cells(cfg: &ExperimentConfig) -> Result<(Command, Vec<ExperimentConfig>)> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("sweep needs a sweep section".into()))?;
    let command = Command::parse(&sw.command)?;
    if matches!(command, Command::Sweep | Command::Verify) {
        return Err(Error::Config(format!("sweep.command cannot be {}", sw.command)));
    }
    let eps = if sw.epsilons.is_empty() {
        vec![cfg.initial.amplitude]
    } else {
        sw.epsilons.clone()
    };
    let mut cells = Vec::new();
    for &g in &sw.gammas {
        for &e in &eps {
            for &s in &sw.lambda_signs {
                if s != 1.0 && s != -1.0 {
                    return Err(Error::Config(format!("sweep.lambda_signs entries must be 1 or -1, got {s}")));
                }
                let mut c = cfg.clone();
                c.sweep = None;
                c.potential.gamma = g;
                c.initial.amplitude = e;
                c.potential.lambda = s * cfg.potential.lambda.abs();
                cells.push(c);
            }
        }
    }
    Ok((command, cells))
}

/// Runs every cell on a pool of `jobs` threads; each cell writes the same
/// files its single-run command would, under the sweep directory.
pub fn sweep(cfg: &ExperimentConfig, root: &Path, jobs: usize) -> Result<SweepOutcome> {
    let (command, cells) = sweep_cells(cfg)?;
    for c in &cells {
        c.sim_config()?;
    }
    let hash = cfg.hash(Command::Sweep);
    let dir = root.join(format!("sweep-{}", &hash[..16]));
    std::fs::create_dir_all(&dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<Outcome>> = pool.install(|| cells.par_iter().map(|c| run_command(command, c, &dir)).collect());

    let rows: Vec<SweepRow> = cells
        .iter()
        .zip(results)
        .map(|(c, r)| {
            let base = SweepRow {
                gamma: c.potential.gamma,
                epsilon: c.initial.amplitude,
                lambda: c.potential.lambda,
                status: String::new(),
                exit_code: 0,
                dir: None,
                exponents: vec![],
            };
            match r {
                Ok(o) => SweepRow {
                    status: if o.record.passed() { "pass".into() } else { "fail".into() },
                    exit_code: o.exit_code(),
                    dir: o.dir.file_name().map(|s| s.to_string_lossy().into_owned()),
                    exponents: o
                        .record
                        .fits
                        .iter()
                        .map(|f| (format!("{}/{}", f.series, f.channel), f.fit.exponent))
                        .collect(),
                    ..base
                },
                Err(e) => SweepRow {
                    status: e.to_string(),
                    exit_code: e.exit_code(),
                    ..base
                },
            }
        })
        .collect();

    let mut columns: Vec<String> = Vec::new();
    for r in &rows {
        for (c, _) in &r.exponents {
            if !columns.contains(c) {
                columns.push(c.clone());
            }
        }
    }
    let mut csv = String::from("gamma,epsilon,lambda,status");
    for c in &columns {
        csv.push(',');
        csv.push_str(c);
    }
    csv.push('\n');
    for r in &rows {
        let status = r.status.replace([',', '\n'], ";");
        csv.push_str(&format!("{},{},{},{status}", r.gamma, r.epsilon, r.lambda));
        for c in &columns {
            csv.push(',');
            if let Some((_, p)) = r.exponents.iter().find(|(n, _)| n == c) {
                csv.push_str(&p.to_string());
            }
        }
        csv.push('\n');
    }
    std::fs::write(dir.join("sweep.csv"), csv)?;
    let summary = json!({ "command": command.name(), "config": cfg, "rows": rows });
    std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(SweepOutcome { dir, rows })
}

/// Re-plots `channel` from a `summary.json`, with its fit when one was
/// recorded. `channel` may be qualified as `series/channel`.
pub fn plot(record_path: &Path, channel: &str, out: Option<&Path>) -> Result<PathBuf> {
    let rec = RunRecord::read(record_path)?;
    let base = record_path.parent().unwrap_or(Path::new("."));
    let (want_series, chan) = match channel.split_once('/') {
        Some((s, c)) => (Some(s), c),
        None => (None, channel),
    };
    let sref = rec
        .series
        .iter()
        .find(|s| want_series.is_none_or(|w| w == s.name) && s.channels.iter().any(|c| c == chan))
        .ok_or_else(|| Error::Config(format!("no series in {} has channel {channel}", record_path.display())))?;
    let text = std::fs::read_to_string(base.join(&sref.path))
        .map_err(|e| Error::Config(format!("{}: {e}", base.join(&sref.path).display())))?;
    let ts = TimeSeries::from_csv(&text)?;
    let fit = rec
        .fits
        .iter()
        .find(|f| f.series == sref.name && f.channel == chan)
        .map(|f| f.fit);
    let svg = loglog_svg(&format!("{chan} ({})", rec.command.name()), &ts.times, ts.channel(chan).unwrap(), fit.as_ref())?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => base.join(format!("{}_{chan}.svg", sref.name)),
    };
    std::fs::write(&path, svg)?;
    Ok(path)
}
