//! Config-driven experiments behind the command-line tool.
//!
//! Each experiment parses a strict JSON config, runs, and returns its
//! artifacts in memory; nothing touches the filesystem until a run has
//! succeeded, so validation failures leave no output behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dispersion::{critical_coupling, ContourParams, DispersionFunction};
use crate::error::{Error, Result};
use crate::finiten::{sample_oscillators, Sampling};
use crate::freqdist::{build_grid, DistributionSpec, FrequencyDistribution};
use crate::spectral::{recurrence_horizon, scattering_profile, PerturbationSpec, Profile, RunOptions, SpectralState};
use crate::volterra::{fit_decay, instability_witness, kuramoto_kernel, p1hat_on_grid, Series, VolterraProblem};
use crate::Complex64;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Stability,
    KcScan,
    Linear,
    Witness,
    Nonlinear,
    FiniteN,
    Compare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Stability => "stability",
            Self::KcScan => "kc-scan",
            Self::Linear => "linear",
            Self::Witness => "witness",
            Self::Nonlinear => "nonlinear",
            Self::FiniteN => "finite-n",
            Self::Compare => "compare",
        }
    }
}

/// One output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    fn json(name: &str, value: &Value) -> Self {
        let mut contents = serde_json::to_string_pretty(value).expect("json values serialize");
        contents.push('\n');
        Self { name: name.into(), contents }
    }
}

/// Writes artifacts into `dir`, creating it if needed.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
    }
    Ok(())
}

/// Diagnostic document written when a run fails numerically.
pub fn failure_artifact(kind: ExperimentKind, config: &str, error: &Error) -> Artifact {
    let config: Value = serde_json::from_str(config).unwrap_or(Value::Null);
    Artifact::json(
        "error.json",
        &json!({
            "formatVersion": FORMAT_VERSION,
            "experiment": kind.name(),
            "config": config,
            "error": { "kind": error_kind(error), "message": error.to_string() },
        }),
    )
}

fn error_kind(e: &Error) -> String {
    format!("{e:?}").split(['(', ' ', '{']).next().unwrap_or_default().to_string()
}

/// Output directory named in a config, if any.
pub fn configured_output_dir(config: &str) -> Option<PathBuf> {
    let v: Value = serde_json::from_str(config).ok()?;
    v.get("outputDir")?.as_str().map(PathBuf::from)
}

/// Parses `config` and runs the experiment. Relative paths inside the
/// config resolve against `base_dir`.
pub fn run_experiment(kind: ExperimentKind, config: &str, base_dir: &Path) -> Result<Vec<Artifact>> {
    match kind {
        ExperimentKind::Stability => stability(parse(config)?),
        ExperimentKind::KcScan => kc_scan(parse(config)?),
        ExperimentKind::Linear => linear(parse(config)?, base_dir),
        ExperimentKind::Witness => witness(parse(config)?),
        ExperimentKind::Nonlinear => nonlinear(parse(config)?),
        ExperimentKind::FiniteN => finite_n(parse(config)?),
        ExperimentKind::Compare => compare(parse(config)?),
    }
}

/// Strict parse: unknown keys are rejected and the top level must carry the
/// current formatVersion.
pub fn parse<T: DeserializeOwned>(config: &str) -> Result<T> {
    let value: Value = serde_json::from_str(config).map_err(|e| Error::Config(e.to_string()))?;
    match value.get("formatVersion").and_then(Value::as_u64) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(Error::Config(format!("unsupported formatVersion {v}, expected {FORMAT_VERSION}"))),
        None => return Err(Error::Config("missing formatVersion".into())),
    }
    serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
}

fn current_version() -> u32 {
    FORMAT_VERSION
}

fn default_threshold() -> f64 {
    1.0 - 1e-8
}

fn default_grid_nodes() -> usize {
    512
}

fn default_weight() -> i32 {
    4
}

fn unit() -> [f64; 2] {
    [1.0, 0.0]
}

fn complex(a: [f64; 2]) -> Complex64 {
    Complex64::new(a[0], a[1])
}

fn header(config: &impl Serialize, kind: ExperimentKind) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("formatVersion".into(), json!(FORMAT_VERSION));
    m.insert("experiment".into(), json!(kind.name()));
    m.insert("config".into(), serde_json::to_value(config).expect("configs serialize"));
    m
}

fn sidecar(config: &impl Serialize, kind: ExperimentKind) -> Artifact {
    Artifact::json("config.json", &Value::Object(header(config, kind)))
}

fn with_header(config: &impl Serialize, kind: ExperimentKind, body: impl Serialize) -> Value {
    let mut m = header(config, kind);
    if let Value::Object(fields) = serde_json::to_value(body).expect("reports serialize") {
        m.extend(fields);
    }
    Value::Object(m)
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {x}")))
    }
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be nonnegative and finite, got {x}")))
    }
}

// ---------------------------------------------------------------- formatting

/// C's `%.17g`: 17 significant digits, trailing zeros stripped, exponent
/// form outside 1e-4 ≤ |x| < 1e17.
pub fn format_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp).max(0) as usize;
    strip_zeros(&format!("{x:.decimals$}")).to_string()
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

struct Csv(String);

impl Csv {
    fn new(header: &str) -> Self {
        Self(format!("{header}\n"))
    }

    fn row(&mut self, cells: &[f64]) {
        let line: Vec<String> = cells.iter().map(|&c| format_g17(c)).collect();
        let _ = writeln!(self.0, "{}", line.join(","));
    }

    fn raw_row(&mut self, cells: &[String]) {
        let _ = writeln!(self.0, "{}", cells.join(","));
    }

    fn artifact(self, name: &str) -> Artifact {
        Artifact { name: name.into(), contents: self.0 }
    }
}

// ---------------------------------------------------------------- stability

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ContourConfig {
    #[serde(default = "contour_initial")]
    pub initial_points: usize,
    #[serde(default = "contour_max")]
    pub max_points: usize,
    #[serde(default = "contour_tol")]
    pub marginal_tol: f64,
    #[serde(default)]
    pub scale: Option<f64>,
}

fn contour_initial() -> usize {
    ContourParams::default().initial_points
}
fn contour_max() -> usize {
    ContourParams::default().max_points
}
fn contour_tol() -> f64 {
    ContourParams::default().marginal_tol
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self { initial_points: contour_initial(), max_points: contour_max(), marginal_tol: contour_tol(), scale: None }
    }
}

impl From<&ContourConfig> for ContourParams {
    fn from(c: &ContourConfig) -> Self {
        Self { initial_points: c.initial_points, max_points: c.max_points, marginal_tol: c.marginal_tol, scale: c.scale }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(default = "current_version")]
    pub format_version: u32,
    pub distribution: DistributionSpec,
    #[serde(rename = "K")]
    pub coupling: f64,
    #[serde(default)]
    pub contour: ContourConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn stability(cfg: StabilityConfig) -> Result<Vec<Artifact>> {
    let dist = FrequencyDistribution::try_from(cfg.distribution.clone())?;
    let report = DispersionFunction::new(dist, cfg.coupling)?.stability_report(&(&cfg.contour).into())?;
    Ok(vec![Artifact::json("stability.json", &with_header(&cfg, ExperimentKind::Stability, &report))])
}

// ------------------------------------------------------------------ kc-scan

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KcScanConfig {
    #[serde(default = "current_version")]
    pub format_version: u32,
    /// Base distribution; the scanned field is overwritten per row.
    pub distribution: DistributionSpec,
    /// Dotted path of a numeric field in `distribution`, e.g. `separation`
    /// or `components.1.center`.
    pub parameter: String,
    /// Explicit parameter values; alternative to `start`/`stop`/`count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn set_path(root: &mut Value, path: &str, x: f64) -> Result<()> {
    let mut node = root;
    for key in path.split('.') {
        node = match node {
            Value::Object(m) => m.get_mut(key),
            Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("parameter path `{path}` not found in distribution")))?;
    }
    if !node.is_number() {
        return Err(Error::Config(format!("parameter `{path}` is not numeric")));
    }
    *node = json!(x);
    Ok(())
}

fn kc_scan(cfg: KcScanConfig) -> Result<Vec<Artifact>> {
    let values: Vec<f64> = match (&cfg.values, cfg.start, cfg.stop, cfg.count) {
        (Some(v), None, None, None) => v.clone(),
        (None, Some(a), Some(b), Some(n)) if n >= 1 => (0..n)
            .map(|i| if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 })
            .collect(),
        _ => return Err(Error::Config("give either `values` or `start`, `stop` and `count` >= 1".into())),
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("scan values must be finite and nonempty".into()));
    }
    let base = serde_json::to_value(&cfg.distribution).expect("spec serializes");
    let dists = values
        .iter()
        .map(|&x| {
            let mut v = base.clone();
            set_path(&mut v, &cfg.parameter, x)?;
            let spec: DistributionSpec = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
            FrequencyDistribution::try_from(spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Result<(f64, Vec<f64>)>> = dists
        .par_iter()
        .map(|d| match critical_coupling(d) {
            Ok(c) => Ok((c.k_c, c.frequencies)),
            Err(Error::NoZeroFound) => Ok((f64::INFINITY, Vec::new())),
            Err(e) => Err(e),
        })
        .collect();
    let mut csv = Csv::new("param,K_c,critical_omegas");
    for (x, row) in values.iter().zip(rows) {
        let (kc, omegas) = row?;
        let omegas: Vec<String> = omegas.iter().map(|&w| format_g17(w)).collect();
        csv.raw_row(&[format_g17(*x), format_g17(kc), omegas.join(";")]);
    }
    Ok(vec![csv.artifact("kc_scan.csv"), sidecar(&cfg, ExperimentKind::KcScan)])
}

// ------------------------------------------------------------------- linear

/// Source term F of the linear Volterra equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum InputSpec {
    /// A·(1+t)^{−exponent}·e^{i·frequency·t}.
    #[serde(rename_all = "camelCase")]
    PowerLaw {
        #[serde(default = "unit")]
        amplitude: [f64; 2],
        exponent: f64,
        #[serde(default)]
        frequency: f64,
    },
    /// F = p̂₁(0,·) for r(0) = (1/π) cos θ · h(ω), evaluated on a grid.
    #[serde(rename_all = "camelCase")]
    InitialData {
        profile: Profile,
        #[serde(default = "default_grid_nodes")]
        grid_nodes: usize,
        #[serde(default = "default_threshold")]
        mass_threshold: f64,
    },
    /// CSV with header and columns `re,im`, sampled at t = j·dt.
    Samples { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LinearConfig {
    #[serde(default = "current_version")]
    pub format_version: u32,
    pub distribution: DistributionSpec,
    #[serde(rename = "K")]
    pub coupling: f64,
    /// Weight exponent of (1+t)^n|R|.
    #[serde(default = "default_weight")]
    pub n: i32,
    pub input: InputSpec,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn read_samples(path: &Path) -> Result<Vec<Complex64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    lines.next().ok_or_else(|| Error::Config(format!("{}: empty sample file", path.display())))?;
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let cells: Vec<&str> = l.split(',').map(str::trim).collect();
            let bad = || Error::Config(format!("{}: row {} must be `re,im`", path.display(), i + 2));
            if cells.len() != 2 {
                return Err(bad());
            }
            let re = cells[0].parse().map_err(|_| bad())?;
            let im = cells[1].parse().map_err(|_| bad())?;
            Ok(Complex64::new(re, im))
        })
        .collect()
}

fn linear(cfg: LinearConfig, base_dir: &Path) -> Result<Vec<Artifact>> {
    positive("dt", cfg.dt)?;
    positive("T", cfg.horizon)?;
    nonnegative("K", cfg.coupling)?;
    let dist = FrequencyDistribution::try_from(cfg.distribution.clone())?;
    let input: Series = match &cfg.input {
        InputSpec::PowerLaw { amplitude, exponent, frequency } => {
            let (a, p, nu) = (complex(*amplitude), *exponent, *frequency);
            Arc::new(move |t| a * (1.0 + t).powf(-p) * Complex64::new(0.0, nu * t).exp())
        }
        InputSpec::InitialData { profile, grid_nodes, mass_threshold } => {
            let grid = build_grid(&dist, *grid_nodes, *mass_threshold)?;
            let profile = *profile;
            p1hat_on_grid(&grid, move |w| Complex64::new(profile.eval(w), 0.0))
        }
        InputSpec::Samples { path } => {
            let samples = read_samples(&base_dir.join(path))?;
            let steps = (cfg.horizon / cfg.dt).round() as usize;
            if samples.len() < steps + 1 {
                return Err(Error::Config(format!("need {} samples, file has {}", steps + 1, samples.len())));
            }
            let dt = cfg.dt;
            Arc::new(move |t| samples[((t / dt).round() as usize).min(samples.len() - 1)])
        }
    };
    let sol = VolterraProblem::new(kuramoto_kernel(&dist, cfg.coupling), input, cfg.dt, cfg.horizon)?.solve()?;
    let mut csv = Csv::new(&format!("t,Re(R),Im(R),abs(R),(1+t)^{}*abs(R)", cfg.n));
    for (t, r) in sol.times.iter().zip(&sol.values) {
        csv.row(&[*t, r.re, r.im, r.norm(), (1.0 + t).powi(cfg.n) * r.norm()]);
    }
    let fit = fit_decay(&sol.times, &sol.values, cfg.fit_window)?;
    let body = json!({ "decayFit": fit, "weightedSup": sol.weighted_sup(cfg.n), "schemeOrder": sol.scheme_order });
    Ok(vec![
        csv.artifact("linear.csv"),
        Artifact::json("decay_fit.json", &with_header(&cfg, ExperimentKind::Linear, body)),
    ])
}

// ------------------------------------------------------------------ witness

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WitnessConfig {
    #[serde(default = "current_version")]
    pub format_version: u32,
    pub distribution: DistributionSpec,
    #[serde(rename = "K")]
    pub coupling: f64,
    #[serde(default = "unit")]
    pub amplitude: [f64; 2],
    /// Defaults to 5 e-folding times of the predicted growth.
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "witness_steps")]
    pub steps: usize,
    /// Largest relative deviation from A·e^{γt} accepted as reproduced.
    #[serde(default = "witness_tol")]
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn witness_steps() -> usize {
    2000
}

fn witness_tol() -> f64 {
    0.02
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct WitnessReport {
    root: [f64; 2],
    predicted_rate: f64,
    measured_rate: f64,
    max_relative_deviation: f64,
    input_bound: f64,
    horizon: f64,
    reproduced: bool,
}

fn witness(cfg: WitnessConfig) -> Result<Vec<Artifact>> {
    positive("K", cfg.coupling)?;
    if cfg.steps < 10 {
        return Err(Error::InvalidParameter(format!("steps must be at least 10, got {}", cfg.steps)));
    }
    let dist = FrequencyDistribution::try_from(cfg.distribution.clone())?;
    let a = complex(cfg.amplitude);
    let w = instability_witness(&dist, cfg.coupling, a)?;
    let horizon = cfg.horizon.unwrap_or(5.0 / w.predicted_rate);
    positive("T", horizon)?;
    let dt = horizon / cfg.steps as f64;
    let sol = VolterraProblem::new(kuramoto_kernel(&dist, cfg.coupling), w.input.clone(), dt, horizon)?.solve()?;
    let mut csv = Csv::new("t,Re(F),Im(F),abs(F)");
    let mut deviation: f64 = 0.0;
    for (t, r) in sol.times.iter().zip(&sol.values) {
        let f = (w.input)(*t);
        csv.row(&[*t, f.re, f.im, f.norm()]);
        deviation = deviation.max((r.norm() / (a.norm() * (w.predicted_rate * t).exp()) - 1.0).abs());
    }
    let half = sol.times.len() / 2;
    let (t0, t1) = (sol.times[half], *sol.times.last().expect("nonempty"));
    let measured = (sol.values.last().expect("nonempty").norm() / sol.values[half].norm()).ln() / (t1 - t0);
    let report = WitnessReport {
        root: [w.root.re, w.root.im],
        predicted_rate: w.predicted_rate,
        measured_rate: measured,
        max_relative_deviation: deviation,
        input_bound: w.input_bound,
        horizon,
        reproduced: deviation <= cfg.tolerance,
    };
    Ok(vec![
        csv.artifact("witness_input.csv"),
        Artifact::json("witness.json", &with_header(&cfg, ExperimentKind::Witness, report)),
    ])
}

// ---------------------------------------------------------------- nonlinear

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NonlinearConfig {
    #[serde(default = "current_version")]
    pub format_version: u32,
    pub distribution: DistributionSpec,
    #[serde(rename = "K")]
    pub coupling: f64,
    pub epsilon: f64,
    pub k_max: usize,
    #[serde(default = "default_grid_nodes")]
    pub grid_nodes: usize,
    #[serde(default = "default_threshold")]
    pub mass_threshold: f64,
    pub dt: f64,
    /// Requested horizon; runs stop at the recurrence horizon if it is
    /// shorter.
    #[serde(rename = "T")]
    pub horizon: f64,
    pub output_every: f64,
    pub initial_perturbation: PerturbationSpec,
    /// Weight exponent n of (1+t)^n|R| and order of the diagnostics.
    #[serde(default = "default_weight")]
    pub n: i32,
    /// Profile snapshot times for the scattering check; defaults to thirds
    /// of the effective horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

struct NonlinearRun {
    times: Vec<f64>,
    order_parameter: Vec<Complex64>,
    diagnostics: Vec<(f64, [f64; 3])>,
    recurrence_horizon: f64,
    horizon: f64,
    scattering: Value,
}

fn run_nonlinear(cfg: &NonlinearConfig) -> Result<NonlinearRun> {
    positive("dt", cfg.dt)?;
    positive("T", cfg.horizon)?;
    positive("outputEvery", cfg.output_every)?;
    nonnegative("K", cfg.coupling)?;
    if cfg.n < 2 {
        return Err(Error::InvalidParameter(format!("n must be at least 2, got {}", cfg.n)));
    }
    let dist = FrequencyDistribution::try_from(cfg.distribution.clone())?;
    let grid = Arc::new(build_grid(&dist, cfg.grid_nodes, cfg.mass_threshold)?);
    let t_rec = recurrence_horizon(&grid);
    let horizon = cfg.horizon.min(t_rec);
    let snapshots = match &cfg.snapshot_times {
        Some(ts) => {
            if ts.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
                return Err(Error::InvalidParameter(format!("snapshot times must lie in [0, {horizon}]")));
            }
            ts.clone()
        }
        None => vec![horizon / 3.0, 2.0 * horizon / 3.0, horizon],
    };
    let mut state =
        SpectralState::initialize(&cfg.initial_perturbation, grid.clone(), cfg.k_max, cfg.epsilon, cfg.coupling)?;
    let options = RunOptions { diagnostics_order: Some(cfg.n as usize), snapshot_times: snapshots };
    let res = state.run(cfg.dt, horizon, cfg.output_every, &options)?;
    let scattering = match scattering_profile(&grid, cfg.k_max, &res.snapshots, cfg.n as usize) {
        Ok(s) => serde_json::to_value(&s).expect("report serializes"),
        Err(Error::InvalidParameter(msg)) => json!({ "skipped": msg }),
        Err(e) => return Err(e),
    };
    Ok(NonlinearRun {
        times: res.times,
        order_parameter: res.order_parameter,
        diagnostics: res.diagnostics.iter().map(|d| (d.t, d.running)).collect(),
        recurrence_horizon: t_rec,
        horizon,
        scattering,
    })
}

fn nonlinear(cfg: NonlinearConfig) -> Result<Vec<Artifact>> {
    let run = run_nonlinear(&cfg)?;
    let mut r = Csv::new(&format!("t,Re(R),Im(R),abs(R),(1+t)^{}*abs(R)", cfg.n));
    for (t, z) in run.times.iter().zip(&run.order_parameter) {
        r.row(&[*t, z.re, z.im, z.norm(), (1.0 + t).powi(cfg.n) * z.norm()]);
    }
    let mut d = Csv::new("t,M1,M2,M3");
    for (t, m) in &run.diagnostics {
        d.row(&[*t, m[0], m[1], m[2]]);
    }
    let body = json!({
        "recurrenceHorizon": run.recurrence_horizon,
        "horizon": run.horizon,
        "clamped": run.horizon < cfg.horizon,
        "scattering": run.scattering,
    });
    Ok(vec![
        r.artifact("R.csv"),
        d.artifact("diagnostics.csv"),
        Artifact::json("scattering.json", &with_header(&cfg, ExperimentKind::Nonlinear, body)),
        sidecar(&cfg, ExperimentKind::Nonlinear),
    ])
}

// ----------------------------------------------------------------- finite-n

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SamplingMode {
    Quantile,
    Seeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FiniteNConfig {
    #[serde(default = "current_version")]
    pub format_version: u32,
    pub distribution: DistributionSpec,
    #[serde(rename = "N")]
    pub oscillators: usize,
    #[serde(rename = "K")]
    pub coupling: f64,
    pub epsilon: f64,
    pub sampling: SamplingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Defaults to every step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_every: Option<f64>,
    /// Defaults to r(0) = (1/π) cos θ.
    #[serde(default = "cosine_constant")]
    pub initial_perturbation: PerturbationSpec,
    /// Continuum run to compare against; produces comparison artifacts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuum: Option<NonlinearConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn cosine_constant() -> PerturbationSpec {
    PerturbationSpec::cosine(Profile::Constant)
}

fn run_finite_n(cfg: &FiniteNConfig) -> Result<Vec<(f64, Complex64)>> {
    positive("dt", cfg.dt)?;
    positive("T", cfg.horizon)?;
    let sampling = match (cfg.sampling, cfg.seed) {
        (SamplingMode::Quantile, None) => Sampling::Quantile,
        (SamplingMode::Seeded, Some(seed)) => Sampling::Seeded(seed),
        (SamplingMode::Quantile, Some(_)) => return Err(Error::Config("seed given with quantile sampling".into())),
        (SamplingMode::Seeded, None) => return Err(Error::Config("seeded sampling needs a seed".into())),
    };
    let dist = FrequencyDistribution::try_from(cfg.distribution.clone())?;
    let mut state =
        sample_oscillators(&dist, cfg.oscillators, sampling, &cfg.initial_perturbation, cfg.epsilon, cfg.coupling)?;
    let every = cfg.output_every.unwrap_or(cfg.dt);
    positive("outputEvery", every)?;
    state.run(cfg.dt, cfg.horizon, every)
}

fn finite_n(cfg: FiniteNConfig) -> Result<Vec<Artifact>> {
    if let Some(c) = &cfg.continuum {
        check_comparable(c, &cfg)?;
    }
    let z = run_finite_n(&cfg)?;
    let mut csv = Csv::new("t,Re(Z),Im(Z),abs(Z)");
    for (t, v) in &z {
        csv.row(&[*t, v.re, v.im, v.norm()]);
    }
    let mut out = vec![csv.artifact("finite_n.csv"), sidecar(&cfg, ExperimentKind::FiniteN)];
    if let Some(c) = &cfg.continuum {
        let run = run_nonlinear(c)?;
        out.extend(comparison(&cfg, ExperimentKind::FiniteN, c, &run, &z)?);
    }
    Ok(out)
}

// ------------------------------------------------------------------ compare

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default = "current_version")]
    pub format_version: u32,
    pub continuum: NonlinearConfig,
    pub finite_n: FiniteNConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn check_comparable(c: &NonlinearConfig, f: &FiniteNConfig) -> Result<()> {
    let mut bad = Vec::new();
    if c.distribution != f.distribution {
        bad.push("distribution");
    }
    if c.coupling != f.coupling {
        bad.push("K");
    }
    if c.epsilon != f.epsilon {
        bad.push("epsilon");
    }
    if c.horizon != f.horizon {
        bad.push("T");
    }
    if c.initial_perturbation != f.initial_perturbation {
        bad.push("initialPerturbation");
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::MismatchedConfigs(format!("differing fields: {}", bad.join(", "))))
    }
}

fn compare(cfg: CompareConfig) -> Result<Vec<Artifact>> {
    if cfg.finite_n.continuum.is_some() {
        return Err(Error::Config("finiteN.continuum is not allowed inside compare".into()));
    }
    check_comparable(&cfg.continuum, &cfg.finite_n)?;
    let run = run_nonlinear(&cfg.continuum)?;
    let z = run_finite_n(&cfg.finite_n)?;
    comparison(&cfg, ExperimentKind::Compare, &cfg.continuum, &run, &z)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CompareSummary {
    sup_difference: f64,
    /// sup |Z_N − ε R̄| / (ε |R(0)|).
    sup_relative: f64,
    compared_times: usize,
    horizon: f64,
    recurrence_horizon: f64,
}

/// Z_N is matched against ε·conj(R): the continuum order parameter is
/// ∫∫ e^{−iθ} r, the empirical one averages e^{+iθ}.
fn comparison(
    cfg: &impl Serialize,
    kind: ExperimentKind,
    continuum: &NonlinearConfig,
    run: &NonlinearRun,
    z: &[(f64, Complex64)],
) -> Result<Vec<Artifact>> {
    let eps = continuum.epsilon;
    let mut csv = Csv::new("t,Re(Z),Im(Z),Re(eps*conj(R)),Im(eps*conj(R)),abs(diff)");
    let mut sup: f64 = 0.0;
    let mut count = 0;
    let mut j = 0;
    for (t, zn) in z {
        while j < run.times.len() && run.times[j] < t - 1e-9 {
            j += 1;
        }
        if j == run.times.len() {
            break;
        }
        if (run.times[j] - t).abs() > 1e-9 {
            continue;
        }
        let pred = run.order_parameter[j].conj() * eps;
        let diff = (zn - pred).norm();
        sup = sup.max(diff);
        count += 1;
        csv.row(&[*t, zn.re, zn.im, pred.re, pred.im, diff]);
    }
    if count == 0 {
        return Err(Error::MismatchedConfigs("runs share no output times".into()));
    }
    let summary = CompareSummary {
        sup_difference: sup,
        sup_relative: sup / (eps * run.order_parameter[0].norm()),
        compared_times: count,
        horizon: run.horizon,
        recurrence_horizon: run.recurrence_horizon,
    };
    Ok(vec![csv.artifact("comparison.csv"), Artifact::json("compare_summary.json", &with_header(cfg, kind, summary))])
}
