//! Config-driven experiment runner behind the `dssid` binary.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dss::{
    dss_run, dss_run_third_order, lissajous_baseline, DssConfig, DssOutcome, StaticCurve,
    ThirdOrderInit,
};
use crate::fit::{fit_linear_freq, FitWindow, MinimizeOptions};
use crate::harmonic::{sweep_frequency_response, FrequencyResponsePoint, SweepOptions};
use crate::model::{Nonlinearity, Order, PlantModel};
use crate::sim::{default_rk_step, generate_signal, simulate, SignalSpec, SimOptions, TimeSeries};

#[derive(Debug, Parser)]
#[command(
    name = "dssid",
    version,
    about = "Identify static and dynamic responses of quasilinear plants"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Input data file (time series, or a frequency response for `fit-linear`).
    #[arg(long = "in", global = true)]
    pub input: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write the simulated input/output time series.
    Simulate,
    /// Write the swept frequency response.
    Freqresp,
    /// Fit `1/(A s² + B s + C)` to a frequency response.
    FitLinear,
    /// Run DSS identification.
    Dss,
    /// Write the raw Lissajous curve.
    Lissajous,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
    #[error("{0}")]
    Model(#[from] crate::Error),
}

impl CliError {
    /// 1 for bad input or I/O, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(e) if !e.is_validation() => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Synthetic mode: the plant that generates the data.
    pub plant: Option<PlantConfig>,
    /// Data mode: time-series CSV, relative to the config file.
    pub input: Option<PathBuf>,
    /// Frequency-response CSV used instead of a sweep, relative to the config file.
    pub freq_response: Option<PathBuf>,
    pub signal: Option<SignalConfig>,
    #[serde(default)]
    pub sim: SimConfig,
    /// Sweep frequencies in rad/s.
    #[serde(default)]
    pub frequencies: Vec<f64>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub dss: DssSection,
    pub lissajous: Option<LissajousConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub order: u8,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub f: NonlinearityConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub family: String,
    pub coeffs: Vec<f64>,
    pub x_max: f64,
}

impl NonlinearityConfig {
    fn build(&self) -> crate::Result<Nonlinearity> {
        if self.family != "odd_poly" {
            return Err(crate::Error::Configuration(format!(
                "f.family: unknown family `{}` (expected `odd_poly`)",
                self.family
            )));
        }
        Nonlinearity::odd_poly(&self.coeffs, self.x_max)
    }

    fn from_nonlinearity(f: &Nonlinearity) -> Self {
        Self {
            family: f.family().name().to_string(),
            coeffs: f.coeffs().to_vec(),
            x_max: f.x_max(),
        }
    }
}

impl PlantConfig {
    fn build(&self) -> crate::Result<PlantModel> {
        let f = self.f.build()?;
        match Order::from_u8(self.order)? {
            Order::Second => {
                if self.c.is_some() {
                    return Err(crate::Error::Configuration(
                        "plant.C: only used for order 3; order 2 takes C = f'(0)".into(),
                    ));
                }
                PlantModel::second_order(self.a, self.b, f)
            }
            Order::Third => {
                let c = self.c.ok_or_else(|| {
                    crate::Error::Configuration("plant.C: required for order 3".into())
                })?;
                PlantModel::third_order(self.a, self.b, c, f)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalConfig {
    Step {
        amplitude: f64,
    },
    Harmonic {
        amplitude: f64,
        /// Hz.
        frequency: f64,
    },
    Multistep {
        amplitude: f64,
        /// `[time, level]` pairs.
        step_levels: Vec<[f64; 2]>,
    },
    Sum {
        components: Vec<SignalConfig>,
    },
}

impl SignalConfig {
    pub fn to_spec(&self) -> SignalSpec {
        match self {
            SignalConfig::Step { amplitude } => SignalSpec::Step {
                amplitude: *amplitude,
            },
            SignalConfig::Harmonic {
                amplitude,
                frequency,
            } => SignalSpec::Harmonic {
                amplitude: *amplitude,
                frequency: *frequency,
            },
            SignalConfig::Multistep {
                amplitude,
                step_levels,
            } => SignalSpec::Multistep {
                amplitude: *amplitude,
                step_levels: step_levels.iter().map(|p| (p[0], p[1])).collect(),
            },
            SignalConfig::Sum { components } => {
                SignalSpec::Sum(components.iter().map(SignalConfig::to_spec).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
    pub duration: Option<f64>,
    /// Defaults to `min(sample_dt, T_char/50)`.
    pub rk_step: Option<f64>,
    #[serde(default)]
    pub noise_sigma: f64,
}

fn default_sample_dt() -> f64 {
    0.01
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sample_dt: default_sample_dt(),
            duration: None,
            rk_step: None,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_sweep_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_sweep_dt")]
    pub sample_dt: f64,
}

fn default_sweep_amplitude() -> f64 {
    1.0
}

fn default_sweep_dt() -> f64 {
    0.005
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            amplitude: default_sweep_amplitude(),
            sample_dt: default_sweep_dt(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DssSection {
    #[serde(default = "default_order")]
    pub order: u8,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_param_tol")]
    pub param_tol: f64,
    #[serde(default = "default_f_tol")]
    pub f_tol: f64,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default = "default_full_scale")]
    pub full_scale: f64,
    #[serde(default = "default_reject")]
    pub reject_factor: f64,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    /// Explicit third-order start instead of the frequency fit.
    pub start: Option<StartConfig>,
}

fn default_order() -> u8 {
    2
}
fn default_max_iter() -> usize {
    20
}
fn default_param_tol() -> f64 {
    1e-4
}
fn default_f_tol() -> f64 {
    1e-3
}
fn default_degree() -> u32 {
    7
}
fn default_full_scale() -> f64 {
    1.0
}
fn default_reject() -> f64 {
    1.1
}

impl Default for DssSection {
    fn default() -> Self {
        Self {
            order: default_order(),
            max_iter: default_max_iter(),
            param_tol: default_param_tol(),
            f_tol: default_f_tol(),
            degree: default_degree(),
            full_scale: default_full_scale(),
            reject_factor: default_reject(),
            tau1: None,
            tau2: None,
            start: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub stiffness: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LissajousConfig {
    /// rad/s.
    pub omega: f64,
    pub amplitude: f64,
    pub periods: f64,
}

impl DssSection {
    fn to_config(&self, rk_step: Option<f64>) -> crate::Result<DssConfig> {
        let window = match (self.tau1, self.tau2) {
            (None, None) => None,
            (Some(t1), Some(t2)) => Some(FitWindow::new(t1, t2)?),
            _ => {
                return Err(crate::Error::Configuration(
                    "dss.tau1 and dss.tau2 must be given together".into(),
                ))
            }
        };
        let cfg = DssConfig {
            order: Order::from_u8(self.order)?,
            max_iter: self.max_iter,
            param_tol: self.param_tol,
            f_tol: self.f_tol,
            degree: self.degree,
            full_scale: self.full_scale,
            rk_step,
            window,
            reject_factor: self.reject_factor,
            minimize: MinimizeOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses a config file; syntax and unknown-key errors carry the line.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, path)
}

pub fn parse_config(text: &str, path: &Path) -> CliResult<ExperimentConfig> {
    toml::from_str(text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })
}

/// Writes to a temporary sibling, then renames over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(io)?;
    file.write_all(contents).map_err(io)?;
    file.sync_all().map_err(io)?;
    drop(file);
    fs::rename(&tmp, path).map_err(io)
}

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn time_series_csv(u: &TimeSeries, x: &TimeSeries) -> String {
    let mut s = String::from("t,u,x\n");
    for k in 0..u.len() {
        let _ = writeln!(
            s,
            "{},{},{}",
            num(u.time(k)),
            num(u.values()[k]),
            num(x.values()[k])
        );
    }
    s
}

pub fn freq_response_csv(points: &[FrequencyResponsePoint]) -> String {
    let mut s = String::from("omega,gain_re,gain_im,amplitude,phase\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            num(p.omega),
            num(p.gain.re),
            num(p.gain.im),
            num(p.amplitude),
            num(p.phase)
        );
    }
    s
}

pub fn static_curve_csv(curve: &StaticCurve) -> String {
    let mut s = String::from("x,u,source\n");
    for (x, u) in &curve.points {
        let _ = writeln!(s, "{},{},{}", num(*x), num(*u), curve.source.name());
    }
    s
}

fn read_table(path: &Path, header: &[&str]) -> CliResult<Vec<Vec<f64>>> {
    let data = |message: String| CliError::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => data(format!("{other:?}")),
    })?;
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| data(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(data(format!(
            "expected header `{}`, found `{}`",
            header.join(","),
            found.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| data(e.to_string()))?;
        let line = i + 2;
        let row = rec
            .iter()
            .take(header.len())
            .enumerate()
            .map(|(j, field)| {
                if header[j] == "source" {
                    return Ok(f64::NAN);
                }
                field.trim().parse::<f64>().map_err(|_| {
                    data(format!(
                        "line {line}, column `{}`: `{field}` is not a number",
                        header[j]
                    ))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a `t,u,x` table; the grid must be uniform.
pub fn read_time_series(path: &Path) -> CliResult<(TimeSeries, TimeSeries)> {
    let rows = read_table(path, &["t", "u", "x"])?;
    let data = |message: String| CliError::Data {
        path: path.to_path_buf(),
        message,
    };
    if rows.len() < 2 {
        return Err(data(format!(
            "need at least 2 samples, found {}",
            rows.len()
        )));
    }
    let t0 = rows[0][0];
    let dt = rows[1][0] - t0;
    if !(dt > 0.0) {
        return Err(data(format!("time must increase, got dt = {dt}")));
    }
    for (k, r) in rows.iter().enumerate() {
        if (r[0] - (t0 + k as f64 * dt)).abs() > 1e-6 * dt {
            return Err(data(format!(
                "line {}: sample time {} is off the uniform grid",
                k + 2,
                r[0]
            )));
        }
    }
    let u = TimeSeries::new(t0, dt, rows.iter().map(|r| r[1]).collect())?;
    let x = TimeSeries::new(t0, dt, rows.iter().map(|r| r[2]).collect())?;
    Ok((u, x))
}

pub fn read_freq_response(path: &Path) -> CliResult<Vec<FrequencyResponsePoint>> {
    let rows = read_table(path, &["omega", "gain_re", "gain_im", "amplitude", "phase"])?;
    Ok(rows
        .iter()
        .map(|r| FrequencyResponsePoint::new(r[0], Complex64::new(r[1], r[2])))
        .collect())
}

/// `(x, u)` pairs of a static-curve table.
pub fn read_static_curve(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    Ok(read_table(path, &["x", "u", "source"])?
        .iter()
        .map(|r| (r[0], r[1]))
        .collect())
}

/// Identified-model file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub order: u8,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none", default)]
    pub c: Option<f64>,
    pub f: NonlinearityConfig,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl ModelFile {
    pub fn from_plant(plant: &PlantModel, diagnostics: Diagnostics) -> Self {
        Self {
            order: plant.order.as_u8(),
            a: plant.linear.a,
            b: plant.linear.b,
            c: (plant.order == Order::Third).then_some(plant.linear.c),
            f: NonlinearityConfig::from_nonlinearity(&plant.f),
            diagnostics,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model file is always representable")
    }
}

struct Context {
    cfg: ExperimentConfig,
    config_path: PathBuf,
    out: PathBuf,
    input: Option<PathBuf>,
}

impl Context {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config_path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    fn config_error(&self, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.config_path.clone(),
            message: message.into(),
        }
    }

    fn plant(&self) -> CliResult<PlantModel> {
        let p = self.cfg.plant.as_ref().ok_or_else(|| {
            self.config_error("missing field `plant` (required in synthetic mode)")
        })?;
        Ok(p.build()?)
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.out.join(name);
        write_atomic(&path, contents.as_bytes())?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    fn sim_options(&self, plant: &PlantModel) -> CliResult<SimOptions> {
        let s = &self.cfg.sim;
        let duration = s
            .duration
            .ok_or_else(|| self.config_error("missing field `sim.duration`"))?;
        let opts = SimOptions {
            rk_step: s
                .rk_step
                .unwrap_or_else(|| default_rk_step(plant, s.sample_dt)),
            sample_dt: s.sample_dt,
            duration,
            seed: self.cfg.seed,
            noise_sigma: s.noise_sigma,
        };
        opts.validate()?;
        Ok(opts)
    }

    fn synthesize(&self, plant: &PlantModel) -> CliResult<(TimeSeries, TimeSeries)> {
        let spec = self
            .cfg
            .signal
            .as_ref()
            .ok_or_else(|| self.config_error("missing field `signal`"))?
            .to_spec();
        let opts = self.sim_options(plant)?;
        Ok((
            generate_signal(&spec, &opts)?,
            simulate(plant, &spec, &opts)?,
        ))
    }

    fn sweep(&self, plant: &PlantModel) -> CliResult<Vec<FrequencyResponsePoint>> {
        if self.cfg.frequencies.is_empty() {
            return Err(crate::Error::invalid("frequencies", "must not be empty").into());
        }
        let sample_dt = self.cfg.sweep.sample_dt;
        let opts = SimOptions {
            rk_step: self
                .cfg
                .sim
                .rk_step
                .unwrap_or_else(|| default_rk_step(plant, sample_dt)),
            sample_dt,
            duration: sample_dt,
            seed: self.cfg.seed,
            noise_sigma: self.cfg.sim.noise_sigma,
        };
        let sweep = SweepOptions {
            amplitude: self.cfg.sweep.amplitude,
            ..Default::default()
        };
        Ok(sweep_frequency_response(
            plant,
            &self.cfg.frequencies,
            &opts,
            &sweep,
        )?)
    }

    /// Frequency points for initialization: the configured table, else a sweep.
    fn freq_points(&self) -> CliResult<Vec<FrequencyResponsePoint>> {
        match &self.cfg.freq_response {
            Some(p) => read_freq_response(&self.resolve(p)),
            None => self.sweep(&self.plant()?),
        }
    }

    /// Measured record: data mode reads the input file, synthetic mode simulates.
    fn record(&self) -> CliResult<(TimeSeries, TimeSeries)> {
        match (&self.input, &self.cfg.plant) {
            (Some(_), Some(_)) => Err(self.config_error(
                "`plant` and `input` are mutually exclusive; remove one (or omit --in)",
            )),
            (Some(path), None) => read_time_series(path),
            (None, Some(_)) => self.synthesize(&self.plant()?),
            (None, None) => Err(self.config_error("one of `plant` or `input` is required")),
        }
    }
}

/// Runs one subcommand and returns the files written.
pub fn run(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let config_path = cli.config.clone().ok_or_else(|| CliError::Config {
        path: PathBuf::from("<none>"),
        message: "--config PATH is required".into(),
    })?;
    let mut cfg = load_config(&config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&cli.out).map_err(|source| CliError::Io {
        path: cli.out.clone(),
        source,
    })?;
    let mut ctx = Context {
        cfg,
        config_path,
        out: cli.out.clone(),
        input: None,
    };
    ctx.input = cli
        .input
        .clone()
        .or_else(|| ctx.cfg.input.as_ref().map(|p| ctx.resolve(p)));

    match cli.command {
        Command::Simulate => {
            if ctx.input.is_some() {
                return Err(ctx.config_error("`simulate` needs a plant, not input data"));
            }
            let plant = ctx.plant()?;
            let (u, x) = ctx.synthesize(&plant)?;
            Ok(vec![ctx.write("timeseries.csv", &time_series_csv(&u, &x))?])
        }
        Command::Freqresp => {
            let plant = ctx.plant()?;
            let pts = ctx.sweep(&plant)?;
            Ok(vec![ctx.write("freqresp.csv", &freq_response_csv(&pts))?])
        }
        Command::FitLinear => {
            let pts = match &cli.input {
                Some(p) => read_freq_response(p)?,
                None => ctx.freq_points()?,
            };
            let p = fit_linear_freq(&pts)?;
            let x_max = ctx.cfg.dss.full_scale;
            let plant = PlantModel::second_order(p.a, p.b, Nonlinearity::linear(p.c, x_max)?)?;
            let residual = crate::fit::freq_objective(&[p.a, p.b, p.c], &pts);
            let model = ModelFile::from_plant(
                &plant,
                Diagnostics {
                    iterations: 0,
                    residual,
                    converged: true,
                },
            );
            Ok(vec![ctx.write("model.toml", &model.to_toml())?])
        }
        Command::Dss => run_dss(&ctx),
        Command::Lissajous => {
            let curve = match (&ctx.input, &ctx.cfg.plant) {
                (Some(path), None) => {
                    let (u, x) = read_time_series(path)?;
                    StaticCurve::from_lissajous(&u, &x)?
                }
                _ => {
                    let plant = ctx.plant()?;
                    let l = ctx
                        .cfg
                        .lissajous
                        .as_ref()
                        .ok_or_else(|| ctx.config_error("missing field `lissajous`"))?;
                    let sample_dt = ctx.cfg.sim.sample_dt;
                    let opts = SimOptions {
                        rk_step: ctx
                            .cfg
                            .sim
                            .rk_step
                            .unwrap_or_else(|| default_rk_step(&plant, sample_dt)),
                        sample_dt,
                        duration: sample_dt,
                        seed: ctx.cfg.seed,
                        noise_sigma: 0.0,
                    };
                    lissajous_baseline(&plant, l.omega, l.amplitude, l.periods, &opts)?
                }
            };
            Ok(vec![ctx.write("lissajous.csv", &static_curve_csv(&curve))?])
        }
    }
}

fn run_dss(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let (u, x) = ctx.record()?;
    let config = ctx.cfg.dss.to_config(ctx.cfg.sim.rk_step)?;
    let outcome: DssOutcome = match config.order {
        Order::Second => dss_run(&u, &x, &ctx.freq_points()?, &config)?,
        Order::Third => {
            let init = match &ctx.cfg.dss.start {
                Some(s) => ThirdOrderInit::Explicit {
                    a: s.a,
                    b: s.b,
                    c: s.c,
                    stiffness: s.stiffness,
                },
                None => ThirdOrderInit::Frequency(ctx.freq_points()?),
            };
            dss_run_third_order(&u, &x, &init, &config)?
        }
    };
    let state = &outcome.state;
    let model = ModelFile::from_plant(
        &outcome.plant,
        Diagnostics {
            iterations: state.n,
            residual: state.residual,
            converged: outcome.converged,
        },
    );

    let dyn_names = match state.order {
        Order::Second => "A,B",
        Order::Third => "A,B,C",
    };
    let mut history = format!("n,{dyn_names},residual\n");
    for r in &state.history {
        let coeffs: Vec<String> = r.dynamic.iter().map(|v| num(*v)).collect();
        let _ = writeln!(history, "{},{},{}", r.n, coeffs.join(","), num(r.residual));
    }

    let mut report = String::new();
    let _ = writeln!(report, "DSS identification report");
    let _ = writeln!(report, "samples: {} at dt = {}", u.len(), u.dt());
    let _ = writeln!(report, "order: {}", state.order.as_u8());
    let _ = writeln!(
        report,
        "converged: {} after {} iterations",
        outcome.converged, state.n
    );
    let _ = writeln!(report, "residual: {:e}", state.residual);
    for (name, v) in ["A", "B", "C"].iter().zip(&state.dynamic) {
        let _ = writeln!(report, "{name} = {v}");
    }
    let _ = writeln!(
        report,
        "f coefficients (c1, c3, c5, c7): {:?}",
        state.f.coeffs()
    );
    if let Some(p) = &ctx.cfg.plant {
        if let Ok(truth) = p.build() {
            if let Ok(err) = outcome.curve.sup_error(&truth.f, config.full_scale) {
                let _ = writeln!(
                    report,
                    "static curve sup error vs configured plant: {err:e} FS"
                );
            }
        }
    }

    Ok(vec![
        ctx.write("model.toml", &model.to_toml())?,
        ctx.write("static_curve.csv", &static_curve_csv(&outcome.curve))?,
        ctx.write("history.csv", &history)?,
        ctx.write("report.txt", &report)?,
    ])
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.verbose { "debug" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
