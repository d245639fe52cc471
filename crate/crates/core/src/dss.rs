//! DSS identification loop.
//!
//! Starting from a linear frequency-domain fit, the loop alternates two steps:
//! rebuild `f` from the scatter `(x_measured(t), f_n(x_n(t)))`, where `x_n` is
//! the current model's response to the recorded input, then refit the dynamic
//! coefficients with `f` frozen. Derivatives are only ever taken from the
//! simulated model state; the measurement is never differentiated.

use crate::error::{Error, Result};
use crate::fit::{
    fit_linear_freq, fit_monotone, fit_third_order_freq, refit_dynamics, time_domain_residual,
    FitOptions, FitWindow, MinimizeOptions, OddPolyFamily,
};
use crate::harmonic::FrequencyResponsePoint;
use crate::model::{grid, Nonlinearity, Order, PlantModel};
use crate::sim::{default_rk_step, integrate, simulate, SignalSpec, SimOptions, TimeSeries};

/// Points on the reported DSS static curve.
pub const CURVE_POINTS: usize = 201;

/// Loop settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DssConfig {
    pub order: Order,
    pub max_iter: usize,
    /// Bound on `Σ |Δθ_i| / θ_i` over the dynamic coefficients.
    pub param_tol: f64,
    /// Bound on `sup |f_{n+1} − f_n|` over `[-FS, FS]`, relative to `f_n(FS)`.
    pub f_tol: f64,
    /// Odd degree of the fitted nonlinearity.
    pub degree: u32,
    /// Half-width of the operating range of `x`.
    pub full_scale: f64,
    /// `None` picks [`default_rk_step`] for the initial plant.
    pub rk_step: Option<f64>,
    /// `None` uses the whole record.
    pub window: Option<FitWindow>,
    /// A step whose residual exceeds `reject_factor ×` the previous one is rejected.
    pub reject_factor: f64,
    pub minimize: MinimizeOptions,
}

impl Default for DssConfig {
    fn default() -> Self {
        Self {
            order: Order::Second,
            max_iter: 20,
            param_tol: 1e-4,
            f_tol: 1e-3,
            degree: 7,
            full_scale: 1.0,
            rk_step: None,
            window: None,
            reject_factor: 1.1,
            minimize: MinimizeOptions::default(),
        }
    }
}

impl DssConfig {
    pub fn validate(&self) -> Result<()> {
        OddPolyFamily::new(self.degree, 1.0)?;
        if self.max_iter == 0 {
            return Err(Error::invalid("dss.max_iter", "must be >= 1"));
        }
        for (name, v) in [
            ("dss.param_tol", self.param_tol),
            ("dss.f_tol", self.f_tol),
            ("dss.full_scale", self.full_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.reject_factor.is_finite() && self.reject_factor >= 1.0) {
            return Err(Error::invalid(
                "dss.reject_factor",
                format!("must be >= 1, got {}", self.reject_factor),
            ));
        }
        if let Some(h) = self.rk_step {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::invalid(
                    "dss.rk_step",
                    format!("must be > 0, got {h}"),
                ));
            }
        }
        Ok(())
    }
}

/// One line of the iteration log.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    /// `[A, B]` or `[A, B, C]`.
    pub dynamic: Vec<f64>,
    pub residual: f64,
}

/// Current iterate of the loop. Each step returns a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct DssState {
    pub n: usize,
    pub order: Order,
    pub dynamic: Vec<f64>,
    pub f: Nonlinearity,
    /// Time-domain objective at `(dynamic, f)`.
    pub residual: f64,
    /// Integration step used for every model simulation of this run.
    pub rk_step: f64,
    pub history: Vec<IterationRecord>,
}

impl DssState {
    pub fn a(&self) -> f64 {
        self.dynamic[0]
    }

    pub fn b(&self) -> f64 {
        self.dynamic[1]
    }

    pub fn plant(&self) -> Result<PlantModel> {
        PlantModel::from_dynamic(self.order, &self.dynamic, self.f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveSource {
    Lissajous,
    DssCorrected,
}

impl CurveSource {
    pub fn name(&self) -> &'static str {
        match self {
            CurveSource::Lissajous => "lissajous",
            CurveSource::DssCorrected => "dss_corrected",
        }
    }
}

/// Static characteristic as `(x, u)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticCurve {
    pub points: Vec<(f64, f64)>,
    pub source: CurveSource,
}

impl StaticCurve {
    /// `(x, f(x))` on an even grid over `[lo, hi]`.
    pub fn from_nonlinearity(f: &Nonlinearity, lo: f64, hi: f64, n: usize) -> Self {
        let n = n.max(2);
        let points = (0..n)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                (x, f.eval(x))
            })
            .collect();
        Self {
            points,
            source: CurveSource::DssCorrected,
        }
    }

    /// Raw `(x_k, u_k)` record; consecutive duplicates are dropped.
    pub fn from_lissajous(u: &TimeSeries, x: &TimeSeries) -> Result<Self> {
        u.check_same_grid(x)?;
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(u.len());
        for (&uk, &xk) in u.values().iter().zip(x.values()) {
            if points.last() != Some(&(xk, uk)) {
                points.push((xk, uk));
            }
        }
        Ok(Self {
            points,
            source: CurveSource::Lissajous,
        })
    }

    /// `max |x − f_true⁻¹(u)| / FS` over points with `|x| <= FS`.
    pub fn sup_error(&self, truth: &Nonlinearity, full_scale: f64) -> Result<f64> {
        let bound = 4.0 * full_scale.max(truth.x_max());
        let mut worst = 0.0f64;
        for &(x, u) in &self.points {
            if x.abs() > full_scale * (1.0 + 1e-12) {
                continue;
            }
            let x_true = truth.invert_within(u, bound)?;
            worst = worst.max((x - x_true).abs() / full_scale);
        }
        Ok(worst)
    }

    /// Spread of `x` where `u` crosses zero; zero for a single-valued curve.
    pub fn loop_width(&self) -> f64 {
        let crossings: Vec<f64> = self
            .points
            .windows(2)
            .filter_map(|w| {
                let ((x0, u0), (x1, u1)) = (w[0], w[1]);
                if u0 == 0.0 {
                    Some(x0)
                } else if u0 * u1 < 0.0 {
                    Some(x0 + (x1 - x0) * u0 / (u0 - u1))
                } else {
                    None
                }
            })
            .collect();
        let lo = crossings.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = crossings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if crossings.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    /// True when `u` is non-decreasing in sorted `x`, within `tol`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.windows(2).all(|w| w[1].1 >= w[0].1 - tol)
    }
}

/// Result of [`dss_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct DssOutcome {
    pub plant: PlantModel,
    pub curve: StaticCurve,
    pub state: DssState,
    pub converged: bool,
}

/// Initial guess for a third-order run.
#[derive(Debug, Clone, PartialEq)]
pub enum ThirdOrderInit {
    /// Fit `1/(A s³ + B s² + C s + K)` to the points.
    Frequency(Vec<FrequencyResponsePoint>),
    Explicit {
        a: f64,
        b: f64,
        c: Option<f64>,
        stiffness: f64,
    },
}

struct Setup {
    family: OddPolyFamily,
    window: FitWindow,
}

fn setup(x: &TimeSeries, config: &DssConfig) -> Result<Setup> {
    config.validate()?;
    let x_max = config.full_scale.max(x.max_abs());
    Ok(Setup {
        family: OddPolyFamily::new(config.degree, x_max)?,
        window: config.window.unwrap_or_else(|| FitWindow::full(x)),
    })
}

fn initial_state(
    u: &TimeSeries,
    x: &TimeSeries,
    dynamic: Vec<f64>,
    stiffness: f64,
    config: &DssConfig,
) -> Result<DssState> {
    u.check_same_grid(x)?;
    let s = setup(x, config)?;
    let f = Nonlinearity::linear(stiffness, s.family.x_max)?;
    let plant = PlantModel::from_dynamic(config.order, &dynamic, f)?;
    let rk_step = config
        .rk_step
        .unwrap_or_else(|| default_rk_step(&plant, u.dt()));
    let residual = time_domain_residual(&plant, u, x, &s.window, rk_step)?;
    Ok(DssState {
        n: 0,
        order: config.order,
        history: vec![IterationRecord {
            n: 0,
            dynamic: dynamic.clone(),
            residual,
        }],
        dynamic,
        f,
        residual,
        rk_step,
    })
}

/// State 0: dynamic coefficients from the frequency fit and `f_0(x) = K x`.
///
/// Order 2 uses `1/(A s² + B s + C)`; order 3 uses `1/(A s³ + B s² + C s + K)`.
pub fn dss_init(
    u: &TimeSeries,
    x: &TimeSeries,
    freq_points: &[FrequencyResponsePoint],
    config: &DssConfig,
) -> Result<DssState> {
    match config.order {
        Order::Second => {
            let p = fit_linear_freq(freq_points)?;
            initial_state(u, x, vec![p.a, p.b], p.c, config)
        }
        Order::Third => {
            let [a, b, c, k] = fit_third_order_freq(freq_points)?;
            initial_state(u, x, vec![a, b, c], k, config)
        }
    }
}

/// Pairs `(x_measured(t_k), f_n(x_n(t_k)))` over the whole record, where
/// `x_n` is the current model's response to `u` from rest.
pub fn dynamic_correction(
    state: &DssState,
    u: &TimeSeries,
    x: &TimeSeries,
) -> Result<Vec<(f64, f64)>> {
    u.check_same_grid(x)?;
    let plant = state.plant()?;
    let xn = integrate(&plant, u, state.rk_step, u.len())?;
    Ok(x.values()
        .iter()
        .zip(&xn)
        .map(|(&xm, &xs)| (xm, state.f.eval(xs)))
        .collect())
}

/// One DSS iteration: refit `f`, then the dynamic coefficients with `f` frozen.
///
/// Returns [`Error::Stagnation`] when the new residual exceeds
/// `config.reject_factor` times the old one.
pub fn dss_step(
    state: &DssState,
    u: &TimeSeries,
    x: &TimeSeries,
    config: &DssConfig,
) -> Result<DssState> {
    u.check_same_grid(x)?;
    let s = setup(x, config)?;
    let range = x.window_indices(s.window.tau1, s.window.tau2);
    let pairs = dynamic_correction(state, u, x)?;
    let f_next = fit_monotone(&pairs[range], &s.family)?;

    let opts = FitOptions {
        rk_step: state.rk_step,
        minimize: config.minimize.clone(),
    };
    let refit = refit_dynamics(u, x, &f_next, state.order, &s.window, &state.dynamic, &opts)?;

    let mut history = state.history.clone();
    history.push(IterationRecord {
        n: state.n + 1,
        dynamic: refit.params.clone(),
        residual: refit.objective,
    });
    let next = DssState {
        n: state.n + 1,
        order: state.order,
        dynamic: refit.params,
        f: f_next,
        residual: refit.objective,
        rk_step: state.rk_step,
        history,
    };
    // Residuals at roundoff level are never grounds for rejection.
    let floor = 1e-15
        * x.values()[x.window_indices(s.window.tau1, s.window.tau2)]
            .iter()
            .map(|v| v * v)
            .sum::<f64>();
    if next.residual > config.reject_factor * state.residual + floor {
        return Err(Error::Stagnation {
            previous: state.residual,
            rejected: next.residual,
            previous_state: Box::new(state.clone()),
            rejected_state: Box::new(next),
        });
    }
    Ok(next)
}

fn converged(prev: &DssState, next: &DssState, config: &DssConfig) -> bool {
    let dtheta: f64 = prev
        .dynamic
        .iter()
        .zip(&next.dynamic)
        .map(|(p, q)| (q - p).abs() / p.abs())
        .sum();
    let fs = config.full_scale;
    let df = grid(fs)
        .map(|x| (next.f.eval(x) - prev.f.eval(x)).abs())
        .fold(0.0, f64::max);
    dtheta < config.param_tol && df < config.f_tol * prev.f.eval(fs).abs()
}

/// Runs [`dss_step`] from [`dss_init`] until converged or `config.max_iter`.
///
/// A rejected step or the iteration cap ends the run with `converged = false`
/// and the lowest-residual state seen.
pub fn dss_run(
    u: &TimeSeries,
    x: &TimeSeries,
    freq_points: &[FrequencyResponsePoint],
    config: &DssConfig,
) -> Result<DssOutcome> {
    let init = dss_init(u, x, freq_points, config)?;
    iterate(init, u, x, config)
}

/// Third-order run; `config.order` must be [`Order::Third`].
pub fn dss_run_third_order(
    u: &TimeSeries,
    x: &TimeSeries,
    init: &ThirdOrderInit,
    config: &DssConfig,
) -> Result<DssOutcome> {
    if config.order != Order::Third {
        return Err(Error::Configuration(format!(
            "third-order run requested with dss.order = {}",
            config.order.as_u8()
        )));
    }
    let state = match init {
        ThirdOrderInit::Frequency(points) => dss_init(u, x, points, config)?,
        ThirdOrderInit::Explicit { a, b, c, stiffness } => {
            let c = c.ok_or_else(|| {
                Error::Configuration("third-order run needs a starting C coefficient".into())
            })?;
            initial_state(u, x, vec![*a, *b, c], *stiffness, config)?
        }
    };
    iterate(state, u, x, config)
}

fn iterate(
    mut state: DssState,
    u: &TimeSeries,
    x: &TimeSeries,
    config: &DssConfig,
) -> Result<DssOutcome> {
    let mut done = false;
    while state.n < config.max_iter {
        match dss_step(&state, u, x, config) {
            Ok(next) => {
                done = converged(&state, &next, config);
                log::debug!(
                    "dss n={} dynamic={:?} residual={:e}",
                    next.n,
                    next.dynamic,
                    next.residual
                );
                state = next;
                if done {
                    break;
                }
            }
            Err(Error::Stagnation {
                previous,
                rejected,
                mut previous_state,
                rejected_state,
            }) => {
                log::warn!(
                    "dss step {} rejected: residual {previous:e} -> {rejected:e}",
                    rejected_state.n
                );
                previous_state.history = rejected_state.history;
                state = *previous_state;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let plant = state.plant()?;
    let curve = corrected_curve(&state, x, config.full_scale);
    Ok(DssOutcome {
        plant,
        curve,
        state,
        converged: done,
    })
}

/// `(x, f(x))` over the measured range clipped to `[-FS, FS]`.
pub fn corrected_curve(state: &DssState, x: &TimeSeries, full_scale: f64) -> StaticCurve {
    let lo = x
        .values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(-full_scale);
    let hi = x
        .values()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .min(full_scale);
    let (lo, hi) = if lo < hi {
        (lo, hi)
    } else {
        (-full_scale, full_scale)
    };
    StaticCurve::from_nonlinearity(&state.f, lo, hi, CURVE_POINTS)
}

/// Identification input: a staircase through `levels` (input values), each
/// held for `dwell`, plus `amplitude · sin(omega t)`.
pub fn staircase_excitation(levels: &[f64], dwell: f64, amplitude: f64, omega: f64) -> SignalSpec {
    let steps = levels
        .iter()
        .enumerate()
        .map(|(i, &l)| (dwell * i as f64, l))
        .collect();
    SignalSpec::Sum(vec![
        SignalSpec::Multistep {
            amplitude: 1.0,
            step_levels: steps,
        },
        SignalSpec::Harmonic {
            amplitude,
            frequency: omega / (2.0 * std::f64::consts::PI),
        },
    ])
}

/// Raw Lissajous curve of `plant` under `amplitude · sin(ω t)` over `periods` periods.
pub fn lissajous_baseline(
    plant: &PlantModel,
    omega: f64,
    amplitude: f64,
    periods: f64,
    opts: &SimOptions,
) -> Result<StaticCurve> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::invalid("omega", format!("must be > 0, got {omega}")));
    }
    if !(periods.is_finite() && periods > 0.0) {
        return Err(Error::invalid(
            "periods",
            format!("must be > 0, got {periods}"),
        ));
    }
    let spec = SignalSpec::Harmonic {
        amplitude,
        frequency: omega / (2.0 * std::f64::consts::PI),
    };
    let run = SimOptions {
        duration: periods * 2.0 * std::f64::consts::PI / omega,
        ..*opts
    };
    let u = crate::sim::generate_signal(&spec, &run)?;
    let x = simulate(plant, &spec, &run)?;
    StaticCurve::from_lissajous(&u, &x)
}
