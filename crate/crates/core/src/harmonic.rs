//! Harmonic analysis of periodic responses and linear frequency responses.
//!
//! The k-th harmonic coefficient of a response is
//!
//! ```text
//! K_k(iω) = (ω / 2π) ∫_{Δt}^{Δt + 2π/ω} x(t) e^{-ikωt} dt
//! ```
//!
//! For `x = R sin(ωt + φ)` this gives `K_1 = (R/2) e^{i(φ - π/2)}`, so `K_1` of
//! the output alone is off from the transfer function by a factor `1/(2i)`.
//! [`measured_gain`] divides by `K_1` of the input, which cancels the factor
//! and yields `K(iω)` exactly on linear plants.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{LinearParams, PlantModel};
use crate::sim::{simulate, SignalSpec, SimOptions, TimeSeries};

/// Minimum number of samples per period accepted by [`harmonic_coefficient`].
pub const MIN_SAMPLES_PER_PERIOD: f64 = 32.0;

/// Default number of periods averaged after settling.
pub const DEFAULT_PERIODS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicCoefficient {
    pub omega: f64,
    pub k: u32,
    pub value: Complex64,
}

/// One point of a measured (or exact) frequency response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyResponsePoint {
    pub omega: f64,
    pub gain: Complex64,
    /// `|gain|`
    pub amplitude: f64,
    /// `arg(gain)` in `(-π, π]`
    pub phase: f64,
}

impl FrequencyResponsePoint {
    pub fn new(omega: f64, gain: Complex64) -> Self {
        Self {
            omega,
            gain,
            amplitude: gain.norm(),
            phase: principal_phase(gain.arg()),
        }
    }
}

fn principal_phase(p: f64) -> f64 {
    if p <= -PI {
        p + 2.0 * PI
    } else {
        p
    }
}

/// Transition time skipped before integrating, and number of whole periods integrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisWindow {
    pub settle_time: f64,
    pub periods: u32,
}

impl AnalysisWindow {
    pub fn new(settle_time: f64, periods: u32) -> Result<Self> {
        let w = Self {
            settle_time,
            periods,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.settle_time.is_finite() && self.settle_time >= 0.0) {
            return Err(Error::Window(format!(
                "settle time must be >= 0, got {}",
                self.settle_time
            )));
        }
        if self.periods < 1 {
            return Err(Error::Window("at least one period is required".into()));
        }
        Ok(())
    }

    /// End of the integration interval for angular frequency `omega`.
    pub fn end(&self, omega: f64) -> f64 {
        self.settle_time + self.periods as f64 * 2.0 * PI / omega
    }
}

/// Trapezoidal estimate of `K_k(iω)`, averaged over `window.periods` periods.
pub fn harmonic_coefficient(
    x: &TimeSeries,
    omega: f64,
    k: u32,
    window: &AnalysisWindow,
) -> Result<HarmonicCoefficient> {
    window.validate()?;
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::invalid("omega", format!("must be > 0, got {omega}")));
    }
    let period = 2.0 * PI / omega;
    let per_period = period / x.dt();
    if per_period < MIN_SAMPLES_PER_PERIOD {
        return Err(Error::Window(format!(
            "{per_period:.1} samples per period at omega = {omega}; need sample interval <= {:e}",
            period / MIN_SAMPLES_PER_PERIOD
        )));
    }
    let eps = 1e-9 * x.dt();
    // The window opens on the first sample at or after the settle time.
    let start = if window.settle_time <= x.t0() {
        window.settle_time
    } else {
        x.t0() + ((window.settle_time - x.t0() - eps) / x.dt()).ceil() * x.dt()
    };
    let end = start + window.periods as f64 * period;
    if start < x.t0() - eps || end > x.end_time() + eps {
        return Err(Error::Window(format!(
            "record covers [{}, {}] but analysis needs [{start}, {end}] (duration {})",
            x.t0(),
            x.end_time(),
            end - x.t0()
        )));
    }

    let kw = k as f64 * omega;
    let g = |t: f64, v: f64| Complex64::from_polar(v, -kw * t);

    let idx = x.window_indices(start + eps, end - eps);
    let mut prev_t = start;
    let mut prev = g(start, x.value_at(start));
    let mut acc = Complex64::new(0.0, 0.0);
    for i in idx {
        let t = x.time(i);
        let cur = g(t, x.values()[i]);
        acc += (cur + prev) * (0.5 * (t - prev_t));
        prev_t = t;
        prev = cur;
    }
    let last = g(end, x.value_at(end));
    acc += (last + prev) * (0.5 * (end - prev_t));

    Ok(HarmonicCoefficient {
        omega,
        k,
        value: acc / (end - start),
    })
}

/// Ratio of the first harmonics of output and input.
pub fn measured_gain(
    u: &TimeSeries,
    x: &TimeSeries,
    omega: f64,
    window: &AnalysisWindow,
) -> Result<FrequencyResponsePoint> {
    u.check_same_grid(x)?;
    let ku = harmonic_coefficient(u, omega, 1, window)?.value;
    if ku.norm() < 1e-12 {
        return Err(Error::DegenerateInput {
            magnitude: ku.norm(),
        });
    }
    let kx = harmonic_coefficient(x, omega, 1, window)?.value;
    Ok(FrequencyResponsePoint::new(omega, kx / ku))
}

/// `K(iω) = 1 / (A(iω)² + B(iω) + C)`.
pub fn eval_transfer(params: &LinearParams, omega: f64) -> Result<Complex64> {
    eval_transfer_poly(&params.as_array(), omega)
}

/// `1 / p(iω)` for a denominator polynomial given highest power first.
pub fn eval_transfer_poly(den: &[f64], omega: f64) -> Result<Complex64> {
    let s = Complex64::new(0.0, omega);
    let d = den
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c);
    if d.norm() < 1e-300 {
        return Err(Error::Singularity { omega });
    }
    Ok(d.inv())
}

/// Settling delay `max(8/|Re λ_slow|, 2·2π/ω)` and four analysis periods.
pub fn settle_window(params: &LinearParams, omega: f64) -> Result<AnalysisWindow> {
    params.validate()?;
    let stab = crate::model::check_stability(params)?;
    Ok(settle_window_from_slowest(stab.slowest().re, omega))
}

/// Settling window for any plant, based on the slowest root of its linearization.
pub fn settle_window_for_plant(plant: &PlantModel, omega: f64) -> Result<AnalysisWindow> {
    plant.validate()?;
    let slowest = plant.slowest_decay();
    if slowest >= 0.0 {
        let l = plant.linear;
        return Err(Error::Unstable {
            a: l.a,
            b: l.b,
            c: l.c,
        });
    }
    Ok(settle_window_from_slowest(slowest, omega))
}

fn settle_window_from_slowest(re: f64, omega: f64) -> AnalysisWindow {
    AnalysisWindow {
        settle_time: (8.0 / re.abs()).max(2.0 * 2.0 * PI / omega),
        periods: DEFAULT_PERIODS,
    }
}

/// How a frequency sweep picks its analysis window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowPolicy {
    /// [`settle_window_for_plant`] per frequency.
    Settle,
    /// `settle_window` scaled by a factor, with the given number of periods.
    Scaled {
        factor: f64,
        periods: u32,
    },
    Fixed(AnalysisWindow),
}

/// Sweep settings. The default window doubles the [`settle_window`] delay:
/// at `8/|Re λ|` a repeated slow root still leaks about 2e-3 of relative
/// transient into high-frequency gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Amplitude of the harmonic test input.
    pub amplitude: f64,
    pub window: WindowPolicy,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            window: WindowPolicy::Scaled {
                factor: 2.0,
                periods: DEFAULT_PERIODS,
            },
        }
    }
}

/// Simulates a harmonic sub-test per frequency and measures the gain.
///
/// `opts.duration` is ignored; each sub-test runs exactly as long as its
/// window needs. Noise seeds are `opts.seed + index`.
pub fn sweep_frequency_response(
    plant: &PlantModel,
    omegas: &[f64],
    opts: &SimOptions,
    sweep: &SweepOptions,
) -> Result<Vec<FrequencyResponsePoint>> {
    if let Some(bad) = omegas.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::invalid(
            "frequencies",
            format!("must be > 0, got {bad}"),
        ));
    }
    let mut sorted = omegas.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("frequencies", "must be distinct"));
    }

    let results: Vec<Result<FrequencyResponsePoint>> = omegas
        .par_iter()
        .enumerate()
        .map(|(i, &omega)| {
            sweep_point(plant, omega, opts, sweep, i as u64).map_err(|e| Error::AtFrequency {
                omega,
                source: Box::new(e),
            })
        })
        .collect();
    results.into_iter().collect()
}

fn sweep_point(
    plant: &PlantModel,
    omega: f64,
    opts: &SimOptions,
    sweep: &SweepOptions,
    index: u64,
) -> Result<FrequencyResponsePoint> {
    let window = match sweep.window {
        WindowPolicy::Settle => settle_window_for_plant(plant, omega)?,
        WindowPolicy::Scaled { factor, periods } => {
            let w = settle_window_for_plant(plant, omega)?;
            AnalysisWindow::new(w.settle_time * factor, periods)?
        }
        WindowPolicy::Fixed(w) => w,
    };
    let spec = SignalSpec::Harmonic {
        amplitude: sweep.amplitude,
        frequency: omega / (2.0 * PI),
    };
    let run = SimOptions {
        duration: window.end(omega) + 2.0 * opts.sample_dt,
        seed: opts.seed.wrapping_add(index),
        ..*opts
    };
    let u = crate::sim::generate_signal(&spec, &run)?;
    let x = simulate(plant, &spec, &run)?;
    measured_gain(&u, &x, omega, &window)
}

/// Points of the exact linear response at each frequency.
pub fn exact_response(
    params: &LinearParams,
    omegas: &[f64],
) -> Result<Vec<FrequencyResponsePoint>> {
    omegas
        .iter()
        .map(|&w| eval_transfer(params, w).map(|g| FrequencyResponsePoint::new(w, g)))
        .collect()
}

/// `n` logarithmically spaced points over `[lo, hi]`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// 24 log-spaced frequencies over `[0.05, 20]·ω_nat`.
pub fn default_frequency_grid(plant: &PlantModel) -> Vec<f64> {
    let wn = plant.natural_frequency();
    log_space(0.05 * wn, 20.0 * wn, 24)
}
