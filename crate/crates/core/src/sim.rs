//! Virtual test bench: test signals, fixed-step RK4 integration of the plant,
//! sampling and measurement noise.
//!
//! The plant is always driven by the *sampled* input, reconstructed by linear
//! interpolation between samples. Re-simulating a model from a recorded input
//! therefore sees exactly the excitation the recording was made with.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::PlantModel;

/// Uniformly sampled record starting at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("t0", "must be finite"));
        }
        if values.is_empty() {
            return Err(Error::InsufficientData("time series has no samples".into()));
        }
        Ok(Self { t0, dt, values })
    }

    /// Samples `f` at `t0 + k dt` for `k < n`.
    pub fn from_fn(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(t0, dt, (0..n).map(|k| f(t0 + k as f64 * dt)).collect())
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.values.len() - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|k| self.time(k))
    }

    /// Linear interpolation; clamps outside the record.
    pub fn value_at(&self, t: f64) -> f64 {
        let s = (t - self.t0) / self.dt;
        if s <= 0.0 {
            return self.values[0];
        }
        let last = self.values.len() - 1;
        let k = s.floor() as usize;
        if k >= last {
            return self.values[last];
        }
        let w = s - k as f64;
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }

    /// Same start, spacing and length (start and spacing within 1e-12 relative).
    pub fn same_grid(&self, other: &TimeSeries) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(self.dt);
        self.len() == other.len() && close(self.t0, other.t0) && close(self.dt, other.dt)
    }

    pub fn check_same_grid(&self, other: &TimeSeries) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(t0={}, dt={}, n={}) vs (t0={}, dt={}, n={})",
                self.t0,
                self.dt,
                self.len(),
                other.t0,
                other.dt,
                other.len()
            )))
        }
    }

    /// Same grid with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(Self {
            t0: self.t0,
            dt: self.dt,
            values,
        })
    }

    /// Indices of samples with `tau1 <= t <= tau2`.
    pub fn window_indices(&self, tau1: f64, tau2: f64) -> std::ops::Range<usize> {
        let eps = 1e-9 * self.dt;
        let first = ((tau1 - self.t0 - eps) / self.dt).ceil().max(0.0) as usize;
        let last = ((tau2 - self.t0 + eps) / self.dt).floor();
        if last < 0.0 {
            return 0..0;
        }
        let end = (last as usize + 1).min(self.values.len());
        first.min(end)..end
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Test signal applied to the plant. `frequency` is in Hz.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalSpec {
    /// `amplitude` for `t >= 0`.
    Step { amplitude: f64 },
    /// `amplitude · sin(2π frequency t)`.
    Harmonic { amplitude: f64, frequency: f64 },
    /// Staircase: `amplitude · level_i` from `time_i` until the next step; zero before the first.
    Multistep {
        amplitude: f64,
        step_levels: Vec<(f64, f64)>,
    },
    /// Pointwise sum of components.
    Sum(Vec<SignalSpec>),
}

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SignalSpec::Step { amplitude } => finite("signal.amplitude", *amplitude),
            SignalSpec::Harmonic {
                amplitude,
                frequency,
            } => {
                finite("signal.amplitude", *amplitude)?;
                if !(frequency.is_finite() && *frequency > 0.0) {
                    return Err(Error::invalid(
                        "signal.frequency",
                        format!("must be > 0, got {frequency}"),
                    ));
                }
                Ok(())
            }
            SignalSpec::Multistep {
                amplitude,
                step_levels,
            } => {
                finite("signal.amplitude", *amplitude)?;
                if step_levels.is_empty() {
                    return Err(Error::invalid("signal.step_levels", "must not be empty"));
                }
                for (t, l) in step_levels {
                    finite("signal.step_levels", *t)?;
                    finite("signal.step_levels", *l)?;
                }
                if step_levels.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::invalid(
                        "signal.step_levels",
                        "step times must be strictly increasing",
                    ));
                }
                Ok(())
            }
            SignalSpec::Sum(parts) => {
                if parts.is_empty() {
                    return Err(Error::invalid("signal.components", "must not be empty"));
                }
                parts.iter().try_for_each(SignalSpec::validate)
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            SignalSpec::Step { amplitude } => {
                if t >= 0.0 {
                    *amplitude
                } else {
                    0.0
                }
            }
            SignalSpec::Harmonic {
                amplitude,
                frequency,
            } => amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(),
            SignalSpec::Multistep {
                amplitude,
                step_levels,
            } => {
                let idx = step_levels.partition_point(|(ts, _)| *ts <= t);
                if idx == 0 {
                    0.0
                } else {
                    amplitude * step_levels[idx - 1].1
                }
            }
            SignalSpec::Sum(parts) => parts.iter().map(|p| p.value(t)).sum(),
        }
    }
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite, got {v}")))
    }
}

/// Integration and sampling settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub rk_step: f64,
    pub sample_dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub noise_sigma: f64,
}

impl SimOptions {
    /// Noiseless options with `rk_step = min(sample_dt, T_char/50)`, rounded so
    /// that it divides `sample_dt`.
    pub fn for_plant(plant: &PlantModel, sample_dt: f64, duration: f64) -> Self {
        Self {
            rk_step: default_rk_step(plant, sample_dt),
            sample_dt,
            duration,
            seed: 0,
            noise_sigma: 0.0,
        }
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rk_step.is_finite() && self.rk_step > 0.0) {
            return Err(Error::invalid(
                "sim.rk_step",
                format!("must be > 0, got {}", self.rk_step),
            ));
        }
        if !(self.sample_dt.is_finite() && self.sample_dt > 0.0) {
            return Err(Error::invalid(
                "sim.sample_dt",
                format!("must be > 0, got {}", self.sample_dt),
            ));
        }
        substeps(self.sample_dt, self.rk_step)?;
        if !(self.duration.is_finite() && self.duration >= self.sample_dt) {
            return Err(Error::invalid(
                "sim.duration",
                format!("must be >= sample_dt, got {}", self.duration),
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid(
                "sim.noise_sigma",
                format!("must be >= 0, got {}", self.noise_sigma),
            ));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration / self.sample_dt + 1e-9).floor() as usize + 1
    }
}

/// Largest step `<= min(sample_dt, T_char/50)` that divides `sample_dt`.
pub fn default_rk_step(plant: &PlantModel, sample_dt: f64) -> f64 {
    let target = sample_dt.min(plant.characteristic_time() / 50.0);
    let m = (sample_dt / target - 1e-9).ceil().max(1.0);
    sample_dt / m
}

/// Number of RK steps per sample interval.
pub(crate) fn substeps(sample_dt: f64, rk_step: f64) -> Result<usize> {
    let m = (sample_dt / rk_step).round();
    if m < 1.0 || (m * rk_step - sample_dt).abs() > 1e-9 * sample_dt {
        return Err(Error::invalid(
            "sim.rk_step",
            format!("sample interval {sample_dt} is not an integer multiple of rk_step {rk_step}"),
        ));
    }
    Ok(m as usize)
}

/// Samples the signal on `[0, duration]` at `sample_dt`.
pub fn generate_signal(spec: &SignalSpec, opts: &SimOptions) -> Result<TimeSeries> {
    spec.validate()?;
    opts.validate()?;
    TimeSeries::from_fn(0.0, opts.sample_dt, opts.sample_count(), |t| spec.value(t))
}

/// Runs the plant from rest under `spec`, returning sampled (optionally noisy) output.
pub fn simulate(plant: &PlantModel, spec: &SignalSpec, opts: &SimOptions) -> Result<TimeSeries> {
    let u = generate_signal(spec, opts)?;
    simulate_input(plant, &u, opts)
}

/// Runs the plant from rest under a recorded input. The output shares the
/// input's grid; `opts.sample_dt` and `opts.duration` are ignored.
pub fn simulate_input(plant: &PlantModel, u: &TimeSeries, opts: &SimOptions) -> Result<TimeSeries> {
    if !(opts.noise_sigma.is_finite() && opts.noise_sigma >= 0.0) {
        return Err(Error::invalid("sim.noise_sigma", "must be finite and >= 0"));
    }
    let mut x = integrate(plant, u, opts.rk_step, u.len())?;
    if opts.noise_sigma > 0.0 {
        add_noise(&mut x, opts.noise_sigma, opts.seed);
    }
    u.with_values(x)
}

/// Adds i.i.d. Gaussian noise, deterministic in `seed`.
pub fn add_noise(values: &mut [f64], sigma: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated as finite and >= 0");
    for v in values.iter_mut() {
        *v += normal.sample(&mut rng);
    }
}

/// Noiseless RK4 integration over the first `n` samples of `u`.
pub(crate) fn integrate(
    plant: &PlantModel,
    u: &TimeSeries,
    rk_step: f64,
    n: usize,
) -> Result<Vec<f64>> {
    Ok(integrate_states(plant, u, rk_step, n)?
        .into_iter()
        .map(|s| s[0])
        .collect())
}

/// Like [`integrate`] but returns the full state `[x, x', x'']` at each sample.
pub(crate) fn integrate_states(
    plant: &PlantModel,
    u: &TimeSeries,
    rk_step: f64,
    n: usize,
) -> Result<Vec<[f64; 3]>> {
    let m = substeps(u.dt(), rk_step)?;
    let n = n.min(u.len());
    let h = u.dt() / m as f64;
    let uv = u.values();
    let order = plant.order.dynamic_len();

    let deriv = |s: &[f64; 3], input: f64| -> [f64; 3] {
        let top = plant.highest_derivative(s, input);
        if order == 2 {
            [s[1], top, 0.0]
        } else {
            [s[1], s[2], top]
        }
    };

    let mut out = Vec::with_capacity(n);
    let mut s = [0.0f64; 3];
    if n == 0 {
        return Ok(out);
    }
    out.push(s);
    for k in 0..n - 1 {
        let (u0, u1) = (uv[k], uv[k + 1]);
        let slope = (u1 - u0) / m as f64;
        for j in 0..m {
            let ua = u0 + slope * j as f64;
            let um = ua + 0.5 * slope;
            let ub = ua + slope;
            let k1 = deriv(&s, ua);
            let k2 = deriv(&axpy(&s, 0.5 * h, &k1), um);
            let k3 = deriv(&axpy(&s, 0.5 * h, &k2), um);
            let k4 = deriv(&axpy(&s, h, &k3), ub);
            for i in 0..3 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        if !s.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                time: u.time(k + 1),
            });
        }
        out.push(s);
    }
    Ok(out)
}

#[inline]
fn axpy(s: &[f64; 3], h: f64, k: &[f64; 3]) -> [f64; 3] {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2]]
}

/// Pointwise `(u_k, x_k)` pairs.
pub fn lissajous(u: &TimeSeries, x: &TimeSeries) -> Result<Vec<(f64, f64)>> {
    u.check_same_grid(x)?;
    Ok(u.values()
        .iter()
        .copied()
        .zip(x.values().iter().copied())
        .collect())
}
