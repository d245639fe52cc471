//! Nelder-Mead simplex descent with optional log-scaled coordinates.

use crate::error::{Error, Result};

/// Coordinate transform applied before the simplex search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    /// Searches over `ln p`; keeps `p > 0`.
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    pub max_iterations: usize,
    /// Simplex diameter (in search coordinates) below which the search stops.
    pub x_tol: f64,
    /// Spread of vertex objectives below which the search stops.
    pub f_tol: f64,
    /// Objective at or below this value at the start is accepted without searching.
    pub target: f64,
    /// Initial simplex edge in search coordinates (relative for nonzero linear coordinates).
    pub initial_step: f64,
    /// Fresh-simplex restarts from the best point after convergence.
    pub restarts: usize,
    /// Per-coordinate transform; `None` means all linear.
    pub scales: Option<Vec<Scale>>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            x_tol: 1e-9,
            f_tol: 1e-14,
            target: 0.0,
            initial_step: 0.1,
            restarts: 2,
            scales: None,
        }
    }
}

impl MinimizeOptions {
    pub fn with_scales(mut self, scales: Vec<Scale>) -> Self {
        self.scales = Some(scales);
        self
    }
}

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `objective` from `start`.
///
/// Stops when the simplex diameter drops below `x_tol`, the objective spread
/// drops below `f_tol`, or after `max_iterations` iterations (then
/// `converged = false`). A non-finite objective value aborts the search.
pub fn minimize<F>(mut objective: F, start: &[f64], options: &MinimizeOptions) -> Result<FitResult>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    if n == 0 {
        return Err(Error::invalid("start", "empty parameter vector"));
    }
    let scales = match &options.scales {
        Some(s) if s.len() != n => {
            return Err(Error::invalid(
                "scales",
                format!("{} scales for {} parameters", s.len(), n),
            ))
        }
        Some(s) => s.clone(),
        None => vec![Scale::Linear; n],
    };
    for (i, (&p, s)) in start.iter().zip(&scales).enumerate() {
        if !p.is_finite() || (*s == Scale::Log && p <= 0.0) {
            return Err(Error::invalid(
                "start",
                format!("coordinate {i} = {p} is not admissible for {s:?} scale"),
            ));
        }
    }

    let to_search = |p: &[f64]| -> Vec<f64> {
        p.iter()
            .zip(&scales)
            .map(|(&v, s)| match s {
                Scale::Linear => v,
                Scale::Log => v.ln(),
            })
            .collect()
    };
    let to_params = |y: &[f64]| -> Vec<f64> {
        y.iter()
            .zip(&scales)
            .map(|(&v, s)| match s {
                Scale::Linear => v,
                Scale::Log => v.exp(),
            })
            .collect()
    };

    let mut evaluations = 0usize;
    let mut eval = |y: &[f64]| -> Result<f64> {
        let p = to_params(y);
        let v = objective(&p);
        evaluations += 1;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteObjective { point: p })
        }
    };

    let y0 = to_search(start);
    let f0 = eval(&y0)?;
    if f0 <= options.target {
        return Ok(FitResult {
            params: start.to_vec(),
            objective: f0,
            iterations: 0,
            evaluations: 1,
            converged: true,
        });
    }

    let mut best = (y0, f0);
    let mut iterations = 0usize;
    let mut converged = false;
    for round in 0..=options.restarts {
        let budget = options.max_iterations.saturating_sub(iterations);
        if budget == 0 {
            converged = false;
            break;
        }
        let run = descend(&mut eval, &best.0, best.1, &scales, options, budget)?;
        iterations += run.iterations;
        let improved = run.value < best.1;
        let gain = best.1 - run.value;
        if improved {
            best = (run.point, run.value);
        }
        converged = run.converged;
        if !run.converged {
            break;
        }
        // A restart that finds nothing new confirms the minimum.
        if round > 0 && gain <= options.f_tol.max(1e-15 * best.1.abs()) {
            break;
        }
    }

    Ok(FitResult {
        params: to_params(&best.0),
        objective: best.1,
        iterations,
        evaluations,
        converged,
    })
}

struct Descent {
    point: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn descend<E>(
    eval: &mut E,
    start: &[f64],
    f_start: f64,
    scales: &[Scale],
    options: &MinimizeOptions,
    budget: usize,
) -> Result<Descent>
where
    E: FnMut(&[f64]) -> Result<f64>,
{
    const REFLECT: f64 = 1.0;
    const EXPAND: f64 = 2.0;
    const CONTRACT: f64 = 0.5;
    const SHRINK: f64 = 0.5;

    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut values: Vec<f64> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    values.push(f_start);
    for i in 0..n {
        let mut v = start.to_vec();
        let step = match scales[i] {
            Scale::Log => options.initial_step,
            Scale::Linear if v[i].abs() > 1e-8 => options.initial_step * v[i].abs(),
            Scale::Linear => 0.5 * options.initial_step,
        };
        v[i] += step;
        values.push(eval(&v)?);
        simplex.push(v);
    }

    let mut iterations = 0;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if diameter < options.x_tol || spread < options.f_tol {
            return Ok(Descent {
                point: simplex.swap_remove(0),
                value: values[0],
                iterations,
                converged: true,
            });
        }
        if iterations >= budget {
            return Ok(Descent {
                point: simplex.swap_remove(0),
                value: values[0],
                iterations,
                converged: false,
            });
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = along(REFLECT);
        let fr = eval(&reflected)?;
        if fr < values[0] {
            let expanded = along(REFLECT * EXPAND);
            let fe = eval(&expanded)?;
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let p = along(REFLECT * CONTRACT);
            let f = eval(&p)?;
            (p, f)
        } else {
            let p = along(-CONTRACT);
            let f = eval(&p)?;
            (p, f)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + SHRINK * (v - b))
                .collect();
            values[i] = eval(&shrunk)?;
            simplex[i] = shrunk;
        }
    }
}
