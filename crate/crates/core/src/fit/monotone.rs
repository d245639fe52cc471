//! Least-squares fit of a monotone odd polynomial to an `(x, f(x))` scatter.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{grid, Nonlinearity, EPS_MONO_REL};

/// Odd polynomial family with a fixed degree over `[-x_max, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OddPolyFamily {
    /// 1, 3, 5 or 7.
    pub degree: u32,
    pub x_max: f64,
}

impl OddPolyFamily {
    pub fn new(degree: u32, x_max: f64) -> Result<Self> {
        let fam = Self { degree, x_max };
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.degree, 1 | 3 | 5 | 7) {
            return Err(Error::invalid(
                "degree",
                format!("must be one of 1, 3, 5, 7; got {}", self.degree),
            ));
        }
        if !(self.x_max.is_finite() && self.x_max > 0.0) {
            return Err(Error::invalid(
                "x_max",
                format!("must be > 0, got {}", self.x_max),
            ));
        }
        Ok(())
    }

    /// Number of free coefficients.
    pub fn terms(&self) -> usize {
        (self.degree as usize).div_ceil(2)
    }
}

/// Diagnostics of a monotone fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneFit {
    pub f: Nonlinearity,
    /// Sum of squared residuals of the returned polynomial.
    pub residual: f64,
    /// Sum of squared residuals of the unconstrained least-squares polynomial.
    pub unconstrained_residual: f64,
    /// Whether the monotonicity constraint changed the fit.
    pub constrained: bool,
}

/// Penalty weight per unit of data scale.
const PENALTY: f64 = 1e6;
const MAX_ACTIVE_SET_ROUNDS: usize = 50;

/// Fits `f` to the scatter; see [`fit_monotone_detailed`].
pub fn fit_monotone(pairs: &[(f64, f64)], family: &OddPolyFamily) -> Result<Nonlinearity> {
    fit_monotone_detailed(pairs, family).map(|r| r.f)
}

/// Unconstrained least squares over the odd basis; if the result is not
/// monotone on the grid, a quadratic penalty on `f' < floor` is added and the
/// active set iterated to a fixed point. A final uniform lift of `c1` makes the
/// grid check pass exactly.
pub fn fit_monotone_detailed(pairs: &[(f64, f64)], family: &OddPolyFamily) -> Result<MonotoneFit> {
    family.validate()?;
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let p = family.terms();
    if pts.len() < p {
        return Err(Error::InsufficientData(format!(
            "{} finite pairs for {} coefficients",
            pts.len(),
            p
        )));
    }
    let (lo, hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, _)| {
            (lo.min(*x), hi.max(*x))
        });
    if hi - lo < 0.2 * family.x_max {
        return Err(Error::InsufficientData(format!(
            "x spans [{lo}, {hi}], less than 10% of the operating range ±{}",
            family.x_max
        )));
    }

    let x_max = family.x_max;
    let basis = |x: f64| -> Vec<f64> {
        let xi = x / x_max;
        let xi2 = xi * xi;
        let mut row = Vec::with_capacity(p);
        let mut v = xi;
        for _ in 0..p {
            row.push(v);
            v *= xi2;
        }
        row
    };
    // d/dx of the basis, in units of 1/x_max.
    let dbasis = |x: f64| -> Vec<f64> {
        let xi = x / x_max;
        let xi2 = xi * xi;
        let mut row = Vec::with_capacity(p);
        let mut v = 1.0;
        for j in 0..p {
            row.push((2 * j + 1) as f64 * v / x_max);
            v *= xi2;
        }
        row
    };

    let phi = DMatrix::from_fn(pts.len(), p, |i, j| basis(pts[i].0)[j]);
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|(_, y)| *y));

    let svd = phi.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::InsufficientData(format!(
            "scatter is rank deficient for degree {} (singular value ratio {:e})",
            family.degree,
            smin / smax
        )));
    }
    let gamma = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::InsufficientData(e.to_string()))?;
    let sse = |g: &DVector<f64>| (&phi * g - &y).norm_squared();
    let unconstrained_residual = sse(&gamma);

    let to_nonlinearity = |g: &DVector<f64>| -> Result<Nonlinearity> {
        let coeffs: Vec<f64> = (0..p)
            .map(|j| g[j] / x_max.powi(2 * j as i32 + 1))
            .collect();
        Nonlinearity::from_coeffs(&coeffs, x_max)
    };

    let candidate = to_nonlinearity(&gamma)?;
    if candidate.is_monotone() {
        return Ok(MonotoneFit {
            f: candidate,
            residual: unconstrained_residual,
            unconstrained_residual,
            constrained: false,
        });
    }

    // Slope floor relative to the typical slope of the data.
    let y_scale = pts.iter().fold(0.0f64, |m, (_, y)| m.max(y.abs()));
    let x_scale = lo.abs().max(hi.abs());
    let floor = 2.0 * EPS_MONO_REL * (y_scale / x_scale).max(f64::MIN_POSITIVE);
    // Slope residuals are converted to data units by x_scale².
    let weight = PENALTY * pts.len() as f64 * x_scale * x_scale;

    let grid_rows: Vec<Vec<f64>> = grid(x_max).map(dbasis).collect();
    let slope =
        |g: &DVector<f64>, row: &[f64]| row.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>();
    let normal = phi.transpose() * &phi;
    let rhs = phi.transpose() * &y;

    let mut g = gamma;
    let mut active: Vec<usize> = Vec::new();
    for _ in 0..MAX_ACTIVE_SET_ROUNDS {
        let next: Vec<usize> = grid_rows
            .iter()
            .enumerate()
            .filter(|(i, row)| slope(&g, row) < floor || active.contains(i))
            .map(|(i, _)| i)
            .collect();
        if next == active && !active.is_empty() {
            break;
        }
        active = next;
        let mut m = normal.clone();
        let mut b = rhs.clone();
        for &i in &active {
            let d = DVector::from_column_slice(&grid_rows[i]);
            m += weight * &d * d.transpose();
            b += weight * floor * &d;
        }
        g = match m.cholesky() {
            Some(ch) => ch.solve(&b),
            None => break,
        };
    }

    let mut f = to_nonlinearity(&g)?;
    let (_, min_slope) = f.min_slope_on_grid();
    let mut coeffs = f.coeffs();
    let need = EPS_MONO_REL * coeffs[0].max(floor);
    if min_slope < need || coeffs[0] <= 0.0 {
        let lift = (need - min_slope).max(0.0) / (1.0 - EPS_MONO_REL) * (1.0 + 1e-9) + f64::EPSILON;
        coeffs[0] += lift;
        f = Nonlinearity::from_coeffs(&coeffs, x_max)?;
    }
    f.validate()?;
    let residual = pts.iter().map(|(x, y)| (f.eval(*x) - y).powi(2)).sum();
    Ok(MonotoneFit {
        f,
        residual,
        unconstrained_residual,
        constrained: true,
    })
}
