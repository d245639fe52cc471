//! Frequency-domain fit of `K(s) = 1 / p(s)` to measured gains.
//!
//! Stage 1 inverts the gains, which makes `1/G(iω) ≈ p(iω)` linear in the
//! coefficients of `p`. Stage 2 refines by minimizing `Σ |K(iω_k) − G_k|²`
//! directly, starting from the stage-1 solution.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::harmonic::{eval_transfer_poly, FrequencyResponsePoint};
use crate::model::LinearParams;

use super::simplex::{minimize, MinimizeOptions, Scale};

/// Second-order fit `1/(A s² + B s + C)`.
pub fn fit_linear_freq(points: &[FrequencyResponsePoint]) -> Result<LinearParams> {
    let c = fit_transfer_poly(points, 2, &MinimizeOptions::default())?;
    Ok(LinearParams::new(c[0], c[1], c[2]))
}

/// Third-order fit `1/(A s³ + B s² + C s + K)`; returns `[A, B, C, K]`.
pub fn fit_third_order_freq(points: &[FrequencyResponsePoint]) -> Result<[f64; 4]> {
    let c = fit_transfer_poly(points, 3, &MinimizeOptions::default())?;
    Ok([c[0], c[1], c[2], c[3]])
}

/// Stage-1 linear least squares alone; coefficients highest power first.
pub fn inverted_gain_lstsq(points: &[FrequencyResponsePoint], degree: usize) -> Result<Vec<f64>> {
    check_points(points)?;
    let n = degree + 1;
    let rows = 2 * points.len();
    let mut m = DMatrix::<f64>::zeros(rows, n);
    let mut rhs = DVector::<f64>::zeros(rows);
    for (k, p) in points.iter().enumerate() {
        let inv = p.gain.inv();
        for j in 0..n {
            let s_pow = Complex64::new(0.0, p.omega).powu((degree - j) as u32);
            m[(2 * k, j)] = s_pow.re;
            m[(2 * k + 1, j)] = s_pow.im;
        }
        rhs[2 * k] = inv.re;
        rhs[2 * k + 1] = inv.im;
    }
    // Column equilibration: powers of ω span many decades.
    let norms: Vec<f64> = (0..n).map(|j| m.column(j).norm()).collect();
    if norms.contains(&0.0) {
        return Err(Error::InsufficientData(
            "frequency data does not excite every coefficient".into(),
        ));
    }
    for (j, &s) in norms.iter().enumerate() {
        m.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    if !(svd.singular_values.min() > 1e-12 * smax) {
        return Err(Error::InsufficientData(
            "frequency points do not determine the transfer function".into(),
        ));
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::InsufficientData(e.to_string()))?;
    Ok((0..n).map(|j| sol[j] / norms[j]).collect())
}

fn check_points(points: &[FrequencyResponsePoint]) -> Result<()> {
    let mut omegas: Vec<f64> = points.iter().map(|p| p.omega).collect();
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();
    if omegas.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 distinct frequencies, got {}",
            omegas.len()
        )));
    }
    for p in points {
        if !(p.omega.is_finite() && p.omega > 0.0) {
            return Err(Error::invalid(
                "omega",
                format!("must be > 0, got {}", p.omega),
            ));
        }
        if !(p.gain.re.is_finite() && p.gain.im.is_finite()) || p.gain.norm() == 0.0 {
            return Err(Error::invalid(
                "gain",
                format!("must be finite and nonzero at omega = {}", p.omega),
            ));
        }
    }
    Ok(())
}

/// `Σ |1/p(iω_k) − G_k|²`.
pub fn freq_objective(den: &[f64], points: &[FrequencyResponsePoint]) -> f64 {
    points
        .iter()
        .map(|p| match eval_transfer_poly(den, p.omega) {
            Ok(k) => (k - p.gain).norm_sqr(),
            Err(_) => f64::MAX,
        })
        .sum()
}

/// Two-stage fit of a denominator of the given degree (2 or 3).
pub fn fit_transfer_poly(
    points: &[FrequencyResponsePoint],
    degree: usize,
    options: &MinimizeOptions,
) -> Result<Vec<f64>> {
    let raw = inverted_gain_lstsq(points, degree)?;
    if raw.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::UnstableFit { raw });
    }
    let opts = MinimizeOptions {
        scales: Some(vec![Scale::Log; raw.len()]),
        ..options.clone()
    };
    let refined = minimize(|c| freq_objective(c, points), &raw, &opts)?;
    let c = refined.params;
    let stable = match degree {
        2 => c.iter().all(|&v| v > 0.0),
        3 => c.iter().all(|&v| v > 0.0) && c[1] * c[2] > c[0] * c[3],
        _ => false,
    };
    if !stable {
        return Err(Error::UnstableFit { raw: c });
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::exact_response;

    #[test]
    fn exact_recovery() {
        let truth = LinearParams::new(1.0, 2.0, 1.0);
        let pts = exact_response(&truth, &[0.5, 1.0, 2.0]).unwrap();
        let fit = fit_linear_freq(&pts).unwrap();
        for (a, b) in fit.as_array().iter().zip(truth.as_array()) {
            assert!((a - b).abs() / b < 1e-6);
        }
    }

    #[test]
    fn single_point_is_insufficient() {
        let pts = exact_response(&LinearParams::new(1.0, 2.0, 1.0), &[1.0]).unwrap();
        assert!(matches!(
            fit_linear_freq(&pts),
            Err(Error::InsufficientData(_))
        ));
        let dup = exact_response(&LinearParams::new(1.0, 2.0, 1.0), &[1.0, 1.0]).unwrap();
        assert!(matches!(
            fit_linear_freq(&dup),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn negative_damping_data_is_unstable() {
        let pts = exact_response(&LinearParams::new(1.0, -0.5, 1.0), &[0.3, 2.0, 4.0]).unwrap();
        assert!(matches!(
            fit_linear_freq(&pts),
            Err(Error::UnstableFit { .. })
        ));
    }

    #[test]
    fn third_order_exact() {
        let den = [0.1, 1.0, 2.0, 1.0];
        let pts: Vec<_> = [0.2, 0.7, 1.5, 4.0]
            .iter()
            .map(|&w| FrequencyResponsePoint::new(w, eval_transfer_poly(&den, w).unwrap()))
            .collect();
        let c = fit_third_order_freq(&pts).unwrap();
        for (a, b) in c.iter().zip(den) {
            assert!((a - b).abs() / b < 1e-6, "{c:?}");
        }
    }
}
