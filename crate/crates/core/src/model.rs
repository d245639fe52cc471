//! Plant and nonlinearity types.
//!
//! A plant is the quasilinear ODE
//!
//! ```text
//! A x'' + B x' + f(x) = u(t)                 (order 2)
//! A x''' + B x'' + C x' + f(x) = u(t)        (order 3)
//! ```
//!
//! started from rest, where `f` is a monotone odd polynomial close to a linear
//! stiffness. The static characteristic of such a plant is `x = f⁻¹(u)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Number of grid points used to check monotonicity over the operating range.
pub const MONOTONE_GRID: usize = 256;

/// Default monotonicity margin relative to the linear coefficient `c1`.
pub const EPS_MONO_REL: f64 = 1e-6;

/// Coefficients of the second-order linear model `A x'' + B x' + C x = u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl LinearParams {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// Checks positivity and that both characteristic roots lie in the left half-plane.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("A", self.a), ("B", self.b), ("C", self.c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        if !check_stability(self)?.stable {
            return Err(Error::Unstable {
                a: self.a,
                b: self.b,
                c: self.c,
            });
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

/// Roots of the characteristic polynomial and the resulting stability verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub roots: [Complex64; 2],
    pub stable: bool,
}

impl Stability {
    /// The root closest to the imaginary axis.
    pub fn slowest(&self) -> Complex64 {
        if self.roots[0].re >= self.roots[1].re {
            self.roots[0]
        } else {
            self.roots[1]
        }
    }
}

/// Solves `Aλ² + Bλ + C = 0` and reports whether both roots have negative real part.
pub fn check_stability(params: &LinearParams) -> Result<Stability> {
    let LinearParams { a, b, c } = *params;
    if a == 0.0 {
        return Err(Error::DegenerateOrder);
    }
    let roots = quadratic_roots(a, b, c);
    let stable = roots.iter().all(|r| r.re < 0.0);
    Ok(Stability { roots, stable })
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> [Complex64; 2] {
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        // Citardauq form avoids cancellation for the small root.
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        if q == 0.0 {
            return [Complex64::new(0.0, 0.0); 2];
        }
        let r1 = q / a;
        let r2 = c / q;
        [Complex64::new(r1, 0.0), Complex64::new(r2, 0.0)]
    } else {
        let re = -b / (2.0 * a);
        let im = (-disc).sqrt() / (2.0 * a);
        [Complex64::new(re, im), Complex64::new(re, -im)]
    }
}

/// Roots of a real polynomial with coefficients ordered from the highest power down.
pub fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let lead = *coeffs.first().ok_or(Error::DegenerateOrder)?;
    if lead == 0.0 {
        return Err(Error::DegenerateOrder);
    }
    let n = coeffs.len() - 1;
    match n {
        0 => Ok(Vec::new()),
        1 => Ok(vec![Complex64::new(-coeffs[1] / lead, 0.0)]),
        2 => Ok(quadratic_roots(coeffs[0], coeffs[1], coeffs[2]).to_vec()),
        _ => {
            let mut companion = DMatrix::<f64>::zeros(n, n);
            for j in 0..n {
                companion[(0, j)] = -coeffs[j + 1] / lead;
            }
            for i in 1..n {
                companion[(i, i - 1)] = 1.0;
            }
            Ok(companion.complex_eigenvalues().iter().copied().collect())
        }
    }
}

/// Parametric family that houses the stiffness nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `c1 x + c3 x³ + c5 x⁵ + c7 x⁷`
    OddPoly,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::OddPoly => "odd_poly",
        }
    }
}

/// Monotone odd polynomial `f(x) = c1 x + c3 x³ + c5 x⁵ + c7 x⁷` on `[-x_max, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nonlinearity {
    coeffs: [f64; 4],
    x_max: f64,
}

impl Nonlinearity {
    /// Builds a validated nonlinearity from `(c1, c3, c5, c7)`; trailing terms may be omitted.
    pub fn odd_poly(coeffs: &[f64], x_max: f64) -> Result<Self> {
        let f = Self::from_coeffs(coeffs, x_max)?;
        f.validate()?;
        Ok(f)
    }

    /// Linear stiffness `f(x) = c x`.
    pub fn linear(c: f64, x_max: f64) -> Result<Self> {
        Self::odd_poly(&[c], x_max)
    }

    /// Builds without the monotonicity check. Used for optimizer candidates,
    /// which are screened with [`Nonlinearity::is_monotone`].
    pub fn from_coeffs(coeffs: &[f64], x_max: f64) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > 4 {
            return Err(Error::invalid(
                "f.coeffs",
                format!("expected 1 to 4 odd coefficients, got {}", coeffs.len()),
            ));
        }
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(Error::invalid(
                "f.x_max",
                format!("must be > 0, got {x_max}"),
            ));
        }
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::invalid(
                "f.coeffs",
                format!("non-finite coefficient {bad}"),
            ));
        }
        let mut c = [0.0; 4];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Ok(Self { coeffs: c, x_max })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coeffs[0] > 0.0) {
            return Err(Error::invalid(
                "f.coeffs",
                format!("c1 must be > 0, got {}", self.coeffs[0]),
            ));
        }
        let (x, slope) = self.min_slope_on_grid();
        if slope < self.eps_mono() {
            return Err(Error::invalid(
                "f.coeffs",
                format!(
                    "not monotone: f'({x}) = {slope:e} below {:e}",
                    self.eps_mono()
                ),
            ));
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        Family::OddPoly
    }

    /// `(c1, c3, c5, c7)`.
    pub fn coeffs(&self) -> [f64; 4] {
        self.coeffs
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn with_x_max(&self, x_max: f64) -> Result<Self> {
        Self::odd_poly(&self.coeffs, x_max)
    }

    /// Highest odd power with a nonzero coefficient.
    pub fn degree(&self) -> u32 {
        self.coeffs
            .iter()
            .rposition(|&c| c != 0.0)
            .map_or(1, |i| 2 * i as u32 + 1)
    }

    /// `f'(0)`, the small-signal stiffness.
    pub fn slope_at_origin(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn eps_mono(&self) -> f64 {
        EPS_MONO_REL * self.coeffs[0].abs()
    }

    pub fn in_range(&self, x: f64) -> bool {
        x.abs() <= self.x_max
    }

    pub fn eval(&self, x: f64) -> f64 {
        let [c1, c3, c5, c7] = self.coeffs;
        let x2 = x * x;
        x * (c1 + x2 * (c3 + x2 * (c5 + x2 * c7)))
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let [c1, c3, c5, c7] = self.coeffs;
        let x2 = x * x;
        c1 + x2 * (3.0 * c3 + x2 * (5.0 * c5 + x2 * 7.0 * c7))
    }

    /// Smallest `f'` over the monotonicity grid, with its location.
    pub fn min_slope_on_grid(&self) -> (f64, f64) {
        grid(self.x_max)
            .map(|x| (x, self.derivative(x)))
            .fold(
                (0.0, f64::INFINITY),
                |acc, p| if p.1 < acc.1 { p } else { acc },
            )
    }

    pub fn is_monotone(&self) -> bool {
        self.coeffs[0] > 0.0 && self.min_slope_on_grid().1 >= self.eps_mono()
    }

    /// Unique `x` in the operating range with `f(x) = u`.
    pub fn invert(&self, u: f64) -> Result<f64> {
        self.invert_within(u, self.x_max)
    }

    /// Inverts on `[-bound, bound]`; `f` must be monotone there.
    pub fn invert_within(&self, u: f64, bound: f64) -> Result<f64> {
        let (lo_u, hi_u) = (self.eval(-bound), self.eval(bound));
        if !(u >= lo_u && u <= hi_u) {
            return Err(Error::OutOfRange {
                value: u,
                lo: lo_u,
                hi: hi_u,
            });
        }
        let (mut lo, mut hi) = (-bound, bound);
        let tol = 1e-13 * bound;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..3 {
            let d = self.derivative(x);
            if d <= 0.0 {
                break;
            }
            let next = x - (self.eval(x) - u) / d;
            if !(next >= lo - tol && next <= hi + tol) {
                break;
            }
            x = next;
        }
        Ok(x)
    }
}

/// Uniform grid of [`MONOTONE_GRID`] points over `[-x_max, x_max]`.
pub fn grid(x_max: f64) -> impl Iterator<Item = f64> {
    let n = MONOTONE_GRID;
    (0..n).map(move |i| -x_max + 2.0 * x_max * i as f64 / (n - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Second,
    Third,
}

impl Order {
    pub fn as_u8(&self) -> u8 {
        match self {
            Order::Second => 2,
            Order::Third => 3,
        }
    }

    pub fn from_u8(n: u8) -> Result<Self> {
        match n {
            2 => Ok(Order::Second),
            3 => Ok(Order::Third),
            other => Err(Error::invalid(
                "order",
                format!("must be 2 or 3, got {other}"),
            )),
        }
    }

    /// Number of dynamic coefficients (those multiplying derivatives of `x`).
    pub fn dynamic_len(&self) -> usize {
        self.as_u8() as usize
    }
}

/// A plant under test.
///
/// For order 2, `linear.c` mirrors `f'(0)`. For order 3, `linear` holds the
/// coefficients of `x'''`, `x''` and `x'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantModel {
    pub order: Order,
    pub linear: LinearParams,
    pub f: Nonlinearity,
}

impl PlantModel {
    pub fn second_order(a: f64, b: f64, f: Nonlinearity) -> Result<Self> {
        let plant = Self {
            order: Order::Second,
            linear: LinearParams::new(a, b, f.slope_at_origin()),
            f,
        };
        plant.validate()?;
        Ok(plant)
    }

    pub fn third_order(a: f64, b: f64, c: f64, f: Nonlinearity) -> Result<Self> {
        let plant = Self {
            order: Order::Third,
            linear: LinearParams::new(a, b, c),
            f,
        };
        plant.validate()?;
        Ok(plant)
    }

    /// Rebuilds a plant from its dynamic coefficients (`[A, B]` or `[A, B, C]`).
    pub fn from_dynamic(order: Order, dynamic: &[f64], f: Nonlinearity) -> Result<Self> {
        if dynamic.len() != order.dynamic_len() {
            return Err(Error::Configuration(format!(
                "order {} needs {} dynamic coefficients, got {}",
                order.as_u8(),
                order.dynamic_len(),
                dynamic.len()
            )));
        }
        match order {
            Order::Second => Self::second_order(dynamic[0], dynamic[1], f),
            Order::Third => Self::third_order(dynamic[0], dynamic[1], dynamic[2], f),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.f.validate()?;
        match self.order {
            Order::Second => {
                LinearParams::new(self.linear.a, self.linear.b, self.f.slope_at_origin()).validate()
            }
            Order::Third => {
                let LinearParams { a, b, c } = self.linear;
                for (name, v) in [("A", a), ("B", b), ("C", c)] {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(Error::invalid(
                            name,
                            format!("must be finite and > 0, got {v}"),
                        ));
                    }
                }
                // Routh-Hurwitz for a s³ + b s² + c s + k.
                if b * c <= a * self.f.slope_at_origin() {
                    return Err(Error::Unstable { a, b, c });
                }
                Ok(())
            }
        }
    }

    pub fn dynamic_coeffs(&self) -> Vec<f64> {
        match self.order {
            Order::Second => vec![self.linear.a, self.linear.b],
            Order::Third => vec![self.linear.a, self.linear.b, self.linear.c],
        }
    }

    /// Characteristic polynomial of the linearization at the origin, highest power first.
    pub fn characteristic(&self) -> Vec<f64> {
        let mut p = self.dynamic_coeffs();
        p.push(self.f.slope_at_origin());
        p
    }

    pub fn characteristic_roots(&self) -> Vec<Complex64> {
        polynomial_roots(&self.characteristic())
            .expect("validated plant has nonzero leading coefficient")
    }

    /// Linear parameters of the second-order linearization (`C = f'(0)`).
    pub fn linearized(&self) -> LinearParams {
        LinearParams::new(self.linear.a, self.linear.b, self.f.slope_at_origin())
    }

    /// `√(f'(0)/A)` for order 2; for order 3 the magnitude of the slowest root.
    pub fn natural_frequency(&self) -> f64 {
        match self.order {
            Order::Second => (self.f.slope_at_origin() / self.linear.a).sqrt(),
            Order::Third => self
                .characteristic_roots()
                .iter()
                .max_by(|a, b| a.re.total_cmp(&b.re))
                .map_or(1.0, |r| r.norm()),
        }
    }

    /// Largest real part among the characteristic roots; negative for a stable plant.
    pub fn slowest_decay(&self) -> f64 {
        self.characteristic_roots()
            .iter()
            .map(|r| r.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `1 / |Re λ_slow|`.
    pub fn slowest_time_constant(&self) -> f64 {
        1.0 / self.slowest_decay().abs()
    }

    /// Time scale used to pick the default integration step.
    pub fn characteristic_time(&self) -> f64 {
        let fastest = self
            .characteristic_roots()
            .iter()
            .map(|r| r.norm())
            .fold(0.0, f64::max);
        let by_roots = if fastest > 0.0 {
            2.0 * std::f64::consts::PI / fastest
        } else {
            f64::INFINITY
        };
        match self.order {
            Order::Second => {
                let classic =
                    2.0 * std::f64::consts::PI * (self.linear.a / self.f.slope_at_origin()).sqrt();
                classic.min(by_roots)
            }
            Order::Third => by_roots,
        }
    }

    /// `d^n x / dt^n` given the lower derivatives `state = [x, x', ...]`.
    #[inline]
    pub(crate) fn highest_derivative(&self, state: &[f64; 3], u: f64) -> f64 {
        let fx = self.f.eval(state[0]);
        let LinearParams { a, b, c } = self.linear;
        match self.order {
            Order::Second => (u - b * state[1] - fx) / a,
            Order::Third => (u - b * state[2] - c * state[1] - fx) / a,
        }
    }
}
