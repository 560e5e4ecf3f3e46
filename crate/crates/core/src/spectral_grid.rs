//! Periodic grid, unitary DFT and Fourier multipliers.
//!
//! Frequencies are stored in FFT order internally (mode index `m` maps to the
//! signed wavenumber `k = m` for `m < n/2` and `k = m - n` otherwise), so the
//! Nyquist mode is always `k = -n/2`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Multiplier magnitudes above this bound are treated as overflow.
pub const MULTIPLIER_LIMIT: f64 = 1e300;

/// Hard cap on the number of terms summed by [`plancherel_series`].
pub const SERIES_TERM_CAP: usize = 200;

/// Periodic lattice `x_j = jL/n` with its dual frequency lattice `ξ_k = 2πk/L`.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    period: f64,
    mu: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).field("period", &self.period).field("mu", &self.mu).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.period == other.period && self.mu == other.mu
    }
}

impl Grid {
    pub fn new(n_points: usize, period: f64, mu: f64) -> Result<Self> {
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(Error::Parameter(format!("n_points must be a power of two >= 8, got {n_points}")));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::Parameter(format!("period must be positive, got {period}")));
        }
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::Parameter(format!("mu must lie in (0, 1], got {mu}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n: n_points,
            period,
            mu,
            forward: planner.plan_fft_forward(n_points),
            inverse: planner.plan_fft_inverse(n_points),
        })
    }

    /// Same lattice with a different regularization parameter.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.n, self.period, mu)
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn dx(&self) -> f64 {
        self.period / self.n as f64
    }

    /// Spacing of the frequency lattice, `2π/L`.
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.period
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Node `h` of the twice-refined spatial grid, `h L / (2n)`.
    pub fn x_half(&self, h: usize) -> f64 {
        h as f64 * self.period / (2 * self.n) as f64
    }

    /// Signed wavenumber of FFT-ordered mode `m`.
    pub fn wavenumber(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = m as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    /// Frequency of FFT-ordered mode `m`.
    pub fn xi_mode(&self, m: usize) -> f64 {
        self.wavenumber(m) as f64 * self.dxi()
    }

    /// Frequencies in natural order `k = -n/2, …, n/2 - 1`.
    pub fn xi_nodes(&self) -> Vec<f64> {
        (0..self.n).map(|q| self.xi_natural(q)).collect()
    }

    /// Frequency at natural-order index `q` (`k = q - n/2`).
    pub fn xi_natural(&self, q: usize) -> f64 {
        (q as f64 - (self.n / 2) as f64) * self.dxi()
    }

    /// FFT-order mode index of natural-order index `q`.
    pub fn natural_to_mode(&self, q: usize) -> usize {
        (q + self.n / 2) % self.n
    }

    pub fn bracket(&self, xi: f64) -> f64 {
        bracket(xi, self.mu)
    }

    /// Unitary forward transform (`1/√n` normalization).
    pub fn forward(&self, values: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.n, "forward transform length mismatch");
        let mut buf = values.to_vec();
        self.forward.process(&mut buf);
        let s = 1.0 / (self.n as f64).sqrt();
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    }

    /// Unitary inverse transform.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(coeffs.len(), self.n, "inverse transform length mismatch");
        let mut buf = coeffs.to_vec();
        self.inverse.process(&mut buf);
        let s = 1.0 / (self.n as f64).sqrt();
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    }

    pub fn transform(&self, u: &GridFunction) -> SpectralFunction {
        SpectralFunction { coeffs: self.forward(&u.values) }
    }

    pub fn synthesize(&self, s: &SpectralFunction) -> GridFunction {
        GridFunction { values: self.inverse(&s.coeffs) }
    }

    /// Trapezoidal L² norm, `(L/n)^{1/2}` times the Euclidean norm.
    pub fn l2_norm(&self, values: &[Complex64]) -> f64 {
        (self.dx() * values.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// L² inner product `(f, g) = (L/n) Σ f conj(g)`.
    pub fn inner(&self, f: &[Complex64], g: &[Complex64]) -> Complex64 {
        assert_eq!(f.len(), g.len());
        f.iter().zip(g).map(|(a, b)| a * b.conj()).sum::<Complex64>() * self.dx()
    }

    /// Evaluate a multiplier on every mode (FFT order), rejecting non-finite or
    /// overflowing values.
    pub fn multiplier_values<F>(&self, m: F) -> Result<Vec<Complex64>>
    where
        F: Fn(f64) -> Complex64,
    {
        (0..self.n)
            .map(|mode| {
                let xi = self.xi_mode(mode);
                let v = m(xi);
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(Error::Evaluation { mode: self.wavenumber(mode), xi });
                }
                if v.norm() > MULTIPLIER_LIMIT {
                    return Err(Error::Overflow(format!(
                        "multiplier magnitude {:e} at mode {} exceeds {MULTIPLIER_LIMIT:e}",
                        v.norm(),
                        self.wavenumber(mode)
                    )));
                }
                Ok(v)
            })
            .collect()
    }

    /// Apply precomputed FFT-ordered multiplier values.
    pub fn apply_multiplier(&self, multiplier: &[Complex64], values: &[Complex64]) -> Vec<Complex64> {
        let mut hat = self.forward(values);
        hat.iter_mut().zip(multiplier).for_each(|(c, m)| *c *= m);
        self.inverse(&hat)
    }
}

/// `⟨ξ⟩_μ = (μ^{-2} + ξ²)^{1/2}` without parameter checks.
#[inline]
pub fn bracket(xi: f64, mu: f64) -> f64 {
    (mu.powi(-2) + xi * xi).sqrt()
}

/// Regularized frequency bracket `⟨ξ⟩_μ`.
pub fn bracket_xi(xi: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::Parameter(format!("mu must be positive, got {mu}")));
    }
    Ok(bracket(xi, mu))
}

/// Complex samples on the spatial nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn from_real_fn<F: Fn(f64) -> f64>(grid: &Grid, f: F) -> Self {
        Self { values: (0..grid.n_points()).map(|j| Complex64::new(f(grid.x(j)), 0.0)).collect() }
    }

    /// Plane wave `e^{i ξ_k x}` for signed wavenumber `k`.
    pub fn mode(grid: &Grid, k: i64) -> Self {
        let xi = k as f64 * grid.dxi();
        Self { values: (0..grid.n_points()).map(|j| Complex64::from_polar(1.0, xi * grid.x(j))).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self { values: self.values.iter().map(|c| c * s).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect() }
    }

    pub(crate) fn check(&self, grid: &Grid) -> Result<()> {
        if self.values.len() != grid.n_points() {
            return Err(Error::Parameter(format!(
                "grid function has {} values, grid has {} nodes",
                self.values.len(),
                grid.n_points()
            )));
        }
        if !self.is_finite() {
            return Err(Error::Parameter("grid function has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Unitary DFT coefficients in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFunction {
    pub coeffs: Vec<Complex64>,
}

/// Inverse transform of `m(ξ_k) û(ξ_k)`.
pub fn fourier_multiplier<F>(grid: &Grid, m: F, u: &GridFunction) -> Result<GridFunction>
where
    F: Fn(f64) -> Complex64,
{
    u.check(grid)?;
    let mult = grid.multiplier_values(m)?;
    Ok(GridFunction { values: grid.apply_multiplier(&mult, &u.values) })
}

/// `k`-th spectral derivative `∂_x^k u`.
pub fn spectral_derivative(grid: &Grid, u: &GridFunction, order: u32) -> Result<GridFunction> {
    fourier_multiplier(grid, |xi| Complex64::new(0.0, xi).powu(order), u)
}

fn weight_exponent_guard(grid: &Grid, ell: f64, tau: f64, kappa: f64) -> Result<()> {
    let top = grid.bracket(PI * grid.n_points() as f64 / grid.period());
    let log_weight = tau * top.powf(kappa) + ell * top.ln();
    if log_weight > MULTIPLIER_LIMIT.ln() {
        return Err(Error::Overflow(format!(
            "weight exp(tau <xi>^kappa) reaches e^{log_weight:.1} at the top mode; use a smaller tau or a coarser grid"
        )));
    }
    Ok(())
}

fn check_weight_args(tau: f64, kappa: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Parameter(format!("tau must be finite and >= 0, got {tau}")));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Parameter(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    Ok(())
}

/// `‖⟨D⟩_μ^ℓ Op(e^{τ⟨ξ⟩_μ^κ}) u‖`.
pub fn weighted_norm(grid: &Grid, u: &GridFunction, ell: f64, tau: f64, kappa: f64) -> Result<f64> {
    check_weight_args(tau, kappa)?;
    weight_exponent_guard(grid, ell, tau, kappa)?;
    let mu = grid.mu();
    let w = fourier_multiplier(
        grid,
        |xi| {
            let b = bracket(xi, mu);
            Complex64::new(b.powf(ell) * (tau * b.powf(kappa)).exp(), 0.0)
        },
        u,
    )?;
    Ok(grid.l2_norm(&w.values))
}

/// Series form `Σ_n (2τ)^n/n! ‖⟨D⟩^ℓ ⟨D⟩^{κn/2} u‖²`, returned as its square root.
///
/// Terms are accumulated per mode and summed in mode order. Summation stops
/// once the terms are past their peak and `term / partial < tol`.
pub fn plancherel_series(grid: &Grid, u: &GridFunction, ell: f64, tau: f64, kappa: f64, tol: f64) -> Result<f64> {
    u.check(grid)?;
    check_weight_args(tau, kappa)?;
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tol must be positive, got {tol}")));
    }
    let mu = grid.mu();
    let hat = grid.forward(&u.values);
    let dx = grid.dx();
    // per-mode n-th term, starting at n = 0
    let mut ratio = Vec::with_capacity(hat.len());
    let mut term: Vec<f64> = Vec::with_capacity(hat.len());
    for (m, c) in hat.iter().enumerate() {
        let b = bracket(grid.xi_mode(m), mu);
        term.push(dx * c.norm_sqr() * b.powf(2.0 * ell));
        ratio.push(2.0 * tau * b.powf(kappa));
    }
    let peak = ratio.iter().cloned().fold(0.0, f64::max);
    let mut partial: f64 = term.iter().sum();
    if partial == 0.0 || tau == 0.0 {
        return Ok(partial.sqrt());
    }
    for n in 1..SERIES_TERM_CAP {
        let inv_n = 1.0 / n as f64;
        term.iter_mut().zip(&ratio).for_each(|(t, r)| *t *= r * inv_n);
        let total: f64 = term.iter().sum();
        partial += total;
        if !partial.is_finite() {
            return Err(Error::Overflow("Plancherel series partial sum overflowed".into()));
        }
        if n as f64 > peak && total / partial < tol {
            return Ok(partial.sqrt());
        }
    }
    Err(Error::Convergence(format!(
        "Plancherel series not converged after {SERIES_TERM_CAP} terms (2τ⟨ξ_max⟩^κ = {peak:.2})"
    )))
}
