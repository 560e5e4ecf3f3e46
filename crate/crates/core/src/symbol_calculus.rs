//! Phase-space symbols on the refined lattice: the degeneracy function `φ`,
//! the loss weight `Λ`, exponentials, derivative quotients and numerical
//! symbol-class reports.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::coefficients::{SpaceCoefficient, TimeCoefficient};
use crate::error::{Error, Result};
use crate::spectral_grid::{bracket, Grid};
use crate::table::{format_float, Table};

/// Largest `|p|` accepted by [`exp_symbol`].
pub const EXP_LIMIT: f64 = 700.0;

/// Relative change allowed between `quad_steps` and `2·quad_steps` in `Λ`.
pub const LAMBDA_REL_TOL: f64 = 1e-6;

/// Largest total derivative order for quotients and class reports.
pub const MAX_QUOTIENT_ORDER: u32 = 6;
pub const MAX_REPORT_ORDER: u32 = 8;

/// Relative noise floor applied before spectral `x`-differentiation.
const SPECTRAL_NOISE_FLOOR: f64 = 1e-13;

/// Exponents tying the Gevrey order of the data to the weight `e^{τ⟨ξ⟩^κ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevreyParams {
    pub s: f64,
    pub s_prime: f64,
    /// `N = n + α`.
    pub regularity: f64,
    pub kappa: f64,
    pub delta: f64,
    pub kappa_tilde: f64,
    pub mu: f64,
    pub tau: f64,
    pub theta: f64,
}

impl GevreyParams {
    pub fn new(s: f64, s_prime: f64, n: u32, alpha: f64, mu: f64, tau: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        let regularity = n as f64 + alpha;
        if !(regularity > 0.0) {
            return Err(Error::Parameter("regularity N = n + alpha must be positive".into()));
        }
        if !(s > 1.0 && s < s_prime && s_prime < 1.0 + regularity / 2.0) {
            return Err(Error::Parameter(format!(
                "need 1 < s < s_prime < 1 + N/2 (well-posedness range), got s = {s}, s_prime = {s_prime}, 1 + N/2 = {}",
                1.0 + regularity / 2.0
            )));
        }
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::Parameter(format!("mu must lie in (0, 1], got {mu}")));
        }
        if !(tau > 0.0) || !(theta >= 0.0) {
            return Err(Error::Parameter(format!("need tau > 0 and theta >= 0, got tau = {tau}, theta = {theta}")));
        }
        let kappa = 1.0 / s_prime;
        let delta = 1.0 - kappa;
        let kappa_tilde = 2.0 * delta / regularity;
        if !(kappa_tilde < kappa && s * kappa < 1.0) {
            return Err(Error::Parameter(format!(
                "exponents violate kappa_tilde < kappa and s*kappa < 1: kappa = {kappa}, kappa_tilde = {kappa_tilde}"
            )));
        }
        Ok(Self { s, s_prime, regularity, kappa, delta, kappa_tilde, mu, tau, theta })
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        let n = self.regularity.floor();
        Self::new(self.s, self.s_prime, n as u32, self.regularity - n, mu, self.tau, self.theta)
    }
}

/// Symbol classes that reports can test against.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassKind {
    /// Gevrey-type class with anisotropy `δ`, order `s` and slack `ε`.
    GevreyDelta { delta: f64, s: f64, eps: f64 },
    /// `(k+l)^{s(k+l)}` growth with no decay in `ξ`.
    ZeroZero { s: f64 },
    /// Class of the metric `φ^{-1}dx² + ⟨ξ⟩^{-2}dξ²`.
    Metric { phi: Symbol },
}

impl ClassKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ClassKind::GevreyDelta { .. } => "gevrey_delta",
            ClassKind::ZeroZero { .. } => "zero_zero",
            ClassKind::Metric { .. } => "metric",
        }
    }
}

/// Claimed membership carried as metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassClaim {
    pub kind: &'static str,
    pub weight: String,
}

/// Complex field on the refined grid `x_h = hL/(2n)` times the frequency lattice
/// in natural order. Stored row-major in `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Symbol {
    grid: Grid,
    values: Vec<Complex64>,
    claim: Option<ClassClaim>,
    time: Option<f64>,
}

impl Symbol {
    pub fn from_values(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        let n = grid.n_points();
        if values.len() != 2 * n * n {
            return Err(Error::Parameter(format!("symbol needs {} values, got {}", 2 * n * n, values.len())));
        }
        if let Some(i) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Range(format!("non-finite symbol entry at cell ({}, {})", i / n, i % n)));
        }
        Ok(Self { grid: grid.clone(), values, claim: None, time: None })
    }

    pub fn from_fn<F: Fn(f64, f64) -> Complex64>(grid: &Grid, f: F) -> Result<Self> {
        let n = grid.n_points();
        let xi = grid.xi_nodes();
        let mut values = Vec::with_capacity(2 * n * n);
        for h in 0..2 * n {
            let x = grid.x_half(h);
            values.extend(xi.iter().map(|&k| f(x, k)));
        }
        Self::from_values(grid, values)
    }

    pub fn from_real_fn<F: Fn(f64, f64) -> f64>(grid: &Grid, f: F) -> Result<Self> {
        Self::from_fn(grid, |x, xi| Complex64::new(f(x, xi), 0.0))
    }

    /// Symbol depending on `x` only.
    pub fn from_x_fn<F: Fn(f64) -> f64>(grid: &Grid, f: F) -> Result<Self> {
        Self::from_real_fn(grid, |x, _| f(x))
    }

    /// Symbol depending on `ξ` only.
    pub fn from_xi_fn<F: Fn(f64) -> Complex64>(grid: &Grid, f: F) -> Result<Self> {
        Self::from_fn(grid, |_, xi| f(xi))
    }

    pub fn constant(grid: &Grid, c: Complex64) -> Self {
        let n = grid.n_points();
        Self { grid: grid.clone(), values: vec![c; 2 * n * n], claim: None, time: None }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Number of refined `x` rows, `2n`.
    pub fn n_x(&self) -> usize {
        2 * self.grid.n_points()
    }

    /// Number of frequency columns, `n`.
    pub fn n_xi(&self) -> usize {
        self.grid.n_points()
    }

    pub fn get(&self, h: usize, q: usize) -> Complex64 {
        self.values[h * self.n_xi() + q]
    }

    pub fn claim(&self) -> Option<&ClassClaim> {
        self.claim.as_ref()
    }

    pub fn with_claim(mut self, kind: &'static str, weight: impl Into<String>) -> Self {
        self.claim = Some(ClassClaim { kind, weight: weight.into() });
        self
    }

    pub fn time(&self) -> Option<f64> {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Result<Self> {
        Self::from_values(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise map that also sees the cell coordinates `(x, ξ)`.
    pub fn map_with_coords<F: Fn(f64, f64, Complex64) -> Complex64>(&self, f: F) -> Result<Self> {
        let n = self.n_xi();
        let xi = self.grid.xi_nodes();
        let values = self.values.iter().enumerate().map(|(i, &v)| f(self.grid.x_half(i / n), xi[i % n], v)).collect();
        Self::from_values(&self.grid, values)
    }

    fn zip<F: Fn(Complex64, Complex64) -> Complex64>(&self, other: &Symbol, f: F) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Parameter("symbols live on different grids".into()));
        }
        Self::from_values(&self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn mul(&self, other: &Symbol) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Symbol) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Symbol) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { values: self.values.iter().map(|&v| v * c).collect(), ..self.clone() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_re(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_re(&self) -> f64 {
        self.values.iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// `∂_x^k` by FFT along each refined `x` row.
    pub fn dx(&self, k: u32) -> Result<Self> {
        if k == 0 {
            return Ok(self.clone());
        }
        check_order(k, self.grid.n_points(), "x")?;
        let n = self.n_xi();
        let nx = self.n_x();
        let fine = Grid::new(nx, self.grid.period(), self.grid.mu())?;
        let ik: Vec<Complex64> = (0..nx).map(|m| Complex64::new(0.0, fine.xi_mode(m)).powu(k)).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); nx * n];
        let mut column = vec![Complex64::new(0.0, 0.0); nx];
        for q in 0..n {
            for (h, c) in column.iter_mut().enumerate() {
                *c = self.values[h * n + q];
            }
            let mut hat = fine.forward(&column);
            let top = hat.iter().map(|c| c.norm()).fold(0.0, f64::max);
            for (c, w) in hat.iter_mut().zip(&ik) {
                *c = if c.norm() < SPECTRAL_NOISE_FLOOR * top { Complex64::new(0.0, 0.0) } else { *c * w };
            }
            if k % 2 == 1 {
                // odd derivatives of a real Nyquist mode are not resolved
                hat[nx / 2] = Complex64::new(0.0, 0.0);
            }
            for (h, v) in fine.inverse(&hat).into_iter().enumerate() {
                out[h * n + q] = v;
            }
        }
        Self::from_values(&self.grid, out)
    }

    /// `∂_ξ^l` by repeated centered differences with spacing `2π/L`,
    /// one-sided in the two edge columns.
    pub fn dxi(&self, l: u32) -> Result<Self> {
        if l == 0 {
            return Ok(self.clone());
        }
        check_order(l, self.grid.n_points(), "xi")?;
        let n = self.n_xi();
        let inv = 1.0 / self.grid.dxi();
        let mut cur = self.values.clone();
        let mut next = vec![Complex64::new(0.0, 0.0); cur.len()];
        for _ in 0..l {
            for row in 0..self.n_x() {
                let r = &cur[row * n..(row + 1) * n];
                let o = &mut next[row * n..(row + 1) * n];
                o[0] = (r[1] - r[0]) * inv;
                o[n - 1] = (r[n - 1] - r[n - 2]) * inv;
                for q in 1..n - 1 {
                    o[q] = (r[q + 1] - r[q - 1]) * (0.5 * inv);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Self::from_values(&self.grid, cur)
    }

    /// `∂_x^k ∂_ξ^l`.
    pub fn derivative(&self, k: u32, l: u32) -> Result<Self> {
        self.dxi(l)?.dx(k)
    }

    /// Largest `|ξ|` whose columns are unaffected by edge differencing at order `l`.
    pub fn interior_xi_limit(&self) -> f64 {
        0.5 * (self.grid.n_points() / 2) as f64 * self.grid.dxi()
    }
}

fn check_order(k: u32, n: usize, axis: &str) -> Result<()> {
    if k as usize > n / 4 {
        return Err(Error::Range(format!(
            "derivative order {k} in {axis} exceeds the resolution limit n_points/4 = {}",
            n / 4
        )));
    }
    Ok(())
}

fn check_mu(grid: &Grid, params: &GevreyParams) -> Result<()> {
    if (grid.mu() - params.mu).abs() > 1e-15 * params.mu {
        return Err(Error::Parameter(format!("grid mu = {} differs from parameter mu = {}", grid.mu(), params.mu)));
    }
    Ok(())
}

/// `⟨ξ⟩_μ^p` as a symbol.
pub fn bracket_power(grid: &Grid, p: f64) -> Result<Symbol> {
    let mu = grid.mu();
    Symbol::from_xi_fn(grid, |xi| Complex64::new(bracket(xi, mu).powf(p), 0.0))
}

/// `e^{c⟨ξ⟩_μ^κ}` as a symbol.
pub fn gevrey_weight(grid: &Grid, c: f64, kappa: f64) -> Result<Symbol> {
    let mu = grid.mu();
    let top = c * bracket(grid.xi_natural(0), mu).powf(kappa);
    if top > EXP_LIMIT {
        return Err(Error::Overflow(format!("weight exponent {top:.3} exceeds {EXP_LIMIT}")));
    }
    Symbol::from_xi_fn(grid, |xi| Complex64::new((c * bracket(xi, mu).powf(kappa)).exp(), 0.0))
}

/// `φ = a(x) + ⟨ξ⟩_μ^{-2δ}`.
pub fn build_phi(a: &SpaceCoefficient, grid: &Grid, params: &GevreyParams) -> Result<Symbol> {
    check_mu(grid, params)?;
    let mu = params.mu;
    let two_delta = 2.0 * params.delta;
    let ax: Vec<f64> = (0..2 * grid.n_points()).map(|h| a.value(grid.x_half(h))).collect();
    let tail: Vec<f64> = grid.xi_nodes().iter().map(|&xi| bracket(xi, mu).powf(-two_delta)).collect();
    let n = grid.n_points();
    let values = (0..2 * n * n).map(|i| Complex64::new(ax[i / n] + tail[i % n], 0.0)).collect();
    Ok(Symbol::from_values(grid, values)?.with_claim("metric", "phi"))
}

/// Per-cell `r = ⟨ξ⟩^{-2δ}/φ`, so that the integrand of `Λ` is `|b'|/(b + r)`.
fn lambda_ratios(phi: &Symbol, params: &GevreyParams) -> Result<Vec<f64>> {
    let grid = phi.grid();
    check_mu(grid, params)?;
    let n = grid.n_points();
    let tail: Vec<f64> = grid.xi_nodes().iter().map(|&xi| bracket(xi, params.mu).powf(-2.0 * params.delta)).collect();
    phi.values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if !(v.re > 0.0) {
                Err(Error::Parameter(format!("phi must be positive, found {} at cell ({}, {})", v.re, i / n, i % n)))
            } else {
                Ok(tail[i % n] / v.re)
            }
        })
        .collect()
}

/// Cumulative midpoint sums of `|b'|/(b + r)` at each requested time, one row per
/// time and one column per distinct `r`.
fn lambda_table(b: &TimeCoefficient, ratios: &[f64], times: &[f64], quad_steps: usize) -> Vec<Vec<f64>> {
    let t_last = *times.last().unwrap();
    let mut acc = vec![0.0; ratios.len()];
    let mut out = Vec::with_capacity(times.len());
    let mut t_prev = 0.0;
    for &t in times {
        let span = t - t_prev;
        if span > 0.0 {
            let steps = ((quad_steps as f64 * span / t_last).round() as usize).max(1);
            let dt = span / steps as f64;
            let nodes: Vec<(f64, f64)> = (0..steps)
                .map(|i| {
                    let s = t_prev + (i as f64 + 0.5) * dt;
                    (b.derivative(s).abs() * dt, b.value(s))
                })
                .filter(|(w, _)| *w != 0.0)
                .collect();
            for (a, &r) in acc.iter_mut().zip(ratios) {
                *a += nodes.iter().map(|&(w, bv)| w / (bv + r)).sum::<f64>();
            }
        }
        out.push(acc.clone());
        t_prev = t;
    }
    out
}

/// `Λ(t) = ∫_0^t |b'| φ / (b φ + ⟨ξ⟩^{-2δ}) ds` for each time in `times`.
///
/// Cells sharing the same value of `⟨ξ⟩^{-2δ}/φ` share one quadrature. The
/// result is accepted when doubling `quad_steps` changes every cell by less
/// than `1e-6` relative.
pub fn build_lambda_series(
    b: &TimeCoefficient,
    phi: &Symbol,
    times: &[f64],
    params: &GevreyParams,
    quad_steps: usize,
) -> Result<Vec<Symbol>> {
    if quad_steps < 64 {
        return Err(Error::Parameter(format!("quad_steps must be >= 64, got {quad_steps}")));
    }
    if times.is_empty() {
        return Ok(Vec::new());
    }
    if times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("times must be nonnegative and strictly increasing".into()));
    }
    if *times.last().unwrap() > b.horizon() * (1.0 + 1e-12) {
        return Err(Error::Parameter(format!("time {} beyond horizon {}", times.last().unwrap(), b.horizon())));
    }
    let ratios = lambda_ratios(phi, params)?;
    let mut index = HashMap::new();
    let mut distinct = Vec::new();
    let cell_to_distinct: Vec<usize> = ratios
        .iter()
        .map(|r| {
            *index.entry(r.to_bits()).or_insert_with(|| {
                distinct.push(*r);
                distinct.len() - 1
            })
        })
        .collect();
    if *times.last().unwrap() == 0.0 {
        return times
            .iter()
            .map(|&t| Ok(Symbol::constant(phi.grid(), Complex64::new(0.0, 0.0)).with_time(t)))
            .collect();
    }
    let coarse = lambda_table(b, &distinct, times, quad_steps);
    let fine = lambda_table(b, &distinct, times, 2 * quad_steps);
    let mut worst = (0.0f64, 0usize, 0usize);
    for (ti, (c, f)) in coarse.iter().zip(&fine).enumerate() {
        for (d, (cv, fv)) in c.iter().zip(f).enumerate() {
            let rel = if *fv == 0.0 { (cv - fv).abs() } else { (cv - fv).abs() / fv.abs() };
            if rel > worst.0 {
                worst = (rel, ti, d);
            }
        }
    }
    if worst.0 > LAMBDA_REL_TOL {
        let n = phi.n_xi();
        let cell = cell_to_distinct.iter().position(|&d| d == worst.2).unwrap_or(0);
        let (h, q) = (cell / n, cell % n);
        return Err(Error::Quadrature(format!(
            "Lambda not converged at t = {}: cell (x = {:.6}, xi = {:.3}) changed by {:.3e} relative on doubling {} steps",
            times[worst.1],
            phi.grid().x_half(h),
            phi.grid().xi_natural(q),
            worst.0,
            quad_steps
        )));
    }
    fine.into_iter()
        .zip(times)
        .map(|(row, &t)| {
            let values = cell_to_distinct.iter().map(|&d| Complex64::new(row[d], 0.0)).collect();
            Ok(Symbol::from_values(phi.grid(), values)?
                .with_claim("gevrey_delta", format!("<xi>^{}", params.kappa_tilde))
                .with_time(t))
        })
        .collect()
}

/// `Λ` at a single time `t`.
pub fn build_lambda(
    b: &TimeCoefficient,
    phi: &Symbol,
    t: f64,
    params: &GevreyParams,
    quad_steps: usize,
) -> Result<Symbol> {
    Ok(build_lambda_series(b, phi, &[t], params, quad_steps)?.remove(0))
}

/// `∂_tΛ = |b'(t)| φ / (b(t) φ + ⟨ξ⟩^{-2δ})`.
pub fn lambda_time_derivative(b: &TimeCoefficient, phi: &Symbol, t: f64, params: &GevreyParams) -> Result<Symbol> {
    let ratios = lambda_ratios(phi, params)?;
    let (db, bv) = (b.derivative(t).abs(), b.value(t));
    let values = ratios.iter().map(|r| Complex64::new(if db == 0.0 { 0.0 } else { db / (bv + r) }, 0.0)).collect();
    Ok(Symbol::from_values(phi.grid(), values)?.with_time(t))
}

/// `sup Λ / ⟨ξ⟩_μ^{κ̃}` over the grid.
pub fn check_lambda_bound(lambda: &Symbol, params: &GevreyParams) -> f64 {
    let grid = lambda.grid();
    let n = grid.n_points();
    let weight: Vec<f64> = grid.xi_nodes().iter().map(|&xi| bracket(xi, grid.mu()).powf(params.kappa_tilde)).collect();
    lambda.values().iter().enumerate().map(|(i, v)| v.re / weight[i % n]).fold(0.0, f64::max)
}

/// Pointwise `e^{±p}`.
pub fn exp_symbol(p: &Symbol, sign: f64) -> Result<Symbol> {
    let m = p.max_abs();
    if m > EXP_LIMIT {
        return Err(Error::Range(format!("|p| reaches {m:.3e}, exp would exceed range (limit {EXP_LIMIT})")));
    }
    let out = p.map(|v| (v * sign).exp())?;
    Ok(match p.time() {
        Some(t) => out.with_time(t),
        None => out,
    })
}

/// `T^i_j = (∂_ξ^i ∂_x^j e^p) / e^p`.
pub fn derivative_quotients(p: &Symbol, i: u32, j: u32) -> Result<Symbol> {
    if i + j > MAX_QUOTIENT_ORDER {
        return Err(Error::Range(format!("quotient order {} exceeds {MAX_QUOTIENT_ORDER}", i + j)));
    }
    let e = exp_symbol(p, 1.0)?;
    let d = e.derivative(j, i)?;
    d.zip(&e, |a, b| a / b)
}

/// `h = φ^{-1/2} ⟨ξ⟩_μ^{-1}`.
pub fn metric_h(phi: &Symbol) -> Result<Symbol> {
    if phi.min_re() <= 0.0 {
        return Err(Error::Parameter("phi must be positive".into()));
    }
    let mu = phi.grid().mu();
    phi.map_with_coords(|_, xi, v| Complex64::new(1.0 / (v.re.sqrt() * bracket(xi, mu)), 0.0))
}

/// Class against which a symbol is tested, with its order function `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub kind: ClassKind,
    pub weight: Symbol,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRow {
    /// Number of `x`-derivatives.
    pub k: u32,
    /// Number of `ξ`-derivatives.
    pub l: u32,
    pub band: i32,
    pub constant: f64,
}

/// Minimal constants `C_{k,l}` per dyadic `⟨ξ⟩` band.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub kind: &'static str,
    pub rows: Vec<ClassRow>,
}

impl ClassReport {
    pub fn overall(&self) -> f64 {
        self.rows.iter().map(|r| r.constant).fold(0.0, f64::max)
    }

    pub fn constants(&self, k: u32, l: u32) -> Vec<(i32, f64)> {
        self.rows.iter().filter(|r| r.k == k && r.l == l).map(|r| (r.band, r.constant)).collect()
    }

    /// Largest least-squares slope, over all `(k, l)`, of `log2 C` against the
    /// band index on the three highest bands. Near zero or negative for a
    /// member of the class; a symbol exceeding its weight by `⟨ξ⟩^γ` shows
    /// about `γ`.
    pub fn growth_exponent(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        let mut pairs: Vec<(u32, u32)> = self.rows.iter().map(|r| (r.k, r.l)).collect();
        pairs.dedup();
        for (k, l) in pairs {
            let c = self.constants(k, l);
            let pts: Vec<(f64, f64)> = c[c.len().saturating_sub(3)..]
                .iter()
                .filter(|&&(_, v)| v > 0.0)
                .map(|&(b, v)| (b as f64, v.log2()))
                .collect();
            if pts.len() < 2 {
                continue;
            }
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            worst = worst.max(crate::coefficients::fit_slope(&xs, &ys));
        }
        worst
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["k", "l", "band_index", "constant"]);
        for r in &self.rows {
            t.push(vec![r.k.to_string(), r.l.to_string(), r.band.to_string(), format_float(r.constant)]);
        }
        t
    }

    pub fn to_csv(&self) -> String {
        self.to_table().to_csv()
    }
}

/// Per-band constants of `|∂_x^k ∂_ξ^l p| / normalizer(k, l)` over the interior
/// `|ξ| ≤ ξ_max/2`, with `k ≤ k_max`, `l ≤ l_max`.
pub fn symbol_class_report(p: &Symbol, spec: &ClassSpec, k_max: u32, l_max: u32) -> Result<ClassReport> {
    if k_max + l_max > MAX_REPORT_ORDER {
        return Err(Error::Range(format!("k_max + l_max = {} exceeds {MAX_REPORT_ORDER}", k_max + l_max)));
    }
    if p.grid() != spec.weight.grid() {
        return Err(Error::Parameter("weight lives on a different grid".into()));
    }
    let grid = p.grid();
    let n = grid.n_points();
    let mu = grid.mu();
    let xi_lim = p.interior_xi_limit();
    let cols: Vec<usize> = (0..n).filter(|&q| grid.xi_natural(q).abs() <= xi_lim).collect();
    let br: Vec<f64> = (0..n).map(|q| bracket(grid.xi_natural(q), mu)).collect();
    let band_of = |q: usize| br[q].log2().floor() as i32;
    let bands: Vec<i32> = {
        let mut b: Vec<i32> = cols.iter().map(|&q| band_of(q)).collect();
        b.sort_unstable();
        b.dedup();
        b
    };
    let mut rows = Vec::new();
    for l in 0..=l_max {
        let pl = p.dxi(l)?;
        for k in 0..=k_max {
            let d = pl.dx(k)?;
            let order = (k + l) as f64;
            let mut per_band: Vec<f64> = vec![0.0; bands.len()];
            for h in 0..p.n_x() {
                for &q in &cols {
                    let bq = br[q];
                    let m = spec.weight.get(h, q).norm();
                    let norm = match &spec.kind {
                        ClassKind::GevreyDelta { delta, s, eps } => {
                            let growth = if order == 0.0 {
                                1.0
                            } else {
                                (order.powf(1.0 + eps) + order.powf(*s) * bq.powf(-delta)).powf(order)
                            };
                            growth * bq.powf(-(l as f64) + k as f64 * delta) * m
                        }
                        ClassKind::ZeroZero { s } => {
                            let growth = if order == 0.0 { 1.0 } else { order.powf(s * order) };
                            growth * m
                        }
                        ClassKind::Metric { phi } => {
                            m * phi.get(h, q).re.powf(-(k as f64) / 2.0) * bq.powi(-(l as i32))
                        }
                    };
                    let c = d.get(h, q).norm() / norm;
                    let bi = bands.binary_search(&band_of(q)).unwrap();
                    per_band[bi] = per_band[bi].max(c);
                }
            }
            for (bi, &c) in per_band.iter().enumerate() {
                rows.push(ClassRow { k, l, band: bands[bi], constant: c });
            }
        }
    }
    rows.sort_by_key(|r| (r.k, r.l, r.band));
    Ok(ClassReport { kind: spec.kind.tag(), rows })
}
