//! The operator `A = D_t - iθ⟨D⟩^κ`, the conjugated operator `P♯`, the weighted
//! energy and its audit along solver trajectories.

use num_complex::Complex64;

use crate::coefficients::{SpaceCoefficient, TimeCoefficient};
use crate::error::{Error, Result};
use crate::spectral_grid::{bracket, Grid, GridFunction};
use crate::symbol_calculus::{build_lambda_series, build_phi, exp_symbol, GevreyParams, Symbol, EXP_LIMIT};
use crate::table::{format_float, Table};
use crate::weyl_quantize::{weyl_quantize, OperatorMatrix};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative tolerance for the sign checks on `E`, `E₁` and `E₂`.
pub const SIGN_TOL: f64 = 1e-10;

/// Default slack in the audited inequality `dE/dt ≤ (1 + slack) E`.
pub const DEFAULT_SLACK: f64 = 0.2;

/// A snapshot `(u, ∂_t u)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub t: f64,
    pub u: GridFunction,
    pub ut: GridFunction,
}

impl WaveState {
    pub fn new(t: f64, u: GridFunction, ut: GridFunction) -> Result<Self> {
        if !t.is_finite() {
            return Err(Error::Parameter(format!("state time must be finite, got {t}")));
        }
        if u.len() != ut.len() {
            return Err(Error::Parameter(format!("u has {} values but ut has {}", u.len(), ut.len())));
        }
        if !(u.is_finite() && ut.is_finite()) {
            return Err(Error::Parameter(format!("state at t = {t} has non-finite entries")));
        }
        Ok(Self { t, u, ut })
    }

    pub fn zeros(grid: &Grid, t: f64) -> Self {
        let n = grid.n_points();
        Self { t, u: GridFunction::zeros(n), ut: GridFunction::zeros(n) }
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        self.u.check(grid)?;
        self.ut.check(grid)
    }
}

/// Which second-order spatial operator stands for `D_x a D_x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialForm {
    /// `⟨D⟩ a ⟨D⟩`, the form the energy is written in.
    Bracket,
    /// `D_x a D_x = -∂_x(a ∂_x ·)`, the form the solver integrates.
    Divergence,
}

/// FFT-ordered values of `⟨ξ⟩^ell e^{c⟨ξ⟩^κ}`.
fn weight_values(grid: &Grid, ell: f64, c: f64, kappa: f64) -> Result<Vec<Complex64>> {
    let mu = grid.mu();
    let top = c * grid.bracket(grid.xi_natural(0)).powf(kappa);
    if top > EXP_LIMIT {
        return Err(Error::Overflow(format!("weight exponent {top:.3} exceeds {EXP_LIMIT}")));
    }
    grid.multiplier_values(|xi| {
        let b = bracket(xi, mu);
        Complex64::new(b.powf(ell) * (c * b.powf(kappa)).exp(), 0.0)
    })
}

fn bracket_values(grid: &Grid, ell: f64) -> Result<Vec<Complex64>> {
    weight_values(grid, ell, 0.0, 1.0)
}

fn lin(a: Complex64, x: &[Complex64], b: Complex64, y: &[Complex64]) -> Vec<Complex64> {
    x.iter().zip(y).map(|(u, v)| a * u + b * v).collect()
}

fn pointwise(a: &[f64], u: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(u).map(|(a, v)| v * a).collect()
}

/// `⟨D⟩a⟨D⟩u` or `D_x a D_x u` for the sampled coefficient `a`.
pub fn apply_spatial(grid: &Grid, a: &[f64], form: SpatialForm, u: &[Complex64]) -> Result<Vec<Complex64>> {
    if a.len() != grid.n_points() || u.len() != grid.n_points() {
        return Err(Error::Parameter("coefficient and state must live on the grid".into()));
    }
    let m = match form {
        SpatialForm::Bracket => bracket_values(grid, 1.0)?,
        SpatialForm::Divergence => grid.multiplier_values(|xi| Complex64::new(0.0, xi))?,
    };
    let inner = pointwise(a, &grid.apply_multiplier(&m, u));
    let out = grid.apply_multiplier(&m, &inner);
    Ok(match form {
        SpatialForm::Bracket => out,
        SpatialForm::Divergence => out.into_iter().map(|v| -v).collect(),
    })
}

/// `A u = -i ∂_t u - iθ⟨D⟩^κ u`.
pub fn apply_a(grid: &Grid, state: &WaveState, theta: f64, kappa: f64) -> Result<GridFunction> {
    if !(theta >= 0.0) {
        return Err(Error::Parameter(format!("theta must be >= 0, got {theta}")));
    }
    state.check(grid)?;
    let lk = grid.apply_multiplier(&bracket_values(grid, kappa)?, &state.u.values);
    Ok(GridFunction::new(lin(-I, &state.ut.values, -I * theta, &lk)))
}

/// `a₁ = (τ - θt)(-i a'(x)) κ ξ ⟨ξ⟩^{κ-2}`.
pub fn build_a1(a: &SpaceCoefficient, t: f64, tau: f64, theta: f64, kappa: f64, grid: &Grid) -> Result<Symbol> {
    let c = tau - theta * t;
    if !(c >= 0.0) {
        return Err(Error::Parameter(format!("need tau - theta*t >= 0, got {c}")));
    }
    let mu = grid.mu();
    let da: Vec<f64> = (0..2 * grid.n_points()).map(|h| a.d1(grid.x_half(h))).collect();
    let dxi: Vec<f64> = (0..grid.n_points())
        .map(|q| {
            let xi = grid.xi_natural(q);
            kappa * xi * bracket(xi, mu).powf(kappa - 2.0)
        })
        .collect();
    let n = grid.n_points();
    let values = (0..2 * n * n).map(|i| Complex64::new(0.0, -c * da[i / n] * dxi[i % n])).collect();
    Ok(Symbol::from_values(grid, values)?.with_time(t))
}

/// Both evaluations of `P♯v` at the middle time of a three-point stencil.
#[derive(Debug, Clone, PartialEq)]
pub struct PSharp {
    pub t: f64,
    /// `W P W^{-1} v` with `W = Op(e^{(τ-θt)⟨ξ⟩^κ})`.
    pub direct: GridFunction,
    /// `A²v - b⟨D⟩a⟨D⟩v - b⟨D⟩Op(a₁)⟨D⟩v`.
    pub decomposition: GridFunction,
}

impl PSharp {
    /// `direct - decomposition`, which measures the remainder `R v`.
    pub fn residual(&self) -> GridFunction {
        self.direct.sub(&self.decomposition)
    }
}

/// `P♯v` for `P = D_t² - b⟨D⟩a⟨D⟩`, computed by direct conjugation and by the
/// decomposition into `A²`, the principal part and the `a₁` correction.
///
/// Time derivatives come from centered differences over the `u` fields of
/// three equally spaced snapshots of `v`.
pub fn p_sharp_residual(
    stencil: &[WaveState; 3],
    b: &TimeCoefficient,
    a: &SpaceCoefficient,
    tau: f64,
    theta: f64,
    kappa: f64,
    grid: &Grid,
) -> Result<PSharp> {
    for s in stencil {
        s.check(grid)?;
    }
    let (t0, t, t1) = (stencil[0].t, stencil[1].t, stencil[2].t);
    let h = t - t0;
    if !(h > 0.0) || ((t1 - t) - h).abs() > 1e-9 * h.max(t.abs()) {
        return Err(Error::Usage(format!("stencil times {t0}, {t}, {t1} are not equally spaced and increasing")));
    }
    let (vm, v, vp) = (&stencil[0].u.values, &stencil[1].u.values, &stencil[2].u.values);
    let bt = b.value(t);
    let av: Vec<f64> = grid.x_nodes().iter().map(|&x| a.value(x)).collect();
    let h2 = h * h;

    // direct: w(s) = W(s)^{-1} v(s), then W(t)(-w_tt - b⟨D⟩a⟨D⟩w(t))
    let inv = |s: f64, f: &[Complex64]| -> Result<Vec<Complex64>> {
        Ok(grid.apply_multiplier(&weight_values(grid, 0.0, -(tau - theta * s), kappa)?, f))
    };
    let (wm, w, wp) = (inv(t0, vm)?, inv(t, v)?, inv(t1, vp)?);
    let sw = apply_spatial(grid, &av, SpatialForm::Bracket, &w)?;
    let pw: Vec<Complex64> = (0..w.len()).map(|i| -(wp[i] - 2.0 * w[i] + wm[i]) / h2 - bt * sw[i]).collect();
    let direct = grid.apply_multiplier(&weight_values(grid, 0.0, tau - theta * t, kappa)?, &pw);

    // decomposition: A²v = -v_tt - 2θ⟨D⟩^κ v_t - θ²⟨D⟩^{2κ} v
    let vtt: Vec<Complex64> = (0..v.len()).map(|i| (vp[i] - 2.0 * v[i] + vm[i]) / h2).collect();
    let vt: Vec<Complex64> = (0..v.len()).map(|i| (vp[i] - vm[i]) / (2.0 * h)).collect();
    let lk_vt = grid.apply_multiplier(&bracket_values(grid, kappa)?, &vt);
    let l2k_v = grid.apply_multiplier(&bracket_values(grid, 2.0 * kappa)?, v);
    let sv = apply_spatial(grid, &av, SpatialForm::Bracket, v)?;
    let a1 = weyl_quantize(&build_a1(a, t, tau, theta, kappa, grid)?)?;
    let br = bracket_values(grid, 1.0)?;
    let a1v = grid.apply_multiplier(&br, &a1.apply(&grid.apply_multiplier(&br, v)));
    let decomposition: Vec<Complex64> = (0..v.len())
        .map(|i| -vtt[i] - 2.0 * theta * lk_vt[i] - theta * theta * l2k_v[i] - bt * sv[i] - bt * a1v[i])
        .collect();
    Ok(PSharp { t, direct: GridFunction::new(direct), decomposition: GridFunction::new(decomposition) })
}

/// `E(u)` with its pieces and the derivative components `E₁`, `E₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    pub e: f64,
    pub e1: f64,
    pub e2: f64,
    /// `‖Op(e^{-Λ})Au‖²`.
    pub a_term: f64,
    /// `Re(b a Op(e^{-Λ})⟨D⟩u, Op(e^{-Λ})⟨D⟩u)`.
    pub middle: f64,
    /// `‖⟨D⟩^κ Op(e^{-Λ})u‖²`.
    pub low: f64,
}

impl EnergyParts {
    /// Magnitude used to scale the sign tolerances.
    pub fn scale(&self) -> f64 {
        self.a_term + self.middle.abs() + self.low
    }

    /// Violation of `E ≥ ‖Op(e^{-Λ})Au‖² + ‖⟨D⟩^κ Op(e^{-Λ})u‖²` beyond tolerance.
    pub fn lower_bound_violated(&self) -> bool {
        self.e < self.a_term + self.low - SIGN_TOL * self.scale()
    }

    /// `E`, `E₁` or `E₂` below `-SIGN_TOL·scale`.
    pub fn negative(&self) -> bool {
        let tol = -SIGN_TOL * self.scale();
        self.e < tol || self.e1 < tol || self.e2 < tol
    }
}

/// The weighted energy of `state` with `Λ` built at the same time.
pub fn energy(
    grid: &Grid,
    state: &WaveState,
    b: &TimeCoefficient,
    a: &SpaceCoefficient,
    lambda: &Symbol,
    theta: f64,
    kappa: f64,
) -> Result<EnergyParts> {
    if let Some(tl) = lambda.time() {
        if (tl - state.t).abs() > 1e-12 * (1.0 + state.t.abs()) {
            return Err(Error::Usage(format!("Lambda built at t = {tl} but state is at t = {}", state.t)));
        }
    }
    if lambda.grid().n_points() != grid.n_points() {
        return Err(Error::Parameter("Lambda lives on a different grid".into()));
    }
    let y = weyl_quantize(&exp_symbol(lambda, -1.0)?)?;
    energy_with(grid, state, b.value(state.t), &sampled(grid, a), &y, theta, kappa)
}

fn sampled(grid: &Grid, a: &SpaceCoefficient) -> Vec<f64> {
    grid.x_nodes().iter().map(|&x| a.value(x)).collect()
}

fn energy_with(
    grid: &Grid,
    state: &WaveState,
    bt: f64,
    av: &[f64],
    y: &OperatorMatrix,
    theta: f64,
    kappa: f64,
) -> Result<EnergyParts> {
    state.check(grid)?;
    let au = apply_a(grid, state, theta, kappa)?.values;
    let lk = bracket_values(grid, kappa)?;
    let l1 = bracket_values(grid, 1.0)?;
    let l1k = bracket_values(grid, 1.0 + kappa)?;
    let u = &state.u.values;

    let y_au = y.apply(&au);
    let y_lk_au = y.apply(&grid.apply_multiplier(&lk, &au));
    let y_d = y.apply(&grid.apply_multiplier(&l1, u));
    let y_d1k = y.apply(&grid.apply_multiplier(&l1k, u));
    let y_u = y.apply(u);
    let lk_y_u = grid.apply_multiplier(&lk, &y_u);
    let lk_y_lk = grid.apply_multiplier(&lk, &y.apply(&grid.apply_multiplier(&lk, u)));

    let a_term = grid.inner(&y_au, &y_au).re;
    let middle = bt * grid.inner(&pointwise(av, &y_d), &y_d).re;
    let low = grid.inner(&lk_y_u, &lk_y_u).re;
    let e1 = bt * grid.inner(&pointwise(av, &y_d1k), &y_d).re + grid.inner(&lk_y_lk, &lk_y_u).re;
    let e2 = grid.inner(&y_lk_au, &y_au).re;
    Ok(EnergyParts { e: a_term + middle + low, e1, e2, a_term, middle, low })
}

/// `θ₀ = (T√c* + 1 + margin)/2`, the smallest admissible value plus half the margin.
pub fn select_theta0(c_star: f64, t_end: f64, margin: f64) -> Result<f64> {
    if !(c_star >= 0.0 && c_star.is_finite()) {
        return Err(Error::Parameter(format!("c* must be finite and >= 0, got {c_star}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Parameter(format!("T must be positive, got {t_end}")));
    }
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::Parameter(format!("margin must be positive, got {margin}")));
    }
    Ok((t_end * c_star.sqrt() + 1.0 + margin) / 2.0)
}

/// Tuning for [`audit_estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditOptions {
    pub slack: f64,
    pub quad_steps: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { slack: DEFAULT_SLACK, quad_steps: 4096 }
    }
}

/// One audited snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRecord {
    pub t: f64,
    pub parts: EnergyParts,
    /// `Σ_j ‖⟨D⟩^{(1-j)κ} Op(e^{(τ'-θ₀t)⟨ξ⟩^κ}) ∂_t^j u‖²`.
    pub lhs: f64,
    pub ratio: f64,
    pub dedt: f64,
    /// `(1 + slack) E`.
    pub bound_rhs: f64,
    /// `bound_rhs - dedt`.
    pub margin: f64,
    pub flags: Vec<&'static str>,
}

/// Per-snapshot audit of the weighted energy along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub records: Vec<EnergyRecord>,
    /// `Σ_j ‖⟨D⟩^{1-j} Op(e^{τ⟨ξ⟩^κ}) ∂_t^j u(0)‖²`.
    pub initial_rhs: f64,
    pub theta0: f64,
    pub slack: f64,
}

impl EnergyReport {
    /// Fitted constant `max_t LHS(t)/LHS(0)`.
    pub fn constant(&self) -> f64 {
        self.records.iter().map(|r| r.ratio).fold(0.0, f64::max)
    }

    /// Share of snapshots with `dE/dt ≤ (1 + slack) E`.
    pub fn fraction_within_bound(&self) -> f64 {
        if self.records.is_empty() {
            return 1.0;
        }
        let ok = self.records.iter().filter(|r| !r.flags.contains(&"dedt")).count();
        ok as f64 / self.records.len() as f64
    }

    pub fn to_table(&self) -> Table {
        let mut table = Table::new(&["t", "E", "E1", "E2", "lhs_thm", "dEdt_fd", "bound_rhs", "margin", "flags"]);
        for r in &self.records {
            let flags = if r.flags.is_empty() { "ok".to_string() } else { r.flags.join("|") };
            table.push(vec![
                format_float(r.t),
                format_float(r.parts.e),
                format_float(r.parts.e1),
                format_float(r.parts.e2),
                format_float(r.lhs),
                format_float(r.dedt),
                format_float(r.bound_rhs),
                format_float(r.margin),
                flags,
            ]);
        }
        table
    }

    pub fn to_csv(&self) -> String {
        self.to_table().to_csv()
    }
}

fn weighted_sq(grid: &Grid, f: &[Complex64], ell: f64, c: f64, kappa: f64) -> Result<f64> {
    let w = grid.apply_multiplier(&weight_values(grid, ell, c, kappa)?, f);
    Ok(grid.inner(&w, &w).re)
}

/// Audit of the weighted energy along a trajectory of `Pu = 0`.
///
/// Each snapshot is conjugated to `v = Op(e^{(τ-θ₀t)⟨ξ⟩^κ})u`, `Λ` is rebuilt at
/// the snapshot times and `E(v)` is evaluated with `θ = θ₀`. The coefficients
/// must be the ones the trajectory was computed with, floors included.
#[allow(clippy::too_many_arguments)]
pub fn audit_estimate(
    grid: &Grid,
    snapshots: &[WaveState],
    b: &TimeCoefficient,
    a: &SpaceCoefficient,
    params: &GevreyParams,
    theta0: f64,
    tau: f64,
    tau_prime: f64,
    options: &AuditOptions,
) -> Result<EnergyReport> {
    if !(0.0 < tau_prime && tau_prime < tau) {
        return Err(Error::Parameter(format!("need 0 < tau' < tau, got tau' = {tau_prime}, tau = {tau}")));
    }
    if !(theta0 > 0.0) {
        return Err(Error::Parameter(format!("theta0 must be positive, got {theta0}")));
    }
    if !(options.slack >= 0.0) {
        return Err(Error::Parameter(format!("slack must be >= 0, got {}", options.slack)));
    }
    if snapshots.is_empty() {
        return Ok(EnergyReport { records: Vec::new(), initial_rhs: 0.0, theta0, slack: options.slack });
    }
    if snapshots[0].t != 0.0 {
        return Err(Error::Usage(format!("first snapshot must be at t = 0, got {}", snapshots[0].t)));
    }
    let times: Vec<f64> = snapshots.iter().map(|s| s.t).collect();
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Usage("snapshot times must be strictly increasing".into()));
    }
    let t_last = *times.last().unwrap();
    if t_last > tau_prime / theta0 * (1.0 + 1e-12) {
        return Err(Error::Usage(format!("snapshot t = {t_last} beyond tau'/theta0 = {}", tau_prime / theta0)));
    }
    if t_last > b.horizon() * (1.0 + 1e-12) {
        return Err(Error::Usage(format!("snapshot t = {t_last} beyond the horizon {} of b", b.horizon())));
    }
    for s in snapshots {
        s.check(grid)?;
    }
    let kappa = params.kappa;
    let phi = build_phi(a, grid, params)?;
    let lambdas = build_lambda_series(b, &phi, &times, params, options.quad_steps)?;
    let av = sampled(grid, a);
    let lk = bracket_values(grid, kappa)?;

    let s0 = &snapshots[0];
    let initial_rhs =
        weighted_sq(grid, &s0.u.values, 1.0, tau, kappa)? + weighted_sq(grid, &s0.ut.values, 0.0, tau, kappa)?;

    let mut records = Vec::with_capacity(snapshots.len());
    for (s, lambda) in snapshots.iter().zip(&lambdas) {
        let c = tau - theta0 * s.t;
        let w = weight_values(grid, 0.0, c, kappa)?;
        let v = grid.apply_multiplier(&w, &s.u.values);
        let lk_v = grid.apply_multiplier(&lk, &v);
        let vt = lin(
            Complex64::new(1.0, 0.0),
            &grid.apply_multiplier(&w, &s.ut.values),
            Complex64::new(-theta0, 0.0),
            &lk_v,
        );
        let state = WaveState::new(s.t, GridFunction::new(v), GridFunction::new(vt))?;
        let y = weyl_quantize(&exp_symbol(lambda, -1.0)?)?;
        let parts = energy_with(grid, &state, b.value(s.t), &av, &y, theta0, kappa)?;
        let cp = tau_prime - theta0 * s.t;
        let lhs = weighted_sq(grid, &s.u.values, kappa, cp, kappa)? + weighted_sq(grid, &s.ut.values, 0.0, cp, kappa)?;
        records.push(EnergyRecord {
            t: s.t,
            parts,
            lhs,
            ratio: 0.0,
            dedt: 0.0,
            bound_rhs: 0.0,
            margin: 0.0,
            flags: Vec::new(),
        });
    }

    let lhs0 = records[0].lhs;
    let e_scale = records.iter().map(|r| r.parts.scale()).fold(0.0, f64::max);
    let m = records.len();
    for i in 0..m {
        let (lo, hi) = if m == 1 {
            (0, 0)
        } else if i == 0 {
            (0, 1)
        } else if i == m - 1 {
            (m - 2, m - 1)
        } else {
            (i - 1, i + 1)
        };
        let dedt =
            if lo == hi { 0.0 } else { (records[hi].parts.e - records[lo].parts.e) / (records[hi].t - records[lo].t) };
        let r = &mut records[i];
        r.ratio = if lhs0 > 0.0 { r.lhs / lhs0 } else { 0.0 };
        r.dedt = dedt;
        r.bound_rhs = (1.0 + options.slack) * r.parts.e;
        r.margin = r.bound_rhs - dedt;
        if r.margin < -1e-12 * e_scale {
            r.flags.push("dedt");
        }
        if r.parts.negative() {
            r.flags.push("negative");
        }
        if r.parts.lower_bound_violated() {
            r.flags.push("lower_bound");
        }
        if !(r.lhs.is_finite() && r.parts.e.is_finite()) {
            r.flags.push("nonfinite");
        }
    }
    Ok(EnergyReport { records, initial_rhs, theta0, slack: options.slack })
}
