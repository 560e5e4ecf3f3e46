//! Coefficient pair `b(t)` (Hölder-regular, nonnegative) and `a(x)` (Gevrey,
//! nonnegative, periodic), with the constants the estimates depend on.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral_grid::{Grid, GridFunction};

/// Spectral coefficients below this fraction of the largest one are treated as
/// round-off when differentiating.
const SPECTRAL_NOISE_FLOOR: f64 = 1e-13;

/// Per-order derivative maxima above this are reported as a range error.
const DERIVATIVE_LIMIT: f64 = 1e250;

const CJS_START_STEPS: usize = 64;
const CJS_MAX_LEVELS: u32 = 22;
const CJS_REL_TOL: f64 = 1e-8;

/// Regularity index `N = n + α` of a `C^{n,α}` function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderIndex {
    pub n: u32,
    pub alpha: f64,
}

impl HolderIndex {
    pub fn new(n: u32, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Parameter(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if n as f64 + alpha <= 0.0 {
            return Err(Error::Parameter("regularity N = n + alpha must be positive".into()));
        }
        Ok(Self { n, alpha })
    }

    pub fn total(&self) -> f64 {
        self.n as f64 + self.alpha
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimeFamily {
    /// `b ≡ value`.
    Constant { value: f64 },
    /// `|t - center|^N`.
    Monomial { center: f64 },
    /// `floor + amplitude·sin²(frequency·t)`.
    SmoothOscillation { floor: f64, amplitude: f64, frequency: f64 },
    /// `Σ_{j=0}^{terms} base^{-jN} (1 - cos(base^j t))`.
    Weierstrass { base: u32, terms: u32 },
}

impl TimeFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            TimeFamily::Constant { .. } => "constant",
            TimeFamily::Monomial { .. } => "monomial",
            TimeFamily::SmoothOscillation { .. } => "smooth_osc",
            TimeFamily::Weierstrass { .. } => "weierstrass",
        }
    }
}

/// Nonnegative `b ∈ C^{n,α}([0, T])` with closed-form derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeCoefficient {
    family: TimeFamily,
    index: HolderIndex,
    horizon: f64,
    sup_b: f64,
    inf_b: f64,
    sup_abs_bprime: f64,
    floor: f64,
}

pub fn make_time_coefficient(family: TimeFamily, index: HolderIndex, horizon: f64) -> Result<TimeCoefficient> {
    HolderIndex::new(index.n, index.alpha)?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Parameter(format!("horizon T must be positive, got {horizon}")));
    }
    match &family {
        TimeFamily::Constant { value } if !(*value >= 0.0) => {
            return Err(Error::Parameter(format!("constant b must be >= 0, got {value}")))
        }
        TimeFamily::Monomial { center } if !(*center >= 0.0 && center.is_finite()) => {
            return Err(Error::Parameter(format!("monomial center must be >= 0, got {center}")))
        }
        TimeFamily::SmoothOscillation { floor, amplitude, frequency }
            if !(*floor >= 0.0 && *amplitude >= 0.0 && *frequency >= 0.0) =>
        {
            return Err(Error::Parameter("smooth_osc parameters must be nonnegative".into()))
        }
        TimeFamily::Weierstrass { base, terms } => {
            if *base < 2 {
                return Err(Error::Parameter(format!("weierstrass base must be an integer >= 2, got {base}")));
            }
            if *terms > 40 {
                return Err(Error::Parameter(format!("weierstrass truncation must be <= 40, got {terms}")));
            }
        }
        _ => {}
    }
    let mut b = TimeCoefficient { family, index, horizon, sup_b: 0.0, inf_b: 0.0, sup_abs_bprime: 0.0, floor: 0.0 };
    let (mut sup, mut inf, mut dsup) = (f64::NEG_INFINITY, f64::INFINITY, 0.0f64);
    for t in b.audit_times() {
        let v = b.value(t);
        sup = sup.max(v);
        inf = inf.min(v);
        let d = b.derivative(t).abs();
        if d.is_finite() {
            dsup = dsup.max(d);
        }
    }
    if inf < -1e-14 {
        return Err(Error::Parameter(format!("b takes the negative value {inf:e} on the audit grid")));
    }
    b.sup_b = sup;
    b.inf_b = inf.max(0.0);
    b.sup_abs_bprime = dsup;
    Ok(b)
}

fn falling_factorial(x: f64, k: u32) -> f64 {
    (0..k).map(|i| x - i as f64).product()
}

impl TimeCoefficient {
    pub fn family(&self) -> &TimeFamily {
        &self.family
    }

    pub fn index(&self) -> HolderIndex {
        self.index
    }

    /// `N = n + α`.
    pub fn regularity(&self) -> f64 {
        self.index.total()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn sup_b(&self) -> f64 {
        self.sup_b
    }

    pub fn inf_b(&self) -> f64 {
        self.inf_b
    }

    pub fn sup_abs_bprime(&self) -> f64 {
        self.sup_abs_bprime
    }

    /// The regularized coefficient `b + ε`.
    pub fn with_floor(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Parameter(format!("floor epsilon must be finite and >= 0, got {epsilon}")));
        }
        let mut out = self.clone();
        out.floor += epsilon;
        out.sup_b += epsilon;
        out.inf_b += epsilon;
        Ok(out)
    }

    /// Constant added to the family value by `with_floor`.
    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Highest angular frequency present, used to size audit grids.
    pub fn max_frequency(&self) -> f64 {
        match self.family {
            TimeFamily::Constant { .. } | TimeFamily::Monomial { .. } => 0.0,
            TimeFamily::SmoothOscillation { frequency, .. } => 2.0 * frequency,
            TimeFamily::Weierstrass { base, terms } => (base as f64).powi(terms as i32),
        }
    }

    /// Uniform audit samples of `[0, T]`, endpoints included.
    pub fn audit_times(&self) -> Vec<f64> {
        let m = (64.0 * self.max_frequency() * self.horizon).ceil().clamp(4096.0, (1u64 << 20) as f64) as usize;
        let mut ts: Vec<f64> = (0..=m).map(|i| self.horizon * i as f64 / m as f64).collect();
        if let TimeFamily::Monomial { center } = self.family {
            if center <= self.horizon {
                ts.push(center);
            }
        }
        ts
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivative_k(0, t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.derivative_k(1, t)
    }

    /// Closed-form `k`-th derivative.
    pub fn derivative_k(&self, k: u32, t: f64) -> f64 {
        let base = self.family_derivative(k, t);
        if k == 0 {
            base + self.floor
        } else {
            base
        }
    }

    fn family_derivative(&self, k: u32, t: f64) -> f64 {
        let nn = self.regularity();
        match self.family {
            TimeFamily::Constant { value } => {
                if k == 0 {
                    value
                } else {
                    0.0
                }
            }
            TimeFamily::Monomial { center } => {
                let s = t - center;
                let coeff = falling_factorial(nn, k);
                if coeff == 0.0 {
                    return 0.0;
                }
                let expo = nn - k as f64;
                if s == 0.0 {
                    return if expo > 0.0 {
                        0.0
                    } else if expo == 0.0 {
                        if k.is_multiple_of(2) {
                            coeff
                        } else {
                            0.0
                        }
                    } else {
                        f64::INFINITY
                    };
                }
                let sign = if s < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
                sign * coeff * s.abs().powf(expo)
            }
            TimeFamily::SmoothOscillation { floor, amplitude, frequency } => {
                // floor + A/2 - (A/2) cos(2ωt)
                let w = 2.0 * frequency;
                if k == 0 {
                    floor + amplitude * (frequency * t).sin().powi(2)
                } else {
                    -0.5 * amplitude * w.powi(k as i32) * (w * t + k as f64 * PI / 2.0).cos()
                }
            }
            TimeFamily::Weierstrass { base, terms } => {
                let lam = base as f64;
                let mut acc = 0.0;
                for j in 0..=terms {
                    let freq = lam.powi(j as i32);
                    let amp = lam.powf(-(j as f64) * nn);
                    if k == 0 {
                        acc += amp * (1.0 - (freq * t).cos());
                    } else {
                        acc -= amp * freq.powi(k as i32) * (freq * t + k as f64 * PI / 2.0).cos();
                    }
                }
                acc
            }
        }
    }

    /// Estimate of `‖b‖_{C^{n,α}}`: sup norms of derivatives up to order `n`
    /// plus the α-Hölder quotient of `∂^n b` maximized over a dyadic pair sample.
    pub fn holder_norm(&self) -> f64 {
        let n = self.index.n;
        let alpha = self.index.alpha;
        let ts = self.audit_times();
        let mut total = 0.0;
        for k in 0..=n {
            total += ts.iter().map(|&t| self.derivative_k(k, t).abs()).filter(|v| v.is_finite()).fold(0.0, f64::max);
        }
        let samples = 512;
        let mut quotient = 0.0f64;
        for level in 1..=24 {
            let gap = self.horizon / (1u64 << level) as f64;
            for i in 0..samples {
                let t = (self.horizon - gap) * i as f64 / (samples - 1) as f64;
                let diff = (self.derivative_k(n, t + gap) - self.derivative_k(n, t)).abs();
                if diff.is_finite() {
                    quotient = quotient.max(diff / gap.powf(alpha));
                }
            }
        }
        total + quotient
    }
}

/// Result of [`cjs_integral_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CjsReport {
    /// `∫_0^t |f'|/(f + r) ds`.
    pub integral: f64,
    /// `integral · r^{1/N}`, bounded in `r` when the integral bound holds.
    pub scaled: f64,
    /// `scaled / B^{1/N}` with `B` the Hölder-norm estimate: the implied constant `C_N`.
    pub implied_constant: f64,
    /// Number of interval doublings used.
    pub levels: u32,
}

fn midpoint<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, steps: usize) -> f64 {
    let h = (b - a) / steps as f64;
    let mut acc = 0.0;
    for i in 0..steps {
        acc += f(a + (i as f64 + 0.5) * h);
    }
    acc * h
}

/// Composite midpoint rule on `[a, b]`, doubling from 64 cells until two
/// successive values agree to `1e-8` relative.
pub fn adaptive_midpoint<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<(f64, u32)> {
    if b <= a {
        return Ok((0.0, 0));
    }
    let mut steps = CJS_START_STEPS;
    let mut prev = midpoint(&f, a, b, steps);
    for level in 1..=CJS_MAX_LEVELS {
        steps *= 2;
        let next = midpoint(&f, a, b, steps);
        if !next.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand value at level {level}")));
        }
        if (next - prev).abs() <= CJS_REL_TOL * next.abs() {
            return Ok((next, level));
        }
        prev = next;
    }
    Err(Error::Quadrature(format!("midpoint rule not converged after {CJS_MAX_LEVELS} refinement levels")))
}

/// `∫_0^t |∂_t f| / (f + r) ds` together with its `r^{1/N}`-scaled value.
pub fn cjs_integral_bound(f: &TimeCoefficient, r: f64, t: f64) -> Result<CjsReport> {
    if !(r > 0.0) {
        return Err(Error::Parameter(format!("r must be positive, got {r}")));
    }
    if !(0.0..=f.horizon()).contains(&t) {
        return Err(Error::Parameter(format!("t = {t} outside [0, {}]", f.horizon())));
    }
    let (integral, levels) = adaptive_midpoint(|s| f.derivative(s).abs() / (f.value(s) + r), 0.0, t)?;
    let inv_n = 1.0 / f.regularity();
    let scaled = integral * r.powf(inv_n);
    let b = f.holder_norm();
    let implied_constant = if b > 0.0 { scaled / b.powf(inv_n) } else { 0.0 };
    Ok(CjsReport { integral, scaled, implied_constant, levels })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpaceFamily {
    /// `a ≡ value`.
    Constant {
        value: f64,
    },
    /// `amplitude·(1 - cos(2πx/L))`, analytic with a quadratic zero at 0.
    TrigDegenerate {
        amplitude: f64,
    },
    /// `height·exp(-(1 - y²)^{-1/(order-1)})`, `y = (x - center)/radius` on the
    /// shorter arc, zero for `|y| ≥ 1`.
    GevreyBump {
        center: f64,
        radius: f64,
        order: f64,
        height: f64,
    },
    Sum(Vec<SpaceFamily>),
}

impl SpaceFamily {
    pub fn tag(&self) -> String {
        match self {
            SpaceFamily::Constant { .. } => "constant".into(),
            SpaceFamily::TrigDegenerate { .. } => "trig_degenerate".into(),
            SpaceFamily::GevreyBump { .. } => "gevrey_bump".into(),
            SpaceFamily::Sum(parts) => {
                let tags: Vec<String> = parts.iter().map(|p| p.tag()).collect();
                format!("sum({})", tags.join("+"))
            }
        }
    }

    fn validate(&self, period: f64) -> Result<()> {
        match self {
            SpaceFamily::Constant { value } if !(*value >= 0.0) => {
                Err(Error::Parameter(format!("constant a must be >= 0, got {value}")))
            }
            SpaceFamily::TrigDegenerate { amplitude } if !(*amplitude >= 0.0) => {
                Err(Error::Parameter(format!("trig_degenerate amplitude must be >= 0, got {amplitude}")))
            }
            SpaceFamily::GevreyBump { radius, order, height, center } => {
                if !(*radius > 0.0) || *radius >= period / 2.0 {
                    return Err(Error::Parameter(format!(
                        "bump radius {radius} must lie in (0, L/2) = (0, {})",
                        period / 2.0
                    )));
                }
                if !(*order > 1.0) {
                    return Err(Error::Parameter(format!("Gevrey order must exceed 1, got {order}")));
                }
                if !(*height >= 0.0) || !center.is_finite() {
                    return Err(Error::Parameter("bump height must be >= 0 and center finite".into()));
                }
                Ok(())
            }
            SpaceFamily::Sum(parts) => {
                if parts.is_empty() {
                    return Err(Error::Parameter("empty coefficient sum".into()));
                }
                parts.iter().try_for_each(|p| p.validate(period))
            }
            _ => Ok(()),
        }
    }

    fn gevrey_order(&self) -> f64 {
        match self {
            SpaceFamily::Constant { .. } | SpaceFamily::TrigDegenerate { .. } => 1.0,
            SpaceFamily::GevreyBump { order, .. } => *order,
            SpaceFamily::Sum(parts) => parts.iter().map(|p| p.gevrey_order()).fold(1.0, f64::max),
        }
    }

    /// `(a, a', a'')` at `x`.
    fn jet(&self, x: f64, period: f64) -> [f64; 3] {
        match self {
            SpaceFamily::Constant { value } => [*value, 0.0, 0.0],
            SpaceFamily::TrigDegenerate { amplitude } => {
                let k = 2.0 * PI / period;
                let (s, c) = (k * x).sin_cos();
                [amplitude * (1.0 - c), amplitude * k * s, amplitude * k * k * c]
            }
            SpaceFamily::GevreyBump { center, radius, order, height } => {
                let d = wrapped_difference(x - center, period);
                let y = d / radius;
                let one_m = 1.0 - y * y;
                if one_m <= 0.0 {
                    return [0.0; 3];
                }
                let p = 1.0 / (order - 1.0);
                let base = one_m.powf(-p);
                let f = height * (-base).exp();
                if f == 0.0 {
                    return [0.0; 3];
                }
                // g = -(1-y²)^{-p}
                let g1 = -2.0 * p * y * base / one_m;
                let g2 = -2.0 * p * base / one_m - 4.0 * p * (p + 1.0) * y * y * base / (one_m * one_m);
                [f, f * g1 / radius, f * (g1 * g1 + g2) / (radius * radius)]
            }
            SpaceFamily::Sum(parts) => parts.iter().fold([0.0; 3], |acc, p| {
                let j = p.jet(x, period);
                [acc[0] + j[0], acc[1] + j[1], acc[2] + j[2]]
            }),
        }
    }
}

/// Representative of `d` modulo `L` in `(-L/2, L/2]`.
pub fn wrapped_difference(d: f64, period: f64) -> f64 {
    let r = d.rem_euclid(period);
    if r > period / 2.0 {
        r - period
    } else {
        r
    }
}

/// Nonnegative periodic `a ∈ G^s` with fitted Gevrey constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceCoefficient {
    family: SpaceFamily,
    period: f64,
    gevrey_order: f64,
    c_a: f64,
    a_a: f64,
}

pub fn make_space_coefficient(family: SpaceFamily, grid: &Grid) -> Result<SpaceCoefficient> {
    family.validate(grid.period())?;
    let mut a =
        SpaceCoefficient { gevrey_order: family.gevrey_order(), family, period: grid.period(), c_a: 0.0, a_a: 0.0 };
    let k_max = (grid.n_points() / 4).min(12) as u32;
    let fit = estimate_gevrey_constants(&a, grid, k_max)?;
    a.c_a = fit.c_a;
    a.a_a = fit.a_a;
    Ok(a)
}

impl SpaceCoefficient {
    pub fn family(&self) -> &SpaceFamily {
        &self.family
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn gevrey_order(&self) -> f64 {
        self.gevrey_order
    }

    /// Fitted `(C_a, A_a)` with `|∂^k a| ≤ C_a A_a^k k!^s`.
    pub fn gevrey_constants(&self) -> (f64, f64) {
        (self.c_a, self.a_a)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.family.jet(x, self.period)[0]
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.family.jet(x, self.period)[1]
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.family.jet(x, self.period)[2]
    }

    pub fn is_constant(&self) -> bool {
        match &self.family {
            SpaceFamily::Constant { .. } => true,
            SpaceFamily::TrigDegenerate { amplitude } => *amplitude == 0.0,
            SpaceFamily::GevreyBump { height, .. } => *height == 0.0,
            SpaceFamily::Sum(_) => false,
        }
    }

    /// Sample points `8n` per period used for sup/inf audits.
    pub fn audit_points(&self, grid: &Grid) -> Vec<f64> {
        let m = 8 * grid.n_points();
        (0..m).map(|i| self.period * i as f64 / m as f64).collect()
    }

    pub fn sup(&self, grid: &Grid) -> f64 {
        self.audit_points(grid).into_iter().map(|x| self.value(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// The regularized coefficient `a + ε`.
    pub fn with_floor(&self, epsilon: f64, grid: &Grid) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Parameter(format!("floor epsilon must be finite and >= 0, got {epsilon}")));
        }
        if epsilon == 0.0 {
            return Ok(self.clone());
        }
        let family = SpaceFamily::Sum(vec![self.family.clone(), SpaceFamily::Constant { value: epsilon }]);
        make_space_coefficient(family, grid)
    }

    pub fn sample(&self, grid: &Grid) -> GridFunction {
        GridFunction::from_real_fn(grid, |x| self.value(x))
    }
}

/// One row of a Gevrey fit: measured `max|∂^k a|` against `C A^k k!^s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GevreyRow {
    pub k: u32,
    pub max_abs: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GevreyFit {
    pub c_a: f64,
    pub a_a: f64,
    pub s: f64,
    pub rows: Vec<GevreyRow>,
}

fn ln_factorial(k: u32) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// Maxima of spectral derivatives `∂^k a`, `k = 0..=k_max`, on the grid nodes.
pub fn spectral_derivative_maxima(values: &[f64], grid: &Grid, k_max: u32) -> Result<Vec<f64>> {
    let u: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut hat = grid.forward(&u);
    let top = hat.iter().map(|c| c.norm()).fold(0.0, f64::max);
    hat.iter_mut().for_each(|c| {
        if c.norm() < SPECTRAL_NOISE_FLOOR * top {
            *c = Complex64::new(0.0, 0.0);
        }
    });
    let mut out = Vec::with_capacity(k_max as usize + 1);
    for k in 0..=k_max {
        let dk: Vec<Complex64> =
            hat.iter().enumerate().map(|(m, c)| c * Complex64::new(0.0, grid.xi_mode(m)).powu(k)).collect();
        let m = grid.inverse(&dk).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !(m <= DERIVATIVE_LIMIT) {
            return Err(Error::Range(format!("spectral derivative of order {k} reached {m:e}")));
        }
        out.push(m);
    }
    Ok(out)
}

/// Fit `C_a = max|a| + 1` and the least `A_a` with `max|∂^k a| ≤ C_a A_a^k k!^s`
/// for `1 ≤ k ≤ k_max`. `A_a = 1` when every derivative vanishes.
pub fn estimate_gevrey_constants(a: &SpaceCoefficient, grid: &Grid, k_max: u32) -> Result<GevreyFit> {
    if k_max as usize > grid.n_points() / 4 {
        return Err(Error::Range(format!("k_max = {k_max} exceeds n_points/4 = {}", grid.n_points() / 4)));
    }
    let s = a.gevrey_order();
    let values: Vec<f64> = grid.x_nodes().into_iter().map(|x| a.value(x)).collect();
    let maxima = spectral_derivative_maxima(&values, grid, k_max)?;
    let c_a = maxima[0] + 1.0;
    let mut ln_a = f64::NEG_INFINITY;
    for (k, &m) in maxima.iter().enumerate().skip(1) {
        if m > 0.0 {
            let cand = ((m / c_a).ln() - s * ln_factorial(k as u32)) / k as f64;
            ln_a = ln_a.max(cand);
        }
    }
    let a_a = if ln_a.is_finite() { ln_a.exp() } else { 1.0 };
    let rows = maxima
        .iter()
        .enumerate()
        .map(|(k, &m)| GevreyRow {
            k: k as u32,
            max_abs: m,
            envelope: c_a * (k as f64 * a_a.ln() + s * ln_factorial(k as u32)).exp(),
        })
        .collect();
    Ok(GevreyFit { c_a, a_a, s, rows })
}

/// Outcome of the Glaeser check `c*·a(x) - b(t)·a'(x)² ≥ -tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlaeserReport {
    pub c_star: f64,
    pub sup_a_second: f64,
    /// Minimum of `c*·a - b·(a')²` over the audit grids.
    pub min_margin: f64,
    pub tolerance: f64,
    pub holds: bool,
    /// False when `sup a'' < 0` for a nonconstant `a`.
    pub convexity_ok: bool,
}

/// `c* = 2 sup_t b · sup_x a''` with the pointwise Glaeser check.
///
/// The check is linear in `b`, so it is evaluated at `inf b` and `sup b`,
/// which covers every `t` of the audit grid.
pub fn glaeser_constant(b: &TimeCoefficient, a: &SpaceCoefficient, grid: &Grid) -> GlaeserReport {
    let xs = a.audit_points(grid);
    let jets: Vec<[f64; 3]> = xs.iter().map(|&x| a.family.jet(x, a.period)).collect();
    let sup_a2 = jets.iter().map(|j| j[2]).fold(f64::NEG_INFINITY, f64::max);
    let sup_a = jets.iter().map(|j| j[0]).fold(f64::NEG_INFINITY, f64::max);
    let c_star = 2.0 * b.sup_b() * sup_a2;
    let mut min_margin = f64::INFINITY;
    for bv in [b.inf_b(), b.sup_b()] {
        for j in &jets {
            min_margin = min_margin.min(c_star * j[0] - bv * j[1] * j[1]);
        }
    }
    let tolerance = 1e-10 * (1.0 + c_star.abs() * sup_a);
    let convexity_ok = !(sup_a2 < 0.0 && !a.is_constant());
    GlaeserReport {
        c_star,
        sup_a_second: sup_a2,
        min_margin,
        tolerance,
        holds: min_margin >= -tolerance && convexity_ok,
        convexity_ok,
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_slope(&lx, &ly)
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fd(f: impl Fn(f64) -> f64, t: f64) -> f64 {
        let h = 1e-5;
        (f(t + h) - f(t - h)) / (2.0 * h)
    }

    fn grid() -> Grid {
        Grid::new(128, 2.0 * PI, 1.0).unwrap()
    }

    #[test]
    fn monomial_values_and_derivatives() {
        let b = make_time_coefficient(TimeFamily::Monomial { center: 0.5 }, HolderIndex::new(2, 0.5).unwrap(), 1.0)
            .unwrap();
        assert_relative_eq!(b.value(0.1), 0.4f64.powf(2.5), max_relative = 1e-14);
        for t in [0.1, 0.3, 0.7, 0.95] {
            assert_relative_eq!(b.derivative(t), fd(|s| b.value(s), t), max_relative = 1e-7);
            assert_relative_eq!(b.derivative_k(2, t), fd(|s| b.derivative(s), t), max_relative = 1e-6);
        }
        assert_eq!(b.value(0.5), 0.0);
        assert_eq!(b.inf_b(), 0.0);
    }

    #[test]
    fn integer_monomial_second_derivative_is_constant() {
        let b = make_time_coefficient(TimeFamily::Monomial { center: 0.0 }, HolderIndex::new(2, 0.0).unwrap(), 1.0)
            .unwrap();
        assert_eq!(b.derivative_k(2, 0.0), 2.0);
        assert_eq!(b.derivative_k(2, 0.4), 2.0);
        assert_eq!(b.derivative_k(3, 0.4), 0.0);
    }

    #[test]
    fn oscillation_and_weierstrass_derivatives() {
        let osc = make_time_coefficient(
            TimeFamily::SmoothOscillation { floor: 0.1, amplitude: 2.0, frequency: 3.0 },
            HolderIndex::new(4, 0.0).unwrap(),
            2.0,
        )
        .unwrap();
        let w = make_time_coefficient(
            TimeFamily::Weierstrass { base: 2, terms: 5 },
            HolderIndex::new(0, 0.6).unwrap(),
            1.0,
        )
        .unwrap();
        for t in [0.13, 0.5, 0.77] {
            assert_relative_eq!(osc.derivative(t), fd(|s| osc.value(s), t), max_relative = 1e-7);
            assert_relative_eq!(w.derivative(t), fd(|s| w.value(s), t), max_relative = 1e-6);
        }
        // b' = Σ λ^{j(1-N)} sin(λ^j t)
        let t = 0.3f64;
        let expect: f64 = (0..=5).map(|j| 2f64.powf(j as f64 * 0.4) * (2f64.powi(j) * t).sin()).sum();
        assert_relative_eq!(w.derivative(t), expect, max_relative = 1e-13);
        assert!(w.audit_times().len() > 4096);
        assert_relative_eq!(osc.sup_b(), 2.1, max_relative = 1e-6);
    }

    #[test]
    fn invalid_time_parameters_are_rejected() {
        let idx = HolderIndex::new(1, 0.0).unwrap();
        assert!(make_time_coefficient(TimeFamily::Constant { value: -1.0 }, idx, 1.0).is_err());
        assert!(make_time_coefficient(TimeFamily::Weierstrass { base: 1, terms: 3 }, idx, 1.0).is_err());
        assert!(make_time_coefficient(TimeFamily::Weierstrass { base: 2, terms: 41 }, idx, 1.0).is_err());
        assert!(make_time_coefficient(TimeFamily::Constant { value: 1.0 }, idx, 0.0).is_err());
        assert!(HolderIndex::new(1, 1.5).is_err());
        assert!(HolderIndex::new(0, 0.0).is_err());
    }

    #[test]
    fn integral_of_square_matches_closed_form() {
        let b = make_time_coefficient(TimeFamily::Monomial { center: 0.0 }, HolderIndex::new(2, 0.0).unwrap(), 1.0)
            .unwrap();
        for r in [1e-1, 1e-3, 1e-5] {
            let rep = cjs_integral_bound(&b, r, 1.0).unwrap();
            assert_relative_eq!(rep.integral, ((1.0 + r) / r).ln(), max_relative = 1e-7);
            assert_relative_eq!(rep.scaled, rep.integral * r.sqrt(), max_relative = 1e-14);
        }
        assert!(cjs_integral_bound(&b, 0.0, 1.0).is_err());
        assert!(cjs_integral_bound(&b, 0.1, 2.0).is_err());
        // |t - 1/2|^N: 2 ln(1 + 2^{-N}/r), logarithmic rather than r^{-1/N}
        for n in [2u32, 3] {
            let b = make_time_coefficient(TimeFamily::Monomial { center: 0.5 }, HolderIndex::new(n, 0.0).unwrap(), 1.0)
                .unwrap();
            for r in [1e-2, 1e-4, 1e-6] {
                let expect = 2.0 * (1.0 + 0.5f64.powi(n as i32) / r).ln();
                assert_relative_eq!(cjs_integral_bound(&b, r, 1.0).unwrap().integral, expect, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn constant_b_gives_zero_integral() {
        let b =
            make_time_coefficient(TimeFamily::Constant { value: 0.0 }, HolderIndex::new(1, 0.0).unwrap(), 1.0).unwrap();
        assert_eq!(cjs_integral_bound(&b, 1e-3, 1.0).unwrap().integral, 0.0);
    }

    #[test]
    fn trig_gevrey_constants_match_closed_form() {
        let g = grid();
        let a = make_space_coefficient(SpaceFamily::TrigDegenerate { amplitude: 1.0 }, &g).unwrap();
        let fit = estimate_gevrey_constants(&a, &g, 12).unwrap();
        let k0 = 2.0 * PI / g.period();
        let expect =
            (1..=12u32).map(|k| k0 * (1.0 / (3.0 * ln_factorial(k).exp())).powf(1.0 / k as f64)).fold(0.0, f64::max);
        assert_relative_eq!(fit.c_a, 3.0, max_relative = 1e-12);
        assert_relative_eq!(fit.a_a, expect, max_relative = 1e-6);
        for row in &fit.rows {
            assert!(row.max_abs <= row.envelope * (1.0 + 1e-12));
        }
    }

    #[test]
    fn constant_coefficient_has_unit_growth_rate() {
        let g = grid();
        let a = make_space_coefficient(SpaceFamily::Constant { value: 2.0 }, &g).unwrap();
        let (c, growth) = a.gevrey_constants();
        assert_relative_eq!(c, 3.0, max_relative = 1e-14);
        assert_eq!(growth, 1.0);
        assert!(estimate_gevrey_constants(&a, &g, 40).is_err());
    }

    #[test]
    fn bump_jet_matches_finite_differences() {
        let bump = SpaceFamily::GevreyBump { center: 1.0, radius: 1.2, order: 1.5, height: 3.0 };
        let a = make_space_coefficient(bump, &grid()).unwrap();
        for x in [0.3, 0.9, 1.4, 2.1, 6.0] {
            assert_relative_eq!(a.d1(x), fd(|s| a.value(s), x), max_relative = 1e-6, epsilon = 1e-12);
            assert_relative_eq!(a.d2(x), fd(|s| a.d1(s), x), max_relative = 1e-6, epsilon = 1e-12);
        }
        assert_eq!(a.value(1.0 + 1.2), 0.0);
        assert_relative_eq!(a.value(1.0), 3.0 * (-1.0f64).exp(), max_relative = 1e-15);
        // periodic wrap
        assert_relative_eq!(a.value(1.0 - 0.5), a.value(1.0 - 0.5 + 2.0 * PI), max_relative = 1e-12);
    }

    #[test]
    fn invalid_space_parameters_are_rejected() {
        let g = grid();
        let bad = [
            SpaceFamily::Constant { value: -0.1 },
            SpaceFamily::TrigDegenerate { amplitude: -1.0 },
            SpaceFamily::GevreyBump { center: 0.0, radius: 4.0, order: 1.5, height: 1.0 },
            SpaceFamily::GevreyBump { center: 0.0, radius: 1.0, order: 1.0, height: 1.0 },
            SpaceFamily::Sum(vec![]),
        ];
        for f in bad {
            assert!(matches!(make_space_coefficient(f, &g), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn glaeser_holds_for_standard_pairs() {
        let g = grid();
        let idx = HolderIndex::new(1, 0.0).unwrap();
        let bs = [
            make_time_coefficient(TimeFamily::Constant { value: 1.0 }, idx, 1.0).unwrap(),
            make_time_coefficient(TimeFamily::Monomial { center: 0.5 }, idx, 1.0).unwrap(),
        ];
        let fams = [
            SpaceFamily::TrigDegenerate { amplitude: 0.7 },
            SpaceFamily::GevreyBump { center: 2.0, radius: 1.5, order: 1.5, height: 1.0 },
            SpaceFamily::Sum(vec![
                SpaceFamily::TrigDegenerate { amplitude: 0.3 },
                SpaceFamily::GevreyBump { center: 4.0, radius: 1.0, order: 2.0, height: 0.5 },
            ]),
        ];
        for b in &bs {
            for f in &fams {
                let a = make_space_coefficient(f.clone(), &g).unwrap();
                let rep = glaeser_constant(b, &a, &g);
                assert!(rep.holds, "{} {:?}", f.tag(), rep);
                assert!(rep.c_star > 0.0);
            }
        }
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let xs = [1e-1, 1e-2, 1e-3, 1e-4];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.4)).collect();
        assert_relative_eq!(fit_loglog_slope(&xs, &ys), -0.4, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn bump_is_nonnegative(x in -10.0f64..10.0, r in 0.2f64..3.0, s in 1.1f64..3.0) {
            let f = SpaceFamily::GevreyBump { center: 1.0, radius: r, order: s, height: 1.0 };
            let a = make_space_coefficient(f, &grid()).unwrap();
            prop_assert!(a.value(x) >= 0.0);
        }

        #[test]
        fn glaeser_margin_nonnegative_for_trig(c0 in 0.0f64..5.0, bmax in 0.0f64..4.0) {
            let g = grid();
            let b = make_time_coefficient(
                TimeFamily::SmoothOscillation { floor: 0.0, amplitude: bmax, frequency: 2.0 },
                HolderIndex::new(2, 0.0).unwrap(), 1.0).unwrap();
            let a = make_space_coefficient(SpaceFamily::TrigDegenerate { amplitude: c0 }, &g).unwrap();
            prop_assert!(glaeser_constant(&b, &a, &g).holds);
        }
    }
}
