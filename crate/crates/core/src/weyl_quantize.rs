//! Discrete Weyl quantization on the periodic lattice, exact composition via
//! the inverse transform, the asymptotic composition expansion and
//! conjugation by Gevrey weights.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coefficients::{fit_loglog_slope, SpaceCoefficient};
use crate::error::{Error, Result};
use crate::spectral_grid::{bracket, Grid};
use crate::symbol_calculus::{exp_symbol, gevrey_weight, Symbol};
use crate::table::{format_float, Table};

/// Seed of the power-iteration start vector.
pub const POWER_SEED: u64 = 0x6777_6c5f_706f_7765;
pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 10_000;

/// Frobenius norm below which a Neumann term is dropped.
pub const NEUMANN_TERM_TOL: f64 = 1e-12;

/// Largest grid for dense composition.
pub const DENSE_LIMIT: usize = 1024;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense `n × n` operator on grid functions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    grid: Grid,
    entries: Vec<Complex64>,
}

impl OperatorMatrix {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.n_points();
        Self { grid: grid.clone(), entries: vec![ZERO; n * n] }
    }

    pub fn identity(grid: &Grid) -> Self {
        let mut m = Self::zeros(grid);
        for j in 0..grid.n_points() {
            m.set(j, j, ONE);
        }
        m
    }

    pub fn from_entries(grid: &Grid, entries: Vec<Complex64>) -> Result<Self> {
        let n = grid.n_points();
        if entries.len() != n * n {
            return Err(Error::Parameter(format!("matrix needs {} entries, got {}", n * n, entries.len())));
        }
        if entries.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Range("non-finite matrix entry".into()));
        }
        Ok(Self { grid: grid.clone(), entries })
    }

    /// Matrix of a Fourier multiplier `m(ξ)`.
    pub fn multiplier<F: Fn(f64) -> Complex64>(grid: &Grid, m: F) -> Result<Self> {
        weyl_quantize(&Symbol::from_xi_fn(grid, m)?)
    }

    pub fn diagonal(grid: &Grid, d: &[Complex64]) -> Self {
        let mut m = Self::zeros(grid);
        for (j, &v) in d.iter().enumerate() {
            m.set(j, j, v);
        }
        m
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n_points()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn get(&self, j: usize, m: usize) -> Complex64 {
        self.entries[j * self.n() + m]
    }

    pub fn set(&mut self, j: usize, m: usize, v: Complex64) {
        let n = self.n();
        self.entries[j * n + m] = v;
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Parameter("operators live on different grids".into()));
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let n = self.n();
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            let row = &mut out[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a == ZERO {
                    continue;
                }
                let b = &other.entries[k * n..(k + 1) * n];
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        }
        Ok(Self { grid: self.grid.clone(), entries: out })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            grid: self.grid.clone(),
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            grid: self.grid.clone(),
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { grid: self.grid.clone(), entries: self.entries.iter().map(|v| v * c).collect() }
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n();
        let mut out = vec![ZERO; n * n];
        for j in 0..n {
            for m in 0..n {
                out[m * n + j] = self.entries[j * n + m].conj();
            }
        }
        Self { grid: self.grid.clone(), entries: out }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        (0..n).map(|j| self.entries[j * n..(j + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `max |M - M*|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for j in 0..n {
            for m in 0..n {
                worst = worst.max((self.get(j, m) - self.get(m, j).conj()).norm());
            }
        }
        worst
    }
}

/// Representative of `j - m` modulo `n` in `(-n/2, n/2]`.
pub fn wrapped_index(d: i64, n: usize) -> i64 {
    let n = n as i64;
    let r = d.rem_euclid(n);
    if r > n / 2 {
        r - n
    } else {
        r
    }
}

fn check_dense(grid: &Grid) -> Result<()> {
    if grid.n_points() > DENSE_LIMIT {
        return Err(Error::Parameter(format!(
            "dense operators are limited to n_points <= {DENSE_LIMIT}, got {}",
            grid.n_points()
        )));
    }
    Ok(())
}

/// `Op(p)` with kernel `K(j, m) = (1/n) Σ_k p(x_h, ξ_k) e^{2πik·d/n}`, where
/// `d = j - m` wrapped into `(-n/2, n/2]` and `h = 2j - d` indexes the midpoint
/// on the refined grid.
pub fn weyl_quantize(p: &Symbol) -> Result<OperatorMatrix> {
    let grid = p.grid();
    check_dense(grid)?;
    let n = grid.n_points();
    let scale = 1.0 / (n as f64).sqrt();
    // rows[h][d mod n] = (1/n) Σ_k p(h, k) e^{2πikd/n}
    let mut rows = Vec::with_capacity(2 * n);
    let mut buf = vec![ZERO; n];
    for h in 0..2 * n {
        for q in 0..n {
            buf[grid.natural_to_mode(q)] = p.get(h, q);
        }
        rows.push(grid.inverse(&buf).into_iter().map(|v| v * scale).collect::<Vec<_>>());
    }
    let mut m = OperatorMatrix::zeros(grid);
    for j in 0..n {
        for col in 0..n {
            let d = wrapped_index(j as i64 - col as i64, n);
            let h = (2 * j as i64 - d).rem_euclid(2 * n as i64) as usize;
            m.set(j, col, rows[h][d.rem_euclid(n as i64) as usize]);
        }
    }
    if m.entries.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Range("non-finite operator entry".into()));
    }
    Ok(m)
}

/// Inverse of [`weyl_quantize`]: the unique symbol with `x`-frequencies in
/// `[-n/2, n/2)` on the refined grid whose quantization is `m`.
pub fn weyl_symbol(m: &OperatorMatrix) -> Result<Symbol> {
    let grid = m.grid();
    let n = grid.n_points();
    let sn = (n as f64).sqrt();
    let dds: Vec<i64> = (0..n as i64).map(|i| wrapped_index(i, n)).collect();
    // g_hat[e_mode][d_mode]
    let mut g_hat = vec![vec![ZERO; n]; n];
    let mut diag = vec![ZERO; n];
    for &d in &dds {
        for (j, v) in diag.iter_mut().enumerate() {
            *v = m.get(j, (j as i64 - d).rem_euclid(n as i64) as usize);
        }
        // (1/n) Σ_j D[j] e^{-2πiej/n}
        let dh = grid.forward(&diag);
        let d_mode = d.rem_euclid(n as i64) as usize;
        for (e_mode, v) in dh.into_iter().enumerate() {
            let e = grid.wavenumber(e_mode) as f64;
            let phase = Complex64::from_polar(1.0, std::f64::consts::PI * e * d as f64 / n as f64);
            g_hat[e_mode][d_mode] = v / sn * phase;
        }
    }
    // G_e(k) = Σ_d g_hat_e(d) e^{-2πikd/n}
    let g: Vec<Vec<Complex64>> =
        g_hat.iter().map(|row| grid.forward(row).into_iter().map(|v| v * sn).collect()).collect();
    // p(h, k) = Σ_e e^{iπeh/n} G_e(k), a length-2n synthesis
    let fine = Grid::new(2 * n, grid.period(), grid.mu())?;
    let s2 = ((2 * n) as f64).sqrt();
    let mut values = vec![ZERO; 2 * n * n];
    let mut buf = vec![ZERO; 2 * n];
    for q in 0..n {
        let k_mode = grid.natural_to_mode(q);
        buf.iter_mut().for_each(|v| *v = ZERO);
        for (e_mode, row) in g.iter().enumerate() {
            let e = grid.wavenumber(e_mode);
            buf[e.rem_euclid(2 * n as i64) as usize] = row[k_mode];
        }
        for (h, v) in fine.inverse(&buf).into_iter().enumerate() {
            values[h * n + q] = v * s2;
        }
    }
    Symbol::from_values(grid, values)
}

/// Symbol of `Op(p)·Op(q)`, exact on the lattice.
pub fn exact_sharp(p: &Symbol, q: &Symbol) -> Result<Symbol> {
    weyl_symbol(&weyl_quantize(p)?.matmul(&weyl_quantize(q)?)?)
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `Σ_{k+l<N} (-1)^k / ((2i)^{k+l} k! l!) (∂_x^k ∂_ξ^l p)(∂_x^l ∂_ξ^k q)`.
pub fn expansion_sharp(p: &Symbol, q: &Symbol, n_terms: u32) -> Result<Symbol> {
    if n_terms == 0 || n_terms > 6 {
        return Err(Error::Parameter(format!("n_terms must lie in 1..=6, got {n_terms}")));
    }
    let mut acc = Symbol::constant(p.grid(), ZERO);
    for order in 0..n_terms {
        for k in 0..=order {
            let l = order - k;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let coeff = Complex64::new(0.0, 2.0).powu(order).inv() * (sign / (factorial(k) * factorial(l)));
            let term = p.derivative(k, l)?.mul(&q.derivative(l, k)?)?;
            acc = acc.add(&term.scale(coeff))?;
        }
    }
    Ok(acc)
}

/// Band `[lo, hi)` of `⟨ξ⟩_μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn center(&self) -> f64 {
        (self.lo * self.hi).sqrt()
    }
}

/// Bands covering `[lo, hi]` with `per_octave` bands per doubling.
pub fn geometric_bands(lo: f64, hi: f64, per_octave: u32) -> Vec<Band> {
    let ratio = 2f64.powf(1.0 / per_octave as f64);
    let count = ((hi / lo).log2() * per_octave as f64).round().max(1.0) as usize;
    (0..count)
        .map(|i| {
            let b_lo = lo * ratio.powi(i as i32);
            let b_hi = if i + 1 == count { hi * (1.0 + 1e-12) } else { lo * ratio.powi(i as i32 + 1) };
            Band { lo: b_lo, hi: b_hi }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandRow {
    pub band: Band,
    pub value: f64,
}

/// Per-band sup norms with a fitted power of `⟨ξ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandReport {
    pub experiment: String,
    pub rows: Vec<BandRow>,
    pub fitted_slope: f64,
}

impl BandReport {
    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    pub fn sup(&self) -> f64 {
        self.rows.iter().map(|r| r.value).fold(0.0, f64::max)
    }

    pub fn append_to(&self, table: &mut Table) {
        for r in &self.rows {
            table.push(vec![
                self.experiment.clone(),
                format_float(r.band.lo),
                format_float(r.band.hi),
                format_float(r.value),
                format_float(self.fitted_slope),
            ]);
        }
    }

    pub fn to_table(&self) -> Table {
        let mut t = band_table();
        self.append_to(&mut t);
        t
    }
}

/// Empty table with the band-report header.
pub fn band_table() -> Table {
    Table::new(&["experiment", "band_lo", "band_hi", "value", "fitted_slope"])
}

/// Sup of `|p|` over each band, using only columns with `|ξ| ≤ ξ_max/2`, and
/// the least-squares slope of `log sup` against `log` of the band centers.
pub fn band_report(p: &Symbol, bands: &[Band], experiment: &str) -> BandReport {
    let grid = p.grid();
    let lim = p.interior_xi_limit();
    let mut rows = Vec::new();
    for &band in bands {
        let cols: Vec<usize> = (0..p.n_xi())
            .filter(|&q| {
                let xi = grid.xi_natural(q);
                let b = bracket(xi, grid.mu());
                xi.abs() <= lim && b >= band.lo && b < band.hi
            })
            .collect();
        if cols.is_empty() {
            continue;
        }
        let mut v = 0.0f64;
        for h in 0..p.n_x() {
            for &q in &cols {
                v = v.max(p.get(h, q).norm());
            }
        }
        rows.push(BandRow { band, value: v });
    }
    let fitted_slope = fit_rows(&rows);
    BandReport { experiment: experiment.to_string(), rows, fitted_slope }
}

fn fit_rows(rows: &[BandRow]) -> f64 {
    let pts: Vec<&BandRow> = rows.iter().filter(|r| r.value > 0.0).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let xs: Vec<f64> = pts.iter().map(|r| r.band.center()).collect();
    let ys: Vec<f64> = pts.iter().map(|r| r.value).collect();
    fit_loglog_slope(&xs, &ys)
}

/// Band remainders of `exact_sharp - expansion_sharp(N)` for each `N` in `terms`.
pub fn expansion_remainders(p: &Symbol, q: &Symbol, terms: &[u32], bands: &[Band]) -> Result<Vec<BandReport>> {
    let exact = exact_sharp(p, q)?;
    terms
        .iter()
        .map(|&nt| {
            let diff = exact.sub(&expansion_sharp(p, q, nt)?)?;
            Ok(band_report(&diff, bands, &format!("expansion_terms_{nt}")))
        })
        .collect()
}

/// Result of [`conjugate_by_weight`].
#[derive(Debug, Clone, PartialEq)]
pub struct Conjugation {
    /// Symbol of `Op(e^{τ⟨ξ⟩^κ}) a Op(e^{-τ⟨ξ⟩^κ})`.
    pub exact: Symbol,
    /// `a - iτ a' ∂_ξ⟨ξ⟩^κ`.
    pub expansion: Symbol,
    pub report: BandReport,
}

/// Conjugation of multiplication by `a` with the Gevrey weight, compared
/// against its two-term expansion on `bands`.
pub fn conjugate_by_weight(
    a: &SpaceCoefficient,
    tau: f64,
    kappa: f64,
    grid: &Grid,
    bands: &[Band],
) -> Result<Conjugation> {
    check_dense(grid)?;
    let w_plus = weyl_quantize(&gevrey_weight(grid, tau, kappa)?)?;
    let w_minus = weyl_quantize(&gevrey_weight(grid, -tau, kappa)?)?;
    let diag: Vec<Complex64> = grid.x_nodes().iter().map(|&x| Complex64::new(a.value(x), 0.0)).collect();
    let conj = w_plus.matmul(&OperatorMatrix::diagonal(grid, &diag))?.matmul(&w_minus)?;
    let exact = weyl_symbol(&conj)?;
    let mu = grid.mu();
    let expansion = Symbol::from_fn(grid, |x, xi| {
        let dxi = kappa * xi * bracket(xi, mu).powf(kappa - 2.0);
        Complex64::new(a.value(x), -tau * a.d1(x) * dxi)
    })?;
    let report = band_report(&exact.sub(&expansion)?, bands, "conjugation");
    Ok(Conjugation { exact, expansion, report })
}

/// Result of [`identity_residual`].
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityResidual {
    /// `‖Op(e^Λ)Op(e^{-Λ}) - I‖₂`.
    pub residual_norm: f64,
    /// Neumann inverse of `Op(e^{-Λ})Op(e^Λ)`.
    pub k_matrix: OperatorMatrix,
    /// `‖Op(e^Λ) K Op(e^{-Λ}) - I‖₂`.
    pub reconstruction_error: f64,
    /// Number of squarings used in the Neumann product.
    pub squarings: usize,
}

/// Identity defect of `Op(e^Λ)Op(e^{-Λ})` and the Neumann inverse
/// `K = Σ_j R^j`, `R = I - Op(e^{-Λ})Op(e^Λ)`, summed as `Π (I + R^{2^i})`.
pub fn identity_residual(lambda: &Symbol) -> Result<IdentityResidual> {
    let grid = lambda.grid();
    let e_plus = weyl_quantize(&exp_symbol(lambda, 1.0)?)?;
    let e_minus = weyl_quantize(&exp_symbol(lambda, -1.0)?)?;
    let id = OperatorMatrix::identity(grid);
    let residual_norm = operator_norm(&e_plus.matmul(&e_minus)?.sub(&id)?)?;
    if residual_norm >= 1.0 {
        return Err(Error::Convergence(format!(
            "Neumann series diverges: identity residual {residual_norm:.4} >= 1; use a smaller mu"
        )));
    }
    let r = id.sub(&e_minus.matmul(&e_plus)?)?;
    let mut k = id.clone();
    let mut power = r;
    let mut squarings = 0;
    while power.frobenius_norm() >= NEUMANN_TERM_TOL {
        if squarings >= 64 || !power.frobenius_norm().is_finite() {
            return Err(Error::Convergence("Neumann series terms do not decay".into()));
        }
        k = k.add(&k.matmul(&power)?)?;
        power = power.matmul(&power)?;
        squarings += 1;
    }
    let reconstruction_error = operator_norm(&e_plus.matmul(&k)?.matmul(&e_minus)?.sub(&id)?)?;
    Ok(IdentityResidual { residual_norm, k_matrix: k, reconstruction_error, squarings })
}

fn normalize(v: &mut [Complex64]) -> f64 {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|c| *c /= norm);
    }
    norm
}

/// Fixed pseudorandom unit start vector.
pub fn power_start_vector(n: usize) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<Complex64> =
        (0..n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    normalize(&mut v);
    v
}

/// Largest singular value by power iteration on `M*M`.
pub fn operator_norm(m: &OperatorMatrix) -> Result<f64> {
    if m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    if m.entries.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::Range("non-finite matrix entry".into()));
    }
    let adj = m.adjoint();
    let mut v = power_start_vector(m.n());
    let mut theta_prev = f64::NAN;
    for _ in 0..POWER_MAX_ITER {
        let w = adj.apply(&m.apply(&v));
        let theta: f64 = v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
        let residual = v.iter().zip(&w).map(|(a, b)| (b - a * theta).norm_sqr()).sum::<f64>().sqrt();
        if (theta - theta_prev).abs() <= POWER_TOL * theta && residual <= POWER_TOL.sqrt() * theta {
            return Ok(theta.max(0.0).sqrt());
        }
        theta_prev = theta;
        v = w;
        if normalize(&mut v) == 0.0 {
            return Ok(0.0);
        }
    }
    Err(Error::Numerical(format!("power iteration did not converge in {POWER_MAX_ITER} iterations")))
}

/// Smallest `C` with
/// `‖Op(e^{-Λ})⟨D⟩^{k+l}u‖/C ≤ ‖⟨D⟩^k Op(e^{-Λ})⟨D⟩^l u‖ ≤ C‖⟨D⟩^{k+l}Op(e^{-Λ})u‖`
/// over `samples` seeded random states with spectra decaying like `⟨ξ⟩^{-2}`.
pub fn norm_equivalence_constant(lambda: &Symbol, k: f64, l: f64, samples: usize, seed: u64) -> Result<f64> {
    let grid = lambda.grid();
    let e_minus = weyl_quantize(&exp_symbol(lambda, -1.0)?)?;
    let mu = grid.mu();
    let power = |p: f64| grid.multiplier_values(|xi| Complex64::new(bracket(xi, mu).powf(p), 0.0));
    let (dk, dl, dkl) = (power(k)?, power(l)?, power(k + l)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = 1.0f64;
    for _ in 0..samples {
        let hat: Vec<Complex64> = (0..grid.n_points())
            .map(|m| {
                let w = bracket(grid.xi_mode(m), mu).powi(-2);
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * w
            })
            .collect();
        let u = grid.inverse(&hat);
        let left = grid.l2_norm(&e_minus.apply(&grid.apply_multiplier(&dkl, &u)));
        let mid = grid.l2_norm(&grid.apply_multiplier(&dk, &e_minus.apply(&grid.apply_multiplier(&dl, &u))));
        let right = grid.l2_norm(&grid.apply_multiplier(&dkl, &e_minus.apply(&u)));
        c = c.max(left / mid).max(mid / right);
    }
    Ok(c)
}
