//! Leapfrog integration of the regularized problem
//! `∂_t² u = (b(t) + ε) ∂_x((a(x) + ε) ∂_x u)` with spectral space derivatives.

use num_complex::Complex64;

use crate::coefficients::{wrapped_difference, SpaceCoefficient, TimeCoefficient};
use crate::energy::{apply_spatial, SpatialForm, WaveState};
use crate::error::{Error, Result};
use crate::spectral_grid::{weighted_norm, Grid, GridFunction};

/// Amplitude beyond which a run is declared unstable.
pub const BLOWUP: f64 = 1e12;

/// Default bound on the data spectrum above half the Nyquist frequency,
/// relative to its largest coefficient.
pub const SPECTRAL_FLOOR: f64 = 1e-10;

pub const DEFAULT_CFL: f64 = 0.5;

/// Relative amplitude below which a node counts as outside the data support.
const SUPPORT_THRESHOLD: f64 = 1e-8;

/// Shortest run of empty nodes that counts as a gap in the support.
pub const MIN_GAP: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Floor added to both coefficients.
    pub epsilon: f64,
    pub dt: f64,
    pub cfl: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    /// Largest allowed `|û(k)|/max|û|` for `|k| ≥ n/4`.
    pub spectral_floor: f64,
    pub form: SpatialForm,
}

impl SolverConfig {
    /// Divergence form, CFL factor 0.5 and the default spectral floor.
    pub fn new(epsilon: f64, dt: f64, t_end: f64, snapshot_times: Vec<f64>) -> Self {
        Self {
            epsilon,
            dt,
            cfl: DEFAULT_CFL,
            t_end,
            snapshot_times,
            spectral_floor: SPECTRAL_FLOOR,
            form: SpatialForm::Divergence,
        }
    }

    /// `count + 1` evenly spaced snapshots over `[0, t_end]`.
    pub fn uniform(epsilon: f64, dt: f64, t_end: f64, count: usize) -> Self {
        let times = (0..=count).map(|i| t_end * i as f64 / count as f64).collect();
        Self::new(epsilon, dt, t_end, times)
    }

    fn step_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if (k * self.dt - t).abs() > 1e-9 * self.dt.max(t.abs()) {
            return Err(Error::Config(format!("time {t} is not a multiple of dt = {}", self.dt)));
        }
        Ok(k as usize)
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1), got {}", self.cfl)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.spectral_floor > 0.0) {
            return Err(Error::Config(format!("spectral_floor must be positive, got {}", self.spectral_floor)));
        }
        if self.snapshot_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("snapshot times must be strictly increasing".into()));
        }
        if let (Some(&first), Some(&last)) = (self.snapshot_times.first(), self.snapshot_times.last()) {
            if first < 0.0 || last > self.t_end * (1.0 + 1e-12) {
                return Err(Error::Config(format!("snapshot times must lie in [0, {}]", self.t_end)));
            }
        }
        Ok(())
    }
}

/// Snapshots of one run with the data needed to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<WaveState>,
    pub config: SolverConfig,
    pub b_tag: String,
    pub a_tag: String,
    pub c_hat: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &WaveState {
        self.snapshots.last().expect("trajectory has at least one snapshot")
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// `x, re_u, im_u, re_ut, im_ut` rows for snapshot `i`.
    pub fn snapshot_csv(&self, grid: &Grid, i: usize) -> String {
        let s = &self.snapshots[i];
        let mut out = String::from("x,re_u,im_u,re_ut,im_ut\n");
        for j in 0..grid.n_points() {
            let (u, ut) = (s.u.values[j], s.ut.values[j]);
            out.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n", grid.x(j), u.re, u.im, ut.re, ut.im));
        }
        out
    }
}

/// `ĉ = sup √((b + ε)(a + ε))` over the audit grids of both coefficients.
pub fn max_speed(b: &TimeCoefficient, a: &SpaceCoefficient, epsilon: f64, grid: &Grid) -> f64 {
    // both factors are nonnegative, so the sup of the product splits
    ((b.sup_b() + epsilon) * (a.sup(grid) + epsilon)).max(0.0).sqrt()
}

/// Largest wrapped distance from `center` of a node where `|u| > threshold`.
pub fn support_radius(grid: &Grid, u: &GridFunction, center: f64, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::Parameter(format!("threshold must be positive, got {threshold}")));
    }
    let l = grid.period();
    Ok((0..grid.n_points())
        .filter(|&j| u.values[j].norm() > threshold)
        .map(|j| wrapped_difference(grid.x(j) - center, l).abs())
        .fold(0.0, f64::max))
}

/// Center and radius of the smallest arc containing the nodes flagged in `mask`,
/// or `None` when no run of at least `MIN_GAP` unflagged nodes exists (isolated
/// zeros are crossings, not gaps in the support).
pub fn support_arc(grid: &Grid, mask: &[bool]) -> Option<(f64, f64)> {
    let n = grid.n_points();
    let on: Vec<usize> = (0..n).filter(|&j| mask[j]).collect();
    if on.is_empty() {
        return None;
    }
    // widest run of empty cells between consecutive flagged nodes, cyclically
    let (mut gap, mut after) = (0usize, on[0]);
    for (i, &j) in on.iter().enumerate() {
        let next = on[(i + 1) % on.len()];
        let g = (next + n - j) % n;
        let g = if g == 0 { n } else { g };
        if g > gap {
            gap = g;
            after = next;
        }
    }
    if gap <= MIN_GAP {
        return None;
    }
    let dx = grid.dx();
    let width = (n - gap) as f64 * dx;
    let start = grid.x(after);
    Some(((start + width / 2.0).rem_euclid(grid.period()), width / 2.0))
}

fn data_mask(u0: &GridFunction, u1: &GridFunction) -> Vec<bool> {
    let scale = u0.max_abs().max(u1.max_abs());
    u0.values.iter().zip(&u1.values).map(|(a, b)| a.norm().max(b.norm()) > SUPPORT_THRESHOLD * scale).collect()
}

fn spectral_tail(grid: &Grid, u: &GridFunction) -> f64 {
    let hat = grid.forward(&u.values);
    let peak = hat.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let cut = grid.n_points() as i64 / 4;
    (0..grid.n_points()).filter(|&m| grid.wavenumber(m).abs() >= cut).map(|m| hat[m].norm()).fold(0.0, f64::max) / peak
}

/// Leapfrog with a Taylor first step; `b` is evaluated at integer step times.
pub fn solve(
    grid: &Grid,
    u0: &GridFunction,
    u1: &GridFunction,
    b: &TimeCoefficient,
    a: &SpaceCoefficient,
    config: &SolverConfig,
) -> Result<Trajectory> {
    config.validate()?;
    u0.check(grid)?;
    u1.check(grid)?;
    let eps = config.epsilon;
    let c_hat = max_speed(b, a, eps, grid);
    if config.dt * c_hat > config.cfl * grid.dx() {
        return Err(Error::Config(format!(
            "dt = {} violates CFL: need dt <= cfl*dx/c_hat = {}",
            config.dt,
            config.cfl * grid.dx() / c_hat
        )));
    }
    if config.t_end > b.horizon() * (1.0 + 1e-12) {
        return Err(Error::Config(format!("t_end = {} beyond the horizon {} of b", config.t_end, b.horizon())));
    }
    for (name, f) in [("u0", u0), ("u1", u1)] {
        let tail = spectral_tail(grid, f);
        if tail > config.spectral_floor {
            return Err(Error::Config(format!(
                "{name} is under-resolved: spectrum at |k| >= n/4 is {tail:.2e} of its peak (floor {:.1e})",
                config.spectral_floor
            )));
        }
    }
    if let Some((_, radius)) = support_arc(grid, &data_mask(u0, u1)) {
        if radius + c_hat * config.t_end >= grid.period() / 2.0 {
            return Err(Error::Config(format!(
                "support would wrap: R + c_hat*T = {} >= L/2 = {}",
                radius + c_hat * config.t_end,
                grid.period() / 2.0
            )));
        }
    }
    let total = config.step_of(config.t_end)?;
    let wanted: Vec<usize> = config.snapshot_times.iter().map(|&t| config.step_of(t)).collect::<Result<_>>()?;

    let av: Vec<f64> = grid.x_nodes().iter().map(|&x| a.value(x) + eps).collect();
    let dt = config.dt;
    // L(t) u = (b + ε) ∂_x((a + ε) ∂_x u) in either spatial form
    let op = |t: f64, u: &[Complex64]| -> Result<Vec<Complex64>> {
        let bt = b.value(t) + eps;
        let s = apply_spatial(grid, &av, config.form, u)?;
        Ok(s.into_iter().map(|v| -bt * v).collect())
    };
    let velocity = |prev: &[Complex64], cur: &[Complex64], lu: &[Complex64]| -> Vec<Complex64> {
        (0..cur.len()).map(|j| (cur[j] - prev[j]) / dt + 0.5 * dt * lu[j]).collect()
    };

    let mut snapshots = Vec::with_capacity(wanted.len());
    let mut next = 0;
    if wanted.first() == Some(&0) {
        snapshots.push(WaveState::new(0.0, u0.clone(), u1.clone())?);
        next = 1;
    }
    let mut prev = u0.values.clone();
    let l0 = op(0.0, &prev)?;
    let mut cur: Vec<Complex64> =
        (0..prev.len()).map(|j| prev[j] + dt * u1.values[j] + 0.5 * dt * dt * l0[j]).collect();
    for step in 1..=total {
        let t = step as f64 * dt;
        let lu = op(t, &cur)?;
        let amp = cur.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if !(amp <= BLOWUP) {
            return Err(Error::Instability { step, amplitude: amp });
        }
        if next < wanted.len() && wanted[next] == step {
            let ut = velocity(&prev, &cur, &lu);
            snapshots.push(WaveState::new(
                config.snapshot_times[next],
                GridFunction::new(cur.clone()),
                GridFunction::new(ut),
            )?);
            next += 1;
        }
        if step == total {
            break;
        }
        let nxt: Vec<Complex64> = (0..cur.len()).map(|j| 2.0 * cur[j] - prev[j] + dt * dt * lu[j]).collect();
        prev = std::mem::replace(&mut cur, nxt);
    }
    Ok(Trajectory {
        snapshots,
        config: config.clone(),
        b_tag: b.family().tag().to_string(),
        a_tag: a.family().tag(),
        c_hat,
        steps: total,
    })
}

/// Terminal-state comparison across a decreasing list of floors.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonStudy {
    pub epsilons: Vec<f64>,
    /// Weighted distance between the terminal states for `ε_i` and `ε_{i+1}`.
    pub differences: Vec<f64>,
    pub monotone: bool,
}

/// Solves once per `ε` and measures successive terminal differences in
/// `(‖⟨D⟩^κ e^{τ'⟨D⟩^κ} δu‖² + ‖e^{τ'⟨D⟩^κ} δu_t‖²)^{1/2}`.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_refinement_study(
    grid: &Grid,
    u0: &GridFunction,
    u1: &GridFunction,
    b: &TimeCoefficient,
    a: &SpaceCoefficient,
    eps_list: &[f64],
    config: &SolverConfig,
    tau_prime: f64,
    kappa: f64,
) -> Result<EpsilonStudy> {
    if eps_list.len() < 3 {
        return Err(Error::Parameter(format!("need at least 3 epsilons, got {}", eps_list.len())));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Parameter("epsilons must be positive and strictly decreasing".into()));
    }
    let mut finals = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let cfg = SolverConfig { epsilon: eps, snapshot_times: vec![config.t_end], ..config.clone() };
        finals.push(solve(grid, u0, u1, b, a, &cfg)?.last().clone());
    }
    let differences = finals
        .windows(2)
        .map(|w| {
            let du = w[0].u.sub(&w[1].u);
            let dut = w[0].ut.sub(&w[1].ut);
            let p = weighted_norm(grid, &du, kappa, tau_prime, kappa)?;
            let q = weighted_norm(grid, &dut, 0.0, tau_prime, kappa)?;
            Ok((p * p + q * q).sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    let monotone = differences.windows(2).all(|w| w[1] <= w[0]);
    Ok(EpsilonStudy { epsilons: eps_list.to_vec(), differences, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn arc_of_a_block() {
        let g = Grid::new(64, 2.0 * PI, 1.0).unwrap();
        let mask: Vec<bool> = (0..64).map(|j| (10..=20).contains(&j)).collect();
        let (c, r) = support_arc(&g, &mask).unwrap();
        assert!((c - g.x(15)).abs() < 1e-12);
        assert!((r - 5.0 * g.dx()).abs() < 1e-12);
        let wrap: Vec<bool> = (0..64).map(|j| j <= 3 || j >= 60).collect();
        let (c, r) = support_arc(&g, &wrap).unwrap();
        assert!((wrapped_difference(c, 2.0 * PI) + 0.5 * g.dx()).abs() < 1e-12);
        assert!((r - 3.5 * g.dx()).abs() < 1e-12);
        assert!(support_arc(&g, &[true; 64]).is_none());
        assert!(support_arc(&g, &[false; 64]).is_none());
    }
}
