//! The experiment registry. Each experiment turns a resolved config into a
//! [`Report`]: named checks, CSV tables, plots and scalar metrics.

use gwl_core::coefficients::{
    cjs_integral_bound, fit_loglog_slope, fit_slope, glaeser_constant, make_space_coefficient, SpaceFamily,
};
use gwl_core::energy::{audit_estimate, select_theta0, AuditOptions, EnergyReport};
use gwl_core::solver::{epsilon_refinement_study, solve, support_radius, SolverConfig};
use gwl_core::spectral_grid::{plancherel_series, weighted_norm, Grid, GridFunction};
use gwl_core::symbol_calculus::{
    bracket_power, build_lambda, build_phi, exp_symbol, symbol_class_report, ClassKind, ClassSpec, Symbol,
};
use gwl_core::table::{format_float, Table};
use gwl_core::weyl_quantize::{
    band_table, conjugate_by_weight, expansion_remainders, geometric_bands, identity_residual,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;
use crate::plot::{Plot, Series};
use crate::LabError;

const PLANCHEREL_TOL: f64 = 1e-10;
const SLOPE_TOL: f64 = 0.05;
const CLASS_GROWTH_TOL: f64 = 0.25;
const QUAD_STEPS: usize = 8192;
const RECONSTRUCTION_TOL: f64 = 1e-8;
const WITHIN_BOUND_FRACTION: f64 = 0.95;
const GRID_CHANGE: f64 = 2.0;
const THETA_MARGIN: f64 = 0.5;
const SUPPORT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub checks: Vec<Check>,
    /// File stem and table, written as `<stem>.csv`.
    pub tables: Vec<(String, Table)>,
    pub plots: Vec<(String, Plot)>,
    pub metrics: Map<String, Value>,
}

impl Report {
    fn metric(&mut self, key: &str, v: impl Into<Value>) {
        self.metrics.insert(key.into(), v.into());
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, LabError> {
    match cfg.experiment.as_str() {
        "plancherel-check" => plancherel(cfg),
        "iia-bound" => iia_bound(cfg),
        "symbol-report" => symbol_report(cfg),
        "compose-converge" => compose_converge(cfg),
        "conjugation-check" => conjugation(cfg),
        "weight-residual" => weight_residual(cfg),
        "energy-audit" => energy_audit(cfg),
        "propagation" => propagation(cfg),
        "epsilon-study" => epsilon_study(cfg),
        "threshold-scan" => threshold_scan(cfg),
        other => Err(LabError::Usage(format!("no experiment named `{other}`"))),
    }
}

fn column(t: &Table, name: &str) -> Vec<f64> {
    t.column(name).unwrap_or_default()
}

fn plancherel(cfg: &ExperimentConfig) -> Result<Report, LabError> {
    let g = cfg.grid()?;
    let p = cfg.gevrey_params(cfg.params.tau, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u = GridFunction::new(
        (0..g.n_points()).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
    );
    let mut t = Table::new(&["ell", "series", "multiplier", "relative_gap"]);
    let mut worst = 0.0f64;
    for ell in [0.0, 1.0] {
        let series = plancherel_series(&g, &u, ell, p.tau, p.kappa, 1e-16)?;
        let direct = weighted_norm(&g, &u, ell, p.tau, p.kappa)?;
        let gap = (series - direct).abs() / direct;
        worst = worst.max(gap);
        t.push(vec![format_float(ell), format_float(series), format_float(direct), format_float(gap)]);
    }
    let mut r = Report::default();
    r.checks.push(check("relative gap", worst <= PLANCHEREL_TOL, format!("{worst:.2e} <= {PLANCHEREL_TOL:.0e}")));
    r.metric("max_relative_gap", worst);
    r.tables.push(("plancherel".into(), t));
    Ok(r)
}

fn iia_bound(cfg: &ExperimentConfig) -> Result<Report, LabError> {
    let b = cfg.b()?;
    let horizon = b.horizon();
    let mut t = Table::new(&["r", "integral", "scaled", "implied_constant"]);
    let mut rs = cfg.sweep.r_values.clone();
    rs.sort_by(|x, y| y.total_cmp(x));
    let mut ints = Vec::with_capacity(rs.len());
    for &rv in &rs {
        let rep = cjs_integral_bound(&b, rv, horizon)?;
        ints.push(rep.integral);
        t.push(vec![
            format_float(rv),
            format_float(rep.integral),
            format_float(rep.scaled),
            format_float(rep.implied_constant),
        ]);
    }
    let slope = fit_loglog_slope(&rs, &ints);
    let target = -1.0 / b.regularity();
    let mut r = Report::default();
    r.checks.push(check(
        "log-log slope",
        (slope - target).abs() <= SLOPE_TOL,
        format!("{slope:.4} vs {target:.4} +- {SLOPE_TOL}"),
    ));
    r.metric("slope", slope);
    r.metric("target", target);
    r.plots.push((
        "iia-bound".into(),
        Plot::new("integral of |b'|/(b + r)", "r", "integral")
            .log_x()
            .log_y()
            .with(Series::new("integral", &rs, &ints)),
    ));
    r.tables.push(("iia-bound".into(), t));
    Ok(r)
}

fn lambda(
    cfg: &ExperimentConfig,
    g: &Grid,
    mu: f64,
) -> Result<(gwl_core::symbol_calculus::GevreyParams, Symbol), LabError> {
    let p = cfg.gevrey_params_at(cfg.params.s_prime, mu, cfg.params.tau, 0.0)?;
    let a = cfg.a(g)?;
    let b = cfg.b()?;
    let phi = build_phi(&a, g, &p)?;
    let lam = build_lambda(&b, &phi, b.horizon(), &p, QUAD_STEPS)?;
    Ok((p, lam))
}

fn symbol_report(cfg: &ExperimentConfig) -> Result<Report, LabError> {
    let g = cfg.grid()?;
    let p = cfg.gevrey_params(cfg.params.tau, 0.0)?;
    let a = cfg.a(&g)?;
    let m = bracket_power(&g, p.kappa)?;
    let phi = build_phi(&a, &g, &p)?;
    let gd = ClassKind::GevreyDelta { delta: p.delta, s: p.s, eps: 0.25 };
    let cases = [
        ("bracket_kappa", m.clone(), ClassSpec { kind: gd, weight: m }),
        ("phi", phi.clone(), ClassSpec { kind: ClassKind::Metric { phi: phi.clone() }, weight: phi }),
    ];
    let mut t = Table::new(&["symbol", "k", "l", "band_index", "constant"]);
    let mut r = Report::default();
    for (name, sym, spec) in cases {
        let rep = symbol_class_report(&sym, &spec, 2, 2)?;
        for row in rep.to_table().rows {
            let mut full = vec![name.to_string()];
            full.extend(row);
            t.push(full);
        }
        let growth = rep.growth_exponent();
        r.checks.push(check(
            &format!("{name} in {}", spec.kind.tag()),
            growth <= CLASS_GROWTH_TOL,
            format!("band growth {growth:.3} <= {CLASS_GROWTH_TOL}"),
        ));
        r.metric(&format!("{name}_growth"), growth);
    }
    r.tables.push(("symbol-report".into(), t));
    Ok(r)
}

fn compose_converge(cfg: &ExperimentConfig) -> Result<Report, LabError> {
    let g = cfg.grid()?;
    let (p, lam) = lambda(cfg, &g, g.mu())?;
    let a = cfg.a(&g)?;
    let sym = Symbol::from_x_fn(&g, |x| a.value(x))?.mul(&exp_symbol(&lam, -1.0)?)?;
    let q = bracket_power(&g, p.kappa)?;
    let terms = [1, 2, 3, 4];
    let narrow = expansion_remainders(&sym, &q, &terms, &geometric_bands(8.0, 32.0, 2))?;
    let sups: Vec<f64> = narrow.iter().map(|rep| rep.sup()).collect();
    let wide = expansion_remainders(&sym, &q, &[2], &geometric_bands(8.0, 64.0, 2))?;
    let slope = wide[0].fitted_slope;
    let target = -2.0 * (p.kappa - p.kappa_tilde) + 0.3;

    let mut t = band_table();
    let mut plot = Plot::new("composition remainder", "band center", "sup |remainder|").log_x().log_y();
    for rep in &narrow {
        rep.append_to(&mut t);
        let xs: Vec<f64> = rep.rows.iter().map(|row| row.band.center()).collect();
        plot = plot.with(Series::new(rep.experiment.clone(), &xs, &rep.values()));
    }
    wide[0].append_to(&mut t);

    let mut r = Report::default();
    let listed: Vec<String> = sups.iter().map(|s| format!("{s:.2e}")).collect();
    r.checks.push(check("remainder decreases with terms", sups.windows(2).all(|w| w[1] < w[0]), listed.join(" > ")));
    r.checks.push(check("two-term decay", slope <= target, format!("slope {slope:.3} <= {target:.3}")));
    r.metric("sups", sups);
    r.metric("two_term_slope", slope);
    r.tables.push(("compose-converge".into(), t));
    if plot.series.iter().all(|s| s.points.iter().all(|p| p.1 > 0.0)) {
        r.plots.push(("compose-converge".into(), plot));
    }
    Ok(r)
}

fn conjugation(cfg: &ExperimentConfig) -> Result<Report, LabError> {
    let g = cfg.grid()?;
    let p = cfg.gevrey_params(cfg.params.tau, 0.0)?;
    let a = cfg.a(&g)?;
    let c = conjugate_by_weight(&a, p.tau, p.kappa, &g, &geometric_bands(8.0, 64.0, 2))?;
    let slope = c.report.fitted_slope;
    let target = -2.0 + 2.0 * p.kappa;
    let mut r = Report::default();
    r.checks.push(check(
        "remainder decay",
        (slope - target).abs() <= 0.3,
        format!("slope {slope:.3}, target {target:.3} +- 0.3"),
    ));
    r.metric("slope", slope);
    r.metric("target", target);
    r.tables.push(("conjugation-check".into(), c.report.to_table()));
    Ok(r)
}

fn weight_residual(cfg: &ExperimentConfig) -> Result<Report, LabError> {
    let base = cfg.grid()?;
    let mut rows: Vec<(usize, f64, f64, f64, usize)> = cfg
        .sweep
        .mus
        .par_iter()
        .enumerate()
        .map(|(i, &mu)| {
            let g = base.with_mu(mu).map_err(|e| LabError::Usage(e.to_string()))?;
            let (_, lam) = lambda(cfg, &g, mu)?;
            let res = identity_residual(&lam)?;
            Ok((i, mu, res.residual_norm, res.reconstruction_error, res.squarings))
        })
        .collect::<Result<_, LabError>>()?;
    rows.sort_by_key(|row| row.0);
    let mut t = Table::new(&["mu", "residual_norm", "reconstruction_error", "squarings"]);
    for &(_, mu, res, rec, sq) in &rows {
        t.push(vec![format_float(mu), format_float(res), format_float(rec), sq.to_string()]);
    }
    let res: Vec<f64> = rows.iter().map(|row| row.2).collect();
    let recon_ok = rows.iter().filter(|row| row.2 < 1.0).all(|row| row.3 <= RECONSTRUCTION_TOL);
    let mut r = Report::default();
    let listed: Vec<String> = res.iter().map(|v| format!("{v:.6}")).collect();
    r.checks.push(check("residual decreases along mu", res.windows(2).all(|w| w[1] < w[0]), listed.join(" > ")));
    r.checks.push(check(
        "neumann reconstruction",
        recon_ok,
        format!("error <= {RECONSTRUCTION_TOL:.0e} wherever the residual is below 1"),
    ));
    r.metric("residuals", res);
    r.tables.push(("weight-residual".into(), t));
    Ok(r)
}

fn bump_data(cfg: &ExperimentConfig, g: &Grid) -> Result<GridFunction, LabError> {
    let family =
        SpaceFamily::GevreyBump { center: cfg.data.center, radius: cfg.data.radius, order: cfg.params.s, height: 1.0 };
    Ok(make_space_coefficient(family, g)?.sample(g))
}

fn solver_config(cfg: &ExperimentConfig, epsilon: f64, t_end: f64, times: Vec<f64>) -> SolverConfig {
    let mut s = SolverConfig::new(epsilon, cfg.solver.dt, t_end, times);
    s.cfl = cfg.solver.cfl;
    s.spectral_floor = cfg.solver.spectral_floor;
    s.form = cfg.spatial_form();
    s
}

struct Audit {
    report: EnergyReport,
    theta0: f64,
}

/// Solves with floored coefficients over the admissible window `t ≤ τ'/θ₀` and
/// audits the energy at `s_prime`.
fn audit(cfg: &ExperimentConfig, g: &Grid, s_prime: f64) -> Result<Audit, LabError> {
    let eps = cfg.solver.epsilon;
    let b = cfg.b()?.with_floor(eps)?;
    let a = cfg.a(g)?.with_floor(eps, g)?;
    let theta0 = select_theta0(glaeser_constant(&b, &a, g).c_star, cfg.solver.t_end, THETA_MARGIN)?;
    let dt = cfg.solver.dt;
    let window = (cfg.params.tau_prime / theta0).min(b.horizon());
    let steps = (window / dt * (1.0 + 1e-12)).floor() as usize;
    if steps == 0 {
        return Err(LabError::Usage(format!("dt = {dt} exceeds the audit window {window:.3e}")));
    }
    let count = cfg.solver.snapshots.min(steps);
    let per = steps / count;
    let times: Vec<f64> = (0..=count).map(|i| (i * per) as f64 * dt).collect();
    let t_end = *times.last().expect("at least two snapshot times");
    let tr = solve(
        g,
        &bump_data(cfg, g)?,
        &GridFunction::zeros(g.n_points()),
        &b,
        &a,
        &solver_config(cfg, 0.0, t_end, times),
    )?;
    let p = cfg.gevrey_params_at(s_prime, g.mu(), cfg.params.tau, theta0)?;
    let report = audit_estimate(
        g,
        &tr.snapshots,
        &b,
        &a,
        &p,
        theta0,
        cfg.params.tau,
        cfg.params.tau_prime,
        &AuditOptions::default(),
    )?;
    Ok(Audit { report, theta0 })
}

fn energy_audit(cfg: &ExperimentConfig) -> Result<Report, LabError> {
    let mut ns = cfg.sweep.n_points.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut runs: Vec<(usize, Audit)> = ns
        .par_iter()
        .map(|&n| Ok((n, audit(cfg, &cfg.grid_with(n)?, cfg.params.s_prime)?)))
        .collect::<Result<_, LabError>>()?;
    runs.sort_by_key(|run| run.0);

    let mut r = Report::default();
    let mut plot = Plot::new("weighted norm against its initial bound", "t", "LHS(t) / LHS(0)").log_y();
    let mut constants = Vec::new();
    for (n, run) in &runs {
        let rep = &run.report;
        let c = rep.constant();
        let frac = rep.fraction_within_bound();
        constants.push(c);
        r.checks.push(check(&format!("n={n} constant finite"), c.is_finite() && c > 0.0, format!("C = {c:.4}")));
        r.checks.push(check(
            &format!("n={n} derivative bound"),
            frac >= WITHIN_BOUND_FRACTION,
            format!("dE/dt <= (1 + {})E at {:.1}% of snapshots", rep.slack, 100.0 * frac),
        ));
        r.metric(&format!("n{n}_constant"), c);
        r.metric(&format!("n{n}_fraction_within_bound"), frac);
        r.metric("theta0", run.theta0);
        let t = rep.to_table();
        let ratios: Vec<f64> = rep.records.iter().map(|rec| rec.ratio).collect();
        if ratios.iter().all(|v| *v > 0.0 && v.is_finite()) {
            plot = plot.with(Series::new(format!("n={n}"), &column(&t, "t"), &ratios));
        }
        r.tables.push((format!("energy-n{n}"), t));
    }
    if constants.len() > 1 {
        let hi = constants.iter().cloned().fold(f64::MIN, f64::max);
        let lo = constants.iter().cloned().fold(f64::MAX, f64::min);
        let change = hi / lo;
        r.checks.push(check(
            "grid stability",
            change <= GRID_CHANGE,
            format!("max/min C = {change:.4} <= {GRID_CHANGE}"),
        ));
    }
    if !plot.series.is_empty() {
        r.plots.push(("energy-audit".into(), plot));
    }
    Ok(r)
}

fn propagation(cfg: &ExperimentConfig) -> Result<Report, LabError> {
    let g = cfg.grid()?;
    let b = cfg.b()?;
    let a = cfg.a(&g)?;
    let u0 = bump_data(cfg, &g)?;
    let threshold = SUPPORT_THRESHOLD * u0.max_abs();
    let r0 = support_radius(&g, &u0, cfg.data.center, threshold)?;
    let s = &cfg.solver;
    let mut sc = SolverConfig::uniform(s.epsilon, s.dt, s.t_end, s.snapshots);
    sc.cfl = s.cfl;
    sc.spectral_floor = s.spectral_floor;
    sc.form = cfg.spatial_form();
    let tr = solve(&g, &u0, &GridFunction::zeros(g.n_points()), &b, &a, &sc)?;
    let mut t = Table::new(&["t", "radius", "bound"]);
    let (mut ts, mut radii, mut bounds) = (Vec::new(), Vec::new(), Vec::new());
    let mut worst = f64::NEG_INFINITY;
    for snap in &tr.snapshots {
        let rad = support_radius(&g, &snap.u, cfg.data.center, threshold)?;
        let bound = r0 + tr.c_hat * snap.t + 3.0 * g.dx();
        worst = worst.max(rad - bound);
        t.push(vec![format_float(snap.t), format_float(rad), format_float(bound)]);
        ts.push(snap.t);
        radii.push(rad);
        bounds.push(bound);
    }
    let mut r = Report::default();
    r.checks.push(check(
        "support inside cone",
        worst <= 0.0,
        format!(
            "final radius {:.4} <= {:.4}, c_hat {:.4}",
            radii.last().unwrap_or(&0.0),
            bounds.last().unwrap_or(&0.0),
            tr.c_hat
        ),
    ));
    r.metric("c_hat", tr.c_hat);
    r.metric("initial_radius", r0);
    r.metric("worst_excess", worst);
    r.plots.push((
        "propagation".into(),
        Plot::new("support radius", "t", "radius")
            .with(Series::new("radius", &ts, &radii))
            .with(Series::new("bound", &ts, &bounds)),
    ));
    r.tables.push(("propagation".into(), t));
    let last = tr.snapshots.len() - 1;
    let mut snap = Table::new(&["x", "re_u", "im_u", "re_ut", "im_ut"]);
    for line in tr.snapshot_csv(&g, last).lines().skip(1) {
        snap.push(line.split(',').map(str::to_string).collect());
    }
    r.tables.push(("propagation-final-state".into(), snap));
    Ok(r)
}

fn epsilon_study(cfg: &ExperimentConfig) -> Result<Report, LabError> {
    let g = cfg.grid()?;
    let p = cfg.gevrey_params(cfg.params.tau, 0.0)?;
    let t_end = cfg.solver.t_end;
    let st = epsilon_refinement_study(
        &g,
        &bump_data(cfg, &g)?,
        &GridFunction::zeros(g.n_points()),
        &cfg.b()?,
        &cfg.a(&g)?,
        &cfg.sweep.epsilons,
        &solver_config(cfg, 0.0, t_end, vec![t_end]),
        cfg.params.tau_prime,
        p.kappa,
    )?;
    let mut t = Table::new(&["epsilon_hi", "epsilon_lo", "difference"]);
    for (w, d) in st.epsilons.windows(2).zip(&st.differences) {
        t.push(vec![format_float(w[0]), format_float(w[1]), format_float(*d)]);
    }
    let listed: Vec<String> = st.differences.iter().map(|d| format!("{d:.3e}")).collect();
    let mut r = Report::default();
    r.checks.push(check("differences nonincreasing", st.monotone, listed.join(" >= ")));
    r.metric("differences", st.differences.clone());
    r.tables.push(("epsilon-study".into(), t));
    Ok(r)
}

fn threshold_scan(cfg: &ExperimentConfig) -> Result<Report, LabError> {
    let g = cfg.grid()?;
    for &sp in &cfg.sweep.s_primes {
        cfg.gevrey_params_at(sp, g.mu(), cfg.params.tau, 0.0)?;
    }
    let mut rows: Vec<(f64, f64, f64, f64, f64, Series)> = cfg
        .sweep
        .s_primes
        .par_iter()
        .map(|&sp| {
            let run = audit(cfg, &g, sp)?;
            let ts: Vec<f64> = run.report.records.iter().map(|rec| rec.t).collect();
            let logs: Vec<f64> = run.report.records.iter().map(|rec| rec.lhs.ln()).collect();
            let ratios: Vec<f64> = run.report.records.iter().map(|rec| rec.ratio).collect();
            let series = Series::new(format!("s' = {sp}"), &ts, &ratios);
            Ok((sp, 1.0 / sp, run.theta0, fit_slope(&ts, &logs), run.report.constant(), series))
        })
        .collect::<Result<_, LabError>>()?;
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut t = Table::new(&["s_prime", "kappa", "theta0", "growth_rate", "max_ratio"]);
    let mut plot = Plot::new("weighted norm across s'", "t", "LHS(t) / LHS(0)").log_y();
    let mut r = Report::default();
    for (sp, kappa, theta0, rate, ratio, series) in rows {
        t.push([sp, kappa, theta0, rate, ratio].iter().map(|v| format_float(*v)).collect());
        r.checks.push(check(&format!("s_prime={sp}"), true, format!("growth rate {rate:.4}, max ratio {ratio:.4}")));
        r.metric(&format!("growth_rate_s{sp}"), rate);
        if series.points.iter().all(|p| p.1 > 0.0 && p.1.is_finite()) {
            plot = plot.with(series);
        }
    }
    if !plot.series.is_empty() {
        r.plots.push(("threshold-scan".into(), plot));
    }
    r.metric("advisory", json!(true));
    r.tables.push(("threshold-scan".into(), t));
    Ok(r)
}
