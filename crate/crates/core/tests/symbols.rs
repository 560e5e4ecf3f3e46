use std::f64::consts::PI;

use approx::assert_relative_eq;
use gwl_core::coefficients::*;
use gwl_core::spectral_grid::{bracket, Grid};
use gwl_core::symbol_calculus::*;
use gwl_core::Error;
use num_complex::Complex64;

fn params(mu: f64) -> GevreyParams {
    GevreyParams::new(1.2, 1.5, 2, 0.0, mu, 0.2, 0.0).unwrap()
}

fn bump() -> SpaceFamily {
    SpaceFamily::GevreyBump { center: PI, radius: PI / 2.0, order: 1.2, height: 1.0 }
}

fn weierstrass(horizon: f64) -> TimeCoefficient {
    make_time_coefficient(TimeFamily::Weierstrass { base: 2, terms: 5 }, HolderIndex::new(2, 0.0).unwrap(), horizon)
        .unwrap()
}

#[test]
fn params_derive_exponents_and_reject_threshold() {
    let p = params(1.0);
    assert_relative_eq!(p.kappa, 2.0 / 3.0, max_relative = 1e-15);
    assert_relative_eq!(p.delta, 1.0 / 3.0, max_relative = 1e-14);
    assert_relative_eq!(p.kappa_tilde, 1.0 / 3.0, max_relative = 1e-14);
    assert!(matches!(GevreyParams::new(1.2, 2.0, 2, 0.0, 1.0, 0.2, 0.0), Err(Error::Parameter(_))));
    assert!(GevreyParams::new(1.6, 1.5, 2, 0.0, 1.0, 0.2, 0.0).is_err());
    assert!(GevreyParams::new(1.2, 1.5, 2, 0.0, 0.0, 0.2, 0.0).is_err());
    assert_eq!(p.with_mu(0.2).unwrap().mu, 0.2);
}

#[test]
fn phi_reduces_to_frequency_tail() {
    let g = Grid::new(32, 2.0 * PI, 0.5).unwrap();
    let p = params(0.5);
    let zero = make_space_coefficient(SpaceFamily::Constant { value: 0.0 }, &g).unwrap();
    let phi = build_phi(&zero, &g, &p).unwrap();
    for q in 0..32 {
        let expect = bracket(g.xi_natural(q), 0.5).powf(-2.0 * p.delta);
        assert_eq!(phi.get(7, q).re, expect);
    }
    let g1 = Grid::new(32, 2.0 * PI, 1.0).unwrap();
    let one = make_space_coefficient(SpaceFamily::Constant { value: 1.0 }, &g1).unwrap();
    let phi1 = build_phi(&one, &g1, &params(1.0)).unwrap();
    assert_eq!(phi1.get(0, 16).re, 2.0);
    assert!(build_phi(&one, &g, &params(1.0)).is_err());
}

#[test]
fn phi_minimum_is_attained_outside_bump() {
    let g = Grid::new(64, 2.0 * PI, 1.0).unwrap();
    let p = params(1.0);
    let a = make_space_coefficient(bump(), &g).unwrap();
    let phi = build_phi(&a, &g, &p).unwrap();
    for q in 0..64 {
        let tail = bracket(g.xi_natural(q), 1.0).powf(-2.0 * p.delta);
        let min = (0..128).map(|h| phi.get(h, q).re).fold(f64::INFINITY, f64::min);
        assert_eq!(min, tail);
        assert_eq!(phi.get(0, q).re, tail);
        assert!((0..128).all(|h| phi.get(h, q).re <= 1.0 + a.sup(&g) + 1e-15));
    }
}

#[test]
fn constant_b_gives_zero_lambda() {
    let g = Grid::new(16, 2.0 * PI, 1.0).unwrap();
    let p = params(1.0);
    let b = make_time_coefficient(TimeFamily::Constant { value: 3.0 }, HolderIndex::new(2, 0.0).unwrap(), 1.0).unwrap();
    let a = make_space_coefficient(bump(), &g).unwrap();
    let phi = build_phi(&a, &g, &p).unwrap();
    let lam = build_lambda(&b, &phi, 1.0, &p, 64).unwrap();
    assert_eq!(lam.max_abs(), 0.0);
    assert_eq!(check_lambda_bound(&lam, &p), 0.0);
    let e = exp_symbol(&lam, -1.0).unwrap();
    assert!(e.values().iter().all(|v| *v == Complex64::new(1.0, 0.0)));
}

#[test]
fn flat_a_gives_one_dimensional_lambda() {
    let g = Grid::new(16, 2.0 * PI, 0.4).unwrap();
    let p = params(0.4);
    let b = weierstrass(1.0);
    let zero = make_space_coefficient(SpaceFamily::Constant { value: 0.0 }, &g).unwrap();
    let phi = build_phi(&zero, &g, &p).unwrap();
    let lam = build_lambda(&b, &phi, 1.0, &p, 8192).unwrap();
    let (oracle, _) = adaptive_midpoint(|s| b.derivative(s).abs() / (b.value(s) + 1.0), 0.0, 1.0).unwrap();
    for v in lam.values() {
        assert_relative_eq!(v.re, oracle, max_relative = 1e-6);
    }
    // sup over ξ of ⟨ξ⟩^{-κ̃} is μ^{κ̃}
    assert_relative_eq!(check_lambda_bound(&lam, &p), oracle * 0.4f64.powf(p.kappa_tilde), max_relative = 1e-6);
}

#[test]
fn lambda_is_monotone_and_starts_at_zero() {
    let g = Grid::new(16, 2.0 * PI, 1.0).unwrap();
    let p = params(1.0);
    let b = weierstrass(1.0);
    let a = make_space_coefficient(bump(), &g).unwrap();
    let phi = build_phi(&a, &g, &p).unwrap();
    let times = [0.0, 0.25, 0.5, 0.75, 1.0];
    let series = build_lambda_series(&b, &phi, &times, &p, 8192).unwrap();
    assert_eq!(series[0].max_abs(), 0.0);
    for w in series.windows(2) {
        for (x, y) in w[0].values().iter().zip(w[1].values()) {
            assert!(y.re >= x.re);
        }
    }
    assert!(series[1].min_re() >= 0.0);
    let single = build_lambda(&b, &phi, 1.0, &p, 8192).unwrap();
    for (x, y) in single.values().iter().zip(series[4].values()) {
        assert_relative_eq!(x.re, y.re, max_relative = 1e-6);
    }
    assert_eq!(series[2].time(), Some(0.5));
}

#[test]
fn unconverged_lambda_names_the_worst_cell() {
    let g = Grid::new(16, 2.0 * PI, 1.0).unwrap();
    let p = params(1.0);
    let b =
        make_time_coefficient(TimeFamily::Weierstrass { base: 4, terms: 6 }, HolderIndex::new(2, 0.0).unwrap(), 1.0)
            .unwrap();
    let a = make_space_coefficient(bump(), &g).unwrap();
    let phi = build_phi(&a, &g, &p).unwrap();
    match build_lambda(&b, &phi, 1.0, &p, 64) {
        Err(Error::Quadrature(msg)) => assert!(msg.contains("xi ="), "{msg}"),
        other => panic!("expected quadrature error, got {other:?}"),
    }
    assert!(build_lambda(&b, &phi, 1.0, &p, 32).is_err());
    assert!(build_lambda(&b, &phi, 2.0, &p, 64).is_err());
}

#[test]
fn time_derivative_obeys_pointwise_bound_and_matches_difference() {
    let g = Grid::new(32, 2.0 * PI, 0.5).unwrap();
    let p = params(0.5);
    let b = weierstrass(1.0);
    let a = make_space_coefficient(bump(), &g).unwrap();
    let phi = build_phi(&a, &g, &p).unwrap();
    for t in [0.0, 0.1, 0.37, 0.8] {
        let dl = lambda_time_derivative(&b, &phi, t, &p).unwrap();
        let n = g.n_points();
        for (i, v) in dl.values().iter().enumerate() {
            let bound = phi.values()[i].re.sqrt() * bracket(g.xi_natural(i % n), 0.5).powf(p.delta);
            assert!(v.re >= 0.0 && v.re <= bound * (1.0 + 1e-12));
        }
    }
    // centered difference of Λ in t, with steps halved between two gaps
    let t = 0.37;
    let dl = lambda_time_derivative(&b, &phi, t, &p).unwrap();
    let mut errs = Vec::new();
    for gap in [0.02, 0.01] {
        let s = build_lambda_series(&b, &phi, &[t - gap, t + gap], &p, 32768).unwrap();
        let fd = s[1].sub(&s[0]).unwrap().scale(Complex64::new(0.5 / gap, 0.0));
        errs.push(fd.sub(&dl).unwrap().max_abs());
    }
    assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    assert!(errs[1] < 1e-2 * dl.max_abs());
}

#[test]
fn constant_b_time_derivative_is_zero() {
    let g = Grid::new(16, 2.0 * PI, 1.0).unwrap();
    let p = params(1.0);
    let b = make_time_coefficient(TimeFamily::Constant { value: 1.0 }, HolderIndex::new(1, 0.0).unwrap(), 1.0).unwrap();
    let a = make_space_coefficient(bump(), &g).unwrap();
    let phi = build_phi(&a, &g, &p).unwrap();
    assert_eq!(lambda_time_derivative(&b, &phi, 0.5, &p).unwrap().max_abs(), 0.0);
}

#[test]
fn exponentials_are_pointwise_inverse() {
    let g = Grid::new(16, 2.0 * PI, 1.0).unwrap();
    let p = Symbol::from_real_fn(&g, |x, xi| x.sin() * 0.1 * xi).unwrap();
    let prod = exp_symbol(&p, 1.0).unwrap().mul(&exp_symbol(&p, -1.0).unwrap()).unwrap();
    for v in prod.values() {
        assert!((v - 1.0).norm() <= 1e-14);
    }
    let zero = Symbol::constant(&g, Complex64::new(0.0, 0.0));
    assert!(exp_symbol(&zero, 1.0).unwrap().values().iter().all(|v| *v == Complex64::new(1.0, 0.0)));
    let big = Symbol::constant(&g, Complex64::new(701.0, 0.0));
    assert!(matches!(exp_symbol(&big, 1.0), Err(Error::Range(_))));
}

#[test]
fn derivative_quotients_trivial_cases() {
    let g = Grid::new(64, 2.0 * PI, 1.0).unwrap();
    let kappa = 2.0 / 3.0;
    let p = Symbol::from_xi_fn(&g, |xi| Complex64::new(0.3 * bracket(xi, 1.0).powf(kappa), 0.0)).unwrap();
    let t00 = derivative_quotients(&p, 0, 0).unwrap();
    assert!(t00.values().iter().all(|v| (v - 1.0).norm() < 1e-15));
    let t10 = derivative_quotients(&p, 1, 0).unwrap();
    for q in (8..56).filter(|&q| g.xi_natural(q).abs() >= 8.0) {
        let xi = g.xi_natural(q);
        let exact = 0.3 * kappa * xi * bracket(xi, 1.0).powf(kappa - 2.0);
        assert!((t10.get(3, q).re - exact).abs() < 2e-2 * (exact.abs() + 1e-3), "q={q}");
    }
    assert!(t10.dx(1).unwrap().max_abs() < 1e-12);
    assert!(matches!(derivative_quotients(&p, 4, 3), Err(Error::Range(_))));
}

#[test]
fn lambda_quotient_is_band_bounded() {
    let g = Grid::new(64, 2.0 * PI, 1.0).unwrap();
    let p = params(1.0);
    let a = make_space_coefficient(bump(), &g).unwrap();
    let phi = build_phi(&a, &g, &p).unwrap();
    let lam = build_lambda(&weierstrass(1.0), &phi, 1.0, &p, 8192).unwrap();
    let t = derivative_quotients(&lam, 1, 0).unwrap();
    let mut per_band = std::collections::BTreeMap::<i32, f64>::new();
    for q in 0..64 {
        let xi = g.xi_natural(q);
        if xi.abs() > 16.0 {
            continue;
        }
        let br = bracket(xi, 1.0);
        let band = br.log2().floor() as i32;
        let m = (0..128).map(|h| t.get(h, q).norm()).fold(0.0, f64::max) * br / br.powf(p.kappa_tilde);
        let e = per_band.entry(band).or_insert(0.0);
        *e = e.max(m);
    }
    let vals: Vec<f64> = per_band.values().copied().collect();
    let top = *vals.last().unwrap();
    let lower = vals[..vals.len() - 1].iter().copied().fold(0.0, f64::max);
    assert!(top <= 2.0 * lower, "{per_band:?}");
}

#[test]
fn metric_h_closed_forms_and_bound() {
    let g = Grid::new(32, 2.0 * PI, 1.0).unwrap();
    let p = params(1.0);
    let zero = make_space_coefficient(SpaceFamily::Constant { value: 0.0 }, &g).unwrap();
    let h0 = metric_h(&build_phi(&zero, &g, &p).unwrap()).unwrap();
    for q in 0..32 {
        let br = bracket(g.xi_natural(q), 1.0);
        assert_relative_eq!(h0.get(5, q).re, br.powf(p.delta - 1.0), max_relative = 1e-14);
    }
    let one = make_space_coefficient(SpaceFamily::Constant { value: 1.0 }, &g).unwrap();
    let h1 = metric_h(&build_phi(&one, &g, &p).unwrap()).unwrap();
    assert_relative_eq!(h1.get(0, 16).re, 0.5f64.sqrt(), max_relative = 1e-15);
    let a = make_space_coefficient(bump(), &g).unwrap();
    let hb = metric_h(&build_phi(&a, &g, &p).unwrap()).unwrap();
    for (i, v) in hb.values().iter().enumerate() {
        let br = bracket(g.xi_natural(i % 32), 1.0);
        assert!(v.re <= br.powf(p.delta - 1.0) * (1.0 + 1e-14) && v.re <= 1.0);
    }
}

#[test]
fn lattice_derivatives() {
    let g = Grid::new(32, 2.0 * PI, 1.0).unwrap();
    let p = Symbol::from_real_fn(&g, |x, xi| (2.0 * x).sin() * xi * xi).unwrap();
    let dx = p.dx(1).unwrap();
    let dxi = p.dxi(1).unwrap();
    for h in [0, 5, 40] {
        for q in 1..31 {
            let x = g.x_half(h);
            let xi = g.xi_natural(q);
            assert!((dx.get(h, q).re - 2.0 * (2.0 * x).cos() * xi * xi).abs() < 1e-9);
            assert!((dxi.get(h, q).re - (2.0 * x).sin() * 2.0 * xi).abs() < 1e-10);
        }
    }
    assert!(matches!(p.dx(9), Err(Error::Range(_))));
}

fn spread(report: &ClassReport) -> f64 {
    report.growth_exponent()
}

#[test]
fn class_reports_are_band_flat_for_member_symbols() {
    let g = Grid::new(128, 2.0 * PI, 1.0).unwrap();
    let p = params(1.0);
    let kappa = p.kappa;
    let gd = ClassKind::GevreyDelta { delta: p.delta, s: p.s, eps: 0.25 };

    let m = bracket_power(&g, kappa).unwrap();
    let r = symbol_class_report(&m, &ClassSpec { kind: gd.clone(), weight: m.clone() }, 2, 2).unwrap();
    assert!(spread(&r) <= 0.25, "{}", r.to_csv());

    let a = make_space_coefficient(bump(), &g).unwrap();
    let phi = build_phi(&a, &g, &p).unwrap();
    let r = symbol_class_report(
        &phi,
        &ClassSpec { kind: ClassKind::Metric { phi: phi.clone() }, weight: phi.clone() },
        2,
        2,
    )
    .unwrap();
    assert!(spread(&r) <= 0.25, "{}", r.to_csv());

    let g = Grid::new(512, 2.0 * PI, 1.0).unwrap();
    let e5 = gevrey_weight(&g, -0.5, kappa).unwrap();
    let e4 = gevrey_weight(&g, -0.4, kappa).unwrap();
    let r = symbol_class_report(&e5, &ClassSpec { kind: gd, weight: e4 }, 2, 2).unwrap();
    assert!(spread(&r) <= 0.25, "{}", r.to_csv());
    assert!(r.to_csv().starts_with("k,l,band_index,constant\n"));
}

#[test]
fn class_report_detects_growth() {
    // ⟨ξ⟩^κ tested against a weight one order too small
    let g = Grid::new(128, 2.0 * PI, 1.0).unwrap();
    let m = bracket_power(&g, 2.0 / 3.0).unwrap();
    let w = bracket_power(&g, -1.0 / 3.0).unwrap();
    let r = symbol_class_report(&m, &ClassSpec { kind: ClassKind::ZeroZero { s: 1.2 }, weight: w }, 1, 1).unwrap();
    assert!(spread(&r) > 0.5);
    let too_high =
        symbol_class_report(&m, &ClassSpec { kind: ClassKind::ZeroZero { s: 1.2 }, weight: m.clone() }, 5, 4);
    assert!(too_high.is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn pointwise_invariants(
            mu in 0.05f64..1.0,
            radius in 0.3f64..3.0,
            height in 0.0f64..3.0,
            c0 in 0.0f64..2.0,
            t in 0.05f64..1.0,
        ) {
            let g = Grid::new(16, 2.0 * PI, mu).unwrap();
            let p = params(mu);
            let fam = SpaceFamily::Sum(vec![
                SpaceFamily::GevreyBump { center: 2.0, radius, order: 1.2, height },
                SpaceFamily::TrigDegenerate { amplitude: c0 },
            ]);
            let a = make_space_coefficient(fam, &g).unwrap();
            let phi = build_phi(&a, &g, &p).unwrap();
            let h = metric_h(&phi).unwrap();
            let sup_a = a.sup(&g);
            let n = g.n_points();
            for (i, v) in phi.values().iter().enumerate() {
                let br = bracket(g.xi_natural(i % n), mu);
                let tail = br.powf(-2.0 * p.delta);
                prop_assert!(v.re >= tail && tail > 0.0);
                prop_assert!(v.re <= sup_a + 1.0 + 1e-12);
                prop_assert!(h.values()[i].re <= br.powf(p.delta - 1.0) * (1.0 + 1e-14));
            }
            let b = make_time_coefficient(TimeFamily::Monomial { center: 0.5 }, HolderIndex::new(2, 0.0).unwrap(), 1.0).unwrap();
            let series = build_lambda_series(&b, &phi, &[t / 2.0, t], &p, 4096).unwrap();
            prop_assert!(series[0].min_re() >= 0.0);
            for (x, y) in series[0].values().iter().zip(series[1].values()) {
                prop_assert!(y.re >= x.re);
            }
        }
    }
}
