use std::f64::consts::PI;

use gwl_lab::config::{parse_entries, ExperimentConfig, EXPERIMENTS};

fn load(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text).unwrap()
}

fn err(text: &str) -> gwl_lab::config::ConfigError {
    ExperimentConfig::parse(text).unwrap_err()
}

#[test]
fn defaults_are_the_degenerate_benchmark() {
    let c = load("experiment = energy-audit\n");
    assert_eq!(c.grid.n_points, 256);
    assert_eq!(c.grid.period, 2.0 * PI);
    assert_eq!((c.params.s, c.params.s_prime, c.params.n), (1.2, 1.5, 2));
    assert_eq!(c.b.family, "weierstrass");
    assert_eq!(c.a.family, "gevrey_bump");
    assert_eq!(c.a.params["radius"], PI / 2.0);
    assert_eq!(c.solver.snapshots, 40);
    assert_eq!(c.sweep.n_points, vec![128, 256]);
    assert_eq!(c.output.formats, vec!["csv", "json", "svg"]);
    assert!(!c.output.advisory);
}

#[test]
fn threshold_scan_is_advisory_by_default() {
    assert!(load("experiment = threshold-scan\n").output.advisory);
}

#[test]
fn every_registered_experiment_loads() {
    for (name, _) in EXPERIMENTS {
        assert_eq!(load(&format!("experiment = {name}\n")).experiment, *name);
    }
}

#[test]
fn values_override_defaults() {
    let c = load(
        "experiment = propagation\nseed = 7\n[grid]\nn_points = 64\nperiod = 4*pi\n[b]\nfamily = smooth_osc\nfrequency = 2\n\
         [sweep]\nmus = 0.5, 0.25\nn_points = 32, 64\n[output]\nformats = csv\n",
    );
    assert_eq!(c.seed, 7);
    assert_eq!(c.grid.n_points, 64);
    assert_eq!(c.grid.period, 4.0 * PI);
    assert_eq!(c.b.params["frequency"], 2.0);
    assert_eq!(c.b.params["floor"], 0.0);
    assert_eq!(c.sweep.mus, vec![0.5, 0.25]);
    assert_eq!(c.sweep.n_points, vec![32, 64]);
    assert!(c.wants("csv") && !c.wants("json"));
}

#[test]
fn unknown_key_names_key_and_line() {
    let e = err("experiment = plancherel-check\n\n[grid]\nmu = 1\nresolution = 3\n");
    assert_eq!(e.line, Some(5));
    assert_eq!(e.key.as_deref(), Some("resolution"));
    assert!(e.to_string().contains("line 5"), "{e}");
}

#[test]
fn key_of_another_family_is_unknown() {
    let e = err("experiment = iia-bound\n[b]\nfamily = monomial\nterms = 4\n");
    assert_eq!((e.line, e.key.as_deref()), (Some(4), Some("terms")));
}

#[test]
fn malformed_input_is_rejected_with_line() {
    let cases = [
        ("experiment = plancherel-check\n[mesh]\n", 2),
        ("experiment = plancherel-check\n[grid\n", 2),
        ("experiment = plancherel-check\n[grid]\nmu 1\n", 3),
        ("experiment = plancherel-check\n[grid]\nmu =\n", 3),
        ("experiment = plancherel-check\n[grid]\nmu = 1\nmu = 0.5\n", 4),
        ("experiment = plancherel-check\n[grid]\n[grid]\n", 3),
        ("experiment = plancherel-check\n[grid]\nmu = one\n", 3),
        ("experiment = plancherel-check\n[grid]\nn_points = 1.5\n", 3),
        ("experiment = plancherel-check\n[b]\nfamily = cantor\n", 3),
        ("experiment = plancherel-check\n[output]\nformats = csv, pdf\n", 3),
        ("experiment = plancherel-check\n[output]\nadvisory = yes\n", 3),
        ("experiment = plancherel-check\n[solver]\nform = upwind\n", 3),
        ("experiment = heat-check\n", 1),
    ];
    for (text, line) in cases {
        assert_eq!(err(text).line, Some(line), "{text}");
    }
}

#[test]
fn missing_experiment_is_an_error() {
    let e = err("[grid]\nmu = 1\n");
    assert!(e.message.contains("experiment"));
}

#[test]
fn well_posedness_range_is_enforced_on_load() {
    let e = err("experiment = energy-audit\n[params]\nn = 2\ns_prime = 2.0\n");
    assert_eq!((e.line, e.key.as_deref()), (Some(4), Some("s_prime")));
    assert!(e.message.contains("1 + N/2"), "{e}");
    let e = err("experiment = energy-audit\n[params]\ns = 1.6\n");
    assert_eq!(e.key.as_deref(), Some("s_prime"));
    let e = err("experiment = energy-audit\n[grid]\nmu = 2\n");
    assert_eq!((e.line, e.key.as_deref()), (Some(3), Some("mu")));
    let e = err("experiment = threshold-scan\n[sweep]\ns_primes = 1.3, 2.5\n");
    assert_eq!(e.key.as_deref(), Some("s_primes"));
}

#[test]
fn derived_objects_are_checked_on_load() {
    let cases = [
        ("[a]\nradius = 4\n", "radius"),
        ("[b]\nfamily = weierstrass\nbase = 2.5\n", "base"),
        ("[solver]\ncfl = 1.5\n", "cfl"),
        ("[solver]\nepsilon = -1\n", "epsilon"),
        ("[params]\ntau = 0.3\ntau_prime = 0.3\n", "tau_prime"),
        ("[data]\nradius = 4\n", "radius"),
        ("[sweep]\nepsilons = 1e-2, 0\n", "epsilons"),
        ("[grid]\nn_points = 7\n", "n_points"),
    ];
    for (body, key) in cases {
        let e = err(&format!("experiment = propagation\n{body}"));
        assert_eq!(e.key.as_deref(), Some(key), "{body}: {e}");
        assert!(e.line.is_some(), "{body}: {e}");
    }
}

#[test]
fn entries_keep_sections_and_lines() {
    let e = parse_entries("a = 1\n[grid]\nmu = 2 # note\n").unwrap();
    assert_eq!(e[0].section, "");
    assert_eq!((e[1].section.as_str(), e[1].value.as_str(), e[1].line), ("grid", "2", 3));
}

#[test]
fn shipped_configs_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let c = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        names.push(c.experiment);
    }
    names.sort();
    let mut all: Vec<String> = EXPERIMENTS.iter().map(|e| e.0.to_string()).collect();
    all.sort();
    assert_eq!(names, all);
}
