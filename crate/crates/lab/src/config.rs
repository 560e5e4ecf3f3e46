//! Experiment configuration: a line-oriented `key = value` dialect with
//! `[section]` headers, resolved into a fully defaulted [`ExperimentConfig`].
//!
//! ```text
//! experiment = energy-audit   # top-level keys come before any section
//! [grid]
//! n_points = 256
//! period = 2*pi
//! ```
//!
//! `#` starts a comment. Numbers accept `pi`, `k*pi`, `pi/k` and `k*pi/m`.
//! Lists are comma separated. Every key not consumed by the resolver is an
//! error naming its line.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use gwl_core::coefficients::{
    make_space_coefficient, make_time_coefficient, HolderIndex, SpaceCoefficient, SpaceFamily, TimeCoefficient,
    TimeFamily,
};
use gwl_core::energy::SpatialForm;
use gwl_core::spectral_grid::Grid;
use gwl_core::symbol_calculus::GevreyParams;
use serde::Serialize;

pub const SECTIONS: &[&str] = &["grid", "params", "b", "a", "data", "solver", "sweep", "output"];

/// Registered experiments with a one-line description each.
pub const EXPERIMENTS: &[(&str, &str)] = &[
    ("plancherel-check", "weighted norm: Fourier series against multiplier"),
    ("iia-bound", "integral of |b'|/(b + r) against r, slope fit"),
    ("symbol-report", "per-band symbol class constants"),
    ("compose-converge", "composition expansion remainders by number of terms"),
    ("conjugation-check", "weight conjugation against its two-term expansion"),
    ("weight-residual", "identity defect of the weight pair along mu"),
    ("energy-audit", "energy functional and estimate along a solver run"),
    ("propagation", "support growth against the propagation cone"),
    ("epsilon-study", "terminal differences along decreasing floors"),
    ("threshold-scan", "growth of the weighted norm across s_prime (advisory)"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: &str, message: impl Into<String>) -> Self {
        Self { line: Some(line), key: Some(key.to_string()), message: message.into() }
    }

    fn bare(message: impl Into<String>) -> Self {
        Self { line: None, key: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error")?;
        if let Some(l) = self.line {
            write!(f, " at line {l}")?;
        }
        if let Some(k) = &self.key {
            write!(f, " (key `{k}`)")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    /// Empty for top-level keys.
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits the text into entries. Rejects unknown sections, malformed lines
/// and repeated keys.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut seen_sections: Vec<String> = Vec::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line, body, "unterminated section header"))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::at(line, name, format!("unknown section [{name}]")));
            }
            if seen_sections.iter().any(|s| s == name) {
                return Err(ConfigError::at(line, name, format!("section [{name}] appears twice")));
            }
            seen_sections.push(name.to_string());
            section = name.to_string();
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::at(line, body, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::at(line, key, "malformed key"));
        }
        if value.is_empty() {
            return Err(ConfigError::at(line, key, "empty value"));
        }
        if let Some(prev) = entries.iter().find(|e| e.section == section && e.key == key) {
            return Err(ConfigError::at(line, key, format!("duplicate key, first set at line {}", prev.line)));
        }
        entries.push(Entry { section: section.clone(), key: key.to_string(), value: value.to_string(), line });
    }
    Ok(entries)
}

/// Number with optional `pi` factor: `1.5`, `pi`, `2*pi`, `pi/2`, `3*pi/4`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim().parse::<f64>().ok()?),
        None => (s, 1.0),
    };
    let coef = num.strip_suffix("pi")?.trim();
    let coef = match coef.strip_suffix('*') {
        Some(c) => c.trim().parse::<f64>().ok()?,
        None if coef.is_empty() => 1.0,
        None if coef == "-" => -1.0,
        None => return None,
    };
    Some(coef * PI / den)
}

/// Tracks which entries the resolver has consumed.
struct Reader {
    entries: Vec<Entry>,
    used: Vec<bool>,
}

impl Reader {
    fn new(entries: Vec<Entry>) -> Self {
        let used = vec![false; entries.len()];
        Self { entries, used }
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let i = self.entries.iter().position(|e| e.section == section && e.key == key)?;
        self.used[i] = true;
        Some((self.entries[i].value.clone(), self.entries[i].line))
    }

    fn f64(&mut self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some((v, line)) => parse_number(&v)
                .filter(|x| x.is_finite())
                .ok_or_else(|| ConfigError::at(line, key, format!("expected a number, got `{v}`"))),
        }
    }

    fn int<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: T) -> Result<T, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some((v, line)) => v
                .parse::<T>()
                .map_err(|_| ConfigError::at(line, key, format!("expected a nonnegative integer, got `{v}`"))),
        }
    }

    fn string(&mut self, section: &str, key: &str, default: &str) -> (String, usize) {
        self.take(section, key).unwrap_or_else(|| (default.to_string(), 0))
    }

    fn bool(&mut self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(section, key) {
            None => Ok(default),
            Some((v, line)) => match v.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(ConfigError::at(line, key, format!("expected true or false, got `{v}`"))),
            },
        }
    }

    fn list(&mut self, section: &str, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.take(section, key) {
            None => Ok(default.to_vec()),
            Some((v, line)) => v
                .split(',')
                .map(|p| {
                    parse_number(p)
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| ConfigError::at(line, key, format!("bad list element `{}`", p.trim())))
                })
                .collect(),
        }
    }

    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.section == section && e.key == key).map(|e| e.line)
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.iter().zip(&self.used).find(|(_, u)| !**u) {
            None => Ok(()),
            Some((e, _)) => {
                let place =
                    if e.section.is_empty() { "at top level".to_string() } else { format!("in [{}]", e.section) };
                Err(ConfigError::at(e.line, &e.key, format!("unknown key `{}` {place}", e.key)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridBlock {
    pub n_points: usize,
    pub period: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamsBlock {
    pub s: f64,
    pub s_prime: f64,
    pub n: u32,
    pub alpha: f64,
    pub tau: f64,
    pub tau_prime: f64,
}

/// Family tag plus its numeric parameters, as written in the config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientBlock {
    pub family: String,
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataBlock {
    pub center: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverBlock {
    pub epsilon: f64,
    pub dt: f64,
    pub cfl: f64,
    pub t_end: f64,
    pub snapshots: usize,
    pub spectral_floor: f64,
    pub form: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepBlock {
    pub mus: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub s_primes: Vec<f64>,
    pub r_values: Vec<f64>,
    pub n_points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub formats: Vec<String>,
    pub advisory: bool,
}

/// Fully resolved configuration; serializes to the `config` field of the summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub grid: GridBlock,
    pub params: ParamsBlock,
    pub b: CoefficientBlock,
    pub a: CoefficientBlock,
    pub data: DataBlock,
    pub solver: SolverBlock,
    pub sweep: SweepBlock,
    pub output: OutputBlock,
    #[serde(skip)]
    lines: BTreeMap<String, usize>,
}

const B_FAMILIES: &[(&str, &[(&str, f64)])] = &[
    ("constant", &[("value", 1.0)]),
    ("monomial", &[("center", 0.5)]),
    ("smooth_osc", &[("floor", 0.0), ("amplitude", 1.0), ("frequency", 3.0)]),
    ("weierstrass", &[("base", 2.0), ("terms", 5.0)]),
];

const A_FAMILIES: &[(&str, &[(&str, f64)])] = &[
    ("constant", &[("value", 1.0)]),
    ("trig_degenerate", &[("amplitude", 1.0)]),
    ("gevrey_bump", &[("center", PI), ("radius", PI / 2.0), ("order", 1.2), ("height", 1.0)]),
];

fn read_coefficient(
    r: &mut Reader,
    section: &str,
    families: &[(&str, &[(&str, f64)])],
    default: &str,
    extra: &[(&str, f64)],
) -> Result<CoefficientBlock, ConfigError> {
    let (family, line) = r.string(section, "family", default);
    let Some((_, keys)) = families.iter().find(|(f, _)| *f == family) else {
        let names: Vec<&str> = families.iter().map(|f| f.0).collect();
        return Err(ConfigError::at(line, "family", format!("unknown family `{family}`, expected one of {names:?}")));
    };
    let mut params = BTreeMap::new();
    for &(k, d) in keys.iter().chain(extra) {
        params.insert(k.to_string(), r.f64(section, k, d)?);
    }
    Ok(CoefficientBlock { family, params })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let entries = parse_entries(text)?;
        let mut r = Reader::new(entries);
        let (experiment, exp_line) =
            r.take("", "experiment").ok_or_else(|| ConfigError::bare("missing top-level key `experiment`"))?;
        if !EXPERIMENTS.iter().any(|(name, _)| *name == experiment) {
            return Err(ConfigError::at(exp_line, "experiment", format!("unknown experiment `{experiment}`")));
        }
        let seed = r.int("", "seed", 1u64)?;
        let grid = GridBlock {
            n_points: r.int("grid", "n_points", 256usize)?,
            period: r.f64("grid", "period", 2.0 * PI)?,
            mu: r.f64("grid", "mu", 1.0)?,
        };
        let params = ParamsBlock {
            s: r.f64("params", "s", 1.2)?,
            s_prime: r.f64("params", "s_prime", 1.5)?,
            n: r.int("params", "n", 2u32)?,
            alpha: r.f64("params", "alpha", 0.0)?,
            tau: r.f64("params", "tau", 0.5)?,
            tau_prime: r.f64("params", "tau_prime", 0.4)?,
        };
        let b = read_coefficient(&mut r, "b", B_FAMILIES, "weierstrass", &[("horizon", 1.0)])?;
        let a = read_coefficient(&mut r, "a", A_FAMILIES, "gevrey_bump", &[])?;
        let data = DataBlock { center: r.f64("data", "center", PI)?, radius: r.f64("data", "radius", 1.0)? };
        let (form, form_line) = r.string("solver", "form", "divergence");
        if form != "divergence" && form != "bracket" {
            return Err(ConfigError::at(form_line, "form", format!("expected divergence or bracket, got `{form}`")));
        }
        let solver = SolverBlock {
            epsilon: r.f64("solver", "epsilon", 1e-3)?,
            dt: r.f64("solver", "dt", 1e-3)?,
            cfl: r.f64("solver", "cfl", gwl_core::solver::DEFAULT_CFL)?,
            t_end: r.f64("solver", "t_end", 1.0)?,
            snapshots: r.int("solver", "snapshots", 40usize)?,
            spectral_floor: r.f64("solver", "spectral_floor", 1e-2)?,
            form,
        };
        let n_points_line = r.line_of("sweep", "n_points").unwrap_or(0);
        let sweep = SweepBlock {
            mus: r.list("sweep", "mus", &[0.4, 0.2, 0.1])?,
            epsilons: r.list("sweep", "epsilons", &[1e-2, 1e-3, 1e-4])?,
            s_primes: r.list("sweep", "s_primes", &[1.3, 1.6, 1.9])?,
            r_values: r.list("sweep", "r_values", &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6])?,
            n_points: r
                .list("sweep", "n_points", &[128.0, 256.0])?
                .into_iter()
                .map(|v| {
                    if v >= 1.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(ConfigError::at(n_points_line, "n_points", format!("expected integers, got {v}")))
                    }
                })
                .collect::<Result<_, _>>()?,
        };
        let (directory, _) = r.string("output", "directory", "gwl-out");
        let (formats, fmt_line) = r.string("output", "formats", "csv, json, svg");
        let formats: Vec<String> = formats.split(',').map(|f| f.trim().to_string()).collect();
        if let Some(bad) = formats.iter().find(|f| !["csv", "json", "svg"].contains(&f.as_str())) {
            return Err(ConfigError::at(fmt_line, "formats", format!("unknown format `{bad}`")));
        }
        let output = OutputBlock {
            directory: PathBuf::from(directory),
            formats,
            advisory: r.bool("output", "advisory", experiment == "threshold-scan")?,
        };
        let lines = r.entries.iter().map(|e| (format!("{}.{}", e.section, e.key), e.line)).collect();
        r.finish()?;
        let cfg = Self { experiment, seed, grid, params, b, a, data, solver, sweep, output, lines };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::bare(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Error from building a coefficient, attributed to the first parameter the
    /// message mentions, or else to `family`.
    fn coefficient_err(&self, section: &str, block: &CoefficientBlock, e: gwl_core::Error) -> ConfigError {
        let message = e.to_string();
        let key = block
            .params
            .keys()
            .find(|k| message.contains(k.as_str()) && self.lines.contains_key(&format!("{section}.{k}")))
            .map_or("family", |k| k.as_str());
        let mut err = self.err(section, key, message);
        if err.line.is_none() {
            err.line = self.lines.iter().find(|(k, _)| k.starts_with(&format!("{section}."))).map(|(_, l)| *l);
        }
        err
    }

    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.lines.get(&format!("{section}.{key}")).copied(),
            key: Some(key.to_string()),
            message: message.into(),
        }
    }

    /// Builds every derived object once so that invalid values surface at load time.
    fn validate(&self) -> Result<(), ConfigError> {
        self.grid()?;
        self.gevrey_params(self.params.tau, 0.0)?;
        self.b()?;
        self.a(&self.grid()?)?;
        for &sp in &self.sweep.s_primes {
            self.gevrey_params_at(sp, self.grid.mu, self.params.tau, 0.0)?;
        }
        for &mu in &self.sweep.mus {
            self.gevrey_params_at(self.params.s_prime, mu, self.params.tau, 0.0)?;
        }
        let s = &self.solver;
        if !(s.epsilon >= 0.0) {
            return Err(self.err("solver", "epsilon", "must be >= 0"));
        }
        if !(s.dt > 0.0) || !(s.t_end > 0.0) {
            return Err(self.err("solver", if s.dt > 0.0 { "t_end" } else { "dt" }, "must be positive"));
        }
        if !(s.cfl > 0.0 && s.cfl < 1.0) {
            return Err(self.err("solver", "cfl", "must lie in (0, 1)"));
        }
        if s.snapshots == 0 {
            return Err(self.err("solver", "snapshots", "must be at least 1"));
        }
        if !(s.spectral_floor > 0.0) {
            return Err(self.err("solver", "spectral_floor", "must be positive"));
        }
        if !(self.data.radius > 0.0 && self.data.radius < self.grid.period / 2.0) {
            return Err(self.err("data", "radius", "must lie in (0, period/2)"));
        }
        if !(self.params.tau_prime > 0.0 && self.params.tau_prime < self.params.tau) {
            return Err(self.err("params", "tau_prime", "need 0 < tau_prime < tau"));
        }
        for (key, list) in
            [("mus", &self.sweep.mus), ("epsilons", &self.sweep.epsilons), ("r_values", &self.sweep.r_values)]
        {
            if list.iter().any(|v| !(*v > 0.0)) {
                return Err(self.err("sweep", key, "entries must be positive"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let g = &self.grid;
        if g.n_points < 8 || !g.n_points.is_multiple_of(2) {
            return Err(self.err("grid", "n_points", "must be even and at least 8"));
        }
        Grid::new(g.n_points, g.period, g.mu).map_err(|e| {
            let key = if !(g.period > 0.0) { "period" } else { "mu" };
            self.err("grid", key, e.to_string())
        })
    }

    pub fn grid_with(&self, n_points: usize) -> Result<Grid, ConfigError> {
        Grid::new(n_points, self.grid.period, self.grid.mu).map_err(|e| self.err("sweep", "n_points", e.to_string()))
    }

    /// Parameters at the configured `s'` and `μ`.
    pub fn gevrey_params(&self, tau: f64, theta: f64) -> Result<GevreyParams, ConfigError> {
        self.gevrey_params_at(self.params.s_prime, self.grid.mu, tau, theta)
    }

    pub fn gevrey_params_at(&self, s_prime: f64, mu: f64, tau: f64, theta: f64) -> Result<GevreyParams, ConfigError> {
        let p = &self.params;
        GevreyParams::new(p.s, s_prime, p.n, p.alpha, mu, tau, theta).map_err(|e| {
            let regularity = p.n as f64 + p.alpha;
            let key = if !(0.0..=1.0).contains(&p.alpha) {
                ("params", "alpha")
            } else if !(p.s > 1.0) {
                ("params", "s")
            } else if s_prime != p.s_prime {
                ("sweep", "s_primes")
            } else if !(p.s < s_prime && s_prime < 1.0 + regularity / 2.0) {
                ("params", "s_prime")
            } else if !(mu > 0.0 && mu <= 1.0) {
                if mu == self.grid.mu {
                    ("grid", "mu")
                } else {
                    ("sweep", "mus")
                }
            } else if !(tau > 0.0) {
                ("params", "tau")
            } else {
                ("params", "s_prime")
            };
            self.err(key.0, key.1, e.to_string())
        })
    }

    pub fn holder(&self) -> Result<HolderIndex, ConfigError> {
        HolderIndex::new(self.params.n, self.params.alpha).map_err(|e| self.err("params", "alpha", e.to_string()))
    }

    pub fn time_family(&self) -> Result<TimeFamily, ConfigError> {
        let p = &self.b.params;
        Ok(match self.b.family.as_str() {
            "constant" => TimeFamily::Constant { value: p["value"] },
            "monomial" => TimeFamily::Monomial { center: p["center"] },
            "smooth_osc" => TimeFamily::SmoothOscillation {
                floor: p["floor"],
                amplitude: p["amplitude"],
                frequency: p["frequency"],
            },
            _ => {
                let int = |k: &str| -> Result<u32, ConfigError> {
                    let v = p[k];
                    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                        Ok(v as u32)
                    } else {
                        Err(self.err("b", k, format!("expected a nonnegative integer, got {v}")))
                    }
                };
                TimeFamily::Weierstrass { base: int("base")?, terms: int("terms")? }
            }
        })
    }

    pub fn b(&self) -> Result<TimeCoefficient, ConfigError> {
        make_time_coefficient(self.time_family()?, self.holder()?, self.b.params["horizon"])
            .map_err(|e| self.coefficient_err("b", &self.b, e))
    }

    pub fn space_family(&self) -> SpaceFamily {
        let p = &self.a.params;
        match self.a.family.as_str() {
            "constant" => SpaceFamily::Constant { value: p["value"] },
            "trig_degenerate" => SpaceFamily::TrigDegenerate { amplitude: p["amplitude"] },
            _ => SpaceFamily::GevreyBump {
                center: p["center"],
                radius: p["radius"],
                order: p["order"],
                height: p["height"],
            },
        }
    }

    pub fn a(&self, grid: &Grid) -> Result<SpaceCoefficient, ConfigError> {
        make_space_coefficient(self.space_family(), grid).map_err(|e| self.coefficient_err("a", &self.a, e))
    }

    pub fn spatial_form(&self) -> SpatialForm {
        if self.solver.form == "bracket" {
            SpatialForm::Bracket
        } else {
            SpatialForm::Divergence
        }
    }

    pub fn wants(&self, format: &str) -> bool {
        self.output.formats.iter().any(|f| f == format)
    }
}
