//! Experiment configuration: TOML file, defaults and validation. Parsing
//! collects every problem instead of stopping at the first.

use serde::Serialize;
use shearkin::diagnostics::CriteriaRegistry;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Moments,
    Fp,
    Dsmc,
    Hypo,
    Report,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Moments => "moments",
            Mode::Fp => "fp",
            Mode::Dsmc => "dsmc",
            Mode::Hypo => "hypo",
            Mode::Report => "report",
        }
    }

    fn parse(s: &str) -> Option<Mode> {
        [Mode::Moments, Mode::Fp, Mode::Dsmc, Mode::Hypo, Mode::Report].into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    TwoBump,
    Bimodal,
    Maxwellian,
}

impl InitKind {
    const NAMES: [(&'static str, InitKind); 3] =
        [("two-bump", InitKind::TwoBump), ("bimodal", InitKind::Bimodal), ("maxwellian", InitKind::Maxwellian)];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub mu: f64,
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub grid_n: usize,
    pub grid_l: f64,
    pub particles: usize,
    pub seed: u64,
    pub dt: f64,
    /// `None` picks the mode default.
    pub t_end: Option<f64>,
    pub init: Option<InitKind>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub tolerances: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    pub fn defaults(mode: Mode) -> Self {
        ExperimentConfig {
            mode,
            mu: 1.0,
            alpha: [1.0, 0.0],
            beta: [0.0, 1.0],
            grid_n: 128,
            grid_l: 8.0,
            particles: 100_000,
            seed: 0,
            dt: 0.02,
            t_end: None,
            init: None,
            out: None,
            tolerances: BTreeMap::new(),
        }
    }

    pub fn t_end_or_default(&self) -> f64 {
        self.t_end.unwrap_or(match self.mode {
            Mode::Moments => 1e4,
            Mode::Fp if self.mu == 0.0 => 20.0,
            Mode::Fp => 1e3,
            Mode::Dsmc => 5.0,
            Mode::Hypo | Mode::Report => 0.0,
        })
    }

    pub fn init_or_default(&self) -> InitKind {
        self.init.unwrap_or(if self.mu == 0.0 { InitKind::Bimodal } else { InitKind::TwoBump })
    }

    /// Checks that do not depend on where the values came from.
    pub fn validate(&self, reg: &CriteriaRegistry) -> Vec<ConfigError> {
        let mut errs = Vec::new();
        let mut err = |field: &str, message: String| errs.push(ConfigError { line: None, field: field.into(), message });
        if !self.mu.is_finite() {
            err("shear.mu", "must be a finite real number".into());
        }
        for (name, v) in [("shear.alpha", self.alpha), ("shear.beta", self.beta)] {
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            if (n - 1.0).abs() > 1e-12 {
                err(name, format!("must be a unit vector, |{}| = {n}", &name[6..]));
            }
        }
        let d = self.alpha[0] * self.beta[0] + self.alpha[1] * self.beta[1];
        if d.abs() > 1e-12 {
            err("shear.beta", format!("must be orthogonal to alpha (alpha·beta = {d})"));
        }
        if self.grid_n < 8 || self.grid_n % 2 != 0 {
            err("grid.n", format!("must be an even number ≥ 8, got {}", self.grid_n));
        }
        if !(self.grid_l > 0.0 && self.grid_l.is_finite()) {
            err("grid.l", format!("must be positive, got {}", self.grid_l));
        }
        if self.particles < 1000 {
            err("ensemble.particles", format!("at least 1000 particles are needed, got {}", self.particles));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            err("ensemble.dt", format!("must be positive, got {}", self.dt));
        }
        if let Some(t) = self.t_end {
            let lo = if self.mode == Mode::Dsmc { 0.0 } else { 1.0 };
            if !(t > lo && t.is_finite()) {
                err("time.t_end", format!("must be finite and > {lo}, got {t}"));
            }
        }
        for id in self.tolerances.keys() {
            if reg.get(id).is_err() {
                let ids: Vec<&str> = reg.checks.iter().map(|c| c.id.as_str()).collect();
                err(&format!("tolerances.{id}"), format!("unknown check{}", suggest(id, &ids)));
            }
        }
        errs
    }

    /// Stable text used for the config hash and the run id.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.field, self.message),
            None => write!(f, "`{}`: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

fn suggest(key: &str, valid: &[&str]) -> String {
    valid
        .iter()
        .map(|v| (strsim::jaro_winkler(key, v), *v))
        .filter(|(s, _)| *s > 0.7)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, v)| format!(" (did you mean `{v}`?)"))
        .unwrap_or_default()
}

/// Line numbers of `key = ...` lines, keyed by dotted path.
fn key_lines(text: &str) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            section = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            out.entry(section.clone()).or_insert(k + 1);
        } else if let Some((key, _)) = line.split_once('=') {
            let key = key.trim().trim_matches('"');
            let path = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            out.entry(path).or_insert(k + 1);
        }
    }
    out
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("", &["mode"]),
    ("shear", &["mu", "alpha", "beta"]),
    ("grid", &["n", "l"]),
    ("ensemble", &["particles", "seed", "dt"]),
    ("time", &["t_end"]),
    ("fp", &["init"]),
    ("output", &["dir"]),
    ("tolerances", &[]),
];

struct Reader {
    lines: BTreeMap<String, usize>,
    errs: Vec<ConfigError>,
}

impl Reader {
    fn error(&mut self, path: &str, message: String) {
        let line = self.lines.get(path).copied();
        self.errs.push(ConfigError { line, field: path.into(), message });
    }

    fn float(&mut self, path: &str, v: &Value) -> Option<f64> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.error(path, format!("expected a number, found {}", v.type_str()));
                None
            }
        }
    }

    fn uint(&mut self, path: &str, v: &Value) -> Option<u64> {
        match v {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            Value::Float(x) if *x >= 0.0 && x.fract() == 0.0 && *x < 2f64.powi(63) => Some(*x as u64),
            _ => {
                self.error(path, format!("expected a non-negative integer, found {v}"));
                None
            }
        }
    }

    fn vec2(&mut self, path: &str, v: &Value) -> Option<[f64; 2]> {
        match v.as_array() {
            Some(a) if a.len() == 2 => {
                let x = self.float(path, &a[0])?;
                let y = self.float(path, &a[1])?;
                Some([x, y])
            }
            _ => {
                self.error(path, "expected an array of two numbers".into());
                None
            }
        }
    }
}

/// Parses TOML text into a config for `mode`, starting from the defaults.
/// Returns every error found.
pub fn parse_config_str(text: &str, mode: Mode, reg: &CriteriaRegistry) -> Result<ExperimentConfig, ConfigErrors> {
    parse_config_with(text, mode, reg, |_| {})
}

/// As [`parse_config_str`], applying `overrides` (command-line flags) before
/// validation.
pub fn parse_config_with(
    text: &str,
    mode: Mode,
    reg: &CriteriaRegistry,
    overrides: impl FnOnce(&mut ExperimentConfig),
) -> Result<ExperimentConfig, ConfigErrors> {
    let table: Table = match text.parse() {
        Ok(t) => t,
        Err(e) => {
            let e: toml::de::Error = e;
            let line = e.span().map(|s| text[..s.start].lines().count().max(1));
            return Err(ConfigErrors(vec![ConfigError { line, field: "<syntax>".into(), message: e.message().to_string() }]));
        }
    };
    let mut r = Reader { lines: key_lines(text), errs: Vec::new() };
    let mut cfg = ExperimentConfig::defaults(mode);
    let sections: Vec<&str> = SCHEMA.iter().map(|s| s.0).filter(|s| !s.is_empty()).collect();

    for (key, value) in &table {
        if let Some(sub) = value.as_table() {
            let Some((_, keys)) = SCHEMA.iter().find(|s| !s.0.is_empty() && s.0 == key) else {
                r.error(key, format!("unknown section{}", suggest(key, &sections)));
                continue;
            };
            for (k, v) in sub {
                let path = format!("{key}.{k}");
                if key == "tolerances" {
                    if let Some(x) = r.float(&path, v) {
                        cfg.tolerances.insert(k.clone(), x);
                    }
                    continue;
                }
                if !keys.contains(&k.as_str()) {
                    r.error(&path, format!("unknown key{}", suggest(k, keys)));
                    continue;
                }
                match path.as_str() {
                    "shear.mu" => cfg.mu = r.float(&path, v).unwrap_or(cfg.mu),
                    "shear.alpha" => cfg.alpha = r.vec2(&path, v).unwrap_or(cfg.alpha),
                    "shear.beta" => cfg.beta = r.vec2(&path, v).unwrap_or(cfg.beta),
                    "grid.n" => cfg.grid_n = r.uint(&path, v).map_or(cfg.grid_n, |x| x as usize),
                    "grid.l" => cfg.grid_l = r.float(&path, v).unwrap_or(cfg.grid_l),
                    "ensemble.particles" => cfg.particles = r.uint(&path, v).map_or(cfg.particles, |x| x as usize),
                    "ensemble.seed" => cfg.seed = r.uint(&path, v).unwrap_or(cfg.seed),
                    "ensemble.dt" => cfg.dt = r.float(&path, v).unwrap_or(cfg.dt),
                    "time.t_end" => cfg.t_end = r.float(&path, v).or(cfg.t_end),
                    "fp.init" => match v.as_str().and_then(|s| InitKind::NAMES.iter().find(|n| n.0 == s)) {
                        Some(&(_, k)) => cfg.init = Some(k),
                        None => {
                            let names: Vec<&str> = InitKind::NAMES.iter().map(|n| n.0).collect();
                            let s = v.as_str().unwrap_or("");
                            r.error(&path, format!("expected one of {}{}", names.join(", "), suggest(s, &names)));
                        }
                    },
                    "output.dir" => match v.as_str() {
                        Some(s) => cfg.out = Some(PathBuf::from(s)),
                        None => r.error(&path, "expected a path string".into()),
                    },
                    _ => unreachable!("schema and match arms agree"),
                }
            }
        } else if key == "mode" {
            match value.as_str().and_then(Mode::parse) {
                Some(m) if m == mode => {}
                Some(m) => r.error(key, format!("config is for `{}` but the `{}` subcommand was run", m.name(), mode.name())),
                None => r.error(key, format!("unknown mode {value}")),
            }
        } else {
            let mut valid: Vec<&str> = sections.clone();
            valid.push("mode");
            r.error(key, format!("unknown key{}", suggest(key, &valid)));
        }
    }
    overrides(&mut cfg);
    for mut e in cfg.validate(reg) {
        e.line = r.lines.get(&e.field).copied();
        r.errs.push(e);
    }
    if r.errs.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(r.errs))
    }
}

pub fn read_config_file(path: &Path) -> Result<String, ConfigErrors> {
    std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![ConfigError { line: None, field: path.display().to_string(), message: e.to_string() }]))
}

pub fn parse_config(path: &Path, mode: Mode, reg: &CriteriaRegistry) -> Result<ExperimentConfig, ConfigErrors> {
    parse_config_str(&read_config_file(path)?, mode, reg)
}
