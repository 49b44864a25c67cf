//! Command-line runner: parses flags and config files, runs one experiment,
//! writes `<run-id>/manifest.json`, `series/*.csv` (+ gnuplot scripts) and
//! `fields/*.bin`, and maps verdicts to the exit code.

pub mod config;

use clap::{Args, Parser, Subcommand};
use config::{parse_config_with, read_config_file, ConfigErrors, ExperimentConfig, InitKind, Mode};
use shearkin::diagnostics::checks::{self, CheckOutput, DsmcParams, Measurement};
use shearkin::diagnostics::{config_hash, CriteriaRegistry, CriterionSpec, RunManifest};
use shearkin::fp::{DensityField, VelocityGrid};
use shearkin::tensor::ShearFrame;
use std::path::{Path, PathBuf};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Default output root when neither `--out` nor `output.dir` is given.
pub const OUT_DIR_ENV: &str = "SHEARKIN_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "shearkin", version, about = "Rescaled shear-flow kinetics experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stress ODE asymptotics, consistency identity and fourth-moment stability.
    Moments(RunArgs),
    /// Fokker-Planck shape equation (μ = 0 runs the conserving solver).
    Fp(RunArgs),
    /// Hard-sphere particle simulation in shear flow.
    Dsmc(RunArgs),
    /// Hypocoercivity operators and weighted-norm decay.
    Hypo(RunArgs),
    /// Re-evaluate the verdicts of an existing run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Unit shear direction, e.g. `--alpha 1,0`.
    #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
    pub beta: Option<Vec<f64>>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub grid_l: Option<f64>,
    #[arg(long, visible_alias = "n")]
    pub particles: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output root; defaults to $SHEARKIN_OUT_DIR, then `shearkin-runs`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Criteria registry replacing the built-in one.
    #[arg(long)]
    pub criteria: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory containing manifest.json.
    pub run_dir: PathBuf,
    /// Re-evaluate against this registry instead of the recorded tolerances.
    #[arg(long)]
    pub criteria: Option<PathBuf>,
}

/// Parses `argv` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match cli.command {
        Command::Moments(a) => run_mode(Mode::Moments, &a),
        Command::Fp(a) => run_mode(Mode::Fp, &a),
        Command::Dsmc(a) => run_mode(Mode::Dsmc, &a),
        Command::Hypo(a) => run_mode(Mode::Hypo, &a),
        Command::Report(a) => report(&a),
    }
}

fn load_registry(path: Option<&Path>) -> Result<CriteriaRegistry, String> {
    match path {
        Some(p) => CriteriaRegistry::from_path(p).map_err(|e| format!("{}: {e}", p.display())),
        None => Ok(CriteriaRegistry::builtin()),
    }
}

fn apply_flags(cfg: &mut ExperimentConfig, a: &RunArgs) {
    if let Some(x) = a.mu {
        cfg.mu = x;
    }
    if let Some(v) = &a.alpha {
        cfg.alpha = [v[0], v[1]];
    }
    if let Some(v) = &a.beta {
        cfg.beta = [v[0], v[1]];
    }
    if let Some(x) = a.t_end {
        cfg.t_end = Some(x);
    }
    if let Some(x) = a.grid_n {
        cfg.grid_n = x;
    }
    if let Some(x) = a.grid_l {
        cfg.grid_l = x;
    }
    if let Some(x) = a.particles {
        cfg.particles = x;
    }
    if let Some(x) = a.seed {
        cfg.seed = x;
    }
    if let Some(x) = &a.out {
        cfg.out = Some(x.clone());
    }
}

/// Resolves the full configuration for a run: defaults, then the config
/// file, then flags; validated as a whole.
pub fn resolve_config(mode: Mode, a: &RunArgs, reg: &CriteriaRegistry) -> Result<ExperimentConfig, ConfigErrors> {
    let text = match &a.config {
        Some(p) => read_config_file(p)?,
        None => String::new(),
    };
    parse_config_with(&text, mode, reg, |c| apply_flags(c, a))
}

fn output_root(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("shearkin-runs"))
}

fn with_overrides(mut reg: CriteriaRegistry, cfg: &ExperimentConfig) -> CriteriaRegistry {
    for c in reg.checks.iter_mut() {
        if let Some(&t) = cfg.tolerances.get(&c.id) {
            c.threshold = t;
        }
    }
    reg
}

/// Criteria evaluated by a mode.
pub fn enabled_criteria(cfg: &ExperimentConfig) -> Vec<u32> {
    match cfg.mode {
        Mode::Moments => vec![1, 2, 3, 4],
        Mode::Fp if cfg.mu == 0.0 => vec![8],
        Mode::Fp => vec![5, 6, 7],
        Mode::Dsmc => vec![10, 11, 12],
        Mode::Hypo => vec![9],
        Mode::Report => vec![],
    }
}

/// Runs the experiment described by `cfg` and returns its raw output.
pub fn execute(cfg: &ExperimentConfig) -> shearkin::Result<CheckOutput> {
    let shear = ShearFrame::new(cfg.mu, cfg.alpha, cfg.beta)?;
    let t_end = cfg.t_end_or_default();
    let mut out = CheckOutput::default();
    match cfg.mode {
        Mode::Moments => {
            out.merge(checks::moment_spectrum());
            out.merge(checks::stress_asymptotics(&shear, &checks::default_initial_stresses(), t_end)?.0);
            out.merge(checks::fourth_moment_stability()?);
        }
        Mode::Fp => {
            let grid = VelocityGrid::new(cfg.grid_n, cfg.grid_l)?;
            let init = cfg.init_or_default();
            let density = move |p: [f64; 2]| match init {
                InitKind::TwoBump => checks::two_bump().density(p),
                InitKind::Bimodal => checks::bimodal_density(p),
                InitKind::Maxwellian => shearkin::fp::maxwellian_density(p),
            };
            if cfg.mu == 0.0 {
                out.merge(checks::fp_unsheared(&DensityField::from_fn(grid, density), t_end)?.0);
            } else {
                let n = cfg.grid_n;
                out.merge(checks::fp_stationarity(&shear, &[n / 2, n, 2 * n], cfg.grid_l)?);
                out.merge(checks::fp_convergence(&shear, n, cfg.grid_l, t_end, density)?.output);
            }
        }
        Mode::Dsmc => {
            let p = DsmcParams { particles: cfg.particles, t_end, dt: cfg.dt, seed: cfg.seed };
            out.merge(checks::dsmc_conservation(&[shear], &p)?);
            out.merge(checks::trace_identity(cfg.particles, 100_000, cfg.seed)?);
            if cfg.mu != 0.0 {
                out.merge(checks::boltzmann_nonstationarity(&shear, 48)?);
            }
        }
        Mode::Hypo => out.merge(checks::hypocoercivity(cfg.grid_n, cfg.grid_l)?),
        Mode::Report => {}
    }
    Ok(out)
}

fn measurements_csv(ms: &[Measurement]) -> String {
    let mut s = String::from("id,value\n");
    for m in ms {
        let v = m.value.map_or(String::new(), |x| format!("{x:e}"));
        s.push_str(&format!("{},{v}\n", m.id));
    }
    s
}

fn is_timing(id: &str) -> bool {
    id.contains(".runtime_")
}

fn parse_measurements(text: &str) -> Result<Vec<Measurement>, String> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let (id, v) = line.split_once(',').ok_or_else(|| format!("measurements.csv line {}: missing comma", k + 1))?;
        let value = if v.is_empty() {
            None
        } else {
            Some(v.parse::<f64>().map_err(|e| format!("measurements.csv line {}: {e}", k + 1))?)
        };
        out.push(Measurement::new(id, value));
    }
    Ok(out)
}

fn write_outputs(dir: &Path, manifest: &RunManifest, out: &CheckOutput) -> std::io::Result<()> {
    let series = dir.join("series");
    let fields = dir.join("fields");
    std::fs::create_dir_all(&series)?;
    std::fs::create_dir_all(&fields)?;
    for s in &out.series {
        s.write(&series).map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    // wall-clock timings are kept apart so everything else is reproducible
    let (timing, exact): (Vec<Measurement>, Vec<Measurement>) = out.measurements.iter().cloned().partition(|m| is_timing(&m.id));
    std::fs::write(series.join("measurements.csv"), measurements_csv(&exact))?;
    std::fs::write(series.join("timing.csv"), measurements_csv(&timing))?;
    for (name, bytes) in &out.fields {
        std::fs::write(fields.join(format!("{name}.bin")), bytes)?;
    }
    std::fs::write(dir.join("manifest.json"), manifest.to_json())
}

fn print_summary(m: &RunManifest, criteria: &[u32]) {
    for &c in criteria {
        println!("criterion {c:>2}: {}", m.criterion_status(c));
        for v in m.verdicts.iter().filter(|v| v.criterion == c) {
            let measured = v.measured.map_or("n/a".into(), |x| format!("{x:.4e}"));
            println!("    {:<4} {:<36} {measured}", v.status.to_string(), v.id);
        }
    }
}

fn exit_for(m: &RunManifest) -> i32 {
    if m.any_fail() {
        EXIT_FAIL
    } else {
        EXIT_PASS
    }
}

fn run_mode(mode: Mode, a: &RunArgs) -> i32 {
    let reg = match load_registry(a.criteria.as_deref()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cfg = match resolve_config(mode, a, &reg) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return EXIT_USAGE;
        }
    };
    let reg = with_overrides(reg, &cfg);
    let out = match execute(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAIL;
        }
    };
    let criteria = enabled_criteria(&cfg);
    let mut manifest = RunManifest::new(mode.name(), config_hash(&cfg.canonical()), cfg.seed);
    if let Err(e) = manifest.evaluate(&reg, &out.measurements, &criteria) {
        eprintln!("error: {e}");
        return EXIT_FAIL;
    }
    let dir = output_root(&cfg).join(&manifest.run_id);
    if let Err(e) = write_outputs(&dir, &manifest, &out) {
        eprintln!("error: writing {}: {e}", dir.display());
        return EXIT_USAGE;
    }
    print_summary(&manifest, &criteria);
    println!("wrote {}", dir.join("manifest.json").display());
    exit_for(&manifest)
}

/// Re-derives the verdicts of a run directory from its measurements. With
/// the recorded tolerances the manifest is reproduced exactly.
fn report(a: &ReportArgs) -> i32 {
    let load = || -> Result<(String, RunManifest, Vec<Measurement>), String> {
        let text = std::fs::read_to_string(a.run_dir.join("manifest.json")).map_err(|e| format!("manifest.json: {e}"))?;
        let m = RunManifest::from_json(&text).map_err(|e| e.to_string())?;
        let mut ms = Vec::new();
        for f in ["measurements.csv", "timing.csv"] {
            let csv = std::fs::read_to_string(a.run_dir.join("series").join(f)).map_err(|e| format!("{f}: {e}"))?;
            ms.extend(parse_measurements(&csv)?);
        }
        Ok((text, m, ms))
    };
    let (stored_text, stored, measurements) = match load() {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let reg = match &a.criteria {
        Some(p) => match load_registry(Some(p)) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        },
        None => CriteriaRegistry {
            checks: stored
                .verdicts
                .iter()
                .map(|v| CriterionSpec { id: v.id.clone(), criterion: v.criterion, op: v.op, threshold: v.threshold, description: String::new() })
                .collect(),
        },
    };
    let mut criteria: Vec<u32> = stored.verdicts.iter().map(|v| v.criterion).collect();
    criteria.dedup();
    let mut fresh = RunManifest { verdicts: Vec::new(), tolerances: Default::default(), ..stored.clone() };
    if let Err(e) = fresh.evaluate(&reg, &measurements, &criteria) {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    print_summary(&fresh, &criteria);
    if fresh.to_json() == stored_text {
        println!("manifest reproduced");
    } else {
        let path = a.run_dir.join("report.json");
        if let Err(e) = std::fs::write(&path, fresh.to_json()) {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
        println!("verdicts differ from the stored manifest; wrote {}", path.display());
    }
    exit_for(&fresh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[shear]\nmu = 2.0\n[grid]\nn = 64\n").unwrap();
        let a = RunArgs { config: Some(p), mu: Some(0.5), ..Default::default() };
        let c = resolve_config(Mode::Fp, &a, &CriteriaRegistry::builtin()).unwrap();
        assert_eq!((c.mu, c.grid_n), (0.5, 64));
    }

    #[test]
    fn flag_errors_are_validated_with_file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[grid]\nl = -1\n").unwrap();
        let a = RunArgs { config: Some(p), alpha: Some(vec![2.0, 0.0]), ..Default::default() };
        let e = resolve_config(Mode::Fp, &a, &CriteriaRegistry::builtin()).unwrap_err();
        let fields: Vec<&str> = e.0.iter().map(|x| x.field.as_str()).collect();
        assert!(fields.contains(&"grid.l") && fields.contains(&"shear.alpha"), "{fields:?}");
    }

    #[test]
    fn measurements_round_trip() {
        let ms = vec![Measurement::new("a.b", Some(1.5e-3)), Measurement::new("c", None)];
        assert_eq!(parse_measurements(&measurements_csv(&ms)).unwrap(), ms);
    }
}
