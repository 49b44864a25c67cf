//! Asymptotics tables, criterion verdicts, run manifests and CSV/gnuplot
//! output.

pub mod checks;

use crate::error::{Error, Result};
use crate::moments::{coefficient_frame, StressTrajectory};
use crate::tensor::{dot, Mat2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

// ---------------------------------------------------------------- asymptotics

/// One checkpoint of [`asymptotics_table`]. Ratios tend to 1 and
/// `f_residual` to 0 as t → ∞ (μ ≠ 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticsRow {
    pub t: f64,
    /// T_αα / (μ²t³/3)
    pub xx: f64,
    /// T_αβ / (−μt²/2)
    pub xy: f64,
    /// T_ββ / t
    pub yy: f64,
    /// 3θ / (μ²t³)
    pub theta: f64,
    /// ‖2tF − F∞‖ / ‖F∞‖ with F∞ the limit of 2tF.
    pub f_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticsTable {
    pub mu: f64,
    pub tol: f64,
    pub rows: Vec<AsymptoticsRow>,
    /// For μ = 0 only: (t, ‖T − ½ tr T·Id‖ / tr T) at each checkpoint.
    pub isotropy: Vec<(f64, f64)>,
}

/// Limit of 2tF in the standard frame orientation: −(σ√3(α⊗β − β⊗α) + 4β⊗β)
/// with σ = sign μ. Flipping β maps (μ, α, β) to (−μ, α, −β), hence σ.
pub fn f_limit(mu: f64, alpha: [f64; 2], beta: [f64; 2]) -> Mat2 {
    let r3 = 3f64.sqrt() * mu.signum();
    let skew = Mat2::outer(alpha, beta).sub(&Mat2::outer(beta, alpha));
    skew.scale(-r3).sub(&Mat2::outer(beta, beta).scale(4.0))
}

pub fn asymptotics_table(traj: &StressTrajectory, checkpoints: &[f64], tol: f64) -> Result<AsymptoticsTable> {
    let fr = traj.frame;
    let mu = fr.mu;
    let mut out = AsymptoticsTable { mu, tol, rows: Vec::new(), isotropy: Vec::new() };
    for &t in checkpoints {
        let s = traj.stress_at(t)?;
        if mu == 0.0 {
            let tr = s.trace();
            let dev = s.sub(&crate::tensor::SymTensor2::IDENTITY.scale(0.5 * tr)).norm() / tr;
            out.isotropy.push((t, dev));
            continue;
        }
        let (al, be) = (fr.alpha, fr.beta);
        let c = coefficient_frame(traj, t)?;
        let lim = f_limit(mu, al, be);
        let xx = s.quad(al) / (mu * mu * t.powi(3) / 3.0);
        let xy = dot(al, s.apply(be)) / (-mu * t * t / 2.0);
        let yy = s.quad(be) / t;
        let theta = 3.0 * s.trace() / (mu * mu * t.powi(3));
        let f_residual = c.f.scale(2.0 * t).sub(&lim).norm() / lim.norm();
        let converged = [xx, xy, yy, theta].iter().all(|r| (r - 1.0).abs() <= tol) && f_residual <= tol;
        out.rows.push(AsymptoticsRow { t, xx, xy, yy, theta, f_residual, converged });
    }
    Ok(out)
}

impl AsymptoticsTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        if self.mu == 0.0 {
            s.push_str("t,anisotropy\n");
            for (t, d) in &self.isotropy {
                let _ = writeln!(s, "{t:e},{d:e}");
            }
        } else {
            s.push_str("t,xx_ratio,xy_ratio,yy_ratio,theta_ratio,f_residual,converged\n");
            for r in &self.rows {
                let _ = writeln!(
                    s,
                    "{:e},{:e},{:e},{:e},{:e},{:e},{}",
                    r.t, r.xx, r.xy, r.yy, r.theta, r.f_residual, r.converged as u8
                );
            }
        }
        s
    }

    /// Largest |ratio − 1| in the last row (μ ≠ 0), or the last anisotropy (μ = 0).
    pub fn final_error(&self) -> Option<f64> {
        if self.mu == 0.0 {
            return self.isotropy.last().map(|x| x.1);
        }
        self.rows.last().map(|r| [r.xx, r.xy, r.yy, r.theta].iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max))
    }
}

// ---------------------------------------------------------------- criteria

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub fn holds(self, measured: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => measured < threshold,
            Comparator::Le => measured <= threshold,
            Comparator::Gt => measured > threshold,
            Comparator::Ge => measured >= threshold,
        }
    }

    fn upper(self) -> bool {
        matches!(self, Comparator::Lt | Comparator::Le)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionSpec {
    pub id: String,
    pub criterion: u32,
    pub op: Comparator,
    pub threshold: f64,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriteriaRegistry {
    #[serde(rename = "check")]
    pub checks: Vec<CriterionSpec>,
}

pub const DEFAULT_CRITERIA: &str = include_str!("../../criteria.toml");

impl CriteriaRegistry {
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CRITERIA).expect("embedded criteria file is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let reg: CriteriaRegistry = toml::from_str(text).map_err(|e| Error::Invalid(format!("criteria file: {e}")))?;
        let mut seen = std::collections::BTreeSet::new();
        for c in &reg.checks {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::Invalid(format!("criteria file: duplicate check `{}`", c.id)));
            }
            if !c.threshold.is_finite() {
                return Err(Error::Invalid(format!("criteria file: threshold of `{}` is not finite", c.id)));
            }
        }
        Ok(reg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, id: &str) -> Result<&CriterionSpec> {
        self.checks.iter().find(|c| c.id == id).ok_or_else(|| Error::UnknownCriterion(id.to_string()))
    }

    pub fn ids_for(&self, criterion: u32) -> Vec<&str> {
        self.checks.iter().filter(|c| c.criterion == criterion).map(|c| c.id.as_str()).collect()
    }

    /// Verdict for a registered check; `None` (not measured) gives SKIP.
    pub fn verdict(&self, id: &str, measured: Option<f64>) -> Result<Verdict> {
        Ok(verdict(self.get(id)?, measured))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub criterion: u32,
    pub status: Status,
    pub measured: Option<f64>,
    pub op: Comparator,
    pub threshold: f64,
    /// (threshold − measured)/|threshold| for upper bounds, the negative of
    /// that for lower bounds; the raw difference when the threshold is 0.
    /// Positive means inside the gate.
    pub margin: Option<f64>,
}

pub fn verdict(spec: &CriterionSpec, measured: Option<f64>) -> Verdict {
    let (status, margin) = match measured {
        None => (Status::Skip, None),
        Some(m) if m.is_nan() => (Status::Fail, None),
        Some(m) => {
            let d = if spec.op.upper() { spec.threshold - m } else { m - spec.threshold };
            let margin = if spec.threshold == 0.0 { d } else { d / spec.threshold.abs() };
            let ok = spec.op.holds(m, spec.threshold);
            (if ok { Status::Pass } else { Status::Fail }, Some(margin))
        }
    };
    Verdict {
        id: spec.id.clone(),
        criterion: spec.criterion,
        status,
        measured,
        op: spec.op,
        threshold: spec.threshold,
        margin,
    }
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub op: Comparator,
    pub threshold: f64,
}

/// Record of one run. Contains no timestamps, so identical inputs give
/// byte-identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub mode: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub tolerances: BTreeMap<String, Tolerance>,
    pub verdicts: Vec<Verdict>,
}

/// Hex SHA-256 of a canonical config rendering.
pub fn config_hash(canonical: &str) -> String {
    let d = Sha256::digest(canonical.as_bytes());
    d.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(mode: &str, config_hash: String, seed: u64) -> Self {
        let v = env!("CARGO_PKG_VERSION").to_string();
        let versions = ["tensor", "moments", "fp", "dsmc", "diagnostics"]
            .iter()
            .map(|m| (m.to_string(), v.clone()))
            .collect();
        RunManifest {
            run_id: format!("{mode}-{}", &config_hash[..12]),
            mode: mode.to_string(),
            config_hash,
            seed,
            versions,
            tolerances: BTreeMap::new(),
            verdicts: Vec::new(),
        }
    }

    /// Adds a verdict; each check may appear only once.
    pub fn push(&mut self, v: Verdict) -> Result<()> {
        if self.verdicts.iter().any(|x| x.id == v.id) {
            return Err(Error::Invalid(format!("check `{}` recorded twice", v.id)));
        }
        self.tolerances.insert(v.id.clone(), Tolerance { op: v.op, threshold: v.threshold });
        self.verdicts.push(v);
        Ok(())
    }

    /// Evaluates measurements against the registry, then marks every check of
    /// the enabled criteria that was not measured as SKIP.
    pub fn evaluate(&mut self, reg: &CriteriaRegistry, measurements: &[checks::Measurement], enabled: &[u32]) -> Result<()> {
        for m in measurements {
            self.push(reg.verdict(&m.id, m.value)?)?;
        }
        for &c in enabled {
            for id in reg.ids_for(c) {
                if !self.verdicts.iter().any(|v| v.id == id) {
                    self.push(reg.verdict(id, None)?)?;
                }
            }
        }
        self.verdicts.sort_by(|a, b| (a.criterion, &a.id).cmp(&(b.criterion, &b.id)));
        Ok(())
    }

    pub fn any_fail(&self) -> bool {
        self.verdicts.iter().any(|v| v.status == Status::Fail)
    }

    /// Overall status of one criterion: FAIL if any check fails, SKIP if all
    /// were skipped, else PASS.
    pub fn criterion_status(&self, criterion: u32) -> Status {
        let vs: Vec<_> = self.verdicts.iter().filter(|v| v.criterion == criterion).collect();
        if vs.iter().any(|v| v.status == Status::Fail) {
            Status::Fail
        } else if vs.iter().all(|v| v.status == Status::Skip) {
            Status::Skip
        } else {
            Status::Pass
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Invalid(format!("manifest: {e}")))
    }
}

// ---------------------------------------------------------------- series output

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PlotAxes {
    LogLog,
    SemiLogY,
    Linear,
}

/// A named table of numbers; the first column is the abscissa.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub axes: PlotAxes,
}

impl Series {
    pub fn new(name: &str, columns: &[&str], axes: PlotAxes) -> Self {
        Series { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), axes }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(name: &str, text: &str, axes: PlotAxes) -> Result<Self> {
        let mut lines = text.lines();
        let head = lines.next().ok_or_else(|| Error::Invalid(format!("{name}: empty csv")))?;
        let columns: Vec<String> = head.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, l) in lines.enumerate() {
            let r: std::result::Result<Vec<f64>, _> = l.split(',').map(str::parse::<f64>).collect();
            let r = r.map_err(|e| Error::Invalid(format!("{name}: line {}: {e}", k + 2)))?;
            if r.len() != columns.len() {
                return Err(Error::Invalid(format!("{name}: line {} has {} fields", k + 2, r.len())));
            }
            rows.push(r);
        }
        Ok(Series { name: name.into(), columns, rows, axes })
    }

    /// gnuplot script plotting every column against the first from `<name>.csv`.
    pub fn gnuplot_script(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "set datafile separator ','");
        let _ = writeln!(s, "set key autotitle columnhead");
        match self.axes {
            PlotAxes::LogLog => s.push_str("set logscale xy\n"),
            PlotAxes::SemiLogY => s.push_str("set logscale y\n"),
            PlotAxes::Linear => {}
        }
        let _ = writeln!(s, "set xlabel '{}'", self.columns[0]);
        let _ = writeln!(s, "set terminal pngcairo size 900,600");
        let _ = writeln!(s, "set output '{}.png'", self.name);
        let plots: Vec<String> = (2..=self.columns.len())
            .map(|c| {
                let file = if c == 2 { format!("'{}.csv'", self.name) } else { "''".into() };
                format!("{file} using 1:(abs(${c})) with linespoints")
            })
            .collect();
        let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
        s
    }

    /// Writes `<dir>/<name>.csv` and `<dir>/<name>.gp`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.csv", self.name)), self.to_csv())?;
        std::fs::write(dir.join(format!("{}.gp", self.name)), self.gnuplot_script())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(op: Comparator, threshold: f64) -> CriterionSpec {
        CriterionSpec { id: "x".into(), criterion: 1, op, threshold, description: String::new() }
    }

    #[test]
    fn decay_exponent_below_zero_passes() {
        let v = verdict(&spec(Comparator::Lt, 0.0), Some(-0.8));
        assert_eq!(v.status, Status::Pass);
        assert_eq!(v.margin, Some(0.8));
    }

    #[test]
    fn uptick_within_slack_passes() {
        let v = verdict(&spec(Comparator::Le, 1e-8), Some(1e-9));
        assert_eq!(v.status, Status::Pass);
        assert!((v.margin.unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn z_score_over_gate_fails() {
        let v = verdict(&spec(Comparator::Le, 3.0), Some(4.2));
        assert_eq!(v.status, Status::Fail);
        assert!((v.margin.unwrap() + 0.4).abs() < 1e-12);
        let lower = verdict(&spec(Comparator::Ge, 0.98), Some(0.99));
        assert_eq!(lower.status, Status::Pass);
        assert!(lower.margin.unwrap() > 0.0);
        assert_eq!(verdict(&spec(Comparator::Lt, 1.0), Some(1.0)).status, Status::Fail);
        assert_eq!(verdict(&spec(Comparator::Lt, 1.0), Some(f64::NAN)).status, Status::Fail);
        assert_eq!(verdict(&spec(Comparator::Lt, 1.0), None).status, Status::Skip);
    }

    #[test]
    fn registry_lookup() {
        let reg = CriteriaRegistry::builtin();
        assert!(matches!(reg.verdict("no.such.check", Some(1.0)), Err(Error::UnknownCriterion(_))));
        for c in 1..=13 {
            assert!(!reg.ids_for(c).is_empty(), "criterion {c} has no checks");
        }
        let dup = "[[check]]\nid='a'\ncriterion=1\nop='<'\nthreshold=1\n".repeat(2);
        assert!(CriteriaRegistry::parse(&dup).is_err());
        assert!(CriteriaRegistry::parse("[[check]]\nid='a'\ncriterion=1\nop='=='\nthreshold=1\n").is_err());
    }

    #[test]
    fn manifest_rejects_duplicates_and_fills_skips() {
        let reg = CriteriaRegistry::builtin();
        let mut m = RunManifest::new("moments", config_hash("x"), 7);
        let ms = vec![checks::Measurement::new("stress.ratio_error", Some(0.001))];
        m.evaluate(&reg, &ms, &[2]).unwrap();
        assert_eq!(m.verdicts.len(), reg.ids_for(2).len());
        assert_eq!(m.criterion_status(2), Status::Pass);
        assert!(m.push(reg.verdict("stress.ratio_error", Some(0.0)).unwrap()).is_err());
        let back = RunManifest::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn csv_round_trip_and_script() {
        let mut s = Series::new("l1", &["t", "l1"], PlotAxes::LogLog);
        s.push(vec![1.0, 0.5]);
        s.push(vec![10.0, 1.25e-3]);
        let back = Series::from_csv("l1", &s.to_csv(), PlotAxes::LogLog).unwrap();
        assert_eq!(back, s);
        let gp = s.gnuplot_script();
        assert!(gp.contains("set logscale xy") && gp.contains("'l1.csv' using 1:(abs($2))"));
        assert!(Series::from_csv("bad", "t,x\n1,2,3\n", PlotAxes::Linear).is_err());
    }
}

#[cfg(test)]
mod asymptotics_tests {
    use super::*;
    use crate::moments::integrate_stress;
    use crate::tensor::{ShearFrame, SymTensor2};

    #[test]
    fn limits_hold_for_either_sign_and_rotated_frames() {
        let frames = [
            ShearFrame::standard(1.0),
            ShearFrame::standard(2.0),
            ShearFrame::standard(-1.0),
            ShearFrame::new(0.7, [0.6, 0.8], [-0.8, 0.6]).unwrap(),
        ];
        for fr in frames {
            let tr = integrate_stress(&SymTensor2::IDENTITY, &fr, 1e5, 1e-10).unwrap();
            let tab = asymptotics_table(&tr, &[1e4, 1e5], 0.01).unwrap();
            assert!(tab.rows.iter().all(|r| r.converged), "μ = {}: {:?}", fr.mu, tab.rows);
        }
    }

    #[test]
    fn ratio_errors_shrink_like_inverse_time() {
        let tr = integrate_stress(&SymTensor2::IDENTITY, &ShearFrame::standard(1.0), 1e4, 1e-11).unwrap();
        let tab = asymptotics_table(&tr, &[1250.0, 2500.0, 5000.0, 1e4], 0.01).unwrap();
        for w in tab.rows.windows(2) {
            let halving = (w[1].xx - 1.0) / (w[0].xx - 1.0);
            assert!((halving - 0.5).abs() < 0.02, "{halving}");
        }
    }
}
