//! Acceptance gate: one PASS/FAIL line per criterion, thresholds from
//! `criteria.toml`. Exits non-zero if any criterion fails.

use shearkin::diagnostics::checks::*;
use shearkin::diagnostics::{CriteriaRegistry, RunManifest, Status};
use shearkin::fp::{DensityField, VelocityGrid};
use shearkin::tensor::ShearFrame;
use shearkin::Result;
use std::time::Instant;

type Group = (&'static str, &'static [u32], Box<dyn Fn() -> Result<CheckOutput>>);

fn groups() -> Vec<Group> {
    let shear = ShearFrame::standard(1.0);
    vec![
        ("moment spectrum", &[1], Box::new(|| Ok(moment_spectrum()))),
        ("stress asymptotics", &[2, 3], Box::new(move || Ok(stress_asymptotics(&shear, &default_initial_stresses(), 1e4)?.0))),
        ("fourth moments", &[4], Box::new(fourth_moment_stability)),
        ("FP stationarity", &[5], Box::new(move || fp_stationarity(&shear, &[64, 128, 256], 8.0))),
        ("FP convergence", &[6, 7], Box::new(move || Ok(fp_convergence(&shear, 128, 8.0, 1e3, |p| two_bump().density(p))?.output))),
        (
            "FP without shear",
            &[8],
            Box::new(|| {
                let g = VelocityGrid::new(48, 8.0)?;
                Ok(fp_unsheared(&DensityField::from_fn(g, bimodal_density), 20.0)?.0)
            }),
        ),
        ("hypocoercivity", &[9], Box::new(|| hypocoercivity(64, 8.0))),
        (
            "DSMC conservation",
            &[10],
            Box::new(move || {
                let p = DsmcParams { particles: 100_000, t_end: 5.0, dt: 0.02, seed: 7 };
                dsmc_conservation(&[ShearFrame::standard(0.5), shear], &p)
            }),
        ),
        ("trace identity", &[11], Box::new(|| trace_identity(10_000, 100_000, 11))),
        ("Maxwellian residual", &[12], Box::new(move || boltzmann_nonstationarity(&shear, 48))),
        (
            "determinism",
            &[13],
            Box::new(|| determinism(&DsmcParams { particles: 20_000, t_end: 1.0, dt: 0.02, seed: 3 }, 32)),
        ),
    ]
}

fn main() {
    let reg = CriteriaRegistry::builtin();
    let mut manifest = RunManifest::new("acceptance", shearkin::diagnostics::config_hash("acceptance"), 0);
    let mut failed = false;
    for (name, criteria, run) in groups() {
        let start = Instant::now();
        let out = match run() {
            Ok(o) => o,
            Err(e) => {
                for c in criteria {
                    println!("criterion {c:>2} ({name}): FAIL  error: {e}");
                }
                failed = true;
                continue;
            }
        };
        manifest.evaluate(&reg, &out.measurements, criteria).expect("registered checks");
        for &c in criteria {
            let status = manifest.criterion_status(c);
            failed |= status != Status::Pass;
            let detail: Vec<String> = manifest
                .verdicts
                .iter()
                .filter(|v| v.criterion == c)
                .map(|v| {
                    let m = v.measured.map_or("n/a".to_string(), |x| format!("{x:.3e}"));
                    let op = serde_json::to_string(&v.op).unwrap();
                    format!("{}={m} {}{:e} {}", v.id, op.trim_matches('"'), v.threshold, v.status)
                })
                .collect();
            println!("criterion {c:>2} ({name}): {status}  [{:.1}s] {}", start.elapsed().as_secs_f64(), detail.join("; "));
        }
    }
    if failed {
        std::process::exit(1);
    }
}
