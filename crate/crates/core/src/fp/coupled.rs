//! Shape-equation runs driven by the stress trajectory, with entropy and
//! moment diagnostics.

use super::scheme::{FluxScheme, ShapeCoefficients, ShapeOperator};
use super::{grid_sum, maxwellian_density, relative_moments, DensityField};
use crate::error::{Error, Result};
use crate::moments::{coefficient_frame, CoefficientFrame, MomentVector, StressTrajectory};
use crate::tensor::SymTensor2;
use serde::Serialize;

/// Cells below this value are left out of logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

/// S[G] = ∫(log G + |p|²/2) G, with masked cells counted.
pub fn entropy(g: &DensityField) -> (f64, usize) {
    let grid = &g.grid;
    let h2 = grid.h() * grid.h();
    let masked = g.values.iter().filter(|&&v| v <= LOG_FLOOR).count();
    let s = grid_sum(grid, |i, j| {
        let v = g.at(i, j);
        if v > LOG_FLOOR {
            let p = grid.point(i, j);
            (v.ln() + 0.5 * (p[0] * p[0] + p[1] * p[1])) * v
        } else {
            0.0
        }
    });
    (s * h2, masked)
}

/// S[G] − S[R] for a positive reference R on the same grid, written as
/// Σ[G log(G/R) − G + R] + Σ(G − R)(1 + log R + |p|²/2) so that nearby
/// densities do not lose the difference to cancellation.
pub fn entropy_excess(g: &DensityField, reference: &DensityField) -> f64 {
    let grid = &g.grid;
    let h2 = grid.h() * grid.h();
    grid_sum(grid, |i, j| {
        let (v, r) = (g.at(i, j), reference.at(i, j));
        let p = grid.point(i, j);
        let q = 0.5 * (p[0] * p[0] + p[1] * p[1]);
        if v > LOG_FLOOR {
            let x = (v - r) / r;
            let bregman = if x.abs() < 0.5 { r * ((1.0 + x) * x.ln_1p() - x) } else { v * (v / r).ln() - v + r };
            bregman + (v - r) * (1.0 + r.ln() + q)
        } else {
            -r * r.ln() + (v - r) * q
        }
    }) * h2
}

/// Centred gradient of `f(i, j)`, one-sided on the outer cells.
fn gradient(n: usize, h: f64, i: usize, j: usize, f: &impl Fn(usize, usize) -> f64) -> [f64; 2] {
    let d = |lo: usize, hi: usize| (hi - lo) as f64 * h;
    let (il, ih) = (i.saturating_sub(1), (i + 1).min(n - 1));
    let (jl, jh) = (j.saturating_sub(1), (j + 1).min(n - 1));
    [(f(ih, j) - f(il, j)) / d(il, ih), (f(i, jh) - f(i, jl)) / d(jl, jh)]
}

/// −∫ |η(∇G + G p/2)|² / G, evaluated as −∫ G^M |η∇u|²/u with u = G/G^M.
/// Vanishes for multiples of G^M; nonpositive by construction.
pub fn entropy_dissipation(g: &DensityField, frame: &CoefficientFrame) -> f64 {
    let grid = g.grid;
    let (n, h) = (grid.n, grid.h());
    let eta = frame.eta;
    let u = |i: usize, j: usize| g.at(i, j) / maxwellian_density(grid.point(i, j));
    let s = grid_sum(&grid, |i, j| {
        let v = g.at(i, j);
        if v <= LOG_FLOOR {
            return 0.0;
        }
        let gu = gradient(n, h, i, j, &u);
        let w = eta.apply(gu);
        maxwellian_density(grid.point(i, j)) * (w[0] * w[0] + w[1] * w[1]) / u(i, j)
    });
    -s * h * h
}

/// −∫ |η(G p + ∇G)|² / G, the dissipation integrand whose zero set is the
/// Gaussian exp(−|p|²/2) rather than G^M.
pub fn entropy_dissipation_literal(g: &DensityField, frame: &CoefficientFrame) -> f64 {
    let grid = g.grid;
    let (n, h) = (grid.n, grid.h());
    let at = |i: usize, j: usize| g.at(i, j);
    let s = grid_sum(&grid, |i, j| {
        let v = g.at(i, j);
        if v <= LOG_FLOOR {
            return 0.0;
        }
        let p = grid.point(i, j);
        let gr = gradient(n, h, i, j, &at);
        let w = frame.eta.apply([gr[0] + v * p[0], gr[1] + v * p[1]]);
        (w[0] * w[0] + w[1] * w[1]) / v
    });
    -s * h * h
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledOptions {
    pub scheme: FluxScheme,
    /// Fraction of the CFL bound used per step.
    pub cfl_fraction: f64,
    /// Output times (sorted, inside the span).
    pub outputs: Vec<f64>,
    /// Moment orders recorded at outputs.
    pub moment_orders: Vec<usize>,
    /// Hold discrete first and second moments at their initial values.
    pub lock_moments: bool,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        CoupledOptions { scheme: FluxScheme::Balanced, cfl_fraction: 0.9, outputs: Vec::new(), moment_orders: vec![4, 6], lock_moments: true }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoupledRecord {
    pub t: f64,
    pub mass: f64,
    pub l1_to_maxwellian: f64,
    pub covariance_error: f64,
    pub entropy: f64,
    /// S[G] − S[G^M] evaluated without cancellation.
    pub entropy_excess: f64,
    pub dissipation: f64,
    pub min_value: f64,
    pub moments: Vec<MomentVector>,
}

#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub records: Vec<CoupledRecord>,
    /// (t, S[G] − S[G^M]) after every step, for monotonicity and finite
    /// differences.
    pub entropy_steps: Vec<(f64, f64)>,
    pub steps: usize,
    pub clipped_cells: usize,
    /// Cells that went below −1e-12 (left in place).
    pub large_undershoots: usize,
    pub max_resmeq2: f64,
    pub final_field: DensityField,
}

impl CoupledRun {
    /// Largest increase of S between consecutive steps.
    pub fn max_entropy_increase(&self) -> f64 {
        self.entropy_steps.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max)
    }

    /// dS/dt at step index k by the three-point formula on a nonuniform grid.
    pub fn entropy_rate_at(&self, k: usize) -> Option<f64> {
        if k == 0 || k + 1 >= self.entropy_steps.len() {
            return None;
        }
        let (t0, s0) = self.entropy_steps[k - 1];
        let (t1, s1) = self.entropy_steps[k];
        let (t2, s2) = self.entropy_steps[k + 1];
        let (a, b) = (t1 - t0, t2 - t1);
        Some(-b / (a * (a + b)) * s0 + (b - a) / (a * b) * s1 + a / (b * (a + b)) * s2)
    }

    /// Finite-difference entropy rate at the step that landed on time t.
    pub fn entropy_rate_at_time(&self, t: f64) -> Option<f64> {
        let k = self.entropy_steps.iter().position(|&(s, _)| (s - t).abs() <= 1e-12 * t.abs().max(1.0))?;
        self.entropy_rate_at(k)
    }
}

/// Evolves G from t_span.0 to t_span.1 with coefficients from `traj`.
/// Each step uses 90% (configurable) of the CFL bound evaluated at its three
/// stage times and is shortened to land on output times exactly.
pub fn run_coupled(g0: &DensityField, traj: &StressTrajectory, t_span: (f64, f64), opts: &CoupledOptions) -> Result<CoupledRun> {
    let (t_start, t_stop) = t_span;
    if !(t_stop > t_start) {
        return Err(Error::Invalid("empty time span".into()));
    }
    let mass0 = g0.mass();
    let mean = g0.mean();
    if (mass0 - 1.0).abs() > 1e-8 || mean[0].abs() > 1e-8 || mean[1].abs() > 1e-8 {
        return Err(Error::Invalid(format!("initial density must have mass 1 and mean 0 (mass {mass0}, mean {mean:?})")));
    }
    let op = ShapeOperator::new(g0.grid, opts.scheme).with_moment_lock(opts.lock_moments);
    let reference = DensityField::maxwellian_discrete(g0.grid);
    let mut outputs: Vec<f64> = opts.outputs.iter().copied().filter(|&t| t >= t_start && t <= t_stop).collect();
    outputs.sort_by(f64::total_cmp);
    outputs.dedup();
    let mut max_res = 0.0f64;
    let mut frame_at = |t: f64| -> Result<(CoefficientFrame, ShapeCoefficients)> {
        let f = coefficient_frame(traj, t)?;
        max_res = max_res.max(f.resmeq2_residual() / f.diffusion().max_abs().max(1.0 / f.theta));
        Ok((f, ShapeCoefficients::from_frame(&f)))
    };
    let record = |g: &DensityField, t: f64, frame: &CoefficientFrame| CoupledRecord {
        t,
        mass: g.mass(),
        l1_to_maxwellian: g.l1_distance(&reference),
        covariance_error: g.covariance_error(),
        entropy: entropy(g).0,
        entropy_excess: entropy_excess(g, &reference),
        dissipation: entropy_dissipation(g, frame),
        min_value: g.min_value(),
        moments: opts.moment_orders.iter().map(|&o| relative_moments(g, &reference, o)).collect(),
    };
    let mut g = g0.clone();
    let mut t = t_start;
    let mut records = Vec::new();
    let mut next_out = 0;
    let (f0, _) = frame_at(t)?;
    if outputs.first() == Some(&t_start) {
        records.push(record(&g, t, &f0));
        next_out = 1;
    }
    let mut entropy_steps = vec![(t, entropy_excess(&g, &reference))];
    let mut steps = 0;
    let (mut clipped, mut large) = (0, 0);
    let mut dt_guess = {
        let (_, c) = frame_at(t)?;
        opts.cfl_fraction * op.cfl_bound(&c)
    };
    while t < t_stop {
        let target = outputs.get(next_out).copied().unwrap_or(t_stop).min(t_stop);
        let mut dt = dt_guess.min(target - t);
        // shrink until the step respects the bound at all stage times
        let (c0, c1, c2) = loop {
            let (_, c0) = frame_at(t)?;
            let (_, c1) = frame_at(t + dt)?;
            let (_, c2) = frame_at(t + 0.5 * dt)?;
            let bound = [c0, c1, c2].iter().map(|c| op.cfl_bound(c)).fold(f64::INFINITY, f64::min);
            if dt <= bound {
                dt_guess = opts.cfl_fraction * bound;
                break (c0, c1, c2);
            }
            dt = opts.cfl_fraction * bound;
        };
        // a step that rounds onto the target counts as landing on it
        let landed = dt == target - t || target - (t + dt) <= 1e-12 * target.abs().max(1.0);
        g = op.step_stages(&g, [&c0, &c1, &c2], dt)?;
        let (c, big) = g.clip_undershoot();
        clipped += c;
        large += big;
        t = if landed { target } else { t + dt };
        steps += 1;
        entropy_steps.push((t, entropy_excess(&g, &reference)));
        if landed && next_out < outputs.len() && t == outputs[next_out] {
            let (f, _) = frame_at(t)?;
            records.push(record(&g, t, &f));
            next_out += 1;
        }
    }
    Ok(CoupledRun { records, entropy_steps, steps, clipped_cells: clipped, large_undershoots: large, max_resmeq2: max_res, final_field: g })
}

/// Log-spaced output times, `per_decade` per decade, covering [t0, t1].
pub fn log_times(t0: f64, t1: f64, per_decade: usize) -> Vec<f64> {
    let k = ((t1 / t0).log10() * per_decade as f64).ceil() as usize;
    let mut v: Vec<f64> = (0..=k).map(|m| t0 * 10f64.powf(m as f64 / per_decade as f64)).filter(|&t| t < t1).collect();
    v.push(t1);
    v
}

/// Helper for tests and reports: G^M in the frame-free sense.
pub fn maxwellian_field(g: &DensityField) -> DensityField {
    DensityField::maxwellian_discrete(g.grid)
}

/// Half-covariance of G expressed as a tensor, for reports.
pub fn half_covariance(g: &DensityField) -> SymTensor2 {
    g.half_second_moment()
}
