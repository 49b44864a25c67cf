//! The unsheared Fokker-Planck equation ∂ₜg = Δg + θ⁻¹∇·(g (w − ū)) in
//! physical velocity, with exact discrete conservation of mass, momentum and
//! energy.
//!
//! Fluxes have the exponentially fitted form ∇g + g∇φ with
//! φ = β|w|²/2 − k·w, i.e. J = (e^{s/2} g_R − e^{−s/2} g_L)/h with s = φ_R − φ_L.
//! Any Maxwellian exp(c + k·w − β|w|²/2) makes every face flux vanish. The
//! parameters (k, β) are not taken from the continuum values ū/θ, 1/θ but
//! solved by Newton at each stage so that the summed fluxes leave discrete
//! momentum and energy unchanged; they differ from the continuum values by
//! O(h²).

use super::{DensityField, VelocityGrid};
use crate::error::{Error, Result};
use crate::fit::{exp_fit_between, RateFit};
use crate::tensor::Vec2;
use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rayon::prelude::*;
use serde::Serialize;

/// Mass ρ = ∫g, momentum v = ∫g w and energy θ = ½∫|w − v/ρ|² g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conserved {
    pub mass: f64,
    pub momentum: Vec2,
    pub theta: f64,
}

impl Conserved {
    pub fn of(g: &DensityField) -> Self {
        let mass = g.mass();
        let momentum = [g.raw_moment(1, 0), g.raw_moment(0, 1)];
        let e = 0.5 * (g.raw_moment(2, 0) + g.raw_moment(0, 2));
        let theta = e - 0.5 * (momentum[0] * momentum[0] + momentum[1] * momentum[1]) / mass;
        Conserved { mass, momentum, theta }
    }

    /// Largest relative deviation from `other`; momentum is measured against
    /// sqrt(ρθ), the natural momentum scale.
    pub fn max_relative_deviation(&self, other: &Conserved) -> f64 {
        let scale = (other.mass * other.theta).sqrt();
        [
            (self.mass - other.mass).abs() / other.mass,
            (self.momentum[0] - other.momentum[0]).abs() / scale,
            (self.momentum[1] - other.momentum[1]).abs() / scale,
            (self.theta - other.theta).abs() / other.theta,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// exp(c + k·w − β|w|²/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxwellianParams {
    pub c: f64,
    pub k: Vec2,
    pub beta: f64,
}

impl MaxwellianParams {
    pub fn value(&self, w: Vec2) -> f64 {
        (self.c + self.k[0] * w[0] + self.k[1] * w[1] - 0.5 * self.beta * (w[0] * w[0] + w[1] * w[1])).exp()
    }

    pub fn field(&self, grid: VelocityGrid) -> DensityField {
        DensityField::from_fn(grid, |w| self.value(w))
    }

    /// Continuum parameters with the given mass, momentum and energy.
    pub fn continuum(m: &Conserved) -> Result<Self> {
        if !(m.mass > 0.0 && m.theta > 0.0) {
            return Err(Error::Invalid(format!("need positive mass and energy, got {m:?}")));
        }
        let beta = m.mass / m.theta;
        let k = [beta * m.momentum[0] / m.mass, beta * m.momentum[1] / m.mass];
        let c = (m.mass * beta / (2.0 * std::f64::consts::PI)).ln() - 0.5 * (k[0] * k[0] + k[1] * k[1]) / beta;
        Ok(MaxwellianParams { c, k, beta })
    }

    /// Maxwellian whose discrete mass, momentum and energy on `grid` equal
    /// `m`; Newton from the continuum parameters.
    pub fn matched(grid: VelocityGrid, m: &Conserved) -> Result<Self> {
        let mut p = Self::continuum(m)?;
        let e_target = m.theta + 0.5 * (m.momentum[0] * m.momentum[0] + m.momentum[1] * m.momentum[1]) / m.mass;
        let target = Vector4::new(m.mass, m.momentum[0], m.momentum[1], e_target);
        for _ in 0..50 {
            // moments of the current Maxwellian against 1, w1, w2, |w|²/2 and products
            let f = DensityField::from_fn(grid, |w| p.value(w));
            let mom = |a: i32, b: i32| f.raw_moment(a, b);
            let (m0, m1, m2) = (mom(0, 0), mom(1, 0), mom(0, 1));
            let (m11, m12, m22) = (mom(2, 0), mom(1, 1), mom(0, 2));
            let e = 0.5 * (m11 + m22);
            let e1 = 0.5 * (mom(3, 0) + mom(1, 2));
            let e2 = 0.5 * (mom(2, 1) + mom(0, 3));
            let ee = 0.25 * (mom(4, 0) + 2.0 * mom(2, 2) + mom(0, 4));
            let r = Vector4::new(m0, m1, m2, e) - target;
            if r.amax() <= 1e-15 * m.mass.max(e_target) {
                break;
            }
            #[rustfmt::skip]
            let jac = Matrix4::new(
                m0, m1, m2, -e,
                m1, m11, m12, -e1,
                m2, m12, m22, -e2,
                e, e1, e2, -ee,
            );
            let d = jac.lu().solve(&(-r)).ok_or_else(|| Error::Invalid("singular Maxwellian fit".into()))?;
            p.c += d[0];
            p.k[0] += d[1];
            p.k[1] += d[2];
            p.beta += d[3];
            if !(p.beta > 0.0) {
                return Err(Error::Invalid("Maxwellian fit lost positivity of β".into()));
            }
        }
        Ok(p)
    }
}

/// Face coefficients for one grid and one (k, β).
struct FaceSums {
    /// (Σx J, Σy J, Σx J w1 + Σy J w2)
    e: Vector3<f64>,
    jac: Matrix3<f64>,
}

/// Conservative solver on a fixed grid.
#[derive(Debug, Clone)]
pub struct MuZeroSolver {
    pub grid: VelocityGrid,
}

impl MuZeroSolver {
    pub fn new(grid: VelocityGrid) -> Self {
        MuZeroSolver { grid }
    }

    fn s_x(&self, i: usize, k: Vec2, beta: f64) -> f64 {
        self.grid.h() * (beta * self.grid.face(i) - k[0])
    }

    fn s_y(&self, j: usize, k: Vec2, beta: f64) -> f64 {
        self.grid.h() * (beta * self.grid.face(j) - k[1])
    }

    fn sums(&self, g: &[f64], k: Vec2, beta: f64) -> FaceSums {
        let grid = self.grid;
        let n = grid.n;
        let h = grid.h();
        // per row: [Σx J, Σx J w1, Σx Q, Σx Q w1, Σx Q w1², Σy J, Σy J w2, Σy Q, Σy Q w2, Σy Q w2²]
        let rows: Vec<[f64; 10]> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut a = [0.0; 10];
                for i in 1..n {
                    let s = self.s_x(i, k, beta);
                    let (ep, em) = ((0.5 * s).exp(), (-0.5 * s).exp());
                    let (gl, gr) = (g[j * n + i - 1], g[j * n + i]);
                    let jf = (ep * gr - em * gl) / h;
                    let q = (ep * gr + em * gl) / (2.0 * h);
                    let w = grid.face(i);
                    a[0] += jf;
                    a[1] += jf * w;
                    a[2] += q;
                    a[3] += q * w;
                    a[4] += q * w * w;
                }
                if j >= 1 {
                    let s = self.s_y(j, k, beta);
                    let (ep, em) = ((0.5 * s).exp(), (-0.5 * s).exp());
                    let w = grid.face(j);
                    for i in 0..n {
                        let (gl, gr) = (g[(j - 1) * n + i], g[j * n + i]);
                        let jf = (ep * gr - em * gl) / h;
                        let q = (ep * gr + em * gl) / (2.0 * h);
                        a[5] += jf;
                        a[6] += jf * w;
                        a[7] += q;
                        a[8] += q * w;
                        a[9] += q * w * w;
                    }
                }
                a
            })
            .collect();
        let mut t = [0.0; 10];
        for r in rows {
            for (a, b) in t.iter_mut().zip(r) {
                *a += b;
            }
        }
        let e = Vector3::new(t[0], t[5], t[1] + t[6]);
        // ∂s/∂k = −h, ∂s/∂β = h w_f, ∂J/∂s = Q
        #[rustfmt::skip]
        let jac = Matrix3::new(
            -h * t[2], 0.0, h * t[3],
            0.0, -h * t[7], h * t[8],
            -h * t[3], -h * t[8], h * (t[4] + t[9]),
        );
        FaceSums { e, jac }
    }

    /// (k, β) making the discrete momentum and energy rates vanish for g.
    pub fn conserving_parameters(&self, g: &[f64], guess: (Vec2, f64)) -> Result<(Vec2, f64)> {
        let (mut k, mut beta) = guess;
        let mut scale = None;
        for _ in 0..40 {
            let s = self.sums(g, k, beta);
            let sc = *scale.get_or_insert_with(|| s.jac.amax().max(f64::MIN_POSITIVE));
            if s.e.amax() <= 1e-14 * sc {
                return Ok((k, beta));
            }
            let d = s.jac.lu().solve(&(-s.e)).ok_or_else(|| Error::StepFailure { t: f64::NAN, reason: "singular conservation Jacobian".into() })?;
            k[0] += d[0];
            k[1] += d[1];
            beta += d[2];
            if d.amax() <= 1e-15 * (1.0 + beta.abs() + k[0].abs() + k[1].abs()) {
                return Ok((k, beta));
            }
        }
        Ok((k, beta))
    }

    /// ∇·J for given (k, β).
    pub fn rhs(&self, g: &[f64], k: Vec2, beta: f64, out: &mut [f64]) {
        let grid = self.grid;
        let n = grid.n;
        let h = grid.h();
        let ex: Vec<(f64, f64)> = (0..=n)
            .map(|i| {
                let s = self.s_x(i, k, beta);
                ((0.5 * s).exp(), (-0.5 * s).exp())
            })
            .collect();
        let ey: Vec<(f64, f64)> = (0..=n)
            .map(|j| {
                let s = self.s_y(j, k, beta);
                ((0.5 * s).exp(), (-0.5 * s).exp())
            })
            .collect();
        let xflux = |i: usize, j: usize| {
            if i == 0 || i == n {
                0.0
            } else {
                (ex[i].0 * g[j * n + i] - ex[i].1 * g[j * n + i - 1]) / h
            }
        };
        let yflux = |i: usize, j: usize| {
            if j == 0 || j == n {
                0.0
            } else {
                (ey[j].0 * g[j * n + i] - ey[j].1 * g[(j - 1) * n + i]) / h
            }
        };
        out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, o) in row.iter_mut().enumerate() {
                *o = (xflux(i + 1, j) - xflux(i, j) + yflux(i, j + 1) - yflux(i, j)) / h;
            }
        });
    }

    /// Forward-Euler positivity bound h²/max Σ outgoing coefficients.
    pub fn stable_dt(&self, k: Vec2, beta: f64) -> f64 {
        let grid = self.grid;
        let n = grid.n;
        let h = grid.h();
        let mut worst = 0.0f64;
        for i in 0..n {
            // leaving cell i through its right face uses e^{−s/2}, through its left face e^{s/2}
            let out_x = (-0.5 * self.s_x(i + 1, k, beta)).exp() * (i + 1 < n) as u8 as f64
                + (0.5 * self.s_x(i, k, beta)).exp() * (i > 0) as u8 as f64;
            for j in 0..n {
                let out_y = (-0.5 * self.s_y(j + 1, k, beta)).exp() * (j + 1 < n) as u8 as f64
                    + (0.5 * self.s_y(j, k, beta)).exp() * (j > 0) as u8 as f64;
                worst = worst.max(out_x + out_y);
            }
        }
        h * h / worst
    }

    /// One SSP-RK3 step; the conserving parameters are re-solved per stage.
    pub fn step(&self, g: &DensityField, dt: f64, guess: (Vec2, f64)) -> Result<(DensityField, (Vec2, f64))> {
        let len = g.values.len();
        let mut kbuf = vec![0.0; len];
        let stage = |y: &[f64], guess: (Vec2, f64), out: &mut Vec<f64>| -> Result<(Vec2, f64)> {
            let p = self.conserving_parameters(y, guess)?;
            let bound = self.stable_dt(p.0, p.1);
            if dt > bound * (1.0 + 1e-12) {
                return Err(Error::CflViolation { dt, bound });
            }
            self.rhs(y, p.0, p.1, out);
            Ok(p)
        };
        let p0 = stage(&g.values, guess, &mut kbuf)?;
        let y1: Vec<f64> = g.values.iter().zip(&kbuf).map(|(y, k)| y + dt * k).collect();
        let p1 = stage(&y1, p0, &mut kbuf)?;
        let y2: Vec<f64> = g.values.iter().zip(y1.iter().zip(&kbuf)).map(|(y, (a, k))| 0.75 * y + 0.25 * (a + dt * k)).collect();
        stage(&y2, p1, &mut kbuf)?;
        let values = g.values.iter().zip(y2.iter().zip(&kbuf)).map(|(y, (a, k))| y / 3.0 + 2.0 / 3.0 * (a + dt * k)).collect();
        Ok((DensityField { grid: g.grid, values }, p0))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MuZeroRecord {
    pub t: f64,
    pub conserved: Conserved,
    pub l1_to_matched: f64,
}

#[derive(Debug, Clone)]
pub struct MuZeroRun {
    pub initial: Conserved,
    pub matched: MaxwellianParams,
    pub records: Vec<MuZeroRecord>,
    pub steps: usize,
    pub final_field: DensityField,
}

impl MuZeroRun {
    /// Worst relative deviation of the conserved quantities over the run.
    pub fn max_conservation_error(&self) -> f64 {
        self.records.iter().map(|r| r.conserved.max_relative_deviation(&self.initial)).fold(0.0, f64::max)
    }

    pub fn l1_series(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, r.l1_to_matched)).collect()
    }

    /// Semi-log fit of the L1 distance over the records with values in
    /// [floor, ceiling]; the floor keeps round-off out of the fit.
    pub fn exponential_fit(&self, floor: f64, ceiling: f64) -> Result<RateFit> {
        let pts: Vec<(f64, f64)> = self.l1_series().into_iter().filter(|&(_, v)| v >= floor && v <= ceiling).collect();
        let (t0, t1) = match (pts.first(), pts.last()) {
            (Some(a), Some(b)) => (a.0, b.0),
            _ => return Err(Error::InsufficientData("no L1 values in the fit band".into())),
        };
        exp_fit_between(&pts, t0, t1)
    }
}

/// Evolves g0 on [0, t_end] recording every `record_every` time units.
pub fn mu_zero_run(g0: &DensityField, t_end: f64, record_every: f64) -> Result<MuZeroRun> {
    if !(t_end > 0.0 && record_every > 0.0) {
        return Err(Error::Invalid("t_end and record interval must be positive".into()));
    }
    if g0.min_value() < 0.0 {
        return Err(Error::Invalid("initial density has negative cells".into()));
    }
    let solver = MuZeroSolver::new(g0.grid);
    let initial = Conserved::of(g0);
    let matched = MaxwellianParams::matched(g0.grid, &initial)?;
    let reference = matched.field(g0.grid);
    let record = |g: &DensityField, t: f64| MuZeroRecord { t, conserved: Conserved::of(g), l1_to_matched: g.l1_distance(&reference) };
    let mut g = g0.clone();
    let c0 = MaxwellianParams::continuum(&initial)?;
    let mut params = solver.conserving_parameters(&g.values, (c0.k, c0.beta))?;
    let mut records = vec![record(&g, 0.0)];
    let mut t = 0.0;
    let mut next = record_every;
    let mut steps = 0;
    while t < t_end {
        let target = next.min(t_end);
        // the bound moves with (k, β); 0.5 leaves room for the stage updates
        let dt = (0.5 * solver.stable_dt(params.0, params.1)).min(target - t);
        let (ng, p) = solver.step(&g, dt, params)?;
        g = ng;
        params = p;
        steps += 1;
        if target - (t + dt) <= 1e-12 * target.max(1.0) {
            t = target;
            records.push(record(&g, t));
            next += record_every;
        } else {
            t += dt;
        }
    }
    Ok(MuZeroRun { initial, matched, records, steps, final_field: g })
}
