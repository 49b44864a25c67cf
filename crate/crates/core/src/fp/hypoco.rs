//! Discrete checks of the hypocoercive structure of the autonomous limit
//! ∂ₛu = 4∂₂²u + ∇u·Q p, Q = [[0, √3/2], [−√3/2, −2]], written as
//! ∂ₛu + (A*A + B)u = 0 in L²(G^M) with A = 2∂₂, B = −(√3/2)(p₂∂₁ − p₁∂₂)
//! and commutator C = [A, B] = −√3∂₁.

use super::scheme::{FluxScheme, ShapeCoefficients, ShapeOperator};
use super::{grid_sum, maxwellian_density, DensityField, VelocityGrid};
use crate::error::{Error, Result};
use crate::fit::{exp_fit_between, RateFit};
use crate::tensor::{Mat2, SymTensor2, Vec2};
use serde::Serialize;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Grid functions and the discrete operators, central differences inside and
/// one-sided differences on the outer cells.
#[derive(Debug, Clone)]
pub struct HypoOperators {
    pub grid: VelocityGrid,
    weight: Vec<f64>,
}

impl HypoOperators {
    pub fn new(grid: VelocityGrid) -> Self {
        let n = grid.n;
        let weight = (0..n * n).map(|k| maxwellian_density(grid.point(k % n, k / n))).collect();
        HypoOperators { grid, weight }
    }

    pub fn sample(&self, f: impl Fn(Vec2) -> f64 + Sync) -> Vec<f64> {
        DensityField::from_fn(self.grid, f).values
    }

    fn diff(&self, u: &[f64], axis: usize) -> Vec<f64> {
        let n = self.grid.n;
        let h = self.grid.h();
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let (a, b) = if axis == 0 { (i, n) } else { (j, n) };
                let (lo, hi) = (a.saturating_sub(1), (a + 1).min(b - 1));
                let at = |k: usize| if axis == 0 { u[j * n + k] } else { u[k * n + i] };
                out[j * n + i] = (at(hi) - at(lo)) / ((hi - lo) as f64 * h);
            }
        }
        out
    }

    pub fn a(&self, u: &[f64]) -> Vec<f64> {
        self.diff(u, 1).into_iter().map(|d| 2.0 * d).collect()
    }

    /// A* = −2∂₂ + p₂, the adjoint of A in L²(G^M).
    pub fn a_star(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.n;
        self.diff(u, 1).iter().enumerate().map(|(k, d)| -2.0 * d + self.grid.coord(k / n) * u[k]).collect()
    }

    pub fn b(&self, u: &[f64]) -> Vec<f64> {
        let n = self.grid.n;
        let (d1, d2) = (self.diff(u, 0), self.diff(u, 1));
        (0..n * n)
            .map(|k| {
                let p = self.grid.point(k % n, k / n);
                -0.5 * SQRT3 * (p[1] * d1[k] - p[0] * d2[k])
            })
            .collect()
    }

    pub fn c(&self, u: &[f64]) -> Vec<f64> {
        self.diff(u, 0).into_iter().map(|d| -SQRT3 * d).collect()
    }

    /// ⟨u, v⟩ = Σ u v G^M h².
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.grid.n;
        let h2 = self.grid.h() * self.grid.h();
        grid_sum(&self.grid, |i, j| {
            let k = j * n + i;
            u[k] * v[k] * self.weight[k]
        }) * h2
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Weighted mean ⟨u, 1⟩/⟨1, 1⟩.
    pub fn mean(&self, u: &[f64]) -> f64 {
        let one = vec![1.0; u.len()];
        self.inner(u, &one) / self.inner(&one, &one)
    }

    /// sqrt(‖u‖² + ‖Au‖² + ‖Cu‖²) of u minus its weighted mean.
    pub fn h1_norm(&self, u: &[f64]) -> f64 {
        let m = self.mean(u);
        let v: Vec<f64> = u.iter().map(|x| x - m).collect();
        let (a, c) = (self.a(&v), self.c(&v));
        (self.inner(&v, &v) + self.inner(&a, &a) + self.inner(&c, &c)).sqrt()
    }

    /// max over cells with |p| ≤ radius of |(AB − BA)u + √3 ∂₁u_exact|.
    pub fn commutator_error(&self, u: impl Fn(Vec2) -> f64 + Sync, d1u: impl Fn(Vec2) -> f64, radius: f64) -> f64 {
        let n = self.grid.n;
        let uv = self.sample(u);
        let ab = self.a(&self.b(&uv));
        let ba = self.b(&self.a(&uv));
        let mut worst = 0.0f64;
        for k in 0..n * n {
            let p = self.grid.point(k % n, k / n);
            if p[0].hypot(p[1]) <= radius {
                worst = worst.max((ab[k] - ba[k] + SQRT3 * d1u(p)).abs());
            }
        }
        worst
    }

    /// |⟨Au, v⟩ − ⟨u, A*v⟩| / (‖u‖‖v‖).
    pub fn adjointness_defect(&self, u: &[f64], v: &[f64]) -> f64 {
        let lhs = self.inner(&self.a(u), v);
        let rhs = self.inner(u, &self.a_star(v));
        (lhs - rhs).abs() / (self.norm(u) * self.norm(v))
    }
}

/// Coefficients of the autonomous flow as a shape equation for G = u G^M:
/// D = 4β⊗β and M = D/2 + the rotation that produces B.
pub fn autonomous_coefficients() -> ShapeCoefficients {
    ShapeCoefficients { drift: Mat2([[0.0, 0.5 * SQRT3], [-0.5 * SQRT3, 2.0]]), diffusion: SymTensor2::new(0.0, 0.0, 4.0) }
}

#[derive(Debug, Clone, Serialize)]
pub struct Coercivity {
    /// Smallest nonzero generalized eigenvalue of the face form of
    /// ‖Au‖² + ‖Cu‖² against ⟨u, u⟩.
    pub kappa: f64,
    /// ‖K v − κ M v‖ / ‖M v‖ at the returned vector (in the scaled variables).
    pub residual: f64,
    pub iterations: usize,
}

/// Inverse iteration with conjugate gradients for the smallest nonzero
/// eigenvalue of M^{-1/2} K M^{-1/2}, where K is the face-difference form
/// Σ_y-faces 4 G^M (Δ₂u/h)² h² + Σ_x-faces 3 G^M (Δ₁u/h)² h² and M = diag(G^M h²).
pub fn coercivity_estimate(grid: VelocityGrid, sweeps: usize) -> Result<Coercivity> {
    let n = grid.n;
    let h = grid.h();
    let h2 = h * h;
    let sq: Vec<f64> = (0..n * n).map(|k| (maxwellian_density(grid.point(k % n, k / n)) * h2).sqrt()).collect();
    // face weights times 1/h² · h² (the h² of the area element cancels 1/h²)
    let xw = |i: usize, j: usize| 3.0 * maxwellian_density([grid.face(i), grid.coord(j)]);
    let yw = |i: usize, j: usize| 4.0 * maxwellian_density([grid.coord(i), grid.face(j)]);
    let xwv: Vec<f64> = (0..n).flat_map(|j| (0..=n).map(move |i| (i, j))).map(|(i, j)| xw(i, j)).collect();
    let ywv: Vec<f64> = (0..=n).flat_map(|j| (0..n).map(move |i| (i, j))).map(|(i, j)| yw(i, j)).collect();
    // y ↦ M^{-1/2} K M^{-1/2} y
    let apply = |y: &[f64], out: &mut [f64]| {
        let u: Vec<f64> = y.iter().zip(&sq).map(|(a, s)| a / s).collect();
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..n {
            for i in 1..n {
                let w = xwv[j * (n + 1) + i];
                let d = u[j * n + i] - u[j * n + i - 1];
                out[j * n + i] += w * d;
                out[j * n + i - 1] -= w * d;
            }
        }
        for j in 1..n {
            for i in 0..n {
                let w = ywv[j * n + i];
                let d = u[j * n + i] - u[(j - 1) * n + i];
                out[j * n + i] += w * d;
                out[(j - 1) * n + i] -= w * d;
            }
        }
        out.iter_mut().zip(&sq).for_each(|(o, s)| *o /= s);
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let null_norm = dot(&sq, &sq).sqrt();
    let q: Vec<f64> = sq.iter().map(|s| s / null_norm).collect();
    let project = |v: &mut [f64]| {
        let c = dot(v, &q);
        v.iter_mut().zip(&q).for_each(|(a, b)| *a -= c * b);
    };
    let cg = |b: &[f64]| -> Vec<f64> {
        let len = b.len();
        let mut x = vec![0.0; len];
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut ap = vec![0.0; len];
        let b_norm = dot(b, b).sqrt();
        let mut rr = dot(&r, &r);
        for _ in 0..20 * n {
            if rr.sqrt() <= 1e-12 * b_norm {
                break;
            }
            apply(&p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            x.iter_mut().zip(&p).for_each(|(a, b)| *a += alpha * b);
            r.iter_mut().zip(&ap).for_each(|(a, b)| *a -= alpha * b);
            project(&mut r);
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            p.iter_mut().zip(&r).for_each(|(a, b)| *a = b + beta * *a);
        }
        x
    };
    // start from the scaled p₁ + p₂, orthogonal to constants by symmetry
    let mut v: Vec<f64> = (0..n * n)
        .map(|k| {
            let p = grid.point(k % n, k / n);
            (p[0] + 0.3 * p[1]) * sq[k]
        })
        .collect();
    project(&mut v);
    let mut kappa = f64::NAN;
    let mut kv = vec![0.0; n * n];
    let mut iterations = 0;
    for it in 0..sweeps {
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|a| *a /= nv);
        apply(&v, &mut kv);
        let rq = dot(&v, &kv);
        iterations = it + 1;
        if (rq - kappa).abs() <= 1e-12 * rq {
            kappa = rq;
            break;
        }
        kappa = rq;
        v = cg(&v);
        project(&mut v);
    }
    let nv = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|a| *a /= nv);
    apply(&v, &mut kv);
    let residual = kv.iter().zip(&v).map(|(a, b)| (a - kappa * b).powi(2)).sum::<f64>().sqrt();
    if !kappa.is_finite() {
        return Err(Error::StepFailure { t: 0.0, reason: "coercivity iteration produced no estimate".into() });
    }
    Ok(Coercivity { kappa, residual, iterations })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayRun {
    /// (s, weighted H¹ norm of u − mean)
    pub series: Vec<(f64, f64)>,
    pub fit: RateFit,
    /// Largest change of the weighted mean of u over the run.
    pub mean_drift: f64,
    pub steps: usize,
}

/// Evolves the autonomous flow from u0 with the balanced scheme and fits the
/// exponential decay of the weighted H¹ norm on [fit_from, s_end].
pub fn autonomous_decay_run(grid: VelocityGrid, u0: impl Fn(Vec2) -> f64 + Sync, s_end: f64, fit_from: f64) -> Result<DecayRun> {
    if !(s_end > fit_from && fit_from >= 0.0) {
        return Err(Error::Invalid("need 0 ≤ fit_from < s_end".into()));
    }
    let ops = HypoOperators::new(grid);
    let coef = autonomous_coefficients();
    let op = ShapeOperator::new(grid, FluxScheme::Balanced);
    let mut g = DensityField::from_fn(grid, |p| u0(p) * maxwellian_density(p));
    let to_u = |g: &DensityField| -> Vec<f64> { g.values.iter().zip(&ops.weight).map(|(a, w)| a / w).collect() };
    let dt_max = 0.9 * op.cfl_bound(&coef);
    let record_every = s_end / 200.0;
    let u = to_u(&g);
    let m0 = ops.mean(&u);
    let mut series = vec![(0.0, ops.h1_norm(&u))];
    let mut mean_drift = 0.0f64;
    let (mut s, mut steps) = (0.0, 0);
    let mut next = record_every;
    while s < s_end {
        let target = next.min(s_end);
        let dt = dt_max.min(target - s);
        g = op.step(&g, &coef, dt)?;
        steps += 1;
        if target - (s + dt) <= 1e-12 * target.max(1.0) {
            s = target;
            next += record_every;
            let u = to_u(&g);
            mean_drift = mean_drift.max((ops.mean(&u) - m0).abs());
            series.push((s, ops.h1_norm(&u)));
        } else {
            s += dt;
        }
    }
    let fit = exp_fit_between(&series, fit_from, s_end)?;
    Ok(DecayRun { series, fit, mean_drift, steps })
}

#[derive(Debug, Clone, Serialize)]
pub struct HypocoReport {
    pub n: usize,
    /// Commutator errors on the cubic test at n and 2n.
    pub commutator_errors: [f64; 2],
    pub commutator_order: f64,
    pub linear_commutator_error: f64,
    pub coercivity: Coercivity,
    pub decay_rate: f64,
    pub decay_r_squared: f64,
}

/// Cubic used for the commutator test and its p₁-derivative.
pub fn cubic_test(p: Vec2) -> f64 {
    p[0].powi(3) + p[0] * p[1] * p[1] - 2.0 * p[0] * p[0] * p[1] + p[1].powi(3) / 3.0
}

pub fn cubic_test_d1(p: Vec2) -> f64 {
    3.0 * p[0] * p[0] + p[1] * p[1] - 4.0 * p[0] * p[1]
}

/// All three checks: commutator consistency at n and 2n, the coercivity
/// constant, and the decay rate from u0 = p₁ over s ∈ [0, 20].
pub fn hypoco_check(grid: VelocityGrid) -> Result<HypocoReport> {
    if grid.n < 64 {
        return Err(Error::Invalid(format!("commutator checks need n ≥ 64, got {}", grid.n)));
    }
    let fine = VelocityGrid::new(2 * grid.n, grid.half_extent)?;
    let e0 = HypoOperators::new(grid).commutator_error(cubic_test, cubic_test_d1, 4.0);
    let e1 = HypoOperators::new(fine).commutator_error(cubic_test, cubic_test_d1, 4.0);
    let lin = HypoOperators::new(grid).commutator_error(|p| p[0], |_| 1.0, 4.0);
    let coercivity = coercivity_estimate(grid, 60)?;
    let decay = autonomous_decay_run(grid, |p| p[0], 20.0, 5.0)?;
    Ok(HypocoReport {
        n: grid.n,
        commutator_errors: [e0, e1],
        commutator_order: (e0 / e1).log2(),
        linear_commutator_error: lin,
        coercivity,
        decay_rate: -decay.fit.exponent,
        decay_r_squared: decay.fit.r_squared,
    })
}
