//! Direct simulation Monte Carlo for the spatially homogeneous hard-disc
//! Boltzmann equation in simple shear.
//!
//! Collisions are done in physical velocities w with the classical kernel
//! [ν·(w − w')]₊; the rescaling p = ηw with η = T̂^{-1/2} is only applied for
//! diagnostics.

use crate::error::{Error, Result};
use crate::tensor::{dot, norm, sym_inv_sqrt, ShearFrame, SymTensor2, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};

/// Minimum ensemble size for the statistical diagnostics.
pub const MIN_STAT_PARTICLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub velocities: Vec<Vec2>,
    /// Mass carried by each particle.
    pub weight: f64,
    rng: ChaCha8Rng,
    /// Fractional collision candidate carried to the next step.
    remainder: f64,
}

impl ParticleEnsemble {
    /// Unit mass split evenly over the given velocities.
    pub fn from_velocities(velocities: Vec<Vec2>, seed: u64) -> Result<Self> {
        if velocities.len() < 2 {
            return Err(Error::InsufficientData("need at least two particles".into()));
        }
        if velocities.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite particle velocity".into()));
        }
        let weight = 1.0 / velocities.len() as f64;
        Ok(ParticleEnsemble { velocities, weight, rng: ChaCha8Rng::seed_from_u64(seed), remainder: 0.0 })
    }

    /// Standard-normal velocities scaled by `std`.
    pub fn maxwellian(n: usize, std: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                [std * a, std * b]
            })
            .collect();
        let mut e = Self::from_velocities(v, seed)?;
        e.rng = rng;
        Ok(e)
    }

    /// Two narrow Gaussian bumps at ±(sep/2)e₁ with standard deviation `std`.
    pub fn bimodal(n: usize, sep: f64, std: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n)
            .map(|i| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let c = if i % 2 == 0 { 0.5 * sep } else { -0.5 * sep };
                [c + std * a, std * b]
            })
            .collect();
        let mut e = Self::from_velocities(v, seed)?;
        e.rng = rng;
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weight * self.len() as f64
    }

    pub fn momentum(&self) -> Vec2 {
        let s = self.velocities.iter().fold([0.0, 0.0], |a, w| [a[0] + w[0], a[1] + w[1]]);
        [self.weight * s[0], self.weight * s[1]]
    }

    /// θ = tr T̂ = (weight/2) Σ |w|².
    pub fn theta(&self) -> f64 {
        0.5 * self.weight * self.velocities.iter().map(|w| dot(*w, *w)).sum::<f64>()
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().map(|w| norm(*w)).fold(0.0, f64::max)
    }

    fn require_stats(&self) -> Result<()> {
        if self.len() < MIN_STAT_PARTICLES {
            return Err(Error::InsufficientData(format!(
                "{} particles, statistics need at least {MIN_STAT_PARTICLES}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Characteristic flow of the shear drift: w ← (Id − μ dt α⊗β) w.
pub fn drift_step(ens: &mut ParticleEnsemble, shear: &ShearFrame, dt: f64) {
    let (a, b, s) = (shear.alpha, shear.beta, shear.mu * dt);
    if s == 0.0 {
        return;
    }
    for w in &mut ens.velocities {
        let c = s * dot(b, *w);
        w[0] -= c * a[0];
        w[1] -= c * a[1];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairSelection {
    /// No-time-counter selection against a relative-speed majorant.
    NoTimeCounter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionConfig {
    pub dt: f64,
    pub majorant: f64,
    pub selection: PairSelection,
}

impl CollisionConfig {
    pub fn new(dt: f64) -> Self {
        CollisionConfig { dt, majorant: 0.0, selection: PairSelection::NoTimeCounter }
    }

    /// 2 max|w| bounds every pairwise relative speed.
    pub fn refresh(&mut self, ens: &ParticleEnsemble) {
        self.majorant = 2.0 * ens.max_speed();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CollisionStats {
    pub candidates: u64,
    pub accepted: u64,
    /// Largest |Δ(w + w')| / (|w| + |w'|) over accepted collisions.
    pub max_momentum_defect: f64,
    /// Largest |Δ(|w|² + |w'|²)| / (|w|² + |w'|²) over accepted collisions.
    pub max_energy_defect: f64,
}

impl CollisionStats {
    fn merge(&mut self, o: &CollisionStats) {
        self.candidates += o.candidates;
        self.accepted += o.accepted;
        self.max_momentum_defect = self.max_momentum_defect.max(o.max_momentum_defect);
        self.max_energy_defect = self.max_energy_defect.max(o.max_energy_defect);
    }
}

/// Post-collision velocities w − ν(ν·(w−w')), w' + ν(ν·(w−w')).
pub fn collide_pair(w: Vec2, wp: Vec2, nu: Vec2) -> (Vec2, Vec2) {
    let k = nu[0] * (w[0] - wp[0]) + nu[1] * (w[1] - wp[1]);
    ([w[0] - k * nu[0], w[1] - k * nu[1]], [wp[0] + k * nu[0], wp[1] + k * nu[1]])
}

fn unit(angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    [c, s]
}

/// One collision step. Expected candidates π·m·(N−1)·M·dt, with m the total
/// mass and M the majorant; each is accepted with probability [ν·(w−w')]₊/M.
/// If a candidate exceeds the majorant the whole step is rolled back.
pub fn collide_step(ens: &mut ParticleEnsemble, cfg: &CollisionConfig) -> Result<CollisionStats> {
    if !(cfg.dt > 0.0) || !(cfg.majorant > 0.0) {
        return Err(Error::Invalid(format!("collision dt {} and majorant {} must be positive", cfg.dt, cfg.majorant)));
    }
    let n = ens.len();
    let expected = PI * ens.weight * (n as f64) * (n as f64 - 1.0) * cfg.majorant * cfg.dt + ens.remainder;
    let count = expected.floor();
    let backup = (ens.velocities.clone(), ens.rng.clone(), ens.remainder);
    ens.remainder = expected - count;
    let mut st = CollisionStats { candidates: count as u64, ..Default::default() };
    for _ in 0..count as u64 {
        let i = ens.rng.gen_range(0..n);
        let mut j = ens.rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let nu = unit(ens.rng.gen::<f64>() * 2.0 * PI);
        let (w, wp) = (ens.velocities[i], ens.velocities[j]);
        let rate = (nu[0] * (w[0] - wp[0]) + nu[1] * (w[1] - wp[1])).max(0.0);
        if rate > cfg.majorant {
            (ens.velocities, ens.rng, ens.remainder) = backup;
            return Err(Error::MajorantExceeded { speed: rate, majorant: cfg.majorant });
        }
        if ens.rng.gen::<f64>() * cfg.majorant >= rate {
            continue;
        }
        let (a, b) = collide_pair(w, wp, nu);
        let mom = norm([a[0] + b[0] - w[0] - wp[0], a[1] + b[1] - w[1] - wp[1]]) / (norm(w) + norm(wp));
        let e0 = dot(w, w) + dot(wp, wp);
        let en = (dot(a, a) + dot(b, b) - e0).abs() / e0;
        st.max_momentum_defect = st.max_momentum_defect.max(mom);
        st.max_energy_defect = st.max_energy_defect.max(en);
        ens.velocities[i] = a;
        ens.velocities[j] = b;
        st.accepted += 1;
    }
    Ok(st)
}

/// T̂ = (weight/2) Σ w⊗w.
pub fn empirical_stress(ens: &ParticleEnsemble) -> SymTensor2 {
    let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
    for w in &ens.velocities {
        xx += w[0] * w[0];
        xy += w[0] * w[1];
        yy += w[1] * w[1];
    }
    SymTensor2 { xx, xy, yy }.scale(0.5 * ens.weight)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledFrame {
    pub eta: SymTensor2,
    pub stress: SymTensor2,
}

impl RescaledFrame {
    pub fn rescale(&self, w: Vec2) -> Vec2 {
        self.eta.apply(w)
    }

    /// (weight/2) Σ p⊗p with p = ηw; equals Id up to rounding.
    pub fn renormalized_stress(&self, ens: &ParticleEnsemble) -> SymTensor2 {
        let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
        for w in &ens.velocities {
            let p = self.rescale(*w);
            xx += p[0] * p[0];
            xy += p[0] * p[1];
            yy += p[1] * p[1];
        }
        SymTensor2 { xx, xy, yy }.scale(0.5 * ens.weight)
    }
}

/// η = T̂^{-1/2}.
pub fn update_frame(ens: &ParticleEnsemble) -> Result<RescaledFrame> {
    ens.require_stats()?;
    let stress = empirical_stress(ens);
    let eta = sym_inv_sqrt(&stress).map_err(|e| Error::DegenerateStress(e.to_string()))?;
    Ok(RescaledFrame { eta, stress })
}

/// C_ν = [(ν·η²ν) η⁻¹ν⊗νη⁻¹ − ην⊗νη⁻¹]_sym.
///
/// Written with x = η⁻¹ν, y = ην as sym[(|y|²/|ν|²) x⊗x − y⊗x] so that η = Id
/// gives exactly zero. The kinetic energy change of a rescaled collision is
/// 2 q·C_ν q with q = p − p'.
pub fn energy_defect_tensor(eta: &SymTensor2, nu: Vec2) -> Result<SymTensor2> {
    let inv = eta.inverse()?;
    let (x, y) = (inv.apply(nu), eta.apply(nu));
    let r = dot(y, y) / dot(nu, nu);
    Ok(SymTensor2::sym_outer(x, x).scale(r).sub(&SymTensor2::sym_outer(y, x)))
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
}

#[derive(Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn finish(&self, scale: f64) -> McEstimate {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        McEstimate { estimate: scale * self.mean, stderr: scale.abs() * (var / self.n as f64).sqrt(), samples: self.n }
    }
}

fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let i = rng.gen_range(0..n);
    let mut j = rng.gen_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// tr P = ¼ ∫∫∫ 2 q·C_ν q GG' [ν·η⁻¹q]₊ dν dp dp' estimated from random
/// particle pairs and uniform ν. Since η⁻¹q = w − w' the kernel is evaluated in
/// physical velocities.
pub fn stress_rate_trace(ens: &ParticleEnsemble, eta: &SymTensor2, mc_pairs: u64, seed: u64) -> Result<McEstimate> {
    ens.require_stats()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Moments::default();
    for _ in 0..mc_pairs {
        let (i, j) = random_pair(&mut rng, ens.len());
        let nu = unit(rng.gen::<f64>() * 2.0 * PI);
        let u = [ens.velocities[i][0] - ens.velocities[j][0], ens.velocities[i][1] - ens.velocities[j][1]];
        let k = dot(nu, u).max(0.0);
        if k == 0.0 {
            acc.push(0.0);
            continue;
        }
        let q = eta.apply(u);
        acc.push(2.0 * energy_defect_tensor(eta, nu)?.quad(q) * k);
    }
    let m = ens.mass();
    Ok(acc.finish(0.25 * 2.0 * PI * m * m))
}

/// Full stress-rate tensor P = η (½∫ w⊗w Q[g] dw) η, with the largest
/// component standard error.
pub fn stress_rate_tensor(ens: &ParticleEnsemble, eta: &SymTensor2, mc_pairs: u64, seed: u64) -> Result<(SymTensor2, f64)> {
    ens.require_stats()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc: [Moments; 3] = Default::default();
    for _ in 0..mc_pairs {
        let (i, j) = random_pair(&mut rng, ens.len());
        let nu = unit(rng.gen::<f64>() * 2.0 * PI);
        let (w, wp) = (ens.velocities[i], ens.velocities[j]);
        let k = dot(nu, [w[0] - wp[0], w[1] - wp[1]]).max(0.0);
        let (a, b) = collide_pair(w, wp, nu);
        let d = SymTensor2::sym_outer(a, a)
            .add(&SymTensor2::sym_outer(b, b))
            .sub(&SymTensor2::sym_outer(w, w))
            .sub(&SymTensor2::sym_outer(wp, wp))
            .congruence(&eta.to_mat())
            .scale(k);
        acc[0].push(d.xx);
        acc[1].push(d.xy);
        acc[2].push(d.yy);
    }
    let m = ens.mass();
    let s = 0.25 * 2.0 * PI * m * m;
    let e: Vec<McEstimate> = acc.iter().map(|a| a.finish(s)).collect();
    let p = SymTensor2 { xx: e[0].estimate, xy: e[1].estimate, yy: e[2].estimate };
    Ok((p, e.iter().map(|x| x.stderr).fold(0.0, f64::max)))
}

/// Uniform 2-D histogram density on [c₀ ± h₀] × [c₁ ± h₁].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2 {
    pub bins: usize,
    pub center: Vec2,
    pub half_width: Vec2,
    /// Density values (mass per area), row-major with the first axis fastest.
    pub density: Vec<f64>,
}

impl Histogram2 {
    pub fn new(samples: &[Vec2], weight: f64, bins: usize, center: Vec2, half_width: Vec2) -> Result<Self> {
        if bins == 0 || !(half_width[0] > 0.0 && half_width[1] > 0.0) {
            return Err(Error::Invalid("histogram needs bins > 0 and a positive extent".into()));
        }
        let mut h = Histogram2 { bins, center, half_width, density: vec![0.0; bins * bins] };
        let cell = weight / h.cell_area();
        for p in samples {
            if let Some(k) = h.index(*p) {
                h.density[k] += cell;
            }
        }
        Ok(h)
    }

    /// Bins covering ±5 empirical standard deviations about the sample mean.
    pub fn from_samples(samples: &[Vec2], weight: f64, bins: usize) -> Result<Self> {
        let n = samples.len() as f64;
        let mean = samples.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
        let var = samples.iter().fold([0.0, 0.0], |a, p| {
            [a[0] + (p[0] - mean[0]).powi(2) / n, a[1] + (p[1] - mean[1]).powi(2) / n]
        });
        Self::new(samples, weight, bins, mean, [5.0 * var[0].sqrt(), 5.0 * var[1].sqrt()])
    }

    fn cell_area(&self) -> f64 {
        let b = self.bins as f64;
        4.0 * self.half_width[0] * self.half_width[1] / (b * b)
    }

    fn index(&self, p: Vec2) -> Option<usize> {
        let b = self.bins as f64;
        let fx = (p[0] - self.center[0] + self.half_width[0]) / (2.0 * self.half_width[0]) * b;
        let fy = (p[1] - self.center[1] + self.half_width[1]) / (2.0 * self.half_width[1]) * b;
        if !(fx >= 0.0 && fx < b && fy >= 0.0 && fy < b) {
            return None;
        }
        Some(fy as usize * self.bins + fx as usize)
    }

    /// Piecewise-constant density; zero outside the covered box.
    pub fn eval(&self, p: Vec2) -> f64 {
        self.index(p).map_or(0.0, |k| self.density[k])
    }

    /// Bilinear interpolation between bin centres, zero outside the box.
    pub fn eval_linear(&self, p: Vec2) -> f64 {
        let b = self.bins as f64;
        let fx = (p[0] - self.center[0] + self.half_width[0]) / (2.0 * self.half_width[0]) * b;
        let fy = (p[1] - self.center[1] + self.half_width[1]) / (2.0 * self.half_width[1]) * b;
        if !(fx >= 0.0 && fx < b && fy >= 0.0 && fy < b) {
            return 0.0;
        }
        let (x, y) = (fx - 0.5, fy - 0.5);
        let (i, j) = (x.floor(), y.floor());
        let (tx, ty) = (x - i, y - j);
        let at = |di: f64, dj: f64| -> f64 {
            let (a, c) = (i + di, j + dj);
            if a < 0.0 || c < 0.0 || a >= b || c >= b {
                0.0
            } else {
                self.density[c as usize * self.bins + a as usize]
            }
        };
        (1.0 - ty) * ((1.0 - tx) * at(0.0, 0.0) + tx * at(1.0, 0.0)) + ty * ((1.0 - tx) * at(0.0, 1.0) + tx * at(1.0, 1.0))
    }

    pub fn l1_distance(&self, o: &Histogram2) -> Result<f64> {
        if self.bins != o.bins || self.center != o.center || self.half_width != o.half_width {
            return Err(Error::Invalid("histograms have different geometry".into()));
        }
        Ok(self.density.iter().zip(&o.density).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.cell_area())
    }
}

/// Renormalized samples p = ηw.
pub fn rescaled_samples(ens: &ParticleEnsemble, frame: &RescaledFrame) -> Vec<Vec2> {
    ens.velocities.iter().map(|w| frame.rescale(*w)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyProduction {
    /// Quartic collision term, ≤ 0.
    pub quartic: McEstimate,
    /// Pairs whose own histogram density vanished (outside ±5 std) and were dropped.
    pub dropped: u64,
}

/// Interpolation points for the min over s ∈ [0, 1].
pub const ENTROPY_S_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// −¼ ∫∫∫ min_s (GG' − G*G*')² / (sGG' + (1−s)G*G*') [ν·η⁻¹q]₊, with G a
/// histogram density of the rescaled samples and the p, p' integrals sampled
/// from the ensemble itself (importance weight 1/(GG')).
pub fn entropy_production_estimate(
    ens: &ParticleEnsemble,
    eta: &SymTensor2,
    bins: usize,
    pairs: u64,
    seed: u64,
) -> Result<EntropyProduction> {
    ens.require_stats()?;
    if bins < 32 {
        return Err(Error::Invalid(format!("entropy histogram needs at least 32 bins per axis, got {bins}")));
    }
    let ps: Vec<Vec2> = ens.velocities.iter().map(|w| eta.apply(*w)).collect();
    let hist = Histogram2::from_samples(&ps, ens.weight, bins)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Moments::default();
    let mut dropped = 0;
    for _ in 0..pairs {
        let (i, j) = random_pair(&mut rng, ens.len());
        let nu = unit(rng.gen::<f64>() * 2.0 * PI);
        let (w, wp) = (ens.velocities[i], ens.velocities[j]);
        let (g, gp) = (hist.eval_linear(ps[i]), hist.eval_linear(ps[j]));
        if g == 0.0 || gp == 0.0 {
            dropped += 1;
            acc.push(0.0);
            continue;
        }
        let k = dot(nu, [w[0] - wp[0], w[1] - wp[1]]).max(0.0);
        if k == 0.0 {
            acc.push(0.0);
            continue;
        }
        // p_* = η w_* exactly maps the rescaled collision back to physical space.
        let (a, b) = collide_pair(w, wp, nu);
        let (x, y) = (g * gp, hist.eval_linear(eta.apply(a)) * hist.eval_linear(eta.apply(b)));
        let num = (x - y) * (x - y);
        let best = ENTROPY_S_GRID.iter().map(|s| num / (s * x + (1.0 - s) * y)).fold(f64::INFINITY, f64::min);
        acc.push(best * k / x);
    }
    let m = ens.mass();
    Ok(EntropyProduction { quartic: acc.finish(-0.25 * 2.0 * PI * m * m), dropped })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DsmcConfig {
    pub collision: CollisionConfig,
    pub t_end: f64,
    /// Steps between records.
    pub record_every: usize,
    /// Bins per axis for renormalized histograms.
    pub bins: usize,
    /// Monte Carlo pairs per record for the stress-rate tensor (0 skips it).
    pub stress_pairs: u64,
    /// Monte Carlo pairs per record for the entropy production (0 skips it).
    pub entropy_pairs: u64,
    pub seed: u64,
}

impl DsmcConfig {
    pub fn new(dt: f64, t_end: f64, seed: u64) -> Self {
        DsmcConfig {
            collision: CollisionConfig::new(dt),
            t_end,
            record_every: 10,
            bins: 32,
            stress_pairs: 0,
            entropy_pairs: 0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsmcRecord {
    pub t: f64,
    pub theta: f64,
    pub stress: SymTensor2,
    pub eta: SymTensor2,
    pub accepted: u64,
    /// L1 distance of the renormalized histogram to the previous record.
    pub hist_l1_prev: Option<f64>,
    pub stress_rate: Option<(SymTensor2, f64)>,
    pub entropy: Option<EntropyProduction>,
    /// tr F from finite differences of η against the previous record.
    pub tr_f: Option<f64>,
    /// ‖P̂ + F̂ + F̂ᵀ‖ (the η equation in the T_η = Id normalization).
    pub eta_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsmcRun {
    pub records: Vec<DsmcRecord>,
    pub steps: usize,
    pub mass_initial: f64,
    pub mass_final: f64,
    pub collisions: CollisionStats,
    pub majorant_refreshes: u64,
    /// Standard error of θ(0) as a sample mean of |w|²/2.
    pub theta0_stderr: f64,
}

impl DsmcRun {
    pub fn theta_series(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, r.theta)).collect()
    }

    /// max over records of θ(t) / (e^{|μ|t} θ(0)).
    pub fn energy_growth_ratio(&self, mu: f64) -> f64 {
        let th0 = self.records[0].theta;
        self.records.iter().map(|r| r.theta / ((mu.abs() * r.t).exp() * th0)).fold(0.0, f64::max)
    }
}

fn theta_stderr(ens: &ParticleEnsemble) -> f64 {
    let mut m = Moments::default();
    for w in &ens.velocities {
        m.push(0.5 * dot(*w, *w));
    }
    m.finish(ens.mass()).stderr
}

/// Alternates drift and collision steps, recording diagnostics every
/// `record_every` steps and at the end.
pub fn run(ens: &mut ParticleEnsemble, shear: &ShearFrame, cfg: &DsmcConfig) -> Result<DsmcRun> {
    let dt = cfg.collision.dt;
    if !(dt > 0.0) || !(cfg.t_end >= 0.0) || cfg.record_every == 0 {
        return Err(Error::Invalid("dsmc needs dt > 0, t_end ≥ 0 and record_every ≥ 1".into()));
    }
    let steps = (cfg.t_end / dt).round() as usize;
    let half = 5.0 * 2f64.sqrt();
    let mut col = cfg.collision;
    let mut out = DsmcRun {
        records: Vec::new(),
        steps,
        mass_initial: ens.mass(),
        mass_final: 0.0,
        collisions: CollisionStats::default(),
        majorant_refreshes: 0,
        theta0_stderr: theta_stderr(ens),
    };
    let mut prev_hist: Option<Histogram2> = None;
    let mut record = |ens: &ParticleEnsemble, t: f64, accepted: u64, k: u64| -> Result<DsmcRecord> {
        let frame = update_frame(ens)?;
        let hist = Histogram2::new(&rescaled_samples(ens, &frame), ens.weight, cfg.bins, [0.0, 0.0], [half, half])?;
        let hist_l1_prev = match &prev_hist {
            Some(h) => Some(hist.l1_distance(h)?),
            None => None,
        };
        prev_hist = Some(hist);
        let seed = cfg.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k + 1));
        let stress_rate = match cfg.stress_pairs {
            0 => None,
            m => Some(stress_rate_tensor(ens, &frame.eta, m, seed)?),
        };
        let entropy = match cfg.entropy_pairs {
            0 => None,
            m => Some(entropy_production_estimate(ens, &frame.eta, cfg.bins, m, seed.rotate_left(17))?),
        };
        Ok(DsmcRecord {
            t,
            theta: ens.theta(),
            stress: frame.stress,
            eta: frame.eta,
            accepted,
            hist_l1_prev,
            stress_rate,
            entropy,
            tr_f: None,
            eta_residual: None,
        })
    };
    out.records.push(record(ens, 0.0, 0, 0)?);
    for step in 1..=steps {
        drift_step(ens, shear, dt);
        col.refresh(ens);
        out.majorant_refreshes += 1;
        let st = loop {
            match collide_step(ens, &col) {
                Ok(st) => break st,
                Err(Error::MajorantExceeded { speed, .. }) => {
                    col.majorant = speed * 1.01;
                    out.majorant_refreshes += 1;
                }
                Err(e) => return Err(e),
            }
        };
        out.collisions.merge(&st);
        if step % cfg.record_every == 0 || step == steps {
            let k = out.records.len() as u64;
            out.records.push(record(ens, step as f64 * dt, out.collisions.accepted, k)?);
        }
    }
    // F = (η̇ − μ η α⊗β) η⁻¹ at the later record of each pair.
    let n_mat = shear.shear_matrix();
    for k in 1..out.records.len() {
        let (a, b) = (&out.records[k - 1], &out.records[k]);
        let eta_dot = b.eta.sub(&a.eta).scale(1.0 / (b.t - a.t));
        let f = eta_dot
            .to_mat()
            .sub(&b.eta.to_mat().mul(&n_mat).scale(shear.mu))
            .mul(&b.eta.inverse()?.to_mat());
        let res = b.stress_rate.map(|(p, _)| p.to_mat().add(&f).add(&f.transpose()).norm());
        let r = &mut out.records[k];
        r.tr_f = Some(f.trace());
        r.eta_residual = res;
    }
    out.mass_final = ens.mass();
    Ok(out)
}

/// Stationarity check of the rescaled Maxwellian G^M = (4π)⁻¹e^{−|p|²/4} with
/// η = Id, where F = −μα⊗β.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxwellianResidual {
    /// max |Q_Id[G^M]| over the evaluation points.
    pub collision_part: f64,
    /// max difference of the loss-term quadrature between n and n/2.
    pub quadrature_error: f64,
    /// max |∇·(G^M F p)| over the evaluation points.
    pub drift_part: f64,
    /// Evaluation points with the drift field −∇·(G^M F p).
    pub drift_field: Vec<(Vec2, f64)>,
    pub stationary: bool,
}

impl MaxwellianResidual {
    /// drift part / quadrature error.
    pub fn margin(&self) -> f64 {
        self.drift_part / self.quadrature_error
    }
}

fn maxwellian(p: Vec2) -> f64 {
    (-0.25 * dot(p, p)).exp() / (4.0 * PI)
}

/// Gain and loss quadratures of Q_Id[G^M](p) on an n² midpoint grid over
/// [−l, l]² and 2n directions.
fn collision_quadrature(p: Vec2, n: usize, l: f64) -> (f64, f64) {
    let h = 2.0 * l / n as f64;
    let m = 2 * n;
    let nus: Vec<Vec2> = (0..m).map(|k| unit((k as f64 + 0.5) * 2.0 * PI / m as f64)).collect();
    let dw = h * h * 2.0 * PI / m as f64;
    let g = maxwellian(p);
    let (mut gain, mut loss) = (0.0, 0.0);
    for iy in 0..n {
        for ix in 0..n {
            let pp = [-l + (ix as f64 + 0.5) * h, -l + (iy as f64 + 0.5) * h];
            let gp = maxwellian(pp);
            for nu in &nus {
                let k = dot(*nu, [p[0] - pp[0], p[1] - pp[1]]);
                if k <= 0.0 {
                    continue;
                }
                let (a, b) = collide_pair(p, pp, *nu);
                gain += maxwellian(a) * maxwellian(b) * k;
                loss += g * gp * k;
            }
        }
    }
    (gain * dw, loss * dw)
}

/// Evaluates the collision operator and the drift term of the rescaled
/// equation at the Maxwellian on a 9×9 set of points in [−4, 4]².
pub fn maxwellian_residual_check(shear: &ShearFrame, n: usize) -> Result<MaxwellianResidual> {
    if n < 8 || n % 2 != 0 {
        return Err(Error::Invalid(format!("quadrature resolution {n} must be even and ≥ 8")));
    }
    use rayon::prelude::*;
    let l = 10.0;
    let pts: Vec<Vec2> = (0..81).map(|k| [-4.0 + (k % 9) as f64, -4.0 + (k / 9) as f64]).collect();
    let f = shear.shear_matrix().scale(-shear.mu);
    let rows: Vec<(f64, f64, f64)> = pts
        .par_iter()
        .map(|p| {
            let (gain, loss) = collision_quadrature(*p, n, l);
            let (_, coarse) = collision_quadrature(*p, n / 2, l);
            // ∇·(G^M F p) = (tr F − ½ p·Fp) G^M.
            let drift = -(f.trace() - 0.5 * dot(*p, f.apply(*p))) * maxwellian(*p);
            (gain - loss, (loss - coarse).abs(), drift)
        })
        .collect();
    let collision_part = rows.iter().map(|r| r.0.abs()).fold(0.0, f64::max);
    let quadrature_error = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let drift_part = rows.iter().map(|r| r.2.abs()).fold(0.0, f64::max);
    Ok(MaxwellianResidual {
        collision_part,
        quadrature_error,
        drift_part,
        drift_field: pts.iter().zip(&rows).map(|(p, r)| (*p, r.2)).collect(),
        stationary: drift_part <= quadrature_error && collision_part <= quadrature_error,
    })
}

/// Flat ensemble snapshot: N as u64, t as f64, then N velocity pairs, all
/// little-endian.
pub fn write_ensemble(w: &mut impl Write, ens: &ParticleEnsemble, t: f64) -> Result<()> {
    w.write_all(&(ens.len() as u64).to_le_bytes())?;
    w.write_all(&t.to_le_bytes())?;
    for v in &ens.velocities {
        w.write_all(&v[0].to_le_bytes())?;
        w.write_all(&v[1].to_le_bytes())?;
    }
    Ok(())
}

/// Reads a snapshot back as a unit-mass ensemble seeded with `seed`.
pub fn read_ensemble(r: &mut impl Read, seed: u64) -> Result<(ParticleEnsemble, f64)> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let n = u64::from_le_bytes(b) as usize;
    r.read_exact(&mut b)?;
    let t = f64::from_le_bytes(b);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        let mut xy = [0.0; 2];
        for c in &mut xy {
            r.read_exact(&mut b).map_err(|e| Error::Io(format!("truncated ensemble: {e}")))?;
            *c = f64::from_le_bytes(b);
        }
        v.push(xy);
    }
    Ok((ParticleEnsemble::from_velocities(v, seed)?, t))
}
