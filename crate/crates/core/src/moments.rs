//! Second-moment (stress) dynamics, coefficient frames of the shape equation
//! and the linear systems for higher moments relative to the Maxwellian.

use crate::error::{Error, Result};
use crate::ode::{self, Node, OdeOptions};
use crate::tensor::{dot, sym_inv_sqrt, sym_sqrt, sym_sqrt_derivative, Mat2, ShearFrame, SymTensor2};
use serde::Serialize;
use std::fmt::Write as _;

/// dT/dt = Id − μ(α⊗β T + T β⊗α) − 2T/tr T.
pub fn stress_rhs(t: &SymTensor2, frame: &ShearFrame) -> Result<SymTensor2> {
    let tr = t.trace();
    if !(tr > 0.0) {
        return Err(Error::DegenerateStress(format!("tr T = {tr:e}")));
    }
    let n = frame.shear_matrix();
    let nt = n.mul(&t.to_mat());
    // N T + T Nᵀ is twice the symmetric part of N T
    let shear = nt.sym().scale(2.0 * frame.mu);
    Ok(SymTensor2::IDENTITY.sub(&shear).sub(&t.scale(2.0 / tr)))
}

/// Linear part of the (a, b, c) system.
pub fn matrix_m(mu: f64) -> [[f64; 3]; 3] {
    [[-3.0, -2.0 * mu, 0.0], [0.0, -2.0, -mu], [0.0, 0.0, -1.0]]
}

/// Long-time limit of the rescaled moments (a, b, c).
pub fn abc_limit(mu: f64) -> [f64; 3] {
    [mu * mu / 3.0, -mu / 2.0, 1.0]
}

/// Rescaled moments a = α·Tα/t³, b = α·Tβ/t², c = β·Tβ/t at log-time s = ln t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescaledAbc {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub s: f64,
}

impl RescaledAbc {
    pub fn from_stress(t_stress: &SymTensor2, t: f64, frame: &ShearFrame) -> Self {
        let (al, be) = (frame.alpha, frame.beta);
        RescaledAbc {
            a: t_stress.quad(al) / t.powi(3),
            b: dot(al, t_stress.apply(be)) / (t * t),
            c: t_stress.quad(be) / t,
            s: t.ln(),
        }
    }

    pub fn to_stress(&self, frame: &ShearFrame) -> SymTensor2 {
        let t = self.s.exp();
        let (al, be) = (frame.alpha, frame.beta);
        SymTensor2::sym_outer(al, al)
            .scale(t.powi(3) * self.a)
            .add(&SymTensor2::sym_outer(al, be).scale(2.0 * t * t * self.b))
            .add(&SymTensor2::sym_outer(be, be).scale(t * self.c))
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

/// d/ds (a, b, c) = M(a, b, c) + (e^{−2s}, 0, 1) − 2(a, b, c)/(e^{2s}a + c).
pub fn abc_rhs(mu: f64, s: f64, y: &[f64]) -> Result<Vec<f64>> {
    let den = (2.0 * s).exp() * y[0] + y[2];
    if !(den > 0.0) {
        return Err(Error::DegenerateStress(format!("rescaled trace {den:e}")));
    }
    let m = matrix_m(mu);
    let g = 2.0 / den;
    Ok(vec![
        m[0][0] * y[0] + m[0][1] * y[1] + (-2.0 * s).exp() - g * y[0],
        m[1][1] * y[1] + m[1][2] * y[2] - g * y[1],
        m[2][2] * y[2] + 1.0 - g * y[2],
    ])
}

/// Time at which long integrations switch to log-time (a, b, c) coordinates.
const SWITCH_TIME: f64 = 1.0;

/// Solution of the stress ODE, stored as accepted integrator nodes with
/// derivatives so it can be evaluated anywhere by cubic Hermite interpolation.
/// Nodes up to the switch time are (t; T), later ones (s; a, b, c).
#[derive(Debug, Clone)]
pub struct StressTrajectory {
    pub frame: ShearFrame,
    pub tol: f64,
    early: Vec<Node>,
    late: Vec<Node>,
}

fn t_to_vec(t: &SymTensor2) -> Vec<f64> {
    vec![t.xx, t.xy, t.yy]
}

fn vec_to_t(v: &[f64]) -> SymTensor2 {
    SymTensor2::new(v[0], v[1], v[2])
}

/// Integrates the stress ODE from T(0) = `t0` to `t_end` with local relative
/// tolerance `tol`. For μ ≠ 0 and t_end > 1 the tail is integrated in
/// log-time on the rescaled moments, which converge to a fixed point.
pub fn integrate_stress(t0: &SymTensor2, frame: &ShearFrame, t_end: f64, tol: f64) -> Result<StressTrajectory> {
    t0.check_pd()?;
    if !(t_end > 0.0) {
        return Err(Error::Invalid(format!("t_end must be positive, got {t_end}")));
    }
    let fr = *frame;
    let opts = OdeOptions::new(tol);
    let pd = |y: &[f64]| vec_to_t(y).is_pd();
    let split = fr.mu != 0.0 && t_end > SWITCH_TIME;
    let t_mid = if split { SWITCH_TIME } else { t_end };
    let early = ode::integrate(
        |_, y| stress_rhs(&vec_to_t(y), &fr).map(|d| t_to_vec(&d)),
        0.0,
        &t_to_vec(t0),
        t_mid,
        &opts,
        pd,
    )?;
    let late = if split {
        let t1 = vec_to_t(&early.last().unwrap().y);
        let abc = RescaledAbc::from_stress(&t1, SWITCH_TIME, &fr);
        let mu = fr.mu;
        let o = OdeOptions { h0: 1e-2, ..opts };
        ode::integrate(
            |s, y| abc_rhs(mu, s, y),
            abc.s,
            &abc.as_array(),
            t_end.ln(),
            &o,
            |y| y[0] > 0.0 && y[2] > 0.0 && y[0] * y[2] - y[1] * y[1] > 0.0,
        )?
    } else {
        Vec::new()
    };
    Ok(StressTrajectory { frame: fr, tol, early, late })
}

impl StressTrajectory {
    pub fn t_start(&self) -> f64 {
        self.early[0].t
    }

    pub fn t_end(&self) -> f64 {
        match self.late.last() {
            Some(n) => n.t.exp(),
            None => self.early.last().unwrap().t,
        }
    }

    /// Times of all accepted integrator steps.
    pub fn times(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.early.iter().map(|n| n.t).collect();
        v.extend(self.late.iter().skip(1).map(|n| n.t.exp()));
        v
    }

    pub fn node_count(&self) -> usize {
        self.early.len() + self.late.len().saturating_sub(1)
    }

    fn check_range(&self, t: f64) -> Result<()> {
        let (t0, t1) = (self.t_start(), self.t_end());
        let slack = 1e-12 * t1.abs().max(1.0);
        if t < t0 - slack || t > t1 + slack || t.is_nan() {
            return Err(Error::OutOfRange { t, t0, t1 });
        }
        Ok(())
    }

    pub fn stress_at(&self, t: f64) -> Result<SymTensor2> {
        self.check_range(t)?;
        let mut out = [0.0; 3];
        if self.late.is_empty() || t <= SWITCH_TIME {
            ode::hermite(&self.early, t.min(self.early.last().unwrap().t), &mut out);
            Ok(vec_to_t(&out))
        } else {
            let s = t.ln().min(self.late.last().unwrap().t);
            ode::hermite(&self.late, s, &mut out);
            Ok(RescaledAbc { a: out[0], b: out[1], c: out[2], s }.to_stress(&self.frame))
        }
    }

    pub fn abc_at(&self, t: f64) -> Result<RescaledAbc> {
        if !(t > 0.0) {
            return Err(Error::Invalid("rescaled moments need t > 0".into()));
        }
        self.check_range(t)?;
        if !self.late.is_empty() && t > SWITCH_TIME {
            let mut out = [0.0; 3];
            let s = t.ln().min(self.late.last().unwrap().t);
            ode::hermite(&self.late, s, &mut out);
            return Ok(RescaledAbc { a: out[0], b: out[1], c: out[2], s });
        }
        Ok(RescaledAbc::from_stress(&self.stress_at(t)?, t, &self.frame))
    }

    /// CSV with one row per `times` entry.
    pub fn to_csv(&self, times: &[f64]) -> Result<String> {
        let mut s = String::from("t,T_xx,T_xy,T_yy,a,b,c,theta,eta_xx,eta_xy,eta_yy,F_11,F_12,F_21,F_22\n");
        for &t in times {
            let fr = coefficient_frame(self, t)?;
            let (a, b, c) = if t > 0.0 {
                let r = self.abc_at(t)?;
                (r.a, r.b, r.c)
            } else {
                (f64::NAN, f64::NAN, f64::NAN)
            };
            let f = fr.f.0;
            writeln!(
                s,
                "{t:.12e},{:.12e},{:.12e},{:.12e},{a:.12e},{b:.12e},{c:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                fr.stress.xx, fr.stress.xy, fr.stress.yy, fr.theta, fr.eta.xx, fr.eta.xy, fr.eta.yy, f[0][0], f[0][1], f[1][0], f[1][1]
            )
            .unwrap();
        }
        Ok(s)
    }
}

/// Coefficients of the shape equation at one instant.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoefficientFrame {
    pub t: f64,
    pub eta: SymTensor2,
    pub eta_dot: SymTensor2,
    pub f: Mat2,
    pub theta: f64,
    pub stress: SymTensor2,
}

impl CoefficientFrame {
    /// Frame built from a stress tensor, with η̇ driven by the stress ODE.
    pub fn from_stress(t: f64, stress: &SymTensor2, shear: &ShearFrame) -> Result<Self> {
        let d_stress = stress_rhs(stress, shear)?;
        let eta = sym_inv_sqrt(stress).map_err(|e| Error::DegenerateStress(e.to_string()))?;
        let eta_dot = sym_sqrt_derivative(stress, &d_stress)?;
        let eta_inv = sym_sqrt(stress)?.to_mat();
        let drift = eta.to_mat().mul(&shear.shear_matrix()).scale(shear.mu);
        let f = eta_dot.to_mat().sub(&drift).mul(&eta_inv);
        Ok(CoefficientFrame { t, eta, eta_dot, f, theta: stress.trace(), stress: *stress })
    }

    /// Equilibrium frame of the unsheared flow: η = Id, F = 0, θ = 2.
    pub fn ornstein_uhlenbeck() -> Self {
        CoefficientFrame {
            t: 0.0,
            eta: SymTensor2::IDENTITY,
            eta_dot: SymTensor2::ZERO,
            f: Mat2::ZERO,
            theta: 2.0,
            stress: SymTensor2::IDENTITY,
        }
    }

    /// η².
    pub fn diffusion(&self) -> SymTensor2 {
        let e = self.eta.to_mat();
        e.mul(&e).sym()
    }

    /// θ⁻¹ Id − F.
    pub fn drift(&self) -> Mat2 {
        Mat2::IDENTITY.scale(1.0 / self.theta).sub(&self.f)
    }

    /// ‖F + Fᵀ + η² − 2θ⁻¹ Id‖ (Frobenius).
    pub fn resmeq2_residual(&self) -> f64 {
        let r = self.f.add(&self.f.transpose()).add(&self.diffusion().to_mat()).sub(&Mat2::IDENTITY.scale(2.0 / self.theta));
        r.norm()
    }
}

pub fn coefficient_frame(traj: &StressTrajectory, t: f64) -> Result<CoefficientFrame> {
    let stress = traj.stress_at(t)?;
    CoefficientFrame::from_stress(t, &stress, &traj.frame)
}

/// Limit of the time-rescaled fourth-order moment operator, rows and columns
/// ordered (4,0), (3,1), (2,2), (1,3), (0,4).
pub fn matrix_n4() -> [[f64; 5]; 5] {
    let r3 = 3f64.sqrt();
    [
        [0.0, 2.0 * r3, 0.0, 0.0, 0.0],
        [-r3 / 2.0, -2.0, 1.5 * r3, 0.0, 0.0],
        [0.0, -r3, -4.0, r3, 0.0],
        [0.0, 0.0, -1.5 * r3, -6.0, r3 / 2.0],
        [0.0, 0.0, 0.0, -2.0 * r3, -8.0],
    ]
}

/// Coefficient of h_kl in the limiting equation for h_ij (log-time, standard
/// shear frame), in the sign convention of [`matrix_n4`]. For k + l = i + j − 2
/// the entry is the coupling to the lower order through the diffusion in the
/// β direction, whose rescaled limit is 4 β⊗β.
pub fn general_n_entry(i: usize, j: usize, k: usize, l: usize) -> Result<f64> {
    let (n, m) = (i + j, k + l);
    if !(n == 4 || n == 6) || !(m == n || m + 2 == n) {
        return Err(Error::IndexError { i, j, k, l });
    }
    let h = 3f64.sqrt() / 2.0;
    let (i_, j_) = (i as f64, j as f64);
    Ok(if m + 2 == n {
        if m <= 2 {
            0.0
        } else if k == i && l + 2 == j {
            4.0 * j_ * (j_ - 1.0)
        } else {
            0.0
        }
    } else if (k, l) == (i, j) {
        -2.0 * j_
    } else if k == i + 1 && l + 1 == j {
        -h * j_
    } else if k + 1 == i && l == j + 1 {
        h * i_
    } else {
        0.0
    })
}

/// Moments h_ij = ∫(G − G^M) p₁^i p₂^j of one total order, stored by j.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentVector {
    pub order: usize,
    pub h: Vec<f64>,
}

impl MomentVector {
    pub fn zeros(order: usize) -> Self {
        MomentVector { order, h: vec![0.0; order + 1] }
    }

    pub fn new(order: usize, h: Vec<f64>) -> Result<Self> {
        if h.len() != order + 1 || order < 3 {
            return Err(Error::Invalid(format!("order {order} needs {} entries (order ≥ 3)", order + 1)));
        }
        Ok(MomentVector { order, h })
    }

    /// h_{order−j, j}.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(i + j, self.order);
        self.h[j]
    }

    pub fn norm(&self) -> f64 {
        self.h.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Right-hand side of the exact moment equations of the shape equation:
/// dh_ij/dt = −[(i+j)/θ − iF₁₁ − jF₂₂] h_ij + iF₁₂ h_{i−1,j+1} + jF₂₁ h_{i+1,j−1}
///            + i(i−1)D₁₁ h_{i−2,j} + 2ij D₁₂ h_{i−1,j−1} + j(j−1)D₂₂ h_{i,j−2},
/// with D = η². Components are taken in the α, β basis. `blocks` lists the
/// orders present in `h`, concatenated; missing lower orders count as zero.
pub fn moment_rhs(frame: &CoefficientFrame, shear: &ShearFrame, blocks: &[usize], h: &[f64], out: &mut [f64]) {
    let basis = Mat2([shear.alpha, shear.beta]);
    let f = basis.mul(&frame.f).mul(&basis.transpose()).0;
    let d = frame.diffusion().congruence(&basis);
    let inv_theta = 1.0 / frame.theta;
    let mut offset = 0;
    let mut offsets = Vec::with_capacity(blocks.len());
    for &n in blocks {
        offsets.push(offset);
        offset += n + 1;
    }
    let find = |order: usize| blocks.iter().position(|&b| b == order).map(|p| offsets[p]);
    for (bi, &n) in blocks.iter().enumerate() {
        let base = offsets[bi];
        let lower = if n >= 2 { find(n - 2) } else { None };
        for j in 0..=n {
            let i = n - j;
            let (fi, fj) = (i as f64, j as f64);
            let mut r = -((n as f64) * inv_theta - fi * f[0][0] - fj * f[1][1]) * h[base + j];
            if i >= 1 {
                r += fi * f[0][1] * h[base + j + 1];
            }
            if j >= 1 {
                r += fj * f[1][0] * h[base + j - 1];
            }
            if let Some(lb) = lower {
                // lower block stores h_{n−2−l, l} at index l
                if i >= 2 {
                    r += fi * (fi - 1.0) * d.xx * h[lb + j];
                }
                if i >= 1 && j >= 1 {
                    r += 2.0 * fi * fj * d.xy * h[lb + j - 1];
                }
                if j >= 2 {
                    r += fj * (fj - 1.0) * d.yy * h[lb + j - 2];
                }
            }
            out[base + j] = r;
        }
    }
}

/// Time series of co-integrated moment blocks.
#[derive(Debug, Clone)]
pub struct MomentSeries {
    pub orders: Vec<usize>,
    nodes: Vec<Node>,
}

impl MomentSeries {
    pub fn times(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.t.exp()).collect()
    }

    fn split(&self, y: &[f64]) -> Vec<MomentVector> {
        let mut off = 0;
        self.orders
            .iter()
            .map(|&n| {
                let v = MomentVector { order: n, h: y[off..off + n + 1].to_vec() };
                off += n + 1;
                v
            })
            .collect()
    }

    /// Moments at each accepted step, one vector per block.
    pub fn values(&self) -> Vec<(f64, Vec<MomentVector>)> {
        self.nodes.iter().map(|n| (n.t.exp(), self.split(&n.y))).collect()
    }

    pub fn at(&self, t: f64) -> Result<Vec<MomentVector>> {
        let (s0, s1) = (self.nodes[0].t, self.nodes.last().unwrap().t);
        let s = t.ln();
        if !(s >= s0 - 1e-12 && s <= s1 + 1e-12) {
            return Err(Error::OutOfRange { t, t0: s0.exp(), t1: s1.exp() });
        }
        let mut y = vec![0.0; self.nodes[0].y.len()];
        ode::hermite(&self.nodes, s.clamp(s0, s1), &mut y);
        Ok(self.split(&y))
    }

    /// (t, |h|) for block `order`.
    pub fn norm_series(&self, order: usize) -> Vec<(f64, f64)> {
        let p = self.orders.iter().position(|&o| o == order).expect("order not integrated");
        self.values().into_iter().map(|(t, v)| (t, v[p].norm())).collect()
    }
}

/// Integrates the linear moment system with coefficients taken from `traj`,
/// from t0 > 0 to t_end, in log-time. Every block of order n ≥ 5 needs the
/// block of order n − 2 alongside (the lower orders 1 and 2 vanish by
/// normalization).
pub fn integrate_moments(h0: &[MomentVector], traj: &StressTrajectory, t0: f64, t_end: f64, tol: f64) -> Result<MomentSeries> {
    let orders: Vec<usize> = h0.iter().map(|m| m.order).collect();
    for &n in &orders {
        if n < 3 {
            return Err(Error::Invalid(format!("moment order {n} is fixed by normalization")));
        }
        if n >= 5 && !orders.contains(&(n - 2)) {
            return Err(Error::Invalid(format!("order {n} needs order {} co-integrated", n - 2)));
        }
    }
    if !(t0 > 0.0) || t_end < t0 {
        return Err(Error::Invalid(format!("need 0 < t0 ≤ t_end, got {t0}, {t_end}")));
    }
    let y0: Vec<f64> = h0.iter().flat_map(|m| m.h.iter().copied()).collect();
    let shear = traj.frame;
    let ord = orders.clone();
    let rhs = |s: f64, y: &[f64]| -> Result<Vec<f64>> {
        let t = s.exp().clamp(traj.t_start(), traj.t_end());
        let fr = coefficient_frame(traj, t)?;
        let mut out = vec![0.0; y.len()];
        moment_rhs(&fr, &shear, &ord, y, &mut out);
        out.iter_mut().for_each(|v| *v *= t);
        Ok(out)
    };
    let mut opts = OdeOptions::new(tol);
    let scale = y0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    opts.atol = if scale > 0.0 { tol * 1e-6 * scale } else { 1e-300 };
    opts.h0 = 1e-3;
    let nodes = ode::integrate(rhs, t0.ln(), &y0, t_end.ln(), &opts, |_| true)?;
    Ok(MomentSeries { orders, nodes })
}

/// Algebraic lower-bound bookkeeping built from the fourth-moment decay.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateLowerBound {
    /// Decay exponent of |h4| ~ t^{−λ̄}.
    pub lambda_bar: f64,
    /// Growth exponent allowed for the sixth moments.
    pub lambda_prime: f64,
    /// 5λ̄ + 2λ'.
    pub composite: f64,
    pub r_squared: f64,
}

impl RateLowerBound {
    /// Radius schedule R(t) = t^{λ̄ + λ'/2}.
    pub fn radius(&self, t: f64) -> f64 {
        t.powf(self.lambda_bar + 0.5 * self.lambda_prime)
    }
}

/// Fits λ̄ on the last decade of the |h4| series and assembles the composite
/// exponent.
pub fn rate_lower_bound(h4_series: &[(f64, f64)], lambda_prime: f64) -> Result<RateLowerBound> {
    let fit = crate::fit::rate_fit(h4_series, 1.0)?;
    Ok(RateLowerBound {
        lambda_bar: -fit.exponent,
        lambda_prime,
        composite: -5.0 * fit.exponent + 2.0 * lambda_prime,
        r_squared: fit.r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stress_rhs_examples() {
        let f0 = ShearFrame::standard(0.0);
        for c in [0.1, 1.0, 10.0] {
            let r = stress_rhs(&SymTensor2::diag(c, c), &f0).unwrap();
            assert!(r.max_abs() < 1e-15);
        }
        let r = stress_rhs(&SymTensor2::diag(2.0, 1.0), &f0).unwrap();
        assert!(r.sub(&SymTensor2::diag(-1.0 / 3.0, 1.0 / 3.0)).max_abs() < 1e-15);
        let r = stress_rhs(&SymTensor2::IDENTITY, &ShearFrame::standard(1.0)).unwrap();
        assert_eq!((r.xx, r.xy, r.yy), (0.0, -1.0, 0.0));
        assert!(matches!(stress_rhs(&SymTensor2::diag(-1.0, 0.5), &f0), Err(Error::DegenerateStress(_))));
    }

    #[test]
    fn m_has_eigenvector_of_the_limit() {
        for mu in [0.0, 1.0, -2.5] {
            let m = matrix_m(mu);
            let v = [mu * mu, -mu, 1.0];
            for r in 0..3 {
                let mv: f64 = (0..3).map(|c| m[r][c] * v[c]).sum();
                assert_eq!(mv, -v[r]);
            }
        }
    }

    #[test]
    fn abc_round_trip() {
        let fr = ShearFrame::standard(1.3);
        let t = SymTensor2::new(40.0, -3.0, 2.5);
        let r = RescaledAbc::from_stress(&t, 3.0, &fr);
        assert!(r.to_stress(&fr).sub(&t).max_abs() < 1e-13);
    }

    #[test]
    fn isotropic_equilibrium_frame() {
        let fr = CoefficientFrame::from_stress(0.0, &SymTensor2::IDENTITY, &ShearFrame::standard(0.0)).unwrap();
        assert_eq!(fr.eta, SymTensor2::IDENTITY);
        assert_eq!(fr.eta_dot, SymTensor2::ZERO);
        assert_eq!(fr.f.max_abs(), 0.0);
        assert_eq!(fr.theta, 2.0);
        assert_eq!(fr.resmeq2_residual(), 0.0);
    }

    #[test]
    fn mu_zero_relaxes_to_isotropic_with_conserved_trace() {
        let tr = integrate_stress(&SymTensor2::diag(2.0, 1.0), &ShearFrame::standard(0.0), 40.0, 1e-10).unwrap();
        let iso = SymTensor2::diag(1.5, 1.5);
        let t = tr.stress_at(40.0).unwrap();
        assert!(t.sub(&iso).max_abs() < 1e-9);
        for &s in &tr.times() {
            assert!((tr.stress_at(s).unwrap().trace() - 3.0).abs() < 1e-12);
        }
        let mid = tr.stress_at(2.0).unwrap().sub(&iso).max_abs();
        let late = tr.stress_at(6.0).unwrap().sub(&iso).max_abs();
        assert!(late < mid * 0.1);
    }

    #[test]
    fn n_entries_match_display() {
        let n4 = matrix_n4();
        for r in 0..5 {
            for c in 0..5 {
                let v = general_n_entry(4 - r, r, 4 - c, c).unwrap();
                assert_eq!(v, n4[r][c], "entry ({r},{c})");
            }
        }
        assert_eq!(general_n_entry(4, 0, 4, 0).unwrap(), 0.0);
        assert_eq!(general_n_entry(3, 1, 4, 0).unwrap(), -(3f64.sqrt()) / 2.0);
        assert!(matches!(general_n_entry(3, 1, 2, 1), Err(Error::IndexError { .. })));
    }

    #[test]
    fn zero_moments_stay_zero() {
        let tr = integrate_stress(&SymTensor2::IDENTITY, &ShearFrame::standard(1.0), 100.0, 1e-9).unwrap();
        let s = integrate_moments(&[MomentVector::zeros(3), MomentVector::zeros(4)], &tr, 1.0, 100.0, 1e-8).unwrap();
        for (_, v) in s.values() {
            assert!(v.iter().all(|m| m.norm() == 0.0));
        }
    }

    #[test]
    fn sixth_order_needs_fourth() {
        let tr = integrate_stress(&SymTensor2::IDENTITY, &ShearFrame::standard(1.0), 10.0, 1e-9).unwrap();
        assert!(integrate_moments(&[MomentVector::zeros(6)], &tr, 1.0, 10.0, 1e-8).is_err());
    }

    #[test]
    fn lower_bound_of_exact_power_law() {
        let s: Vec<(f64, f64)> = (0..=40).map(|k| 10f64.powf(2.0 + k as f64 / 20.0)).map(|t| (t, 1.0 / t)).collect();
        let r = rate_lower_bound(&s, 0.0).unwrap();
        assert!((r.lambda_bar - 1.0).abs() < 1e-10);
        assert!((r.composite - 5.0).abs() < 1e-9);
        assert!((r.radius(100.0) - 100.0).abs() < 1e-8);
        let z: Vec<(f64, f64)> = s.iter().map(|&(t, _)| (t, 0.0)).collect();
        assert!(matches!(rate_lower_bound(&z, 0.0), Err(Error::InsufficientData(_))));
    }
}
