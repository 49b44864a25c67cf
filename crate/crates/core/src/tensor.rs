//! 2×2 tensor algebra, shear geometry and objectivity checks.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Vec2 = [f64; 2];

/// Smaller/larger eigenvalue ratio below which a tensor is treated as singular.
pub const PD_RATIO: f64 = 1e-13;

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

/// General 2×2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0, 0.0], [0.0, 0.0]]);
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn outer(a: Vec2, b: Vec2) -> Mat2 {
        Mat2([[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.0[r][c]
    }

    pub fn transpose(&self) -> Mat2 {
        let m = self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        let mut r = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(r)
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        let m = self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        let a = self.0;
        Mat2([[s * a[0][0], s * a[0][1]], [s * a[1][0], s * a[1][1]]])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    /// Symmetric part (M + Mᵀ)/2.
    pub fn sym(&self) -> SymTensor2 {
        let m = self.0;
        SymTensor2::new(m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1])
    }

    /// Off-diagonal entry (0,1) of the antisymmetric part (M − Mᵀ)/2.
    pub fn skew(&self) -> f64 {
        0.5 * (self.0[0][1] - self.0[1][0])
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Symmetric 2×2 tensor stored by its three independent entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymTensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

/// Orthonormal eigendecomposition: `values[0] ≥ values[1]`, `v` is the unit
/// eigenvector of `values[0]`; the second one is its rotation by +90°.
#[derive(Debug, Clone, Copy)]
pub struct Eigen2 {
    pub values: [f64; 2],
    pub v: Vec2,
}

impl Eigen2 {
    pub fn vectors(&self) -> [Vec2; 2] {
        [self.v, [-self.v[1], self.v[0]]]
    }

    /// Σ f(λ_k) v_k ⊗ v_k.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymTensor2 {
        let [v1, v2] = self.vectors();
        let (f1, f2) = (f(self.values[0]), f(self.values[1]));
        SymTensor2::new(
            f1 * v1[0] * v1[0] + f2 * v2[0] * v2[0],
            f1 * v1[0] * v1[1] + f2 * v2[0] * v2[1],
            f1 * v1[1] * v1[1] + f2 * v2[1] * v2[1],
        )
    }

    /// Components of a symmetric tensor in this eigenbasis.
    pub fn to_basis(&self, s: &SymTensor2) -> [[f64; 2]; 2] {
        let vs = self.vectors();
        let mut r = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] = dot(vs[i], s.apply(vs[j]));
            }
        }
        r
    }

    pub fn from_basis(&self, c: [[f64; 2]; 2]) -> SymTensor2 {
        let [v1, v2] = self.vectors();
        let off = 0.5 * (c[0][1] + c[1][0]);
        let e = |a: usize, b: usize| {
            c[0][0] * v1[a] * v1[b] + off * (v1[a] * v2[b] + v2[a] * v1[b]) + c[1][1] * v2[a] * v2[b]
        };
        SymTensor2::new(e(0, 0), e(0, 1), e(1, 1))
    }
}

impl SymTensor2 {
    pub const ZERO: SymTensor2 = SymTensor2 { xx: 0.0, xy: 0.0, yy: 0.0 };
    pub const IDENTITY: SymTensor2 = SymTensor2 { xx: 1.0, xy: 0.0, yy: 1.0 };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        SymTensor2 { xx, xy, yy }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self::new(a, 0.0, b)
    }

    /// (a⊗b + b⊗a)/2.
    pub fn sym_outer(a: Vec2, b: Vec2) -> Self {
        Self::new(a[0] * b[0], 0.5 * (a[0] * b[1] + a[1] * b[0]), a[1] * b[1])
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(s * self.xx, s * self.xy, s * self.yy)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
    }

    pub fn quad(&self, v: Vec2) -> f64 {
        dot(v, self.apply(v))
    }

    pub fn to_mat(&self) -> Mat2 {
        Mat2([[self.xx, self.xy], [self.xy, self.yy]])
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.abs().max(self.xy.abs()).max(self.yy.abs())
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy).sqrt()
    }

    /// Closed-form eigendecomposition. The smaller eigenvalue is recovered as
    /// det/λ_max to avoid cancellation for ill-conditioned tensors.
    pub fn eigen(&self) -> Eigen2 {
        let m = 0.5 * (self.xx + self.yy);
        let d = 0.5 * (self.xx - self.yy);
        let r = d.hypot(self.xy);
        let hi = m + r;
        let lo = if hi != 0.0 && m > 0.0 { self.det() / hi } else { m - r };
        // keep diagonal inputs exact
        let v = if self.xy == 0.0 {
            if d >= 0.0 { [1.0, 0.0] } else { [0.0, 1.0] }
        } else {
            let (s, c) = (0.5 * self.xy.atan2(d)).sin_cos();
            [c, s]
        };
        Eigen2 { values: [hi, lo], v }
    }

    pub fn check_pd(&self) -> Result<Eigen2> {
        let e = self.eigen();
        let [hi, lo] = e.values;
        if !(hi > 0.0) || !(lo > PD_RATIO * hi) || !lo.is_finite() {
            return Err(Error::NotPositiveDefinite(hi, lo));
        }
        Ok(e)
    }

    pub fn is_pd(&self) -> bool {
        self.check_pd().is_ok()
    }

    pub fn inverse(&self) -> Result<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite(d, 0.0));
        }
        Ok(Self::new(self.yy / d, -self.xy / d, self.xx / d))
    }

    pub fn congruence(&self, a: &Mat2) -> Self {
        // a · self · aᵀ
        a.mul(&self.to_mat()).mul(&a.transpose()).sym()
    }
}

/// η = T^{−1/2}.
pub fn sym_inv_sqrt(t: &SymTensor2) -> Result<SymTensor2> {
    let e = t.check_pd()?;
    Ok(e.map(|l| 1.0 / l.sqrt()))
}

/// T^{1/2}.
pub fn sym_sqrt(t: &SymTensor2) -> Result<SymTensor2> {
    let e = t.check_pd()?;
    Ok(e.map(f64::sqrt))
}

/// Time derivative of η = T^{−1/2} given dT/dt, from η̇η + ηη̇ = −T⁻¹ Ṫ T⁻¹.
/// Solved in the eigenbasis of T, where the Lyapunov equation is diagonal.
pub fn sym_sqrt_derivative(t: &SymTensor2, dt: &SymTensor2) -> Result<SymTensor2> {
    let e = t.check_pd()?;
    let l = e.values;
    let s = e.to_basis(dt);
    let inv_sqrt = [1.0 / l[0].sqrt(), 1.0 / l[1].sqrt()];
    let mut x = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            x[i][j] = -s[i][j] / (l[i] * l[j] * (inv_sqrt[i] + inv_sqrt[j]));
        }
    }
    Ok(e.from_basis(x))
}

/// Simple shear geometry: shear strength `mu`, orthonormal pair `alpha`, `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShearFrame {
    pub mu: f64,
    pub alpha: Vec2,
    pub beta: Vec2,
}

impl ShearFrame {
    pub fn new(mu: f64, alpha: Vec2, beta: Vec2) -> Result<Self> {
        let tol = 1e-12;
        if (norm(alpha) - 1.0).abs() > tol {
            return Err(Error::Invalid(format!("alpha is not a unit vector (|alpha| = {})", norm(alpha))));
        }
        if (norm(beta) - 1.0).abs() > tol {
            return Err(Error::Invalid(format!("beta is not a unit vector (|beta| = {})", norm(beta))));
        }
        if dot(alpha, beta).abs() > tol {
            return Err(Error::Invalid(format!("alpha and beta are not orthogonal (alpha·beta = {})", dot(alpha, beta))));
        }
        if !mu.is_finite() {
            return Err(Error::Invalid("mu must be finite".into()));
        }
        Ok(ShearFrame { mu, alpha, beta })
    }

    /// α = e₁, β = e₂.
    pub fn standard(mu: f64) -> Self {
        ShearFrame { mu, alpha: [1.0, 0.0], beta: [0.0, 1.0] }
    }

    /// α⊗β.
    pub fn shear_matrix(&self) -> Mat2 {
        Mat2::outer(self.alpha, self.beta)
    }

    /// Peculiar velocity S(z, w) = w − μ(β·z)α.
    pub fn peculiar(&self, z: Vec2, w: Vec2) -> Vec2 {
        let s = self.mu * dot(self.beta, z);
        [w[0] - s * self.alpha[0], w[1] - s * self.alpha[1]]
    }
}

/// The d×2d matrix S = (−μ α⊗β, Id) together with a basis of its kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectivityMatrix {
    pub s: [[f64; 4]; 2],
    pub kernel_basis: Vec<[f64; 4]>,
}

impl ObjectivityMatrix {
    pub fn for_shear(frame: &ShearFrame) -> Self {
        let n = frame.shear_matrix();
        let mu = frame.mu;
        let s = [
            [-mu * n.0[0][0], -mu * n.0[0][1], 1.0, 0.0],
            [-mu * n.0[1][0], -mu * n.0[1][1], 0.0, 1.0],
        ];
        let (a, b) = (frame.alpha, frame.beta);
        let kernel_basis = vec![[a[0], a[1], 0.0, 0.0], [b[0], b[1], mu * a[0], mu * a[1]]];
        ObjectivityMatrix { s, kernel_basis }
    }

    pub fn apply(&self, v: &[f64; 4]) -> Vec2 {
        let r = |row: &[f64; 4]| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        [r(&self.s[0]), r(&self.s[1])]
    }

    /// max |S v| over the kernel basis.
    pub fn kernel_residual(&self) -> f64 {
        self.kernel_basis
            .iter()
            .map(|v| {
                let r = self.apply(v);
                r[0].abs().max(r[1].abs())
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ObjectivityReport {
    pub samples: usize,
    pub max_deviation: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Samples |f(z + xα + yβ, w + μyα) − f(z, w)| at random points. Positions and
/// velocities are drawn from [−2, 2]², shifts x, y from [−2, 2].
pub fn check_objectivity(
    f: impl Fn(Vec2, Vec2) -> f64,
    frame: &ShearFrame,
    samples: usize,
    tol: f64,
) -> ObjectivityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b1ec7);
    let (a, b, mu) = (frame.alpha, frame.beta, frame.mu);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let mut u = || rng.gen_range(-2.0..2.0);
        let z = [u(), u()];
        let w = [u(), u()];
        let (x, y) = (u(), u());
        let z2 = [z[0] + x * a[0] + y * b[0], z[1] + x * a[1] + y * b[1]];
        let w2 = [w[0] + mu * y * a[0], w[1] + mu * y * a[1]];
        let d = (f(z2, w2) - f(z, w)).abs();
        worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
    }
    ObjectivityReport { samples, max_deviation: worst, tol, passed: samples > 0 && worst <= tol }
}

/// sup over `points` of |∇_z f + μ(∇_w f·α)β|.
pub fn symrel_residual(
    grad_z: impl Fn(Vec2, Vec2) -> Vec2,
    grad_w: impl Fn(Vec2, Vec2) -> Vec2,
    frame: &ShearFrame,
    points: &[(Vec2, Vec2)],
) -> f64 {
    let mut worst = 0.0f64;
    for &(z, w) in points {
        let gz = grad_z(z, w);
        let gw = grad_w(z, w);
        let s = frame.mu * dot(gw, frame.alpha);
        let r = [gz[0] + s * frame.beta[0], gz[1] + s * frame.beta[1]];
        worst = worst.max(norm(r));
    }
    worst
}
