//! Finite-volume solver for the rescaled Fokker-Planck shape equation
//! ∂ₜG = ∇·(G (θ⁻¹Id − F) p + η²∇G) on a truncated square of velocity space.

pub mod coupled;
pub mod hypoco;
pub mod io;
pub mod mu_zero;
pub mod scheme;

use crate::error::{Error, Result};
use crate::tensor::{SymTensor2, Vec2};
use rayon::prelude::*;
use serde::Serialize;

pub use coupled::{entropy, entropy_dissipation, entropy_dissipation_literal, run_coupled, CoupledOptions, CoupledRecord, CoupledRun};
pub use scheme::{FluxScheme, ShapeCoefficients, ShapeOperator};

/// Uniform cell-centred grid on [−L, L]², n cells per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VelocityGrid {
    pub n: usize,
    pub half_extent: f64,
}

impl VelocityGrid {
    pub fn new(n: usize, half_extent: f64) -> Result<Self> {
        if n < 16 {
            return Err(Error::Invalid(format!("grid needs n ≥ 16, got {n}")));
        }
        if !(half_extent >= 6.0) || !half_extent.is_finite() {
            return Err(Error::Invalid(format!("grid needs L ≥ 6, got {half_extent}")));
        }
        Ok(VelocityGrid { n, half_extent })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_extent / self.n as f64
    }

    /// Cell-centre coordinate of index i.
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_extent + (i as f64 + 0.5) * self.h()
    }

    /// Face coordinate i (faces 0..=n; face i is the left edge of cell i).
    pub fn face(&self, i: usize) -> f64 {
        -self.half_extent + i as f64 * self.h()
    }

    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    /// Row-major index: `i` along p₁, `j` along p₂.
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        [self.coord(i), self.coord(j)]
    }
}

/// (4π)⁻¹ exp(−|p|²/4).
pub fn maxwellian_density(p: Vec2) -> f64 {
    (-(p[0] * p[0] + p[1] * p[1]) / 4.0).exp() / (4.0 * std::f64::consts::PI)
}

/// Density on the grid, cell averages approximated by centre values.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: VelocityGrid,
    pub values: Vec<f64>,
}

/// Sums rows in parallel, then adds the row totals in index order, so the
/// result does not depend on thread scheduling.
pub(crate) fn grid_sum(grid: &VelocityGrid, f: impl Fn(usize, usize) -> f64 + Sync) -> f64 {
    let n = grid.n;
    let rows: Vec<f64> = (0..n).into_par_iter().map(|j| (0..n).map(|i| f(i, j)).sum::<f64>()).collect();
    rows.iter().sum()
}

impl DensityField {
    pub fn from_fn(grid: VelocityGrid, f: impl Fn(Vec2) -> f64 + Sync) -> Self {
        let n = grid.n;
        let mut values = vec![0.0; n * n];
        values.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, v) in row.iter_mut().enumerate() {
                *v = f(grid.point(i, j));
            }
        });
        DensityField { grid, values }
    }

    /// Analytic Maxwellian sampled at cell centres.
    pub fn maxwellian(grid: VelocityGrid) -> Self {
        Self::from_fn(grid, maxwellian_density)
    }

    /// Maxwellian rescaled to unit discrete mass; this is the equilibrium the
    /// balanced scheme preserves and the reference for distances.
    pub fn maxwellian_discrete(grid: VelocityGrid) -> Self {
        let mut m = Self::maxwellian(grid);
        let s = 1.0 / m.mass();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    fn moment(&self, f: impl Fn(Vec2) -> f64 + Sync) -> f64 {
        let g = &self.grid;
        let h2 = g.h() * g.h();
        grid_sum(g, |i, j| self.at(i, j) * f(g.point(i, j))) * h2
    }

    pub fn mass(&self) -> f64 {
        self.moment(|_| 1.0)
    }

    pub fn mean(&self) -> Vec2 {
        let m = self.mass();
        [self.moment(|p| p[0]) / m, self.moment(|p| p[1]) / m]
    }

    /// (1/2)∫ G p⊗p.
    pub fn half_second_moment(&self) -> SymTensor2 {
        SymTensor2::new(
            0.5 * self.moment(|p| p[0] * p[0]),
            0.5 * self.moment(|p| p[0] * p[1]),
            0.5 * self.moment(|p| p[1] * p[1]),
        )
    }

    /// max-entry deviation of (1/2)∫G p⊗p from Id.
    pub fn covariance_error(&self) -> f64 {
        self.half_second_moment().sub(&SymTensor2::IDENTITY).max_abs()
    }

    /// ∫ G p₁^i p₂^j.
    pub fn raw_moment(&self, i: i32, j: i32) -> f64 {
        self.moment(|p| p[0].powi(i) * p[1].powi(j))
    }

    pub fn l1_distance(&self, other: &DensityField) -> f64 {
        let g = &self.grid;
        grid_sum(g, |i, j| (self.at(i, j) - other.at(i, j)).abs()) * g.h() * g.h()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Sets entries in [−1e-12, 0) to zero and returns how many were changed;
    /// larger undershoots are left untouched and counted separately.
    pub fn clip_undershoot(&mut self) -> (usize, usize) {
        let (mut clipped, mut large) = (0, 0);
        for v in self.values.iter_mut() {
            if *v < 0.0 {
                if *v >= -1e-12 {
                    *v = 0.0;
                    clipped += 1;
                } else {
                    large += 1;
                }
            }
        }
        (clipped, large)
    }

    /// Bilinear interpolation at p; zero outside the cell-centre hull.
    pub fn interpolate(&self, p: Vec2) -> f64 {
        let g = &self.grid;
        let h = g.h();
        let x = (p[0] + g.half_extent) / h - 0.5;
        let y = (p[1] + g.half_extent) / h - 0.5;
        let last = (g.n - 1) as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= last && y <= last) {
            return 0.0;
        }
        let i = (x.floor() as usize).min(g.n - 2);
        let j = (y.floor() as usize).min(g.n - 2);
        let (fx, fy) = (x - i as f64, y - j as f64);
        (1.0 - fx) * (1.0 - fy) * self.at(i, j)
            + fx * (1.0 - fy) * self.at(i + 1, j)
            + (1.0 - fx) * fy * self.at(i, j + 1)
            + fx * fy * self.at(i + 1, j + 1)
    }
}

/// Physical density f(z, w) = det(η) G(η(w − μ(β·z)α)) built from a shape
/// field. Points whose rescaled velocity leaves the grid evaluate to zero.
#[derive(Debug, Clone)]
pub struct PhysicalSampler {
    pub field: DensityField,
    pub eta: SymTensor2,
    pub shear: crate::tensor::ShearFrame,
    det: f64,
}

impl PhysicalSampler {
    pub fn eval(&self, z: Vec2, w: Vec2) -> f64 {
        let p = self.eta.apply(self.shear.peculiar(z, w));
        self.det * self.field.interpolate(p)
    }
}

pub fn reconstruct_physical(g: &DensityField, eta: &SymTensor2, shear: &crate::tensor::ShearFrame) -> Result<PhysicalSampler> {
    eta.check_pd()?;
    Ok(PhysicalSampler { field: g.clone(), eta: *eta, shear: *shear, det: eta.det() })
}

/// Moments h_ij = ∫(G − G^M)p₁^i p₂^j of one total order, relative to the
/// discrete reference Maxwellian.
pub fn relative_moments(g: &DensityField, reference: &DensityField, order: usize) -> crate::moments::MomentVector {
    let h = (0..=order)
        .map(|j| {
            let (i, j) = ((order - j) as i32, j as i32);
            g.raw_moment(i, j) - reference.raw_moment(i, j)
        })
        .collect();
    crate::moments::MomentVector { order, h }
}

/// Initial data menu; each entry is normalized by [`normalized_initial`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Maxwellian,
    /// Gaussian with the given covariance before normalization.
    Gaussian { cov: [f64; 3] },
    /// Equal mixture of two Gaussians centred at (±sep/2, 0) with the given
    /// covariance each.
    TwoBump { sep: f64, cov: [f64; 3] },
}

impl InitialData {
    pub fn density(&self, p: Vec2) -> f64 {
        fn gauss(p: Vec2, c: [f64; 3]) -> f64 {
            let det = c[0] * c[2] - c[1] * c[1];
            let q = (c[2] * p[0] * p[0] - 2.0 * c[1] * p[0] * p[1] + c[0] * p[1] * p[1]) / det;
            (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
        }
        match *self {
            InitialData::Maxwellian => maxwellian_density(p),
            InitialData::Gaussian { cov } => gauss(p, cov),
            InitialData::TwoBump { sep, cov } => {
                0.5 * (gauss([p[0] - 0.5 * sep, p[1]], cov) + gauss([p[0] + 0.5 * sep, p[1]], cov))
            }
        }
    }
}

/// Samples `f ∘ A + m` so that the discrete field has mass 1, mean 0 and the
/// same (1/2)∫G p⊗p as the discrete Maxwellian (Id up to quadrature error
/// below 1e-6). Matching the discrete reference rather than Id exactly lets a
/// moment-preserving run converge to G^M without a floor. The affine map is
/// computed from discrete moments and refined twice.
pub fn normalized_initial(grid: VelocityGrid, f: impl Fn(Vec2) -> f64 + Sync) -> Result<DensityField> {
    let mut a = crate::tensor::Mat2::IDENTITY;
    let mut shift = [0.0, 0.0];
    let mut field = DensityField::from_fn(grid, &f);
    let target_inv_sqrt = crate::tensor::sym_inv_sqrt(&DensityField::maxwellian_discrete(grid).half_second_moment())?.to_mat();
    for _ in 0..3 {
        let m = field.mass();
        if !(m > 0.0) {
            return Err(Error::Invalid("initial density has no mass on the grid".into()));
        }
        let mean = field.mean();
        let c = field.half_second_moment().scale(1.0 / m);
        let centred = c.sub(&SymTensor2::new(0.5 * mean[0] * mean[0], 0.5 * mean[0] * mean[1], 0.5 * mean[1] * mean[1]));
        // sample at q = S p + mean with S = C^{1/2} C_ref^{-1/2}
        let s = crate::tensor::sym_sqrt(&centred)?.to_mat().mul(&target_inv_sqrt);
        let new_a = a.mul(&s);
        let am = a.apply(mean);
        let new_shift = [shift[0] + am[0], shift[1] + am[1]];
        a = new_a;
        shift = new_shift;
        let det = a.det().abs();
        field = DensityField::from_fn(grid, |p| {
            let q = a.apply(p);
            det * f([q[0] + shift[0], q[1] + shift[1]])
        });
        let m = field.mass();
        field.values.iter_mut().for_each(|v| *v /= m);
    }
    Ok(field)
}
