//! Equivalent inclusion method for spheres in a ball-shaped RVE.
//!
//! The polarization is taken constant in each inclusion. Testing the
//! Lippmann–Schwinger equation against inclusion indicators gives a dense
//! `3n × 3n` system whose `(β, α)` block is
//!
//! ```text
//! δ_βα f_β/(κ_β − κ0) I  +  ∫∫ Γ∞ χ_α χ_β  −  f_α f_β/(3κ0|Ω|) I
//! ```
//!
//! with right-hand side `f_β E`, `f` denoting inclusion volumes. The double integral equals `f/(3κ0) I` on
//! the diagonal and `f_α f_β Γ∞(c_α, c_β)` off it (mean-value property).

mod solve;

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::hmatrix::{EntryGenerator, HError, SolveReport, SolverError};
use crate::microstructure::{Domain, GeometryError, Microstructure, Sphere};

pub use solve::{effective_tensor, solve_dense, solve_eim, EimResults, EimSolution, EimSystem, SolverConfig};

#[derive(Debug, Error)]
pub enum EimError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("the equivalent inclusion method needs a ball-shaped domain")]
    NotBall,
    #[error("reference coefficient must be positive and finite, got {0}")]
    InvalidReference(f64),
    #[error("inclusion {0} has the reference coefficient; (κ − κ0)⁻¹ does not exist")]
    VanishingContrast(usize),
    #[error("Γ∞ is singular at coincident points")]
    Coincident,
    #[error("distinct spheres overlap")]
    Overlap,
    #[error("sphere is not inside the domain ball")]
    OutsideDomain,
    #[error(transparent)]
    HMatrix(#[from] HError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("solver did not converge: {} iterations, residual {:e}", .0.iterations, .0.residual)]
    NotConverged(Box<SolveReport>),
}

/// Problem data: microstructure in a ball, reference medium, macroscopic
/// gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EimProblem {
    pub microstructure: Microstructure,
    pub kappa0: f64,
    pub e: Vec3,
}

impl EimProblem {
    /// Reference medium equal to the matrix.
    pub fn new(microstructure: Microstructure, e: Vec3) -> Result<Self, EimError> {
        let kappa0 = microstructure.kappa_matrix;
        Self::with_reference(microstructure, kappa0, e)
    }

    pub fn with_reference(microstructure: Microstructure, kappa0: f64, e: Vec3) -> Result<Self, EimError> {
        let p = Self {
            microstructure,
            kappa0,
            e,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), EimError> {
        if !matches!(self.microstructure.domain, Domain::Ball { .. }) {
            return Err(EimError::NotBall);
        }
        if !(self.kappa0 > 0.0 && self.kappa0.is_finite()) {
            return Err(EimError::InvalidReference(self.kappa0));
        }
        self.microstructure.validate()?;
        if let Some(i) = self.microstructure.spheres.iter().position(|s| s.kappa == self.kappa0) {
            return Err(EimError::VanishingContrast(i));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.microstructure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.microstructure.is_empty()
    }

    pub fn with_gradient(&self, e: Vec3) -> Self {
        Self { e, ..self.clone() }
    }

    /// `b_β = f_β E`, three entries per inclusion.
    pub fn rhs(&self) -> Vec<f64> {
        self.microstructure
            .spheres
            .iter()
            .flat_map(|s| {
                let f = s.volume();
                [f * self.e.x, f * self.e.y, f * self.e.z]
            })
            .collect()
    }
}

/// `Γ∞(x, y) = κ0⁻¹ ∇_y ∇_x G∞(x − y) = (I − 3 r̂ r̂ᵀ) / (4π κ0 |r|³)`.
pub fn gamma_inf(x: &Vec3, y: &Vec3, kappa0: f64) -> Result<Matrix3<f64>, EimError> {
    let r = x - y;
    let d2 = r.norm_squared();
    if d2 == 0.0 {
        return Err(EimError::Coincident);
    }
    Ok(gamma_unchecked(&r, d2, kappa0))
}

#[inline]
fn gamma_unchecked(r: &Vec3, d2: f64, kappa0: f64) -> Matrix3<f64> {
    let d = d2.sqrt();
    let c = 1.0 / (4.0 * PI * kappa0 * d2 * d);
    (Matrix3::identity() - r * r.transpose() * (3.0 / d2)) * c
}

/// `∫∫ Γ∞(x, y) χ_α(x) χ_β(y) dx dy` for two spheres (or one sphere with
/// itself).
pub fn pairwise_interaction(alpha: &Sphere, beta: &Sphere, kappa0: f64) -> Result<Matrix3<f64>, EimError> {
    if alpha == beta {
        return Ok(Matrix3::identity() * (alpha.volume() / (3.0 * kappa0)));
    }
    let d = (alpha.center - beta.center).norm();
    if d <= alpha.radius + beta.radius {
        return Err(EimError::Overlap);
    }
    Ok(gamma_inf(&alpha.center, &beta.center, kappa0)? * (alpha.volume() * beta.volume()))
}

/// Third term of the block: `−f_α f_β/(3κ0|Ω|) I`, the mean of the
/// interaction over the ball. Requires both spheres in the domain ball.
pub fn domain_correction(alpha: &Sphere, beta: &Sphere, domain: &Domain, kappa0: f64) -> Result<Matrix3<f64>, EimError> {
    let Domain::Ball { .. } = domain else {
        return Err(EimError::NotBall);
    };
    if !domain.contains_sphere(alpha) || !domain.contains_sphere(beta) {
        return Err(EimError::OutsideDomain);
    }
    Ok(Matrix3::identity() * (-alpha.volume() * beta.volume() / (3.0 * kappa0 * domain.volume())))
}

/// Scalar entry oracle of the EIM matrix.
pub struct EimGenerator {
    centers: Vec<Vec3>,
    volumes: Vec<f64>,
    /// `f_β/(κ_β − κ0) + f_β/(3κ0)`.
    diag: Vec<f64>,
    kappa0: f64,
    /// `3κ0|Ω|`.
    mean_scale: f64,
}

pub fn eim_generator(problem: &EimProblem) -> EimGenerator {
    let k0 = problem.kappa0;
    let spheres = &problem.microstructure.spheres;
    EimGenerator {
        centers: spheres.iter().map(|s| s.center).collect(),
        volumes: spheres.iter().map(Sphere::volume).collect(),
        diag: spheres
            .iter()
            .map(|s| s.volume() / (s.kappa - k0) + s.volume() / (3.0 * k0))
            .collect(),
        kappa0: k0,
        mean_scale: 3.0 * k0 * problem.microstructure.domain.volume(),
    }
}

impl EimGenerator {
    pub fn block3(&self, beta: usize, alpha: usize) -> Matrix3<f64> {
        let (fa, fb) = (self.volumes[alpha], self.volumes[beta]);
        let corr = -fa * fb / self.mean_scale;
        if alpha == beta {
            return Matrix3::identity() * (self.diag[beta] + corr);
        }
        let r = self.centers[alpha] - self.centers[beta];
        gamma_unchecked(&r, r.norm_squared(), self.kappa0) * (fa * fb) + Matrix3::identity() * corr
    }
}

impl EntryGenerator for EimGenerator {
    fn is_symmetric(&self) -> bool {
        true
    }
    fn nrows(&self) -> usize {
        3 * self.centers.len()
    }
    fn ncols(&self) -> usize {
        3 * self.centers.len()
    }
    fn entry(&self, i: usize, j: usize) -> f64 {
        let (beta, a) = (i / 3, i % 3);
        let (alpha, b) = (j / 3, j % 3);
        let (fa, fb) = (self.volumes[alpha], self.volumes[beta]);
        let delta = if a == b { 1.0 } else { 0.0 };
        let corr = -fa * fb / self.mean_scale * delta;
        if alpha == beta {
            return self.diag[beta] * delta + corr;
        }
        let r = self.centers[alpha] - self.centers[beta];
        let d2 = r.norm_squared();
        let d = d2.sqrt();
        let g = (delta - 3.0 * (r[a] * r[b]) / d2) / (4.0 * PI * self.kappa0 * d2 * d);
        fa * fb * g + corr
    }
}

/// Direct dense assembly from the block formulas.
pub fn assemble_dense(problem: &EimProblem) -> Result<DMatrix<f64>, EimError> {
    let spheres = &problem.microstructure.spheres;
    let n = spheres.len();
    let k0 = problem.kappa0;
    let domain = &problem.microstructure.domain;
    let mut a = DMatrix::zeros(3 * n, 3 * n);
    for (beta, sb) in spheres.iter().enumerate() {
        for (alpha, sa) in spheres.iter().enumerate() {
            let mut block = pairwise_interaction(sa, sb, k0)? + domain_correction(sa, sb, domain, k0)?;
            if alpha == beta {
                block += Matrix3::identity() * (sb.volume() / (sb.kappa - k0));
            }
            a.view_mut((3 * beta, 3 * alpha), (3, 3)).copy_from(&block);
        }
    }
    Ok(a)
}

/// Effective coefficient tensor with its isotropic part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveEstimate {
    pub tensor: Matrix3<f64>,
    /// `trace / 3`.
    pub scalar: f64,
    pub volume_fraction: f64,
}

impl EffectiveEstimate {
    /// Symmetrises `k` and records its mean eigenvalue.
    pub fn from_tensor(k: Matrix3<f64>, volume_fraction: f64) -> Self {
        let tensor = (k + k.transpose()) * 0.5;
        Self {
            tensor,
            scalar: tensor.trace() / 3.0,
            volume_fraction,
        }
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let t = &self.tensor;
        [
            [t[(0, 0)], t[(0, 1)], t[(0, 2)]],
            [t[(1, 0)], t[(1, 1)], t[(1, 2)]],
            [t[(2, 0)], t[(2, 1)], t[(2, 2)]],
        ]
    }
}

/// Effective tensor from the three directional polarizations:
/// column `j` is `κ0 e_j + |Ω|⁻¹ Σ_α f_α τ_α^(j)`.
pub fn effective_estimate(problem: &EimProblem, taus: &[Vec<Vec3>; 3]) -> EffectiveEstimate {
    let ms = &problem.microstructure;
    let vol = ms.domain.volume();
    let mut k = Matrix3::identity() * problem.kappa0;
    for (j, tau) in taus.iter().enumerate() {
        let mut avg = Vec3::zeros();
        for (s, t) in ms.spheres.iter().zip(tau) {
            avg += t * s.volume();
        }
        let col = k.column(j) + avg / vol;
        k.set_column(j, &col);
    }
    EffectiveEstimate::from_tensor(k, ms.volume_fraction())
}

/// Maxwell-Garnett dilute estimate `κ0 + 3fκ0(κ1 − κ0)/(κ1 + 2κ0)`.
pub fn maxwell_garnett(f: f64, kappa0: f64, kappa1: f64) -> f64 {
    kappa0 + 3.0 * f * kappa0 * (kappa1 - kappa0) / (kappa1 + 2.0 * kappa0)
}

/// Harmonic and arithmetic means of a two-phase mixture.
pub fn mixture_bounds(f: f64, kappa_matrix: f64, kappa_inclusion: f64) -> (f64, f64) {
    let harmonic = 1.0 / ((1.0 - f) / kappa_matrix + f / kappa_inclusion);
    let arithmetic = (1.0 - f) * kappa_matrix + f * kappa_inclusion;
    (harmonic, arithmetic)
}
