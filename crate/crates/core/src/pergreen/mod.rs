//! Periodic Laplace Green's function on the unit cell `(-1/2, 1/2)^3`,
//! normalised by `-ΔG = δ - 1`.
//!
//! `G(x) = Σ_images G∞(x + m) + |x|²/6 + Σ β_l^m Φ_l^m(x)`, where the image
//! sum is either the origin alone ([`Variant::Plain`]) or the 27 nearest
//! lattice points ([`Variant::ImageCorrected`]) and `Φ_l^m` are real solid
//! harmonics. The coefficients are fitted by least squares so that values
//! and normal derivatives agree across opposite faces.

mod fit;
mod fourier;
mod harmonics;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{lattice_shifts, wrap_to_cell, Vec3};

pub use fit::{
    convergence_study, default_quadrature_order, fit_expansion, periodicity_defect, FitReport, GAUGE_PROBE,
};
pub use fourier::fourier_reference;
pub use harmonics::{
    basis_index, basis_len, fill_solid_harmonics, solid_harmonic, solid_harmonic_grad, solid_harmonics,
    solid_harmonics_grad, MAX_DEGREE,
};

pub const DEFAULT_DEGREE: usize = 9;

#[derive(Debug, Error, PartialEq)]
pub enum PgError {
    #[error("solid harmonic index out of range: l = {l}, m = {m}")]
    HarmonicIndex { l: usize, m: i64 },
    #[error("quadrature order {q} gives {rows} rows, fewer than the {needed} required")]
    InsufficientQuadrature { q: usize, rows: usize, needed: usize },
    #[error("least-squares system is rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("degree {0} exceeds the supported maximum {MAX_DEGREE}")]
    DegreeTooLarge(usize),
    #[error("evaluation at a singular point {0:?}")]
    Singular([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Plain,
    ImageCorrected,
}

impl Variant {
    fn shifts(self) -> Vec<Vec3> {
        match self {
            Variant::Plain => vec![Vec3::zeros()],
            Variant::ImageCorrected => lattice_shifts().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGreenExpansion {
    #[serde(rename = "L")]
    pub degree: usize,
    pub variant: Variant,
    /// `(L+1)²` coefficients, indexed by [`basis_index`].
    pub beta: Vec<f64>,
    pub gauge_constant: f64,
    #[serde(skip)]
    shifts: Vec<Vec3>,
    /// Coefficients of each component of `∇ Σ β Φ` in the degree `L−1`
    /// basis.
    #[serde(skip)]
    grad_beta: [Vec<f64>; 3],
}

const BUF: usize = (MAX_DEGREE + 1) * (MAX_DEGREE + 1);

/// Each partial derivative of a degree-`L` harmonic polynomial is a
/// harmonic polynomial of degree `L−1`; its coefficients are recovered by
/// least squares on a point set where the basis is unisolvent.
fn gradient_coefficients(degree: usize, beta: &[f64]) -> [Vec<f64>; 3] {
    if degree == 0 {
        return [Vec::new(), Vec::new(), Vec::new()];
    }
    let n = basis_len(degree - 1);
    let pts: Vec<Vec3> = {
        let (t, _) = crate::quadrature::gauss_legendre_interval(degree + 1, -0.5, 0.5);
        let mut p = Vec::new();
        for a in &t {
            for b in &t {
                for c in &t {
                    p.push(Vec3::new(*a, *b, *c));
                }
            }
        }
        p
    };
    let mut a = nalgebra::DMatrix::zeros(pts.len(), n);
    let mut rhs = nalgebra::DMatrix::zeros(pts.len(), 3);
    let (mut v, mut g) = (Vec::new(), Vec::new());
    for (r, x) in pts.iter().enumerate() {
        solid_harmonics_grad(degree, x, &mut v, &mut g);
        for c in 0..n {
            a[(r, c)] = v[c];
        }
        let grad: Vec3 = g.iter().zip(beta).map(|(g, b)| g * *b).sum();
        for k in 0..3 {
            rhs[(r, k)] = grad[k];
        }
    }
    let svd = a.svd(true, true);
    let x = svd.solve(&rhs, 1e-14).expect("SVD with both factors");
    [0, 1, 2].map(|k| x.column(k).iter().copied().collect())
}

pub fn g_inf(x: &Vec3) -> f64 {
    1.0 / (4.0 * PI * x.norm())
}

pub fn grad_g_inf(x: &Vec3) -> Vec3 {
    let r = x.norm();
    -x / (4.0 * PI * r * r * r)
}

impl PeriodicGreenExpansion {
    /// Panics if `beta.len() != (degree+1)²` or `degree > MAX_DEGREE`.
    pub fn new(degree: usize, variant: Variant, beta: Vec<f64>, gauge_constant: f64) -> Self {
        assert_eq!(beta.len(), basis_len(degree), "coefficient count");
        assert!(degree <= MAX_DEGREE, "degree above MAX_DEGREE");
        let grad_beta = gradient_coefficients(degree, &beta);
        Self {
            degree,
            variant,
            beta,
            gauge_constant,
            shifts: variant.shifts(),
            grad_beta,
        }
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            #[serde(rename = "L")]
            degree: usize,
            variant: Variant,
            beta: Vec<f64>,
            gauge_constant: f64,
        }
        let raw: Raw = serde_json::from_str(text)?;
        if raw.degree > MAX_DEGREE || raw.beta.len() != basis_len(raw.degree) {
            return Err(serde::de::Error::custom("coefficient count does not match L"));
        }
        Ok(Self::new(raw.degree, raw.variant, raw.beta, raw.gauge_constant))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("expansion serialises")
    }

    /// Explicit part: image sum plus the quadratic term.
    fn singular_part(&self, x: &Vec3) -> f64 {
        self.shifts.iter().map(|s| g_inf(&(x + s))).sum::<f64>() + x.norm_squared() / 6.0
    }

    fn singular_part_grad(&self, x: &Vec3) -> Vec3 {
        self.shifts.iter().map(|s| grad_g_inf(&(x + s))).sum::<Vec3>() + x / 3.0
    }

    fn harmonic_part(&self, x: &Vec3) -> f64 {
        let mut phi = [0.0; BUF];
        let n = basis_len(self.degree);
        fill_solid_harmonics(self.degree, x, &mut phi[..n]);
        phi[..n].iter().zip(&self.beta).map(|(p, b)| p * b).sum()
    }

    fn harmonic_part_grad(&self, x: &Vec3) -> Vec3 {
        if self.degree == 0 {
            return Vec3::zeros();
        }
        let mut phi = [0.0; BUF];
        let n = basis_len(self.degree - 1);
        fill_solid_harmonics(self.degree - 1, x, &mut phi[..n]);
        Vec3::from_fn(|k, _| phi[..n].iter().zip(&self.grad_beta[k]).map(|(p, b)| p * b).sum())
    }

    /// Representation evaluated at `x` as given, without reduction to the
    /// cell.
    pub fn eval_raw(&self, x: &Vec3) -> f64 {
        self.singular_part(x) + self.harmonic_part(x) + self.gauge_constant
    }

    pub fn grad_raw(&self, x: &Vec3) -> Vec3 {
        self.singular_part_grad(x) + self.harmonic_part_grad(x)
    }

    /// `G(x)` after reducing `x` to the cell.
    pub fn eval(&self, x: &Vec3) -> Result<f64, PgError> {
        let y = self.reduce(x)?;
        Ok(self.eval_raw(&y))
    }

    pub fn grad(&self, x: &Vec3) -> Result<Vec3, PgError> {
        let y = self.reduce(x)?;
        Ok(self.grad_raw(&y))
    }

    /// `∇(G - G∞)` after reducing `x` to the cell; finite at the origin.
    pub fn grad_regular(&self, x: &Vec3) -> Vec3 {
        let y = wrap_to_cell(x);
        let mut g = self.harmonic_part_grad(&y) + y / 3.0;
        for s in &self.shifts {
            if s.norm_squared() > 0.0 {
                g += grad_g_inf(&(y + s));
            }
        }
        g
    }

    /// `(G - G∞)(x)` after reducing `x` to the cell; finite at the origin.
    pub fn eval_regular(&self, x: &Vec3) -> f64 {
        let y = wrap_to_cell(x);
        let mut v = self.harmonic_part(&y) + y.norm_squared() / 6.0 + self.gauge_constant;
        for s in &self.shifts {
            if s.norm_squared() > 0.0 {
                v += g_inf(&(y + s));
            }
        }
        v
    }

    fn reduce(&self, x: &Vec3) -> Result<Vec3, PgError> {
        let y = wrap_to_cell(x);
        if y.norm() < 1e-14 {
            return Err(PgError::Singular([x.x, x.y, x.z]));
        }
        Ok(y)
    }
}

/// `G(x)` for the expansion; alias of [`PeriodicGreenExpansion::eval`].
pub fn eval_gper(exp: &PeriodicGreenExpansion, x: &Vec3) -> Result<f64, PgError> {
    exp.eval(x)
}

pub fn grad_gper(exp: &PeriodicGreenExpansion, x: &Vec3) -> Result<Vec3, PgError> {
    exp.grad(x)
}
