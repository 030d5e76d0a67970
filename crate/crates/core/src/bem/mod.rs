//! Boundary element solution of the periodic corrector problem.
//!
//! The corrector is a single-layer potential `u = Vσ` with a piecewise
//! constant density on a flat-triangle mesh. Collocation at panel centroids
//! turns the transmission conditions into `(λI − K')σ = E·n`, where `K'` is
//! the adjoint double layer and `λ = (κe + κi) / (2(κe − κi))`.
//!
//! With outward normals and `G∞ = 1/(4π|x|)`, `K'` has eigenvalue `-1/2` on
//! constants and `-1/6` on degree-one densities of a sphere.

mod field;
mod solve;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_to_cell, Vec3};
use crate::hmatrix::{EntryGenerator, HError, SolveReport, SolverError};
use crate::microstructure::TriangleMesh;
use crate::pergreen::{g_inf, grad_g_inf, PeriodicGreenExpansion};

/// Entries between panels of different inclusions whose centroid distance
/// is below this many source panel diameters are integrated on a
/// subdivided panel.
pub const NEAR_FIELD_FACTOR: f64 = 2.0;
const MAX_NEAR_LEVELS: u32 = 6;

pub use field::{eval_corrector, field_csv, slice_grid, CorrectorField, FIELD_CSV_HEADER};
pub use solve::{effective_estimate_bem, effective_tensor_bem, solve_bie, BemOptions, BemResults, BemSystem, BieSolution};

#[derive(Debug, Error)]
pub enum BemError {
    #[error("conductivities must be positive and finite (interior {0}, exterior {1})")]
    InvalidConductivity(f64, f64),
    #[error("equal interior and exterior conductivity: the contrast factor does not exist")]
    ContrastSingular,
    #[error("empty mesh")]
    EmptyMesh,
    #[error("panel {0} is not strictly inside the periodic cell")]
    OutsideCell(usize),
    #[error("expected {expected} density values, got {got}")]
    DensityLength { expected: usize, got: usize },
    #[error(transparent)]
    HMatrix(#[from] HError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("GMRES did not converge: {} iterations, residual {:e}", .0.iterations, .0.residual)]
    NotConverged(Box<SolveReport>),
}

#[derive(Debug, Clone)]
pub enum Kernel {
    FreeSpace,
    Periodic(Arc<PeriodicGreenExpansion>),
}

impl Kernel {
    pub fn is_periodic(&self) -> bool {
        matches!(self, Kernel::Periodic(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::FreeSpace => "free",
            Kernel::Periodic(_) => "periodic",
        }
    }

    /// `G(d)`; zero at a lattice point.
    pub fn value(&self, d: &Vec3) -> f64 {
        match self {
            Kernel::FreeSpace => g_inf(d),
            Kernel::Periodic(exp) => exp.eval(d).unwrap_or(0.0),
        }
    }

    /// `∇G(d)`; zero at a lattice point.
    pub fn gradient(&self, d: &Vec3) -> Vec3 {
        match self {
            Kernel::FreeSpace => grad_g_inf(d),
            Kernel::Periodic(exp) => exp.grad(d).unwrap_or_else(|_| Vec3::zeros()),
        }
    }

    /// `(G − G∞)(0)`.
    fn regular_value_at_origin(&self) -> f64 {
        match self {
            Kernel::FreeSpace => 0.0,
            Kernel::Periodic(exp) => exp.eval_regular(&Vec3::zeros()),
        }
    }

    fn regular_gradient_at_origin(&self) -> Vec3 {
        match self {
            Kernel::FreeSpace => Vec3::zeros(),
            Kernel::Periodic(exp) => exp.grad_regular(&Vec3::zeros()),
        }
    }
}

/// Which normal enters the double-layer kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalConvention {
    /// `n(x)` at the collocation point: the adjoint double layer.
    #[default]
    Collocation,
    /// `n(y)` at the source panel.
    Source,
}

/// Treatment of the singular self-panel integral of `K'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelfPanel {
    /// Flat panel: the free-space kernel vanishes in the panel plane.
    Flat,
    /// Adds the leading curvature term `-(1/(8πR)) ∫_T |x−y|⁻¹` of the
    /// sphere carrying the panel.
    #[default]
    Curved,
}

#[derive(Debug, Clone)]
pub struct BieProblem {
    pub mesh: TriangleMesh,
    pub kappa_int: f64,
    pub kappa_ext: f64,
    pub e: Vec3,
    pub kernel: Kernel,
    pub convention: NormalConvention,
    pub self_panel: SelfPanel,
    /// Volume of the cell used for averaging.
    pub cell_volume: f64,
}

impl BieProblem {
    pub fn new(mesh: TriangleMesh, kappa_int: f64, kappa_ext: f64, e: Vec3, kernel: Kernel) -> Result<Self, BemError> {
        let p = Self {
            mesh,
            kappa_int,
            kappa_ext,
            e,
            kernel,
            convention: NormalConvention::default(),
            self_panel: SelfPanel::default(),
            cell_volume: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BemError> {
        let ok = |k: f64| k.is_finite() && k > 0.0;
        if !ok(self.kappa_int) || !ok(self.kappa_ext) {
            return Err(BemError::InvalidConductivity(self.kappa_int, self.kappa_ext));
        }
        if self.kappa_int == self.kappa_ext {
            return Err(BemError::ContrastSingular);
        }
        if self.mesh.is_empty() {
            return Err(BemError::EmptyMesh);
        }
        if self.kernel.is_periodic() {
            for (i, t) in self.mesh.triangles.iter().enumerate() {
                if t.iter().any(|&v| self.mesh.vertices[v].iter().any(|c| c.abs() >= 0.5)) {
                    return Err(BemError::OutsideCell(i));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    /// Subdivision depth for panel `j` seen from panel `i` at offset `d`:
    /// enough halvings that the sub-panels are smaller than a third of the
    /// distance. Zero beyond [`NEAR_FIELD_FACTOR`] diameters and for panels
    /// of the same inclusion, whose neighbours stay at the centroid rule.
    fn near_levels(&self, i: usize, j: usize, d: &Vec3) -> u32 {
        if self.mesh.owners[i] == self.mesh.owners[j] {
            return 0;
        }
        let dist = if self.kernel.is_periodic() { wrap_to_cell(d).norm() } else { d.norm() };
        let diam = self.mesh.panel_diameter(j);
        if dist >= NEAR_FIELD_FACTOR * diam {
            return 0;
        }
        let ratio = 3.0 * diam / dist.max(1e-300);
        (ratio.log2().ceil().max(1.0) as u32).min(MAX_NEAR_LEVELS)
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    pub fn contrast_factor(&self) -> f64 {
        contrast_factor(self.kappa_int, self.kappa_ext)
    }

    /// Right-hand side `E·n` at each panel.
    pub fn rhs(&self, e: &Vec3) -> Vec<f64> {
        self.mesh.normals.iter().map(|n| e.dot(n)).collect()
    }

    /// Radius of the sphere carrying panel `i`.
    fn panel_radius(&self, i: usize) -> f64 {
        let c = self.mesh.inclusion_centers[self.mesh.owners[i]];
        (self.mesh.vertices[self.mesh.triangles[i][0]] - c).norm()
    }

    /// Volume enclosed by the mesh, by the divergence theorem.
    pub fn enclosed_volume(&self) -> f64 {
        let m = &self.mesh;
        (0..m.len())
            .map(|i| {
                let c = m.inclusion_centers[m.owners[i]];
                m.areas[i] * (m.centroids[i] - c).dot(&m.normals[i]) / 3.0
            })
            .sum()
    }
}

/// `λ = (κe + κi) / (2(κe − κi))`.
pub fn contrast_factor(kappa_int: f64, kappa_ext: f64) -> f64 {
    (kappa_ext + kappa_int) / (2.0 * (kappa_ext - kappa_int))
}

/// Density coefficient of a sphere under a uniform gradient:
/// `σ = c E·n` with `c = 3(κe − κi)/(2κe + κi)`.
pub fn sphere_density_constant(kappa_int: f64, kappa_ext: f64) -> f64 {
    3.0 * (kappa_ext - kappa_int) / (2.0 * kappa_ext + kappa_int)
}

/// `∫_T |x − y|⁻¹ dy` for `x` in the plane of the triangle and inside it.
pub fn triangle_inverse_distance(x: &Vec3, tri: &[Vec3; 3]) -> f64 {
    let mut s = 0.0;
    for k in 0..3 {
        let (a, b) = (tri[k], tri[(k + 1) % 3]);
        let t = (b - a).normalize();
        let foot = a + t * (x - a).dot(&t);
        let h = (x - foot).norm();
        if h < 1e-300 {
            continue;
        }
        let (sa, sb) = ((a - foot).dot(&t), (b - foot).dot(&t));
        s += h * ((sb / h).asinh() - (sa / h).asinh());
    }
    s
}

/// Piecewise-constant single-layer density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub sigma: Vec<f64>,
}

impl DensityField {
    pub fn zeros(n: usize) -> Self {
        Self { sigma: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// `Σ σ_j a_j n_j`, per inclusion.
    pub fn dipole_moments(&self, mesh: &TriangleMesh) -> Vec<Vec3> {
        let mut p = vec![Vec3::zeros(); mesh.inclusion_centers.len()];
        for j in 0..mesh.len() {
            p[mesh.owners[j]] += mesh.normals[j] * (self.sigma[j] * mesh.areas[j]);
        }
        p
    }
}

/// Collocation entries of `K'`.
pub struct KPrimeGenerator<'a> {
    problem: &'a BieProblem,
    diagonal: Vec<f64>,
}

pub fn kprime_generator(problem: &BieProblem) -> KPrimeGenerator<'_> {
    let m = &problem.mesh;
    let reg = problem.kernel.regular_gradient_at_origin();
    let diagonal = (0..m.len())
        .map(|i| {
            let curved = match problem.self_panel {
                SelfPanel::Flat => 0.0,
                SelfPanel::Curved => {
                    -triangle_inverse_distance(&m.centroids[i], &m.panel_vertices(i)) / (8.0 * PI * problem.panel_radius(i))
                }
            };
            curved + m.areas[i] * reg.dot(&m.normals[i])
        })
        .collect();
    KPrimeGenerator { problem, diagonal }
}

impl EntryGenerator for KPrimeGenerator<'_> {
    fn nrows(&self) -> usize {
        self.problem.len()
    }

    fn ncols(&self) -> usize {
        self.problem.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diagonal[i];
        }
        let m = &self.problem.mesh;
        let n = match self.problem.convention {
            NormalConvention::Collocation => &m.normals[i],
            NormalConvention::Source => &m.normals[j],
        };
        let d = m.centroids[i] - m.centroids[j];
        let levels = self.problem.near_levels(i, j, &d);
        if levels == 0 {
            return m.areas[j] * self.problem.kernel.gradient(&d).dot(n);
        }
        // Close panel: the singular part on a refined panel, the smooth
        // remainder at the centroid.
        let x = match self.problem.kernel {
            Kernel::FreeSpace => m.centroids[i],
            Kernel::Periodic(_) => m.centroids[j] + wrap_to_cell(&d),
        };
        let singular = subdivided_panel_sum(&m.panel_vertices(j), levels, &|y, a| a * grad_g_inf(&(x - y)).dot(n));
        let regular = match &self.problem.kernel {
            Kernel::FreeSpace => 0.0,
            Kernel::Periodic(exp) => m.areas[j] * exp.grad_regular(&d).dot(n),
        };
        singular + regular
    }
}

/// `Σ f(c, a)` over the centroids `c` and areas `a` of the `4^levels`
/// midpoint subdivisions of `tri`.
fn subdivided_panel_sum(tri: &[Vec3; 3], levels: u32, f: &dyn Fn(&Vec3, f64) -> f64) -> f64 {
    if levels == 0 {
        let c = (tri[0] + tri[1] + tri[2]) / 3.0;
        let a = 0.5 * (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm();
        return f(&c, a);
    }
    let [a, b, c] = *tri;
    let (ab, bc, ca) = ((a + b) * 0.5, (b + c) * 0.5, (c + a) * 0.5);
    [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        .iter()
        .map(|t| subdivided_panel_sum(t, levels - 1, f))
        .sum()
}

/// Centroid values of the single-layer operator `V`.
pub struct SingleLayerGenerator<'a> {
    problem: &'a BieProblem,
    diagonal: Vec<f64>,
}

pub fn single_layer_generator(problem: &BieProblem) -> SingleLayerGenerator<'_> {
    let m = &problem.mesh;
    let reg = problem.kernel.regular_value_at_origin();
    let diagonal = (0..m.len())
        .map(|i| triangle_inverse_distance(&m.centroids[i], &m.panel_vertices(i)) / (4.0 * PI) + m.areas[i] * reg)
        .collect();
    SingleLayerGenerator { problem, diagonal }
}

impl EntryGenerator for SingleLayerGenerator<'_> {
    fn nrows(&self) -> usize {
        self.problem.len()
    }

    fn ncols(&self) -> usize {
        self.problem.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diagonal[i];
        }
        let m = &self.problem.mesh;
        let d = m.centroids[i] - m.centroids[j];
        let levels = self.problem.near_levels(i, j, &d);
        if levels == 0 {
            return m.areas[j] * self.problem.kernel.value(&d);
        }
        let x = m.centroids[j] + wrap_to_cell(&d);
        let x = if self.problem.kernel.is_periodic() { x } else { m.centroids[i] };
        let singular = subdivided_panel_sum(&m.panel_vertices(j), levels, &|y, a| a * g_inf(&(x - y)));
        let regular = match &self.problem.kernel {
            Kernel::FreeSpace => 0.0,
            Kernel::Periodic(exp) => m.areas[j] * exp.eval_regular(&d),
        };
        singular + regular
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmatrix::EntryGenerator;
    use crate::microstructure::{icosphere_mesh, Sphere};

    fn sphere_problem(level: u32, self_panel: SelfPanel) -> BieProblem {
        let mesh = icosphere_mesh(&Sphere::new(Vec3::zeros(), 1.0, 100.0), level);
        let mut p = BieProblem::new(mesh, 100.0, 1.0, Vec3::z(), Kernel::FreeSpace).unwrap();
        p.self_panel = self_panel;
        p
    }

    #[test]
    fn flat_self_entry_vanishes() {
        let p = sphere_problem(2, SelfPanel::Flat);
        let g = kprime_generator(&p);
        for i in 0..p.len() {
            assert_eq!(g.entry(i, i), 0.0);
        }
        let m = &p.mesh;
        let d = m.centroids[0] - m.vertices[m.triangles[0][1]];
        assert!(grad_g_inf(&d).dot(&m.normals[0]).abs() < 1e-12);
    }

    #[test]
    fn curved_self_entry_is_negative_and_small() {
        let p = sphere_problem(3, SelfPanel::Curved);
        let g = kprime_generator(&p);
        for i in 0..p.len() {
            let d = g.entry(i, i);
            assert!(d < 0.0 && d > -0.02, "{d}");
        }
    }

    #[test]
    fn inverse_distance_of_equilateral_triangle() {
        let tri = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-0.5, 3f64.sqrt() / 2.0, 0.0),
            Vec3::new(-0.5, -(3f64.sqrt()) / 2.0, 0.0),
        ];
        // Three identical edges at distance 1/2 spanning ±√3/2.
        let want = 3.0 * 0.5 * 2.0 * (3f64.sqrt()).asinh();
        assert!((triangle_inverse_distance(&Vec3::zeros(), &tri) - want).abs() < 1e-12);
        // Polar integration around x: ∫ ρ(θ) dθ over the three fans.
        let x = Vec3::new(0.2, 0.1, 0.0);
        let mut num = 0.0;
        for k in 0..3 {
            let (a, b) = (tri[k] - x, tri[(k + 1) % 3] - x);
            let (ta, tb) = (a.y.atan2(a.x), b.y.atan2(b.x));
            let tb = if tb < ta { tb + 2.0 * std::f64::consts::PI } else { tb };
            let (t, w) = crate::quadrature::gauss_legendre_interval(40, ta, tb);
            for (th, wt) in t.iter().zip(&w) {
                let dir = Vec3::new(th.cos(), th.sin(), 0.0);
                let edge = b - a;
                // Solve a + s·edge = ρ·dir for ρ.
                let det = dir.x * -edge.y - dir.y * -edge.x;
                let rho = (a.x * -edge.y - a.y * -edge.x) / det;
                num += wt * rho;
            }
        }
        let exact = triangle_inverse_distance(&x, &tri);
        assert!((num - exact).abs() < 1e-10 * exact, "{num} vs {exact}");
    }

    #[test]
    fn contrast_and_sphere_constant() {
        let lambda = contrast_factor(100.0, 1.0);
        assert!((lambda - 101.0 / -198.0).abs() < 1e-15);
        let c = 1.0 / (lambda + 1.0 / 6.0);
        assert!((c - sphere_density_constant(100.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn invalid_problems() {
        let mesh = icosphere_mesh(&Sphere::new(Vec3::zeros(), 0.2, 2.0), 1);
        assert!(matches!(
            BieProblem::new(mesh.clone(), 1.0, 1.0, Vec3::x(), Kernel::FreeSpace),
            Err(BemError::ContrastSingular)
        ));
        assert!(matches!(
            BieProblem::new(mesh.clone(), -1.0, 1.0, Vec3::x(), Kernel::FreeSpace),
            Err(BemError::InvalidConductivity(..))
        ));
        let big = icosphere_mesh(&Sphere::new(Vec3::new(0.4, 0.0, 0.0), 0.2, 2.0), 1);
        let exp = Arc::new(crate::pergreen::fit_expansion(2, None, crate::pergreen::Variant::ImageCorrected).unwrap().0);
        assert!(matches!(
            BieProblem::new(big, 2.0, 1.0, Vec3::x(), Kernel::Periodic(exp)),
            Err(BemError::OutsideCell(_))
        ));
    }

    #[test]
    fn enclosed_volume_converges() {
        let p = sphere_problem(4, SelfPanel::Curved);
        let v = p.enclosed_volume();
        assert!((v / (4.0 / 3.0 * PI) - 1.0).abs() < 3e-3);
    }
}
