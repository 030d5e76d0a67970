use std::time::Instant;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{kprime_generator, single_layer_generator, BemError, BieProblem, DensityField};
use crate::eim::EffectiveEstimate;
use crate::geometry::Vec3;
use crate::hmatrix::{
    assemble, build_block_tree, build_cluster_tree, gmres, AcaMode, Admissibility, AssemblyOptions, BlockTree,
    CompressionStats, HMatrix, IdentityPreconditioner, LinearOperator, SolveReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BemOptions {
    pub epsilon: f64,
    pub eta: f64,
    pub c_leaf: usize,
    pub mode: AcaMode,
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for BemOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            eta: 1.7,
            c_leaf: 32,
            mode: AcaMode::Partial,
            tol: 1e-8,
            restart: 50,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BieSolution {
    pub density: DensityField,
    pub report: SolveReport,
}

/// `λI − K'` with `K'` compressed and the identity applied exactly.
struct ShiftedOperator<'a> {
    lambda: f64,
    kprime: &'a HMatrix,
}

impl LinearOperator for ShiftedOperator<'_> {
    fn dim(&self) -> usize {
        self.kprime.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.kprime.apply(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = self.lambda * xi - *yi;
        }
    }
}

/// Assembled `K'` for one mesh and kernel; the contrast enters only
/// through `λ`, so a new conductivity pair reuses the assembly.
pub struct BemSystem {
    pub problem: BieProblem,
    pub options: BemOptions,
    pub kprime: HMatrix,
    pub stats: CompressionStats,
    block_tree: BlockTree,
}

impl BemSystem {
    pub fn build(problem: &BieProblem, options: BemOptions) -> Result<Self, BemError> {
        problem.validate()?;
        let ct = build_cluster_tree(&problem.mesh.centroids, options.c_leaf)?;
        let adm = if problem.kernel.is_periodic() {
            Admissibility::periodic(options.eta)
        } else {
            Admissibility::new(options.eta)
        };
        let block_tree = build_block_tree(&ct, adm);
        let gen = kprime_generator(problem);
        let kprime = assemble(&gen, &block_tree, AssemblyOptions::new(options.epsilon, options.mode))?;
        let stats = kprime.stats();
        Ok(Self {
            problem: problem.clone(),
            options,
            kprime,
            stats,
            block_tree,
        })
    }

    /// Replaces the conductivity pair without reassembling.
    pub fn with_contrast(mut self, kappa_int: f64, kappa_ext: f64) -> Result<Self, BemError> {
        self.problem.kappa_int = kappa_int;
        self.problem.kappa_ext = kappa_ext;
        self.problem.validate()?;
        Ok(self)
    }

    pub fn solve(&self, e: Vec3) -> Result<BieSolution, BemError> {
        let op = ShiftedOperator {
            lambda: self.problem.contrast_factor(),
            kprime: &self.kprime,
        };
        let b = self.problem.rhs(&e);
        let o = &self.options;
        let sol = gmres(&op, &IdentityPreconditioner, &b, o.tol, o.restart, o.max_iter)?;
        if !sol.report.converged {
            return Err(BemError::NotConverged(Box::new(sol.report)));
        }
        Ok(BieSolution {
            density: DensityField { sigma: sol.x },
            report: sol.report,
        })
    }

    /// Single-layer operator on the same block structure.
    pub fn single_layer(&self) -> Result<HMatrix, BemError> {
        let gen = single_layer_generator(&self.problem);
        let opts = AssemblyOptions::new(self.options.epsilon.min(1e-6), self.options.mode);
        Ok(assemble(&gen, &self.block_tree, opts)?)
    }
}

/// Solves for the gradient stored in `problem`.
pub fn solve_bie(problem: &BieProblem, options: BemOptions) -> Result<(BieSolution, CompressionStats), BemError> {
    let system = BemSystem::build(problem, options)?;
    let start = Instant::now();
    let sol = system.solve(problem.e)?;
    let mut stats = system.stats.clone();
    stats.times.solve_s = start.elapsed().as_secs_f64();
    Ok((sol, stats))
}

/// Column `j`: `κe e_j + (κi − κe)/|Ω| (|Ω_int| e_j + ∫_Γ u⁽ʲ⁾ n)`, with
/// `u⁽ʲ⁾ = Vσ⁽ʲ⁾` at the centroids.
pub fn effective_estimate_bem(system: &BemSystem, sigmas: &[DensityField; 3]) -> Result<EffectiveEstimate, BemError> {
    let p = &system.problem;
    let m = &p.mesh;
    for s in sigmas {
        if s.len() != m.len() {
            return Err(BemError::DensityLength {
                expected: m.len(),
                got: s.len(),
            });
        }
    }
    let v = system.single_layer()?;
    let vol_int = p.enclosed_volume();
    let mut k = Matrix3::identity() * p.kappa_ext;
    for (j, s) in sigmas.iter().enumerate() {
        let u = v.matvec(&s.sigma)?;
        let mut flux = Vec3::zeros();
        for i in 0..m.len() {
            flux += m.normals[i] * (u[i] * m.areas[i]);
        }
        let mut col = flux;
        col[j] += vol_int;
        let col = col * ((p.kappa_int - p.kappa_ext) / p.cell_volume);
        for r in 0..3 {
            k[(r, j)] += col[r];
        }
    }
    Ok(EffectiveEstimate::from_tensor(k, vol_int / p.cell_volume))
}

/// Three directional solves and the resulting estimate.
pub fn effective_tensor_bem(system: &BemSystem) -> Result<(EffectiveEstimate, [BieSolution; 3]), BemError> {
    let s0 = system.solve(Vec3::x())?;
    let s1 = system.solve(Vec3::y())?;
    let s2 = system.solve(Vec3::z())?;
    let sigmas = [s0.density.clone(), s1.density.clone(), s2.density.clone()];
    Ok((effective_estimate_bem(system, &sigmas)?, [s0, s1, s2]))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BemResults {
    pub kernel: String,
    pub panels: usize,
    pub keff: [[f64; 3]; 3],
    pub keff_scalar: f64,
    pub volume_fraction: f64,
    pub iterations: [usize; 3],
    pub stats: CompressionStats,
}

impl BemResults {
    pub fn new(system: &BemSystem, estimate: &EffectiveEstimate, solutions: &[BieSolution; 3]) -> Self {
        Self {
            kernel: system.problem.kernel.name().to_string(),
            panels: system.problem.len(),
            keff: estimate.rows(),
            keff_scalar: estimate.scalar,
            volume_fraction: estimate.volume_fraction,
            iterations: [
                solutions[0].report.iterations,
                solutions[1].report.iterations,
                solutions[2].report.iterations,
            ],
            stats: system.stats.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bem::{sphere_density_constant, Kernel};
    use crate::eim::maxwell_garnett;
    use crate::microstructure::{icosphere_mesh, Sphere};

    fn sphere(level: u32, r: f64, ki: f64, ke: f64) -> BieProblem {
        let mesh = icosphere_mesh(&Sphere::new(Vec3::zeros(), r, ki), level);
        BieProblem::new(mesh, ki, ke, Vec3::new(0.3, -0.4, 0.5), Kernel::FreeSpace).unwrap()
    }

    #[test]
    fn single_sphere_density_constant() {
        let p = sphere(3, 1.0, 100.0, 1.0);
        let (sol, _) = solve_bie(&p, BemOptions::default()).unwrap();
        let c = sphere_density_constant(100.0, 1.0);
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, n) in p.mesh.normals.iter().enumerate() {
            let en = p.e.dot(n);
            num += sol.density.sigma[i] * en * p.mesh.areas[i];
            den += en * en * p.mesh.areas[i];
        }
        let fitted = num / den;
        assert!((fitted / c - 1.0).abs() < 0.03, "{fitted} vs {c}");
    }

    #[test]
    fn weak_contrast_gives_small_density() {
        let mut prev = f64::INFINITY;
        for dk in [1e-1, 1e-3, 1e-5] {
            let p = sphere(2, 1.0, 1.0 + dk, 1.0);
            let (sol, _) = solve_bie(&p, BemOptions::default()).unwrap();
            let norm = sol.density.sigma.iter().map(|s| s * s).sum::<f64>().sqrt();
            assert!(norm < prev);
            prev = norm;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn reuse_assembly_across_contrasts() {
        let p = sphere(2, 1.0, 10.0, 1.0);
        let system = BemSystem::build(&p, BemOptions::default()).unwrap();
        let a = system.solve(p.e).unwrap();
        let system = system.with_contrast(100.0, 1.0).unwrap();
        let b = system.solve(p.e).unwrap();
        assert_ne!(a.density, b.density);
        assert!(system.with_contrast(1.0, 1.0).is_err());
    }

    #[test]
    fn dilute_free_space_estimate() {
        let f: f64 = 0.01;
        let r = (3.0 * f / (4.0 * std::f64::consts::PI)).cbrt();
        let p = sphere(3, r, 10.0, 1.0);
        let system = BemSystem::build(&p, BemOptions::default()).unwrap();
        let (k, _) = effective_tensor_bem(&system).unwrap();
        let mg = maxwell_garnett(f, 1.0, 10.0);
        assert!((k.scalar / mg - 1.0).abs() < 0.02, "{} vs {mg}", k.scalar);
        assert!((k.tensor - k.tensor.transpose()).norm() < 1e-12);
    }

    #[test]
    fn results_json() {
        let p = sphere(1, 0.2, 5.0, 1.0);
        let system = BemSystem::build(&p, BemOptions::default()).unwrap();
        let (k, sols) = effective_tensor_bem(&system).unwrap();
        let v: serde_json::Value = serde_json::from_str(&BemResults::new(&system, &k, &sols).to_json()).unwrap();
        assert_eq!(v["kernel"], "free");
        assert_eq!(v["panels"], 80);
        assert!(v["stats"]["stored"].is_number());
    }
}
