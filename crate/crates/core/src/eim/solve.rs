use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{assemble_dense, effective_estimate, eim_generator, EffectiveEstimate, EimError, EimProblem};
use crate::geometry::Vec3;
use crate::hmatrix::{
    assemble, build_block_tree, default_lu_tolerance, gmres, h_lu, pcg, AcaMode, Admissibility, AssemblyOptions,
    ClusterTree, CompressionStats, HLu, HMatrix, IdentityPreconditioner, Preconditioner, SolveReport, SolverError,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub eta: f64,
    pub c_leaf: usize,
    pub mode: AcaMode,
    /// H-LU truncation; `None` means `max(ε, 1e-2)`.
    pub epsilon_lu: Option<f64>,
    pub precondition: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            eta: 1.7,
            c_leaf: 15,
            mode: AcaMode::Partial,
            epsilon_lu: None,
            precondition: true,
            tol: 1e-10,
            max_iter: 1000,
            restart: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KrylovMethod {
    Cg,
    Gmres,
}

#[derive(Debug, Clone)]
pub struct EimSolution {
    /// One polarization vector per inclusion.
    pub tau: Vec<Vec3>,
    pub report: SolveReport,
    pub method: KrylovMethod,
}

/// Compressed EIM operator with its preconditioner, reusable across
/// right-hand sides.
pub struct EimSystem {
    pub problem: EimProblem,
    pub config: SolverConfig,
    pub hmatrix: HMatrix,
    pub lu: Option<HLu>,
    pub stats: CompressionStats,
}

impl EimSystem {
    pub fn build(problem: &EimProblem, config: SolverConfig) -> Result<Self, EimError> {
        problem.validate()?;
        if problem.is_empty() {
            return Err(EimError::HMatrix(crate::hmatrix::HError::EmptyInput));
        }
        let gen = eim_generator(problem);
        let centers = problem.microstructure.centers();
        let ct = ClusterTree::build(&centers, config.c_leaf, 3)?;
        let bt = build_block_tree(&ct, Admissibility::new(config.eta));
        let hmatrix = assemble(&gen, &bt, AssemblyOptions::new(config.epsilon, config.mode))?;
        let mut stats = hmatrix.stats();
        let lu = if config.precondition {
            let eps_lu = config.epsilon_lu.unwrap_or_else(|| default_lu_tolerance(config.epsilon));
            match h_lu(&hmatrix, eps_lu) {
                Ok(lu) => {
                    stats.times.lu_s = lu.seconds;
                    Some(lu)
                }
                Err(e) => {
                    log::warn!("H-LU failed ({e}); solving without preconditioner");
                    None
                }
            }
        } else {
            None
        };
        Ok(Self {
            problem: problem.clone(),
            config,
            hmatrix,
            lu,
            stats,
        })
    }

    /// Solves for the polarization under the macroscopic gradient `e`.
    /// CG is tried first; a curvature breakdown switches to GMRES.
    pub fn solve(&self, e: Vec3) -> Result<EimSolution, EimError> {
        let b = self.problem.with_gradient(e).rhs();
        let precond: &dyn Preconditioner = match &self.lu {
            Some(lu) => lu,
            None => &IdentityPreconditioner,
        };
        let cfg = &self.config;
        let (sol, method) = match pcg(&self.hmatrix, precond, &b, cfg.tol, cfg.max_iter) {
            Ok(s) => (s, KrylovMethod::Cg),
            Err(SolverError::Breakdown { iteration, curvature }) => {
                log::info!("CG breakdown at iteration {iteration} (curvature {curvature:e}); switching to GMRES");
                (gmres(&self.hmatrix, precond, &b, cfg.tol, cfg.restart, cfg.max_iter)?, KrylovMethod::Gmres)
            }
            Err(e) => return Err(e.into()),
        };
        if !sol.report.converged {
            return Err(EimError::NotConverged(Box::new(sol.report)));
        }
        Ok(EimSolution {
            tau: to_vectors(&sol.x),
            report: sol.report,
            method,
        })
    }
}

fn to_vectors(x: &[f64]) -> Vec<Vec3> {
    x.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

/// Full pipeline for the gradient stored in `problem`: H-matrix assembly,
/// H-LU preconditioner, Krylov solve.
pub fn solve_eim(problem: &EimProblem, config: SolverConfig) -> Result<(EimSolution, CompressionStats), EimError> {
    if problem.is_empty() {
        problem.validate()?;
        let report = SolveReport {
            iterations: 0,
            converged: true,
            residual: 0.0,
            history: Vec::new(),
            seconds: 0.0,
        };
        let stats = HMatrix::from_dense(nalgebra::DMatrix::zeros(0, 0)).stats();
        return Ok((
            EimSolution {
                tau: Vec::new(),
                report,
                method: KrylovMethod::Cg,
            },
            stats,
        ));
    }
    let system = EimSystem::build(problem, config)?;
    let start = Instant::now();
    let sol = system.solve(problem.e)?;
    let mut stats = system.stats.clone();
    stats.times.solve_s = start.elapsed().as_secs_f64();
    Ok((sol, stats))
}

/// Dense direct solve (LU), used as a reference.
pub fn solve_dense(problem: &EimProblem) -> Result<Vec<Vec3>, EimError> {
    problem.validate()?;
    let a = assemble_dense(problem)?;
    let b = DVector::from_vec(problem.rhs());
    let x = a.lu().solve(&b).ok_or(EimError::HMatrix(crate::hmatrix::HError::NearZeroPivot {
        index: 0,
        value: 0.0,
    }))?;
    Ok(to_vectors(x.as_slice()))
}

/// Effective tensor from three solves (E = e₁, e₂, e₃) on one assembled
/// operator.
pub fn effective_tensor(system: &EimSystem) -> Result<(EffectiveEstimate, [EimSolution; 3]), EimError> {
    let start = Instant::now();
    let s0 = system.solve(Vec3::x())?;
    let s1 = system.solve(Vec3::y())?;
    let s2 = system.solve(Vec3::z())?;
    log::debug!("three directional solves in {:.3}s", start.elapsed().as_secs_f64());
    let taus = [s0.tau.clone(), s1.tau.clone(), s2.tau.clone()];
    Ok((effective_estimate(&system.problem, &taus), [s0, s1, s2]))
}

/// Serializable outcome of an EIM run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EimResults {
    pub tau: Vec<[f64; 3]>,
    pub keff: [[f64; 3]; 3],
    pub keff_scalar: f64,
    pub volume_fraction: f64,
    pub iterations: usize,
    pub stats: CompressionStats,
}

impl EimResults {
    pub fn new(tau: &[Vec3], estimate: &EffectiveEstimate, iterations: usize, stats: CompressionStats) -> Self {
        Self {
            tau: tau.iter().map(|t| [t.x, t.y, t.z]).collect(),
            keff: estimate.rows(),
            keff_scalar: estimate.scalar,
            volume_fraction: estimate.volume_fraction,
            iterations,
            stats,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eim::maxwell_garnett;
    use crate::microstructure::{Domain, Microstructure, Sphere};
    use std::f64::consts::PI;

    fn single(f: f64, k1: f64) -> EimProblem {
        let r = (f * 3.0 / (4.0 * PI)).cbrt();
        let ms = Microstructure::new(Domain::unit_volume_ball(), 1.0, vec![Sphere::new(Vec3::zeros(), r, k1)]).unwrap();
        EimProblem::new(ms, Vec3::new(1.0, -0.5, 2.0)).unwrap()
    }

    #[test]
    fn single_inclusion_closed_form() {
        let (f, k1) = (0.1, 100.0);
        let p = single(f, k1);
        let (sol, _) = solve_eim(&p, SolverConfig::default()).unwrap();
        let want = p.e / (1.0 / (k1 - 1.0) + (1.0 - f) / 3.0);
        assert!((sol.tau[0] - want).norm() <= 1e-10 * want.norm());
    }

    #[test]
    fn vanishing_contrast_gives_vanishing_polarization() {
        let mut prev = f64::INFINITY;
        for dk in [1e-1, 1e-3, 1e-5] {
            let tau = solve_dense(&single(0.05, 1.0 + dk)).unwrap()[0].norm();
            assert!(tau < prev);
            prev = tau;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn dilute_effective_estimate() {
        let p = single(0.001, 10.0);
        let system = EimSystem::build(&p, SolverConfig::default()).unwrap();
        let (k, _) = effective_tensor(&system).unwrap();
        let mg = maxwell_garnett(0.001, 1.0, 10.0);
        assert!((k.scalar - mg).abs() < 1e-5);
        assert!((k.tensor - k.tensor.transpose()).norm() < 1e-12);
    }

    #[test]
    fn zero_contrast_limit_is_reference() {
        let p = single(0.05, 1.0 + 1e-9);
        let system = EimSystem::build(&p, SolverConfig::default()).unwrap();
        let (k, _) = effective_tensor(&system).unwrap();
        assert!((k.tensor - nalgebra::Matrix3::identity()).norm() < 1e-8);
    }

    #[test]
    fn results_json_shape() {
        let p = single(0.1, 100.0);
        let system = EimSystem::build(&p, SolverConfig::default()).unwrap();
        let (k, sols) = effective_tensor(&system).unwrap();
        let r = EimResults::new(&sols[0].tau, &k, sols[0].report.iterations, system.stats.clone());
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["tau"].as_array().unwrap().len(), 1);
        assert_eq!(v["keff"].as_array().unwrap().len(), 3);
        assert!(v["stats"]["ratio"].is_number());
    }
}
