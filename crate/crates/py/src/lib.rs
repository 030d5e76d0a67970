//! Python module `hmhomog`: microstructures, the two solvers and the
//! periodic Green function.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hmhomog::bem::{effective_tensor_bem, BemOptions, BemResults, BemSystem, BieProblem, Kernel};
use hmhomog::eim::{self, effective_tensor, EimProblem, EimResults, EimSystem, SolverConfig};
use hmhomog::microstructure::{self as ms, Domain, RsaOptions, TriangleMesh};
use hmhomog::pergreen::{self, Variant};
use hmhomog::Vec3;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn vec3(v: (f64, f64, f64)) -> Vec3 {
    Vec3::new(v.0, v.1, v.2)
}

fn parse_domain(kind: &str, ball_radius: f64) -> PyResult<Domain> {
    match kind {
        "ball" => Ok(Domain::Ball { radius: ball_radius }),
        "periodic" => Ok(Domain::PeriodicCube),
        other => Err(PyValueError::new_err(format!("unknown domain {other:?}; expected 'ball' or 'periodic'"))),
    }
}

/// Spheres in a ball or in the periodic unit cell.
#[pyclass(frozen, skip_from_py_object, name = "Microstructure")]
#[derive(Clone)]
struct PyMicrostructure {
    inner: ms::Microstructure,
}

#[pymethods]
impl PyMicrostructure {
    /// Random sequential addition of `count` equal spheres.
    #[staticmethod]
    #[pyo3(signature = (count, radius, seed = 0, domain = "ball", ball_radius = 1.0, kappa_matrix = 1.0, kappa_inclusion = 100.0))]
    fn generate(
        count: usize,
        radius: f64,
        seed: u64,
        domain: &str,
        ball_radius: f64,
        kappa_matrix: f64,
        kappa_inclusion: f64,
    ) -> PyResult<Self> {
        let opts = RsaOptions {
            count,
            radius,
            seed,
            kappa_matrix,
            kappa_inclusion,
            ..RsaOptions::default()
        };
        let inner = ms::generate_rsa_with(parse_domain(domain, ball_radius)?, &opts).map_err(runtime_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ms::Microstructure::from_json(text).map(|inner| Self { inner }).map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn volume_fraction(&self) -> f64 {
        self.inner.volume_fraction()
    }

    fn centers(&self) -> Vec<(f64, f64, f64)> {
        self.inner.spheres.iter().map(|s| (s.center.x, s.center.y, s.center.z)).collect()
    }

    fn radii(&self) -> Vec<f64> {
        self.inner.spheres.iter().map(|s| s.radius).collect()
    }

    fn is_periodic(&self) -> bool {
        self.inner.domain.is_periodic()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Microstructure({} spheres, f={:.4}, periodic={})",
            self.inner.len(),
            self.inner.volume_fraction(),
            self.inner.domain.is_periodic()
        )
    }
}

/// Effective tensor and solver statistics of one run.
#[pyclass(frozen, get_all, name = "Results")]
struct PyResults {
    keff: [[f64; 3]; 3],
    keff_scalar: f64,
    volume_fraction: f64,
    compression_ratio: f64,
    stored: usize,
    /// Full results document.
    json: String,
}

#[pymethods]
impl PyResults {
    fn __repr__(&self) -> String {
        format!(
            "Results(keff_scalar={:.6}, f={:.4}, compression_ratio={:.4})",
            self.keff_scalar, self.volume_fraction, self.compression_ratio
        )
    }
}

/// Equivalent inclusion method on a ball microstructure.
#[pyfunction]
#[pyo3(signature = (microstructure, epsilon = 1e-3, eta = 1.7, tol = 1e-10, field = (1.0, 0.0, 0.0)))]
fn solve_eim(microstructure: &PyMicrostructure, epsilon: f64, eta: f64, tol: f64, field: (f64, f64, f64)) -> PyResult<PyResults> {
    let problem = EimProblem::new(microstructure.inner.clone(), vec3(field)).map_err(value_err)?;
    let config = SolverConfig {
        epsilon,
        eta,
        tol,
        ..SolverConfig::default()
    };
    let system = EimSystem::build(&problem, config).map_err(runtime_err)?;
    let (estimate, sols) = effective_tensor(&system).map_err(runtime_err)?;
    let main = system.solve(problem.e).map_err(runtime_err)?;
    let res = EimResults::new(&main.tau, &estimate, sols[0].report.iterations, system.stats.clone());
    Ok(PyResults {
        keff: res.keff,
        keff_scalar: res.keff_scalar,
        volume_fraction: res.volume_fraction,
        compression_ratio: res.stats.ratio,
        stored: res.stats.stored,
        json: res.to_json(),
    })
}

/// Boundary integral solve on the icosphere mesh of `microstructure`.
#[pyfunction]
#[pyo3(signature = (microstructure, level = 2, kernel = "periodic", degree = 9, epsilon = 1e-3, field = (1.0, 0.0, 0.0)))]
fn solve_bem(
    microstructure: &PyMicrostructure,
    level: u32,
    kernel: &str,
    degree: usize,
    epsilon: f64,
    field: (f64, f64, f64),
) -> PyResult<PyResults> {
    let m = &microstructure.inner;
    let kappa_int = m.spheres.first().map(|s| s.kappa).ok_or_else(|| PyValueError::new_err("no inclusions"))?;
    let kernel = match kernel {
        "free" => Kernel::FreeSpace,
        "periodic" => {
            let (exp, _) = pergreen::fit_expansion(degree, None, Variant::ImageCorrected).map_err(runtime_err)?;
            Kernel::Periodic(Arc::new(exp))
        }
        other => return Err(PyValueError::new_err(format!("unknown kernel {other:?}; expected 'free' or 'periodic'"))),
    };
    let mesh = TriangleMesh::from_microstructure(m, level);
    let problem = BieProblem::new(mesh, kappa_int, m.kappa_matrix, vec3(field), kernel).map_err(value_err)?;
    let options = BemOptions {
        epsilon,
        ..BemOptions::default()
    };
    let system = BemSystem::build(&problem, options).map_err(runtime_err)?;
    let (estimate, sols) = effective_tensor_bem(&system).map_err(runtime_err)?;
    let res = BemResults::new(&system, &estimate, &sols);
    Ok(PyResults {
        keff: res.keff,
        keff_scalar: res.keff_scalar,
        volume_fraction: res.volume_fraction,
        compression_ratio: res.stats.ratio,
        stored: res.stats.stored,
        json: res.to_json(),
    })
}

/// Least-squares fitted periodic Green function of the unit cell.
#[pyclass(frozen, name = "PeriodicGreen")]
struct PyPeriodicGreen {
    inner: pergreen::PeriodicGreenExpansion,
    #[pyo3(get)]
    defect: f64,
}

#[pymethods]
impl PyPeriodicGreen {
    #[new]
    #[pyo3(signature = (degree = 9, images = true))]
    fn new(degree: usize, images: bool) -> PyResult<Self> {
        let variant = if images { Variant::ImageCorrected } else { Variant::Plain };
        let (inner, report) = pergreen::fit_expansion(degree, None, variant).map_err(value_err)?;
        Ok(Self {
            inner,
            defect: report.defect,
        })
    }

    fn __call__(&self, x: (f64, f64, f64)) -> PyResult<f64> {
        self.inner.eval(&vec3(x)).map_err(value_err)
    }

    fn grad(&self, x: (f64, f64, f64)) -> PyResult<(f64, f64, f64)> {
        let g = self.inner.grad(&vec3(x)).map_err(value_err)?;
        Ok((g.x, g.y, g.z))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

/// Dilute-limit effective coefficient.
#[pyfunction]
fn maxwell_garnett(f: f64, kappa0: f64, kappa1: f64) -> f64 {
    eim::maxwell_garnett(f, kappa0, kappa1)
}

#[pymodule]
#[pyo3(name = "hmhomog")]
fn hmhomog_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMicrostructure>()?;
    m.add_class::<PyResults>()?;
    m.add_class::<PyPeriodicGreen>()?;
    m.add_function(wrap_pyfunction!(solve_eim, m)?)?;
    m.add_function(wrap_pyfunction!(solve_bem, m)?)?;
    m.add_function(wrap_pyfunction!(maxwell_garnett, m)?)?;
    Ok(())
}
