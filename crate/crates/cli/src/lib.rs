//! Batch driver behind the `hmhomog` binary. Each subcommand is a plain
//! function of a resolved [`RunConfig`] so the tests can call it directly.

pub mod config;

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use hmhomog::bem::{
    effective_tensor_bem, eval_corrector, field_csv, slice_grid, sphere_density_constant, BemError, BemResults,
    BemSystem, BieProblem, Kernel,
};
use hmhomog::eim::{effective_tensor, EimError, EimProblem, EimResults, EimSystem};
use hmhomog::hmatrix::CompressionStats;
use hmhomog::microstructure::{generate_rsa_with, icosphere_mesh, GeometryError, Microstructure, RsaOptions, Sphere, TriangleMesh};
use hmhomog::pergreen::{convergence_study, fit_expansion, PgError, Variant};
use hmhomog::Vec3;

pub use config::{DomainKind, KernelChoice, Overrides, RunConfig};

/// Caps the rayon pool when set to a positive integer.
pub const THREADS_ENV: &str = "HMHOMOG_THREADS";

pub const EIM_STATS_HEADER: &str =
    "epsilon,eta,n,stored,dense,ratio,max_rank,mean_rank,iterations,residual,keff,assembly_s,lu_s,solve_s";
pub const ETA_SWEEP_HEADER: &str = "eta,n,stored,dense,ratio,lowrank_leaves,dense_leaves,max_rank,assembly_s";
pub const SCALING_HEADER: &str = "n,stored,dense,ratio,max_rank,mean_rank,iterations,assembly_s,lu_s,solve_s";
pub const GREEN_HEADER: &str = "L,variant,q,residual,value_defect,flux_defect,defect";
pub const BEM_STATS_HEADER: &str = "kernel,panels,stored,dense,ratio,max_rank,mean_rank,iterations,keff,assembly_s,solve_s";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("generation failure: {0}")]
    Generation(#[source] GeometryError),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Solver(_) => 3,
            CliError::Generation(_) => 4,
        }
    }
}

impl From<EimError> for CliError {
    fn from(e: EimError) -> Self {
        match e {
            EimError::NotBall | EimError::Geometry(_) => CliError::Config(e.to_string()),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<BemError> for CliError {
    fn from(e: BemError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<PgError> for CliError {
    fn from(e: PgError) -> Self {
        CliError::Solver(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "hmhomog", version, about = "H-matrix homogenization of particulate composites")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Place non-overlapping spheres by random sequential addition.
    Generate,
    /// Equivalent inclusion method on a ball.
    Eim {
        /// Repeat the run for each tolerance, one stats row per value.
        #[arg(long, value_delimiter = ',')]
        eps_sweep: Option<Vec<f64>>,
    },
    /// Parameter sweeps.
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
        /// Values of η for `eta-sweep`.
        #[arg(long, value_delimiter = ',')]
        etas: Option<Vec<f64>>,
        /// Inclusion counts for `scaling`.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Degrees for `green-convergence`.
        #[arg(long, value_delimiter = ',')]
        degrees: Option<Vec<usize>>,
        /// Fit without the neighbouring images.
        #[arg(long)]
        plain: bool,
    },
    /// Boundary integral solve on a meshed microstructure.
    Bem {
        /// Solve the single unit sphere and compare with the analytic density.
        #[arg(long)]
        validate_sphere: bool,
        /// Axis normal to the corrector slice (0, 1 or 2).
        #[arg(long, default_value_t = 2)]
        slice_axis: usize,
        #[arg(long, default_value_t = 0.0)]
        slice_offset: f64,
        /// Slice grid points per side.
        #[arg(long, default_value_t = 32)]
        grid: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyKind {
    EtaSweep,
    Scaling,
    GreenConvergence,
}

/// Installs the global thread pool size from [`THREADS_ENV`].
pub fn apply_thread_cap() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    // A pool may already exist in tests; the cap then simply does not apply.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.overrides)?;
    match &cli.command {
        Command::Generate => cmd_generate(&cfg).map(|_| ()),
        Command::Eim { eps_sweep } => cmd_eim(&cfg, eps_sweep.as_deref()).map(|_| ()),
        Command::Study {
            kind,
            etas,
            sizes,
            degrees,
            plain,
        } => {
            let variant = if *plain { Variant::Plain } else { Variant::ImageCorrected };
            cmd_study(&cfg, *kind, etas.as_deref(), sizes.as_deref(), degrees.as_deref(), variant).map(|_| ())
        }
        Command::Bem {
            validate_sphere,
            slice_axis,
            slice_offset,
            grid,
        } => {
            if *validate_sphere {
                let (fitted, exact) = validate_sphere_density(&cfg)?;
                println!(
                    "sphere validation: density constant {fitted:.6} vs analytic {exact:.6}, relative error {:.3e}",
                    (fitted / exact - 1.0).abs()
                );
                return Ok(());
            }
            cmd_bem(&cfg, *slice_axis, *slice_offset, *grid).map(|_| ())
        }
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes to `path` when given, stdout otherwise.
fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Generated microstructure, deterministic in the config.
pub fn generate(cfg: &RunConfig, count: usize) -> Result<Microstructure, CliError> {
    let sized = RunConfig { count, ..cfg.clone() };
    let opts = RsaOptions {
        count,
        radius: sized.sphere_radius(),
        seed: cfg.seed,
        max_attempts: cfg.max_attempts,
        kappa_matrix: cfg.kappa_matrix,
        kappa_inclusion: cfg.kappa_inclusion,
        ..RsaOptions::default()
    };
    generate_rsa_with(cfg.domain(), &opts).map_err(|e| match e {
        GeometryError::PlacementFailure { .. } => CliError::Generation(e),
        other => CliError::Config(other.to_string()),
    })
}

/// The input file if configured, else a generated microstructure.
pub fn load_microstructure(cfg: &RunConfig) -> Result<Microstructure, CliError> {
    match &cfg.input {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Microstructure::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
        None => generate(cfg, cfg.count),
    }
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<Microstructure, CliError> {
    let ms = generate(cfg, cfg.count)?;
    emit(cfg.out.as_deref(), &ms.to_json())?;
    log::info!("{} spheres, volume fraction {:.4}", ms.len(), ms.volume_fraction());
    Ok(ms)
}

fn eim_stats_row(eps: f64, eta: f64, stats: &CompressionStats, iterations: usize, residual: f64, keff: f64) -> String {
    format!(
        "{eps},{eta},{},{},{},{},{},{},{iterations},{residual},{keff},{},{},{}",
        stats.n,
        stats.stored,
        stats.dense,
        stats.ratio,
        stats.ranks.max,
        stats.ranks.mean,
        stats.times.assembly_s,
        stats.times.lu_s,
        stats.times.solve_s
    )
}

/// Full EIM pipeline. Returns the results of the last tolerance and the
/// stats CSV.
pub fn cmd_eim(cfg: &RunConfig, eps_sweep: Option<&[f64]>) -> Result<(EimResults, String), CliError> {
    let ms = load_microstructure(cfg)?;
    let problem = EimProblem::new(ms, cfg.field())?;
    let eps_list = eps_sweep.map(<[f64]>::to_vec).unwrap_or_else(|| vec![cfg.epsilon]);
    if eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(CliError::Config("sweep tolerances must be positive".into()));
    }
    let mut csv = format!("{EIM_STATS_HEADER}\n");
    let mut last = None;
    for &eps in &eps_list {
        let solver = RunConfig { epsilon: eps, ..cfg.clone() }.solver();
        let system = EimSystem::build(&problem, solver)?;
        let start = Instant::now();
        let main = system.solve(problem.e)?;
        let (estimate, _) = effective_tensor(&system)?;
        let mut stats = system.stats.clone();
        stats.times.solve_s = start.elapsed().as_secs_f64();
        csv.push_str(&eim_stats_row(
            eps,
            solver.eta,
            &stats,
            main.report.iterations,
            main.report.residual,
            estimate.scalar,
        ));
        csv.push('\n');
        log::info!("ε={eps:e}: ratio {:.4}, {} iterations", stats.ratio, main.report.iterations);
        last = Some(EimResults::new(&main.tau, &estimate, main.report.iterations, stats));
    }
    let results = last.expect("at least one tolerance");
    emit(cfg.out.as_deref(), &results.to_json())?;
    if let Some(p) = &cfg.stats {
        write(p, &csv)?;
    }
    Ok((results, csv))
}

pub fn cmd_study(
    cfg: &RunConfig,
    kind: StudyKind,
    etas: Option<&[f64]>,
    sizes: Option<&[usize]>,
    degrees: Option<&[usize]>,
    variant: Variant,
) -> Result<String, CliError> {
    let csv = match kind {
        StudyKind::EtaSweep => {
            let etas = etas.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.5, 0.8, 1.1, 1.4, 1.7, 2.0, 2.6]);
            eta_sweep(cfg, &etas)?
        }
        StudyKind::Scaling => {
            let sizes = sizes.map(<[usize]>::to_vec).unwrap_or_else(|| vec![200, 500, 1000, 2000]);
            scaling(cfg, &sizes)?
        }
        StudyKind::GreenConvergence => {
            let degrees = degrees.map(<[usize]>::to_vec).unwrap_or_else(|| (2..=9).collect());
            green_convergence(&degrees, variant)?
        }
    };
    emit(cfg.out.as_deref(), &csv)?;
    Ok(csv)
}

fn eta_sweep(cfg: &RunConfig, etas: &[f64]) -> Result<String, CliError> {
    if etas.iter().any(|e| !(*e > 0.0)) {
        return Err(CliError::Config("η values must be positive".into()));
    }
    let problem = EimProblem::new(load_microstructure(cfg)?, cfg.field())?;
    let mut csv = format!("{ETA_SWEEP_HEADER}\n");
    for &eta in etas {
        let solver = RunConfig {
            eta,
            precondition: false,
            ..cfg.clone()
        }
        .solver();
        let s = EimSystem::build(&problem, solver)?.stats;
        let _ = writeln!(
            csv,
            "{eta},{},{},{},{},{},{},{},{}",
            s.n, s.stored, s.dense, s.ratio, s.lowrank_leaves, s.dense_leaves, s.ranks.max, s.times.assembly_s
        );
    }
    Ok(csv)
}

fn scaling(cfg: &RunConfig, sizes: &[usize]) -> Result<String, CliError> {
    let mut csv = format!("{SCALING_HEADER}\n");
    let mut points = Vec::new();
    for &n in sizes {
        let problem = EimProblem::new(generate(cfg, n)?, cfg.field())?;
        let system = EimSystem::build(&problem, cfg.solver())?;
        let sol = system.solve(problem.e)?;
        let s = &system.stats;
        let _ = writeln!(
            csv,
            "{n},{},{},{},{},{},{},{},{},{}",
            s.stored, s.dense, s.ratio, s.ranks.max, s.ranks.mean, sol.report.iterations, s.times.assembly_s, s.times.lu_s, sol.report.seconds
        );
        points.push((n as f64, s.stored as f64));
    }
    if points.len() >= 2 {
        log::info!("storage exponent {:.3}", loglog_slope(&points));
    }
    Ok(csv)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x.ln() / n, b + y.ln() / n));
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        let dx = x.ln() - mx;
        (a + dx * (y.ln() - my), b + dx * dx)
    });
    sxy / sxx
}

fn green_convergence(degrees: &[usize], variant: Variant) -> Result<String, CliError> {
    let variant_name = match variant {
        Variant::Plain => "plain",
        Variant::ImageCorrected => "image-corrected",
    };
    let mut csv = format!("{GREEN_HEADER}\n");
    for r in convergence_study(degrees, variant)? {
        let _ = writeln!(
            csv,
            "{},{variant_name},{},{},{},{},{}",
            r.degree, r.q, r.residual, r.value_defect, r.flux_defect, r.defect
        );
    }
    Ok(csv)
}

fn uniform_inclusion_kappa(ms: &Microstructure) -> Result<f64, CliError> {
    let k = ms.spheres.first().map(|s| s.kappa).ok_or_else(|| CliError::Config("microstructure has no inclusions".into()))?;
    if ms.spheres.iter().any(|s| s.kappa != k) {
        return Err(CliError::Config("the boundary solver needs one inclusion coefficient".into()));
    }
    Ok(k)
}

/// One BEM run per selected kernel: JSON results, stats CSV, and the slice
/// of the corrector for the first kernel when requested.
pub fn cmd_bem(cfg: &RunConfig, slice_axis: usize, slice_offset: f64, grid: usize) -> Result<(Vec<BemResults>, String), CliError> {
    if slice_axis > 2 || grid == 0 {
        return Err(CliError::Config("slice axis must be 0, 1 or 2 and the grid nonempty".into()));
    }
    let ms = load_microstructure(cfg)?;
    let kappa_int = uniform_inclusion_kappa(&ms)?;
    let kernels: Vec<Kernel> = match cfg.kernel {
        KernelChoice::Free => vec![Kernel::FreeSpace],
        KernelChoice::Periodic | KernelChoice::Both => {
            if !ms.domain.is_periodic() {
                return Err(CliError::Config("the periodic kernel needs a periodic domain".into()));
            }
            let (exp, report) = fit_expansion(cfg.degree, None, Variant::ImageCorrected)?;
            log::info!("periodic Green fit L={} defect {:.3e}", cfg.degree, report.defect);
            let periodic = Kernel::Periodic(Arc::new(exp));
            if cfg.kernel == KernelChoice::Both {
                vec![Kernel::FreeSpace, periodic]
            } else {
                vec![periodic]
            }
        }
    };
    let mesh = TriangleMesh::from_microstructure(&ms, cfg.level);
    let mut csv = format!("{BEM_STATS_HEADER}\n");
    let mut all = Vec::new();
    for (k, kernel) in kernels.into_iter().enumerate() {
        let problem = BieProblem::new(mesh.clone(), kappa_int, ms.kappa_matrix, cfg.field(), kernel)?;
        let system = BemSystem::build(&problem, cfg.bem())?;
        let start = Instant::now();
        let (estimate, solutions) = effective_tensor_bem(&system)?;
        let solve_s = start.elapsed().as_secs_f64();
        let s = &system.stats;
        let iterations = solutions.iter().map(|x| x.report.iterations).max().unwrap_or(0);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{iterations},{},{},{solve_s}",
            problem.kernel.name(),
            problem.len(),
            s.stored,
            s.dense,
            s.ratio,
            s.ranks.max,
            s.ranks.mean,
            estimate.scalar,
            s.times.assembly_s
        );
        if k == 0 {
            if let Some(path) = &cfg.field_out {
                // Corrector for the configured gradient, by linearity.
                let e = cfg.field();
                let mut sigma = solutions[0].density.clone();
                for (j, s) in sigma.sigma.iter_mut().enumerate() {
                    *s = e.x * *s + e.y * solutions[1].density.sigma[j] + e.z * solutions[2].density.sigma[j];
                }
                let points = slice_grid(slice_axis, slice_offset, grid);
                let field = eval_corrector(&problem, &sigma, &points)?;
                if !field.flagged.is_empty() {
                    log::warn!("{} slice points lie within a panel diameter of the surface", field.flagged.len());
                }
                write(path, &field_csv(&points, &field.values))?;
            }
        }
        all.push(BemResults::new(&system, &estimate, &solutions));
    }
    let json = if all.len() == 1 {
        all[0].to_json()
    } else {
        serde_json::to_string_pretty(&all).expect("results serialise")
    };
    emit(cfg.out.as_deref(), &json)?;
    if let Some(p) = &cfg.stats {
        write(p, &csv)?;
    }
    Ok((all, csv))
}

/// Least-squares constant `c` in `σ ≈ c E·n` on the unit sphere and the
/// analytic value.
pub fn validate_sphere_density(cfg: &RunConfig) -> Result<(f64, f64), CliError> {
    let mesh = icosphere_mesh(&Sphere::new(Vec3::zeros(), 1.0, cfg.kappa_inclusion), cfg.level);
    let problem = BieProblem::new(mesh, cfg.kappa_inclusion, cfg.kappa_matrix, cfg.field(), Kernel::FreeSpace)?;
    let sol = BemSystem::build(&problem, cfg.bem())?.solve(problem.e)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, n) in problem.mesh.normals.iter().enumerate() {
        let en = problem.e.dot(n);
        num += sol.density.sigma[i] * en * problem.mesh.areas[i];
        den += en * en * problem.mesh.areas[i];
    }
    Ok((num / den, sphere_density_constant(cfg.kappa_inclusion, cfg.kappa_matrix)))
}
