mod common;

use common::*;
use hmhomog::eim::{assemble_dense, eim_generator, solve_dense, EimSystem, SolverConfig};
use hmhomog::hmatrix::{
    aca_full, assemble, h_lu, pcg, AcaMode, AssemblyOptions, BlockKind, EntryGenerator, HBlock, IdentityPreconditioner,
};
use hmhomog::Vec3;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    d / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

#[test]
fn hundred_inclusions_within_epsilon() {
    let p = eim_problem(100, 2);
    let dense = assemble_dense(&p).unwrap();
    let bt = eim_block_tree(&p, &SolverConfig::default());
    for mode in [AcaMode::Full, AcaMode::Partial] {
        let h = assemble(&eim_generator(&p), &bt, AssemblyOptions::new(1e-3, mode)).unwrap();
        assert!((&dense - h.to_dense()).norm() <= 1e-3 * dense.norm(), "{mode:?}");
    }
}

#[test]
fn smaller_epsilon_never_lowers_a_rank() {
    let p = eim_problem(300, 4);
    let bt = eim_block_tree(&p, &SolverConfig::default());
    let gen = eim_generator(&p);
    let mut grew = false;
    for b in bt.leaves().filter(|b| b.kind == BlockKind::Admissible) {
        let m = gen.block(&bt.clusters.dofs(b.row), &bt.clusters.dofs(b.col));
        let k = m.nrows().min(m.ncols());
        let (coarse, _) = aca_full(&m, 1e-2, k);
        let (fine, _) = aca_full(&m, 5e-4, k);
        assert!(coarse.rank() <= fine.rank());
        grew |= coarse.rank() < fine.rank();
    }
    assert!(grew);
}

#[test]
fn matvec_against_dense_product() {
    let p = eim_problem(300, 5);
    let dense = assemble_dense(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..dense.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ax = (&dense * DVector::from_column_slice(&x)).as_slice().to_vec();
    let bt = eim_block_tree(&p, &SolverConfig::default());
    for eps in [1e-2, 1e-3, 1e-4] {
        let h = assemble(&eim_generator(&p), &bt, AssemblyOptions::new(eps, AcaMode::Partial)).unwrap();
        let hx = h.matvec(&x).unwrap();
        assert!(rel(&hx, &ax) <= 5.0 * eps);
        let dx = (h.to_dense() * DVector::from_column_slice(&x)).as_slice().to_vec();
        assert!(rel(&hx, &dx) <= 1e-12);
    }
}

#[test]
fn pcg_reaches_tight_tolerance() {
    let p = eim_problem(200, 1);
    let cfg = SolverConfig {
        tol: 1e-12,
        ..SolverConfig::default()
    };
    let system = EimSystem::build(&p, cfg).unwrap();
    let sol = system.solve(p.e).unwrap();
    let x: Vec<f64> = sol.tau.iter().flat_map(|t| [t.x, t.y, t.z]).collect();
    let b = p.rhs();
    let hx = system.hmatrix.matvec(&x).unwrap();
    assert!(rel(&hx, &b) <= 1e-12);
    assert!(sol.report.residual <= 1e-12);

    let exact = solve_dense(&p).unwrap();
    let err: f64 = sol.tau.iter().zip(&exact).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt();
    let norm: f64 = exact.iter().map(|t| t.norm_squared()).sum::<f64>().sqrt();
    assert!(err / norm < 10.0 * cfg.epsilon);
}

#[test]
fn lu_preconditioner_cuts_iterations() {
    let p = eim_problem(200, 1);
    let bt = eim_block_tree(&p, &SolverConfig::default());
    let h = assemble(&eim_generator(&p), &bt, AssemblyOptions::new(1e-3, AcaMode::Partial)).unwrap();
    let b = p.rhs();
    let plain = pcg(&h, &IdentityPreconditioner, &b, 1e-10, 2000).unwrap();
    let lu = h_lu(&h, 1e-2).unwrap();
    let pre = pcg(&h, &lu, &b, 1e-10, 2000).unwrap();
    assert!(plain.report.converged && pre.report.converged);
    assert!(pre.report.iterations < plain.report.iterations, "{} vs {}", pre.report.iterations, plain.report.iterations);

    let exact = h_lu(&h, 1e-14).unwrap();
    let tight = pcg(&h, &exact, &b, 1e-10, 50).unwrap();
    assert!(tight.report.iterations <= 3, "{}", tight.report.iterations);
}

#[test]
fn exact_lu_reproduces_small_matrix() {
    let p = eim_problem(40, 9);
    let bt = eim_block_tree(&p, &SolverConfig::default());
    let h = assemble(&eim_generator(&p), &bt, AssemblyOptions::new(0.0, AcaMode::Full)).unwrap();
    let lu = h_lu(&h, 0.0).unwrap();
    let (l, u) = lu.dense_factors();
    let a = h.root.to_dense();
    assert!((&l * &u - &a).norm() <= 1e-10 * a.norm());
}

#[test]
fn all_dense_stats() {
    let p = eim_problem(30, 3);
    let cfg = SolverConfig {
        eta: 1e-9,
        ..SolverConfig::default()
    };
    let bt = eim_block_tree(&p, &cfg);
    let full = AssemblyOptions {
        exploit_symmetry: false,
        ..AssemblyOptions::new(1e-3, AcaMode::Partial)
    };
    assert_eq!(assemble(&eim_generator(&p), &bt, full).unwrap().stats().ratio, 1.0);
    let h = assemble(&eim_generator(&p), &bt, AssemblyOptions::new(1e-3, AcaMode::Partial)).unwrap();
    let ratio = h.stats().ratio;
    assert!(h.symmetric && ratio > 0.5 && ratio < 1.0, "{ratio}");
    let mut lowrank = 0;
    h.root.for_each_leaf(0, 0, &mut |_, _, b| {
        if matches!(b, HBlock::LowRank(_)) {
            lowrank += 1;
        }
    });
    assert_eq!(lowrank, 0);
    assert_eq!(h.to_dense(), eim_generator(&p).to_dense());
}

#[test]
fn compression_below_half_at_thousand() {
    let p = eim_problem(1000, 1);
    let bt = eim_block_tree(&p, &SolverConfig::default());
    let h = assemble(&eim_generator(&p), &bt, AssemblyOptions::new(1e-3, AcaMode::Partial)).unwrap();
    assert!(h.stats().ratio < 0.5);
}

#[test]
fn volume_fraction_matches_monte_carlo() {
    let ms = eim_microstructure(200, 1);
    assert!((ms.volume_fraction() - VOLUME_FRACTION).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 1_000_000;
    let mut inside = 0usize;
    let mut hits = 0usize;
    while inside < n {
        let x = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if x.norm_squared() >= 1.0 {
            continue;
        }
        inside += 1;
        if ms.spheres.iter().any(|s| s.contains(&x)) {
            hits += 1;
        }
    }
    let mc = hits as f64 / n as f64;
    assert!((mc / ms.volume_fraction() - 1.0).abs() < 0.005, "{mc} vs {}", ms.volume_fraction());
}

#[test]
fn dense_and_generator_agree() {
    let p = eim_problem(50, 8);
    let g = eim_generator(&p);
    let a = assemble_dense(&p).unwrap();
    let n = a.nrows();
    let b = DMatrix::from_fn(n, n, |i, j| g.entry(i, j));
    assert!((&a - &b).norm() <= 1e-13 * a.norm());
}
