#![allow(dead_code)]

use std::f64::consts::PI;

use hmhomog::eim::{EimProblem, SolverConfig};
use hmhomog::hmatrix::{build_block_tree, Admissibility, BlockTree, ClusterTree};
use hmhomog::microstructure::{generate_rsa_with, Domain, Microstructure, RsaOptions};
use hmhomog::quadrature::gauss_legendre_interval;
use hmhomog::Vec3;
use nalgebra::Matrix3;

pub const VOLUME_FRACTION: f64 = 0.3;

/// `n` equal spheres at 30% volume fraction in the ball of radius one.
pub fn eim_microstructure(n: usize, seed: u64) -> Microstructure {
    let r = (VOLUME_FRACTION / n as f64).cbrt();
    let opts = RsaOptions {
        count: n,
        radius: r,
        seed,
        ..RsaOptions::default()
    };
    generate_rsa_with(Domain::Ball { radius: 1.0 }, &opts).expect("fixture packs")
}

pub fn eim_problem(n: usize, seed: u64) -> EimProblem {
    EimProblem::new(eim_microstructure(n, seed), Vec3::new(1.0, 0.0, 0.0)).unwrap()
}

pub fn eim_block_tree(problem: &EimProblem, config: &SolverConfig) -> BlockTree {
    let ct = ClusterTree::build(&problem.microstructure.centers(), config.c_leaf, 3).unwrap();
    build_block_tree(&ct, Admissibility::new(config.eta))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("criterion {id:>2} [{name}]: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

/// Product Gauss rule on the sphere: Gauss-Legendre in `cos θ`, trapezoid in
/// `φ`. Returns unit directions and weights summing to `4π`.
pub fn sphere_rule(nt: usize, np: usize) -> Vec<(Vec3, f64)> {
    let (t, w) = gauss_legendre_interval(nt, -1.0, 1.0);
    let mut out = Vec::with_capacity(nt * np);
    for (ct, wt) in t.iter().zip(&w) {
        let st = (1.0 - ct * ct).sqrt();
        for k in 0..np {
            let phi = 2.0 * PI * k as f64 / np as f64;
            out.push((Vec3::new(st * phi.cos(), st * phi.sin(), *ct), wt * 2.0 * PI / np as f64));
        }
    }
    out
}

/// Product Gauss rule on a solid ball: points and weights summing to its
/// volume.
pub fn ball_rule(center: &Vec3, radius: f64, nr: usize, nt: usize, np: usize) -> Vec<(Vec3, f64)> {
    let (r, wr) = gauss_legendre_interval(nr, 0.0, radius);
    let dirs = sphere_rule(nt, np);
    let mut out = Vec::with_capacity(nr * dirs.len());
    for (ri, wi) in r.iter().zip(&wr) {
        for (d, wd) in &dirs {
            out.push((center + d * *ri, wi * ri * ri * wd));
        }
    }
    out
}

/// `(I − 3 r̂ r̂ᵀ)/(4π κ0 |r|³)` written out independently.
pub fn gamma(r: &Vec3, kappa0: f64) -> Matrix3<f64> {
    let d = r.norm();
    let mut m = Matrix3::zeros();
    for a in 0..3 {
        for b in 0..3 {
            let delta = if a == b { 1.0 } else { 0.0 };
            m[(a, b)] = (delta - 3.0 * r[a] * r[b] / (d * d)) / (4.0 * PI * kappa0 * d.powi(3));
        }
    }
    m
}

/// `∫_B Γ∞(x, y) dy` for `x` strictly inside the ball `B`, as the regular
/// boundary integral `κ0⁻¹ ∫_∂B n_y ⊗ ∇_x G(x − y) dS_y`.
pub fn ball_gamma_integral(x: &Vec3, center: &Vec3, radius: f64, kappa0: f64, rule: &[(Vec3, f64)]) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for (n, w) in rule {
        let y = center + n * radius;
        let d = x - y;
        let grad = -d / (4.0 * PI * d.norm().powi(3));
        m += n * grad.transpose() * (w * radius * radius);
    }
    m / kappa0
}

/// Rotation by `angle` about the unit axis `axis`.
pub fn rotation(axis: &Vec3, angle: f64) -> Matrix3<f64> {
    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle).into_inner()
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Same integral as [`ball_gamma_integral`], reduced to one adaptive
/// quadrature in `cos θ` about the axis through `x`. Accurate up to the
/// boundary of the ball.
pub fn ball_gamma_integral_adaptive(x: &Vec3, center: &Vec3, radius: f64, kappa0: f64) -> Matrix3<f64> {
    let rel = x - center;
    let s = rel.norm();
    let r = radius;
    let dist3 = |u: f64| (s * s + r * r - 2.0 * s * r * u).powf(1.5);
    // Axial and transverse components after the azimuthal average.
    let axial = adaptive_simpson(&|u: f64| 2.0 * PI * r * r * u * (r * u - s) / (4.0 * PI * dist3(u)), -1.0, 1.0, 1e-12);
    let transverse = adaptive_simpson(&|u: f64| 2.0 * PI * r * r * r * (1.0 - u * u) / 2.0 / (4.0 * PI * dist3(u)), -1.0, 1.0, 1e-12);
    let axis = if s > 0.0 { rel / s } else { Vec3::z() };
    let p = axis * axis.transpose();
    (p * axial + (Matrix3::identity() - p) * transverse) / kappa0
}

pub fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}
