//! Krylov solvers over abstract operators.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lu::HLu;
use super::matrix::HMatrix;

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

pub trait Preconditioner: Sync {
    /// `z = M⁻¹ r`.
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

impl LinearOperator for HMatrix {
    fn dim(&self) -> usize {
        HMatrix::dim(self)
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xp = self.to_permuted(x);
        let mut yp = vec![0.0; xp.len()];
        self.root.gemv(&xp, &mut yp);
        for (k, &p) in self.perm.iter().enumerate() {
            y[p] = yp[k];
        }
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (j, xj) in x.iter().enumerate() {
            for (yi, a) in y.iter_mut().zip(self.column(j).iter()) {
                *yi += a * xj;
            }
        }
    }
}

impl Preconditioner for HLu {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(&self.solve(r));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    /// True relative residual `‖b − A x‖ / ‖b‖` of the returned iterate.
    pub residual: f64,
    /// Relative residual estimate after each iteration.
    pub history: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub report: SolveReport,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("conjugate gradient breakdown at iteration {iteration}: curvature {curvature:e} is not positive")]
    Breakdown { iteration: usize, curvature: f64 },
    #[error("dimension mismatch: operator has {expected} rows, right-hand side {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn true_residual<A: LinearOperator + ?Sized>(a: &A, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; b.len()];
    a.apply(x, &mut ax);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let nb = norm(b);
    if nb == 0.0 {
        norm(&r)
    } else {
        norm(&r) / nb
    }
}

/// Preconditioned conjugate gradient from a zero initial guess. Stops when
/// the recursively updated residual satisfies `‖r‖ ≤ tol·‖b‖`.
/// Non-positive `pᵀAp` or `rᵀz` aborts with [`SolverError::Breakdown`].
pub fn pcg<A, P>(a: &A, m: &P, b: &[f64], tol: f64, max_iter: usize) -> Result<Solution, SolverError>
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let n = a.dim();
    if b.len() != n {
        return Err(SolverError::DimensionMismatch { expected: n, got: b.len() });
    }
    let start = Instant::now();
    let nb = norm(b);
    let mut x = vec![0.0; n];
    let mut history = Vec::new();
    if nb == 0.0 {
        return Ok(Solution {
            x,
            report: SolveReport {
                iterations: 0,
                converged: true,
                residual: 0.0,
                history,
                seconds: 0.0,
            },
        });
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut converged = false;
    let mut it = 0;
    while it < max_iter {
        if !(rz > 0.0) {
            return Err(SolverError::Breakdown {
                iteration: it,
                curvature: rz,
            });
        }
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SolverError::Breakdown {
                iteration: it,
                curvature: pap,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        it += 1;
        let rel = norm(&r) / nb;
        history.push(rel);
        if rel <= tol {
            converged = true;
            break;
        }
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = true_residual(a, &x, b);
    Ok(Solution {
        x,
        report: SolveReport {
            iterations: it,
            converged,
            residual,
            history,
            seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// Restarted GMRES with right preconditioning, modified Gram–Schmidt and
/// Givens rotations, from a zero initial guess. Stops when
/// `‖b − A x‖ ≤ tol·‖b‖` or after `max_iter` inner iterations in total.
pub fn gmres<A, P>(a: &A, m: &P, b: &[f64], tol: f64, restart: usize, max_iter: usize) -> Result<Solution, SolverError>
where
    A: LinearOperator + ?Sized,
    P: Preconditioner + ?Sized,
{
    let n = a.dim();
    if b.len() != n {
        return Err(SolverError::DimensionMismatch { expected: n, got: b.len() });
    }
    let start = Instant::now();
    let restart = restart.max(1);
    let nb = norm(b);
    let mut x = vec![0.0; n];
    let mut history = Vec::new();
    let mut total = 0;
    let mut converged = nb == 0.0;
    let mut tmp = vec![0.0; n];

    while !converged && total < max_iter {
        a.apply(&x, &mut tmp);
        let r: Vec<f64> = b.iter().zip(&tmp).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        if beta <= tol * nb {
            converged = true;
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        for j in 0..restart {
            let mut z = vec![0.0; n];
            m.apply(&v[j], &mut z);
            let mut w = vec![0.0; n];
            a.apply(&z, &mut w);
            zs.push(z);
            let mut col = vec![0.0; j + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] = hij;
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm(&w);
            col[j + 1] = hn;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let d = col[j].hypot(col[j + 1]);
            let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (col[j] / d, col[j + 1] / d) };
            col[j] = d;
            col[j + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[j]);
            g[j] *= c;
            h.push(col);
            total += 1;
            let rel = g[j + 1].abs() / nb;
            history.push(rel);
            if rel <= tol || hn == 0.0 || total >= max_iter {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for (jj, yj) in y.iter().enumerate().take(k).skip(i + 1) {
                s -= h[jj][i] * yj;
            }
            y[i] = if h[i][i] == 0.0 { 0.0 } else { s / h[i][i] };
        }
        for (yi, z) in y.iter().zip(&zs) {
            for (xk, zk) in x.iter_mut().zip(z) {
                *xk += yi * zk;
            }
        }
        if history.last().is_some_and(|&r| r <= tol) {
            converged = true;
        }
    }
    let residual = true_residual(a, &x, b);
    if nb > 0.0 && residual > tol {
        converged = false;
    }
    Ok(Solution {
        x,
        report: SolveReport {
            iterations: total,
            converged,
            residual,
            history,
            seconds: start.elapsed().as_secs_f64(),
        },
    })
}
