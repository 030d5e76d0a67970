//! Adaptive cross approximation.

use nalgebra::DMatrix;

use super::generator::EntryGenerator;
use super::lowrank::LowRank;

/// Outcome of one cross approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcaReport {
    pub rank: usize,
    /// False when `k_max` crosses were built without meeting the tolerance.
    pub converged: bool,
    /// Matrix entries read.
    pub queries: usize,
}

/// Consecutive vanishing residual rows accepted as convergence once at least
/// one cross exists.
const MAX_FALLBACKS: usize = 3;

/// Full-pivoting ACA on an explicit block. Stops as soon as
/// `‖M − UVᵀ‖_F ≤ eps·‖M‖_F`.
pub fn aca_full(block: &DMatrix<f64>, eps: f64, k_max: usize) -> (LowRank, AcaReport) {
    let (m, n) = block.shape();
    let norm = block.norm();
    let mut res = block.clone();
    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut vs: Vec<Vec<f64>> = Vec::new();
    let mut converged = true;
    if m > 0 && n > 0 {
        loop {
            if res.norm() <= eps * norm {
                break;
            }
            if us.len() >= k_max {
                converged = false;
                break;
            }
            let (mut pi, mut pj, mut pmax) = (0, 0, 0.0f64);
            for j in 0..n {
                for i in 0..m {
                    let a = res[(i, j)].abs();
                    if a > pmax {
                        (pi, pj, pmax) = (i, j, a);
                    }
                }
            }
            if pmax == 0.0 {
                break;
            }
            let pivot = res[(pi, pj)];
            let a: Vec<f64> = (0..m).map(|i| res[(i, pj)] / pivot).collect();
            let b: Vec<f64> = (0..n).map(|j| res[(pi, j)]).collect();
            for j in 0..n {
                for i in 0..m {
                    res[(i, j)] -= a[i] * b[j];
                }
            }
            us.push(a);
            vs.push(b);
        }
    }
    let lr = factors(m, n, &us, &vs);
    let rank = lr.rank();
    (
        lr,
        AcaReport {
            rank,
            converged,
            queries: m * n,
        },
    )
}

/// Partial-pivoting ACA reading only selected rows and columns of the block
/// `gen[rows, cols]`.
///
/// The first pivot row is the first row of the block. Each step takes the
/// largest residual entry of the current row as pivot column and the largest
/// entry of the new column (among rows not yet used) as next row. Iteration
/// stops when the newest cross satisfies `‖a‖‖b‖ ≤ eps·‖Σ a bᵀ‖_F`, the norm
/// being updated incrementally. A residual row that vanishes is skipped in
/// favour of the next untried row.
pub fn aca_partial<G: EntryGenerator + ?Sized>(
    gen: &G,
    rows: &[usize],
    cols: &[usize],
    eps: f64,
    k_max: usize,
) -> (LowRank, AcaReport) {
    let (m, n) = (rows.len(), cols.len());
    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut vs: Vec<Vec<f64>> = Vec::new();
    let mut used = vec![false; m];
    let mut queries = 0;
    let mut norm2 = 0.0f64;
    let mut max_seen = 0.0f64;
    let mut fallbacks = 0;
    let mut converged = true;
    let mut row = vec![0.0; n];
    let mut col = vec![0.0; m];
    let mut next = if m > 0 && n > 0 { Some(0) } else { None };

    while let Some(i) = next {
        if us.len() >= k_max.min(m.min(n)) {
            converged = us.len() >= m.min(n);
            break;
        }
        gen.row(rows[i], cols, &mut row);
        queries += n;
        used[i] = true;
        max_seen = row.iter().fold(max_seen, |acc, v| acc.max(v.abs()));
        for (a, b) in us.iter().zip(&vs) {
            let s = a[i];
            for (r, bj) in row.iter_mut().zip(b) {
                *r -= s * bj;
            }
        }
        let (j, pmax) = argmax_abs(&row, |_| true).unwrap();
        if pmax <= 1e-14 * max_seen {
            fallbacks += 1;
            if !us.is_empty() && fallbacks >= MAX_FALLBACKS {
                break;
            }
            next = used.iter().position(|u| !u);
            continue;
        }
        fallbacks = 0;
        gen.col(cols[j], rows, &mut col);
        queries += m;
        for (a, b) in us.iter().zip(&vs) {
            let s = b[j];
            for (c, ai) in col.iter_mut().zip(a) {
                *c -= s * ai;
            }
        }
        let pivot = row[j];
        let a: Vec<f64> = col.iter().map(|c| c / pivot).collect();
        let b = row.clone();
        let aa = dot(&a, &a);
        let bb = dot(&b, &b);
        let mut cross = 0.0;
        for (ua, vb) in us.iter().zip(&vs) {
            cross += dot(&a, ua) * dot(&b, vb);
        }
        norm2 = (norm2 + 2.0 * cross + aa * bb).max(0.0);
        next = argmax_abs(&a, |k| !used[k])
            .map(|(k, _)| k)
            .or_else(|| used.iter().position(|u| !u));
        us.push(a);
        vs.push(b);
        if (aa * bb).sqrt() <= eps * norm2.sqrt() {
            break;
        }
    }
    let lr = factors(m, n, &us, &vs);
    let rank = lr.rank();
    (lr, AcaReport { rank, converged, queries })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax_abs(v: &[f64], keep: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, x) in v.iter().enumerate() {
        if keep(k) && best.is_none_or(|(_, b)| x.abs() > b) {
            best = Some((k, x.abs()));
        }
    }
    best
}

fn factors(m: usize, n: usize, us: &[Vec<f64>], vs: &[Vec<f64>]) -> LowRank {
    let k = us.len();
    LowRank::new(
        DMatrix::from_fn(m, k, |i, c| us[c][i]),
        DMatrix::from_fn(n, k, |j, c| vs[c][j]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::hmatrix::generator::{CountingGenerator, DenseGenerator, FnGenerator};
    use crate::hmatrix::lowrank::{svd_recompress, truncation_rank};
    use nalgebra::SVD;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(n: usize, center: Vec3, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        (0..n)
            .map(|_| center + Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
            .collect()
    }

    fn coulomb(x: &[Vec3], y: &[Vec3]) -> DMatrix<f64> {
        DMatrix::from_fn(x.len(), y.len(), |i, j| 1.0 / (x[i] - y[j]).norm())
    }

    #[test]
    fn rank_one_block_in_one_step() {
        let a: Vec<f64> = (0..9).map(|i| 1.0 + i as f64).collect();
        let b: Vec<f64> = (0..7).map(|j| (j as f64 - 3.0) * 0.5).collect();
        let m = DMatrix::from_fn(9, 7, |i, j| a[i] * b[j]);
        let (lr, rep) = aca_full(&m, 1e-10, 10);
        assert_eq!(rep.rank, 1);
        assert!(rep.converged);
        assert!((lr.to_dense() - &m).norm() <= 1e-14 * m.norm());

        let gen = DenseGenerator::new(m.clone());
        let rows: Vec<usize> = (0..9).collect();
        let cols: Vec<usize> = (0..7).collect();
        let (lp, rp) = aca_partial(&gen, &rows, &cols, 1e-10, 10);
        assert_eq!(rp.rank, 1);
        assert!((lp.to_dense() - lr.to_dense()).norm() <= 1e-13 * m.norm());
    }

    #[test]
    fn zero_block_has_rank_zero() {
        let m = DMatrix::zeros(5, 6);
        let (lr, rep) = aca_full(&m, 1e-6, 10);
        assert_eq!(lr.rank(), 0);
        assert!(rep.converged);
        let gen = DenseGenerator::new(m);
        let (lp, _) = aca_partial(&gen, &[0, 1, 2, 3, 4], &[0, 1, 2, 3, 4, 5], 1e-6, 10);
        assert_eq!(lp.rank(), 0);
    }

    #[test]
    fn full_pivoting_rank_close_to_svd_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = cloud(60, Vec3::zeros(), &mut rng);
        let y = cloud(60, Vec3::new(4.0, 0.0, 0.0), &mut rng);
        let m = coulomb(&x, &y);
        let (lr, rep) = aca_full(&m, 1e-6, 60);
        assert!(rep.converged);
        assert!((lr.to_dense() - &m).norm() <= 1e-6 * m.norm());
        let svd = SVD::new(m.clone(), false, false);
        let r_svd = truncation_rank(svd.singular_values.as_slice(), 1e-6, 60);
        assert!(lr.rank() <= 2 * r_svd, "aca {} svd {}", lr.rank(), r_svd);
    }

    #[test]
    fn zero_first_row_falls_back() {
        let mut m = DMatrix::from_fn(6, 6, |i, j| (i + 1) as f64 * (j as f64 + 0.5));
        m.row_mut(0).fill(0.0);
        let gen = DenseGenerator::new(m.clone());
        let idx: Vec<usize> = (0..6).collect();
        let (lr, _) = aca_partial(&gen, &idx, &idx, 1e-10, 6);
        assert_eq!(lr.rank(), 1);
        assert!((lr.to_dense() - &m).norm() < 1e-12 * m.norm());
    }

    #[test]
    fn partial_query_count_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = cloud(500, Vec3::zeros(), &mut rng);
        let y = cloud(500, Vec3::new(6.0, 0.0, 0.0), &mut rng);
        let inner = FnGenerator::new(500, 500, |i, j| 1.0 / (x[i] - y[j]).norm());
        let gen = CountingGenerator::new(&inner);
        let idx: Vec<usize> = (0..500).collect();
        let (lr, rep) = aca_partial(&gen, &idx, &idx, 1e-3, 50);
        let k = rep.rank;
        assert!(k >= 2 && k <= 12, "rank {k}");
        assert_eq!(gen.count(), rep.queries);
        assert!(gen.count() <= 2 * k * 500 + k);
        let dense = inner.to_dense();
        let err = (svd_recompress(&lr, 1e-3).to_dense() - &dense).norm() / dense.norm();
        assert!(err < 1e-2, "err {err}");
    }
}
