//! Approximate LU factorisation in H-arithmetic.
//!
//! The factorisation follows the block tree recursively without pivoting.
//! Products and sums that land in low-rank blocks are truncated back to the
//! factorisation tolerance, so the factors are inexact by design and serve
//! as a preconditioner. Factors are stored packed (unit `L` below, `U` on
//! and above the diagonal) in a copy of the H-matrix structure.

use std::time::Instant;

use nalgebra::DMatrix;

use super::lowrank::{svd_recompress, LowRank};
use super::matrix::{HBlock, HMatrix};
use super::HError;

#[derive(Debug, Clone)]
pub struct HLu {
    pub factors: HBlock,
    pub perm: Vec<usize>,
    pub epsilon_lu: f64,
    pub seconds: f64,
}

/// Default truncation tolerance for preconditioning: `max(ε, 1e-2)`.
pub fn default_lu_tolerance(epsilon: f64) -> f64 {
    epsilon.max(1e-2)
}

pub fn h_lu(h: &HMatrix, epsilon_lu: f64) -> Result<HLu, HError> {
    let start = Instant::now();
    let mut factors = h.root.unfolded();
    lu_in_place(&mut factors, epsilon_lu, 0)?;
    Ok(HLu {
        factors,
        perm: h.perm.clone(),
        epsilon_lu,
        seconds: start.elapsed().as_secs_f64(),
    })
}

impl HLu {
    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Solves `L U x = b` in permuted numbering, in place.
    pub fn solve_permuted(&self, b: &mut [f64]) {
        let mut x = DMatrix::from_column_slice(b.len(), 1, b);
        lower_solve(&self.factors, &mut x);
        upper_solve(&self.factors, &mut x);
        b.copy_from_slice(x.as_slice());
    }

    /// Applies the approximate inverse in the original numbering.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut xp: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        self.solve_permuted(&mut xp);
        let mut out = vec![0.0; xp.len()];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = xp[k];
        }
        out
    }

    /// Dense `(L, U)` in permuted numbering.
    pub fn dense_factors(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let packed = self.factors.to_dense();
        let n = packed.nrows();
        let l = DMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => packed[(i, j)],
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Less => 0.0,
        });
        let u = DMatrix::from_fn(n, n, |i, j| if i <= j { packed[(i, j)] } else { 0.0 });
        (l, u)
    }

    pub fn stored(&self) -> usize {
        self.factors.stored()
    }
}

fn lu_in_place(a: &mut HBlock, eps: f64, offset: usize) -> Result<(), HError> {
    match a {
        HBlock::Dense(m) => dense_lu(m, offset),
        HBlock::LowRank(_) => Err(HError::LowRankDiagonal),
        HBlock::Sub(s) => {
            let split = s.row_split;
            let [a00, a01, a10, a11] = &mut s.blocks;
            lu_in_place(a00, eps, offset)?;
            solve_lower_left(a00, a01, eps);
            solve_upper_right(a00, a10, eps);
            mul_sub(a11, a10, a01, eps);
            lu_in_place(a11, eps, offset + split)
        }
        _ => unreachable!("factorisation runs on unfolded blocks"),
    }
}

fn dense_lu(m: &mut DMatrix<f64>, offset: usize) -> Result<(), HError> {
    let n = m.nrows();
    let scale = m.amax();
    for k in 0..n {
        let p = m[(k, k)];
        if !(p.abs() > 1e-13 * scale) {
            return Err(HError::NearZeroPivot {
                index: offset + k,
                value: p,
            });
        }
        for i in k + 1..n {
            m[(i, k)] /= p;
        }
        for j in k + 1..n {
            let ukj = m[(k, j)];
            if ukj != 0.0 {
                for i in k + 1..n {
                    m[(i, j)] -= m[(i, k)] * ukj;
                }
            }
        }
    }
    Ok(())
}

/// `X ← L⁻¹ X` with `L` the unit lower part of a factored diagonal block.
fn lower_solve(l: &HBlock, x: &mut DMatrix<f64>) {
    match l {
        HBlock::Dense(f) => {
            let n = f.nrows();
            for c in 0..x.ncols() {
                for k in 0..n {
                    let xk = x[(k, c)];
                    if xk != 0.0 {
                        for i in k + 1..n {
                            x[(i, c)] -= f[(i, k)] * xk;
                        }
                    }
                }
            }
        }
        HBlock::Sub(s) => {
            let s0 = s.row_split;
            let n = s.nrows;
            let mut x0 = x.rows(0, s0).into_owned();
            lower_solve(&s.blocks[0], &mut x0);
            let mut x1 = x.rows(s0, n - s0).into_owned();
            x1 -= s.blocks[2].mul_dense(&x0);
            lower_solve(&s.blocks[3], &mut x1);
            x.rows_mut(0, s0).copy_from(&x0);
            x.rows_mut(s0, n - s0).copy_from(&x1);
        }
        HBlock::LowRank(_) => unreachable!("diagonal blocks are never low-rank"),
        _ => unreachable!("factorisation runs on unfolded blocks"),
    }
}

/// `X ← U⁻¹ X`.
fn upper_solve(u: &HBlock, x: &mut DMatrix<f64>) {
    match u {
        HBlock::Dense(f) => {
            let n = f.nrows();
            for c in 0..x.ncols() {
                for k in (0..n).rev() {
                    x[(k, c)] /= f[(k, k)];
                    let xk = x[(k, c)];
                    if xk != 0.0 {
                        for i in 0..k {
                            x[(i, c)] -= f[(i, k)] * xk;
                        }
                    }
                }
            }
        }
        HBlock::Sub(s) => {
            let s0 = s.row_split;
            let n = s.nrows;
            let mut x1 = x.rows(s0, n - s0).into_owned();
            upper_solve(&s.blocks[3], &mut x1);
            let mut x0 = x.rows(0, s0).into_owned();
            x0 -= s.blocks[1].mul_dense(&x1);
            upper_solve(&s.blocks[0], &mut x0);
            x.rows_mut(0, s0).copy_from(&x0);
            x.rows_mut(s0, n - s0).copy_from(&x1);
        }
        HBlock::LowRank(_) => unreachable!("diagonal blocks are never low-rank"),
        _ => unreachable!("factorisation runs on unfolded blocks"),
    }
}

/// `X ← X U⁻¹`.
fn right_upper_solve(u: &HBlock, x: &mut DMatrix<f64>) {
    match u {
        HBlock::Dense(f) => {
            let n = f.nrows();
            for j in 0..n {
                for i in 0..j {
                    let uij = f[(i, j)];
                    if uij != 0.0 {
                        for r in 0..x.nrows() {
                            x[(r, j)] -= x[(r, i)] * uij;
                        }
                    }
                }
                let d = f[(j, j)];
                x.column_mut(j).unscale_mut(d);
            }
        }
        HBlock::Sub(s) => {
            let s0 = s.col_split;
            let n = s.ncols;
            let mut x0 = x.columns(0, s0).into_owned();
            right_upper_solve(&s.blocks[0], &mut x0);
            let mut x1 = x.columns(s0, n - s0).into_owned();
            x1 -= s.blocks[1].tr_mul_dense(&x0.transpose()).transpose();
            right_upper_solve(&s.blocks[3], &mut x1);
            x.columns_mut(0, s0).copy_from(&x0);
            x.columns_mut(s0, n - s0).copy_from(&x1);
        }
        HBlock::LowRank(_) => unreachable!("diagonal blocks are never low-rank"),
        _ => unreachable!("factorisation runs on unfolded blocks"),
    }
}

/// `B ← L⁻¹ B`.
fn solve_lower_left(l: &HBlock, b: &mut HBlock, eps: f64) {
    match (l, &mut *b) {
        (_, HBlock::LowRank(lr)) => lower_solve(l, &mut lr.u),
        (_, HBlock::Dense(m)) => lower_solve(l, m),
        (HBlock::Sub(ls), HBlock::Sub(bs)) => {
            let [b00, b01, b10, b11] = &mut bs.blocks;
            for (top, bottom) in [(b00, b10), (b01, b11)] {
                solve_lower_left(&ls.blocks[0], top, eps);
                mul_sub(bottom, &ls.blocks[2], top, eps);
                solve_lower_left(&ls.blocks[3], bottom, eps);
            }
        }
        (_, HBlock::Sub(_)) => {
            let mut d = b.to_dense();
            lower_solve(l, &mut d);
            assign_dense(b, &d, eps);
        }
        _ => unreachable!("factorisation runs on unfolded blocks"),
    }
}

/// `B ← B U⁻¹`.
fn solve_upper_right(u: &HBlock, b: &mut HBlock, eps: f64) {
    match (u, &mut *b) {
        (_, HBlock::LowRank(lr)) => {
            let mut vt = lr.v.transpose();
            right_upper_solve(u, &mut vt);
            lr.v = vt.transpose();
        }
        (_, HBlock::Dense(m)) => right_upper_solve(u, m),
        (HBlock::Sub(us), HBlock::Sub(bs)) => {
            let [b00, b01, b10, b11] = &mut bs.blocks;
            for (left, right) in [(b00, b01), (b10, b11)] {
                solve_upper_right(&us.blocks[0], left, eps);
                mul_sub(right, left, &us.blocks[1], eps);
                solve_upper_right(&us.blocks[3], right, eps);
            }
        }
        (_, HBlock::Sub(_)) => {
            let mut d = b.to_dense();
            right_upper_solve(u, &mut d);
            assign_dense(b, &d, eps);
        }
        _ => unreachable!("factorisation runs on unfolded blocks"),
    }
}

/// `C ← C − A B` with truncation to `eps` in low-rank targets.
pub(crate) fn mul_sub(c: &mut HBlock, a: &HBlock, b: &HBlock, eps: f64) {
    match (a, b) {
        (HBlock::LowRank(la), _) => {
            if la.rank() > 0 {
                let v = b.tr_mul_dense(&la.v);
                add_lowrank(c, &LowRank::new(-&la.u, v), eps);
            }
        }
        (_, HBlock::LowRank(lb)) => {
            if lb.rank() > 0 {
                let u = a.mul_dense(&lb.u);
                add_lowrank(c, &LowRank::new(-u, lb.v.clone()), eps);
            }
        }
        (HBlock::Sub(sa), HBlock::Sub(sb)) => match c {
            HBlock::Sub(sc) => {
                for i in 0..2 {
                    for j in 0..2 {
                        for k in 0..2 {
                            mul_sub(&mut sc.blocks[2 * i + j], &sa.blocks[2 * i + k], &sb.blocks[2 * k + j], eps);
                        }
                    }
                }
            }
            HBlock::LowRank(_) => {
                let p = product_lowrank(a, b, eps).scaled(-1.0);
                add_lowrank(c, &p, eps);
            }
            HBlock::Dense(m) => *m -= a.mul_dense(&b.to_dense()),
            _ => unreachable!("factorisation runs on unfolded blocks"),
        },
        (HBlock::Dense(da), _) => {
            let p = b.tr_mul_dense(&da.transpose()).transpose();
            add_dense(c, &(-p), eps);
        }
        (_, HBlock::Dense(db)) => {
            let p = a.mul_dense(db);
            add_dense(c, &(-p), eps);
        }
        _ => unreachable!("factorisation runs on unfolded blocks"),
    }
}

/// Truncated low-rank form of `A B`.
fn product_lowrank(a: &HBlock, b: &HBlock, eps: f64) -> LowRank {
    match (a, b) {
        (HBlock::LowRank(la), _) => {
            if la.rank() == 0 {
                return LowRank::zero(a.nrows(), b.ncols());
            }
            svd_recompress(&LowRank::new(la.u.clone(), b.tr_mul_dense(&la.v)), eps)
        }
        (_, HBlock::LowRank(lb)) => {
            if lb.rank() == 0 {
                return LowRank::zero(a.nrows(), b.ncols());
            }
            svd_recompress(&LowRank::new(a.mul_dense(&lb.u), lb.v.clone()), eps)
        }
        (HBlock::Sub(sa), HBlock::Sub(sb)) => {
            let (m, n) = (sa.nrows, sb.ncols);
            let mut total = LowRank::zero(m, n);
            for i in 0..2 {
                for j in 0..2 {
                    let mut quad = LowRank::zero(sa.blocks[2 * i].nrows(), sb.blocks[j].ncols());
                    for k in 0..2 {
                        let p = product_lowrank(&sa.blocks[2 * i + k], &sb.blocks[2 * k + j], eps);
                        quad = svd_recompress(&quad.concat(&p), eps);
                    }
                    let r0 = if i == 1 { sa.row_split } else { 0 };
                    let c0 = if j == 1 { sb.col_split } else { 0 };
                    total = total.concat(&embed(&quad, m, n, r0, c0));
                }
            }
            svd_recompress(&total, eps)
        }
        _ => {
            let p = if let HBlock::Dense(db) = b {
                a.mul_dense(db)
            } else {
                a.mul_dense(&b.to_dense())
            };
            LowRank::from_dense(&p, eps)
        }
    }
}

/// Zero-padded placement of a low-rank block inside an `m × n` block.
fn embed(l: &LowRank, m: usize, n: usize, r0: usize, c0: usize) -> LowRank {
    let k = l.rank();
    let mut u = DMatrix::zeros(m, k);
    let mut v = DMatrix::zeros(n, k);
    u.rows_mut(r0, l.nrows()).copy_from(&l.u);
    v.rows_mut(c0, l.ncols()).copy_from(&l.v);
    LowRank::new(u, v)
}

/// `C ← C + L`.
fn add_lowrank(c: &mut HBlock, l: &LowRank, eps: f64) {
    match c {
        HBlock::Dense(m) => *m += l.to_dense(),
        HBlock::LowRank(lc) => *lc = svd_recompress(&lc.concat(l), eps),
        HBlock::Sub(s) => {
            for q in 0..4 {
                let (r0, c0) = s.offset(q);
                let b = &mut s.blocks[q];
                let part = LowRank::new(l.u.rows(r0, b.nrows()).into_owned(), l.v.rows(c0, b.ncols()).into_owned());
                add_lowrank(b, &part, eps);
            }
        }
        _ => unreachable!("factorisation runs on unfolded blocks"),
    }
}

/// `C ← C + D`.
fn add_dense(c: &mut HBlock, d: &DMatrix<f64>, eps: f64) {
    match c {
        HBlock::Dense(m) => *m += d,
        HBlock::LowRank(lc) => *lc = svd_recompress(&lc.concat(&LowRank::from_dense(d, eps)), eps),
        HBlock::Sub(s) => {
            for q in 0..4 {
                let (r0, c0) = s.offset(q);
                let b = &mut s.blocks[q];
                let part = d.view((r0, c0), (b.nrows(), b.ncols())).into_owned();
                add_dense(b, &part, eps);
            }
        }
        _ => unreachable!("factorisation runs on unfolded blocks"),
    }
}

/// Overwrites `c` with `d`, keeping its block structure.
fn assign_dense(c: &mut HBlock, d: &DMatrix<f64>, eps: f64) {
    match c {
        HBlock::Dense(m) => m.copy_from(d),
        HBlock::LowRank(lc) => *lc = LowRank::from_dense(d, eps),
        HBlock::Sub(s) => {
            for q in 0..4 {
                let (r0, c0) = s.offset(q);
                let b = &mut s.blocks[q];
                let part = d.view((r0, c0), (b.nrows(), b.ncols())).into_owned();
                assign_dense(b, &part, eps);
            }
        }
        _ => unreachable!("factorisation runs on unfolded blocks"),
    }
}
