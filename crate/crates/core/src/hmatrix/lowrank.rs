use nalgebra::{DMatrix, SVD};

/// Rank-k factorisation `u · vᵀ` with `u` of size m×k and `v` of size n×k.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRank {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl LowRank {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Self {
        assert_eq!(u.ncols(), v.ncols(), "factor ranks differ");
        Self { u, v }
    }

    pub fn zero(m: usize, n: usize) -> Self {
        Self {
            u: DMatrix::zeros(m, 0),
            v: DMatrix::zeros(n, 0),
        }
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    pub fn stored(&self) -> usize {
        self.rank() * (self.nrows() + self.ncols())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        if self.rank() == 0 {
            return DMatrix::zeros(self.nrows(), self.ncols());
        }
        &self.u * self.v.transpose()
    }

    /// `y += u vᵀ x`.
    pub fn gemv(&self, x: &[f64], y: &mut [f64]) {
        let k = self.rank();
        if k == 0 {
            return;
        }
        let mut t = vec![0.0; k];
        for (c, tc) in t.iter_mut().enumerate() {
            *tc = self.v.column(c).iter().zip(x).map(|(a, b)| a * b).sum();
        }
        for (c, tc) in t.iter().enumerate() {
            for (yi, ui) in y.iter_mut().zip(self.u.column(c).iter()) {
                *yi += tc * ui;
            }
        }
    }

    /// `y += v uᵀ x`.
    pub fn gemv_t(&self, x: &[f64], y: &mut [f64]) {
        for c in 0..self.rank() {
            let t: f64 = self.u.column(c).iter().zip(x).map(|(a, b)| a * b).sum();
            for (yi, vi) in y.iter_mut().zip(self.v.column(c).iter()) {
                *yi += t * vi;
            }
        }
    }

    pub fn transpose(&self) -> LowRank {
        LowRank {
            u: self.v.clone(),
            v: self.u.clone(),
        }
    }

    /// Truncated SVD of a dense block.
    pub fn from_dense(m: &DMatrix<f64>, eps: f64) -> LowRank {
        if m.nrows() == 0 || m.ncols() == 0 {
            return LowRank::zero(m.nrows(), m.ncols());
        }
        let svd = SVD::new(m.clone(), true, true);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let r = truncation_rank(svd.singular_values.as_slice(), eps, m.nrows().max(m.ncols()));
        let mut uu = u.columns(0, r).into_owned();
        for c in 0..r {
            uu.column_mut(c).scale_mut(svd.singular_values[c]);
        }
        LowRank::new(uu, vt.rows(0, r).transpose())
    }

    /// Sum of two factorisations (ranks add, no truncation).
    pub fn concat(&self, other: &LowRank) -> LowRank {
        let (m, n) = (self.nrows(), self.ncols());
        let (k1, k2) = (self.rank(), other.rank());
        let mut u = DMatrix::zeros(m, k1 + k2);
        let mut v = DMatrix::zeros(n, k1 + k2);
        u.columns_mut(0, k1).copy_from(&self.u);
        u.columns_mut(k1, k2).copy_from(&other.u);
        v.columns_mut(0, k1).copy_from(&self.v);
        v.columns_mut(k1, k2).copy_from(&other.v);
        LowRank { u, v }
    }

    pub fn scaled(mut self, s: f64) -> LowRank {
        self.u *= s;
        self
    }
}

/// Smallest rank `r` whose discarded singular values carry at most an `eps`
/// fraction of the Frobenius norm. `eps = 0` keeps the numerical rank.
pub fn truncation_rank(sigma: &[f64], eps: f64, dim: usize) -> usize {
    let Some(&s0) = sigma.first() else {
        return 0;
    };
    if s0 == 0.0 {
        return 0;
    }
    let floor = s0 * dim as f64 * f64::EPSILON;
    let numerical = sigma.iter().take_while(|&&s| s > floor).count();
    if eps <= 0.0 {
        return numerical;
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let budget = eps * eps * total;
    let mut tail = 0.0;
    let mut r = sigma.len();
    while r > 0 {
        let s = sigma[r - 1];
        if tail + s * s > budget {
            break;
        }
        tail += s * s;
        r -= 1;
    }
    r.min(numerical)
}

/// Optimal recompression of `u vᵀ`: QR of both factors, SVD of the small
/// core, truncation at relative Frobenius tolerance `eps`.
pub fn svd_recompress(lr: &LowRank, eps: f64) -> LowRank {
    let (m, n, k) = (lr.nrows(), lr.ncols(), lr.rank());
    if k == 0 || m == 0 || n == 0 {
        return LowRank::zero(m, n);
    }
    let qru = lr.u.clone().qr();
    let qrv = lr.v.clone().qr();
    let (qu, ru) = (qru.q(), qru.r());
    let (qv, rv) = (qrv.q(), qrv.r());
    let core = &ru * rv.transpose();
    let svd = SVD::new(core, true, true);
    let w = svd.u.unwrap();
    let zt = svd.v_t.unwrap();
    let r = truncation_rank(svd.singular_values.as_slice(), eps, m.max(n));
    let mut wu = w.columns(0, r).into_owned();
    for c in 0..r {
        wu.column_mut(c).scale_mut(svd.singular_values[c]);
    }
    LowRank {
        u: qu * wu,
        v: qv * zt.rows(0, r).transpose(),
    }
}
