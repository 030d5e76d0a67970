//! Real regular solid harmonics `r^l Y_l^m` and their gradients.
//!
//! Basis index of `(l, m)` is `l² + l + m`. Negative orders hold the sine
//! part, non-negative orders the cosine part. Each function is scaled by
//! `sqrt((l-|m|)!/(l+|m|)!)` so that its magnitude is bounded by `r^l`.

use std::sync::OnceLock;

use nalgebra::Complex;

use super::PgError;
use crate::geometry::Vec3;

type C = Complex<f64>;

pub fn basis_len(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

pub fn basis_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

fn check(l: usize, m: i64) -> Result<(), PgError> {
    if m.unsigned_abs() as usize > l {
        return Err(PgError::HarmonicIndex { l, m });
    }
    Ok(())
}

fn scale(l: usize, m: usize) -> f64 {
    if l <= MAX_DEGREE {
        return scale_table()[l * (MAX_DEGREE + 1) + m];
    }
    scale_direct(l, m)
}

fn scale_direct(l: usize, m: usize) -> f64 {
    let mut s = 1.0;
    for k in (l - m + 1)..=(l + m) {
        s /= k as f64;
    }
    s.sqrt()
}

fn scale_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = MAX_DEGREE + 1;
        let mut t = vec![0.0; n * n];
        for l in 0..n {
            for m in 0..=l {
                t[l * n + m] = scale_direct(l, m);
            }
        }
        t
    })
}

/// Complex harmonics `Q_l^m = r^l P_l^m(cos θ) e^{imφ}` for `m ≥ 0`,
/// with optional gradients, stored as `[l][m]`.
struct Table {
    degree: usize,
    q: Vec<C>,
    g: Vec<[C; 3]>,
}

impl Table {
    fn at(&self, l: usize, m: usize) -> usize {
        l * (self.degree + 1) + m
    }

    fn build(degree: usize, x: &Vec3, grad: bool) -> Self {
        let n = (degree + 1) * (degree + 1);
        let zero = C::new(0.0, 0.0);
        let mut t = Table {
            degree,
            q: vec![zero; n],
            g: if grad { vec![[zero; 3]; n] } else { Vec::new() },
        };
        let xy = C::new(x.x, x.y);
        let z = x.z;
        let r2 = x.norm_squared();
        let i0 = t.at(0, 0);
        t.q[i0] = C::new(1.0, 0.0);
        for m in 0..=degree {
            if m > 0 {
                let (p, c) = (t.at(m - 1, m - 1), t.at(m, m));
                let f = (2 * m - 1) as f64;
                t.q[c] = xy * t.q[p] * f;
                if grad {
                    let gp = t.g[p];
                    let qp = t.q[p];
                    t.g[c] = [
                        (xy * gp[0] + qp) * f,
                        (xy * gp[1] + qp * C::new(0.0, 1.0)) * f,
                        xy * gp[2] * f,
                    ];
                }
            }
            if m < degree {
                let (p, c) = (t.at(m, m), t.at(m + 1, m));
                let f = (2 * m + 1) as f64;
                t.q[c] = t.q[p] * (z * f);
                if grad {
                    let gp = t.g[p];
                    let qp = t.q[p];
                    t.g[c] = [gp[0] * (z * f), gp[1] * (z * f), (gp[2] * z + qp) * f];
                }
            }
            for l in (m + 2)..=degree {
                let (p1, p2, c) = (t.at(l - 1, m), t.at(l - 2, m), t.at(l, m));
                let a = (2 * l - 1) as f64;
                let b = (l + m - 1) as f64;
                let d = (l - m) as f64;
                t.q[c] = (t.q[p1] * (a * z) - t.q[p2] * (b * r2)) / d;
                if grad {
                    let (g1, g2) = (t.g[p1], t.g[p2]);
                    let (q1, q2) = (t.q[p1], t.q[p2]);
                    let mut out = [zero; 3];
                    for k in 0..3 {
                        let dz = if k == 2 { q1 } else { zero };
                        out[k] = ((g1[k] * z + dz) * a - (g2[k] * r2 + q2 * (2.0 * x[k])) * b) / d;
                    }
                    t.g[c] = out;
                }
            }
        }
        t
    }
}

/// Values of every basis function up to `degree` at `x`.
pub fn solid_harmonics(degree: usize, x: &Vec3, out: &mut Vec<f64>) {
    let t = Table::build(degree, x, false);
    out.clear();
    out.resize(basis_len(degree), 0.0);
    for l in 0..=degree {
        for m in 0..=l {
            let v = t.q[t.at(l, m)] * scale(l, m);
            out[basis_index(l, m as i64)] = v.re;
            if m > 0 {
                out[basis_index(l, -(m as i64))] = v.im;
            }
        }
    }
}

/// Values and gradients of every basis function up to `degree` at `x`.
pub fn solid_harmonics_grad(degree: usize, x: &Vec3, values: &mut Vec<f64>, grads: &mut Vec<Vec3>) {
    let t = Table::build(degree, x, true);
    values.clear();
    values.resize(basis_len(degree), 0.0);
    grads.clear();
    grads.resize(basis_len(degree), Vec3::zeros());
    for l in 0..=degree {
        for m in 0..=l {
            let s = scale(l, m);
            let i = t.at(l, m);
            let v = t.q[i] * s;
            let g = t.g[i];
            values[basis_index(l, m as i64)] = v.re;
            grads[basis_index(l, m as i64)] = Vec3::new(g[0].re, g[1].re, g[2].re) * s;
            if m > 0 {
                values[basis_index(l, -(m as i64))] = v.im;
                grads[basis_index(l, -(m as i64))] = Vec3::new(g[0].im, g[1].im, g[2].im) * s;
            }
        }
    }
}

/// Largest degree supported by [`fill_solid_harmonics`].
pub const MAX_DEGREE: usize = 20;

/// Allocation-free variant of [`solid_harmonics`] writing the first
/// `(degree+1)²` entries of `out`.
pub fn fill_solid_harmonics(degree: usize, x: &Vec3, out: &mut [f64]) {
    let xy = C::new(x.x, x.y);
    let (z, r2) = (x.z, x.norm_squared());
    let mut qmm = C::new(1.0, 0.0);
    for m in 0..=degree {
        if m > 0 {
            qmm = xy * qmm * (2 * m - 1) as f64;
        }
        let mut prev2 = C::new(0.0, 0.0);
        let mut prev1 = qmm;
        for l in m..=degree {
            let q = if l == m {
                qmm
            } else if l == m + 1 {
                qmm * (z * (2 * m + 1) as f64)
            } else {
                (prev1 * ((2 * l - 1) as f64 * z) - prev2 * ((l + m - 1) as f64 * r2)) / (l - m) as f64
            };
            if l > m {
                prev2 = prev1;
                prev1 = q;
            }
            let v = q * scale(l, m);
            out[basis_index(l, m as i64)] = v.re;
            if m > 0 {
                out[basis_index(l, -(m as i64))] = v.im;
            }
        }
    }
}

/// Single real solid harmonic of degree `l` and order `m`.
pub fn solid_harmonic(l: usize, m: i64, x: &Vec3) -> Result<f64, PgError> {
    check(l, m)?;
    let mut v = Vec::new();
    solid_harmonics(l, x, &mut v);
    Ok(v[basis_index(l, m)])
}

pub fn solid_harmonic_grad(l: usize, m: i64, x: &Vec3) -> Result<Vec3, PgError> {
    check(l, m)?;
    let (mut v, mut g) = (Vec::new(), Vec::new());
    solid_harmonics_grad(l, x, &mut v, &mut g);
    Ok(g[basis_index(l, m)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng) -> Vec3 {
        Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
    }

    #[test]
    fn degree_zero_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(solid_harmonic(0, 0, &random_point(&mut rng)).unwrap(), 1.0);
        }
    }

    #[test]
    fn degree_one_spans_coordinates() {
        let x = Vec3::new(0.3, -0.2, 0.7);
        let v: Vec<f64> = (-1..=1).map(|m| solid_harmonic(1, m, &x).unwrap()).collect();
        assert_eq!(v[1], 0.7);
        assert!((v[0] - -0.2 * (0.5f64).sqrt()).abs() < 1e-15);
        assert!((v[2] - 0.3 * (0.5f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bad_index_is_rejected() {
        assert!(matches!(solid_harmonic(2, 3, &Vec3::zeros()), Err(PgError::HarmonicIndex { l: 2, m: 3 })));
        assert!(solid_harmonic(2, -3, &Vec3::zeros()).is_err());
    }

    #[test]
    fn harmonic_by_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-4;
        for _ in 0..20 {
            let x = random_point(&mut rng);
            let mut c = Vec::new();
            solid_harmonics(6, &x, &mut c);
            let mut lap = vec![0.0; c.len()];
            for k in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut y = x;
                    y[k] += s * h;
                    let mut v = Vec::new();
                    solid_harmonics(6, &y, &mut v);
                    for (a, b) in lap.iter_mut().zip(&v) {
                        *a += b;
                    }
                }
            }
            for (a, b) in lap.iter_mut().zip(&c) {
                *a = (*a - 6.0 * b) / (h * h);
            }
            for (i, a) in lap.iter().enumerate() {
                assert!(a.abs() <= 1e-6, "basis {i}: laplacian {a}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..10 {
            let x = random_point(&mut rng);
            let (mut v, mut g) = (Vec::new(), Vec::new());
            solid_harmonics_grad(9, &x, &mut v, &mut g);
            let mut plain = Vec::new();
            solid_harmonics(9, &x, &mut plain);
            assert_eq!(v, plain);
            let mut fast = vec![0.0; v.len()];
            fill_solid_harmonics(9, &x, &mut fast);
            for (a, b) in fast.iter().zip(&v) {
                assert!((a - b).abs() <= 1e-15 * (1.0 + b.abs()));
            }
            for k in 0..3 {
                let (mut p, mut m) = (x, x);
                p[k] += h;
                m[k] -= h;
                let (mut vp, mut vm) = (Vec::new(), Vec::new());
                solid_harmonics(9, &p, &mut vp);
                solid_harmonics(9, &m, &mut vm);
                for i in 0..v.len() {
                    let fd = (vp[i] - vm[i]) / (2.0 * h);
                    assert!((fd - g[i][k]).abs() < 1e-8, "basis {i} axis {k}: {fd} vs {}", g[i][k]);
                }
            }
        }
    }

    #[test]
    fn bounded_by_radius_power() {
        let x = Vec3::new(0.5, 0.5, 0.5);
        let r = x.norm();
        let mut v = Vec::new();
        solid_harmonics(9, &x, &mut v);
        for l in 0..=9usize {
            for m in -(l as i64)..=(l as i64) {
                assert!(v[basis_index(l, m)].abs() <= r.powi(l as i32) * (1.0 + 1e-12));
            }
        }
    }
}
