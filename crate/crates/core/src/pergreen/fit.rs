use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{basis_len, fourier_reference, solid_harmonics_grad, PeriodicGreenExpansion, PgError, Variant, MAX_DEGREE};
use crate::geometry::Vec3;
use crate::quadrature::gauss_legendre_interval;

/// Point at which the additive constant is matched to the spectral sum.
pub const GAUGE_PROBE: [f64; 3] = [0.25, 0.25, 0.25];

const GAUGE_MODES: usize = 64;
const DEFECT_GRID: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(rename = "L")]
    pub degree: usize,
    pub variant: Variant,
    pub q: usize,
    pub rows: usize,
    pub unknowns: usize,
    /// Weighted residual norm of the least-squares problem.
    pub residual: f64,
    /// Largest value jump across opposite faces on a uniform test grid.
    pub value_defect: f64,
    /// Largest normal-derivative jump on the same grid.
    pub flux_defect: f64,
    pub defect: f64,
}

/// Smallest Gauss order whose `6q²` samples (value and normal derivative
/// on three face pairs) are at least four times `(L+1)²`.
pub fn default_quadrature_order(degree: usize) -> usize {
    let need = 4 * basis_len(degree);
    let mut q = 1;
    while 6 * q * q < need {
        q += 1;
    }
    q
}

/// Samples on face pair `axis`: point on the lower face, its translate on
/// the upper face, and the square-root quadrature weight.
fn face_samples(axis: usize, q: usize) -> Vec<(Vec3, Vec3, f64)> {
    let (t, w) = gauss_legendre_interval(q, -0.5, 0.5);
    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut out = Vec::with_capacity(q * q);
    for i in 0..q {
        for j in 0..q {
            let mut lo = Vec3::zeros();
            lo[axis] = -0.5;
            lo[a] = t[i];
            lo[b] = t[j];
            let mut hi = lo;
            hi[axis] = 0.5;
            out.push((lo, hi, (w[i] * w[j]).sqrt()));
        }
    }
    out
}

/// Fits the harmonic coefficients for degree `degree`. `q` defaults to
/// [`default_quadrature_order`]. The degree-0 coefficient is left at zero;
/// the additive constant is set so that the expansion matches
/// [`fourier_reference`] at [`GAUGE_PROBE`].
pub fn fit_expansion(
    degree: usize,
    q: Option<usize>,
    variant: Variant,
) -> Result<(PeriodicGreenExpansion, FitReport), PgError> {
    if degree > MAX_DEGREE {
        return Err(PgError::DegreeTooLarge(degree));
    }
    let q = q.unwrap_or_else(|| default_quadrature_order(degree));
    let rows = 6 * q * q;
    let needed = 2 * basis_len(degree);
    if rows < needed {
        return Err(PgError::InsufficientQuadrature { q, rows, needed });
    }
    let n = basis_len(degree) - 1;
    let bare = PeriodicGreenExpansion::new(degree, variant, vec![0.0; basis_len(degree)], 0.0);

    let mut a = DMatrix::zeros(rows, n);
    let mut rhs = DVector::zeros(rows);
    let (mut vp, mut gp, mut vm, mut gm) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut r = 0;
    for axis in 0..3 {
        for (lo, hi, w) in face_samples(axis, q) {
            solid_harmonics_grad(degree, &hi, &mut vp, &mut gp);
            solid_harmonics_grad(degree, &lo, &mut vm, &mut gm);
            for c in 0..n {
                a[(r, c)] = w * (vp[c + 1] - vm[c + 1]);
                a[(r + 1, c)] = w * (gp[c + 1][axis] - gm[c + 1][axis]);
            }
            rhs[r] = -w * (bare.singular_part(&hi) - bare.singular_part(&lo));
            rhs[r + 1] = -w * (bare.singular_part_grad(&hi)[axis] - bare.singular_part_grad(&lo)[axis]);
            r += 2;
        }
    }

    let mut beta = vec![0.0; basis_len(degree)];
    let mut residual = rhs.norm();
    if n > 0 {
        let scale: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
        for (j, s) in scale.iter().enumerate() {
            if *s == 0.0 {
                return Err(PgError::RankDeficient { column: j + 1 });
            }
            a.column_mut(j).unscale_mut(*s);
        }
        let qr = a.clone().qr();
        let rm = qr.r();
        let rmax = rm.diagonal().amax();
        for j in 0..n {
            if rm[(j, j)].abs() <= 1e-12 * rmax {
                return Err(PgError::RankDeficient { column: j + 1 });
            }
        }
        let y = qr.q().transpose() * &rhs;
        let x = rm.solve_upper_triangular(&y).ok_or(PgError::RankDeficient { column: 0 })?;
        residual = (&a * &x - &rhs).norm();
        for j in 0..n {
            beta[j + 1] = x[j] / scale[j];
        }
    }

    let mut exp = PeriodicGreenExpansion::new(degree, variant, beta, 0.0);
    let probe = Vec3::from(GAUGE_PROBE);
    exp.gauge_constant = fourier_reference(&probe, GAUGE_MODES) - exp.eval_raw(&probe);
    let (value_defect, flux_defect) = periodicity_defect(&exp, DEFECT_GRID);
    let report = FitReport {
        degree,
        variant,
        q,
        rows,
        unknowns: n,
        residual,
        value_defect,
        flux_defect,
        defect: value_defect.max(flux_defect),
    };
    log::debug!("periodic Green fit L={degree} q={q}: defect {:.3e}", report.defect);
    Ok((exp, report))
}

/// Largest jumps of value and normal derivative across the three face
/// pairs, sampled at the midpoints of an `n × n` grid.
pub fn periodicity_defect(exp: &PeriodicGreenExpansion, n: usize) -> (f64, f64) {
    let mut dv: f64 = 0.0;
    let mut dg: f64 = 0.0;
    for axis in 0..3 {
        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
        for i in 0..n {
            for j in 0..n {
                let mut lo = Vec3::zeros();
                lo[axis] = -0.5;
                lo[a] = -0.5 + (i as f64 + 0.5) / n as f64;
                lo[b] = -0.5 + (j as f64 + 0.5) / n as f64;
                let mut hi = lo;
                hi[axis] = 0.5;
                dv = dv.max((exp.eval_raw(&hi) - exp.eval_raw(&lo)).abs());
                dg = dg.max((exp.grad_raw(&hi)[axis] - exp.grad_raw(&lo)[axis]).abs());
            }
        }
    }
    (dv, dg)
}

/// Fit reports for each degree, with default quadrature orders.
pub fn convergence_study(degrees: &[usize], variant: Variant) -> Result<Vec<FitReport>, PgError> {
    degrees.iter().map(|&l| fit_expansion(l, None, variant).map(|(_, r)| r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pergreen::basis_index;

    fn coefficient(exp: &PeriodicGreenExpansion, l: usize, m: i64) -> f64 {
        exp.beta[basis_index(l, m)]
    }

    #[test]
    fn quadrature_order_rule() {
        assert_eq!(default_quadrature_order(9), 9);
        assert_eq!(default_quadrature_order(8), 8);
        for l in 0..12 {
            let q = default_quadrature_order(l);
            assert!(6 * q * q >= 4 * basis_len(l));
            assert!(q == 1 || 6 * (q - 1) * (q - 1) < 4 * basis_len(l));
        }
    }

    #[test]
    fn too_few_samples_is_an_error() {
        assert!(matches!(
            fit_expansion(9, Some(3), Variant::ImageCorrected),
            Err(PgError::InsufficientQuadrature { q: 3, .. })
        ));
    }

    #[test]
    fn degree_limit() {
        assert_eq!(fit_expansion(MAX_DEGREE + 1, None, Variant::Plain).unwrap_err(), PgError::DegreeTooLarge(MAX_DEGREE + 1));
    }

    #[test]
    fn degree_zero_baseline() {
        let (e, r) = fit_expansion(0, None, Variant::ImageCorrected).unwrap();
        assert_eq!(e.beta, vec![0.0]);
        assert_eq!(r.unknowns, 0);
        let (_, plain) = fit_expansion(0, None, Variant::Plain).unwrap();
        assert!(r.defect < plain.defect);
        assert!(r.defect < 0.1, "{}", r.defect);
    }

    #[test]
    fn odd_and_low_order_coefficients_vanish() {
        let (e, _) = fit_expansion(9, None, Variant::ImageCorrected).unwrap();
        for l in [1usize, 2, 3, 5, 7, 9] {
            for m in -(l as i64)..=(l as i64) {
                assert!(coefficient(&e, l, m).abs() < 1e-8, "l={l} m={m}: {}", coefficient(&e, l, m));
            }
        }
        assert!(coefficient(&e, 4, 0).abs() > 1e-6);
    }

    #[test]
    fn defect_decreases_with_fixed_quadrature() {
        let mut prev = f64::INFINITY;
        for l in [2, 4, 6, 8] {
            let (_, r) = fit_expansion(l, Some(10), Variant::ImageCorrected).unwrap();
            assert!(r.residual < prev, "L={l}");
            prev = r.residual;
        }
    }

    #[test]
    fn gauge_matches_probe() {
        let (e, _) = fit_expansion(4, None, Variant::ImageCorrected).unwrap();
        let p = Vec3::from(GAUGE_PROBE);
        assert!((e.eval(&p).unwrap() - fourier_reference(&p, GAUGE_MODES)).abs() < 1e-14);
    }
}
