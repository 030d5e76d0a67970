//! Spectral evaluation of the periodic Green's function, for validation.

use std::f64::consts::PI;

use nalgebra::Complex;

use crate::geometry::Vec3;

/// Truncated lattice sum `Σ_{0<|k|∞≤K} cos(2πk·x)/(4π²|k|²)`.
///
/// The terms carry a Gaussian damping `exp(-4π²|k|²t)` with
/// `t = 36/(4π²K²)`, and the sum is shifted by `-t`. Away from the lattice
/// points this removes the truncation error up to `exp(-|x|²/4t)`, while
/// the raw series converges only conditionally.
pub fn fourier_reference(x: &Vec3, k_max: usize) -> f64 {
    let k = k_max as i64;
    let four_pi2 = 4.0 * PI * PI;
    let t = 36.0 / (four_pi2 * (k * k) as f64);
    let n = (2 * k + 1) as usize;
    let phase = |c: f64| -> Vec<Complex<f64>> {
        (-k..=k)
            .map(|j| Complex::from_polar(1.0, 2.0 * PI * j as f64 * c))
            .collect()
    };
    let (ex, ey, ez) = (phase(x.x), phase(x.y), phase(x.z));
    let damp: Vec<f64> = (-k..=k).map(|j| (-four_pi2 * t * (j * j) as f64).exp()).collect();
    let mut sum = 0.0;
    for a in 0..n {
        let ka = a as i64 - k;
        for b in 0..n {
            let kb = b as i64 - k;
            let pab = ex[a] * ey[b];
            let dab = damp[a] * damp[b];
            let k2ab = ka * ka + kb * kb;
            let mut row = 0.0;
            for c in 0..n {
                let kc = c as i64 - k;
                let k2 = k2ab + kc * kc;
                if k2 == 0 {
                    continue;
                }
                row += (pab * ez[c]).re * damp[c] / k2 as f64;
            }
            sum += dab * row;
        }
    }
    sum / four_pi2 - t
}
