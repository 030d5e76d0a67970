//! Random sequential adsorption with hard-sphere relaxation.
//!
//! Candidate centres are drawn uniformly over the admissible region and
//! rejected on overlap. When `max_attempts` consecutive candidates are
//! rejected, every placed sphere gets a few Metropolis hard-sphere moves
//! (which opens gaps without changing the density) and insertion resumes.
//! Generation fails after `relax_rounds` stalls for the same sphere.
//!
//! The stream comes from `ChaCha8Rng::seed_from_u64(seed)`, so a given seed
//! produces the same microstructure on every platform.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Domain, GeometryError, Microstructure, Sphere};
use crate::geometry::{lattice_shifts, Vec3};

#[derive(Debug, Clone)]
pub struct RsaOptions {
    pub count: usize,
    /// Common radius, used when `radii` is `None`.
    pub radius: f64,
    /// Optional per-sphere radii (length must equal `count`).
    pub radii: Option<Vec<f64>>,
    pub seed: u64,
    /// Consecutive rejected candidates before a relaxation round.
    pub max_attempts: usize,
    /// Relaxation rounds allowed per sphere before giving up.
    pub relax_rounds: usize,
    pub kappa_matrix: f64,
    pub kappa_inclusion: f64,
}

impl Default for RsaOptions {
    fn default() -> Self {
        Self {
            count: 0,
            radius: 0.1,
            radii: None,
            seed: 0,
            max_attempts: 10_000,
            relax_rounds: 50,
            kappa_matrix: 1.0,
            kappa_inclusion: 100.0,
        }
    }
}

/// Places `count` non-overlapping spheres of a common radius.
pub fn generate_rsa(
    domain: Domain,
    count: usize,
    radius: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<Microstructure, GeometryError> {
    let opts = RsaOptions {
        count,
        radius,
        seed,
        max_attempts,
        ..RsaOptions::default()
    };
    generate_rsa_with(domain, &opts)
}

pub fn generate_rsa_with(domain: Domain, opts: &RsaOptions) -> Result<Microstructure, GeometryError> {
    let radii = match &opts.radii {
        Some(r) if r.len() != opts.count => {
            return Err(GeometryError::RadiusCount {
                got: r.len(),
                expected: opts.count,
            })
        }
        Some(r) => r.clone(),
        None => vec![opts.radius; opts.count],
    };
    for &r in &radii {
        if !(r > 0.0 && r.is_finite()) {
            return Err(GeometryError::InvalidRadius(r));
        }
    }
    if let Domain::Ball { radius } = domain {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidRadius(radius));
        }
    }
    for k in [opts.kappa_matrix, opts.kappa_inclusion] {
        if !(k > 0.0 && k.is_finite()) {
            return Err(GeometryError::InvalidKappa(k));
        }
    }
    let mut ms = Microstructure::empty(domain, opts.kappa_matrix);
    if opts.count == 0 {
        return Ok(ms);
    }
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    let mut packer = Packer::new(domain, 2.0 * r_max, ChaCha8Rng::seed_from_u64(opts.seed));

    for (k, &r) in radii.iter().enumerate() {
        let mut placed = false;
        for _round in 0..=opts.relax_rounds {
            if packer.try_insert(r, opts.kappa_inclusion, opts.max_attempts) {
                placed = true;
                break;
            }
            packer.relax(4);
        }
        if !placed {
            return Err(GeometryError::PlacementFailure {
                placed: k,
                requested: opts.count,
            });
        }
    }
    ms.spheres = packer.spheres;
    debug_assert!(ms.validate().is_ok());
    Ok(ms)
}

type CellKey = (i64, i64, i64);

struct Packer {
    domain: Domain,
    cell: f64,
    rng: ChaCha8Rng,
    spheres: Vec<Sphere>,
    grid: HashMap<CellKey, Vec<usize>>,
}

impl Packer {
    fn new(domain: Domain, cell: f64, rng: ChaCha8Rng) -> Self {
        Self {
            domain,
            cell,
            rng,
            spheres: Vec::new(),
            grid: HashMap::new(),
        }
    }

    fn key(&self, c: &Vec3) -> CellKey {
        (
            (c.x / self.cell).floor() as i64,
            (c.y / self.cell).floor() as i64,
            (c.z / self.cell).floor() as i64,
        )
    }

    fn sample_center(&mut self, r: f64) -> Option<Vec3> {
        match self.domain {
            Domain::Ball { radius } => {
                let reach = radius - r;
                if reach <= 0.0 {
                    return None;
                }
                loop {
                    let p = Vec3::new(
                        self.rng.random_range(-1.0..1.0),
                        self.rng.random_range(-1.0..1.0),
                        self.rng.random_range(-1.0..1.0),
                    );
                    if p.norm_squared() <= 1.0 {
                        return Some(p * reach);
                    }
                }
            }
            Domain::PeriodicCube => {
                let h = 0.5 - r;
                if h <= 0.0 {
                    return None;
                }
                Some(Vec3::new(
                    self.rng.random_range(-h..h),
                    self.rng.random_range(-h..h),
                    self.rng.random_range(-h..h),
                ))
            }
        }
    }

    /// True when a sphere (`center`, `r`) overlaps any placed sphere other
    /// than `skip`, including periodic images.
    fn collides(&self, center: &Vec3, r: f64, skip: Option<usize>) -> bool {
        let periodic = self.domain.is_periodic();
        let reach = self.cell;
        let shifts: Vec<Vec3> = if periodic {
            lattice_shifts()
                .filter(|n| {
                    let q = center + n;
                    q.iter().all(|c| c.abs() < 0.5 + reach)
                })
                .collect()
        } else {
            vec![Vec3::zeros()]
        };
        for shift in shifts {
            let q = center + shift;
            let (kx, ky, kz) = self.key(&q);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(members) = self.grid.get(&(kx + dx, ky + dy, kz + dz)) else {
                            continue;
                        };
                        for &j in members {
                            if Some(j) == skip {
                                continue;
                            }
                            let s = &self.spheres[j];
                            if (q - s.center).norm() <= r + s.radius {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }

    fn try_insert(&mut self, r: f64, kappa: f64, max_attempts: usize) -> bool {
        for _ in 0..max_attempts {
            let Some(c) = self.sample_center(r) else {
                return false;
            };
            let s = Sphere::new(c, r, kappa);
            if !self.domain.contains_sphere(&s) || self.collides(&c, r, None) {
                continue;
            }
            let key = self.key(&c);
            self.grid.entry(key).or_default().push(self.spheres.len());
            self.spheres.push(s);
            return true;
        }
        false
    }

    /// Metropolis hard-sphere sweeps over every placed sphere.
    fn relax(&mut self, sweeps: usize) {
        for _ in 0..sweeps {
            for i in 0..self.spheres.len() {
                let s = self.spheres[i];
                let step = 0.5 * s.radius;
                let trial = s.center
                    + Vec3::new(
                        self.rng.random_range(-step..step),
                        self.rng.random_range(-step..step),
                        self.rng.random_range(-step..step),
                    );
                let moved = Sphere::new(trial, s.radius, s.kappa);
                if !self.domain.contains_sphere(&moved) || self.collides(&trial, s.radius, Some(i)) {
                    continue;
                }
                let old_key = self.key(&s.center);
                let new_key = self.key(&trial);
                if old_key != new_key {
                    if let Some(v) = self.grid.get_mut(&old_key) {
                        v.retain(|&j| j != i);
                    }
                    self.grid.entry(new_key).or_default().push(i);
                }
                self.spheres[i].center = trial;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_count_is_empty() {
        let ms = generate_rsa(Domain::Ball { radius: 1.0 }, 0, 0.1, 3, 100).unwrap();
        assert!(ms.is_empty());
    }

    #[test]
    fn single_large_sphere_is_contained() {
        let ms = generate_rsa(Domain::Ball { radius: 1.0 }, 1, 0.5, 7, 100).unwrap();
        assert_eq!(ms.len(), 1);
        assert!(ms.spheres[0].center.norm() <= 0.5);
    }

    #[test]
    fn invalid_radius_rejected() {
        assert!(matches!(
            generate_rsa(Domain::Ball { radius: 1.0 }, 3, -0.1, 0, 100),
            Err(GeometryError::InvalidRadius(_))
        ));
        assert!(matches!(
            generate_rsa(Domain::Ball { radius: 1.0 }, 3, f64::NAN, 0, 100),
            Err(GeometryError::InvalidRadius(_))
        ));
    }

    #[test]
    fn radius_list_length_checked() {
        let opts = RsaOptions {
            count: 3,
            radii: Some(vec![0.1, 0.1]),
            ..RsaOptions::default()
        };
        assert!(matches!(
            generate_rsa_with(Domain::PeriodicCube, &opts),
            Err(GeometryError::RadiusCount { got: 2, expected: 3 })
        ));
    }

    #[test]
    fn infeasible_density_fails() {
        // 60% in a ball is far beyond any random packing.
        let r = (0.6f64 / 100.0).cbrt();
        let opts = RsaOptions {
            count: 100,
            radius: r,
            max_attempts: 200,
            relax_rounds: 3,
            ..RsaOptions::default()
        };
        let err = generate_rsa_with(Domain::Ball { radius: 1.0 }, &opts).unwrap_err();
        assert!(matches!(err, GeometryError::PlacementFailure { requested: 100, .. }));
    }

    #[test]
    fn same_seed_same_packing() {
        let a = generate_rsa(Domain::PeriodicCube, 30, 0.07, 11, 1000).unwrap();
        let b = generate_rsa(Domain::PeriodicCube, 30, 0.07, 11, 1000).unwrap();
        let c = generate_rsa(Domain::PeriodicCube, 30, 0.07, 12, 1000).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn polydisperse_radii_honoured() {
        let radii: Vec<f64> = (0..20).map(|k| 0.04 + 0.002 * k as f64).collect();
        let opts = RsaOptions {
            count: 20,
            radii: Some(radii.clone()),
            seed: 5,
            ..RsaOptions::default()
        };
        let ms = generate_rsa_with(Domain::PeriodicCube, &opts).unwrap();
        ms.validate().unwrap();
        for (s, r) in ms.spheres.iter().zip(&radii) {
            assert_eq!(s.radius, *r);
        }
    }
}
