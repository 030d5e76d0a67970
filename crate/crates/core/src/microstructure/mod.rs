//! Particulate microstructures: spheres in a spherical RVE or in the periodic
//! unit cube, their random generation, and boundary triangulation.

mod mesh;
mod rsa;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{lattice_shifts, Vec3};

pub use mesh::{icosphere_mesh, TriangleMesh};
pub use rsa::{generate_rsa, generate_rsa_with, RsaOptions};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid radius {0} (must be positive and finite)")]
    InvalidRadius(f64),
    #[error("invalid diffusion coefficient {0} (must be positive and finite)")]
    InvalidKappa(f64),
    #[error("spheres {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("sphere {0} is not strictly inside the domain")]
    OutsideDomain(usize),
    #[error("placement failure: only {placed} of {requested} spheres fit after exhausting the attempt budget")]
    PlacementFailure { placed: usize, requested: usize },
    #[error("radius list has {got} entries, expected {expected}")]
    RadiusCount { got: usize, expected: usize },
    #[error("malformed microstructure document: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
    pub kappa: f64,
}

impl Sphere {
    pub fn new(center: Vec3, radius: f64, kappa: f64) -> Self {
        Self { center, radius, kappa }
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius.powi(3)
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (x - self.center).norm() < self.radius
    }
}

/// The representative volume element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domain {
    /// Ball of the given radius centred at the origin.
    Ball { radius: f64 },
    /// The unit cell `(-1/2, 1/2)^3` with periodic boundary conditions.
    PeriodicCube,
}

impl Domain {
    /// Ball whose volume is one.
    pub fn unit_volume_ball() -> Self {
        Domain::Ball {
            radius: (3.0 / (4.0 * PI)).cbrt(),
        }
    }

    pub fn volume(&self) -> f64 {
        match *self {
            Domain::Ball { radius } => 4.0 / 3.0 * PI * radius.powi(3),
            Domain::PeriodicCube => 1.0,
        }
    }

    /// True when the sphere lies strictly inside the domain.
    pub fn contains_sphere(&self, s: &Sphere) -> bool {
        match *self {
            Domain::Ball { radius } => s.center.norm() + s.radius < radius,
            Domain::PeriodicCube => s.center.iter().all(|c| c.abs() + s.radius < 0.5),
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Domain::PeriodicCube)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Microstructure {
    pub domain: Domain,
    pub kappa_matrix: f64,
    pub spheres: Vec<Sphere>,
}

impl Microstructure {
    /// Builds and validates a microstructure.
    pub fn new(domain: Domain, kappa_matrix: f64, spheres: Vec<Sphere>) -> Result<Self, GeometryError> {
        let ms = Self {
            domain,
            kappa_matrix,
            spheres,
        };
        ms.validate()?;
        Ok(ms)
    }

    pub fn empty(domain: Domain, kappa_matrix: f64) -> Self {
        Self {
            domain,
            kappa_matrix,
            spheres: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.spheres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty()
    }

    /// Exhaustive O(n²) check of every invariant: positive radii and
    /// coefficients, containment, pairwise non-overlap (against the 26
    /// neighbouring images as well in the periodic case).
    pub fn validate(&self) -> Result<(), GeometryError> {
        if let Domain::Ball { radius } = self.domain {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(GeometryError::InvalidRadius(radius));
            }
        }
        if !(self.kappa_matrix > 0.0 && self.kappa_matrix.is_finite()) {
            return Err(GeometryError::InvalidKappa(self.kappa_matrix));
        }
        for (i, s) in self.spheres.iter().enumerate() {
            if !(s.radius > 0.0 && s.radius.is_finite()) {
                return Err(GeometryError::InvalidRadius(s.radius));
            }
            if !(s.kappa > 0.0 && s.kappa.is_finite()) {
                return Err(GeometryError::InvalidKappa(s.kappa));
            }
            if !self.domain.contains_sphere(s) {
                return Err(GeometryError::OutsideDomain(i));
            }
        }
        let periodic = self.domain.is_periodic();
        for i in 0..self.spheres.len() {
            for j in (i + 1)..self.spheres.len() {
                let (a, b) = (&self.spheres[i], &self.spheres[j]);
                let d = center_distance(&a.center, &b.center, periodic);
                if d <= a.radius + b.radius {
                    return Err(GeometryError::Overlap(i, j));
                }
            }
        }
        Ok(())
    }

    /// Total inclusion volume over domain volume.
    pub fn volume_fraction(&self) -> f64 {
        self.spheres.iter().map(Sphere::volume).sum::<f64>() / self.domain.volume()
    }

    /// Diffusion coefficient at a point.
    pub fn kappa_at(&self, x: &Vec3) -> f64 {
        self.spheres
            .iter()
            .find(|s| s.contains(x))
            .map_or(self.kappa_matrix, |s| s.kappa)
    }

    /// Copy with every inclusion coefficient replaced.
    pub fn with_inclusion_kappa(&self, kappa: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.spheres {
            s.kappa = kappa;
        }
        out
    }

    pub fn centers(&self) -> Vec<Vec3> {
        self.spheres.iter().map(|s| s.center).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("microstructure serialises")
    }

    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let ms: Microstructure = serde_json::from_str(text)?;
        ms.validate()?;
        Ok(ms)
    }
}

/// Centre distance, minimised over the 27 nearest images when `periodic`.
pub(crate) fn center_distance(a: &Vec3, b: &Vec3, periodic: bool) -> f64 {
    if periodic {
        lattice_shifts()
            .map(|n| (a - b - n).norm())
            .fold(f64::INFINITY, f64::min)
    } else {
        (a - b).norm()
    }
}

pub fn volume_fraction(ms: &Microstructure) -> f64 {
    ms.volume_fraction()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_has_zero_fraction() {
        let ms = Microstructure::empty(Domain::Ball { radius: 1.0 }, 1.0);
        assert_eq!(volume_fraction(&ms), 0.0);
    }

    #[test]
    fn half_radius_sphere_in_unit_ball() {
        let ms = Microstructure::new(
            Domain::Ball { radius: 1.0 },
            1.0,
            vec![Sphere::new(Vec3::zeros(), 0.5, 100.0)],
        )
        .unwrap();
        assert!((volume_fraction(&ms) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn overlap_is_rejected() {
        let err = Microstructure::new(
            Domain::Ball { radius: 1.0 },
            1.0,
            vec![
                Sphere::new(Vec3::new(0.1, 0.0, 0.0), 0.2, 2.0),
                Sphere::new(Vec3::new(-0.1, 0.0, 0.0), 0.2, 2.0),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::Overlap(0, 1)));
    }

    #[test]
    fn touching_spheres_count_as_overlap() {
        let err = Microstructure::new(
            Domain::Ball { radius: 1.0 },
            1.0,
            vec![
                Sphere::new(Vec3::new(0.25, 0.0, 0.0), 0.25, 2.0),
                Sphere::new(Vec3::new(-0.25, 0.0, 0.0), 0.25, 2.0),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::Overlap(..)));
    }

    #[test]
    fn image_distance_wraps_through_faces() {
        let a = Vec3::new(0.45, 0.0, 0.0);
        let b = Vec3::new(-0.45, 0.0, 0.0);
        assert!((center_distance(&a, &b, false) - 0.9).abs() < 1e-12);
        assert!((center_distance(&a, &b, true) - 0.1).abs() < 1e-12);
        let ms = Microstructure {
            domain: Domain::PeriodicCube,
            kappa_matrix: 1.0,
            spheres: vec![
                Sphere::new(a, 0.049, 2.0),
                Sphere::new(b, 0.049, 2.0),
            ],
        };
        assert!(ms.validate().is_ok());
    }

    #[test]
    fn sphere_outside_ball_rejected() {
        let err = Microstructure::new(
            Domain::Ball { radius: 1.0 },
            1.0,
            vec![Sphere::new(Vec3::new(0.9, 0.0, 0.0), 0.2, 2.0)],
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::OutsideDomain(0)));
    }

    #[test]
    fn json_schema_round_trip() {
        let ms = Microstructure::new(
            Domain::PeriodicCube,
            1.0,
            vec![Sphere::new(Vec3::new(0.1, -0.2, 0.05), 0.1, 100.0)],
        )
        .unwrap();
        let text = ms.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["domain"]["kind"], "periodic-cube");
        assert_eq!(v["spheres"][0]["center"][1], -0.2);
        assert_eq!(v["kappa_matrix"], 1.0);
        assert_eq!(Microstructure::from_json(&text).unwrap(), ms);

        let ball = r#"{"domain":{"kind":"ball","radius":2.0},"kappa_matrix":1.0,
            "spheres":[{"center":[0,0,0],"radius":0.5,"kappa":10.0}]}"#;
        let parsed = Microstructure::from_json(ball).unwrap();
        assert_eq!(parsed.domain, Domain::Ball { radius: 2.0 });
    }

    #[test]
    fn invalid_document_rejected() {
        let bad = r#"{"domain":{"kind":"ball","radius":1.0},"kappa_matrix":1.0,
            "spheres":[{"center":[0,0,0],"radius":-0.5,"kappa":10.0}]}"#;
        assert!(matches!(
            Microstructure::from_json(bad),
            Err(GeometryError::InvalidRadius(_))
        ));
        assert!(matches!(
            Microstructure::from_json("{"),
            Err(GeometryError::Parse(_))
        ));
    }
}
