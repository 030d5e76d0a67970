//! Small geometric helpers shared by the cluster tree and the kernels.

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// Smallest box containing every point. Returns `None` for an empty slice.
    pub fn from_points<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Vec3>,
    {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let mut bb = Aabb::new(first, first);
        for p in iter {
            bb.min = bb.min.inf(p);
            bb.max = bb.max.sup(p);
        }
        Some(bb)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    /// Length of the box diagonal.
    pub fn diam(&self) -> f64 {
        self.extent().norm()
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.min + self.max)
    }

    /// Index of the longest side (ties resolved towards the lower axis).
    pub fn longest_axis(&self) -> usize {
        let e = self.extent();
        let mut axis = 0;
        for k in 1..3 {
            if e[k] > e[axis] {
                axis = k;
            }
        }
        axis
    }

    /// Euclidean distance between two boxes (zero when they intersect).
    pub fn dist(&self, other: &Aabb) -> f64 {
        self.dist_shifted(other, &Vec3::zeros())
    }

    /// Distance between `self` and `other` translated by `shift`.
    pub fn dist_shifted(&self, other: &Aabb, shift: &Vec3) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let lo = other.min[k] + shift[k];
            let hi = other.max[k] + shift[k];
            let gap = (lo - self.max[k]).max(self.min[k] - hi).max(0.0);
            d2 += gap * gap;
        }
        d2.sqrt()
    }

    /// Distance on the unit-period torus: minimum over the 27 nearest
    /// lattice translates of `other`.
    pub fn periodic_dist(&self, other: &Aabb) -> f64 {
        let mut best = f64::INFINITY;
        for shift in lattice_shifts() {
            best = best.min(self.dist_shifted(other, &shift));
        }
        best
    }
}

/// The 27 integer translations `{-1, 0, 1}^3`, origin included.
pub fn lattice_shifts() -> impl Iterator<Item = Vec3> {
    (0..27).map(|c| {
        Vec3::new(
            (c % 3) as f64 - 1.0,
            ((c / 3) % 3) as f64 - 1.0,
            (c / 9) as f64 - 1.0,
        )
    })
}

/// Reduce a vector to the unit cell `[-1/2, 1/2]^3` by subtracting the
/// nearest lattice vector.
pub fn wrap_to_cell(d: &Vec3) -> Vec3 {
    d.map(|c| c - c.round())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_distance_and_diameter() {
        let a = Aabb::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0));
        let b = Aabb::new(Vec3::new(2.0, 0.0, 0.0), Vec3::new(3.0, 0.0, 0.0));
        assert_eq!(a.diam(), 1.0);
        assert_eq!(a.dist(&b), 1.0);
        assert_eq!(a.dist(&a), 0.0);
    }

    #[test]
    fn periodic_distance_sees_wraparound() {
        let a = Aabb::new(Vec3::new(-0.5, 0.0, 0.0), Vec3::new(-0.45, 0.0, 0.0));
        let b = Aabb::new(Vec3::new(0.45, 0.0, 0.0), Vec3::new(0.5, 0.0, 0.0));
        assert!((a.dist(&b) - 0.9).abs() < 1e-12);
        assert!(a.periodic_dist(&b).abs() < 1e-12);
    }

    #[test]
    fn wrap_lands_in_cell() {
        let w = wrap_to_cell(&Vec3::new(0.7, -0.9, 0.2));
        assert!((w - Vec3::new(-0.3, 0.1, 0.2)).norm() < 1e-12);
        assert_eq!(lattice_shifts().count(), 27);
    }
}
