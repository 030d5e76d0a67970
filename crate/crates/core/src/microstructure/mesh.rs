//! Flat-triangle boundary meshes of spherical inclusions.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::{Microstructure, Sphere};
use crate::geometry::Vec3;

/// Union of closed triangulated inclusion boundaries with per-panel data
/// cached for collocation.
#[derive(Debug, Clone, Serialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Inclusion index owning each triangle.
    pub owners: Vec<usize>,
    #[serde(skip)]
    pub centroids: Vec<Vec3>,
    #[serde(skip)]
    pub areas: Vec<f64>,
    /// Outward unit normals.
    #[serde(skip)]
    pub normals: Vec<Vec3>,
    /// Centre of each owning inclusion.
    #[serde(skip)]
    pub inclusion_centers: Vec<Vec3>,
}

impl TriangleMesh {
    fn from_parts(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, owners: Vec<usize>, inclusion_centers: Vec<Vec3>) -> Self {
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            let cross = (b - a).cross(&(c - a));
            let norm = cross.norm();
            centroids.push((a + b + c) / 3.0);
            areas.push(0.5 * norm);
            normals.push(cross / norm);
        }
        Self {
            vertices,
            triangles,
            owners,
            centroids,
            areas,
            normals,
            inclusion_centers,
        }
    }

    /// Triangulates every inclusion of `ms` with an icosphere of the given
    /// subdivision level.
    pub fn from_microstructure(ms: &Microstructure, level: u32) -> Self {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut owners = Vec::new();
        for (id, s) in ms.spheres.iter().enumerate() {
            let (v, t) = icosphere_raw(s, level);
            let offset = vertices.len();
            vertices.extend(v);
            triangles.extend(t.into_iter().map(|[a, b, c]| [a + offset, b + offset, c + offset]));
            owners.extend(std::iter::repeat_n(id, triangles.len() - owners.len()));
        }
        Self::from_parts(vertices, triangles, owners, ms.centers())
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Longest edge of a panel.
    pub fn panel_diameter(&self, i: usize) -> f64 {
        let t = self.triangles[i];
        let (a, b, c) = (self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]);
        (a - b).norm().max((b - c).norm()).max((c - a).norm())
    }

    pub fn panel_vertices(&self, i: usize) -> [Vec3; 3] {
        let t = self.triangles[i];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_use_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mesh serialises")
    }

    /// Wavefront OBJ text (1-based indices).
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }
}

/// Icosphere approximation of one sphere: `20·4^level` triangles with every
/// vertex on the sphere and outward orientation.
pub fn icosphere_mesh(sphere: &Sphere, level: u32) -> TriangleMesh {
    let (v, t) = icosphere_raw(sphere, level);
    let owners = vec![0; t.len()];
    TriangleMesh::from_parts(v, t, owners, vec![sphere.center])
}

fn icosphere_raw(sphere: &Sphere, level: u32) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vec3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                verts.push((0.5 * (verts[a] + verts[b])).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    let verts = verts
        .into_iter()
        .map(|u| sphere.center + sphere.radius * u)
        .collect();
    (verts, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit() -> Sphere {
        Sphere::new(Vec3::zeros(), 1.0, 2.0)
    }

    #[test]
    fn level_zero_is_icosahedron() {
        let m = icosphere_mesh(&unit(), 0);
        assert_eq!(m.len(), 20);
        assert_eq!(m.vertices.len(), 12);
    }

    #[test]
    fn triangle_count_quadruples() {
        for level in 0..4 {
            assert_eq!(icosphere_mesh(&unit(), level).len(), 20 * 4usize.pow(level));
        }
    }

    #[test]
    fn area_converges_to_sphere() {
        // An inscribed polyhedron always loses area; the deficit falls by
        // four per level (23.8%, 7.2%, 1.9%, 0.48%, ...).
        let mut prev = f64::INFINITY;
        for level in 0..5 {
            let err = (icosphere_mesh(&unit(), level).total_area() - 4.0 * PI).abs() / (4.0 * PI);
            assert!(err < prev);
            if level > 1 {
                let ratio = prev / err;
                assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
            }
            prev = err;
            if level == 2 {
                assert!(err < 0.02, "level-2 area error {err}");
            }
            if level >= 3 {
                assert!(err < 0.01, "level-{level} area error {err}");
            }
        }
    }

    #[test]
    fn vertices_on_sphere() {
        let s = Sphere::new(Vec3::new(0.1, -0.2, 0.3), 0.3, 2.0);
        let m = icosphere_mesh(&s, 1);
        for v in &m.vertices {
            assert!(((v - s.center).norm() - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn watertight_and_outward() {
        for level in 0..4 {
            let m = icosphere_mesh(&unit(), level);
            assert!(m.edge_use_counts().values().all(|&c| c == 2));
            for i in 0..m.len() {
                assert!(m.normals[i].dot(&(m.centroids[i] - m.inclusion_centers[0])) > 0.0);
                assert!(m.areas[i] > 0.0);
            }
        }
    }

    #[test]
    fn obj_export_counts() {
        let m = icosphere_mesh(&unit(), 1);
        let obj = m.to_obj();
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), m.vertices.len());
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 80);
        let json: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(json["triangles"].as_array().unwrap().len(), 80);
    }
}
