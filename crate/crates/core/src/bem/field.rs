use std::fmt::Write as _;

use rayon::prelude::*;

use super::{BemError, BieProblem, DensityField};
use crate::geometry::Vec3;

pub const FIELD_CSV_HEADER: &str = "x,y,z,u";

#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorField {
    pub values: Vec<f64>,
    /// Indices of points closer to a panel centroid than that panel's
    /// diameter; their values are still returned.
    pub flagged: Vec<usize>,
}

/// `u(x) = Σ_j σ_j a_j G(x − y_j)` at each point.
pub fn eval_corrector(problem: &BieProblem, sigma: &DensityField, points: &[Vec3]) -> Result<CorrectorField, BemError> {
    let m = &problem.mesh;
    if sigma.len() != m.len() {
        return Err(BemError::DensityLength {
            expected: m.len(),
            got: sigma.len(),
        });
    }
    let diam: Vec<f64> = (0..m.len()).map(|j| m.panel_diameter(j)).collect();
    let periodic = problem.kernel.is_periodic();
    let out: Vec<(f64, bool)> = points
        .par_iter()
        .map(|x| {
            let mut u = 0.0;
            let mut near = false;
            for j in 0..m.len() {
                let mut d = x - m.centroids[j];
                if periodic {
                    d = crate::geometry::wrap_to_cell(&d);
                }
                if d.norm() < diam[j] {
                    near = true;
                }
                u += sigma.sigma[j] * m.areas[j] * problem.kernel.value(&d);
            }
            (u, near)
        })
        .collect();
    Ok(CorrectorField {
        values: out.iter().map(|v| v.0).collect(),
        flagged: out.iter().enumerate().filter(|(_, v)| v.1).map(|(i, _)| i).collect(),
    })
}

/// `n × n` cell-centred grid on the plane `x[axis] = offset` of the unit
/// cell.
pub fn slice_grid(axis: usize, offset: f64, n: usize) -> Vec<Vec3> {
    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut p = Vec3::zeros();
            p[axis] = offset;
            p[a] = -0.5 + (i as f64 + 0.5) / n as f64;
            p[b] = -0.5 + (j as f64 + 0.5) / n as f64;
            pts.push(p);
        }
    }
    pts
}

pub fn field_csv(points: &[Vec3], values: &[f64]) -> String {
    let mut s = String::from(FIELD_CSV_HEADER);
    s.push('\n');
    for (p, u) in points.iter().zip(values) {
        let _ = writeln!(s, "{},{},{},{}", p.x, p.y, p.z, u);
    }
    s
}
