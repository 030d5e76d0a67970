use std::ops::Range;

use crate::geometry::{Aabb, Vec3};

use super::HError;

#[derive(Debug, Clone)]
pub struct ClusterNode {
    /// Range of permuted point positions.
    pub start: usize,
    pub end: usize,
    pub bbox: Aabb,
    pub children: Option<[usize; 2]>,
    pub level: usize,
}

impl ClusterNode {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary geometric partition of a point set.
///
/// Each point carries `dofs_per_point` consecutive unknowns; point `p` owns
/// dofs `p*d .. p*d + d` in the original numbering.
#[derive(Debug, Clone)]
pub struct ClusterTree {
    pub nodes: Vec<ClusterNode>,
    /// `perm[k]` is the original index of the point at permuted position `k`.
    pub perm: Vec<usize>,
    pub c_leaf: usize,
    pub dofs_per_point: usize,
}

/// Builds a cluster tree with one dof per point.
pub fn build_cluster_tree(points: &[Vec3], c_leaf: usize) -> Result<ClusterTree, HError> {
    ClusterTree::build(points, c_leaf, 1)
}

impl ClusterTree {
    /// Recursive bisection of the longest bounding-box axis at the median.
    /// A cluster is split whenever it holds at least `max(c_leaf, 2)` points.
    pub fn build(points: &[Vec3], c_leaf: usize, dofs_per_point: usize) -> Result<Self, HError> {
        if points.is_empty() {
            return Err(HError::EmptyInput);
        }
        if c_leaf == 0 || dofs_per_point == 0 {
            return Err(HError::InvalidParameter("c_leaf and dofs_per_point must be at least 1".into()));
        }
        let mut tree = ClusterTree {
            nodes: Vec::new(),
            perm: (0..points.len()).collect(),
            c_leaf,
            dofs_per_point,
        };
        tree.split(points, 0, points.len(), 0);
        Ok(tree)
    }

    fn split(&mut self, points: &[Vec3], start: usize, end: usize, level: usize) -> usize {
        let idx = &mut self.perm[start..end];
        let bbox = Aabb::from_points(idx.iter().map(|&i| &points[i])).expect("non-empty cluster");
        let id = self.nodes.len();
        self.nodes.push(ClusterNode {
            start,
            end,
            bbox,
            children: None,
            level,
        });
        if end - start >= self.c_leaf.max(2) {
            let axis = bbox.longest_axis();
            idx.sort_unstable_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
            let mid = start + (end - start) / 2;
            let left = self.split(points, start, mid, level + 1);
            let right = self.split(points, mid, end, level + 1);
            self.nodes[id].children = Some([left, right]);
        }
        id
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn num_points(&self) -> usize {
        self.perm.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.perm.len() * self.dofs_per_point
    }

    /// Dof range of a node in the permuted numbering.
    pub fn dof_range(&self, node: usize) -> Range<usize> {
        let n = &self.nodes[node];
        n.start * self.dofs_per_point..n.end * self.dofs_per_point
    }

    /// `p[k]` is the original dof at permuted dof position `k`.
    pub fn dof_perm(&self) -> Vec<usize> {
        let d = self.dofs_per_point;
        self.perm
            .iter()
            .flat_map(|&p| (0..d).map(move |c| p * d + c))
            .collect()
    }

    /// Original dof indices of a node.
    pub fn dofs(&self, node: usize) -> Vec<usize> {
        let d = self.dofs_per_point;
        let n = &self.nodes[node];
        self.perm[n.start..n.end]
            .iter()
            .flat_map(|&p| (0..d).map(move |c| p * d + c))
            .collect()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }
}
