use serde::{Deserialize, Serialize};

use super::cluster::{ClusterNode, ClusterTree};

/// Admissibility predicate `min(diam τ, diam σ) ≤ η·dist(τ, σ)` on bounding
/// boxes. With `periodic`, the distance is taken on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub eta: f64,
    pub periodic: bool,
}

impl Admissibility {
    pub fn new(eta: f64) -> Self {
        Self { eta, periodic: false }
    }

    pub fn periodic(eta: f64) -> Self {
        Self { eta, periodic: true }
    }

    pub fn check(&self, row: &ClusterNode, col: &ClusterNode) -> bool {
        let dist = if self.periodic {
            row.bbox.periodic_dist(&col.bbox)
        } else {
            row.bbox.dist(&col.bbox)
        };
        dist > 0.0 && row.bbox.diam().min(col.bbox.diam()) <= self.eta * dist
    }
}

pub fn is_admissible(row: &ClusterNode, col: &ClusterNode, eta: f64) -> bool {
    Admissibility::new(eta).check(row, col)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    Admissible,
    Dense,
    Subdivided,
}

#[derive(Debug, Clone)]
pub struct BlockNode {
    pub row: usize,
    pub col: usize,
    pub kind: BlockKind,
    /// Sons in row-major order `(r0,c0), (r0,c1), (r1,c0), (r1,c1)`.
    pub children: Option<[usize; 4]>,
}

/// Quad-tree partition of the index square driven by two cluster trees.
/// Row and column trees coincide for the square systems solved here.
#[derive(Debug, Clone)]
pub struct BlockTree {
    pub nodes: Vec<BlockNode>,
    pub admissibility: Admissibility,
    pub clusters: ClusterTree,
}

pub fn build_block_tree(ct: &ClusterTree, admissibility: Admissibility) -> BlockTree {
    let mut bt = BlockTree {
        nodes: Vec::new(),
        admissibility,
        clusters: ct.clone(),
    };
    bt.subdivide(ct, ct.root(), ct.root());
    bt
}

impl BlockTree {
    fn subdivide(&mut self, ct: &ClusterTree, row: usize, col: usize) -> usize {
        let id = self.nodes.len();
        let (r, c) = (&ct.nodes[row], &ct.nodes[col]);
        let kind = if self.admissibility.check(r, c) {
            BlockKind::Admissible
        } else if r.is_leaf() || c.is_leaf() {
            BlockKind::Dense
        } else {
            BlockKind::Subdivided
        };
        self.nodes.push(BlockNode {
            row,
            col,
            kind,
            children: None,
        });
        if kind == BlockKind::Subdivided {
            let [r0, r1] = r.children.unwrap();
            let [c0, c1] = c.children.unwrap();
            let kids = [
                self.subdivide(ct, r0, c0),
                self.subdivide(ct, r0, c1),
                self.subdivide(ct, r1, c0),
                self.subdivide(ct, r1, c1),
            ];
            self.nodes[id].children = Some(kids);
        }
        id
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn leaves(&self) -> impl Iterator<Item = &BlockNode> + '_ {
        self.nodes.iter().filter(|n| n.kind != BlockKind::Subdivided)
    }

    /// `Σ |τ|·|σ|` over leaves, in dofs.
    pub fn leaf_area(&self) -> usize {
        let ct = &self.clusters;
        self.leaves()
            .map(|n| ct.dof_range(n.row).len() * ct.dof_range(n.col).len())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Vec3};

    fn node(min: [f64; 3], max: [f64; 3]) -> ClusterNode {
        ClusterNode {
            start: 0,
            end: 1,
            bbox: Aabb::new(Vec3::from(min), Vec3::from(max)),
            children: None,
            level: 0,
        }
    }

    #[test]
    fn unit_boxes_at_distance_one() {
        let d = 1.0 / 3f64.sqrt();
        let a = node([0.0; 3], [d; 3]);
        let b = node([d + 1.0, 0.0, 0.0], [2.0 * d + 1.0, d, d]);
        assert!((a.bbox.diam() - 1.0).abs() < 1e-12);
        assert!(is_admissible(&a, &b, 1.4));
    }

    #[test]
    fn identical_boxes_never_admissible() {
        let a = node([0.0; 3], [1.0; 3]);
        for eta in [0.1, 1.0, 1e6] {
            assert!(!is_admissible(&a, &a, eta));
        }
        let p = node([0.5; 3], [0.5; 3]);
        assert!(!is_admissible(&p, &p, 1e6));
    }

    #[test]
    fn small_distance_rejected() {
        let a = node([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let b = node([1.8, 0.0, 0.0], [4.8, 0.0, 0.0]);
        assert!((b.bbox.diam() - 3.0).abs() < 1e-12);
        assert!(!is_admissible(&a, &b, 1.0));
    }

    #[test]
    fn periodic_distance_wraps() {
        let a = node([-0.45, 0.0, 0.0], [-0.3, 0.0, 0.0]);
        let b = node([0.3, 0.0, 0.0], [0.45, 0.0, 0.0]);
        assert!(Admissibility::new(1.0).check(&a, &b));
        assert!((a.bbox.periodic_dist(&b.bbox) - 0.1).abs() < 1e-12);
        assert!(!Admissibility::periodic(0.5).check(&a, &b));
    }

    #[test]
    fn single_leaf_tree_gives_one_dense_block() {
        let ct = ClusterTree::build(&[Vec3::zeros(), Vec3::x()], 15, 1).unwrap();
        let bt = build_block_tree(&ct, Admissibility::new(2.0));
        assert_eq!(bt.nodes.len(), 1);
        assert_eq!(bt.nodes[0].kind, BlockKind::Dense);
    }

    #[test]
    fn line_blocks_tile_and_compress_off_diagonal() {
        let pts: Vec<Vec3> = (0..256).map(|i| Vec3::new(i as f64 / 255.0, 0.0, 0.0)).collect();
        let ct = ClusterTree::build(&pts, 15, 1).unwrap();
        let bt = build_block_tree(&ct, Admissibility::new(1.0));
        assert_eq!(bt.leaf_area(), 256 * 256);
        for leaf in bt.leaves() {
            let (r, c) = (&ct.nodes[leaf.row], &ct.nodes[leaf.col]);
            match leaf.kind {
                BlockKind::Dense => assert!(r.len() < 15 || c.len() < 15),
                BlockKind::Admissible => {
                    assert!(Admissibility::new(1.0).check(r, c));
                    assert!(r.start != c.start);
                }
                BlockKind::Subdivided => unreachable!(),
            }
        }
        // diagonal leaves are dense
        for leaf in bt.leaves().filter(|l| l.row == l.col) {
            assert_eq!(leaf.kind, BlockKind::Dense);
        }
    }
}
