use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::aca::{aca_full, aca_partial};
use super::block::{BlockKind, BlockTree};
use super::generator::{CountingGenerator, EntryGenerator};
use super::lowrank::{svd_recompress, LowRank};
use super::stats::{CompressionStats, RankSummary, Timings};
use super::HError;

/// Sizes below which recursion runs sequentially.
const PAR_THRESHOLD: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct SubBlocks {
    pub nrows: usize,
    pub ncols: usize,
    pub row_split: usize,
    pub col_split: usize,
    /// Row-major quadrants `[00, 01, 10, 11]`.
    pub blocks: [HBlock; 4],
}

/// Hierarchical block in permuted numbering.
#[derive(Debug, Clone, PartialEq)]
pub enum HBlock {
    Dense(DMatrix<f64>),
    LowRank(LowRank),
    Sub(Box<SubBlocks>),
    /// Lower off-diagonal quadrant of a diagonal block of a symmetric
    /// matrix: the transpose of its `01` sibling, holding no data.
    Mirror { nrows: usize, ncols: usize },
}

impl HBlock {
    pub fn nrows(&self) -> usize {
        match self {
            HBlock::Dense(m) => m.nrows(),
            HBlock::LowRank(l) => l.nrows(),
            HBlock::Sub(s) => s.nrows,
            HBlock::Mirror { nrows, .. } => *nrows,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            HBlock::Dense(m) => m.ncols(),
            HBlock::LowRank(l) => l.ncols(),
            HBlock::Sub(s) => s.ncols,
            HBlock::Mirror { ncols, .. } => *ncols,
        }
    }

    /// Stored scalars.
    pub fn stored(&self) -> usize {
        match self {
            HBlock::Dense(m) => m.len(),
            HBlock::LowRank(l) => l.stored(),
            HBlock::Sub(s) => s.blocks.iter().map(HBlock::stored).sum(),
            HBlock::Mirror { .. } => 0,
        }
    }

    /// `y += A x`.
    pub fn gemv(&self, x: &[f64], y: &mut [f64]) {
        match self {
            HBlock::Dense(m) => {
                for (j, xj) in x.iter().enumerate() {
                    if *xj != 0.0 {
                        for (yi, mij) in y.iter_mut().zip(m.column(j).iter()) {
                            *yi += mij * xj;
                        }
                    }
                }
            }
            HBlock::LowRank(l) => l.gemv(x, y),
            HBlock::Sub(s) => {
                let (x0, x1) = x.split_at(s.col_split);
                let (y0, y1) = y.split_at_mut(s.row_split);
                let [b00, b01, b10, b11] = &s.blocks;
                let top = |y0: &mut [f64]| {
                    b00.gemv(x0, y0);
                    b01.gemv(x1, y0);
                };
                let bottom = |y1: &mut [f64]| {
                    match b10 {
                        HBlock::Mirror { .. } => b01.gemv_t(x0, y1),
                        b10 => b10.gemv(x0, y1),
                    }
                    b11.gemv(x1, y1);
                };
                if s.nrows >= PAR_THRESHOLD {
                    rayon::join(|| top(y0), || bottom(y1));
                } else {
                    top(y0);
                    bottom(y1);
                }
            }
            HBlock::Mirror { .. } => unreachable!("mirror blocks are applied by their parent"),
        }
    }

    /// `y += Aᵀ x`.
    pub fn gemv_t(&self, x: &[f64], y: &mut [f64]) {
        match self {
            HBlock::Dense(m) => {
                for (j, yj) in y.iter_mut().enumerate() {
                    *yj += m.column(j).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            HBlock::LowRank(l) => l.gemv_t(x, y),
            HBlock::Sub(s) => {
                let (x0, x1) = x.split_at(s.row_split);
                let (y0, y1) = y.split_at_mut(s.col_split);
                let [b00, b01, b10, b11] = &s.blocks;
                b00.gemv_t(x0, y0);
                match b10 {
                    HBlock::Mirror { .. } => b01.gemv(x1, y0),
                    b10 => b10.gemv_t(x1, y0),
                }
                b01.gemv_t(x0, y1);
                b11.gemv_t(x1, y1);
            }
            HBlock::Mirror { .. } => unreachable!("mirror blocks are applied by their parent"),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            HBlock::Dense(m) => m.clone(),
            HBlock::LowRank(l) => l.to_dense(),
            HBlock::Sub(s) => {
                let mut out = DMatrix::zeros(s.nrows, s.ncols);
                for (q, b) in s.blocks.iter().enumerate() {
                    let (r0, c0) = s.offset(q);
                    let d = match b {
                        HBlock::Mirror { .. } => s.blocks[1].to_dense().transpose(),
                        b => b.to_dense(),
                    };
                    out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(&d);
                }
                out
            }
            HBlock::Mirror { .. } => unreachable!("mirror blocks are expanded by their parent"),
        }
    }

    /// `A · X`.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            HBlock::Dense(m) => m * x,
            HBlock::LowRank(l) => {
                if l.rank() == 0 {
                    DMatrix::zeros(l.nrows(), x.ncols())
                } else {
                    &l.u * (l.v.transpose() * x)
                }
            }
            HBlock::Sub(s) => {
                let mut out = DMatrix::zeros(s.nrows, x.ncols());
                let xs = [x.rows(0, s.col_split).into_owned(), x.rows(s.col_split, s.ncols - s.col_split).into_owned()];
                for (q, b) in s.blocks.iter().enumerate() {
                    let (r0, _) = s.offset(q);
                    let part = match b {
                        HBlock::Mirror { .. } => s.blocks[1].tr_mul_dense(&xs[0]),
                        b => b.mul_dense(&xs[q % 2]),
                    };
                    let mut dst = out.rows_mut(r0, b.nrows());
                    dst += part;
                }
                out
            }
            HBlock::Mirror { .. } => unreachable!("mirror blocks are applied by their parent"),
        }
    }

    /// `Aᵀ · X`.
    pub fn tr_mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            HBlock::Dense(m) => m.tr_mul(x),
            HBlock::LowRank(l) => {
                if l.rank() == 0 {
                    DMatrix::zeros(l.ncols(), x.ncols())
                } else {
                    &l.v * l.u.tr_mul(x)
                }
            }
            HBlock::Sub(s) => {
                let mut out = DMatrix::zeros(s.ncols, x.ncols());
                let xs = [x.rows(0, s.row_split).into_owned(), x.rows(s.row_split, s.nrows - s.row_split).into_owned()];
                for (q, b) in s.blocks.iter().enumerate() {
                    let (_, c0) = s.offset(q);
                    let part = match b {
                        HBlock::Mirror { .. } => s.blocks[1].mul_dense(&xs[1]),
                        b => b.tr_mul_dense(&xs[q / 2]),
                    };
                    let mut dst = out.rows_mut(c0, b.ncols());
                    dst += part;
                }
                out
            }
            HBlock::Mirror { .. } => unreachable!("mirror blocks are applied by their parent"),
        }
    }

    /// Visits every leaf with its offsets inside this block.
    pub fn for_each_leaf(&self, row: usize, col: usize, f: &mut impl FnMut(usize, usize, &HBlock)) {
        match self {
            HBlock::Sub(s) => {
                for (q, b) in s.blocks.iter().enumerate() {
                    let (r0, c0) = s.offset(q);
                    b.for_each_leaf(row + r0, col + c0, f);
                }
            }
            leaf => f(row, col, leaf),
        }
    }

    fn dump(&self, row: usize, col: usize) -> Value {
        match self {
            HBlock::Dense(m) => json!({
                "kind": "dense", "row": row, "col": col, "rows": m.nrows(), "cols": m.ncols(),
            }),
            HBlock::LowRank(l) => json!({
                "kind": "low-rank", "row": row, "col": col, "rows": l.nrows(), "cols": l.ncols(), "rank": l.rank(),
            }),
            HBlock::Sub(s) => {
                let children: Vec<Value> = s
                    .blocks
                    .iter()
                    .enumerate()
                    .map(|(q, b)| {
                        let (r0, c0) = s.offset(q);
                        b.dump(row + r0, col + c0)
                    })
                    .collect();
                json!({
                    "kind": "subdivided", "row": row, "col": col, "rows": s.nrows, "cols": s.ncols,
                    "children": children,
                })
            }
            HBlock::Mirror { nrows, ncols } => json!({
                "kind": "mirror", "row": row, "col": col, "rows": nrows, "cols": ncols,
            }),
        }
    }

    /// `Aᵀ` as a new block.
    pub fn transposed(&self) -> HBlock {
        match self {
            HBlock::Dense(m) => HBlock::Dense(m.transpose()),
            HBlock::LowRank(l) => HBlock::LowRank(LowRank::new(l.v.clone(), l.u.clone())),
            // A diagonal block of a symmetric matrix is its own transpose.
            HBlock::Sub(s) if matches!(s.blocks[2], HBlock::Mirror { .. }) => self.clone(),
            HBlock::Sub(s) => {
                let [b00, b01, b10, b11] = &s.blocks;
                HBlock::Sub(Box::new(SubBlocks {
                    nrows: s.ncols,
                    ncols: s.nrows,
                    row_split: s.col_split,
                    col_split: s.row_split,
                    blocks: [b00.transposed(), b10.transposed(), b01.transposed(), b11.transposed()],
                }))
            }
            HBlock::Mirror { .. } => unreachable!("mirror blocks are expanded by their parent"),
        }
    }

    /// Copy with every mirror quadrant replaced by explicit storage.
    pub fn unfolded(&self) -> HBlock {
        match self {
            HBlock::Sub(s) => {
                let [b00, b01, b10, b11] = &s.blocks;
                let lower = match b10 {
                    HBlock::Mirror { .. } => b01.transposed(),
                    b => b.unfolded(),
                };
                HBlock::Sub(Box::new(SubBlocks {
                    blocks: [b00.unfolded(), b01.unfolded(), lower, b11.unfolded()],
                    ..**s
                }))
            }
            leaf => leaf.clone(),
        }
    }
}

impl SubBlocks {
    /// Offset of quadrant `q` inside the parent.
    pub fn offset(&self, q: usize) -> (usize, usize) {
        (
            if q >= 2 { self.row_split } else { 0 },
            if q % 2 == 1 { self.col_split } else { 0 },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcaMode {
    Full,
    #[default]
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub epsilon: f64,
    pub mode: AcaMode,
    /// Cross limit per block; `None` means the smaller block side.
    pub k_max: Option<usize>,
    /// Fail instead of keeping a block whose ACA hit `k_max`.
    pub strict: bool,
    /// Store one triangle when the generator declares itself symmetric.
    pub exploit_symmetry: bool,
}

impl AssemblyOptions {
    pub fn new(epsilon: f64, mode: AcaMode) -> Self {
        Self {
            epsilon,
            mode,
            k_max: None,
            strict: false,
            exploit_symmetry: true,
        }
    }
}

/// Hierarchical matrix over a square index set.
#[derive(Debug, Clone)]
pub struct HMatrix {
    pub root: HBlock,
    /// `perm[k]` is the original index at permuted position `k`.
    pub perm: Vec<usize>,
    pub epsilon: f64,
    /// Generator entries read during assembly.
    pub queries: usize,
    /// Admissible blocks whose ACA reached `k_max`.
    pub unconverged: usize,
    pub assembly_seconds: f64,
    /// Diagonal blocks hold one triangle; see [`HBlock::Mirror`].
    pub symmetric: bool,
}

struct Ctx<'a, G: ?Sized> {
    gen: &'a G,
    bt: &'a BlockTree,
    opts: AssemblyOptions,
    symmetric: bool,
}

/// Builds the H-matrix of `gen` on the partition `bt`: dense leaves are
/// generated exactly, admissible leaves by ACA followed by SVD recompression,
/// the product being stored densely when `k(m+n) ≥ mn`. For a symmetric
/// generator the lower quadrants of diagonal blocks are left as mirrors.
/// Sibling blocks are assembled in parallel.
pub fn assemble<G: EntryGenerator + ?Sized>(gen: &G, bt: &BlockTree, opts: AssemblyOptions) -> Result<HMatrix, HError> {
    let n = bt.clusters.num_dofs();
    if gen.nrows() != n || gen.ncols() != n {
        return Err(HError::DimensionMismatch {
            expected: n,
            got: gen.nrows().max(gen.ncols()),
        });
    }
    if !(opts.epsilon >= 0.0) {
        return Err(HError::InvalidParameter(format!("epsilon must be non-negative, got {}", opts.epsilon)));
    }
    let start = Instant::now();
    let counter = CountingGenerator::new(gen);
    let perm = bt.clusters.dof_perm();
    let symmetric = opts.exploit_symmetry && gen.is_symmetric();
    let ctx = Ctx {
        gen: &counter,
        bt,
        opts,
        symmetric,
    };
    let (root, unconverged) = build(&ctx, &perm, bt.root())?;
    let h = HMatrix {
        root,
        perm,
        epsilon: opts.epsilon,
        queries: counter.count(),
        unconverged,
        assembly_seconds: start.elapsed().as_secs_f64(),
        symmetric,
    };
    if unconverged > 0 {
        log::warn!("{unconverged} admissible blocks kept at the rank limit");
    }
    Ok(h)
}

fn build<G: EntryGenerator + ?Sized>(ctx: &Ctx<'_, G>, perm: &[usize], node: usize) -> Result<(HBlock, usize), HError> {
    let bt = ctx.bt;
    let ct = &bt.clusters;
    let b = &bt.nodes[node];
    let rr = ct.dof_range(b.row);
    let cr = ct.dof_range(b.col);
    match b.kind {
        BlockKind::Dense => Ok((HBlock::Dense(ctx.gen.block(&perm[rr], &perm[cr])), 0)),
        BlockKind::Admissible => {
            let (rows, cols) = (&perm[rr.clone()], &perm[cr.clone()]);
            let k_max = ctx.opts.k_max.unwrap_or(rows.len().min(cols.len()));
            let eps = ctx.opts.epsilon;
            let (lr, rep) = match ctx.opts.mode {
                AcaMode::Full => aca_full(&ctx.gen.block(rows, cols), eps, k_max),
                AcaMode::Partial => aca_partial(ctx.gen, rows, cols, eps, k_max),
            };
            if !rep.converged {
                log::debug!("ACA hit rank limit {k_max} on block rows {rr:?} cols {cr:?}");
                if ctx.opts.strict {
                    return Err(HError::AcaNotConverged {
                        row: rr.start,
                        col: cr.start,
                        rows: rr.len(),
                        cols: cr.len(),
                        k_max,
                    });
                }
            }
            let lr = svd_recompress(&lr, eps);
            let unconverged = usize::from(!rep.converged);
            if lr.stored() >= rows.len() * cols.len() {
                return Ok((HBlock::Dense(lr.to_dense()), unconverged));
            }
            Ok((HBlock::LowRank(lr), unconverged))
        }
        BlockKind::Subdivided => {
            let kids = b.children.expect("subdivided block has sons");
            let mirror = ctx.symmetric && b.row == b.col;
            let make = |q: usize| -> Result<(HBlock, usize), HError> {
                let k = kids[q];
                if mirror && q == 2 {
                    let n = &bt.nodes[k];
                    return Ok((
                        HBlock::Mirror {
                            nrows: ct.dof_range(n.row).len(),
                            ncols: ct.dof_range(n.col).len(),
                        },
                        0,
                    ));
                }
                build(ctx, perm, k)
            };
            let built: Vec<(HBlock, usize)> = if rr.len() >= PAR_THRESHOLD {
                (0..4).into_par_iter().map(make).collect::<Result<_, _>>()?
            } else {
                (0..4).map(make).collect::<Result<_, _>>()?
            };
            let unconverged = built.iter().map(|b| b.1).sum();
            let mut it = built.into_iter().map(|b| b.0);
            let blocks = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];
            let row_split = ct.dof_range(bt.nodes[kids[0]].row).len();
            let col_split = ct.dof_range(bt.nodes[kids[0]].col).len();
            Ok((
                HBlock::Sub(Box::new(SubBlocks {
                    nrows: rr.len(),
                    ncols: cr.len(),
                    row_split,
                    col_split,
                    blocks,
                })),
                unconverged,
            ))
        }
    }
}

impl HMatrix {
    /// Wraps an explicit dense matrix (identity permutation, single leaf).
    pub fn from_dense(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        Self {
            root: HBlock::Dense(m),
            perm: (0..n).collect(),
            epsilon: 0.0,
            queries: 0,
            unconverged: 0,
            assembly_seconds: 0.0,
            symmetric: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn to_permuted(&self, x: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&p| x[p]).collect()
    }

    pub fn from_permuted(&self, xp: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; xp.len()];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = xp[k];
        }
        out
    }

    /// `A x` in the original numbering.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, HError> {
        let n = self.dim();
        if x.len() != n {
            return Err(HError::DimensionMismatch { expected: n, got: x.len() });
        }
        let xp = self.to_permuted(x);
        let mut yp = vec![0.0; n];
        self.root.gemv(&xp, &mut yp);
        Ok(self.from_permuted(&yp))
    }

    /// Dense reconstruction in the original numbering.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let dp = self.root.to_dense();
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                out[(self.perm[i], self.perm[j])] = dp[(i, j)];
            }
        }
        out
    }

    pub fn stored(&self) -> usize {
        self.root.stored()
    }

    /// Ranks of the low-rank leaves in traversal order.
    pub fn leaf_ranks(&self) -> Vec<usize> {
        let mut ranks = Vec::new();
        self.root.for_each_leaf(0, 0, &mut |_, _, b| {
            if let HBlock::LowRank(l) = b {
                ranks.push(l.rank());
            }
        });
        ranks
    }

    /// Σ rows·cols over leaves.
    pub fn leaf_area(&self) -> usize {
        let mut area = 0;
        self.root.for_each_leaf(0, 0, &mut |_, _, b| area += b.nrows() * b.ncols());
        area
    }

    pub fn stats(&self) -> CompressionStats {
        let n = self.dim();
        let mut histogram = std::collections::BTreeMap::new();
        let (mut dense_leaves, mut lowrank_leaves) = (0, 0);
        self.root.for_each_leaf(0, 0, &mut |_, _, b| match b {
            HBlock::LowRank(l) => {
                lowrank_leaves += 1;
                *histogram.entry(l.rank()).or_insert(0) += 1;
            }
            HBlock::Mirror { .. } => {}
            _ => dense_leaves += 1,
        });
        let ranks = self.leaf_ranks();
        let stored = self.stored();
        let dense = n * n;
        CompressionStats {
            n,
            stored,
            dense,
            ratio: if dense == 0 { 1.0 } else { stored as f64 / dense as f64 },
            ranks: RankSummary::from_ranks(&ranks),
            rank_histogram: histogram,
            dense_leaves,
            lowrank_leaves,
            queries: self.queries,
            unconverged_blocks: self.unconverged,
            times: Timings {
                assembly_s: self.assembly_seconds,
                ..Timings::default()
            },
        }
    }

    /// Nested block structure: kind, offsets, sides and ranks.
    pub fn structure_json(&self) -> Value {
        json!({ "n": self.dim(), "root": self.root.dump(0, 0) })
    }
}
