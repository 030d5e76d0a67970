use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;

/// Read-only access to the entries of a (conceptually dense) matrix.
///
/// Implementations must be pure: asking twice for the same entry returns the
/// same value. Assembly calls them concurrently.
pub trait EntryGenerator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn entry(&self, i: usize, j: usize) -> f64;

    /// Whether `entry(i, j) == entry(j, i)` holds exactly. Assembly then
    /// stores one triangle of the diagonal blocks.
    fn is_symmetric(&self) -> bool {
        false
    }

    /// Entries `(i, cols[k])` into `out[k]`.
    fn row(&self, i: usize, cols: &[usize], out: &mut [f64]) {
        for (o, &j) in out.iter_mut().zip(cols) {
            *o = self.entry(i, j);
        }
    }

    /// Entries `(rows[k], j)` into `out[k]`.
    fn col(&self, j: usize, rows: &[usize], out: &mut [f64]) {
        for (o, &i) in out.iter_mut().zip(rows) {
            *o = self.entry(i, j);
        }
    }

    fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows.len(), cols.len());
        let mut buf = vec![0.0; cols.len()];
        for (r, &i) in rows.iter().enumerate() {
            self.row(i, cols, &mut buf);
            for (c, v) in buf.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        m
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let rows: Vec<usize> = (0..self.nrows()).collect();
        let cols: Vec<usize> = (0..self.ncols()).collect();
        self.block(&rows, &cols)
    }
}

/// Generator backed by an explicit matrix.
pub struct DenseGenerator {
    pub matrix: DMatrix<f64>,
}

impl DenseGenerator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }
}

impl EntryGenerator for DenseGenerator {
    fn nrows(&self) -> usize {
        self.matrix.nrows()
    }
    fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }
}

/// Wraps a generator and counts every entry it produces.
pub struct CountingGenerator<'a, G: EntryGenerator + ?Sized> {
    inner: &'a G,
    count: AtomicUsize,
}

impl<'a, G: EntryGenerator + ?Sized> CountingGenerator<'a, G> {
    pub fn new(inner: &'a G) -> Self {
        Self {
            inner,
            count: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.count.store(0, Ordering::Relaxed);
    }
}

impl<G: EntryGenerator + ?Sized> EntryGenerator for CountingGenerator<'_, G> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    fn is_symmetric(&self) -> bool {
        self.inner.is_symmetric()
    }
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.entry(i, j)
    }
    fn row(&self, i: usize, cols: &[usize], out: &mut [f64]) {
        self.count.fetch_add(cols.len(), Ordering::Relaxed);
        self.inner.row(i, cols, out)
    }
    fn col(&self, j: usize, rows: &[usize], out: &mut [f64]) {
        self.count.fetch_add(rows.len(), Ordering::Relaxed);
        self.inner.col(j, rows, out)
    }
}

/// Generator defined by a closure `(i, j) -> value`.
pub struct FnGenerator<F> {
    nrows: usize,
    ncols: usize,
    f: F,
}

impl<F: Fn(usize, usize) -> f64 + Sync> FnGenerator<F> {
    pub fn new(nrows: usize, ncols: usize, f: F) -> Self {
        Self { nrows, ncols, f }
    }
}

impl<F: Fn(usize, usize) -> f64 + Sync> EntryGenerator for FnGenerator<F> {
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }
    fn entry(&self, i: usize, j: usize) -> f64 {
        (self.f)(i, j)
    }
}
