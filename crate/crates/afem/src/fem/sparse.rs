//! Compressed-sparse-row matrices assembled from coordinate triplets.

use super::FemError;

/// Square sparse matrix in CSR form. Duplicate triplets are summed during
/// construction; a matrix flagged symmetric is verified entrywise on
/// assembly.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    n: usize,
    row_offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Builds from (row, col, value) triplets, merging duplicates by
    /// addition. With `symmetric`, verifies A[i][j] == A[j][i] within 1e−12
    /// relative.
    pub fn from_triplets(
        n: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        symmetric: bool,
    ) -> Result<Self, FemError> {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut counts = vec![0usize; n];
        let mut cols: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                counts[r] += 1;
                last = Some((r, c));
            }
        }
        let mut row_offsets = vec![0usize; n + 1];
        for i in 0..n {
            row_offsets[i + 1] = row_offsets[i] + counts[i];
        }
        let op = SparseOperator { n, row_offsets, cols, vals, symmetric };
        op.check(symmetric)?;
        Ok(op)
    }

    fn check(&self, symmetric: bool) -> Result<(), FemError> {
        for i in 0..self.n {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                if !self.vals[k].is_finite() {
                    return Err(FemError::NonFiniteEntry(i));
                }
            }
        }
        if symmetric {
            for i in 0..self.n {
                for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                    let j = self.cols[k];
                    let a = self.vals[k];
                    let b = self.value_at(j, i);
                    let scale = a.abs().max(b.abs()).max(1.0);
                    if (a - b).abs() > 1e-12 * scale {
                        return Err(FemError::NotSymmetric { i, j, a, b });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Entry (i, j), zero outside the structural pattern.
    pub fn value_at(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        match self.cols[lo..hi].binary_search(&j) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value_at(i, i)).collect()
    }

    /// Quadratic form xᵀAy.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matvec(y).iter().zip(x).map(|(ay, &x)| x * ay).sum()
    }
}
