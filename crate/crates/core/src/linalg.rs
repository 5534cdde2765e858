//! Block-sparse Cholesky for symmetric positive-definite systems.
//!
//! The block elimination order comes from a greedy minimum-degree pass over
//! the block adjacency graph; ties go to the lowest block index so the
//! ordering, and therefore every factorization, is deterministic.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("matrix is not positive definite (block {block})")]
pub struct NotPositiveDefinite {
    pub block: usize,
}

/// Symmetric block matrix; only the lower triangle (`row >= col`) is stored.
#[derive(Clone, Debug)]
pub struct BlockMatrix {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    diag: Vec<DMatrix<f64>>,
    lower: BTreeMap<(usize, usize), DMatrix<f64>>,
}

impl BlockMatrix {
    pub fn new(dims: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for d in &dims {
            offsets.push(acc);
            acc += d;
        }
        let diag = dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        Self {
            dims,
            offsets,
            diag,
            lower: BTreeMap::new(),
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    pub fn size(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Accumulates `m` into block `(row, col)`; upper-triangle blocks are
    /// transposed into the lower triangle.
    pub fn add(&mut self, row: usize, col: usize, m: &DMatrix<f64>) {
        if row == col {
            self.diag[row] += m;
        } else if row > col {
            *self
                .lower
                .entry((row, col))
                .or_insert_with(|| DMatrix::zeros(self.dims[row], self.dims[col])) += m;
        } else {
            *self
                .lower
                .entry((col, row))
                .or_insert_with(|| DMatrix::zeros(self.dims[col], self.dims[row])) += m.transpose();
        }
    }

    pub fn diagonal_block(&self, i: usize) -> &DMatrix<f64> {
        &self.diag[i]
    }

    pub fn diagonal_block_mut(&mut self, i: usize) -> &mut DMatrix<f64> {
        &mut self.diag[i]
    }

    /// Block pairs `(row, col)` with `row > col` that carry a stored block.
    pub fn off_diagonal_pattern(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.lower.keys().copied()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut out = DMatrix::zeros(n, n);
        for (i, d) in self.diag.iter().enumerate() {
            let o = self.offsets[i];
            out.view_mut((o, o), (d.nrows(), d.ncols())).copy_from(d);
        }
        for ((r, c), m) in &self.lower {
            let (or, oc) = (self.offsets[*r], self.offsets[*c]);
            out.view_mut((or, oc), (m.nrows(), m.ncols())).copy_from(m);
            out.view_mut((oc, or), (m.ncols(), m.nrows()))
                .copy_from(&m.transpose());
        }
        out
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(x.len());
        for (i, d) in self.diag.iter().enumerate() {
            let o = self.offsets[i];
            let r = d * x.rows(o, d.ncols());
            let mut dst = y.rows_mut(o, d.nrows());
            dst += r;
        }
        for ((r, c), m) in &self.lower {
            let (or, oc) = (self.offsets[*r], self.offsets[*c]);
            let a = m * x.rows(oc, m.ncols());
            let b = m.transpose() * x.rows(or, m.nrows());
            let mut dst = y.rows_mut(or, m.nrows());
            dst += a;
            let mut dst = y.rows_mut(oc, m.ncols());
            dst += b;
        }
        y
    }
}

/// Elimination order and the fill pattern of the block factor.
#[derive(Clone, Debug)]
pub struct SymbolicFactor {
    /// `order[k]` is the block eliminated at step `k`.
    pub order: Vec<usize>,
    /// Inverse of `order`.
    position: Vec<usize>,
    /// For each step, the later steps with a nonzero block in that column of L (sorted).
    pattern: Vec<Vec<usize>>,
}

impl SymbolicFactor {
    /// Greedy minimum-degree ordering on the block graph given by `edges`.
    pub fn analyze(num_blocks: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); num_blocks];
        for (a, b) in edges {
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        let mut eliminated = vec![false; num_blocks];
        let mut order = Vec::with_capacity(num_blocks);
        let mut neighbors_at_elim: Vec<Vec<usize>> = vec![Vec::new(); num_blocks];
        for _ in 0..num_blocks {
            let next = (0..num_blocks)
                .filter(|&v| !eliminated[v])
                .min_by_key(|&v| (adj[v].len(), v))
                .expect("a block remains");
            let nbrs: Vec<usize> = adj[next].iter().copied().collect();
            for &a in &nbrs {
                adj[a].remove(&next);
                for &b in &nbrs {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
            eliminated[next] = true;
            order.push(next);
            neighbors_at_elim[next] = nbrs;
        }
        let mut position = vec![0; num_blocks];
        for (k, &b) in order.iter().enumerate() {
            position[b] = k;
        }
        let pattern = order
            .iter()
            .map(|&b| {
                let mut p: Vec<usize> = neighbors_at_elim[b].iter().map(|&n| position[n]).collect();
                p.sort_unstable();
                p
            })
            .collect();
        Self {
            order,
            position,
            pattern,
        }
    }

    /// Number of stored off-diagonal blocks in L.
    pub fn fill(&self) -> usize {
        self.pattern.iter().map(Vec::len).sum()
    }

    /// Factors `a` and solves `a x = b`.
    pub fn solve(&self, a: &BlockMatrix, b: &DVector<f64>) -> Result<DVector<f64>, NotPositiveDefinite> {
        let n = self.order.len();
        let dims: Vec<usize> = self.order.iter().map(|&blk| a.dims[blk]).collect();

        // Columns of L in elimination order; entry rows are elimination steps.
        let mut diag: Vec<DMatrix<f64>> = self.order.iter().map(|&blk| a.diag[blk].clone()).collect();
        let mut cols: Vec<Vec<DMatrix<f64>>> = self
            .pattern
            .iter()
            .enumerate()
            .map(|(k, rows)| rows.iter().map(|&i| DMatrix::zeros(dims[i], dims[k])).collect())
            .collect();
        for ((r, c), m) in &a.lower {
            let (pr, pc) = (self.position[*r], self.position[*c]);
            if pr > pc {
                let slot = self.slot(pc, pr);
                cols[pc][slot] += m;
            } else {
                let slot = self.slot(pr, pc);
                cols[pr][slot] += m.transpose();
            }
        }

        let mut lkk: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        for k in 0..n {
            let chol = diag[k]
                .clone()
                .cholesky()
                .ok_or(NotPositiveDefinite { block: self.order[k] })?;
            let l = chol.l();
            // L_ik = A_ik L_kk⁻ᵀ
            for blk in cols[k].iter_mut() {
                let t = l
                    .solve_lower_triangular(&blk.transpose())
                    .expect("cholesky factor is nonsingular");
                *blk = t.transpose();
            }
            let (done, rest) = cols.split_at_mut(k + 1);
            let col_k = &done[k];
            let rows = &self.pattern[k];
            for (a_idx, &i) in rows.iter().enumerate() {
                let lik = &col_k[a_idx];
                diag[i] -= lik * lik.transpose();
                for (b_idx, &j) in rows.iter().enumerate().take(a_idx) {
                    let ljk = &col_k[b_idx];
                    let slot = self.slot(j, i);
                    rest[j - k - 1][slot] -= lik * ljk.transpose();
                }
            }
            lkk.push(l);
        }

        // Forward substitution L y = P b.
        let mut y: Vec<DVector<f64>> = self
            .order
            .iter()
            .map(|&blk| b.rows(a.offsets[blk], a.dims[blk]).into_owned())
            .collect();
        for k in 0..n {
            let yk = lkk[k]
                .solve_lower_triangular(&y[k])
                .expect("cholesky factor is nonsingular");
            for (idx, &i) in self.pattern[k].iter().enumerate() {
                y[i] -= &cols[k][idx] * &yk;
            }
            y[k] = yk;
        }
        // Back substitution Lᵀ x = y.
        for k in (0..n).rev() {
            let mut rhs = y[k].clone();
            for (idx, &i) in self.pattern[k].iter().enumerate() {
                rhs -= cols[k][idx].transpose() * &y[i];
            }
            y[k] = lkk[k]
                .tr_solve_lower_triangular(&rhs)
                .expect("cholesky factor is nonsingular");
        }

        let mut x = DVector::zeros(b.len());
        for (k, &blk) in self.order.iter().enumerate() {
            x.rows_mut(a.offsets[blk], a.dims[blk]).copy_from(&y[k]);
        }
        Ok(x)
    }

    fn slot(&self, col: usize, row: usize) -> usize {
        self.pattern[col]
            .binary_search(&row)
            .expect("fill pattern covers every update")
    }
}
