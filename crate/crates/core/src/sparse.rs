//! Sparse matrices and direct solvers.
//!
//! Matrices are assembled from triplets into CSR form. Factorizations work on
//! the envelope (skyline) of the matrix after a reverse Cuthill-McKee
//! reordering, which keeps the profile of two-dimensional mesh operators small.

use std::collections::VecDeque;

use crate::error::{Result, WgfError};

/// Square matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn with_capacity(n: usize, capacity: usize) -> Self {
        Self { n, entries: Vec::with_capacity(capacity) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { n: self.n, row_ptr, col_idx, values }
    }
}

impl CsrMatrix {
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut b = TripletBuilder::with_capacity(n, triplets.len());
        for &(r, c, v) in triplets {
            b.push(r, c, v);
        }
        b.build()
    }

    pub fn identity(n: usize) -> Self {
        Self { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut b = TripletBuilder::with_capacity(self.n, self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                b.push(j, i, v);
            }
        }
        b.build()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        d
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Neighbor lists of the symmetrized sparsity pattern, without the diagonal.
    fn symmetric_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if i != j {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern; `perm[new] = old`.
pub fn rcm_ordering(matrix: &CsrMatrix) -> Vec<usize> {
    let adj = matrix.symmetric_adjacency();
    let n = matrix.n();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, mark: &mut Vec<bool>| -> Vec<Vec<usize>> {
        let mut levels = vec![vec![start]];
        mark[start] = true;
        loop {
            let mut next = Vec::new();
            for &v in levels.last().unwrap() {
                for &w in &adj[v] {
                    if !mark[w] {
                        mark[w] = true;
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        levels
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Pseudo-peripheral start: repeat BFS from a minimum-degree node of the last level.
        let mut start = seed;
        let mut eccentricity = 0;
        loop {
            let mut scratch = visited.clone();
            let levels = bfs_levels(start, &mut scratch);
            let candidate = *levels.last().unwrap().iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            if levels.len() - 1 <= eccentricity {
                break;
            }
            eccentricity = levels.len() - 1;
            start = candidate;
        }

        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_unstable_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Permuted copy `P A P^T` with `perm[new] = old`, plus the inverse permutation.
fn permute(matrix: &CsrMatrix, perm: &[usize]) -> (CsrMatrix, Vec<usize>) {
    let mut inv = vec![0usize; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let mut b = TripletBuilder::with_capacity(matrix.n(), matrix.nnz());
    for i in 0..matrix.n() {
        for (j, v) in matrix.row(i) {
            b.push(inv[i], inv[j], v);
        }
    }
    (b.build(), inv)
}

/// First column of the symmetrized envelope of every row.
fn envelope_starts(matrix: &CsrMatrix) -> Vec<usize> {
    let mut first: Vec<usize> = (0..matrix.n()).collect();
    for i in 0..matrix.n() {
        for (j, _) in matrix.row(i) {
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            first[hi] = first[hi].min(lo);
        }
    }
    first
}

fn offsets(first: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(first.len() + 1);
    off.push(0);
    for (i, &f) in first.iter().enumerate() {
        off.push(off[i] + (i - f));
    }
    off
}

#[inline]
fn dot_range(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Envelope Cholesky factorization `P A P^T = L L^T` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    perm: Vec<usize>,
    inv: Vec<usize>,
    first: Vec<usize>,
    /// Row `i` of `L` strictly left of the diagonal, columns `first[i]..i`.
    off: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors a symmetric matrix; only the lower triangle is read.
    pub fn factor(matrix: &CsrMatrix) -> Result<Self> {
        let perm = rcm_ordering(matrix);
        let (a, inv) = permute(matrix, &perm);
        let n = a.n();
        let first = envelope_starts(&a);
        let off = offsets(&first);
        let mut lower = vec![0.0; off[n]];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j < i {
                    lower[off[i] + j - first[i]] = v;
                } else if j == i {
                    diag[i] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let s = dot_range(&lower[off[i] + k0 - fi..off[i] + j - fi], &lower[off[j] + k0 - fj..off[j] + j - fj]);
                let idx = off[i] + j - fi;
                lower[idx] = (lower[idx] - s) / diag[j];
            }
            let row = &lower[off[i]..off[i + 1]];
            let d = diag[i] - dot_range(row, row);
            if !(d > 0.0) || !d.is_finite() {
                return Err(WgfError::solver(
                    format!("Cholesky breakdown at pivot {i} (value {d:e}); matrix is not positive definite"),
                    0,
                    f64::NAN,
                    f64::NAN,
                ));
            }
            diag[i] = d.sqrt();
        }
        Ok(Self { perm, inv, first, off, lower, diag })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let s = dot_range(&self.lower[self.off[i]..self.off[i + 1]], &y[fi..i]);
            y[i] = (y[i] - s) / self.diag[i];
        }
        for i in (0..n).rev() {
            y[i] /= self.diag[i];
            let yi = y[i];
            let fi = self.first[i];
            for (k, l) in (fi..i).zip(&self.lower[self.off[i]..self.off[i + 1]]) {
                y[k] -= l * yi;
            }
        }
        (0..n).map(|i| y[self.inv[i]]).collect()
    }

    /// Number of stored off-diagonal factor entries.
    pub fn envelope_size(&self) -> usize {
        self.lower.len()
    }
}

/// Envelope LU factorization `P A P^T = L U` without pivoting.
///
/// Meant for matrices that are diagonally dominant by rows or columns, for
/// which elimination without pivoting is stable.
#[derive(Debug, Clone)]
pub struct SkylineLu {
    perm: Vec<usize>,
    inv: Vec<usize>,
    first: Vec<usize>,
    off: Vec<usize>,
    /// Row `i` of unit-lower `L`, columns `first[i]..i`.
    lower: Vec<f64>,
    /// Column `i` of `U` above the diagonal, rows `first[i]..i`.
    upper: Vec<f64>,
    diag: Vec<f64>,
}

impl SkylineLu {
    pub fn factor(matrix: &CsrMatrix) -> Result<Self> {
        let perm = rcm_ordering(matrix);
        let (a, inv) = permute(matrix, &perm);
        let n = a.n();
        let first = envelope_starts(&a);
        let off = offsets(&first);
        let mut lower = vec![0.0; off[n]];
        let mut upper = vec![0.0; off[n]];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j < i {
                    lower[off[i] + j - first[i]] = v;
                } else if j > i {
                    upper[off[j] + i - first[j]] = v;
                } else {
                    diag[i] = v;
                }
            }
        }
        let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let li = &lower[off[i] + k0 - fi..off[i] + j - fi];
                let ui = &upper[off[i] + k0 - fi..off[i] + j - fi];
                let lj = &lower[off[j] + k0 - fj..off[j] + j - fj];
                let uj = &upper[off[j] + k0 - fj..off[j] + j - fj];
                let su = dot_range(lj, ui);
                let sl = dot_range(li, uj);
                let idx = off[i] + j - fi;
                upper[idx] -= su;
                lower[idx] = (lower[idx] - sl) / diag[j];
            }
            let d = diag[i] - dot_range(&lower[off[i]..off[i + 1]], &upper[off[i]..off[i + 1]]);
            if !(d.abs() > 1e-300_f64.max(1e-15 * scale)) || !d.is_finite() {
                return Err(WgfError::solver(
                    format!("LU breakdown at pivot {i} (value {d:e})"),
                    0,
                    f64::NAN,
                    f64::NAN,
                ));
            }
            diag[i] = d;
        }
        Ok(Self { perm, inv, first, off, lower, upper, diag })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            let fi = self.first[i];
            y[i] -= dot_range(&self.lower[self.off[i]..self.off[i + 1]], &y[fi..i]);
        }
        for i in (0..n).rev() {
            y[i] /= self.diag[i];
            let yi = y[i];
            let fi = self.first[i];
            for (k, u) in (fi..i).zip(&self.upper[self.off[i]..self.off[i + 1]]) {
                y[k] -= u * yi;
            }
        }
        (0..n).map(|i| y[self.inv[i]]).collect()
    }
}

/// Direct factorization usable with [`solve_refined`].
pub trait Factorization {
    fn solve(&self, b: &[f64]) -> Vec<f64>;
}

impl Factorization for SkylineCholesky {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        SkylineCholesky::solve(self, b)
    }
}

impl Factorization for SkylineLu {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        SkylineLu::solve(self, b)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `A x = b` and polishes the result with up to two steps of iterative refinement.
///
/// Fails when the relative residual `|b - A x|_inf / |b|_inf` stays above `tol`.
pub fn solve_refined<F: Factorization>(factor: &F, matrix: &CsrMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let b_norm = inf_norm(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let mut x = factor.solve(b);
    let mut rel = f64::INFINITY;
    for _ in 0..3 {
        let ax = matrix.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        rel = inf_norm(&r) / b_norm;
        if rel <= tol {
            return Ok(x);
        }
        let dx = factor.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
    }
    let ax = matrix.mul_vec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    rel = rel.min(inf_norm(&r) / b_norm);
    if rel <= tol && x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(WgfError::solver(format!("linear solve stalled at relative residual {rel:e}"), 0, rel, f64::NAN))
    }
}
