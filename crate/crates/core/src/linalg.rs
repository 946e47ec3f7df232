//! Compressed sparse row matrices, block systems and the linear solvers used
//! by the time stepper.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::Col;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is singular to working precision at pivot {pivot}")]
    Singular { pivot: usize },
    #[error(
        "BiCGStab did not converge in {iterations} iterations (relative residual {residual:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Iterate,
    },
    #[error("BiCGStab breakdown after restart (iteration {iterations})")]
    Breakdown { iterations: usize, best: Iterate },
    #[error("invalid block layout: {0}")]
    BlockLayout(String),
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("invalid solver setting: {0}")]
    InvalidSetting(String),
}

/// Best iterate carried by a failed solve.
#[derive(Clone, PartialEq)]
pub struct Iterate(pub Vec<f64>);

impl std::fmt::Debug for Iterate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Iterate(len = {})", self.0.len())
    }
}

/// Square CSR matrix. Column indices are strictly increasing within a row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        SparseMatrix {
            n,
            row_offsets: vec![0; n + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SparseMatrix {
            n: diag.len(),
            row_offsets: (0..=diag.len()).collect(),
            col_indices: (0..diag.len()).collect(),
            values: diag.to_vec(),
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are
    /// summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, LinalgError> {
        for &(r, c, _) in triplets {
            if r >= n || c >= n {
                return Err(LinalgError::DimensionMismatch {
                    expected: n,
                    found: r.max(c) + 1,
                });
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_offsets = vec![0usize; n + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds from raw CSR arrays after checking the structural invariants.
    pub fn from_csr(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        let bad = |m: &str| Err(LinalgError::BlockLayout(m.to_string()));
        if row_offsets.len() != n + 1 || row_offsets[0] != 0 {
            return bad("row offsets must have length n + 1 and start at 0");
        }
        if *row_offsets.last().unwrap() != col_indices.len() || col_indices.len() != values.len() {
            return bad("offsets, indices and values disagree in length");
        }
        for i in 0..n {
            if row_offsets[i + 1] < row_offsets[i] {
                return bad("row offsets must be monotone");
            }
            let cols = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= n) {
                return bad("column indices must be strictly increasing and in range");
            }
        }
        Ok(SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Structural and numerical symmetry within `tol` (absolute).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (self.get(j, i) - v).abs() <= tol))
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Returns `sum_k coeff_k * A_k` over matrices of equal dimension.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Result<Self, LinalgError> {
        let n = terms.first().map(|t| t.1.n).unwrap_or(0);
        for (_, m) in terms {
            if m.n != n {
                return Err(LinalgError::DimensionMismatch {
                    expected: n,
                    found: m.n,
                });
            }
        }
        // Fast path: all operands share one sparsity pattern (mass, stiffness
        // and lumped diagonals on a mesh always do after `with_pattern_of`).
        if terms.iter().all(|(_, m)| {
            m.row_offsets == terms[0].1.row_offsets && m.col_indices == terms[0].1.col_indices
        }) {
            let mut out = terms[0].1.clone();
            out.values.iter_mut().for_each(|v| *v = 0.0);
            for (c, m) in terms {
                for (o, v) in out.values.iter_mut().zip(&m.values) {
                    *o += c * v;
                }
            }
            return Ok(out);
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            scratch.clear();
            for (c, m) in terms {
                scratch.extend(m.row(i).map(|(j, v)| (j, c * v)));
            }
            scratch.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < scratch.len() {
                let j = scratch[k].0;
                let mut acc = 0.0;
                while k < scratch.len() && scratch[k].0 == j {
                    acc += scratch[k].1;
                    k += 1;
                }
                col_indices.push(j);
                values.push(acc);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Diagonal matrix stored with the sparsity pattern of `pattern`
    /// (explicit zeros off the diagonal). Requires every diagonal entry to be
    /// present in the pattern.
    pub fn diagonal_with_pattern_of(
        pattern: &SparseMatrix,
        diag: &[f64],
    ) -> Result<Self, LinalgError> {
        if diag.len() != pattern.n {
            return Err(LinalgError::DimensionMismatch {
                expected: pattern.n,
                found: diag.len(),
            });
        }
        let mut out = pattern.clone();
        for i in 0..pattern.n {
            for k in pattern.row_offsets[i]..pattern.row_offsets[i + 1] {
                out.values[k] = if pattern.col_indices[k] == i {
                    diag[i]
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// `y = A x` without allocation.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yi = acc;
        }
    }

    /// Quadratic form `x^T A y`.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum()
    }
}

pub fn matvec(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if x.len() != a.n {
        return Err(LinalgError::DimensionMismatch {
            expected: a.n,
            found: x.len(),
        });
    }
    let mut y = vec![0.0; a.n];
    a.matvec_into(x, &mut y);
    Ok(y)
}

/// Square grid of optional equally sized blocks with a stacked right-hand
/// side. The unknown ordering follows the block index (for the raft model:
/// phi, mu, v).
#[derive(Debug, Clone)]
pub struct BlockSystem {
    block_dim: usize,
    blocks: Vec<Vec<Option<SparseMatrix>>>,
    pub rhs: Vec<f64>,
}

impl BlockSystem {
    pub fn new(num_blocks: usize, block_dim: usize) -> Self {
        BlockSystem {
            block_dim,
            blocks: vec![vec![None; num_blocks]; num_blocks],
            rhs: vec![0.0; num_blocks * block_dim],
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn set_block(
        &mut self,
        row: usize,
        col: usize,
        m: SparseMatrix,
    ) -> Result<(), LinalgError> {
        if m.dim() != self.block_dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.block_dim,
                found: m.dim(),
            });
        }
        if row >= self.num_blocks() || col >= self.num_blocks() {
            return Err(LinalgError::BlockLayout(format!(
                "block ({row}, {col}) out of range"
            )));
        }
        self.blocks[row][col] = Some(m);
        Ok(())
    }

    pub fn block(&self, row: usize, col: usize) -> Option<&SparseMatrix> {
        self.blocks[row][col].as_ref()
    }

    pub fn rhs_block_mut(&mut self, row: usize) -> &mut [f64] {
        let n = self.block_dim;
        &mut self.rhs[row * n..(row + 1) * n]
    }

    /// Assembles the blocks into one CSR matrix of dimension
    /// `num_blocks * block_dim`.
    pub fn flatten(&self) -> SparseMatrix {
        let nb = self.num_blocks();
        let n = self.block_dim;
        let total: usize = self
            .blocks
            .iter()
            .flatten()
            .flatten()
            .map(|b| b.nnz())
            .sum();
        let mut row_offsets = Vec::with_capacity(nb * n + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(total);
        let mut values = Vec::with_capacity(total);
        for br in 0..nb {
            for i in 0..n {
                for bc in 0..nb {
                    if let Some(b) = &self.blocks[br][bc] {
                        for (j, v) in b.row(i) {
                            col_indices.push(bc * n + j);
                            values.push(v);
                        }
                    }
                }
                row_offsets.push(col_indices.len());
            }
        }
        SparseMatrix {
            n: nb * n,
            row_offsets,
            col_indices,
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioner {
    None,
    Jacobi,
    /// Incomplete LU with the sparsity pattern of the matrix.
    Ilu0,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Systems with at most this many unknowns use the sparse LU
    /// factorization; larger ones use preconditioned BiCGStab.
    pub direct_threshold: usize,
    pub rtol: f64,
    /// Iteration cap as a multiple of the system size.
    pub maxit_factor: usize,
    pub preconditioner: Preconditioner,
    /// Try BiCGStab preconditioned with the previous factorization before
    /// refactoring (only in [`LinearSolver`]).
    pub reuse_factorization: bool,
    /// Iteration budget for the reuse attempt.
    pub reuse_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            direct_threshold: 200_000,
            rtol: 1e-10,
            maxit_factor: 10,
            preconditioner: Preconditioner::Ilu0,
            reuse_factorization: true,
            reuse_iterations: 8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), LinalgError> {
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(LinalgError::InvalidSetting(format!(
                "rtol {} outside (0, 1)",
                self.rtol
            )));
        }
        if self.maxit_factor == 0 {
            return Err(LinalgError::InvalidSetting(
                "maxit_factor must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// Fresh sparse LU factorization.
    Direct,
    BiCgStab,
    /// BiCGStab preconditioned with an earlier LU factorization.
    ReusedLu,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub method: SolveMethod,
    pub iterations: usize,
    /// Relative residual `||b - A x|| / ||b||` (0 when `b = 0`).
    pub residual: f64,
}

/// Solves `A x = b` with a sparse LU factorization up to the configured
/// size and preconditioned BiCGStab above it. `x` holds the initial guess on
/// entry.
pub fn solve(
    a: &SparseMatrix,
    b: &[f64],
    x: &mut Vec<f64>,
    cfg: &SolverConfig,
) -> Result<SolveStats, LinalgError> {
    let mut cfg = *cfg;
    cfg.reuse_factorization = false;
    LinearSolver::new(cfg).solve(a, b, x)
}

/// Sparse LU factorization (column approximate minimum degree ordering,
/// partial pivoting) of a CSR matrix. The symbolic analysis is kept and
/// reused when a matrix with the same pattern is refactored.
pub struct SparseLu {
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    symbolic: SymbolicLu<usize>,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "SparseLu(n = {}, nnz = {})",
            self.row_offsets.len() - 1,
            self.col_indices.len()
        )
    }
}

impl SparseLu {
    // The CSR arrays of A are the CSC arrays of A^T; A^T is factored and
    // systems with A are solved as transposed solves.
    fn transposed_view(a: &SparseMatrix) -> SparseColMatRef<'_, usize, f64> {
        let sym = SymbolicSparseColMatRef::new_checked(
            a.dim(),
            a.dim(),
            a.row_offsets(),
            None,
            a.col_indices(),
        );
        SparseColMatRef::new(sym, a.values())
    }

    pub fn factor(a: &SparseMatrix) -> Result<Self, LinalgError> {
        let view = Self::transposed_view(a);
        let symbolic = SymbolicLu::try_new(view.symbolic())
            .map_err(|e| LinalgError::Factorization(format!("{e:?}")))?;
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), view).map_err(lu_error)?;
        Ok(SparseLu {
            row_offsets: a.row_offsets().to_vec(),
            col_indices: a.col_indices().to_vec(),
            symbolic,
            lu,
        })
    }

    fn same_pattern(&self, a: &SparseMatrix) -> bool {
        self.row_offsets == a.row_offsets() && self.col_indices == a.col_indices()
    }

    /// Numeric refactorization; falls back to a full factorization when the
    /// pattern changed.
    pub fn refactor(&mut self, a: &SparseMatrix) -> Result<(), LinalgError> {
        if !self.same_pattern(a) {
            *self = Self::factor(a)?;
            return Ok(());
        }
        self.lu = Lu::try_new_with_symbolic(self.symbolic.clone(), Self::transposed_view(a))
            .map_err(lu_error)?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let mut col = Col::<f64>::from_fn(b.len(), |i| b[i]);
        self.lu.solve_transpose_in_place(col.as_mat_mut());
        for (xi, ci) in x.iter_mut().zip(col.iter()) {
            *xi = *ci;
        }
    }
}

fn lu_error(e: faer::sparse::linalg::LuError) -> LinalgError {
    match e {
        faer::sparse::linalg::LuError::SymbolicSingular { index } => {
            LinalgError::Singular { pivot: index }
        }
        other => LinalgError::Factorization(format!("{other:?}")),
    }
}

/// Linear solver that keeps its last LU factorization between calls.
#[derive(Debug)]
pub struct LinearSolver {
    cfg: SolverConfig,
    lu: Option<SparseLu>,
}

impl LinearSolver {
    pub fn new(cfg: SolverConfig) -> Self {
        LinearSolver { cfg, lu: None }
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Drops the stored factorization.
    pub fn reset(&mut self) {
        self.lu = None;
    }

    pub fn solve(
        &mut self,
        a: &SparseMatrix,
        b: &[f64],
        x: &mut Vec<f64>,
    ) -> Result<SolveStats, LinalgError> {
        let n = a.dim();
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        if x.len() != n {
            x.resize(n, 0.0);
        }
        let cfg = self.cfg;
        if n > cfg.direct_threshold {
            let pc = build_preconditioner(a, cfg.preconditioner)?;
            let out = bicgstab_with(a, b, x, cfg.rtol, cfg.maxit_factor * n, &pc)?;
            *x = out.x;
            return Ok(SolveStats {
                method: SolveMethod::BiCgStab,
                iterations: out.iterations,
                residual: out.residual,
            });
        }
        if cfg.reuse_factorization {
            if let Some(lu) = self.lu.as_ref().filter(|lu| lu.same_pattern(a)) {
                if let Ok(out) = bicgstab_with(a, b, x, cfg.rtol, cfg.reuse_iterations, lu) {
                    *x = out.x;
                    return Ok(SolveStats {
                        method: SolveMethod::ReusedLu,
                        iterations: out.iterations,
                        residual: out.residual,
                    });
                }
            }
        }
        match self.lu.as_mut() {
            Some(lu) => lu.refactor(a)?,
            None => self.lu = Some(SparseLu::factor(a)?),
        }
        let lu = self.lu.as_ref().expect("factorization present");
        lu.solve_into(b, x);
        if x.iter().any(|v| !v.is_finite()) {
            self.lu = None;
            return Err(LinalgError::Singular { pivot: n });
        }
        let residual = relative_residual(a, x, b);
        if !(residual <= cfg.rtol.sqrt()) {
            self.lu = None;
            return Err(LinalgError::Singular { pivot: n });
        }
        Ok(SolveStats {
            method: SolveMethod::Direct,
            iterations: 0,
            residual,
        })
    }
}

fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let nb = norm2(b);
    if nb == 0.0 {
        return norm2(&residual(a, x, b));
    }
    norm2(&residual(a, x, b)) / nb
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; a.dim()];
    a.matvec_into(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    r
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dense LU with partial pivoting. `a` is row-major.
pub fn direct_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.len();
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if let Some(row) = a.iter().find(|r| r.len() != n) {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: row.len(),
        });
    }
    let mut lu: Vec<f64> = a.iter().flatten().copied().collect();
    let mut x = b.to_vec();
    let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = scale * n as f64 * f64::EPSILON;
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold((k, -1.0), |acc, e| if e.1 > acc.1 { e } else { acc });
        if pmax <= tiny || pmax == 0.0 {
            return Err(LinalgError::Singular { pivot: k });
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            x.swap(k, p);
        }
        let pivot = lu[k * n + k];
        for i in k + 1..n {
            let f = lu[i * n + k] / pivot;
            if f == 0.0 {
                continue;
            }
            lu[i * n + k] = f;
            for j in k + 1..n {
                lu[i * n + j] -= f * lu[k * n + j];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut acc = x[k];
        for j in k + 1..n {
            acc -= lu[k * n + j] * x[j];
        }
        x[k] = acc / lu[k * n + k];
    }
    Ok(x)
}

/// Subtracts the weighted mean so that `sum_i w_i x_i = 0`.
pub fn zero_mean_project(x: &[f64], weights: &[f64]) -> Vec<f64> {
    let wsum: f64 = weights.iter().sum();
    let mean = dot(x, weights) / wsum;
    x.iter().map(|v| v - mean).collect()
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive
/// (semi)definite systems. For a singular `A` the right-hand side must lie in
/// its range.
pub fn conjugate_gradient(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    rtol: f64,
    maxit: usize,
) -> Result<BiCgStabOutput, LinalgError> {
    let n = a.dim();
    if b.len() != n || x0.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: b.len().min(x0.len()),
        });
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(BiCgStabOutput {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = x0.to_vec();
    let mut r = residual(a, &x, b);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..=maxit {
        let rnorm = norm2(&r);
        if rnorm <= rtol * bnorm {
            return Ok(BiCgStabOutput {
                x,
                iterations: it,
                residual: rnorm / bnorm,
            });
        }
        if it == maxit {
            return Err(LinalgError::NoConvergence {
                iterations: it,
                residual: rnorm / bnorm,
                best: Iterate(x),
            });
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(LinalgError::Breakdown {
                iterations: it,
                best: Iterate(x),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    unreachable!()
}

/// Right preconditioner applied as `z = P^{-1} r`.
pub enum PreconditionerOp {
    Identity,
    Jacobi(Vec<f64>),
    Ilu0(Ilu0),
}

/// Approximate inverse applied as `z = P^{-1} r`.
pub trait Precondition {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

impl Precondition for SparseLu {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.solve_into(r, z);
    }
}

impl Precondition for PreconditionerOp {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            PreconditionerOp::Identity => z.copy_from_slice(r),
            PreconditionerOp::Jacobi(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
            PreconditionerOp::Ilu0(f) => f.solve(r, z),
        }
    }
}

pub fn build_preconditioner(
    a: &SparseMatrix,
    kind: Preconditioner,
) -> Result<PreconditionerOp, LinalgError> {
    Ok(match kind {
        Preconditioner::None => PreconditionerOp::Identity,
        Preconditioner::Jacobi => PreconditionerOp::Jacobi(
            a.diagonal()
                .iter()
                .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
                .collect(),
        ),
        Preconditioner::Ilu0 => PreconditionerOp::Ilu0(Ilu0::new(a)?),
    })
}

/// ILU(0) factors stored in the pattern of the source matrix (unit lower
/// triangle implied).
pub struct Ilu0 {
    lu: SparseMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &SparseMatrix) -> Result<Self, LinalgError> {
        let n = a.dim();
        let mut lu = a.clone();
        let mut diag_pos = vec![usize::MAX; n];
        for (i, d) in diag_pos.iter_mut().enumerate() {
            let range = lu.row_offsets[i]..lu.row_offsets[i + 1];
            if let Ok(k) = lu.col_indices[range.clone()].binary_search(&i) {
                *d = range.start + k;
            } else {
                return Err(LinalgError::Singular { pivot: i });
            }
        }
        // Position lookup for the current row: col -> index into values.
        let mut where_in_row = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_offsets[i], lu.row_offsets[i + 1]);
            for k in start..end {
                where_in_row[lu.col_indices[k]] = k;
            }
            for k in start..end {
                let j = lu.col_indices[k];
                if j >= i {
                    break;
                }
                let pivot = lu.values[diag_pos[j]];
                if pivot == 0.0 {
                    return Err(LinalgError::Singular { pivot: j });
                }
                let f = lu.values[k] / pivot;
                lu.values[k] = f;
                for kk in diag_pos[j] + 1..lu.row_offsets[j + 1] {
                    let w = where_in_row[lu.col_indices[kk]];
                    if w != usize::MAX {
                        lu.values[w] -= f * lu.values[kk];
                    }
                }
            }
            for k in start..end {
                where_in_row[lu.col_indices[k]] = usize::MAX;
            }
            if lu.values[diag_pos[i]] == 0.0 {
                return Err(LinalgError::Singular { pivot: i });
            }
        }
        Ok(Ilu0 { lu, diag_pos })
    }

    fn solve(&self, r: &[f64], z: &mut [f64]) {
        let n = self.lu.dim();
        let (off, cols, vals) = (&self.lu.row_offsets, &self.lu.col_indices, &self.lu.values);
        for i in 0..n {
            let mut acc = r[i];
            for k in off[i]..self.diag_pos[i] {
                acc -= vals[k] * z[cols[k]];
            }
            z[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = z[i];
            for k in self.diag_pos[i] + 1..off[i + 1] {
                acc -= vals[k] * z[cols[k]];
            }
            z[i] = acc / vals[self.diag_pos[i]];
        }
    }
}

#[derive(Debug, Clone)]
pub struct BiCgStabOutput {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Jacobi-preconditioned BiCGStab; see [`bicgstab_with`].
pub fn bicgstab(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    rtol: f64,
    maxit: usize,
) -> Result<BiCgStabOutput, LinalgError> {
    let pc = build_preconditioner(a, Preconditioner::Jacobi)?;
    bicgstab_with(a, b, x0, rtol, maxit, &pc)
}

/// Right-preconditioned BiCGStab. Converged when
/// `||b - A x|| <= rtol ||b||`, checked against the true residual. On a
/// breakdown (`rho` or `omega` vanishing) the iteration restarts once from the
/// current iterate.
pub fn bicgstab_with(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    rtol: f64,
    maxit: usize,
    pc: &impl Precondition,
) -> Result<BiCgStabOutput, LinalgError> {
    let n = a.dim();
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    if x0.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    if !(rtol > 0.0 && rtol < 1.0) {
        return Err(LinalgError::InvalidSetting(format!(
            "rtol {rtol} outside (0, 1)"
        )));
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(BiCgStabOutput {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = rtol * bnorm;

    let mut x = x0.to_vec();
    let mut r = residual(a, &x, b);
    let mut rnorm = norm2(&r);
    let mut best = (rnorm, x.clone());
    if rnorm <= target {
        return Ok(BiCgStabOutput {
            x,
            iterations: 0,
            residual: rnorm / bnorm,
        });
    }

    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut restarted = false;
    let mut it = 0;

    while it < maxit {
        it += 1;
        let rho_new = dot(&r_hat, &r);
        let breakdown = rho_new.abs() <= f64::EPSILON * norm2(&r_hat) * rnorm || omega == 0.0;
        if breakdown {
            if restarted {
                return Err(LinalgError::Breakdown {
                    iterations: it,
                    best: Iterate(best.1),
                });
            }
            restarted = true;
            r = residual(a, &x, b);
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|e| *e = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pc.apply(&p, &mut p_hat);
        a.matvec_into(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            omega = 0.0;
            continue;
        }
        alpha = rho / rv;
        // s overwrites r.
        for i in 0..n {
            r[i] -= alpha * v[i];
        }
        let snorm = norm2(&r);
        if snorm <= target {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            let true_res = norm2(&residual(a, &x, b));
            if true_res <= target {
                return Ok(BiCgStabOutput {
                    x,
                    iterations: it,
                    residual: true_res / bnorm,
                });
            }
            r = residual(a, &x, b);
            rnorm = true_res;
            continue;
        }
        pc.apply(&r, &mut s_hat);
        a.matvec_into(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &r) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] -= omega * t[i];
        }
        rnorm = norm2(&r);
        if rnorm < best.0 {
            best = (rnorm, x.clone());
        }
        if !rnorm.is_finite() {
            return Err(LinalgError::Breakdown {
                iterations: it,
                best: Iterate(best.1),
            });
        }
        if rnorm <= target {
            let true_res = norm2(&residual(a, &x, b));
            if true_res <= target {
                return Ok(BiCgStabOutput {
                    x,
                    iterations: it,
                    residual: true_res / bnorm,
                });
            }
            // Recurrence drifted from the true residual: continue from it.
            r = residual(a, &x, b);
            rnorm = true_res;
        }
    }
    let best_res = norm2(&residual(a, &best.1, b));
    let (res, xb) = if best_res <= norm2(&residual(a, &x, b)) {
        (best_res, best.1)
    } else {
        (norm2(&residual(a, &x, b)), x)
    };
    Err(LinalgError::NoConvergence {
        iterations: it,
        residual: res / bnorm,
        best: Iterate(xb),
    })
}
