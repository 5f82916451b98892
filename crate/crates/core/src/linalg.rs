//! Sparse storage, affine-constraint elimination, direct sparse LU, and the
//! dense helpers used for trace-space matrices.

use crate::error::{Error, Result};
use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::ops::{AddAssign, Mul};

/// Relative residual above which a direct solve is reported as failed.
pub const SOLVE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Copy + Default + AddAssign + Mul<Output = T>> CsrMatrix<T> {
    /// Duplicate entries are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut entries: Vec<(usize, usize, T)>) -> Self {
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            assert!(i < n_rows && j < n_cols, "entry ({i}, {j}) outside {n_rows}x{n_cols}");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                values.push(v);
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.col_idx[p], self.values[p]))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).find(|&(c, _)| c == j).map(|(_, v)| v).unwrap_or_default()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn map<U: Copy + Default + AddAssign + Mul<Output = U>>(&self, f: impl Fn(T) -> U) -> CsrMatrix<U> {
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl CsrMatrix<f64> {
    pub fn mul_vec_c(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows).map(|i| self.row(i).map(|(j, v)| x[j] * v).sum()).collect()
    }

    /// x ↦ rows `rows` of A x.
    pub fn mul_vec_rows_c(&self, x: &[C64], rows: &[usize]) -> Vec<C64> {
        rows.iter().map(|&i| self.row(i).map(|(j, v)| x[j] * v).sum()).collect()
    }
}

impl CsrMatrix<C64> {
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows).map(|i| self.row(i).map(|(j, v)| x[j] * v).sum()).collect()
    }
}

pub fn norm2(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let n = norm2(b);
    if n == 0.0 {
        d
    } else {
        d / n
    }
}

/// Direct sparse LU of a complex matrix, with the matrix kept for residual checks.
pub struct SparseLu {
    n: usize,
    matrix: CsrMatrix<C64>,
    symbolic: SymbolicLu<usize>,
    lu: Lu<usize, C64>,
}

fn to_faer(a: &CsrMatrix<C64>) -> Result<SparseColMat<usize, C64>> {
    let trip: Vec<Triplet<usize, usize, C64>> = a.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
    SparseColMat::try_new_from_triplets(a.n_rows, a.n_cols, &trip)
        .map_err(|e| Error::Solver(format!("sparse matrix construction failed: {e:?}")))
}

impl SparseLu {
    pub fn factor(a: CsrMatrix<C64>) -> Result<Self> {
        if a.n_rows != a.n_cols {
            return Err(Error::DimensionMismatch { expected: a.n_rows, got: a.n_cols });
        }
        let m = to_faer(&a)?;
        let symbolic = SymbolicLu::try_new(m.symbolic())
            .map_err(|e| Error::Solver(format!("symbolic factorisation failed: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), m.as_ref())
            .map_err(|e| Error::Solver(format!("numeric factorisation failed (singular pivot): {e:?}")))?;
        Ok(Self { n: a.n_rows, matrix: a, symbolic, lu })
    }

    /// Numeric refactorisation for a matrix with the same sparsity pattern.
    pub fn refactor(&self, a: CsrMatrix<C64>) -> Result<Self> {
        if a.row_ptr != self.matrix.row_ptr || a.col_idx != self.matrix.col_idx {
            return Self::factor(a);
        }
        let m = to_faer(&a)?;
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), m.as_ref())
            .map_err(|e| Error::Solver(format!("numeric factorisation failed (singular pivot): {e:?}")))?;
        Ok(Self { n: a.n_rows, matrix: a, symbolic: self.symbolic.clone(), lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CsrMatrix<C64> {
        &self.matrix
    }

    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        let mut out = self.solve_many(&[rhs.to_vec()])?;
        Ok(out.pop().unwrap())
    }

    fn solve_block(&self, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        let mut b = Mat::<C64>::from_fn(self.n, rhs.len(), |i, j| rhs[j][i]);
        self.lu.solve_in_place(b.as_mut());
        let mut out = Vec::with_capacity(rhs.len());
        for (j, r) in rhs.iter().enumerate() {
            let x: Vec<C64> = (0..self.n).map(|i| b[(i, j)]).collect();
            let res = self.matrix.mul_vec(&x);
            let num = rel_diff(&res, r);
            let scale = norm2(r);
            if !x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) || (scale > 0.0 && num > SOLVE_TOLERANCE) {
                return Err(Error::Solver(format!(
                    "direct solve failed: relative residual {num:e}; the truncated problem is singular or near-resonant"
                )));
            }
            out.push(x);
        }
        Ok(out)
    }

    /// Solves for several right-hand sides, in parallel chunks with results in input order.
    pub fn solve_many(&self, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        for r in rhs {
            if r.len() != self.n {
                return Err(Error::DimensionMismatch { expected: self.n, got: r.len() });
            }
        }
        const CHUNK: usize = 16;
        let parts: Vec<Result<Vec<Vec<C64>>>> = rhs.par_chunks(CHUNK).map(|c| self.solve_block(c)).collect();
        let mut out = Vec::with_capacity(rhs.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}

/// How a full-system DOF is eliminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Free,
    /// Value prescribed by the offset vector.
    Fixed,
    /// `u[dof] = u[master] + offset[dof]`; the master must be free.
    Tied(usize),
}

/// Affine constraint on one DOF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    Fixed { dof: usize, value: C64 },
    Tie { dof: usize, master: usize, offset: C64 },
}

/// A square system `A u = b` with affine constraints `u = P w + c` eliminated by
/// substitution and Galerkin testing: `Pᵀ A P w = Pᵀ (b − A c)`.
pub struct ConstrainedSystem {
    full: CsrMatrix<C64>,
    links: Vec<Link>,
    reduced_of: Vec<usize>,
    lu: SparseLu,
}

impl ConstrainedSystem {
    pub fn new(full: CsrMatrix<C64>, links: Vec<Link>) -> Result<Self> {
        let (reduced, reduced_of) = Self::reduce(&full, &links)?;
        let lu = SparseLu::factor(reduced)?;
        Ok(Self { full, links, reduced_of, lu })
    }

    /// Same links and pattern, new values; reuses the symbolic factorisation.
    pub fn with_matrix(&self, full: CsrMatrix<C64>) -> Result<Self> {
        let (reduced, reduced_of) = Self::reduce(&full, &self.links)?;
        let lu = self.lu.refactor(reduced)?;
        Ok(Self { full, links: self.links.clone(), reduced_of, lu })
    }

    fn reduce(full: &CsrMatrix<C64>, links: &[Link]) -> Result<(CsrMatrix<C64>, Vec<usize>)> {
        if links.len() != full.n_rows || full.n_rows != full.n_cols {
            return Err(Error::DimensionMismatch { expected: full.n_rows, got: links.len() });
        }
        let mut reduced_of = vec![usize::MAX; links.len()];
        let mut n = 0;
        for (i, l) in links.iter().enumerate() {
            if *l == Link::Free {
                reduced_of[i] = n;
                n += 1;
            }
        }
        let target = |i: usize| -> Result<Option<usize>> {
            match links[i] {
                Link::Free => Ok(Some(reduced_of[i])),
                Link::Fixed => Ok(None),
                Link::Tied(m) => {
                    if links[m] != Link::Free {
                        return Err(Error::Solver(format!("constraint master {m} of {i} is not free")));
                    }
                    Ok(Some(reduced_of[m]))
                }
            }
        };
        let mut trip = Vec::with_capacity(full.nnz());
        for i in 0..full.n_rows {
            let Some(ri) = target(i)? else { continue };
            for (j, v) in full.row(i) {
                if let Some(cj) = target(j)? {
                    trip.push((ri, cj, v));
                }
            }
        }
        Ok((CsrMatrix::from_triplets(n, n, trip), reduced_of))
    }

    pub fn full_dim(&self) -> usize {
        self.links.len()
    }

    pub fn reduced_dim(&self) -> usize {
        self.lu.dim()
    }

    pub fn full_matrix(&self) -> &CsrMatrix<C64> {
        &self.full
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    fn reduced_rhs(&self, rhs: &[C64], offset: &[C64]) -> Vec<C64> {
        let ac = self.full.mul_vec(offset);
        let mut b = vec![C64::new(0.0, 0.0); self.reduced_dim()];
        for i in 0..self.links.len() {
            let r = match self.links[i] {
                Link::Free => self.reduced_of[i],
                Link::Tied(m) => self.reduced_of[m],
                Link::Fixed => continue,
            };
            b[r] += rhs[i] - ac[i];
        }
        b
    }

    fn expand(&self, w: &[C64], offset: &[C64]) -> Vec<C64> {
        (0..self.links.len())
            .map(|i| match self.links[i] {
                Link::Free => w[self.reduced_of[i]],
                Link::Fixed => offset[i],
                Link::Tied(m) => w[self.reduced_of[m]] + offset[i],
            })
            .collect()
    }

    /// `offset` carries fixed values and tie offsets; entries at free DOFs are ignored.
    pub fn solve(&self, rhs: &[C64], offset: &[C64]) -> Result<Vec<C64>> {
        Ok(self.solve_many(&[(rhs.to_vec(), offset.to_vec())])?.pop().unwrap())
    }

    pub fn solve_many(&self, cases: &[(Vec<C64>, Vec<C64>)]) -> Result<Vec<Vec<C64>>> {
        let n = self.links.len();
        for (r, o) in cases {
            if r.len() != n || o.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: r.len().min(o.len()) });
            }
        }
        let cleaned: Vec<Vec<C64>> = cases
            .iter()
            .map(|(_, o)| {
                (0..n).map(|i| if self.links[i] == Link::Free { C64::new(0.0, 0.0) } else { o[i] }).collect()
            })
            .collect();
        let rhs: Vec<Vec<C64>> = cases.iter().zip(&cleaned).map(|((r, _), o)| self.reduced_rhs(r, o)).collect();
        let ws = self.lu.solve_many(&rhs)?;
        Ok(ws.iter().zip(&cleaned).map(|(w, o)| self.expand(w, o)).collect())
    }

    /// ‖Pᵀ(A u − b)‖ / ‖Pᵀ b‖ for a constrained solution `u`.
    pub fn galerkin_residual(&self, u: &[C64], rhs: &[C64]) -> f64 {
        let zero = vec![C64::new(0.0, 0.0); u.len()];
        let au = self.full.mul_vec(u);
        let r: Vec<C64> = au.iter().zip(rhs).map(|(a, b)| a - b).collect();
        let pr = self.reduced_rhs(&r, &zero);
        let pb = self.reduced_rhs(rhs, &zero);
        let nb = norm2(&pb);
        if nb == 0.0 {
            norm2(&pr)
        } else {
            norm2(&pr) / nb
        }
    }
}

/// Build the links and offsets for a constraint list over `n` DOFs.
pub fn constraint_links(n: usize, constraints: &[Constraint]) -> Result<(Vec<Link>, Vec<C64>)> {
    let mut links = vec![Link::Free; n];
    let mut offset = vec![C64::new(0.0, 0.0); n];
    for c in constraints {
        let (dof, link, val) = match *c {
            Constraint::Fixed { dof, value } => (dof, Link::Fixed, value),
            Constraint::Tie { dof, master, offset } => (dof, Link::Tied(master), offset),
        };
        if dof >= n {
            return Err(Error::DimensionMismatch { expected: n, got: dof + 1 });
        }
        if links[dof] != Link::Free {
            return Err(Error::Solver(format!("DOF {dof} constrained twice")));
        }
        links[dof] = link;
        offset[dof] = val;
    }
    Ok((links, offset))
}

/// One-shot constrained direct solve.
pub fn solve_linear(system: CsrMatrix<C64>, rhs: &[C64], constraints: &[Constraint]) -> Result<Vec<C64>> {
    if rhs.len() != system.n_rows {
        return Err(Error::DimensionMismatch { expected: system.n_rows, got: rhs.len() });
    }
    let (links, offset) = constraint_links(system.n_rows, constraints)?;
    ConstrainedSystem::new(system, links)?.solve(rhs, &offset)
}

// ---------------------------------------------------------------------------
// Dense helpers.

pub type DMat = Mat<C64>;

pub fn dmat_from_cols(n_rows: usize, cols: &[Vec<C64>]) -> DMat {
    Mat::from_fn(n_rows, cols.len(), |i, j| cols[j][i])
}

pub fn dmat_mul_vec(a: MatRef<'_, C64>, x: &[C64]) -> Vec<C64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
}

pub fn dmat_adjoint(a: MatRef<'_, C64>) -> DMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn spectral_norm(a: MatRef<'_, C64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let s = a.singular_values().map_err(|e| Error::Solver(format!("SVD failed: {e:?}")))?;
    Ok(s.first().copied().unwrap_or(0.0))
}

/// 2-norm condition number from singular values.
pub fn condition_number(a: MatRef<'_, C64>) -> Result<f64> {
    let s = a.singular_values().map_err(|e| Error::Solver(format!("SVD failed: {e:?}")))?;
    let (max, min) = (s.first().copied().unwrap_or(0.0), s.last().copied().unwrap_or(0.0));
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(a: MatRef<'_, C64>) -> Result<(Vec<f64>, DMat)> {
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("eigensolve failed: {e:?}")))?;
    let vals = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn hermitian_eigenvalues(a: MatRef<'_, C64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Solver(format!("eigensolve failed: {e:?}")))
}

/// f(A) for Hermitian A via its eigendecomposition.
pub fn hermitian_function(a: MatRef<'_, C64>, f: impl Fn(f64) -> f64) -> Result<DMat> {
    let (vals, u) = hermitian_eigen(a)?;
    let n = vals.len();
    let mut us = u.clone();
    for j in 0..n {
        let s = f(vals[j]);
        for i in 0..n {
            us[(i, j)] *= s;
        }
    }
    Ok(&us * dmat_adjoint(u.as_ref()))
}

/// Solve the dense system `A x = b` by partial-pivot LU.
pub fn dense_solve(a: MatRef<'_, C64>, b: &[C64]) -> Vec<C64> {
    let lu = a.partial_piv_lu();
    let mut rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    lu.solve_in_place(rhs.as_mut());
    (0..b.len()).map(|i| rhs[(i, 0)]).collect()
}

pub fn dense_inverse(a: MatRef<'_, C64>) -> DMat {
    a.partial_piv_lu().inverse()
}
