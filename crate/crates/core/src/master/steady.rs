// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

use ndarray::{Array1, Array2};
use ndarray_linalg::{FactorizeInto, ReciprocalConditionNum, Solve, SVD};
use num_complex::Complex64 as C64;
use serde::Serialize;
use sprs::{CsMat, TriMat};

use super::gmres::{gmres, GmresOptions};
use super::{DensityMatrix, Liouvillian, NEGATIVITY_TOLERANCE};
use crate::error::{Error, Result};
use crate::fock::dagger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    /// Null vector from a singular-value decomposition.
    Svd,
    /// Dense LU with the trace condition replacing one population equation.
    Lu,
    /// Jacobi-preconditioned GMRES on the same trace-constrained system.
    Gmres,
}

#[derive(Debug, Clone)]
pub struct SteadyOptions {
    /// Population-space dimension up to which the SVD route is used.
    pub svd_limit: usize,
    /// Population-space dimension up to which dense LU is used.
    pub dense_limit: usize,
    /// Bound on `‖L σ‖₂ / (‖L‖₂ ‖σ‖₂)`.
    pub residual_tolerance: f64,
    /// Singular values below this fraction of the largest count toward the
    /// null space.
    pub nullity_tolerance: f64,
    /// Eigenvalues of `σ` below `−negativity_tolerance` are an error.
    pub negativity_tolerance: f64,
    pub gmres: GmresOptions,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            svd_limit: 400,
            dense_limit: 3000,
            residual_tolerance: 1e-9,
            nullity_tolerance: 1e-13,
            negativity_tolerance: NEGATIVITY_TOLERANCE,
            gmres: GmresOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub sigma: DensityMatrix,
    /// `‖L σ‖₂` on the population space.
    pub residual: f64,
    /// `residual / (‖L‖₂ ‖σ‖₂)`.
    pub relative_residual: f64,
    pub min_eigenvalue: f64,
    pub method: SolveMethod,
    /// Dimension of the linear system that was solved.
    pub space_dim: usize,
}

pub fn steady_state(l: &Liouvillian) -> Result<SteadyState> {
    steady_state_with(l, &SteadyOptions::default())
}

/// Stationary state of `l` with unit trace.
///
/// Solves on the zero-offset pair space; a null space of dimension other
/// than one is reported as [`Error::DegenerateSteadyState`].
pub fn steady_state_with(l: &Liouvillian, opts: &SteadyOptions) -> Result<SteadyState> {
    let space = l.population_space();
    let m = space.len();
    let op = l.superoperator(&space)?;
    let diag = space.diagonal();

    let (x, method) = if m <= opts.svd_limit {
        (solve_svd(&op, &diag, opts)?, SolveMethod::Svd)
    } else if m <= opts.dense_limit {
        (solve_lu(&op, &diag, opts)?, SolveMethod::Lu)
    } else {
        (solve_gmres(&op, &diag, opts)?, SolveMethod::Gmres)
    };

    let mut sigma = space.matrix(&x);
    sigma = (&sigma + &dagger(&sigma)).mapv(|z| z * 0.5);
    let tr = sigma.diag().sum();
    sigma.mapv_inplace(|z| z / tr);

    let v = space.vectorize(&sigma);
    let residual = norm(&matvec(&op, &v));
    let relative_residual = residual / (spectral_norm(&op).max(f64::MIN_POSITIVE) * norm(&v));
    if !(relative_residual <= opts.residual_tolerance) {
        return Err(Error::Residual { residual: relative_residual, tolerance: opts.residual_tolerance });
    }

    let sigma = DensityMatrix { matrix: sigma };
    let min_eigenvalue = sigma.min_eigenvalue()?;
    if min_eigenvalue < -opts.negativity_tolerance {
        return Err(Error::Negativity { min_eigenvalue });
    }
    Ok(SteadyState { sigma, residual, relative_residual, min_eigenvalue, method, space_dim: m })
}

fn dense(op: &CsMat<C64>) -> Array2<C64> {
    op.to_dense()
}

fn solve_svd(op: &CsMat<C64>, diag: &[usize], opts: &SteadyOptions) -> Result<Array1<C64>> {
    let a = dense(op);
    let (_, s, vt) = a.svd(false, true).map_err(|e| Error::LinearSolver(e.to_string()))?;
    let vt = vt.ok_or_else(|| Error::LinearSolver("SVD returned no right vectors".into()))?;
    let nullity = count_null(s.as_slice().unwrap_or(&[]), opts.nullity_tolerance);
    if nullity != 1 {
        return Err(Error::DegenerateSteadyState { nullity });
    }
    let last = vt.nrows() - 1;
    let x: Array1<C64> = vt.row(last).mapv(|z| z.conj());
    let tr: C64 = diag.iter().map(|&k| x[k]).sum();
    if tr.norm() < 1e-300 {
        return Err(Error::LinearSolver("null vector is traceless".into()));
    }
    Ok(x.mapv(|z| z / tr))
}

fn count_null(singular_values: &[f64], tol: f64) -> usize {
    let max = singular_values.iter().cloned().fold(0.0, f64::max);
    singular_values.iter().filter(|&&s| s <= tol * max).count()
}

fn nullity_from_values(op: &CsMat<C64>, tol: f64) -> Result<usize> {
    let (_, s, _) = dense(op).svd(false, false).map_err(|e| Error::LinearSolver(e.to_string()))?;
    Ok(count_null(s.as_slice().unwrap_or(&[]), tol))
}

/// Row index replaced by the trace condition: the first population equation.
fn pivot_row(diag: &[usize]) -> Result<usize> {
    diag.first().copied().ok_or_else(|| Error::LinearSolver("no populations in pair space".into()))
}

fn solve_lu(op: &CsMat<C64>, diag: &[usize], opts: &SteadyOptions) -> Result<Array1<C64>> {
    let mut a = dense(op);
    let r0 = pivot_row(diag)?;
    a.row_mut(r0).fill(C64::new(0.0, 0.0));
    for &k in diag {
        a[[r0, k]] = C64::new(1.0, 0.0);
    }
    let mut rhs = Array1::zeros(a.nrows());
    rhs[r0] = C64::new(1.0, 0.0);

    let degenerate = || -> Error {
        match nullity_from_values(op, opts.nullity_tolerance) {
            Ok(nullity) => Error::DegenerateSteadyState { nullity: nullity.max(2) },
            Err(e) => e,
        }
    };
    // an exactly singular pivot surfaces as a factorization error
    let lu = a.factorize_into().map_err(|_| degenerate())?;
    let rcond = lu.rcond().map_err(|e| Error::LinearSolver(e.to_string()))?;
    if rcond < 1e-14 {
        return Err(degenerate());
    }
    lu.solve_into(rhs).map_err(|e| Error::LinearSolver(e.to_string()))
}

fn solve_gmres(op: &CsMat<C64>, diag: &[usize], opts: &SteadyOptions) -> Result<Array1<C64>> {
    let r0 = pivot_row(diag)?;
    let m = op.rows();
    let mut tri = TriMat::with_capacity((m, m), op.nnz() + diag.len());
    for (row, vec) in op.outer_iterator().enumerate() {
        if row == r0 {
            continue;
        }
        for (col, &v) in vec.iter() {
            tri.add_triplet(row, col, v);
        }
    }
    for &k in diag {
        tri.add_triplet(r0, k, C64::new(1.0, 0.0));
    }
    let a: CsMat<C64> = tri.to_csr();
    let mut rhs = Array1::zeros(m);
    rhs[r0] = C64::new(1.0, 0.0);

    let precond: Array1<C64> = (0..m)
        .map(|i| {
            let d = a.get(i, i).copied().unwrap_or_default();
            if d.norm() > 1e-300 {
                C64::new(1.0, 0.0) / d
            } else {
                C64::new(1.0, 0.0)
            }
        })
        .collect();
    gmres(&a, &rhs, &precond, &opts.gmres)
}

pub(crate) fn matvec(op: &CsMat<C64>, x: &Array1<C64>) -> Array1<C64> {
    let mut y = Array1::zeros(op.rows());
    for (row, vec) in op.outer_iterator().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (col, &v) in vec.iter() {
            acc += v * x[col];
        }
        y[row] = acc;
    }
    y
}

fn adjoint_matvec(op: &CsMat<C64>, x: &Array1<C64>) -> Array1<C64> {
    let mut y = Array1::zeros(op.cols());
    for (row, vec) in op.outer_iterator().enumerate() {
        let xr = x[row];
        for (col, &v) in vec.iter() {
            y[col] += v.conj() * xr;
        }
    }
    y
}

pub(crate) fn norm(x: &Array1<C64>) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Power-iteration estimate of `‖op‖₂` (a lower bound).
pub(crate) fn spectral_norm(op: &CsMat<C64>) -> f64 {
    let n = op.cols();
    if n == 0 {
        return 0.0;
    }
    // deterministic start vector with no special alignment
    let mut v: Array1<C64> = (0..n).map(|i| C64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.1)).collect();
    let mut est = 0.0;
    for _ in 0..50 {
        let nv = norm(&v);
        v.mapv_inplace(|z| z / nv);
        let w = matvec(op, &v);
        let next = norm(&w);
        v = adjoint_matvec(op, &w);
        if (next - est).abs() <= 1e-6 * next {
            return next;
        }
        est = next;
    }
    est
}
