// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

//! Restarted GMRES with a diagonal right preconditioner.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use sprs::CsMat;

use super::steady::{matvec, norm};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iterations: usize,
    /// Stop when `‖b − A x‖ ≤ tolerance · ‖b‖`.
    pub tolerance: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { restart: 150, max_iterations: 20_000, tolerance: 1e-13 }
    }
}

fn dot(x: &Array1<C64>, y: &Array1<C64>) -> C64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// Solve `A x = b` with `x = P y`, `P = diag(precond)`.
pub(crate) fn gmres(
    a: &CsMat<C64>,
    b: &Array1<C64>,
    precond: &Array1<C64>,
    opts: &GmresOptions,
) -> Result<Array1<C64>> {
    let n = b.len();
    let b_norm = norm(b);
    let mut x = Array1::<C64>::zeros(n);
    if b_norm == 0.0 {
        return Ok(x);
    }
    let m = opts.restart.max(1).min(n);
    let mut iterations = 0;

    loop {
        let r = b - &matvec(a, &x);
        let beta = norm(&r);
        if beta <= opts.tolerance * b_norm {
            return Ok(x);
        }
        if iterations >= opts.max_iterations {
            return Err(Error::LinearSolver(format!(
                "GMRES stalled at relative residual {:.3e} after {iterations} iterations",
                beta / b_norm
            )));
        }

        let mut basis: Vec<Array1<C64>> = Vec::with_capacity(m + 1);
        basis.push(r.mapv(|z| z / beta));
        let mut h = Array2::<C64>::zeros((m + 1, m));
        let mut cs = vec![C64::new(0.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;

        for k in 0..m {
            iterations += 1;
            let z = &basis[k] * precond;
            let mut w = matvec(a, &z);
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = dot(v, &w);
                    h[[i, k]] += hij;
                    w.scaled_add(-hij, v);
                }
            }
            let wn = norm(&w);
            h[[k + 1, k]] = C64::new(wn, 0.0);

            for i in 0..k {
                let t = cs[i].conj() * h[[i, k]] + sn[i].conj() * h[[i + 1, k]];
                h[[i + 1, k]] = -sn[i] * h[[i, k]] + cs[i] * h[[i + 1, k]];
                h[[i, k]] = t;
            }
            let (hk, hk1) = (h[[k, k]], h[[k + 1, k]]);
            let denom = (hk.norm_sqr() + hk1.norm_sqr()).sqrt();
            if denom == 0.0 {
                cs[k] = C64::new(1.0, 0.0);
                sn[k] = C64::new(0.0, 0.0);
            } else {
                cs[k] = hk / denom;
                sn[k] = hk1 / denom;
            }
            h[[k, k]] = cs[k].conj() * hk + sn[k].conj() * hk1;
            h[[k + 1, k]] = C64::new(0.0, 0.0);
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            k_used = k + 1;

            if g[k + 1].norm() <= opts.tolerance * b_norm || wn == 0.0 {
                break;
            }
            basis.push(w.mapv(|z| z / wn));
            if iterations >= opts.max_iterations {
                break;
            }
        }

        // back substitution on the triangular system
        let mut y = vec![C64::new(0.0, 0.0); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[[i, j]] * y[j];
            }
            y[i] = s / h[[i, i]];
        }
        let mut update = Array1::<C64>::zeros(n);
        for (i, yi) in y.iter().enumerate() {
            update.scaled_add(*yi, &basis[i]);
        }
        x += &(&update * precond);
    }
}
