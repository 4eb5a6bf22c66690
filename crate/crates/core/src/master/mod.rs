// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

//! The reservoir-summed master equation in the system eigenbasis: generator
//! assembly, steady states, and time evolution.
//!
//! The generator conserves `N_a − N_b` for every matrix element `σ_ab`, so
//! each fixed offset is an invariant subspace. Steady states and
//! number-conserving observables live in the zero-offset subspace, which is
//! where the solvers work.

mod evolve;
mod gmres;
mod liouvillian;
mod steady;

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

pub use evolve::{evolve, propagate, propagate_trace, IntegratorOptions};
pub use gmres::GmresOptions;
pub use liouvillian::{Liouvillian, PairSpace};
pub use steady::{steady_state, steady_state_with, SolveMethod, SteadyOptions, SteadyState};

use crate::error::{Error, Result};
use crate::fock::dagger;

/// Eigenvalues below this are an error; between it and zero they are
/// tolerated round-off or weak Redfield non-positivity.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-8;

/// Reduced density matrix of the lattice, written in the eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub matrix: Array2<C64>,
}

impl DensityMatrix {
    /// Wrap `matrix` after checking Hermiticity and unit trace.
    pub fn new(matrix: Array2<C64>) -> Result<Self> {
        let rho = Self { matrix };
        let herm = rho.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::InvalidArgument(format!("density matrix not Hermitian ({herm:.2e})")));
        }
        let tr = rho.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidArgument(format!("density matrix trace {tr}")));
        }
        Ok(rho)
    }

    /// Projector onto eigenstate `k` of a `dim`-dimensional space.
    pub fn pure(dim: usize, k: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        m[[k, k]] = C64::new(1.0, 0.0);
        Self { matrix: m }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().sum()
    }

    /// Largest entry of `ρ − ρ†`.
    pub fn hermiticity_error(&self) -> f64 {
        let dag = dagger(&self.matrix);
        (&self.matrix - &dag).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn population(&self, k: usize) -> f64 {
        self.matrix[[k, k]].re
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let herm = (&self.matrix + &dagger(&self.matrix)).mapv(|z| z * 0.5);
        if herm.nrows() == 1 {
            return Ok(vec![herm[[0, 0]].re]);
        }
        let (vals, _) = herm.eigh(UPLO::Lower).map_err(|e| Error::LinearSolver(e.to_string()))?;
        Ok(vals.to_vec())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (&self.matrix - &other.matrix).iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::Liouvillian;
    use crate::fock::{EigenSystem, FockBasis, LatticeSpec};
    use crate::reservoir::{gamma_matrices, ReservoirSpec};
    use ndarray::Array2;
    use num_complex::Complex64 as C64;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    /// Chain lattice with reservoirs given as `(site, mu, gamma0)` on the band
    /// `[0, omega_c]`.
    pub fn system(
        eps: &[f64],
        j: f64,
        n_max: usize,
        reservoirs: &[(usize, f64, f64)],
        omega_c: f64,
    ) -> (EigenSystem, Liouvillian) {
        let n = eps.len();
        let basis = FockBasis::new(n, n_max, n * n_max).unwrap();
        let eig = EigenSystem::build(&LatticeSpec::chain(eps.to_vec(), 1.0, j), &basis).unwrap();
        let rates: Vec<_> = reservoirs
            .iter()
            .enumerate()
            .map(|(k, &(site, mu, gamma0))| {
                let spec = ReservoirSpec { name: format!("r{k}"), site, mu, gamma0, omega_c, omega_min: 0.0 };
                gamma_matrices(k, &spec, &eig).unwrap()
            })
            .collect();
        let l = Liouvillian::assemble(&eig, &rates).unwrap();
        (eig, l)
    }

    /// A forward-biased resonant pair.
    pub fn diode() -> (EigenSystem, Liouvillian) {
        system(&[3.0, 4.0], 0.03, 3, &[(0, 4.5, 1e-2), (1, 0.0, 1e-2)], 13.0)
    }

    /// Options that accept the weak non-positivity of the Redfield steady state.
    pub fn relaxed() -> super::SteadyOptions {
        super::SteadyOptions { negativity_tolerance: 0.1, ..Default::default() }
    }

    pub fn random_hermitian(rng: &mut ChaCha8Rng, d: usize) -> Array2<C64> {
        let m = Array2::from_shape_fn((d, d), |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let h = &m + &m.t().mapv(|z| z.conj());
        h.mapv(|z| z * 0.5)
    }
}
