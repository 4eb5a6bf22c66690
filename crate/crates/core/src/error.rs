// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis parameters: {0}")]
    InvalidBasis(String),

    #[error("basis dimension {dim} exceeds the configured cap {cap}")]
    BasisTooLarge { dim: usize, cap: usize },

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid reservoir: {0}")]
    InvalidReservoir(String),

    #[error("invalid device: {0}")]
    InvalidDevice(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("eigensolver failed in particle-number sector {sector}: {reason}")]
    Eigensolver { sector: usize, reason: String },

    #[error("steady state is not unique: null space has dimension {nullity}")]
    DegenerateSteadyState { nullity: usize },

    #[error("steady-state residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("density matrix has eigenvalue {min_eigenvalue:.3e} below the negativity tolerance")]
    Negativity { min_eigenvalue: f64 },

    #[error("linear solver failed: {0}")]
    LinearSolver(String),

    #[error("integrator failed at t = {time}: {reason}")]
    Integrator { time: f64, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("correlation has not decayed: |C| = {tail:.3e} at the end of the tau grid (C(0) = {initial:.3e})")]
    InsufficientTauRange { tail: f64, initial: f64 },

    #[error("noise power vanishes while the mean current is {current:.3e}")]
    ZeroNoisePower { current: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
