// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

//! Particle transport through small Bose-Hubbard lattices coupled to
//! zero-temperature reservoirs.
//!
//! The pipeline is: enumerate a truncated Fock basis and diagonalize the
//! lattice Hamiltonian ([`fock`]), turn each reservoir into complex rate
//! matrices ([`reservoir`]), assemble the eigenbasis master equation and solve
//! for its steady state ([`master`]), then read off currents and current
//! noise ([`observables`]). [`devices`] holds the wire, diode, transistor and
//! logic-gate configurations together with the chemical-potential sweep
//! engine.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod devices;
pub mod error;
pub mod fock;
pub mod master;
pub mod observables;
pub mod reservoir;

pub use error::{Error, Result};
