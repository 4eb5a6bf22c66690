// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

//! Truncated bosonic Fock space, the Bose-Hubbard Hamiltonian, and its
//! diagonalization in blocks of fixed total particle number.
//!
//! Energies are measured in units of the on-site interaction with ħ = 1, so
//! frequencies and energies are interchangeable.

use std::collections::HashMap;
use std::ops::Range;

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest basis [`FockBasis::new`] will build unless a different cap is given.
pub const DEFAULT_MAX_DIM: usize = 4096;

/// Entries of eigenbasis operators below this magnitude are set to zero.
const PRUNE: f64 = 1e-14;

/// Occupation-number basis with a per-site cap and a global particle cap.
///
/// States are sorted by total particle number, then lexicographically, so
/// every number sector occupies a contiguous index range.
#[derive(Debug, Clone)]
pub struct FockBasis {
    num_sites: usize,
    n_max: usize,
    n_tot_max: usize,
    states: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    sector_offsets: Vec<usize>,
}

impl FockBasis {
    pub fn new(num_sites: usize, n_max: usize, n_tot_max: usize) -> Result<Self> {
        Self::with_cap(num_sites, n_max, n_tot_max, DEFAULT_MAX_DIM)
    }

    pub fn with_cap(num_sites: usize, n_max: usize, n_tot_max: usize, cap: usize) -> Result<Self> {
        if num_sites == 0 || n_max == 0 || n_tot_max == 0 {
            return Err(Error::InvalidBasis(format!(
                "need num_sites, n_max, n_tot_max >= 1 (got {num_sites}, {n_max}, {n_tot_max})"
            )));
        }
        if n_max > u8::MAX as usize {
            return Err(Error::InvalidBasis(format!("n_max {n_max} too large")));
        }
        let n_tot_max = n_tot_max.min(num_sites * n_max);

        let dim = count_states(num_sites, n_max, n_tot_max);
        if dim > cap {
            return Err(Error::BasisTooLarge { dim, cap });
        }

        let mut states = Vec::with_capacity(dim);
        let mut current = vec![0u8; num_sites];
        push_states(&mut current, 0, n_max, n_tot_max, &mut states);
        states.sort_by(|a, b| total(a).cmp(&total(b)).then_with(|| a.cmp(b)));

        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let mut sector_offsets = vec![0usize; n_tot_max + 2];
        for s in &states {
            sector_offsets[total(s) + 1] += 1;
        }
        for n in 1..sector_offsets.len() {
            sector_offsets[n] += sector_offsets[n - 1];
        }

        Ok(Self { num_sites, n_max, n_tot_max, states, index, sector_offsets })
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn n_tot_max(&self) -> usize {
        self.n_tot_max
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i]
    }

    pub fn states(&self) -> &[Vec<u8>] {
        &self.states
    }

    pub fn index_of(&self, occupations: &[u8]) -> Option<usize> {
        self.index.get(occupations).copied()
    }

    /// Index range of the states holding exactly `n` particles.
    pub fn sector(&self, n: usize) -> Range<usize> {
        if n > self.n_tot_max {
            let end = self.dim();
            return end..end;
        }
        self.sector_offsets[n]..self.sector_offsets[n + 1]
    }

    pub fn num_sectors(&self) -> usize {
        self.n_tot_max + 1
    }

    pub fn total_number(&self, i: usize) -> usize {
        total(&self.states[i])
    }
}

fn total(state: &[u8]) -> usize {
    state.iter().map(|&n| n as usize).sum()
}

fn count_states(sites: usize, n_max: usize, budget: usize) -> usize {
    // ways[n] = number of occupation vectors over the sites seen so far with n particles
    let mut ways = vec![0usize; budget + 1];
    ways[0] = 1;
    for _ in 0..sites {
        let mut next = vec![0usize; budget + 1];
        for (n, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for k in 0..=n_max.min(budget - n) {
                next[n + k] = next[n + k].saturating_add(w);
            }
        }
        ways = next;
    }
    ways.iter().fold(0usize, |acc, &w| acc.saturating_add(w))
}

fn push_states(current: &mut Vec<u8>, site: usize, n_max: usize, budget: usize, out: &mut Vec<Vec<u8>>) {
    if site == current.len() {
        out.push(current.clone());
        return;
    }
    for k in 0..=n_max.min(budget) {
        current[site] = k as u8;
        push_states(current, site + 1, n_max, budget - k, out);
    }
    current[site] = 0;
}

/// A hopping bond `J (a_i† a_j + a_j† a_i)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hop {
    pub i: usize,
    pub j: usize,
    pub amplitude: f64,
}

/// Site energies, on-site interactions, and hopping bonds of a lattice.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub epsilon: Vec<f64>,
    pub u: Vec<f64>,
    pub hops: Vec<Hop>,
}

impl LatticeSpec {
    /// Open chain with nearest-neighbour hopping `j` and uniform interaction `u`.
    pub fn chain(epsilon: Vec<f64>, u: f64, j: f64) -> Self {
        let n = epsilon.len();
        let hops = (0..n.saturating_sub(1)).map(|i| Hop { i, j: i + 1, amplitude: j }).collect();
        Self { u: vec![u; n], epsilon, hops }
    }

    pub fn num_sites(&self) -> usize {
        self.epsilon.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.epsilon.len();
        if n == 0 {
            return Err(Error::InvalidLattice("lattice has no sites".into()));
        }
        if self.u.len() != n {
            return Err(Error::InvalidLattice(format!("{} interaction values for {} sites", self.u.len(), n)));
        }
        if let Some(u) = self.u.iter().find(|&&u| !(u > 0.0) || !u.is_finite()) {
            return Err(Error::InvalidLattice(format!("interaction must be positive, got {u}")));
        }
        if self.epsilon.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidLattice("non-finite site energy".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for hop in &self.hops {
            if hop.i == hop.j {
                return Err(Error::InvalidLattice(format!("self-hop on site {}", hop.i)));
            }
            if hop.i >= n || hop.j >= n {
                return Err(Error::InvalidLattice(format!("hop ({}, {}) outside lattice", hop.i, hop.j)));
            }
            if !hop.amplitude.is_finite() {
                return Err(Error::InvalidLattice("non-finite hopping".into()));
            }
            if !seen.insert((hop.i.min(hop.j), hop.i.max(hop.j))) {
                return Err(Error::InvalidLattice(format!("duplicate bond ({}, {})", hop.i, hop.j)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisTag {
    Fock,
    Eigen,
}

/// A dense square operator together with the basis it is written in.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub matrix: Array2<C64>,
    pub basis: BasisTag,
}

impl OperatorMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: dagger(&self.matrix), basis: self.basis }
    }
}

pub(crate) fn dagger(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|z| z.conj())
}

/// Annihilation operator for `site`; images leaving the truncated space vanish.
pub fn annihilation(basis: &FockBasis, site: usize) -> Result<OperatorMatrix> {
    if site >= basis.num_sites() {
        return Err(Error::InvalidArgument(format!("site {site} outside a {}-site basis", basis.num_sites())));
    }
    let d = basis.dim();
    let mut a = Array2::<C64>::zeros((d, d));
    let mut target = vec![0u8; basis.num_sites()];
    for (col, state) in basis.states().iter().enumerate() {
        let n = state[site];
        if n == 0 {
            continue;
        }
        target.copy_from_slice(state);
        target[site] -= 1;
        if let Some(row) = basis.index_of(&target) {
            a[[row, col]] = C64::new((n as f64).sqrt(), 0.0);
        }
    }
    Ok(OperatorMatrix { matrix: a, basis: BasisTag::Fock })
}

/// Number operator `a_i† a_i` for `site`.
pub fn number_operator(basis: &FockBasis, site: usize) -> Result<OperatorMatrix> {
    if site >= basis.num_sites() {
        return Err(Error::InvalidArgument(format!("site {site} outside basis")));
    }
    let diag = basis.states().iter().map(|s| C64::new(s[site] as f64, 0.0));
    Ok(OperatorMatrix { matrix: Array2::from_diag(&Array1::from_iter(diag)), basis: BasisTag::Fock })
}

/// Bose-Hubbard Hamiltonian
/// `H = Σ_i [ε_i n_i + ½ U_i n_i (n_i − 1)] + Σ_bonds J_ij (a_i† a_j + h.c.)`.
pub fn hamiltonian(spec: &LatticeSpec, basis: &FockBasis) -> Result<OperatorMatrix> {
    spec.validate()?;
    if spec.num_sites() != basis.num_sites() {
        return Err(Error::DimensionMismatch { expected: basis.num_sites(), found: spec.num_sites() });
    }
    let d = basis.dim();
    let n_max = basis.n_max() as u8;
    let mut h = Array2::<C64>::zeros((d, d));
    let mut target = vec![0u8; basis.num_sites()];

    for (col, state) in basis.states().iter().enumerate() {
        let diag: f64 = state
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let n = n as f64;
                spec.epsilon[i] * n + 0.5 * spec.u[i] * n * (n - 1.0)
            })
            .sum();
        h[[col, col]] += C64::new(diag, 0.0);

        for hop in &spec.hops {
            for (to, from) in [(hop.i, hop.j), (hop.j, hop.i)] {
                let (nt, nf) = (state[to], state[from]);
                if nf == 0 || nt >= n_max {
                    continue;
                }
                target.copy_from_slice(state);
                target[from] -= 1;
                target[to] += 1;
                if let Some(row) = basis.index_of(&target) {
                    let amp = hop.amplitude * ((nf as f64) * (nt as f64 + 1.0)).sqrt();
                    h[[row, col]] += C64::new(amp, 0.0);
                }
            }
        }
    }
    Ok(OperatorMatrix { matrix: h, basis: BasisTag::Fock })
}

/// Eigenstates of the lattice Hamiltonian, grouped by particle number, and
/// the site annihilation operators written in that eigenbasis.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Eigenenergies, ascending inside each number sector.
    pub energies: Array1<f64>,
    /// Columns are the eigenvectors in the Fock basis.
    pub vectors: Array2<C64>,
    /// Total particle number of each eigenstate.
    pub sectors: Vec<usize>,
    /// `site_ops[q]` is `a_q` in the eigenbasis.
    pub site_ops: Vec<Array2<C64>>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Diagonalize the Hamiltonian of `spec` on `basis`.
    pub fn build(spec: &LatticeSpec, basis: &FockBasis) -> Result<Self> {
        let h = hamiltonian(spec, basis)?;
        let ops = (0..basis.num_sites()).map(|q| annihilation(basis, q)).collect::<Result<Vec<_>>>()?;
        diagonalize(&h, basis, &ops)
    }

    /// Transition frequency `ω_ab = E_a − E_b`.
    pub fn omega(&self, a: usize, b: usize) -> f64 {
        self.energies[a] - self.energies[b]
    }

    /// Rotate a Fock-basis operator into the eigenbasis.
    pub fn to_eigenbasis(&self, op: &Array2<C64>) -> Array2<C64> {
        dagger(&self.vectors).dot(op).dot(&self.vectors)
    }
}

/// Dense Hermitian eigendecomposition, one particle-number block at a time.
pub fn diagonalize(h: &OperatorMatrix, basis: &FockBasis, site_ops: &[OperatorMatrix]) -> Result<EigenSystem> {
    let d = basis.dim();
    if h.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: h.dim() });
    }
    if h.basis != BasisTag::Fock {
        return Err(Error::InvalidArgument("Hamiltonian must be in the Fock basis".into()));
    }

    let mut energies = Array1::<f64>::zeros(d);
    let mut vectors = Array2::<C64>::zeros((d, d));
    let mut sectors = vec![0usize; d];

    for n in 0..basis.num_sectors() {
        let range = basis.sector(n);
        if range.is_empty() {
            continue;
        }
        let block = h.matrix.slice(s![range.clone(), range.clone()]).to_owned();
        let (vals, vecs) = if block.nrows() == 1 {
            // LAPACK rejects the strides of a 1×1 view
            (Array1::from_elem(1, block[[0, 0]].re), Array2::from_elem((1, 1), C64::new(1.0, 0.0)))
        } else {
            block.eigh(UPLO::Lower).map_err(|e| Error::Eigensolver { sector: n, reason: e.to_string() })?
        };
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eigensolver { sector: n, reason: "non-finite eigenvalue".into() });
        }
        energies.slice_mut(s![range.clone()]).assign(&vals);
        vectors.slice_mut(s![range.clone(), range.clone()]).assign(&vecs);
        for i in range {
            sectors[i] = n;
        }
    }

    let mut rotated = Vec::with_capacity(site_ops.len());
    let vd = dagger(&vectors);
    for op in site_ops {
        if op.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: op.dim() });
        }
        let mut m = vd.dot(&op.matrix).dot(&vectors);
        // An annihilation operator only connects sector n + 1 to sector n.
        for ((r, c), z) in m.indexed_iter_mut() {
            if sectors[r] + 1 != sectors[c] || z.norm() < PRUNE {
                *z = C64::new(0.0, 0.0);
            }
        }
        rotated.push(m);
    }

    Ok(EigenSystem { energies, vectors, sectors, site_ops: rotated })
}
