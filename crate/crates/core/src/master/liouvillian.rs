// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use sprs::CsMat;

use crate::error::{Error, Result};
use crate::fock::{dagger, EigenSystem};
use crate::reservoir::RateMatrices;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// One reservoir's dissipator: the site operator in the eigenbasis and the
/// four rate-contracted copies of it.
#[derive(Debug, Clone)]
pub(crate) struct Channel {
    pub reservoir: usize,
    pub a: Array2<C64>,
    pub a_dag: Array2<C64>,
    /// `Γ₋^(Out) ∘ a`
    pub out_minus_a: Array2<C64>,
    /// `Γ₋^(In) ∘ a`
    pub in_minus_a: Array2<C64>,
    /// `Γ₊^(In) ∘ a†`
    pub in_plus_adag: Array2<C64>,
    /// `Γ₊^(Out) ∘ a†`
    pub out_plus_adag: Array2<C64>,
}

impl Channel {
    fn new(rates: &RateMatrices, eig: &EigenSystem) -> Self {
        let a = eig.site_ops[rates.site].clone();
        let a_dag = dagger(&a);
        Self {
            reservoir: rates.reservoir,
            out_minus_a: &rates.out_minus * &a,
            in_minus_a: &rates.in_minus * &a,
            in_plus_adag: &rates.in_plus * &a_dag,
            out_plus_adag: &rates.out_plus * &a_dag,
            a,
            a_dag,
        }
    }

    /// The sandwich terms `X σ Y` of the dissipator, each weighted by `+½`.
    fn sandwiches(&self) -> [(&Array2<C64>, &Array2<C64>); 4] {
        [
            (&self.out_minus_a, &self.a_dag),
            (&self.a_dag, &self.in_minus_a),
            (&self.in_plus_adag, &self.a),
            (&self.a, &self.out_plus_adag),
        ]
    }
}

/// Generator of the reduced dynamics, `dσ/dt = L(σ)`, in the eigenbasis.
///
/// For every reservoir the dissipator is
///
/// ```text
/// −½ { a†[Γ₋ᴼ∘a]σ − [Γ₋ᴼ∘a]σa† + σ[Γ₋ᴵ∘a]a† − a†σ[Γ₋ᴵ∘a]
///    + a[Γ₊ᴵ∘a†]σ − [Γ₊ᴵ∘a†]σa + σ[Γ₊ᴼ∘a†]a − aσ[Γ₊ᴼ∘a†] }
/// ```
///
/// where `∘` is the elementwise product, added to the coherent part
/// `−iω_ab σ_ab`. Vectorization is column-stacking: pair `(a, b)` precedes
/// `(a', b')` when `b < b'`, or `b == b'` and `a < a'`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    energies: Array1<f64>,
    sectors: Vec<usize>,
    channels: Vec<Channel>,
    /// `Σ (a†[Γ₋ᴼ∘a] + a[Γ₊ᴵ∘a†])`, multiplies σ from the left.
    left: Array2<C64>,
    /// `Σ ([Γ₋ᴵ∘a]a† + [Γ₊ᴼ∘a†]a)`, multiplies σ from the right.
    right: Array2<C64>,
    gap_threshold: Option<f64>,
}

impl Liouvillian {
    /// Sum one dissipator per reservoir onto the coherent evolution.
    pub fn assemble(eig: &EigenSystem, rates: &[RateMatrices]) -> Result<Self> {
        let d = eig.dim();
        let mut channels = Vec::with_capacity(rates.len());
        for r in rates {
            if r.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: r.dim() });
            }
            if r.site >= eig.site_ops.len() {
                return Err(Error::InvalidArgument(format!("no site operator for site {}", r.site)));
            }
            channels.push(Channel::new(r, eig));
        }
        let mut left = Array2::zeros((d, d));
        let mut right = Array2::zeros((d, d));
        for ch in &channels {
            left += &ch.a_dag.dot(&ch.out_minus_a);
            left += &ch.a.dot(&ch.in_plus_adag);
            right += &ch.in_minus_a.dot(&ch.a_dag);
            right += &ch.out_plus_adag.dot(&ch.a);
        }
        Ok(Self {
            energies: eig.energies.clone(),
            sectors: eig.sectors.clone(),
            channels,
            left,
            right,
            gap_threshold: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &Array1<f64> {
        &self.energies
    }

    pub fn sectors(&self) -> &[usize] {
        &self.sectors
    }

    pub fn reservoirs(&self) -> Vec<usize> {
        self.channels.iter().map(|c| c.reservoir).collect()
    }

    pub fn omega(&self, a: usize, b: usize) -> f64 {
        self.energies[a] - self.energies[b]
    }

    /// Coherence cutoff of a secular-reduced generator, `None` when all
    /// coherences are kept.
    pub fn gap_threshold(&self) -> Option<f64> {
        self.gap_threshold
    }

    /// Whether the pair `(a, b)` is a degree of freedom of this generator.
    pub fn keeps(&self, a: usize, b: usize) -> bool {
        match self.gap_threshold {
            None => true,
            Some(t) => a == b || self.omega(a, b).abs() < t,
        }
    }

    /// Keep populations and only the coherences with `|ω_ab| < gap_threshold`;
    /// every coupling to or from a dropped coherence is removed.
    pub fn secular_reduce(&self, gap_threshold: f64) -> Result<Self> {
        if !(gap_threshold >= 0.0) {
            return Err(Error::InvalidArgument(format!("gap threshold {gap_threshold} < 0")));
        }
        let mut out = self.clone();
        out.gap_threshold = if gap_threshold.is_infinite() {
            self.gap_threshold
        } else {
            Some(self.gap_threshold.map_or(gap_threshold, |t| t.min(gap_threshold)))
        };
        Ok(out)
    }

    fn project(&self, m: &mut Array2<C64>) {
        if self.gap_threshold.is_none() {
            return;
        }
        for ((a, b), z) in m.indexed_iter_mut() {
            if !self.keeps(a, b) {
                *z = ZERO;
            }
        }
    }

    /// Apply the generator to a dense matrix.
    pub fn apply(&self, sigma: &Array2<C64>) -> Result<Array2<C64>> {
        let d = self.dim();
        if sigma.dim() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, found: sigma.nrows() });
        }
        let mut x = sigma.clone();
        self.project(&mut x);

        let mut out = Array2::<C64>::zeros((d, d));
        for ((a, b), z) in out.indexed_iter_mut() {
            *z = C64::new(0.0, -self.omega(a, b)) * x[[a, b]];
        }
        out.scaled_add(C64::new(-0.5, 0.0), &self.left.dot(&x));
        out.scaled_add(C64::new(-0.5, 0.0), &x.dot(&self.right));
        for ch in &self.channels {
            for (l, r) in ch.sandwiches() {
                out.scaled_add(C64::new(0.5, 0.0), &l.dot(&x).dot(r));
            }
        }
        self.project(&mut out);
        Ok(out)
    }

    /// Pairs whose number offset `N_a − N_b` is one of `offsets`, restricted
    /// to the degrees of freedom this generator keeps. Each such set is
    /// invariant under the generator.
    pub fn pair_space(&self, offsets: &[i64]) -> PairSpace {
        PairSpace::from_filter(self.dim(), |a, b| {
            offsets.contains(&(self.sectors[a] as i64 - self.sectors[b] as i64)) && self.keeps(a, b)
        })
    }

    /// The pairs carrying populations: equal particle number on both sides.
    pub fn population_space(&self) -> PairSpace {
        self.pair_space(&[0])
    }

    /// All kept pairs.
    pub fn full_space(&self) -> PairSpace {
        PairSpace::from_filter(self.dim(), |a, b| self.keeps(a, b))
    }

    /// Explicit matrix of the generator restricted to `space`, in CSR form.
    pub fn superoperator(&self, space: &PairSpace) -> Result<CsMat<C64>> {
        let d = self.dim();
        if space.hilbert_dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: space.hilbert_dim() });
        }
        let m = space.len();

        let left_cols = column_lists(&self.left, C64::new(-0.5, 0.0));
        let right_rows = row_lists(&self.right, C64::new(-0.5, 0.0));
        let sandwiches: Vec<_> = self
            .channels
            .iter()
            .flat_map(|ch| ch.sandwiches())
            .map(|(l, r)| (column_lists(l, C64::new(0.5, 0.0)), row_lists(r, C64::new(1.0, 0.0))))
            .collect();

        let mut indptr = Vec::with_capacity(m + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut acc = vec![ZERO; m];
        let mut touched: Vec<usize> = Vec::new();
        indptr.push(0);

        let add = |acc: &mut Vec<C64>, touched: &mut Vec<usize>, a: usize, b: usize, v: C64| {
            if let Some(k) = space.index(a, b) {
                if acc[k] == ZERO {
                    touched.push(k);
                }
                acc[k] += v;
            }
        };

        for &(c, dd) in space.pairs() {
            let (c, dd) = (c as usize, dd as usize);
            add(&mut acc, &mut touched, c, dd, C64::new(0.0, -self.omega(c, dd)));
            for &(a, v) in &left_cols[c] {
                add(&mut acc, &mut touched, a, dd, v);
            }
            for &(b, v) in &right_rows[dd] {
                add(&mut acc, &mut touched, c, b, v);
            }
            for (xcols, yrows) in &sandwiches {
                for &(a, x) in &xcols[c] {
                    for &(b, y) in &yrows[dd] {
                        add(&mut acc, &mut touched, a, b, x * y);
                    }
                }
            }
            touched.sort_unstable();
            touched.dedup();
            for &k in &touched {
                if acc[k] != ZERO {
                    indices.push(k);
                    data.push(acc[k]);
                }
                acc[k] = ZERO;
            }
            touched.clear();
            indptr.push(indices.len());
        }

        let csc = CsMat::new_csc((m, m), indptr, indices, data);
        Ok(csc.to_csr())
    }
}

fn column_lists(m: &Array2<C64>, scale: C64) -> Vec<Vec<(usize, C64)>> {
    let mut cols = vec![Vec::new(); m.ncols()];
    for ((r, c), &z) in m.indexed_iter() {
        if z != ZERO {
            cols[c].push((r, scale * z));
        }
    }
    cols
}

fn row_lists(m: &Array2<C64>, scale: C64) -> Vec<Vec<(usize, C64)>> {
    let mut rows = vec![Vec::new(); m.nrows()];
    for ((r, c), &z) in m.indexed_iter() {
        if z != ZERO {
            rows[r].push((c, scale * z));
        }
    }
    rows
}

/// An ordered subset of matrix-element pairs `(a, b)` used as the coordinate
/// space of a vectorized density matrix.
#[derive(Debug, Clone)]
pub struct PairSpace {
    dim: usize,
    pairs: Vec<(u32, u32)>,
    lookup: Vec<u32>,
}

impl PairSpace {
    const ABSENT: u32 = u32::MAX;

    pub fn from_filter(dim: usize, keep: impl Fn(usize, usize) -> bool) -> Self {
        let mut pairs = Vec::new();
        let mut lookup = vec![Self::ABSENT; dim * dim];
        for b in 0..dim {
            for a in 0..dim {
                if keep(a, b) {
                    lookup[a + b * dim] = pairs.len() as u32;
                    pairs.push((a as u32, b as u32));
                }
            }
        }
        Self { dim, pairs, lookup }
    }

    pub fn full(dim: usize) -> Self {
        Self::from_filter(dim, |_, _| true)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn hilbert_dim(&self) -> usize {
        self.dim
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn index(&self, a: usize, b: usize) -> Option<usize> {
        match self.lookup[a + b * self.dim] {
            Self::ABSENT => None,
            k => Some(k as usize),
        }
    }

    /// Gather the kept entries of `m`.
    pub fn vectorize(&self, m: &Array2<C64>) -> Array1<C64> {
        self.pairs.iter().map(|&(a, b)| m[[a as usize, b as usize]]).collect()
    }

    /// Scatter `v` into a dense matrix, zero outside the space.
    pub fn matrix(&self, v: &Array1<C64>) -> Array2<C64> {
        let mut m = Array2::zeros((self.dim, self.dim));
        for (&(a, b), &z) in self.pairs.iter().zip(v.iter()) {
            m[[a as usize, b as usize]] = z;
        }
        m
    }

    /// Indices of the diagonal pairs `(a, a)`.
    pub fn diagonal(&self) -> Vec<usize> {
        (0..self.dim).filter_map(|a| self.index(a, a)).collect()
    }

    /// Whether every nonzero entry of `m` lies inside the space.
    pub fn contains_support(&self, m: &Array2<C64>) -> bool {
        m.indexed_iter().all(|((a, b), z)| *z == ZERO || self.index(a, b).is_some())
    }
}
