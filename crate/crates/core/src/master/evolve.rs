// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

//! Adaptive Dormand-Prince 5(4) integration of `dσ/dt = L(σ)`.
//!
//! Every stage is a linear combination of generator applications, so any
//! trace-annihilating generator keeps the trace fixed up to round-off.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use sprs::CsMat;

use super::steady::matvec;
use super::{DensityMatrix, Liouvillian, PairSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on accepted plus rejected steps per call.
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-13, max_steps: 5_000_000 }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo(y: &Array1<C64>, h: f64, terms: &[(f64, &Array1<C64>)]) -> Array1<C64> {
    let mut out = y.clone();
    for &(w, k) in terms {
        out.scaled_add(C64::new(h * w, 0.0), k);
    }
    out
}

struct Stepper<'a> {
    op: &'a CsMat<C64>,
    opts: &'a IntegratorOptions,
    h: f64,
    steps: usize,
}

impl Stepper<'_> {
    /// Advance `y` from `t0` to `t1` exactly, adapting the step size.
    fn advance(&mut self, y: &mut Array1<C64>, t0: f64, t1: f64) -> Result<()> {
        let mut t = t0;
        let mut k1 = matvec(self.op, y);
        while t < t1 {
            if self.steps >= self.opts.max_steps {
                return Err(Error::Integrator { time: t, reason: "step budget exhausted".into() });
            }
            self.steps += 1;
            let last = self.h >= t1 - t;
            let h = if last { t1 - t } else { self.h };

            let k2 = matvec(self.op, &combo(y, h, &[(A21, &k1)]));
            let k3 = matvec(self.op, &combo(y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = matvec(self.op, &combo(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = matvec(self.op, &combo(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
            let k6 = matvec(self.op, &combo(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
            let y_new = combo(y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = matvec(self.op, &y_new);
            let err_vec =
                combo(&Array1::zeros(y.len()), h, &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)]);

            let mut err = 0.0f64;
            for ((e, a), b) in err_vec.iter().zip(y.iter()).zip(y_new.iter()) {
                let scale = self.opts.atol + self.opts.rtol * a.norm().max(b.norm());
                err = err.max(e.norm() / scale);
            }
            if !err.is_finite() {
                return Err(Error::Integrator { time: t, reason: "non-finite error estimate".into() });
            }

            if err <= 1.0 {
                t = if last { t1 } else { t + h };
                *y = y_new;
                k1 = k7;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            let proposal = h * factor;
            // keep the nominal step when we only shortened it to land on t1
            if !(last && err <= 1.0 && proposal >= self.h) {
                self.h = proposal;
            }
            if self.h < 1e-14 * t1.abs().max(1.0) {
                return Err(Error::Integrator { time: t, reason: "step size underflow".into() });
            }
        }
        Ok(())
    }
}

/// Smallest invariant pair space holding `x0`, its generator, and the step
/// size to start from.
fn setup(l: &Liouvillian, x0: &Array2<C64>, times: &[f64]) -> Result<Option<(PairSpace, CsMat<C64>, f64)>> {
    let d = l.dim();
    if x0.dim() != (d, d) {
        return Err(Error::DimensionMismatch { expected: d, found: x0.nrows() });
    }
    if times.first().is_some_and(|&t| t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("time grid must be non-negative and increasing".into()));
    }
    let mut offsets: Vec<i64> = x0
        .indexed_iter()
        .filter(|(_, z)| z.norm() != 0.0)
        .map(|((a, b), _)| l.sectors()[a] as i64 - l.sectors()[b] as i64)
        .collect();
    offsets.sort_unstable();
    offsets.dedup();
    if offsets.is_empty() {
        return Ok(None);
    }
    let space = l.pair_space(&offsets);
    let op = l.superoperator(&space)?;
    let fastest = l.energies().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - l.energies().iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Some((space, op, 0.1 / fastest.max(1.0))))
}

fn run(
    op: &CsMat<C64>,
    mut y: Array1<C64>,
    h0: f64,
    times: &[f64],
    opts: &IntegratorOptions,
    mut visit: impl FnMut(&Array1<C64>),
) -> Result<()> {
    let mut stepper = Stepper { op, opts, h: h0, steps: 0 };
    let mut t = 0.0;
    for &target in times {
        if target > t {
            stepper.advance(&mut y, t, target)?;
            t = target;
        }
        visit(&y);
    }
    Ok(())
}

/// Propagate an arbitrary matrix `x0` under `l`, returning `e^{L t}(x0)` for
/// every `t` in `times` (which must start at or after zero and increase).
/// Entries of `x0` outside the pairs kept by a secular-reduced generator are
/// dropped.
pub fn propagate(
    l: &Liouvillian,
    x0: &Array2<C64>,
    times: &[f64],
    opts: &IntegratorOptions,
) -> Result<Vec<Array2<C64>>> {
    let d = l.dim();
    let Some((space, op, h0)) = setup(l, x0, times)? else {
        return Ok(times.iter().map(|_| Array2::zeros((d, d))).collect());
    };
    let mut out = Vec::with_capacity(times.len());
    run(&op, space.vectorize(x0), h0, times, opts, |y| out.push(space.matrix(y)))?;
    Ok(out)
}

/// `Tr[W e^{L t}(x0)]` for every `t` in `times`, without storing the
/// trajectory.
pub fn propagate_trace(
    l: &Liouvillian,
    w: &Array2<C64>,
    x0: &Array2<C64>,
    times: &[f64],
    opts: &IntegratorOptions,
) -> Result<Vec<C64>> {
    if w.dim() != x0.dim() {
        return Err(Error::DimensionMismatch { expected: x0.nrows(), found: w.nrows() });
    }
    let Some((space, op, h0)) = setup(l, x0, times)? else {
        return Ok(vec![C64::new(0.0, 0.0); times.len()]);
    };
    // Tr[W X] = Σ W_ba X_ab
    let weights: Array1<C64> = space.pairs().iter().map(|&(a, b)| w[[b as usize, a as usize]]).collect();
    let mut out = Vec::with_capacity(times.len());
    run(&op, space.vectorize(x0), h0, times, opts, |y| {
        out.push(weights.iter().zip(y.iter()).map(|(u, v)| u * v).sum())
    })?;
    Ok(out)
}

/// Trajectory `σ(t) = e^{L t}(σ₀)` sampled on `t_grid`.
pub fn evolve(
    l: &Liouvillian,
    sigma0: &DensityMatrix,
    t_grid: &[f64],
    opts: &IntegratorOptions,
) -> Result<Vec<DensityMatrix>> {
    Ok(propagate(l, &sigma0.matrix, t_grid, opts)?.into_iter().map(|matrix| DensityMatrix { matrix }).collect())
}
