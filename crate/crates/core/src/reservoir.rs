// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

//! Zero-temperature particle reservoirs and the complex rate matrices they
//! induce in the system eigenbasis.
//!
//! A reservoir is a flat band of modes on `[omega_min, omega_c]`, filled up
//! to the chemical potential. With a constant density of states and coupling
//! the mode sum collapses to `Γ₀ ∫ dω`, regularized by a decay rate
//! `η = π Γ₀ / 2`.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::EigenSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSpec {
    /// Short identifier used in output headers, e.g. `L`, `R`, `M`.
    pub name: String,
    /// Attachment site (0-based).
    pub site: usize,
    pub mu: f64,
    pub gamma0: f64,
    pub omega_c: f64,
    #[serde(default)]
    pub omega_min: f64,
}

impl ReservoirSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 >= 0.0) || !self.gamma0.is_finite() {
            return Err(Error::InvalidReservoir(format!("{}: gamma0 must be >= 0", self.name)));
        }
        if !(self.omega_min < self.omega_c) {
            return Err(Error::InvalidReservoir(format!(
                "{}: band [{}, {}] is empty",
                self.name, self.omega_min, self.omega_c
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::InvalidReservoir(format!("{}: non-finite mu", self.name)));
        }
        Ok(())
    }

    /// Regularizing decay rate `π Γ₀ / 2`.
    pub fn eta(&self) -> f64 {
        0.5 * PI * self.gamma0
    }

    /// Occupied part of the band, `[omega_min, μ]` clamped to the band.
    pub fn occupied_band(&self) -> (f64, f64) {
        (self.omega_min, self.mu.clamp(self.omega_min, self.omega_c))
    }

    /// Empty part of the band, `[μ, omega_c]` clamped to the band.
    pub fn empty_band(&self) -> (f64, f64) {
        (self.mu.clamp(self.omega_min, self.omega_c), self.omega_c)
    }
}

/// `∫_{lo}^{hi} dω / (η + i(ω − ω₀))` in closed form.
///
/// The real part is a difference of arctangents and the imaginary part a log
/// ratio of Lorentzian denominators. Finite for every `η > 0`.
pub fn edge_integral(eta: f64, omega: f64, lo: f64, hi: f64) -> C64 {
    if hi <= lo {
        return C64::new(0.0, 0.0);
    }
    let (x_lo, x_hi) = (lo - omega, hi - omega);
    let re = (x_hi / eta).atan() - (x_lo / eta).atan();
    let im = -0.5 * ((eta * eta + x_hi * x_hi) / (eta * eta + x_lo * x_lo)).ln();
    C64::new(re, im)
}

/// The four rate matrices of one reservoir, indexed by eigenstate pairs.
#[derive(Debug, Clone)]
pub struct RateMatrices {
    /// Index of the reservoir within its device.
    pub reservoir: usize,
    pub site: usize,
    pub eta: f64,
    pub in_minus: Array2<C64>,
    pub in_plus: Array2<C64>,
    pub out_minus: Array2<C64>,
    pub out_plus: Array2<C64>,
}

impl RateMatrices {
    pub fn dim(&self) -> usize {
        self.in_minus.nrows()
    }
}

/// Build `Γ±^(In)` and `Γ±^(Out)` for `res` on the eigenstates of `eig`.
///
/// `(Γ±)_ab = 2Γ₀ ∫_band dω / (η − i(±ω − ω_ab))` with the band being the
/// occupied part for `In` and the empty part for `Out`. The sign of the
/// imaginary part is the one produced by the `τ` integral of the Born-Markov
/// kernel; it makes the level shifts repel levels from the band as in the
/// exactly solvable single-level limit.
pub fn gamma_matrices(reservoir: usize, res: &ReservoirSpec, eig: &EigenSystem) -> Result<RateMatrices> {
    res.validate()?;
    if res.site >= eig.site_ops.len() {
        return Err(Error::InvalidReservoir(format!(
            "{} attached to site {} of a {}-site lattice",
            res.name,
            res.site,
            eig.site_ops.len()
        )));
    }
    let d = eig.dim();
    let eta = res.eta();
    let scale = 2.0 * res.gamma0;
    let (in_lo, in_hi) = res.occupied_band();
    let (out_lo, out_hi) = res.empty_band();

    let mut in_minus = Array2::zeros((d, d));
    let mut in_plus = Array2::zeros((d, d));
    let mut out_minus = Array2::zeros((d, d));
    let mut out_plus = Array2::zeros((d, d));

    if res.gamma0 > 0.0 {
        for a in 0..d {
            for b in 0..d {
                let w = eig.omega(a, b);
                // only pairs one particle apart are ever contracted with a_q
                if eig.sectors[a].abs_diff(eig.sectors[b]) != 1 {
                    continue;
                }
                // ∫ 1/(η − i(−ω − w)) = ∫ 1/(η + i(ω + w))
                in_plus[[a, b]] = scale * edge_integral(eta, w, in_lo, in_hi).conj();
                in_minus[[a, b]] = scale * edge_integral(eta, -w, in_lo, in_hi);
                out_plus[[a, b]] = scale * edge_integral(eta, w, out_lo, out_hi).conj();
                out_minus[[a, b]] = scale * edge_integral(eta, -w, out_lo, out_hi);
            }
        }
    }

    Ok(RateMatrices { reservoir, site: res.site, eta, in_minus, in_plus, out_minus, out_plus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{FockBasis, LatticeSpec};
    use approx::assert_abs_diff_eq;

    fn res(mu: f64) -> ReservoirSpec {
        ReservoirSpec { name: "L".into(), site: 0, mu, gamma0: 0.01, omega_c: 20.0, omega_min: 0.0 }
    }

    fn eig() -> EigenSystem {
        let b = FockBasis::new(2, 2, 4).unwrap();
        EigenSystem::build(&LatticeSpec::chain(vec![3.0, 4.0], 1.0, 0.03), &b).unwrap()
    }

    #[test]
    fn edge_integral_limits() {
        let eta = 1e-9;
        assert_abs_diff_eq!(edge_integral(eta, 2.0, 0.0, 5.0).re, PI, epsilon = 1e-8);
        assert_abs_diff_eq!(edge_integral(eta, 0.0, 0.0, 5.0).re, PI / 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(edge_integral(eta, 5.0, 0.0, 5.0).re, PI / 2.0, epsilon = 1e-8);
        assert_eq!(edge_integral(0.1, 1.0, 2.0, 2.0), C64::new(0.0, 0.0));
    }

    fn adaptive_simpson(f: &dyn Fn(f64) -> C64, a: f64, b: f64, tol: f64) -> C64 {
        fn simpson(f: &dyn Fn(f64) -> C64, a: f64, fa: C64, b: f64, fb: C64) -> (f64, C64, C64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
        }
        #[allow(clippy::too_many_arguments)]
        fn recurse(
            f: &dyn Fn(f64) -> C64,
            a: f64,
            fa: C64,
            b: f64,
            fb: C64,
            m: f64,
            fm: C64,
            whole: C64,
            tol: f64,
            depth: u32,
        ) -> C64 {
            let (lm, flm, left) = simpson(f, a, fa, m, fm);
            let (rm, frm, right) = simpson(f, m, fm, b, fb);
            let delta = left + right - whole;
            if depth == 0 || delta.norm() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
        let (fa, fb) = (f(a), f(b));
        let (m, fm, whole) = simpson(f, a, fa, b, fb);
        recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
    }

    #[test]
    fn edge_integral_matches_quadrature() {
        let eta = 0.1;
        for omega in [-1.0, 0.0, 0.3, 1.0, 2.5, 5.0, 7.0] {
            let f = |w: f64| C64::new(1.0, 0.0) / C64::new(eta, w - omega);
            let reference = adaptive_simpson(&f, 0.0, 5.0, 1e-13);
            let closed = edge_integral(eta, omega, 0.0, 5.0);
            assert!((closed - reference).norm() < 1e-10, "ω₀={omega}: {closed} vs {reference}");
        }
    }

    #[test]
    fn edge_integral_is_finite_on_the_edge() {
        let z = edge_integral(1e-3, 0.0, 0.0, 10.0);
        assert!(z.re.is_finite() && z.im.is_finite());
    }

    #[test]
    fn empty_and_full_reservoirs() {
        let e = eig();
        let empty = gamma_matrices(0, &res(0.0), &e).unwrap();
        assert!(empty.in_minus.iter().chain(empty.in_plus.iter()).all(|z| z.norm() == 0.0));
        let full = gamma_matrices(0, &res(20.0), &e).unwrap();
        assert!(full.out_minus.iter().chain(full.out_plus.iter()).all(|z| z.norm() == 0.0));
        assert!(full.in_minus.iter().any(|z| z.norm() > 0.0));
    }

    #[test]
    fn rates_are_absorptive_and_complementary() {
        let e = eig();
        let whole = gamma_matrices(0, &res(20.0), &e).unwrap();
        for mu in [0.5, 3.0, 3.97, 4.4, 7.9] {
            let g = gamma_matrices(0, &res(mu), &e).unwrap();
            for m in [&g.in_minus, &g.in_plus, &g.out_minus, &g.out_plus] {
                assert!(m.iter().all(|z| z.re >= 0.0 && z.re.is_finite() && z.im.is_finite()));
            }
            let sum = &g.in_minus + &g.out_minus;
            for (s, w) in sum.iter().zip(whole.in_minus.iter()) {
                assert!((s - w).norm() < 1e-12, "{s} vs {w}");
            }
        }
    }

    #[test]
    fn golden_rule_limit() {
        let b = FockBasis::new(1, 1, 1).unwrap();
        let e = EigenSystem::build(&LatticeSpec::chain(vec![3.0], 1.0, 0.0), &b).unwrap();
        let r = ReservoirSpec { name: "L".into(), site: 0, mu: 10.0, gamma0: 1e-6, omega_c: 20.0, omega_min: 0.0 };
        let g = gamma_matrices(0, &r, &e).unwrap();
        // a_q connects |1> (index 1) to |0> (index 0); omega_01 = -eps
        let rate = g.in_minus[[0, 1]].re;
        assert!((rate - 2.0 * PI * 1e-6).abs() < 0.01 * 2.0 * PI * 1e-6, "{rate}");
    }

    #[test]
    fn in_rate_grows_with_mu() {
        let e = eig();
        let mut last = vec![0.0; e.dim() * e.dim()];
        for k in 0..200 {
            let mu = k as f64 * 0.05;
            let g = gamma_matrices(0, &res(mu), &e).unwrap();
            for (prev, z) in last.iter_mut().zip(g.in_minus.iter()) {
                assert!(z.re >= *prev - 1e-15);
                *prev = z.re;
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let e = eig();
        let mut r = res(1.0);
        r.site = 5;
        assert!(gamma_matrices(0, &r, &e).is_err());
        let mut r = res(1.0);
        r.omega_c = -1.0;
        assert!(r.validate().is_err());
    }
}
