// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

//! Reservoir currents, their two-time correlations, and the filtered noise
//! spectrum used for the signal-to-noise ratio.
//!
//! Sign convention: a positive current flows out of the lattice into the
//! reservoir, a negative one flows from the reservoir into the lattice.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{dagger, EigenSystem};
use crate::master::{propagate_trace, DensityMatrix, IntegratorOptions, Liouvillian};
use crate::reservoir::{RateMatrices, ReservoirSpec};

/// Current operator of one reservoir, written in the eigenbasis.
#[derive(Debug, Clone)]
pub struct CurrentOperator {
    pub reservoir: usize,
    pub name: String,
    pub matrix: Array2<C64>,
}

/// `J = a†[Γ₋ᴼ∘a] + [Γ₊ᴼ∘a†]a − [Γ₋ᴵ∘a]a† − a[Γ₊ᴵ∘a†]`: outflow terms count
/// positive, inflow terms negative.
pub fn current_matrix(res: &ReservoirSpec, rates: &RateMatrices, eig: &EigenSystem) -> Result<CurrentOperator> {
    if rates.site != res.site {
        return Err(Error::InvalidArgument(format!(
            "rates built for site {} but reservoir {} sits on site {}",
            rates.site, res.name, res.site
        )));
    }
    let d = eig.dim();
    if rates.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rates.dim() });
    }
    let a = &eig.site_ops[res.site];
    let a_dag = dagger(a);
    let out_minus_a = &rates.out_minus * a;
    let out_plus_adag = &rates.out_plus * &a_dag;
    let in_minus_a = &rates.in_minus * a;
    let in_plus_adag = &rates.in_plus * &a_dag;

    let matrix = a_dag.dot(&out_minus_a) + out_plus_adag.dot(a) - in_minus_a.dot(&a_dag) - a.dot(&in_plus_adag);
    Ok(CurrentOperator { reservoir: rates.reservoir, name: res.name.clone(), matrix })
}

fn trace_product(j: &Array2<C64>, sigma: &Array2<C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for ((a, d), &v) in j.indexed_iter() {
        if v != C64::new(0.0, 0.0) {
            acc += v * sigma[[d, a]];
        }
    }
    acc
}

/// `Re Tr[J σ]`; an imaginary part above `1e-10 · max|J_ad|` is an error.
pub fn mean_current(j: &CurrentOperator, sigma: &DensityMatrix) -> Result<f64> {
    if j.matrix.dim() != sigma.matrix.dim() {
        return Err(Error::DimensionMismatch { expected: j.matrix.nrows(), found: sigma.dim() });
    }
    let value = trace_product(&j.matrix, &sigma.matrix);
    let scale = j.matrix.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if value.im.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidArgument(format!(
            "current expectation has imaginary part {:.3e} (real {:.3e})",
            value.im, value.re
        )));
    }
    Ok(value.re)
}

/// Connected current autocorrelation from the regression theorem,
/// `C(τ) = Re Tr[J e^{Lτ}(J σ)] − ⟨J⟩²`.
pub fn current_autocorrelation(
    l: &Liouvillian,
    j: &CurrentOperator,
    sigma_ss: &DensityMatrix,
    tau_grid: &[f64],
    opts: &IntegratorOptions,
) -> Result<Vec<f64>> {
    let mean = mean_current(j, sigma_ss)?;
    let weighted = j.matrix.dot(&sigma_ss.matrix);
    let traces = propagate_trace(l, &j.matrix, &weighted, tau_grid, opts)?;
    Ok(traces.iter().map(|z| z.re - mean * mean).collect())
}

/// Uniform grid `0, dt, …` reaching at least `tau_max`.
pub fn uniform_tau_grid(dt: f64, tau_max: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(tau_max > dt) {
        return Err(Error::InvalidArgument(format!("tau grid needs 0 < dt < tau_max, got {dt}, {tau_max}")));
    }
    let n = (tau_max / dt).ceil() as usize;
    Ok((0..=n).map(|k| k as f64 * dt).collect())
}

/// `∫₀^h (c0 + s u) e^{p u} du`, with `e^{p h}` supplied.
fn segment(p: C64, h: f64, ez: C64, c0: f64, slope: f64) -> C64 {
    let z = p * h;
    let (i0, i1) = if z.norm() < 1e-3 {
        // series of (e^z − 1)/z and (z e^z − e^z + 1)/z²
        let i0 = h * (C64::new(1.0, 0.0) + z / 2.0 + z * z / 6.0 + z * z * z / 24.0);
        let i1 = h * h * (C64::new(0.5, 0.0) + z / 3.0 + z * z / 8.0 + z * z * z / 30.0);
        (i0, i1)
    } else {
        let i0 = (ez - 1.0) / p;
        let i1 = h * ez / p - (ez - 1.0) / (p * p);
        (i0, i1)
    };
    c0 * i0 + slope * i1
}

/// `2 Re ∫₀^∞ e^{−τ/T} C(τ) e^{iωτ} dτ` with `C` linear between grid points;
/// each segment is integrated exactly against the exponential.
fn one_sided_transform(c: &[f64], tau_grid: &[f64], decay: f64, w: f64) -> f64 {
    let p = C64::new(-decay, w);
    let mut acc = C64::new(0.0, 0.0);
    let mut phase = C64::new(1.0, 0.0);
    let (mut last_h, mut ez) = (f64::NAN, C64::new(1.0, 0.0));
    for k in 0..tau_grid.len() - 1 {
        let h = tau_grid[k + 1] - tau_grid[k];
        if h == 0.0 {
            continue;
        }
        if h != last_h {
            last_h = h;
            ez = (p * h).exp();
        }
        acc += phase * segment(p, h, ez, c[k], (c[k + 1] - c[k]) / h);
        phase *= ez;
    }
    2.0 * acc.re
}

/// Filtered transform `S(ω, T) = 2 Re ∫₀^∞ e^{−τ/T} C(τ) e^{iωτ} dτ`.
///
/// `T = ∞` gives the unfiltered spectrum `S(ω)`.
pub fn spectral_density(c: &[f64], tau_grid: &[f64], filter_time: f64, omega_grid: &[f64]) -> Result<Vec<f64>> {
    check_correlation(c, tau_grid)?;
    if !(filter_time > 0.0) {
        return Err(Error::InvalidArgument(format!("filter time {filter_time} must be positive")));
    }
    let decay = if filter_time.is_infinite() { 0.0 } else { 1.0 / filter_time };
    Ok(omega_grid.iter().map(|&w| one_sided_transform(c, tau_grid, decay, w)).collect())
}

/// How the averaging filter `e^{−t/T}` enters the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterConvention {
    /// Causal convolution with the unit-area filter `e^{−t/T}/T`:
    /// `S(ω, T) = S(ω) / (1 + ω²T²)`.
    Convolve,
    /// The correlation is multiplied by `e^{−τ/T}` before transforming, as in
    /// [`spectral_density`]. Its noise power is `π C(0)` for every `T`.
    Multiply,
}

/// `S(ω, T)` under the chosen filter convention.
pub fn filtered_spectrum(
    c: &[f64],
    tau_grid: &[f64],
    filter_time: f64,
    omega_grid: &[f64],
    convention: FilterConvention,
) -> Result<Vec<f64>> {
    match convention {
        FilterConvention::Multiply => spectral_density(c, tau_grid, filter_time, omega_grid),
        FilterConvention::Convolve => {
            if !(filter_time > 0.0) {
                return Err(Error::InvalidArgument(format!("filter time {filter_time} must be positive")));
            }
            let s = spectral_density(c, tau_grid, f64::INFINITY, omega_grid)?;
            Ok(s.iter()
                .zip(omega_grid)
                .map(|(v, w)| {
                    let x = w * filter_time;
                    if x.is_finite() {
                        v / (1.0 + x * x)
                    } else if *w == 0.0 {
                        *v
                    } else {
                        0.0
                    }
                })
                .collect())
        }
    }
}

/// Frequencies for the noise-power integral: zero, then `n` points spaced as
/// `sinh` so that both the filter width `1/T` and the Nyquist frequency of the
/// τ grid are covered.
pub fn omega_grid(filter_time: f64, tau_grid: &[f64], n: usize) -> Result<Vec<f64>> {
    let dt = tau_grid.windows(2).map(|w| w[1] - w[0]).filter(|h| *h > 0.0).fold(f64::INFINITY, f64::min);
    if !dt.is_finite() || n < 2 || !(filter_time > 0.0) {
        return Err(Error::InvalidArgument("omega grid needs a τ grid, n ≥ 2 and T > 0".into()));
    }
    let nyquist = PI / dt;
    let scale = if filter_time.is_finite() { (1.0 / filter_time).min(nyquist) } else { nyquist * 1e-6 };
    let u_max = (nyquist / scale).asinh();
    Ok((0..=n).map(|k| scale * (u_max * k as f64 / n as f64).sinh()).collect())
}

/// Reject correlations that have not decayed below `1e-6 · |C(0)|` over the
/// last tenth of the τ grid.
pub fn check_correlation(c: &[f64], tau_grid: &[f64]) -> Result<()> {
    if c.len() != tau_grid.len() || c.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "correlation of length {} on a tau grid of length {}",
            c.len(),
            tau_grid.len()
        )));
    }
    if tau_grid[0] != 0.0 || tau_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("tau grid must start at 0 and increase".into()));
    }
    let initial = c[0].abs();
    let tail_start = c.len() - 1 - (c.len() - 1) / 10;
    let tail = c[tail_start..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if tail > 1e-6 * initial {
        return Err(Error::InsufficientTauRange { tail, initial });
    }
    Ok(())
}

/// Trapezoidal `∫ S dω` over the given increasing grid.
pub fn noise_power(spectrum: &[f64], omega_grid: &[f64]) -> f64 {
    omega_grid.windows(2).zip(spectrum.windows(2)).map(|(w, s)| 0.5 * (w[1] - w[0]) * (s[0] + s[1])).sum()
}

/// `SNR = ⟨J⟩ / √(∫₀^∞ S(ω, T) dω)`.
pub fn snr(mean_current: f64, spectrum: &[f64], omega_grid: &[f64]) -> Result<f64> {
    if mean_current == 0.0 {
        return Ok(0.0);
    }
    let power = noise_power(spectrum, omega_grid);
    if !(power > 0.0) {
        return Err(Error::ZeroNoisePower { current: mean_current });
    }
    Ok(mean_current / power.sqrt())
}

/// Everything computed for one noise analysis at one filter time.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseResult {
    pub mean_current: f64,
    pub tau_grid: Vec<f64>,
    pub autocorrelation: Vec<f64>,
    pub filter_time: f64,
    pub convention: FilterConvention,
    pub omega_grid: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub noise_power: f64,
    pub snr: f64,
}

/// Number of frequencies used by [`analyze_noise`].
pub const OMEGA_POINTS: usize = 2000;

/// Mean currents below this fraction of `max|J_ad|` count as zero signal.
pub const ZERO_CURRENT: f64 = 1e-8;

/// Correlation, filtered spectrum and SNR of `j` for each filter time. The
/// correlation is propagated once and shared.
pub fn analyze_noise(
    l: &Liouvillian,
    j: &CurrentOperator,
    sigma_ss: &DensityMatrix,
    tau_grid: &[f64],
    filter_times: &[f64],
    convention: FilterConvention,
    opts: &IntegratorOptions,
) -> Result<Vec<NoiseResult>> {
    let mean = mean_current(j, sigma_ss)?;
    let scale = j.matrix.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let signal = if mean.abs() <= ZERO_CURRENT * scale { 0.0 } else { mean };
    let c = current_autocorrelation(l, j, sigma_ss, tau_grid, opts)?;
    if c[0].abs() == 0.0 {
        // no fluctuations at all, e.g. an empty lattice
        return filter_times
            .iter()
            .map(|&t| {
                let omega = omega_grid(t, tau_grid, OMEGA_POINTS)?;
                let spectrum = vec![0.0; omega.len()];
                Ok(NoiseResult {
                    mean_current: mean,
                    tau_grid: tau_grid.to_vec(),
                    autocorrelation: c.clone(),
                    filter_time: t,
                    convention,
                    snr: snr(signal, &spectrum, &omega)?,
                    omega_grid: omega,
                    spectrum,
                    noise_power: 0.0,
                })
            })
            .collect();
    }
    check_correlation(&c, tau_grid)?;
    filter_times
        .iter()
        .map(|&t| {
            let omega = omega_grid(t, tau_grid, OMEGA_POINTS)?;
            let spectrum = filtered_spectrum(&c, tau_grid, t, &omega, convention)?;
            let power = noise_power(&spectrum, &omega);
            Ok(NoiseResult {
                mean_current: mean,
                tau_grid: tau_grid.to_vec(),
                autocorrelation: c.clone(),
                filter_time: t,
                convention,
                snr: snr(signal, &spectrum, &omega)?,
                omega_grid: omega,
                spectrum,
                noise_power: power,
            })
        })
        .collect()
}
