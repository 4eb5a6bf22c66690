// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

//! Device catalog and the chemical-potential sweep engine.
//!
//! Energies are in units of `U` and rates in units of `U/ħ`. Every built-in
//! device attaches its reservoirs as `L` (left end), `R` (right end) and, for
//! transistors and gates, base reservoirs named `M`, `A` or `B`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{EigenSystem, FockBasis, Hop, LatticeSpec};
use crate::master::{steady_state_with, IntegratorOptions, Liouvillian, SolveMethod, SteadyOptions, SteadyState};
use crate::observables::{
    analyze_noise, current_matrix, mean_current, uniform_tau_grid, CurrentOperator, FilterConvention, NoiseResult,
};
use crate::reservoir::{gamma_matrices, RateMatrices, ReservoirSpec};

pub const DEFAULT_EPSILON: f64 = 3.0;
pub const DEFAULT_U: f64 = 1.0;
pub const DEFAULT_J: f64 = 0.03;
pub const WIRE_GAMMA0: f64 = 1e-6;
pub const DEVICE_GAMMA0: f64 = 1e-2;
/// Collector and emitter energy of the transistor; the base sits one `U`
/// lower, at [`DEFAULT_EPSILON`].
pub const BJT_EPSILON: f64 = DEFAULT_EPSILON + DEFAULT_U;
pub const BJT_BASE_RATIO: f64 = 0.2;
/// Base chemical potential of an input that is switched on.
pub const GATE_ON_LEVEL: f64 = 3.2;
/// Secular cutoff in units of the hopping.
pub const SECULAR_GAP_IN_J: f64 = 10.0;
/// Tolerated steady-state negativity in units of `sqrt(ħΓ₀/U)` for the
/// largest coupling; the non-secular generator loses positivity when a
/// chemical potential sits on a transition frequency.
pub const NEGATIVITY_PER_ROOT_GAMMA0: f64 = 1.0;

/// How the generator is treated before the steady-state solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum SolverMode {
    /// Keep every coherence.
    Full,
    /// Drop coherences with `|ω_ab| ≥ gap_threshold`.
    Secular { gap_threshold: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub name: String,
    pub lattice: LatticeSpec,
    pub reservoirs: Vec<ReservoirSpec>,
    pub n_max: usize,
    pub n_tot_max: usize,
    pub mode: SolverMode,
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        let n = self.lattice.num_sites();
        if self.reservoirs.len() < 2 {
            return Err(Error::InvalidDevice(format!("{}: needs at least two reservoirs", self.name)));
        }
        for (k, r) in self.reservoirs.iter().enumerate() {
            r.validate()?;
            if r.site >= n {
                return Err(Error::InvalidDevice(format!(
                    "{}: reservoir {} on site {} of a {n}-site lattice",
                    self.name, r.name, r.site
                )));
            }
            if self.reservoirs[..k].iter().any(|o| o.name == r.name) {
                return Err(Error::InvalidDevice(format!("{}: duplicate reservoir name {}", self.name, r.name)));
            }
        }
        if self.n_max == 0 || self.n_tot_max == 0 {
            return Err(Error::InvalidDevice(format!("{}: occupation caps must be positive", self.name)));
        }
        if let SolverMode::Secular { gap_threshold } = self.mode {
            if !(gap_threshold >= 0.0) {
                return Err(Error::InvalidDevice(format!("{}: negative secular threshold", self.name)));
            }
        }
        Ok(())
    }

    pub fn num_sites(&self) -> usize {
        self.lattice.num_sites()
    }

    pub fn reservoir_index(&self, name: &str) -> Option<usize> {
        self.reservoirs.iter().position(|r| r.name == name)
    }

    pub fn reservoir(&self, name: &str) -> Result<&ReservoirSpec> {
        self.reservoir_index(name)
            .map(|k| &self.reservoirs[k])
            .ok_or_else(|| Error::InvalidDevice(format!("{}: no reservoir named {name}", self.name)))
    }

    /// Set the chemical potential of reservoir `name`.
    pub fn with_mu(mut self, name: &str, mu: f64) -> Result<Self> {
        let k = self
            .reservoir_index(name)
            .ok_or_else(|| Error::InvalidDevice(format!("{}: no reservoir named {name}", self.name)))?;
        self.reservoirs[k].mu = mu;
        Ok(self)
    }

    /// Largest reservoir coupling; currents are reported in this unit.
    pub fn gamma0(&self) -> f64 {
        self.reservoirs.iter().map(|r| r.gamma0).fold(0.0, f64::max)
    }

    /// Site-reversed image with the reservoirs reattached accordingly.
    pub fn mirrored(&self) -> Self {
        let n = self.num_sites();
        let mut out = self.clone();
        out.lattice.epsilon.reverse();
        out.lattice.u.reverse();
        out.lattice.hops =
            self.lattice.hops.iter().map(|h| Hop { i: n - 1 - h.j, j: n - 1 - h.i, amplitude: h.amplitude }).collect();
        out.lattice.hops.sort_by_key(|h| (h.i, h.j));
        for r in &mut out.reservoirs {
            r.site = n - 1 - r.site;
        }
        out
    }

    /// Solver defaults with the negativity tolerance scaled to the coupling.
    pub fn steady_options(&self) -> SteadyOptions {
        let base = SteadyOptions::default();
        let u_min = self.lattice.u.iter().cloned().fold(f64::INFINITY, f64::min);
        let scaled = NEGATIVITY_PER_ROOT_GAMMA0 * (self.gamma0() / u_min).sqrt();
        SteadyOptions { negativity_tolerance: base.negativity_tolerance.max(scaled), ..base }
    }

    pub fn basis(&self) -> Result<FockBasis> {
        FockBasis::new(self.num_sites(), self.n_max, self.n_tot_max)
    }
}

fn default_omega_c(epsilon: &[f64], u: &[f64]) -> f64 {
    let e = epsilon.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let v = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    e + 10.0 * v
}

fn reservoir(name: &str, site: usize, gamma0: f64, omega_c: f64) -> ReservoirSpec {
    ReservoirSpec { name: name.into(), site, mu: 0.0, gamma0, omega_c, omega_min: 0.0 }
}

fn default_n_max(num_sites: usize) -> usize {
    if num_sites <= 2 {
        3
    } else {
        2
    }
}

fn two_terminal(name: String, epsilon: Vec<f64>, u: f64, j: f64, gamma0: f64) -> DeviceSpec {
    let n = epsilon.len();
    let omega_c = default_omega_c(&epsilon, &vec![u; n]);
    let n_max = default_n_max(n);
    DeviceSpec {
        name,
        lattice: LatticeSpec::chain(epsilon, u, j),
        reservoirs: vec![reservoir("L", 0, gamma0, omega_c), reservoir("R", n - 1, gamma0, omega_c)],
        n_max,
        n_tot_max: n * n_max,
        mode: SolverMode::Full,
    }
}

/// Flat chain with reservoirs on both ends.
pub fn make_wire(num_sites: usize, eps: f64, u: f64, j: f64, gamma0: f64) -> Result<DeviceSpec> {
    if num_sites == 0 {
        return Err(Error::InvalidDevice("wire needs at least one site".into()));
    }
    let d = two_terminal(format!("wire{num_sites}"), vec![eps; num_sites], u, j, gamma0);
    d.validate()?;
    Ok(d)
}

/// Two flat halves, the right one raised by `u`.
pub fn make_diode(num_sites: usize, eps: f64, u: f64, j: f64, gamma0: f64) -> Result<DeviceSpec> {
    make_junction(num_sites, eps, u, u, j, gamma0)
}

/// Two flat halves with the right one raised by `step`.
pub fn make_junction(num_sites: usize, eps: f64, step: f64, u: f64, j: f64, gamma0: f64) -> Result<DeviceSpec> {
    if num_sites < 2 || !num_sites.is_multiple_of(2) {
        return Err(Error::InvalidDevice(format!("diode needs an even number of sites, got {num_sites}")));
    }
    let half = num_sites / 2;
    let epsilon = (0..num_sites).map(|i| if i < half { eps } else { eps + step }).collect();
    let name = if step == 0.0 { format!("wire{num_sites}") } else { format!("diode{num_sites}") };
    let d = two_terminal(name, epsilon, u, j, gamma0);
    d.validate()?;
    Ok(d)
}

/// Two-site diode with the right site pushed past resonance by
/// `detuning · J`.
pub fn make_fet(detuning: f64) -> Result<DeviceSpec> {
    let step = DEFAULT_U + detuning * DEFAULT_J;
    let mut d = make_junction(2, DEFAULT_EPSILON, step, DEFAULT_U, DEFAULT_J, DEVICE_GAMMA0)?;
    d.name = "fet".into();
    Ok(d)
}

/// Collector, base and emitter sites with energies `(ε, ε − U, ε)`.
///
/// `L` is held between the one- and two-particle addition energies of the
/// collector so that it keeps one atom there, `R` is empty, and the base
/// reservoir `M` couples with `base_coupling_ratio · Γ₀`.
pub fn make_bjt(base_coupling_ratio: f64) -> Result<DeviceSpec> {
    if !(base_coupling_ratio > 0.0) {
        return Err(Error::InvalidDevice(format!("base coupling ratio {base_coupling_ratio} must be positive")));
    }
    let (e, u) = (BJT_EPSILON, DEFAULT_U);
    let epsilon = vec![e, e - u, e];
    let omega_c = default_omega_c(&epsilon, &[u; 3]);
    let mut res = vec![
        reservoir("L", 0, DEVICE_GAMMA0, omega_c),
        reservoir("M", 1, DEVICE_GAMMA0 * base_coupling_ratio, omega_c),
        reservoir("R", 2, DEVICE_GAMMA0, omega_c),
    ];
    res[0].mu = e + 0.5 * u;
    let d = DeviceSpec {
        name: "bjt".into(),
        lattice: LatticeSpec::chain(epsilon, u, DEFAULT_J),
        reservoirs: res,
        n_max: 2,
        n_tot_max: 6,
        mode: SolverMode::Full,
    };
    d.validate()?;
    Ok(d)
}

/// Input levels of the AND gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateLevels {
    pub on: f64,
    pub off: f64,
}

impl Default for GateLevels {
    fn default() -> Self {
        Self { on: GATE_ON_LEVEL, off: 0.0 }
    }
}

/// Global particle cap of the AND gate.
pub const AND_N_TOT_MAX: usize = 4;

/// Two transistors in series: sites `(ε, ε−U, ε, ε, ε−U, ε)`, bias
/// reservoirs `L` and `R` on the outer sites and input reservoirs `A`, `B` on
/// the two bases.
pub fn make_and_gate(input_a_on: bool, input_b_on: bool) -> Result<DeviceSpec> {
    and_gate_with(GateLevels::default(), input_a_on, input_b_on)
}

pub fn and_gate_with(levels: GateLevels, input_a_on: bool, input_b_on: bool) -> Result<DeviceSpec> {
    let (e, u, j) = (BJT_EPSILON, DEFAULT_U, DEFAULT_J);
    let epsilon = vec![e, e - u, e, e, e - u, e];
    let omega_c = default_omega_c(&epsilon, &[u; 6]);
    let base = DEVICE_GAMMA0 * BJT_BASE_RATIO;
    let level = |on: bool| if on { levels.on } else { levels.off };
    let mut res = vec![
        reservoir("L", 0, DEVICE_GAMMA0, omega_c),
        reservoir("A", 1, base, omega_c),
        reservoir("B", 4, base, omega_c),
        reservoir("R", 5, DEVICE_GAMMA0, omega_c),
    ];
    res[0].mu = e + 0.5 * u;
    res[1].mu = level(input_a_on);
    res[2].mu = level(input_b_on);
    let d = DeviceSpec {
        name: "and".into(),
        lattice: LatticeSpec::chain(epsilon, u, j),
        reservoirs: res,
        n_max: 2,
        n_tot_max: AND_N_TOT_MAX,
        mode: SolverMode::Secular { gap_threshold: SECULAR_GAP_IN_J * j },
    };
    d.validate()?;
    Ok(d)
}

/// Built-in devices addressable by name.
pub const CATALOG: &[(&str, &str)] = &[
    ("wire1", "single site between two reservoirs, weak coupling"),
    ("wire2", "two-site flat wire, weak coupling"),
    ("diode2", "two-site diode at the resonance condition"),
    ("diode4", "four-site diode at the resonance condition"),
    ("fet", "two-site diode detuned past resonance (detuning in units of J)"),
    ("bjt", "three-site transistor, base coupling one fifth"),
    ("and", "two transistors in series, both inputs on"),
];

/// Look up a catalog device with its default parameters.
pub fn by_name(name: &str) -> Result<DeviceSpec> {
    let (e, u, j) = (DEFAULT_EPSILON, DEFAULT_U, DEFAULT_J);
    match name {
        "wire1" => make_wire(1, e, u, j, WIRE_GAMMA0),
        "wire2" => make_wire(2, e, u, j, WIRE_GAMMA0),
        "diode2" => make_diode(2, e, u, j, DEVICE_GAMMA0),
        "diode4" => make_diode(4, e, u, j, DEVICE_GAMMA0),
        "fet" => make_fet(0.0),
        "bjt" => make_bjt(BJT_BASE_RATIO),
        "and" => make_and_gate(true, true),
        other => Err(Error::InvalidDevice(format!("unknown device {other}"))),
    }
}

/// A device reduced to its generator, steady state and reservoir currents.
#[derive(Debug, Clone)]
pub struct OperatingPoint {
    pub eig: EigenSystem,
    pub rates: Vec<RateMatrices>,
    pub liouvillian: Liouvillian,
    pub steady: SteadyState,
    pub current_ops: Vec<CurrentOperator>,
    /// Mean current of each reservoir, in absolute units.
    pub currents: Vec<f64>,
}

/// Diagonalize, build rates, solve the steady state and evaluate currents.
pub fn solve(device: &DeviceSpec, opts: &SteadyOptions) -> Result<OperatingPoint> {
    device.validate()?;
    let eig = EigenSystem::build(&device.lattice, &device.basis()?)?;
    solve_on(device, eig, opts)
}

fn solve_on(device: &DeviceSpec, eig: EigenSystem, opts: &SteadyOptions) -> Result<OperatingPoint> {
    let rates =
        device.reservoirs.iter().enumerate().map(|(k, r)| gamma_matrices(k, r, &eig)).collect::<Result<Vec<_>>>()?;
    let mut liouvillian = Liouvillian::assemble(&eig, &rates)?;
    if let SolverMode::Secular { gap_threshold } = device.mode {
        liouvillian = liouvillian.secular_reduce(gap_threshold)?;
    }
    let steady = steady_state_with(&liouvillian, opts)?;
    let current_ops =
        device.reservoirs.iter().zip(&rates).map(|(r, g)| current_matrix(r, g, &eig)).collect::<Result<Vec<_>>>()?;
    let currents = current_ops.iter().map(|j| mean_current(j, &steady.sigma)).collect::<Result<Vec<_>>>()?;
    Ok(OperatingPoint { eig, rates, liouvillian, steady, current_ops, currents })
}

/// The quantity varied along a sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "target")]
pub enum SweepParameter {
    /// Chemical potential of the named reservoir.
    Mu(String),
    /// On-site energy of a site (0-based).
    Epsilon(usize),
}

impl SweepParameter {
    /// Parse `mu<name>` (e.g. `muL`) or `eps<site>` with a 1-based site.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(name) = s.strip_prefix("mu") {
            if !name.is_empty() {
                return Ok(Self::Mu(name.to_string()));
            }
        } else if let Some(site) = s.strip_prefix("eps") {
            if let Ok(k) = site.parse::<usize>() {
                if k >= 1 {
                    return Ok(Self::Epsilon(k - 1));
                }
            }
        }
        Err(Error::InvalidArgument(format!("cannot parse sweep parameter {s:?}; expected muX or epsK")))
    }

    pub fn label(&self) -> String {
        match self {
            Self::Mu(name) => format!("mu{name}"),
            Self::Epsilon(k) => format!("eps{}", k + 1),
        }
    }

    fn check(&self, device: &DeviceSpec) -> Result<()> {
        match self {
            Self::Mu(name) => device.reservoir(name).map(|_| ()),
            Self::Epsilon(k) if *k < device.num_sites() => Ok(()),
            Self::Epsilon(k) => {
                Err(Error::InvalidArgument(format!("site {} does not exist in {}", k + 1, device.name)))
            }
        }
    }

    /// Copy of `device` with the parameter set to `value`.
    pub fn apply(&self, device: &DeviceSpec, value: f64) -> Result<DeviceSpec> {
        self.check(device)?;
        let mut d = device.clone();
        match self {
            Self::Mu(name) => d = d.with_mu(name, value)?,
            Self::Epsilon(k) => d.lattice.epsilon[*k] = value,
        }
        Ok(d)
    }

    /// Axis value for reports: `(μ − ε_site)/U` of the reservoir's own site
    /// for chemical potentials, `ε/U` for site energies.
    pub fn normalized(&self, device: &DeviceSpec, value: f64) -> Result<f64> {
        self.check(device)?;
        Ok(match self {
            Self::Mu(name) => {
                let site = device.reservoir(name)?.site;
                (value - device.lattice.epsilon[site]) / device.lattice.u[site]
            }
            Self::Epsilon(k) => value / device.lattice.u[*k],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl SweepSpec {
    /// `n` evenly spaced values from `lo` to `hi` inclusive.
    pub fn linspace(parameter: SweepParameter, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("a sweep needs at least two points, got {n}")));
        }
        let values = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
        let s = Self { parameter, values };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::InvalidArgument("a sweep needs at least two points".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sweep values must be finite".into()));
        }
        let up = self.values.windows(2).all(|w| w[1] > w[0]);
        let down = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::InvalidArgument("sweep grid must be strictly monotone".into()));
        }
        Ok(())
    }
}

/// Solver diagnostics of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointDiagnostics {
    pub relative_residual: f64,
    pub min_eigenvalue: f64,
    pub method: SolveMethod,
    pub hilbert_dim: usize,
    pub system_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    /// Reported axis value, see [`SweepParameter::normalized`].
    pub param: f64,
    /// Mean current of each reservoir in units of the device `Γ₀`; empty when
    /// the solve failed.
    pub currents: Vec<f64>,
    pub diagnostics: Option<PointDiagnostics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub device: String,
    pub parameter: String,
    pub reservoirs: Vec<String>,
    pub gamma0: f64,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }

    /// Current of reservoir `name` along the sweep; `NaN` at failed points.
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.reservoirs.iter().position(|r| r == name)?;
        Some(self.points.iter().map(|p| p.currents.get(k).copied().unwrap_or(f64::NAN)).collect())
    }

    pub fn params(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.param).collect()
    }
}

/// Solve every grid point, in parallel, keeping grid order. Failed points are
/// recorded with their error and the sweep carries on.
pub fn sweep(device: &DeviceSpec, spec: &SweepSpec, opts: &SteadyOptions) -> Result<SweepResult> {
    device.validate()?;
    spec.validate()?;
    spec.parameter.check(device)?;
    // a chemical-potential sweep leaves the Hamiltonian untouched
    let shared = match spec.parameter {
        SweepParameter::Mu(_) => Some(EigenSystem::build(&device.lattice, &device.basis()?)?),
        SweepParameter::Epsilon(_) => None,
    };
    let g0 = device.gamma0();
    let points = spec
        .values
        .par_iter()
        .map(|&value| {
            let param = spec.parameter.normalized(device, value)?;
            let d = spec.parameter.apply(device, value)?;
            let solved = match &shared {
                Some(eig) => solve_on(&d, eig.clone(), opts),
                None => solve(&d, opts),
            };
            Ok(match solved {
                Ok(p) => SweepPoint {
                    value,
                    param,
                    currents: p.currents.iter().map(|c| c / g0).collect(),
                    diagnostics: Some(PointDiagnostics {
                        relative_residual: p.steady.relative_residual,
                        min_eigenvalue: p.steady.min_eigenvalue,
                        method: p.steady.method,
                        hilbert_dim: p.eig.dim(),
                        system_dim: p.steady.space_dim,
                    }),
                    error: None,
                },
                Err(e) => {
                    SweepPoint { value, param, currents: Vec::new(), diagnostics: None, error: Some(e.to_string()) }
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        device: device.name.clone(),
        parameter: spec.parameter.label(),
        reservoirs: device.reservoirs.iter().map(|r| r.name.clone()).collect(),
        gamma0: g0,
        points,
    })
}

/// Value in `[lo, hi]` where `f` crosses `level`, by bisection to `tol`.
/// `f(lo) − level` and `f(hi) − level` must differ in sign.
pub fn find_crossing(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, level: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let fa = f(a)? - level;
    let fb = f(b)? - level;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::InvalidArgument(format!("level {level} is not bracketed by [{lo}, {hi}]")));
    }
    let mut sa = fa.signum();
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        let fm = f(m)? - level;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == sa {
            a = m;
            sa = fm.signum();
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

/// Outcome of repeating a solve with one more boson allowed per site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub currents: Vec<f64>,
    pub refined: Vec<f64>,
    /// Largest change relative to the largest current magnitude.
    pub relative_change: f64,
}

impl ConvergenceReport {
    pub fn converged(&self, tolerance: f64) -> bool {
        self.relative_change <= tolerance
    }
}

/// Compare currents at `(n_max, n_tot_max)` and `(n_max + 1, n_tot_max + 1)`.
pub fn convergence_check(device: &DeviceSpec, opts: &SteadyOptions) -> Result<ConvergenceReport> {
    let base = solve(device, opts)?.currents;
    let mut finer = device.clone();
    finer.n_max += 1;
    finer.n_tot_max += 1;
    let refined = solve(&finer, opts)?.currents;
    let scale = base.iter().chain(&refined).fold(0.0f64, |m, c| m.max(c.abs()));
    let diff = base.iter().zip(&refined).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let relative_change = if scale == 0.0 { 0.0 } else { diff / scale };
    Ok(ConvergenceReport { currents: base, refined, relative_change })
}

/// Largest τ step of the default correlation grid.
pub const MAX_TAU_STEP: f64 = 0.25;
/// Default correlation range in units of the slowest reservoir time `1/Γ₀`.
pub const TAU_RANGE_IN_GAMMA0: f64 = 20.0;

/// Correlation grid resolving the number-conserving Bohr frequencies of `eig`
/// and reaching `20/Γ₀` for the weakest coupling.
pub fn default_tau_grid(device: &DeviceSpec, eig: &EigenSystem) -> Result<Vec<f64>> {
    let d = eig.dim();
    let mut span = 0.0f64;
    for a in 0..d {
        for b in 0..a {
            if eig.sectors[a] == eig.sectors[b] {
                span = span.max(eig.omega(a, b).abs());
            }
        }
    }
    let dt = if span > 0.0 { MAX_TAU_STEP.min(1.0 / span) } else { MAX_TAU_STEP };
    let weakest = device.reservoirs.iter().map(|r| r.gamma0).filter(|g| *g > 0.0).fold(f64::INFINITY, f64::min);
    if !weakest.is_finite() {
        return Err(Error::InvalidDevice(format!("{}: no coupled reservoir", device.name)));
    }
    uniform_tau_grid(dt, TAU_RANGE_IN_GAMMA0 / weakest)
}

/// Noise of the current into reservoir `name` at one operating point, for
/// each filter time.
pub fn noise_analysis(
    device: &DeviceSpec,
    name: &str,
    filter_times: &[f64],
    convention: FilterConvention,
    tau_grid: Option<&[f64]>,
    opts: &SteadyOptions,
) -> Result<(OperatingPoint, Vec<NoiseResult>)> {
    let k = device
        .reservoir_index(name)
        .ok_or_else(|| Error::InvalidDevice(format!("{}: no reservoir named {name}", device.name)))?;
    let point = solve(device, opts)?;
    let default_grid;
    let tau = match tau_grid {
        Some(t) => t,
        None => {
            default_grid = default_tau_grid(device, &point.eig)?;
            &default_grid
        }
    };
    let results = analyze_noise(
        &point.liouvillian,
        &point.current_ops[k],
        &point.steady.sigma,
        tau,
        filter_times,
        convention,
        &IntegratorOptions::default(),
    )?;
    Ok((point, results))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub mu_a: f64,
    pub mu_b: f64,
    /// Output current out of `R`, in units of `Γ₀`.
    pub current: f64,
    /// `current / max(current)` over the four rows.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthTable {
    pub levels: GateLevels,
    pub rows: Vec<TruthRow>,
    /// On-row output divided by the largest other output.
    pub on_off_factor: f64,
}

/// Run the AND gate over `(off,off), (on,off), (off,on), (on,on)`, with the
/// device's own solver defaults unless `opts` is given.
pub fn truth_table(levels: GateLevels, mode: Option<SolverMode>, opts: Option<&SteadyOptions>) -> Result<TruthTable> {
    let inputs = [(false, false), (true, false), (false, true), (true, true)];
    let raw = inputs
        .par_iter()
        .map(|&(a, b)| {
            let mut d = and_gate_with(levels, a, b)?;
            if let Some(m) = mode {
                d.mode = m;
            }
            let p = solve(&d, &opts.cloned().unwrap_or_else(|| d.steady_options()))?;
            let k = d.reservoir_index("R").expect("gate has an R reservoir");
            Ok((d.reservoir("A")?.mu, d.reservoir("B")?.mu, p.currents[k] / d.gamma0()))
        })
        .collect::<Result<Vec<_>>>()?;
    let max = raw.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    let rows: Vec<TruthRow> = raw
        .iter()
        .map(|&(mu_a, mu_b, current)| TruthRow {
            mu_a,
            mu_b,
            current,
            normalized: if max > 0.0 { current / max } else { 0.0 },
        })
        .collect();
    let off = rows[..3].iter().map(|r| r.current.abs()).fold(0.0, f64::max);
    let on_off_factor = if off > 0.0 { rows[3].current / off } else { f64::INFINITY };
    Ok(TruthTable { levels, rows, on_off_factor })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_devices_validate() {
        for (name, _) in CATALOG {
            by_name(name).unwrap().validate().unwrap();
        }
        assert!(by_name("nope").is_err());
    }

    #[test]
    fn wire_is_mirror_symmetric() {
        let w = make_wire(3, 3.0, 1.0, 0.03, 1e-6).unwrap();
        let mut m = w.mirrored();
        m.reservoirs.reverse();
        for r in &mut m.reservoirs {
            r.name = if r.name == "L" { "R".into() } else { "L".into() };
        }
        assert_eq!(w, m);
    }

    #[test]
    fn single_site_wire_has_two_reservoirs_on_one_site() {
        let w = make_wire(1, 3.0, 1.0, 0.03, 1e-6).unwrap();
        assert_eq!(w.num_sites(), 1);
        assert_eq!(w.reservoirs.len(), 2);
        assert!(w.reservoirs.iter().all(|r| r.site == 0));
    }

    #[test]
    fn diode_energies() {
        let d2 = make_diode(2, 3.0, 1.0, 0.03, 1e-2).unwrap();
        assert_eq!(d2.lattice.epsilon[1] - d2.lattice.epsilon[0], 1.0);
        let d4 = make_diode(4, 3.0, 1.0, 0.03, 1e-2).unwrap();
        assert_eq!(d4.lattice.epsilon, vec![3.0, 3.0, 4.0, 4.0]);
        assert!(make_diode(3, 3.0, 1.0, 0.03, 1e-2).is_err());
        let flat = make_junction(2, 3.0, 0.0, 1.0, 0.03, 1e-2).unwrap();
        assert_eq!(flat, make_wire(2, 3.0, 1.0, 0.03, 1e-2).unwrap());
    }

    #[test]
    fn fet_detuning() {
        let base = make_fet(0.0).unwrap();
        let d = by_name("diode2").unwrap();
        assert_eq!(base.lattice, d.lattice);
        assert_eq!(base.reservoirs, d.reservoirs);
        let f = make_fet(0.5).unwrap();
        let off = f.lattice.epsilon[1] - f.lattice.epsilon[0] - DEFAULT_U;
        assert!((off - 0.5 * DEFAULT_J).abs() < 1e-12);
    }

    #[test]
    fn bjt_layout() {
        let b = make_bjt(BJT_BASE_RATIO).unwrap();
        assert_eq!(b.reservoirs.len(), 3);
        assert!((b.reservoir("M").unwrap().gamma0 - DEVICE_GAMMA0 / 5.0).abs() < 1e-15);
        assert_eq!(b.lattice.epsilon[0] - b.lattice.epsilon[1], DEFAULT_U);
        assert!(make_bjt(0.0).is_err());
    }

    #[test]
    fn and_gate_inputs() {
        let g = make_and_gate(false, false).unwrap();
        assert_eq!(g.reservoir("A").unwrap().mu, 0.0);
        assert_eq!(g.reservoir("B").unwrap().mu, 0.0);
        let g = make_and_gate(true, true).unwrap();
        assert_eq!(g.reservoir("A").unwrap().mu, GATE_ON_LEVEL);
        assert_eq!(g.reservoir("B").unwrap().mu, GATE_ON_LEVEL);
        assert_eq!(g.lattice.epsilon, vec![4.0, 3.0, 4.0, 4.0, 3.0, 4.0]);
    }

    #[test]
    fn invalid_devices_are_rejected() {
        let mut d = by_name("wire2").unwrap();
        d.reservoirs[1].site = 5;
        assert!(d.validate().is_err());
        let mut d = by_name("wire2").unwrap();
        d.reservoirs.pop();
        assert!(d.validate().is_err());
        let mut d = by_name("wire2").unwrap();
        d.reservoirs[1].name = "L".into();
        assert!(d.validate().is_err());
    }

    #[test]
    fn sweep_parameter_parsing() {
        assert_eq!(SweepParameter::parse("muL").unwrap(), SweepParameter::Mu("L".into()));
        assert_eq!(SweepParameter::parse("eps2").unwrap(), SweepParameter::Epsilon(1));
        assert!(SweepParameter::parse("eps0").is_err());
        assert!(SweepParameter::parse("mu").is_err());
        assert!(SweepParameter::parse("x").is_err());
    }

    #[test]
    fn sweep_grid_validation() {
        let p = SweepParameter::Mu("L".into());
        assert!(SweepSpec::linspace(p.clone(), 0.0, 1.0, 1).is_err());
        let bad = SweepSpec { parameter: p, values: vec![0.0, 1.0, 0.5] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sweep_keeps_order_and_records_failures() {
        let d = by_name("wire1").unwrap();
        let spec = SweepSpec::linspace(SweepParameter::Mu("L".into()), 2.0, 4.0, 5).unwrap();
        let r = sweep(&d, &spec, &d.steady_options()).unwrap();
        assert_eq!(r.points.len(), 5);
        assert_eq!(r.failures(), 0);
        for (p, v) in r.points.iter().zip(&spec.values) {
            assert_eq!(p.value, *v);
            assert!((p.param - (v - 3.0)).abs() < 1e-12);
        }
        assert!(sweep(
            &d,
            &SweepSpec::linspace(SweepParameter::Mu("Q".into()), 0.0, 1.0, 2).unwrap(),
            &SteadyOptions::default()
        )
        .is_err());
    }

    #[test]
    fn bisection_finds_root() {
        let x = find_crossing(|x| Ok(x * x), 0.0, 2.0, 2.0, 1e-12).unwrap();
        assert!((x - 2f64.sqrt()).abs() < 1e-11);
        assert!(find_crossing(Ok, 1.0, 2.0, 0.0, 1e-6).is_err());
    }
}
