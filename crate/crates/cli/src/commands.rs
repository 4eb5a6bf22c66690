// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

use std::time::Instant;

use anyhow::anyhow;
use atomtronics::devices::{and_gate_with, noise_analysis, sweep, truth_table, DeviceSpec, SweepResult, CATALOG};
use atomtronics::observables::uniform_tau_grid;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{number, with_suffix, Manifest, Table};

/// How a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration, detected before any output is written.
    Config(anyhow::Error),
    /// A solve failed; whatever was computed has been written.
    Solver(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Solver(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Self::Config(e) | Self::Solver(e) => e,
        }
    }
}

type Outcome = Result<(), Failure>;

fn config<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Config)
}

fn io<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Solver)
}

fn basis_dim(device: &DeviceSpec) -> Result<usize, Failure> {
    config(device.basis().map(|b| b.dim()).map_err(Into::into))
}

#[derive(Serialize)]
struct PointFailure {
    index: usize,
    param: f64,
    error: String,
}

#[derive(Serialize)]
struct SweepDiagnostics {
    parameter: String,
    points: usize,
    gamma0: f64,
    max_relative_residual: f64,
    min_eigenvalue: f64,
    system_dim: usize,
    failures: Vec<PointFailure>,
}

fn sweep_diagnostics(res: &SweepResult) -> SweepDiagnostics {
    let diag = res.points.iter().filter_map(|p| p.diagnostics.as_ref());
    SweepDiagnostics {
        parameter: res.parameter.clone(),
        points: res.points.len(),
        gamma0: res.gamma0,
        max_relative_residual: diag.clone().fold(0.0, |m, d| m.max(d.relative_residual)),
        min_eigenvalue: diag.clone().fold(f64::INFINITY, |m, d| m.min(d.min_eigenvalue)),
        system_dim: diag.fold(0, |m, d| m.max(d.system_dim)),
        failures: res
            .points
            .iter()
            .enumerate()
            .filter_map(|(index, p)| p.error.as_ref().map(|e| PointFailure { index, param: p.param, error: e.clone() }))
            .collect(),
    }
}

/// Sweep a parameter and write `<out>.csv` plus `<out>.manifest.json`.
pub fn run(cfg: &RunConfig) -> Outcome {
    let device = config(cfg.device())?;
    let spec = config(cfg.sweep_spec(&device))?;
    let opts = config(cfg.steady_options(&device))?;
    let dim = basis_dim(&device)?;
    let prefix = cfg.out_prefix(&device.name);
    let start = Instant::now();

    let res = sweep(&device, &spec, &opts).map_err(|e| Failure::Solver(e.into()))?;
    let mut table =
        Table::new(std::iter::once("param".to_string()).chain(res.reservoirs.iter().map(|r| format!("{r}_current"))));
    for p in &res.points {
        let mut row = vec![number(p.param)];
        if p.currents.is_empty() {
            row.extend(res.reservoirs.iter().map(|_| String::new()));
        } else {
            row.extend(p.currents.iter().map(|&c| number(c)));
        }
        table.push(row);
    }
    let csv = with_suffix(&prefix, ".csv");
    io(table.write(&csv))?;

    let failed = res.failures();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: "run",
        config: cfg.clone(),
        device,
        basis_dim: dim,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: vec![csv.display().to_string()],
        status: if failed == 0 { "ok".into() } else { format!("{failed} of {} points failed", res.points.len()) },
        diagnostics: sweep_diagnostics(&res),
    };
    io(manifest.write(&with_suffix(&prefix, ".manifest.json")))?;
    if failed > 0 {
        return Err(Failure::Solver(anyhow!("{failed} of {} sweep points failed; see the manifest", res.points.len())));
    }
    Ok(())
}

#[derive(Serialize)]
struct NoiseDiagnostics {
    reservoir: String,
    convention: String,
    gamma0: f64,
    mean_current: Option<f64>,
    tau_points: usize,
    tau_max: Option<f64>,
    relative_residual: Option<f64>,
    min_eigenvalue: Option<f64>,
    error: Option<String>,
}

/// Current noise at one operating point: `<out>.correlation.csv`,
/// `<out>.spectrum.csv` and `<out>.snr.csv`.
pub fn noise(cfg: &RunConfig) -> Outcome {
    let device = config(cfg.device())?;
    let opts = config(cfg.steady_options(&device))?;
    let dim = basis_dim(&device)?;
    let nc = cfg.noise();
    config(device.reservoir(&nc.reservoir).map(|_| ()).map_err(Into::into))?;
    if nc.filter_times.is_empty() || nc.filter_times.iter().any(|t| !t.is_finite() || *t <= 0.0) {
        return Err(Failure::Config(anyhow!("filter_times must be a non-empty list of positive times")));
    }
    let g0 = device.gamma0();
    let tau = match (nc.tau_step, nc.tau_max) {
        (None, None) => None,
        (Some(dt), Some(t)) => Some(config(uniform_tau_grid(dt, t / g0).map_err(Into::into))?),
        _ => return Err(Failure::Config(anyhow!("give both tau_step and tau_max, or neither"))),
    };
    let times: Vec<f64> = nc.filter_times.iter().map(|t| t / g0).collect();
    let prefix = cfg.out_prefix(&device.name);
    let start = Instant::now();

    let result = noise_analysis(&device, &nc.reservoir, &times, nc.convention, tau.as_deref(), &opts);
    let mut outputs = Vec::new();
    let mut diag = NoiseDiagnostics {
        reservoir: nc.reservoir.clone(),
        convention: format!("{:?}", nc.convention).to_lowercase(),
        gamma0: g0,
        mean_current: None,
        tau_points: 0,
        tau_max: None,
        relative_residual: None,
        min_eigenvalue: None,
        error: None,
    };
    let failure = match &result {
        Ok((point, results)) => {
            let first = &results[0];
            diag.mean_current = Some(first.mean_current / g0);
            diag.tau_points = first.tau_grid.len();
            diag.tau_max = first.tau_grid.last().copied();
            diag.relative_residual = Some(point.steady.relative_residual);
            diag.min_eigenvalue = Some(point.steady.min_eigenvalue);

            let mut corr = Table::new(["tau", "correlation"]);
            for (t, c) in first.tau_grid.iter().zip(&first.autocorrelation) {
                corr.push(vec![number(*t), number(c / (g0 * g0))]);
            }
            let mut spec = Table::new(["filter_time", "omega", "spectrum"]);
            let mut snr = Table::new(["filter_time", "mean_current", "noise_power", "snr"]);
            for r in results {
                for (w, s) in r.omega_grid.iter().zip(&r.spectrum) {
                    spec.push(vec![number(r.filter_time * g0), number(*w), number(s / (g0 * g0))]);
                }
                snr.push(vec![
                    number(r.filter_time * g0),
                    number(r.mean_current / g0),
                    number(r.noise_power / (g0 * g0)),
                    number(r.snr),
                ]);
            }
            for (suffix, table) in [(".correlation.csv", corr), (".spectrum.csv", spec), (".snr.csv", snr)] {
                let path = with_suffix(&prefix, suffix);
                io(table.write(&path))?;
                outputs.push(path.display().to_string());
            }
            None
        }
        Err(e) => {
            diag.error = Some(e.to_string());
            Some(anyhow!("noise analysis failed: {e}"))
        }
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: "noise",
        config: cfg.clone(),
        device,
        basis_dim: dim,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs,
        status: diag.error.clone().unwrap_or_else(|| "ok".into()),
        diagnostics: diag,
    };
    io(manifest.write(&with_suffix(&prefix, ".manifest.json")))?;
    match failure {
        Some(e) => Err(Failure::Solver(e)),
        None => Ok(()),
    }
}

/// Minimum on/off ratio of a working AND gate.
pub const AND_FACTOR: f64 = 6.0;

#[derive(Serialize)]
struct TruthDiagnostics {
    on_off_factor: f64,
    factor_check: bool,
    required_factor: f64,
}

/// Four-row AND-gate table: `<out>.csv` plus `<out>.manifest.json`.
pub fn truth(cfg: &RunConfig) -> Outcome {
    let mut cfg = cfg.clone();
    match (&cfg.device, &cfg.device_spec) {
        (None, None) => cfg.device = Some("and".into()),
        (Some(name), None) if name == "and" => {}
        _ => return Err(Failure::Config(anyhow!("truth-table runs the built-in `and` device only"))),
    }
    if cfg.solver.n_max.is_some() || cfg.solver.n_tot_max.is_some() || !cfg.mu.is_empty() || cfg.sweep.is_some() {
        return Err(Failure::Config(anyhow!("truth-table takes gate levels and solver options only")));
    }
    let levels = cfg.gate.unwrap_or_default();
    let device = config(and_gate_with(levels, true, true).map_err(Into::into))?;
    let mode = config(cfg.solver_mode(&device))?;
    let opts = config(cfg.steady_options(&device))?;
    let dim = basis_dim(&device)?;
    let prefix = cfg.out_prefix("and");
    let start = Instant::now();

    let table = truth_table(levels, mode, Some(&opts)).map_err(|e| Failure::Solver(e.into()))?;
    let mut out = Table::new(["mu_A", "mu_B", "R_current", "normalized"]);
    for r in &table.rows {
        out.push(vec![number(r.mu_a), number(r.mu_b), number(r.current), number(r.normalized)]);
    }
    let csv = with_suffix(&prefix, ".csv");
    io(out.write(&csv))?;
    let mut device = device;
    if let Some(m) = mode {
        device.mode = m;
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: "truth-table",
        config: cfg.clone(),
        device,
        basis_dim: dim,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: vec![csv.display().to_string()],
        status: "ok".into(),
        diagnostics: TruthDiagnostics {
            on_off_factor: table.on_off_factor,
            factor_check: table.on_off_factor >= AND_FACTOR,
            required_factor: AND_FACTOR,
        },
    };
    io(manifest.write(&with_suffix(&prefix, ".manifest.json")))
}

pub fn list_devices() {
    for (name, about) in CATALOG {
        println!("{name:8} {about}");
    }
}

/// Check a configuration without computing anything.
pub fn validate(cfg: &RunConfig) -> Outcome {
    let device = if cfg.device.is_none() && cfg.device_spec.is_none() && cfg.gate.is_some() {
        config(and_gate_with(cfg.gate.unwrap_or_default(), true, true).map_err(Into::into))?
    } else {
        config(cfg.device())?
    };
    config(cfg.steady_options(&device))?;
    let dim = basis_dim(&device)?;
    let mut summary = format!("{}: {} sites, basis dimension {dim}", device.name, device.num_sites());
    if let Some(s) = &cfg.sweep {
        config(cfg.sweep_spec(&device))?;
        summary += &format!(", sweep {} over [{}, {}] with {} points", s.parameter, s.lo, s.hi, s.points);
    }
    if let Some(n) = &cfg.noise {
        config(device.reservoir(&n.reservoir).map(|_| ()).map_err(Into::into))?;
        summary += &format!(", noise on {}", n.reservoir);
    }
    println!("ok: {summary}");
    Ok(())
}
