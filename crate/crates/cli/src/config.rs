// Copyright 2026 Atomtronics Contributors
// SPDX-License-Identifier: Apache-2.0

//! TOML run configuration and its resolution into a device, a sweep and
//! solver options. Command-line flags are merged in before anything is
//! validated.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use atomtronics::devices::{
    by_name, make_bjt, make_fet, DeviceSpec, GateLevels, SolverMode, SweepParameter, SweepSpec, SECULAR_GAP_IN_J,
};
use atomtronics::master::SteadyOptions;
use atomtronics::observables::FilterConvention;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

/// Environment variable that redirects relative output paths.
pub const OUTPUT_DIR_ENV: &str = "ATOMTRONICS_OUTPUT_DIR";

/// Default number of sweep points.
pub const DEFAULT_POINTS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Full,
    Secular,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Catalog device name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<String>,
    /// Inline device, used instead of a catalog name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_spec: Option<DeviceSpec>,
    /// FET detuning in units of `J`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning: Option<f64>,
    /// BJT base coupling relative to collector and emitter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_ratio: Option<f64>,
    /// Chemical potentials (in units of `U`) by reservoir name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mu: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateLevels>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Evenly spaced values of one parameter, `muX` or `epsK`, in units of `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    DEFAULT_POINTS
}

impl SweepConfig {
    /// Parse `param:lo:hi[:n]`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        ensure!(parts.len() == 3 || parts.len() == 4, "sweep {s:?} is not of the form param:lo:hi[:n]");
        let num = |p: &str| p.trim().parse::<f64>().with_context(|| format!("bad number {p:?} in sweep {s:?}"));
        let points = match parts.get(3) {
            Some(p) => p.trim().parse().with_context(|| format!("bad point count {p:?} in sweep {s:?}"))?,
            None => DEFAULT_POINTS,
        };
        Ok(Self { parameter: parts[0].trim().to_string(), lo: num(parts[1])?, hi: num(parts[2])?, points })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeName>,
    /// Secular cutoff in units of the largest hopping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_in_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tot_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negativity_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Reservoir whose current is analysed.
    #[serde(default = "default_noise_reservoir")]
    pub reservoir: String,
    /// Filter times in units of `1/Γ₀`.
    #[serde(default = "default_filter_times")]
    pub filter_times: Vec<f64>,
    #[serde(default = "default_convention")]
    pub convention: FilterConvention,
    /// Correlation time step in units of `ħ/U`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_step: Option<f64>,
    /// Correlation range in units of `1/Γ₀`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<f64>,
}

fn default_noise_reservoir() -> String {
    "R".into()
}

fn default_filter_times() -> Vec<f64> {
    vec![10.0, 100.0, 1000.0]
}

fn default_convention() -> FilterConvention {
    FilterConvention::Convolve
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            reservoir: default_noise_reservoir(),
            filter_times: default_filter_times(),
            convention: default_convention(),
            tau_step: None,
            tau_max: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output prefix; files are `<prefix>.csv`, `<prefix>.manifest.json`, ...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

/// Flags that override the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub device: Option<String>,
    pub sweep: Option<String>,
    pub mode: Option<ModeName>,
    pub out: Option<String>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Load `path` (or start empty) and apply the flag overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::read(p)?,
            None => Self::default(),
        };
        if let Some(d) = &overrides.device {
            cfg.device = Some(d.clone());
            cfg.device_spec = None;
        }
        if let Some(s) = &overrides.sweep {
            cfg.sweep = Some(SweepConfig::parse(s)?);
        }
        if let Some(m) = overrides.mode {
            cfg.solver.mode = Some(m);
        }
        if let Some(o) = &overrides.out {
            cfg.output.prefix = Some(o.clone());
        }
        Ok(cfg)
    }

    /// The configured device with every override applied.
    pub fn device(&self) -> Result<DeviceSpec> {
        let mut d = match (&self.device, &self.device_spec) {
            (Some(_), Some(_)) => bail!("give either `device` or `device_spec`, not both"),
            (None, None) => bail!("no device given; use --device or set `device` in the config"),
            (None, Some(spec)) => spec.clone(),
            (Some(name), None) => match name.as_str() {
                "fet" => make_fet(self.detuning.unwrap_or(0.0))?,
                "bjt" => make_bjt(self.base_ratio.unwrap_or(atomtronics::devices::BJT_BASE_RATIO))?,
                other => by_name(other)?,
            },
        };
        if self.detuning.is_some() && d.name != "fet" {
            bail!("`detuning` applies only to the fet device");
        }
        if self.base_ratio.is_some() && d.name != "bjt" {
            bail!("`base_ratio` applies only to the bjt device");
        }
        for (name, &mu) in &self.mu {
            d = d.with_mu(name, mu)?;
        }
        if let Some(n) = self.solver.n_max {
            d.n_max = n;
        }
        if let Some(n) = self.solver.n_tot_max {
            d.n_tot_max = n;
        }
        if let Some(mode) = self.solver_mode(&d)? {
            d.mode = mode;
        }
        d.validate()?;
        Ok(d)
    }

    /// Generator treatment requested by the configuration, if any.
    pub fn solver_mode(&self, device: &DeviceSpec) -> Result<Option<SolverMode>> {
        let j = device.lattice.hops.iter().fold(0.0f64, |m, h| m.max(h.amplitude.abs()));
        let gap = self.solver.gap_in_j.unwrap_or(SECULAR_GAP_IN_J);
        ensure!(gap >= 0.0, "gap_in_j must be non-negative");
        Ok(match self.solver.mode {
            None if self.solver.gap_in_j.is_some() => bail!("gap_in_j needs mode = \"secular\""),
            None => None,
            Some(ModeName::Full) => Some(SolverMode::Full),
            Some(ModeName::Secular) => Some(SolverMode::Secular { gap_threshold: gap * j }),
        })
    }

    pub fn steady_options(&self, device: &DeviceSpec) -> Result<SteadyOptions> {
        let mut opts = device.steady_options();
        if let Some(t) = self.solver.negativity_tolerance {
            ensure!(t >= 0.0, "negativity_tolerance must be non-negative");
            opts.negativity_tolerance = t;
        }
        if let Some(t) = self.solver.residual_tolerance {
            ensure!(t > 0.0, "residual_tolerance must be positive");
            opts.residual_tolerance = t;
        }
        Ok(opts)
    }

    pub fn sweep_spec(&self, device: &DeviceSpec) -> Result<SweepSpec> {
        let s = self.sweep.as_ref().ok_or_else(|| anyhow!("no sweep given; use --sweep param:lo:hi[:n]"))?;
        let parameter = SweepParameter::parse(&s.parameter)?;
        let spec = SweepSpec::linspace(parameter.clone(), s.lo, s.hi, s.points)?;
        parameter.apply(device, s.lo)?;
        Ok(spec)
    }

    pub fn noise(&self) -> NoiseConfig {
        self.noise.clone().unwrap_or_default()
    }

    /// Output prefix, redirected under the output-directory override when
    /// relative.
    pub fn out_prefix(&self, default_name: &str) -> PathBuf {
        let prefix = PathBuf::from(self.output.prefix.clone().unwrap_or_else(|| default_name.to_string()));
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if prefix.is_relative() => Path::new(&dir).join(prefix),
            _ => prefix,
        }
    }
}
