//! Experiment configuration.
//!
//! Every field has a default; an empty file runs the standard protocol on the
//! chosen parameter preset. Oscillator fields that are given override the
//! preset values one by one.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use msflab_core::msf::TleSettings;
use msflab_core::oscillator::ImpactOscillatorParams;
use msflab_core::probe::ProbeSettings;
use serde::{Deserialize, Serialize};

pub const ELASTIC_PRESET: &str = include_str!("../presets/elastic.toml");
pub const INELASTIC_PRESET: &str = include_str!("../presets/inelastic.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Elastic,
    Inelastic,
}

impl Preset {
    pub fn source(self) -> &'static str {
        match self {
            Preset::Elastic => ELASTIC_PRESET,
            Preset::Inelastic => INELASTIC_PRESET,
        }
    }

    pub fn params(self) -> ImpactOscillatorParams {
        match self {
            Preset::Elastic => ImpactOscillatorParams::elastic(),
            Preset::Inelastic => ImpactOscillatorParams::inelastic(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillatorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_w: Option<f64>,
    #[serde(rename = "R", skip_serializing_if = "Option::is_none")]
    pub restitution: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_enabled: Option<bool>,
}

impl OscillatorSection {
    fn resolve(&self, base: ImpactOscillatorParams) -> ImpactOscillatorParams {
        ImpactOscillatorParams {
            zeta: self.zeta.unwrap_or(base.zeta),
            eta: self.eta.unwrap_or(base.eta),
            f: self.f.unwrap_or(base.f),
            x_w: self.x_w.unwrap_or(base.x_w),
            restitution: self.restitution.unwrap_or(base.restitution),
            wall_enabled: self.wall_enabled.unwrap_or(base.wall_enabled),
        }
    }

    fn from_params(p: &ImpactOscillatorParams) -> Self {
        OscillatorSection {
            zeta: Some(p.zeta),
            eta: Some(p.eta),
            f: Some(p.f),
            x_w: Some(p.x_w),
            restitution: Some(p.restitution),
            wall_enabled: Some(p.wall_enabled),
        }
    }
}

/// Protocol settings plus the coupling value used by the `tle` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TleSection {
    pub transient_periods: u32,
    pub max_periods: u32,
    pub sample_window: usize,
    pub std_tolerance: f64,
    pub scan_step: f64,
    pub jacobi_delta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for TleSection {
    fn default() -> Self {
        let s = TleSettings::default();
        TleSection {
            transient_periods: s.transient_periods,
            max_periods: s.max_periods,
            sample_window: s.sample_window,
            std_tolerance: s.std_tolerance,
            scan_step: s.scan_step,
            jacobi_delta: s.jacobi_delta,
            alpha: 0.0,
            beta: 0.0,
        }
    }
}

impl TleSection {
    pub fn settings(&self) -> TleSettings {
        TleSettings {
            transient_periods: self.transient_periods,
            max_periods: self.max_periods,
            sample_window: self.sample_window,
            std_tolerance: self.std_tolerance,
            scan_step: self.scan_step,
            jacobi_delta: self.jacobi_delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_steps: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            alpha_min: -3.0,
            alpha_max: 0.0,
            alpha_steps: 31,
            beta_min: 0.0,
            beta_max: 0.0,
            beta_steps: 1,
            sigma_min: 0.0,
            sigma_max: 1.5,
            sigma_steps: 31,
        }
    }
}

/// `steps` evenly spaced values from `min` to `max` inclusive.
pub fn linspace(min: f64, max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..steps)
            .map(|i| {
                if i + 1 == steps {
                    max
                } else {
                    min + (max - min) * i as f64 / (steps - 1) as f64
                }
            })
            .collect(),
    }
}

impl SweepSection {
    pub fn alphas(&self) -> Vec<f64> {
        linspace(self.alpha_min, self.alpha_max, self.alpha_steps)
    }

    pub fn betas(&self) -> Vec<f64> {
        linspace(self.beta_min, self.beta_max, self.beta_steps)
    }

    pub fn sigmas(&self) -> Vec<f64> {
        linspace(self.sigma_min, self.sigma_max, self.sigma_steps)
    }

    fn validate(&self) -> Result<()> {
        for (name, lo, hi, n) in [
            ("alpha", self.alpha_min, self.alpha_max, self.alpha_steps),
            ("beta", self.beta_min, self.beta_max, self.beta_steps),
            ("sigma", self.sigma_min, self.sigma_max, self.sigma_steps),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                bail!("sweep: need finite {name}_min <= {name}_max, got {lo} and {hi}");
            }
            if n == 0 {
                bail!("sweep: {name}_steps must be at least 1");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// Coupling matrix file, relative to the configuration file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
    pub sigma: f64,
    /// Also simulate the network directly (symmetric graphs only).
    pub simulate: bool,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            graph: None,
            sigma: 0.5,
            simulate: false,
        }
    }
}

/// Single-oscillator run for the `simulate` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub periods: f64,
    pub x0: f64,
    pub v0: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            periods: 100.0,
            x0: 0.0,
            v0: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    pub plot: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    pub oscillator: OscillatorSection,
    pub tle: TleSection,
    pub probe: ProbeSettings,
    pub sweep: SweepSection,
    pub network: NetworkSection,
    pub simulate: SimulateSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Parses configuration text. `origin` names the source in diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow::anyhow!("{origin}: {e}"))
    }

    /// Reads a configuration file; relative paths inside it are resolved
    /// against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        if let Some(graph) = &cfg.network.graph {
            if graph.is_relative() {
                let dir = path.parent().unwrap_or(Path::new(""));
                cfg.network.graph = Some(dir.join(graph));
            }
        }
        Ok(cfg)
    }

    /// Oscillator parameters: the preset (elastic if none is named) with any
    /// explicitly given fields applied on top.
    pub fn params(&self) -> ImpactOscillatorParams {
        self.oscillator
            .resolve(self.preset.unwrap_or(Preset::Elastic).params())
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate().context("oscillator")?;
        self.tle.settings().validate().context("tle")?;
        if !(self.tle.alpha.is_finite() && self.tle.beta.is_finite()) {
            bail!("tle: alpha and beta must be finite");
        }
        self.probe.validate().context("probe")?;
        self.sweep.validate()?;
        if !self.network.sigma.is_finite() {
            bail!("network: sigma must be finite");
        }
        if let Some(graph) = &self.network.graph {
            if !graph.is_file() {
                bail!("network: graph file {} does not exist", graph.display());
            }
        }
        if !(self.simulate.periods >= 0.0 && self.simulate.periods.is_finite()) {
            bail!("simulate: periods must be non-negative");
        }
        if !(self.simulate.x0.is_finite() && self.simulate.v0.is_finite()) {
            bail!("simulate: initial state must be finite");
        }
        Ok(())
    }

    /// The configuration with defaults and the preset applied, as it is run.
    pub fn effective(&self) -> Self {
        ExperimentConfig {
            preset: None,
            oscillator: OscillatorSection::from_params(&self.params()),
            ..self.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}
