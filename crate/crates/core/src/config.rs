//! Run configuration document. Every dimensioned field carries its unit in
//! its name; conversion to SI happens once, in [`RunConfig::protocol_config`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SourceParams;
use crate::record::GateWindows;
use crate::sim::{Experiment, ProtocolConfig, SourceMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub p1: f64,
    pub eta_s: f64,
    pub eta_i0: f64,
    /// Omitted or `null` for an ideal memory.
    #[serde(default)]
    pub tau_c_us: Option<f64>,
    pub t0_ns: f64,
    #[serde(default)]
    pub bg_idler: f64,
    #[serde(default)]
    pub bg_signal: f64,
    #[serde(default = "one")]
    pub read_factor: f64,
    #[serde(default)]
    pub halt_offset_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_i: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl SourceSection {
    pub fn params(&self) -> Result<SourceParams> {
        let sp = SourceParams {
            p1: self.p1,
            eta_s: self.eta_s,
            eta_i0: self.eta_i0,
            tau_c: self.tau_c_us.map_or(f64::INFINITY, |t| t * 1e-6),
            t0: self.t0_ns * 1e-9,
            bg_idler: self.bg_idler,
            bg_signal: self.bg_signal,
            read_factor: self.read_factor,
            halt_offset: self.halt_offset_ns * 1e-9,
            meta_eps_s: self.eps_s,
            meta_eps_i: self.eps_i,
        };
        sp.validate()?;
        Ok(sp)
    }

    pub fn from_params(sp: &SourceParams) -> Self {
        SourceSection {
            p1: sp.p1,
            eta_s: sp.eta_s,
            eta_i0: sp.eta_i0,
            tau_c_us: sp.tau_c.is_finite().then_some(sp.tau_c * 1e6),
            t0_ns: sp.t0 * 1e9,
            bg_idler: sp.bg_idler,
            bg_signal: sp.bg_signal,
            read_factor: sp.read_factor,
            halt_offset_ns: sp.halt_offset * 1e9,
            eps_s: sp.meta_eps_s,
            eps_i: sp.meta_eps_i,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ExperimentSection {
    #[default]
    Protocol,
    Characterization {
        storage_time_us: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub n_trials: u32,
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub source_mode: SourceMode,
    #[serde(default)]
    pub experiment: ExperimentSection,
    /// Gate windows in 2 ns ticks.
    #[serde(default)]
    pub gates: GateWindows,
    #[serde(default = "default_shard")]
    pub shard_size: u64,
    #[serde(default = "default_budget")]
    pub memory_budget_mb: u64,
}

fn default_shots() -> u64 {
    1_000_000
}
fn default_mode() -> SourceMode {
    SourceMode::Thermal
}
fn default_shard() -> u64 {
    65_536
}
fn default_budget() -> u64 {
    1024
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Analytic,
    Oracle,
    Montecarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    P1,
    EtaS,
    EtaI0,
    TauCUs,
    T0Ns,
    BgIdler,
    BgSignal,
    ReadFactor,
    HaltOffsetNs,
    NTrials,
    StorageTimeUs,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::P1 => "p1",
            SweepParam::EtaS => "eta_s",
            SweepParam::EtaI0 => "eta_i0",
            SweepParam::TauCUs => "tau_c_us",
            SweepParam::T0Ns => "t0_ns",
            SweepParam::BgIdler => "bg_idler",
            SweepParam::BgSignal => "bg_signal",
            SweepParam::ReadFactor => "read_factor",
            SweepParam::HaltOffsetNs => "halt_offset_ns",
            SweepParam::NTrials => "n_trials",
            SweepParam::StorageTimeUs => "storage_time_us",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceSection,
    pub protocol: ProtocolSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Measured parameters with the default protocol at `n_trials`.
    pub fn new(sp: &SourceParams, n_trials: u32) -> Self {
        RunConfig {
            source: SourceSection::from_params(sp),
            protocol: ProtocolSection {
                n_trials,
                shots: default_shots(),
                seed: 0,
                source_mode: SourceMode::Thermal,
                experiment: ExperimentSection::Protocol,
                gates: GateWindows::default(),
                shard_size: default_shard(),
                memory_budget_mb: default_budget(),
            },
            sweep: None,
            mode: Mode::Analytic,
            out: None,
        }
    }

    /// Parses and validates; parse errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let base = self.protocol_config().map_err(field_error("source/protocol"))?;
        base.validate().map_err(field_error("protocol"))?;
        if let Some(axis) = &self.sweep {
            for &v in &axis.values {
                self.with_value(axis.name, v)
                    .and_then(|c| c.protocol_config().and_then(|p| p.validate()))
                    .map_err(field_error(&format!("sweep.values ({} = {v})", axis.name.name())))?;
            }
        }
        Ok(())
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig> {
        let p = &self.protocol;
        let source = self.source.params()?;
        let experiment = match p.experiment {
            ExperimentSection::Protocol => Experiment::Protocol,
            ExperimentSection::Characterization { storage_time_us } => Experiment::Characterization {
                storage_time: storage_time_us * 1e-6,
            },
        };
        Ok(ProtocolConfig {
            source,
            n_trials: p.n_trials,
            shots: p.shots,
            seed: p.seed,
            source_mode: p.source_mode,
            experiment,
            gates: p.gates,
            shard_size: p.shard_size,
            memory_budget: usize::try_from(p.memory_budget_mb.saturating_mul(1 << 20)).unwrap_or(usize::MAX),
        })
    }

    /// Copy with one swept parameter replaced.
    pub fn with_value(&self, param: SweepParam, v: f64) -> Result<RunConfig> {
        let mut c = self.clone();
        let s = &mut c.source;
        match param {
            SweepParam::P1 => s.p1 = v,
            SweepParam::EtaS => s.eta_s = v,
            SweepParam::EtaI0 => s.eta_i0 = v,
            SweepParam::TauCUs => s.tau_c_us = v.is_finite().then_some(v),
            SweepParam::T0Ns => s.t0_ns = v,
            SweepParam::BgIdler => s.bg_idler = v,
            SweepParam::BgSignal => s.bg_signal = v,
            SweepParam::ReadFactor => s.read_factor = v,
            SweepParam::HaltOffsetNs => s.halt_offset_ns = v,
            SweepParam::NTrials => {
                if !(v >= 1.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX)) {
                    return Err(Error::Config(format!("n_trials = {v} is not a positive integer")));
                }
                c.protocol.n_trials = v as u32;
            }
            SweepParam::StorageTimeUs => match &mut c.protocol.experiment {
                ExperimentSection::Characterization { storage_time_us } => *storage_time_us = v,
                ExperimentSection::Protocol => {
                    return Err(Error::Config(
                        "storage_time_us can only be swept in a characterization experiment".into(),
                    ))
                }
            },
        }
        Ok(c)
    }
}

fn field_error(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config(m) => Error::Config(format!("{field}: {m}")),
        Error::Domain { name, value, domain } => {
            Error::Config(format!("{field}: `{name}` = {value} is outside {domain}"))
        }
        other => other,
    }
}
