//! Run configuration. Every command-line flag has a JSON equivalent whose
//! key is the flag name with dashes replaced by underscores; flags override
//! values loaded from `--config`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use zenosim_core::{RateParams, ZenoProtocolConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Transient,
    Rabi,
    ZenoSweep,
    Fit,
    ExcitationProb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    Bright,
    Dark,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZenoMode {
    On,
    Off,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitProtocol {
    Transient,
    Decay,
    Rabi,
}

/// Simulate and calibrate the spin dynamics of a single NV center.
///
/// All times are in seconds, rates in 1/s and angles in rad.
#[derive(Debug, Clone, Default, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "zenosim", version, allow_negative_numbers = true)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Command to run (may also be given as `command` in the config file).
    #[arg(value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,

    /// JSON file with any of the options below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Write the resolved configuration to this file.
    #[arg(long)]
    #[serde(skip)]
    pub dump_config: Option<PathBuf>,

    /// JSON file with rate parameters (keys as in the parameter flags).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params_file: Option<PathBuf>,
    /// Output file (CSV, or a text report for `fit`). Stdout when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Seed for synthetic noise.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rabi_omega: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t2_star: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_exc: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_rad: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_desh: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_s: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_bg: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_pol: Option<f64>,

    /// Initial state for `transient` and `zeno-sweep`.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<Init>,
    /// Length of the `transient` trace.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Number of samples of the `transient` trace.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Relative Gaussian noise added to `transient` output.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mw_start: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mw_end: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mw_step: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_start: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_end: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_step: Option<f64>,
    /// Zeno back-action: on, off (counterfactual) or both.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeno: Option<ZenoMode>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mw_pi_duration: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeno_pulse_duration: Option<f64>,
    /// Zeno-pulse power relative to the cw reference.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeno_pulse_power: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_laser_duration: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relax_wait: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mw_gap: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub readout_delay: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub readout_window: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub readout_samples: Option<usize>,

    /// CSV file with measured data for `fit`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Protocol that produced the `fit` data.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<FitProtocol>,
    /// Comma-separated list of parameters to fit.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free: Option<String>,
    /// Noise scale dividing the fit residuals.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
}

impl RunConfig {
    /// Flags overlaid on the contents of `--config`, if any.
    pub fn load(flags: RunConfig) -> Result<RunConfig, CliError> {
        let Some(path) = flags.config.clone() else {
            return Ok(flags);
        };
        let file = read_config_file(&path)?;
        let mut merged = to_map(&file)?;
        for (k, v) in to_map(&flags)? {
            merged.insert(k, v);
        }
        let mut out: RunConfig = serde_json::from_value(Value::Object(merged))
            .map_err(|e| CliError::Config(format!("merging configuration: {e}")))?;
        out.config = flags.config;
        out.dump_config = flags.dump_config;
        Ok(out)
    }

    pub fn command(&self) -> Result<Command, CliError> {
        self.command.ok_or_else(|| {
            CliError::Usage("no command given (transient, rabi, zeno-sweep, fit, excitation-prob)".into())
        })
    }

    /// Parameters from `--params-file` (or the reference set), with any
    /// individual overrides applied.
    pub fn params(&self) -> Result<RateParams, CliError> {
        let mut p = match &self.params_file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("parsing {}: {e}", path.display())))?
            }
            None => RateParams::reference(),
        };
        let overrides = [
            (&mut p.rabi_omega, self.rabi_omega),
            (&mut p.t2_star, self.t2_star),
            (&mut p.k_exc_cw, self.k_exc),
            (&mut p.k_rad, self.k_rad),
            (&mut p.k_desh, self.k_desh),
            (&mut p.k_s, self.k_s),
            (&mut p.theta, self.theta),
            (&mut p.i_bg, self.i_bg),
            (&mut p.eta_pol, self.eta_pol),
        ];
        for (slot, value) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn protocol_config(&self) -> ZenoProtocolConfig {
        let d = ZenoProtocolConfig::default();
        ZenoProtocolConfig {
            mw_pi_duration: self.mw_pi_duration.unwrap_or(d.mw_pi_duration),
            zeno_pulse_duration: self.zeno_pulse_duration.unwrap_or(d.zeno_pulse_duration),
            zeno_pulse_power_fraction: self.zeno_pulse_power.unwrap_or(d.zeno_pulse_power_fraction),
            init_laser_duration: self.init_laser_duration.unwrap_or(d.init_laser_duration),
            relax_wait: self.relax_wait.unwrap_or(d.relax_wait),
            mw_gap: self.mw_gap.unwrap_or(d.mw_gap),
            readout_delay: self.readout_delay.unwrap_or(d.readout_delay),
            readout_window: self.readout_window.unwrap_or(d.readout_window),
            readout_samples: self.readout_samples.unwrap_or(d.readout_samples),
            initial_dark: matches!(self.init, Some(Init::Dark)),
            ..d
        }
    }

    /// Configuration with every default the command uses filled in, so that
    /// re-running it reproduces the run exactly.
    pub fn resolved(&self) -> Result<RunConfig, CliError> {
        let command = self.command()?;
        let p = self.params()?;
        let proto = self.protocol_config();
        let mut r = RunConfig {
            command: Some(command),
            params_file: None,
            out: self.out.clone(),
            seed: Some(self.seed.unwrap_or(0)),
            rabi_omega: Some(p.rabi_omega),
            t2_star: Some(p.t2_star),
            k_exc: Some(p.k_exc_cw),
            k_rad: Some(p.k_rad),
            k_desh: Some(p.k_desh),
            k_s: Some(p.k_s),
            theta: Some(p.theta),
            i_bg: Some(p.i_bg),
            eta_pol: Some(p.eta_pol),
            ..Default::default()
        };
        let with_protocol = |r: &mut RunConfig| {
            r.mw_pi_duration = Some(proto.mw_pi_duration);
            r.readout_delay = Some(proto.readout_delay);
            r.readout_window = Some(proto.readout_window);
            r.readout_samples = Some(proto.readout_samples);
        };
        match command {
            Command::Transient => {
                r.init = Some(self.init.unwrap_or(Init::Bright));
                r.duration = Some(self.duration.unwrap_or(defaults::TRANSIENT_DURATION));
                r.n_samples = Some(self.n_samples.unwrap_or(defaults::TRANSIENT_SAMPLES));
                r.noise = Some(self.noise.unwrap_or(0.0));
            }
            Command::Rabi => {
                r.mw_start = Some(self.mw_start.unwrap_or(0.0));
                r.mw_end = Some(self.mw_end.unwrap_or(defaults::RABI_END));
                r.mw_step = Some(self.mw_step.unwrap_or(defaults::RABI_STEP));
                with_protocol(&mut r);
            }
            Command::ZenoSweep => {
                r.init = Some(match self.init.unwrap_or(Init::Bright) {
                    Init::Both => return Err(CliError::Config("zeno-sweep takes --init=bright or dark".into())),
                    i => i,
                });
                r.tau_start = Some(self.tau_start.unwrap_or(defaults::TAU_START));
                r.tau_end = Some(self.tau_end.unwrap_or(defaults::TAU_END));
                r.tau_step = Some(self.tau_step.unwrap_or(defaults::TAU_STEP));
                r.zeno = Some(self.zeno.unwrap_or(ZenoMode::Both));
                r.zeno_pulse_duration = Some(proto.zeno_pulse_duration);
                r.zeno_pulse_power = Some(proto.zeno_pulse_power_fraction);
                r.init_laser_duration = Some(proto.init_laser_duration);
                r.relax_wait = Some(proto.relax_wait);
                r.mw_gap = Some(proto.mw_gap);
                with_protocol(&mut r);
            }
            Command::Fit => {
                let protocol = self.protocol.unwrap_or(FitProtocol::Transient);
                r.protocol = Some(protocol);
                r.data = Some(
                    self.data.clone().ok_or_else(|| CliError::Config("fit requires --data".into()))?,
                );
                r.free = Some(self.free.clone().unwrap_or_else(|| defaults::free_for(protocol).into()));
                r.noise_scale = Some(self.noise_scale.unwrap_or(1.0));
                r.max_iterations = Some(self.max_iterations.unwrap_or(500));
                if self.init.is_some() {
                    r.init = self.init;
                }
            }
            Command::ExcitationProb => {
                r.zeno_pulse_duration = Some(proto.zeno_pulse_duration);
                r.zeno_pulse_power = Some(proto.zeno_pulse_power_fraction);
            }
        }
        Ok(r)
    }

    pub fn to_json(&self) -> Result<String, CliError> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

pub mod defaults {
    use super::FitProtocol;

    pub const TRANSIENT_DURATION: f64 = 3e-6;
    pub const TRANSIENT_SAMPLES: usize = 3001;
    pub const RABI_END: f64 = 1.2e-6;
    pub const RABI_STEP: f64 = 10e-9;
    pub const TAU_START: f64 = -300e-9;
    pub const TAU_END: f64 = 300e-9;
    pub const TAU_STEP: f64 = 10e-9;

    pub fn free_for(protocol: FitProtocol) -> &'static str {
        match protocol {
            FitProtocol::Transient => "k_exc,k_rad,k_desh,k_s,theta,i_bg",
            FitProtocol::Decay => "k_rad",
            FitProtocol::Rabi => "rabi_omega,t2_star",
        }
    }
}

fn read_config_file(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("parsing {}: {e}", path.display())))
}

fn to_map(cfg: &RunConfig) -> Result<Map<String, Value>, CliError> {
    match serde_json::to_value(cfg).map_err(|e| CliError::Config(e.to_string()))? {
        Value::Object(m) => Ok(m),
        _ => unreachable!("RunConfig serializes to an object"),
    }
}

/// `start, start + step, ...` up to and including `end` (within rounding).
pub fn linear_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return Err(CliError::Config(format!("invalid grid {start}..{end} step {step}")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| start + k as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_includes_end() {
        let g = linear_grid(-300e-9, 300e-9, 10e-9).unwrap();
        assert_eq!(g.len(), 61);
        assert!((g[30]).abs() < 1e-20);
        assert!((g[60] - 300e-9).abs() < 1e-20);
        assert!(linear_grid(0.0, 1.0, 0.0).is_err());
        assert!(linear_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn json_keys_match_flag_names() {
        let cfg = RunConfig::try_parse_from([
            "zenosim",
            "zeno-sweep",
            "--tau-start=-1e-7",
            "--zeno-pulse-power",
            "0.5",
            "--k-exc=3e7",
        ])
        .unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"tau_start\":-1e-7"), "{json}");
        assert!(json.contains("\"zeno_pulse_power\":0.5"));
        assert!(json.contains("\"command\":\"zeno-sweep\""));
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_json_key_is_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"tau_begin": 1.0}"#).is_err());
    }
}
