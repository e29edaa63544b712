use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use zenosim_core::fit::{fit_with, simulate_protocol, synthesize_dataset};
use zenosim_core::sequence::{excitation_probability, simulate_rabi_with, simulate_zeno_sweep};
use zenosim_core::{Dataset, FitOptions, FitProblem, FreeParam, ParamName, Protocol};

use crate::config::{linear_grid, Command, FitProtocol, Init, RunConfig, ZenoMode};
use crate::error::CliError;
use crate::report;

/// Runs a fully resolved configuration.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command()? {
        Command::Transient => transient(cfg),
        Command::Rabi => rabi(cfg),
        Command::ZenoSweep => zeno_sweep(cfg),
        Command::Fit => fit(cfg),
        Command::ExcitationProb => excitation(cfg),
    }
}

fn required<T: Copy>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing {name}")))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).map_err(|source| CliError::Io { path: p.display().to_string(), source })?),
        None => Box::new(io::stdout().lock()),
    })
}

/// Writes rows with every number in shortest round-trip scientific notation.
fn write_csv(path: Option<&Path>, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(output(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush().map_err(|source| CliError::Io { path: display(path), source })
}

fn display(path: Option<&Path>) -> String {
    path.map_or_else(|| "stdout".into(), |p| p.display().to_string())
}

fn transient(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.params()?;
    let duration = required(cfg.duration, "duration")?;
    let n = required(cfg.n_samples, "n_samples")?;
    let noise = required(cfg.noise, "noise")?;
    let seed = cfg.seed.unwrap_or(0);
    if n < 2 || !(duration > 0.0) {
        return Err(CliError::Config(format!("need duration > 0 and n_samples >= 2, got {duration}, {n}")));
    }
    let grid: Vec<f64> = (0..n).map(|k| duration * k as f64 / (n - 1) as f64).collect();
    let trace = |dark: bool, seed: u64| -> Result<Vec<f64>, CliError> {
        let protocol = Protocol::Transient { dark };
        Ok(if noise > 0.0 {
            synthesize_dataset(&params, protocol, &grid, noise, seed)?.values
        } else {
            simulate_protocol(&params, protocol, &grid)?
        })
    };
    let (header, columns): (&[&str], Vec<Vec<f64>>) = match required(cfg.init, "init")? {
        Init::Bright => (&["time_s", "intensity"], vec![trace(false, seed)?]),
        Init::Dark => (&["time_s", "intensity"], vec![trace(true, seed)?]),
        Init::Both => (
            &["time_s", "intensity_bright", "intensity_dark"],
            vec![trace(false, seed)?, trace(true, seed.wrapping_add(1))?],
        ),
    };
    let rows: Vec<Vec<f64>> = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| std::iter::once(t).chain(columns.iter().map(|c| c[i])).collect())
        .collect();
    write_csv(cfg.out.as_deref(), header, &rows)
}

fn rabi(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.params()?;
    let grid = linear_grid(
        required(cfg.mw_start, "mw_start")?,
        required(cfg.mw_end, "mw_end")?,
        required(cfg.mw_step, "mw_step")?,
    )?;
    let points = simulate_rabi_with(&params, &cfg.protocol_config(), &grid)?;
    let rows: Vec<Vec<f64>> = points.into_iter().map(|(d, m)| vec![d, m]).collect();
    write_csv(cfg.out.as_deref(), &["duration_s", "ms_projection"], &rows)
}

fn zeno_sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.params()?;
    let taus = linear_grid(
        required(cfg.tau_start, "tau_start")?,
        required(cfg.tau_end, "tau_end")?,
        required(cfg.tau_step, "tau_step")?,
    )?;
    let base = cfg.protocol_config();
    let sweep = |zeno_enabled: bool| -> Result<Vec<f64>, CliError> {
        let proto = zenosim_core::ZenoProtocolConfig { zeno_enabled, ..base };
        Ok(simulate_zeno_sweep(&params, &proto, &taus)?.into_iter().map(|(_, m)| m).collect())
    };
    let (header, columns): (&[&str], Vec<Vec<f64>>) = match required(cfg.zeno, "zeno")? {
        ZenoMode::On => (&["tau_s", "ms_zeno_on"], vec![sweep(true)?]),
        ZenoMode::Off => (&["tau_s", "ms_zeno_off"], vec![sweep(false)?]),
        ZenoMode::Both => (&["tau_s", "ms_zeno_on", "ms_zeno_off"], vec![sweep(true)?, sweep(false)?]),
    };
    let rows: Vec<Vec<f64>> = taus
        .iter()
        .enumerate()
        .map(|(i, &t)| std::iter::once(t).chain(columns.iter().map(|c| c[i])).collect())
        .collect();
    write_csv(cfg.out.as_deref(), header, &rows)
}

fn excitation(cfg: &RunConfig) -> Result<(), CliError> {
    let params = cfg.params()?;
    let duration = required(cfg.zeno_pulse_duration, "zeno_pulse_duration")?;
    let power = required(cfg.zeno_pulse_power, "zeno_pulse_power")?;
    let p = excitation_probability(&params, duration, power)?;
    write_csv(
        cfg.out.as_deref(),
        &["pulse_duration_s", "power_fraction", "excitation_probability"],
        &[vec![duration, power, p]],
    )
}

fn fit(cfg: &RunConfig) -> Result<(), CliError> {
    let guess = cfg.params()?;
    let data = cfg.data.as_deref().ok_or_else(|| CliError::Config("fit requires --data".into()))?;
    let protocol = required(cfg.protocol, "protocol")?;
    let noise_scale = required(cfg.noise_scale, "noise_scale")?;
    if !(noise_scale > 0.0) || !noise_scale.is_finite() {
        return Err(CliError::Config(format!("noise_scale must be > 0, got {noise_scale}")));
    }
    let datasets = read_datasets(data, protocol, cfg.init, noise_scale)?;
    let free = parse_free(cfg.free.as_deref().unwrap_or(""))?;
    let problem = FitProblem::new(datasets, free, guess);
    let options = FitOptions { max_iterations: required(cfg.max_iterations, "max_iterations")?, ..Default::default() };
    let result = fit_with(&problem, &options)?;
    let text = report::fit_report(&result, problem.n_observations());
    let mut out = output(cfg.out.as_deref())?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|source| CliError::Io { path: display(cfg.out.as_deref()), source })
}

pub fn parse_free(list: &str) -> Result<Vec<FreeParam>, CliError> {
    let mut out: Vec<FreeParam> = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let name: ParamName = item.parse()?;
        if out.iter().any(|f| f.name == name) {
            return Err(CliError::Config(format!("parameter {item} listed twice in --free")));
        }
        out.push(FreeParam::new(name));
    }
    if out.is_empty() {
        return Err(CliError::Config("--free lists no parameters".into()));
    }
    Ok(out)
}

/// Reads a fit data file. Transient data may hold a single `intensity`
/// column (preparation chosen by `--init`) or the pair
/// `intensity_bright,intensity_dark`.
fn read_datasets(
    path: &Path,
    protocol: FitProtocol,
    init: Option<Init>,
    noise_scale: f64,
) -> Result<Vec<Dataset>, CliError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("{}: data row {}: {e}", path.display(), line + 1)))?;
        rows.push(row);
    }
    let column = |name: &str| -> Option<Vec<f64>> {
        headers.iter().position(|h| h == name).map(|i| rows.iter().map(|r| r[i]).collect())
    };
    let need = |name: &str| -> Result<Vec<f64>, CliError> {
        column(name).ok_or_else(|| {
            CliError::Config(format!("{} has no column {name} (found {})", path.display(), headers.join(",")))
        })
    };
    let dataset = |protocol: Protocol, times: Vec<f64>, values: Vec<f64>| Dataset { protocol, times, values, noise_scale };

    Ok(match protocol {
        FitProtocol::Transient => {
            let times = need("time_s")?;
            match (column("intensity_bright"), column("intensity_dark"), column("intensity")) {
                (Some(b), Some(d), _) => vec![
                    dataset(Protocol::Transient { dark: false }, times.clone(), b),
                    dataset(Protocol::Transient { dark: true }, times, d),
                ],
                (_, _, Some(v)) => {
                    let dark = match init.unwrap_or(Init::Bright) {
                        Init::Bright => false,
                        Init::Dark => true,
                        Init::Both => {
                            return Err(CliError::Config("single-trace transient data needs --init=bright or dark".into()))
                        }
                    };
                    vec![dataset(Protocol::Transient { dark }, times, v)]
                }
                _ => return Err(CliError::Config(format!("{}: expected intensity columns", path.display()))),
            }
        }
        FitProtocol::Decay => vec![dataset(Protocol::ExcitedDecay, need("time_s")?, need("intensity")?)],
        FitProtocol::Rabi => vec![dataset(Protocol::Rabi, need("duration_s")?, need("ms_projection")?)],
    })
}

