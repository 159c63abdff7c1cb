//! Batch command layer: validate, bounds, simulate, keyrate.
//!
//! Each command reads one flat JSON configuration, runs a library
//! workflow, and writes one machine-readable table (CSV by default, JSON
//! with --json) to --out or stdout.  Exit codes: 0 success, 1 validation
//! or precondition failure, 2 I/O or parse failure.

use crate::bounds::{optimality_certificate, photon_number_bounds, PhotonBound};
use crate::closedform::closed_form_bounds;
use crate::coincidence::{
    predicted_coincidences, validate_efficiencies, CoincidenceVector, DetectorSetup,
    PhotonSource,
};
use crate::decoy::{
    key_rate_at, keyrate_sweep, optimize_mu, ProtocolParams, SweepMode, SweepRow,
};
use crate::io::{self, format_float, MeasuredRecord, RunConfig};
use crate::simulate::simulate_coincidences;
use crate::uncertainty::{
    confidence_intervals, covering_counts_from_exact, worst_case_bounds,
    EfficiencyUncertainty, ObservationUncertainty, WorstCaseResult,
};
use crate::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// Default transmittance grid for key-rate sweeps: one decade pattern
/// from perfect transmission down to 0.1%.
pub const DEFAULT_TAUS: [f64; 10] = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001];

#[derive(Parser)]
#[command(
    name = "photon-calib",
    version,
    about = "Photon-number bounds from threshold-detector coincidences"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a detector setup against the calibration preconditions.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Photon-number bounds from predicted or measured coincidences.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sweep axis instead of a single report.
        #[arg(long, value_enum)]
        sweep: Option<BoundsSweep>,
        /// Append closed-form bound columns (2 to 4 detectors).
        #[arg(long = "cross-check")]
        cross_check: bool,
        #[arg(long)]
        json: bool,
    },
    /// Monte Carlo coincidence run, written in the measured-data format.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Decoy-state key-rate table.
    Keyrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        sweep: Option<KeyrateSweep>,
        /// Comma-separated list: poisson-known, calibrated-d4, d3, ...
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundsSweep {
    Mu,
    Eta,
}

#[derive(Clone, Copy, ValueEnum)]
enum KeyrateSweep {
    Tau,
}

/// One table cell; keeps CSV and JSON emission consistent.
enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Flag(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) => format_float(*x),
            Cell::Int(k) => k.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Flag(b) => b.to_string(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Num(x) => serde_json::json!(x),
            Cell::Int(k) => serde_json::json!(k),
            Cell::Text(s) => serde_json::json!(s),
            Cell::Flag(b) => serde_json::json!(b),
        }
    }
}

struct Table {
    schema: &'static str,
    comments: Vec<String>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn render(&self, json: bool) -> String {
        if json {
            let rows: Vec<serde_json::Value> = self
                .rows
                .iter()
                .map(|row| {
                    let map: serde_json::Map<String, serde_json::Value> = self
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(col, cell)| (col.to_string(), cell.json()))
                        .collect();
                    serde_json::Value::Object(map)
                })
                .collect();
            let doc = serde_json::json!({
                "schema": self.schema,
                "notes": self.comments,
                "rows": rows,
            });
            let mut text = serde_json::to_string_pretty(&doc).expect("static document");
            text.push('\n');
            text
        } else {
            let mut out = String::new();
            out.push_str(&format!("# schema: {}\n", self.schema));
            for c in &self.comments {
                out.push_str(&format!("# {c}\n"));
            }
            out.push_str(&self.columns.join(","));
            out.push('\n');
            for row in &self.rows {
                let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Bounds {
            config,
            out,
            sweep,
            cross_check,
            json,
        } => cmd_bounds(&config, out.as_deref(), sweep, cross_check, json),
        Command::Simulate {
            config,
            out,
            seed,
            json,
        } => cmd_simulate(&config, out.as_deref(), seed, json),
        Command::Keyrate {
            config,
            out,
            sweep,
            mode,
            json,
        } => cmd_keyrate(&config, out.as_deref(), sweep, mode.as_deref(), json),
    }
}

fn cmd_validate(config_path: &Path) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let etas = config.raw_efficiencies()?;
    let report = validate_efficiencies(&etas);
    if report.is_valid() {
        let total: f64 = etas.iter().sum();
        println!(
            "setup valid: {} detectors, total efficiency {}",
            etas.len(),
            format_float(total)
        );
        Ok(())
    } else {
        for violation in report.violations() {
            println!("violated: {violation}");
        }
        Err(Error::InvalidSetup(report))
    }
}

/// Exactly one of a configured source or a measured-data file.
enum ObservationInput {
    Source(PhotonSource),
    Measured(MeasuredRecord),
}

fn observation_input(config: &RunConfig, config_path: &Path) -> Result<ObservationInput> {
    match (&config.measured, &config.source) {
        (Some(_), Some(_)) => Err(Error::Config(
            "give either `source` or `measured`, not both".into(),
        )),
        (None, Some(_)) => Ok(ObservationInput::Source(config.source()?)),
        (Some(file), None) => {
            let path = PathBuf::from(file);
            let resolved = if path.is_relative() {
                config_path
                    .parent()
                    .unwrap_or_else(|| Path::new("."))
                    .join(path)
            } else {
                path
            };
            Ok(ObservationInput::Measured(io::read_measured(&resolved)?))
        }
        (None, None) => Err(Error::Config(
            "bounds need either a `source` or a `measured` data file".into(),
        )),
    }
}

fn push_bound_cells(row: &mut Vec<Cell>, bound: &PhotonBound) {
    row.push(Cell::Num(bound.raw_lower));
    row.push(Cell::Num(bound.raw_upper));
    row.push(Cell::Num(bound.lower));
    row.push(Cell::Num(bound.upper));
    row.push(Cell::Text(bound.lower_basis.label().into()));
    row.push(Cell::Text(bound.upper_basis.label().into()));
}

/// Raw-value consistency check of a bounds result: a physical source
/// must leave every lower bound below its upper bound and every value
/// inside (numerically near) the probability range.
fn feasibility_notes(
    bounds: &[PhotonBound],
    tail: &PhotonBound,
    slack: f64,
) -> Vec<String> {
    let mut notes = Vec::new();
    let mut check = |label: String, b: &PhotonBound| {
        if b.raw_lower > b.raw_upper + slack {
            notes.push(format!(
                "{label}: lower bound {} exceeds upper bound {}",
                format_float(b.raw_lower),
                format_float(b.raw_upper)
            ));
        }
        if b.raw_upper < -slack || b.raw_lower > 1.0 + slack {
            notes.push(format!(
                "{label}: bounds [{}, {}] exclude the probability range",
                format_float(b.raw_lower),
                format_float(b.raw_upper)
            ));
        }
    };
    for (n, b) in bounds.iter().enumerate() {
        check(format!("n={n}"), b);
    }
    check("tail".into(), tail);
    notes
}

fn cmd_bounds(
    config_path: &Path,
    out: Option<&Path>,
    sweep: Option<BoundsSweep>,
    cross_check: bool,
    json: bool,
) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let setup = config.setup()?;
    let table = match sweep {
        None => bounds_report(&config, config_path, &setup, cross_check)?,
        Some(BoundsSweep::Mu) => bounds_mu_sweep(&config, &setup)?,
        Some(BoundsSweep::Eta) => bounds_eta_sweep(&config, &setup)?,
    };
    io::write_output(out, &table.render(json))
}

fn bounds_report(
    config: &RunConfig,
    config_path: &Path,
    setup: &DetectorSetup,
    cross_check: bool,
) -> Result<Table> {
    let d = setup.detectors();
    let input = observation_input(config, config_path)?;
    let observed: CoincidenceVector = match &input {
        ObservationInput::Source(source) => predicted_coincidences(setup, source)?,
        ObservationInput::Measured(record) => {
            if record.detectors() != d {
                return Err(Error::Inconsistency(format!(
                    "measured data covers {} detectors, setup has {d}",
                    record.detectors()
                )));
            }
            record.coincidences()?
        }
    };

    let bounds = photon_number_bounds(setup, &observed)?;
    let mut comments = Vec::new();
    let notes = feasibility_notes(bounds.bounds(), bounds.tail(), 1e-9);
    if notes.is_empty() {
        comments.push("certificate: consistent".to_string());
    } else {
        comments.push(format!("certificate: violated: {}", notes.join("; ")));
    }
    if let ObservationInput::Source(source) = &input {
        match optimality_certificate(setup, source) {
            Ok(cert) => {
                if cert.satisfied {
                    comments.push("optimality: satisfied".to_string());
                } else {
                    let failed: Vec<String> = cert
                        .conditions
                        .iter()
                        .filter(|c| !c.satisfied)
                        .map(|c| c.to_string())
                        .collect();
                    comments.push(format!("optimality: failed: {}", failed.join("; ")));
                }
            }
            Err(Error::UnsupportedSource(why)) => {
                comments.push(format!("optimality: unavailable ({why})"));
            }
            Err(other) => return Err(other),
        }
    }

    // uncertainty, when configured
    let eta_unc = config.efficiency_uncertainty()?;
    let obs_unc: Option<ObservationUncertainty> = match (&input, config.delta) {
        (_, None) => None,
        (ObservationInput::Measured(MeasuredRecord::ExactCounts { counts, pulses }), Some(delta)) => {
            let covering = covering_counts_from_exact(counts)?;
            Some(ObservationUncertainty::Intervals(confidence_intervals(
                &covering, *pulses, delta,
            )?))
        }
        (_, Some(delta)) => {
            let pulses = config.pulses.ok_or_else(|| {
                Error::Config("confidence width needs `pulses` alongside `delta`".into())
            })?;
            Some(ObservationUncertainty::CountingConfidence { pulses, delta })
        }
    };
    let widened: Option<WorstCaseResult> = if obs_unc.is_some() || eta_unc.is_some() {
        Some(worst_case_bounds(
            setup,
            &observed,
            obs_unc.as_ref().unwrap_or(&ObservationUncertainty::Exact),
            eta_unc.as_ref().unwrap_or(&EfficiencyUncertainty::None),
        )?)
    } else {
        None
    };

    let closed = if cross_check {
        Some(closed_form_bounds(setup, &observed)?)
    } else {
        None
    };

    let mut columns = vec![
        "n",
        "p_lower_raw",
        "p_upper_raw",
        "p_lower",
        "p_upper",
        "basis_lower",
        "basis_upper",
    ];
    if closed.is_some() {
        columns.push("p_lower_cf");
        columns.push("p_upper_cf");
    }
    if widened.is_some() {
        columns.push("p_lower_worst");
        columns.push("p_upper_worst");
    }

    let mut rows = Vec::new();
    for n in 0..=d {
        let label = if n == d {
            Cell::Text("tail".into())
        } else {
            Cell::Int(n as u64)
        };
        let bound = if n == d {
            bounds.tail()
        } else {
            bounds.bound(n)?
        };
        let mut row = vec![label];
        push_bound_cells(&mut row, bound);
        if let Some(cf) = &closed {
            let b = if n == d { cf.tail() } else { cf.bound(n)? };
            row.push(Cell::Num(b.raw_lower));
            row.push(Cell::Num(b.raw_upper));
        }
        if let Some(wc) = &widened {
            let b = if n == d { wc.tail() } else { wc.bound(n)? };
            row.push(Cell::Num(b.lower));
            row.push(Cell::Num(b.upper));
        }
        rows.push(row);
    }

    Ok(Table {
        schema: "photon-calib/bounds-v1",
        comments,
        columns,
        rows,
    })
}

fn sweep_grid(config: &RunConfig, default: (f64, f64, usize)) -> Result<Vec<f64>> {
    let lo = config.sweep_min.unwrap_or(default.0);
    let hi = config.sweep_max.unwrap_or(default.1);
    let points = config.sweep_points.unwrap_or(default.2);
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || points < 2 {
        return Err(Error::Config(format!(
            "sweep grid needs min < max and at least two points, got [{lo}, {hi}] x {points}"
        )));
    }
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| lo + step * i as f64).collect())
}

/// Rebuilds the configured mean-parameterized source family at a new mean.
fn source_at_mean(config: &RunConfig, mean: f64) -> Result<PhotonSource> {
    match config.source.as_deref() {
        Some("poissonian") => PhotonSource::poissonian(mean),
        Some("thermal") => PhotonSource::thermal(mean),
        Some(other) => Err(Error::Config(format!(
            "mean sweep needs a poissonian or thermal source, got `{other}`"
        ))),
        None => Err(Error::Config("mean sweep needs a `source`".into())),
    }
}

fn sweep_rows(
    setups_and_sources: Vec<(f64, DetectorSetup, PhotonSource)>,
) -> Result<Vec<Vec<Cell>>> {
    let nested: Vec<Vec<Vec<Cell>>> = setups_and_sources
        .par_iter()
        .map(|(x, setup, source)| -> Result<Vec<Vec<Cell>>> {
            let observed = predicted_coincidences(setup, source)?;
            let bounds = photon_number_bounds(setup, &observed)?;
            let d = setup.detectors();
            let mut truncated = 0.0;
            let mut rows = Vec::with_capacity(d + 1);
            for n in 0..=d {
                let (label, bound, truth) = if n == d {
                    (
                        Cell::Text("tail".into()),
                        bounds.tail(),
                        1.0 - truncated,
                    )
                } else {
                    let p = source.probability(n);
                    truncated += p;
                    (Cell::Int(n as u64), bounds.bound(n)?, p)
                };
                let mut row = vec![Cell::Num(*x), label];
                push_bound_cells(&mut row, bound);
                row.push(Cell::Num(truth));
                rows.push(row);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

fn bounds_mu_sweep(config: &RunConfig, setup: &DetectorSetup) -> Result<Table> {
    let grid = sweep_grid(config, (0.01, 2.0, 40))?;
    let cells = grid
        .into_iter()
        .map(|mu| Ok((mu, setup.clone(), source_at_mean(config, mu)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        schema: "photon-calib/bounds-mu-v1",
        comments: vec![],
        columns: vec![
            "mu",
            "n",
            "p_lower_raw",
            "p_upper_raw",
            "p_lower",
            "p_upper",
            "basis_lower",
            "basis_upper",
            "p_true",
        ],
        rows: sweep_rows(cells)?,
    })
}

fn bounds_eta_sweep(config: &RunConfig, setup: &DetectorSetup) -> Result<Table> {
    let d = setup.detectors();
    let grid = sweep_grid(config, (0.001, 0.9 / d as f64, 40))?;
    let source = config.source()?;
    let cells = grid
        .into_iter()
        .map(|eta| Ok((eta, DetectorSetup::uniform(d, eta)?, source.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        schema: "photon-calib/bounds-eta-v1",
        comments: vec![],
        columns: vec![
            "eta",
            "n",
            "p_lower_raw",
            "p_upper_raw",
            "p_lower",
            "p_upper",
            "basis_lower",
            "basis_upper",
            "p_true",
        ],
        rows: sweep_rows(cells)?,
    })
}

fn cmd_simulate(
    config_path: &Path,
    out: Option<&Path>,
    seed_flag: Option<u64>,
    json: bool,
) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let setup = config.setup()?;
    let source = config.source()?;
    let pulses = config
        .pulses
        .ok_or_else(|| Error::Config("simulation needs `pulses`".into()))?;
    let seed = seed_flag.or(config.seed).unwrap_or(0);
    let result = simulate_coincidences(&setup, &source, pulses, seed)?;
    let analytic = predicted_coincidences(&setup, &source)?;

    let text = if json {
        let d = setup.detectors();
        let folds: Vec<serde_json::Value> = (1..=d)
            .map(|r| {
                serde_json::json!({
                    "r": r,
                    "empirical": result.empirical().entry(r),
                    "analytic": analytic.entry(r),
                    "std_error": result.standard_errors()[r],
                })
            })
            .collect();
        let doc = serde_json::json!({
            "schema": "photon-calib/simulate-v1",
            "pulses": pulses,
            "seed": seed,
            "click_histogram": result.click_histogram(),
            "exact_click_counts": result.exact_click_counts(),
            "folds": folds,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("static document");
        text.push('\n');
        text
    } else {
        io::measured_csv(&result)
    };
    io::write_output(out, &text)?;

    // human-readable comparison, kept off the machine stream
    if out.is_some() {
        let d = setup.detectors();
        println!("r,empirical,analytic,std_error,z");
        for r in 1..=d {
            let emp = result.empirical().entry(r);
            let ana = analytic.entry(r);
            let se = result.standard_errors()[r];
            let z = if se > 0.0 { (emp - ana) / se } else { 0.0 };
            println!(
                "{r},{},{},{},{z:.3}",
                format_float(emp),
                format_float(ana),
                format_float(se)
            );
        }
    }
    Ok(())
}

fn parse_modes(spec: &str) -> Result<Vec<SweepMode>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|label| match label {
            "poisson-known" => Ok(SweepMode::PoissonKnown),
            other => {
                let digits = other
                    .strip_prefix("calibrated-d")
                    .or_else(|| other.strip_prefix('d'))
                    .ok_or_else(|| {
                        Error::Config(format!("unknown key-rate mode `{other}`"))
                    })?;
                let detectors: usize = digits.parse().map_err(|_| {
                    Error::Config(format!("unknown key-rate mode `{other}`"))
                })?;
                if !(2..=8).contains(&detectors) {
                    return Err(Error::Config(format!(
                        "calibrated mode supports 2..=8 detectors, got {detectors}"
                    )));
                }
                Ok(SweepMode::Calibrated { detectors })
            }
        })
        .collect()
}

fn keyrate_row(row: &SweepRow) -> Vec<Cell> {
    vec![
        Cell::Text(row.mode.clone()),
        Cell::Num(row.transmittance),
        Cell::Num(row.signal_mean),
        Cell::Num(row.decoy_mean),
        Cell::Num(row.y1_lower),
        Cell::Num(row.e1_upper),
        Cell::Num(row.rate),
        Cell::Text(row.method.into()),
        Cell::Flag(row.downgraded),
        Cell::Flag(row.no_key),
    ]
}

fn cmd_keyrate(
    config_path: &Path,
    out: Option<&Path>,
    sweep: Option<KeyrateSweep>,
    mode_flag: Option<&str>,
    json: bool,
) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let params = ProtocolParams::new(
        config.signal_fraction.unwrap_or(0.8),
        config.decoy_fraction.unwrap_or(0.1),
        config.dark_yield.unwrap_or(1e-8),
    )?;
    let modes: Vec<SweepMode> = match (mode_flag, &config.modes) {
        (Some(spec), _) => parse_modes(spec)?,
        (None, Some(list)) => parse_modes(&list.join(","))?,
        (None, None) => vec![
            SweepMode::PoissonKnown,
            SweepMode::Calibrated { detectors: 4 },
            SweepMode::Calibrated { detectors: 3 },
            SweepMode::Calibrated { detectors: 2 },
        ],
    };

    let single_point = sweep.is_none() && config.transmittance.is_some();
    let rows: Vec<SweepRow> = if single_point {
        let tau = config.transmittance.expect("checked above");
        modes
            .iter()
            .map(|mode| -> Result<SweepRow> {
                let (signal_mean, report) = match config.signal_mean {
                    Some(mu) => (mu, key_rate_at(&params, tau, mu, &mode.rate_mode())?),
                    None => {
                        let best = optimize_mu(&params, tau, &mode.rate_mode())?;
                        (best.signal_mean, best.report)
                    }
                };
                Ok(SweepRow {
                    mode: mode.label(),
                    transmittance: tau,
                    signal_mean,
                    decoy_mean: signal_mean / 10.0,
                    y1_lower: report.y1_lower,
                    e1_upper: report.e1_upper,
                    rate: report.rate,
                    method: report.method.label(),
                    downgraded: report.downgraded,
                    no_key: report.no_key,
                })
            })
            .collect::<Result<_>>()?
    } else {
        let taus = config.taus.clone().unwrap_or_else(|| DEFAULT_TAUS.to_vec());
        keyrate_sweep(&params, &taus, &modes)?
    };

    let table = Table {
        schema: "photon-calib/keyrate-v1",
        comments: vec![format!(
            "protocol: signal_fraction={} decoy_fraction={} dark_yield={}",
            format_float(params.signal_fraction()),
            format_float(params.decoy_fraction()),
            format_float(params.dark_yield())
        )],
        columns: vec![
            "mode",
            "tau",
            "mu",
            "mu_prime",
            "y1_lower",
            "e1_upper",
            "rate",
            "method",
            "downgraded",
            "no_key",
        ],
        rows: rows.iter().map(keyrate_row).collect(),
    };
    io::write_output(out, &table.render(json))
}
