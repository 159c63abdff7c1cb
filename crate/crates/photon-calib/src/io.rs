//! Run configuration and file formats.
//!
//! The configuration is a flat JSON object (one level, scalar or
//! scalar-array values only) so that any tooling can read and write it.
//! Measured coincidence data travels as CSV with a `subset_mask,clicks`
//! table plus a `#total_pulses=N` metadata row; a pre-averaged
//! `r,c_obs_r` table is accepted as a lighter alternative.  Every emitter
//! prints doubles with 17 significant digits, which survives a text round
//! trip losslessly.

use crate::coincidence::{CoincidenceVector, DetectorSetup, PhotonSource};
use crate::simulate::SimulationResult;
use crate::uncertainty::{covering_counts_from_exact, EfficiencyUncertainty, DEFAULT_ETA_GRID};
use crate::{Error, Result};
use serde::Deserialize;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Lossless decimal rendering for doubles.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Flat run configuration; which fields matter depends on the command.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Per-detector efficiencies; alternative to `detectors`+`efficiency`.
    pub efficiencies: Option<Vec<f64>>,
    /// Detector count for a uniform setup.
    pub detectors: Option<usize>,
    /// Shared per-detector efficiency for a uniform setup.
    pub efficiency: Option<f64>,

    /// Common additive ambiguity on all efficiencies.
    pub eta_half_width: Option<f64>,
    /// Per-detector ambiguities; alternative to `eta_half_width`.
    pub eta_half_widths: Option<Vec<f64>>,
    /// Grid points per free efficiency dimension.
    pub eta_grid: Option<usize>,

    /// Source family: poissonian, thermal, fock, vacuum, finite.
    pub source: Option<String>,
    pub mean: Option<f64>,
    pub photon_number: Option<usize>,
    pub probabilities: Option<Vec<f64>>,

    /// Measured coincidence CSV; alternative to a source.
    pub measured: Option<String>,

    pub pulses: Option<u64>,
    pub seed: Option<u64>,
    /// Confidence budget for counting uncertainty.
    pub delta: Option<f64>,

    pub signal_fraction: Option<f64>,
    pub decoy_fraction: Option<f64>,
    pub dark_yield: Option<f64>,
    pub taus: Option<Vec<f64>>,
    pub modes: Option<Vec<String>>,
    pub transmittance: Option<f64>,
    pub signal_mean: Option<f64>,

    pub sweep_min: Option<f64>,
    pub sweep_max: Option<f64>,
    pub sweep_points: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        serde_json::from_value(value)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Efficiency list as configured, before any validation.
    pub fn raw_efficiencies(&self) -> Result<Vec<f64>> {
        match (&self.efficiencies, self.detectors, self.efficiency) {
            (Some(etas), None, None) => Ok(etas.clone()),
            (None, Some(d), Some(eta)) => Ok(vec![eta; d]),
            (None, None, None) => Err(Error::Config(
                "no detector setup: give `efficiencies` or `detectors` plus `efficiency`".into(),
            )),
            _ => Err(Error::Config(
                "give either `efficiencies` or `detectors` plus `efficiency`, not both".into(),
            )),
        }
    }

    pub fn setup(&self) -> Result<DetectorSetup> {
        DetectorSetup::new(self.raw_efficiencies()?)
    }

    pub fn source(&self) -> Result<PhotonSource> {
        let name = self.source.as_deref().ok_or_else(|| {
            Error::Config("no source configured: set `source`".into())
        })?;
        let mean = |field: &str| {
            self.mean.ok_or_else(|| {
                Error::Config(format!("source `{field}` needs a `mean` value"))
            })
        };
        match name {
            "poissonian" => PhotonSource::poissonian(mean("poissonian")?),
            "thermal" => PhotonSource::thermal(mean("thermal")?),
            "vacuum" => Ok(PhotonSource::vacuum()),
            "fock" => {
                let n = self.photon_number.ok_or_else(|| {
                    Error::Config("source `fock` needs `photon_number`".into())
                })?;
                Ok(PhotonSource::fock(n))
            }
            "finite" => {
                let probs = self.probabilities.clone().ok_or_else(|| {
                    Error::Config("source `finite` needs `probabilities`".into())
                })?;
                PhotonSource::finite(probs)
            }
            other => Err(Error::Config(format!("unknown source family `{other}`"))),
        }
    }

    pub fn efficiency_uncertainty(&self) -> Result<Option<EfficiencyUncertainty>> {
        let grid = self.eta_grid.unwrap_or(DEFAULT_ETA_GRID);
        match (&self.eta_half_width, &self.eta_half_widths) {
            (Some(_), Some(_)) => Err(Error::Config(
                "give either `eta_half_width` or `eta_half_widths`, not both".into(),
            )),
            (Some(h), None) => Ok(Some(EfficiencyUncertainty::UniformShift {
                half_width: *h,
                grid,
            })),
            (None, Some(hs)) => Ok(Some(EfficiencyUncertainty::PerDetectorBox {
                half_widths: hs.clone(),
                grid,
            })),
            (None, None) => Ok(None),
        }
    }
}

/// Parsed measured-coincidence data.
#[derive(Clone, Debug)]
pub enum MeasuredRecord {
    /// Per-click-pattern tallies, indexed by detector mask.
    ExactCounts { counts: Vec<u64>, pulses: u64 },
    /// Pre-averaged coincidence fractions for fold sizes 1..=D.
    PreAveraged { folds: Vec<f64>, pulses: Option<u64> },
}

impl MeasuredRecord {
    pub fn detectors(&self) -> usize {
        match self {
            MeasuredRecord::ExactCounts { counts, .. } => {
                counts.len().trailing_zeros() as usize
            }
            MeasuredRecord::PreAveraged { folds, .. } => folds.len(),
        }
    }

    pub fn pulses(&self) -> Option<u64> {
        match self {
            MeasuredRecord::ExactCounts { pulses, .. } => Some(*pulses),
            MeasuredRecord::PreAveraged { pulses, .. } => *pulses,
        }
    }

    /// Coincidence vector implied by the record.  For count data the
    /// fold numerators are summed in integers, reproducing exactly the
    /// doubles a simulation run reports for the same tallies.
    pub fn coincidences(&self) -> Result<CoincidenceVector> {
        match self {
            MeasuredRecord::ExactCounts { counts, pulses } => {
                let d = self.detectors();
                let covering = covering_counts_from_exact(counts)?;
                let mut folds = Vec::with_capacity(d);
                for r in 1..=d {
                    let numer: u128 = covering
                        .iter()
                        .enumerate()
                        .filter(|(mask, _)| mask.count_ones() as usize == r)
                        .map(|(_, &c)| c as u128)
                        .sum();
                    let denom = num_integer::binomial(d as u64, r as u64) as f64;
                    folds.push(numer as f64 / (denom * *pulses as f64));
                }
                CoincidenceVector::from_folds(&folds)
            }
            MeasuredRecord::PreAveraged { folds, .. } => CoincidenceVector::from_folds(folds),
        }
    }
}

enum MeasuredHeader {
    Masks,
    Folds,
}

/// Parses measured-data CSV.  Comment lines start with `#`; the
/// metadata row is emitted as `#total_pulses=N` but a bare
/// `total_pulses,N` data row is tolerated on input.
pub fn parse_measured(text: &str) -> Result<MeasuredRecord> {
    let mut pulses: Option<u64> = None;
    let mut header: Option<MeasuredHeader> = None;
    let mut mask_rows: Vec<(u32, u64)> = Vec::new();
    let mut fold_rows: Vec<(usize, f64)> = Vec::new();

    let parse_pulses = |s: &str| -> Result<u64> {
        s.trim()
            .parse::<u64>()
            .map_err(|e| Error::Parse(format!("bad total_pulses value `{s}`: {e}")))
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("total_pulses=") {
                pulses = Some(parse_pulses(value)?);
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::Parse(format!(
                "line {lineno}: expected two comma-separated fields, got {}",
                fields.len()
            )));
        }
        match header {
            None => {
                header = match (fields[0], fields[1]) {
                    ("subset_mask", "clicks") => Some(MeasuredHeader::Masks),
                    ("r", "c_obs_r") => Some(MeasuredHeader::Folds),
                    _ => {
                        return Err(Error::Parse(format!(
                            "line {lineno}: unrecognized header `{line}`"
                        )))
                    }
                };
            }
            Some(MeasuredHeader::Masks) => {
                if fields[0] == "total_pulses" {
                    pulses = Some(parse_pulses(fields[1])?);
                    continue;
                }
                let mask = fields[0].parse::<u32>().map_err(|e| {
                    Error::Parse(format!("line {lineno}: bad subset mask: {e}"))
                })?;
                let clicks = fields[1].parse::<u64>().map_err(|e| {
                    Error::Parse(format!("line {lineno}: bad click count: {e}"))
                })?;
                mask_rows.push((mask, clicks));
            }
            Some(MeasuredHeader::Folds) => {
                if fields[0] == "total_pulses" {
                    pulses = Some(parse_pulses(fields[1])?);
                    continue;
                }
                let r = fields[0].parse::<usize>().map_err(|e| {
                    Error::Parse(format!("line {lineno}: bad fold size: {e}"))
                })?;
                let value = fields[1].parse::<f64>().map_err(|e| {
                    Error::Parse(format!("line {lineno}: bad coincidence value: {e}"))
                })?;
                fold_rows.push((r, value));
            }
        }
    }

    match header {
        None => Err(Error::Parse("no table header found".into())),
        Some(MeasuredHeader::Masks) => {
            if !mask_rows.len().is_power_of_two() || mask_rows.len() < 2 {
                return Err(Error::Parse(format!(
                    "need one row per click pattern (a power of two), got {}",
                    mask_rows.len()
                )));
            }
            let mut counts = vec![None; mask_rows.len()];
            for (mask, clicks) in mask_rows {
                let slot = counts.get_mut(mask as usize).ok_or_else(|| {
                    Error::Parse(format!("subset mask {mask} out of range"))
                })?;
                if slot.replace(clicks).is_some() {
                    return Err(Error::Parse(format!("duplicate subset mask {mask}")));
                }
            }
            let counts: Vec<u64> = counts
                .into_iter()
                .collect::<Option<_>>()
                .ok_or_else(|| Error::Parse("missing subset mask rows".into()))?;
            let pulses = pulses
                .ok_or_else(|| Error::Parse("missing total_pulses metadata".into()))?;
            let total: u64 = counts.iter().sum();
            if total != pulses {
                return Err(Error::Inconsistency(format!(
                    "click patterns sum to {total} but total_pulses says {pulses}"
                )));
            }
            Ok(MeasuredRecord::ExactCounts { counts, pulses })
        }
        Some(MeasuredHeader::Folds) => {
            let d = fold_rows.len();
            if d == 0 {
                return Err(Error::Parse("no coincidence rows found".into()));
            }
            let mut folds = vec![None; d];
            for (r, value) in fold_rows {
                if r == 0 || r > d {
                    return Err(Error::Parse(format!(
                        "fold size {r} outside the contiguous range 1..={d}"
                    )));
                }
                if folds[r - 1].replace(value).is_some() {
                    return Err(Error::Parse(format!("duplicate fold size {r}")));
                }
            }
            let folds: Vec<f64> = folds.into_iter().map(Option::unwrap).collect();
            Ok(MeasuredRecord::PreAveraged { folds, pulses })
        }
    }
}

pub fn read_measured(path: &Path) -> Result<MeasuredRecord> {
    let text = fs::read_to_string(path)?;
    parse_measured(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Renders a simulation run in the measured-data format `cmd_bounds`
/// ingests: exact click-pattern counts when the detector count permits
/// tracking them, pre-averaged folds otherwise.
pub fn measured_csv(result: &SimulationResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# schema: photon-calib/measured-v1");
    let _ = writeln!(out, "#total_pulses={}", result.pulses());
    if !result.exact_click_counts().is_empty() {
        let _ = writeln!(out, "subset_mask,clicks");
        for (mask, &count) in result.exact_click_counts().iter().enumerate() {
            let _ = writeln!(out, "{mask},{count}");
        }
    } else {
        let _ = writeln!(out, "r,c_obs_r");
        let folds = result.empirical().folds();
        for r in 1..=folds {
            let _ = writeln!(out, "{r},{}", format_float(result.empirical().entry(r)));
        }
    }
    out
}

/// Writes to the path when given, otherwise to stdout.
pub fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
