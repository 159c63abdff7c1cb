//! Asymptotic decoy-state BB84 key rates from bounded photon statistics.
//!
//! The sender interleaves a signal source (mean photon number mu) and a
//! weaker decoy source (mu' = mu/10 in the reference scenario).  The
//! receiver-side channel statistics pin down the single-photon yield and
//! error rate, which carry the secret fraction.  When the sources are
//! only known through calibrated bounds, every probability entering the
//! estimate is replaced by whichever endpoint makes the key rate worse.
//!
//! Gain bookkeeping: `ChannelObservations` stores gains and error rates
//! conditioned on the basis choice, i.e. the value written Q/q in the
//! yield formulas.  The unconditional products in the rate formula are
//! formed as fraction times conditional gain.

use crate::bounds::BoundsResult;
use crate::coincidence::{predicted_coincidences, DetectorSetup, PhotonSource};
use crate::math::binary_entropy;
use crate::uncertainty::{
    worst_case_bounds, EfficiencyUncertainty, ObservationUncertainty, WorstCaseResult,
};
use crate::{Error, Result};
use rayon::prelude::*;

/// Error rate assigned to dark-count detections.
pub const ZERO_PHOTON_ERROR_RATE: f64 = 0.5;

/// Detector misalignment error used by the reference channel model.
pub const MISALIGNMENT_ERROR_RATE: f64 = 0.01;

/// Basis-choice fractions and the dark-count floor.
#[derive(Clone, Debug)]
pub struct ProtocolParams {
    signal_fraction: f64,
    decoy_fraction: f64,
    dark_yield: f64,
}

impl ProtocolParams {
    pub fn new(signal_fraction: f64, decoy_fraction: f64, dark_yield: f64) -> Result<Self> {
        for (label, f) in [
            ("signal fraction", signal_fraction),
            ("decoy fraction", decoy_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{label} must lie in (0, 1), got {f}"
                )));
            }
        }
        if signal_fraction + decoy_fraction > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "pulse fractions sum to {} > 1",
                signal_fraction + decoy_fraction
            )));
        }
        if !(dark_yield >= 0.0 && dark_yield < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "dark yield must lie in [0, 1), got {dark_yield}"
            )));
        }
        Ok(ProtocolParams {
            signal_fraction,
            decoy_fraction,
            dark_yield,
        })
    }

    pub fn signal_fraction(&self) -> f64 {
        self.signal_fraction
    }

    pub fn decoy_fraction(&self) -> f64 {
        self.decoy_fraction
    }

    pub fn dark_yield(&self) -> f64 {
        self.dark_yield
    }
}

/// Measured channel statistics, conditioned on the basis choice.
#[derive(Clone, Copy, Debug)]
pub struct ChannelObservations {
    pub signal_gain: f64,
    pub signal_error_rate: f64,
    pub decoy_gain: f64,
    pub decoy_error_rate: f64,
}

impl ChannelObservations {
    pub fn new(
        signal_gain: f64,
        signal_error_rate: f64,
        decoy_gain: f64,
        decoy_error_rate: f64,
    ) -> Result<Self> {
        for (label, g) in [("signal gain", signal_gain), ("decoy gain", decoy_gain)] {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::DegenerateChannel(format!(
                    "{label} must lie in (0, 1], got {g}"
                )));
            }
        }
        for (label, e) in [
            ("signal error rate", signal_error_rate),
            ("decoy error rate", decoy_error_rate),
        ] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::InvalidArgument(format!(
                    "{label} must lie in [0, 1], got {e}"
                )));
            }
        }
        Ok(ChannelObservations {
            signal_gain,
            signal_error_rate,
            decoy_gain,
            decoy_error_rate,
        })
    }
}

/// Reference channel model: transmittance tau, dark counts at rate Y0
/// carrying a random outcome, one percent misalignment on the
/// transmitted fraction.
pub fn channel_observations(
    signal_mean: f64,
    decoy_mean: f64,
    transmittance: f64,
    dark_yield: f64,
) -> Result<ChannelObservations> {
    if !(transmittance > 0.0 && transmittance <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "transmittance must lie in (0, 1], got {transmittance}"
        )));
    }
    if !(dark_yield >= 0.0 && dark_yield < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "dark yield must lie in [0, 1), got {dark_yield}"
        )));
    }
    let rate = |mean: f64| -> Result<(f64, f64)> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "mean photon number must be positive, got {mean}"
            )));
        }
        let transmitted = 1.0 - (-mean * transmittance).exp();
        let gain = transmitted + dark_yield;
        if gain <= 0.0 {
            return Err(Error::DegenerateChannel(format!(
                "gain {gain} at mean {mean} leaves nothing to measure"
            )));
        }
        let error = (MISALIGNMENT_ERROR_RATE * transmitted
            + ZERO_PHOTON_ERROR_RATE * dark_yield)
            / gain;
        Ok((gain, error))
    };
    let (signal_gain, signal_error_rate) = rate(signal_mean)?;
    let (decoy_gain, decoy_error_rate) = rate(decoy_mean)?;
    ChannelObservations::new(signal_gain, signal_error_rate, decoy_gain, decoy_error_rate)
}

/// One signal/decoy measurement round to extract a key rate from.
#[derive(Clone, Debug)]
pub struct DecoyScenario {
    params: ProtocolParams,
    signal_mean: f64,
    decoy_mean: f64,
    channel: ChannelObservations,
}

impl DecoyScenario {
    /// Requires 1 > signal mean > decoy mean > 0.
    pub fn new(
        params: ProtocolParams,
        signal_mean: f64,
        decoy_mean: f64,
        channel: ChannelObservations,
    ) -> Result<Self> {
        if !(signal_mean < 1.0 && signal_mean > decoy_mean && decoy_mean > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "means must satisfy 1 > signal > decoy > 0, got {signal_mean} and {decoy_mean}"
            )));
        }
        Ok(DecoyScenario {
            params,
            signal_mean,
            decoy_mean,
            channel,
        })
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn signal_mean(&self) -> f64 {
        self.signal_mean
    }

    pub fn decoy_mean(&self) -> f64 {
        self.decoy_mean
    }

    pub fn channel(&self) -> &ChannelObservations {
        &self.channel
    }
}

/// Two-sided photon-number information about one source: per-n bounds for
/// n below the resolution limit and a bounded tail above it.  Exact
/// knowledge is the degenerate case lower = upper.
#[derive(Clone, Debug)]
pub struct PhotonStatistics {
    lower: Vec<f64>,
    upper: Vec<f64>,
    tail_lower: f64,
    tail_upper: f64,
}

impl PhotonStatistics {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        tail_lower: f64,
        tail_upper: f64,
    ) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need matching bound vectors for at least two photon numbers, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        let ordered = |lo: f64, hi: f64| 0.0 <= lo && lo <= hi && hi <= 1.0;
        for (n, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !ordered(lo, hi) {
                return Err(Error::InvalidArgument(format!(
                    "photon number {n}: bounds [{lo}, {hi}] are not an interval in [0, 1]"
                )));
            }
        }
        if !ordered(tail_lower, tail_upper) {
            return Err(Error::InvalidArgument(format!(
                "tail bounds [{tail_lower}, {tail_upper}] are not an interval in [0, 1]"
            )));
        }
        Ok(PhotonStatistics {
            lower,
            upper,
            tail_lower,
            tail_upper,
        })
    }

    pub fn from_bounds(bounds: &BoundsResult) -> Result<Self> {
        PhotonStatistics::new(
            bounds.bounds().iter().map(|b| b.lower).collect(),
            bounds.bounds().iter().map(|b| b.upper).collect(),
            bounds.tail().lower,
            bounds.tail().upper,
        )
    }

    pub fn from_worst_case(result: &WorstCaseResult) -> Result<Self> {
        PhotonStatistics::new(
            result.bounds().iter().map(|b| b.lower).collect(),
            result.bounds().iter().map(|b| b.upper).collect(),
            result.tail().lower,
            result.tail().upper,
        )
    }

    /// Point statistics of a Poissonian source, resolved up to
    /// `resolved - 1` photons with the exact remainder in the tail.
    pub fn exact_poissonian(mean: f64, resolved: usize) -> Result<Self> {
        if resolved < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least two resolved photon numbers, got {resolved}"
            )));
        }
        let source = PhotonSource::poissonian(mean)?;
        let probs: Vec<f64> = (0..resolved).map(|n| source.probability(n)).collect();
        let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
        PhotonStatistics::new(probs.clone(), probs, tail, tail)
    }

    /// Number of individually bounded photon numbers.
    pub fn resolved(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self, n: usize) -> f64 {
        self.lower[n]
    }

    pub fn upper(&self, n: usize) -> f64 {
        self.upper[n]
    }

    pub fn tail_lower(&self) -> f64 {
        self.tail_lower
    }

    pub fn tail_upper(&self) -> f64 {
        self.tail_upper
    }
}

/// What the rate extraction may assume about the sources.
#[derive(Clone, Debug)]
pub enum SourceKnowledge {
    /// Both sources are perfect Poissonians at the scenario means.
    PoissonKnown,
    /// Only calibrated bounds are available.
    Calibrated {
        signal: PhotonStatistics,
        decoy: PhotonStatistics,
    },
}

/// Which single-photon yield estimator produced the result.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Y1Method {
    KnownPoisson,
    BoundedPair,
    BoundedDirect,
}

impl Y1Method {
    pub fn label(&self) -> &'static str {
        match self {
            Y1Method::KnownPoisson => "known-poisson",
            Y1Method::BoundedPair => "bounded-pair",
            Y1Method::BoundedDirect => "bounded-direct",
        }
    }
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Single-photon yield floor when both sources are known Poissonians.
/// Eliminates the multi-photon yields via the two-photon statistics of
/// the signal/decoy pair.
pub fn y1_lower_poisson(scenario: &DecoyScenario) -> Result<f64> {
    let signal = PhotonSource::poissonian(scenario.signal_mean)?;
    let decoy = PhotonSource::poissonian(scenario.decoy_mean)?;
    let p: Vec<f64> = (0..3).map(|n| signal.probability(n)).collect();
    let pd: Vec<f64> = (0..3).map(|n| decoy.probability(n)).collect();
    let denom = pd[1] * p[2] - p[1] * pd[2];
    if denom <= 0.0 {
        return Err(Error::PreconditionFailed(format!(
            "yield elimination denominator {denom} is not positive"
        )));
    }
    let y0 = scenario.params.dark_yield;
    let numer = p[2] * scenario.channel.decoy_gain - pd[2] * scenario.channel.signal_gain
        - (pd[0] * p[2] - p[0] * pd[2]) * y0;
    Ok(clamp_unit(numer / denom))
}

/// Checks the likelihood-ratio chain that makes the pair bound valid:
/// signal floors against decoy ceilings must not decay faster than the
/// two-photon pair, and the one/two-photon link must keep the
/// elimination denominator positive.
fn ratio_chain_holds(signal: &PhotonStatistics, decoy: &PhotonStatistics) -> bool {
    let d = signal.resolved();
    if signal.lower(2) * decoy.upper(1) < signal.lower(1) * decoy.upper(2) {
        return false;
    }
    (2..d).all(|n| signal.lower(n) * decoy.upper(2) >= signal.lower(2) * decoy.upper(n))
}

/// Single-photon yield floor from calibrated bounds, via the signal/decoy
/// pair elimination with every probability replaced by its adverse
/// endpoint and the unresolved decoy tail charged in full.
pub fn y1_lower_calibrated(
    scenario: &DecoyScenario,
    signal: &PhotonStatistics,
    decoy: &PhotonStatistics,
) -> Result<f64> {
    if signal.resolved() != decoy.resolved() {
        return Err(Error::InvalidArgument(format!(
            "signal resolves {} photon numbers, decoy {}",
            signal.resolved(),
            decoy.resolved()
        )));
    }
    if signal.resolved() < 3 {
        return Err(Error::PreconditionFailed(
            "pair elimination needs at least three resolved photon numbers".into(),
        ));
    }
    if !ratio_chain_holds(signal, decoy) {
        return Err(Error::PreconditionFailed(
            "likelihood-ratio chain between signal floors and decoy ceilings fails".into(),
        ));
    }
    let denom = decoy.upper(1) * signal.lower(2) - signal.lower(1) * decoy.upper(2);
    if denom <= 0.0 {
        return Err(Error::PreconditionFailed(format!(
            "yield elimination denominator {denom} is not positive"
        )));
    }
    let y0 = scenario.params.dark_yield;
    let numer = signal.lower(2) * scenario.channel.decoy_gain
        - decoy.upper(2) * scenario.channel.signal_gain
        - (decoy.upper(0) * signal.lower(2) - signal.lower(0) * decoy.upper(2)) * y0
        - signal.lower(2) * decoy.tail_upper();
    Ok(clamp_unit(numer / denom))
}

/// Yield floor that charges every decoy detection above one photon as if
/// it came through perfectly.  Works for any resolution (it is the only
/// option when just two photon numbers are resolved) but is much weaker
/// than the pair elimination.
pub fn y1_lower_direct(scenario: &DecoyScenario, decoy: &PhotonStatistics) -> Result<f64> {
    if decoy.upper(1) <= 0.0 {
        return Err(Error::PreconditionFailed(
            "decoy one-photon ceiling is zero, nothing to attribute the gain to".into(),
        ));
    }
    let blocked: f64 =
        (2..decoy.resolved()).map(|n| decoy.upper(n)).sum::<f64>() + decoy.tail_upper();
    let numer = scenario.channel.decoy_gain
        - decoy.upper(0) * scenario.params.dark_yield
        - blocked;
    Ok(clamp_unit(numer / decoy.upper(1)))
}

/// Upper bound on the single-photon error rate, with its raw value.
#[derive(Clone, Copy, Debug)]
pub struct ErrorRateBound {
    /// Clamped to [0, 1/2] for key-rate use.
    pub clamped: f64,
    pub raw: f64,
}

/// Single-photon error ceiling: all decoy errors not explained by dark
/// counts are attributed to single photons.  `p0` and `p1` are the decoy
/// floors (exact values in the known-Poisson mode).
pub fn e1_upper(scenario: &DecoyScenario, p0: f64, p1: f64, y1_lower: f64) -> Result<ErrorRateBound> {
    if y1_lower <= 0.0 {
        return Err(Error::PreconditionFailed(
            "single-photon yield floor is zero, no key can be certified".into(),
        ));
    }
    let numer = scenario.channel.decoy_gain * scenario.channel.decoy_error_rate
        - p0 * ZERO_PHOTON_ERROR_RATE * scenario.params.dark_yield;
    let denom = p1 * y1_lower;
    let raw = if denom > 0.0 { numer / denom } else { f64::INFINITY };
    Ok(ErrorRateBound {
        clamped: raw.clamp(0.0, 0.5),
        raw,
    })
}

/// Outcome of one key-rate evaluation.
#[derive(Clone, Debug)]
pub struct KeyRateReport {
    /// Certified rate per pulse, never negative.
    pub rate: f64,
    /// Rate before flooring at zero; negative when error correction
    /// swamps the certified singles.
    pub raw_rate: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub e1_raw: f64,
    pub method: Y1Method,
    /// True when the pair elimination was requested but its ratio chain
    /// failed, so the weaker direct bound was used.
    pub downgraded: bool,
    pub no_key: bool,
}

/// Asymptotic key rate per pulse.  The privacy term counts certified
/// single-photon detections from both sources; the cost term is error
/// correction over everything that clicked.
pub fn key_rate(scenario: &DecoyScenario, knowledge: &SourceKnowledge) -> Result<KeyRateReport> {
    let (y1, p1_signal, p0_decoy, p1_decoy, method, downgraded) = match knowledge {
        SourceKnowledge::PoissonKnown => {
            let y1 = y1_lower_poisson(scenario)?;
            let signal = PhotonSource::poissonian(scenario.signal_mean)?;
            let decoy = PhotonSource::poissonian(scenario.decoy_mean)?;
            (
                y1,
                signal.probability(1),
                decoy.probability(0),
                decoy.probability(1),
                Y1Method::KnownPoisson,
                false,
            )
        }
        SourceKnowledge::Calibrated { signal, decoy } => {
            let (y1, method, downgraded) = if signal.resolved() >= 3 {
                match y1_lower_calibrated(scenario, signal, decoy) {
                    Ok(y1) => (y1, Y1Method::BoundedPair, false),
                    Err(Error::PreconditionFailed(_)) => {
                        (y1_lower_direct(scenario, decoy)?, Y1Method::BoundedDirect, true)
                    }
                    Err(other) => return Err(other),
                }
            } else {
                (y1_lower_direct(scenario, decoy)?, Y1Method::BoundedDirect, false)
            };
            (
                y1,
                signal.lower(1),
                decoy.lower(0),
                decoy.lower(1),
                method,
                downgraded,
            )
        }
    };

    let q = scenario.params.signal_fraction;
    let qd = scenario.params.decoy_fraction;
    let gain_total = q * scenario.channel.signal_gain + qd * scenario.channel.decoy_gain;
    let error_total = q * scenario.channel.signal_gain * scenario.channel.signal_error_rate
        + qd * scenario.channel.decoy_gain * scenario.channel.decoy_error_rate;
    let correction = gain_total * binary_entropy(error_total / gain_total)?;

    let (e1, raw_rate, no_key) = if y1 > 0.0 {
        let e1 = e1_upper(scenario, p0_decoy, p1_decoy, y1)?;
        let privacy =
            (q * p1_signal + qd * p1_decoy) * y1 * (1.0 - binary_entropy(e1.clamped)?);
        (e1, privacy - correction, false)
    } else {
        (
            ErrorRateBound {
                clamped: 0.5,
                raw: 0.5,
            },
            -correction,
            true,
        )
    };

    Ok(KeyRateReport {
        rate: raw_rate.max(0.0),
        raw_rate,
        y1_lower: y1,
        e1_upper: e1.clamped,
        e1_raw: e1.raw,
        method,
        downgraded,
        no_key,
    })
}

/// How a rate evaluation learns its sources.
#[derive(Clone, Debug)]
pub enum RateMode {
    PoissonKnown,
    Calibrated(CalibrationConfig),
}

impl RateMode {
    pub fn label(&self) -> String {
        match self {
            RateMode::PoissonKnown => "poisson-known".into(),
            RateMode::Calibrated(cfg) => format!("calibrated-d{}", cfg.detectors),
        }
    }
}

/// Calibration stage configuration for rate evaluations: a uniform
/// D-detector split of `nominal_total` efficiency, known only up to a
/// relative `ambiguity` shared by all detectors.
#[derive(Clone, Debug)]
pub struct CalibrationConfig {
    pub detectors: usize,
    pub nominal_total: f64,
    pub ambiguity: f64,
    pub grid: usize,
}

impl CalibrationConfig {
    /// Reference configuration: 10% total efficiency split evenly, known
    /// to within one percent, scanned on 21 points.
    pub fn standard(detectors: usize) -> Self {
        CalibrationConfig {
            detectors,
            nominal_total: 0.1,
            ambiguity: 0.01,
            grid: 21,
        }
    }
}

/// Calibrated statistics of an ideal Poissonian source as the
/// measurement pipeline would report them: predicted coincidences at the
/// nominal efficiencies, bounds widened over the efficiency ambiguity.
pub fn calibrated_statistics(config: &CalibrationConfig, mean: f64) -> Result<PhotonStatistics> {
    let eta = config.nominal_total / config.detectors as f64;
    let setup = DetectorSetup::uniform(config.detectors, eta)?;
    let source = PhotonSource::poissonian(mean)?;
    let observed = predicted_coincidences(&setup, &source)?;
    let widened = worst_case_bounds(
        &setup,
        &observed,
        &ObservationUncertainty::Exact,
        &EfficiencyUncertainty::UniformShift {
            half_width: config.nominal_total * config.ambiguity / config.detectors as f64,
            grid: config.grid,
        },
    )?;
    PhotonStatistics::from_worst_case(&widened)
}

/// Key rate for one signal mean under the mu' = mu/10 convention and the
/// reference channel model.
pub fn key_rate_at(
    params: &ProtocolParams,
    transmittance: f64,
    signal_mean: f64,
    mode: &RateMode,
) -> Result<KeyRateReport> {
    let decoy_mean = signal_mean / 10.0;
    let channel = channel_observations(signal_mean, decoy_mean, transmittance, params.dark_yield)?;
    let scenario = DecoyScenario::new(params.clone(), signal_mean, decoy_mean, channel)?;
    let knowledge = match mode {
        RateMode::PoissonKnown => SourceKnowledge::PoissonKnown,
        RateMode::Calibrated(config) => SourceKnowledge::Calibrated {
            signal: calibrated_statistics(config, signal_mean)?,
            decoy: calibrated_statistics(config, decoy_mean)?,
        },
    };
    key_rate(&scenario, &knowledge)
}

/// Best signal mean found for one transmittance.
#[derive(Clone, Debug)]
pub struct OptimizedRate {
    pub signal_mean: f64,
    pub report: KeyRateReport,
}

impl OptimizedRate {
    pub fn no_key(&self) -> bool {
        self.report.rate == 0.0
    }
}

/// Grid search over the signal mean: coarse pass at step 0.01 over
/// [0.01, 0.99], one refinement pass at step 0.001 around the winner.
/// Strict improvement on an ascending scan breaks ties toward smaller
/// means.
pub fn optimize_mu(
    params: &ProtocolParams,
    transmittance: f64,
    mode: &RateMode,
) -> Result<OptimizedRate> {
    let mut best: Option<OptimizedRate> = None;
    let consider = |mean: f64, report: KeyRateReport, best: &mut Option<OptimizedRate>| {
        let better = match best {
            None => true,
            Some(current) => report.rate > current.report.rate,
        };
        if better {
            *best = Some(OptimizedRate {
                signal_mean: mean,
                report,
            });
        }
    };
    for k in 1..=99u32 {
        let mean = k as f64 / 100.0;
        let report = key_rate_at(params, transmittance, mean, mode)?;
        consider(mean, report, &mut best);
    }
    let coarse = best.clone().expect("coarse grid is nonempty");
    let center = (coarse.signal_mean * 1000.0).round() as i64;
    for k in (center - 9).max(10)..=(center + 9).min(990) {
        if k % 10 == 0 {
            continue;
        }
        let mean = k as f64 / 1000.0;
        let report = key_rate_at(params, transmittance, mean, mode)?;
        consider(mean, report, &mut best);
    }
    Ok(best.expect("grid is nonempty"))
}

/// How one sweep curve learns its sources.
#[derive(Clone, Debug)]
pub enum SweepMode {
    PoissonKnown,
    Calibrated { detectors: usize },
}

impl SweepMode {
    pub fn rate_mode(&self) -> RateMode {
        match self {
            SweepMode::PoissonKnown => RateMode::PoissonKnown,
            SweepMode::Calibrated { detectors } => {
                RateMode::Calibrated(CalibrationConfig::standard(*detectors))
            }
        }
    }

    pub fn label(&self) -> String {
        self.rate_mode().label()
    }
}

/// One optimized sweep cell.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub mode: String,
    pub transmittance: f64,
    pub signal_mean: f64,
    pub decoy_mean: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub rate: f64,
    pub method: &'static str,
    pub downgraded: bool,
    pub no_key: bool,
}

/// Optimized key rates over a transmittance grid for each mode, in the
/// given cell order (mode-major).  Cells run in parallel.
pub fn keyrate_sweep(
    params: &ProtocolParams,
    transmittances: &[f64],
    modes: &[SweepMode],
) -> Result<Vec<SweepRow>> {
    if transmittances.is_empty() || modes.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep needs at least one transmittance and one mode".into(),
        ));
    }
    let cells: Vec<(&SweepMode, f64)> = modes
        .iter()
        .flat_map(|m| transmittances.iter().map(move |&t| (m, t)))
        .collect();
    cells
        .par_iter()
        .map(|(mode, tau)| {
            let optimized = optimize_mu(params, *tau, &mode.rate_mode())?;
            let report = optimized.report;
            Ok(SweepRow {
                mode: mode.label(),
                transmittance: *tau,
                signal_mean: optimized.signal_mean,
                decoy_mean: optimized.signal_mean / 10.0,
                y1_lower: report.y1_lower,
                e1_upper: report.e1_upper,
                rate: report.rate,
                method: report.method.label(),
                downgraded: report.downgraded,
                no_key: report.no_key,
            })
        })
        .collect()
}
