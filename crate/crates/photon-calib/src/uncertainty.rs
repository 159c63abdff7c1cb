//! Widening the bounds under imperfect knowledge.
//!
//! Two ingredients are uncertain in practice: the detector efficiencies
//! (known only within a box) and the observed coincidence fractions
//! (finite statistics).  For a fixed efficiency assignment every bound is
//! affine in the observations, so extremizing over observation intervals
//! needs only the sign of each coefficient.  The efficiency box is handled
//! by a uniform grid scan (the common-shift case collapses to one
//! dimension and gets local refinement); taking the min of lower bounds
//! and the max of upper bounds over all valid grid points is conservative
//! by construction.

use crate::bounds::{scan_rows, PhotonBound, ReciprocalBasis, ScanRows};
use crate::coincidence::{validate_efficiencies, CoincidenceVector, DetectorSetup};
use crate::math::{rat, rat_to_f64, Rat, MAX_DETECTORS};
use crate::{Error, Result};
use num_traits::Signed;

/// Default number of grid points per free efficiency dimension.
pub const DEFAULT_ETA_GRID: usize = 21;

/// Hard cap on efficiency-box grid points.
pub const MAX_GRID_POINTS: u64 = 1_000_000;

/// Successive rescaled-fold ratio below which a source counts as weak for
/// the proportional-error diagnostics.
pub const WEAK_SOURCE_RATIO: f64 = 0.2;

/// Finite-statistics treatment of the observed coincidence vector.
#[derive(Clone, Debug)]
pub enum ObservationUncertainty {
    /// Observations taken at face value.
    Exact,
    /// Explicit per-entry intervals, indices 0..=D with entry 0 pinned to
    /// (1, 1).
    Intervals(Vec<(f64, f64)>),
    /// Two-sided Hoeffding intervals from the pulse count, with the
    /// failure budget split evenly over all nonempty detector subsets.
    CountingConfidence { pulses: u64, delta: f64 },
}

/// Knowledge about the true efficiencies.
#[derive(Clone, Debug)]
pub enum EfficiencyUncertainty {
    /// Efficiencies known exactly.
    None,
    /// All efficiencies share a common additive offset in
    /// [-half_width, half_width]; scanned on `grid` points and locally
    /// refined around each extremum.
    UniformShift { half_width: f64, grid: usize },
    /// Independent per-detector boxes, scanned on a full `grid`-per-axis
    /// lattice (no refinement); point count is capped.
    PerDetectorBox { half_widths: Vec<f64>, grid: usize },
}

/// Half-width of the two-sided Hoeffding interval for every subset click
/// fraction, after splitting `delta` over the 2^D - 1 nonempty subsets.
pub fn hoeffding_half_width(detectors: usize, pulses: u64, delta: f64) -> Result<f64> {
    if detectors == 0 || detectors > MAX_DETECTORS {
        return Err(Error::InvalidArgument(format!(
            "detector count {detectors} outside 1..={MAX_DETECTORS}"
        )));
    }
    if pulses == 0 {
        return Err(Error::InvalidArgument("pulse count must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence budget must lie in (0, 1), got {delta}"
        )));
    }
    let subsets = (1u64 << detectors) - 1;
    let per_subset = delta / subsets as f64;
    Ok(((2.0 / per_subset).ln() / (2.0 * pulses as f64)).sqrt())
}

/// Superset sums: turns exact click-set counts (index = click mask) into
/// covering counts, where entry `m` counts pulses whose click set included
/// every detector of `m`.
pub fn covering_counts_from_exact(exact: &[u64]) -> Result<Vec<u64>> {
    if !exact.len().is_power_of_two() || exact.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "exact click tally length {} is not a power of two",
            exact.len()
        )));
    }
    let d = exact.len().trailing_zeros() as usize;
    let mut cov = exact.to_vec();
    for bit in 0..d {
        let step = 1usize << bit;
        for mask in 0..cov.len() {
            if mask & step == 0 {
                cov[mask] += cov[mask | step];
            }
        }
    }
    Ok(cov)
}

/// Per-fold confidence intervals from covering counts.
///
/// Every subset's click fraction receives the same Hoeffding half-width;
/// averaging over the subsets of one size keeps it, so each fold interval
/// is the point estimate plus/minus that width, clipped to [0, 1].
/// Returns entries 0..=D with entry 0 pinned to (1, 1).
pub fn confidence_intervals(
    covering_counts: &[u64],
    pulses: u64,
    delta: f64,
) -> Result<Vec<(f64, f64)>> {
    if !covering_counts.len().is_power_of_two() || covering_counts.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "covering count length {} is not a power of two",
            covering_counts.len()
        )));
    }
    let d = covering_counts.len().trailing_zeros() as usize;
    if covering_counts.iter().any(|&c| c > pulses) {
        return Err(Error::InvalidArgument(
            "a subset cannot click more often than pulses were sent".into(),
        ));
    }
    if covering_counts[0] != pulses {
        return Err(Error::InvalidArgument(format!(
            "the empty subset covers every pulse: expected {pulses}, got {}",
            covering_counts[0]
        )));
    }
    let w = hoeffding_half_width(d, pulses, delta)?;
    let mut intervals = vec![(1.0, 1.0)];
    for r in 1..=d {
        let mut sum = 0.0;
        let mut subsets = 0u64;
        for (mask, &count) in covering_counts.iter().enumerate() {
            if mask.count_ones() as usize == r {
                sum += count as f64 / pulses as f64;
                subsets += 1;
            }
        }
        let point = sum / subsets as f64;
        intervals.push(((point - w).max(0.0), (point + w).min(1.0)));
    }
    Ok(intervals)
}

fn observation_intervals(
    observed: &CoincidenceVector,
    obs: &ObservationUncertainty,
) -> Result<Vec<(f64, f64)>> {
    let d = observed.folds();
    match obs {
        ObservationUncertainty::Exact => Ok((0..=d)
            .map(|r| (observed.entry(r), observed.entry(r)))
            .collect()),
        ObservationUncertainty::Intervals(iv) => {
            if iv.len() != d + 1 {
                return Err(Error::InvalidArgument(format!(
                    "expected {} observation intervals, got {}",
                    d + 1,
                    iv.len()
                )));
            }
            if iv[0] != (1.0, 1.0) {
                return Err(Error::InvalidArgument(
                    "entry 0 of the observation intervals must be pinned to (1, 1)".into(),
                ));
            }
            for &(lo, hi) in &iv[1..] {
                if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "malformed observation interval [{lo}, {hi}]"
                    )));
                }
            }
            Ok(iv.clone())
        }
        ObservationUncertainty::CountingConfidence { pulses, delta } => {
            let w = hoeffding_half_width(d, *pulses, *delta)?;
            let mut iv = vec![(1.0, 1.0)];
            for r in 1..=d {
                let e = observed.entry(r);
                iv.push(((e - w).max(0.0), (e + w).min(1.0)));
            }
            Ok(iv)
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
}

/// Whether the truncated family supplies the upper side at this index;
/// index D means the tail.
fn finite_is_upper(d: usize, index: usize) -> bool {
    index == d || (d - index) % 2 == 0
}

/// Row and direction for one side of one bound.
fn side_row(basis: &ReciprocalBasis, index: usize, side: Side) -> &[Rat] {
    match (side, finite_is_upper(basis.detectors(), index)) {
        (Side::Upper, true) | (Side::Lower, false) => &basis.exact_finite_rows()[index],
        (Side::Upper, false) | (Side::Lower, true) => &basis.exact_saturating_rows()[index],
    }
}

fn side_row_f64(rows: &ScanRows, index: usize, side: Side) -> &[f64] {
    match (side, finite_is_upper(rows.finite.len() - 1, index)) {
        (Side::Upper, true) | (Side::Lower, false) => &rows.finite[index],
        (Side::Upper, false) | (Side::Lower, true) => &rows.saturating[index],
    }
}

/// Exact extremum of an affine form over the observation box: each
/// coefficient's sign picks an interval endpoint, the accumulation stays
/// rational, and the result is rounded once.  With zero-width intervals
/// this is the same computation as the plain bound, bit for bit.
fn extremize(row: &[Rat], intervals: &[(f64, f64)], side: Side) -> f64 {
    let mut acc = row[0].clone();
    for (coeff, &(lo, hi)) in row.iter().zip(intervals).skip(1) {
        let pick = if coeff.is_positive() == (side == Side::Lower) {
            lo
        } else {
            hi
        };
        acc += coeff * rat(pick);
    }
    rat_to_f64(&acc)
}

/// Floating-point twin of [`extremize`], for ranking scan points.
fn extremize_f64(row: &[f64], intervals: &[(f64, f64)], side: Side) -> f64 {
    let mut acc = row[0];
    for (coeff, &(lo, hi)) in row.iter().zip(intervals).skip(1) {
        let pick = if (*coeff > 0.0) == (side == Side::Lower) {
            lo
        } else {
            hi
        };
        acc += coeff * pick;
    }
    acc
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Worst-case bounds over efficiency and observation uncertainty.
#[derive(Clone, Debug)]
pub struct WorstCaseResult {
    detectors: usize,
    bounds: Vec<PhotonBound>,
    tail: PhotonBound,
    evaluated_points: usize,
    skipped_points: usize,
}

impl WorstCaseResult {
    pub fn detectors(&self) -> usize {
        self.detectors
    }

    pub fn bound(&self, n: usize) -> Result<&PhotonBound> {
        self.bounds.get(n).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "photon number {n} is not resolved by {} detectors",
                self.detectors
            ))
        })
    }

    pub fn bounds(&self) -> &[PhotonBound] {
        &self.bounds
    }

    pub fn tail(&self) -> &PhotonBound {
        &self.tail
    }

    /// Efficiency assignments actually evaluated.
    pub fn evaluated_points(&self) -> usize {
        self.evaluated_points
    }

    /// Grid points rejected by setup validation.
    pub fn skipped_points(&self) -> usize {
        self.skipped_points
    }
}

/// Leading candidate for one side of one bound.
#[derive(Clone)]
struct Slot {
    value: f64,
    shift: f64,
    etas: Vec<f64>,
}

impl Slot {
    fn empty(side: Side) -> Self {
        Slot {
            value: match side {
                Side::Lower => f64::INFINITY,
                Side::Upper => f64::NEG_INFINITY,
            },
            shift: 0.0,
            etas: Vec::new(),
        }
    }

    fn offer(&mut self, side: Side, value: f64, shift: f64, etas: &[f64]) {
        let better = match side {
            Side::Lower => value < self.value,
            Side::Upper => value > self.value,
        };
        if better {
            self.value = value;
            self.shift = shift;
            self.etas = etas.to_vec();
        }
    }
}

struct Scan {
    /// Extremal candidate per (index, side), tail last.
    lower: Vec<Slot>,
    upper: Vec<Slot>,
    evaluated: usize,
    skipped: usize,
}

/// Ranks one efficiency assignment with the floating-point rows; invalid
/// assignments are skipped.  The rare point whose f64 response matrix
/// loses a diagonal entry to cancellation falls back to the exact rows
/// instead of being dropped, so the envelope never silently shrinks.
fn eval_point(
    etas: &[f64],
    intervals: &[(f64, f64)],
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    if !validate_efficiencies(etas).is_valid() {
        return Ok(None);
    }
    let setup = DetectorSetup::new(etas.to_vec())?;
    let d = setup.detectors();
    let mut lows = Vec::with_capacity(d + 1);
    let mut highs = Vec::with_capacity(d + 1);
    match scan_rows(&setup) {
        Ok(rows) => {
            for index in 0..=d {
                lows.push(extremize_f64(
                    side_row_f64(&rows, index, Side::Lower),
                    intervals,
                    Side::Lower,
                ));
                highs.push(extremize_f64(
                    side_row_f64(&rows, index, Side::Upper),
                    intervals,
                    Side::Upper,
                ));
            }
        }
        Err(Error::Conditioning { .. }) => {
            let basis = ReciprocalBasis::shared(&setup)?;
            for index in 0..=d {
                lows.push(extremize(
                    side_row(&basis, index, Side::Lower),
                    intervals,
                    Side::Lower,
                ));
                highs.push(extremize(
                    side_row(&basis, index, Side::Upper),
                    intervals,
                    Side::Upper,
                ));
            }
        }
        Err(e) => return Err(e),
    }
    Ok(Some((lows, highs)))
}

/// Recomputes one slot's value with the exact rows at its winning
/// assignment.  With zero-width boxes this reproduces the plain bound bit
/// for bit.
fn certify(slot: &Slot, index: usize, side: Side, intervals: &[(f64, f64)]) -> Result<f64> {
    let setup = DetectorSetup::new(slot.etas.clone())?;
    let basis = ReciprocalBasis::shared(&setup)?;
    Ok(extremize(side_row(&basis, index, side), intervals, side))
}

fn scan_shifts(
    base: &[f64],
    shifts: &[f64],
    intervals: &[(f64, f64)],
    scan: &mut Scan,
) -> Result<()> {
    for &shift in shifts {
        let etas: Vec<f64> = base.iter().map(|e| e + shift).collect();
        match eval_point(&etas, intervals)? {
            None => scan.skipped += 1,
            Some((lows, highs)) => {
                scan.evaluated += 1;
                for (slot, value) in scan.lower.iter_mut().zip(&lows) {
                    slot.offer(Side::Lower, *value, shift, &etas);
                }
                for (slot, value) in scan.upper.iter_mut().zip(&highs) {
                    slot.offer(Side::Upper, *value, shift, &etas);
                }
            }
        }
    }
    Ok(())
}

/// Widened bounds: min of lower bounds and max of upper bounds over every
/// valid efficiency assignment in the box, with the observation box
/// extremized exactly at each point.
pub fn worst_case_bounds(
    setup: &DetectorSetup,
    observed: &CoincidenceVector,
    obs: &ObservationUncertainty,
    eta: &EfficiencyUncertainty,
) -> Result<WorstCaseResult> {
    let d = setup.detectors();
    if observed.folds() != d {
        return Err(Error::InvalidArgument(format!(
            "coincidence vector has {} folds, setup has {} detectors",
            observed.folds(),
            d
        )));
    }
    let intervals = observation_intervals(observed, obs)?;
    let base = setup.efficiencies().to_vec();
    let mut scan = Scan {
        lower: vec![Slot::empty(Side::Lower); d + 1],
        upper: vec![Slot::empty(Side::Upper); d + 1],
        evaluated: 0,
        skipped: 0,
    };

    match eta {
        EfficiencyUncertainty::None => {
            scan_shifts(&base, &[0.0], &intervals, &mut scan)?;
        }
        EfficiencyUncertainty::UniformShift { half_width, grid } => {
            let h = *half_width;
            if !(h >= 0.0) || !h.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "shift half-width must be nonnegative, got {h}"
                )));
            }
            let g = *grid;
            if !(2..=100_001).contains(&g) {
                return Err(Error::InvalidArgument(format!(
                    "grid size {g} outside 2..=100001"
                )));
            }
            scan_shifts(&base, &linspace(-h, h, g), &intervals, &mut scan)?;
            if scan.evaluated > 0 && h > 0.0 {
                refine_uniform(&base, h, g, &intervals, &mut scan)?;
            }
        }
        EfficiencyUncertainty::PerDetectorBox { half_widths, grid } => {
            if half_widths.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "expected {} half-widths, got {}",
                    d,
                    half_widths.len()
                )));
            }
            if half_widths.iter().any(|&h| !(h >= 0.0) || !h.is_finite()) {
                return Err(Error::InvalidArgument(
                    "per-detector half-widths must be nonnegative".into(),
                ));
            }
            let g = *grid;
            if g < 2 {
                return Err(Error::InvalidArgument(format!(
                    "grid size {g} must be at least 2"
                )));
            }
            let points = (g as u64).checked_pow(d as u32);
            match points {
                Some(p) if p <= MAX_GRID_POINTS => {}
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "efficiency grid of {g}^{d} points exceeds the cap of {MAX_GRID_POINTS}"
                    )))
                }
            }
            let axes: Vec<Vec<f64>> = half_widths
                .iter()
                .map(|&h| linspace(-h, h, g))
                .collect();
            let mut digits = vec![0usize; d];
            loop {
                let etas: Vec<f64> = base
                    .iter()
                    .zip(&digits)
                    .zip(&axes)
                    .map(|((e, &k), axis)| e + axis[k])
                    .collect();
                match eval_point(&etas, &intervals)? {
                    None => scan.skipped += 1,
                    Some((lows, highs)) => {
                        scan.evaluated += 1;
                        for (slot, value) in scan.lower.iter_mut().zip(&lows) {
                            slot.offer(Side::Lower, *value, 0.0, &etas);
                        }
                        for (slot, value) in scan.upper.iter_mut().zip(&highs) {
                            slot.offer(Side::Upper, *value, 0.0, &etas);
                        }
                    }
                }
                let mut axis = 0;
                loop {
                    if axis == d {
                        digits.clear();
                        break;
                    }
                    digits[axis] += 1;
                    if digits[axis] < g {
                        break;
                    }
                    digits[axis] = 0;
                    axis += 1;
                }
                if digits.is_empty() {
                    break;
                }
            }
        }
    }

    if scan.evaluated == 0 {
        return Err(Error::PreconditionFailed(
            "every efficiency assignment in the box failed setup validation".into(),
        ));
    }

    // re-certify every winning point with the exact rows; the scan only
    // chose where to look
    let mut bounds = Vec::with_capacity(d);
    for n in 0..d {
        let lower = certify(&scan.lower[n], n, Side::Lower, &intervals)?;
        let upper = certify(&scan.upper[n], n, Side::Upper, &intervals)?;
        let basis_pair = if (d - n) % 2 == 0 {
            (
                crate::bounds::BasisKind::Saturating,
                crate::bounds::BasisKind::Finite,
            )
        } else {
            (
                crate::bounds::BasisKind::Finite,
                crate::bounds::BasisKind::Saturating,
            )
        };
        bounds.push(PhotonBound::from_raw(
            lower,
            basis_pair.0,
            upper,
            basis_pair.1,
        ));
    }
    let tail = PhotonBound::from_raw(
        certify(&scan.lower[d], d, Side::Lower, &intervals)?,
        crate::bounds::BasisKind::Saturating,
        certify(&scan.upper[d], d, Side::Upper, &intervals)?,
        crate::bounds::BasisKind::Finite,
    );
    Ok(WorstCaseResult {
        detectors: d,
        bounds,
        tail,
        evaluated_points: scan.evaluated,
        skipped_points: scan.skipped,
    })
}

/// Two local passes around each extremal shift, shrinking the window to
/// one coarse step each time.  Extrema usually sit at the box walls, but
/// interior ones get pinned too.
fn refine_uniform(
    base: &[f64],
    half_width: f64,
    grid: usize,
    intervals: &[(f64, f64)],
    scan: &mut Scan,
) -> Result<()> {
    let d = base.len();
    let coarse_step = 2.0 * half_width / (grid - 1) as f64;
    for index in 0..=d {
        for side in [Side::Lower, Side::Upper] {
            let mut best = match side {
                Side::Lower => scan.lower[index].clone(),
                Side::Upper => scan.upper[index].clone(),
            };
            let mut step = coarse_step;
            for _ in 0..2 {
                let lo = (best.shift - step).max(-half_width);
                let hi = (best.shift + step).min(half_width);
                for &shift in &linspace(lo, hi, grid) {
                    let etas: Vec<f64> = base.iter().map(|e| e + shift).collect();
                    match eval_point(&etas, intervals)? {
                        None => scan.skipped += 1,
                        Some((lows, highs)) => {
                            scan.evaluated += 1;
                            let value = match side {
                                Side::Lower => lows[index],
                                Side::Upper => highs[index],
                            };
                            best.offer(side, value, shift, &etas);
                        }
                    }
                }
                step = (hi - lo) / (grid - 1) as f64;
            }
            match side {
                Side::Lower => scan.lower[index] = best,
                Side::Upper => scan.upper[index] = best,
            }
        }
    }
    Ok(())
}

/// Quick proportional-error figures for the bounds.
#[derive(Clone, Debug)]
pub struct PropagationEstimate {
    /// Relative bound shift estimate per photon number 0..D-1.
    pub relative_shifts: Vec<f64>,
    /// Whether the rescaled folds decay fast enough for the estimates to
    /// be trustworthy; recorded, not enforced.
    pub weak_source: bool,
}

/// First-order envelopes for how relative errors in the observations and
/// in the mean efficiency move the bounds: the vacuum estimate feels them
/// through the one-fold term scaled by p_1/p_0, every other photon number
/// n adds n times the efficiency error to its own fold error.  These are
/// heuristics for planning; `worst_case_bounds` is the rigorous path.
pub fn propagation_estimate(
    setup: &DetectorSetup,
    observed: &CoincidenceVector,
    relative_cobs: &[f64],
    relative_eta: f64,
) -> Result<PropagationEstimate> {
    let d = setup.detectors();
    if observed.folds() != d {
        return Err(Error::InvalidArgument(format!(
            "coincidence vector has {} folds, setup has {} detectors",
            observed.folds(),
            d
        )));
    }
    if relative_cobs.len() != d {
        return Err(Error::InvalidArgument(format!(
            "expected {} relative observation errors, got {}",
            d,
            relative_cobs.len()
        )));
    }
    if relative_cobs.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(
            "relative observation errors must be nonnegative".into(),
        ));
    }
    if !(relative_eta >= 0.0) || !relative_eta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "relative efficiency error must be nonnegative, got {relative_eta}"
        )));
    }
    let mut rescaled = vec![1.0f64];
    for r in 1..=d {
        rescaled.push(observed.entry(r) / setup.diagonal_response(r)?);
    }
    let mut relative_shifts = Vec::with_capacity(d);
    let p0_estimate = 1.0 - rescaled[1];
    if p0_estimate <= 0.0 {
        return Err(Error::DiagnosticUnavailable(format!(
            "vacuum estimate 1 - c_1/eta = {p0_estimate} is not positive"
        )));
    }
    relative_shifts.push(rescaled[1] / p0_estimate * (relative_cobs[0] + relative_eta));
    for n in 1..d {
        relative_shifts.push(relative_cobs[n - 1] + n as f64 * relative_eta);
    }
    let weak_source = (1..d).all(|r| {
        let (lo, hi) = (rescaled[r], rescaled[r + 1]);
        hi == 0.0 || (lo > 0.0 && hi / lo <= WEAK_SOURCE_RATIO)
    });
    Ok(PropagationEstimate {
        relative_shifts,
        weak_source,
    })
}
