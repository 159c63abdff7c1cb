//! The threshold-detector coincidence model.
//!
//! `n` indistinguishable photons hit a passive splitter feeding `D`
//! threshold detectors; photon `k` reaches detector `i` with probability
//! `eta_i` and is lost otherwise, independently.  A detector clicks when at
//! least one photon reaches it.  The averaged `r`-fold coincidence
//! probability collects, over all size-`r` detector subsets, the chance
//! that the whole subset clicked.

use crate::math::{self, rat, rat_int, Rat, SubsetIndex, MAX_DETECTORS};
use crate::{Error, Result};
use num_traits::{One, Zero};

/// Tolerance for probability vectors summing to one.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// A single violated setup rule.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NoDetectors,
    TooManyDetectors {
        detectors: usize,
    },
    EfficiencyOutOfRange {
        detector: usize,
        value: f64,
    },
    TotalEfficiencyNotBelowOne {
        total: f64,
    },
    /// The sum of the `size` largest efficiencies must stay below the sum of
    /// the `size + 1` smallest ones, otherwise subset sums of different
    /// sizes interleave and the fold ordering breaks down.
    SizeOrderingViolated {
        size: usize,
        largest_sum: f64,
        smallest_sum: f64,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NoDetectors => write!(f, "at least one detector is required"),
            Violation::TooManyDetectors { detectors } => {
                write!(f, "{detectors} detectors exceed the cap of {MAX_DETECTORS}")
            }
            Violation::EfficiencyOutOfRange { detector, value } => {
                write!(f, "efficiency of detector {detector} must lie strictly in (0, 1), got {value}")
            }
            Violation::TotalEfficiencyNotBelowOne { total } => {
                write!(f, "efficiencies must sum below 1, got {total}")
            }
            Violation::SizeOrderingViolated {
                size,
                largest_sum,
                smallest_sum,
            } => write!(
                f,
                "sum of the {size} largest efficiencies ({largest_sum}) must stay below the sum of the {} smallest ({smallest_sum})",
                size + 1
            ),
        }
    }
}

/// Outcome of checking a candidate list of efficiencies.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            return write!(f, "setup is valid");
        }
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Checks a candidate efficiency list against every setup rule and reports
/// all violations instead of stopping at the first.
pub fn validate_efficiencies(efficiencies: &[f64]) -> ValidationReport {
    let mut violations = Vec::new();
    let d = efficiencies.len();
    if d == 0 {
        violations.push(Violation::NoDetectors);
        return ValidationReport { violations };
    }
    if d > MAX_DETECTORS {
        violations.push(Violation::TooManyDetectors { detectors: d });
    }
    let mut in_range = true;
    for (i, &eta) in efficiencies.iter().enumerate() {
        if !(eta > 0.0 && eta < 1.0) {
            violations.push(Violation::EfficiencyOutOfRange {
                detector: i + 1,
                value: eta,
            });
            in_range = false;
        }
    }
    if in_range {
        let total: f64 = efficiencies.iter().sum();
        if !(total < 1.0) {
            violations.push(Violation::TotalEfficiencyNotBelowOne { total });
        }
        let mut sorted = efficiencies.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for size in 1..d {
            let largest_sum: f64 = sorted[d - size..].iter().sum();
            let smallest_sum: f64 = sorted[..size + 1].iter().sum();
            if !(largest_sum < smallest_sum) {
                violations.push(Violation::SizeOrderingViolated {
                    size,
                    largest_sum,
                    smallest_sum,
                });
            }
        }
    }
    ValidationReport { violations }
}

/// A validated bank of threshold detectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorSetup {
    efficiencies: Vec<f64>,
}

impl DetectorSetup {
    /// Validates and adopts the given per-detector efficiencies.
    pub fn new(efficiencies: Vec<f64>) -> Result<Self> {
        let report = validate_efficiencies(&efficiencies);
        if !report.is_valid() {
            return Err(Error::InvalidSetup(report));
        }
        Ok(Self { efficiencies })
    }

    pub fn uniform(detectors: usize, eta: f64) -> Result<Self> {
        Self::new(vec![eta; detectors])
    }

    pub fn detectors(&self) -> usize {
        self.efficiencies.len()
    }

    pub fn efficiencies(&self) -> &[f64] {
        &self.efficiencies
    }

    pub fn mean_efficiency(&self) -> f64 {
        self.efficiencies.iter().sum::<f64>() / self.detectors() as f64
    }

    /// Mean subset product `s_j`; see [`math::elementary_average`].
    pub fn elementary_average(&self, j: usize) -> Result<f64> {
        math::elementary_average(&self.efficiencies, j)
    }

    /// Deviation-from-uniform measure; see [`math::efficiency_spread`].
    pub fn efficiency_spread(&self, i: usize, j: usize) -> Result<f64> {
        math::efficiency_spread(&self.efficiencies, i, j)
    }

    /// Coincidence response of exactly `r` photons on `r` folds:
    /// `r! * s_r`, the probability that `r` photons pair off with the `r`
    /// detectors of a subset, averaged over subsets.  Equals `r! eta^r` for
    /// uniform setups.
    pub fn diagonal_response(&self, r: usize) -> Result<f64> {
        if r > self.detectors() {
            return Err(Error::InvalidArgument(format!(
                "fold {r} exceeds detector count {}",
                self.detectors()
            )));
        }
        if r == 0 {
            return Ok(1.0);
        }
        let mut factorial = 1.0;
        for k in 2..=r {
            factorial *= k as f64;
        }
        Ok(factorial * self.elementary_average(r)?)
    }

    pub(crate) fn mask_eta_sum(&self, mask: u32) -> f64 {
        let mut rest = mask;
        let mut sum = 0.0;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            sum += self.efficiencies[i];
            rest &= rest - 1;
        }
        sum
    }

    /// Sum of member efficiencies of a subset.
    pub fn subset_eta_sum(&self, subset: &SubsetIndex) -> Result<f64> {
        if subset.detectors() != self.detectors() {
            return Err(Error::InvalidArgument(format!(
                "subset refers to {} detectors, setup has {}",
                subset.detectors(),
                self.detectors()
            )));
        }
        Ok(self.mask_eta_sum(subset.mask()))
    }
}

#[derive(Clone, Debug)]
pub(crate) enum SourceKind {
    Poissonian { mean: f64 },
    Thermal { mean: f64 },
    Finite { probabilities: Vec<f64> },
    Mixture { components: Vec<(f64, PhotonSource)> },
}

/// A photon-number distribution, queryable by probability, generating
/// function, and factorial moments.
#[derive(Clone, Debug)]
pub struct PhotonSource {
    kind: SourceKind,
}

impl PhotonSource {
    /// Coherent light: `p_n = e^{-mu} mu^n / n!`.
    pub fn poissonian(mean: f64) -> Result<Self> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "poissonian mean must be positive and finite, got {mean}"
            )));
        }
        Ok(Self {
            kind: SourceKind::Poissonian { mean },
        })
    }

    /// Single-mode thermal light: geometric photon-number distribution.
    pub fn thermal(mean: f64) -> Result<Self> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "thermal mean must be positive and finite, got {mean}"
            )));
        }
        Ok(Self {
            kind: SourceKind::Thermal { mean },
        })
    }

    /// Arbitrary distribution on `0..len` photons; probabilities must be
    /// nonnegative and sum to one within [`PROBABILITY_SUM_TOL`].
    pub fn finite(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidArgument(
                "finite source needs at least the vacuum probability".into(),
            ));
        }
        if probabilities.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument(
                "finite source probabilities must be nonnegative".into(),
            ));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "finite source probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            kind: SourceKind::Finite { probabilities },
        })
    }

    /// Exactly `n` photons in every pulse.
    pub fn fock(n: usize) -> Self {
        let mut probabilities = vec![0.0; n + 1];
        probabilities[n] = 1.0;
        Self {
            kind: SourceKind::Finite { probabilities },
        }
    }

    pub fn vacuum() -> Self {
        Self::fock(0)
    }

    /// Convex combination of sources; weights must be nonnegative and sum
    /// to one within [`PROBABILITY_SUM_TOL`].
    pub fn mixture(components: Vec<(f64, PhotonSource)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "mixture needs at least one component".into(),
            ));
        }
        if components.iter().any(|(w, _)| !(w >= &0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "mixture weights must be nonnegative".into(),
            ));
        }
        let sum: f64 = components.iter().map(|(w, _)| w).sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            kind: SourceKind::Mixture { components },
        })
    }

    pub(crate) fn kind(&self) -> &SourceKind {
        &self.kind
    }

    /// Probability of finding exactly `n` photons in a pulse.
    pub fn probability(&self, n: usize) -> f64 {
        match &self.kind {
            SourceKind::Poissonian { mean } => {
                let mut p = (-mean).exp();
                for k in 1..=n {
                    p *= mean / k as f64;
                }
                p
            }
            SourceKind::Thermal { mean } => {
                let ratio = mean / (mean + 1.0);
                powi_checked(ratio, n) / (mean + 1.0)
            }
            SourceKind::Finite { probabilities } => {
                probabilities.get(n).copied().unwrap_or(0.0)
            }
            SourceKind::Mixture { components } => components
                .iter()
                .map(|(w, s)| w * s.probability(n))
                .sum(),
        }
    }

    /// Probability generating function `G(x) = sum_n p_n x^n`, evaluated for
    /// `x` in `[0, 1]` (the only range the coincidence model needs).
    pub fn pgf(&self, x: f64) -> f64 {
        match &self.kind {
            SourceKind::Poissonian { mean } => (mean * (x - 1.0)).exp(),
            SourceKind::Thermal { mean } => 1.0 / (1.0 + mean * (1.0 - x)),
            SourceKind::Finite { probabilities } => {
                let mut acc = 0.0;
                for &p in probabilities.iter().rev() {
                    acc = acc * x + p;
                }
                acc
            }
            SourceKind::Mixture { components } => {
                components.iter().map(|(w, s)| w * s.pgf(x)).sum()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            SourceKind::Poissonian { mean } | SourceKind::Thermal { mean } => *mean,
            SourceKind::Finite { probabilities } => probabilities
                .iter()
                .enumerate()
                .map(|(n, p)| n as f64 * p)
                .sum(),
            SourceKind::Mixture { components } => {
                components.iter().map(|(w, s)| w * s.mean()).sum()
            }
        }
    }

    /// Factorial moment `<n (n-1) ... (n-order+1)>`; order 0 gives 1.
    pub fn factorial_moment(&self, order: usize) -> Result<f64> {
        let value = self.factorial_moment_inner(order);
        if !value.is_finite() {
            return Err(Error::UnsupportedSource(format!(
                "factorial moment of order {order} is not finite"
            )));
        }
        Ok(value)
    }

    fn factorial_moment_inner(&self, order: usize) -> f64 {
        match &self.kind {
            SourceKind::Poissonian { mean } => powi_checked(*mean, order),
            SourceKind::Thermal { mean } => {
                let mut acc = 1.0;
                for k in 1..=order {
                    acc *= k as f64 * mean;
                }
                acc
            }
            SourceKind::Finite { probabilities } => {
                let mut acc = 0.0;
                for (n, &p) in probabilities.iter().enumerate().skip(order) {
                    let mut falling = 1.0;
                    for k in 0..order {
                        falling *= (n - k) as f64;
                    }
                    acc += falling * p;
                }
                acc
            }
            SourceKind::Mixture { components } => components
                .iter()
                .map(|(w, s)| w * s.factorial_moment_inner(order))
                .sum(),
        }
    }

    /// Factorial moment normalized by the mean: `<(n)_order> / <n>^order`,
    /// i.e. the zero-delay correlation of the given order.  Equals 1 for
    /// poissonian light and `order!` for thermal light.
    pub fn normalized_factorial_moment(&self, order: usize) -> Result<f64> {
        if order == 0 {
            return Err(Error::InvalidArgument(
                "normalized moment order must be at least 1".into(),
            ));
        }
        let mean = self.mean();
        if mean <= 0.0 {
            return Err(Error::UnsupportedSource(
                "normalized moments are undefined for a zero-mean source".into(),
            ));
        }
        let fm = self.factorial_moment(order)?;
        let scale = powi_checked(mean, order);
        let value = fm / scale;
        if !value.is_finite() {
            return Err(Error::UnsupportedSource(format!(
                "normalized moment of order {order} is not finite"
            )));
        }
        Ok(value)
    }
}

fn powi_checked(base: f64, exp: usize) -> f64 {
    // powi takes i32; photon numbers beyond that are out of scope anyway
    debug_assert!(exp <= i32::MAX as usize);
    base.powi(exp as i32)
}

/// Averaged fold probabilities with the conventional leading 1 at entry 0.
#[derive(Clone, Debug, PartialEq)]
pub struct CoincidenceVector {
    entries: Vec<f64>,
}

impl CoincidenceVector {
    /// Adopts `entries[r]` as the averaged `r`-fold coincidence probability;
    /// entry 0 must be exactly 1 and every entry must lie in `[0, 1]`.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::InvalidArgument(
                "a coincidence vector needs at least the 0- and 1-fold entries".into(),
            ));
        }
        if entries[0] != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "entry 0 must be exactly 1, got {}",
                entries[0]
            )));
        }
        if let Some(bad) = entries.iter().find(|&&e| !(0.0..=1.0).contains(&e)) {
            return Err(Error::InvalidArgument(format!(
                "fold probabilities must lie in [0, 1], got {bad}"
            )));
        }
        Ok(Self { entries })
    }

    /// Builds the vector from the fold probabilities `r = 1..=D`, adding the
    /// leading 1.
    pub fn from_folds(folds: &[f64]) -> Result<Self> {
        let mut entries = Vec::with_capacity(folds.len() + 1);
        entries.push(1.0);
        entries.extend_from_slice(folds);
        Self::new(entries)
    }

    /// Number of folds `D` (entries beyond the leading 1).
    pub fn folds(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn entry(&self, r: usize) -> f64 {
        self.entries[r]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Model-generated vectors decay with the fold order; measured ones may
    /// not, which is worth surfacing before attempting bounds.
    pub fn is_nonincreasing(&self) -> bool {
        self.entries[1..].windows(2).all(|w| w[1] <= w[0])
    }
}

/// Probability that every detector of `subset` clicks when exactly
/// `photons` photons enter the splitter: inclusion-exclusion over the
/// subsets of `subset`.
pub fn subset_coincidence(
    setup: &DetectorSetup,
    photons: usize,
    subset: &SubsetIndex,
) -> Result<f64> {
    if subset.detectors() != setup.detectors() {
        return Err(Error::InvalidArgument(format!(
            "subset refers to {} detectors, setup has {}",
            subset.detectors(),
            setup.detectors()
        )));
    }
    let n = i32::try_from(photons)
        .map_err(|_| Error::InvalidArgument(format!("photon number {photons} too large")))?;
    let target = subset.mask();
    let mut acc = 0.0;
    let mut sub = target;
    loop {
        let sign = if sub.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * (1.0 - setup.mask_eta_sum(sub)).powi(n);
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & target;
    }
    Ok(acc)
}

/// Shared engine for fold vectors: entry `r` is
/// `sum_j (-1)^j binom(D-j, r-j) T_j / binom(D, r)` with
/// `T_j = sum over size-j subsets of f(1 - subset efficiency sum)`.
/// Keeping the binomials as integer factors avoids extra roundings.
fn fold_vector(setup: &DetectorSetup, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let d = setup.detectors();
    let mut t = vec![0.0f64; d + 1];
    for mask in 0..(1u32 << d) {
        let j = mask.count_ones() as usize;
        t[j] += f(1.0 - setup.mask_eta_sum(mask));
    }
    let mut out = vec![0.0f64; d + 1];
    for (r, entry) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &tj) in t.iter().enumerate().take(r + 1) {
            let weight =
                num_integer::binomial((d - j) as u64, (r - j) as u64) as f64 * tj;
            acc += if j % 2 == 0 { weight } else { -weight };
        }
        *entry = acc / num_integer::binomial(d as u64, r as u64) as f64;
    }
    out
}

/// Averaged fold response of an exactly-`photons` input, entries
/// `r = 0..=D`.  Entries with `r > photons` are exactly zero: fewer photons
/// than folds can never fire the whole subset.
pub fn fold_response(setup: &DetectorSetup, photons: usize) -> Result<Vec<f64>> {
    let n = i32::try_from(photons)
        .map_err(|_| Error::InvalidArgument(format!("photon number {photons} too large")))?;
    let mut v = fold_vector(setup, |x| x.powi(n));
    for entry in v.iter_mut().skip(photons.saturating_add(1)) {
        *entry = 0.0;
    }
    Ok(v)
}

/// Exact twin of [`fold_response`] over the rational images of the
/// efficiencies.  Entries with `r > photons` cancel to literal zero, no
/// overwrite needed.
pub(crate) fn fold_response_exact(setup: &DetectorSetup, photons: usize) -> Vec<Rat> {
    let d = setup.detectors();
    let etas: Vec<Rat> = setup.efficiencies().iter().map(|&e| rat(e)).collect();
    let mut t = vec![Rat::zero(); d + 1];
    for mask in 0..(1u32 << d) {
        let j = mask.count_ones() as usize;
        let mut x = Rat::one();
        for (i, eta) in etas.iter().enumerate() {
            if mask & (1 << i) != 0 {
                x -= eta;
            }
        }
        t[j] += num_traits::pow(x, photons);
    }
    let mut out = Vec::with_capacity(d + 1);
    for r in 0..=d {
        let mut acc = Rat::zero();
        for (j, tj) in t.iter().enumerate().take(r + 1) {
            let weight =
                rat_int(num_integer::binomial((d - j) as u64, (r - j) as u64) as i64) * tj;
            acc += if j % 2 == 0 { weight } else { -weight };
        }
        out.push(acc / rat_int(num_integer::binomial(d as u64, r as u64) as i64));
    }
    out
}

/// Single entry of [`fold_response`].
pub fn fold_response_at(setup: &DetectorSetup, photons: usize, fold: usize) -> Result<f64> {
    if fold > setup.detectors() {
        return Err(Error::InvalidArgument(format!(
            "fold {fold} exceeds detector count {}",
            setup.detectors()
        )));
    }
    Ok(fold_response(setup, photons)?[fold])
}

/// Exact averaged coincidence vector of a source: photon-number sums
/// collapse into the generating function, `T_j`-terms become
/// `G(1 - subset efficiency sum)`.
pub fn predicted_coincidences(
    setup: &DetectorSetup,
    source: &PhotonSource,
) -> Result<CoincidenceVector> {
    let mut entries = predicted_entries(setup, source)?;
    entries[0] = 1.0; // G(1) = 1 by normalization; pin it against rounding
    for e in entries.iter_mut() {
        if *e < 0.0 {
            if *e < -PROBABILITY_SUM_TOL {
                return Err(Error::Inconsistency(format!(
                    "predicted fold probability {e} fell below zero"
                )));
            }
            *e = 0.0;
        } else if *e > 1.0 {
            if *e > 1.0 + PROBABILITY_SUM_TOL {
                return Err(Error::Inconsistency(format!(
                    "predicted fold probability {e} exceeded one"
                )));
            }
            *e = 1.0;
        }
    }
    CoincidenceVector::new(entries)
}

/// Largest finite-source support folded in exact rationals.  Few-photon
/// responses are tiny at small efficiency and the reciprocal rows divide
/// by the same powers of eta, so their error budget must be relative, not
/// absolute; exact folding with one final rounding guarantees that.  High
/// occupations saturate the detectors, where the float route is already
/// relatively accurate and exact powers would cost megabit integers.
const EXACT_FOLD_SUPPORT_CAP: usize = 64;

/// The generating-function route loses the structural zeros of bounded
/// distributions to cancellation noise, so finite sources go through the
/// per-photon-number responses instead (those zero `r > n` outright) and
/// mixtures combine their components.  Unbounded laws keep the closed
/// generating function: every entry is strictly positive there, so the
/// relative error stays at the epsilon level.
fn predicted_entries(setup: &DetectorSetup, source: &PhotonSource) -> Result<Vec<f64>> {
    match source.kind() {
        SourceKind::Finite { probabilities } if probabilities.len() <= EXACT_FOLD_SUPPORT_CAP => {
            let mut acc = vec![Rat::zero(); setup.detectors() + 1];
            for (n, &p) in probabilities.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let weight = rat(p);
                for (a, r) in acc.iter_mut().zip(fold_response_exact(setup, n)) {
                    *a += &weight * r;
                }
            }
            Ok(acc.iter().map(math::rat_to_f64).collect())
        }
        SourceKind::Finite { probabilities } => {
            let mut entries = vec![0.0f64; setup.detectors() + 1];
            for (n, &p) in probabilities.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let response = fold_response(setup, n)?;
                for (e, r) in entries.iter_mut().zip(&response) {
                    *e += p * r;
                }
            }
            Ok(entries)
        }
        SourceKind::Mixture { components } => {
            let mut entries = vec![0.0f64; setup.detectors() + 1];
            for (weight, component) in components {
                let part = predicted_entries(setup, component)?;
                for (e, p) in entries.iter_mut().zip(&part) {
                    *e += weight * p;
                }
            }
            Ok(entries)
        }
        SourceKind::Poissonian { .. } | SourceKind::Thermal { .. } => {
            Ok(fold_vector(setup, |x| source.pgf(x)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force reference: enumerate all (D+1)^n photon routings and add
    /// up the probability of those whose click set covers `target_mask`.
    fn routed_click_probability(etas: &[f64], photons: usize, target_mask: u32) -> f64 {
        let d = etas.len();
        let loss = 1.0 - etas.iter().sum::<f64>();
        let mut total = 0.0;
        let mut routing = vec![0usize; photons];
        loop {
            let mut p = 1.0;
            let mut clicks = 0u32;
            for &dest in &routing {
                if dest < d {
                    p *= etas[dest];
                    clicks |= 1 << dest;
                } else {
                    p *= loss;
                }
            }
            if clicks & target_mask == target_mask {
                total += p;
            }
            // mixed-radix increment over D+1 destinations per photon
            let mut k = 0;
            loop {
                if k == photons {
                    return total;
                }
                routing[k] += 1;
                if routing[k] <= d {
                    break;
                }
                routing[k] = 0;
                k += 1;
            }
        }
    }

    #[test]
    fn validation_catches_each_rule() {
        assert!(validate_efficiencies(&[0.025; 4]).is_valid());
        assert!(validate_efficiencies(&[0.2, 0.3]).is_valid());

        let r = validate_efficiencies(&[0.6, 0.5]);
        assert!(r
            .violations()
            .iter()
            .any(|v| matches!(v, Violation::TotalEfficiencyNotBelowOne { .. })));

        let r = validate_efficiencies(&[0.30, 0.02, 0.02]);
        assert!(r
            .violations()
            .iter()
            .any(|v| matches!(v, Violation::SizeOrderingViolated { size: 1, .. })));

        let r = validate_efficiencies(&[0.0, 0.5]);
        assert!(r
            .violations()
            .iter()
            .any(|v| matches!(v, Violation::EfficiencyOutOfRange { detector: 1, .. })));
        assert!(!validate_efficiencies(&[f64::NAN]).is_valid());
        assert!(!validate_efficiencies(&[]).is_valid());

        // larger sizes can violate the ordering on their own
        let r = validate_efficiencies(&[0.1, 0.1, 0.06, 0.06, 0.06]);
        assert!(!r.is_valid());
        assert!(r.violations().iter().all(|v| matches!(
            v,
            Violation::SizeOrderingViolated { size: 2, .. }
        )));

        // near-degenerate but legal: the tiny middle efficiency still
        // keeps every partial ordering strict
        assert!(DetectorSetup::new(vec![0.3, 0.000001, 0.3]).is_ok());
    }

    #[test]
    fn subset_coincidence_matches_routing_enumeration() {
        let setup = DetectorSetup::new(vec![0.2, 0.3]).unwrap();
        for n in 0..=5 {
            for mask in 0..4u32 {
                let w = SubsetIndex::from_mask(2, mask).unwrap();
                let fast = subset_coincidence(&setup, n, &w).unwrap();
                let brute = routed_click_probability(&[0.2, 0.3], n, mask);
                assert!(
                    (fast - brute).abs() < 1e-12,
                    "n={n} mask={mask}: {fast} vs {brute}"
                );
            }
        }
        let etas = [0.04, 0.05, 0.06];
        let setup = DetectorSetup::new(etas.to_vec()).unwrap();
        for n in 0..=4 {
            for mask in 0..8u32 {
                let w = SubsetIndex::from_mask(3, mask).unwrap();
                let fast = subset_coincidence(&setup, n, &w).unwrap();
                let brute = routed_click_probability(&etas, n, mask);
                assert!(
                    (fast - brute).abs() < 1e-12,
                    "n={n} mask={mask}: {fast} vs {brute}"
                );
            }
        }
    }

    #[test]
    fn subset_coincidence_known_values() {
        let setup = DetectorSetup::new(vec![0.2, 0.3]).unwrap();
        let both = SubsetIndex::new(2, &[1, 2]).unwrap();
        // two photons onto two detectors: 2! * 0.2 * 0.3
        let v = subset_coincidence(&setup, 2, &both).unwrap();
        assert!((v - 0.12).abs() < 1e-15);
        assert_eq!(subset_coincidence(&setup, 0, &both).unwrap(), 0.0);
        let first = SubsetIndex::new(2, &[1]).unwrap();
        assert!((subset_coincidence(&setup, 1, &first).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn fold_response_structure() {
        let setup = DetectorSetup::uniform(4, 0.025).unwrap();
        for n in 0..=4 {
            let row = fold_response(&setup, n).unwrap();
            assert_eq!(row[0], 1.0);
            for r in n + 1..=4 {
                assert_eq!(row[r], 0.0, "r={r} beyond n={n} must vanish exactly");
            }
        }
        // diagonal entries: r! eta^r for uniform setups
        for r in 1..=4usize {
            let row = fold_response(&setup, r).unwrap();
            let factorial: f64 = (1..=r).map(|k| k as f64).product();
            let expect = factorial * 0.025f64.powi(r as i32);
            assert!((row[r] - expect).abs() < 1e-15, "r={r}");
            assert!((setup.diagonal_response(r).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn fold_response_averages_subsets() {
        let etas = [0.04, 0.05, 0.06];
        let setup = DetectorSetup::new(etas.to_vec()).unwrap();
        for n in 0..=5 {
            let row = fold_response(&setup, n).unwrap();
            for r in 0..=3 {
                let subsets = math::subsets_of_size(3, r).unwrap();
                let mean = subsets
                    .iter()
                    .map(|w| subset_coincidence(&setup, n, w).unwrap())
                    .sum::<f64>()
                    / subsets.len() as f64;
                let expect = if r > n { 0.0 } else { mean };
                assert!((row[r] - expect).abs() < 1e-13, "n={n} r={r}");
            }
        }
        let mixed = DetectorSetup::new(vec![0.2, 0.3]).unwrap();
        assert!((fold_response_at(&mixed, 2, 2).unwrap() - 0.12).abs() < 1e-15);
    }

    #[test]
    fn predicted_coincidences_match_truncated_sums() {
        let cases = vec![
            (
                DetectorSetup::uniform(4, 0.025).unwrap(),
                PhotonSource::poissonian(0.5).unwrap(),
            ),
            (
                DetectorSetup::uniform(2, 0.1).unwrap(),
                PhotonSource::thermal(1.0).unwrap(),
            ),
            (
                DetectorSetup::new(vec![0.04, 0.05, 0.06]).unwrap(),
                PhotonSource::mixture(vec![
                    (0.3, PhotonSource::poissonian(0.8).unwrap()),
                    (0.7, PhotonSource::thermal(0.4).unwrap()),
                ])
                .unwrap(),
            ),
        ];
        for (setup, source) in cases {
            let d = setup.detectors();
            let predicted = predicted_coincidences(&setup, &source).unwrap();
            // truncated-sum reference: sum_n p_n * fold_response(n), cut at 200
            let mut reference = vec![0.0f64; d + 1];
            for n in 0..=200 {
                let p = source.probability(n);
                let row = fold_response(&setup, n).unwrap();
                for r in 0..=d {
                    reference[r] += p * row[r];
                }
            }
            for r in 0..=d {
                assert!(
                    (predicted.entry(r) - reference[r]).abs() < 1e-12,
                    "r={r}: {} vs {}",
                    predicted.entry(r),
                    reference[r]
                );
            }
        }
    }

    #[test]
    fn predicted_coincidences_known_values() {
        let setup = DetectorSetup::uniform(4, 0.025).unwrap();
        let source = PhotonSource::poissonian(0.5).unwrap();
        let c = predicted_coincidences(&setup, &source).unwrap();
        assert!((c.entry(1) - (1.0 - (-0.0125f64).exp())).abs() < 1e-15);
        assert!((c.entry(1) - 0.0124222).abs() < 1e-7);

        let setup = DetectorSetup::uniform(2, 0.1).unwrap();
        let source = PhotonSource::thermal(1.0).unwrap();
        let c = predicted_coincidences(&setup, &source).unwrap();
        assert!((c.entry(1) - (1.0 - 1.0 / 1.1)).abs() < 1e-15);

        let vac = predicted_coincidences(&setup, &PhotonSource::vacuum()).unwrap();
        assert_eq!(vac.entries(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn predicted_coincidences_decay_with_fold_order() {
        let setup = DetectorSetup::new(vec![0.02, 0.025, 0.03, 0.022]).unwrap();
        for source in [
            PhotonSource::poissonian(0.7).unwrap(),
            PhotonSource::thermal(0.9).unwrap(),
            PhotonSource::fock(3),
        ] {
            let c = predicted_coincidences(&setup, &source).unwrap();
            assert!(c.is_nonincreasing(), "{source:?}");
        }
    }

    #[test]
    fn source_moments() {
        let poi = PhotonSource::poissonian(0.5).unwrap();
        for r in 1..=5 {
            assert!((poi.factorial_moment(r).unwrap() - 0.5f64.powi(r as i32)).abs() < 1e-15);
            assert!((poi.normalized_factorial_moment(r).unwrap() - 1.0).abs() < 1e-12);
        }
        let th = PhotonSource::thermal(0.8).unwrap();
        assert!((th.factorial_moment(2).unwrap() - 2.0 * 0.64).abs() < 1e-15);
        let mut factorial = 1.0;
        for r in 1..=5usize {
            factorial *= r as f64;
            assert!(
                (th.normalized_factorial_moment(r).unwrap() - factorial).abs() < 1e-9,
                "r={r}"
            );
        }
        let single = PhotonSource::fock(1);
        assert_eq!(single.factorial_moment(2).unwrap(), 0.0);
        assert_eq!(single.normalized_factorial_moment(2).unwrap(), 0.0);
        assert!(PhotonSource::vacuum().normalized_factorial_moment(1).is_err());

        let mix = PhotonSource::mixture(vec![
            (0.25, PhotonSource::poissonian(0.4).unwrap()),
            (0.75, PhotonSource::thermal(0.2).unwrap()),
        ])
        .unwrap();
        let expect = 0.25 * 0.4f64.powi(2) + 0.75 * 2.0 * 0.04;
        assert!((mix.factorial_moment(2).unwrap() - expect).abs() < 1e-15);
        assert!((mix.mean() - (0.25 * 0.4 + 0.75 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn source_probabilities_normalize() {
        for source in [
            PhotonSource::poissonian(1.3).unwrap(),
            PhotonSource::thermal(0.6).unwrap(),
        ] {
            let total: f64 = (0..400).map(|n| source.probability(n)).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!((source.pgf(1.0) - 1.0).abs() < 1e-12);
        }
        assert!(PhotonSource::finite(vec![0.5, 0.4]).is_err());
        assert!(PhotonSource::finite(vec![0.5, -0.1, 0.6]).is_err());
        assert!(PhotonSource::poissonian(0.0).is_err());
        assert!(PhotonSource::mixture(vec![(0.5, PhotonSource::vacuum())]).is_err());
    }

    #[test]
    fn coincidence_vector_rules() {
        assert!(CoincidenceVector::new(vec![1.0, 0.2, 0.1]).is_ok());
        assert!(CoincidenceVector::new(vec![0.9, 0.2]).is_err());
        assert!(CoincidenceVector::new(vec![1.0]).is_err());
        assert!(CoincidenceVector::new(vec![1.0, 1.2]).is_err());
        assert!(CoincidenceVector::new(vec![1.0, -0.1]).is_err());
        let v = CoincidenceVector::from_folds(&[0.3, 0.1, 0.2]).unwrap();
        assert_eq!(v.folds(), 3);
        assert!(!v.is_nonincreasing());
    }
}
