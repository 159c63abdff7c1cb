//! Rigorous photon-number bounds from an observed coincidence vector.
//!
//! The averaged fold responses of 0..=D photons form an upper-triangular
//! matrix; its rows of reciprocal (dual) vectors turn an observed
//! coincidence vector into linear estimates of each photon-number
//! probability.  Truncating the photon ladder at D photons underestimates
//! high occupations, replacing the last response column with the
//! saturated (all folds fire) column overestimates them; which side each
//! estimate errs on alternates with D - n, and pairing the two families
//! accordingly yields certified lower and upper bounds for p_0 ..
//! p_{D-1} and for the aggregated tail p_{>=D}.
//!
//! The response matrices are badly conditioned at realistic efficiencies
//! (the diagonal decays like eta^r), so the rows are built and applied in
//! exact rational arithmetic; every reported value is rounded exactly
//! once, at the end.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::coincidence::{
    fold_response, fold_response_exact, predicted_coincidences, CoincidenceVector, DetectorSetup,
    PhotonSource,
};
use crate::math::{rat, rat_to_f64, Rat};
use crate::{Error, Result};
use num_traits::{One, Signed, Zero};

/// Largest acceptable deviation of reciprocal-row dot products from the
/// identity pattern.
pub const BIORTHOGONALITY_TOL: f64 = 1e-10;

/// Which response family a bound value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    /// Photon ladder truncated at D photons.
    Finite,
    /// Last response column replaced by the saturated column of ones.
    Saturating,
}

impl BasisKind {
    pub fn label(self) -> &'static str {
        match self {
            BasisKind::Finite => "finite",
            BasisKind::Saturating => "saturating",
        }
    }
}

/// Two-sided bound on one photon-number probability.
#[derive(Clone, Copy, Debug)]
pub struct PhotonBound {
    /// Linear estimates exactly as produced by the reciprocal rows.
    pub raw_lower: f64,
    pub raw_upper: f64,
    /// Raw values clipped to the probability range: lower to at least 0,
    /// upper to at most 1.
    pub lower: f64,
    pub upper: f64,
    pub lower_basis: BasisKind,
    pub upper_basis: BasisKind,
}

impl PhotonBound {
    pub(crate) fn from_raw(
        raw_lower: f64,
        lower_basis: BasisKind,
        raw_upper: f64,
        upper_basis: BasisKind,
    ) -> Self {
        PhotonBound {
            raw_lower,
            raw_upper,
            lower: raw_lower.max(0.0),
            upper: raw_upper.min(1.0),
            lower_basis,
            upper_basis,
        }
    }
}

/// Reciprocal rows of both response families for a fixed setup.  The
/// exact rows drive every computation; the `f64` views exist for display
/// and for callers that want to inspect the coefficients.
#[derive(Clone, Debug)]
pub struct ReciprocalBasis {
    detectors: usize,
    finite_matrix: Vec<Vec<Rat>>,
    saturating_matrix: Vec<Vec<Rat>>,
    exact_finite: Vec<Vec<Rat>>,
    exact_saturating: Vec<Vec<Rat>>,
    rows_finite: Vec<Vec<f64>>,
    rows_saturating: Vec<Vec<f64>>,
    residual: OnceLock<f64>,
}

/// Distinct setups the process-wide basis memo keeps before starting over.
const BASIS_CACHE_CAP: usize = 512;

fn basis_cache() -> &'static Mutex<HashMap<Vec<u64>, Arc<ReciprocalBasis>>> {
    static CACHE: OnceLock<Mutex<HashMap<Vec<u64>, Arc<ReciprocalBasis>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl ReciprocalBasis {
    pub fn for_setup(setup: &DetectorSetup) -> Result<Self> {
        let d = setup.detectors();
        let mut finite = vec![vec![Rat::zero(); d + 1]; d + 1];
        for n in 0..=d {
            let col = fold_response_exact(setup, n);
            for (r, entry) in col.into_iter().enumerate() {
                finite[r][n] = entry;
            }
        }
        let mut saturating = finite.clone();
        for row in saturating.iter_mut() {
            row[d] = Rat::one();
        }

        let exact_finite = invert_upper_triangular(&finite)?;
        let exact_saturating = invert_upper_triangular(&saturating)?;
        let round_rows = |rows: &[Vec<Rat>]| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|row| row.iter().map(rat_to_f64).collect())
                .collect()
        };
        let rows_finite = round_rows(&exact_finite);
        let rows_saturating = round_rows(&exact_saturating);
        Ok(ReciprocalBasis {
            detectors: d,
            finite_matrix: finite,
            saturating_matrix: saturating,
            exact_finite,
            exact_saturating,
            rows_finite,
            rows_saturating,
            residual: OnceLock::new(),
        })
    }

    /// Memoized construction, process-wide, keyed by the exact efficiency
    /// bit patterns.  Efficiency-box scans and intensity optimizers revisit
    /// the same setups thousands of times; the rows are immutable, so
    /// sharing them is free.
    pub fn shared(setup: &DetectorSetup) -> Result<Arc<Self>> {
        let key: Vec<u64> = setup.efficiencies().iter().map(|e| e.to_bits()).collect();
        if let Some(hit) = basis_cache().lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let built = Arc::new(ReciprocalBasis::for_setup(setup)?);
        let mut cache = basis_cache().lock().unwrap();
        if cache.len() >= BASIS_CACHE_CAP {
            cache.clear();
        }
        cache.insert(key, built.clone());
        Ok(built)
    }

    pub fn detectors(&self) -> usize {
        self.detectors
    }

    /// Row dual to the n-photon response column of the truncated family.
    pub fn finite_row(&self, n: usize) -> &[f64] {
        &self.rows_finite[n]
    }

    /// Row dual to the n-photon column of the saturated family; row D is
    /// dual to the column of ones.
    pub fn saturating_row(&self, n: usize) -> &[f64] {
        &self.rows_saturating[n]
    }

    /// Worst biorthogonality deviation of the rows against their response
    /// matrices, computed in the same exact arithmetic that produced them.
    /// A correct inversion yields literal zero; anything else means a
    /// broken build.  Evaluated once per basis, on first request.
    pub fn residual(&self) -> f64 {
        *self.residual.get_or_init(|| {
            let f = biorthogonality_residual(&self.exact_finite, &self.finite_matrix);
            let s = biorthogonality_residual(&self.exact_saturating, &self.saturating_matrix);
            f.1.max(s.1)
        })
    }

    pub(crate) fn exact_finite_rows(&self) -> &[Vec<Rat>] {
        &self.exact_finite
    }

    pub(crate) fn exact_saturating_rows(&self) -> &[Vec<Rat>] {
        &self.exact_saturating
    }

    /// Contracts an observed coincidence vector against every reciprocal
    /// row and routes the two families into lower/upper bounds.  The dot
    /// products run in exact arithmetic on the rational images of the
    /// observed entries, so each reported value carries a single rounding.
    pub fn apply(&self, observed: &CoincidenceVector) -> Result<BoundsResult> {
        let d = self.detectors;
        if observed.folds() != d {
            return Err(Error::InvalidArgument(format!(
                "coincidence vector has {} folds, setup has {} detectors",
                observed.folds(),
                d
            )));
        }
        let c: Vec<Rat> = observed.entries().iter().map(|&e| rat(e)).collect();
        let finite_values: Vec<f64> = self
            .exact_finite
            .iter()
            .map(|row| rat_to_f64(&dot_exact(row, &c)))
            .collect();
        let saturating_values: Vec<f64> = self
            .exact_saturating
            .iter()
            .map(|row| rat_to_f64(&dot_exact(row, &c)))
            .collect();

        let mut bounds = Vec::with_capacity(d);
        for n in 0..d {
            // truncation inflates the estimate when D - n is even and
            // deflates it when odd; the saturated family errs oppositely
            let bound = if (d - n) % 2 == 0 {
                PhotonBound::from_raw(
                    saturating_values[n],
                    BasisKind::Saturating,
                    finite_values[n],
                    BasisKind::Finite,
                )
            } else {
                PhotonBound::from_raw(
                    finite_values[n],
                    BasisKind::Finite,
                    saturating_values[n],
                    BasisKind::Saturating,
                )
            };
            bounds.push(bound);
        }
        let tail = PhotonBound::from_raw(
            saturating_values[d],
            BasisKind::Saturating,
            finite_values[d],
            BasisKind::Finite,
        );
        Ok(BoundsResult {
            detectors: d,
            bounds,
            tail,
            finite_values,
            saturating_values,
            residual: self.residual(),
        })
    }

    /// Pairs the response of an exactly-`photons` input with every
    /// reciprocal row of both families, in exact arithmetic.  For
    /// `photons <= D` the finite pairings reproduce the identity pattern;
    /// beyond that they expose how each family miscounts: the finite
    /// product at row n carries the sign of (-1)^(D-n), the saturated one
    /// flips sign one order lower and its last row stays within [0, 1].
    pub fn pair_with_response(
        &self,
        setup: &DetectorSetup,
        photons: usize,
    ) -> Result<ResponsePairings> {
        if setup.detectors() != self.detectors {
            return Err(Error::InvalidArgument(format!(
                "setup has {} detectors, basis was built for {}",
                setup.detectors(),
                self.detectors
            )));
        }
        let col = fold_response_exact(setup, photons);
        let pair = |rows: &[Vec<Rat>]| -> Vec<f64> {
            rows.iter().map(|row| rat_to_f64(&dot_exact(row, &col))).collect()
        };
        Ok(ResponsePairings {
            photons,
            finite: pair(&self.exact_finite),
            saturating: pair(&self.exact_saturating),
        })
    }
}

/// Products of one photon-number response with the reciprocal rows,
/// indices 0..=D.  Rounded once from exact values, so signs and
/// comparisons against 0 and 1 are trustworthy.
#[derive(Clone, Debug)]
pub struct ResponsePairings {
    pub photons: usize,
    pub finite: Vec<f64>,
    pub saturating: Vec<f64>,
}

/// Bounds on p_0 .. p_{D-1} and the tail p_{>=D}.
#[derive(Clone, Debug)]
pub struct BoundsResult {
    detectors: usize,
    bounds: Vec<PhotonBound>,
    tail: PhotonBound,
    finite_values: Vec<f64>,
    saturating_values: Vec<f64>,
    residual: f64,
}

impl BoundsResult {
    pub fn detectors(&self) -> usize {
        self.detectors
    }

    /// Bound on the probability of exactly `n` photons, `n < D`.
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

    /// Bound on the aggregated probability of D or more photons.
    pub fn tail(&self) -> &PhotonBound {
        &self.tail
    }

    /// Raw linear estimates of the truncated family, indices 0..=D.
    /// Their exact values sum to exactly 1; each reported entry is rounded
    /// once, so the float sum drifts by at most a few ulps of the largest
    /// entry.
    pub fn finite_values(&self) -> &[f64] {
        &self.finite_values
    }

    /// Raw linear estimates of the saturated family, indices 0..=D.
    pub fn saturating_values(&self) -> &[f64] {
        &self.saturating_values
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }
}

/// One-call path from setup and observation to bounds.
pub fn photon_number_bounds(
    setup: &DetectorSetup,
    observed: &CoincidenceVector,
) -> Result<BoundsResult> {
    ReciprocalBasis::shared(setup)?.apply(observed)
}

/// Reciprocal rows recomputed in plain floating point.  Back substitution
/// is backward stable, so the rows carry epsilon-level relative error;
/// that is plenty for ranking candidate setups inside an efficiency-box
/// scan, and the winners get re-certified with the exact rows afterwards.
pub(crate) struct ScanRows {
    pub(crate) finite: Vec<Vec<f64>>,
    pub(crate) saturating: Vec<Vec<f64>>,
}

pub(crate) fn scan_rows(setup: &DetectorSetup) -> Result<ScanRows> {
    let d = setup.detectors();
    let mut finite = vec![vec![0.0f64; d + 1]; d + 1];
    for n in 0..=d {
        let col = fold_response(setup, n)?;
        for (r, entry) in col.into_iter().enumerate() {
            finite[r][n] = entry;
        }
    }
    let mut saturating = finite.clone();
    for row in saturating.iter_mut() {
        row[d] = 1.0;
    }
    Ok(ScanRows {
        finite: invert_upper_triangular_f64(&finite)?,
        saturating: invert_upper_triangular_f64(&saturating)?,
    })
}

fn invert_upper_triangular_f64(u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let m = u.len();
    for (r, row) in u.iter().enumerate() {
        if !(row[r] > 0.0) {
            return Err(Error::Conditioning {
                row: r,
                residual: f64::INFINITY,
                tolerance: BIORTHOGONALITY_TOL,
            });
        }
    }
    let mut inv = vec![vec![0.0f64; m]; m];
    for k in 0..m {
        inv[k][k] = 1.0 / u[k][k];
        for i in (0..k).rev() {
            let mut acc = 0.0;
            for j in i + 1..=k {
                acc += u[i][j] * inv[j][k];
            }
            inv[i][k] = -acc / u[i][i];
        }
    }
    Ok(inv)
}

/// Exact dot product of a reciprocal row with a coincidence column.
pub(crate) fn dot_exact(row: &[Rat], column: &[Rat]) -> Rat {
    debug_assert_eq!(row.len(), column.len());
    row.iter().zip(column).map(|(a, b)| a * b).sum()
}

/// Inverts an upper-triangular rational matrix with positive diagonal by
/// back substitution, one column at a time.  No pivoting ever happens, so
/// the row order is preserved.
fn invert_upper_triangular(u: &[Vec<Rat>]) -> Result<Vec<Vec<Rat>>> {
    let m = u.len();
    for (r, row) in u.iter().enumerate() {
        if !row[r].is_positive() {
            return Err(Error::Conditioning {
                row: r,
                residual: f64::INFINITY,
                tolerance: BIORTHOGONALITY_TOL,
            });
        }
    }
    let mut inv = vec![vec![Rat::zero(); m]; m];
    for k in 0..m {
        inv[k][k] = Rat::one() / &u[k][k];
        for i in (0..k).rev() {
            let mut acc = Rat::zero();
            for j in i + 1..=k {
                acc += &u[i][j] * &inv[j][k];
            }
            inv[i][k] = -acc / &u[i][i];
        }
    }
    Ok(inv)
}

/// Worst deviation of inv * mat from the identity: (row index, |entry|).
fn biorthogonality_residual(inv: &[Vec<Rat>], mat: &[Vec<Rat>]) -> (usize, f64) {
    let m = mat.len();
    let mut worst = (0usize, Rat::zero());
    for (i, inv_row) in inv.iter().enumerate() {
        for j in 0..m {
            let mut acc = Rat::zero();
            for (k, mat_row) in mat.iter().enumerate() {
                acc += &inv_row[k] * &mat_row[j];
            }
            if i == j {
                acc -= Rat::one();
            }
            let dev = acc.abs();
            if dev > worst.1 {
                worst = (i, dev);
            }
        }
    }
    (worst.0, rat_to_f64(&worst.1))
}

/// What a single optimality condition compares.
#[derive(Clone, Debug)]
pub enum ConditionKind {
    /// p_photon must exceed a fixed multiple of a higher occupation.
    ProbabilityOrdering { photon: usize },
    /// The mean photon number must stay below a ratio of normalized
    /// factorial moments.
    MomentRatio,
}

/// One strict inequality required for the small-efficiency optimality of a
/// bound family.
#[derive(Clone, Debug)]
pub struct OptimalityCondition {
    pub kind: ConditionKind,
    pub basis: BasisKind,
    pub lhs: f64,
    pub rhs: f64,
    /// Positive iff the condition holds; NaN when a moment ratio is
    /// undefined for the source.
    pub margin: f64,
    pub satisfied: bool,
}

impl std::fmt::Display for OptimalityCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            ConditionKind::ProbabilityOrdering { photon } => write!(
                f,
                "[{}] p_{photon} = {:.6e} > {:.6e} (margin {:.3e})",
                self.basis.label(),
                self.lhs,
                self.rhs,
                self.margin
            ),
            ConditionKind::MomentRatio => write!(
                f,
                "[{}] mean {:.6e} < moment ratio {:.6e} (margin {:.3e})",
                self.basis.label(),
                self.lhs,
                self.rhs,
                self.margin
            ),
        }
    }
}

/// Small-efficiency optimality report for both bound families.
#[derive(Clone, Debug)]
pub struct OptimalityCertificate {
    pub conditions: Vec<OptimalityCondition>,
    pub satisfied: bool,
    /// Biorthogonality residual of the setup the certificate was issued for.
    pub residual: f64,
}

fn family_conditions(
    source: &PhotonSource,
    order: usize,
    basis: BasisKind,
    conditions: &mut Vec<OptimalityCondition>,
) -> Result<()> {
    if order < 2 {
        return Ok(());
    }
    // probability orderings: p_n must dominate binom(order,n)/order times
    // the occupation one below the truncation, stepping down in twos
    let reference = source.probability(order - 1);
    let mut n = order as isize - 3;
    while n >= 0 {
        let photon = n as usize;
        let lhs = source.probability(photon);
        let rhs = num_integer::binomial(order as u64, photon as u64) as f64 / order as f64
            * reference;
        let margin = lhs - rhs;
        conditions.push(OptimalityCondition {
            kind: ConditionKind::ProbabilityOrdering { photon },
            basis,
            lhs,
            rhs,
            margin,
            satisfied: margin > 0.0,
        });
        n -= 2;
    }
    // the mean must stay below the ratio of the two highest normalized
    // factorial moments the family resolves
    let mean = source.mean();
    let g_low = source.normalized_factorial_moment(order - 1)?;
    let g_high = source.normalized_factorial_moment(order)?;
    let ratio = g_low / g_high;
    let margin = ratio - mean;
    conditions.push(OptimalityCondition {
        kind: ConditionKind::MomentRatio,
        basis,
        lhs: mean,
        rhs: ratio,
        margin,
        satisfied: margin > 0.0 && ratio.is_finite(),
    });
    Ok(())
}

/// Checks the strict inequalities under which both bound families become
/// tight as the efficiencies shrink, for a source believed to feed the
/// setup.  The truncated family resolves D occupations, the saturated one
/// D - 1; each contributes its own probability orderings and moment
/// condition.
pub fn optimality_certificate(
    setup: &DetectorSetup,
    source: &PhotonSource,
) -> Result<OptimalityCertificate> {
    let d = setup.detectors();
    let basis = ReciprocalBasis::for_setup(setup)?;
    let mut conditions = Vec::new();
    family_conditions(source, d, BasisKind::Finite, &mut conditions)?;
    family_conditions(source, d - 1, BasisKind::Saturating, &mut conditions)?;
    let satisfied = !conditions.is_empty() && conditions.iter().all(|c| c.satisfied);
    Ok(OptimalityCertificate {
        conditions,
        satisfied,
        residual: basis.residual(),
    })
}

/// Estimate differences at one shared uniform efficiency, indexed by
/// photon number 0..D.
#[derive(Clone, Debug)]
pub struct ScalingSample {
    pub efficiency: f64,
    /// Truncated-family estimate of a (D-1)-detector setup minus the
    /// saturated-family estimate of the D-detector setup, per photon
    /// number.  Signs alternate; the magnitude is the quantity that
    /// shrinks with the efficiency.
    pub gaps: Vec<f64>,
}

/// How fast neighbouring detector counts converge on each other as the
/// shared efficiency shrinks.
#[derive(Clone, Debug)]
pub struct EtaScalingDiagnostic {
    pub detectors: usize,
    pub samples: Vec<ScalingSample>,
    /// Least-squares slope of log |gap| versus log efficiency per photon
    /// number; NaN when a gap vanishes or is otherwise unusable.  Slopes
    /// near 1 confirm the first-order convergence of the two ladders.
    pub exponents: Vec<f64>,
}

/// Compares, at each uniform efficiency, the truncated-family estimates
/// of a (D-1)-detector setup against the saturated-family estimates of a
/// D-detector setup, both fed the analytically predicted coincidences of
/// `source`.  The two ladders disagree only at first order in the
/// efficiency, so the fitted exponents hover around 1 once the
/// efficiency is small; a vacuum input makes every gap exactly zero.
pub fn eta_scaling_diagnostic(
    source: &PhotonSource,
    detectors: usize,
    efficiencies: &[f64],
) -> Result<EtaScalingDiagnostic> {
    if detectors < 2 {
        return Err(Error::InvalidArgument(
            "comparing neighbouring detector counts needs at least 2 detectors".into(),
        ));
    }
    if efficiencies.len() < 2 {
        return Err(Error::InvalidArgument(
            "at least two efficiencies are needed to fit an exponent".into(),
        ));
    }
    let mut samples = Vec::with_capacity(efficiencies.len());
    for &eta in efficiencies {
        let smaller = DetectorSetup::uniform(detectors - 1, eta)?;
        let full = DetectorSetup::uniform(detectors, eta)?;
        let truncated = photon_number_bounds(&smaller, &predicted_coincidences(&smaller, source)?)?;
        let saturated = photon_number_bounds(&full, &predicted_coincidences(&full, source)?)?;
        let gaps: Vec<f64> = (0..detectors)
            .map(|n| truncated.finite_values()[n] - saturated.saturating_values()[n])
            .collect();
        samples.push(ScalingSample {
            efficiency: eta,
            gaps,
        });
    }
    let mut exponents = Vec::with_capacity(detectors);
    for idx in 0..detectors {
        let points: Vec<(f64, f64)> = samples
            .iter()
            .filter(|s| s.gaps[idx] != 0.0 && s.gaps[idx].is_finite())
            .map(|s| (s.efficiency.ln(), s.gaps[idx].abs().ln()))
            .collect();
        if points.len() < 2 {
            exponents.push(f64::NAN);
            continue;
        }
        let n = points.len() as f64;
        let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
        let sxy: f64 = points
            .iter()
            .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
            .sum();
        exponents.push(if sxx > 0.0 { sxy / sxx } else { f64::NAN });
    }
    Ok(EtaScalingDiagnostic {
        detectors,
        samples,
        exponents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coincidence::{fold_response, PhotonSource};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nonuniform_setup() -> DetectorSetup {
        DetectorSetup::new(vec![0.02, 0.025, 0.03, 0.022]).unwrap()
    }

    #[test]
    fn reciprocal_rows_are_biorthogonal() {
        let setup = nonuniform_setup();
        let basis = ReciprocalBasis::for_setup(&setup).unwrap();
        // exact construction leaves no defect at all
        assert_eq!(basis.residual(), 0.0);
        let d = 4;
        for m in 0..=d {
            let pairing = basis.pair_with_response(&setup, m).unwrap();
            for n in 0..=d {
                let target = if n == m { 1.0 } else { 0.0 };
                assert_eq!(pairing.finite[n], target, "finite n={n} m={m}");
                // the saturated family shares columns 0..D-1 and swaps the
                // last one for all-ones
                if m < d {
                    assert_eq!(pairing.saturating[n], target, "saturating n={n} m={m}");
                }
            }
        }
        for n in 0..=d {
            let ones_dot: Rat = basis.exact_saturating_rows()[n].iter().cloned().sum();
            let target = if n == d { Rat::one() } else { Rat::zero() };
            assert_eq!(ones_dot, target, "saturating ones column n={n}");
        }
        // the rounded row views satisfy the identities up to representation
        // noise; both the row rounding and the column's cancellation error
        // are amplified by the row's L1 norm
        for n in 0..=d {
            let row_l1: f64 = basis.finite_row(n).iter().map(|a| a.abs()).sum();
            let slack = row_l1 * 256.0 * f64::EPSILON + 1e-15;
            for m in 0..=d {
                let col = fold_response(&setup, m).unwrap();
                let dot: f64 = basis
                    .finite_row(n)
                    .iter()
                    .zip(&col)
                    .map(|(a, b)| a * b)
                    .sum();
                let target = if n == m { 1.0 } else { 0.0 };
                assert!(
                    (dot - target).abs() <= slack,
                    "rounded finite n={n} m={m}: {dot}"
                );
            }
        }
    }

    #[test]
    fn bounds_sandwich_known_sources() {
        let setups = vec![
            DetectorSetup::uniform(4, 0.025).unwrap(),
            nonuniform_setup(),
            DetectorSetup::new(vec![0.1, 0.12]).unwrap(),
        ];
        let sources = vec![
            PhotonSource::poissonian(0.5).unwrap(),
            PhotonSource::thermal(0.3).unwrap(),
            PhotonSource::fock(2),
            PhotonSource::mixture(vec![
                (0.4, PhotonSource::poissonian(0.2).unwrap()),
                (0.6, PhotonSource::fock(1)),
            ])
            .unwrap(),
        ];
        for setup in &setups {
            let d = setup.detectors();
            for source in &sources {
                let observed = predicted_coincidences(setup, source).unwrap();
                let result = photon_number_bounds(setup, &observed).unwrap();
                let mut below = 0.0;
                for n in 0..d {
                    let p = source.probability(n);
                    below += p;
                    let b = result.bound(n).unwrap();
                    assert!(
                        b.raw_lower <= p + 1e-12 && p <= b.raw_upper + 1e-12,
                        "n={n} p={p} not in [{}, {}]",
                        b.raw_lower,
                        b.raw_upper
                    );
                    assert!(b.lower >= 0.0 && b.upper <= 1.0);
                }
                let tail = 1.0 - below;
                let t = result.tail();
                assert!(
                    t.raw_lower <= tail + 1e-12 && tail <= t.raw_upper + 1e-12,
                    "tail {tail} not in [{}, {}]",
                    t.raw_lower,
                    t.raw_upper
                );
            }
        }
    }

    #[test]
    fn raw_family_values_sum_to_one() {
        let setup = nonuniform_setup();
        let basis = ReciprocalBasis::for_setup(&setup).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let folds: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let observed = CoincidenceVector::from_folds(&folds).unwrap();

            // the exact identity: both value vectors reduce to literal 1
            let c: Vec<Rat> = observed.entries().iter().map(|&e| rat(e)).collect();
            for rows in [basis.exact_finite_rows(), basis.exact_saturating_rows()] {
                let total: Rat = rows.iter().map(|row| dot_exact(row, &c)).sum();
                assert_eq!(total, Rat::one());
            }

            // arbitrary folds drive individual values to magnitudes around
            // 1e5, so the reported entries can only satisfy the identity up
            // to their own representation noise
            let result = basis.apply(&observed).unwrap();
            for values in [result.finite_values(), result.saturating_values()] {
                let sum: Rat = values.iter().map(|&v| rat(v)).sum();
                let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let slack = (values.len() as f64) * f64::EPSILON * max_abs.max(1.0);
                let defect = rat_to_f64(&(sum - Rat::one())).abs();
                assert!(defect <= slack, "sum defect {defect} vs slack {slack}");
            }
        }

        // physically shaped observations decay roughly a decade per fold,
        // keeping the values small enough that the plain float sum lands
        // within the documented tolerance
        for _ in 0..50 {
            let mut folds = Vec::with_capacity(4);
            let mut level = 1.0;
            for _ in 0..4 {
                level *= 0.1 * rng.random::<f64>();
                folds.push(level);
            }
            let observed = CoincidenceVector::from_folds(&folds).unwrap();
            let result = basis.apply(&observed).unwrap();
            let sum_f: f64 = result.finite_values().iter().sum();
            let sum_s: f64 = result.saturating_values().iter().sum();
            assert!((sum_f - 1.0).abs() < 1e-10, "finite sum {sum_f}");
            assert!((sum_s - 1.0).abs() < 1e-10, "saturating sum {sum_s}");
        }
    }

    #[test]
    fn degenerate_observations_pin_the_bounds() {
        let setup = DetectorSetup::uniform(3, 0.04).unwrap();
        // vacuum: both families must report pure zero photons
        let vac = predicted_coincidences(&setup, &PhotonSource::vacuum()).unwrap();
        let result = photon_number_bounds(&setup, &vac).unwrap();
        let b0 = result.bound(0).unwrap();
        assert!((b0.lower - 1.0).abs() < 1e-12 && (b0.upper - 1.0).abs() < 1e-12);
        for n in 1..3 {
            let b = result.bound(n).unwrap();
            assert!(b.lower.abs() < 1e-12 && b.upper.abs() < 1e-12);
        }
        assert!(result.tail().upper.abs() < 1e-12);

        // saturated clicks: the tail is certainly everything
        let ones = CoincidenceVector::new(vec![1.0; 4]).unwrap();
        let result = photon_number_bounds(&setup, &ones).unwrap();
        assert!((result.tail().lower - 1.0).abs() < 1e-12);
        assert!((result.tail().upper - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parity_routes_the_families() {
        let setup = DetectorSetup::uniform(4, 0.025).unwrap();
        let observed =
            predicted_coincidences(&setup, &PhotonSource::poissonian(0.4).unwrap()).unwrap();
        let result = photon_number_bounds(&setup, &observed).unwrap();
        // D - n even: truncation overshoots, so the finite family is the
        // upper side
        assert_eq!(result.bound(0).unwrap().upper_basis, BasisKind::Finite);
        assert_eq!(result.bound(1).unwrap().upper_basis, BasisKind::Saturating);
        assert_eq!(result.bound(2).unwrap().upper_basis, BasisKind::Finite);
        assert_eq!(result.bound(3).unwrap().upper_basis, BasisKind::Saturating);
        assert_eq!(result.tail().upper_basis, BasisKind::Finite);
        assert_eq!(result.tail().lower_basis, BasisKind::Saturating);
    }

    #[test]
    fn certificate_accepts_weak_sources_and_rejects_bright_ones() {
        let setup = DetectorSetup::uniform(4, 0.025).unwrap();
        for mean in [0.3, 0.9] {
            let source = PhotonSource::poissonian(mean).unwrap();
            let cert = optimality_certificate(&setup, &source).unwrap();
            assert!(cert.satisfied, "poissonian mean {mean}: {:#?}", cert.conditions);
            assert!(cert.residual <= BIORTHOGONALITY_TOL);
        }
        let thermal = PhotonSource::thermal(0.2).unwrap();
        assert!(optimality_certificate(&setup, &thermal).unwrap().satisfied);

        let bright = PhotonSource::poissonian(1.5).unwrap();
        let cert = optimality_certificate(&setup, &bright).unwrap();
        assert!(!cert.satisfied);
        let moment_failures: Vec<_> = cert
            .conditions
            .iter()
            .filter(|c| matches!(c.kind, ConditionKind::MomentRatio) && !c.satisfied)
            .collect();
        assert!(!moment_failures.is_empty());

        // thermal beyond 1/D trips the moment ratio as well
        let warm = PhotonSource::thermal(0.3).unwrap();
        assert!(!optimality_certificate(&setup, &warm).unwrap().satisfied);
    }

    #[test]
    fn neighbouring_ladders_close_at_first_order() {
        let source = PhotonSource::poissonian(0.2).unwrap();
        let diag = eta_scaling_diagnostic(&source, 4, &[0.025, 0.0125]).unwrap();
        assert_eq!(diag.samples.len(), 2);
        assert_eq!(diag.exponents.len(), 4);
        // pinned by an independent 60-digit evaluation of both ladders
        let expected = [
            (
                0.025,
                [
                    -5.655064456861e-6,
                    1.786634873448e-5,
                    -1.881102522033e-5,
                    6.60035972643e-6,
                ],
            ),
            (
                0.0125,
                [
                    -3.073620070517e-6,
                    9.45832899708e-6,
                    -9.701381777729e-6,
                    3.316711718882e-6,
                ],
            ),
        ];
        for (sample, (eta, gaps)) in diag.samples.iter().zip(&expected) {
            assert_eq!(sample.efficiency, *eta);
            for (n, (&got, &want)) in sample.gaps.iter().zip(gaps).enumerate() {
                assert!(
                    (got - want).abs() <= 1e-6 * want.abs(),
                    "eta={eta} n={n}: got {got}, want {want}"
                );
            }
        }
        // the single-photon gap halves within ten percent when the
        // efficiency halves; lower photon numbers approach slope 1 from
        // below as the efficiency shrinks
        assert!(
            (0.9..=1.1).contains(&diag.exponents[1]),
            "exponent {}",
            diag.exponents[1]
        );
        for (n, &e) in diag.exponents.iter().enumerate() {
            assert!(e.is_finite() && (0.85..=1.05).contains(&e), "n={n}: {e}");
        }

        // a vacuum input is counted identically by both ladders
        let vac = eta_scaling_diagnostic(&PhotonSource::vacuum(), 4, &[0.025, 0.0125]).unwrap();
        for sample in &vac.samples {
            for (n, &gap) in sample.gaps.iter().enumerate() {
                assert_eq!(gap, 0.0, "vacuum n={n}");
            }
        }
        assert!(vac.exponents.iter().all(|e| e.is_nan()));

        assert!(eta_scaling_diagnostic(&source, 1, &[0.025, 0.0125]).is_err());
        assert!(eta_scaling_diagnostic(&source, 4, &[0.025]).is_err());
    }

    #[test]
    fn pairings_expose_the_miscount_structure() {
        let setup = DetectorSetup::uniform(4, 0.025).unwrap();
        let basis = ReciprocalBasis::for_setup(&setup).unwrap();
        let d = 4;
        // at or below D photons the finite family counts exactly
        for m in 0..=d {
            let pairing = basis.pair_with_response(&setup, m).unwrap();
            for n in 0..=d {
                let target = if n == m { 1.0 } else { 0.0 };
                assert!(
                    (pairing.finite[n] - target).abs() < 1e-14,
                    "m={m} n={n}: {}",
                    pairing.finite[n]
                );
            }
        }
        // beyond D the finite products alternate with D - n and the
        // saturated ladder stays trapped between 0 and 1 at the top
        for m in (d + 1)..=60 {
            let pairing = basis.pair_with_response(&setup, m).unwrap();
            for n in 0..=d {
                let sign = if (d - n) % 2 == 0 { 1.0 } else { -1.0 };
                assert!(
                    sign * pairing.finite[n] > 0.0,
                    "m={m} n={n}: {}",
                    pairing.finite[n]
                );
            }
            assert!(pairing.finite[d] >= 1.0, "m={m}: {}", pairing.finite[d]);
            assert!(
                pairing.saturating[d] > 0.0 && pairing.saturating[d] <= 1.0,
                "m={m}: {}",
                pairing.saturating[d]
            );
        }
        let mismatched = DetectorSetup::uniform(3, 0.025).unwrap();
        assert!(basis.pair_with_response(&mismatched, 2).is_err());
    }
}
