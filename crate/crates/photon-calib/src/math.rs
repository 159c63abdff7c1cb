//! Combinatorial groundwork: detector subsets, the averaging weights that
//! turn per-subset coincidence sums into fold statistics, elementary
//! symmetric means of efficiencies, and the binary entropy.

use num_integer::binomial;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::{Error, Result};

/// Exact arithmetic type for the conditioning-sensitive inner products.
/// Efficiencies enter as exact images of their `f64` values, so every
/// derived quantity is a ratio of integers until the final rounding.
pub(crate) type Rat = num_rational::BigRational;

/// Exact rational image of a finite `f64`.
pub(crate) fn rat(x: f64) -> Rat {
    Rat::from_float(x).expect("finite float")
}

pub(crate) fn rat_int(k: i64) -> Rat {
    Rat::from_integer(k.into())
}

/// Nearest `f64` (ties to even); the only rounding step in the exact paths.
pub(crate) fn rat_to_f64(x: &Rat) -> f64 {
    x.to_f64().expect("finite rational")
}

/// Hard cap on the detector count.  Subset enumeration is `2^D` and the
/// weight arithmetic stays exact in `u64` up to this value.
pub const MAX_DETECTORS: usize = 24;

/// A subset of detector labels `1..=D`, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubsetIndex {
    detectors: usize,
    members: Vec<usize>,
}

impl SubsetIndex {
    /// Builds a subset of the detectors `1..=detectors`.  Members may be
    /// given in any order; duplicates and out-of-range labels are rejected.
    pub fn new(detectors: usize, members: &[usize]) -> Result<Self> {
        check_detector_count(detectors)?;
        let mut sorted = members.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "subset members must be distinct".into(),
            ));
        }
        if sorted.iter().any(|&m| m == 0 || m > detectors) {
            return Err(Error::InvalidArgument(format!(
                "subset members must lie in 1..={detectors}"
            )));
        }
        Ok(Self {
            detectors,
            members: sorted,
        })
    }

    /// Builds a subset from a bit mask; detector `i` corresponds to bit `i-1`.
    pub fn from_mask(detectors: usize, mask: u32) -> Result<Self> {
        check_detector_count(detectors)?;
        if detectors < 32 && mask >= (1 << detectors) {
            return Err(Error::InvalidArgument(format!(
                "mask {mask:#x} addresses detectors beyond {detectors}"
            )));
        }
        let members: Vec<usize> = (0..detectors).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).collect();
        Ok(Self { detectors, members })
    }

    pub fn empty(detectors: usize) -> Result<Self> {
        Self::new(detectors, &[])
    }

    /// Bit mask with detector `i` at bit `i-1`.
    pub fn mask(&self) -> u32 {
        self.members.iter().fold(0u32, |m, &i| m | (1 << (i - 1)))
    }

    /// Sorted detector labels (1-based).
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn detectors(&self) -> usize {
        self.detectors
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

fn check_detector_count(detectors: usize) -> Result<()> {
    if detectors == 0 || detectors > MAX_DETECTORS {
        return Err(Error::InvalidArgument(format!(
            "detector count must lie in 1..={MAX_DETECTORS}, got {detectors}"
        )));
    }
    Ok(())
}

/// All size-`size` subsets of `1..=detectors`, in lexicographic order of
/// their sorted member lists.
pub fn subsets_of_size(detectors: usize, size: usize) -> Result<Vec<SubsetIndex>> {
    check_detector_count(detectors)?;
    if size > detectors {
        return Err(Error::InvalidArgument(format!(
            "subset size {size} exceeds detector count {detectors}"
        )));
    }
    if size == 0 {
        return Ok(vec![SubsetIndex::empty(detectors)?]);
    }
    let mut out = Vec::with_capacity(binomial(detectors as u64, size as u64) as usize);
    let mut idx: Vec<usize> = (1..=size).collect();
    loop {
        out.push(SubsetIndex {
            detectors,
            members: idx.clone(),
        });
        // advance the rightmost index that still has room
        let mut k = size;
        while k > 0 && idx[k - 1] == detectors - (size - k) {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for j in k..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(out)
}

/// Weight with which the size-`j` subset sums enter the averaged `r`-fold
/// coincidence: `binom(D-j, r-j) / binom(D, r)`, and zero when `j > r`.
/// Exact by construction; `binom(24, 12)` still fits comfortably in `u64`.
pub fn omega(detectors: usize, r: usize, j: usize) -> Result<Ratio<u64>> {
    check_detector_count(detectors)?;
    if r > detectors || j > detectors {
        return Err(Error::InvalidArgument(format!(
            "fold {r} / subset size {j} exceed detector count {detectors}"
        )));
    }
    if j > r {
        return Ok(Ratio::from_integer(0));
    }
    Ok(Ratio::new(
        binomial((detectors - j) as u64, (r - j) as u64),
        binomial(detectors as u64, r as u64),
    ))
}

/// Mean over all size-`j` subsets of the product of member efficiencies:
/// the `j`-th elementary symmetric polynomial divided by `binom(D, j)`.
/// At `j = 1` this is the plain mean efficiency.
pub fn elementary_average(efficiencies: &[f64], j: usize) -> Result<f64> {
    let d = efficiencies.len();
    check_detector_count(d)?;
    if j == 0 || j > d {
        return Err(Error::InvalidArgument(format!(
            "elementary average defined for 1..={d}, got {j}"
        )));
    }
    // e[k] accumulates the k-th elementary symmetric polynomial
    let mut e = vec![0.0f64; j + 1];
    e[0] = 1.0;
    for &eta in efficiencies {
        for k in (1..=j).rev() {
            e[k] += eta * e[k - 1];
        }
    }
    Ok(e[j] / binomial(d as u64, j as u64) as f64)
}

/// Exact twin of [`elementary_average`] over rational efficiencies.
pub(crate) fn elementary_average_exact(efficiencies: &[Rat], j: usize) -> Result<Rat> {
    let d = efficiencies.len();
    check_detector_count(d)?;
    if j == 0 || j > d {
        return Err(Error::InvalidArgument(format!(
            "elementary average defined for 1..={d}, got {j}"
        )));
    }
    let mut e = vec![Rat::zero(); j + 1];
    e[0] = Rat::one();
    for eta in efficiencies {
        for k in (1..=j).rev() {
            let add = eta * &e[k - 1];
            e[k] += add;
        }
    }
    Ok(&e[j] / rat_int(binomial(d as u64, j as u64) as i64))
}

/// Exact twin of [`efficiency_spread`].
pub(crate) fn efficiency_spread_exact(efficiencies: &[Rat], i: usize, j: usize) -> Result<Rat> {
    let d = efficiencies.len();
    if !(1 <= j && j < i && i <= d) {
        return Err(Error::InvalidArgument(format!(
            "spread indices need 1 <= j < i <= {d}, got i={i} j={j}"
        )));
    }
    let eta = efficiencies.iter().sum::<Rat>() / rat_int(d as i64);
    let s_i = elementary_average_exact(efficiencies, i)?;
    let s_j = elementary_average_exact(efficiencies, j)?;
    let mut scale = s_j;
    for _ in 0..(i - j) {
        scale *= &eta;
    }
    if !scale.is_positive() {
        return Err(Error::InvalidArgument(
            "efficiency products must be positive".into(),
        ));
    }
    Ok(s_i / scale - Rat::one())
}

/// Relative deviation of the subset-product mean `s_i` from what uniform
/// efficiencies would give: `s_i / (s_j * eta^(i-j)) - 1`, with `eta` the
/// mean efficiency and `s_1 = eta`.  Zero (up to rounding) for a uniform
/// setup.
pub fn efficiency_spread(efficiencies: &[f64], i: usize, j: usize) -> Result<f64> {
    let d = efficiencies.len();
    if !(1 <= j && j < i && i <= d) {
        return Err(Error::InvalidArgument(format!(
            "spread indices need 1 <= j < i <= {d}, got i={i} j={j}"
        )));
    }
    let eta = efficiencies.iter().sum::<f64>() / d as f64;
    let s_i = elementary_average(efficiencies, i)?;
    let s_j = elementary_average(efficiencies, j)?;
    let scale = s_j * eta.powi((i - j) as i32);
    if scale <= 0.0 {
        return Err(Error::InvalidArgument(
            "efficiency products must be positive".into(),
        ));
    }
    Ok(s_i / scale - 1.0)
}

/// Binary entropy in bits; `H(0) = H(1) = 0`, maximum 1 at `x = 1/2`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!(
            "entropy argument must lie in [0, 1], got {x}"
        )));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    // evaluate on the smaller argument so x and 1-x share a code path
    let (a, b) = if x <= 0.5 { (x, 1.0 - x) } else { (1.0 - x, x) };
    Ok(-a * a.log2() - b * b.log2())
}
