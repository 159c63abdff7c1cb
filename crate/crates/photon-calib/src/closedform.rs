//! Hand-expanded bound formulas for 2, 3, and 4 detectors.
//!
//! These evaluate the same quantities as the triangular route in
//! [`crate::bounds`] but as explicit polynomials in the mean efficiency,
//! the spread measures, and the rescaled observations
//! `ct_r = c_obs,r / (r! s_r)`.  They exist to cross-check the matrix
//! path and to make the small-D structure inspectable.  Evaluation runs
//! in the same exact rational arithmetic as the matrix route, so the two
//! paths agree bit for bit, not merely within a tolerance.

use crate::bounds::{BasisKind, PhotonBound};
use crate::coincidence::{CoincidenceVector, DetectorSetup};
use crate::math::{
    efficiency_spread_exact, elementary_average_exact, rat, rat_int, rat_to_f64, Rat,
};
use crate::{Error, Result};
use num_traits::{One, Signed};

/// Bounds produced by the expanded formulas; same layout as the matrix
/// route's result.
#[derive(Clone, Debug)]
pub struct ClosedFormBounds {
    detectors: usize,
    bounds: Vec<PhotonBound>,
    tail: PhotonBound,
}

impl ClosedFormBounds {
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
}

/// Evaluates the expanded formulas.  Only 2 to 4 detectors have them;
/// anything else must use the triangular route.
pub fn closed_form_bounds(
    setup: &DetectorSetup,
    observed: &CoincidenceVector,
) -> Result<ClosedFormBounds> {
    let d = setup.detectors();
    if observed.folds() != d {
        return Err(Error::InvalidArgument(format!(
            "coincidence vector has {} folds, setup has {} detectors",
            observed.folds(),
            d
        )));
    }
    let etas: Vec<Rat> = setup.efficiencies().iter().map(|&e| rat(e)).collect();
    let mut ct = vec![Rat::one()];
    let mut factorial = 1i64;
    for r in 1..=d {
        factorial *= r as i64;
        let scale = rat_int(factorial) * elementary_average_exact(&etas, r)?;
        if !scale.is_positive() {
            return Err(Error::InvalidArgument(
                "efficiency products must be positive".into(),
            ));
        }
        ct.push(rat(observed.entry(r)) / scale);
    }
    let et = elementary_average_exact(&etas, 1)?;
    // lower/upper per photon number, then the tail pair
    let (lowers, uppers, tail_lower, tail_upper) = match d {
        2 => formulas_d2(&etas, &ct, &et)?,
        3 => formulas_d3(&etas, &ct, &et)?,
        4 => formulas_d4(&etas, &ct, &et)?,
        other => return Err(Error::UnsupportedDimension(other)),
    };
    let mut bounds = Vec::with_capacity(d);
    for n in 0..d {
        let (lb, ub) = if (d - n) % 2 == 0 {
            (BasisKind::Saturating, BasisKind::Finite)
        } else {
            (BasisKind::Finite, BasisKind::Saturating)
        };
        bounds.push(PhotonBound::from_raw(
            rat_to_f64(&lowers[n]),
            lb,
            rat_to_f64(&uppers[n]),
            ub,
        ));
    }
    let tail = PhotonBound::from_raw(
        rat_to_f64(&tail_lower),
        BasisKind::Saturating,
        rat_to_f64(&tail_upper),
        BasisKind::Finite,
    );
    Ok(ClosedFormBounds {
        detectors: d,
        bounds,
        tail,
    })
}

type ExactParts = (Vec<Rat>, Vec<Rat>, Rat, Rat);

fn int(k: i64) -> Rat {
    rat_int(k)
}

fn formulas_d2(etas: &[Rat], ct: &[Rat], et: &Rat) -> Result<ExactParts> {
    let x21 = efficiency_spread_exact(etas, 2, 1)?;
    let one = Rat::one();
    let l0 = &one - &ct[1] + int(2) * (&one + &x21) * et * (&one - et) * &ct[2];
    let u0 = &one - &ct[1] + (&one - (&one - &x21) * et) * &ct[2];
    let l1 = &ct[1] - (int(2) - (&one - &x21) * et) * &ct[2];
    let u1 = &ct[1] - int(2) * (&one + &x21) * et * &ct[2];
    let tail_lower = int(2) * (&one + &x21) * et * et * &ct[2];
    let tail_upper = ct[2].clone();
    Ok((vec![l0, l1], vec![u0, u1], tail_lower, tail_upper))
}

fn formulas_d3(etas: &[Rat], ct: &[Rat], et: &Rat) -> Result<ExactParts> {
    let x21 = efficiency_spread_exact(etas, 2, 1)?;
    let x31 = efficiency_spread_exact(etas, 3, 1)?;
    let x32 = efficiency_spread_exact(etas, 3, 2)?;
    let one = Rat::one();
    let et2 = et * et;
    let a2 = &one - (&one - int(2) * &x21) * et;
    let q2 = int(2) - int(9) * &x32 / int(2) + int(2) * &x31;
    let l0 = &one - &ct[1] + &a2 * &ct[2]
        - (&one - (int(3) - int(3) * &x32 / int(2)) * et + &q2 * &et2) * &ct[3];
    let u0 = &one - &ct[1] + &a2 * &ct[2]
        - int(3)
            * (&one + &x32)
            * et
            * (&one - int(3) * et + int(2) * (&one + &x21) * &et2)
            * &ct[3];
    let l1 = &ct[1] - (int(2) - (&one - int(2) * &x21) * et) * &ct[2]
        + int(3) * (&one + &x32) * et * (int(2) - int(3) * et) * &ct[3];
    let u1 = &ct[1] - (int(2) - (&one - int(2) * &x21) * et) * &ct[2]
        + (int(3) - (int(6) - int(3) * &x32) * et + &q2 * &et2) * &ct[3];
    let l2 = &ct[2] - int(3) * (&one - (&one - &x32 / int(2)) * et) * &ct[3];
    let u2 = &ct[2] - int(3) * (&one + &x32) * et * &ct[3];
    let tail_lower = int(6) * (&one + &x31) * &et2 * et * &ct[3];
    let tail_upper = ct[3].clone();
    Ok((vec![l0, l1, l2], vec![u0, u1, u2], tail_lower, tail_upper))
}

fn formulas_d4(etas: &[Rat], ct: &[Rat], et: &Rat) -> Result<ExactParts> {
    let x21 = efficiency_spread_exact(etas, 2, 1)?;
    let x31 = efficiency_spread_exact(etas, 3, 1)?;
    let x32 = efficiency_spread_exact(etas, 3, 2)?;
    let x41 = efficiency_spread_exact(etas, 4, 1)?;
    let x42 = efficiency_spread_exact(etas, 4, 2)?;
    let x43 = efficiency_spread_exact(etas, 4, 3)?;
    let one = Rat::one();
    let et2 = et * et;
    let et3 = &et2 * et;
    let a2 = &one - (&one - int(3) * &x21) * et;
    let q3 = int(2) - int(12) * &x32 + int(6) * &x31;
    let b3 = &one - (int(3) - int(3) * &x32) * et + &q3 * &et2;
    let c3 = int(3) - (int(6) - int(6) * &x32) * et + &q3 * &et2;
    let k2 = int(11) + int(6) * &x21 - int(8) * &x32 / int(3) - int(12) * &x43
        + int(11) * &x42 / int(3);
    let k3 = int(6) + int(24) * &x21 - int(32) * &x32 / int(3) - int(16) * &x43
        + int(44) * &x42 / int(3)
        - int(6) * &x41;
    let l0 = &one - &ct[1] + &a2 * &ct[2] - &b3 * &ct[3]
        + int(4)
            * (&one + &x43)
            * et
            * (&one - int(6) * et + (int(11) + int(3) * &x31) * &et2
                - int(6) * (&one + &x31) * &et3)
            * &ct[4];
    let u0 = &one - &ct[1] + &a2 * &ct[2] - &b3 * &ct[3]
        + (&one - (int(6) - int(2) * &x43) * et + &k2 * &et2 - &k3 * &et3) * &ct[4];
    let l1 = &ct[1] - (int(2) - (&one - int(3) * &x21) * et) * &ct[2] + &c3 * &ct[3]
        - (int(4) - (int(18) - int(6) * &x43) * et + int(2) * &k2 * &et2 - &k3 * &et3) * &ct[4];
    let u1 = &ct[1] - (int(2) - (&one - int(3) * &x21) * et) * &ct[2] + &c3 * &ct[3]
        - int(4)
            * (&one + &x43)
            * et
            * (int(3) - int(12) * et + (int(11) + int(3) * &x31) * &et2)
            * &ct[4];
    let l2 = &ct[2] - int(3) * (&one - (&one - &x32) * et) * &ct[3]
        + int(12) * (&one + &x43) * et * (&one - int(2) * et) * &ct[4];
    let u2 = &ct[2] - int(3) * (&one - (&one - &x32) * et) * &ct[3]
        + (int(6) - (int(18) - int(6) * &x43) * et + &k2 * &et2) * &ct[4];
    let l3 = &ct[3] - (int(4) - int(2) * (int(3) - &x43) * et) * &ct[4];
    let u3 = &ct[3] - int(4) * (&one + &x43) * et * &ct[4];
    let tail_lower = int(24) * (&one + &x41) * &et2 * &et2 * &ct[4];
    let tail_upper = ct[4].clone();
    Ok((
        vec![l0, l1, l2, l3],
        vec![u0, u1, u2, u3],
        tail_lower,
        tail_upper,
    ))
}
