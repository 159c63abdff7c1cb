//! The two- to four-detector bounds exist twice: as expanded formulas
//! and as the general reciprocal-basis solve.  Both run in exact
//! arithmetic, so they agree bit for bit, not just within tolerance.

use photon_calib::bounds::photon_number_bounds;
use photon_calib::closedform::closed_form_bounds;
use photon_calib::coincidence::{predicted_coincidences, DetectorSetup, PhotonSource};

fn main() {
    let source = PhotonSource::thermal(0.4).unwrap();
    for d in 2..=4 {
        let setup = DetectorSetup::uniform(d, 0.08 / d as f64).unwrap();
        let observed = predicted_coincidences(&setup, &source).unwrap();
        let expanded = closed_form_bounds(&setup, &observed).unwrap();
        let matrix = photon_number_bounds(&setup, &observed).unwrap();

        let mut identical = true;
        for n in 0..d {
            let a = expanded.bound(n).unwrap();
            let b = matrix.bound(n).unwrap();
            identical &= a.raw_lower.to_bits() == b.raw_lower.to_bits()
                && a.raw_upper.to_bits() == b.raw_upper.to_bits();
        }
        identical &= expanded.tail().raw_upper.to_bits() == matrix.tail().raw_upper.to_bits();

        println!("{d} detectors: bit-identical = {identical}");
        for n in 0..d {
            let b = expanded.bound(n).unwrap();
            println!("  p_{n} in [{:.12}, {:.12}]", b.lower, b.upper);
        }
        println!("  tail ceiling {:.3e}", expanded.tail().upper);
    }
}
