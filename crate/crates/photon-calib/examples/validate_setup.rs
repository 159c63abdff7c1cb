//! Checks detector setups against the calibration preconditions.

use photon_calib::coincidence::{validate_efficiencies, DetectorSetup};

fn report(label: &str, etas: &[f64]) {
    let outcome = validate_efficiencies(etas);
    if outcome.is_valid() {
        let total: f64 = etas.iter().sum();
        println!("{label}: valid, total efficiency {total:.3}");
    } else {
        println!("{label}: rejected");
        for violation in outcome.violations() {
            println!("  {violation}");
        }
    }
}

fn main() {
    report("uniform quad cell", &[0.025; 4]);
    report("matched pair", &[0.12, 0.1]);
    // one detector may not outweigh the two smallest combined
    report("lopsided triple", &[0.2, 0.04, 0.03]);
    report("overfull array", &[0.3; 4]);

    let setup = DetectorSetup::new(vec![0.03, 0.025, 0.02, 0.028]).unwrap();
    println!(
        "\nquad cell accepted: mean efficiency {:.4}, two-fold diagonal response {:.3e}",
        setup.mean_efficiency(),
        setup.diagonal_response(2).unwrap()
    );
}
