//! Finite-sample confidence and calibration ambiguity both widen the
//! bounds.  The counting allowance per fold shrinks as 1/sqrt(pulses)
//! but enters the bounds amplified by roughly eta^-r, so the top fold
//! dictates how many pulses a target precision costs.

use photon_calib::bounds::photon_number_bounds;
use photon_calib::coincidence::{predicted_coincidences, DetectorSetup, PhotonSource};
use photon_calib::uncertainty::{
    hoeffding_half_width, worst_case_bounds, EfficiencyUncertainty, ObservationUncertainty,
};

fn main() {
    let setup = DetectorSetup::uniform(2, 0.1).unwrap();
    let source = PhotonSource::poissonian(0.5).unwrap();
    let observed = predicted_coincidences(&setup, &source).unwrap();
    let delta = 0.05;

    let point = photon_number_bounds(&setup, &observed).unwrap();
    let b = point.bound(1).unwrap();
    println!(
        "point-estimate one-photon interval: [{:.6}, {:.6}] (true {:.6})",
        b.lower,
        b.upper,
        source.probability(1)
    );

    println!("\ncounting confidence at budget {delta}:");
    for pulses in [1_000_000u64, 100_000_000, 10_000_000_000] {
        let widened = worst_case_bounds(
            &setup,
            &observed,
            &ObservationUncertainty::CountingConfidence { pulses, delta },
            &EfficiencyUncertainty::None,
        )
        .unwrap();
        let w = widened.bound(1).unwrap();
        println!(
            "  {pulses:>12} pulses: width per fold {:.2e}, p_1 in [{:.6}, {:.6}]",
            hoeffding_half_width(setup.detectors(), pulses, delta).unwrap(),
            w.lower,
            w.upper
        );
    }

    // a one-percent shared miscalibration of the efficiencies
    let calibrated = worst_case_bounds(
        &setup,
        &observed,
        &ObservationUncertainty::CountingConfidence { pulses: 10_000_000_000, delta },
        &EfficiencyUncertainty::UniformShift { half_width: 1e-3, grid: 11 },
    )
    .unwrap();
    let c = calibrated.bound(1).unwrap();
    println!(
        "\nplus 1e-3 efficiency ambiguity: p_1 in [{:.6}, {:.6}] ({} scan points, {} skipped)",
        c.lower,
        c.upper,
        calibrated.evaluated_points(),
        calibrated.skipped_points()
    );
}
