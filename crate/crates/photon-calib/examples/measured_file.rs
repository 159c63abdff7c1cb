//! Measured-data round trip: a simulation written in the measured CSV
//! format, parsed back, and bounded.  The integer click tallies make the
//! file route land on the identical doubles as the in-process route.

use photon_calib::bounds::photon_number_bounds;
use photon_calib::coincidence::{DetectorSetup, PhotonSource};
use photon_calib::io::{measured_csv, parse_measured};
use photon_calib::simulate::simulate_coincidences;

fn main() {
    let setup = DetectorSetup::uniform(3, 0.03).unwrap();
    let source = PhotonSource::poissonian(0.4).unwrap();
    let run = simulate_coincidences(&setup, &source, 500_000, 11).unwrap();

    let text = measured_csv(&run);
    println!("measured file ({} bytes):", text.len());
    for line in text.lines().take(6) {
        println!("  {line}");
    }
    println!("  ...");

    let record = parse_measured(&text).unwrap();
    let from_file = record.coincidences().unwrap();
    println!(
        "\nparsed {} detectors, {} pulses, folds identical to the run: {}",
        record.detectors(),
        record.pulses().unwrap(),
        from_file.entries() == run.empirical().entries()
    );

    let bounds = photon_number_bounds(&setup, &from_file).unwrap();
    for n in 0..setup.detectors() {
        let b = bounds.bound(n).unwrap();
        println!("p_{n} in [{:.6}, {:.6}]", b.lower, b.upper);
    }
    println!("tail at most {:.3e}", bounds.tail().upper);
}
