//! Bounds the photon-number distribution of a Poissonian source seen
//! through four low-efficiency threshold detectors.

use photon_calib::bounds::photon_number_bounds;
use photon_calib::coincidence::{predicted_coincidences, DetectorSetup, PhotonSource};

fn main() {
    let setup = DetectorSetup::uniform(4, 0.025).unwrap();
    let source = PhotonSource::poissonian(0.5).unwrap();
    let observed = predicted_coincidences(&setup, &source).unwrap();

    println!("coincidence folds at mean 0.5, efficiency 0.025 per detector:");
    for r in 1..=setup.detectors() {
        println!("  c_{r} = {:.9e}", observed.entry(r));
    }

    let bounds = photon_number_bounds(&setup, &observed).unwrap();
    println!("\nbasis residual {:.1e}", bounds.residual());
    println!(
        "{:>4}  {:>15}  {:>15}  {:>15}  {:>9}",
        "n", "lower", "true", "upper", "width"
    );
    for n in 0..setup.detectors() {
        let b = bounds.bound(n).unwrap();
        println!(
            "{n:>4}  {:>15.12}  {:>15.12}  {:>15.12}  {:>9.2e}",
            b.lower,
            source.probability(n),
            b.upper,
            b.upper - b.lower
        );
    }
    let true_tail =
        1.0 - (0..setup.detectors()).map(|n| source.probability(n)).sum::<f64>();
    let t = bounds.tail();
    println!(
        "{:>4}  {:>15.12}  {:>15.12}  {:>15.12}  {:>9.2e}",
        "4+",
        t.lower,
        true_tail,
        t.upper,
        t.upper - t.lower
    );
}
