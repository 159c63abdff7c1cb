//! Which sources admit provably tight bounds at small efficiency.  Weak
//! sources with fast-decaying photon statistics pass every condition; a
//! bright source fails the factorial-moment precheck.

use photon_calib::bounds::optimality_certificate;
use photon_calib::coincidence::{DetectorSetup, PhotonSource};

fn main() {
    let setup = DetectorSetup::uniform(4, 0.025).unwrap();
    let candidates = [
        ("poissonian 0.3", PhotonSource::poissonian(0.3).unwrap()),
        ("poissonian 0.9", PhotonSource::poissonian(0.9).unwrap()),
        ("thermal 0.2", PhotonSource::thermal(0.2).unwrap()),
        ("poissonian 1.5", PhotonSource::poissonian(1.5).unwrap()),
    ];

    for (label, source) in &candidates {
        let cert = optimality_certificate(&setup, source).unwrap();
        println!("{label}: satisfied = {}", cert.satisfied);
        for condition in &cert.conditions {
            let mark = if condition.satisfied { "ok " } else { "BAD" };
            println!("  {mark} {condition}");
        }
    }
}
