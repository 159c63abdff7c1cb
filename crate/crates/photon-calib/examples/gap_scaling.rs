//! The spacing between the two bound families closes linearly as the
//! detectors improve: halving the efficiency halves each gap, up to
//! higher-order corrections.

use photon_calib::bounds::eta_scaling_diagnostic;
use photon_calib::coincidence::PhotonSource;

fn main() {
    let source = PhotonSource::poissonian(0.2).unwrap();
    let efficiencies = [0.02, 0.01, 0.005, 0.0025];
    let diagnostic = eta_scaling_diagnostic(&source, 4, &efficiencies).unwrap();

    println!("family gaps for a mean-0.2 Poissonian on 4 detectors:");
    print!("{:>10}", "eta");
    for n in 0..4 {
        print!("  {:>12}", format!("gap(p_{n})"));
    }
    println!();
    for sample in &diagnostic.samples {
        print!("{:>10.4}", sample.efficiency);
        for g in &sample.gaps {
            print!("  {g:>12.3e}");
        }
        println!();
    }
    println!("\nfitted scaling exponents (1 = exactly linear):");
    for (n, e) in diagnostic.exponents.iter().enumerate() {
        println!("  p_{n}: {e:.4}");
    }
}
