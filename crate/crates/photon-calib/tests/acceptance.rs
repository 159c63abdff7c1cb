//! Release gates.  One test per numbered criterion; each prints a single
//! `ACCEPTANCE <n> <name>: PASS|FAIL (...)` line with the measured numbers
//! (visible with `--nocapture`, or automatically when a gate fails).
//!
//! Gates that compare against scripted reference values name the script in
//! `tools/oracles/` that regenerates them.

use photon_calib::bounds::{
    eta_scaling_diagnostic, optimality_certificate, photon_number_bounds, ConditionKind,
    ReciprocalBasis,
};
use photon_calib::closedform::closed_form_bounds;
use photon_calib::coincidence::{
    predicted_coincidences, validate_efficiencies, CoincidenceVector, DetectorSetup, PhotonSource,
};
use photon_calib::decoy::{
    calibrated_statistics, keyrate_sweep, CalibrationConfig, PhotonStatistics, ProtocolParams,
    SweepMode,
};
use photon_calib::simulate::simulate_coincidences;
use photon_calib::uncertainty::{
    propagation_estimate, worst_case_bounds, EfficiencyUncertainty, ObservationUncertainty,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Random setup with the total efficiency drawn from `occupancy` and at
/// most 10% per-detector jitter.  Near-uniform efficiencies satisfy the
/// size-ordering rules for every detector count, so nothing is rejected.
fn random_setup(rng: &mut ChaCha8Rng, detectors: usize, occupancy: (f64, f64)) -> DetectorSetup {
    let (lo, hi) = occupancy;
    let base = (lo + (hi - lo) * rng.random::<f64>()) / detectors as f64;
    let etas: Vec<f64> = (0..detectors)
        .map(|_| base * (1.0 + 0.1 * (2.0 * rng.random::<f64>() - 1.0)))
        .collect();
    assert!(
        validate_efficiencies(&etas).is_valid(),
        "generator produced an invalid setup: {etas:?}"
    );
    DetectorSetup::new(etas).unwrap()
}

fn random_finite_source(rng: &mut ChaCha8Rng, max_support: usize) -> (PhotonSource, Vec<f64>) {
    let support = rng.random_range(1..=max_support);
    let mut probs: Vec<f64> = (0..support).map(|_| rng.random::<f64>().powi(2)).collect();
    let sum: f64 = probs.iter().sum();
    if sum == 0.0 {
        probs[0] = 1.0;
    } else {
        for p in probs.iter_mut() {
            *p /= sum;
        }
    }
    (PhotonSource::finite(probs.clone()).unwrap(), probs)
}

#[test]
fn c01_raw_bounds_sandwich_random_finite_sources() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cases = 500;
    let slack = 1e-12;
    let mut violations = 0usize;
    let mut smallest_margin = f64::INFINITY;
    for _ in 0..cases {
        let d = rng.random_range(2..=5);
        let setup = random_setup(&mut rng, d, (0.2, 0.8));
        // photon numbers 0..=10
        let (source, probs) = random_finite_source(&mut rng, 11);
        let observed = predicted_coincidences(&setup, &source).unwrap();
        let result = photon_number_bounds(&setup, &observed).unwrap();
        let mut check = |truth: f64, lower: f64, upper: f64| {
            let margin = (truth - lower).min(upper - truth);
            smallest_margin = smallest_margin.min(margin);
            if margin < -slack {
                violations += 1;
            }
        };
        for n in 0..d {
            let b = result.bound(n).unwrap();
            check(source.probability(n), b.raw_lower, b.raw_upper);
        }
        let tail: f64 = probs.iter().skip(d).sum();
        check(tail, result.tail().raw_lower, result.tail().raw_upper);
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = violations == 0 && elapsed < 30.0;
    println!(
        "ACCEPTANCE 1 sandwich: {} ({cases} cases, {violations} violations beyond {slack:.0e}, \
         smallest margin {smallest_margin:.3e}, {elapsed:.2}s)",
        verdict(pass)
    );
    assert!(
        pass,
        "{violations} sandwich violations (smallest margin {smallest_margin:.3e}) in {elapsed:.2}s"
    );
}

#[test]
fn c02_expanded_formulas_match_the_matrix_route() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cases = 200;
    let tol = 1e-10;
    let mut worst = 0.0f64;
    let rel = |a: f64, b: f64| (a - b).abs() / f64::max(1.0, a.abs().max(b.abs()));
    for case in 0..cases {
        let d = rng.random_range(2..=4);
        let setup = random_setup(&mut rng, d, (0.15, 0.8));
        let observed = if case % 2 == 0 {
            // physical inputs
            let source = match rng.random_range(0..3u8) {
                0 => PhotonSource::poissonian(0.05 + 1.45 * rng.random::<f64>()).unwrap(),
                1 => PhotonSource::thermal(0.05 + 0.95 * rng.random::<f64>()).unwrap(),
                _ => random_finite_source(&mut rng, 9).0,
            };
            predicted_coincidences(&setup, &source).unwrap()
        } else {
            // arbitrary fold vectors: the two routes are algebra, not physics
            let folds: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            CoincidenceVector::from_folds(&folds).unwrap()
        };
        let expanded = closed_form_bounds(&setup, &observed).unwrap();
        let matrix = photon_number_bounds(&setup, &observed).unwrap();
        for n in 0..d {
            let a = expanded.bound(n).unwrap();
            let b = matrix.bound(n).unwrap();
            worst = worst.max(rel(a.raw_lower, b.raw_lower));
            worst = worst.max(rel(a.raw_upper, b.raw_upper));
        }
        worst = worst.max(rel(expanded.tail().raw_lower, matrix.tail().raw_lower));
        worst = worst.max(rel(expanded.tail().raw_upper, matrix.tail().raw_upper));
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst <= tol && elapsed < 10.0;
    println!(
        "ACCEPTANCE 2 expanded-formula equivalence: {} ({cases} cases, worst relative \
         difference {worst:.3e}, {elapsed:.2}s)",
        verdict(pass)
    );
    assert!(pass, "worst relative difference {worst:.3e} in {elapsed:.2}s");
}

#[test]
fn c03_pairing_signs_beyond_the_resolved_ladder() {
    let started = Instant::now();
    // 20 setups across D = 2..=5: dyadic uniform values keep the exact
    // arithmetic light at high photon numbers, two per D are not dyadic
    let battery: Vec<DetectorSetup> = vec![
        DetectorSetup::uniform(2, 0.03125).unwrap(),
        DetectorSetup::uniform(2, 0.125).unwrap(),
        DetectorSetup::new(vec![0.0625, 0.046875]).unwrap(),
        DetectorSetup::new(vec![0.15, 0.12]).unwrap(),
        DetectorSetup::uniform(2, 0.25).unwrap(),
        DetectorSetup::uniform(3, 0.03125).unwrap(),
        DetectorSetup::uniform(3, 0.0625).unwrap(),
        DetectorSetup::new(vec![0.046875, 0.0390625, 0.03125]).unwrap(),
        DetectorSetup::new(vec![0.09, 0.06, 0.05]).unwrap(),
        DetectorSetup::uniform(3, 0.15625).unwrap(),
        DetectorSetup::uniform(4, 0.03125).unwrap(),
        DetectorSetup::uniform(4, 0.0234375).unwrap(),
        DetectorSetup::new(vec![0.046875, 0.0390625, 0.03125, 0.0390625]).unwrap(),
        DetectorSetup::new(vec![0.02, 0.025, 0.03, 0.022]).unwrap(),
        DetectorSetup::uniform(4, 0.09375).unwrap(),
        DetectorSetup::uniform(5, 0.03125).unwrap(),
        DetectorSetup::uniform(5, 0.015625).unwrap(),
        DetectorSetup::new(vec![0.0390625, 0.03125, 0.046875, 0.03125, 0.0390625]).unwrap(),
        DetectorSetup::new(vec![0.025, 0.022, 0.028, 0.024, 0.026]).unwrap(),
        DetectorSetup::uniform(5, 0.0625).unwrap(),
    ];
    assert_eq!(battery.len(), 20);
    let mut exceptions = 0usize;
    let mut pairings_checked = 0usize;
    for setup in &battery {
        let d = setup.detectors();
        let basis = ReciprocalBasis::for_setup(setup).unwrap();
        for m in d..=200 {
            let pairing = basis.pair_with_response(setup, m).unwrap();
            pairings_checked += 1;
            if m == d {
                // the resolved top: the truncated family counts it exactly,
                // the saturated family assigns it some of the overflow mass
                if pairing.finite[d] != 1.0 {
                    exceptions += 1;
                }
                if !(pairing.saturating[d] > 0.0 && pairing.saturating[d] <= 1.0) {
                    exceptions += 1;
                }
                continue;
            }
            for n in 0..=d {
                let sign = if (d - n) % 2 == 0 { 1.0 } else { -1.0 };
                if !(sign * pairing.finite[n] > 0.0) {
                    exceptions += 1;
                }
            }
            // the saturated rows flip the parity one order lower
            for n in 0..d {
                let sign = if (d - n) % 2 == 0 { -1.0 } else { 1.0 };
                if !(sign * pairing.saturating[n] > 0.0) {
                    exceptions += 1;
                }
            }
            if !(pairing.finite[d] >= 1.0) {
                exceptions += 1;
            }
            if !(pairing.saturating[d] > 0.0 && pairing.saturating[d] <= 1.0) {
                exceptions += 1;
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = exceptions == 0;
    println!(
        "ACCEPTANCE 3 overflow sign structure: {} (20 setups, photon numbers up to 200, \
         {pairings_checked} pairings, {exceptions} exceptions, {elapsed:.2}s)",
        verdict(pass)
    );
    assert!(pass, "{exceptions} sign-structure exceptions");
}

#[test]
fn c04_reciprocal_rows_resolve_unit_mass() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let cases = 100;
    let tol = 1e-10;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d = rng.random_range(2..=5);
        let setup = random_setup(&mut rng, d, (0.25, 0.75));
        let folds: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let observed = CoincidenceVector::from_folds(&folds).unwrap();
        let result = photon_number_bounds(&setup, &observed).unwrap();
        let finite: f64 = result.finite_values().iter().sum();
        let saturating: f64 = result.saturating_values().iter().sum();
        worst = worst.max((finite - 1.0).abs());
        worst = worst.max((saturating - 1.0).abs());
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst <= tol;
    println!(
        "ACCEPTANCE 4 unit-mass identities: {} ({cases} random fold vectors, worst deviation \
         {worst:.3e}, {elapsed:.2}s)",
        verdict(pass)
    );
    assert!(pass, "worst unit-mass deviation {worst:.3e}");
}

/// Probability that every detector of `mask` clicks, straight from the
/// generating function of a Poissonian source: inclusion-exclusion over
/// the submasks.  Scripted here independently of the library's fold code.
fn poisson_cover_probability(etas: &[f64], mask: u32, mean: f64) -> f64 {
    let mut acc = 0.0;
    let mut sub = mask;
    loop {
        let mut x = 1.0;
        for (i, &eta) in etas.iter().enumerate() {
            if sub & (1 << i) != 0 {
                x -= eta;
            }
        }
        let term = (mean * (x - 1.0)).exp();
        acc += if sub.count_ones() % 2 == 0 { term } else { -term };
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & mask;
    }
    acc
}

#[test]
fn c05_monte_carlo_matches_scripted_statistics() {
    let started = Instant::now();
    let setup = DetectorSetup::uniform(4, 0.025).unwrap();
    let source = PhotonSource::poissonian(0.5).unwrap();
    let pulses: u64 = 10_000_000;
    let etas = setup.efficiencies().to_vec();
    let d = 4usize;

    // scripted per-fold mean and standard error: the fold statistic is the
    // subset average of cover indicators, so its second moment runs over
    // subset pairs through the union's cover probability
    let masks_of_size = |r: usize| -> Vec<u32> {
        (1u32..(1 << d)).filter(|m| m.count_ones() as usize == r).collect()
    };
    let mut script_mean = vec![0.0f64; d + 1];
    let mut script_sigma = vec![0.0f64; d + 1];
    script_mean[0] = 1.0;
    for r in 1..=d {
        let masks = masks_of_size(r);
        let count = masks.len() as f64;
        let mean: f64 = masks
            .iter()
            .map(|&m| poisson_cover_probability(&etas, m, 0.5))
            .sum::<f64>()
            / count;
        let mut second = 0.0;
        for &a in &masks {
            for &b in &masks {
                second += poisson_cover_probability(&etas, a | b, 0.5);
            }
        }
        second /= count * count;
        script_mean[r] = mean;
        script_sigma[r] = ((second - mean * mean).max(0.0) / pulses as f64).sqrt();
    }

    // the library's analytic prediction must sit on the scripted values
    let predicted = predicted_coincidences(&setup, &source).unwrap();
    for r in 1..=d {
        assert!(
            (predicted.entry(r) - script_mean[r]).abs() <= 1e-12,
            "fold {r}: library {} vs script {}",
            predicted.entry(r),
            script_mean[r]
        );
    }

    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| simulate_coincidences(&setup, &source, pulses, 816).unwrap())
    };
    let serial = run(1);
    let parallel = run(8);
    let deterministic = serial.click_histogram() == parallel.click_histogram()
        && serial.exact_click_counts() == parallel.exact_click_counts()
        && serial.empirical().entries() == parallel.empirical().entries();

    let mut worst_pull = 0.0f64;
    for r in 1..=d {
        let pull = (parallel.empirical().entry(r) - script_mean[r]).abs() / script_sigma[r];
        worst_pull = worst_pull.max(pull);
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = deterministic && worst_pull <= 4.0 && elapsed < 120.0;
    println!(
        "ACCEPTANCE 5 simulation agreement: {} ({pulses} pulses, worst pull {worst_pull:.2} sigma, \
         thread-count invariant: {deterministic}, {elapsed:.1}s)",
        verdict(pass)
    );
    assert!(
        pass,
        "worst pull {worst_pull:.2} sigma, deterministic {deterministic}, {elapsed:.1}s"
    );
}

#[test]
fn c06_neighbour_ladder_gap_scales_linearly() {
    let started = Instant::now();
    let source = PhotonSource::poissonian(0.2).unwrap();
    // reference exponents from a 60-digit scripted evaluation of the same
    // gaps: tools/oracles/gap_scaling_reference.py
    let reference_fine = [0.941079, 0.959578, 0.978016, 0.996394];
    let reference_coarse_p1 = 0.917588;

    let fine = eta_scaling_diagnostic(&source, 4, &[0.0125, 0.00625]).unwrap();
    let coarse = eta_scaling_diagnostic(&source, 4, &[0.025, 0.0125]).unwrap();

    let mut in_band = true;
    let mut near_reference = true;
    for (n, &e) in fine.exponents.iter().enumerate() {
        in_band &= (0.9..=1.1).contains(&e);
        near_reference &= (e - reference_fine[n]).abs() < 5e-3;
    }
    let p1_coarse = coarse.exponents[1];
    in_band &= (0.9..=1.1).contains(&p1_coarse);
    near_reference &= (p1_coarse - reference_coarse_p1).abs() < 5e-3;

    let elapsed = started.elapsed().as_secs_f64();
    let pass = in_band && near_reference;
    println!(
        "ACCEPTANCE 6 gap halving: {} (exponents {:?} at eta 0.0125->0.00625, p1 exponent {:.4} \
         at 0.025->0.0125, {elapsed:.2}s)",
        verdict(pass),
        fine.exponents,
        p1_coarse
    );
    assert!(
        pass,
        "fine exponents {:?}, coarse p1 exponent {p1_coarse}",
        fine.exponents
    );
}

#[test]
fn c07_small_efficiency_certificates() {
    let started = Instant::now();
    let sources = [
        PhotonSource::poissonian(0.3).unwrap(),
        PhotonSource::poissonian(0.9).unwrap(),
        PhotonSource::thermal(0.2).unwrap(),
    ];
    let setups = [
        DetectorSetup::uniform(4, 0.025).unwrap(),
        DetectorSetup::uniform(4, 0.015).unwrap(),
    ];
    let mut all_satisfied = true;
    let mut worst_residual = 0.0f64;
    for source in &sources {
        for setup in &setups {
            let cert = optimality_certificate(setup, source).unwrap();
            all_satisfied &= cert.satisfied;
            worst_residual = worst_residual.max(cert.residual);
            let observed = predicted_coincidences(setup, source).unwrap();
            let result = photon_number_bounds(setup, &observed).unwrap();
            worst_residual = worst_residual.max(result.residual());
        }
    }

    // a source with more than one mean photon violates the moment
    // precondition, and only that one
    let hot = PhotonSource::poissonian(1.5).unwrap();
    let cert = optimality_certificate(&setups[0], &hot).unwrap();
    let hot_rejected = !cert.satisfied;
    let only_moment_fails = cert
        .conditions
        .iter()
        .filter(|c| !c.satisfied)
        .all(|c| matches!(c.kind, ConditionKind::MomentRatio))
        && cert.conditions.iter().any(|c| !c.satisfied);

    let elapsed = started.elapsed().as_secs_f64();
    let pass = all_satisfied && worst_residual <= 1e-10 && hot_rejected && only_moment_fails;
    println!(
        "ACCEPTANCE 7 tightness certificates: {} (3 sources x 2 setups satisfied: {all_satisfied}, \
         worst residual {worst_residual:.1e}, mean 1.5 rejected by the moment precheck: \
         {}, {elapsed:.2}s)",
        verdict(pass),
        hot_rejected && only_moment_fails
    );
    assert!(
        pass,
        "satisfied {all_satisfied}, residual {worst_residual:.1e}, hot rejected {hot_rejected}, \
         only moment fails {only_moment_fails}"
    );
}

#[test]
fn c08_flooding_moves_the_top_fold_not_the_one_photon_bounds() {
    let started = Instant::now();
    let setup = DetectorSetup::uniform(4, 0.025).unwrap();
    let eps = 0.025f64.powi(4);
    let base_source = PhotonSource::poissonian(0.3).unwrap();
    let flooded_source = PhotonSource::mixture(vec![
        (1.0 - eps, base_source.clone()),
        (eps, PhotonSource::fock(10_000)),
    ])
    .unwrap();

    let base = predicted_coincidences(&setup, &base_source).unwrap();
    let flooded = predicted_coincidences(&setup, &flooded_source).unwrap();
    let top_shift = flooded.entry(4) - base.entry(4);
    let top_moved = top_shift >= 0.9 * eps;

    let bounds_base = photon_number_bounds(&setup, &base).unwrap();
    let bounds_flooded = photon_number_bounds(&setup, &flooded).unwrap();

    // proportional envelope fed with the fold changes the flood causes
    let relative_cobs: Vec<f64> = (1..=4)
        .map(|r| (flooded.entry(r) - base.entry(r)).abs() / base.entry(r))
        .collect();
    let envelope = propagation_estimate(&setup, &base, &relative_cobs, 0.0).unwrap();
    let allowance = 2.0 * envelope.relative_shifts[1];

    let b0 = bounds_base.bound(1).unwrap();
    let b1 = bounds_flooded.bound(1).unwrap();
    let upper_shift = b1.raw_upper - b0.raw_upper;
    let lower_shift = b1.raw_lower - b0.raw_lower;
    let upper_within = upper_shift.abs() <= allowance * b0.raw_upper.abs();
    let lower_within = lower_shift.abs() <= allowance * b0.raw_lower.abs();

    // both flooded bounds must still be valid for the flooded source
    let true_p1 = (1.0 - eps) * base_source.probability(1);
    let still_valid = b1.raw_lower - 1e-12 <= true_p1 && true_p1 <= b1.raw_upper + 1e-12;

    let elapsed = started.elapsed().as_secs_f64();
    let pass = top_moved && upper_within && lower_within && still_valid;
    println!(
        "ACCEPTANCE 8 flooding envelope: {} (top fold moved {:.4}eps, p1 ceiling shift \
         {upper_shift:.3e} vs allowance {:.3e}, p1 floor shift {lower_shift:.3e} vs allowance \
         {:.3e}, flooded sandwich valid: {still_valid}, {elapsed:.2}s)",
        verdict(pass),
        top_shift / eps,
        allowance * b0.raw_upper.abs(),
        allowance * b0.raw_lower.abs()
    );
    assert!(top_moved, "top fold moved only {top_shift:.3e} of {eps:.3e}");
    assert!(still_valid, "flooded bounds exclude the true one-photon mass");
    assert!(
        upper_within,
        "saturated-family ceiling moved {upper_shift:.3e}, allowance {:.3e}",
        allowance * b0.raw_upper.abs()
    );
    assert!(
        lower_within,
        "truncated-family floor moved {lower_shift:.6e} against an allowance of {:.6e}. The \
         floor's reciprocal row weighs the top fold by ~eta^-4, so a weight-eta^4 flood shifts \
         it by a constant that no efficiency choice shrinks; only the family that never trusts \
         the top fold in that direction keeps the proportional envelope. The ceiling above and \
         the validity of both flooded bounds demonstrate exactly that half.",
        allowance * b0.raw_lower.abs()
    );
}

fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

fn poisson_p(mean: f64, n: usize) -> f64 {
    let mut factorial = 1.0;
    for k in 2..=n {
        factorial *= k as f64;
    }
    (-mean).exp() * mean.powi(n as i32) / factorial
}

struct ScriptChannel {
    gain_signal: f64,
    error_signal: f64,
    gain_decoy: f64,
    error_decoy: f64,
}

fn script_channel(signal_mean: f64, decoy_mean: f64, tau: f64, dark: f64) -> ScriptChannel {
    let rate = |mean: f64| {
        let transmitted = 1.0 - (-mean * tau).exp();
        let gain = transmitted + dark;
        let error = (0.01 * transmitted + 0.5 * dark) / gain;
        (gain, error)
    };
    let (gain_signal, error_signal) = rate(signal_mean);
    let (gain_decoy, error_decoy) = rate(decoy_mean);
    ScriptChannel {
        gain_signal,
        error_signal,
        gain_decoy,
        error_decoy,
    }
}

struct ScriptRate {
    y1: f64,
    e1: f64,
    rate: f64,
    method: &'static str,
    downgraded: bool,
}

/// Re-derives one key-rate cell from the reported best intensity alone.
/// The photon statistics come in as plain numbers; everything downstream
/// of them (yield floor, error ceiling, rate assembly) is scripted here.
fn script_rate(
    signal_mean: f64,
    tau: f64,
    calibrated: Option<(&PhotonStatistics, &PhotonStatistics)>,
) -> ScriptRate {
    let (q, qd, dark) = (0.8, 0.1, 1e-8);
    let decoy_mean = signal_mean / 10.0;
    let ch = script_channel(signal_mean, decoy_mean, tau, dark);
    let clamp01 = |x: f64| x.clamp(0.0, 1.0);

    let (y1, p1_signal, p0_decoy, p1_decoy, method, downgraded) = match calibrated {
        None => {
            let p: Vec<f64> = (0..3).map(|n| poisson_p(signal_mean, n)).collect();
            let pd: Vec<f64> = (0..3).map(|n| poisson_p(decoy_mean, n)).collect();
            let denom = pd[1] * p[2] - p[1] * pd[2];
            let numer = p[2] * ch.gain_decoy
                - pd[2] * ch.gain_signal
                - (pd[0] * p[2] - p[0] * pd[2]) * dark;
            (
                clamp01(numer / denom),
                p[1],
                pd[0],
                pd[1],
                "known-poisson",
                false,
            )
        }
        Some((signal, decoy)) => {
            let resolved = signal.resolved();
            let pair_denom = if resolved >= 3 {
                let chain = signal.lower(2) * decoy.upper(1) >= signal.lower(1) * decoy.upper(2)
                    && (2..resolved).all(|n| {
                        signal.lower(n) * decoy.upper(2) >= signal.lower(2) * decoy.upper(n)
                    });
                let denom = decoy.upper(1) * signal.lower(2) - signal.lower(1) * decoy.upper(2);
                (chain && denom > 0.0).then_some(denom)
            } else {
                None
            };
            let (y1, method, downgraded) = if let Some(denom) = pair_denom {
                let numer = signal.lower(2) * ch.gain_decoy
                    - decoy.upper(2) * ch.gain_signal
                    - (decoy.upper(0) * signal.lower(2) - signal.lower(0) * decoy.upper(2)) * dark
                    - signal.lower(2) * decoy.tail_upper();
                (clamp01(numer / denom), "bounded-pair", false)
            } else {
                let blocked: f64 =
                    (2..resolved).map(|n| decoy.upper(n)).sum::<f64>() + decoy.tail_upper();
                let numer = ch.gain_decoy - decoy.upper(0) * dark - blocked;
                (
                    clamp01(numer / decoy.upper(1)),
                    "bounded-direct",
                    resolved >= 3,
                )
            };
            (y1, signal.lower(1), decoy.lower(0), decoy.lower(1), method, downgraded)
        }
    };

    let gain_total = q * ch.gain_signal + qd * ch.gain_decoy;
    let error_total =
        q * ch.gain_signal * ch.error_signal + qd * ch.gain_decoy * ch.error_decoy;
    let correction = gain_total * h2(error_total / gain_total);
    let (e1, raw_rate) = if y1 > 0.0 {
        let numer = ch.gain_decoy * ch.error_decoy - p0_decoy * 0.5 * dark;
        let denom = p1_decoy * y1;
        let e1 = if denom > 0.0 {
            (numer / denom).clamp(0.0, 0.5)
        } else {
            0.5
        };
        let privacy = (q * p1_signal + qd * p1_decoy) * y1 * (1.0 - h2(e1));
        (e1, privacy - correction)
    } else {
        (0.5, -correction)
    };
    ScriptRate {
        y1,
        e1,
        rate: raw_rate.max(0.0),
        method,
        downgraded,
    }
}

#[test]
fn c09_key_rate_curves_order_and_match_the_script() {
    let started = Instant::now();
    let params = ProtocolParams::new(0.8, 0.1, 1e-8).unwrap();
    let taus = [1.0, 0.5, 0.1, 0.05, 0.01];
    let modes = [
        SweepMode::PoissonKnown,
        SweepMode::Calibrated { detectors: 4 },
        SweepMode::Calibrated { detectors: 3 },
        SweepMode::Calibrated { detectors: 2 },
    ];
    let rows = keyrate_sweep(&params, &taus, &modes).unwrap();
    assert_eq!(rows.len(), 20);
    let rate_at = |label: &str, tau: f64| {
        rows.iter()
            .find(|r| r.mode == label && r.transmittance == tau)
            .map(|r| r.rate)
            .unwrap()
    };

    let mut ordered = true;
    for &tau in &taus {
        let known = rate_at("poisson-known", tau);
        let d4 = rate_at("calibrated-d4", tau);
        let d3 = rate_at("calibrated-d3", tau);
        let d2 = rate_at("calibrated-d2", tau);
        ordered &= known >= d4 - 1e-12 && d4 >= d3 - 1e-12 && d3 >= d2 - 1e-12;
    }
    let halfway = rate_at("calibrated-d4", 0.1) >= 0.5 * rate_at("poisson-known", 0.1);

    // dual evaluation: rebuild every reported value from the winning
    // intensity; the calibrated statistics stage is covered by the earlier
    // gates, the rate stage is scripted above
    let near = |a: f64, b: f64| (a - b).abs() <= 1e-12 * f64::max(1.0, a.abs().max(b.abs()));
    let mut agree = true;
    let mut worst_gap = 0.0f64;
    for row in &rows {
        let scripted = match row.mode.as_str() {
            "poisson-known" => script_rate(row.signal_mean, row.transmittance, None),
            label => {
                let detectors: usize = label
                    .strip_prefix("calibrated-d")
                    .and_then(|s| s.parse().ok())
                    .unwrap();
                let config = CalibrationConfig::standard(detectors);
                let signal = calibrated_statistics(&config, row.signal_mean).unwrap();
                let decoy = calibrated_statistics(&config, row.signal_mean / 10.0).unwrap();
                script_rate(row.signal_mean, row.transmittance, Some((&signal, &decoy)))
            }
        };
        let row_ok = near(row.rate, scripted.rate)
            && near(row.y1_lower, scripted.y1)
            && near(row.e1_upper, scripted.e1)
            && row.method == scripted.method
            && row.downgraded == scripted.downgraded;
        if !row_ok {
            eprintln!(
                "mismatch at mode {} tau {}: rate {} vs {}, y1 {} vs {}, e1 {} vs {}, method {} \
                 vs {}, downgraded {} vs {}",
                row.mode,
                row.transmittance,
                row.rate,
                scripted.rate,
                row.y1_lower,
                scripted.y1,
                row.e1_upper,
                scripted.e1,
                row.method,
                scripted.method,
                row.downgraded,
                scripted.downgraded
            );
        }
        agree &= row_ok;
        worst_gap = worst_gap
            .max((row.rate - scripted.rate).abs())
            .max((row.y1_lower - scripted.y1).abs())
            .max((row.e1_upper - scripted.e1).abs());
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = ordered && halfway && agree && elapsed < 300.0;
    println!(
        "ACCEPTANCE 9 key-rate curves: {} (ordering holds: {ordered}, four-detector rate at \
         tau 0.1 within half of the known-source rate: {halfway}, scripted agreement to \
         {worst_gap:.2e}, {elapsed:.1}s)",
        verdict(pass)
    );
    assert!(
        pass,
        "ordered {ordered}, halfway {halfway}, agree {agree} (worst gap {worst_gap:.2e}), \
         {elapsed:.1}s"
    );
}

#[test]
fn c10_confidence_widened_bounds_cover_the_truth() {
    let started = Instant::now();
    let setup = DetectorSetup::uniform(4, 0.025).unwrap();
    let source = PhotonSource::poissonian(0.5).unwrap();
    let pulses: u64 = 200_000;
    let delta = 0.05;
    let trials = 200;
    let p1_true = source.probability(1);
    let mut covered = 0usize;
    for trial in 0..trials {
        let run = simulate_coincidences(&setup, &source, pulses, 9_000 + trial as u64).unwrap();
        let widened = worst_case_bounds(
            &setup,
            run.empirical(),
            &ObservationUncertainty::CountingConfidence { pulses, delta },
            &EfficiencyUncertainty::None,
        )
        .unwrap();
        let bound = widened.bound(1).unwrap();
        if bound.lower - 1e-12 <= p1_true && p1_true <= bound.upper + 1e-12 {
            covered += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = covered * 10 >= trials * 9;
    println!(
        "ACCEPTANCE 10 interval coverage: {} ({covered}/{trials} trials cover the true \
         one-photon mass at budget {delta}, {elapsed:.1}s)",
        verdict(pass)
    );
    assert!(pass, "coverage {covered}/{trials}");
}
