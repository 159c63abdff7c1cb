//! Monte Carlo replay of the coincidence experiment.
//!
//! Pulses are processed in fixed-size chunks, each driven by its own
//! counter-mode RNG stream derived from the run seed, so results are
//! bit-identical for any thread count and any rayon split.  Per-pulse
//! tallies are plain integer counts, which makes the parallel reduction
//! order-independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coincidence::{CoincidenceVector, DetectorSetup, PhotonSource, SourceKind};
use crate::{Error, Result};

/// Pulses per RNG stream.  Fixed, so the chunk layout is part of the
/// reproducibility contract.
pub const CHUNK_PULSES: u64 = 1 << 16;

/// Largest photon number a single draw may produce.
pub const MAX_PHOTONS_PER_PULSE: usize = 1_000_000;

/// Exact click-set tallies are kept up to this many detectors; beyond it
/// the `2^D` table would dominate memory and only the histogram is kept.
pub const EXACT_TALLY_MAX_DETECTORS: usize = 16;

/// Empirical coincidence statistics of a simulated run.
#[derive(Clone, Debug)]
pub struct SimulationResult {
    empirical: CoincidenceVector,
    standard_errors: Vec<f64>,
    click_histogram: Vec<u64>,
    exact_click_counts: Vec<u64>,
    pulses: u64,
}

impl SimulationResult {
    /// Averaged fold frequencies with the conventional leading 1.
    pub fn empirical(&self) -> &CoincidenceVector {
        &self.empirical
    }

    /// Per-entry standard error of the mean; entry 0 is 0.
    pub fn standard_errors(&self) -> &[f64] {
        &self.standard_errors
    }

    /// `click_histogram[k]` counts pulses with exactly `k` clicking detectors.
    pub fn click_histogram(&self) -> &[u64] {
        &self.click_histogram
    }

    /// `exact_click_counts[mask]` counts pulses whose click set was exactly
    /// `mask` (bit `i-1` for detector `i`).  Empty when the setup exceeds
    /// [`EXACT_TALLY_MAX_DETECTORS`].
    pub fn exact_click_counts(&self) -> &[u64] {
        &self.exact_click_counts
    }

    pub fn pulses(&self) -> u64 {
        self.pulses
    }
}

struct Tally {
    hist: Vec<u64>,
    exact: Vec<u64>,
}

impl Tally {
    fn new(detectors: usize, track_exact: bool) -> Self {
        Tally {
            hist: vec![0; detectors + 1],
            exact: if track_exact {
                vec![0; 1 << detectors]
            } else {
                Vec::new()
            },
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.hist.iter_mut().zip(other.hist) {
            *a += b;
        }
        for (a, b) in self.exact.iter_mut().zip(other.exact) {
            *a += b;
        }
        self
    }
}

fn sample_photon_count(kind: &SourceKind, rng: &mut ChaCha8Rng) -> Result<usize> {
    match kind {
        SourceKind::Poissonian { mean } => {
            let u: f64 = rng.random();
            let mut p = (-mean).exp();
            let mut cum = p;
            let mut n = 0usize;
            while u >= cum && p > 0.0 {
                n += 1;
                if n > MAX_PHOTONS_PER_PULSE {
                    return Err(Error::PhotonCountOverflow {
                        cap: MAX_PHOTONS_PER_PULSE,
                    });
                }
                p *= mean / n as f64;
                cum += p;
            }
            Ok(n)
        }
        SourceKind::Thermal { mean } => {
            // geometric inversion; u < 1 keeps the log finite
            let u: f64 = rng.random();
            let ratio = mean / (mean + 1.0);
            let n = ((1.0 - u).ln() / ratio.ln()).floor();
            if n > MAX_PHOTONS_PER_PULSE as f64 {
                return Err(Error::PhotonCountOverflow {
                    cap: MAX_PHOTONS_PER_PULSE,
                });
            }
            Ok(n as usize)
        }
        SourceKind::Finite { probabilities } => {
            let u: f64 = rng.random();
            let mut cum = 0.0;
            for (n, &p) in probabilities.iter().enumerate() {
                cum += p;
                if u < cum {
                    return Ok(n);
                }
            }
            Ok(probabilities.len() - 1)
        }
        SourceKind::Mixture { components } => {
            let u: f64 = rng.random();
            let mut cum = 0.0;
            for (w, source) in components {
                cum += w;
                if u < cum {
                    return sample_photon_count(source.kind(), rng);
                }
            }
            let (_, last) = components.last().expect("mixture is never empty");
            sample_photon_count(last.kind(), rng)
        }
    }
}

fn run_chunk(
    setup: &DetectorSetup,
    source: &PhotonSource,
    seed: u64,
    chunk: u64,
    pulses_in_chunk: u64,
    tally: &mut Tally,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    let etas = setup.efficiencies();
    let track_exact = !tally.exact.is_empty();
    for _ in 0..pulses_in_chunk {
        let photons = sample_photon_count(source.kind(), &mut rng)?;
        let mut mask = 0u32;
        for _ in 0..photons {
            let u: f64 = rng.random();
            let mut cum = 0.0;
            for (i, &eta) in etas.iter().enumerate() {
                cum += eta;
                if u < cum {
                    mask |= 1 << i;
                    break;
                }
            }
        }
        tally.hist[mask.count_ones() as usize] += 1;
        if track_exact {
            tally.exact[mask as usize] += 1;
        }
    }
    Ok(())
}

/// Runs `pulses` pulses of `source` through `setup` and tallies clicks.
///
/// The run is deterministic in `(setup, source, pulses, seed)` alone.
pub fn simulate_coincidences(
    setup: &DetectorSetup,
    source: &PhotonSource,
    pulses: u64,
    seed: u64,
) -> Result<SimulationResult> {
    if pulses == 0 {
        return Err(Error::InvalidArgument(
            "at least one pulse is required".into(),
        ));
    }
    let d = setup.detectors();
    let track_exact = d <= EXACT_TALLY_MAX_DETECTORS;
    let chunk_count = pulses.div_ceil(CHUNK_PULSES);

    let tally: Result<Tally> = (0..chunk_count)
        .into_par_iter()
        .try_fold(
            || Tally::new(d, track_exact),
            |mut tally, chunk| {
                let start = chunk * CHUNK_PULSES;
                let len = CHUNK_PULSES.min(pulses - start);
                run_chunk(setup, source, seed, chunk, len, &mut tally)?;
                Ok(tally)
            },
        )
        .try_reduce(|| Tally::new(d, track_exact), |a, b| Ok(a.merge(b)));
    let tally = tally?;

    let n = pulses as f64;
    let mut entries = vec![0.0f64; d + 1];
    let mut standard_errors = vec![0.0f64; d + 1];
    for r in 0..=d {
        // per-pulse statistic for fold r: binom(clicks, r) / binom(D, r).
        // The numerator is summed in integers so that recomputing the
        // entry from persisted counts reproduces the same double exactly.
        let denom = num_integer::binomial(d as u64, r as u64) as f64;
        let mut numer: u128 = 0;
        let mut second = 0.0;
        for (k, &count) in tally.hist.iter().enumerate() {
            let x = num_integer::binomial(k as u64, r as u64) as f64 / denom;
            numer += count as u128 * num_integer::binomial(k as u64, r as u64) as u128;
            second += (count as f64 / n) * x * x;
        }
        let mean = numer as f64 / (denom * n);
        entries[r] = mean;
        let variance = (second - mean * mean).max(0.0);
        standard_errors[r] = (variance / n).sqrt();
    }
    entries[0] = 1.0;
    standard_errors[0] = 0.0;

    Ok(SimulationResult {
        empirical: CoincidenceVector::new(entries)?,
        standard_errors,
        click_histogram: tally.hist,
        exact_click_counts: tally.exact,
        pulses,
    })
}
