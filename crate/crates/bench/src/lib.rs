//! Shared inputs for the benchmarks.

use specmask::{FeatureKind, FeatureMatrix, PcmSignal, SplitMix64};

/// `seconds` of a chirp plus low-level noise at 16 kHz.
pub fn chirp(seconds: f64, seed: u64) -> PcmSignal {
    let rate = 16_000u32;
    let n = (seconds * f64::from(rate)) as usize;
    let mut rng = SplitMix64::new(seed);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / f64::from(rate);
            let phase = std::f64::consts::TAU * (200.0 * t + 1500.0 * t * t);
            0.5 * phase.sin() + 0.01 * rng.gaussian().clamp(-4.0, 4.0)
        })
        .collect();
    PcmSignal::new(samples, rate).expect("chirp stays within [-1, 1]")
}

pub fn random_features(frames: usize, channels: usize, seed: u64) -> FeatureMatrix {
    let mut rng = SplitMix64::new(seed);
    let data = (0..frames * channels).map(|_| rng.gaussian()).collect();
    FeatureMatrix::new(data, frames, channels, 10.0, FeatureKind::StandardizedLogMel).expect("finite gaussian data")
}
