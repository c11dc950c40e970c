use super::manifest::Manifest;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// `ceil(fraction * n)`, ignoring float noise below 1e-9 relative.
pub fn slice_len(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let r = x.round();
    let len = if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r
    } else {
        x.ceil()
    };
    (len as usize).min(n)
}

/// Shuffles once with a seeded Fisher-Yates, then takes nested prefixes.
pub fn slice_manifest(manifest: &Manifest, fractions: &[f64], seed: u64) -> Result<Vec<Manifest>> {
    for &f in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Config(format!("fraction {f} is outside (0, 1]")));
        }
    }
    if fractions.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config(format!("fractions {fractions:?} are not ascending")));
    }
    let mut records = manifest.records().to_vec();
    let mut rng = SplitMix64::new(seed);
    for i in (1..records.len()).rev() {
        let j = rng.uniform_usize(i + 1);
        records.swap(i, j);
    }
    fractions
        .iter()
        .map(|&f| Manifest::new(records[..slice_len(f, records.len())].to_vec()))
        .collect()
}
