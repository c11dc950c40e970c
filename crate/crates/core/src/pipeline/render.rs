//! Plain-text PGM (P2) rendering of a feature matrix with its masks.
//!
//! Time runs left to right and channel 0 sits on the bottom row. Gray levels
//! rescale the unmasked matrix linearly from its minimum (0) to its maximum
//! (255); a constant matrix renders as 128. Masked cells are black.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::augment::{sample_policy_masks, AugmentPolicy, Axis, MaskSpec};
use crate::error::{Error, Result};
use crate::featext::FeatureMatrix;
use crate::rng::SplitMix64;

const MAX_LINE: usize = 70;

fn gray_levels(features: &FeatureMatrix) -> Vec<u8> {
    let (lo, hi) = features
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi == lo {
        return vec![128; features.data().len()];
    }
    features
        .data()
        .iter()
        .map(|&v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

pub fn render_pgm(features: &FeatureMatrix, masks: &[MaskSpec]) -> Result<String> {
    let (frames, channels) = (features.num_frames(), features.num_channels());
    for m in masks {
        let extent = match m.axis {
            Axis::Time => frames,
            Axis::Frequency => channels,
        };
        if m.end() > extent {
            return Err(Error::MaskOutOfBounds {
                axis: m.axis.as_str(),
                start: m.start,
                length: m.length,
                extent,
            });
        }
    }
    let mut gray = gray_levels(features);
    for m in masks {
        for t in 0..frames {
            for c in 0..channels {
                let hit = match m.axis {
                    Axis::Time => m.contains(t),
                    Axis::Frequency => m.contains(c),
                };
                if hit {
                    gray[t * channels + c] = 0;
                }
            }
        }
    }

    let mut out = format!("P2\n{frames} {channels}\n255\n");
    for c in (0..channels).rev() {
        let mut line = String::new();
        for t in 0..frames {
            let v = gray[t * channels + c].to_string();
            if !line.is_empty() && line.len() + 1 + v.len() > MAX_LINE {
                out.push_str(&line);
                out.push('\n');
                line.clear();
            }
            if !line.is_empty() {
                line.push(' ');
            }
            line.push_str(&v);
        }
        let _ = writeln!(out, "{line}");
    }
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, features: &FeatureMatrix, masks: &[MaskSpec]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_pgm(features, masks)?).map_err(|e| Error::io(path, e))
}

/// One image of the four-panel comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub name: &'static str,
    pub masks: Vec<MaskSpec>,
    pub pgm: String,
}

/// Draws one mask set for `policy`, then renders the input with no masks,
/// only its time masks, only its frequency masks, and all of them.
pub fn render_panels(features: &FeatureMatrix, policy: &AugmentPolicy, seed: u64) -> Result<Vec<Panel>> {
    let sampled = sample_policy_masks(
        policy,
        features.num_frames(),
        features.num_channels(),
        &mut SplitMix64::new(seed),
    )?;
    [
        ("none", Vec::new()),
        ("time", sampled.only(Axis::Time)),
        ("freq", sampled.only(Axis::Frequency)),
        ("both", sampled.masks.clone()),
    ]
    .into_iter()
    .map(|(name, masks)| {
        let pgm = render_pgm(features, &masks)?;
        Ok(Panel { name, masks, pgm })
    })
    .collect()
}
