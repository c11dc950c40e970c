//! Time and frequency masking.
//!
//! Each mask draws a width uniformly from `0..=max_width`, then a start
//! uniformly over the whole axis. Starts already used on the same axis are
//! redrawn, and a mask running past the end is clamped to the axis extent.
//! Time masks are drawn before frequency masks from one shared stream, width
//! before start for every mask.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::featext::FeatureMatrix;
use crate::rng::SplitMix64;

/// Masking parameters: frequency width/count and time width/count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct AugmentPolicy {
    /// Largest frequency-mask width, in channels.
    pub freq_width: usize,
    pub freq_count: usize,
    /// Largest time-mask width, in frames.
    pub time_width: usize,
    pub time_count: usize,
}

impl AugmentPolicy {
    pub const fn new(freq_width: usize, freq_count: usize, time_width: usize, time_count: usize) -> Self {
        Self {
            freq_width,
            freq_count,
            time_width,
            time_count,
        }
    }

    pub const NONE: Self = Self::new(0, 0, 0, 0);
    /// Best combined setting on LibriSpeech En-Fr.
    pub const LIBRI_BEST: Self = Self::new(5, 1, 40, 2);
    /// Best combined setting on IWSLT En-De.
    pub const IWSLT_BEST: Self = Self::new(4, 1, 40, 2);
    /// Close to the LD policy of the original SpecAugment recipe.
    pub const LD_LIKE: Self = Self::new(27, 2, 100, 2);

    pub const PRESETS: [(&'static str, Self); 4] = [
        ("none", Self::NONE),
        ("libri-best", Self::LIBRI_BEST),
        ("iwslt-best", Self::IWSLT_BEST),
        ("ld-like", Self::LD_LIKE),
    ];

    pub fn preset(name: &str) -> Option<Self> {
        Self::PRESETS.iter().find(|(n, _)| *n == name).map(|&(_, p)| p)
    }

    /// True when no mask can ever be drawn.
    pub fn is_none(&self) -> bool {
        self.freq_count == 0 && self.time_count == 0
    }
}

impl fmt::Display for AugmentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.freq_width, self.freq_count, self.time_width, self.time_count
        )
    }
}

/// Accepts a preset name or `F,mF,R,mR`.
impl FromStr for AugmentPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(p) = Self::preset(s) {
            return Ok(p);
        }
        let fields: Vec<&str> = s.split(',').map(str::trim).collect();
        let parsed: Option<Vec<usize>> = fields.iter().map(|f| f.parse().ok()).collect();
        match parsed.as_deref() {
            Some(&[fw, fc, tw, tc]) => Ok(Self::new(fw, fc, tw, tc)),
            _ => Err(Error::Config(format!(
                "policy {s:?} is neither a preset ({}) nor four non-negative integers F,mF,R,mR",
                Self::PRESETS.map(|(n, _)| n).join(", ")
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Time,
    Frequency,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Time => "time",
            Axis::Frequency => "frequency",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(Axis::Time),
            "frequency" => Ok(Axis::Frequency),
            other => Err(Error::Format(format!("unknown mask axis {other:?}"))),
        }
    }
}

/// Zeroes `[start, start + length)` along `axis`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MaskSpec {
    pub axis: Axis,
    pub start: usize,
    pub length: usize,
}

impl MaskSpec {
    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.start..self.end()).contains(&index)
    }
}

/// Masks drawn for one axis, plus the count that was asked for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AxisMasks {
    pub masks: Vec<MaskSpec>,
    pub requested: usize,
}

impl AxisMasks {
    /// The request exceeded the axis extent and was cut down to it.
    pub fn capped(&self) -> bool {
        self.masks.len() < self.requested
    }
}

pub fn sample_axis_masks(
    max_width: usize,
    count: usize,
    extent: usize,
    axis: Axis,
    rng: &mut SplitMix64,
) -> Result<AxisMasks> {
    if extent == 0 {
        return Err(Error::Domain(format!("{axis} axis has zero extent")));
    }
    let mut masks = Vec::with_capacity(count.min(extent));
    sample_axis_into(max_width, count, extent, axis, rng, &mut masks);
    Ok(AxisMasks {
        masks,
        requested: count,
    })
}

/// Appends `min(count, extent)` masks to `out`. Requires `extent >= 1`.
pub(crate) fn sample_axis_into(
    max_width: usize,
    count: usize,
    extent: usize,
    axis: Axis,
    rng: &mut SplitMix64,
    out: &mut Vec<MaskSpec>,
) {
    let first = out.len();
    for _ in 0..count.min(extent) {
        let width = rng.uniform_usize(max_width + 1);
        let start = loop {
            let s = rng.uniform_usize(extent);
            if out[first..].iter().all(|m| m.start != s) {
                break s;
            }
        };
        out.push(MaskSpec {
            axis,
            start,
            length: width.min(extent - start),
        });
    }
}

/// All masks for one utterance, time masks first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SampledMasks {
    pub masks: Vec<MaskSpec>,
    pub time_requested: usize,
    pub freq_requested: usize,
}

impl SampledMasks {
    pub fn count(&self, axis: Axis) -> usize {
        self.masks.iter().filter(|m| m.axis == axis).count()
    }

    pub fn only(&self, axis: Axis) -> Vec<MaskSpec> {
        self.masks.iter().copied().filter(|m| m.axis == axis).collect()
    }

    /// One message per axis whose mask count was capped.
    pub fn warnings(&self) -> Vec<String> {
        [
            (Axis::Time, self.time_requested),
            (Axis::Frequency, self.freq_requested),
        ]
        .into_iter()
        .filter_map(|(axis, requested)| {
            let got = self.count(axis);
            (got < requested).then(|| format!("{axis} mask count {requested} capped to axis extent {got}"))
        })
        .collect()
    }
}

pub fn sample_policy_masks(
    policy: &AugmentPolicy,
    num_frames: usize,
    num_channels: usize,
    rng: &mut SplitMix64,
) -> Result<SampledMasks> {
    if num_frames == 0 || num_channels == 0 {
        return Err(Error::Domain(format!(
            "cannot mask an empty {num_frames}x{num_channels} matrix"
        )));
    }
    let mut masks = Vec::with_capacity(policy.time_count.min(num_frames) + policy.freq_count.min(num_channels));
    sample_axis_into(
        policy.time_width,
        policy.time_count,
        num_frames,
        Axis::Time,
        rng,
        &mut masks,
    );
    sample_axis_into(
        policy.freq_width,
        policy.freq_count,
        num_channels,
        Axis::Frequency,
        rng,
        &mut masks,
    );
    Ok(SampledMasks {
        masks,
        time_requested: policy.time_count,
        freq_requested: policy.freq_count,
    })
}

/// Returns a copy of `features` with every masked frame and channel set to 0.
pub fn apply_masks(features: &FeatureMatrix, masks: &[MaskSpec]) -> Result<FeatureMatrix> {
    let (frames, channels) = (features.num_frames(), features.num_channels());
    for m in masks {
        let extent = match m.axis {
            Axis::Time => frames,
            Axis::Frequency => channels,
        };
        if m.start.checked_add(m.length).is_none_or(|end| end > extent) {
            return Err(Error::MaskOutOfBounds {
                axis: m.axis.as_str(),
                start: m.start,
                length: m.length,
                extent,
            });
        }
    }
    let mut out = features.clone();
    let data = out.data_mut();
    for m in masks {
        match m.axis {
            Axis::Time => data[m.start * channels..m.end() * channels].fill(0.0),
            Axis::Frequency => {
                for row in data.chunks_exact_mut(channels) {
                    row[m.start..m.end()].fill(0.0);
                }
            }
        }
    }
    Ok(out)
}

/// Draws masks for `policy` and applies them.
pub fn augment(
    features: &FeatureMatrix,
    policy: &AugmentPolicy,
    rng: &mut SplitMix64,
) -> Result<(FeatureMatrix, SampledMasks)> {
    let sampled = sample_policy_masks(policy, features.num_frames(), features.num_channels(), rng)?;
    let out = apply_masks(features, &sampled.masks)?;
    Ok((out, sampled))
}

/// Sidecar text: one `axis<TAB>start<TAB>length` line per mask.
pub fn masks_to_text(masks: &[MaskSpec]) -> String {
    masks
        .iter()
        .map(|m| format!("{}\t{}\t{}\n", m.axis, m.start, m.length))
        .collect()
}

pub fn parse_masks(text: &str) -> Result<Vec<MaskSpec>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            let [axis, start, length] = fields[..] else {
                return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            Ok(MaskSpec {
                axis: axis.parse().map_err(|e: Error| bad(e.to_string()))?,
                start: start.parse().map_err(|_| bad(format!("bad start {start:?}")))?,
                length: length.parse().map_err(|_| bad(format!("bad length {length:?}")))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featext::FeatureKind;
    use proptest::prelude::*;

    fn ones(frames: usize, channels: usize) -> FeatureMatrix {
        FeatureMatrix::new(
            vec![1.0; frames * channels],
            frames,
            channels,
            10.0,
            FeatureKind::LogMel,
        )
        .unwrap()
    }

    fn time(start: usize, length: usize) -> MaskSpec {
        MaskSpec {
            axis: Axis::Time,
            start,
            length,
        }
    }

    #[test]
    fn preset_tuples() {
        assert_eq!(
            AugmentPolicy::preset("libri-best"),
            Some(AugmentPolicy::new(5, 1, 40, 2))
        );
        assert_eq!(
            AugmentPolicy::preset("iwslt-best"),
            Some(AugmentPolicy::new(4, 1, 40, 2))
        );
        assert_eq!(
            AugmentPolicy::preset("ld-like"),
            Some(AugmentPolicy::new(27, 2, 100, 2))
        );
        assert_eq!(AugmentPolicy::preset("none"), Some(AugmentPolicy::NONE));
        assert_eq!(AugmentPolicy::preset("lb"), None);
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("ld-like".parse::<AugmentPolicy>().unwrap(), AugmentPolicy::LD_LIKE);
        assert_eq!(
            "3, 1,20,2".parse::<AugmentPolicy>().unwrap(),
            AugmentPolicy::new(3, 1, 20, 2)
        );
        assert_eq!(AugmentPolicy::LIBRI_BEST.to_string(), "5,1,40,2");
        for bad in ["1,2,3", "1,2,3,-4", "a,b,c,d", ""] {
            assert!(matches!(bad.parse::<AugmentPolicy>(), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn zero_width_masks_are_empty() {
        let mut rng = SplitMix64::new(1);
        let got = sample_axis_masks(0, 7, 20, Axis::Time, &mut rng).unwrap();
        assert_eq!(got.masks.len(), 7);
        assert!(got.masks.iter().all(|m| m.length == 0));
    }

    #[test]
    fn count_capped_to_extent_gives_permutation() {
        for seed in 0..50 {
            let mut rng = SplitMix64::new(seed);
            let got = sample_axis_masks(5, 9, 5, Axis::Frequency, &mut rng).unwrap();
            assert!(got.capped());
            let mut starts: Vec<usize> = got.masks.iter().map(|m| m.start).collect();
            starts.sort_unstable();
            assert_eq!(starts, vec![0, 1, 2, 3, 4]);
            assert!(got.masks.iter().all(|m| m.end() <= 5));
        }
    }

    #[test]
    fn zero_extent_is_error() {
        let mut rng = SplitMix64::new(1);
        assert!(sample_axis_masks(3, 1, 0, Axis::Time, &mut rng).is_err());
    }

    #[test]
    fn single_mask_mean_matches_enumeration() {
        // sum over w in 0..=4, s in 0..10 of min(w, 10 - s) is 90 over 50 cases
        let trials = 1_000_000u32;
        let mut rng = SplitMix64::new(77);
        let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
        let mut buf = Vec::new();
        for _ in 0..trials {
            buf.clear();
            sample_axis_into(4, 1, 10, Axis::Time, &mut rng, &mut buf);
            let len = buf[0].length as f64;
            sum += len;
            sum_sq += len * len;
        }
        let n = f64::from(trials);
        let mean = sum / n;
        let stderr = ((sum_sq / n - mean * mean) * n / (n - 1.0)).sqrt() / n.sqrt();
        assert!((mean - 1.8).abs() <= 3.0 * stderr, "mean {mean} stderr {stderr}");
    }

    #[test]
    fn width_draws_are_uniform() {
        // chi-square with 6 degrees of freedom, 0.001 critical value 22.458
        let mut rng = SplitMix64::new(4242);
        let mut counts = [0u64; 7];
        let mut buf = Vec::new();
        for _ in 0..1_000_000 {
            buf.clear();
            // extent large enough that clamping never changes the width
            sample_axis_into(6, 1, 1_000_000, Axis::Time, &mut rng, &mut buf);
            if buf[0].start + 6 < 1_000_000 {
                counts[buf[0].length] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        let expected = total as f64 / 7.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 22.458, "chi2 {chi2} counts {counts:?}");
    }

    #[test]
    fn policy_mask_counts() {
        let mut rng = SplitMix64::new(9);
        assert!(sample_policy_masks(&AugmentPolicy::NONE, 10, 4, &mut rng)
            .unwrap()
            .masks
            .is_empty());
        for policy in [AugmentPolicy::LIBRI_BEST, AugmentPolicy::IWSLT_BEST] {
            let s = sample_policy_masks(&policy, 300, 40, &mut rng).unwrap();
            assert_eq!((s.count(Axis::Time), s.count(Axis::Frequency)), (2, 1));
            assert_eq!(s.masks[0].axis, Axis::Time);
            assert_eq!(s.masks[2].axis, Axis::Frequency);
            assert!(s.warnings().is_empty());
        }
        let s = sample_policy_masks(&AugmentPolicy::new(2, 5, 2, 1), 10, 3, &mut rng).unwrap();
        assert_eq!(s.count(Axis::Frequency), 3);
        assert_eq!(s.warnings().len(), 1);
    }

    #[test]
    fn time_mask_zeroes_rows() {
        let out = apply_masks(&ones(10, 4), &[time(2, 3)]).unwrap();
        for t in 0..10 {
            let expect = if (2..5).contains(&t) { 0.0 } else { 1.0 };
            assert!(out.frame(t).iter().all(|&v| v == expect));
        }
        assert_eq!(out.data().iter().filter(|&&v| v == 1.0).count(), 28);
    }

    #[test]
    fn overlapping_masks_take_union() {
        let out = apply_masks(&ones(10, 4), &[time(0, 5), time(3, 5)]).unwrap();
        assert_eq!(out.data().iter().filter(|&&v| v == 1.0).count(), 8);
        assert!(out.frame(7).iter().all(|&v| v == 0.0));
        assert!(out.frame(8).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn frequency_mask_zeroes_columns() {
        let m = MaskSpec {
            axis: Axis::Frequency,
            start: 1,
            length: 2,
        };
        let out = apply_masks(&ones(3, 4), &[m]).unwrap();
        for frame in out.frames() {
            assert_eq!(frame, &[1.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn out_of_bounds_mask_rejected() {
        let err = apply_masks(&ones(10, 4), &[time(8, 3)]).unwrap_err();
        assert!(matches!(err, Error::MaskOutOfBounds { extent: 10, .. }));
        let f = MaskSpec {
            axis: Axis::Frequency,
            start: 5,
            length: 0,
        };
        assert!(apply_masks(&ones(10, 4), &[f]).is_err());
        assert!(apply_masks(&ones(10, 4), &[time(1, usize::MAX)]).is_err());
    }

    #[test]
    fn augment_is_deterministic() {
        let mut rng = SplitMix64::new(3);
        let x: Vec<f64> = (0..120 * 80).map(|_| rng.gaussian()).collect();
        let feats = FeatureMatrix::new(x, 120, 80, 10.0, FeatureKind::Mfcc).unwrap();
        let (a, ma) = augment(&feats, &AugmentPolicy::LD_LIKE, &mut SplitMix64::new(5)).unwrap();
        let (b, mb) = augment(&feats, &AugmentPolicy::LD_LIKE, &mut SplitMix64::new(5)).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(a.data(), b.data());
        assert_eq!((ma.count(Axis::Time), ma.count(Axis::Frequency)), (2, 2));
        let (same, none) = augment(&feats, &AugmentPolicy::NONE, &mut SplitMix64::new(5)).unwrap();
        assert!(none.masks.is_empty());
        assert_eq!(same, feats);
    }

    #[test]
    fn sidecar_text_round_trip() {
        let masks = vec![
            time(3, 4),
            MaskSpec {
                axis: Axis::Frequency,
                start: 0,
                length: 2,
            },
        ];
        let text = masks_to_text(&masks);
        assert_eq!(text, "time\t3\t4\nfrequency\t0\t2\n");
        assert_eq!(parse_masks(&text).unwrap(), masks);
        assert!(matches!(parse_masks("time\t1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_masks("time\t1\t1\nfreq\t1\t1"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    fn matrix_and_policy() -> impl Strategy<Value = (FeatureMatrix, AugmentPolicy, u64)> {
        (
            1usize..30,
            1usize..12,
            0usize..8,
            0usize..5,
            0usize..12,
            0usize..5,
            any::<u64>(),
        )
            .prop_flat_map(|(t, c, fw, fc, tw, tc, seed)| {
                prop::collection::vec(-5.0f64..5.0, t * c).prop_map(move |data| {
                    let m = FeatureMatrix::new(data, t, c, 10.0, FeatureKind::LogMel).unwrap();
                    (m, AugmentPolicy::new(fw, fc, tw, tc), seed)
                })
            })
    }

    proptest! {
        #[test]
        fn only_masked_cells_change((feats, policy, seed) in matrix_and_policy()) {
            let (out, sampled) = augment(&feats, &policy, &mut SplitMix64::new(seed)).unwrap();
            prop_assert_eq!(sampled.count(Axis::Time), policy.time_count.min(feats.num_frames()));
            prop_assert_eq!(sampled.count(Axis::Frequency), policy.freq_count.min(feats.num_channels()));
            for axis in [Axis::Time, Axis::Frequency] {
                let mut starts: Vec<usize> = sampled.only(axis).iter().map(|m| m.start).collect();
                let n = starts.len();
                starts.sort_unstable();
                starts.dedup();
                prop_assert_eq!(starts.len(), n);
            }
            for t in 0..feats.num_frames() {
                for c in 0..feats.num_channels() {
                    let covered = sampled.masks.iter().any(|m| match m.axis {
                        Axis::Time => m.contains(t),
                        Axis::Frequency => m.contains(c),
                    });
                    if covered {
                        prop_assert_eq!(out.get(t, c), 0.0);
                    } else {
                        prop_assert_eq!(out.get(t, c).to_bits(), feats.get(t, c).to_bits());
                    }
                }
            }
        }

        #[test]
        fn none_policy_is_identity((feats, _p, seed) in matrix_and_policy()) {
            let (out, _) = augment(&feats, &AugmentPolicy::NONE, &mut SplitMix64::new(seed)).unwrap();
            prop_assert_eq!(out, feats);
        }
    }
}
