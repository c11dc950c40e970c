//! Feature extraction, spectrogram masking augmentation and the statistical
//! oracles that check the mask samplers.

pub mod augment;
pub mod error;
pub mod featext;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod toydemo;

pub use augment::{
    apply_masks, augment, sample_axis_masks, sample_policy_masks, AugmentPolicy, Axis, MaskSpec, SampledMasks,
};
pub use error::{Error, Result};
pub use featext::{extract, read_wav, DspConfig, FeatureKind, FeatureMatrix, PcmSignal};
pub use rng::{derive_utterance_seed, SplitMix64};
pub use stats::{accumulate_stats, standardize, CorpusStats};
