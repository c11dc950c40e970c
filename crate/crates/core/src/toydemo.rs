//! Desk-scale stand-in for the overfitting comparison: a linear softmax
//! classifier over time-pooled frames of synthetic spectrogram-like data,
//! trained with and without masking.
//!
//! Data: each class has a fixed channel template; an example broadcasts its
//! class template over `frames` frames and adds i.i.d. Gaussian noise. Both
//! splits are standardized with the training split's statistics, so a zero
//! mask equals the channel mean.
//!
//! Training is full-batch gradient descent. With a policy, every training
//! example is re-masked each epoch from a seed derived from
//! `(seed, "<id>:<epoch>")`. The curve reports the negative log-likelihood
//! of the unmasked training and dev sets after each update.

use std::fmt::Write as _;

use crate::augment::{augment, AugmentPolicy};
use crate::error::{Error, Result};
use crate::featext::{FeatureKind, FeatureMatrix};
use crate::rng::{derive_utterance_seed, SplitMix64};
use crate::stats::{accumulate_stats, standardize};

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetParams {
    pub classes: usize,
    pub channels: usize,
    pub frames: usize,
    pub noise_std: f64,
    pub train_size: usize,
    pub dev_size: usize,
    /// Standard deviation of the random class templates.
    pub template_scale: f64,
    /// Fixed templates (`classes x channels`); drawn at random when `None`.
    pub templates: Option<Vec<Vec<f64>>>,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            classes: 4,
            channels: 40,
            frames: 60,
            noise_std: 1.0,
            train_size: 40,
            dev_size: 400,
            template_scale: 0.03,
            templates: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub features: FeatureMatrix,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub classes: usize,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
}

fn make_split(
    prefix: &str,
    size: usize,
    templates: &[Vec<f64>],
    params: &DatasetParams,
    rng: &mut SplitMix64,
) -> Result<Vec<Example>> {
    (0..size)
        .map(|i| {
            let label = i % params.classes;
            let template = &templates[label];
            let data = (0..params.frames)
                .flat_map(|_| template.iter())
                .map(|&mu| mu + params.noise_std * rng.gaussian())
                .collect();
            let features = FeatureMatrix::new(data, params.frames, params.channels, 10.0, FeatureKind::LogMel)?;
            Ok(Example {
                id: format!("{prefix}-{i}"),
                features,
                label,
            })
        })
        .collect()
}

pub fn generate_dataset(params: &DatasetParams, seed: u64) -> Result<SyntheticDataset> {
    if params.classes < 2 || params.channels < 2 || params.frames < 4 {
        return Err(Error::Domain(format!(
            "need classes >= 2, channels >= 2, frames >= 4; got {}, {}, {}",
            params.classes, params.channels, params.frames
        )));
    }
    if params.noise_std.is_nan() || params.noise_std <= 0.0 || params.train_size == 0 || params.dev_size == 0 {
        return Err(Error::Domain("noise must be positive and both splits non-empty".into()));
    }
    let templates = match &params.templates {
        Some(t) => {
            if t.len() != params.classes || t.iter().any(|row| row.len() != params.channels) {
                return Err(Error::Domain("templates must be classes x channels".into()));
            }
            t.clone()
        }
        None => {
            let mut rng = SplitMix64::new(derive_utterance_seed(seed, "templates"));
            (0..params.classes)
                .map(|_| {
                    (0..params.channels)
                        .map(|_| params.template_scale * rng.gaussian())
                        .collect()
                })
                .collect()
        }
    };
    let mut train_rng = SplitMix64::new(derive_utterance_seed(seed, "train"));
    let mut dev_rng = SplitMix64::new(derive_utterance_seed(seed, "dev"));
    let train = make_split("train", params.train_size, &templates, params, &mut train_rng)?;
    let dev = make_split("dev", params.dev_size, &templates, params, &mut dev_rng)?;
    let stats = accumulate_stats(train.iter().map(|e| &e.features))?;
    let standardize_all = |split: Vec<Example>| -> Result<Vec<Example>> {
        split
            .into_iter()
            .map(|e| {
                Ok(Example {
                    features: standardize(&e.features, &stats)?,
                    ..e
                })
            })
            .collect()
    };
    Ok(SyntheticDataset {
        classes: params.classes,
        train: standardize_all(train)?,
        dev: standardize_all(dev)?,
    })
}

/// `logits = W * mean_t(x_t) + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub classes: usize,
    pub channels: usize,
    /// Row-major `classes x channels`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ToyModel {
    pub fn zeros(classes: usize, channels: usize) -> Self {
        Self {
            classes,
            channels,
            weights: vec![0.0; classes * channels],
            bias: vec![0.0; classes],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Flat parameter access: weights first, then bias.
    pub fn param_mut(&mut self, i: usize) -> &mut f64 {
        let nw = self.weights.len();
        if i < nw {
            &mut self.weights[i]
        } else {
            &mut self.bias[i - nw]
        }
    }

    pub fn logits(&self, pooled: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.channels)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(pooled).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

pub fn pool(features: &FeatureMatrix) -> Vec<f64> {
    let mut acc = vec![0.0; features.num_channels()];
    for frame in features.frames() {
        for (a, x) in acc.iter_mut().zip(frame) {
            *a += x;
        }
    }
    let n = features.num_frames() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Max-shifted softmax and `-log p[label]` computed as `logsumexp - logit`.
pub fn softmax_nll(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs = exps.iter().map(|e| e / sum).collect();
    let nll = sum.ln() + max - logits[label];
    (nll, probs)
}

pub fn forward_nll(model: &ToyModel, example: &Example) -> (f64, Vec<f64>) {
    softmax_nll(&model.logits(&pool(&example.features)), example.label)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradient {
    pub fn norm(&self) -> f64 {
        self.weights.iter().chain(&self.bias).map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Batch-mean gradient of the nll: `(p - onehot) x pooled` and `p - onehot`.
pub fn gradient(model: &ToyModel, batch: &[Example]) -> Result<Gradient> {
    if batch.is_empty() {
        return Err(Error::Domain("gradient of an empty batch".into()));
    }
    let mut g = Gradient {
        weights: vec![0.0; model.weights.len()],
        bias: vec![0.0; model.bias.len()],
    };
    for example in batch {
        let pooled = pool(&example.features);
        let (_, mut probs) = softmax_nll(&model.logits(&pooled), example.label);
        probs[example.label] -= 1.0;
        for ((row, gb), &err) in g.weights.chunks_exact_mut(model.channels).zip(&mut g.bias).zip(&probs) {
            *gb += err;
            for (gw, x) in row.iter_mut().zip(&pooled) {
                *gw += err * x;
            }
        }
    }
    let n = batch.len() as f64;
    g.weights.iter_mut().chain(&mut g.bias).for_each(|v| *v /= n);
    Ok(g)
}

pub fn mean_nll(model: &ToyModel, examples: &[Example]) -> f64 {
    examples.iter().map(|e| forward_nll(model, e).0).sum::<f64>() / examples.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_nll: f64,
    pub dev_nll: f64,
}

/// Per-epoch negative log-likelihoods, in nats.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn last(&self) -> Option<&CurvePoint> {
        self.points.last()
    }

    /// `dev_nll - train_nll` at the last epoch.
    pub fn final_gap(&self) -> Option<f64> {
        self.last().map(|p| p.dev_nll - p.train_nll)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_nll,dev_nll\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.epoch, p.train_nll, p.dev_nll);
        }
        out
    }
}

pub fn train(
    dataset: &SyntheticDataset,
    policy: Option<&AugmentPolicy>,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<(ToyModel, LearningCurve)> {
    if epochs == 0 || lr < 0.0 || !lr.is_finite() {
        return Err(Error::Domain(format!(
            "need epochs >= 1 and lr >= 0, got {epochs} and {lr}"
        )));
    }
    let channels = dataset
        .train
        .first()
        .ok_or_else(|| Error::Domain("empty training split".into()))?
        .features
        .num_channels();
    let mut model = ToyModel::zeros(dataset.classes, channels);
    let mut curve = LearningCurve::default();
    let policy = policy.filter(|p| !p.is_none());
    for epoch in 1..=epochs {
        let grad = match policy {
            None => gradient(&model, &dataset.train)?,
            Some(p) => {
                let masked = dataset
                    .train
                    .iter()
                    .map(|e| {
                        let s = derive_utterance_seed(seed, &format!("{}:{epoch}", e.id));
                        let (features, _) = augment(&e.features, p, &mut SplitMix64::new(s))?;
                        Ok(Example { features, ..e.clone() })
                    })
                    .collect::<Result<Vec<_>>>()?;
                gradient(&model, &masked)?
            }
        };
        for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
            *w -= lr * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
        let point = CurvePoint {
            epoch,
            train_nll: mean_nll(&model, &dataset.train),
            dev_nll: mean_nll(&model, &dataset.dev),
        };
        let params_finite = model.weights.iter().chain(&model.bias).all(|v| v.is_finite());
        if !params_finite || !point.train_nll.is_finite() || !point.dev_nll.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        curve.points.push(point);
    }
    Ok((model, curve))
}

/// Shipped configuration of the masking-versus-baseline comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoConfig {
    pub data: DatasetParams,
    pub policy: AugmentPolicy,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            data: DatasetParams::default(),
            policy: AugmentPolicy::LIBRI_BEST,
            epochs: 300,
            lr: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairedRun {
    pub seed: u64,
    pub baseline: LearningCurve,
    pub masked: LearningCurve,
}

impl PairedRun {
    pub fn baseline_gap(&self) -> f64 {
        self.baseline.final_gap().unwrap_or(f64::NAN)
    }

    pub fn masked_gap(&self) -> f64 {
        self.masked.final_gap().unwrap_or(f64::NAN)
    }

    pub fn masking_helps(&self) -> bool {
        self.masked_gap() < self.baseline_gap()
    }
}

/// Trains baseline and masked models on the same data for one seed.
pub fn paired_run(config: &DemoConfig, seed: u64) -> Result<PairedRun> {
    let data = generate_dataset(&config.data, seed)?;
    let (_, baseline) = train(&data, None, config.epochs, config.lr, seed)?;
    let (_, masked) = train(&data, Some(&config.policy), config.epochs, config.lr, seed)?;
    Ok(PairedRun { seed, baseline, masked })
}
