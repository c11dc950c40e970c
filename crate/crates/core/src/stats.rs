//! Corpus standardization statistics and the exact / Monte Carlo oracles
//! for the mask samplers.
//!
//! The samplers redraw duplicate starts, which gives every ordered sequence
//! of distinct starts the same probability. The exact oracles enumerate
//! exactly that set, with every width tuple equally weighted.

use rayon::prelude::*;

use crate::augment::{sample_axis_into, Axis, MaskSpec};
use crate::error::{Error, Result};
use crate::featext::FeatureMatrix;
use crate::rng::{derive_utterance_seed, SplitMix64};

/// Channels whose variance falls below this are treated as having this variance.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Largest enumeration `exact_masked_mean_multi` will attempt.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

/// Per-channel population mean and variance over a corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub count: u64,
}

impl CorpusStats {
    pub fn num_channels(&self) -> usize {
        self.mean.len()
    }
}

/// Streaming Welford accumulator; partial accumulators merge exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsAccumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl StatsAccumulator {
    pub fn new(channels: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; channels],
            m2: vec![0.0; channels],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push_frame(&mut self, frame: &[f64]) -> Result<()> {
        if frame.len() != self.mean.len() {
            return Err(Error::Domain(format!(
                "frame has {} channels, accumulator has {}",
                frame.len(),
                self.mean.len()
            )));
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(frame) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
        Ok(())
    }

    pub fn push_matrix(&mut self, features: &FeatureMatrix) -> Result<()> {
        features.frames().try_for_each(|f| self.push_frame(f))
    }

    pub fn merge(&mut self, other: &StatsAccumulator) -> Result<()> {
        if other.mean.len() != self.mean.len() {
            return Err(Error::Domain(
                "merging accumulators with different channel counts".into(),
            ));
        }
        if other.count == 0 {
            return Ok(());
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for c in 0..self.mean.len() {
            let delta = other.mean[c] - self.mean[c];
            self.mean[c] += delta * nb / n;
            self.m2[c] += other.m2[c] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn finish(&self) -> Result<CorpusStats> {
        if self.count == 0 {
            return Err(Error::Domain("no frames accumulated".into()));
        }
        let n = self.count as f64;
        Ok(CorpusStats {
            mean: self.mean.clone(),
            variance: self.m2.iter().map(|s| (s / n).max(0.0)).collect(),
            count: self.count,
        })
    }
}

pub fn accumulate_stats<'a, I>(features: I) -> Result<CorpusStats>
where
    I: IntoIterator<Item = &'a FeatureMatrix>,
{
    let mut acc: Option<StatsAccumulator> = None;
    for m in features {
        acc.get_or_insert_with(|| StatsAccumulator::new(m.num_channels()))
            .push_matrix(m)?;
    }
    acc.ok_or_else(|| Error::Domain("empty feature stream".into()))?
        .finish()
}

/// `(x - mean) / sqrt(max(variance, VARIANCE_FLOOR))` per channel.
pub fn standardize(features: &FeatureMatrix, stats: &CorpusStats) -> Result<FeatureMatrix> {
    if stats.count == 0 {
        return Err(Error::Domain("statistics cover zero frames".into()));
    }
    if features.num_channels() != stats.num_channels() || stats.variance.len() != stats.mean.len() {
        return Err(Error::Domain(format!(
            "features have {} channels, statistics have {}",
            features.num_channels(),
            stats.num_channels()
        )));
    }
    let inv_std: Vec<f64> = stats
        .variance
        .iter()
        .map(|v| 1.0 / v.max(VARIANCE_FLOOR).sqrt())
        .collect();
    let mut out = features.clone();
    let channels = out.num_channels();
    for row in out.data_mut().chunks_exact_mut(channels) {
        for ((x, m), s) in row.iter_mut().zip(&stats.mean).zip(&inv_std) {
            *x = (*x - m) * s;
        }
    }
    out.set_kind(features.kind().standardized());
    Ok(out)
}

/// Expected masked length of one mask on an axis of `extent` positions.
pub fn exact_masked_mean(max_width: usize, extent: usize) -> f64 {
    assert!(extent >= 1, "extent must be positive");
    let total: usize = (0..=max_width)
        .flat_map(|w| (0..extent).map(move |s| w.min(extent - s)))
        .sum();
    total as f64 / ((max_width + 1) * extent) as f64
}

fn union_len(masks: &mut [MaskSpec]) -> usize {
    masks.sort_unstable_by_key(|m| m.start);
    let (mut covered, mut reach) = (0, 0);
    for m in masks.iter() {
        let start = m.start.max(reach);
        if m.end() > start {
            covered += m.end() - start;
            reach = m.end();
        }
    }
    covered
}

/// Expected size of the union of `min(count, extent)` masks, by enumerating
/// every width tuple against every ordered tuple of distinct starts.
pub fn exact_masked_mean_multi(max_width: usize, count: usize, extent: usize) -> Result<f64> {
    if extent == 0 {
        return Err(Error::Domain("extent must be positive".into()));
    }
    let k = count.min(extent);
    let widths = (max_width as u64 + 1).checked_pow(k as u32);
    let starts = (0..k).try_fold(1u64, |acc, i| acc.checked_mul((extent - i) as u64));
    let cases = widths.zip(starts).and_then(|(w, s)| w.checked_mul(s));
    let cases = match cases {
        Some(c) if c <= ENUMERATION_LIMIT => c,
        _ => {
            return Err(Error::TooLarge(format!(
                "(max_width+1)^count * extent!/(extent-count)! exceeds {ENUMERATION_LIMIT} \
                 for max_width {max_width}, count {count}, extent {extent}"
            )))
        }
    };
    if k == 0 {
        return Ok(0.0);
    }

    let mut start_tuple = Vec::with_capacity(k);
    let mut used = vec![false; extent];
    let mut total = 0u64;
    enumerate_starts(&mut start_tuple, &mut used, k, &mut |starts| {
        let mut width_tuple = vec![0usize; k];
        let mut masks = vec![
            MaskSpec {
                axis: Axis::Time,
                start: 0,
                length: 0
            };
            k
        ];
        loop {
            for ((m, &s), &w) in masks.iter_mut().zip(starts).zip(&width_tuple) {
                *m = MaskSpec {
                    axis: Axis::Time,
                    start: s,
                    length: w.min(extent - s),
                };
            }
            total += union_len(&mut masks) as u64;
            // odometer increment over {0..=max_width}^k
            let mut i = 0;
            while i < k && width_tuple[i] == max_width {
                width_tuple[i] = 0;
                i += 1;
            }
            if i == k {
                break;
            }
            width_tuple[i] += 1;
        }
    });
    Ok(total as f64 / cases as f64)
}

fn enumerate_starts(tuple: &mut Vec<usize>, used: &mut [bool], k: usize, visit: &mut impl FnMut(&[usize])) {
    if tuple.len() == k {
        visit(tuple);
        return;
    }
    for s in 0..used.len() {
        if !used[s] {
            used[s] = true;
            tuple.push(s);
            enumerate_starts(tuple, used, k, visit);
            tuple.pop();
            used[s] = false;
        }
    }
}

/// Monte Carlo estimate of the union-masked length, with the exact value
/// alongside when one is cheap to enumerate.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskFractionReport {
    pub max_width: usize,
    pub count: usize,
    pub extent: usize,
    pub exact_mean: Option<f64>,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub trials: u64,
    /// Trials in which two masks on the axis shared a start (must be 0).
    pub distinct_violations: u64,
}

impl MaskFractionReport {
    /// `|mc - exact| <= sigmas * stderr`; `None` without an exact value.
    pub fn agrees(&self, sigmas: f64) -> Option<bool> {
        self.exact_mean
            .map(|exact| (self.mc_mean - exact).abs() <= sigmas * self.mc_stderr)
    }
}

pub const MC_SHARDS: u64 = 16;

#[derive(Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    violations: u64,
}

impl Moments {
    fn merge(self, o: Moments) -> Moments {
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let delta = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + delta * delta * self.n as f64 * o.n as f64 / n as f64,
            violations: self.violations + o.violations,
        }
    }
}

fn run_shard(max_width: usize, count: usize, extent: usize, trials: u64, seed: u64) -> Moments {
    let mut rng = SplitMix64::new(seed);
    let mut buf = Vec::with_capacity(count.min(extent));
    let mut acc = Moments::default();
    for _ in 0..trials {
        buf.clear();
        sample_axis_into(max_width, count, extent, Axis::Time, &mut rng, &mut buf);
        let covered = union_len(&mut buf);
        // union_len sorted by start, so duplicates are adjacent
        if buf.windows(2).any(|w| w[0].start == w[1].start) {
            acc.violations += 1;
        }
        acc.n += 1;
        let x = covered as f64;
        let delta = x - acc.mean;
        acc.mean += delta / acc.n as f64;
        acc.m2 += delta * (x - acc.mean);
    }
    acc
}

/// Runs `trials` samplings split over [`MC_SHARDS`] shards. Shard `i` is seeded
/// with the `i`-th output of `SplitMix64::new(seed)`, and shards merge in
/// index order, so the report does not depend on the thread count.
pub fn monte_carlo_masked_mean(
    max_width: usize,
    count: usize,
    extent: usize,
    trials: u64,
    seed: u64,
) -> Result<MaskFractionReport> {
    if trials < 100 {
        return Err(Error::Domain(format!("need at least 100 trials, got {trials}")));
    }
    if extent == 0 {
        return Err(Error::Domain("extent must be positive".into()));
    }
    let mut seeder = SplitMix64::new(seed);
    let shards: Vec<(u64, u64)> = (0..MC_SHARDS)
        .map(|i| {
            let n = trials / MC_SHARDS + u64::from(i < trials % MC_SHARDS);
            (n, seeder.next_u64())
        })
        .collect();
    let parts: Vec<Moments> = shards
        .par_iter()
        .map(|&(n, s)| run_shard(max_width, count, extent, n, s))
        .collect();
    let total = parts.into_iter().fold(Moments::default(), Moments::merge);
    let n = total.n as f64;
    let sample_var = if total.n > 1 { total.m2 / (n - 1.0) } else { 0.0 };
    let exact_mean = match exact_masked_mean_multi(max_width, count, extent) {
        Ok(v) => Some(v),
        Err(Error::TooLarge(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MaskFractionReport {
        max_width,
        count,
        extent,
        exact_mean,
        mc_mean: total.mean,
        mc_stderr: (sample_var / n).sqrt(),
        trials: total.n,
        distinct_violations: total.violations,
    })
}

/// One grid cell of [`verify_grid`]. A failing first run is repeated once
/// with an independent seed; the cell fails only if both runs disagree.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOutcome {
    pub first: MaskFractionReport,
    pub rerun: Option<MaskFractionReport>,
}

impl VerifyOutcome {
    pub fn report(&self) -> &MaskFractionReport {
        self.rerun.as_ref().unwrap_or(&self.first)
    }

    pub fn passed(&self) -> bool {
        run_passes(self.report())
    }
}

/// Sigma multiple used by the sampler check.
pub const AGREEMENT_SIGMAS: f64 = 3.0;

fn run_passes(r: &MaskFractionReport) -> bool {
    r.distinct_violations == 0 && r.agrees(AGREEMENT_SIGMAS) == Some(true)
}

/// Monte Carlo against exact enumeration for every combination of
/// `extents x widths x counts`, in that nesting order.
pub fn verify_grid(
    extents: &[usize],
    widths: &[usize],
    counts: &[usize],
    trials: u64,
    seed: u64,
) -> Result<Vec<VerifyOutcome>> {
    let mut out = Vec::with_capacity(extents.len() * widths.len() * counts.len());
    for &extent in extents {
        for &w in widths {
            for &c in counts {
                let key = format!("{extent}/{w}/{c}");
                let first = monte_carlo_masked_mean(w, c, extent, trials, derive_utterance_seed(seed, &key))?;
                let rerun = if run_passes(&first) {
                    None
                } else {
                    let s = derive_utterance_seed(seed, &format!("{key}/rerun"));
                    Some(monte_carlo_masked_mean(w, c, extent, trials, s)?)
                };
                out.push(VerifyOutcome { first, rerun });
            }
        }
    }
    Ok(out)
}
