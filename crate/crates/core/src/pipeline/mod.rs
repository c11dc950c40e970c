//! Batch processing: manifests, the SPFX container, dataset slicing, mask
//! rendering and the extract / standardize / augment runner.

mod config;
mod manifest;
mod render;
mod slice;
mod spfx;

pub use config::{Mode, RunConfig};
pub use manifest::{parse_manifest, read_manifest, resolve_record_path, Manifest, ManifestRecord};
pub use render::{render_panels, render_pgm, write_pgm, Panel};
pub use slice::{slice_len, slice_manifest};
pub use spfx::{
    decode_spfx, decode_stats, encode_spfx, encode_stats, read_spfx, read_stats, write_spfx, write_stats, HEADER_LEN,
    STATS_KIND,
};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::augment::{augment, masks_to_text, Axis};
use crate::error::{Error, Result};
use crate::featext::{extract, read_wav, write_wav, DspConfig, FeatureMatrix, PcmSignal};
use crate::rng::{derive_utterance_seed, SplitMix64};
use crate::stats::{standardize, CorpusStats, StatsAccumulator};

/// Reads `.spfx` files directly and runs the front end on anything else.
pub fn load_features(path: &Path, dsp: &DspConfig) -> Result<FeatureMatrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("spfx") => read_spfx(path),
        _ => extract(&read_wav(path)?, dsp),
    }
}

/// Accumulates standardization statistics over every record of a manifest.
pub fn corpus_stats(manifest_path: &Path, dsp: &DspConfig) -> Result<CorpusStats> {
    let manifest = read_manifest(manifest_path)?;
    let mut acc: Option<StatsAccumulator> = None;
    for record in manifest.records() {
        let features = load_features(&resolve_record_path(manifest_path, record), dsp)?;
        acc.get_or_insert_with(|| StatsAccumulator::new(features.num_channels()))
            .push_matrix(&features)?;
    }
    acc.ok_or_else(|| Error::Domain(format!("manifest {} is empty", manifest_path.display())))?
        .finish()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UtteranceReport {
    pub id: String,
    pub num_frames: usize,
    pub num_channels: usize,
    pub time_masks: usize,
    pub freq_masks: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunSummary {
    /// Manifest order.
    pub processed: Vec<UtteranceReport>,
    /// `(id, message)` in manifest order.
    pub failures: Vec<(String, String)>,
}

impl RunSummary {
    pub fn masks_drawn(&self) -> usize {
        self.processed.iter().map(|u| u.time_masks + u.freq_masks).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "processed {} utterance(s), {} mask(s) drawn, {} failure(s)",
            self.processed.len(),
            self.masks_drawn(),
            self.failures.len()
        );
        for u in &self.processed {
            for w in &u.warnings {
                let _ = writeln!(out, "warning: {}: {w}", u.id);
            }
        }
        for (id, msg) in &self.failures {
            let _ = writeln!(out, "error: {id}: {msg}");
        }
        out
    }
}

fn check_id(id: &str) -> Result<()> {
    if id == "." || id == ".." || id.contains(['/', '\\']) {
        return Err(Error::Domain(format!(
            "utterance id {id:?} cannot be used as a file name"
        )));
    }
    Ok(())
}

fn process_one(config: &RunConfig, stats: Option<&CorpusStats>, record: &ManifestRecord) -> Result<UtteranceReport> {
    check_id(&record.id)?;
    let mut features = load_features(&resolve_record_path(&config.manifest, record), &config.dsp)?;
    let mut warnings = Vec::new();
    if let Some(expected) = record.num_frames {
        if expected != features.num_frames() as u64 {
            warnings.push(format!(
                "manifest lists {expected} frames, found {}",
                features.num_frames()
            ));
        }
    }
    if let Some(stats) = stats {
        features = standardize(&features, stats)?;
    }
    let policy = config.effective_policy();
    let masks = if policy.is_none() {
        Vec::new()
    } else {
        let mut rng = SplitMix64::new(derive_utterance_seed(config.seed, &record.id));
        let (masked, sampled) = augment(&features, &policy, &mut rng)?;
        features = masked;
        warnings.extend(sampled.warnings());
        sampled.masks
    };
    let spfx_path = config.output_dir.join(format!("{}.spfx", record.id));
    write_spfx(&spfx_path, &features)?;
    let masks_path = config.output_dir.join(format!("{}.masks", record.id));
    fs::write(&masks_path, masks_to_text(&masks)).map_err(|e| Error::io(&masks_path, e))?;
    Ok(UtteranceReport {
        id: record.id.clone(),
        num_frames: features.num_frames(),
        num_channels: features.num_channels(),
        time_masks: masks.iter().filter(|m| m.axis == Axis::Time).count(),
        freq_masks: masks.iter().filter(|m| m.axis == Axis::Frequency).count(),
        warnings,
    })
}

/// Processes every manifest record into `<output_dir>/<id>.spfx` plus a
/// `<id>.masks` sidecar. Masks are only drawn in train mode, from a stream
/// seeded per utterance, so output bytes do not depend on `workers`.
///
/// Setup problems (manifest, statistics, output directory) are returned as
/// errors; failures of individual utterances are collected in the summary.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary> {
    if config.manifest.as_os_str().is_empty() {
        return Err(Error::Config("no manifest given".into()));
    }
    if config.output_dir.as_os_str().is_empty() {
        return Err(Error::Config("no output directory given".into()));
    }
    let manifest = read_manifest(&config.manifest)?;
    let stats = config.stats.as_deref().map(read_stats).transpose()?;
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.workers)))?;
    let results: Vec<Result<UtteranceReport>> = pool.install(|| {
        manifest
            .records()
            .par_iter()
            .map(|r| process_one(config, stats.as_ref(), r))
            .collect()
    });
    let mut summary = RunSummary::default();
    for (record, result) in manifest.records().iter().zip(results) {
        match result {
            Ok(report) => summary.processed.push(report),
            Err(e) => summary.failures.push((record.id.clone(), e.to_string())),
        }
    }
    Ok(summary)
}

/// Writes `count` short synthetic utterances (tone sweeps with noise, varying
/// length) as 16 kHz WAV files plus a `manifest.tsv` under `dir`.
pub fn write_synthetic_corpus(dir: &Path, count: usize, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for i in 0..count {
        let id = format!("utt{i:04}");
        let mut rng = SplitMix64::new(derive_utterance_seed(seed, &id));
        let rate = 16_000u32;
        let len = 4_000 + rng.uniform_usize(12_000);
        let f0 = 150.0 + 600.0 * rng.open01();
        let sweep = 2_000.0 * rng.open01();
        let samples = (0..len)
            .map(|n| {
                let t = n as f64 / f64::from(rate);
                let tone = (std::f64::consts::TAU * (f0 * t + 0.5 * sweep * t * t)).sin();
                (0.4 * tone + 0.05 * rng.gaussian()).clamp(-1.0, 1.0)
            })
            .collect();
        let file = format!("{id}.wav");
        write_wav(dir.join(&file), &PcmSignal::new(samples, rate)?)?;
        let _ = writeln!(manifest, "{id}\t{file}");
    }
    let path = dir.join("manifest.tsv");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{parse_masks, AugmentPolicy};

    fn run(dir: &Path, manifest: PathBuf, name: &str, mode: Mode, policy: AugmentPolicy) -> (PathBuf, RunSummary) {
        let out = dir.join(name);
        let cfg = RunConfig {
            manifest,
            output_dir: out.clone(),
            mode,
            policy,
            seed: 11,
            ..RunConfig::default()
        };
        let summary = run_pipeline(&cfg).unwrap();
        (out, summary)
    }

    #[test]
    fn train_mode_sidecars_have_policy_counts() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_synthetic_corpus(&tmp.path().join("wav"), 10, 1).unwrap();
        let (out, summary) = run(tmp.path(), manifest, "train", Mode::Train, AugmentPolicy::LIBRI_BEST);
        assert!(summary.failures.is_empty());
        assert_eq!(summary.processed.len(), 10);
        for u in &summary.processed {
            let masks = parse_masks(&fs::read_to_string(out.join(format!("{}.masks", u.id))).unwrap()).unwrap();
            assert_eq!(masks.iter().filter(|m| m.axis == Axis::Time).count(), 2);
            assert_eq!(masks.iter().filter(|m| m.axis == Axis::Frequency).count(), 1);
        }
        assert_eq!(summary.masks_drawn(), 30);
    }

    #[test]
    fn eval_mode_matches_unaugmented() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_synthetic_corpus(&tmp.path().join("wav"), 4, 2).unwrap();
        let (a, _) = run(tmp.path(), manifest.clone(), "eval", Mode::Eval, AugmentPolicy::LD_LIKE);
        let (b, _) = run(tmp.path(), manifest, "plain", Mode::Train, AugmentPolicy::NONE);
        for i in 0..4 {
            for ext in ["spfx", "masks"] {
                let name = format!("utt{i:04}.{ext}");
                assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
            }
        }
    }

    #[test]
    fn per_utterance_failures_are_collected() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_synthetic_corpus(&tmp.path().join("wav"), 2, 3).unwrap();
        let mut text = fs::read_to_string(&manifest).unwrap();
        text.push_str("missing\tnope.wav\nbad/id\tutt0000.wav\n");
        fs::write(&manifest, text).unwrap();
        let (_, summary) = run(tmp.path(), manifest, "out", Mode::Train, AugmentPolicy::LIBRI_BEST);
        assert_eq!(summary.processed.len(), 2);
        let failed: Vec<&str> = summary.failures.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(failed, ["missing", "bad/id"]);
        assert!(summary.to_text().contains("2 failure(s)"));
    }

    #[test]
    fn setup_errors_are_returned() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            manifest: tmp.path().join("none.tsv"),
            output_dir: tmp.path().join("out"),
            ..RunConfig::default()
        };
        assert!(matches!(run_pipeline(&cfg), Err(Error::Io { .. })));
        assert!(matches!(run_pipeline(&RunConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn stats_then_standardize_via_spfx() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_synthetic_corpus(&tmp.path().join("wav"), 3, 4).unwrap();
        let stats = corpus_stats(&manifest, &DspConfig::default()).unwrap();
        let stats_path = tmp.path().join("corpus.spfx-stats");
        write_stats(&stats_path, &stats).unwrap();
        let cfg = RunConfig {
            manifest,
            output_dir: tmp.path().join("std"),
            stats: Some(stats_path),
            ..RunConfig::default()
        };
        let summary = run_pipeline(&cfg).unwrap();
        assert!(summary.failures.is_empty());
        let m = read_spfx(tmp.path().join("std/utt0000.spfx")).unwrap();
        assert_eq!(m.kind(), crate::FeatureKind::StandardizedLogMel);
    }

    #[test]
    fn manifest_frame_count_mismatch_warns() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_synthetic_corpus(&tmp.path().join("wav"), 1, 5).unwrap();
        fs::write(&manifest, "utt0000\tutt0000.wav\t1\n").unwrap();
        let (_, summary) = run(tmp.path(), manifest, "out", Mode::Eval, AugmentPolicy::NONE);
        assert_eq!(summary.processed[0].warnings.len(), 1);
    }
}
