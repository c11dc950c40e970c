//! `key = value` run configuration.
//!
//! ```text
//! # front end
//! front_end = librispeech-like
//! n_mels = 40
//! # run
//! manifest = train.tsv
//! output_dir = out
//! mode = train
//! policy = libri-best
//! seed = 7
//! ```
//!
//! `front_end` selects base DSP settings (`librispeech-like` or `iwslt-like`)
//! that the individual keys then override. Unknown or repeated keys are
//! errors. Relative paths resolve against the config file's directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::AugmentPolicy;
use crate::error::{Error, Result};
use crate::featext::DspConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Mode::Train),
            "eval" => Ok(Mode::Eval),
            other => Err(Error::Config(format!("mode {other:?} must be train or eval"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Train => "train",
            Mode::Eval => "eval",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dsp: DspConfig,
    pub policy: AugmentPolicy,
    pub seed: u64,
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub mode: Mode,
    /// Standardize with these statistics before masking.
    pub stats: Option<PathBuf>,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dsp: DspConfig::default(),
            policy: AugmentPolicy::NONE,
            seed: 0,
            manifest: PathBuf::new(),
            output_dir: PathBuf::new(),
            mode: Mode::Eval,
            stats: None,
            workers: 1,
        }
    }
}

const KEYS: &[&str] = &[
    "front_end",
    "pre_emphasis",
    "frame_len_ms",
    "frame_shift_ms",
    "n_fft",
    "n_mels",
    "n_coeffs",
    "log_floor",
    "fmin_hz",
    "fmax_hz",
    "policy",
    "seed",
    "manifest",
    "output_dir",
    "mode",
    "stats",
    "workers",
];

fn value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("{key}: cannot parse {raw:?}"),
    })
}

/// `none`/`auto` leave the field at its default.
fn optional<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<Option<T>> {
    match raw {
        "none" | "auto" => Ok(None),
        _ => value(key, raw, line).map(Some),
    }
}

impl RunConfig {
    /// The policy actually applied: evaluation never masks.
    pub fn effective_policy(&self) -> AugmentPolicy {
        match self.mode {
            Mode::Train => self.policy,
            Mode::Eval => AugmentPolicy::NONE,
        }
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries: Vec<(usize, &str, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let (key, val) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected key = value, got {content:?}"),
            })?;
            let (key, val) = (key.trim(), val.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key {key:?}"),
                });
            }
            if let Some((prev, _, _)) = entries.iter().find(|(_, k, _)| *k == key) {
                return Err(Error::Parse {
                    line,
                    message: format!("key {key:?} repeats line {prev}"),
                });
            }
            entries.push((line, key, val));
        }

        let mut cfg = RunConfig::default();
        if let Some(&(line, _, v)) = entries.iter().find(|(_, k, _)| *k == "front_end") {
            cfg.dsp = match v {
                "librispeech-like" => DspConfig::librispeech_like(),
                "iwslt-like" => DspConfig::iwslt_like(),
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("front_end {other:?} must be librispeech-like or iwslt-like"),
                    })
                }
            };
        }
        let path = |v: &str| base_dir.join(v);
        for &(line, key, v) in &entries {
            match key {
                "front_end" => {}
                "pre_emphasis" => cfg.dsp.pre_emphasis = value(key, v, line)?,
                "frame_len_ms" => cfg.dsp.frame_len_ms = value(key, v, line)?,
                "frame_shift_ms" => cfg.dsp.frame_shift_ms = value(key, v, line)?,
                "n_fft" => cfg.dsp.n_fft = optional(key, v, line)?,
                "n_mels" => cfg.dsp.n_mels = value(key, v, line)?,
                "n_coeffs" => cfg.dsp.n_coeffs = optional(key, v, line)?,
                "log_floor" => cfg.dsp.log_floor = value(key, v, line)?,
                "fmin_hz" => cfg.dsp.fmin_hz = value(key, v, line)?,
                "fmax_hz" => cfg.dsp.fmax_hz = optional(key, v, line)?,
                "policy" => {
                    cfg.policy = v.parse().map_err(|e: Error| Error::Parse {
                        line,
                        message: e.to_string(),
                    })?
                }
                "seed" => cfg.seed = value(key, v, line)?,
                "manifest" => cfg.manifest = path(v),
                "output_dir" => cfg.output_dir = path(v),
                "mode" => {
                    cfg.mode = v.parse().map_err(|e: Error| Error::Parse {
                        line,
                        message: e.to_string(),
                    })?
                }
                "stats" => cfg.stats = Some(path(v)),
                "workers" => cfg.workers = value(key, v, line)?,
                _ => unreachable!("key list checked above"),
            }
        }
        if cfg.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config() {
        let text = "\
# comment
front_end = iwslt-like
n_coeffs = 40
fmax_hz = 7600
manifest = lists/train.tsv
output_dir = out
mode = train
policy = 4,1,40,2
seed = 99
workers = 4
";
        let cfg = RunConfig::parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.dsp.n_mels, 80);
        assert_eq!(cfg.dsp.n_fft, Some(1024));
        assert_eq!(cfg.dsp.n_coeffs, Some(40));
        assert_eq!(cfg.dsp.fmax_hz, Some(7600.0));
        assert_eq!(cfg.manifest, PathBuf::from("/cfg/lists/train.tsv"));
        assert_eq!(cfg.policy, AugmentPolicy::IWSLT_BEST);
        assert_eq!((cfg.mode, cfg.seed, cfg.workers), (Mode::Train, 99, 4));
        assert_eq!(cfg.effective_policy(), AugmentPolicy::IWSLT_BEST);
    }

    #[test]
    fn eval_forces_no_policy() {
        let cfg = RunConfig::parse("policy = ld-like\nmode = eval\n", Path::new("")).unwrap();
        assert_eq!(cfg.policy, AugmentPolicy::LD_LIKE);
        assert_eq!(cfg.effective_policy(), AugmentPolicy::NONE);
    }

    #[test]
    fn rejects_unknown_repeated_and_malformed() {
        let cases = [
            ("colour = red\n", 1),
            ("seed = 1\nseed = 2\n", 2),
            ("n_mels = forty\n", 1),
            ("\njust words\n", 2),
            ("mode = test\n", 1),
            ("front_end = timit\n", 1),
        ];
        for (text, line) in cases {
            assert!(
                matches!(RunConfig::parse(text, Path::new("")), Err(Error::Parse { line: l, .. }) if l == line),
                "{text:?}"
            );
        }
        assert!(matches!(
            RunConfig::parse("workers = 0", Path::new("")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn empty_config_is_defaults() {
        assert_eq!(RunConfig::parse("", Path::new("")).unwrap(), RunConfig::default());
    }
}
