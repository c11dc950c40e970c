use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use specmask::augment::parse_masks;
use specmask::pipeline::{
    corpus_stats, load_features, read_manifest, render_panels, resolve_record_path, run_pipeline, slice_manifest,
    write_pgm, write_stats, write_synthetic_corpus, Manifest, ManifestRecord, Mode, RunConfig, RunSummary,
};
use specmask::stats::verify_grid;
use specmask::toydemo::{generate_dataset, train, DemoConfig};
use specmask::{AugmentPolicy, Error};

#[derive(Parser)]
#[command(
    name = "specmask",
    version,
    about = "Spectrogram feature extraction and time/frequency masking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract log-mel or MFCC features for every manifest record
    Extract(Batch),
    /// Accumulate per-channel mean and variance over a manifest
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run configuration supplying the front-end settings
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Extract and standardize with previously accumulated statistics
    Standardize {
        #[command(flatten)]
        batch: Batch,
        #[arg(long)]
        stats: PathBuf,
    },
    /// Extract, optionally standardize, and mask (train mode only)
    Augment {
        #[command(flatten)]
        batch: Batch,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Run the pipeline exactly as a configuration file describes
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Shuffle a manifest once and write nested fractional subsets
    Slice {
        #[arg(long)]
        manifest: PathBuf,
        /// Ascending fractions in (0, 1]
        #[arg(long, value_delimiter = ',', required = true)]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (defaults to the manifest's directory)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render features as a PGM image with masked cells in black
    Render(RenderArgs),
    /// Check the mask sampler against exact enumeration
    Verify {
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        max_extent: usize,
        #[arg(long, default_value_t = 6)]
        max_width: usize,
        #[arg(long, default_value_t = 2)]
        max_count: usize,
    },
    /// Train the toy classifier with and without masking
    Demo {
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Learning curve CSV of the masked run
        #[arg(long)]
        out: Option<PathBuf>,
        /// Learning curve CSV of the unmasked run
        #[arg(long)]
        baseline_out: Option<PathBuf>,
    },
    /// Write a small synthetic WAV corpus and its manifest
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Batch {
    /// Run configuration; the flags below override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct PolicyArgs {
    /// none, libri-best, iwslt-best or ld-like
    #[arg(long, conflicts_with = "policy")]
    preset: Option<String>,
    /// F,mF,R,mR
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args)]
struct RenderArgs {
    /// Feature file (.spfx) or WAV
    #[arg(long)]
    features: PathBuf,
    /// Mask sidecar to draw
    #[arg(long, conflicts_with = "panels")]
    masks: Option<PathBuf>,
    #[arg(long, requires = "masks")]
    out: Option<PathBuf>,
    /// Write none/time/freq/both panels from one mask draw into this directory
    #[arg(long)]
    panels: Option<PathBuf>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Exit 1: the command ran but some utterances or checks failed.
/// Exit 2: bad configuration, input or file format.
enum Failure {
    Partial(String),
    Setup(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } => Failure::Partial(e.to_string()),
            _ => Failure::Setup(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl PolicyArgs {
    fn resolve(&self) -> Result<Option<AugmentPolicy>, Failure> {
        if let Some(name) = &self.preset {
            return AugmentPolicy::preset(name).map(Some).ok_or_else(|| {
                let known: Vec<_> = AugmentPolicy::PRESETS.iter().map(|(n, _)| *n).collect();
                Failure::Setup(format!("unknown preset {name:?}; expected one of {}", known.join(", ")))
            });
        }
        self.policy
            .as_deref()
            .map(str::parse)
            .transpose()
            .map_err(Failure::from)
    }
}

fn base_config(config: Option<&Path>) -> Result<RunConfig, Failure> {
    Ok(match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    })
}

impl Batch {
    fn config(&self) -> Result<RunConfig, Failure> {
        let mut cfg = base_config(self.config.as_deref())?;
        if let Some(m) = &self.manifest {
            cfg.manifest = m.clone();
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if cfg.manifest.as_os_str().is_empty() || cfg.output_dir.as_os_str().is_empty() {
            return Err(Failure::Setup(
                "--manifest and --out are required unless the config sets them".into(),
            ));
        }
        Ok(cfg)
    }
}

fn finish_run(summary: RunSummary) -> CliResult {
    print!("{}", summary.to_text());
    if summary.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Partial(format!(
            "{} utterance(s) failed",
            summary.failures.len()
        )))
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| Failure::Setup(format!("{}: {e}", path.display())))
}

fn slice_name(manifest: &Path, fraction: f64) -> String {
    let stem = manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("manifest");
    format!("{stem}_{fraction}.tsv")
}

fn cmd_slice(manifest_path: &Path, fractions: &[f64], seed: u64, out: Option<&Path>) -> CliResult {
    let manifest = read_manifest(manifest_path)?;
    let source_dir = manifest_path.parent().unwrap_or(Path::new(""));
    let out_dir = out.unwrap_or(source_dir);
    fs::create_dir_all(out_dir).map_err(|e| Failure::Setup(format!("{}: {e}", out_dir.display())))?;
    let same_dir = match (fs::canonicalize(out_dir), fs::canonicalize(source_dir.join("."))) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    let slices = slice_manifest(&manifest, fractions, seed)?;
    for (fraction, slice) in fractions.iter().zip(slices) {
        let slice = if same_dir {
            slice
        } else {
            // keep record paths valid from the new location
            let records = slice
                .records()
                .iter()
                .map(|r| {
                    let abs = resolve_record_path(manifest_path, r);
                    let abs = fs::canonicalize(&abs).unwrap_or(abs);
                    ManifestRecord {
                        path: abs.to_string_lossy().into_owned(),
                        ..r.clone()
                    }
                })
                .collect();
            Manifest::new(records)?
        };
        let path = out_dir.join(slice_name(manifest_path, *fraction));
        write_file(&path, &slice.to_text())?;
        println!("{fraction}\t{}\t{}", slice.len(), path.display());
    }
    Ok(())
}

fn cmd_render(args: &RenderArgs) -> CliResult {
    let cfg = base_config(args.config.as_deref())?;
    let features = load_features(&args.features, &cfg.dsp)?;
    if let Some(sidecar) = &args.masks {
        let text = fs::read_to_string(sidecar).map_err(|e| Failure::Setup(format!("{}: {e}", sidecar.display())))?;
        let masks = parse_masks(&text)?;
        let out = args
            .out
            .as_ref()
            .ok_or_else(|| Failure::Setup("--masks needs --out".into()))?;
        write_pgm(out, &features, &masks)?;
        println!("{}", out.display());
        return Ok(());
    }
    let Some(dir) = &args.panels else {
        return Err(Failure::Setup("give either --masks with --out, or --panels".into()));
    };
    let policy = args.policy.resolve()?.unwrap_or(AugmentPolicy::LIBRI_BEST);
    fs::create_dir_all(dir).map_err(|e| Failure::Setup(format!("{}: {e}", dir.display())))?;
    for panel in render_panels(&features, &policy, args.seed)? {
        let path = dir.join(format!("{}.pgm", panel.name));
        write_file(&path, &panel.pgm)?;
        println!("{}\t{} masks\t{}", panel.name, panel.masks.len(), path.display());
    }
    Ok(())
}

fn cmd_verify(trials: u64, seed: u64, max_extent: usize, max_width: usize, max_count: usize) -> CliResult {
    let extents: Vec<usize> = (1..=max_extent).collect();
    let widths: Vec<usize> = (0..=max_width).collect();
    let counts: Vec<usize> = (1..=max_count).collect();
    let outcomes = verify_grid(&extents, &widths, &counts, trials, seed)?;
    let mut table = String::from("extent\tmax_width\tcount\texact\tmc_mean\tstderr\tresult\n");
    for o in &outcomes {
        let r = o.report();
        let exact = r.exact_mean.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        let verdict = match (o.passed(), o.rerun.is_some()) {
            (true, false) => "PASS",
            (true, true) => "PASS (rerun)",
            (false, _) => "FAIL",
        };
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{exact}\t{:.6}\t{:.6}\t{verdict}",
            r.extent, r.max_width, r.count, r.mc_mean, r.mc_stderr
        );
    }
    print!("{table}");
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    println!(
        "{} of {} configurations agree within 3 standard errors",
        outcomes.len() - failed,
        outcomes.len()
    );
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Partial(format!("{failed} configuration(s) disagree")))
    }
}

fn cmd_demo(
    policy: &PolicyArgs,
    epochs: Option<usize>,
    lr: Option<f64>,
    seed: u64,
    out: Option<&Path>,
    baseline_out: Option<&Path>,
) -> CliResult {
    let mut cfg = DemoConfig::default();
    if let Some(p) = policy.resolve()? {
        cfg.policy = p;
    }
    cfg.epochs = epochs.unwrap_or(cfg.epochs);
    cfg.lr = lr.unwrap_or(cfg.lr);
    let data = generate_dataset(&cfg.data, seed)?;
    let (_, baseline) = train(&data, None, cfg.epochs, cfg.lr, seed)?;
    let (_, masked) = train(&data, Some(&cfg.policy), cfg.epochs, cfg.lr, seed)?;
    for (name, curve) in [("baseline", &baseline), ("masked", &masked)] {
        let last = curve.last().expect("at least one epoch");
        println!(
            "{name}\ttrain_nll {:.4}\tdev_nll {:.4}\tgap {:.4}",
            last.train_nll,
            last.dev_nll,
            last.dev_nll - last.train_nll
        );
    }
    println!(
        "policy {}\tepochs {}\tlr {}\tseed {seed}",
        cfg.policy, cfg.epochs, cfg.lr
    );
    if let Some(path) = out {
        write_file(path, &masked.to_csv())?;
    }
    if let Some(path) = baseline_out {
        write_file(path, &baseline.to_csv())?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Extract(batch) => {
            let mut cfg = batch.config()?;
            cfg.mode = Mode::Eval;
            cfg.stats = None;
            finish_run(run_pipeline(&cfg)?)
        }
        Command::Stats { manifest, out, config } => {
            let cfg = base_config(config.as_deref())?;
            let stats = corpus_stats(&manifest, &cfg.dsp)?;
            write_stats(&out, &stats)?;
            println!(
                "{} frames, {} channels -> {}",
                stats.count,
                stats.num_channels(),
                out.display()
            );
            Ok(())
        }
        Command::Standardize { batch, stats } => {
            let mut cfg = batch.config()?;
            cfg.mode = Mode::Eval;
            cfg.stats = Some(stats);
            finish_run(run_pipeline(&cfg)?)
        }
        Command::Augment {
            batch,
            policy,
            seed,
            mode,
            stats,
        } => {
            let mut cfg = batch.config()?;
            if let Some(p) = policy.resolve()? {
                cfg.policy = p;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if stats.is_some() {
                cfg.stats = stats;
            }
            finish_run(run_pipeline(&cfg)?)
        }
        Command::Run { config, workers } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            finish_run(run_pipeline(&cfg)?)
        }
        Command::Slice {
            manifest,
            fractions,
            seed,
            out,
        } => cmd_slice(&manifest, &fractions, seed, out.as_deref()),
        Command::Render(args) => cmd_render(&args),
        Command::Verify {
            trials,
            seed,
            max_extent,
            max_width,
            max_count,
        } => cmd_verify(trials, seed, max_extent, max_width, max_count),
        Command::Demo {
            policy,
            epochs,
            lr,
            seed,
            out,
            baseline_out,
        } => cmd_demo(&policy, epochs, lr, seed, out.as_deref(), baseline_out.as_deref()),
        Command::Synth { out, count, seed } => {
            let manifest = write_synthetic_corpus(&out, count, seed)?;
            println!("{}", manifest.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Partial(msg)) => {
            eprintln!("specmask: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Setup(msg)) => {
            eprintln!("specmask: {msg}");
            ExitCode::from(2)
        }
    }
}
