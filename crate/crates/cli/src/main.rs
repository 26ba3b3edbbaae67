// SPDX-License-Identifier: Apache-2.0

//! `fairpar` command-line driver.
//!
//! Exit codes:
//! - 0: success
//! - 1: internal error
//! - 2: usage error (bad flags)
//! - 3: invalid configuration or malformed JSON input
//! - 4: unreadable or invalid data, checkpoint, or output location
//! - 5: numerical failure (non-finite values, empty batches)

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fairpar::augmenter::{format_probe_csv, probe_curves};
use fairpar::data::{generate_synthetic, save_dataset};
use fairpar::pipeline::{evaluate, fit, run, write_fitted, write_report, DatasetSource, NodeSelection};
use fairpar::{compute_direction, Checkpoint, Error, RunConfig, Scheme, Scope, SensitiveDirection};

#[derive(Parser)]
#[command(name = "fairpar", version, about = "Fair adapter training and provable fairness certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON with a `version` field); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for certification; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic dataset to `<out>/dataset.csv`.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train adapter and classifier; writes checkpoint.json and history.csv.
    Train {
        #[command(flatten)]
        common: Common,
        /// Embedding CSV; overrides the config's dataset.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        scheme: Option<Scheme>,
    },
    /// Certify nodes with a trained checkpoint; writes report and certificates.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        nodes: Option<NodeSelection>,
    },
    /// Sensitive-attribute probe along the direction and rotated controls.
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Shift grid in units of the direction, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true,
              default_value = "-3,-2.5,-2,-1.5,-1,-0.5,0,0.5,1,1.5,2,2.5,3")]
        grid: Vec<f64>,
        /// Control angles in degrees, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "30,60,90")]
        angles: Vec<f64>,
        /// Random controls per angle.
        #[arg(long, default_value_t = 100)]
        controls: usize,
    },
    /// Generate or load data, train, harden, certify and report.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        nodes: Option<NodeSelection>,
    },
}

fn load_config(common: &Common, data: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(path) = data {
        cfg.dataset = DatasetSource::Path(path.to_path_buf());
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => bail!(Error::InvalidConfig("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
    }
}

fn direction_for(ckpt: &Checkpoint, ds: &fairpar::EmbeddingDataset) -> Result<SensitiveDirection> {
    Ok(match &ckpt.direction {
        Some(alpha) => {
            let fresh = compute_direction(ds, Scope::Train).ok();
            let (n_pos, n_neg) = fresh.map_or((1, 1), |d| (d.n_pos, d.n_neg));
            SensitiveDirection::new(alpha.clone(), n_pos, n_neg)
        }
        None => compute_direction(ds, Scope::Train)?,
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common } => {
            let cfg = load_config(&common, None)?;
            let DatasetSource::Synthetic(spec) = &cfg.dataset else {
                bail!(Error::InvalidConfig("generate needs a synthetic dataset in the config".into()));
            };
            let ds = generate_synthetic(spec, cfg.seed)?;
            prepare_out(&common.out)?;
            save_dataset(&ds, common.out.join("dataset.csv"))?;
            eprintln!("wrote {} nodes to {}", ds.len(), common.out.join("dataset.csv").display());
        }
        Command::Train { common, data, scheme } => {
            let mut cfg = load_config(&common, data.as_deref())?;
            if let Some(s) = scheme {
                cfg.train.scheme = s;
            }
            cfg.validate()?;
            let ds = cfg.load_data()?;
            let fitted = fit(&ds, &cfg)?;
            prepare_out(&common.out)?;
            write_fitted(&fitted, &common.out)?;
            eprintln!("wrote checkpoint and history to {}", common.out.display());
        }
        Command::Certify { common, data, checkpoint, nodes } => {
            let mut cfg = load_config(&common, data.as_deref())?;
            if let Some(n) = nodes {
                cfg.nodes = n;
            }
            cfg.validate()?;
            let ds = cfg.load_data()?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let direction = direction_for(&ckpt, &ds)?;
            let (report, _) = with_threads(common.threads, || evaluate(&ds, &ckpt.model, &direction, &cfg))??;
            prepare_out(&common.out)?;
            write_report(&report, &common.out)?;
            print!("{}", report.summary());
        }
        Command::Probe { common, data, grid, angles, controls } => {
            let cfg = load_config(&common, data.as_deref())?;
            cfg.validate()?;
            let ds = cfg.load_data()?;
            let direction = compute_direction(&ds, Scope::Train)?;
            let points = probe_curves(&ds, &direction, &grid, &angles, controls, &cfg.probe, cfg.seed)?;
            prepare_out(&common.out)?;
            let path = common.out.join("probe.csv");
            fs::write(&path, format_probe_csv(&points)).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        Command::Run { common, data, scheme, nodes } => {
            let mut cfg = load_config(&common, data.as_deref())?;
            if let Some(s) = scheme {
                cfg.train.scheme = s;
            }
            if let Some(n) = nodes {
                cfg.nodes = n;
            }
            let out = with_threads(common.threads, || run(&cfg))??;
            prepare_out(&common.out)?;
            write_report(&out.report, &common.out)?;
            write_fitted(&out.fitted, &common.out)?;
            print!("{}", out.report.summary());
        }
    }
    Ok(())
}

/// Exit code for an error, per the table in the crate docs.
fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Error>() {
        return match e.root() {
            Error::InvalidConfig(_) | Error::Json(_) => 3,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidDataset(_)
            | Error::DimensionMismatch { .. }
            | Error::EmptyGroup(_)
            | Error::LabelOutOfRange { .. }
            | Error::Checkpoint(_) => 4,
            Error::NonFinite(_) | Error::EmptyBatch | Error::ProbabilityOutOfRange(_) => 5,
            Error::Stage { .. } => 1,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 4;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
