//! `cdgan run <config>` and `cdgan compare <report...>`.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::autodiff::Matrix;
use crate::data::{gen_shapes, load_idx, split, ImageBatch};
use crate::error::{CdganError, Result};
use crate::eval::{evaluate, ClusterReport};
use crate::latent::LatentBatch;
use crate::models::{checkpoint, encoder_forward, generator_forward};
use crate::rng::{derive, seeded, Rng};
use crate::train::{snapshot, train_with, EvalSet, Observer, StepRecord, Trainer};

pub use config::{DatasetSource, ExperimentConfig};
pub use output::{render_table, CompareRow, RunReport, TableFormat};

/// Root directory prepended to relative output directories.
pub const OUT_ROOT_ENV: &str = "CDGAN_OUT_ROOT";

const STREAM_SPLIT: u64 = 11;
const STREAM_GRID: u64 = 12;
const STREAM_FINAL: u64 = 13;

#[derive(Debug, Parser)]
#[command(name = "cdgan", version, about = "Contrastive disentanglement GAN experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate one experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override the training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the number of training steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Root for relative output directories.
        #[arg(long, env = OUT_ROOT_ENV, hide_env_values = true)]
        out_root: Option<PathBuf>,
    },
    /// Tabulate ACC/NMI/ARI from report.json files.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: TableFormat,
    },
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            seed,
            out,
            steps,
            out_root,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(s) = steps {
                cfg.train.steps = s;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            if let Some(root) = out_root {
                if cfg.out.is_relative() {
                    cfg.out = root.join(&cfg.out);
                }
            }
            let report = run_experiment(&cfg)?;
            println!(
                "{}: acc {:.4} nmi {:.4} ari {:.4} -> {}",
                report.name,
                report.scores.acc,
                report.scores.nmi,
                report.scores.ari,
                cfg.out.display()
            );
            Ok(())
        }
        Command::Compare { reports, format } => {
            let rows = compare(&reports);
            if rows.is_empty() {
                return Err(CdganError::validation("no readable reports"));
            }
            print!("{}", render_table(&rows, format));
            Ok(())
        }
    }
}

/// Reads every report, warning about and skipping the malformed ones.
pub fn compare(paths: &[PathBuf]) -> Vec<CompareRow> {
    paths
        .iter()
        .filter_map(|p| match output::read_compare_row(p) {
            Ok(row) => Some(row),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", p.display());
                None
            }
        })
        .collect()
}

/// Train/test split and class count for an experiment.
pub struct PreparedData {
    pub train: ImageBatch,
    pub test: ImageBatch,
    pub k: usize,
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (full, split_seed) = match &cfg.dataset {
        DatasetSource::Shapes(s) => (gen_shapes(s, &mut seeded(s.seed))?, s.seed),
        DatasetSource::Idx { images, labels } => (load_idx(images, Some(labels.as_path()))?, 0),
    };
    let k = match (cfg.k, full.classes()) {
        (Some(k), _) => k,
        (None, Some(k)) => k,
        (None, None) => return Err(CdganError::validation("dataset has no labels; set k in [model]")),
    };
    let (train, test) = split(&full, cfg.test_fraction, &mut derive(split_seed, STREAM_SPLIT))?;
    if test.is_empty() || train.is_empty() {
        return Err(CdganError::validation("test_fraction leaves an empty train or test set"));
    }
    Ok(PreparedData { train, test, k })
}

/// Fixed latents for image grids: row `r` uses class `r`, column `j` shares `z_j`.
pub fn grid_latents(k: usize, columns: usize, d_z: usize, sigma: f64, rng: &mut Rng) -> Result<LatentBatch<f32>> {
    let zs = crate::latent::sample_latent::<f32>(columns, d_z, k, sigma, &crate::latent::uniform_prior(k), rng)?.z;
    let z = Matrix::from_fn(k * columns, d_z, |i, d| zs.get(i % columns, d));
    let c: Vec<usize> = (0..k * columns).map(|i| i / columns).collect();
    LatentBatch::from_parts(z, c, k, sigma)
}

fn write_grid_latents(path: &Path, latent: &LatentBatch<f32>, columns: usize) -> Result<()> {
    let header: Vec<String> = (0..latent.d_z()).map(|d| format!("z_{d}")).collect();
    let mut s = format!("row,col,c,{}\n", header.join(","));
    for i in 0..latent.len() {
        s.push_str(&format!("{},{},{}", i / columns, i % columns, latent.c_index[i]));
        for v in latent.z.row(i) {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    output::write_file(path, s.as_bytes())
}

struct RunObserver<'a> {
    out: &'a Path,
    grid: LatentBatch<f32>,
    columns: usize,
    hw: (usize, usize),
    history: output::HistoryWriter,
}

impl RunObserver<'_> {
    fn write_grid(&self, bundle: &crate::models::ModelBundle<f32>, step: usize) -> Result<()> {
        let images = generator_forward(bundle, &self.grid)?;
        let bytes = output::grid_pgm(&images, self.grid.classes(), self.columns, self.hw.0, self.hw.1)?;
        output::write_file(&self.out.join(format!("grid_{step}.pgm")), &bytes)
    }
}

impl Observer for RunObserver<'_> {
    fn on_step(&mut self, trainer: &Trainer, record: &StepRecord, snapshot: Option<&ClusterReport>) -> Result<()> {
        self.history.record(record, snapshot)?;
        if snapshot.is_some() {
            self.write_grid(&trainer.bundle, record.step)?;
            checkpoint::save(&trainer.bundle, self.out.join("checkpoint.bin"))?;
        }
        Ok(())
    }
}

/// Runs one experiment and writes every artifact under `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let data = prepare_data(cfg)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.model.k = data.k;
    train_cfg.model.pixels = data.train.pixels();
    train_cfg.validate()?;

    std::fs::create_dir_all(&cfg.out).map_err(|e| CdganError::io(&cfg.out, e))?;
    output::write_file(&cfg.out.join("config.echo"), cfg.to_text().as_bytes())?;

    let grid = grid_latents(
        data.k,
        cfg.grid_columns,
        train_cfg.model.d_z,
        train_cfg.sigma,
        &mut derive(train_cfg.seed, STREAM_GRID),
    )?;
    write_grid_latents(&cfg.out.join("grid_latents.csv"), &grid, cfg.grid_columns)?;

    let test_labels = data.test.labels.clone().expect("split keeps labels");
    let eval_set = EvalSet {
        images: &data.test.images,
        labels: &test_labels,
        config: &cfg.eval,
    };
    let mut observer = RunObserver {
        out: &cfg.out,
        grid,
        columns: cfg.grid_columns,
        hw: (data.train.height, data.train.width),
        history: output::HistoryWriter::create(&cfg.out.join("history.csv"))?,
    };
    let (bundle, history) = train_with(&data.train, Some(&eval_set), &train_cfg, &mut observer)?;

    let scores = match history.snapshots.last() {
        Some((_, r)) => r.clone(),
        None => {
            // no steps were run: score and record the initialization
            let trainer = Trainer::with_bundle(train_cfg.clone(), bundle.clone())?;
            observer.write_grid(&bundle, 0)?;
            checkpoint::save(&bundle, cfg.out.join("checkpoint.bin"))?;
            snapshot(&trainer, &eval_set)?
        }
    };
    let f = encoder_forward(&bundle, &data.test.images)?.f;
    output::write_features(&cfg.out.join("features.csv"), &f, &test_labels)?;

    let report = RunReport {
        name: cfg.name.clone(),
        seed: train_cfg.seed,
        steps: train_cfg.steps,
        scores,
    };
    let json = serde_json::to_string_pretty(&report)?;
    output::write_file(&cfg.out.join("report.json"), format!("{json}\n").as_bytes())?;
    Ok(report)
}

/// Re-scores a saved checkpoint on an experiment's test split.
pub fn rescore(cfg: &ExperimentConfig, checkpoint_path: &Path) -> Result<ClusterReport> {
    let data = prepare_data(cfg)?;
    let bundle = checkpoint::load(checkpoint_path)?;
    let labels = data.test.labels.clone().expect("split keeps labels");
    evaluate(
        &bundle,
        &data.test.images,
        &labels,
        data.k,
        &cfg.eval,
        &mut derive(cfg.train.seed, STREAM_FINAL),
    )
}
