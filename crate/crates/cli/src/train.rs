//! `vigil train`: fits the coefficient modulator on a dataset directory
//! produced by `simulate` and writes a checkpoint plus a progress report.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use vigil_core::seeding::derive_seed;
use vigil_core::train::EpochStats;
use vigil_core::{
    load_curve_csv, load_dataset_manifest, load_features, save_checkpoint, split_dataset, train,
    DatasetManifest, Error, ModulatorInit, ModulatorParams, Result, TrainConfig, TrainSequence,
};

use crate::score::load_sequence;
use crate::threads::map_indexed;

// keep the init and shuffle RNG streams away from the generator's
// per-sequence streams in case one seed is reused across commands
const INIT_STREAM: u64 = 0x1A17;
const SHUFFLE_STREAM: u64 = 0x50F1;

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset directory written by `simulate`
    #[arg(long)]
    pub data: PathBuf,
    /// Run configuration JSON; defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for weight initialization and epoch shuffling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the epoch count from the config
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Directory for checkpoint and report (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for dataset loading
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

/// Loads every sequence of a dataset directory into training form.
pub fn load_train_set(
    data_dir: &Path,
    threads: usize,
) -> Result<(DatasetManifest, Vec<TrainSequence>)> {
    let manifest = load_dataset_manifest(&data_dir.join("dataset.json"))?;
    let entries = &manifest.sequences;
    let items = map_indexed(entries.len(), threads, |i| {
        let entry = &entries[i];
        let seq = load_sequence(&data_dir.join(&entry.events))?;
        if seq.id != entry.id {
            return Err(Error::Data(format!(
                "manifest entry '{}' points at an event track named '{}'",
                entry.id, seq.id
            )));
        }
        let (fm, features) = load_features(&data_dir.join(&entry.features))?;
        if fm.sequence_id != seq.id || fm.frames != seq.num_frames {
            return Err(Error::Data(format!(
                "feature container for '{}' does not match its event track",
                entry.id
            )));
        }
        let gt = load_curve_csv(&data_dir.join(&entry.gt_curve), &entry.id)?;
        let item = TrainSequence {
            seq,
            features,
            gt: gt.scores,
        };
        item.validate()?;
        Ok(item)
    })?;
    Ok((manifest, items))
}

fn print_epoch(stats: &EpochStats) {
    let r2 = stats
        .val
        .r2
        .map_or("n/a".to_string(), |v| format!("{v:.4}"));
    match stats.train_loss {
        Some(loss) => println!(
            "epoch {:>3}  loss {:.4e}  grad {:.3e}  val mse {:.4e}  diff-mse {:.4e}  r2 {}",
            stats.epoch,
            loss,
            stats.grad_norm_mean.unwrap_or(f64::NAN),
            stats.val.mse,
            stats.val.diff_mse,
            r2
        ),
        None => println!(
            "epoch {:>3}  untrained baseline   val mse {:.4e}  diff-mse {:.4e}  r2 {}",
            stats.epoch, stats.val.mse, stats.val.diff_mse, r2
        ),
    }
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let cfg = crate::load_run_config(args.config.as_deref())?;
    let (_manifest, items) = load_train_set(&args.data, args.threads)?;
    let (train_set, val_set) = split_dataset(items, cfg.train.val_fraction, args.seed)?;
    println!(
        "loaded {} training / {} validation sequences",
        train_set.len(),
        val_set.len()
    );

    let mut params = ModulatorParams::init(&ModulatorInit {
        hidden: cfg.hidden,
        omega: cfg.omega.as_array(),
        seed: derive_seed(args.seed, INIT_STREAM),
    })?;
    let tc = TrainConfig {
        epochs: args.epochs.unwrap_or(cfg.train.epochs),
        optimizer: cfg.train.optimizer.clone(),
        loss: cfg.loss.clone(),
        shuffle_seed: derive_seed(args.seed, SHUFFLE_STREAM),
    };
    let report = train(&mut params, &train_set, &val_set, &tc)?;
    for stats in &report.epochs {
        print_epoch(stats);
    }

    fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    let ckpt_path = args.out.join("checkpoint.json");
    save_checkpoint(&params, &ckpt_path)?;
    let report_path = args.out.join("train_report.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, text + "\n").map_err(|e| Error::Io {
        path: report_path.clone(),
        source: e,
    })?;

    println!(
        "trained {} epochs in {:.1}s, checkpoint at {}",
        report.epochs.len() - 1,
        report.wall_seconds,
        ckpt_path.display()
    );
    Ok(())
}
