//! `vigil simulate`: writes a self-contained synthetic dataset directory.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use vigil_core::io::DATASET_VERSION;
use vigil_core::synth::generate_one;
use vigil_core::{
    save_curve_csv, save_dataset_manifest, save_features, synthetic_anchor_bank, DatasetEntry,
    DatasetManifest, Error, Result, SuspicionCurve,
};

use crate::threads::map_indexed;

#[derive(Args)]
pub struct SimulateArgs {
    /// Directory the dataset is written into (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    /// Run configuration JSON; defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the generator seed from the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of sequences
    #[arg(long)]
    pub num_sequences: Option<usize>,
    /// Overrides the frames per sequence
    #[arg(long)]
    pub frames: Option<usize>,
    /// Multiplies every per-category arrival rate; 0.3 and 3 give the
    /// low- and high-frequency variants
    #[arg(long)]
    pub rate_scale: Option<f64>,
    /// Overrides the context frequency multiplier
    #[arg(long)]
    pub freq_scale: Option<f64>,
    /// Adds frame-level noise to the teacher coefficients
    #[arg(long)]
    pub misspecified: bool,
    /// Worker threads for sequence generation
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let mut cfg = crate::load_run_config(args.config.as_deref())?.synth;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.num_sequences {
        cfg.num_sequences = n;
    }
    if let Some(frames) = args.frames {
        cfg.frames_per_sequence = frames;
    }
    if let Some(scale) = args.rate_scale {
        for rate in &mut cfg.arrival_rates {
            *rate *= scale;
        }
    }
    if let Some(fs) = args.freq_scale {
        cfg.freq_scale = fs;
    }
    if args.misspecified {
        cfg.misspecified = true;
    }
    cfg.validate()?;

    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;

    let cfg_ref = &cfg;
    let out_dir = args.out.as_path();
    let written = map_indexed(cfg.num_sequences, args.threads, move |i| {
        let (item, _context, raw) = generate_one(cfg_ref, i)?;
        let id = item.seq.id.clone();

        let events_name = format!("{id}.events.json");
        let events_path = out_dir.join(&events_name);
        let text = serde_json::to_string_pretty(&item.seq).expect("sequence serializes");
        fs::write(&events_path, text + "\n").map_err(|e| io_err(&events_path, e))?;

        let features_name = format!("{id}.features.json");
        save_features(
            &out_dir.join(&features_name),
            &id,
            item.seq.fps,
            &item.features,
        )?;

        let gt_name = format!("{id}.gt.csv");
        let gt_curve = SuspicionCurve {
            sequence_id: id.clone(),
            raw,
            scores: item.gt,
        };
        save_curve_csv(&out_dir.join(&gt_name), &gt_curve)?;

        Ok((
            DatasetEntry {
                id,
                events: events_name,
                features: features_name,
                gt_curve: gt_name,
            },
            item.seq.events.len(),
        ))
    })?;

    let bank = synthetic_anchor_bank(cfg.seed);
    bank.save(&args.out.join("anchors.json"))?;

    let total_events: usize = written.iter().map(|(_, n)| n).sum();
    let sequences: Vec<DatasetEntry> = written.into_iter().map(|(e, _)| e).collect();
    let manifest = DatasetManifest {
        format_version: DATASET_VERSION,
        seed: cfg.seed,
        config: cfg.clone(),
        sequences,
        anchors: "anchors.json".to_string(),
    };
    save_dataset_manifest(&args.out.join("dataset.json"), &manifest)?;

    println!(
        "wrote {} sequences of {} frames ({} events, seed {}) to {}",
        cfg.num_sequences,
        cfg.frames_per_sequence,
        total_events,
        cfg.seed,
        args.out.display()
    );
    Ok(())
}
