//! `vigil score`: one event track plus either a trained checkpoint or the
//! fixed base coefficients, out comes a curve CSV.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use vigil_core::{
    load_checkpoint, load_features, predict_curve, save_curve_csv, score_sequence,
    CoefficientTriple, Error, Result, Sequence,
};

#[derive(Args)]
#[command(group = clap::ArgGroup::new("coeffs").required(true).args(["checkpoint", "fixed_coeffs"]))]
pub struct ScoreArgs {
    /// Event track JSON
    #[arg(long)]
    pub events: PathBuf,
    /// Trained modulator checkpoint manifest
    #[arg(long, requires = "features")]
    pub checkpoint: Option<PathBuf>,
    /// Score with the base coefficients from the config instead of a
    /// checkpoint; ignores features
    #[arg(long)]
    pub fixed_coeffs: bool,
    /// Feature container manifest for the same sequence
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Run configuration JSON; defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV path
    #[arg(long)]
    pub out: PathBuf,
}

pub fn load_sequence(path: &Path) -> Result<Sequence> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let seq: Sequence = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(seq)
}

pub fn run(args: &ScoreArgs) -> Result<()> {
    let cfg = crate::load_run_config(args.config.as_deref())?;
    let seq = load_sequence(&args.events)?;

    let curve = if let Some(ckpt) = &args.checkpoint {
        let params = load_checkpoint(ckpt)?;
        let features_path = args.features.as_ref().expect("clap enforces --features");
        let (manifest, features) = load_features(features_path)?;
        if manifest.sequence_id != seq.id {
            return Err(Error::Data(format!(
                "feature container belongs to '{}' but the event track is '{}'",
                manifest.sequence_id, seq.id
            )));
        }
        if manifest.frames != seq.num_frames {
            return Err(Error::Data(format!(
                "feature container has {} frames but the event track has {}",
                manifest.frames, seq.num_frames
            )));
        }
        predict_curve(&params, &seq, &features)?
    } else {
        let base = CoefficientTriple {
            alpha: cfg.omega.alpha,
            beta: cfg.omega.beta,
            gamma: cfg.omega.gamma,
        };
        let history = vec![base; seq.num_frames];
        score_sequence(&seq, &history)?
    };

    crate::ensure_parent(&args.out)?;
    save_curve_csv(&args.out, &curve)?;
    println!(
        "scored '{}' ({} frames, {} events) -> {}",
        seq.id,
        seq.num_frames,
        seq.events.len(),
        args.out.display()
    );
    Ok(())
}
