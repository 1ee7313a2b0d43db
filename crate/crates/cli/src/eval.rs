//! `vigil eval`: compares predicted suspicion curves against the reference
//! curves of a dataset and writes one metrics JSON.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use vigil_core::eval::{
    curve_metrics, mean_average_precision, segment_levels, CurveMetrics, LevelSegment, MapReport,
    SequenceDetections,
};
use vigil_core::{load_curve_csv, load_dataset_manifest, Error, Result};

use crate::threads::map_indexed;

#[derive(Args)]
pub struct EvalArgs {
    /// Dataset directory holding the reference curves
    #[arg(long)]
    pub data: PathBuf,
    /// Directory of predicted curves, one `<id>.csv` per sequence
    #[arg(long)]
    pub curves: PathBuf,
    /// Run configuration JSON; defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output path of the metrics JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV with one metrics row per sequence
    #[arg(long)]
    pub per_sequence: Option<PathBuf>,
    /// Worker threads for loading and per-sequence metrics
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Serialize)]
struct SequenceReport {
    id: String,
    curve: CurveMetrics,
    diff_mse: f64,
    pred_segments: usize,
    gt_segments: usize,
}

#[derive(Serialize)]
struct PooledReport {
    sequences: usize,
    frames: usize,
    mse: f64,
    mae: f64,
    r2: Option<f64>,
    diff_mse: f64,
}

#[derive(Serialize)]
struct EvalReport {
    sequences: Vec<SequenceReport>,
    pooled: PooledReport,
    detection: MapReport,
}

struct PerSequence {
    report: SequenceReport,
    pred: Vec<f64>,
    gt: Vec<f64>,
    pred_segments: Vec<LevelSegment>,
    gt_segments: Vec<LevelSegment>,
    diff_sum: f64,
    diff_count: usize,
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let cfg = crate::load_run_config(args.config.as_deref())?;
    let manifest = load_dataset_manifest(&args.data.join("dataset.json"))?;
    let entries = &manifest.sequences;
    let seg_params = &cfg.segmentation;

    let per_seq = map_indexed(entries.len(), args.threads, |i| {
        let entry = &entries[i];
        let gt = load_curve_csv(&args.data.join(&entry.gt_curve), &entry.id)?;
        let pred_path = args.curves.join(format!("{}.csv", entry.id));
        let pred = load_curve_csv(&pred_path, &entry.id)?;
        if pred.scores.len() != gt.scores.len() {
            return Err(Error::Data(format!(
                "'{}': predicted curve has {} frames, reference has {}",
                entry.id,
                pred.scores.len(),
                gt.scores.len()
            )));
        }
        let metrics = curve_metrics(&pred.scores, &gt.scores)?;
        let mut diff_sum = 0.0;
        for t in 1..pred.scores.len() {
            let dp = pred.scores[t] - pred.scores[t - 1];
            let dg = gt.scores[t] - gt.scores[t - 1];
            diff_sum += (dp - dg) * (dp - dg);
        }
        let diff_count = pred.scores.len().saturating_sub(1);
        let pred_segments = segment_levels(&pred.scores, seg_params)?;
        let gt_segments = segment_levels(&gt.scores, seg_params)?;
        Ok(PerSequence {
            report: SequenceReport {
                id: entry.id.clone(),
                curve: metrics,
                diff_mse: if diff_count == 0 {
                    0.0
                } else {
                    diff_sum / diff_count as f64
                },
                pred_segments: pred_segments.len(),
                gt_segments: gt_segments.len(),
            },
            pred: pred.scores,
            gt: gt.scores,
            pred_segments,
            gt_segments,
            diff_sum,
            diff_count,
        })
    })?;

    let mut pooled_pred = Vec::new();
    let mut pooled_gt = Vec::new();
    let mut diff_sum = 0.0;
    let mut diff_count = 0usize;
    for s in &per_seq {
        pooled_pred.extend_from_slice(&s.pred);
        pooled_gt.extend_from_slice(&s.gt);
        diff_sum += s.diff_sum;
        diff_count += s.diff_count;
    }
    let pooled_metrics = curve_metrics(&pooled_pred, &pooled_gt)?;
    let pooled = PooledReport {
        sequences: per_seq.len(),
        frames: pooled_pred.len(),
        mse: pooled_metrics.mse,
        mae: pooled_metrics.mae,
        r2: pooled_metrics.r2,
        diff_mse: if diff_count == 0 {
            0.0
        } else {
            diff_sum / diff_count as f64
        },
    };

    let detections: Vec<SequenceDetections<'_>> = per_seq
        .iter()
        .map(|s| SequenceDetections {
            pred: &s.pred_segments,
            gt: &s.gt_segments,
        })
        .collect();
    let detection = mean_average_precision(&detections, &cfg.eval.iou_thresholds)?;

    let report = EvalReport {
        sequences: per_seq.into_iter().map(|s| s.report).collect(),
        pooled,
        detection,
    };
    crate::ensure_parent(&args.out)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&args.out, text + "\n").map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;

    if let Some(path) = &args.per_sequence {
        // undefined r2 (constant reference) stays an empty field
        let mut csv =
            String::from("id,mse,mae,r2,diff_mse,pred_segments,gt_segments\n");
        for s in &report.sequences {
            let r2 = s.curve.r2.map_or(String::new(), |v| format!("{v:.8e}"));
            csv.push_str(&format!(
                "{},{:.8e},{:.8e},{r2},{:.8e},{},{}\n",
                s.id, s.curve.mse, s.curve.mae, s.diff_mse, s.pred_segments, s.gt_segments
            ));
        }
        crate::ensure_parent(path)?;
        fs::write(path, csv).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }

    let map_str = report
        .detection
        .mean_map
        .map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "evaluated {} sequences: pooled mse {:.4e}, mae {:.4e}, mean mAP {}",
        report.pooled.sequences, report.pooled.mse, report.pooled.mae, map_str
    );
    println!("metrics written to {}", args.out.display());
    Ok(())
}
