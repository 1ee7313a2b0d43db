//! `vigil analyze`: temporal statistics of one suspicion curve.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use vigil_core::eval::{autocorrelation, cumulative_effect};
use vigil_core::{load_curve_csv, Error, Result};

use crate::svg::polyline_chart;

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Curve CSV to analyze
    #[arg(long)]
    pub curve: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    /// Largest lag, clamped to frames - 1
    #[arg(long, default_value_t = 60)]
    pub max_lag: usize,
    /// Also render SVG charts
    #[arg(long)]
    pub svg: bool,
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn run(args: &AnalyzeArgs) -> Result<()> {
    let stem = args
        .curve
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "curve".to_string());
    let curve = load_curve_csv(&args.curve, &stem)?;
    let frames = curve.scores.len();

    let max_lag = args.max_lag.min(frames.saturating_sub(1));
    if max_lag == 0 {
        return Err(Error::invalid(format!(
            "a {frames}-frame curve leaves no room for any lag"
        )));
    }
    let ac = autocorrelation(&curve.scores, max_lag)?;
    let cumulative = cumulative_effect(&curve.scores);

    fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;

    // entry k is lag k starting at the trivial r(0) = 1; undefined lags
    // (constant window on either side) serialize as an empty field
    let mut ac_csv = String::from("lag,autocorrelation\n");
    for (lag, v) in ac.iter().enumerate() {
        match v {
            Some(v) => ac_csv.push_str(&format!("{lag},{v:.8e}\n")),
            None => ac_csv.push_str(&format!("{lag},\n")),
        }
    }
    write(&args.out.join("autocorrelation.csv"), ac_csv)?;

    let mut cum_csv = String::from("frame,cumulative\n");
    for (t, v) in cumulative.iter().enumerate() {
        cum_csv.push_str(&format!("{t},{v:.8e}\n"));
    }
    write(&args.out.join("cumulative.csv"), cum_csv)?;

    if args.svg {
        let chart = polyline_chart(
            &format!("{stem}: raw and squashed score"),
            &[("raw", &curve.raw[..]), ("score", &curve.scores[..])],
        );
        write(&args.out.join("curve.svg"), chart)?;
        // charts cannot hold gaps, so undefined lags flatten to zero there
        let ac_plot: Vec<f64> = ac.iter().map(|v| v.unwrap_or(0.0)).collect();
        let chart = polyline_chart(
            &format!("{stem}: autocorrelation by lag"),
            &[("autocorrelation", &ac_plot[..])],
        );
        write(&args.out.join("autocorrelation.svg"), chart)?;
    }

    let defined = ac.iter().filter(|v| v.is_some()).count();
    println!(
        "analyzed {frames} frames: {defined}/{} lags defined, outputs in {}",
        ac.len(),
        args.out.display()
    );
    Ok(())
}
