//! `vigil anchors`: pairwise similarity report for a concept anchor bank.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use vigil_core::anchor::{similarity_matrix, AnchorBank};
use vigil_core::{synthetic_anchor_bank, Error, Result};

#[derive(Args)]
pub struct AnchorsArgs {
    /// Existing anchor bank manifest; a synthetic bank is generated when
    /// omitted
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Seed for the synthetic bank
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct StatsFile {
    mean: f64,
    std: f64,
    count: usize,
}

pub fn run(args: &AnchorsArgs) -> Result<()> {
    let (bank, synthesized) = match &args.bank {
        Some(path) => (AnchorBank::load(path)?, false),
        None => (synthetic_anchor_bank(args.seed), true),
    };
    let (matrix, stats) = similarity_matrix(&bank);
    let names = bank.names();
    let n = names.len();

    fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;

    let mut csv = String::from("anchor");
    for name in names {
        csv.push(',');
        csv.push_str(name);
    }
    csv.push('\n');
    for (i, name) in names.iter().enumerate() {
        csv.push_str(name);
        for j in 0..n {
            csv.push_str(&format!(",{:.6}", matrix[i * n + j]));
        }
        csv.push('\n');
    }
    let csv_path = args.out.join("similarity.csv");
    fs::write(&csv_path, csv).map_err(|e| Error::Io {
        path: csv_path.clone(),
        source: e,
    })?;

    let stats_file = StatsFile {
        mean: stats.mean,
        std: stats.std,
        count: stats.count,
    };
    let stats_path = args.out.join("stats.json");
    let text = serde_json::to_string_pretty(&stats_file).expect("stats serialize");
    fs::write(&stats_path, text + "\n").map_err(|e| Error::Io {
        path: stats_path.clone(),
        source: e,
    })?;

    if synthesized {
        bank.save(&args.out.join("anchors.json"))?;
    }

    println!(
        "{} anchors: off-diagonal similarity {:.4} +/- {:.4} over {} pairs",
        n, stats.mean, stats.std, stats.count
    );
    Ok(())
}
