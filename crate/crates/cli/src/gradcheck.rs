//! `vigil gradcheck`: end-to-end analytic-vs-numeric gradient comparison.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use vigil_core::{gradcheck, Error, GradCheckConfig, Result};

#[derive(Args)]
pub struct GradcheckArgs {
    /// Number of random draws
    #[arg(long, default_value_t = 20)]
    pub draws: usize,
    /// Frames per drawn sequence
    #[arg(long, default_value_t = 24)]
    pub frames: usize,
    /// Seed for draws and probe selection
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative tolerance on each partial derivative
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Absolute fallback tolerance for near-zero partials
    #[arg(long)]
    pub abs_tol: Option<f64>,
    /// Optional JSON report path
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &GradcheckArgs) -> Result<()> {
    let mut cfg = GradCheckConfig::default();
    cfg.draws = args.draws;
    cfg.frames = args.frames;
    cfg.seed = args.seed;
    if let Some(rel) = args.rel_tol {
        cfg.rel_tol = rel;
    }
    if let Some(abs) = args.abs_tol {
        cfg.abs_tol = abs;
    }
    let report = gradcheck(&cfg)?;

    if let Some(out) = &args.out {
        crate::ensure_parent(out)?;
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(out, text + "\n").map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
    }

    println!(
        "checked {} partials over {} draws: worst rel {:.3e}, worst abs {:.3e}",
        report.checked, report.draws, report.worst_rel, report.worst_abs
    );
    if report.passed {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL ({} partials out of tolerance)", report.failures.len());
        Err(Error::Numeric(format!(
            "gradient check failed: {} of {} partials out of tolerance (worst rel {:.3e})",
            report.failures.len(),
            report.checked,
            report.worst_rel
        )))
    }
}
