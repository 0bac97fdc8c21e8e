//! Seeded experiment sweeps with JSON and CSV reports.

use std::fmt::Write as _;

use fraudjudger_core::experiments::{
    run_discovery_experiment, run_label_ratio_sweep, run_latent_dim_sweep, LABEL_RATIOS, LATENT_DIMS, N_CLUSTERS,
};

use crate::args::{ExperimentArgs, Which};
use crate::context::Context;
use crate::error::{CliError, Result};
use crate::output::OutputDir;

pub fn run(ctx: &Context, args: &ExperimentArgs) -> Result<OutputDir> {
    let out = ctx.output("experiment")?;
    let all = args.which == Which::All;
    let s = &ctx.settings;

    if all || args.which == Which::LabelRatio {
        let ratios = args.ratios.clone().unwrap_or_else(|| LABEL_RATIOS.to_vec());
        if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(CliError::Usage("--ratios must lie in [0, 1]".into()));
        }
        let report = run_label_ratio_sweep(s, &ratios)?;
        let mut csv = String::from("seed,label_ratio,n_labeled,auc,baseline_auc,f1\n");
        for r in &report.runs {
            let _ = writeln!(csv, "{},{},{},{},{},{}", r.seed, r.label_ratio, r.n_labeled, r.test.auc, r.baseline_auc, r.test.f1);
        }
        out.write("label_ratio.csv", csv)?;
        out.write_json("label_ratio.json", &report)?;
        for (r, auc) in &report.mean_auc {
            println!("label ratio {r}: mean auc {auc:.4}");
        }
    }

    if all || args.which == Which::LatentDim {
        let dims = args.dims.clone().unwrap_or_else(|| LATENT_DIMS.to_vec());
        if dims.contains(&0) {
            return Err(CliError::Usage("--dims must be positive".into()));
        }
        let report = run_latent_dim_sweep(s, &dims, ctx.n_cluster())?;
        let mut csv = String::from("seed,latent_dim,n_cluster,cluster_recall,ami\n");
        for r in &report.runs {
            for p in &r.curve {
                let _ = writeln!(csv, "{},{},{},{},{}", r.seed, r.latent_dim, p.n_cluster, p.cluster_recall, p.ami);
            }
        }
        out.write("latent_dim.csv", csv)?;
        out.write_json("latent_dim.json", &report)?;
        println!("latent dim sweep: best dimension {}", report.best_dim());
    }

    if all || args.which == Which::Discovery {
        let clusters = match (&args.clusters, ctx.global.n_cluster) {
            (Some(c), _) => c.clone(),
            (None, Some(k)) => vec![k],
            (None, None) => N_CLUSTERS.to_vec(),
        };
        if clusters.contains(&0) {
            return Err(CliError::Usage("--clusters must be positive".into()));
        }
        let runs = run_discovery_experiment(s, &clusters)?;
        let mut disc = String::from(
            "seed,n_cluster,t_fraud,n_fraud_groups,potential,novel_total,novel_captured,capture_rate,potential_fp_share,benign_fpr,novel_detected\n",
        );
        let mut recall = String::from("seed,representation,n_cluster,cluster_recall,ami\n");
        for r in &runs {
            for p in &r.points {
                let _ = writeln!(
                    disc,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.seed,
                    p.n_cluster,
                    p.t_fraud,
                    p.n_fraud_groups,
                    p.potential,
                    p.novel_total,
                    p.novel_captured,
                    p.capture_rate,
                    p.potential_fp_share,
                    p.benign_fpr,
                    p.novel_detected
                );
            }
            for (name, curve) in [("raw", &r.recall.raw), ("latent", &r.recall.latent)] {
                for p in curve {
                    let _ = writeln!(recall, "{},{name},{},{},{}", r.seed, p.n_cluster, p.cluster_recall, p.ami);
                }
            }
        }
        out.write("discovery.csv", disc)?;
        out.write("cluster_recall.csv", recall)?;
        out.write_json("discovery.json", &runs)?;
        println!("discovery: {} seeds x {} cluster counts", runs.len(), clusters.len());
    }
    out.write_json("settings.json", s)?;
    Ok(out)
}
