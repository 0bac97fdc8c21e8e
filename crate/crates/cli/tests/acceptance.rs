//! Acceptance run: one PASS/FAIL line per criterion, with the measured
//! values. Exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use fraudjudger_core::experiments::{
    run_discovery_experiment, run_label_ratio_sweep, run_latent_dim_sweep, DiscoveryRun, ExperimentSettings,
    LabelRatioReport, LABEL_RATIOS, LATENT_DIMS, N_CLUSTERS,
};

#[allow(dead_code)]
#[path = "../../core/tests/gradients.rs"]
mod gradients;
#[allow(dead_code)]
#[path = "../../core/tests/losses.rs"]
mod losses;
#[allow(dead_code)]
#[path = "../../core/tests/metric_oracles.rs"]
mod metric_oracles;
#[allow(dead_code)]
#[path = "../../core/tests/pipeline_oracles.rs"]
mod pipeline_oracles;

const SEMI_MIN_AUC: f64 = 0.90;
const SEMI_MIN_MARGIN: f64 = 0.02;
const SEMI_BUDGET: Duration = Duration::from_secs(15 * 60);
const GRADIENT_BUDGET: Duration = Duration::from_secs(60);
const MIN_CAPTURE: f64 = 0.8;
const MAX_POTENTIAL_FP: f64 = 0.2;
const MAX_DIM1_RECALL: f64 = 0.1;
const MIN_DETECT_RECALL: f64 = 0.85;
const T_LABEL: f64 = 0.10;

struct Outcome {
    name: &'static str,
    pass: bool,
}

fn report(outcomes: &mut Vec<Outcome>, name: &'static str, pass: bool, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    outcomes.push(Outcome { name, pass });
}

/// Runs a suite of assertions; a panic or an overrun budget is a failure.
fn suite(outcomes: &mut Vec<Outcome>, name: &'static str, budget: Option<Duration>, f: impl FnOnce()) {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let took = start.elapsed();
    let over = budget.is_some_and(|b| took > b);
    let limit = budget.map_or(String::new(), |b| format!(" (<= {}s)", b.as_secs()));
    let detail = match &result {
        Ok(()) => format!("all checks passed in {:.1}s{limit}", took.as_secs_f64()),
        Err(e) => format!(
            "assertion failed: {}",
            e.downcast_ref::<String>().map(String::as_str).or_else(|| e.downcast_ref::<&str>().copied()).unwrap_or("panic")
        ),
    };
    report(outcomes, name, result.is_ok() && !over, detail);
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Adjacent decreases in a sequence.
fn inversions(v: &[f64]) -> usize {
    v.windows(2).filter(|w| w[1] < w[0]).count()
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
}

fn semi_criteria(outcomes: &mut Vec<Outcome>, at_label: &LabelRatioReport, took: Duration) {
    let auc = mean(at_label.runs.iter().map(|r| r.test.auc));
    let margin = mean(at_label.runs.iter().map(|r| r.test.auc - r.baseline_auc));
    let per_seed: Vec<String> = at_label
        .runs
        .iter()
        .map(|r| format!("seed {} auc {:.3} baseline {:.3}", r.seed, r.test.auc, r.baseline_auc))
        .collect();
    report(
        outcomes,
        "semi-supervised learning",
        auc >= SEMI_MIN_AUC && margin >= SEMI_MIN_MARGIN && took <= SEMI_BUDGET,
        format!(
            "mean auc {auc:.4} (>= {SEMI_MIN_AUC}), mean margin over logistic baseline {margin:+.4} (>= {SEMI_MIN_MARGIN}), {:.0}s (<= {}s); {}",
            took.as_secs_f64(),
            SEMI_BUDGET.as_secs(),
            per_seed.join("; ")
        ),
    );
    let recall = mean(at_label.runs.iter().map(|r| r.test.recall));
    report(
        outcomes,
        "[derived] detection recall at 10% labels",
        recall >= MIN_DETECT_RECALL,
        format!("mean held-out recall {recall:.4} (>= {MIN_DETECT_RECALL})"),
    );
}

fn trend_criterion(outcomes: &mut Vec<Outcome>, sweep: &LabelRatioReport, seeds: &[u64]) {
    let ratios: Vec<f64> = sweep.mean_auc.iter().map(|p| p.0).collect();
    let (lo, hi) = (ratios[0], ratios[ratios.len() - 1]);
    let auc = |seed: u64, r: f64| sweep.runs.iter().find(|x| x.seed == seed && x.label_ratio == r).unwrap().test.auc;
    let every_seed = seeds.iter().all(|&s| auc(s, hi) >= auc(s, lo));
    let means: Vec<f64> = sweep.mean_auc.iter().map(|p| p.1).collect();
    let inv = inversions(&means);
    let per_seed: Vec<String> = seeds.iter().map(|&s| format!("seed {s}: {:.3} -> {:.3}", auc(s, lo), auc(s, hi))).collect();
    report(
        outcomes,
        "label-ratio trend",
        every_seed && inv <= 1,
        format!(
            "ratios {} mean auc [{}], {inv} inversion(s) (<= 1); {}",
            fmt(&ratios),
            fmt(&means),
            per_seed.join("; ")
        ),
    );
}

fn recall_criterion(outcomes: &mut Vec<Outcome>, runs: &[DiscoveryRun]) {
    let avg = |latent: bool, k: usize| {
        mean(runs.iter().map(|r| {
            let curve = if latent { &r.recall.latent } else { &r.recall.raw };
            curve.iter().find(|p| p.n_cluster == k).unwrap().cluster_recall
        }))
    };
    let latent: Vec<f64> = N_CLUSTERS.iter().map(|&k| avg(true, k)).collect();
    let raw: Vec<f64> = N_CLUSTERS.iter().map(|&k| avg(false, k)).collect();
    let beats = latent.iter().zip(&raw).all(|(l, r)| l > r);
    let inv = inversions(&latent);
    report(
        outcomes,
        "cluster recall ordering",
        beats && inv <= 1,
        format!(
            "n_cluster {:?}: latent [{}] vs raw [{}], latent above raw everywhere: {beats}; latent inversions {inv} (<= 1)",
            N_CLUSTERS,
            fmt(&latent),
            fmt(&raw)
        ),
    );
}

fn discovery_criterion(outcomes: &mut Vec<Outcome>, runs: &[DiscoveryRun]) {
    let at = |k: usize| {
        let pts: Vec<_> = runs.iter().map(|r| r.points.iter().find(|p| p.n_cluster == k).unwrap()).collect();
        (
            mean(pts.iter().map(|p| p.capture_rate)),
            mean(pts.iter().map(|p| p.potential_fp_share)),
            pts.iter().map(|p| p.novel_captured).sum::<usize>(),
            pts.iter().map(|p| p.novel_total).sum::<usize>(),
        )
    };
    let per_k: Vec<(usize, (f64, f64, usize, usize))> = N_CLUSTERS.iter().map(|&k| (k, at(k))).collect();
    let &(best_k, (capture, fp, _, _)) = per_k.iter().max_by(|a, b| a.1 .0.total_cmp(&b.1 .0)).unwrap();
    let table: Vec<String> = per_k
        .iter()
        .map(|(k, (c, f, got, total))| format!("k={k}: capture {c:.3} ({got}/{total}), potential fp share {f:.3}"))
        .collect();
    report(
        outcomes,
        "novel-pattern discovery",
        capture >= MIN_CAPTURE && fp <= MAX_POTENTIAL_FP,
        format!(
            "best n_cluster {best_k}: capture {capture:.3} (>= {MIN_CAPTURE}), potential fp share {fp:.3} (<= {MAX_POTENTIAL_FP}); {}",
            table.join("; ")
        ),
    );
    let with_novel = runs.iter().map(|r| r.points.iter().filter(|p| p.novel_captured > 0).count()).sum::<usize>();
    report(
        outcomes,
        "[derived] fraud groups with novel-family members",
        with_novel > 0,
        format!("{with_novel} of {} (seed, n_cluster) runs have a fraud group holding novel-family users", runs.len() * N_CLUSTERS.len()),
    );
}

fn latent_dim_criterion(outcomes: &mut Vec<Outcome>, settings: &ExperimentSettings) {
    let start = Instant::now();
    let sweep = match run_latent_dim_sweep(settings, &LATENT_DIMS, 100) {
        Ok(s) => s,
        Err(e) => return report(outcomes, "latent-dimension sweep", false, format!("sweep failed: {e}")),
    };
    let r1 = sweep.mean.iter().find(|m| m.0 == 1).unwrap().1;
    let best = sweep.best_dim();
    let interior = best != LATENT_DIMS[0] && best != LATENT_DIMS[LATENT_DIMS.len() - 1];
    let table: Vec<String> = sweep.mean.iter().map(|(d, r, a)| format!("{d}: R {r:.3} ami {a:.3}")).collect();
    report(
        outcomes,
        "latent-dimension sweep",
        r1 <= MAX_DIM1_RECALL && interior,
        format!(
            "dim 1 R {r1:.3} (<= {MAX_DIM1_RECALL}), best dim {best} (interior: {interior}) in {:.0}s; {}",
            start.elapsed().as_secs_f64(),
            table.join("; ")
        ),
    );
}

fn main() {
    let started = Instant::now();
    let mut outcomes = Vec::new();
    let settings = ExperimentSettings::default();

    suite(&mut outcomes, "gradient correctness", Some(GRADIENT_BUDGET), gradients::run_all);
    suite(&mut outcomes, "loss sanity", None, losses::run_all);
    suite(&mut outcomes, "metric oracles", None, metric_oracles::run_all);
    suite(&mut outcomes, "pipeline exactness", None, pipeline_oracles::run_all);
    suite(&mut outcomes, "determinism", None, cli::every_command_is_byte_identical_across_runs);

    let start = Instant::now();
    match run_label_ratio_sweep(&settings, &[T_LABEL]) {
        Ok(at_label) => {
            semi_criteria(&mut outcomes, &at_label, start.elapsed());
            let others: Vec<f64> = LABEL_RATIOS.iter().copied().filter(|&r| r != T_LABEL).collect();
            match run_label_ratio_sweep(&settings, &others) {
                Ok(rest) => {
                    let mut runs = rest.runs;
                    runs.extend(at_label.runs);
                    let mut mean_auc = rest.mean_auc;
                    mean_auc.extend(at_label.mean_auc);
                    mean_auc.sort_by(|a, b| a.0.total_cmp(&b.0));
                    trend_criterion(&mut outcomes, &LabelRatioReport { runs, mean_auc }, &settings.seeds);
                }
                Err(e) => report(&mut outcomes, "label-ratio trend", false, format!("sweep failed: {e}")),
            }
        }
        Err(e) => report(&mut outcomes, "semi-supervised learning", false, format!("sweep failed: {e}")),
    }

    match run_discovery_experiment(&settings, &N_CLUSTERS) {
        Ok(runs) => {
            recall_criterion(&mut outcomes, &runs);
            discovery_criterion(&mut outcomes, &runs);
        }
        Err(e) => {
            report(&mut outcomes, "cluster recall ordering", false, format!("experiment failed: {e}"));
            report(&mut outcomes, "novel-pattern discovery", false, format!("experiment failed: {e}"));
        }
    }
    latent_dim_criterion(&mut outcomes, &settings);

    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    println!();
    println!("acceptance summary ({:.0}s):", started.elapsed().as_secs_f64());
    for o in &outcomes {
        println!("  {} {}", if o.pass { "PASS" } else { "FAIL" }, o.name);
    }
    if !failed.is_empty() {
        println!("{} of {} criteria failed: {}", failed.len(), outcomes.len(), failed.join(", "));
        std::process::exit(1);
    }
}
