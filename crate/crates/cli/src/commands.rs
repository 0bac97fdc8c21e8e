//! Single-step commands: synth, ingest, train, eval, detect and discover.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fraudjudger_core::aae::{train, AaeMode, AaeModel, FRAUD};
use fraudjudger_core::cluster::{find_potential_frauds, rule_candidates, RuleCandidate};
use fraudjudger_core::experiments::recall_curve;
use fraudjudger_core::features::{
    build_features, encode, load_records, merge_users, write_feature_matrix, FeatureSidecar, LoadMode, OperationRecord,
    RowError, TransactionRecord,
};
use fraudjudger_core::metrics::{evaluate_scores, train_logistic_baseline, EvalReport, LogisticConfig};
use fraudjudger_core::synth::{generate, GroundTruth, Split, OPERATIONS_FILE, TRANSACTIONS_FILE, TRUTH_FILE};
use ndarray::{Array2, Axis};
use serde::Serialize;

use crate::args::{BlacklistArgs, DetectArgs, DiscoverArgs, EvalArgs, IngestArgs, ModeArg, TrainArgs};
use crate::blacklist::{Blacklist, Change, Provenance};
use crate::context::{new_model, Context, Dataset, FEATURES_CSV, FEATURES_JSON};
use crate::error::{CliError, Result};
use crate::output::OutputDir;

pub fn synth(ctx: &Context) -> Result<OutputDir> {
    let out = ctx.output("synth")?;
    let data = generate(&ctx.settings.synth)?;
    data.write(out.dir())?;
    out.write_json("synth_config.json", &ctx.settings.synth)?;
    let n_fraud = data.truth.users.iter().filter(|u| u.label == FRAUD).count();
    println!(
        "synth: {} users ({n_fraud} fraud), {} operations, {} transactions -> {}",
        data.truth.users.len(),
        data.operations.len(),
        data.transactions.len(),
        out.dir().display()
    );
    Ok(out)
}

fn rejected_csv(rows: &[RowError]) -> String {
    let mut s = String::from("line,message\n");
    for r in rows {
        let _ = writeln!(s, "{},\"{}\"", r.line, r.message.replace('"', "\"\""));
    }
    s
}

pub fn ingest(ctx: &Context, args: &IngestArgs) -> Result<OutputDir> {
    let (ops_path, txs_path, truth_path) = match (&args.data, &args.ops, &args.txs) {
        (Some(dir), _, _) => {
            let truth = dir.join(TRUTH_FILE);
            (dir.join(OPERATIONS_FILE), dir.join(TRANSACTIONS_FILE), args.truth.clone().or(truth.exists().then_some(truth)))
        }
        (None, Some(o), Some(t)) => (o.clone(), t.clone(), args.truth.clone()),
        _ => return Err(CliError::Usage("ingest needs --data <dir> or both --ops and --txs".into())),
    };
    let mode = if args.lenient { LoadMode::Lenient } else { LoadMode::Strict };
    let ops = load_records::<OperationRecord>(&ops_path, mode)?;
    let txs = load_records::<TransactionRecord>(&txs_path, mode)?;
    let out = ctx.output("ingest")?;

    let (matrix, vocab, missing_rates) = match &args.vocab {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
            let sidecar: FeatureSidecar = serde_json::from_str(&text)?;
            let aggregates = merge_users(&ops.records, &txs.records, &ctx.settings.pipeline.vocab.merge);
            (encode(&aggregates, &sidecar.vocab), sidecar.vocab, None)
        }
        None => {
            let fit_users: Option<BTreeSet<String>> = match &truth_path {
                Some(p) => Some(
                    GroundTruth::load(p)?
                        .users
                        .into_iter()
                        .filter(|u| u.split == Split::Train)
                        .map(|u| u.user_id)
                        .collect(),
                ),
                None => None,
            };
            let prepared = build_features(&ops.records, &txs.records, fit_users.as_ref(), &ctx.settings.pipeline)?;
            (prepared.matrix, prepared.vocab, Some(prepared.missing_rates))
        }
    };
    write_feature_matrix(&matrix, &vocab, &out.path(FEATURES_CSV), &out.path(FEATURES_JSON))?;
    if let Some(rates) = &missing_rates {
        out.write_json("missing_rates.json", rates)?;
    }
    if args.lenient {
        out.write("rejected_operations.csv", rejected_csv(&ops.rejected))?;
        out.write("rejected_transactions.csv", rejected_csv(&txs.rejected))?;
    }
    println!(
        "ingest: {} users x {} features ({} + {} rows rejected) -> {}",
        matrix.n_users(),
        matrix.dim(),
        ops.rejected.len(),
        txs.rejected.len(),
        out.dir().display()
    );
    Ok(out)
}

fn select_rows(m: &fraudjudger_core::features::UserFeatureMatrix, rows: &[usize]) -> Array2<f64> {
    m.matrix.select(Axis(0), rows)
}

/// Revealed labels of the training rows, `None` for unlabeled users.
fn training_labels(ds: &Dataset, rows: &[usize]) -> Result<Vec<Option<usize>>> {
    let truth = ds.require_truth("semi-supervised training")?;
    Ok(rows
        .iter()
        .map(|&i| {
            let u = &truth.users[i];
            u.labeled.then_some(u.label)
        })
        .collect())
}

pub fn train_model(ctx: &Context, args: &TrainArgs) -> Result<OutputDir> {
    let ds = ctx.dataset(&args.data)?;
    let cfg = ctx.settings.train.clone();
    let (mode, rows) = match args.mode {
        ModeArg::Semi => (AaeMode::Semi, ds.rows(Split::Train)?),
        ModeArg::Unsup => (AaeMode::Unsupervised, (0..ds.matrix.n_users()).collect()),
    };
    if rows.is_empty() {
        return Err(CliError::Core(fraudjudger_core::Error::Input("no training users".into())));
    }
    let labels = match mode {
        AaeMode::Semi => training_labels(&ds, &rows)?,
        AaeMode::Unsupervised => vec![None; rows.len()],
    };
    let x = select_rows(&ds.matrix, &rows);
    let model = new_model(mode, &ds.matrix, &labels, &cfg)?;
    log::info!("training {mode} model on {} users, {} labeled", rows.len(), labels.iter().flatten().count());
    let (model, history) = train(model, x.view(), &labels, &cfg)?;

    let out = ctx.output("train")?;
    model.save(&out.path("model.json"))?;
    out.write("loss_history.csv", history.to_csv())?;
    out.write_json("train_config.json", &cfg)?;
    if mode == AaeMode::Semi {
        let mut s = String::from("user_id,label\n");
        for (&i, l) in rows.iter().zip(&labels) {
            if let Some(l) = l {
                let _ = writeln!(s, "{},{l}", ds.matrix.user_ids[i]);
            }
        }
        out.write("labeled.csv", s)?;
    }
    println!("train: {mode} model, latent {} -> {}", cfg.latent_dim, out.dir().display());
    Ok(out)
}

#[derive(Debug, Serialize)]
struct SemiMetrics {
    mode: &'static str,
    split: &'static str,
    #[serde(flatten)]
    report: EvalReport,
    /// Logistic regression on the same revealed labels.
    baseline_auc: Option<f64>,
}

#[derive(Debug, Serialize)]
struct UnsupMetrics {
    mode: &'static str,
    n: usize,
    n_cluster: usize,
    t_fraud: f64,
    cluster_recall: f64,
    ami: f64,
}

fn load_model(path: &Path, ds: &Dataset) -> Result<AaeModel> {
    let model = AaeModel::load(path)?;
    model.check_layout(&ds.matrix.fingerprint)?;
    Ok(model)
}

pub fn eval(ctx: &Context, args: &EvalArgs) -> Result<OutputDir> {
    let ds = ctx.dataset(&args.data)?;
    let model = load_model(&args.model, &ds)?;
    let truth = ds.require_truth("eval")?;
    let fraud = truth.is_fraud();
    let out = ctx.output("eval")?;
    match model.mode() {
        AaeMode::Semi => {
            let test = ds.rows(Split::Test)?;
            if test.is_empty() {
                return Err(CliError::Core(fraudjudger_core::Error::Input("no test-split users to evaluate".into())));
            }
            let x = select_rows(&ds.matrix, &test);
            let y: Vec<bool> = test.iter().map(|&i| fraud[i]).collect();
            let scores = model.fraud_scores(x.view())?;
            let (report, roc) = evaluate_scores(&scores.to_vec(), &y)?;
            let labeled: Vec<usize> = ds.rows(Split::Train)?.into_iter().filter(|&i| truth.users[i].labeled).collect();
            let y_lab: Vec<bool> = labeled.iter().map(|&i| fraud[i]).collect();
            let baseline_auc = if y_lab.iter().any(|&f| f) && y_lab.iter().any(|&f| !f) {
                let base = train_logistic_baseline(select_rows(&ds.matrix, &labeled).view(), &y_lab, &LogisticConfig::default())?;
                Some(evaluate_scores(&base.score(x.view())?.to_vec(), &y)?.0.auc)
            } else {
                None
            };
            println!(
                "eval: auc {:.4} f1 {:.4} on {} test users (baseline auc {})",
                report.auc,
                report.f1,
                report.n,
                baseline_auc.map_or("n/a".into(), |a| format!("{a:.4}"))
            );
            out.write("metrics.csv", format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row()))?;
            out.write("roc.csv", roc.to_csv())?;
            out.write_json(
                "metrics.json",
                &SemiMetrics {
                    mode: "semi",
                    split: "test",
                    report,
                    baseline_auc,
                },
            )?;
        }
        AaeMode::Unsupervised => {
            let z = model.encode(ds.matrix.matrix.view())?.z;
            let k = ctx.n_cluster();
            let point = recall_curve(z.view(), truth, &[k], ctx.t_fraud(), &ctx.settings.kmeans)?.remove(0);
            println!("eval: cluster recall {:.4}, ami {:.4} at {k} clusters", point.cluster_recall, point.ami);
            out.write_json(
                "metrics.json",
                &UnsupMetrics {
                    mode: "unsup",
                    n: ds.matrix.n_users(),
                    n_cluster: k,
                    t_fraud: ctx.t_fraud(),
                    cluster_recall: point.cluster_recall,
                    ami: point.ami,
                },
            )?;
        }
    }
    Ok(out)
}

fn read_user_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty() && *l != "user_id").map(String::from).collect())
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UpdateCounts {
    pub added: usize,
    pub promoted: usize,
    pub unchanged: usize,
}

impl UpdateCounts {
    pub fn record(&mut self, change: Change) {
        match change {
            Change::Added => self.added += 1,
            Change::Promoted => self.promoted += 1,
            Change::Unchanged => self.unchanged += 1,
        }
    }
}

#[derive(Debug, Serialize)]
struct DetectSummary {
    classified: usize,
    unknown_users: usize,
    detected: usize,
    blacklist: UpdateCounts,
    blacklist_size: usize,
    /// Share of true fraud users among the classified that were detected.
    recall: Option<f64>,
}

pub fn detect(ctx: &Context, args: &DetectArgs) -> Result<OutputDir> {
    let ds = ctx.dataset(&args.data)?;
    let model = load_model(&args.model, &ds)?;
    if model.mode() != AaeMode::Semi {
        return Err(CliError::Core(fraudjudger_core::Error::Mode {
            op: "detect",
            required: "semi",
        }));
    }
    let (rows, unknown) = match &args.users {
        Some(path) => {
            let index = ds.matrix.index_of();
            let wanted: BTreeSet<String> = read_user_list(path)?.into_iter().collect();
            let rows: Vec<usize> = wanted.iter().filter_map(|u| index.get(u.as_str()).copied()).collect();
            let unknown = wanted.len() - rows.len();
            (rows, unknown)
        }
        None => ((0..ds.matrix.n_users()).collect(), 0),
    };
    let out = ctx.output("detect")?;
    let mut blacklist = Blacklist::open(&ctx.blacklist_path(args.blacklist.as_deref(), &out))?;
    let verdicts = if rows.is_empty() { Vec::new() } else { model.classify(select_rows(&ds.matrix, &rows).view())? };

    let mut counts = UpdateCounts::default();
    let mut csv = String::from("user_id,fraud_score\n");
    let mut detected = 0;
    for (&i, v) in rows.iter().zip(&verdicts) {
        if v.is_fraud() {
            let id = &ds.matrix.user_ids[i];
            counts.record(blacklist.insert(id, Provenance::Detected, None)?);
            let _ = writeln!(csv, "{id},{}", v.score);
            detected += 1;
        }
    }
    blacklist.commit()?;
    let recall = ds.truth.as_ref().and_then(|t| {
        let fraud_rows: Vec<(usize, bool)> =
            rows.iter().zip(&verdicts).filter(|(&i, _)| t.users[i].label == FRAUD).map(|(&i, v)| (i, v.is_fraud())).collect();
        (!fraud_rows.is_empty()).then(|| fraud_rows.iter().filter(|r| r.1).count() as f64 / fraud_rows.len() as f64)
    });
    out.write("detected.csv", csv)?;
    out.write_json(
        "detect_summary.json",
        &DetectSummary {
            classified: rows.len(),
            unknown_users: unknown,
            detected,
            blacklist: counts,
            blacklist_size: blacklist.len(),
            recall,
        },
    )?;
    println!("detect: {detected} of {} users flagged, blacklist holds {}", rows.len(), blacklist.len());
    Ok(out)
}

/// A rule candidate with ground-truth composition, when truth is known.
#[derive(Debug, Serialize)]
pub struct GroupReport {
    #[serde(flatten)]
    pub candidate: RuleCandidate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_fraud_members: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub novel_members: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct RuleReport {
    pub n_cluster: usize,
    pub t_fraud: f64,
    pub n_fraud_groups: usize,
    pub n_potential: usize,
    pub groups: Vec<GroupReport>,
}

pub fn rule_report(
    ds_matrix: &fraudjudger_core::features::UserFeatureMatrix,
    truth: Option<&GroundTruth>,
    discovery: &fraudjudger_core::cluster::Discovery,
    top_features: usize,
) -> RuleReport {
    let report = &discovery.report;
    let groups: Vec<GroupReport> = rule_candidates(ds_matrix, report, &discovery.potential, top_features)
        .into_iter()
        .map(|candidate| {
            let members = || report.assignments.iter().enumerate().filter(move |(_, &a)| a == candidate.group).map(|(i, _)| i);
            let (true_fraud_members, novel_members) = match truth {
                Some(t) => (
                    Some(members().filter(|&i| t.users[i].label == FRAUD).count()),
                    Some(members().filter(|&i| t.users[i].novel).count()),
                ),
                None => (None, None),
            };
            GroupReport {
                candidate,
                true_fraud_members,
                novel_members,
            }
        })
        .collect();
    RuleReport {
        n_cluster: report.k,
        t_fraud: report.t_fraud,
        n_fraud_groups: groups.len(),
        n_potential: discovery.potential.len(),
        groups,
    }
}

#[derive(Debug, Serialize)]
struct DiscoverSummary {
    n_users: usize,
    detected: usize,
    n_fraud_groups: usize,
    potential: usize,
    blacklist: UpdateCounts,
    blacklist_size: usize,
    /// Novel-family users among the potential set, when truth is known.
    novel_potential: Option<usize>,
}

pub fn discover(ctx: &Context, args: &DiscoverArgs) -> Result<OutputDir> {
    let ds = ctx.dataset(&args.data)?;
    let classifier = load_model(&args.semi_model, &ds)?;
    let encoder = load_model(&args.unsup_model, &ds)?;
    let found = find_potential_frauds(&classifier, &encoder, &ds.matrix, &ctx.discovery_config())?;
    let rules = rule_report(&ds.matrix, ds.truth.as_ref(), &found, args.top_features);

    let out = ctx.output("discover")?;
    let mut blacklist = Blacklist::open(&ctx.blacklist_path(args.blacklist.as_deref(), &out))?;
    let mut counts = UpdateCounts::default();
    for p in &found.potential.users {
        counts.record(blacklist.insert(&p.user_id, Provenance::Potential, Some(p.group_fraud_ratio))?);
    }
    blacklist.commit()?;

    let novel_potential = ds.truth.as_ref().map(|t| {
        let novel: BTreeMap<&str, bool> = t.users.iter().map(|u| (u.user_id.as_str(), u.novel)).collect();
        found.potential.users.iter().filter(|p| novel.get(p.user_id.as_str()) == Some(&true)).count()
    });
    out.write("potential.csv", found.potential.to_csv())?;
    out.write("groups.csv", found.report.groups_csv())?;
    out.write("assignments.csv", found.report.assignments_csv(&ds.matrix.user_ids))?;
    out.write_json("rule_candidates.json", &rules)?;
    out.write_json(
        "discover_summary.json",
        &DiscoverSummary {
            n_users: ds.matrix.n_users(),
            detected: found.verdicts.iter().filter(|v| v.is_fraud()).count(),
            n_fraud_groups: rules.n_fraud_groups,
            potential: found.potential.len(),
            blacklist: counts,
            blacklist_size: blacklist.len(),
            novel_potential,
        },
    )?;
    if rules.n_fraud_groups == 0 {
        println!("discover: zero fraud groups at t_fraud {}, nothing appended", ctx.t_fraud());
    } else {
        println!(
            "discover: {} fraud groups, {} potential frauds, blacklist holds {}",
            rules.n_fraud_groups,
            found.potential.len(),
            blacklist.len()
        );
    }
    Ok(out)
}


pub fn export_blacklist(ctx: &Context, args: &BlacklistArgs) -> Result<OutputDir> {
    if !args.blacklist.exists() {
        return Err(CliError::io(
            format!("opening {}", args.blacklist.display()),
            std::io::Error::from(std::io::ErrorKind::NotFound),
        ));
    }
    let entries = Blacklist::read(&args.blacklist)?;
    let mut csv = String::from("user_id,provenance,revision,group_fraud_ratio\n");
    let mut by_kind: BTreeMap<Provenance, usize> = BTreeMap::new();
    for e in entries.values() {
        *by_kind.entry(e.provenance).or_default() += 1;
        let ratio = e.group_fraud_ratio.map_or(String::new(), |r| r.to_string());
        let _ = writeln!(csv, "{},{},{},{ratio}", e.user_id, provenance_name(e.provenance), e.revision);
    }
    let out = ctx.output("blacklist")?;
    out.write("blacklist.csv", csv)?;
    let counts: Vec<String> = by_kind.iter().map(|(k, n)| format!("{n} {}", provenance_name(*k))).collect();
    println!("blacklist: {} users ({})", entries.len(), counts.join(", "));
    Ok(out)
}

fn provenance_name(p: Provenance) -> &'static str {
    match p {
        Provenance::Potential => "potential",
        Provenance::Detected => "detected",
        Provenance::Labeled => "labeled",
    }
}
