//! Experiment harness over synthetic corpora: label-ratio sweep, latent
//! dimension sweep, raw-versus-latent Cluster Recall and novel-pattern
//! discovery.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::aae::{class_prior_from_labels, train, AaeMode, AaeModel, LossHistory, TrainConfig, FRAUD};
use crate::cluster::{
    ami, cluster_and_label, cluster_recall, find_potential_frauds, DiscoveryConfig, KMeansConfig,
    DEFAULT_T_FRAUD,
};
use crate::error::{Error, Result};
use crate::features::{build_features, PipelineConfig, PreparedFeatures, UserFeatureMatrix};
use crate::metrics::{evaluate_scores, train_logistic_baseline, EvalReport, LogisticConfig};
use crate::nn::PriorSpec;
use crate::synth::{generate, GroundTruth, Split, SynthConfig, SynthOutput};

pub const LABEL_RATIOS: [f64; 5] = [0.01, 0.025, 0.05, 0.10, 0.25];
pub const LATENT_DIMS: [usize; 8] = [1, 2, 8, 32, 64, 128, 256, 512];
pub const N_CLUSTERS: [usize; 3] = [10, 50, 100];

/// A generated corpus with its encoded feature matrix. Rows of `features`
/// and entries of `truth.users` share one order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub synth: SynthOutput,
    pub prepared: PreparedFeatures,
}

impl Corpus {
    /// Generates records and encodes them with a vocabulary fitted on the
    /// training split.
    pub fn generate(cfg: &SynthConfig, pipeline: &PipelineConfig) -> Result<Self> {
        let synth = generate(cfg)?;
        Self::from_output(synth, pipeline)
    }

    pub fn from_output(synth: SynthOutput, pipeline: &PipelineConfig) -> Result<Self> {
        let train_ids: BTreeSet<String> = synth
            .truth
            .users
            .iter()
            .filter(|u| u.split == Split::Train)
            .map(|u| u.user_id.clone())
            .collect();
        let prepared = build_features(&synth.operations, &synth.transactions, Some(&train_ids), pipeline)?;
        let ids: Vec<&str> = synth.truth.users.iter().map(|u| u.user_id.as_str()).collect();
        if prepared.matrix.user_ids.iter().map(String::as_str).ne(ids.iter().copied()) {
            return Err(Error::Input("feature rows and ground truth disagree on users".into()));
        }
        Ok(Corpus { synth, prepared })
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.synth.truth
    }

    pub fn matrix(&self) -> &UserFeatureMatrix {
        &self.prepared.matrix
    }

    pub fn fraud(&self) -> Vec<bool> {
        self.truth().is_fraud()
    }

    pub fn rows(&self, split: Split) -> Vec<usize> {
        (0..self.truth().users.len()).filter(|&i| self.truth().users[i].split == split).collect()
    }

    /// The encoded, standardized feature matrix: the raw-feature baseline
    /// for clustering.
    pub fn raw_features(&self) -> ArrayView2<'_, f64> {
        self.prepared.matrix.matrix.view()
    }
}

fn new_model(mode: AaeMode, input_dim: usize, cfg: &TrainConfig, class_prior: Vec<f64>, fingerprint: &str) -> Result<AaeModel> {
    let prior = PriorSpec::standard(cfg.latent_dim, class_prior)?;
    let mut m = AaeModel::new(mode, input_dim, cfg.latent_dim, &cfg.architecture, prior, cfg.seed)?;
    m.set_layout_fingerprint(fingerprint);
    Ok(m)
}

/// Trains the semi-supervised model on the training split with the labels
/// currently revealed in `corpus.truth()`.
pub fn train_semi(corpus: &Corpus, cfg: &TrainConfig) -> Result<(AaeModel, LossHistory)> {
    let rows = corpus.rows(Split::Train);
    let x = corpus.matrix().matrix.select(Axis(0), &rows);
    let labels: Vec<Option<usize>> = rows
        .iter()
        .map(|&i| {
            let u = &corpus.truth().users[i];
            u.labeled.then_some(u.label)
        })
        .collect();
    let model = new_model(AaeMode::Semi, x.ncols(), cfg, class_prior_from_labels(&labels), &corpus.matrix().fingerprint)?;
    train(model, x.view(), &labels, cfg)
}

/// Trains the unsupervised model on every user.
pub fn train_unsupervised(corpus: &Corpus, cfg: &TrainConfig) -> Result<(AaeModel, LossHistory)> {
    let x = corpus.matrix().matrix.view();
    let model = new_model(
        AaeMode::Unsupervised,
        x.ncols(),
        cfg,
        PriorSpec::binary_class_prior(crate::nn::REFERENCE_FRAUD_RATIO),
        &corpus.matrix().fingerprint,
    )?;
    train(model, x, &vec![None; x.nrows()], cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiRun {
    pub label_ratio: f64,
    pub seed: u64,
    pub n_labeled: usize,
    /// Held-out metrics of the semi-supervised classifier.
    pub test: EvalReport,
    pub baseline_auc: f64,
}

/// Held-out evaluation of the semi-supervised classifier and the logistic
/// baseline, both using only the revealed training labels.
pub fn evaluate_semi(corpus: &Corpus, model: &AaeModel) -> Result<(EvalReport, f64)> {
    let test = corpus.rows(Split::Test);
    let x_test = corpus.matrix().matrix.select(Axis(0), &test);
    let fraud = corpus.fraud();
    let y_test: Vec<bool> = test.iter().map(|&i| fraud[i]).collect();
    let scores = model.fraud_scores(x_test.view())?;
    let (report, _) = evaluate_scores(scores.as_slice().expect("contiguous"), &y_test)?;

    let labeled: Vec<usize> = corpus.rows(Split::Train).into_iter().filter(|&i| corpus.truth().users[i].labeled).collect();
    let x_lab = corpus.matrix().matrix.select(Axis(0), &labeled);
    let y_lab: Vec<bool> = labeled.iter().map(|&i| fraud[i]).collect();
    let baseline = train_logistic_baseline(x_lab.view(), &y_lab, &LogisticConfig::default())?;
    let base_scores = baseline.score(x_test.view())?;
    let (base, _) = evaluate_scores(base_scores.as_slice().expect("contiguous"), &y_test)?;
    Ok((report, base.auc))
}

/// Relabels `corpus` at `ratio`, trains and evaluates.
pub fn semi_run(corpus: &mut Corpus, ratio: f64, cfg: &TrainConfig) -> Result<(SemiRun, AaeModel)> {
    corpus.synth.truth.assign_labels(ratio, cfg.seed)?;
    let (model, _) = train_semi(corpus, cfg)?;
    let (test, baseline_auc) = evaluate_semi(corpus, &model)?;
    let n_labeled = corpus.truth().users.iter().filter(|u| u.labeled).count();
    Ok((
        SemiRun {
            label_ratio: ratio,
            seed: cfg.seed,
            n_labeled,
            test,
            baseline_auc,
        },
        model,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub n_cluster: usize,
    pub cluster_recall: f64,
    /// Against the true family of every user.
    pub ami: f64,
}

/// Cluster Recall (true labels) and AMI against true families for each
/// cluster count.
pub fn recall_curve(points: ArrayView2<'_, f64>, truth: &GroundTruth, n_clusters: &[usize], t_fraud: f64, kmeans: &KMeansConfig) -> Result<Vec<RecallPoint>> {
    let fraud = truth.is_fraud();
    let families: Vec<&str> = truth.users.iter().map(|u| u.family.as_str()).collect();
    n_clusters
        .iter()
        .map(|&k| {
            let cfg = DiscoveryConfig {
                n_cluster: k,
                t_fraud,
                kmeans: *kmeans,
            };
            let report = cluster_and_label(points, &fraud, &cfg)?;
            Ok(RecallPoint {
                n_cluster: k,
                cluster_recall: cluster_recall(&report.assignments, &fraud, t_fraud)?,
                ami: ami(&report.assignments, &families)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryPoint {
    pub n_cluster: usize,
    pub t_fraud: f64,
    pub n_fraud_groups: usize,
    pub potential: usize,
    pub novel_total: usize,
    pub novel_captured: usize,
    pub capture_rate: f64,
    /// Share of the potential set that is truly benign.
    pub potential_fp_share: f64,
    /// Benign users in the potential set over all benign users.
    pub benign_fpr: f64,
    /// Novel users the classifier already flags.
    pub novel_detected: usize,
}

/// Potential-fraud discovery over every user for each cluster count.
pub fn discovery_sweep(corpus: &Corpus, classifier: &AaeModel, encoder: &AaeModel, n_clusters: &[usize], t_fraud: f64, kmeans: &KMeansConfig) -> Result<Vec<DiscoveryPoint>> {
    let truth = corpus.truth();
    let by_id = truth.by_id();
    let novel_total = truth.users.iter().filter(|u| u.novel).count();
    let benign_total = truth.users.iter().filter(|u| u.label != FRAUD).count();
    n_clusters
        .iter()
        .map(|&k| {
            let cfg = DiscoveryConfig {
                n_cluster: k,
                t_fraud,
                kmeans: *kmeans,
            };
            let d = find_potential_frauds(classifier, encoder, corpus.matrix(), &cfg)?;
            let mut novel_captured = 0;
            let mut benign = 0;
            for p in &d.potential.users {
                let u = by_id[p.user_id.as_str()];
                novel_captured += usize::from(u.novel);
                benign += usize::from(u.label != FRAUD);
            }
            let novel_detected = truth.users.iter().zip(&d.verdicts).filter(|(u, v)| u.novel && v.is_fraud()).count();
            let share = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            Ok(DiscoveryPoint {
                n_cluster: k,
                t_fraud,
                n_fraud_groups: d.report.fraud_groups().count(),
                potential: d.potential.len(),
                novel_total,
                novel_captured,
                capture_rate: share(novel_captured, novel_total),
                potential_fp_share: share(benign, d.potential.len()),
                benign_fpr: share(benign, benign_total),
                novel_detected,
            })
        })
        .collect()
}

/// Latent codes of every user under `encoder`.
pub fn latents(corpus: &Corpus, encoder: &AaeModel) -> Result<Array2<f64>> {
    Ok(encoder.encode(corpus.matrix().matrix.view())?.z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSettings {
    pub synth: SynthConfig,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub kmeans: KMeansConfig,
    pub t_fraud: f64,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            synth: SynthConfig::default(),
            pipeline: PipelineConfig::default(),
            train: TrainConfig::default(),
            kmeans: KMeansConfig::default(),
            t_fraud: DEFAULT_T_FRAUD,
            seeds: vec![0, 1, 2],
        }
    }
}

impl ExperimentSettings {
    pub fn corpus(&self, seed: u64) -> Result<Corpus> {
        let cfg = SynthConfig {
            seed,
            ..self.synth.clone()
        };
        Corpus::generate(&cfg, &self.pipeline)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    pub fn kmeans_config(&self, seed: u64) -> KMeansConfig {
        KMeansConfig {
            seed,
            ..self.kmeans
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRatioReport {
    pub runs: Vec<SemiRun>,
    /// Seed-averaged held-out AUC per ratio, in sweep order.
    pub mean_auc: Vec<(f64, f64)>,
}

pub fn run_label_ratio_sweep(settings: &ExperimentSettings, ratios: &[f64]) -> Result<LabelRatioReport> {
    let mut runs = Vec::new();
    for &seed in &settings.seeds {
        let mut corpus = settings.corpus(seed)?;
        for &r in ratios {
            let (run, _) = semi_run(&mut corpus, r, &settings.train_config(seed))?;
            log::info!("label ratio {r} seed {seed}: auc {:.4} baseline {:.4}", run.test.auc, run.baseline_auc);
            runs.push(run);
        }
    }
    let mean_auc = ratios
        .iter()
        .map(|&r| {
            let aucs: Vec<f64> = runs.iter().filter(|x| x.label_ratio == r).map(|x| x.test.auc).collect();
            (r, aucs.iter().sum::<f64>() / aucs.len() as f64)
        })
        .collect();
    Ok(LabelRatioReport { runs, mean_auc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDimRun {
    pub latent_dim: usize,
    pub seed: u64,
    pub curve: Vec<RecallPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDimReport {
    pub n_cluster: usize,
    pub runs: Vec<LatentDimRun>,
    /// Seed-averaged Cluster Recall and AMI per dimension at `n_cluster`.
    pub mean: Vec<(usize, f64, f64)>,
}

impl LatentDimReport {
    pub fn best_dim(&self) -> usize {
        self.mean
            .iter()
            .fold((0, f64::NEG_INFINITY), |b, &(d, r, _)| if r > b.1 { (d, r) } else { b })
            .0
    }
}

pub fn run_latent_dim_sweep(settings: &ExperimentSettings, dims: &[usize], n_cluster: usize) -> Result<LatentDimReport> {
    let mut runs = Vec::new();
    for &seed in &settings.seeds {
        let corpus = settings.corpus(seed)?;
        for &d in dims {
            let cfg = TrainConfig {
                latent_dim: d,
                ..settings.train_config(seed)
            };
            let (enc, _) = train_unsupervised(&corpus, &cfg)?;
            let z = latents(&corpus, &enc)?;
            let curve = recall_curve(z.view(), corpus.truth(), &[n_cluster], settings.t_fraud, &settings.kmeans_config(seed))?;
            log::info!("latent dim {d} seed {seed}: {curve:?}");
            runs.push(LatentDimRun {
                latent_dim: d,
                seed,
                curve,
            });
        }
    }
    let mean = dims
        .iter()
        .map(|&d| {
            let pts: Vec<&RecallPoint> = runs.iter().filter(|r| r.latent_dim == d).map(|r| &r.curve[0]).collect();
            let k = pts.len() as f64;
            (d, pts.iter().map(|p| p.cluster_recall).sum::<f64>() / k, pts.iter().map(|p| p.ami).sum::<f64>() / k)
        })
        .collect();
    Ok(LatentDimReport { n_cluster, runs, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallComparisonRun {
    pub seed: u64,
    pub raw: Vec<RecallPoint>,
    pub latent: Vec<RecallPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryRun {
    pub seed: u64,
    pub semi: SemiRun,
    pub points: Vec<DiscoveryPoint>,
    pub recall: RecallComparisonRun,
}

/// Full pipeline per seed: semi-supervised classifier from the training
/// labels, unsupervised encoder on every user, discovery per cluster
/// count, and Cluster Recall of latent versus raw features.
pub fn run_discovery_experiment(settings: &ExperimentSettings, n_clusters: &[usize]) -> Result<Vec<DiscoveryRun>> {
    let mut out = Vec::new();
    for &seed in &settings.seeds {
        let mut corpus = settings.corpus(seed)?;
        let cfg = settings.train_config(seed);
        let (semi, classifier) = semi_run(&mut corpus, settings.synth.label_ratio, &cfg)?;
        let (encoder, _) = train_unsupervised(&corpus, &cfg)?;
        let km = settings.kmeans_config(seed);
        let points = discovery_sweep(&corpus, &classifier, &encoder, n_clusters, settings.t_fraud, &km)?;
        let z = latents(&corpus, &encoder)?;
        let latent = recall_curve(z.view(), corpus.truth(), n_clusters, settings.t_fraud, &km)?;
        let raw = recall_curve(corpus.raw_features(), corpus.truth(), n_clusters, settings.t_fraud, &km)?;
        log::info!("discovery seed {seed}: {points:?}\nlatent {latent:?}\nraw {raw:?}");
        out.push(DiscoveryRun {
            seed,
            semi,
            points,
            recall: RecallComparisonRun { seed, raw, latent },
        });
    }
    Ok(out)
}
