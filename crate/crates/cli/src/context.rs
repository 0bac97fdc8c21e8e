//! Effective settings of one invocation and dataset loading.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fraudjudger_core::aae::{class_prior_from_labels, AaeMode, AaeModel, TrainConfig};
use fraudjudger_core::cluster::DiscoveryConfig;
use fraudjudger_core::experiments::{Corpus, ExperimentSettings};
use fraudjudger_core::features::{read_feature_matrix, UserFeatureMatrix};
use fraudjudger_core::nn::{PriorSpec, REFERENCE_FRAUD_RATIO};
use fraudjudger_core::synth::{GroundTruth, Split};

use crate::args::{DataArgs, GlobalArgs};
use crate::error::{CliError, Result};
use crate::output::OutputDir;

pub const OUT_ENV: &str = "FRAUDJUDGER_OUT";
pub const DEFAULT_OUT_ROOT: &str = "fraudjudger-out";
pub const FEATURES_CSV: &str = "features.csv";
pub const FEATURES_JSON: &str = "features.json";
pub const BLACKLIST_FILE: &str = "blacklist.ndjson";

#[derive(Debug, Clone)]
pub struct Context {
    pub global: GlobalArgs,
    pub settings: ExperimentSettings,
}

impl Context {
    /// Settings file first, then `--full-scale`, then individual flags.
    pub fn new(global: GlobalArgs, full_scale: bool) -> Result<Self> {
        let mut settings = match &global.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
                serde_json::from_str(&text)?
            }
            None => ExperimentSettings::default(),
        };
        if full_scale {
            settings.train = TrainConfig {
                seed: settings.train.seed,
                ..TrainConfig::full_scale()
            };
        }
        if let Some(seed) = global.seed {
            settings.synth.seed = seed;
            settings.train.seed = seed;
            settings.kmeans.seed = seed;
            settings.seeds = vec![seed];
        }
        if let Some(r) = global.labels {
            if !(0.0..=1.0).contains(&r) {
                return Err(CliError::Usage(format!("--labels must lie in [0, 1], got {r}")));
            }
            settings.synth.label_ratio = r;
        }
        if let Some(t) = global.t_fraud {
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::Usage(format!("--t-fraud must lie in [0, 1], got {t}")));
            }
            settings.t_fraud = t;
        }
        if global.n_cluster == Some(0) {
            return Err(CliError::Usage("--n-cluster must be positive".into()));
        }
        if let Some(d) = global.latent_dim {
            settings.train.latent_dim = d;
        }
        if let Some(e) = global.epochs {
            settings.train.epochs = e;
        }
        if let Some(b) = global.batch_size {
            settings.train.batch_size = b;
        }
        settings.train.validate()?;
        settings.synth.validate()?;
        if settings.seeds.is_empty() {
            return Err(CliError::Usage("settings need at least one seed".into()));
        }
        Ok(Context { global, settings })
    }

    pub fn seed(&self) -> u64 {
        self.settings.synth.seed
    }

    pub fn n_cluster(&self) -> usize {
        self.global.n_cluster.unwrap_or(DiscoveryConfig::default().n_cluster)
    }

    pub fn t_fraud(&self) -> f64 {
        self.settings.t_fraud
    }

    pub fn discovery_config(&self) -> DiscoveryConfig {
        DiscoveryConfig {
            n_cluster: self.n_cluster(),
            t_fraud: self.t_fraud(),
            kmeans: self.settings.kmeans,
        }
    }

    pub fn out_dir(&self, command: &str) -> PathBuf {
        match (&self.global.out, std::env::var_os(OUT_ENV)) {
            (Some(dir), _) => dir.clone(),
            (None, Some(root)) if !root.is_empty() => PathBuf::from(root).join(command),
            _ => PathBuf::from(DEFAULT_OUT_ROOT).join(command),
        }
    }

    pub fn output(&self, command: &str) -> Result<OutputDir> {
        OutputDir::create(&self.out_dir(command))
    }

    pub fn blacklist_path(&self, explicit: Option<&Path>, out: &OutputDir) -> PathBuf {
        explicit.map_or_else(|| out.path(BLACKLIST_FILE), Path::to_path_buf)
    }

    /// The feature matrix and, when available, ground truth aligned to its rows.
    pub fn dataset(&self, args: &DataArgs) -> Result<Dataset> {
        let Some(features) = &args.features else {
            if args.truth.is_some() {
                return Err(CliError::Usage("--truth needs --features".into()));
            }
            log::info!("no --features given, generating a synthetic corpus (seed {})", self.seed());
            let corpus = Corpus::generate(&self.settings.synth, &self.settings.pipeline)?;
            return Ok(Dataset {
                matrix: corpus.prepared.matrix,
                truth: Some(corpus.synth.truth),
            });
        };
        let (csv, sidecar) = feature_paths(features);
        let (matrix, _) = read_feature_matrix(&csv, &sidecar)?;
        let mut ds = Dataset {
            matrix,
            truth: None,
        };
        if let Some(path) = &args.truth {
            let mut truth = GroundTruth::load(path)?;
            if let Some(r) = self.global.labels {
                truth.assign_labels(r, self.seed())?;
            }
            ds.align(truth);
        }
        Ok(ds)
    }
}

/// Accepts a directory holding the two feature files or the CSV itself.
pub fn feature_paths(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join(FEATURES_CSV), path.join(FEATURES_JSON))
    } else {
        (path.to_path_buf(), path.with_extension("json"))
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub matrix: UserFeatureMatrix,
    /// Same order and length as the matrix rows.
    pub truth: Option<GroundTruth>,
}

impl Dataset {
    /// Restricts the matrix to users with ground truth and orders the truth
    /// like the matrix.
    fn align(&mut self, truth: GroundTruth) {
        let by_id: BTreeMap<&str, usize> = truth.users.iter().enumerate().map(|(i, u)| (u.user_id.as_str(), i)).collect();
        let (rows, order): (Vec<usize>, Vec<usize>) = self
            .matrix
            .user_ids
            .iter()
            .enumerate()
            .filter_map(|(r, id)| by_id.get(id.as_str()).map(|&t| (r, t)))
            .unzip();
        let dropped = self.matrix.n_users() - rows.len();
        if dropped > 0 {
            log::warn!("{dropped} users have features but no ground truth and are ignored");
        }
        if rows.len() != self.matrix.n_users() {
            self.matrix = self.matrix.select(&rows);
        }
        self.truth = Some(GroundTruth {
            users: order.into_iter().map(|t| truth.users[t].clone()).collect(),
        });
    }

    pub fn require_truth(&self, what: &str) -> Result<&GroundTruth> {
        self.truth
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("{what} needs ground truth: pass --truth with --features")))
    }

    pub fn rows(&self, split: Split) -> Result<Vec<usize>> {
        let truth = self.require_truth("selecting a split")?;
        Ok((0..truth.users.len()).filter(|&i| truth.users[i].split == split).collect())
    }
}

/// Fresh model for `matrix`, stamped with its feature layout.
pub fn new_model(mode: AaeMode, matrix: &UserFeatureMatrix, labels: &[Option<usize>], cfg: &TrainConfig) -> Result<AaeModel> {
    let class_prior = match mode {
        AaeMode::Semi => class_prior_from_labels(labels),
        AaeMode::Unsupervised => PriorSpec::binary_class_prior(REFERENCE_FRAUD_RATIO),
    };
    let prior = PriorSpec::standard(cfg.latent_dim, class_prior)?;
    let mut model = AaeModel::new(mode, matrix.dim(), cfg.latent_dim, &cfg.architecture, prior, cfg.seed)?;
    model.set_layout_fingerprint(matrix.fingerprint.clone());
    Ok(model)
}
