//! Turns raw operation and transaction records into per-user feature vectors.

mod encode;
mod merge;
mod records;

pub use encode::{
    encode, fit_vocab, read_feature_matrix, write_feature_matrix, CategoricalVocab,
    EncodingVocab, FeatureSidecar, Standardizer, UserFeatureMatrix, VocabConfig,
    DEFAULT_MAX_CATEGORIES, FEATURES_FORMAT, OTHER_CATEGORY,
};
pub use merge::{
    all_features, compute_missing_rates, filter_features, hour_bucket, merge_users, qualified,
    CrossFeatureSpec, MergeConfig, MissingRates, NumericStats, UserAggregate,
    DEFAULT_MISSING_THRESHOLD,
};
pub use records::{
    load_records, read_records, write_records, FieldKind, FieldSpec, FieldValue, LoadMode,
    Loaded, OperationRecord, Record, RecordKind, RowError, TransactionRecord, OPERATION_FIELDS,
    TIME_FORMAT, TRANSACTION_FIELDS,
};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub missing_threshold: f64,
    pub vocab: VocabConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            missing_threshold: DEFAULT_MISSING_THRESHOLD,
            vocab: VocabConfig::default(),
        }
    }
}

/// Everything produced by [`build_features`].
#[derive(Debug, Clone)]
pub struct PreparedFeatures {
    pub missing_rates: MissingRates,
    pub retained: BTreeSet<String>,
    pub aggregates: Vec<UserAggregate>,
    pub vocab: EncodingVocab,
    pub matrix: UserFeatureMatrix,
}

/// Missing-rate filter, merge, vocabulary fit and encoding in one call.
///
/// The vocabulary and standardizer are fitted on the users in `fit_users`
/// (all users when `None`); every merged user is encoded.
pub fn build_features(
    ops: &[OperationRecord],
    txs: &[TransactionRecord],
    fit_users: Option<&BTreeSet<String>>,
    cfg: &PipelineConfig,
) -> Result<PreparedFeatures> {
    let mut missing_rates = compute_missing_rates(ops)?;
    missing_rates.extend(compute_missing_rates(txs)?);
    let retained = filter_features(&missing_rates, cfg.missing_threshold);
    let aggregates = merge_users(ops, txs, &cfg.vocab.merge);
    let vocab = match fit_users {
        None => fit_vocab(&aggregates, &retained, &cfg.vocab)?,
        Some(users) => {
            let subset: Vec<UserAggregate> = aggregates
                .iter()
                .filter(|a| users.contains(&a.user_id))
                .cloned()
                .collect();
            if subset.is_empty() {
                return Err(Error::Input("no fitting users found in the records".into()));
            }
            fit_vocab(&subset, &retained, &cfg.vocab)?
        }
    };
    let matrix = encode(&aggregates, &vocab);
    Ok(PreparedFeatures {
        missing_rates,
        retained,
        aggregates,
        vocab,
        matrix,
    })
}
