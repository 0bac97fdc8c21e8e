//! Missing-rate filtering and per-user merging of the two record sources.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Timelike;
use serde::{Deserialize, Serialize};

use super::records::{
    FieldKind, FieldValue, OperationRecord, Record, RecordKind, TransactionRecord,
    OPERATION_FIELDS, TRANSACTION_FIELDS,
};
use crate::error::{Error, Result};

/// Features whose missing rate is strictly above this are dropped.
pub const DEFAULT_MISSING_THRESHOLD: f64 = 0.30;

/// Qualified feature name, e.g. `tx.tran_amt`.
pub fn qualified(kind: RecordKind, field: &str) -> String {
    format!("{}.{}", kind.prefix(), field)
}

/// Missing rate per qualified feature, in `[0, 1]`.
pub type MissingRates = BTreeMap<String, f64>;

pub fn compute_missing_rates<R: Record>(records: &[R]) -> Result<MissingRates> {
    if records.is_empty() {
        return Err(Error::Input(format!(
            "cannot compute missing rates of an empty {} record set",
            R::KIND.prefix()
        )));
    }
    let mut missing = vec![0usize; R::FIELDS.len()];
    for r in records {
        for (i, m) in missing.iter_mut().enumerate() {
            if r.value(i).is_none() {
                *m += 1;
            }
        }
    }
    let total = records.len() as f64;
    Ok(R::FIELDS
        .iter()
        .zip(missing)
        .map(|(f, m)| (qualified(R::KIND, f.name), m as f64 / total))
        .collect())
}

/// Retains every feature whose rate is at most `threshold`.
pub fn filter_features(rates: &MissingRates, threshold: f64) -> BTreeSet<String> {
    rates
        .iter()
        .filter(|(_, &rate)| !(rate > threshold))
        .map(|(name, _)| name.clone())
        .collect()
}

/// Summary statistics of one numeric feature over a user's records.
/// `std` is the population standard deviation. All fields are zero when
/// `count == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NumericStats {
    pub count: u64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub sum: f64,
}

impl NumericStats {
    pub const FIELDS: [&'static str; 6] = ["count", "mean", "std", "min", "max", "sum"];

    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return NumericStats::default();
        }
        let n = values.len() as f64;
        let sum: f64 = values.iter().sum();
        let mean = sum / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        NumericStats {
            count: values.len() as u64,
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            sum,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.count as f64,
            self.mean,
            self.std,
            self.min,
            self.max,
            self.sum,
        ]
    }
}

/// A derived feature: stats of a numeric transaction field split by the
/// hour-of-day bucket of the same record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrossFeatureSpec {
    /// Numeric transaction field, `tran_amt` or `balance`.
    pub numeric: String,
    pub hour_buckets: usize,
}

impl CrossFeatureSpec {
    pub fn name(&self, bucket: usize) -> String {
        format!("tx.{}@h{}", self.numeric, bucket)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    /// Number of equal-width hour-of-day buckets timestamps are mapped to.
    pub hour_buckets: usize,
    pub cross_features: Vec<CrossFeatureSpec>,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            hour_buckets: 4,
            cross_features: vec![CrossFeatureSpec {
                numeric: "tran_amt".into(),
                hour_buckets: 4,
            }],
        }
    }
}

/// Index of the hour-of-day bucket of `hour` when the day is cut into `buckets` equal parts.
pub fn hour_bucket(hour: u32, buckets: usize) -> usize {
    (hour as usize * buckets) / 24
}

/// Raw per-user aggregate before encoding.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UserAggregate {
    pub user_id: String,
    pub op_count: u64,
    pub tx_count: u64,
    /// Qualified categorical feature -> category -> record count. Timestamps
    /// appear here as hour buckets `h0..`.
    pub categorical: BTreeMap<String, BTreeMap<String, u64>>,
    pub numeric: BTreeMap<String, NumericStats>,
    pub cross: BTreeMap<String, NumericStats>,
}

impl UserAggregate {
    pub fn record_count(&self, kind: RecordKind) -> u64 {
        match kind {
            RecordKind::Operation => self.op_count,
            RecordKind::Transaction => self.tx_count,
        }
    }
}

#[derive(Default)]
struct Accumulator {
    op_count: u64,
    tx_count: u64,
    categorical: BTreeMap<String, BTreeMap<String, u64>>,
    numeric: BTreeMap<String, Vec<f64>>,
    cross: BTreeMap<String, Vec<f64>>,
}

fn accumulate<R: Record>(acc: &mut Accumulator, r: &R, cfg: &MergeConfig) {
    for (i, spec) in R::FIELDS.iter().enumerate() {
        let name = qualified(R::KIND, spec.name);
        match (spec.kind, r.value(i)) {
            (FieldKind::Categorical, Some(FieldValue::Category(c))) => {
                *acc.categorical
                    .entry(name)
                    .or_default()
                    .entry(c.to_string())
                    .or_default() += 1;
            }
            (FieldKind::Timestamp, Some(FieldValue::Time(t))) => {
                let bucket = hour_bucket(t.hour(), cfg.hour_buckets);
                *acc.categorical
                    .entry(name)
                    .or_default()
                    .entry(format!("h{bucket}"))
                    .or_default() += 1;
            }
            (FieldKind::Numeric, Some(FieldValue::Number(v))) => {
                acc.numeric.entry(name).or_default().push(v);
            }
            _ => {}
        }
    }
}

fn accumulate_cross(acc: &mut Accumulator, r: &TransactionRecord, cfg: &MergeConfig) {
    let Some(time) = r.time else { return };
    for spec in &cfg.cross_features {
        let value = match spec.numeric.as_str() {
            "tran_amt" => r.tran_amt,
            "balance" => r.balance,
            _ => None,
        };
        if let Some(v) = value {
            let bucket = hour_bucket(time.hour(), spec.hour_buckets);
            acc.cross.entry(spec.name(bucket)).or_default().push(v);
        }
    }
}

/// Merges both record sources by user id. Output is sorted by user id and
/// contains every user present in either source.
pub fn merge_users(
    ops: &[OperationRecord],
    txs: &[TransactionRecord],
    cfg: &MergeConfig,
) -> Vec<UserAggregate> {
    let mut users: BTreeMap<&str, Accumulator> = BTreeMap::new();
    for r in ops {
        let acc = users.entry(r.user_id.as_str()).or_default();
        acc.op_count += 1;
        accumulate(acc, r, cfg);
    }
    for r in txs {
        let acc = users.entry(r.user_id.as_str()).or_default();
        acc.tx_count += 1;
        accumulate(acc, r, cfg);
        accumulate_cross(acc, r, cfg);
    }
    users
        .into_iter()
        .map(|(id, acc)| UserAggregate {
            user_id: id.to_string(),
            op_count: acc.op_count,
            tx_count: acc.tx_count,
            categorical: acc.categorical,
            numeric: acc
                .numeric
                .into_iter()
                .map(|(k, v)| (k, NumericStats::from_values(&v)))
                .collect(),
            cross: acc
                .cross
                .into_iter()
                .map(|(k, v)| (k, NumericStats::from_values(&v)))
                .collect(),
        })
        .collect()
}

/// Every qualified feature name of both schemas, in schema order.
pub fn all_features() -> Vec<(String, RecordKind, FieldKind)> {
    OPERATION_FIELDS
        .iter()
        .map(|f| (RecordKind::Operation, f))
        .chain(TRANSACTION_FIELDS.iter().map(|f| (RecordKind::Transaction, f)))
        .map(|(k, f)| (qualified(k, f.name), k, f.kind))
        .collect()
}
