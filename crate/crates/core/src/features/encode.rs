//! Vocabulary fitting, encoding to a dense matrix and standardization.
//!
//! Column layout, in order:
//!
//! 1. for every retained categorical (or timestamp hour-bucket) feature in
//!    schema order: one column per retained category, most frequent first,
//!    then an `<other>` column. Values are category counts divided by the
//!    user's record count in that source;
//! 2. for every retained numeric feature: `count, mean, std, min, max, sum`;
//! 3. for every cross feature and hour bucket: the same six statistics.
//!
//! Missing statistics (users without records) are 0 before standardization;
//! the `count` column tells them apart. Columns with zero variance on the
//! fitting data are dropped by the standardizer.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::merge::{all_features, CrossFeatureSpec, MergeConfig, NumericStats, UserAggregate};
use super::records::{FieldKind, RecordKind};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_CATEGORIES: usize = 50;
pub const OTHER_CATEGORY: &str = "<other>";

const VOCAB_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalVocab {
    pub feature: String,
    pub source: RecordKind,
    /// Retained categories, most frequent first. Everything else maps to `<other>`.
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    /// Indices into the raw layout of the columns that survive.
    pub kept: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingVocab {
    pub version: u32,
    pub max_categories: usize,
    pub categorical: Vec<CategoricalVocab>,
    pub numeric: Vec<String>,
    pub cross: Vec<CrossFeatureSpec>,
    pub standardizer: Standardizer,
}

impl EncodingVocab {
    /// Column names before zero-variance columns are dropped.
    pub fn raw_columns(&self) -> Vec<String> {
        let mut cols = Vec::new();
        for cat in &self.categorical {
            for c in &cat.categories {
                cols.push(format!("{}={}", cat.feature, c));
            }
            cols.push(format!("{}={}", cat.feature, OTHER_CATEGORY));
        }
        for num in &self.numeric {
            for stat in NumericStats::FIELDS {
                cols.push(format!("{num}:{stat}"));
            }
        }
        for cross in &self.cross {
            for b in 0..cross.hour_buckets {
                for stat in NumericStats::FIELDS {
                    cols.push(format!("{}:{stat}", cross.name(b)));
                }
            }
        }
        cols
    }

    /// `sum(K_f + 1) + 6 * numeric + 6 * sum(cross buckets)`.
    pub fn raw_dim(&self) -> usize {
        self.categorical
            .iter()
            .map(|c| c.categories.len() + 1)
            .sum::<usize>()
            + 6 * self.numeric.len()
            + 6 * self.cross.iter().map(|c| c.hour_buckets).sum::<usize>()
    }

    /// Names of the columns in the encoded matrix.
    pub fn columns(&self) -> Vec<String> {
        let raw = self.raw_columns();
        self.standardizer
            .kept
            .iter()
            .map(|&i| raw[i].clone())
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.standardizer.kept.len()
    }

    /// Stable digest of the full layout and standardizer.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(self).expect("vocab serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
    }

    /// Encoded rows before standardization, in raw layout.
    pub fn encode_raw(&self, aggregates: &[UserAggregate]) -> Array2<f64> {
        let mut out = Array2::zeros((aggregates.len(), self.raw_dim()));
        for (mut row, agg) in out.rows_mut().into_iter().zip(aggregates) {
            let mut col = 0;
            for cat in &self.categorical {
                let n = agg.record_count(cat.source);
                let counts = agg.categorical.get(&cat.feature);
                if let (Some(counts), true) = (counts, n > 0) {
                    let total = n as f64;
                    let mut other = 0u64;
                    let retained: BTreeMap<&str, usize> = cat
                        .categories
                        .iter()
                        .enumerate()
                        .map(|(i, c)| (c.as_str(), i))
                        .collect();
                    for (c, &k) in counts {
                        match retained.get(c.as_str()) {
                            Some(&i) => row[col + i] = k as f64 / total,
                            None => other += k,
                        }
                    }
                    row[col + cat.categories.len()] = other as f64 / total;
                }
                col += cat.categories.len() + 1;
            }
            for num in &self.numeric {
                let stats = agg.numeric.get(num).copied().unwrap_or_default();
                for (j, v) in stats.as_array().into_iter().enumerate() {
                    row[col + j] = v;
                }
                col += 6;
            }
            for cross in &self.cross {
                for b in 0..cross.hour_buckets {
                    let stats = agg.cross.get(&cross.name(b)).copied().unwrap_or_default();
                    for (j, v) in stats.as_array().into_iter().enumerate() {
                        row[col + j] = v;
                    }
                    col += 6;
                }
            }
        }
        out
    }

    fn standardize(&self, raw: &Array2<f64>) -> Array2<f64> {
        let s = &self.standardizer;
        let mut out = Array2::zeros((raw.nrows(), s.kept.len()));
        for (j, &src) in s.kept.iter().enumerate() {
            let (m, sd) = (s.mean[j], s.std[j]);
            out.column_mut(j)
                .zip_mut_with(&raw.column(src), |o, &v| *o = (v - m) / sd);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabConfig {
    pub max_categories: usize,
    pub merge: MergeConfig,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            max_categories: DEFAULT_MAX_CATEGORIES,
            merge: MergeConfig::default(),
        }
    }
}

/// Fits the vocabulary and standardizer on training aggregates.
/// `retained` is the output of [`super::filter_features`].
pub fn fit_vocab(
    aggregates: &[UserAggregate],
    retained: &BTreeSet<String>,
    cfg: &VocabConfig,
) -> Result<EncodingVocab> {
    if aggregates.is_empty() {
        return Err(Error::Input("cannot fit a vocabulary on zero users".into()));
    }
    if cfg.max_categories == 0 {
        return Err(Error::Config("max_categories must be positive".into()));
    }
    let mut categorical = Vec::new();
    let mut numeric = Vec::new();
    for (name, source, kind) in all_features() {
        if !retained.contains(&name) {
            continue;
        }
        match kind {
            FieldKind::Categorical | FieldKind::Timestamp => {
                let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
                for agg in aggregates {
                    if let Some(counts) = agg.categorical.get(&name) {
                        for (c, &k) in counts {
                            *freq.entry(c.as_str()).or_default() += k;
                        }
                    }
                }
                let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
                categorical.push(CategoricalVocab {
                    feature: name,
                    source,
                    categories: ranked
                        .into_iter()
                        .take(cfg.max_categories)
                        .map(|(c, _)| c.to_string())
                        .collect(),
                });
            }
            FieldKind::Numeric => numeric.push(name),
        }
    }
    let cross = cfg
        .merge
        .cross_features
        .iter()
        .filter(|c| {
            retained.contains("tx.time") && retained.contains(&format!("tx.{}", c.numeric))
        })
        .cloned()
        .collect();

    let mut vocab = EncodingVocab {
        version: VOCAB_FORMAT_VERSION,
        max_categories: cfg.max_categories,
        categorical,
        numeric,
        cross,
        standardizer: Standardizer {
            kept: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
        },
    };
    let raw = vocab.encode_raw(aggregates);
    vocab.standardizer = fit_standardizer(&raw);
    if vocab.standardizer.kept.is_empty() {
        return Err(Error::Input(
            "every encoded column has zero variance on the fitting data".into(),
        ));
    }
    Ok(vocab)
}

fn fit_standardizer(raw: &Array2<f64>) -> Standardizer {
    let n = raw.nrows() as f64;
    let mut s = Standardizer {
        kept: Vec::new(),
        mean: Vec::new(),
        std: Vec::new(),
    };
    for (j, col) in raw.axis_iter(Axis(1)).enumerate() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 1e-12 * mean.abs().max(1.0) {
            s.kept.push(j);
            s.mean.push(mean);
            s.std.push(std);
        }
    }
    s
}

/// Per-user encoded, standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct UserFeatureMatrix {
    pub user_ids: Vec<String>,
    pub matrix: Array2<f64>,
    pub columns: Vec<String>,
    /// Fingerprint of the vocabulary that produced the matrix.
    pub fingerprint: String,
}

impl UserFeatureMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn n_users(&self) -> usize {
        self.matrix.nrows()
    }

    /// Rows for the given indices, in that order.
    pub fn select(&self, rows: &[usize]) -> UserFeatureMatrix {
        UserFeatureMatrix {
            user_ids: rows.iter().map(|&i| self.user_ids[i].clone()).collect(),
            matrix: self.matrix.select(Axis(0), rows),
            columns: self.columns.clone(),
            fingerprint: self.fingerprint.clone(),
        }
    }

    pub fn index_of(&self) -> BTreeMap<&str, usize> {
        self.user_ids
            .iter()
            .enumerate()
            .map(|(i, u)| (u.as_str(), i))
            .collect()
    }
}

/// Encodes aggregates with a fitted vocabulary. Pure: repeated calls are
/// bit-identical.
pub fn encode(aggregates: &[UserAggregate], vocab: &EncodingVocab) -> UserFeatureMatrix {
    let raw = vocab.encode_raw(aggregates);
    UserFeatureMatrix {
        user_ids: aggregates.iter().map(|a| a.user_id.clone()).collect(),
        matrix: vocab.standardize(&raw),
        columns: vocab.columns(),
        fingerprint: vocab.fingerprint(),
    }
}

pub const FEATURES_FORMAT: &str = "fraudjudger.features";

/// JSON sidecar stored next to a feature CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub format: String,
    pub version: u32,
    pub fingerprint: String,
    pub n_users: usize,
    pub columns: Vec<String>,
    pub vocab: EncodingVocab,
}

/// Writes `matrix` as CSV (`user_id` then one column per feature) plus a
/// JSON sidecar describing layout and vocabulary.
pub fn write_feature_matrix(
    matrix: &UserFeatureMatrix,
    vocab: &EncodingVocab,
    csv_path: &Path,
    sidecar_path: &Path,
) -> Result<()> {
    if matrix.fingerprint != vocab.fingerprint() {
        return Err(Error::LayoutMismatch {
            expected: vocab.fingerprint(),
            actual: matrix.fingerprint.clone(),
        });
    }
    let file = fs::File::create(csv_path)
        .map_err(|e| Error::io(format!("creating {}", csv_path.display()), e))?;
    let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(file));
    wtr.write_record(std::iter::once("user_id").chain(matrix.columns.iter().map(String::as_str)))?;
    let mut fields = Vec::with_capacity(matrix.dim() + 1);
    for (uid, row) in matrix.user_ids.iter().zip(matrix.matrix.rows()) {
        fields.clear();
        fields.push(uid.clone());
        fields.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&fields)?;
    }
    wtr.flush()
        .map_err(|e| Error::io(format!("writing {}", csv_path.display()), e))?;

    let sidecar = FeatureSidecar {
        format: FEATURES_FORMAT.into(),
        version: VOCAB_FORMAT_VERSION,
        fingerprint: matrix.fingerprint.clone(),
        n_users: matrix.n_users(),
        columns: matrix.columns.clone(),
        vocab: vocab.clone(),
    };
    let mut f = fs::File::create(sidecar_path)
        .map_err(|e| Error::io(format!("creating {}", sidecar_path.display()), e))?;
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    f.write_all(b"\n")
        .map_err(|e| Error::io(format!("writing {}", sidecar_path.display()), e))?;
    Ok(())
}

/// Reads a matrix written by [`write_feature_matrix`].
pub fn read_feature_matrix(
    csv_path: &Path,
    sidecar_path: &Path,
) -> Result<(UserFeatureMatrix, EncodingVocab)> {
    let text = fs::read_to_string(sidecar_path)
        .map_err(|e| Error::io(format!("reading {}", sidecar_path.display()), e))?;
    let sidecar: FeatureSidecar = serde_json::from_str(&text)?;
    if sidecar.format != FEATURES_FORMAT || sidecar.version != VOCAB_FORMAT_VERSION {
        return Err(Error::Input(format!(
            "unsupported feature sidecar {} v{}",
            sidecar.format, sidecar.version
        )));
    }
    if sidecar.vocab.fingerprint() != sidecar.fingerprint {
        return Err(Error::LayoutMismatch {
            expected: sidecar.fingerprint.clone(),
            actual: sidecar.vocab.fingerprint(),
        });
    }

    let mut rdr = csv::Reader::from_path(csv_path)?;
    let header: Vec<String> = rdr.headers()?.iter().skip(1).map(String::from).collect();
    if header != sidecar.columns {
        return Err(Error::Schema {
            path: csv_path.to_path_buf(),
            message: "feature columns do not match the sidecar".into(),
        });
    }
    let dim = header.len();
    let mut user_ids = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != dim + 1 {
            return Err(Error::Row {
                path: csv_path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", dim + 1, rec.len()),
            });
        }
        user_ids.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            let v: f64 = field.parse().map_err(|_| Error::Row {
                path: csv_path.to_path_buf(),
                line,
                message: format!("not a number: `{field}`"),
            })?;
            values.push(v);
        }
    }
    let matrix = Array2::from_shape_vec((user_ids.len(), dim), values)
        .map_err(|e| Error::Input(e.to_string()))?;
    Ok((
        UserFeatureMatrix {
            user_ids,
            matrix,
            columns: header,
            fingerprint: sidecar.fingerprint,
        },
        sidecar.vocab,
    ))
}
