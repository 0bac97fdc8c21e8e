//! Feature pipeline checked against direct group-by computations over the
//! raw records.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use fraudjudger_core::features::{
    build_features, compute_missing_rates, filter_features, merge_users, OperationRecord, PipelineConfig,
    TransactionRecord, VocabConfig, OTHER_CATEGORY,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exposes each check as a `#[test]` and as part of `run_all`, so the
/// acceptance target can run the same checks without the test harness.
macro_rules! suite {
    ($($name:ident),* $(,)?) => {
        #[allow(dead_code)]
        pub fn run_all() {
            $( $name(); )*
        }

        mod tests {
            $( #[test] fn $name() { super::$name(); } )*
        }
    };
}

fn maybe<T>(rng: &mut ChaCha8Rng, missing: f64, v: T) -> Option<T> {
    if rng.gen_bool(missing) {
        None
    } else {
        Some(v)
    }
}

fn pick(rng: &mut ChaCha8Rng, prefix: &str, n: usize) -> String {
    format!("{prefix}{}", rng.gen_range(0..n))
}

fn random_time(rng: &mut ChaCha8Rng) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 1, rng.gen_range(1..29))
        .unwrap()
        .and_hms_opt(rng.gen_range(0..24), rng.gen_range(0..60), rng.gen_range(0..60))
        .unwrap()
}

/// Per-field missing rates are drawn per corpus so some fields cross the
/// 0.30 threshold.
fn random_corpus(seed: u64) -> (Vec<OperationRecord>, Vec<TransactionRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let miss: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..0.5)).collect();
    let users = rng.gen_range(5..25);
    let mut ops = Vec::new();
    let mut txs = Vec::new();
    for _ in 0..rng.gen_range(20..200) {
        let user_id = pick(&mut rng, "u", users);
        ops.push(OperationRecord {
            user_id,
            mode: { let v = pick(&mut rng, "m", 6); maybe(&mut rng, miss[0], v) },
            time: { let v = random_time(&mut rng); maybe(&mut rng, miss[1], v) },
            device: { let v = pick(&mut rng, "d", 70); maybe(&mut rng, miss[2], v) },
            version: { let v = pick(&mut rng, "v", 4); maybe(&mut rng, miss[3], v) },
            ip: { let v = pick(&mut rng, "ip", 90); maybe(&mut rng, miss[4], v) },
            mac: { let v = pick(&mut rng, "mac", 30); maybe(&mut rng, miss[5], v) },
            os: { let v = pick(&mut rng, "os", 3); maybe(&mut rng, miss[6], v) },
            geo_code: { let v = pick(&mut rng, "g", 12); maybe(&mut rng, miss[7], v) },
        });
    }
    for _ in 0..rng.gen_range(20..200) {
        let user_id = pick(&mut rng, "u", users + 3);
        txs.push(TransactionRecord {
            user_id,
            time: { let v = random_time(&mut rng); maybe(&mut rng, miss[8], v) },
            device: { let v = pick(&mut rng, "d", 70); maybe(&mut rng, miss[9], v) },
            tran_amt: { let v = rng.gen_range(0.0..500.0); maybe(&mut rng, miss[10], v) },
            ip: { let v = pick(&mut rng, "ip", 90); maybe(&mut rng, miss[11], v) },
            channel: { let v = pick(&mut rng, "c", 5); maybe(&mut rng, miss[12], v) },
            acc_id: { let v = pick(&mut rng, "a", 60); maybe(&mut rng, miss[13], v) },
            balance: { let v = rng.gen_range(-100.0..5000.0); maybe(&mut rng, miss[14], v) },
            trans_type: { let v = pick(&mut rng, "t", 4); maybe(&mut rng, miss[15], v) },
        });
    }
    (ops, txs)
}

/// Field name to its value as a string category, a number or an hour.
enum Raw {
    Cat(String),
    Num(f64),
    Hour(u32),
}

fn op_fields(r: &OperationRecord) -> Vec<(&'static str, Option<Raw>)> {
    let c = |v: &Option<String>| v.clone().map(Raw::Cat);
    vec![
        ("op.mode", c(&r.mode)),
        ("op.time", r.time.map(|t| Raw::Hour(t.hour()))),
        ("op.device", c(&r.device)),
        ("op.version", c(&r.version)),
        ("op.ip", c(&r.ip)),
        ("op.mac", c(&r.mac)),
        ("op.os", c(&r.os)),
        ("op.geo_code", c(&r.geo_code)),
    ]
}

fn tx_fields(r: &TransactionRecord) -> Vec<(&'static str, Option<Raw>)> {
    let c = |v: &Option<String>| v.clone().map(Raw::Cat);
    vec![
        ("tx.time", r.time.map(|t| Raw::Hour(t.hour()))),
        ("tx.device", c(&r.device)),
        ("tx.tran_amt", r.tran_amt.map(Raw::Num)),
        ("tx.ip", c(&r.ip)),
        ("tx.channel", c(&r.channel)),
        ("tx.acc_id", c(&r.acc_id)),
        ("tx.balance", r.balance.map(Raw::Num)),
        ("tx.trans_type", c(&r.trans_type)),
    ]
}

pub fn missing_rates_match_direct_counts() {
    for seed in 0..30 {
        let (ops, txs) = random_corpus(seed);
        let mut want: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for r in &ops {
            for (name, v) in op_fields(r) {
                let e = want.entry(name.to_string()).or_default();
                e.1 += 1;
                e.0 += usize::from(v.is_none());
            }
        }
        for r in &txs {
            for (name, v) in tx_fields(r) {
                let e = want.entry(name.to_string()).or_default();
                e.1 += 1;
                e.0 += usize::from(v.is_none());
            }
        }
        let mut got = compute_missing_rates(&ops).unwrap();
        got.extend(compute_missing_rates(&txs).unwrap());
        assert_eq!(got.len(), 16);
        for (name, (m, n)) in &want {
            assert_eq!(got[name], *m as f64 / *n as f64, "seed {seed} {name}");
        }
        let kept = filter_features(&got, 0.30);
        for (name, rate) in &got {
            assert_eq!(kept.contains(name), *rate <= 0.30);
        }
    }
}

fn stat(values: &[f64], which: &str) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    match which {
        "count" => n,
        "mean" => mean,
        "std" => (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt(),
        "min" => values.iter().copied().fold(f64::INFINITY, f64::min),
        "max" => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "sum" => values.iter().sum(),
        other => panic!("unknown stat {other}"),
    }
}

/// Expected raw value of one named column for one user.
fn oracle_value(column: &str, user: &str, ops: &[OperationRecord], txs: &[TransactionRecord], categories: &BTreeMap<String, BTreeSet<String>>) -> f64 {
    let rows: Vec<Vec<(&'static str, Option<Raw>)>> = if column.starts_with("op.") {
        ops.iter().filter(|r| r.user_id == user).map(op_fields).collect()
    } else {
        txs.iter().filter(|r| r.user_id == user).map(tx_fields).collect()
    };
    if let Some((feature, category)) = column.split_once('=') {
        if rows.is_empty() {
            return 0.0;
        }
        let hits = rows
            .iter()
            .filter(|fields| {
                let v = &fields.iter().find(|(n, _)| *n == feature).unwrap().1;
                let label = match v {
                    Some(Raw::Cat(c)) => c.clone(),
                    Some(Raw::Hour(h)) => format!("h{}", *h as usize * 4 / 24),
                    _ => return false,
                };
                if category == OTHER_CATEGORY {
                    !categories[feature].contains(&label)
                } else {
                    label == category
                }
            })
            .count();
        return hits as f64 / rows.len() as f64;
    }
    let (feature, which) = column.split_once(':').unwrap();
    let values: Vec<f64> = match feature.split_once('@') {
        None => rows
            .iter()
            .filter_map(|f| match &f.iter().find(|(n, _)| *n == feature).unwrap().1 {
                Some(Raw::Num(v)) => Some(*v),
                _ => None,
            })
            .collect(),
        Some((num, bucket)) => {
            let bucket: usize = bucket.trim_start_matches('h').parse().unwrap();
            txs.iter()
                .filter(|r| r.user_id == user)
                .filter_map(|r| {
                    let t = r.time?;
                    let v = if num == "tx.tran_amt" { r.tran_amt? } else { r.balance? };
                    (t.hour() as usize * 4 / 24 == bucket).then_some(v)
                })
                .collect()
        }
    };
    stat(&values, which)
}

pub fn encoded_rows_match_group_by_oracle() {
    let mut checked = 0usize;
    for seed in 0..20 {
        let (ops, txs) = random_corpus(seed);
        let cfg = PipelineConfig {
            vocab: VocabConfig {
                max_categories: 8,
                ..VocabConfig::default()
            },
            ..PipelineConfig::default()
        };
        let Ok(prepared) = build_features(&ops, &txs, None, &cfg) else {
            continue;
        };
        let vocab = &prepared.vocab;
        let categories: BTreeMap<String, BTreeSet<String>> = vocab
            .categorical
            .iter()
            .map(|c| (c.feature.clone(), c.categories.iter().cloned().collect()))
            .collect();
        for c in &vocab.categorical {
            assert!(c.categories.len() <= 8);
            assert!(prepared.retained.contains(&c.feature));
        }
        let raw = vocab.encode_raw(&prepared.aggregates);
        let columns = vocab.raw_columns();
        assert_eq!(columns.len(), raw.ncols());

        let users: BTreeSet<&str> = ops.iter().map(|r| r.user_id.as_str()).chain(txs.iter().map(|r| r.user_id.as_str())).collect();
        assert_eq!(prepared.matrix.user_ids, users.iter().map(|u| u.to_string()).collect::<Vec<_>>());

        for (i, user) in prepared.matrix.user_ids.iter().enumerate() {
            for (j, column) in columns.iter().enumerate() {
                let want = oracle_value(column, user, &ops, &txs, &categories);
                let got = raw[[i, j]];
                assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "seed {seed} user {user} {column}: {got} vs {want}");
                checked += 1;
            }
        }

        // Standardized columns: zero mean, unit population std; dropped ones constant.
        let m = &prepared.matrix.matrix;
        let n = m.nrows() as f64;
        for j in 0..m.ncols() {
            let col = m.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        }
        let kept: BTreeSet<usize> = vocab.standardizer.kept.iter().copied().collect();
        for j in (0..raw.ncols()).filter(|j| !kept.contains(j)) {
            let col = raw.column(j);
            assert!(col.iter().all(|&v| (v - col[0]).abs() <= 1e-12 * col[0].abs().max(1.0)));
        }
    }
    assert!(checked > 10_000, "only {checked} cells checked");
}

pub fn merge_counts_every_record_once() {
    for seed in 0..10 {
        let (ops, txs) = random_corpus(seed);
        let aggs = merge_users(&ops, &txs, &Default::default());
        assert_eq!(aggs.iter().map(|a| a.op_count).sum::<u64>(), ops.len() as u64);
        assert_eq!(aggs.iter().map(|a| a.tx_count).sum::<u64>(), txs.len() as u64);
        for a in &aggs {
            for (feature, counts) in &a.categorical {
                let total: u64 = counts.values().sum();
                assert!(total <= a.record_count(if feature.starts_with("op.") {
                    fraudjudger_core::features::RecordKind::Operation
                } else {
                    fraudjudger_core::features::RecordKind::Transaction
                }));
            }
        }
    }
}

suite!(
    missing_rates_match_direct_counts,
    encoded_rows_match_group_by_oracle,
    merge_counts_every_record_once,
);
