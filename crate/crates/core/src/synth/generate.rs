use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Dirichlet, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::config::{
    Behavior, FamilyProfile, LogNormalSpec, Pairing, SegmentProfile, SynthConfig, N_CHANNELS,
    N_GEO, N_OS, N_TRANS_TYPES, N_VERSIONS,
};
use crate::aae::{BENIGN, FRAUD};
use crate::error::{Error, Result};
use crate::features::{qualified, write_records, OperationRecord, RecordKind, TransactionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserTruth {
    pub user_id: String,
    /// `0` benign, `1` fraud.
    pub label: usize,
    /// Fraud family name, or `benign`.
    pub family: String,
    pub segment: String,
    pub novel: bool,
    pub split: Split,
    /// Whether the label is revealed to the semi-supervised trainer.
    pub labeled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Sorted by user id.
    pub users: Vec<UserTruth>,
}

impl GroundTruth {
    pub fn is_fraud(&self) -> Vec<bool> {
        self.users.iter().map(|u| u.label == FRAUD).collect()
    }

    pub fn by_id(&self) -> BTreeMap<&str, &UserTruth> {
        self.users.iter().map(|u| (u.user_id.as_str(), u)).collect()
    }

    /// Reveals the labels of a stratified random sample of
    /// `round(ratio * n_train)` training users, never from the novel family.
    /// Each class with a labelable training user gets at least one label.
    pub fn assign_labels(&mut self, ratio: f64, seed: u64) -> Result<()> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Config(format!("label ratio must lie in [0, 1], got {ratio}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1abe_1000);
        let n_train = self.users.iter().filter(|u| u.split == Split::Train).count();
        let mut pools: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, u) in self.users.iter_mut().enumerate() {
            u.labeled = false;
            if u.split == Split::Train && !u.novel {
                pools[u.label].push(i);
            }
        }
        let eligible = pools[0].len() + pools[1].len();
        if eligible == 0 {
            return Ok(());
        }
        let total = ((ratio * n_train as f64).round() as usize).max(2).min(eligible);
        let at_least_one = |n: usize, pool: usize| n.max(usize::from(pool > 0)).min(pool);
        let n_fraud = at_least_one(
            (total as f64 * pools[FRAUD].len() as f64 / eligible as f64).round() as usize,
            pools[FRAUD].len(),
        );
        let n_benign = at_least_one(total.saturating_sub(n_fraud), pools[BENIGN].len());
        for (class, n) in [(BENIGN, n_benign), (FRAUD, n_fraud)] {
            for &i in pools[class].choose_multiple(&mut rng, n) {
                self.users[i].labeled = true;
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("user_id,label,family,segment,novel,split,labeled\n");
        for u in &self.users {
            let split = match u.split {
                Split::Train => "train",
                Split::Test => "test",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                u.user_id, u.label, u.family, u.segment, u.novel, split, u.labeled
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let users = rdr.deserialize().collect::<std::result::Result<Vec<UserTruth>, _>>()?;
        Ok(GroundTruth { users })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_csv(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub operations: Vec<OperationRecord>,
    pub transactions: Vec<TransactionRecord>,
    pub truth: GroundTruth,
}

pub const OPERATIONS_FILE: &str = "operations.csv";
pub const TRANSACTIONS_FILE: &str = "transactions.csv";
pub const TRUTH_FILE: &str = "truth.csv";

impl SynthOutput {
    /// Writes the three CSV files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let create = |name: &str| {
            let p = dir.join(name);
            std::fs::File::create(&p).map_err(|e| Error::io(format!("creating {}", p.display()), e))
        };
        write_records(&self.operations, std::io::BufWriter::new(create(OPERATIONS_FILE)?))?;
        write_records(&self.transactions, std::io::BufWriter::new(create(TRANSACTIONS_FILE)?))?;
        let p = dir.join(TRUTH_FILE);
        std::fs::write(&p, self.truth.to_csv()).map_err(|e| Error::io(format!("writing {}", p.display()), e))
    }
}

enum Role<'a> {
    Benign,
    Fraud(&'a FamilyProfile, bool),
}

/// Largest-remainder allocation of `total` over `weights`. Positively
/// weighted entries left empty take one from the largest allocation.
fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let left = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(left) {
        counts[i] += 1;
    }
    for i in 0..counts.len() {
        if counts[i] == 0 && weights[i] > 0.0 {
            let donor = (0..counts.len()).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).expect("non-empty");
            if counts[donor] > 1 {
                counts[donor] -= 1;
                counts[i] = 1;
            }
        }
    }
    counts
}

fn normalized(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn blend(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    normalized(a).iter().zip(normalized(b)).map(|(x, y)| (1.0 - t) * x + t * y).collect()
}

fn blend_spec(a: LogNormalSpec, b: LogNormalSpec, t: f64) -> LogNormalSpec {
    LogNormalSpec {
        mu: (1.0 - t) * a.mu + t * b.mu,
        sigma: (1.0 - t) * a.sigma + t * b.sigma,
    }
}

fn blend_behavior(seg: &Behavior, fam: &FamilyProfile, timing: bool, money: bool) -> Behavior {
    let t = fam.strength;
    let (tt, tm) = (if timing { t } else { 0.0 }, if money { t } else { 0.0 });
    Behavior {
        mode: blend(&seg.mode, &fam.behavior.mode, tt),
        hours: blend(&seg.hours, &fam.behavior.hours, tt),
        amount: blend_spec(seg.amount, fam.behavior.amount, tm),
        balance: blend_spec(seg.balance, fam.behavior.balance, tm),
    }
}

/// Per-user preference vector drawn around `profile`.
fn personal(profile: &[f64], concentration: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let p = normalized(profile);
    let alpha: Vec<f64> = p.iter().map(|x| (x * concentration * p.len() as f64).max(1e-3)).collect();
    let draw = Dirichlet::new(&alpha).expect("positive concentration").sample(rng);
    // Keep every category reachable so weights stay valid.
    draw.iter().map(|x| x.max(1e-12)).collect()
}

fn pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    WeightedIndex::new(weights).expect("valid weights").sample(rng)
}

/// Primary category used with probability `loyalty`, otherwise any.
fn habitual(primary: usize, n: usize, loyalty: f64, rng: &mut ChaCha8Rng) -> usize {
    if rng.gen_bool(loyalty) {
        primary
    } else {
        rng.gen_range(0..n)
    }
}

struct UserPlan {
    mode: WeightedIndex<f64>,
    hours: WeightedIndex<f64>,
    os: usize,
    version: usize,
    geo: usize,
    amount: LogNormal<f64>,
    balance: LogNormal<f64>,
    pairing: Pairing,
    pairing_mix: f64,
    devices: usize,
    ips: usize,
    office: Option<usize>,
    n_ops: usize,
    n_txs: usize,
}

fn lognormal(spec: LogNormalSpec, jitter: f64, rng: &mut ChaCha8Rng) -> LogNormal<f64> {
    let mu = spec.mu + Normal::new(0.0, jitter).expect("finite").sample(rng);
    LogNormal::new(mu, spec.sigma).expect("validated spec")
}

struct Missing {
    op: [f64; 8],
    tx: [f64; 8],
}

impl Missing {
    fn new(rates: &BTreeMap<String, f64>) -> Self {
        let get = |kind, field: &str| rates.get(&qualified(kind, field)).copied().unwrap_or(0.0);
        let op_fields = crate::features::OPERATION_FIELDS.map(|f| f.name);
        let tx_fields = crate::features::TRANSACTION_FIELDS.map(|f| f.name);
        Missing {
            op: op_fields.map(|f| get(RecordKind::Operation, f)),
            tx: tx_fields.map(|f| get(RecordKind::Transaction, f)),
        }
    }
}

fn keep<T>(value: T, rate: f64, rng: &mut ChaCha8Rng) -> Option<T> {
    // Always draw so that the stream does not depend on the rate.
    let u: f64 = rng.gen();
    (u >= rate).then_some(value)
}

fn cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Generates operation and transaction logs plus ground truth.
/// Deterministic per `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_users;
    let (n_fraud, n_novel) = cfg.fraud_counts();
    let family_counts = allocate(n_fraud - n_novel, &cfg.families.iter().map(|f| f.weight).collect::<Vec<_>>());

    let mut roles: Vec<Role<'_>> = (0..n - n_fraud).map(|_| Role::Benign).collect();
    for (fam, &count) in cfg.families.iter().zip(&family_counts) {
        roles.extend((0..count).map(|_| Role::Fraud(fam, false)));
    }
    if let Some(novel) = &cfg.novel_family {
        roles.extend((0..n_novel).map(|_| Role::Fraud(novel, true)));
    }
    roles.shuffle(&mut rng);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (cfg.train_fraction * n as f64).round() as usize;
    let mut split = vec![Split::Test; n];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }

    order.shuffle(&mut rng);
    let mut office = vec![None; n];
    let mut cursor = 0;
    for g in 0..cfg.shared_ip_groups {
        let size = rng.gen_range(cfg.shared_ip_users.0..=cfg.shared_ip_users.1);
        for &i in order.iter().skip(cursor).take(size) {
            office[i] = Some(g);
        }
        cursor += size;
    }

    let segment_pick = WeightedIndex::new(cfg.segments.iter().map(|s| s.weight)).map_err(|e| Error::Config(e.to_string()))?;
    let width = n.to_string().len().max(5);
    let start = NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date").and_hms_opt(0, 0, 0).expect("valid time");
    let missing = Missing::new(&cfg.missing_rates);
    let beta = Beta::new(cfg.pairing_shape, cfg.pairing_shape).map_err(|e| Error::Config(e.to_string()))?;
    let op_count = Poisson::new(cfg.op_records_mean - 1.0 + 1e-9).map_err(|e| Error::Config(e.to_string()))?;
    let tx_count = Poisson::new(cfg.tx_records_mean - 1.0 + 1e-9).map_err(|e| Error::Config(e.to_string()))?;

    let mut truth = Vec::with_capacity(n);
    let mut operations = Vec::new();
    let mut transactions = Vec::new();
    for (i, role) in roles.iter().enumerate() {
        let user_id = format!("u{i:0width$}");
        let seg: &SegmentProfile = &cfg.segments[segment_pick.sample(&mut rng)];
        let (behavior, pairing, family, novel, os, version, geo) = match role {
            Role::Benign => (seg.behavior.clone(), Pairing::Aligned, "benign".to_string(), false, seg.os.clone(), seg.version.clone(), seg.geo.clone()),
            Role::Fraud(f, novel) => {
                let timing = rng.gen_bool(f.expression);
                let money = rng.gen_bool(f.expression);
                (
                    blend_behavior(&seg.behavior, f, timing, money),
                    f.pairing,
                    f.name.clone(),
                    *novel,
                    blend(&seg.os, &f.os, f.strength),
                    blend(&seg.version, &f.version, f.strength),
                    blend(&seg.geo, &f.geo, f.strength),
                )
            }
        };
        let plan = UserPlan {
            mode: WeightedIndex::new(personal(&behavior.mode, cfg.concentration, &mut rng)).expect("weights"),
            hours: WeightedIndex::new(personal(&behavior.hours, cfg.concentration, &mut rng)).expect("weights"),
            os: pick(&os, &mut rng),
            version: pick(&version, &mut rng),
            geo: pick(&geo, &mut rng),
            amount: lognormal(behavior.amount, 0.3, &mut rng),
            balance: lognormal(behavior.balance, 0.3, &mut rng),
            pairing,
            pairing_mix: beta.sample(&mut rng),
            devices: rng.gen_range(1..=2),
            ips: rng.gen_range(1..=3),
            office: office[i],
            n_ops: 1 + op_count.sample(&mut rng) as usize,
            n_txs: 1 + tx_count.sample(&mut rng) as usize,
        };
        let time = |rng: &mut ChaCha8Rng| -> NaiveDateTime {
            let day = rng.gen_range(0..30);
            let hour = plan.hours.sample(rng) as i64;
            let secs = rng.gen_range(0..3600);
            start + Duration::days(day) + Duration::hours(hour) + Duration::seconds(secs)
        };
        let device = |rng: &mut ChaCha8Rng| rng.gen_range(0..plan.devices);
        let ip = |rng: &mut ChaCha8Rng| match plan.office {
            Some(g) if rng.gen_bool(cfg.shared_ip_use) => format!("office-{g}"),
            _ => format!("ip-{user_id}-{}", rng.gen_range(0..plan.ips)),
        };
        for _ in 0..plan.n_ops {
            let m = &missing.op;
            let d = device(&mut rng);
            let record = OperationRecord {
                user_id: user_id.clone(),
                mode: keep(format!("m{}", plan.mode.sample(&mut rng)), m[0], &mut rng),
                time: keep(time(&mut rng), m[1], &mut rng),
                device: keep(format!("dev-{user_id}-{d}"), m[2], &mut rng),
                version: keep(format!("v{}", habitual(plan.version, N_VERSIONS, 0.9, &mut rng)), m[3], &mut rng),
                ip: keep(ip(&mut rng), m[4], &mut rng),
                mac: keep(format!("mac-{user_id}-{d}"), m[5], &mut rng),
                os: keep(format!("os{}", habitual(plan.os, N_OS, 0.97, &mut rng)), m[6], &mut rng),
                geo_code: keep(format!("g{}", habitual(plan.geo, N_GEO, 0.8, &mut rng)), m[7], &mut rng),
            };
            operations.push(record);
        }
        for _ in 0..plan.n_txs {
            let m = &missing.tx;
            let first = rng.gen_bool(plan.pairing_mix);
            let (mut ch, mut tt) = match (plan.pairing, first) {
                (Pairing::Aligned, true) => (0, 0),
                (Pairing::Aligned, false) => (1, 1),
                (Pairing::Crossed, true) => (0, 1),
                (Pairing::Crossed, false) => (1, 0),
            };
            if rng.gen_bool(cfg.side_combo_rate) {
                ch = rng.gen_range(2..N_CHANNELS);
            }
            if rng.gen_bool(cfg.side_combo_rate) {
                tt = rng.gen_range(2..N_TRANS_TYPES);
            }
            let record = TransactionRecord {
                user_id: user_id.clone(),
                time: keep(time(&mut rng), m[0], &mut rng),
                device: keep(format!("dev-{user_id}-{}", device(&mut rng)), m[1], &mut rng),
                tran_amt: keep(cents(plan.amount.sample(&mut rng)), m[2], &mut rng),
                ip: keep(ip(&mut rng), m[3], &mut rng),
                channel: keep(format!("ch{ch}"), m[4], &mut rng),
                acc_id: keep(format!("acc-{user_id}-{}", rng.gen_range(0..3)), m[5], &mut rng),
                balance: keep(cents(plan.balance.sample(&mut rng)), m[6], &mut rng),
                trans_type: keep(format!("tt{tt}"), m[7], &mut rng),
            };
            transactions.push(record);
        }
        truth.push(UserTruth {
            user_id,
            label: usize::from(matches!(role, Role::Fraud(..))),
            family,
            segment: seg.name.clone(),
            novel,
            split: split[i],
            labeled: false,
        });
    }
    let mut truth = GroundTruth { users: truth };
    truth.assign_labels(cfg.label_ratio, cfg.seed)?;
    Ok(SynthOutput {
        operations,
        transactions,
        truth,
    })
}
