use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::qualified;
use crate::features::RecordKind::{Operation, Transaction};
use crate::nn::REFERENCE_FRAUD_RATIO;

pub const N_MODES: usize = 8;
pub const N_OS: usize = 5;
pub const N_VERSIONS: usize = 12;
pub const N_GEO: usize = 40;
pub const N_CHANNELS: usize = 4;
pub const N_TRANS_TYPES: usize = 4;

/// How a user's transactions pair the two main channels with the two main
/// transaction types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pairing {
    /// `ch0` with `tt0`, `ch1` with `tt1`.
    Aligned,
    /// `ch0` with `tt1`, `ch1` with `tt0`.
    Crossed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSpec {
    pub mu: f64,
    pub sigma: f64,
}

/// Device and location habits of a benign population segment. Fraud users
/// borrow these from a randomly drawn host segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentProfile {
    pub name: String,
    pub weight: f64,
    pub os: Vec<f64>,
    pub version: Vec<f64>,
    pub geo: Vec<f64>,
    pub behavior: Behavior,
}

/// Activity habits: what a user does and when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    pub mode: Vec<f64>,
    /// Relative weight of each hour of the day.
    pub hours: Vec<f64>,
    pub amount: LogNormalSpec,
    pub balance: LogNormalSpec,
}

/// A fraud family. Its device and location preferences are blended into
/// the host segment's with weight `strength`. Its timing (mode and hours)
/// and money habits (amount and balance) are each expressed with
/// probability `expression` per user and blended the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyProfile {
    pub name: String,
    pub weight: f64,
    pub strength: f64,
    pub expression: f64,
    pub pairing: Pairing,
    pub os: Vec<f64>,
    pub version: Vec<f64>,
    pub geo: Vec<f64>,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub fraud_ratio: f64,
    /// Share of fraud users that belong to the novel family.
    pub novel_share: f64,
    pub train_fraction: f64,
    /// Share of training users whose labels are revealed.
    pub label_ratio: f64,
    pub op_records_mean: f64,
    pub tx_records_mean: f64,
    /// Dirichlet concentration of per-user preferences around the profile.
    pub concentration: f64,
    /// Beta shape of the per-user mix between the two pairing combos.
    pub pairing_shape: f64,
    /// Probability that a transaction uses a side channel or type.
    pub side_combo_rate: f64,
    /// Benign users sharing office IPs: number of groups and per-record use.
    pub shared_ip_groups: usize,
    pub shared_ip_users: (usize, usize),
    pub shared_ip_use: f64,
    pub segments: Vec<SegmentProfile>,
    pub families: Vec<FamilyProfile>,
    pub novel_family: Option<FamilyProfile>,
    /// Qualified feature name -> probability that a record lacks it.
    pub missing_rates: BTreeMap<String, f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 5000,
            fraud_ratio: REFERENCE_FRAUD_RATIO,
            novel_share: 0.12,
            train_fraction: 20_000.0 / 29_354.0,
            label_ratio: 0.10,
            op_records_mean: 10.0,
            tx_records_mean: 10.0,
            concentration: 2.0,
            pairing_shape: 0.2,
            side_combo_rate: 0.05,
            shared_ip_groups: 60,
            shared_ip_users: (8, 40),
            shared_ip_use: 0.5,
            segments: default_segments(),
            families: default_families(),
            novel_family: Some(default_novel_family()),
            missing_rates: reference_missing_rates(),
            seed: 0,
        }
    }
}

/// Per-feature missing rates of the reference operation and transaction logs.
pub fn reference_missing_rates() -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for (f, r) in [
        ("mode", 0.0),
        ("time", 0.0),
        ("device", 0.293),
        ("version", 0.19),
        ("ip", 0.18),
        ("mac", 0.899),
        ("os", 0.0),
        ("geo_code", 0.339),
    ] {
        m.insert(qualified(Operation, f), r);
    }
    for (f, r) in [
        ("time", 0.0),
        ("device", 0.342),
        ("tran_amt", 0.0),
        ("ip", 0.146),
        ("channel", 0.0),
        ("acc_id", 0.621),
        ("balance", 0.0),
        ("trans_type", 0.0),
    ] {
        m.insert(qualified(Transaction, f), r);
    }
    m
}

/// Weight vector of length `n` with the listed entries raised to `peak`.
fn peaked(n: usize, base: f64, peaks: &[(usize, f64)]) -> Vec<f64> {
    let mut v = vec![base; n];
    for &(i, p) in peaks {
        v[i] = p;
    }
    v
}

fn hours(weights: [(std::ops::Range<usize>, f64); 4]) -> Vec<f64> {
    let mut v = vec![0.0; 24];
    for (range, w) in weights {
        for h in range {
            v[h] = w;
        }
    }
    v
}

fn daytime() -> Vec<f64> {
    hours([(0..6, 0.1), (6..12, 1.0), (12..18, 1.0), (18..24, 0.5)])
}

/// Everyday population segments.
pub fn default_segments() -> Vec<SegmentProfile> {
    let seg = |name: &str, weight: f64, os: usize, v: [usize; 2], geo: usize, mode: [usize; 2], hours: Vec<f64>, amount: f64| SegmentProfile {
        name: name.into(),
        weight,
        os: peaked(N_OS, 0.2, &[(os, 4.0)]),
        version: peaked(N_VERSIONS, 0.1, &[(v[0], 3.0), (v[1], 2.0)]),
        geo: peaked(N_GEO, 0.05, &[(geo, 3.0), (geo + 1, 2.0), (geo + 2, 1.0)]),
        behavior: Behavior {
            mode: peaked(N_MODES, 0.3, &[(mode[0], 3.0), (mode[1], 2.0)]),
            hours,
            amount: LogNormalSpec { mu: amount, sigma: 0.8 },
            balance: LogNormalSpec { mu: 8.0, sigma: 0.8 },
        },
    };
    vec![
        seg("commuter", 0.28, 0, [0, 1], 0, [0, 1], hours([(0..6, 0.05), (6..10, 1.5), (10..17, 0.6), (17..24, 1.0)]), 3.5),
        seg("office", 0.25, 1, [2, 3], 8, [1, 2], hours([(0..6, 0.05), (6..12, 1.0), (12..18, 1.4), (18..24, 0.3)]), 4.5),
        seg("merchant", 0.18, 2, [4, 5], 16, [3, 0], daytime(), 5.0),
        seg("student", 0.17, 3, [6, 7], 24, [4, 2], hours([(0..6, 0.3), (6..12, 0.4), (12..18, 1.0), (18..24, 1.3)]), 3.0),
        seg("senior", 0.12, 4, [8, 9], 32, [0, 3], hours([(0..6, 0.1), (6..12, 1.6), (12..18, 0.9), (18..24, 0.2)]), 4.0),
    ]
}

/// Device and location preferences shared by every fraud family: the
/// tooling and regions the fraud operation works from.
fn fraud_os() -> Vec<f64> {
    peaked(N_OS, 0.2, &[(4, 3.0), (2, 1.0)])
}

fn fraud_version() -> Vec<f64> {
    peaked(N_VERSIONS, 0.1, &[(10, 3.0), (11, 2.0)])
}

fn fraud_geo() -> Vec<f64> {
    peaked(N_GEO, 0.05, &[(36, 2.0), (37, 2.0), (38, 1.5), (39, 1.5)])
}

fn family(name: &str, weight: f64, pairing: Pairing, hours: Vec<f64>, mode: &[(usize, f64)], amount: f64) -> FamilyProfile {
    FamilyProfile {
        name: name.into(),
        weight,
        strength: 0.5,
        expression: 1.0,
        pairing,
        os: fraud_os(),
        version: fraud_version(),
        geo: fraud_geo(),
        behavior: Behavior {
            mode: peaked(N_MODES, 0.2, mode),
            hours,
            amount: LogNormalSpec { mu: amount, sigma: 0.7 },
            balance: LogNormalSpec { mu: 6.5, sigma: 0.8 },
        },
    }
}

pub fn default_families() -> Vec<FamilyProfile> {
    let night = hours([(0..6, 1.5), (6..12, 0.2), (12..18, 0.3), (18..24, 0.8)]);
    vec![
        family("cash_out", 0.5, Pairing::Crossed, night.clone(), &[(5, 3.0), (6, 2.0)], 6.0),
        family("card_testing", 0.5, Pairing::Crossed, night, &[(6, 3.0), (7, 2.0)], 5.5),
    ]
}

/// Shares the known families' tooling but is active in the evening, moves
/// mid-sized amounts and pairs channels with transaction types the way
/// benign users do.
pub fn default_novel_family() -> FamilyProfile {
    let evening = hours([(0..6, 0.3), (6..12, 0.2), (12..18, 0.6), (18..24, 1.6)]);
    family("novel", 1.0, Pairing::Aligned, evening, &[(5, 2.0), (7, 2.0)], 5.0)
}

fn check_weights(name: &str, w: &[f64], len: usize) -> Result<()> {
    if w.len() != len {
        return Err(Error::Config(format!("{name} has {} weights, expected {len}", w.len())));
    }
    if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config(format!("{name} weights must be non-negative with a positive sum")));
    }
    Ok(())
}

fn check_behavior(name: &str, b: &Behavior) -> Result<()> {
    check_weights(&format!("{name}.mode"), &b.mode, N_MODES)?;
    check_weights(&format!("{name}.hours"), &b.hours, 24)?;
    for (what, s) in [("amount", b.amount), ("balance", b.balance)] {
        if !(s.sigma > 0.0 && s.mu.is_finite() && s.sigma.is_finite()) {
            return Err(Error::Config(format!("{name}.{what} needs finite mu and positive sigma")));
        }
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be positive".into()));
        }
        if !(self.fraud_ratio > 0.0 && self.fraud_ratio < 1.0) {
            return Err(Error::Config(format!("fraud_ratio must lie in (0, 1), got {}", self.fraud_ratio)));
        }
        for (name, v) in [
            ("novel_share", self.novel_share),
            ("train_fraction", self.train_fraction),
            ("label_ratio", self.label_ratio),
            ("side_combo_rate", self.side_combo_rate),
            ("shared_ip_use", self.shared_ip_use),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.op_records_mean >= 1.0 && self.tx_records_mean >= 1.0) {
            return Err(Error::Config("records-per-user means must be at least 1".into()));
        }
        if !(self.concentration > 0.0 && self.pairing_shape > 0.0) {
            return Err(Error::Config("concentration and pairing_shape must be positive".into()));
        }
        if self.shared_ip_users.0 == 0 || self.shared_ip_users.0 > self.shared_ip_users.1 {
            return Err(Error::Config("shared_ip_users must be a non-empty range".into()));
        }
        if self.segments.is_empty() || self.families.is_empty() {
            return Err(Error::Config("need at least one segment and one fraud family".into()));
        }
        check_weights("segment", &self.segments.iter().map(|s| s.weight).collect::<Vec<_>>(), self.segments.len())?;
        check_weights("family", &self.families.iter().map(|f| f.weight).collect::<Vec<_>>(), self.families.len())?;
        for s in &self.segments {
            check_weights(&format!("{}.os", s.name), &s.os, N_OS)?;
            check_weights(&format!("{}.version", s.name), &s.version, N_VERSIONS)?;
            check_weights(&format!("{}.geo", s.name), &s.geo, N_GEO)?;
            check_behavior(&s.name, &s.behavior)?;
        }
        for f in self.families.iter().chain(&self.novel_family) {
            if !(0.0..=1.0).contains(&f.strength) || !(0.0..=1.0).contains(&f.expression) {
                return Err(Error::Config(format!("{}: strength and expression must lie in [0, 1]", f.name)));
            }
            check_weights(&format!("{}.os", f.name), &f.os, N_OS)?;
            check_weights(&format!("{}.version", f.name), &f.version, N_VERSIONS)?;
            check_weights(&format!("{}.geo", f.name), &f.geo, N_GEO)?;
            check_behavior(&f.name, &f.behavior)?;
        }
        for (name, &r) in &self.missing_rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("missing rate of {name} must lie in [0, 1], got {r}")));
            }
        }
        let (n_fraud, n_novel) = self.fraud_counts();
        let needed = self.families.iter().filter(|f| f.weight > 0.0).count() + usize::from(n_novel > 0 || (self.novel_family.is_some() && self.novel_share > 0.0));
        if n_fraud < needed || n_fraud >= self.n_users {
            return Err(Error::Config(format!(
                "{n_fraud} fraud users cannot populate {needed} families among {} users",
                self.n_users
            )));
        }
        Ok(())
    }

    /// Fraud users in total and in the novel family. At least one fraud
    /// user is always generated.
    pub fn fraud_counts(&self) -> (usize, usize) {
        let n_fraud = ((self.fraud_ratio * self.n_users as f64).round() as usize).max(1);
        let n_novel = match &self.novel_family {
            Some(_) if self.novel_share > 0.0 => ((self.novel_share * n_fraud as f64).round() as usize).max(1),
            _ => 0,
        };
        (n_fraud, n_novel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let c = SynthConfig::default();
        c.validate().unwrap();
        assert_eq!(c.fraud_counts(), (689, 83));
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        let mut c = SynthConfig {
            fraud_ratio: 0.0,
            ..SynthConfig::default()
        };
        assert!(c.validate().is_err());
        c.fraud_ratio = 0.0001;
        c.n_users = 100;
        // One fraud user for two families plus the novel one.
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = SynthConfig::default();
        let back: SynthConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
