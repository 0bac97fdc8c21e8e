//! Fraud groups, potential-fraud discovery and Cluster Recall.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, KMeansConfig, KMeansResult};
use crate::aae::{AaeMode, AaeModel, Verdict};
use crate::error::{Error, Result};
use crate::features::UserFeatureMatrix;

pub const DEFAULT_T_FRAUD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub id: usize,
    pub size: usize,
    pub fraud_count: usize,
    pub fraud_ratio: f64,
    pub is_fraud_group: bool,
}

/// Per-group fraud ratios. A group is a fraud group iff its ratio is
/// strictly above `t_fraud`; empty groups never are.
pub fn label_groups(assignments: &[usize], fraud: &[bool], k: usize, t_fraud: f64) -> Result<Vec<GroupStats>> {
    if assignments.len() != fraud.len() {
        return Err(Error::shape("group labels", assignments.len(), fraud.len()));
    }
    let mut groups: Vec<GroupStats> = (0..k)
        .map(|id| GroupStats {
            id,
            size: 0,
            fraud_count: 0,
            fraud_ratio: 0.0,
            is_fraud_group: false,
        })
        .collect();
    for (&a, &f) in assignments.iter().zip(fraud) {
        let g = groups
            .get_mut(a)
            .ok_or_else(|| Error::Input(format!("group index {a} out of range for k = {k}")))?;
        g.size += 1;
        g.fraud_count += usize::from(f);
    }
    for g in &mut groups {
        if g.size > 0 {
            g.fraud_ratio = g.fraud_count as f64 / g.size as f64;
            g.is_fraud_group = g.fraud_ratio > t_fraud;
        }
    }
    Ok(groups)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: usize,
    pub t_fraud: f64,
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub groups: Vec<GroupStats>,
}

impl ClusterReport {
    pub fn from_kmeans(result: KMeansResult, fraud: &[bool], t_fraud: f64) -> Result<Self> {
        let groups = label_groups(&result.assignments, fraud, result.k, t_fraud)?;
        Ok(ClusterReport {
            k: result.k,
            t_fraud,
            assignments: result.assignments,
            centroids: result.centroids,
            inertia: result.inertia,
            groups,
        })
    }

    pub fn fraud_groups(&self) -> impl Iterator<Item = &GroupStats> {
        self.groups.iter().filter(|g| g.is_fraud_group)
    }

    pub fn in_fraud_group(&self, user: usize) -> bool {
        self.groups[self.assignments[user]].is_fraud_group
    }

    /// `id,size,fraud_count,fraud_ratio,is_fraud_group` per group.
    pub fn groups_csv(&self) -> String {
        let mut out = String::from("id,size,fraud_count,fraud_ratio,is_fraud_group\n");
        for g in &self.groups {
            let _ = writeln!(out, "{},{},{},{},{}", g.id, g.size, g.fraud_count, g.fraud_ratio, g.is_fraud_group);
        }
        out
    }

    /// `user_id,group` per user.
    pub fn assignments_csv(&self, user_ids: &[String]) -> String {
        let mut out = String::from("user_id,group\n");
        for (u, a) in user_ids.iter().zip(&self.assignments) {
            let _ = writeln!(out, "{u},{a}");
        }
        out
    }

    pub fn summary(&self) -> ClusterSummary {
        ClusterSummary {
            k: self.k,
            t_fraud: self.t_fraud,
            inertia: self.inertia,
            n_fraud_groups: self.fraud_groups().count(),
            groups: self.groups.clone(),
        }
    }
}

/// JSON summary of a [`ClusterReport`] without per-user data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub k: usize,
    pub t_fraud: f64,
    pub inertia: f64,
    pub n_fraud_groups: usize,
    pub groups: Vec<GroupStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialFraud {
    pub user_id: String,
    pub group: usize,
    pub group_fraud_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PotentialFraudSet {
    pub users: Vec<PotentialFraud>,
}

impl PotentialFraudSet {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn contains(&self, user_id: &str) -> bool {
        self.users.iter().any(|u| u.user_id == user_id)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("user_id,group,group_fraud_ratio\n");
        for u in &self.users {
            let _ = writeln!(out, "{},{},{}", u.user_id, u.group, u.group_fraud_ratio);
        }
        out
    }
}

/// Users judged benign that sit in a fraud group of `report`.
pub fn potential_frauds(user_ids: &[String], detected: &[bool], report: &ClusterReport) -> Result<PotentialFraudSet> {
    if user_ids.len() != detected.len() || detected.len() != report.assignments.len() {
        return Err(Error::shape("potential fraud inputs", report.assignments.len(), user_ids.len()));
    }
    let users = user_ids
        .iter()
        .zip(detected)
        .zip(&report.assignments)
        .filter(|((_, &d), &a)| !d && report.groups[a].is_fraud_group)
        .map(|((u, _), &a)| PotentialFraud {
            user_id: u.clone(),
            group: a,
            group_fraud_ratio: report.groups[a].fraud_ratio,
        })
        .collect();
    Ok(PotentialFraudSet { users })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryConfig {
    pub n_cluster: usize,
    pub t_fraud: f64,
    pub kmeans: KMeansConfig,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            n_cluster: 100,
            t_fraud: DEFAULT_T_FRAUD,
            kmeans: KMeansConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discovery {
    pub verdicts: Vec<Verdict>,
    pub latent: Array2<f64>,
    pub report: ClusterReport,
    pub potential: PotentialFraudSet,
}

/// Classify every user with the semi-supervised model, cluster the latent
/// codes of the unsupervised model, flag fraud groups from the classifier
/// verdicts and return the benign-judged members of those groups.
pub fn find_potential_frauds(
    classifier: &AaeModel,
    encoder: &AaeModel,
    users: &UserFeatureMatrix,
    cfg: &DiscoveryConfig,
) -> Result<Discovery> {
    classifier.require_semi("find_potential_frauds")?;
    if encoder.mode() != AaeMode::Unsupervised {
        return Err(Error::Mode {
            op: "find_potential_frauds encoder",
            required: "unsupervised",
        });
    }
    classifier.check_layout(&users.fingerprint)?;
    encoder.check_layout(&users.fingerprint)?;
    let verdicts = classifier.classify(users.matrix.view())?;
    let latent = encoder.encode(users.matrix.view())?.z;
    let detected: Vec<bool> = verdicts.iter().map(Verdict::is_fraud).collect();
    let report = cluster_and_label(latent.view(), &detected, cfg)?;
    let potential = potential_frauds(&users.user_ids, &detected, &report)?;
    Ok(Discovery {
        verdicts,
        latent,
        report,
        potential,
    })
}

/// k-means on `points` followed by [`label_groups`] against `fraud`.
pub fn cluster_and_label(points: ArrayView2<'_, f64>, fraud: &[bool], cfg: &DiscoveryConfig) -> Result<ClusterReport> {
    let result = kmeans(points, cfg.n_cluster, &cfg.kmeans)?;
    ClusterReport::from_kmeans(result, fraud, cfg.t_fraud)
}

/// Share of true fraud users that land in groups whose true fraud ratio
/// exceeds `t_fraud`.
pub fn cluster_recall(assignments: &[usize], true_fraud: &[bool], t_fraud: f64) -> Result<f64> {
    let total = true_fraud.iter().filter(|&&f| f).count();
    if total == 0 {
        return Err(Error::Input("cluster recall needs at least one fraud user".into()));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let groups = label_groups(assignments, true_fraud, k, t_fraud)?;
    let captured: usize = groups.iter().filter(|g| g.is_fraud_group).map(|g| g.fraud_count).sum();
    Ok(captured as f64 / total as f64)
}

/// Encoded feature with its standardized weight in a group centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub feature: String,
    pub weight: f64,
}

/// Evidence for a new detection rule: a fraud group's profile in encoded
/// feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCandidate {
    pub group: usize,
    pub size: usize,
    pub fraud_ratio: f64,
    pub potential_users: usize,
    /// Mean standardized feature vector of the group.
    pub centroid: Vec<f64>,
    /// Features with the largest absolute centroid weight, descending.
    pub top_features: Vec<FeatureWeight>,
}

/// One [`RuleCandidate`] per fraud group, ordered by group id.
pub fn rule_candidates(
    users: &UserFeatureMatrix,
    report: &ClusterReport,
    potential: &PotentialFraudSet,
    top_n: usize,
) -> Vec<RuleCandidate> {
    report
        .fraud_groups()
        .map(|g| {
            let members: Vec<usize> = (0..report.assignments.len()).filter(|&i| report.assignments[i] == g.id).collect();
            let mut centroid = vec![0.0; users.dim()];
            for &i in &members {
                for (c, v) in centroid.iter_mut().zip(users.matrix.row(i)) {
                    *c += v;
                }
            }
            for c in &mut centroid {
                *c /= members.len().max(1) as f64;
            }
            let mut order: Vec<usize> = (0..centroid.len()).collect();
            order.sort_by(|&a, &b| centroid[b].abs().total_cmp(&centroid[a].abs()).then(a.cmp(&b)));
            let top_features = order
                .into_iter()
                .take(top_n)
                .map(|j| FeatureWeight {
                    feature: users.columns[j].clone(),
                    weight: centroid[j],
                })
                .collect();
            RuleCandidate {
                group: g.id,
                size: g.size,
                fraud_ratio: g.fraud_ratio,
                potential_users: potential.users.iter().filter(|u| u.group == g.id).count(),
                centroid,
                top_features,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_groups_threshold_is_strict() {
        let a = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2];
        let f = [
            true, true, true, false, // 0.75
            true, true, true, true, true, true, true, false, false, false, // 0.7
            false, false,
        ];
        let g = label_groups(&a, &f, 3, 0.7).unwrap();
        assert!(g[0].is_fraud_group);
        assert!((g[1].fraud_ratio - 0.7).abs() < 1e-15);
        assert!(!g[1].is_fraud_group);
        assert!(!g[2].is_fraud_group);
        assert_eq!(g.iter().map(|g| g.size).sum::<usize>(), a.len());
    }

    #[test]
    fn algorithm_trace() {
        // 8 detected fraud + 2 benign in group 0, all benign in group 1.
        let ids: Vec<String> = (0..14).map(|i| format!("u{i}")).collect();
        let assignments: Vec<usize> = (0..14).map(|i| usize::from(i >= 10)).collect();
        let detected: Vec<bool> = (0..14).map(|i| i < 8).collect();
        let km = KMeansResult {
            k: 2,
            assignments,
            centroids: Array2::zeros((2, 1)),
            inertia: 0.0,
            iterations: 1,
            inertia_trace: vec![0.0],
        };
        let report = ClusterReport::from_kmeans(km, &detected, 0.7).unwrap();
        let p = potential_frauds(&ids, &detected, &report).unwrap();
        let got: Vec<&str> = p.users.iter().map(|u| u.user_id.as_str()).collect();
        assert_eq!(got, vec!["u8", "u9"]);
        assert!((p.users[0].group_fraud_ratio - 0.8).abs() < 1e-15);

        let none = ClusterReport::from_kmeans(
            KMeansResult {
                k: 2,
                assignments: report.assignments.clone(),
                centroids: Array2::zeros((2, 1)),
                inertia: 0.0,
                iterations: 1,
                inertia_trace: vec![0.0],
            },
            &detected,
            1.01,
        )
        .unwrap();
        assert!(potential_frauds(&ids, &detected, &none).unwrap().is_empty());
    }

    #[test]
    fn cluster_recall_hand_traces() {
        assert_eq!(cluster_recall(&[0, 0, 1], &[true, true, false], 0.7).unwrap(), 1.0);
        // {3F+1B, 1F+5B}
        let a = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let f = [true, true, true, false, true, false, false, false, false, false];
        assert_eq!(cluster_recall(&a, &f, 0.7).unwrap(), 0.75);
        assert!(cluster_recall(&a, &[false; 10], 0.7).is_err());
    }

    #[test]
    fn csv_exports() {
        let km = KMeansResult {
            k: 2,
            assignments: vec![0, 1, 1],
            centroids: Array2::zeros((2, 1)),
            inertia: 0.0,
            iterations: 1,
            inertia_trace: vec![0.0],
        };
        let r = ClusterReport::from_kmeans(km, &[false, true, true], 0.7).unwrap();
        assert_eq!(r.groups_csv(), "id,size,fraud_count,fraud_ratio,is_fraud_group\n0,1,0,0,false\n1,2,2,1,true\n");
        let ids = vec!["a".to_string(), "b".into(), "c".into()];
        assert_eq!(r.assignments_csv(&ids).lines().count(), 4);
        assert_eq!(r.summary().n_fraud_groups, 1);
    }
}
