//! k-means on user representations, fraud-group labeling, potential-fraud
//! discovery and clustering quality measures.

mod ami;
mod discovery;
mod kmeans;

pub use ami::{ami, entropy, Contingency};
pub use discovery::{
    cluster_and_label, cluster_recall, find_potential_frauds, label_groups, potential_frauds,
    rule_candidates, ClusterReport, ClusterSummary, Discovery, DiscoveryConfig, FeatureWeight,
    GroupStats, PotentialFraud, PotentialFraudSet, RuleCandidate, DEFAULT_T_FRAUD,
};
pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
