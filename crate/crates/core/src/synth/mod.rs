//! Synthetic operation/transaction logs with planted fraud families,
//! including a novel family whose labels are never revealed.

mod config;
mod generate;

pub use config::{
    default_families, default_novel_family, default_segments, reference_missing_rates, Behavior,
    FamilyProfile, LogNormalSpec, Pairing, SegmentProfile, SynthConfig, N_CHANNELS, N_GEO,
    N_MODES, N_OS, N_TRANS_TYPES, N_VERSIONS,
};
pub use generate::{
    generate, GroundTruth, Split, SynthOutput, UserTruth, OPERATIONS_FILE, TRANSACTIONS_FILE,
    TRUTH_FILE,
};
