//! The detect, discover and blacklist-update loop over successive batches.

use fraudjudger_core::aae::FRAUD;
use fraudjudger_core::cluster::{find_potential_frauds, DiscoveryConfig, KMeansConfig};
use fraudjudger_core::experiments::{train_semi, train_unsupervised, Corpus};
use fraudjudger_core::synth::{generate, SynthConfig, SynthOutput};
use serde::Serialize;

use crate::args::LoopArgs;
use crate::blacklist::{Blacklist, Provenance};
use crate::commands::{rule_report, UpdateCounts};
use crate::context::Context;
use crate::error::Result;
use crate::output::OutputDir;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleSummary {
    pub cycle: usize,
    pub seed: u64,
    pub n_users: usize,
    pub novel_in_batch: usize,
    pub labeled_fraud: usize,
    pub detected: usize,
    pub n_fraud_groups: usize,
    pub potential: usize,
    pub blacklist: UpdateCounts,
    pub blacklist_size: usize,
    pub blacklist_potential: usize,
    pub blacklist_revision: u64,
    /// Novel-family users of this batch that ended up blacklisted.
    pub novel_blacklisted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopReport {
    pub cycles: usize,
    pub novel_from_cycle: usize,
    pub n_cluster: usize,
    pub t_fraud: f64,
    pub summaries: Vec<CycleSummary>,
}

/// Prefixes every user id so batches never collide in the blacklist.
fn prefix_ids(data: &mut SynthOutput, prefix: &str) {
    for r in &mut data.operations {
        r.user_id.insert_str(0, prefix);
    }
    for r in &mut data.transactions {
        r.user_id.insert_str(0, prefix);
    }
    for u in &mut data.truth.users {
        u.user_id.insert_str(0, prefix);
    }
}

pub fn run(ctx: &Context, args: &LoopArgs) -> Result<OutputDir> {
    let out = ctx.output("loop")?;
    let mut blacklist = Blacklist::open(&ctx.blacklist_path(args.blacklist.as_deref(), &out))?;
    let base = ctx.seed();
    let mut report = LoopReport {
        cycles: args.cycles,
        novel_from_cycle: args.novel_from_cycle,
        n_cluster: ctx.n_cluster(),
        t_fraud: ctx.t_fraud(),
        summaries: Vec::new(),
    };
    for c in 0..args.cycles {
        let seed = base.wrapping_add(c as u64);
        let synth = SynthConfig {
            seed,
            novel_family: if c < args.novel_from_cycle { None } else { ctx.settings.synth.novel_family.clone() },
            ..ctx.settings.synth.clone()
        };
        let mut data = generate(&synth)?;
        prefix_ids(&mut data, &format!("b{c}-"));
        let corpus = Corpus::from_output(data, &ctx.settings.pipeline)?;
        let cfg = ctx.settings.train_config(seed);
        log::info!("cycle {c}: training on {} users", corpus.matrix().n_users());
        let (classifier, _) = train_semi(&corpus, &cfg)?;
        let (encoder, _) = train_unsupervised(&corpus, &cfg)?;
        let disc_cfg = DiscoveryConfig {
            kmeans: KMeansConfig {
                seed,
                ..ctx.settings.kmeans
            },
            ..ctx.discovery_config()
        };
        let found = find_potential_frauds(&classifier, &encoder, corpus.matrix(), &disc_cfg)?;

        let mut counts = UpdateCounts::default();
        let users = &corpus.truth().users;
        let labeled: Vec<&str> = users.iter().filter(|u| u.labeled && u.label == FRAUD).map(|u| u.user_id.as_str()).collect();
        for id in &labeled {
            counts.record(blacklist.insert(id, Provenance::Labeled, None)?);
        }
        let ids = &corpus.matrix().user_ids;
        let mut detected = 0;
        for (id, v) in ids.iter().zip(&found.verdicts) {
            if v.is_fraud() {
                detected += 1;
                counts.record(blacklist.insert(id, Provenance::Detected, None)?);
            }
        }
        for p in &found.potential.users {
            counts.record(blacklist.insert(&p.user_id, Provenance::Potential, Some(p.group_fraud_ratio))?);
        }
        blacklist.commit()?;

        let rules = rule_report(corpus.matrix(), Some(corpus.truth()), &found, 10);
        out.write_json(&format!("cycle_{c}_rule_candidates.json"), &rules)?;
        out.write(&format!("cycle_{c}_potential.csv"), found.potential.to_csv())?;
        let summary = CycleSummary {
            cycle: c,
            seed,
            n_users: users.len(),
            novel_in_batch: users.iter().filter(|u| u.novel).count(),
            labeled_fraud: labeled.len(),
            detected,
            n_fraud_groups: rules.n_fraud_groups,
            potential: found.potential.len(),
            blacklist: counts,
            blacklist_size: blacklist.len(),
            blacklist_potential: blacklist.count(Provenance::Potential),
            blacklist_revision: blacklist.revision(),
            novel_blacklisted: users.iter().filter(|u| u.novel && blacklist.get(&u.user_id).is_some()).count(),
        };
        println!(
            "loop cycle {c}: {detected} detected, {} potential, blacklist holds {}",
            summary.potential, summary.blacklist_size
        );
        report.summaries.push(summary);
    }
    out.write_json("loop_report.json", &report)?;
    Ok(out)
}
