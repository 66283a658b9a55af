//! Maps a finished trace onto the security claims: clause S1/S2 for safety
//! violations, L1/L2 for liveness violations, plus the no-honest-slashing
//! fairness check.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crypto::{Hash, ValidatorId};
use crate::params::ProtocolParams;
use crate::trace::TraceEvent;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct BabylonSecureAt {
    /// No honest view saw a PoW reorg of depth ≥ k_w / 2.
    pub k_w_half: bool,
    /// No honest view saw a PoW reorg of depth ≥ k_c / 2.
    pub k_c_half: bool,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    /// Two full-quorum finalizations of different blocks at one height
    /// observed across honest views.
    pub safety_violated: bool,
    /// Longest stretch of PoW growth, in blocks, without a new-block
    /// checkpoint landing, over all honest views.
    pub liveness_violation_span: u64,
    pub liveness_violated: bool,
    /// |intersection of honest views' slashable sets| / n.
    pub slashable_fraction: f64,
    pub slashable_common: Vec<ValidatorId>,
    pub babylon_secure_at: BabylonSecureAt,
    /// Honest validators any honest view marked slashable. Must stay empty
    /// whenever the PoW chain was secure at depth k_c / 2.
    pub honest_slashed: Vec<ValidatorId>,
    /// An unenhanced view faced two indistinguishable finalized histories.
    pub ambiguity: bool,
    /// Worst observed PoW-blocks delay from complaint to censored-tx
    /// inclusion, when both ends are in the trace.
    pub censored_tx_latency: Option<u64>,
    pub verdict: String,
}

impl ScenarioReport {
    pub fn failed(&self) -> bool {
        self.verdict == "FAIL"
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("scenario:                {}\n", self.scenario));
        s.push_str(&format!("seed:                    {}\n", self.seed));
        s.push_str(&format!("safety_violated:         {}\n", self.safety_violated));
        s.push_str(&format!(
            "liveness_violation_span: {} blocks{}\n",
            self.liveness_violation_span,
            if self.liveness_violated { " (violation)" } else { "" }
        ));
        s.push_str(&format!(
            "slashable_fraction:      {:.3} ({:?})\n",
            self.slashable_fraction, self.slashable_common
        ));
        s.push_str(&format!(
            "babylon_secure_at:       k_w/2: {}, k_c/2: {}\n",
            self.babylon_secure_at.k_w_half, self.babylon_secure_at.k_c_half
        ));
        s.push_str(&format!("honest_slashed:          {:?}\n", self.honest_slashed));
        s.push_str(&format!("ambiguity:               {}\n", self.ambiguity));
        if let Some(l) = self.censored_tx_latency {
            s.push_str(&format!("censored_tx_latency:     {l} blocks\n"));
        }
        s.push_str(&format!("verdict:                 {}\n", self.verdict));
        s
    }
}

fn event_node(e: &TraceEvent) -> Option<&str> {
    use TraceEvent::*;
    match e {
        Finalized { node, .. }
        | CanonicalTip { node, .. }
        | BabylonReorg { node, .. }
        | CensoredTxIncluded { node, .. }
        | CheckpointEmitted { node, .. }
        | CheckpointIndexed { node, .. }
        | FraudProofSubmitted { node, .. }
        | FinalizationHalted { node, .. }
        | SlashableAdded { node, .. }
        | WithdrawalDecided { node, .. }
        | WithdrawalInChain { node, .. }
        | ComplaintSubmitted { node, .. }
        | CensorshipDetected { node, .. }
        | StallingEvidenceSubmitted { node, .. }
        | BabylonRoundStart { node, .. }
        | BabylonRoundAborted { node, .. }
        | BabylonRoundFinalized { node, .. }
        | BabylonRoundFailed { node, .. }
        | AmbiguityRecorded { node, .. } => Some(node),
        LateNodeSpawn { node, .. } => Some(node),
        _ => None,
    }
}

pub fn check_trace(events: &[TraceEvent]) -> ScenarioReport {
    let (params, corrupted, scenario) = match events.first() {
        Some(TraceEvent::Meta {
            params,
            corrupted_validators,
            scenario,
            ..
        }) => (params.clone(), corrupted_validators.clone(), scenario.clone()),
        _ => (
            ProtocolParams::default(),
            Vec::new(),
            "unknown".to_string(),
        ),
    };
    let corrupted_names: BTreeSet<String> =
        corrupted.iter().map(|v| format!("{v}")).collect();
    let honest_validators: BTreeSet<ValidatorId> = (0..params.n)
        .map(ValidatorId)
        .filter(|v| !corrupted.contains(v))
        .collect();

    // Every node that left any footprint and is not a corrupted validator
    // counts as an honest view.
    let mut views: BTreeSet<String> = BTreeSet::new();
    for e in events {
        if let Some(n) = event_node(e) {
            if !corrupted_names.contains(n) {
                views.insert(n.to_string());
            }
        }
    }

    let quorum = params.quorum() as u64;
    let k_c = params.k_c as u64;

    // Safety: full-quorum finalizations only; reduced-quorum (post-leak)
    // histories are judged by the ambiguity/fork-choice checks instead.
    let mut by_height: BTreeMap<u64, BTreeSet<Hash>> = BTreeMap::new();
    for e in events {
        if let TraceEvent::Finalized {
            node,
            height,
            block,
            signers,
            ..
        } = e
        {
            if views.contains(node) && *signers >= quorum {
                by_height.entry(*height).or_default().insert(*block);
            }
        }
    }
    let safety_violated = by_height.values().any(|s| s.len() > 1);

    // Babylon security: honest-view reorg depths.
    let mut max_reorg = 0u64;
    for e in events {
        if let TraceEvent::BabylonReorg { node, depth, .. } = e {
            if views.contains(node) {
                max_reorg = max_reorg.max(*depth);
            }
        }
    }
    let babylon_secure_at = BabylonSecureAt {
        k_w_half: max_reorg < params.k_w as u64 / 2,
        k_c_half: max_reorg < k_c / 2,
    };

    // Slashable sets per honest view; the report counts the intersection.
    let mut slash_by_view: BTreeMap<String, BTreeSet<ValidatorId>> = BTreeMap::new();
    for v in &views {
        slash_by_view.insert(v.clone(), BTreeSet::new());
    }
    let mut honest_slashed: BTreeSet<ValidatorId> = BTreeSet::new();
    for e in events {
        if let TraceEvent::SlashableAdded {
            node, validator, ..
        } = e
        {
            if views.contains(node) {
                slash_by_view.get_mut(node).unwrap().insert(*validator);
                if honest_validators.contains(validator) {
                    honest_slashed.insert(*validator);
                }
            }
        }
    }
    let slashable_common: Vec<ValidatorId> = honest_validators
        .iter()
        .chain(corrupted.iter())
        .filter(|v| slash_by_view.values().all(|s| s.contains(v)))
        .cloned()
        .collect();
    let mut slashable_common = slashable_common;
    slashable_common.sort();
    slashable_common.dedup();
    let slashable_fraction = if params.n == 0 {
        0.0
    } else {
        slashable_common.len() as f64 / params.n as f64
    };

    // Liveness span: gaps between new-block checkpoint positions per view,
    // with the run's final PoW height closing the last window.
    let final_pow_height = events
        .iter()
        .filter_map(|e| match e {
            TraceEvent::BabylonMined { height, .. } => Some(*height),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let mut span = 0u64;
    for view in &views {
        let mut marks = vec![0u64];
        for e in events {
            if let TraceEvent::CheckpointIndexed {
                node,
                babylon_height,
                new_blocks,
                ..
            } = e
            {
                if node == view && !new_blocks.is_empty() {
                    marks.push(*babylon_height);
                }
            }
        }
        marks.sort();
        marks.push(final_pow_height);
        for w in marks.windows(2) {
            span = span.max(w[1].saturating_sub(w[0]));
        }
    }

    // Censorship clock: complaint position vs. inclusion position per view.
    let bound = 13 * k_c;
    let mut censored_latency: Option<u64> = None;
    let mut censorship_violation = false;
    // (view, complaint height, tx ids)
    let mut complaints: Vec<(String, u64, Vec<Hash>)> = Vec::new();
    for e in events {
        if let TraceEvent::ComplaintSubmitted {
            node,
            babylon_height,
            txs,
            ..
        } = e
        {
            if views.contains(node) {
                complaints.push((node.clone(), *babylon_height, txs.clone()));
            }
        }
    }
    for (view, at, txs) in &complaints {
        for tx in txs {
            let included_at = events.iter().find_map(|e| match e {
                TraceEvent::CensoredTxIncluded {
                    node,
                    tx: t,
                    babylon_height,
                    ..
                } if node == view && t == tx => Some(*babylon_height),
                _ => None,
            });
            match included_at {
                Some(h) => {
                    let lat = h.saturating_sub(*at);
                    censored_latency = Some(censored_latency.unwrap_or(0).max(lat));
                    if lat > bound {
                        censorship_violation = true;
                    }
                }
                None => {
                    if final_pow_height > at + bound {
                        censorship_violation = true;
                    }
                }
            }
        }
    }

    let liveness_violated = span > bound || censorship_violation;

    let ambiguity = events
        .iter()
        .any(|e| matches!(e, TraceEvent::AmbiguityRecorded { node, .. } if views.contains(node)));

    // Clause labels are tied to the violation they excuse: S-clauses only
    // apply to a safety violation, L-clauses to a liveness violation.
    let big = slashable_common.len() as u32 >= params.f() + 1;
    let s1 = safety_violated && big && babylon_secure_at.k_w_half;
    let s2 = safety_violated && !babylon_secure_at.k_w_half;
    let l1 = liveness_violated && big;
    let l2 = liveness_violated && !babylon_secure_at.k_c_half;

    let mut fail = false;
    if safety_violated && !(s1 || s2) {
        fail = true;
    }
    if liveness_violated && !(l1 || l2) {
        fail = true;
    }
    if babylon_secure_at.k_c_half && !honest_slashed.is_empty() {
        fail = true;
    }
    let verdict = if fail {
        "FAIL".to_string()
    } else {
        let mut clauses = Vec::new();
        if s1 {
            clauses.push("S1");
        }
        if s2 {
            clauses.push("S2");
        }
        if l1 {
            clauses.push("L1");
        }
        if l2 && !l1 {
            clauses.push("L2");
        }
        if clauses.is_empty() {
            "no violation".to_string()
        } else {
            clauses.join("+")
        }
    };

    ScenarioReport {
        scenario,
        seed: params.seed,
        safety_violated,
        liveness_violation_span: span,
        liveness_violated,
        slashable_fraction,
        slashable_common,
        babylon_secure_at,
        honest_slashed: honest_slashed.into_iter().collect(),
        ambiguity,
        censored_tx_latency: censored_latency,
        verdict,
    }
}
