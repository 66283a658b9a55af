//! The event trace. Every run writes one JSON object per line; equal
//! parameters and seed must produce byte-identical traces. The trace is the
//! interface between the simulator and the verdict checker: the checker
//! reconstructs chains, checkpoints and slashing sets from these events
//! alone.

use serde::{Deserialize, Serialize};

use crate::babylon::Miner;
use crate::commitment::{MinerReject, PayloadKind};
use crate::crypto::{Hash, ValidatorId};
use crate::params::ProtocolParams;
use crate::view::WithdrawalVerdict;

/// Who an event is about. Validators are "v{i}", observers "obs{i}", the
/// late-spawning node "late", miners "miner".
pub type NodeName = String;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlashReason {
    FraudProof,
    Censorship,
    CensorshipVote,
    StallingProposal,
    StallingVote,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Meta {
        tick: u64,
        params: ProtocolParams,
        honest_validators: Vec<ValidatorId>,
        corrupted_validators: Vec<ValidatorId>,
        scenario: String,
    },
    BabylonMined {
        tick: u64,
        height: u64,
        hash: Hash,
        parent: Hash,
        miner: Miner,
        txs: u64,
    },
    CommitmentAccepted {
        tick: u64,
        kind: PayloadKind,
        commitment: Hash,
    },
    CommitmentRejected {
        tick: u64,
        commitment: Hash,
        reason: MinerReject,
    },
    Finalized {
        tick: u64,
        node: NodeName,
        height: u64,
        block: Hash,
        parent: Hash,
        /// The node's longest PoW chain height when it saw this block
        /// finalized. The checkpoint-latency check reads this.
        babylon_height: u64,
        /// Distinct certificate signers; sub-quorum counts mark histories
        /// admitted under a reduced (post-leak) quorum.
        signers: u64,
    },
    /// Canonical PoS tip after fork choice; emitted on change only.
    CanonicalTip {
        tick: u64,
        node: NodeName,
        height: u64,
        block: Hash,
        babylon_height: u64,
    },
    /// The node's longest PoW chain switched branches, orphaning `depth`
    /// blocks. The PoW security check at depth r scans these events.
    BabylonReorg {
        tick: u64,
        node: NodeName,
        depth: u64,
    },
    /// A tx named by a censorship complaint entered the node's canonical
    /// chain.
    CensoredTxIncluded {
        tick: u64,
        node: NodeName,
        tx: Hash,
        babylon_height: u64,
    },
    CheckpointEmitted {
        tick: u64,
        node: NodeName,
        commitment: Hash,
        first_height: u64,
        last_height: u64,
    },
    /// A node accepted a checkpoint on its longest PoW chain that indexed at
    /// least one new PoS block.
    CheckpointIndexed {
        tick: u64,
        node: NodeName,
        commitment: Hash,
        babylon_height: u64,
        tx_index: u32,
        new_blocks: Vec<Hash>,
    },
    FraudProofSubmitted {
        tick: u64,
        node: NodeName,
        accused: Vec<ValidatorId>,
    },
    /// A node saw a valid fraud proof accusing at least f + 1 active
    /// validators and stopped finalizing.
    FinalizationHalted {
        tick: u64,
        node: NodeName,
        accused: Vec<ValidatorId>,
    },
    SlashableAdded {
        tick: u64,
        node: NodeName,
        validator: ValidatorId,
        reason: SlashReason,
    },
    WithdrawalRequested {
        tick: u64,
        validator: ValidatorId,
    },
    /// Request block became part of a finalized block in some node's view.
    WithdrawalInChain {
        tick: u64,
        node: NodeName,
        validator: ValidatorId,
        block: Hash,
    },
    WithdrawalDecided {
        tick: u64,
        node: NodeName,
        validator: ValidatorId,
        verdict: WithdrawalVerdict,
    },
    ComplaintSubmitted {
        tick: u64,
        node: NodeName,
        commitment: Hash,
        txs: Vec<Hash>,
        /// PoW height of the block carrying the complaint: the start of the
        /// 13 k_c liveness clock.
        babylon_height: u64,
    },
    CensorshipDetected {
        tick: u64,
        node: NodeName,
        block: Hash,
        accused: Vec<ValidatorId>,
    },
    StallingEvidenceSubmitted {
        tick: u64,
        node: NodeName,
        height: u64,
    },
    BabylonRoundStart {
        tick: u64,
        node: NodeName,
        height: u64,
        babylon_start: u64,
    },
    BabylonRoundAborted {
        tick: u64,
        node: NodeName,
        height: u64,
    },
    BabylonRoundFinalized {
        tick: u64,
        node: NodeName,
        height: u64,
        block: Hash,
    },
    BabylonRoundFailed {
        tick: u64,
        node: NodeName,
        height: u64,
        slashed: Vec<ValidatorId>,
    },
    LateNodeSpawn {
        tick: u64,
        node: NodeName,
    },
    /// A late joiner could not tell two well-formed histories apart.
    AmbiguityRecorded {
        tick: u64,
        node: NodeName,
        tips: Vec<Hash>,
    },
    RunEnd {
        tick: u64,
    },
}

impl TraceEvent {
    pub fn tick(&self) -> u64 {
        use TraceEvent::*;
        match self {
            Meta { tick, .. }
            | BabylonMined { tick, .. }
            | CommitmentAccepted { tick, .. }
            | CommitmentRejected { tick, .. }
            | Finalized { tick, .. }
            | CanonicalTip { tick, .. }
            | BabylonReorg { tick, .. }
            | CensoredTxIncluded { tick, .. }
            | CheckpointEmitted { tick, .. }
            | CheckpointIndexed { tick, .. }
            | FraudProofSubmitted { tick, .. }
            | FinalizationHalted { tick, .. }
            | SlashableAdded { tick, .. }
            | WithdrawalRequested { tick, .. }
            | WithdrawalInChain { tick, .. }
            | WithdrawalDecided { tick, .. }
            | ComplaintSubmitted { tick, .. }
            | CensorshipDetected { tick, .. }
            | StallingEvidenceSubmitted { tick, .. }
            | BabylonRoundStart { tick, .. }
            | BabylonRoundAborted { tick, .. }
            | BabylonRoundFinalized { tick, .. }
            | BabylonRoundFailed { tick, .. }
            | LateNodeSpawn { tick, .. }
            | AmbiguityRecorded { tick, .. }
            | RunEnd { tick } => *tick,
        }
    }
}

pub fn write_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl(input: &str) -> Result<Vec<TraceEvent>, serde_json::Error> {
    input
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_roundtrip() {
        let events = vec![
            TraceEvent::Meta {
                tick: 0,
                params: ProtocolParams::default(),
                honest_validators: vec![ValidatorId(0), ValidatorId(1)],
                corrupted_validators: vec![ValidatorId(2)],
                scenario: "honest_run".to_string(),
            },
            TraceEvent::BabylonMined {
                tick: 3,
                height: 1,
                hash: Hash::digest(b"b"),
                parent: Hash::zero(),
                miner: Miner::Honest,
                txs: 0,
            },
            TraceEvent::RunEnd { tick: 10 },
        ];
        let text = write_jsonl(&events);
        assert_eq!(text.lines().count(), 3);
        let back = read_jsonl(&text).unwrap();
        assert_eq!(back, events);
    }
}
