//! A PoS full node: consensus driver, PoW chain follower, checkpoint
//! emitter, and the three slashing engines (fraud proofs, censorship,
//! stalling with the on-Babylon fallback round).

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;

use crate::babylon::{BabylonBlock, BlockStore};
use crate::commitment::{BabylonPayload, BabylonTx, Checkpoint, FraudProof, OnBabylonMsg, StallingEvidence};
use crate::crypto::{Hash, ValidatorId};
use crate::params::ProtocolParams;
use crate::tendermint::{extract_fraud_proof, proposer_for, Action, HeightState, Step};
use crate::trace::{SlashReason, TraceEvent};
use crate::types::{
    tx_root, ConsensusMessage, ConsensusMsgKind, FinalizationCertificate, PosBlock,
    PosBlockHeader, PosTransaction, PosTxKind, Round,
};
use crate::view::{
    build_checkpoint_index, fork_choice, withdrawal_check, CheckpointIndex, WithdrawalVerdict,
};

/// What travels on the simulated PoS-side network.
#[derive(Clone, Debug)]
pub enum NetMsg {
    Consensus {
        msg: ConsensusMessage,
        block: Option<PosBlock>,
    },
    /// A finalized block with its certificate. Used by the adversary to
    /// release private chains and by the engine to seed late-spawned nodes.
    Cert {
        cert: FinalizationCertificate,
        block: PosBlock,
    },
    PosTx(PosTransaction),
    BabylonBlockMsg {
        block: BabylonBlock,
        payloads: Vec<(Hash, BabylonPayload)>,
    },
    /// Data revealed out of band (the availability attack's second half).
    Payloads(Vec<(Hash, BabylonPayload)>),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TimeoutKey {
    pub height: u64,
    pub round: u32,
    pub step: Step,
}

/// Everything a node wants the engine to do after handling one event.
#[derive(Default, Debug)]
pub struct Outbox {
    pub broadcasts: Vec<NetMsg>,
    pub submissions: Vec<BabylonTx>,
    pub schedules: Vec<(u64, TimeoutKey)>,
    pub trace: Vec<TraceEvent>,
}

/// Scripted deviations for corrupted validators that still run node logic.
/// Coordinated misbehavior (private chains, forged certificates) is driven
/// centrally by the scenario script instead.
#[derive(Clone, Debug, PartialEq)]
pub enum Behavior {
    Honest,
    /// Never include these txs in proposals and ignore complaint filters.
    Censor { txs: Vec<Hash> },
    /// Stop participating in consensus at `from`. If `rejoin_on_babylon`,
    /// the validator still takes part in on-Babylon fallback rounds.
    Silent { from: u64, rejoin_on_babylon: bool },
}

#[derive(Clone, Debug)]
struct BabylonRound {
    height: u64,
    /// PoW height of the triggering evidence block; the phase boundaries are
    /// b1 = b + k_c and b2 = b + 2k_c.
    b: u64,
    frozen_locked_value: Option<Hash>,
    frozen_locked_round: i64,
    proposal_sent: bool,
    votes_sent: bool,
    phase2_done: bool,
    selected: Option<Hash>,
}

pub struct PosNode {
    pub name: String,
    pub vid: Option<ValidatorId>,
    pub params: ProtocolParams,
    pub behavior: Behavior,
    /// Checkpointing and fork-choice-by-checkpoint enabled. Disabled only in
    /// the unenhanced control arm of the ambiguity scenario.
    pub enhancement: bool,
    /// Quorum used when validating received certificates. Scenarios modeling
    /// an inactivity leak lower it to f + 1 to admit post-leak histories.
    pub cert_quorum: usize,

    pub pos_genesis: Hash,
    pub blocks: IndexMap<Hash, PosBlock>,
    pub certs: IndexMap<Hash, FinalizationCertificate>,
    pub mempool: Vec<PosTransaction>,
    included: BTreeSet<Hash>,
    pub consensus: Option<HeightState>,
    my_blocks: BTreeMap<Hash, PosBlock>,

    pub babylon: BlockStore,
    pub payloads: BTreeMap<Hash, BabylonPayload>,

    pub index: CheckpointIndex,
    pub canonical: Vec<Hash>,
    pub slashable: BTreeMap<ValidatorId, (SlashReason, u64)>,
    pub withdrawn: BTreeSet<ValidatorId>,
    pub halted: bool,
    pub ambiguous: bool,

    withdrawal_requests: BTreeMap<ValidatorId, Hash>,
    withdrawal_final: BTreeMap<ValidatorId, WithdrawalVerdict>,

    last_emit_height: u64,
    emitted_through: u64,

    pub censored_known: IndexMap<Hash, PosTransaction>,
    /// PoW height at which the first complaint appeared on the liveness
    /// prefix, once per complaint commitment.
    complaints_seen: BTreeMap<Hash, u64>,
    censor_processed: BTreeSet<Hash>,

    fraud_processed: BTreeSet<Hash>,
    babylon_round: Option<BabylonRound>,
    /// PoW height of the evidence that anchored the last started round;
    /// restarts must anchor on strictly later evidence.
    round_cursor: u64,
    /// Last new-block-checkpoint height stalling evidence was sent for, and
    /// when. Re-sent if the gap persists: an early copy can land before the
    /// 2 k_c mark and be void by position.
    evidence_sent_for: Option<(u64, u64)>,
    last_babylon_chain: Vec<Hash>,
    indexed_traced: BTreeSet<Hash>,
    censored_included_traced: BTreeSet<Hash>,
    /// Memoized structural checkpoint validation (commitment → covered
    /// blocks, or None for malformed).
    ckpt_memo: BTreeMap<Hash, Option<Vec<(Hash, Hash)>>>,
    /// (pow blocks, payloads, certs) at the last full sync; unchanged counts
    /// mean the derived state cannot have changed.
    sync_key: (usize, usize, usize),
}

impl PosNode {
    pub fn new(
        name: impl Into<String>,
        vid: Option<ValidatorId>,
        params: ProtocolParams,
        pos_genesis_block: &PosBlock,
    ) -> PosNode {
        let mut blocks = IndexMap::new();
        let genesis = pos_genesis_block.hash();
        blocks.insert(genesis, pos_genesis_block.clone());
        let babylon = BlockStore::new();
        let chain = babylon.longest_chain();
        let cert_quorum = params.quorum();
        PosNode {
            name: name.into(),
            vid,
            params,
            behavior: Behavior::Honest,
            enhancement: true,
            cert_quorum,
            pos_genesis: genesis,
            blocks,
            certs: IndexMap::new(),
            mempool: Vec::new(),
            included: BTreeSet::new(),
            consensus: None,
            my_blocks: BTreeMap::new(),
            babylon,
            payloads: BTreeMap::new(),
            index: CheckpointIndex::default(),
            canonical: vec![genesis],
            slashable: BTreeMap::new(),
            withdrawn: BTreeSet::new(),
            halted: false,
            ambiguous: false,
            withdrawal_requests: BTreeMap::new(),
            withdrawal_final: BTreeMap::new(),
            last_emit_height: 0,
            emitted_through: 0,
            censored_known: IndexMap::new(),
            complaints_seen: BTreeMap::new(),
            censor_processed: BTreeSet::new(),
            fraud_processed: BTreeSet::new(),
            babylon_round: None,
            round_cursor: 0,
            evidence_sent_for: None,
            last_babylon_chain: chain,
            indexed_traced: BTreeSet::new(),
            censored_included_traced: BTreeSet::new(),
            ckpt_memo: BTreeMap::new(),
            sync_key: (usize::MAX, usize::MAX, usize::MAX),
        }
    }

    pub fn quorum(&self) -> usize {
        self.params.quorum()
    }

    fn f(&self) -> u32 {
        self.params.f()
    }

    fn canonical_tip(&self) -> Hash {
        *self.canonical.last().unwrap()
    }

    fn canonical_tip_height(&self) -> u64 {
        self.blocks[&self.canonical_tip()].header.height
    }

    fn babylon_tip_height(&self) -> u64 {
        self.babylon.height_of_tip()
    }

    fn participating(&self, tick: u64) -> bool {
        match &self.behavior {
            Behavior::Silent { from, .. } => tick < *from,
            _ => true,
        }
    }

    fn in_babylon_round_pool(&self, tick: u64) -> bool {
        match &self.behavior {
            Behavior::Silent {
                from,
                rejoin_on_babylon,
            } => tick < *from || *rejoin_on_babylon,
            _ => true,
        }
    }

    /// Kick off consensus for the first height. Non-validators run the same
    /// machine passively: they count votes and finalize but never send.
    pub fn start(&mut self, tick: u64, out: &mut Outbox) {
        self.start_height(1, tick, out);
    }

    fn start_height(&mut self, height: u64, tick: u64, out: &mut Outbox) {
        // Passive nodes track consensus under an id no proposer check can
        // match.
        let me = self.vid.unwrap_or(ValidatorId(u32::MAX));
        if self.halted || self.babylon_round.is_some() {
            return;
        }
        let mut hs = HeightState::new(me, height, self.quorum());
        let actions = hs.start();
        self.consensus = Some(hs);
        self.apply_actions(actions, tick, out);
    }

    fn build_block(&mut self, height: u64, round: Round) -> PosBlock {
        let me = self.vid.expect("only validators build blocks");
        let mut body: Vec<PosTransaction> = Vec::new();
        let censor_list: Vec<Hash> = match &self.behavior {
            Behavior::Censor { txs } => txs.clone(),
            _ => Vec::new(),
        };
        for tx in &self.mempool {
            let id = tx.id();
            if self.included.contains(&id) || censor_list.contains(&id) {
                continue;
            }
            body.push(tx.clone());
        }
        let parent = self.canonical_tip();
        let header = PosBlockHeader {
            parent,
            height,
            txroot: tx_root(&body),
            proposer: me,
            round,
        };
        let justification = self.certs.get(&parent).cloned();
        let block = PosBlock {
            header,
            body,
            justification,
        };
        self.my_blocks.insert(block.hash(), block.clone());
        block
    }

    /// A censoring validator refuses to vote for blocks carrying the txs it
    /// suppresses, not just to propose them.
    fn censor_filter_ok(&self, block: &PosBlock) -> bool {
        match &self.behavior {
            Behavior::Censor { txs } => !block.body.iter().any(|t| txs.contains(&t.id())),
            _ => true,
        }
    }

    /// Honest post-complaint filter: a proposal is acceptable only if every
    /// known censored tx is in its body or already on the canonical chain.
    fn complaint_filter_ok(&self, block: &PosBlock) -> bool {
        if matches!(self.behavior, Behavior::Censor { .. }) {
            return true;
        }
        for (id, _) in &self.censored_known {
            if self.included.contains(id) {
                continue;
            }
            if !block.body.iter().any(|t| t.id() == *id) {
                return false;
            }
        }
        true
    }

    fn apply_actions(&mut self, actions: Vec<Action>, tick: u64, out: &mut Outbox) {
        for a in actions {
            match a {
                Action::Broadcast(m) => {
                    if self.vid.is_none() {
                        continue;
                    }
                    let block = if m.kind == ConsensusMsgKind::Proposal {
                        m.value.and_then(|v| {
                            self.my_blocks
                                .get(&v)
                                .or_else(|| self.blocks.get(&v))
                                .cloned()
                        })
                    } else {
                        None
                    };
                    out.broadcasts.push(NetMsg::Consensus { msg: m, block });
                }
                Action::Schedule(step, round) => {
                    let hs = self.consensus.as_ref().expect("scheduling without height");
                    out.schedules.push((
                        self.params.round_timeout(round),
                        TimeoutKey {
                            height: hs.height,
                            round,
                            step,
                        },
                    ));
                }
                Action::NewRound(r) => {
                    let (height, me) = {
                        let hs = self.consensus.as_ref().unwrap();
                        (hs.height, hs.me)
                    };
                    if proposer_for(height, r, self.params.n) == me {
                        let (vv, vr) = self.consensus.as_ref().unwrap().proposal_content();
                        let value = match vv {
                            Some(v) => v,
                            None => self.build_block(height, Round::Regular(r)).hash(),
                        };
                        let prop = ConsensusMessage::signed(
                            ConsensusMsgKind::Proposal,
                            height,
                            Round::Regular(r),
                            Some(value),
                            vr,
                            me,
                        );
                        // Feed our own proposal back in before broadcasting.
                        let more = self.consensus.as_mut().unwrap().on_message(prop.clone());
                        let block = self
                            .my_blocks
                            .get(&value)
                            .or_else(|| self.blocks.get(&value))
                            .cloned();
                        out.broadcasts.push(NetMsg::Consensus { msg: prop, block });
                        self.apply_actions(more, tick, out);
                    }
                }
                Action::Decided(cert) => {
                    self.accept_finalization(cert, tick, out);
                    if let Some(hs) = &self.consensus {
                        if hs.decided.is_some() {
                            let next = self.canonical_tip_height() + 1;
                            self.start_height(next, tick, out);
                        }
                    }
                }
            }
        }
    }

    /// Record a finalization (own decision or received certificate) and
    /// recompute the canonical chain.
    fn accept_finalization(
        &mut self,
        cert: FinalizationCertificate,
        tick: u64,
        out: &mut Outbox,
    ) {
        let bh = cert.block_hash;
        if self.certs.contains_key(&bh) {
            return;
        }
        let block = match self.blocks.get(&bh) {
            Some(b) => b.clone(),
            None => return,
        };
        let signers = cert.signers().len() as u64;
        self.certs.insert(bh, cert);
        out.trace.push(TraceEvent::Finalized {
            tick,
            node: self.name.clone(),
            height: block.header.height,
            block: bh,
            parent: block.header.parent,
            babylon_height: self.babylon_tip_height(),
            signers,
        });
        self.recompute_canonical(tick, out);
        self.maybe_submit_fraud_proof(block.header.height, tick, out);
        self.sync_babylon(tick, out);
    }

    /// Collect all finalized chains (genesis to each certified leaf whose
    /// every ancestor is certified).
    fn finalized_chains(&self) -> Vec<Vec<Hash>> {
        let mut has_child: BTreeSet<Hash> = BTreeSet::new();
        for (h, _) in &self.certs {
            has_child.insert(self.blocks[h].header.parent);
        }
        let mut chains = Vec::new();
        for (h, _) in &self.certs {
            if has_child.contains(h) {
                continue;
            }
            let mut chain = vec![*h];
            let mut cur = self.blocks[h].header.parent;
            let mut child_height = self.blocks[h].header.height;
            let rooted = loop {
                // Heights must be contiguous down to genesis.
                let cur_height = match self.blocks.get(&cur) {
                    Some(b) => b.header.height,
                    None => break false,
                };
                if cur_height + 1 != child_height {
                    break false;
                }
                if cur == self.pos_genesis {
                    break true;
                }
                if !self.certs.contains_key(&cur) {
                    break false;
                }
                chain.push(cur);
                child_height = cur_height;
                cur = self.blocks[&cur].header.parent;
            };
            if !rooted {
                continue;
            }
            chain.push(self.pos_genesis);
            chain.reverse();
            chains.push(chain);
        }
        if chains.is_empty() {
            chains.push(vec![self.pos_genesis]);
        }
        chains
    }

    fn recompute_canonical(&mut self, tick: u64, out: &mut Outbox) {
        let chains = self.finalized_chains();
        let certs = &self.certs;
        let arrival = |h: Hash| certs.get_index_of(&h).unwrap_or(usize::MAX);
        let empty = BTreeMap::new();
        let positions = if self.enhancement {
            &self.index.positions
        } else {
            &empty
        };
        let new = fork_choice(&chains, positions, &arrival);
        if chains.len() > 1 && !self.enhancement {
            // Two well-formed finalized histories and no checkpoints to
            // order them: the node cannot decide.
            if !self.ambiguous {
                self.ambiguous = true;
                out.trace.push(TraceEvent::AmbiguityRecorded {
                    tick,
                    node: self.name.clone(),
                    tips: chains.iter().map(|c| *c.last().unwrap()).collect(),
                });
            }
        }
        if new != self.canonical {
            // Pure extensions only add tx ids; a fork-choice switch rebuilds.
            let extension = new.starts_with(&self.canonical);
            let fresh: Vec<Hash> = if extension {
                new[self.canonical.len()..].to_vec()
            } else {
                new.clone()
            };
            if extension {
                for h in &fresh {
                    self.included
                        .extend(self.blocks[h].body.iter().map(|t| t.id()));
                }
            } else {
                self.included = new
                    .iter()
                    .flat_map(|h| self.blocks[h].body.iter().map(|t| t.id()))
                    .collect();
            }
            self.canonical = new;
            self.prefix_invariant();
            self.mempool.retain(|t| !self.included.contains(&t.id()));
            out.trace.push(TraceEvent::CanonicalTip {
                tick,
                node: self.name.clone(),
                height: self.canonical_tip_height(),
                block: self.canonical_tip(),
                babylon_height: self.babylon_tip_height(),
            });
            self.scan_withdrawal_requests(&fresh, tick, out);
            for (id, _) in self.censored_known.clone() {
                if self.included.contains(&id) && self.censored_included_traced.insert(id) {
                    out.trace.push(TraceEvent::CensoredTxIncluded {
                        tick,
                        node: self.name.clone(),
                        tx: id,
                        babylon_height: self.babylon_tip_height(),
                    });
                }
            }
        }
    }

    /// Checkpoint-canonicality coupling: no checkpoint at or before the
    /// position of a canonical block's checkpoint may cover a block
    /// conflicting with it.
    fn prefix_invariant(&self) {
        if self.index.positions.is_empty() {
            return;
        }
        let mut canonical_at: BTreeMap<u64, (Hash, crate::view::BabylonPos)> = BTreeMap::new();
        for ch in &self.canonical {
            if let Some(pos) = self.index.positions.get(ch) {
                canonical_at.insert(self.blocks[ch].header.height, (*ch, *pos));
            }
        }
        for (other, opos) in &self.index.positions {
            let Some(ob) = self.blocks.get(other) else {
                continue;
            };
            if let Some((ch, pos)) = canonical_at.get(&ob.header.height) {
                if other != ch && opos < pos {
                    panic!(
                        "{}: conflicting block at height {} checkpointed earlier \
                         than the canonical one",
                        self.name, ob.header.height
                    );
                }
            }
        }
    }

    fn scan_withdrawal_requests(&mut self, blocks: &[Hash], tick: u64, out: &mut Outbox) {
        let mut found: Vec<(ValidatorId, Hash)> = Vec::new();
        for h in blocks {
            for tx in &self.blocks[h].body {
                if tx.kind == PosTxKind::WithdrawalRequest {
                    let v = tx.sender.expect("requests carry a sender");
                    if !self.withdrawal_requests.contains_key(&v)
                        && !found.iter().any(|(fv, _)| *fv == v)
                    {
                        found.push((v, *h));
                    }
                }
            }
        }
        for (v, h) in found {
            self.withdrawal_requests.insert(v, h);
            out.trace.push(TraceEvent::WithdrawalInChain {
                tick,
                node: self.name.clone(),
                validator: v,
                block: h,
            });
        }
    }

    fn fraud_accuses(&self, v: ValidatorId) -> bool {
        matches!(self.slashable.get(&v), Some((SlashReason::FraudProof, _)))
    }

    fn evaluate_withdrawals(&mut self, tick: u64, out: &mut Outbox) {
        let pending: Vec<(ValidatorId, Hash)> = self
            .withdrawal_requests
            .iter()
            .filter(|(v, _)| !self.withdrawal_final.contains_key(v))
            .map(|(v, h)| (*v, *h))
            .collect();
        for (v, reqblock) in pending {
            let verdict = withdrawal_check(
                reqblock,
                v,
                &self.index,
                self.babylon_tip_height(),
                self.params.k_w,
                &|x| self.fraud_accuses(x),
            );
            match verdict {
                WithdrawalVerdict::Granted => {
                    self.withdrawn.insert(v);
                    self.withdrawal_final.insert(v, verdict);
                }
                WithdrawalVerdict::FraudImplicated => {
                    self.withdrawal_final.insert(v, verdict);
                }
                _ => continue,
            }
            out.trace.push(TraceEvent::WithdrawalDecided {
                tick,
                node: self.name.clone(),
                validator: v,
                verdict,
            });
        }
    }

    /// On seeing two conflicting certificates, build and submit a fraud
    /// proof: single-block checkpoints of the two blocks plus the double
    /// signatures.
    fn maybe_submit_fraud_proof(&mut self, height: u64, tick: u64, out: &mut Outbox) {
        let at_height: Vec<Hash> = self
            .certs
            .keys()
            .filter(|h| self.blocks[*h].header.height == height)
            .cloned()
            .collect();
        if at_height.len() < 2 {
            return;
        }
        for i in 0..at_height.len() {
            for j in i + 1..at_height.len() {
                let ca = self.certs[&at_height[i]].clone();
                let cb = self.certs[&at_height[j]].clone();
                let Some((evidence, accused)) = extract_fraud_proof(&ca, &cb, self.quorum())
                else {
                    continue;
                };
                let proof = FraudProof {
                    checkpoint_a: Checkpoint::for_blocks(&[self.blocks[&at_height[i]].clone()]),
                    checkpoint_b: Checkpoint::for_blocks(&[self.blocks[&at_height[j]].clone()]),
                    evidence,
                    accused: accused.clone(),
                };
                let tx = BabylonTx::with_data(BabylonPayload::FraudProof(proof), self.vid);
                if self.fraud_processed.contains(&tx.commitment) {
                    continue;
                }
                out.submissions.push(tx);
                out.trace.push(TraceEvent::FraudProofSubmitted {
                    tick,
                    node: self.name.clone(),
                    accused,
                });
            }
        }
    }

    pub fn handle(&mut self, msg: NetMsg, tick: u64, out: &mut Outbox) {
        match msg {
            NetMsg::Consensus { msg, block } => self.handle_consensus(msg, block, tick, out),
            NetMsg::Cert { cert, block } => {
                if !block.well_formed() || cert.block_hash != block.hash() {
                    return;
                }
                if !cert.valid(self.cert_quorum) {
                    return;
                }
                self.blocks.entry(block.hash()).or_insert(block);
                self.accept_finalization(cert, tick, out);
            }
            NetMsg::PosTx(tx) => {
                let id = tx.id();
                if !self.included.contains(&id) && !self.mempool.iter().any(|t| t.id() == id) {
                    self.mempool.push(tx);
                }
            }
            NetMsg::BabylonBlockMsg { block, payloads } => {
                for (c, p) in payloads {
                    self.payloads.entry(c).or_insert(p);
                }
                if !self.babylon.contains(&block.parent) {
                    // Out-of-order PoW gossip does not occur with the
                    // engine's ordered delivery; drop defensively.
                    return;
                }
                self.babylon.insert(block);
                self.sync_babylon(tick, out);
            }
            NetMsg::Payloads(payloads) => {
                for (c, p) in payloads {
                    self.payloads.entry(c).or_insert(p);
                }
                self.sync_babylon(tick, out);
            }
        }
    }

    fn handle_consensus(
        &mut self,
        msg: ConsensusMessage,
        block: Option<PosBlock>,
        tick: u64,
        out: &mut Outbox,
    ) {
        if let Some(b) = &block {
            if b.well_formed() {
                self.blocks.entry(b.hash()).or_insert_with(|| b.clone());
            }
        }
        if !self.participating(tick) || self.halted || self.babylon_round.is_some() {
            return;
        }
        let Some(hs) = &self.consensus else { return };
        if msg.height != hs.height || !msg.verify() {
            return;
        }
        if msg.kind == ConsensusMsgKind::Proposal {
            let Some(r) = msg.round.as_regular() else {
                return;
            };
            if proposer_for(msg.height, r, self.params.n) != msg.signer {
                return;
            }
            let Some(v) = msg.value else { return };
            let Some(b) = self.blocks.get(&v) else {
                return;
            };
            if b.header.height != msg.height
                || b.header.parent != self.canonical_tip()
                || b.header.height != self.canonical_tip_height() + 1
            {
                // The height check matters after a fork-choice switch to a
                // shorter chain: a stale height machine must not graft its
                // blocks onto the new tip.
                return;
            }
            if !self.complaint_filter_ok(&b.clone()) || !self.censor_filter_ok(&b.clone()) {
                // Refused proposals are never considered; the propose
                // timeout then yields a nil prevote.
                return;
            }
        }
        let actions = self.consensus.as_mut().unwrap().on_message(msg);
        self.apply_actions(actions, tick, out);
    }

    pub fn handle_timeout(&mut self, key: TimeoutKey, tick: u64, out: &mut Outbox) {
        if !self.participating(tick) || self.halted || self.babylon_round.is_some() {
            return;
        }
        let Some(hs) = &self.consensus else { return };
        if hs.height != key.height {
            return;
        }
        let actions = self
            .consensus
            .as_mut()
            .unwrap()
            .on_timeout(key.step, key.round);
        self.apply_actions(actions, tick, out);
    }

    /// Recompute everything derived from the PoW view: checkpoint index,
    /// fraud/censorship/stalling engines, the on-Babylon round, checkpoint
    /// emission and withdrawal gating.
    pub fn sync_babylon(&mut self, tick: u64, out: &mut Outbox) {
        let key = (self.babylon.len(), self.payloads.len(), self.certs.len());
        if key == self.sync_key {
            return;
        }
        self.sync_key = key;
        let chain = self.babylon.longest_chain();
        if chain != self.last_babylon_chain {
            let common = chain
                .iter()
                .zip(&self.last_babylon_chain)
                .take_while(|(a, b)| a == b)
                .count();
            let depth = (self.last_babylon_chain.len() - common) as u64;
            if depth > 0 {
                out.trace.push(TraceEvent::BabylonReorg {
                    tick,
                    node: self.name.clone(),
                    depth,
                });
            }
            self.last_babylon_chain = chain.clone();
        }
        if self.enhancement {
            let mut memo = std::mem::take(&mut self.ckpt_memo);
            let certs = &self.certs;
            let is_finalized = |h: Hash| certs.contains_key(&h) || h == self.pos_genesis;
            self.index = build_checkpoint_index(
                &self.babylon,
                &chain,
                &self.payloads,
                self.pos_genesis,
                &is_finalized,
                &mut memo,
            );
            self.ckpt_memo = memo;
            for ic in self.index.new_block_checkpoints.clone() {
                if self.indexed_traced.insert(ic.commitment) {
                    out.trace.push(TraceEvent::CheckpointIndexed {
                        tick,
                        node: self.name.clone(),
                        commitment: ic.commitment,
                        babylon_height: ic.pos.height,
                        tx_index: ic.pos.tx_index,
                        new_blocks: ic.new_blocks.clone(),
                    });
                }
            }
        }
        self.process_payload_stream(&chain, tick, out);
        self.recompute_canonical(tick, out);
        if self.enhancement {
            self.detect_censoring(tick, out);
            self.drive_liveness(tick, out);
            self.emit_checkpoints(tick, out);
            self.evaluate_withdrawals(tick, out);
        }
    }

    /// Fraud proofs and censorship complaints found on the longest chain.
    fn process_payload_stream(&mut self, chain: &[Hash], tick: u64, out: &mut Outbox) {
        let lp_len = chain
            .len()
            .saturating_sub((self.params.k_c / 2) as usize)
            .max(1);
        for (ci, bh) in chain.iter().enumerate() {
            let block = self.babylon.get(bh).unwrap().clone();
            for tx in &block.txs {
                let Some(payload) =
                    tx.payload.clone().or_else(|| self.payloads.get(&tx.commitment).cloned())
                else {
                    continue;
                };
                match payload {
                    BabylonPayload::FraudProof(fp) => {
                        if !self.fraud_processed.insert(tx.commitment) {
                            continue;
                        }
                        self.process_fraud_proof(&fp, tick, out);
                    }
                    BabylonPayload::CensoredTxs(txs) => {
                        // Liveness logic acts on the k_c/2-deep prefix so all
                        // honest nodes agree on complaint positions.
                        if ci >= lp_len {
                            continue;
                        }
                        if self
                            .complaints_seen
                            .insert(tx.commitment, block.height)
                            .is_none()
                        {
                            let ids = txs.iter().map(|t| t.id()).collect();
                            out.trace.push(TraceEvent::ComplaintSubmitted {
                                tick,
                                node: self.name.clone(),
                                commitment: tx.commitment,
                                txs: ids,
                                babylon_height: block.height,
                            });
                            for t in txs {
                                let id = t.id();
                                let censor = matches!(&self.behavior, Behavior::Censor { txs } if txs.contains(&id));
                                self.censored_known.entry(id).or_insert(t.clone());
                                if !censor
                                    && !self.included.contains(&id)
                                    && !self.mempool.iter().any(|m| m.id() == id)
                                {
                                    self.mempool.push(t);
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    fn process_fraud_proof(&mut self, fp: &FraudProof, tick: u64, out: &mut Outbox) {
        // Node-side validity: every accused validator must have signed two
        // conflicting messages of the same kind at the same height and round.
        let convicted: Vec<ValidatorId> = fp
            .accused
            .iter()
            .filter(|v| {
                fp.evidence.iter().any(|a| {
                    a.signer == **v
                        && a.verify()
                        && fp.evidence.iter().any(|b| {
                            b.signer == **v
                                && b.verify()
                                && b.kind == a.kind
                                && b.height == a.height
                                && b.round == a.round
                                && b.value != a.value
                        })
                })
            })
            .cloned()
            .collect();
        if convicted.is_empty() {
            return;
        }
        for v in &convicted {
            if self.withdrawn.contains(v) {
                continue;
            }
            if self.slashable.insert(*v, (SlashReason::FraudProof, tick)).is_none() {
                out.trace.push(TraceEvent::SlashableAdded {
                    tick,
                    node: self.name.clone(),
                    validator: *v,
                    reason: SlashReason::FraudProof,
                });
            }
        }
        let active_accused = convicted
            .iter()
            .filter(|v| !self.withdrawn.contains(v))
            .count();
        if active_accused >= (self.f() + 1) as usize && !self.halted {
            // Safety slashing takes precedence: stop finalizing and suspend
            // the liveness engines.
            self.halted = true;
            self.babylon_round = None;
            out.trace.push(TraceEvent::FinalizationHalted {
                tick,
                node: self.name.clone(),
                accused: convicted,
            });
        }
    }

    /// The liveness prefix: the longest PoW chain minus its last k_c/2
    /// blocks.
    fn liveness_chain(&self) -> Vec<Hash> {
        self.babylon.deep_prefix(self.params.k_c / 2)
    }

    fn detect_censoring(&mut self, tick: u64, out: &mut Outbox) {
        if self.halted || self.complaints_seen.is_empty() {
            return;
        }
        let liveness = self.liveness_chain();
        let lp_tip_height = self.babylon.get(liveness.last().unwrap()).unwrap().height;
        // New-block checkpoints restricted to the liveness prefix.
        let on_liveness: Vec<_> = self
            .index
            .new_block_checkpoints
            .iter()
            .filter(|ic| ic.pos.height <= lp_tip_height)
            .collect();
        for (&_commitment, &complaint_height) in self.complaints_seen.clone().iter() {
            // b': first new-block checkpoint extending the complaint block by
            // at least 2 k_c.
            let Some(b_prime) = on_liveness
                .iter()
                .find(|ic| ic.pos.height >= complaint_height + 2 * self.params.k_c)
            else {
                continue;
            };
            let b_prime_pos = b_prime.pos;
            // Any PoS block first checkpointed strictly after b' that lacks
            // the censored txs in body and prefix is censoring.
            for (ph, pos) in self.index.positions.clone() {
                if pos <= b_prime_pos || pos.height > lp_tip_height {
                    continue;
                }
                if self.censor_processed.contains(&ph) {
                    continue;
                }
                let Some(block) = self.blocks.get(&ph).cloned() else {
                    continue;
                };
                if self.block_or_prefix_has_all_censored(&block) {
                    continue;
                }
                self.censor_processed.insert(ph);
                let mut accused = vec![block.header.proposer];
                if let Some(cert) = self.certs.get(&ph) {
                    for s in cert.signers() {
                        if !accused.contains(&s) {
                            accused.push(s);
                        }
                    }
                }
                accused.sort();
                out.trace.push(TraceEvent::CensorshipDetected {
                    tick,
                    node: self.name.clone(),
                    block: ph,
                    accused: accused.clone(),
                });
                for (i, v) in accused.iter().enumerate() {
                    if self.withdrawn.contains(v) {
                        continue;
                    }
                    let reason = if i == 0 && *v == block.header.proposer {
                        SlashReason::Censorship
                    } else {
                        SlashReason::CensorshipVote
                    };
                    if self.slashable.insert(*v, (reason, tick)).is_none() {
                        out.trace.push(TraceEvent::SlashableAdded {
                            tick,
                            node: self.name.clone(),
                            validator: *v,
                            reason,
                        });
                    }
                }
            }
        }
    }

    fn block_or_prefix_has_all_censored(&self, block: &PosBlock) -> bool {
        'tx: for (id, _) in &self.censored_known {
            let mut cur = block.hash();
            loop {
                let Some(b) = self.blocks.get(&cur) else {
                    return false;
                };
                if b.body.iter().any(|t| t.id() == *id) {
                    continue 'tx;
                }
                if b.header.height == 0 {
                    return false;
                }
                cur = b.header.parent;
            }
        }
        true
    }

    /// Stall detection plus the on-Babylon round phases.
    fn drive_liveness(&mut self, tick: u64, out: &mut Outbox) {
        if self.halted {
            return;
        }
        let liveness = self.liveness_chain();
        let lp_tip_height = self.babylon.get(liveness.last().unwrap()).unwrap().height;
        let last_ckpt_height = self
            .index
            .new_block_checkpoints
            .iter()
            .filter(|ic| ic.pos.height <= lp_tip_height)
            .map(|ic| ic.pos.height)
            .last()
            .unwrap_or(0);

        // Drive an active round first.
        if self.babylon_round.is_some() {
            self.drive_babylon_round(tick, out);
            return;
        }

        // Round trigger: the first valid stalling evidence following the
        // last new-block checkpoint by at least 2 k_c. The evidence is
        // reacted to as soon as it is on the longest chain — the phase
        // windows are positional, so waiting for prefix depth would burn
        // half of [b, b1) before anyone proposes.
        let my_height = self.canonical_tip_height() + 1;
        let mut trigger: Option<(u64, u64)> = None; // (babylon height, pos height h)
        'scan: for bh in &self.babylon.longest_chain() {
            let block = self.babylon.get(bh).unwrap().clone();
            if block.height <= self.round_cursor
                || block.height < last_ckpt_height + 2 * self.params.k_c
            {
                continue;
            }
            for tx in &block.txs {
                let Some(BabylonPayload::StallingEvidence(se)) = tx
                    .payload
                    .clone()
                    .or_else(|| self.payloads.get(&tx.commitment).cloned())
                else {
                    continue;
                };
                if se.checkpoint.shape_ok() || se.height == 1 {
                    trigger = Some((block.height, se.height));
                    break 'scan;
                }
            }
        }
        if let Some((b, h)) = trigger {
            // Observers enter the round too (passively): phase evaluation and
            // slashing are view-local, only submissions need a key.
            if h == my_height && self.in_babylon_round_pool(tick) {
                let (lv, lr) = match &self.consensus {
                    Some(hs) if hs.height == h => (hs.locked_value, hs.locked_round),
                    _ => (None, -1),
                };
                self.round_cursor = b;
                self.babylon_round = Some(BabylonRound {
                    height: h,
                    b,
                    frozen_locked_value: lv,
                    frozen_locked_round: lr,
                    proposal_sent: false,
                    votes_sent: false,
                    phase2_done: false,
                    selected: None,
                });
                out.trace.push(TraceEvent::BabylonRoundStart {
                    tick,
                    node: self.name.clone(),
                    height: h,
                    babylon_start: b,
                });
                self.drive_babylon_round(tick, out);
                return;
            }
        }

        // Otherwise: emit stalling evidence if the gap reaches 2 k_c.
        // Retry after roughly k_c more blocks' worth of ticks if no round
        // came of it.
        let retry = ((self.params.k_c as f64) / self.params.lambda).ceil() as u64;
        let due = match self.evidence_sent_for {
            Some((ckpt, at)) => ckpt != last_ckpt_height || tick >= at + retry,
            None => true,
        };
        if lp_tip_height >= last_ckpt_height + 2 * self.params.k_c
            && self.vid.is_some()
            && self.participating(tick)
            && due
        {
            self.evidence_sent_for = Some((last_ckpt_height, tick));
            let chain_blocks: Vec<PosBlock> = self.canonical[1..]
                .iter()
                .map(|h| self.blocks[h].clone())
                .collect();
            let checkpoint = if chain_blocks.is_empty() {
                // Nothing finalized yet: evidence for height 1 with an empty
                // history claim is carried as a checkpoint of nothing and
                // validated by its height label alone.
                Checkpoint {
                    headers: vec![self.blocks[&self.pos_genesis].header.clone()],
                    bodies: vec![Vec::new()],
                    txroots: vec![tx_root(&[])],
                }
            } else {
                Checkpoint::for_blocks(&chain_blocks)
            };
            let se = StallingEvidence {
                height: my_height,
                checkpoint,
            };
            out.submissions
                .push(BabylonTx::with_data(BabylonPayload::StallingEvidence(se), self.vid));
            out.trace.push(TraceEvent::StallingEvidenceSubmitted {
                tick,
                node: self.name.clone(),
                height: my_height,
            });
        }
    }

    /// Collect on-Babylon messages of one kind in PoW heights [lo, hi),
    /// first message per signer, in chain order.
    fn collect_on_babylon(
        &self,
        kind: ConsensusMsgKind,
        height: u64,
        lo: u64,
        hi: u64,
    ) -> Vec<(u64, u32, OnBabylonMsg)> {
        let mut seen: BTreeSet<ValidatorId> = BTreeSet::new();
        let mut outv = Vec::new();
        for bh in self.babylon.longest_chain() {
            let block = self.babylon.get(&bh).unwrap();
            if block.height < lo || block.height >= hi {
                continue;
            }
            for (ti, tx) in block.txs.iter().enumerate() {
                let Some(BabylonPayload::OnBabylonMsg(m)) = tx
                    .payload
                    .clone()
                    .or_else(|| self.payloads.get(&tx.commitment).cloned())
                else {
                    continue;
                };
                if m.msg.kind != kind
                    || m.msg.height != height
                    || m.msg.round != Round::Babylon
                    || !m.msg.verify()
                {
                    continue;
                }
                if seen.insert(m.msg.signer) {
                    outv.push((block.height, ti as u32, m));
                }
            }
        }
        outv
    }

    fn drive_babylon_round(&mut self, tick: u64, out: &mut Outbox) {
        let r = self.babylon_round.clone().unwrap();
        let k_c = self.params.k_c;
        let b1 = r.b + k_c;
        let b2 = r.b + 2 * k_c;

        // Abort as soon as a checkpoint for the contested height appears.
        let ckpt_for_height = self
            .index
            .positions
            .keys()
            .any(|h| self.blocks.get(h).map(|b| b.header.height) == Some(r.height));
        if ckpt_for_height {
            self.babylon_round = None;
            out.trace.push(TraceEvent::BabylonRoundAborted {
                tick,
                node: self.name.clone(),
                height: r.height,
            });
            let next = self.canonical_tip_height() + 1;
            self.start_height(next, tick, out);
            return;
        }

        // Phase 1: submit our proposal once.
        if !r.proposal_sent && self.vid.is_some() && self.in_babylon_round_pool(tick) {
            let me = self.vid.unwrap();
            let (vv, vr) = match &self.consensus {
                Some(hs) if hs.height == r.height => hs.proposal_content(),
                _ => (None, -1),
            };
            let (value, block, justification) = match vv {
                Some(v) if vr >= 0 => {
                    let blk = self
                        .my_blocks
                        .get(&v)
                        .or_else(|| self.blocks.get(&v))
                        .cloned();
                    let just = self
                        .consensus
                        .as_ref()
                        .and_then(|hs| hs.prevote_quorum(v, vr as u32))
                        .unwrap_or_default();
                    (v, blk, just)
                }
                _ => {
                    let blk = self.build_block(r.height, Round::Babylon);
                    (blk.hash(), Some(blk), Vec::new())
                }
            };
            let msg = ConsensusMessage::signed(
                ConsensusMsgKind::Proposal,
                r.height,
                Round::Babylon,
                Some(value),
                vr,
                me,
            );
            out.submissions.push(BabylonTx::with_data(
                BabylonPayload::OnBabylonMsg(OnBabylonMsg {
                    msg,
                    block,
                    prevote_justification: justification,
                }),
                Some(me),
            ));
            self.babylon_round.as_mut().unwrap().proposal_sent = true;
        }

        let tip_height = self.babylon_tip_height();

        // Phase 2 at b1: select and vote, or fail the round.
        if !r.phase2_done && tip_height >= b1 {
            let proposals = self.collect_on_babylon(ConsensusMsgKind::Proposal, r.height, r.b, b1);
            let eligible: Vec<&(u64, u32, OnBabylonMsg)> = proposals
                .iter()
                .filter(|(_, _, m)| {
                    m.block
                        .as_ref()
                        .map(|b| self.complaint_filter_ok(b))
                        .unwrap_or(false)
                })
                .collect();
            if eligible.len() >= self.quorum() {
                // Largest vr wins; ties go to the earliest PoW position.
                let best = eligible
                    .iter()
                    .max_by(|a, b| {
                        a.2.msg
                            .vr
                            .cmp(&b.2.msg.vr)
                            .then(b.0.cmp(&a.0))
                            .then(b.1.cmp(&a.1))
                    })
                    .unwrap();
                let value = best.2.msg.value.unwrap();
                if let Some(blk) = &best.2.block {
                    self.blocks.entry(blk.hash()).or_insert_with(|| blk.clone());
                }
                let rr = self.babylon_round.as_mut().unwrap();
                rr.selected = Some(value);
                rr.phase2_done = true;
                let lock_ok = r.frozen_locked_round == -1
                    || r.frozen_locked_value == Some(value)
                    || best.2.msg.vr > r.frozen_locked_round;
                if lock_ok && self.vid.is_some() && self.in_babylon_round_pool(tick) && !r.votes_sent
                {
                    let me = self.vid.unwrap();
                    for kind in [ConsensusMsgKind::Prevote, ConsensusMsgKind::Precommit] {
                        let msg = ConsensusMessage::signed(
                            kind,
                            r.height,
                            Round::Babylon,
                            Some(value),
                            -1,
                            me,
                        );
                        out.submissions.push(BabylonTx::with_data(
                            BabylonPayload::OnBabylonMsg(OnBabylonMsg {
                                msg,
                                block: None,
                                prevote_justification: Vec::new(),
                            }),
                            Some(me),
                        ));
                    }
                    self.babylon_round.as_mut().unwrap().votes_sent = true;
                }
            } else {
                // Failure: every validator with a censoring or missing
                // proposal in [b, b1) is slashable; then restart.
                let proposed: BTreeSet<ValidatorId> =
                    eligible.iter().map(|(_, _, m)| m.msg.signer).collect();
                let mut slashed = Vec::new();
                for v in (0..self.params.n).map(ValidatorId) {
                    if proposed.contains(&v) || self.withdrawn.contains(&v) {
                        continue;
                    }
                    slashed.push(v);
                    if self
                        .slashable
                        .insert(v, (SlashReason::StallingProposal, tick))
                        .is_none()
                    {
                        out.trace.push(TraceEvent::SlashableAdded {
                            tick,
                            node: self.name.clone(),
                            validator: v,
                            reason: SlashReason::StallingProposal,
                        });
                    }
                }
                out.trace.push(TraceEvent::BabylonRoundFailed {
                    tick,
                    node: self.name.clone(),
                    height: r.height,
                    slashed,
                });
                self.babylon_round = None;
                self.evidence_sent_for = None;
                return;
            }
        }

        // Phase 3 at b2: finalize or slash missing voters.
        let r = match &self.babylon_round {
            Some(r) => r.clone(),
            None => return,
        };
        if r.phase2_done && tip_height >= b2 {
            let value = r.selected.unwrap();
            let prevotes = self.collect_on_babylon(ConsensusMsgKind::Prevote, r.height, b1, b2);
            let precommits = self.collect_on_babylon(ConsensusMsgKind::Precommit, r.height, b1, b2);
            let pv: Vec<_> = prevotes
                .iter()
                .filter(|(_, _, m)| m.msg.value == Some(value))
                .collect();
            let pc: Vec<_> = precommits
                .iter()
                .filter(|(_, _, m)| m.msg.value == Some(value))
                .collect();
            if pv.len() >= self.quorum() && pc.len() >= self.quorum() {
                let cert = FinalizationCertificate {
                    block_hash: value,
                    height: r.height,
                    round: Round::Babylon,
                    precommits: pc.iter().map(|(_, _, m)| m.msg.clone()).collect(),
                };
                self.babylon_round = None;
                self.evidence_sent_for = None;
                out.trace.push(TraceEvent::BabylonRoundFinalized {
                    tick,
                    node: self.name.clone(),
                    height: r.height,
                    block: value,
                });
                self.accept_finalization(cert, tick, out);
                let next = self.canonical_tip_height() + 1;
                self.start_height(next, tick, out);
            } else {
                let voted: BTreeSet<ValidatorId> = pv
                    .iter()
                    .map(|(_, _, m)| m.msg.signer)
                    .filter(|s| pc.iter().any(|(_, _, m)| m.msg.signer == *s))
                    .collect();
                let mut slashed = Vec::new();
                for v in (0..self.params.n).map(ValidatorId) {
                    if voted.contains(&v) || self.withdrawn.contains(&v) {
                        continue;
                    }
                    slashed.push(v);
                    if self
                        .slashable
                        .insert(v, (SlashReason::StallingVote, tick))
                        .is_none()
                    {
                        out.trace.push(TraceEvent::SlashableAdded {
                            tick,
                            node: self.name.clone(),
                            validator: v,
                            reason: SlashReason::StallingVote,
                        });
                    }
                }
                out.trace.push(TraceEvent::BabylonRoundFailed {
                    tick,
                    node: self.name.clone(),
                    height: r.height,
                    slashed,
                });
                self.babylon_round = None;
                self.evidence_sent_for = None;
            }
        }
    }

    /// Emit a checkpoint when the longest PoW chain grew by k_c since the
    /// last emission and canonical finalized blocks remain uncovered.
    fn emit_checkpoints(&mut self, tick: u64, out: &mut Outbox) {
        if !self.participating(tick) {
            return;
        }
        let tip = self.babylon_tip_height();
        if tip < self.last_emit_height + self.params.k_c {
            return;
        }
        // Uncovered suffix of the canonical chain.
        let mut start = self.canonical.len();
        while start > 1 && !self.index.positions.contains_key(&self.canonical[start - 1]) {
            start -= 1;
        }
        let uncovered: Vec<PosBlock> = self.canonical[start..]
            .iter()
            .map(|h| self.blocks[h].clone())
            .collect();
        if uncovered.is_empty() {
            return;
        }
        let first = uncovered.first().unwrap().header.height;
        let last = uncovered.last().unwrap().header.height;
        if last <= self.emitted_through {
            return;
        }
        let ckpt = Checkpoint::for_blocks(&uncovered);
        let commitment = ckpt.commitment();
        out.submissions
            .push(BabylonTx::with_data(BabylonPayload::Checkpoint(ckpt), self.vid));
        out.trace.push(TraceEvent::CheckpointEmitted {
            tick,
            node: self.name.clone(),
            commitment,
            first_height: first,
            last_height: last,
        });
        self.last_emit_height = tip;
        self.emitted_through = last;
    }
}
