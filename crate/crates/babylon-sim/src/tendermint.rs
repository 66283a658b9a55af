//! Per-height Tendermint state machine, plus fraud proof extraction from
//! conflicting finalization certificates.
//!
//! The machine is pure: it consumes validated messages and timeout firings
//! and emits actions (messages to broadcast, timeouts to schedule, a
//! decision). Message transport, proposal block construction and proposal
//! validity checks are the caller's job. Lock handling follows the strict
//! re-proposal rule: a locked validator prevotes a proposal only if it equals
//! the locked value or carries a valid-round newer than the lock.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;

use crate::crypto::{Hash, ValidatorId};
use crate::types::{ConsensusMessage, ConsensusMsgKind, FinalizationCertificate, Round};

/// Round-robin leader schedule.
pub fn proposer_for(height: u64, round: u32, n: u32) -> ValidatorId {
    ValidatorId(((height + round as u64) % n as u64) as u32)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Step {
    Propose,
    Prevote,
    Precommit,
}

#[derive(Clone, Debug)]
pub enum Action {
    Broadcast(ConsensusMessage),
    /// Schedule a timeout for (step, round) after the round's timeout span.
    Schedule(Step, u32),
    /// Entered this round; the caller proposes if it is the leader.
    NewRound(u32),
    Decided(FinalizationCertificate),
}

#[derive(Clone, Debug)]
pub struct HeightState {
    pub me: ValidatorId,
    pub height: u64,
    pub round: u32,
    pub step: Step,
    pub locked_value: Option<Hash>,
    pub locked_round: i64,
    pub valid_value: Option<Hash>,
    pub valid_round: i64,
    pub decided: Option<FinalizationCertificate>,
    quorum: usize,
    proposals: BTreeMap<u32, ConsensusMessage>,
    prevotes: BTreeMap<u32, IndexMap<ValidatorId, ConsensusMessage>>,
    precommits: BTreeMap<u32, IndexMap<ValidatorId, ConsensusMessage>>,
    prevote_sent: BTreeSet<u32>,
    precommit_sent: BTreeSet<u32>,
}

impl HeightState {
    pub fn new(me: ValidatorId, height: u64, quorum: usize) -> HeightState {
        HeightState {
            me,
            height,
            round: 0,
            step: Step::Propose,
            locked_value: None,
            locked_round: -1,
            valid_value: None,
            valid_round: -1,
            decided: None,
            quorum,
            proposals: BTreeMap::new(),
            prevotes: BTreeMap::new(),
            precommits: BTreeMap::new(),
            prevote_sent: BTreeSet::new(),
            precommit_sent: BTreeSet::new(),
        }
    }

    pub fn start(&mut self) -> Vec<Action> {
        let mut out = vec![Action::NewRound(0), Action::Schedule(Step::Propose, 0)];
        out.extend(self.try_progress());
        out
    }

    fn enter_round(&mut self, r: u32) -> Vec<Action> {
        self.round = r;
        self.step = Step::Propose;
        let mut out = vec![Action::NewRound(r), Action::Schedule(Step::Propose, r)];
        out.extend(self.try_progress());
        out
    }

    /// What this node would propose if it leads the next round.
    pub fn proposal_content(&self) -> (Option<Hash>, i64) {
        (self.valid_value, self.valid_round)
    }

    /// The 2f+1 prevotes backing `value` at `round`, if this node saw them.
    /// Re-proposals with vr >= 0 attach these as justification.
    pub fn prevote_quorum(&self, value: Hash, round: u32) -> Option<Vec<ConsensusMessage>> {
        let votes = self.prevotes.get(&round)?;
        let v: Vec<ConsensusMessage> = votes
            .values()
            .filter(|m| m.value == Some(value))
            .cloned()
            .collect();
        if v.len() >= self.quorum {
            Some(v)
        } else {
            None
        }
    }

    /// Caller has already checked: signature, height, proposer identity for
    /// proposals, and availability plus validity of the proposed block.
    pub fn on_message(&mut self, msg: ConsensusMessage) -> Vec<Action> {
        let r = match msg.round.as_regular() {
            Some(r) => r,
            None => return Vec::new(),
        };
        match msg.kind {
            ConsensusMsgKind::Proposal => {
                self.proposals.entry(r).or_insert(msg);
            }
            ConsensusMsgKind::Prevote => {
                self.prevotes
                    .entry(r)
                    .or_default()
                    .entry(msg.signer)
                    .or_insert(msg);
            }
            ConsensusMsgKind::Precommit => {
                self.precommits
                    .entry(r)
                    .or_default()
                    .entry(msg.signer)
                    .or_insert(msg);
            }
        }
        self.try_progress()
    }

    pub fn on_timeout(&mut self, step: Step, round: u32) -> Vec<Action> {
        if self.decided.is_some() || round != self.round || step != self.step {
            return Vec::new();
        }
        match step {
            Step::Propose => {
                // No usable proposal in time: prevote nil.
                let mut out = self.send_prevote(None);
                out.extend(self.try_progress());
                out
            }
            Step::Prevote => {
                let mut out = self.send_precommit(None);
                out.extend(self.try_progress());
                out
            }
            Step::Precommit => self.enter_round(round + 1),
        }
    }

    fn send_prevote(&mut self, value: Option<Hash>) -> Vec<Action> {
        if !self.prevote_sent.insert(self.round) {
            return Vec::new();
        }
        self.step = Step::Prevote;
        let m = ConsensusMessage::signed(
            ConsensusMsgKind::Prevote,
            self.height,
            Round::Regular(self.round),
            value,
            -1,
            self.me,
        );
        vec![
            Action::Broadcast(m),
            Action::Schedule(Step::Prevote, self.round),
        ]
    }

    fn send_precommit(&mut self, value: Option<Hash>) -> Vec<Action> {
        if !self.precommit_sent.insert(self.round) {
            return Vec::new();
        }
        self.step = Step::Precommit;
        let m = ConsensusMessage::signed(
            ConsensusMsgKind::Precommit,
            self.height,
            Round::Regular(self.round),
            value,
            -1,
            self.me,
        );
        vec![
            Action::Broadcast(m),
            Action::Schedule(Step::Precommit, self.round),
        ]
    }

    fn quorum_value(
        votes: Option<&IndexMap<ValidatorId, ConsensusMessage>>,
        quorum: usize,
    ) -> Option<Option<Hash>> {
        let votes = votes?;
        let mut counts: BTreeMap<Option<Hash>, usize> = BTreeMap::new();
        for m in votes.values() {
            *counts.entry(m.value).or_default() += 1;
        }
        counts.into_iter().find(|(_, c)| *c >= quorum).map(|(v, _)| v)
    }

    fn try_progress(&mut self) -> Vec<Action> {
        let mut out = Vec::new();
        if self.decided.is_some() {
            return out;
        }

        // Proposal handling for the current round.
        if self.step == Step::Propose {
            if let Some(p) = self.proposals.get(&self.round).cloned() {
                let v = p.value.expect("proposals always carry a value");
                let acceptable = self.locked_round == -1
                    || self.locked_value == Some(v)
                    || p.vr > self.locked_round;
                out.extend(self.send_prevote(if acceptable { Some(v) } else { None }));
            }
        }

        // Prevote quorum for the current round.
        if self.step == Step::Prevote {
            if let Some(v) = Self::quorum_value(self.prevotes.get(&self.round), self.quorum) {
                match v {
                    Some(v) if self.proposals.get(&self.round).map(|p| p.value) == Some(Some(v)) =>
                    {
                        let r = self.round as i64;
                        self.locked_value = Some(v);
                        self.locked_round = r;
                        self.valid_value = Some(v);
                        self.valid_round = r;
                        out.extend(self.send_precommit(Some(v)));
                    }
                    None => out.extend(self.send_precommit(None)),
                    _ => {}
                }
            }
        }

        // A prevote quorum in any round refreshes the valid value.
        for (&r, votes) in &self.prevotes {
            if (r as i64) > self.valid_round {
                if let Some(Some(v)) = Self::quorum_value(Some(votes), self.quorum) {
                    self.valid_value = Some(v);
                    self.valid_round = r as i64;
                }
            }
        }

        // Precommit quorum in any round decides.
        for (&r, votes) in self.precommits.clone().iter() {
            if let Some(Some(v)) = Self::quorum_value(Some(votes), self.quorum) {
                let precommits: Vec<ConsensusMessage> = votes
                    .values()
                    .filter(|m| m.value == Some(v))
                    .cloned()
                    .collect();
                let cert = FinalizationCertificate {
                    block_hash: v,
                    height: self.height,
                    round: Round::Regular(r),
                    precommits,
                };
                self.decided = Some(cert.clone());
                out.push(Action::Decided(cert));
                break;
            }
        }

        out
    }
}

/// Given finalization certificates for two conflicting blocks at the same
/// height, name the validators that provably misbehaved and collect their
/// signed messages as evidence.
///
/// Same-round certificates convict by counting: two quorums of 2f + 1 out of
/// 3f + 1 share at least f + 1 signers, and each shared signer precommitted
/// two different values in one round. Cross-round convictions would need the
/// prevote history and are not extracted here.
pub fn extract_fraud_proof(
    cert_a: &FinalizationCertificate,
    cert_b: &FinalizationCertificate,
    quorum: usize,
) -> Option<(Vec<ConsensusMessage>, Vec<ValidatorId>)> {
    if cert_a.height != cert_b.height
        || cert_a.block_hash == cert_b.block_hash
        || cert_a.round != cert_b.round
        || !cert_a.valid(quorum)
        || !cert_b.valid(quorum)
    {
        return None;
    }
    let signers_b: BTreeSet<ValidatorId> = cert_b.signers().into_iter().collect();
    let mut accused: Vec<ValidatorId> = cert_a
        .signers()
        .into_iter()
        .filter(|s| signers_b.contains(s))
        .collect();
    accused.sort();
    if accused.is_empty() {
        return None;
    }
    let mut evidence = Vec::new();
    for cert in [cert_a, cert_b] {
        for m in &cert.precommits {
            if accused.contains(&m.signer) {
                evidence.push(m.clone());
            }
        }
    }
    Some((evidence, accused))
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: u32 = 4;
    const QUORUM: usize = 3;

    fn ids() -> Vec<ValidatorId> {
        (0..N).map(ValidatorId).collect()
    }

    /// Runs one height among fully synchronous honest validators with a fixed
    /// proposed value; returns the decisions.
    fn run_synchronous_height(height: u64) -> Vec<FinalizationCertificate> {
        let value = Hash::digest(b"the block");
        let mut nodes: Vec<HeightState> = ids()
            .into_iter()
            .map(|v| HeightState::new(v, height, QUORUM))
            .collect();
        let mut inbox: Vec<ConsensusMessage> = Vec::new();
        let leader = proposer_for(height, 0, N);
        inbox.push(ConsensusMessage::signed(
            ConsensusMsgKind::Proposal,
            height,
            Round::Regular(0),
            Some(value),
            -1,
            leader,
        ));
        let mut decided = Vec::new();
        for n in &mut nodes {
            n.start();
        }
        // Deliver until quiescent.
        while let Some(msg) = inbox.pop() {
            for n in &mut nodes {
                for a in n.on_message(msg.clone()) {
                    match a {
                        Action::Broadcast(m) => inbox.push(m),
                        Action::Decided(c) => decided.push(c),
                        _ => {}
                    }
                }
            }
        }
        decided
    }

    #[test]
    fn synchronous_height_decides_for_everyone() {
        let decided = run_synchronous_height(1);
        assert_eq!(decided.len(), N as usize);
        for c in &decided {
            assert_eq!(c.block_hash, Hash::digest(b"the block"));
            assert!(c.valid(QUORUM));
        }
    }

    #[test]
    fn propose_timeout_leads_to_nil_prevote() {
        let mut n = HeightState::new(ValidatorId(1), 1, QUORUM);
        n.start();
        let actions = n.on_timeout(Step::Propose, 0);
        let sent_nil = actions.iter().any(|a| {
            matches!(a, Action::Broadcast(m)
                if m.kind == ConsensusMsgKind::Prevote && m.value.is_none())
        });
        assert!(sent_nil);
    }

    #[test]
    fn locked_node_rejects_fresh_conflicting_proposal() {
        let height = 1;
        let v1 = Hash::digest(b"v1");
        let mut n = HeightState::new(ValidatorId(3), height, QUORUM);
        n.start();
        let leader0 = proposer_for(height, 0, N);
        n.on_message(ConsensusMessage::signed(
            ConsensusMsgKind::Proposal,
            height,
            Round::Regular(0),
            Some(v1),
            -1,
            leader0,
        ));
        for v in 0..3 {
            n.on_message(ConsensusMessage::signed(
                ConsensusMsgKind::Prevote,
                height,
                Round::Regular(0),
                Some(v1),
                -1,
                ValidatorId(v),
            ));
        }
        assert_eq!(n.locked_value, Some(v1));
        assert_eq!(n.locked_round, 0);
        // Move to round 1 and feed a fresh conflicting proposal (vr = -1).
        n.on_timeout(Step::Precommit, 0);
        assert_eq!(n.round, 1);
        let v2 = Hash::digest(b"v2");
        let leader1 = proposer_for(height, 1, N);
        let actions = n.on_message(ConsensusMessage::signed(
            ConsensusMsgKind::Proposal,
            height,
            Round::Regular(1),
            Some(v2),
            -1,
            leader1,
        ));
        let prevote = actions.iter().find_map(|a| match a {
            Action::Broadcast(m) if m.kind == ConsensusMsgKind::Prevote => Some(m.clone()),
            _ => None,
        });
        // Locked on v1, proposal has no newer valid-round: prevote nil.
        assert_eq!(prevote.unwrap().value, None);
    }

    #[test]
    fn locked_node_accepts_reproposal_with_newer_valid_round() {
        let height = 1;
        let v1 = Hash::digest(b"v1");
        let v2 = Hash::digest(b"v2");
        let mut n = HeightState::new(ValidatorId(3), height, QUORUM);
        n.start();
        let leader0 = proposer_for(height, 0, N);
        n.on_message(ConsensusMessage::signed(
            ConsensusMsgKind::Proposal,
            height,
            Round::Regular(0),
            Some(v1),
            -1,
            leader0,
        ));
        for v in 0..3 {
            n.on_message(ConsensusMessage::signed(
                ConsensusMsgKind::Prevote,
                height,
                Round::Regular(0),
                Some(v1),
                -1,
                ValidatorId(v),
            ));
        }
        n.on_timeout(Step::Precommit, 0);
        n.on_timeout(Step::Propose, 1);
        n.on_timeout(Step::Prevote, 1);
        n.on_timeout(Step::Precommit, 1);
        assert_eq!(n.round, 2);
        // Re-proposal of v2 claiming a prevote quorum at round 1 (> lock at 0).
        let leader2 = proposer_for(height, 2, N);
        let actions = n.on_message(ConsensusMessage::signed(
            ConsensusMsgKind::Proposal,
            height,
            Round::Regular(2),
            Some(v2),
            1,
            leader2,
        ));
        let prevote = actions.iter().find_map(|a| match a {
            Action::Broadcast(m) if m.kind == ConsensusMsgKind::Prevote => Some(m.clone()),
            _ => None,
        });
        assert_eq!(prevote.unwrap().value, Some(v2));
    }

    fn cert_for(value: Hash, height: u64, round: u32, signers: &[u32]) -> FinalizationCertificate {
        let precommits = signers
            .iter()
            .map(|&s| {
                ConsensusMessage::signed(
                    ConsensusMsgKind::Precommit,
                    height,
                    Round::Regular(round),
                    Some(value),
                    -1,
                    ValidatorId(s),
                )
            })
            .collect();
        FinalizationCertificate {
            block_hash: value,
            height,
            round: Round::Regular(round),
            precommits,
        }
    }

    #[test]
    fn fraud_proof_names_exactly_the_double_signers() {
        let a = cert_for(Hash::digest(b"a"), 5, 2, &[0, 1, 2]);
        let b = cert_for(Hash::digest(b"b"), 5, 2, &[1, 2, 3]);
        let (evidence, accused) = extract_fraud_proof(&a, &b, QUORUM).unwrap();
        assert_eq!(accused, vec![ValidatorId(1), ValidatorId(2)]);
        // One precommit per accused per certificate.
        assert_eq!(evidence.len(), 4);
        assert!(evidence.iter().all(|m| m.verify()));
    }

    #[test]
    fn fraud_proof_brute_force_overlap_oracle() {
        // For every pair of 3-subsets of 4 validators, the extraction matches
        // a direct set intersection and never convicts a non-overlapping
        // signer.
        let subsets: Vec<Vec<u32>> = vec![
            vec![0, 1, 2],
            vec![0, 1, 3],
            vec![0, 2, 3],
            vec![1, 2, 3],
        ];
        for sa in &subsets {
            for sb in &subsets {
                let a = cert_for(Hash::digest(b"a"), 9, 1, sa);
                let b = cert_for(Hash::digest(b"b"), 9, 1, sb);
                let (_, accused) = extract_fraud_proof(&a, &b, QUORUM).unwrap();
                let expect: Vec<ValidatorId> = sa
                    .iter()
                    .filter(|x| sb.contains(x))
                    .map(|&x| ValidatorId(x))
                    .collect();
                assert_eq!(accused, expect);
                assert!(accused.len() >= 2); // f + 1 with f = 1
            }
        }
    }

    #[test]
    fn no_fraud_proof_from_agreeing_certs() {
        let a = cert_for(Hash::digest(b"same"), 5, 2, &[0, 1, 2]);
        let b = cert_for(Hash::digest(b"same"), 5, 2, &[1, 2, 3]);
        assert!(extract_fraud_proof(&a, &b, QUORUM).is_none());
    }
}
