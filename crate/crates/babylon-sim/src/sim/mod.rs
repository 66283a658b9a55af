//! The deterministic discrete-event engine: one global tick clock, mining
//! draws, Δ-bounded message delivery, scenario scripts driving the
//! adversary, and late-node spawning. Equal (params, script, seed) always
//! produce the identical trace.

pub mod node;

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::babylon::{BabylonBlock, BlockStore, Miner};
use crate::commitment::{miner_validate, BabylonPayload, BabylonTx, Checkpoint};
use crate::crypto::{Hash, ValidatorId};
use crate::params::ProtocolParams;
use crate::trace::TraceEvent;
use crate::types::{
    ConsensusMessage, ConsensusMsgKind, FinalizationCertificate, PosBlock, PosBlockHeader,
    PosTransaction, Round, tx_root,
};

pub use node::{Behavior, NetMsg, Outbox, PosNode, TimeoutKey};

#[derive(Debug)]
enum Queued {
    Deliver { to: usize, msg: NetMsg },
    Timeout { node: usize, key: TimeoutKey },
}

/// Scenario-specific adversary driver. Coordinated misbehavior (private
/// chains, forged certificates, withheld PoW forks) lives here; per-node
/// deviations live in `Behavior`.
#[derive(Debug)]
pub enum Script {
    Noop,
    /// Periodic environment transactions, nothing adversarial.
    HonestRun { inject_every: u64 },
    /// 2f+1 corrupted validators run public consensus while privately
    /// finalizing a conflicting chain, request a withdrawal, then release.
    /// With `babylon_attack` they also mine a private PoW fork carrying the
    /// private chain's checkpoint and release only after the withdrawal is
    /// granted (the S2 escape hatch).
    SafetyAttack {
        corrupted: Vec<ValidatorId>,
        fork_height: u64,
        withdraw_tick: u64,
        release_tick: u64,
        babylon_attack: bool,
        requested: bool,
        released: bool,
        adv_seeded: bool,
    },
    /// A conflicting history signed by corrupted validators, committed to
    /// the PoW chain early WITHOUT data. With availability checks on, honest
    /// miners refuse it; the control arm turns the checks off.
    LongRange {
        corrupted: Vec<ValidatorId>,
        attack_len: u64,
        submit_tick: u64,
        reveal_tick: u64,
        spawn_tick: u64,
        attack: Option<(Vec<PosBlock>, Vec<FinalizationCertificate>, Checkpoint)>,
        submitted: bool,
        revealed: bool,
        spawned: bool,
    },
    /// Censors drop a target tx; an observing full node files a complaint
    /// carrying the tx data.
    Censorship {
        target: PosTransaction,
        inject_tick: u64,
        complain_tick: u64,
        injected: bool,
        complained: bool,
    },
    /// Validators go silent per their `Behavior`; the nodes handle evidence
    /// and the fallback round themselves.
    Stalling { inject_every: u64 },
    /// Two post-leak histories certified by disjoint halves of the
    /// validator set, delivered to an observer. The enhanced arm checkpoints
    /// one of them; the unenhanced arm records ambiguity.
    InactivityLeak {
        enhanced: bool,
        deliver_tick: u64,
        delivered: bool,
    },
}

pub struct World {
    pub params: ProtocolParams,
    pub scenario: String,
    pub tick: u64,
    pub nodes: Vec<PosNode>,
    pub rng: ChaCha8Rng,
    pub trace: Vec<TraceEvent>,
    pub script: Script,
    pub corrupted: Vec<ValidatorId>,
    /// Honest miners validate submissions before including them.
    pub availability_checks: bool,
    /// Ticks from send to delivery, in [1, Δ].
    pub delivery_delay: u64,

    queue: BTreeMap<u64, Vec<Queued>>,
    pos_genesis: PosBlock,
    honest_store: BlockStore,
    pool: IndexMap<Hash, BabylonTx>,
    pending_submissions: BTreeMap<u64, Vec<BabylonTx>>,
    rejected: BTreeSet<Hash>,
    nonce: u64,
    archive: Vec<NetMsg>,
    /// Withheld adversarial PoW branch (tip-first mining, released at once).
    adv_branch: Vec<BabylonBlock>,
    adv_pending: Vec<BabylonTx>,
    adv_mining: bool,
    adv_released: bool,
}

impl World {
    pub fn new(params: ProtocolParams, scenario: impl Into<String>, script: Script) -> World {
        params.validate().expect("valid params");
        let pos_genesis = PosBlock::genesis();
        let mut nodes = Vec::new();
        for i in 0..params.n {
            nodes.push(PosNode::new(
                format!("v{i}"),
                Some(ValidatorId(i)),
                params.clone(),
                &pos_genesis,
            ));
        }
        World {
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            params,
            scenario: scenario.into(),
            tick: 0,
            nodes,
            trace: Vec::new(),
            script,
            corrupted: Vec::new(),
            availability_checks: true,
            delivery_delay: 1,
            queue: BTreeMap::new(),
            pos_genesis,
            honest_store: BlockStore::new(),
            pool: IndexMap::new(),
            pending_submissions: BTreeMap::new(),
            rejected: BTreeSet::new(),
            nonce: 0,
            archive: Vec::new(),
            adv_branch: Vec::new(),
            adv_pending: Vec::new(),
            adv_mining: false,
            adv_released: false,
        }
    }

    pub fn add_observer(&mut self, name: &str) -> usize {
        self.nodes.push(PosNode::new(
            name,
            None,
            self.params.clone(),
            &self.pos_genesis,
        ));
        self.nodes.len() - 1
    }

    pub fn node_named(&self, name: &str) -> &PosNode {
        self.nodes.iter().find(|n| n.name == name).expect("node exists")
    }

    fn node_index(&self, v: ValidatorId) -> usize {
        self.nodes
            .iter()
            .position(|n| n.vid == Some(v))
            .expect("validator node")
    }

    pub fn honest_validators(&self) -> Vec<ValidatorId> {
        (0..self.params.n)
            .map(ValidatorId)
            .filter(|v| !self.corrupted.contains(v))
            .collect()
    }

    /// Honest full-node views: honest validators plus observers and late
    /// spawns.
    pub fn honest_views(&self) -> Vec<&PosNode> {
        self.nodes
            .iter()
            .filter(|n| match n.vid {
                Some(v) => !self.corrupted.contains(&v),
                None => true,
            })
            .collect()
    }

    pub fn run(&mut self, max_ticks: u64) {
        self.trace.push(TraceEvent::Meta {
            tick: 0,
            params: self.params.clone(),
            honest_validators: self.honest_validators(),
            corrupted_validators: self.corrupted.clone(),
            scenario: self.scenario.clone(),
        });
        for i in 0..self.nodes.len() {
            let mut out = Outbox::default();
            self.nodes[i].start(0, &mut out);
            self.route_from(i, out);
        }
        while self.tick < max_ticks {
            self.tick += 1;
            self.step_script();
            self.step_mining();
            self.drain_queue();
        }
        self.trace.push(TraceEvent::RunEnd { tick: self.tick });
    }

    fn drain_queue(&mut self) {
        while let Some(batch) = self.queue.remove(&self.tick) {
            for q in batch {
                let tick = self.tick;
                let mut out = Outbox::default();
                let owner = match q {
                    Queued::Deliver { to, msg } => {
                        self.nodes[to].handle(msg, tick, &mut out);
                        to
                    }
                    Queued::Timeout { node, key } => {
                        self.nodes[node].handle_timeout(key, tick, &mut out);
                        node
                    }
                };
                self.route_from(owner, out);
            }
            // Handlers may enqueue same-tick work only for the future; the
            // loop re-checks in case a script enqueued at this tick.
        }
    }

    fn route_from(&mut self, from: usize, out: Outbox) {
        self.trace.extend(out.trace);
        for msg in out.broadcasts {
            self.broadcast(msg, self.tick + self.delivery_delay);
        }
        if !out.submissions.is_empty() {
            self.pending_submissions
                .entry(self.tick + 1)
                .or_default()
                .extend(out.submissions);
        }
        for (delay, key) in out.schedules {
            self.queue
                .entry(self.tick + delay.max(1))
                .or_default()
                .push(Queued::Timeout { node: from, key });
        }
    }

    /// Deliver to every node (including the sender: vote counting needs own
    /// messages) and remember the message for late spawns.
    fn broadcast(&mut self, msg: NetMsg, at: u64) {
        self.archive.push(msg.clone());
        let at = at.max(self.tick + 1);
        for i in 0..self.nodes.len() {
            self.queue.entry(at).or_default().push(Queued::Deliver {
                to: i,
                msg: msg.clone(),
            });
        }
    }

    fn deliver_to(&mut self, node: usize, msg: NetMsg, at: u64) {
        let at = at.max(self.tick + 1);
        self.queue
            .entry(at)
            .or_default()
            .push(Queued::Deliver { to: node, msg });
    }

    fn chain_commitments(&self, store: &BlockStore) -> BTreeSet<Hash> {
        store
            .longest_chain()
            .iter()
            .flat_map(|h| store.get(h).unwrap().txs.iter().map(|t| t.commitment))
            .collect()
    }

    fn step_mining(&mut self) {
        // Move matured submissions into the pool first.
        if let Some(subs) = self.pending_submissions.remove(&self.tick) {
            for tx in subs {
                self.pool.entry(tx.commitment).or_insert(tx);
            }
        }
        if !self.rng.gen_bool(self.params.lambda) {
            return;
        }
        let adversarial = self.params.beta > 0.0 && self.rng.gen_bool(self.params.beta);
        if adversarial && self.adv_mining {
            self.mine_adversarial_block();
        } else {
            self.mine_honest_block();
        }
    }

    fn mine_honest_block(&mut self) {
        let on_chain = self.chain_commitments(&self.honest_store);
        let mut txs = Vec::new();
        let mut drop = Vec::new();
        for (c, tx) in &self.pool {
            // A commitment already on chain is not re-mined, except for
            // evidence and on-Babylon round messages: their validity depends
            // on the PoW position they land at, so a fresh submission of the
            // same bytes is a new transaction.
            let position_sensitive = matches!(
                tx.payload,
                Some(BabylonPayload::StallingEvidence(_)) | Some(BabylonPayload::OnBabylonMsg(_))
            );
            if on_chain.contains(c) && !position_sensitive {
                drop.push(*c);
                continue;
            }
            if self.availability_checks {
                if let Err(reason) = miner_validate(tx, self.params.quorum()) {
                    if self.rejected.insert(*c) {
                        self.trace.push(TraceEvent::CommitmentRejected {
                            tick: self.tick,
                            commitment: *c,
                            reason,
                        });
                    }
                    drop.push(*c);
                    continue;
                }
            }
            txs.push(tx.clone());
        }
        for c in drop {
            self.pool.shift_remove(&c);
        }
        for tx in &txs {
            self.pool.shift_remove(&tx.commitment);
            self.trace.push(TraceEvent::CommitmentAccepted {
                tick: self.tick,
                kind: tx
                    .payload
                    .as_ref()
                    .map(|p| p.kind())
                    .unwrap_or(crate::commitment::PayloadKind::Checkpoint),
                commitment: tx.commitment,
            });
        }
        let parent = self.honest_store.tip();
        self.nonce += 1;
        let block = BabylonBlock {
            parent,
            height: self.honest_store.get(&parent).unwrap().height + 1,
            txs: txs.clone(),
            miner: Miner::Honest,
            nonce: self.nonce,
        };
        let hash = block.hash();
        self.trace.push(TraceEvent::BabylonMined {
            tick: self.tick,
            height: block.height,
            hash,
            parent,
            miner: Miner::Honest,
            txs: txs.len() as u64,
        });
        self.honest_store.insert(block.clone());
        let payloads: Vec<(Hash, BabylonPayload)> = txs
            .iter()
            .filter_map(|t| t.payload.clone().map(|p| (t.commitment, p)))
            .collect();
        self.broadcast(
            NetMsg::BabylonBlockMsg { block, payloads },
            self.tick + self.delivery_delay,
        );
    }

    /// Adversarial miners extend their withheld branch and pack the
    /// adversary's own submissions only.
    fn mine_adversarial_block(&mut self) {
        let (parent, height) = match self.adv_branch.last() {
            Some(b) => (b.hash(), b.height + 1),
            None => {
                let t = self.honest_store.tip();
                (t, self.honest_store.get(&t).unwrap().height + 1)
            }
        };
        let txs: Vec<BabylonTx> = self.adv_pending.drain(..).collect();
        self.nonce += 1;
        let block = BabylonBlock {
            parent,
            height,
            txs,
            miner: Miner::Adversarial,
            nonce: self.nonce,
        };
        self.trace.push(TraceEvent::BabylonMined {
            tick: self.tick,
            height: block.height,
            hash: block.hash(),
            parent: block.parent,
            miner: Miner::Adversarial,
            txs: block.txs.len() as u64,
        });
        self.adv_branch.push(block);
    }

    fn release_adv_branch(&mut self) {
        if self.adv_released {
            return;
        }
        self.adv_released = true;
        self.adv_mining = false;
        let branch: Vec<BabylonBlock> = self.adv_branch.clone();
        for block in branch {
            if !self.honest_store.contains(&block.parent) {
                continue;
            }
            self.honest_store.insert(block.clone());
            let payloads: Vec<(Hash, BabylonPayload)> = block
                .txs
                .iter()
                .filter_map(|t| t.payload.clone().map(|p| (t.commitment, p)))
                .collect();
            self.broadcast(
                NetMsg::BabylonBlockMsg { block, payloads },
                self.tick + self.delivery_delay,
            );
        }
    }

    pub fn spawn_late_node(&mut self, name: &str) -> usize {
        let mut node = PosNode::new(name, None, self.params.clone(), &self.pos_genesis);
        self.trace.push(TraceEvent::LateNodeSpawn {
            tick: self.tick,
            node: name.to_string(),
        });
        let mut out = Outbox::default();
        node.start(self.tick, &mut out);
        for msg in self.archive.clone() {
            node.handle(msg, self.tick, &mut out);
        }
        self.nodes.push(node);
        let ix = self.nodes.len() - 1;
        self.route_from(ix, out);
        ix
    }

    fn step_script(&mut self) {
        let mut script = std::mem::replace(&mut self.script, Script::Noop);
        match &mut script {
            Script::Noop => {}
            Script::HonestRun { inject_every } => {
                if *inject_every > 0 && self.tick % *inject_every == 0 {
                    let tx = PosTransaction::payload(self.tick.to_le_bytes().to_vec());
                    self.broadcast(NetMsg::PosTx(tx), self.tick + 1);
                }
            }
            Script::SafetyAttack {
                corrupted,
                fork_height,
                withdraw_tick,
                release_tick,
                babylon_attack,
                requested,
                released,
                adv_seeded,
            } => {
                if self.tick % 7 == 0 {
                    let tx = PosTransaction::payload(self.tick.to_le_bytes().to_vec());
                    self.broadcast(NetMsg::PosTx(tx), self.tick + 1);
                }
                if !*requested && self.tick >= *withdraw_tick {
                    *requested = true;
                    let tx = PosTransaction::withdrawal_request(corrupted[0]);
                    self.broadcast(NetMsg::PosTx(tx), self.tick + 1);
                }
                // The private fork needs the public chain to have passed the
                // fork height.
                let ref_node = self.node_index(corrupted[0]);
                let ready = self.nodes[ref_node].canonical.len() as u64 > *fork_height + 1;
                if *babylon_attack && !*adv_seeded && ready && self.tick >= *withdraw_tick {
                    *adv_seeded = true;
                    self.adv_mining = true;
                    let (blocks, _) = self.build_private_chain(corrupted, *fork_height, ref_node);
                    let ckpt = Checkpoint::for_blocks(&blocks[*fork_height as usize + 1..]);
                    self.adv_pending
                        .push(BabylonTx::with_data(BabylonPayload::Checkpoint(ckpt), None));
                }
                let release_now = if *babylon_attack {
                    // Wait for the withdrawal to be granted everywhere and
                    // for the private PoW branch to win the length race.
                    let granted = self
                        .nodes
                        .iter()
                        .filter(|n| match n.vid {
                            Some(v) => !corrupted.contains(&v),
                            None => true,
                        })
                        .all(|n| n.withdrawn.contains(&corrupted[0]));
                    let adv_tip = self.adv_branch.last().map(|b| b.height).unwrap_or(0);
                    granted && *adv_seeded && adv_tip > self.honest_store.height_of_tip() + 1
                } else {
                    self.tick >= *release_tick
                };
                if !*released && ready && release_now {
                    *released = true;
                    let (blocks, certs) =
                        self.build_private_chain(corrupted, *fork_height, ref_node);
                    for (b, c) in blocks[*fork_height as usize + 1..]
                        .iter()
                        .zip(certs.iter())
                    {
                        self.broadcast(
                            NetMsg::Cert {
                                cert: c.clone(),
                                block: b.clone(),
                            },
                            self.tick + 1,
                        );
                    }
                    if *babylon_attack {
                        self.release_adv_branch();
                    } else {
                        let ckpt = Checkpoint::for_blocks(&blocks[*fork_height as usize + 1..]);
                        self.pending_submissions
                            .entry(self.tick + 1)
                            .or_default()
                            .push(BabylonTx::with_data(BabylonPayload::Checkpoint(ckpt), None));
                    }
                }
            }
            Script::LongRange {
                corrupted,
                attack_len,
                submit_tick,
                reveal_tick,
                spawn_tick,
                attack,
                submitted,
                revealed,
                spawned,
            } => {
                if self.tick % 7 == 0 {
                    let tx = PosTransaction::payload(self.tick.to_le_bytes().to_vec());
                    self.broadcast(NetMsg::PosTx(tx), self.tick + 1);
                }
                if !*submitted && self.tick >= *submit_tick {
                    *submitted = true;
                    let (blocks, certs) = self.forge_chain(corrupted, 0, *attack_len, b"attack");
                    let ckpt = Checkpoint::for_blocks(&blocks[1..]);
                    // The defining move: commitment first, data withheld.
                    self.pending_submissions
                        .entry(self.tick + 1)
                        .or_default()
                        .push(BabylonTx {
                            commitment: ckpt.commitment(),
                            payload: None,
                            submitter: None,
                        });
                    *attack = Some((blocks, certs, ckpt));
                }
                if !*revealed && self.tick >= *reveal_tick {
                    *revealed = true;
                    let (blocks, certs, ckpt) = attack.clone().expect("submit before reveal");
                    for (b, c) in blocks[1..].iter().zip(certs.iter()) {
                        self.broadcast(
                            NetMsg::Cert {
                                cert: c.clone(),
                                block: b.clone(),
                            },
                            self.tick + 1,
                        );
                    }
                    self.broadcast(
                        NetMsg::Payloads(vec![(
                            ckpt.commitment(),
                            BabylonPayload::Checkpoint(ckpt.clone()),
                        )]),
                        self.tick + 1,
                    );
                    // With availability checks on this re-submission is the
                    // "too late" path: accepted now, positioned after the
                    // public chain's checkpoints.
                    self.pending_submissions
                        .entry(self.tick + 1)
                        .or_default()
                        .push(BabylonTx::with_data(
                            BabylonPayload::Checkpoint(ckpt),
                            None,
                        ));
                }
                if !*spawned && self.tick >= *spawn_tick {
                    *spawned = true;
                    self.spawn_late_node("late");
                }
            }
            Script::Censorship {
                target,
                inject_tick,
                complain_tick,
                injected,
                complained,
            } => {
                if self.tick % 7 == 0 {
                    let tx = PosTransaction::payload(self.tick.to_le_bytes().to_vec());
                    self.broadcast(NetMsg::PosTx(tx), self.tick + 1);
                }
                if !*injected && self.tick >= *inject_tick {
                    *injected = true;
                    // Only the censoring validators (and the observer, who
                    // will complain) ever receive the tx directly.
                    let msg = NetMsg::PosTx(target.clone());
                    for i in 0..self.nodes.len() {
                        let is_censor = matches!(&self.nodes[i].behavior, Behavior::Censor { .. });
                        if is_censor || self.nodes[i].vid.is_none() {
                            self.deliver_to(i, msg.clone(), self.tick + 1);
                        }
                    }
                }
                if !*complained && self.tick >= *complain_tick {
                    *complained = true;
                    let payload = BabylonPayload::CensoredTxs(vec![target.clone()]);
                    self.pending_submissions
                        .entry(self.tick + 1)
                        .or_default()
                        .push(BabylonTx::with_data(payload, None));
                }
            }
            Script::Stalling { inject_every } => {
                if *inject_every > 0 && self.tick % *inject_every == 0 {
                    let tx = PosTransaction::payload(self.tick.to_le_bytes().to_vec());
                    self.broadcast(NetMsg::PosTx(tx), self.tick + 1);
                }
            }
            Script::InactivityLeak {
                enhanced,
                deliver_tick,
                delivered,
            } => {
                if !*delivered && self.tick >= *deliver_tick {
                    *delivered = true;
                    let n = self.params.n;
                    let half_a: Vec<ValidatorId> = (0..n / 2).map(ValidatorId).collect();
                    let half_b: Vec<ValidatorId> = (n / 2..n).map(ValidatorId).collect();
                    let (blocks_a, certs_a) = self.forge_chain(&half_a, 0, 2, b"leak-a");
                    let (blocks_b, certs_b) = self.forge_chain(&half_b, 0, 2, b"leak-b");
                    for (blocks, certs) in [(blocks_a.clone(), certs_a), (blocks_b, certs_b)] {
                        for (b, c) in blocks[1..].iter().zip(certs.iter()) {
                            self.broadcast(
                                NetMsg::Cert {
                                    cert: c.clone(),
                                    block: b.clone(),
                                },
                                self.tick + 1,
                            );
                        }
                    }
                    if *enhanced {
                        let ckpt = Checkpoint::for_blocks(&blocks_a[1..]);
                        self.pending_submissions
                            .entry(self.tick + 1)
                            .or_default()
                            .push(BabylonTx::with_data(BabylonPayload::Checkpoint(ckpt), None));
                    }
                }
            }
        }
        self.script = script;
    }

    /// A conflicting chain branching off the reference node's canonical
    /// chain at `fork_height`, certified by `signers` reusing the public
    /// rounds (so double signatures land at identical heights and rounds).
    fn build_private_chain(
        &self,
        signers: &[ValidatorId],
        fork_height: u64,
        ref_node: usize,
    ) -> (Vec<PosBlock>, Vec<FinalizationCertificate>) {
        let node = &self.nodes[ref_node];
        let public: Vec<PosBlock> = node
            .canonical
            .iter()
            .map(|h| node.blocks[h].clone())
            .collect();
        let mut blocks: Vec<PosBlock> = public[..=fork_height as usize].to_vec();
        let mut certs = Vec::new();
        for h in fork_height + 1..public.len() as u64 {
            let pub_block = &public[h as usize];
            let round = node
                .certs
                .get(&pub_block.hash())
                .map(|c| c.round)
                .unwrap_or(Round::Regular(0));
            let body = vec![PosTransaction::payload(
                [b"private".as_slice(), &h.to_le_bytes()].concat(),
            )];
            let parent = blocks.last().unwrap().hash();
            let header = PosBlockHeader {
                parent,
                height: h,
                txroot: tx_root(&body),
                proposer: signers[0],
                round,
            };
            let block = PosBlock {
                header,
                body,
                justification: certs.last().cloned(),
            };
            let bh = block.hash();
            let precommits = signers
                .iter()
                .map(|v| {
                    ConsensusMessage::signed(
                        ConsensusMsgKind::Precommit,
                        h,
                        round,
                        Some(bh),
                        -1,
                        *v,
                    )
                })
                .collect();
            certs.push(FinalizationCertificate {
                block_hash: bh,
                height: h,
                round,
                precommits,
            });
            blocks.push(block);
        }
        (blocks, certs)
    }

    /// A standalone finalized history of `len` blocks from genesis, signed
    /// by exactly `signers` in round 0. Used for long-range and
    /// inactivity-leak forgeries.
    fn forge_chain(
        &self,
        signers: &[ValidatorId],
        _from: u64,
        len: u64,
        tag: &[u8],
    ) -> (Vec<PosBlock>, Vec<FinalizationCertificate>) {
        let mut blocks = vec![self.pos_genesis.clone()];
        let mut certs = Vec::new();
        for h in 1..=len {
            let body = vec![PosTransaction::payload(
                [tag, &h.to_le_bytes()].concat(),
            )];
            let parent = blocks.last().unwrap().hash();
            let header = PosBlockHeader {
                parent,
                height: h,
                txroot: tx_root(&body),
                proposer: signers[0],
                round: Round::Regular(0),
            };
            let block = PosBlock {
                header,
                body,
                justification: certs.last().cloned(),
            };
            let bh = block.hash();
            let precommits = signers
                .iter()
                .map(|v| {
                    ConsensusMessage::signed(
                        ConsensusMsgKind::Precommit,
                        h,
                        Round::Regular(0),
                        Some(bh),
                        -1,
                        *v,
                    )
                })
                .collect();
            certs.push(FinalizationCertificate {
                block_hash: bh,
                height: h,
                round: Round::Regular(0),
                precommits,
            });
            blocks.push(block);
        }
        (blocks, certs)
    }
}
