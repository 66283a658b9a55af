//! Derived state a PoS full node computes from its PoW chain view: which
//! finalized blocks are checkpointed where, which of several conflicting
//! finalized chains is canonical, and whether a withdrawal can be granted.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::babylon::BlockStore;
use crate::commitment::{BabylonPayload, Checkpoint};
use crate::crypto::{Hash, ValidatorId};

/// Position of a timestamped submission on the PoW chain. Ordered by block
/// height, then by index inside the block.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct BabylonPos {
    pub height: u64,
    pub tx_index: u32,
}

#[derive(Clone, Debug)]
pub struct IndexedCheckpoint {
    pub pos: BabylonPos,
    pub babylon_block: Hash,
    pub commitment: Hash,
    /// PoS blocks this checkpoint indexed for the first time, chain order.
    pub new_blocks: Vec<Hash>,
}

/// Result of walking one PoW chain and validating every checkpoint on it
/// from a PoS full node's standpoint.
#[derive(Clone, Debug, Default)]
pub struct CheckpointIndex {
    /// PoS block hash to the position of the first checkpoint covering it.
    pub positions: BTreeMap<Hash, BabylonPos>,
    /// Checkpoints that indexed at least one previously unindexed block.
    pub new_block_checkpoints: Vec<IndexedCheckpoint>,
    /// Every accepted checkpoint commitment and its position.
    pub accepted: BTreeMap<Hash, BabylonPos>,
}

impl CheckpointIndex {
    /// Position of the latest new-block checkpoint, if any.
    pub fn last_new_block_pos(&self) -> Option<BabylonPos> {
        self.new_block_checkpoints.last().map(|c| c.pos)
    }
}

/// Structural half of checkpoint validation, the part that never changes for
/// a given commitment: real commitment match, shape, roots both ways, chained
/// headers. Returns the covered (parent, block hash) pairs on success so the
/// view-dependent half never re-hashes.
pub fn checkpoint_structure(c: &Checkpoint, commitment: Hash) -> Option<Vec<(Hash, Hash)>> {
    if c.commitment() != commitment {
        return None;
    }
    if !c.shape_ok() || !c.roots_match_bodies() || !c.roots_match_headers() {
        return None;
    }
    let hashes: Vec<(Hash, Hash)> = c.headers.iter().map(|h| (h.parent, h.hash())).collect();
    for (i, w) in c.headers.windows(2).enumerate() {
        if w[1].parent != hashes[i].1 || w[1].height != w[0].height + 1 {
            return None;
        }
    }
    Some(hashes)
}

/// View-dependent half: every block finalized in this node's view and the
/// checkpoint extends genesis or already timestamped history. A checkpoint
/// may re-cover indexed blocks, hence any covered parent qualifies.
fn view_accepts(
    blocks: &[(Hash, Hash)],
    pos_genesis: Hash,
    indexed: &BTreeMap<Hash, BabylonPos>,
    is_finalized: &dyn Fn(Hash) -> bool,
) -> bool {
    if !blocks
        .iter()
        .any(|(parent, _)| *parent == pos_genesis || indexed.contains_key(parent))
    {
        return false;
    }
    blocks.iter().all(|(_, h)| is_finalized(*h))
}

/// Walk `chain` (genesis to tip) and index every checkpoint a PoS full node
/// accepts. `payloads` maps commitments to their data; commitments without
/// data cannot be validated and are skipped.
pub fn build_checkpoint_index(
    store: &BlockStore,
    chain: &[Hash],
    payloads: &BTreeMap<Hash, BabylonPayload>,
    pos_genesis: Hash,
    is_finalized: &dyn Fn(Hash) -> bool,
    structure_memo: &mut BTreeMap<Hash, Option<Vec<(Hash, Hash)>>>,
) -> CheckpointIndex {
    let mut index = CheckpointIndex::default();
    for bh in chain {
        let block = store.get(bh).expect("indexing known chain");
        for (ti, tx) in block.txs.iter().enumerate() {
            // Memoized per commitment; missing data is not cached because it
            // can still arrive later.
            let covered = match structure_memo.get(&tx.commitment) {
                Some(cached) => cached.clone(),
                None => {
                    let payload = tx.payload.as_ref().or_else(|| payloads.get(&tx.commitment));
                    match payload {
                        Some(BabylonPayload::Checkpoint(c)) => {
                            let r = checkpoint_structure(c, tx.commitment);
                            structure_memo.insert(tx.commitment, r.clone());
                            r
                        }
                        Some(_) => {
                            structure_memo.insert(tx.commitment, None);
                            None
                        }
                        None => None,
                    }
                }
            };
            let Some(covered) = covered else { continue };
            if !view_accepts(&covered, pos_genesis, &index.positions, is_finalized) {
                continue;
            }
            let pos = BabylonPos {
                height: block.height,
                tx_index: ti as u32,
            };
            index.accepted.entry(tx.commitment).or_insert(pos);
            let mut new_blocks = Vec::new();
            for (_, ph) in &covered {
                let ph = *ph;
                if !index.positions.contains_key(&ph) {
                    index.positions.insert(ph, pos);
                    new_blocks.push(ph);
                }
            }
            if !new_blocks.is_empty() {
                index.new_block_checkpoints.push(IndexedCheckpoint {
                    pos,
                    babylon_block: *bh,
                    commitment: tx.commitment,
                    new_blocks,
                });
            }
        }
    }
    index
}

/// Order two conflicting finalized PoS chains. The chain whose first
/// divergent block was checkpointed earlier wins; a checkpointed block beats
/// an uncheckpointed one; if neither divergent block is checkpointed the
/// `arrival` order of the blocks decides. A strict prefix never conflicts:
/// the longer chain wins.
///
/// Returns `Greater` when `a` is preferred.
pub fn compare_chains(
    a: &[Hash],
    b: &[Hash],
    positions: &BTreeMap<Hash, BabylonPos>,
    arrival: &dyn Fn(Hash) -> usize,
) -> Ordering {
    let common = a.iter().zip(b.iter()).take_while(|(x, y)| x == y).count();
    match (a.get(common), b.get(common)) {
        (None, None) => Ordering::Equal,
        (Some(_), None) => Ordering::Greater,
        (None, Some(_)) => Ordering::Less,
        (Some(da), Some(db)) => match (positions.get(da), positions.get(db)) {
            (Some(pa), Some(pb)) => pb.cmp(pa), // earlier position preferred
            (Some(_), None) => Ordering::Greater,
            (None, Some(_)) => Ordering::Less,
            (None, None) => arrival(*db).cmp(&arrival(*da)),
        },
    }
}

/// Pick the canonical chain among finalized leaves.
pub fn fork_choice(
    chains: &[Vec<Hash>],
    positions: &BTreeMap<Hash, BabylonPos>,
    arrival: &dyn Fn(Hash) -> usize,
) -> Vec<Hash> {
    assert!(!chains.is_empty());
    let mut best = &chains[0];
    for c in &chains[1..] {
        if compare_chains(c, best, positions, arrival) == Ordering::Greater {
            best = c;
        }
    }
    best.clone()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithdrawalVerdict {
    Granted,
    /// The request's block is not checkpointed on this node's PoW view.
    NotCheckpointed,
    /// Checkpoint exists but fewer than k_w blocks build on it.
    NotDeepEnough,
    /// A fraud proof on the longest PoW chain implicates the validator.
    FraudImplicated,
}

/// Decide a withdrawal in one node's view. `request_block` is the PoS block
/// carrying the request, `babylon_tip_height` the node's longest-chain tip.
pub fn withdrawal_check(
    request_block: Hash,
    validator: ValidatorId,
    index: &CheckpointIndex,
    babylon_tip_height: u64,
    k_w: u64,
    fraud_accused: &dyn Fn(ValidatorId) -> bool,
) -> WithdrawalVerdict {
    let pos = match index.positions.get(&request_block) {
        Some(p) => *p,
        None => return WithdrawalVerdict::NotCheckpointed,
    };
    if babylon_tip_height < pos.height + k_w {
        return WithdrawalVerdict::NotDeepEnough;
    }
    if fraud_accused(validator) {
        return WithdrawalVerdict::FraudImplicated;
    }
    WithdrawalVerdict::Granted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::babylon::{BabylonBlock, Miner};
    use crate::commitment::BabylonTx;
    use crate::crypto::ValidatorId;
    use crate::types::{tx_root, PosBlock, PosBlockHeader, PosTransaction, Round};

    fn pos_block(height: u64, parent: Hash, tag: u8) -> PosBlock {
        let body = vec![PosTransaction::payload(vec![tag, height as u8])];
        PosBlock {
            header: PosBlockHeader {
                parent,
                height,
                txroot: tx_root(&body),
                proposer: ValidatorId((height % 4) as u32),
                round: Round::Regular(0),
            },
            body,
            justification: None,
        }
    }

    fn pos_chain(len: u64, tag: u8) -> Vec<PosBlock> {
        let mut out = vec![PosBlock::genesis()];
        for h in 1..=len {
            let parent = out.last().unwrap().hash();
            out.push(pos_block(h, parent, tag));
        }
        out
    }

    fn mine(store: &mut BlockStore, parent: Hash, txs: Vec<BabylonTx>, nonce: u64) -> Hash {
        let b = BabylonBlock {
            parent,
            height: store.get(&parent).unwrap().height + 1,
            txs,
            miner: Miner::Honest,
            nonce,
        };
        let h = b.hash();
        store.insert(b);
        h
    }

    #[test]
    fn index_walks_chain_in_order() {
        let chain = pos_chain(4, 0);
        let genesis = chain[0].hash();
        let cp1 = Checkpoint::for_blocks(&chain[1..3]);
        let cp2 = Checkpoint::for_blocks(&chain[3..5]);
        let mut store = BlockStore::new();
        let mut tip = store.genesis_hash();
        tip = mine(
            &mut store,
            tip,
            vec![BabylonTx::with_data(
                BabylonPayload::Checkpoint(cp1.clone()),
                None,
            )],
            1,
        );
        tip = mine(&mut store, tip, vec![], 2);
        mine(
            &mut store,
            tip,
            vec![BabylonTx::with_data(
                BabylonPayload::Checkpoint(cp2.clone()),
                None,
            )],
            3,
        );
        let lc = store.longest_chain();
        let idx = build_checkpoint_index(&store, &lc, &BTreeMap::new(), genesis, &|_| true, &mut BTreeMap::new());
        assert_eq!(idx.new_block_checkpoints.len(), 2);
        assert_eq!(
            idx.positions[&chain[1].hash()],
            BabylonPos {
                height: 1,
                tx_index: 0
            }
        );
        assert_eq!(
            idx.positions[&chain[4].hash()],
            BabylonPos {
                height: 3,
                tx_index: 0
            }
        );
        assert_eq!(idx.last_new_block_pos().unwrap().height, 3);
    }

    #[test]
    fn index_skips_unfinalized_and_header_mismatch() {
        let chain = pos_chain(2, 0);
        let genesis = chain[0].hash();
        let cp = Checkpoint::for_blocks(&chain[1..3]);
        let mut store = BlockStore::new();
        let g = store.genesis_hash();
        mine(
            &mut store,
            g,
            vec![BabylonTx::with_data(
                BabylonPayload::Checkpoint(cp.clone()),
                None,
            )],
            1,
        );
        let lc = store.longest_chain();
        // Not finalized in this node's view: nothing indexed.
        let idx = build_checkpoint_index(&store, &lc, &BTreeMap::new(), genesis, &|_| false, &mut BTreeMap::new());
        assert!(idx.positions.is_empty());

        // Separate roots that disagree with in-header roots: rejected even
        // though miners accepted the data.
        let mut bad = cp;
        let fake = vec![PosTransaction::payload(b"swap".to_vec())];
        bad.bodies[0] = fake.clone();
        bad.txroots[0] = tx_root(&fake);
        let mut store2 = BlockStore::new();
        let g2 = store2.genesis_hash();
        mine(
            &mut store2,
            g2,
            vec![BabylonTx::with_data(BabylonPayload::Checkpoint(bad), None)],
            1,
        );
        let lc2 = store2.longest_chain();
        let idx2 = build_checkpoint_index(&store2, &lc2, &BTreeMap::new(), genesis, &|_| true, &mut BTreeMap::new());
        assert!(idx2.positions.is_empty());
    }

    #[test]
    fn earlier_checkpoint_wins_fork_choice() {
        let honest = pos_chain(3, 0);
        let mut attack: Vec<PosBlock> = honest[..2].to_vec();
        for h in 2..=3 {
            let parent = attack.last().unwrap().hash();
            attack.push(pos_block(h, parent, 9));
        }
        let ch: Vec<Hash> = honest.iter().map(|b| b.hash()).collect();
        let ca: Vec<Hash> = attack.iter().map(|b| b.hash()).collect();
        assert_eq!(ch[1], ca[1]);
        assert_ne!(ch[2], ca[2]);

        let mut positions = BTreeMap::new();
        positions.insert(
            ch[2],
            BabylonPos {
                height: 4,
                tx_index: 0,
            },
        );
        positions.insert(
            ca[2],
            BabylonPos {
                height: 7,
                tx_index: 0,
            },
        );
        let arrival = |_h: Hash| 0usize;
        assert_eq!(
            compare_chains(&ch, &ca, &positions, &arrival),
            Ordering::Greater
        );
        assert_eq!(fork_choice(&[ca.clone(), ch.clone()], &positions, &arrival), ch);

        // Checkpointed beats uncheckpointed regardless of length.
        let mut only_attack = BTreeMap::new();
        only_attack.insert(
            ca[2],
            BabylonPos {
                height: 2,
                tx_index: 0,
            },
        );
        assert_eq!(
            compare_chains(&ch, &ca, &only_attack, &arrival),
            Ordering::Less
        );
    }

    #[test]
    fn prefix_extension_is_not_a_conflict() {
        let chain = pos_chain(4, 0);
        let full: Vec<Hash> = chain.iter().map(|b| b.hash()).collect();
        let short = full[..3].to_vec();
        let arrival = |_h: Hash| 0usize;
        assert_eq!(
            compare_chains(&full, &short, &BTreeMap::new(), &arrival),
            Ordering::Greater
        );
    }

    #[test]
    fn fork_choice_matches_pairwise_oracle_on_random_forks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for case in 0..1000u64 {
            // Random tree: trunk, then 2 or 3 branches at a random fork
            // point, random checkpoint positions (possibly absent).
            let trunk_len = rng.gen_range(1..5u64);
            let trunk = pos_chain(trunk_len, 0);
            let n_branches = rng.gen_range(2..=3usize);
            let mut chains: Vec<Vec<Hash>> = Vec::new();
            let mut positions: BTreeMap<Hash, BabylonPos> = BTreeMap::new();
            let mut arrivals: BTreeMap<Hash, usize> = BTreeMap::new();
            for br in 0..n_branches {
                let mut blocks = trunk.clone();
                let extra = rng.gen_range(1..4u64);
                for h in trunk_len + 1..=trunk_len + extra {
                    let parent = blocks.last().unwrap().hash();
                    blocks.push(pos_block(h, parent, 10 + br as u8));
                }
                let hashes: Vec<Hash> = blocks.iter().map(|b| b.hash()).collect();
                for (i, h) in hashes.iter().enumerate() {
                    arrivals.entry(*h).or_insert(case as usize * 100 + br * 20 + i);
                    if rng.gen_bool(0.6) {
                        positions.entry(*h).or_insert(BabylonPos {
                            height: rng.gen_range(1..20u64),
                            tx_index: rng.gen_range(0..3u32),
                        });
                    }
                }
                chains.push(hashes);
            }
            let arrival = |h: Hash| *arrivals.get(&h).unwrap_or(&usize::MAX);
            let winner = fork_choice(&chains, &positions, &arrival);
            // Oracle: the winner must beat or tie every other chain in a
            // direct pairwise comparison.
            for c in &chains {
                assert_ne!(
                    compare_chains(c, &winner, &positions, &arrival),
                    Ordering::Greater,
                    "case {case}: a losing chain beats the winner"
                );
            }
        }
    }

    #[test]
    fn withdrawal_requires_depth_and_clean_record() {
        let blk = Hash::digest(b"request block");
        let mut index = CheckpointIndex::default();
        let v = ValidatorId(1);
        let clean = |_: ValidatorId| false;
        assert_eq!(
            withdrawal_check(blk, v, &index, 100, 8, &clean),
            WithdrawalVerdict::NotCheckpointed
        );
        index.positions.insert(
            blk,
            BabylonPos {
                height: 5,
                tx_index: 0,
            },
        );
        assert_eq!(
            withdrawal_check(blk, v, &index, 12, 8, &clean),
            WithdrawalVerdict::NotDeepEnough
        );
        assert_eq!(
            withdrawal_check(blk, v, &index, 13, 8, &clean),
            WithdrawalVerdict::Granted
        );
        let accused = |x: ValidatorId| x == v;
        assert_eq!(
            withdrawal_check(blk, v, &index, 13, 8, &accused),
            WithdrawalVerdict::FraudImplicated
        );
    }
}
