//! The simulated PoW chain. Blocks carry timestamped submissions; nodes keep
//! every block they hear about and follow the longest chain, breaking ties by
//! which tip arrived first.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::commitment::BabylonTx;
use crate::crypto::Hash;
use crate::encoding::{Encode, Encoder};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Miner {
    Honest,
    Adversarial,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BabylonBlock {
    pub parent: Hash,
    pub height: u64,
    pub txs: Vec<BabylonTx>,
    pub miner: Miner,
    /// Disambiguates otherwise-identical blocks mined at different times.
    pub nonce: u64,
}

impl BabylonBlock {
    pub fn genesis() -> BabylonBlock {
        BabylonBlock {
            parent: Hash::zero(),
            height: 0,
            txs: Vec::new(),
            miner: Miner::Honest,
            nonce: 0,
        }
    }

    pub fn hash(&self) -> Hash {
        let mut enc = Encoder::new();
        self.parent.encode(&mut enc);
        enc.u64(self.height);
        for tx in &self.txs {
            enc.raw(&tx.id().0);
        }
        enc.u8(match self.miner {
            Miner::Honest => 0,
            Miner::Adversarial => 1,
        });
        enc.u64(self.nonce);
        Hash::digest(&enc.finish())
    }
}

/// All PoW blocks a node has heard of, in arrival order.
#[derive(Clone, Debug, Default)]
pub struct BlockStore {
    blocks: IndexMap<Hash, BabylonBlock>,
}

impl BlockStore {
    pub fn new() -> BlockStore {
        let mut s = BlockStore {
            blocks: IndexMap::new(),
        };
        let g = BabylonBlock::genesis();
        s.blocks.insert(g.hash(), g);
        s
    }

    pub fn genesis_hash(&self) -> Hash {
        *self.blocks.get_index(0).unwrap().0
    }

    pub fn get(&self, h: &Hash) -> Option<&BabylonBlock> {
        self.blocks.get(h)
    }

    pub fn contains(&self, h: &Hash) -> bool {
        self.blocks.contains_key(h)
    }

    /// Parent must already be known; the network layer delivers in order.
    pub fn insert(&mut self, block: BabylonBlock) {
        let h = block.hash();
        if self.blocks.contains_key(&h) {
            return;
        }
        assert!(
            self.blocks.contains_key(&block.parent),
            "babylon block delivered before its parent"
        );
        self.blocks.insert(h, block);
    }

    /// Longest chain tip; among equal heights the earliest-received wins.
    pub fn tip(&self) -> Hash {
        let mut best: Option<(&Hash, u64)> = None;
        for (h, b) in &self.blocks {
            let better = match best {
                None => true,
                Some((_, bh)) => b.height > bh,
            };
            if better {
                best = Some((h, b.height));
            }
        }
        *best.unwrap().0
    }

    /// Genesis-to-tip hashes of the chain ending at `tip`.
    pub fn chain_to(&self, tip: Hash) -> Vec<Hash> {
        let mut out = Vec::new();
        let mut cur = tip;
        loop {
            out.push(cur);
            let b = self.blocks.get(&cur).expect("chain walks known blocks");
            if b.height == 0 {
                break;
            }
            cur = b.parent;
        }
        out.reverse();
        out
    }

    pub fn longest_chain(&self) -> Vec<Hash> {
        self.chain_to(self.tip())
    }

    /// The longest chain with the last `depth` blocks dropped (never shorter
    /// than just genesis).
    pub fn deep_prefix(&self, depth: u64) -> Vec<Hash> {
        let mut chain = self.longest_chain();
        let keep = chain.len().saturating_sub(depth as usize).max(1);
        chain.truncate(keep);
        chain
    }

    pub fn height_of_tip(&self) -> u64 {
        self.blocks.get(&self.tip()).unwrap().height
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn child(store: &BlockStore, parent: Hash, nonce: u64) -> BabylonBlock {
        let ph = store.get(&parent).unwrap().height;
        BabylonBlock {
            parent,
            height: ph + 1,
            txs: Vec::new(),
            miner: Miner::Honest,
            nonce,
        }
    }

    #[test]
    fn longest_chain_wins() {
        let mut s = BlockStore::new();
        let g = s.genesis_hash();
        let a1 = child(&s, g, 1);
        let a1h = a1.hash();
        s.insert(a1);
        let b1 = child(&s, g, 2);
        let b1h = b1.hash();
        s.insert(b1);
        // Tie at height 1: first arrival wins.
        assert_eq!(s.tip(), a1h);
        let b2 = child(&s, b1h, 3);
        let b2h = b2.hash();
        s.insert(b2);
        assert_eq!(s.tip(), b2h);
        assert_eq!(s.longest_chain(), vec![g, b1h, b2h]);
    }

    #[test]
    fn deep_prefix_truncates_but_keeps_genesis() {
        let mut s = BlockStore::new();
        let mut cur = s.genesis_hash();
        for i in 0..5 {
            let b = child(&s, cur, i);
            cur = b.hash();
            s.insert(b);
        }
        assert_eq!(s.longest_chain().len(), 6);
        assert_eq!(s.deep_prefix(2).len(), 4);
        assert_eq!(s.deep_prefix(100), vec![s.genesis_hash()]);
    }

    #[test]
    #[should_panic(expected = "before its parent")]
    fn orphan_insert_panics() {
        let mut s = BlockStore::new();
        let orphan = BabylonBlock {
            parent: Hash::digest(b"unknown"),
            height: 7,
            txs: Vec::new(),
            miner: Miner::Adversarial,
            nonce: 0,
        };
        s.insert(orphan);
    }
}
