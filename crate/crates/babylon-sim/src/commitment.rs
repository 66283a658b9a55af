//! Checkpoints and other payloads timestamped onto the PoW chain, plus the
//! validation miners perform on them.
//!
//! A checkpoint of PoS blocks B_1..B_n carries the commitment
//! H(header_1 || .. || header_n || txroot_1 || .. || txroot_n) together with
//! the full data: headers, bodies and the transaction roots listed once more
//! outside the headers. Miners verify that the commitment matches the data
//! and that each listed root commits to the corresponding body. Miners never
//! compare the listed roots against the roots inside the headers; that check
//! needs PoS context and is done by PoS full nodes.

use serde::{Deserialize, Serialize};

use crate::crypto::{Hash, ValidatorId};
use crate::encoding::{Decode, DecodeError, Decoder, Encode, Encoder};
use crate::types::{
    tx_root, ConsensusMessage, ConsensusMsgKind, PosBlock, PosBlockHeader, PosTransaction,
};

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Checkpoint {
    pub headers: Vec<PosBlockHeader>,
    pub bodies: Vec<Vec<PosTransaction>>,
    /// Transaction roots carried separately from the headers.
    pub txroots: Vec<Hash>,
}

struct Body(Vec<PosTransaction>);

impl Encode for Body {
    fn encode(&self, enc: &mut Encoder) {
        enc.seq(&self.0);
    }
}

impl Checkpoint {
    pub fn for_blocks(blocks: &[PosBlock]) -> Checkpoint {
        Checkpoint {
            headers: blocks.iter().map(|b| b.header.clone()).collect(),
            bodies: blocks.iter().map(|b| b.body.clone()).collect(),
            txroots: blocks.iter().map(|b| tx_root(&b.body)).collect(),
        }
    }

    /// The hash miners timestamp: all headers, then all separate roots.
    pub fn commitment(&self) -> Hash {
        let mut enc = Encoder::new();
        for h in &self.headers {
            enc.raw(&h.encoded());
        }
        for r in &self.txroots {
            enc.raw(&r.0);
        }
        Hash::digest(&enc.finish())
    }

    pub fn shape_ok(&self) -> bool {
        !self.headers.is_empty()
            && self.headers.len() == self.bodies.len()
            && self.headers.len() == self.txroots.len()
    }

    /// Do the separate roots commit to the bodies? Miner-checkable.
    pub fn roots_match_bodies(&self) -> bool {
        self.txroots
            .iter()
            .zip(&self.bodies)
            .all(|(r, b)| *r == tx_root(b))
    }

    /// Do the separate roots equal the roots inside the headers? Only PoS
    /// full nodes check this.
    pub fn roots_match_headers(&self) -> bool {
        self.txroots
            .iter()
            .zip(&self.headers)
            .all(|(r, h)| *r == h.txroot)
    }

    pub fn block_hashes(&self) -> Vec<Hash> {
        self.headers.iter().map(|h| h.hash()).collect()
    }
}

impl Encode for Checkpoint {
    fn encode(&self, enc: &mut Encoder) {
        enc.seq(&self.headers);
        let bodies: Vec<Body> = self.bodies.iter().map(|b| Body(b.clone())).collect();
        enc.seq(&bodies);
        enc.seq(&self.txroots);
    }
}

impl Decode for Checkpoint {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let headers = dec.seq()?;
        let n = dec.u64()? as usize;
        let mut bodies = Vec::with_capacity(n);
        for _ in 0..n {
            bodies.push(dec.seq()?);
        }
        let txroots = dec.seq()?;
        Ok(Checkpoint {
            headers,
            bodies,
            txroots,
        })
    }
}

/// Checkpoints of two conflicting finalized blocks plus the signed messages
/// that implicate the accused validators.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FraudProof {
    pub checkpoint_a: Checkpoint,
    pub checkpoint_b: Checkpoint,
    pub evidence: Vec<ConsensusMessage>,
    pub accused: Vec<ValidatorId>,
}

impl Encode for FraudProof {
    fn encode(&self, enc: &mut Encoder) {
        self.checkpoint_a.encode(enc);
        self.checkpoint_b.encode(enc);
        enc.seq(&self.evidence);
        enc.seq(&self.accused);
    }
}

impl Decode for FraudProof {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(FraudProof {
            checkpoint_a: Checkpoint::decode(dec)?,
            checkpoint_b: Checkpoint::decode(dec)?,
            evidence: dec.seq()?,
            accused: dec.seq()?,
        })
    }
}

/// Claim that no block at `height` has been checkpointed for too long. The
/// inner checkpoint covers the finalized chain below `height` so late joiners
/// can verify the claim's starting point.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StallingEvidence {
    pub height: u64,
    pub checkpoint: Checkpoint,
}

impl Encode for StallingEvidence {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.height);
        self.checkpoint.encode(enc);
    }
}

impl Decode for StallingEvidence {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(StallingEvidence {
            height: dec.u64()?,
            checkpoint: Checkpoint::decode(dec)?,
        })
    }
}

/// A consensus message of the fallback round run on the PoW chain. Proposals
/// carry the full proposed block; proposals re-proposing a locked value also
/// carry the prevotes that justify it.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OnBabylonMsg {
    pub msg: ConsensusMessage,
    pub block: Option<PosBlock>,
    pub prevote_justification: Vec<ConsensusMessage>,
}

impl Encode for OnBabylonMsg {
    fn encode(&self, enc: &mut Encoder) {
        self.msg.encode(enc);
        enc.opt(&self.block);
        enc.seq(&self.prevote_justification);
    }
}

impl Decode for OnBabylonMsg {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(OnBabylonMsg {
            msg: ConsensusMessage::decode(dec)?,
            block: dec.opt()?,
            prevote_justification: dec.seq()?,
        })
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum BabylonPayload {
    Checkpoint(Checkpoint),
    /// Transactions a complainant says the validator set refuses to include.
    CensoredTxs(Vec<PosTransaction>),
    FraudProof(FraudProof),
    StallingEvidence(StallingEvidence),
    OnBabylonMsg(OnBabylonMsg),
}

impl BabylonPayload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            BabylonPayload::Checkpoint(_) => PayloadKind::Checkpoint,
            BabylonPayload::CensoredTxs(_) => PayloadKind::CensoredTxs,
            BabylonPayload::FraudProof(_) => PayloadKind::FraudProof,
            BabylonPayload::StallingEvidence(_) => PayloadKind::StallingEvidence,
            BabylonPayload::OnBabylonMsg(_) => PayloadKind::OnBabylonMsg,
        }
    }

    /// The hash that goes on the PoW chain for this payload.
    pub fn commitment(&self) -> Hash {
        match self {
            BabylonPayload::Checkpoint(c) => c.commitment(),
            other => Hash::digest(&other.encoded()),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Checkpoint,
    CensoredTxs,
    FraudProof,
    StallingEvidence,
    OnBabylonMsg,
}

impl Encode for BabylonPayload {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            BabylonPayload::Checkpoint(c) => {
                enc.u8(0);
                c.encode(enc);
            }
            BabylonPayload::CensoredTxs(txs) => {
                enc.u8(1);
                enc.seq(txs);
            }
            BabylonPayload::FraudProof(fp) => {
                enc.u8(2);
                fp.encode(enc);
            }
            BabylonPayload::StallingEvidence(se) => {
                enc.u8(3);
                se.encode(enc);
            }
            BabylonPayload::OnBabylonMsg(m) => {
                enc.u8(4);
                m.encode(enc);
            }
        }
    }
}

impl Decode for BabylonPayload {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(BabylonPayload::Checkpoint(Checkpoint::decode(dec)?)),
            1 => Ok(BabylonPayload::CensoredTxs(dec.seq()?)),
            2 => Ok(BabylonPayload::FraudProof(FraudProof::decode(dec)?)),
            3 => Ok(BabylonPayload::StallingEvidence(StallingEvidence::decode(
                dec,
            )?)),
            4 => Ok(BabylonPayload::OnBabylonMsg(OnBabylonMsg::decode(dec)?)),
            t => Err(DecodeError::BadTag(t)),
        }
    }
}

/// A transaction submitted to miners. The commitment is what ends up in the
/// PoW block; `payload` models data availability. A submission without its
/// payload is how a data-withholding attack looks to an honest miner.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BabylonTx {
    pub commitment: Hash,
    pub payload: Option<BabylonPayload>,
    /// `None` for observers and external complainants.
    pub submitter: Option<ValidatorId>,
}

impl BabylonTx {
    pub fn with_data(payload: BabylonPayload, submitter: Option<ValidatorId>) -> BabylonTx {
        BabylonTx {
            commitment: payload.commitment(),
            payload: Some(payload),
            submitter,
        }
    }

    pub fn id(&self) -> Hash {
        let mut enc = Encoder::new();
        self.commitment.encode(&mut enc);
        enc.opt(&self.payload);
        enc.opt(&self.submitter);
        Hash::digest(&enc.finish())
    }
}

/// Why an honest miner refused to timestamp a submission.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinerReject {
    DataMissing,
    Malformed,
    HashMismatch,
    TxrootMismatch,
}

fn prevotes_justify(
    justification: &[ConsensusMessage],
    value: Hash,
    height: u64,
    vr: i64,
    quorum: usize,
) -> bool {
    let mut signers: Vec<ValidatorId> = Vec::new();
    for m in justification {
        if m.kind != ConsensusMsgKind::Prevote
            || m.height != height
            || m.round.as_regular().map(i64::from) != Some(vr)
            || m.value != Some(value)
            || !m.verify()
            || signers.contains(&m.signer)
        {
            return false;
        }
        signers.push(m.signer);
    }
    signers.len() >= quorum
}

fn miner_check_checkpoint(c: &Checkpoint, commitment: Hash) -> Result<(), MinerReject> {
    if !c.shape_ok() {
        return Err(MinerReject::Malformed);
    }
    if c.commitment() != commitment {
        return Err(MinerReject::HashMismatch);
    }
    if !c.roots_match_bodies() {
        return Err(MinerReject::TxrootMismatch);
    }
    Ok(())
}

/// The full check an honest miner runs before including a submission.
pub fn miner_validate(tx: &BabylonTx, quorum: usize) -> Result<(), MinerReject> {
    let payload = tx.payload.as_ref().ok_or(MinerReject::DataMissing)?;
    if payload.commitment() != tx.commitment {
        return Err(MinerReject::HashMismatch);
    }
    match payload {
        BabylonPayload::Checkpoint(c) => miner_check_checkpoint(c, tx.commitment),
        BabylonPayload::CensoredTxs(txs) => {
            if txs.is_empty() {
                Err(MinerReject::Malformed)
            } else {
                Ok(())
            }
        }
        BabylonPayload::FraudProof(fp) => {
            miner_check_checkpoint(&fp.checkpoint_a, fp.checkpoint_a.commitment())?;
            miner_check_checkpoint(&fp.checkpoint_b, fp.checkpoint_b.commitment())?;
            if fp.accused.is_empty() || !fp.evidence.iter().all(|m| m.verify()) {
                return Err(MinerReject::Malformed);
            }
            Ok(())
        }
        BabylonPayload::StallingEvidence(se) => {
            miner_check_checkpoint(&se.checkpoint, se.checkpoint.commitment())
        }
        BabylonPayload::OnBabylonMsg(m) => {
            if !m.msg.verify() {
                return Err(MinerReject::Malformed);
            }
            if let Some(b) = &m.block {
                if !b.well_formed() {
                    return Err(MinerReject::Malformed);
                }
            }
            if m.msg.kind == ConsensusMsgKind::Proposal && m.msg.vr >= 0 {
                let value = match m.msg.value {
                    Some(v) => v,
                    None => return Err(MinerReject::Malformed),
                };
                if !prevotes_justify(
                    &m.prevote_justification,
                    value,
                    m.msg.height,
                    m.msg.vr,
                    quorum,
                ) {
                    return Err(MinerReject::Malformed);
                }
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Round;

    fn block(height: u64, parent: Hash, txs: Vec<PosTransaction>) -> PosBlock {
        let header = PosBlockHeader {
            parent,
            height,
            txroot: tx_root(&txs),
            proposer: ValidatorId((height % 4) as u32),
            round: Round::Regular(0),
        };
        PosBlock {
            header,
            body: txs,
            justification: None,
        }
    }

    fn chain(len: u64) -> Vec<PosBlock> {
        let mut out = vec![PosBlock::genesis()];
        for h in 1..=len {
            let parent = out.last().unwrap().hash();
            out.push(block(
                h,
                parent,
                vec![PosTransaction::payload(h.to_le_bytes().to_vec())],
            ));
        }
        out
    }

    // Independent recomputation of the commitment: plain concatenation of the
    // header encodings followed by the raw 32-byte roots, hashed once.
    fn commitment_oracle(c: &Checkpoint) -> Hash {
        let mut bytes = Vec::new();
        for h in &c.headers {
            bytes.extend_from_slice(&h.encoded());
        }
        for r in &c.txroots {
            bytes.extend_from_slice(&r.0);
        }
        Hash::digest(&bytes)
    }

    #[test]
    fn commitment_matches_oracle() {
        let c = Checkpoint::for_blocks(&chain(3));
        assert_eq!(c.commitment(), commitment_oracle(&c));
    }

    #[test]
    fn commitment_sensitive_to_every_part() {
        let base = Checkpoint::for_blocks(&chain(3));
        let mut h = base.clone();
        h.headers[1].height += 1;
        assert_ne!(h.commitment(), base.commitment());
        let mut r = base.clone();
        r.txroots[2] = Hash::digest(b"other");
        assert_ne!(r.commitment(), base.commitment());
        // Bodies are not part of the commitment; only the separate roots are.
        let mut b = base.clone();
        b.bodies[0].push(PosTransaction::payload(b"extra".to_vec()));
        assert_eq!(b.commitment(), base.commitment());
    }

    #[test]
    fn miner_accepts_honest_checkpoint() {
        let c = Checkpoint::for_blocks(&chain(2));
        let tx = BabylonTx::with_data(BabylonPayload::Checkpoint(c), Some(ValidatorId(0)));
        assert_eq!(miner_validate(&tx, 3), Ok(()));
    }

    #[test]
    fn miner_rejects_missing_data() {
        let c = Checkpoint::for_blocks(&chain(2));
        let tx = BabylonTx {
            commitment: c.commitment(),
            payload: None,
            submitter: None,
        };
        assert_eq!(miner_validate(&tx, 3), Err(MinerReject::DataMissing));
    }

    #[test]
    fn miner_rejects_body_not_matching_root() {
        let mut c = Checkpoint::for_blocks(&chain(2));
        c.bodies[1].push(PosTransaction::payload(b"smuggled".to_vec()));
        let tx = BabylonTx {
            commitment: c.commitment(),
            payload: Some(BabylonPayload::Checkpoint(c)),
            submitter: None,
        };
        assert_eq!(miner_validate(&tx, 3), Err(MinerReject::TxrootMismatch));
    }

    #[test]
    fn miner_rejects_commitment_mismatch() {
        let c = Checkpoint::for_blocks(&chain(2));
        let tx = BabylonTx {
            commitment: Hash::digest(b"wrong"),
            payload: Some(BabylonPayload::Checkpoint(c)),
            submitter: None,
        };
        assert_eq!(miner_validate(&tx, 3), Err(MinerReject::HashMismatch));
    }

    #[test]
    fn miner_cannot_see_header_root_mismatch() {
        // The separate roots match the bodies but disagree with the roots
        // inside the headers. Miners accept; PoS full nodes do not.
        let blocks = chain(2);
        let mut c = Checkpoint::for_blocks(&blocks);
        let fake_body = vec![PosTransaction::payload(b"swapped".to_vec())];
        c.bodies[1] = fake_body.clone();
        c.txroots[1] = tx_root(&fake_body);
        let tx = BabylonTx {
            commitment: c.commitment(),
            payload: Some(BabylonPayload::Checkpoint(c.clone())),
            submitter: None,
        };
        assert_eq!(miner_validate(&tx, 3), Ok(()));
        assert!(!c.roots_match_headers());
    }

    #[test]
    fn payload_roundtrip() {
        let c = Checkpoint::for_blocks(&chain(2));
        let payloads = vec![
            BabylonPayload::Checkpoint(c.clone()),
            BabylonPayload::CensoredTxs(vec![PosTransaction::payload(b"t".to_vec())]),
            BabylonPayload::StallingEvidence(StallingEvidence {
                height: 3,
                checkpoint: c,
            }),
        ];
        for p in payloads {
            let back = BabylonPayload::decoded(&p.encoded()).unwrap();
            assert_eq!(back, p);
        }
    }
}
