//! Shared domain types for the PoS chain, the timestamping PoW chain and the
//! consensus messages exchanged between them.

use serde::{Deserialize, Serialize};

use crate::crypto::{sign, Hash, Signature, ValidatorId};
use crate::encoding::{Decode, DecodeError, Decoder, Encode, Encoder};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum ValidatorStatus {
    Active,
    Passive,
    Withdrawn,
    Slashed,
}

#[derive(Clone, Debug)]
pub struct ValidatorRecord {
    pub id: ValidatorId,
    pub status: ValidatorStatus,
    pub stake: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum PosTxKind {
    Payload,
    WithdrawalRequest,
    WithdrawalTransaction,
    RewardTransaction,
}

impl PosTxKind {
    fn tag(self) -> u8 {
        match self {
            PosTxKind::Payload => 0,
            PosTxKind::WithdrawalRequest => 1,
            PosTxKind::WithdrawalTransaction => 2,
            PosTxKind::RewardTransaction => 3,
        }
    }

    fn from_tag(t: u8) -> Result<Self, DecodeError> {
        Ok(match t {
            0 => PosTxKind::Payload,
            1 => PosTxKind::WithdrawalRequest,
            2 => PosTxKind::WithdrawalTransaction,
            3 => PosTxKind::RewardTransaction,
            _ => return Err(DecodeError::BadTag(t)),
        })
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PosTransaction {
    pub kind: PosTxKind,
    /// `None` for transactions injected by the environment.
    pub sender: Option<ValidatorId>,
    pub body: Vec<u8>,
}

impl PosTransaction {
    pub fn payload(body: impl Into<Vec<u8>>) -> Self {
        PosTransaction {
            kind: PosTxKind::Payload,
            sender: None,
            body: body.into(),
        }
    }

    pub fn withdrawal_request(v: ValidatorId) -> Self {
        PosTransaction {
            kind: PosTxKind::WithdrawalRequest,
            sender: Some(v),
            body: Vec::new(),
        }
    }

    /// `reference` is the hash of the Babylon block that made the request deep
    /// enough in the sender's view.
    pub fn withdrawal_transaction(v: ValidatorId, reference: Hash) -> Self {
        PosTransaction {
            kind: PosTxKind::WithdrawalTransaction,
            sender: Some(v),
            body: reference.0.to_vec(),
        }
    }

    pub fn id(&self) -> Hash {
        Hash::digest(&self.encoded())
    }
}

impl Encode for PosTransaction {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.kind.tag());
        enc.opt(&self.sender);
        enc.bytes(&self.body);
    }
}

impl Decode for PosTransaction {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(PosTransaction {
            kind: PosTxKind::from_tag(dec.u8()?)?,
            sender: dec.opt()?,
            body: dec.bytes()?,
        })
    }
}

/// Round number, including the sentinel for rounds recorded on the PoW chain.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Round {
    Regular(u32),
    /// The special round whose messages live on the Babylon chain.
    Babylon,
}

impl Round {
    pub fn as_regular(self) -> Option<u32> {
        match self {
            Round::Regular(r) => Some(r),
            Round::Babylon => None,
        }
    }
}

impl Encode for Round {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Round::Regular(r) => {
                enc.u8(0);
                enc.u32(*r);
            }
            Round::Babylon => enc.u8(1),
        }
    }
}

impl Decode for Round {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(Round::Regular(dec.u32()?)),
            1 => Ok(Round::Babylon),
            t => Err(DecodeError::BadTag(t)),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PosBlockHeader {
    pub parent: Hash,
    pub height: u64,
    pub txroot: Hash,
    pub proposer: ValidatorId,
    pub round: Round,
}

impl PosBlockHeader {
    pub fn hash(&self) -> Hash {
        Hash::digest(&self.encoded())
    }
}

impl Encode for PosBlockHeader {
    fn encode(&self, enc: &mut Encoder) {
        self.parent.encode(enc);
        enc.u64(self.height);
        self.txroot.encode(enc);
        self.proposer.encode(enc);
        self.round.encode(enc);
    }
}

impl Decode for PosBlockHeader {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(PosBlockHeader {
            parent: Hash::decode(dec)?,
            height: dec.u64()?,
            txroot: Hash::decode(dec)?,
            proposer: ValidatorId::decode(dec)?,
            round: Round::decode(dec)?,
        })
    }
}

/// Transaction root: digest of the canonical encoding of the full list.
/// Roots are always recomputed from full bodies; there is no Merkle tree.
pub fn tx_root(txs: &[PosTransaction]) -> Hash {
    let mut enc = Encoder::new();
    enc.seq(txs);
    Hash::digest(&enc.finish())
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PosBlock {
    pub header: PosBlockHeader,
    pub body: Vec<PosTransaction>,
    /// Certificate finalizing the parent block, carried in the child.
    pub justification: Option<FinalizationCertificate>,
}

impl PosBlock {
    pub fn hash(&self) -> Hash {
        self.header.hash()
    }

    pub fn genesis() -> PosBlock {
        let header = PosBlockHeader {
            parent: Hash::zero(),
            height: 0,
            txroot: tx_root(&[]),
            proposer: ValidatorId(0),
            round: Round::Regular(0),
        };
        PosBlock {
            header,
            body: Vec::new(),
            justification: None,
        }
    }

    pub fn well_formed(&self) -> bool {
        self.header.txroot == tx_root(&self.body)
    }
}

impl Encode for PosBlock {
    fn encode(&self, enc: &mut Encoder) {
        self.header.encode(enc);
        enc.seq(&self.body);
        enc.opt(&self.justification);
    }
}

impl Decode for PosBlock {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(PosBlock {
            header: PosBlockHeader::decode(dec)?,
            body: dec.seq()?,
            justification: dec.opt()?,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum ConsensusMsgKind {
    Proposal,
    Prevote,
    Precommit,
}

impl ConsensusMsgKind {
    fn tag(self) -> u8 {
        match self {
            ConsensusMsgKind::Proposal => 0,
            ConsensusMsgKind::Prevote => 1,
            ConsensusMsgKind::Precommit => 2,
        }
    }

    fn from_tag(t: u8) -> Result<Self, DecodeError> {
        Ok(match t {
            0 => ConsensusMsgKind::Proposal,
            1 => ConsensusMsgKind::Prevote,
            2 => ConsensusMsgKind::Precommit,
            _ => return Err(DecodeError::BadTag(t)),
        })
    }
}

/// A signed Tendermint message. `value` is `None` for nil votes; `vr` is only
/// meaningful on proposals (−1 when the proposer holds no valid value).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ConsensusMessage {
    pub kind: ConsensusMsgKind,
    pub height: u64,
    pub round: Round,
    pub value: Option<Hash>,
    pub vr: i64,
    pub signer: ValidatorId,
    pub sig: Signature,
}

impl ConsensusMessage {
    fn signing_bytes(
        kind: ConsensusMsgKind,
        height: u64,
        round: Round,
        value: &Option<Hash>,
        vr: i64,
        signer: ValidatorId,
    ) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u8(kind.tag());
        enc.u64(height);
        round.encode(&mut enc);
        enc.opt(value);
        enc.i64(vr);
        signer.encode(&mut enc);
        enc.finish()
    }

    pub fn signed(
        kind: ConsensusMsgKind,
        height: u64,
        round: Round,
        value: Option<Hash>,
        vr: i64,
        signer: ValidatorId,
    ) -> Self {
        let bytes = Self::signing_bytes(kind, height, round, &value, vr, signer);
        ConsensusMessage {
            kind,
            height,
            round,
            value,
            vr,
            signer,
            sig: sign(&bytes, signer),
        }
    }

    pub fn verify(&self) -> bool {
        let bytes = Self::signing_bytes(
            self.kind,
            self.height,
            self.round,
            &self.value,
            self.vr,
            self.signer,
        );
        crate::crypto::verify(&bytes, &self.sig) == Some(self.signer)
    }
}

impl Encode for ConsensusMessage {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.kind.tag());
        enc.u64(self.height);
        self.round.encode(enc);
        enc.opt(&self.value);
        enc.i64(self.vr);
        self.signer.encode(enc);
        self.sig.encode(enc);
    }
}

impl Decode for ConsensusMessage {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(ConsensusMessage {
            kind: ConsensusMsgKind::from_tag(dec.u8()?)?,
            height: dec.u64()?,
            round: Round::decode(dec)?,
            value: dec.opt()?,
            vr: dec.i64()?,
            signer: ValidatorId::decode(dec)?,
            sig: Signature::decode(dec)?,
        })
    }
}

/// 2f+1 unique-signer precommits for one block at one height and round.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FinalizationCertificate {
    pub block_hash: Hash,
    pub height: u64,
    pub round: Round,
    pub precommits: Vec<ConsensusMessage>,
}

impl FinalizationCertificate {
    /// Structural validity: enough unique signers, all precommitting this
    /// block at this height and round, all signatures good.
    pub fn valid(&self, quorum: usize) -> bool {
        let mut signers: Vec<ValidatorId> = Vec::new();
        for m in &self.precommits {
            if m.kind != ConsensusMsgKind::Precommit
                || m.height != self.height
                || m.round != self.round
                || m.value != Some(self.block_hash)
                || !m.verify()
            {
                return false;
            }
            if signers.contains(&m.signer) {
                return false;
            }
            signers.push(m.signer);
        }
        signers.len() >= quorum
    }

    pub fn signers(&self) -> Vec<ValidatorId> {
        let mut s: Vec<ValidatorId> = self.precommits.iter().map(|m| m.signer).collect();
        s.sort();
        s.dedup();
        s
    }
}

impl Encode for FinalizationCertificate {
    fn encode(&self, enc: &mut Encoder) {
        self.block_hash.encode(enc);
        enc.u64(self.height);
        self.round.encode(enc);
        enc.seq(&self.precommits);
    }
}

impl Decode for FinalizationCertificate {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(FinalizationCertificate {
            block_hash: Hash::decode(dec)?,
            height: dec.u64()?,
            round: Round::decode(dec)?,
            precommits: dec.seq()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pos_tx_id_is_hash_of_encoding() {
        let tx = PosTransaction::payload(b"abc".to_vec());
        assert_eq!(tx.id(), Hash::digest(&tx.encoded()));
    }

    #[test]
    fn genesis_is_well_formed() {
        assert!(PosBlock::genesis().well_formed());
    }

    #[test]
    fn consensus_message_sign_verify() {
        let m = ConsensusMessage::signed(
            ConsensusMsgKind::Prevote,
            3,
            Round::Regular(1),
            Some(Hash::digest(b"x")),
            -1,
            ValidatorId(2),
        );
        assert!(m.verify());
        let mut bad = m.clone();
        bad.height = 4;
        assert!(!bad.verify());
    }

    #[test]
    fn cert_rejects_duplicate_signers() {
        let b = Hash::digest(b"blk");
        let pc = ConsensusMessage::signed(
            ConsensusMsgKind::Precommit,
            1,
            Round::Regular(0),
            Some(b),
            -1,
            ValidatorId(0),
        );
        let cert = FinalizationCertificate {
            block_hash: b,
            height: 1,
            round: Round::Regular(0),
            precommits: vec![pc.clone(), pc.clone(), pc],
        };
        assert!(!cert.valid(3));
    }
}
