//! Simulated cryptography.
//!
//! Hashes are real SHA-256 digests over the canonical encoding, so they are
//! binding and collision-free for any input the simulator actually produces.
//! Signatures are structural records `(signer, digest)`: the simulation never
//! fabricates a signature for an identity it does not control, which gives the
//! unforgeability semantics the protocol logic relies on without real key
//! material.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding::{Decode, DecodeError, Decoder, Encode, Encoder};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Hash(pub [u8; 32]);

// Digests are uniform: the first word is enough for table hashing.
impl std::hash::Hash for Hash {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        state.write_u64(u64::from_le_bytes(self.0[..8].try_into().unwrap()));
    }
}

impl Hash {
    pub fn digest(input: &[u8]) -> Hash {
        let mut h = Sha256::new();
        h.update(input);
        Hash(h.finalize().into())
    }

    pub fn zero() -> Hash {
        Hash([0u8; 32])
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Debug for Hash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash({})", self.short())
    }
}

impl fmt::Display for Hash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for Hash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Hash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("hash must be 32 bytes"))?;
        Ok(Hash(arr))
    }
}

impl Encode for Hash {
    fn encode(&self, enc: &mut Encoder) {
        enc.raw(&self.0);
    }
}

impl Decode for Hash {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let mut arr = [0u8; 32];
        for b in arr.iter_mut() {
            *b = dec.u8()?;
        }
        Ok(Hash(arr))
    }
}

#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize,
)]
pub struct ValidatorId(pub u32);

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl Encode for ValidatorId {
    fn encode(&self, enc: &mut Encoder) {
        enc.u32(self.0);
    }
}

impl Decode for ValidatorId {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(ValidatorId(dec.u32()?))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Signature {
    pub signer: ValidatorId,
    pub digest: Hash,
}

pub fn sign(msg: &[u8], signer: ValidatorId) -> Signature {
    Signature {
        signer,
        digest: Hash::digest(msg),
    }
}

/// Returns the signer iff the signature matches the message.
pub fn verify(msg: &[u8], sig: &Signature) -> Option<ValidatorId> {
    if sig.digest == Hash::digest(msg) {
        Some(sig.signer)
    } else {
        None
    }
}

impl Encode for Signature {
    fn encode(&self, enc: &mut Encoder) {
        self.signer.encode(enc);
        self.digest.encode(enc);
    }
}

impl Decode for Signature {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Signature {
            signer: ValidatorId::decode(dec)?,
            digest: Hash::decode(dec)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_verify_roundtrip() {
        let sig = sign(b"hello", ValidatorId(3));
        assert_eq!(verify(b"hello", &sig), Some(ValidatorId(3)));
    }

    #[test]
    fn verify_rejects_tampered_message() {
        let sig = sign(b"hello", ValidatorId(3));
        assert_eq!(verify(b"hellp", &sig), None);
    }

    #[test]
    fn distinct_signers_distinct_signatures() {
        let a = sign(b"msg", ValidatorId(0));
        let b = sign(b"msg", ValidatorId(1));
        assert_ne!(a, b);
        assert_eq!(verify(b"msg", &a), Some(ValidatorId(0)));
        assert_eq!(verify(b"msg", &b), Some(ValidatorId(1)));
    }
}
