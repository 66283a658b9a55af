//! Deterministic simulator for a Tendermint-style proof-of-stake chain whose
//! accountability guarantees are enforced by timestamping checkpoints onto a
//! simulated proof-of-work chain.
//!
//! The crate models two coupled ledgers. The PoS chain runs Tendermint among
//! n = 3f + 1 validators. Every honest node periodically commits checkpoints
//! of newly finalized PoS blocks, together with the full block data, into the
//! PoW chain. Miners verify that the data matches the commitment but nothing
//! about PoS semantics. On top of the checkpoints sit the accountability
//! mechanisms: fraud proofs for safety violations, censorship complaints and
//! stalling evidence for liveness violations, and a fallback consensus round
//! run entirely on the PoW chain when the validator set stalls.
//!
//! The simulation is single-threaded and fully deterministic: equal
//! parameters and seed produce byte-identical event traces.

pub mod babylon;
pub mod commitment;
pub mod crypto;
pub mod encoding;
pub mod params;
pub mod scenario;
pub mod sim;
pub mod tendermint;
pub mod trace;
pub mod types;
pub mod view;
