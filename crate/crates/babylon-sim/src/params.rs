//! Protocol and simulation parameters.

use serde::{Deserialize, Serialize};

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Validator count, must be 3f + 1.
    pub n: u32,
    /// Checkpoint confirmation depth for liveness logic. Even, at least 2.
    pub k_c: u64,
    /// Withdrawal confirmation depth. At least k_c.
    pub k_w: u64,
    /// Network delay bound in ticks. At least 1.
    pub delta: u64,
    /// Per-tick probability that the PoW chain mines a block.
    pub lambda: f64,
    /// Conditional probability that a mined block is adversarial.
    pub beta: f64,
    /// RNG seed. Runs with equal params and seed are byte-identical.
    pub seed: u64,
}

impl ProtocolParams {
    pub fn f(&self) -> u32 {
        (self.n - 1) / 3
    }

    /// Quorum size 2f + 1.
    pub fn quorum(&self) -> usize {
        (2 * self.f() + 1) as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n < 4 || self.n != 3 * self.f() + 1 {
            return Err(format!("n must be 3f+1 with f >= 1, got {}", self.n));
        }
        if self.k_c < 2 || self.k_c % 2 != 0 {
            return Err(format!("k_c must be even and >= 2, got {}", self.k_c));
        }
        if self.k_w < self.k_c {
            return Err(format!("k_w must be >= k_c, got {} < {}", self.k_w, self.k_c));
        }
        if self.delta == 0 {
            return Err("delta must be >= 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.lambda) || !(0.0..=1.0).contains(&self.beta) {
            return Err("lambda and beta must lie in [0, 1]".to_string());
        }
        Ok(())
    }

    /// Initial proposal timeout for round r is 2*delta + delta*r.
    pub fn round_timeout(&self, round: u32) -> u64 {
        2 * self.delta + self.delta * round as u64
    }
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            n: 4,
            k_c: 4,
            k_w: 8,
            delta: 1,
            lambda: 0.08,
            beta: 0.0,
            seed: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_validate() {
        assert!(ProtocolParams::default().validate().is_ok());
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut p = ProtocolParams::default();
        p.n = 5;
        assert!(p.validate().is_err());
        p = ProtocolParams::default();
        p.k_c = 3;
        assert!(p.validate().is_err());
        p = ProtocolParams::default();
        p.k_w = 2;
        assert!(p.validate().is_err());
        p = ProtocolParams::default();
        p.delta = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn quorum_matches_f() {
        let mut p = ProtocolParams::default();
        p.n = 7;
        assert_eq!(p.f(), 2);
        assert_eq!(p.quorum(), 5);
    }
}
