//! Double-finalization attack in two arms.
//!
//! Arm "s1": the corrupted 2f+1 build a conflicting private chain and
//! release it while PoW checkpointing is intact. Fraud proofs accuse the
//! signer intersection, their withdrawals are denied, verdict S1.
//!
//! Arm "s2": the adversary also controls enough mining power to reorg the
//! PoW chain past k_w/2 before releasing, so the withdrawal slips out
//! first — the escape hatch: slashing is impossible, and the verdict must
//! say so (S2) instead of calling the run a failure.

use babylon_sim::scenario::{run, ScenarioConfig};
use babylon_sim::trace::TraceEvent;

fn main() {
    for (arm, ticks) in [("s1", 700), ("s2", 2000)] {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario = "safety_attack".into();
        cfg.arm = arm.into();
        cfg.max_ticks = ticks;

        let (world, report) = run(&cfg).expect("config is valid");

        println!("=== arm {arm}");
        println!("{}", report.render());

        for e in &world.trace {
            match e {
                TraceEvent::FraudProofSubmitted { node, accused, .. } if node == "v0" => {
                    println!("v0 fraud proof accuses {accused:?}");
                }
                TraceEvent::WithdrawalDecided {
                    node,
                    validator,
                    verdict,
                    ..
                } if node == "v0" => {
                    println!("v0 withdrawal({validator:?}) -> {verdict:?}");
                }
                _ => {}
            }
        }
        match arm {
            "s1" => {
                assert_eq!(report.verdict, "S1");
                assert!(report.slashable_fraction >= 1.0 / 3.0);
            }
            _ => {
                assert!(report.verdict.contains("S2"));
                assert!(!report.babylon_secure_at.k_w_half);
            }
        }
        assert!(report.honest_slashed.is_empty());
        println!();
    }
}
