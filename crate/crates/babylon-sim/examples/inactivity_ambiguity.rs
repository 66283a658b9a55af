//! Why checkpointing, and not inactivity-leak slashing, fixes long-range
//! ambiguity. A late joiner is handed two well-formed finalized histories
//! certified by disjoint halves of the validator set.
//!
//! Unenhanced arm: no PoW anchor — the two histories are indistinguishable
//! and the node records ambiguity.
//! Enhanced arm: one history is checkpointed; the recency rule picks it and
//! nobody honest is slashed.

use babylon_sim::scenario::{run, ScenarioConfig};

fn main() {
    for arm in ["unenhanced", "enhanced"] {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario = "inactivity_leak".into();
        cfg.arm = arm.into();
        cfg.max_ticks = 300;

        let (_, report) = run(&cfg).expect("config is valid");
        println!("=== arm {arm}");
        println!("{}", report.render());
        println!();

        assert_eq!(report.ambiguity, arm == "unenhanced");
        assert!(report.honest_slashed.is_empty());
    }
}
