//! Stall and fallback round, A/B.
//!
//! f+1 validators go silent, consensus stops, and after a 2 k_c PoW gap the
//! honest side posts stalling evidence. The fallback round then runs with
//! messages recorded *on the PoW chain*: proposals in [b, b+k_c), votes in
//! [b+k_c, b+2k_c).
//!
//! Arm "graceful": the silent validators wake up for the round — it
//! finalizes a block and nobody is slashed.
//! Arm "slash": they stay silent — their missing proposals make them
//! slashable in every honest view (L1).

use babylon_sim::scenario::{run, ScenarioConfig};
use babylon_sim::trace::TraceEvent;

fn main() {
    for arm in ["graceful", "slash"] {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario = "stalling".into();
        cfg.arm = arm.into();
        cfg.max_ticks = 1400;

        let (world, report) = run(&cfg).expect("config is valid");
        println!("=== arm {arm}");
        println!("{}", report.render());

        let mut rounds = 0;
        for e in &world.trace {
            match e {
                TraceEvent::BabylonRoundStart { node, babylon_start, height, .. }
                    if node == "v0" =>
                {
                    rounds += 1;
                    println!("round for height {height} anchored at PoW {babylon_start}");
                }
                TraceEvent::BabylonRoundFinalized { node, height, .. } if node == "v0" => {
                    println!("  finalized height {height}");
                }
                TraceEvent::BabylonRoundFailed { node, slashed, .. } if node == "v0" => {
                    println!("  failed; slashed {slashed:?}");
                }
                _ => {}
            }
        }
        println!();

        assert!(rounds > 0, "no fallback round ran");
        match arm {
            "graceful" => {
                assert_eq!(report.verdict, "no violation");
                assert!(report.slashable_common.is_empty());
            }
            _ => {
                assert_eq!(report.verdict, "L1");
            }
        }
        assert!(report.honest_slashed.is_empty());
    }
}
