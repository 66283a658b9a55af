//! Long-range / data-withholding attack, A/B.
//!
//! The adversary timestamps a commitment to a forged history early but
//! withholds the data. With availability checks on, miners refuse the
//! dataless commitment and a node joining late converges with the
//! incumbents. The control arm turns the checks off: the forged chain gets
//! the earlier PoW position and the recency rule hands it the canonical
//! slot — which is exactly the attack the checks exist to stop.

use babylon_sim::scenario::{run, ScenarioConfig};
use babylon_sim::trace::TraceEvent;

fn final_tip(trace: &[TraceEvent], who: &str) -> Option<(u64, String)> {
    trace.iter().rev().find_map(|e| match e {
        TraceEvent::CanonicalTip { node, height, block, .. } if node == who => {
            Some((*height, format!("{block}")))
        }
        _ => None,
    })
}

fn main() {
    let mut tips = Vec::new();
    for arm in ["defended", "undefended"] {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario = "long_range".into();
        cfg.arm = arm.into();
        cfg.max_ticks = 600;

        let (world, report) = run(&cfg).expect("config is valid");
        let rejected = world
            .trace
            .iter()
            .any(|e| matches!(e, TraceEvent::CommitmentRejected { .. }));
        let late = final_tip(&world.trace, "late").expect("late node spawned");
        let v0 = final_tip(&world.trace, "v0").unwrap();

        println!("=== arm {arm}");
        println!("{}", report.render());
        println!("dataless commitment rejected by miners: {rejected}");
        println!("v0 tip:   h={} {}", v0.0, &v0.1[..16]);
        println!("late tip: h={} {}", late.0, &late.1[..16]);
        println!();

        assert_eq!(rejected, arm == "defended");
        assert!(report.honest_slashed.is_empty());
        tips.push(late);
    }
    // The whole point: the two arms end on different chains.
    assert_ne!(tips[0].1, tips[1].1, "availability checks changed nothing");
}
