//! Baseline run: honest validators, periodic transactions, checkpoints
//! flowing onto the PoW chain. Prints the verdict and a few trace stats.

use babylon_sim::scenario::{run, ScenarioConfig};
use babylon_sim::trace::TraceEvent;

fn main() {
    let mut cfg = ScenarioConfig::default();
    cfg.scenario = "honest".into();
    cfg.max_ticks = 1500;

    let (world, report) = run(&cfg).expect("config is valid");

    let mut finalized = 0u64;
    let mut checkpoints = 0u64;
    let mut pow_height = 0u64;
    for e in &world.trace {
        match e {
            TraceEvent::Finalized { node, .. } if node == "v0" => finalized += 1,
            TraceEvent::CheckpointIndexed { node, .. } if node == "v0" => checkpoints += 1,
            TraceEvent::BabylonMined { height, .. } => pow_height = (*height).max(pow_height),
            _ => {}
        }
    }

    println!("{}", report.render());
    println!("v0 finalized blocks:     {finalized}");
    println!("v0 indexed checkpoints:  {checkpoints}");
    println!("final PoW height:        {pow_height}");
    assert_eq!(report.verdict, "no violation");
    assert!(report.honest_slashed.is_empty());
}
