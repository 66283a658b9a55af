//! Censorship complaints, A/B.
//!
//! Minority arm: f validators drop a target tx; a full node posts a
//! complaint carrying the tx data. Honest validators then vote only for
//! blocks that include it, and it lands within the 13 k_c liveness bound.
//!
//! Majority arm: 2f+1 censors can finalize without honest votes — the tx
//! never lands, but every block finalized after the 2 k_c grace mark is a
//! censoring block and its proposer and signers become slashable (L1).

use babylon_sim::scenario::{run, ScenarioConfig};
use babylon_sim::trace::TraceEvent;

fn main() {
    for arm in ["minority", "majority"] {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario = "censorship".into();
        cfg.arm = arm.into();
        cfg.max_ticks = 1000;

        let (world, report) = run(&cfg).expect("config is valid");
        println!("=== arm {arm}");
        println!("{}", report.render());

        if let Some(TraceEvent::CensorshipDetected { accused, .. }) = world
            .trace
            .iter()
            .find(|e| matches!(e, TraceEvent::CensorshipDetected { node, .. } if node == "v0"))
        {
            println!("v0 first censoring block accused {accused:?}");
        }
        println!();

        match arm {
            "minority" => {
                assert_eq!(report.verdict, "no violation");
                let lat = report.censored_tx_latency.expect("tx included");
                assert!(lat <= 13 * 4, "latency {lat} blew the bound");
            }
            _ => {
                assert_eq!(report.verdict, "L1");
                assert!(report.slashable_fraction >= 1.0 / 3.0);
            }
        }
        assert!(report.honest_slashed.is_empty());
    }
}
