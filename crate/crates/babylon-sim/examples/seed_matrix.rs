//! Sweep a scenario over seeds and tabulate the verdicts — the same thing
//! the `matrix` subcommand does, as a library call.

use babylon_sim::scenario::{run, ScenarioConfig};

fn main() {
    let scenarios: &[(&str, &str, u64)] = &[
        ("honest", "", 1500),
        ("safety_attack", "s1", 700),
        ("stalling", "slash", 1400),
    ];
    for (scenario, arm, ticks) in scenarios {
        println!("== {scenario}/{arm}");
        println!("{:>5}  {:<14} {:>9} {:>8}", "seed", "verdict", "slashable", "span");
        for seed in 0..10 {
            let mut cfg = ScenarioConfig::default();
            cfg.scenario = (*scenario).into();
            cfg.arm = (*arm).into();
            cfg.max_ticks = *ticks;
            cfg.params.seed = seed;

            let (_, r) = run(&cfg).expect("config is valid");
            println!(
                "{seed:>5}  {:<14} {:>9.2} {:>8}",
                r.verdict, r.slashable_fraction, r.liveness_violation_span
            );
            assert!(!r.failed(), "seed {seed} failed");
        }
        println!();
    }
}
