//! Scenario library: named attack setups built on the engine, plus the
//! trace checker that maps a finished run onto the security claims.

pub mod check;

use std::fmt;

use crate::crypto::ValidatorId;
use crate::params::ProtocolParams;
use crate::sim::{Behavior, Script, World};
use crate::types::PosTransaction;

pub use check::{check_trace, ScenarioReport};

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub arm: String,
    pub params: ProtocolParams,
    pub max_ticks: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: "honest".into(),
            arm: String::new(),
            params: ProtocolParams::default(),
            max_ticks: 1500,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}
impl std::error::Error for ConfigError {}

impl ScenarioConfig {
    /// Plain `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", ln + 1)))?;
            cfg.set(key.trim(), val.trim())
                .map_err(|e| ConfigError(format!("line {}: {}", ln + 1, e.0)))?;
        }
        cfg.params
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, val: &str) -> Result<(), ConfigError> {
        let bad = |what: &str| ConfigError(format!("bad value {val:?} for {what}"));
        match key {
            "scenario" => self.scenario = val.to_string(),
            "arm" => self.arm = val.to_string(),
            "max_ticks" => self.max_ticks = val.parse().map_err(|_| bad("max_ticks"))?,
            "n" => self.params.n = val.parse().map_err(|_| bad("n"))?,
            "k_c" => self.params.k_c = val.parse().map_err(|_| bad("k_c"))?,
            "k_w" => self.params.k_w = val.parse().map_err(|_| bad("k_w"))?,
            "delta" => self.params.delta = val.parse().map_err(|_| bad("delta"))?,
            "lambda" => self.params.lambda = val.parse().map_err(|_| bad("lambda"))?,
            "beta" => self.params.beta = val.parse().map_err(|_| bad("beta"))?,
            "seed" => self.params.seed = val.parse().map_err(|_| bad("seed"))?,
            _ => return Err(ConfigError(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}

pub const SCENARIOS: &[&str] = &[
    "honest",
    "safety_attack",
    "long_range",
    "censorship",
    "stalling",
    "inactivity_leak",
];

/// Expected mean ticks for `blocks` PoW blocks.
fn block_ticks(params: &ProtocolParams, blocks: f64) -> u64 {
    (blocks / params.lambda).ceil() as u64
}

pub fn build(cfg: &ScenarioConfig) -> Result<World, ConfigError> {
    let p = &cfg.params;
    let name = if cfg.arm.is_empty() {
        cfg.scenario.clone()
    } else {
        format!("{}/{}", cfg.scenario, cfg.arm)
    };
    let arm_err = || ConfigError(format!("unknown arm {:?} for {}", cfg.arm, cfg.scenario));
    let world = match cfg.scenario.as_str() {
        "honest" => {
            if !cfg.arm.is_empty() {
                return Err(arm_err());
            }
            let mut w = World::new(p.clone(), name, Script::HonestRun { inject_every: 5 });
            w.add_observer("observer");
            w
        }
        "safety_attack" => {
            let babylon_attack = match cfg.arm.as_str() {
                "" | "s1" => false,
                "s2" => true,
                _ => return Err(arm_err()),
            };
            let mut p = p.clone();
            if babylon_attack && p.beta == 0.0 {
                p.beta = 0.7;
            }
            // The corrupted 2f+1 run honest node logic publicly; the script
            // forges their private chain.
            let corrupted: Vec<ValidatorId> =
                (p.n - (2 * p.f() + 1)..p.n).map(ValidatorId).collect();
            let withdraw_tick = block_ticks(&p, 1.5 * p.k_c as f64) + 100;
            let release_tick = withdraw_tick + block_ticks(&p, p.k_w as f64 / 2.0);
            let script = Script::SafetyAttack {
                corrupted: corrupted.clone(),
                fork_height: 1,
                withdraw_tick,
                release_tick,
                babylon_attack,
                requested: false,
                released: false,
                adv_seeded: false,
            };
            let mut w = World::new(p, name, script);
            w.corrupted = corrupted;
            w.add_observer("observer");
            w
        }
        "long_range" => {
            let availability = match cfg.arm.as_str() {
                "" | "defended" => true,
                "undefended" => false,
                _ => return Err(arm_err()),
            };
            let corrupted: Vec<ValidatorId> =
                (p.n - (2 * p.f() + 1)..p.n).map(ValidatorId).collect();
            let submit_tick = block_ticks(p, 1.5);
            let reveal_tick = block_ticks(p, 6.0 * p.k_c as f64);
            let spawn_tick = reveal_tick + block_ticks(p, p.k_c as f64);
            let script = Script::LongRange {
                corrupted: corrupted.clone(),
                attack_len: 3,
                submit_tick,
                reveal_tick,
                spawn_tick,
                attack: None,
                submitted: false,
                revealed: false,
                spawned: false,
            };
            let mut w = World::new(p.clone(), name, script);
            w.corrupted = corrupted;
            w.availability_checks = availability;
            w.add_observer("observer");
            w
        }
        "censorship" => {
            let censors: Vec<ValidatorId> = match cfg.arm.as_str() {
                "" | "minority" => (p.n - p.f()..p.n).map(ValidatorId).collect(),
                "majority" => (p.n - (2 * p.f() + 1)..p.n).map(ValidatorId).collect(),
                _ => return Err(arm_err()),
            };
            let target = PosTransaction::payload(b"the-censored-transfer".to_vec());
            let inject_tick = block_ticks(p, 2.0 * p.k_c as f64);
            let complain_tick = inject_tick + block_ticks(p, 1.0);
            let script = Script::Censorship {
                target: target.clone(),
                inject_tick,
                complain_tick,
                injected: false,
                complained: false,
            };
            let mut w = World::new(p.clone(), name, script);
            w.corrupted = censors.clone();
            for v in &censors {
                let ix = w.nodes.iter().position(|n| n.vid == Some(*v)).unwrap();
                w.nodes[ix].behavior = Behavior::Censor {
                    txs: vec![target.id()],
                };
            }
            w.add_observer("observer");
            w
        }
        "stalling" => {
            let rejoin = match cfg.arm.as_str() {
                "" | "graceful" => true,
                "slash" => false,
                _ => return Err(arm_err()),
            };
            let silent: Vec<ValidatorId> = (p.n - (p.f() + 1)..p.n).map(ValidatorId).collect();
            let from = block_ticks(p, 2.0 * p.k_c as f64);
            let script = Script::Stalling { inject_every: 5 };
            let mut w = World::new(p.clone(), name, script);
            w.corrupted = silent.clone();
            for v in &silent {
                let ix = w.nodes.iter().position(|n| n.vid == Some(*v)).unwrap();
                w.nodes[ix].behavior = Behavior::Silent {
                    from,
                    rejoin_on_babylon: rejoin,
                };
            }
            w.add_observer("observer");
            w
        }
        "inactivity_leak" => {
            let enhanced = match cfg.arm.as_str() {
                "" | "enhanced" => true,
                "unenhanced" => false,
                _ => return Err(arm_err()),
            };
            let deliver_tick = block_ticks(p, 2.0);
            let script = Script::InactivityLeak {
                enhanced,
                deliver_tick,
                delivered: false,
            };
            let mut w = World::new(p.clone(), name, script);
            // Every validator went inactive before the run; the remaining
            // live party is a full node observing a post-leak quorum of f+1.
            for node in &mut w.nodes {
                node.behavior = Behavior::Silent {
                    from: 0,
                    rejoin_on_babylon: false,
                };
            }
            let ix = w.add_observer("observer");
            w.nodes[ix].enhancement = enhanced;
            w.nodes[ix].cert_quorum = (p.f() + 1) as usize;
            w
        }
        other => {
            return Err(ConfigError(format!(
                "unknown scenario {other:?}; known: {}",
                SCENARIOS.join(", ")
            )))
        }
    };
    world.params.validate().map_err(|e| ConfigError(e.to_string()))?;
    Ok(world)
}

/// Run one configured scenario to completion and return (world, report).
pub fn run(cfg: &ScenarioConfig) -> Result<(World, ScenarioReport), ConfigError> {
    let mut world = build(cfg)?;
    world.run(cfg.max_ticks);
    let report = check_trace(&world.trace);
    Ok((world, report))
}
