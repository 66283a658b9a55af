//! End-to-end acceptance checks over the scenario library. Each test prints
//! one pass/fail line; run with `--nocapture` to see them all.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use babylon_sim::crypto::{Hash, ValidatorId};
use babylon_sim::scenario::{run, ScenarioConfig, ScenarioReport};
use babylon_sim::tendermint::extract_fraud_proof;
use babylon_sim::trace::TraceEvent;
use babylon_sim::types::{
    tx_root, ConsensusMessage, ConsensusMsgKind, FinalizationCertificate, PosBlock,
    PosBlockHeader, PosTransaction, Round,
};
use babylon_sim::view::{compare_chains, fork_choice, BabylonPos, WithdrawalVerdict};

const K_C: u64 = 4;
const N: u32 = 4;
const F: u32 = 1;
const QUORUM: u64 = 3;

struct RunRec {
    scenario: &'static str,
    arm: &'static str,
    seed: u64,
    report: ScenarioReport,
    trace: Option<Vec<TraceEvent>>,
}

/// (scenario, arm, max_ticks, seeds, keep_trace)
const MATRIX: &[(&str, &str, u64, u64, bool)] = &[
    ("honest", "", 1500, 20, true),
    ("safety_attack", "s1", 700, 20, true),
    ("safety_attack", "s2", 2000, 20, true),
    ("long_range", "defended", 600, 20, true),
    ("long_range", "undefended", 600, 20, true),
    ("censorship", "minority", 1000, 50, true),
    ("censorship", "majority", 1000, 20, false),
    ("stalling", "graceful", 1400, 20, false),
    ("stalling", "slash", 1400, 20, false),
    ("inactivity_leak", "unenhanced", 300, 20, false),
    ("inactivity_leak", "enhanced", 300, 20, false),
];

fn one_run(scenario: &str, arm: &str, ticks: u64, seed: u64) -> (ScenarioReport, Vec<TraceEvent>) {
    let mut cfg = ScenarioConfig::default();
    cfg.scenario = scenario.into();
    cfg.arm = arm.into();
    cfg.max_ticks = ticks;
    cfg.params.seed = seed;
    let (world, report) = run(&cfg).expect("matrix config is valid");
    (report, world.trace)
}

fn matrix() -> &'static Vec<RunRec> {
    static M: OnceLock<Vec<RunRec>> = OnceLock::new();
    M.get_or_init(|| {
        std::thread::scope(|s| {
            let handles: Vec<_> = MATRIX
                .iter()
                .map(|&(scenario, arm, ticks, seeds, keep)| {
                    s.spawn(move || {
                        (0..seeds)
                            .map(|seed| {
                                let (report, trace) = one_run(scenario, arm, ticks, seed);
                                RunRec {
                                    scenario,
                                    arm,
                                    seed,
                                    report,
                                    trace: keep.then_some(trace),
                                }
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
        })
    })
}

fn runs(scenario: &str, arm: &str) -> Vec<&'static RunRec> {
    matrix()
        .iter()
        .filter(|r| r.scenario == scenario && r.arm == arm)
        .collect()
}

fn verdict(n: u32, desc: &str, ok: bool, detail: String) {
    println!(
        "criterion {n:>2}: {} — {desc} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} failed: {desc}: {detail}");
}

fn honest_view_names(trace: &[TraceEvent]) -> BTreeSet<String> {
    let corrupted: BTreeSet<String> = match trace.first() {
        Some(TraceEvent::Meta {
            corrupted_validators,
            ..
        }) => corrupted_validators.iter().map(|v| format!("{v}")).collect(),
        _ => BTreeSet::new(),
    };
    let mut names = BTreeSet::new();
    for e in trace {
        for n in ["v0", "v1", "v2", "v3", "observer", "late"] {
            if event_mentions(e, n) {
                names.insert(n.to_string());
            }
        }
    }
    names.retain(|n| !corrupted.contains(n));
    names
}

fn event_mentions(e: &TraceEvent, name: &str) -> bool {
    use TraceEvent::*;
    match e {
        Finalized { node, .. }
        | CanonicalTip { node, .. }
        | CheckpointIndexed { node, .. }
        | CheckpointEmitted { node, .. }
        | WithdrawalDecided { node, .. }
        | LateNodeSpawn { node, .. } => node == name,
        _ => false,
    }
}

fn final_tip(trace: &[TraceEvent], who: &str) -> Option<Hash> {
    trace.iter().rev().find_map(|e| match e {
        TraceEvent::CanonicalTip { node, block, .. } if node == who => Some(*block),
        _ => None,
    })
}

#[test]
fn criterion_01_slashable_safety() {
    let mut checked = 0;
    for r in runs("safety_attack", "s1") {
        if !r.report.babylon_secure_at.k_w_half {
            continue;
        }
        checked += 1;
        assert!(
            r.report.slashable_fraction >= 1.0 / 3.0,
            "seed {}: slashable {:.2}",
            r.seed,
            r.report.slashable_fraction
        );
        let trace = r.trace.as_ref().unwrap();
        let honest = honest_view_names(trace);
        let accused: BTreeSet<ValidatorId> = r.report.slashable_common.iter().copied().collect();
        for e in trace {
            if let TraceEvent::WithdrawalDecided {
                node,
                validator,
                verdict: WithdrawalVerdict::Granted,
                ..
            } = e
            {
                assert!(
                    !(honest.contains(node) && accused.contains(validator)),
                    "seed {}: {node} granted withdrawal to accused {validator:?}",
                    r.seed
                );
            }
        }
    }
    verdict(
        1,
        "double-finalization makes ≥1/3 slashable in all honest views, withdrawals denied",
        checked >= 20,
        format!("{checked} secure runs checked"),
    );
}

#[test]
fn criterion_02_withdrawal_escape_hatch() {
    let mut escaped = 0;
    for r in runs("safety_attack", "s2") {
        let trace = r.trace.as_ref().unwrap();
        let honest = honest_view_names(trace);
        let corrupted: BTreeSet<ValidatorId> = match trace.first() {
            Some(TraceEvent::Meta {
                corrupted_validators,
                ..
            }) => corrupted_validators.iter().copied().collect(),
            _ => BTreeSet::new(),
        };
        let granted = trace.iter().any(|e| {
            matches!(e, TraceEvent::WithdrawalDecided {
                node,
                validator,
                verdict: WithdrawalVerdict::Granted,
                ..
            } if honest.contains(node) && corrupted.contains(validator))
        });
        if granted {
            escaped += 1;
            assert!(
                !r.report.babylon_secure_at.k_w_half,
                "seed {}: adversary escaped while PoW was k_w/2-secure",
                r.seed
            );
        }
    }
    verdict(
        2,
        "an adversary that withdraws before slashing always implies a k_w/2 PoW failure",
        escaped >= 1,
        format!("{escaped} escape runs observed"),
    );
}

#[test]
fn criterion_03_censorship_liveness_bound() {
    let bound = 13 * K_C;
    let mut within = 0;
    for r in runs("censorship", "minority").into_iter().take(20) {
        let lat = r.report.censored_tx_latency.unwrap_or(u64::MAX);
        assert!(
            lat <= bound,
            "seed {}: censored tx latency {lat} > {bound}",
            r.seed
        );
        within += 1;
    }
    let mut slashed = 0;
    for r in runs("censorship", "majority") {
        assert!(
            r.report.slashable_common.len() as u32 >= F + 1,
            "seed {}: only {:?} slashable",
            r.seed,
            r.report.slashable_common
        );
        slashed += 1;
    }
    verdict(
        3,
        "minority censorship resolves within 13·k_c; majority censorship slashes ≥ f+1",
        within >= 20 && slashed >= 20,
        format!("{within} bounded runs, {slashed} slashing runs"),
    );
}

#[test]
fn criterion_04_no_honest_slashing() {
    let mut secure = 0;
    for r in matrix() {
        assert!(
            !r.report.failed(),
            "{}/{} seed {}: verdict FAIL",
            r.scenario,
            r.arm,
            r.seed
        );
        if r.report.babylon_secure_at.k_c_half {
            secure += 1;
            assert!(
                r.report.honest_slashed.is_empty(),
                "{}/{} seed {}: honest slashed {:?}",
                r.scenario,
                r.arm,
                r.seed,
                r.report.honest_slashed
            );
        }
    }
    verdict(
        4,
        "no honest validator is ever slashable while PoW is k_c/2-secure",
        secure > 0,
        format!("{secure} secure runs across the matrix"),
    );
}

#[test]
fn criterion_05_fork_choice_convergence() {
    let mut converged = 0;
    for (scenario, arm) in [
        ("safety_attack", "s1"),
        ("long_range", "defended"),
        ("long_range", "undefended"),
    ] {
        for r in runs(scenario, arm) {
            if !r.report.babylon_secure_at.k_w_half {
                continue;
            }
            let trace = r.trace.as_ref().unwrap();
            let tips: BTreeSet<Hash> = honest_view_names(trace)
                .iter()
                .filter_map(|v| final_tip(trace, v))
                .collect();
            assert!(
                tips.len() == 1,
                "{scenario}/{arm} seed {}: honest views split over {} tips",
                r.seed,
                tips.len()
            );
            converged += 1;
        }
    }
    // The per-view checkpoint/canonical prefix coupling is asserted inside
    // every node on every event; any violation would have panicked above.
    verdict(
        5,
        "honest views and late joiners converge on one canonical chain",
        converged >= 40,
        format!("{converged} runs converged"),
    );
}

#[test]
fn criterion_06_availability_defense_flips_late_node() {
    let defended = runs("long_range", "defended");
    let undefended = runs("long_range", "undefended");
    let mut flips = 0;
    for (d, u) in defended.iter().zip(undefended.iter()) {
        assert_eq!(d.seed, u.seed);
        let dt = d.trace.as_ref().unwrap();
        let ut = u.trace.as_ref().unwrap();
        let d_late = final_tip(dt, "late").expect("late node ran");
        let u_late = final_tip(ut, "late").expect("late node ran");
        let d_v0 = final_tip(dt, "v0").unwrap();
        assert_eq!(d_late, d_v0, "seed {}: defended late node diverged", d.seed);
        assert_ne!(
            d_late, u_late,
            "seed {}: disabling availability checks changed nothing",
            d.seed
        );
        let d_rejected = dt
            .iter()
            .any(|e| matches!(e, TraceEvent::CommitmentRejected { .. }));
        assert!(d_rejected, "seed {}: miners never refused the dataless commitment", d.seed);
        flips += 1;
    }
    verdict(
        6,
        "dataless-commitment rejection is exactly what keeps the late node honest",
        flips >= 20,
        format!("{flips} seed-paired A/B flips"),
    );
}

#[test]
fn criterion_07_checkpoint_liveness() {
    let mut blocks_checked = 0u64;
    for r in runs("honest", "") {
        if !r.report.babylon_secure_at.k_c_half {
            continue;
        }
        let trace = r.trace.as_ref().unwrap();
        let final_pow = trace
            .iter()
            .filter_map(|e| match e {
                TraceEvent::BabylonMined { height, .. } => Some(*height),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        for view in honest_view_names(trace) {
            // babylon position each block first became indexed at, per view.
            let mut indexed_at: BTreeMap<Hash, u64> = BTreeMap::new();
            for e in trace {
                if let TraceEvent::CheckpointIndexed {
                    node,
                    babylon_height,
                    new_blocks,
                    ..
                } = e
                {
                    if node == &view {
                        for b in new_blocks {
                            indexed_at.entry(*b).or_insert(*babylon_height);
                        }
                    }
                }
            }
            for e in trace {
                if let TraceEvent::Finalized {
                    node,
                    block,
                    babylon_height,
                    signers,
                    ..
                } = e
                {
                    if node != &view || *signers < QUORUM {
                        continue;
                    }
                    let deadline = babylon_height + 2 * K_C;
                    if final_pow < deadline {
                        continue; // run ended before the window closed
                    }
                    let at = indexed_at.get(block).copied().unwrap_or(u64::MAX);
                    assert!(
                        at <= deadline,
                        "seed {}: view {view} finalized {block} at PoW {babylon_height}, \
                         indexed at {at} > {deadline}",
                        r.seed
                    );
                    blocks_checked += 1;
                }
            }
        }
    }
    verdict(
        7,
        "every finalized block is checkpointed within 2·k_c PoW growth",
        blocks_checked > 1000,
        format!("{blocks_checked} finalizations checked"),
    );
}

#[test]
fn criterion_08_determinism() {
    let mut identical = 0;
    for (scenario, arm, ticks) in [("honest", "", 1500u64), ("safety_attack", "s1", 700)] {
        let (_, t1) = one_run(scenario, arm, ticks, 3);
        let (_, t2) = one_run(scenario, arm, ticks, 3);
        let j1: Vec<String> = t1.iter().map(|e| serde_json::to_string(e).unwrap()).collect();
        let j2: Vec<String> = t2.iter().map(|e| serde_json::to_string(e).unwrap()).collect();
        assert_eq!(j1, j2, "{scenario}/{arm}: traces differ between identical runs");
        identical += 1;
    }
    verdict(
        8,
        "same seed, byte-identical trace",
        identical == 2,
        format!("{identical} scenario pairs compared"),
    );
}

fn pos_block(height: u64, parent: Hash, tag: u8) -> PosBlock {
    let body = vec![PosTransaction::payload(vec![tag, height as u8])];
    PosBlock {
        header: PosBlockHeader {
            parent,
            height,
            txroot: tx_root(&body),
            proposer: ValidatorId((height % N as u64) as u32),
            round: Round::Regular(0),
        },
        body,
        justification: None,
    }
}

/// Straight transcription of the recency relation, independent of the
/// library's comparator: earlier first-divergent checkpoint wins, a
/// checkpointed divergent block beats an uncheckpointed one, otherwise
/// earlier arrival; a strict prefix yields to the longer chain.
fn recency_oracle(
    a: &[Hash],
    b: &[Hash],
    positions: &BTreeMap<Hash, BabylonPos>,
    arrivals: &BTreeMap<Hash, usize>,
) -> Ordering {
    let mut i = 0;
    while i < a.len() && i < b.len() && a[i] == b[i] {
        i += 1;
    }
    match (a.get(i), b.get(i)) {
        (None, None) => Ordering::Equal,
        (Some(_), None) => Ordering::Greater,
        (None, Some(_)) => Ordering::Less,
        (Some(da), Some(db)) => {
            let (pa, pb) = (positions.get(da), positions.get(db));
            match (pa, pb) {
                (Some(pa), Some(pb)) => {
                    let ka = (pa.height, pa.tx_index);
                    let kb = (pb.height, pb.tx_index);
                    kb.cmp(&ka)
                }
                (Some(_), None) => Ordering::Greater,
                (None, Some(_)) => Ordering::Less,
                (None, None) => arrivals[db].cmp(&arrivals[da]),
            }
        }
    }
}

#[test]
fn criterion_09_fork_choice_oracle() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let mut cases = 0;
    for case in 0..1000u64 {
        let trunk_len = rng.gen_range(1..5u64);
        let genesis = Hash::digest(&case.to_le_bytes());
        let mut trunk = vec![genesis];
        for h in 1..=trunk_len {
            trunk.push(pos_block(h, *trunk.last().unwrap(), 0).hash());
        }
        let n_branches = rng.gen_range(2..=3usize);
        let mut chains: Vec<Vec<Hash>> = Vec::new();
        let mut positions: BTreeMap<Hash, BabylonPos> = BTreeMap::new();
        let mut arrivals: BTreeMap<Hash, usize> = BTreeMap::new();
        for br in 0..n_branches {
            let mut hashes = trunk.clone();
            let extra = rng.gen_range(1..=8u64);
            for h in trunk_len + 1..=trunk_len + extra {
                hashes.push(pos_block(h, *hashes.last().unwrap(), 10 + br as u8).hash());
            }
            for (i, h) in hashes.iter().enumerate() {
                arrivals.entry(*h).or_insert(br * 40 + i);
                if rng.gen_bool(0.6) {
                    positions.entry(*h).or_insert(BabylonPos {
                        height: rng.gen_range(1..30u64),
                        tx_index: rng.gen_range(0..3u32),
                    });
                }
            }
            chains.push(hashes);
        }
        let arrival = |h: Hash| *arrivals.get(&h).unwrap_or(&usize::MAX);
        let winner = fork_choice(&chains, &positions, &arrival);
        for c in &chains {
            assert_ne!(
                recency_oracle(c, &winner, &positions, &arrivals),
                Ordering::Greater,
                "case {case}: oracle prefers a chain fork_choice rejected"
            );
            // Library comparator and transcription must agree pairwise.
            assert_eq!(
                recency_oracle(c, &winner, &positions, &arrivals),
                compare_chains(c, &winner, &positions, &arrival),
                "case {case}: comparator disagrees with the transcription"
            );
        }
        cases += 1;
    }
    verdict(
        9,
        "fork choice matches a brute-force recency evaluation on random forks",
        cases == 1000,
        format!("{cases} generated cases"),
    );
}

#[test]
fn criterion_10_base_safety_and_accountability() {
    // ≤ f byzantine (censoring) validators over ≥ 50 seeds: no honest view
    // ever finalizes two blocks at one height.
    let mut seeds = 0;
    for r in runs("censorship", "minority") {
        let trace = r.trace.as_ref().unwrap();
        for view in honest_view_names(trace) {
            let mut at_height: BTreeMap<u64, Hash> = BTreeMap::new();
            for e in trace {
                if let TraceEvent::Finalized {
                    node,
                    height,
                    block,
                    signers,
                    ..
                } = e
                {
                    if node == &view && *signers >= QUORUM {
                        let prev = at_height.entry(*height).or_insert(*block);
                        assert_eq!(
                            prev, block,
                            "seed {}: view {view} finalized two blocks at height {height}",
                            r.seed
                        );
                    }
                }
            }
        }
        seeds += 1;
    }

    // Engineered conflicts: every pair of conflicting quorum certificates
    // must convict the signer intersection — ≥ f+1 and never a single-signer.
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
    let mut conflicts = 0;
    for case in 0..100u64 {
        let height = rng.gen_range(1..50u64);
        let round = Round::Regular(rng.gen_range(0..4u32));
        let block_a = Hash::digest(&[1, case as u8]);
        let block_b = Hash::digest(&[2, case as u8]);
        let mut ids: Vec<u32> = (0..N).collect();
        ids.shuffle(&mut rng);
        let set_a: Vec<u32> = ids[..QUORUM as usize].to_vec();
        ids.shuffle(&mut rng);
        let set_b: Vec<u32> = ids[..QUORUM as usize].to_vec();
        let cert = |block: Hash, signers: &[u32]| FinalizationCertificate {
            block_hash: block,
            height,
            round,
            precommits: signers
                .iter()
                .map(|s| {
                    ConsensusMessage::signed(
                        ConsensusMsgKind::Precommit,
                        height,
                        round,
                        Some(block),
                        -1,
                        ValidatorId(*s),
                    )
                })
                .collect(),
        };
        let ca = cert(block_a, &set_a);
        let cb = cert(block_b, &set_b);
        let (_, accused) =
            extract_fraud_proof(&ca, &cb, QUORUM as usize).expect("conflict must convict");
        let expect: BTreeSet<u32> = set_a
            .iter()
            .filter(|v| set_b.contains(v))
            .copied()
            .collect();
        let got: BTreeSet<u32> = accused.iter().map(|v| v.0).collect();
        assert_eq!(got, expect, "case {case}: accused set is not the intersection");
        assert!(got.len() as u32 >= F + 1, "case {case}: too few accused");
        conflicts += 1;
    }
    verdict(
        10,
        "base consensus never double-finalizes; conflicts convict ≥ f+1, never a bystander",
        seeds >= 50 && conflicts == 100,
        format!("{seeds} seeds clean, {conflicts} engineered conflicts"),
    );
}
