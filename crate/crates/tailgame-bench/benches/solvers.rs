//! Benchmarks for the hot paths: the exact matrix-game solver behind
//! threat computation, the recurrence fixpoint, best-response
//! certification (short and long target cycles), seeded simulation, and
//! the end-to-end build-and-certify pipeline.

use std::collections::BTreeSet;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use tailgame_core::equilibrium::{build_grim_trigger, find_target_play};
use tailgame_core::oneshot::correlated_minmax;
use tailgame_core::punish::{buchi_fixpoint, compute_threats, ThreatOptions};
use tailgame_core::rational::rat;
use tailgame_core::verify::{best_response_value, certify, simulate};
use tailgame_core::{GameSpec, LassoPlay, Objective, Rational};

fn dilemma() -> GameSpec {
    GameSpec::new(
        vec!["row".into(), "col".into()],
        vec![vec!["C".into(), "D".into()], vec!["C".into(), "D".into()]],
        vec![
            Objective::MeanLimsup(vec![rat(3), rat(0), rat(4), rat(1)]),
            Objective::MeanLimsup(vec![rat(3), rat(4), rat(0), rat(1)]),
        ],
    )
    .unwrap()
}

fn matching_pennies() -> GameSpec {
    GameSpec::new(
        vec!["matcher".into(), "mismatcher".into()],
        vec![vec!["H".into(), "T".into()], vec!["H".into(), "T".into()]],
        vec![
            Objective::MeanLimsup(vec![rat(1), rat(0), rat(0), rat(1)]),
            Objective::MeanLimsup(vec![rat(0), rat(1), rat(1), rat(0)]),
        ],
    )
    .unwrap()
}

/// Three players, three actions each: 27 profiles, 9 coalition columns per
/// deviator — a representative load for the exact matrix-game solver.
fn three_by_three() -> GameSpec {
    let m = 27usize;
    // Deterministic spread of weights without pulling in an RNG.
    let weights = |salt: usize| -> Vec<Rational> {
        (0..m).map(|p| rat(((p * 7 + salt * 11) % 13) as i64)).collect()
    };
    GameSpec::new(
        vec!["a".into(), "b".into(), "c".into()],
        (0..3)
            .map(|_| vec!["x".into(), "y".into(), "z".into()])
            .collect(),
        vec![
            Objective::MeanLimsup(weights(0)),
            Objective::MeanLimsup(weights(1)),
            Objective::MeanLimsup(weights(2)),
        ],
    )
    .unwrap()
}

fn bench_oneshot(c: &mut Criterion) {
    let pennies = matching_pennies();
    let w2 = pennies.objectives[0].weights().unwrap().to_vec();
    c.bench_function("oneshot/correlated_minmax_2x2", |b| {
        b.iter(|| correlated_minmax(black_box(&pennies), black_box(&w2), 0).unwrap())
    });
    let big = three_by_three();
    let w3 = big.objectives[0].weights().unwrap().to_vec();
    c.bench_function("oneshot/correlated_minmax_3x3x3", |b| {
        b.iter(|| correlated_minmax(black_box(&big), black_box(&w3), 0).unwrap())
    });
}

fn bench_fixpoint(c: &mut Criterion) {
    let game = matching_pennies();
    let target: BTreeSet<usize> = BTreeSet::from([0, 3]);
    let options = ThreatOptions::default();
    c.bench_function("threats/buchi_fixpoint_matching", |b| {
        b.iter(|| buchi_fixpoint(black_box(&game), 0, black_box(&target), &options).unwrap())
    });
}

fn bench_best_response(c: &mut Criterion) {
    let game = dilemma();
    let threats = compute_threats(&game, &ThreatOptions::default()).unwrap();
    let play = find_target_play(&game, &threats, 0.1).unwrap();
    let grim = build_grim_trigger(&game, &play, &threats).unwrap();
    c.bench_function("verify/best_response_grim_short", |b| {
        b.iter(|| best_response_value(black_box(&game), black_box(&grim), 0).unwrap())
    });

    // A 64-step target cycle: the deviation process has 66 states, the
    // regime where the deterministic cycle search must stay fast.
    let long_cycle: Vec<usize> = (0..64).map(|t| if t % 2 == 0 { 0 } else { 3 }).collect();
    let long_play = LassoPlay::new(vec![], long_cycle);
    let long = build_grim_trigger(&game, &long_play, &threats).unwrap();
    let mut group = c.benchmark_group("verify");
    group.sample_size(30);
    group.bench_function("best_response_grim_64_cycle", |b| {
        b.iter(|| best_response_value(black_box(&game), black_box(&long), 0).unwrap())
    });
    group.finish();
}

fn bench_simulation(c: &mut Criterion) {
    let game = matching_pennies();
    let threats = compute_threats(&game, &ThreatOptions::default()).unwrap();
    let em =
        tailgame_core::equilibrium::build_acceptable_stationary(&game, &threats, 0.0).unwrap();
    let mut group = c.benchmark_group("verify");
    group.sample_size(30);
    group.bench_function("simulate_pennies_128x256", |b| {
        b.iter(|| simulate(black_box(&game), black_box(&em), None, 256, 128, 7).unwrap())
    });
    group.finish();
}

fn bench_pipeline(c: &mut Criterion) {
    let game = dilemma();
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(30);
    group.bench_function("dilemma_grim_end_to_end", |b| {
        b.iter(|| {
            let threats = compute_threats(black_box(&game), &ThreatOptions::default()).unwrap();
            let play = find_target_play(&game, &threats, 0.1).unwrap();
            let em = build_grim_trigger(&game, &play, &threats).unwrap();
            certify(&game, &em, 0.1, &threats).unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_oneshot,
    bench_fixpoint,
    bench_best_response,
    bench_simulation,
    bench_pipeline
);
criterion_main!(benches);
