use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagematch::baselines::{deferred_acceptance, DaInstance};
use stagematch::calibration::{calibrate_average, calibrate_minimax, CalibrationProblem, StateDistribution};
use stagematch::learning::{fit_acceptance_model, LearnerConfig};
use stagematch::lub_cdm::synthetic_history;
use stagematch::variational::{
    brute_force_optimal, greedy_select_terms, state_grid, ArmTerm, Candidate, LogisticSurface, SurfaceCurves,
};

fn random_terms(n: usize, rng: &mut ChaCha8Rng) -> Vec<ArmTerm> {
    (0..n)
        .map(|id| {
            let pi = rng.random_range(0.05..1.0);
            ArmTerm { id, weight: rng.random_range(0.5..3.0), pi, delta: rng.random_range(0.0..pi / 2.0) }
        })
        .collect()
}

fn greedy(c: &mut Criterion) {
    let mut group = c.benchmark_group("greedy_select");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for n in [100, 1_000, 10_000] {
        let terms = random_terms(n, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &terms, |b, terms| {
            b.iter(|| greedy_select_terms(black_box(terms), 0.1, 20, 8.0))
        });
    }
    group.finish();

    let terms = random_terms(12, &mut rng);
    c.bench_function("brute_force_12", |b| b.iter(|| brute_force_optimal(black_box(&terms), 0.1, 0, 4, 8.0)));
}

fn learner(c: &mut Criterion) {
    let truth = LogisticSurface { state_coef: 2.0, score_coef: 1.0, intercept: -1.5 };
    let mut group = c.benchmark_group("fit_acceptance_model");
    group.sample_size(10);
    for periods in [25, 100] {
        let history = synthetic_history(&truth, periods, 10, &mut ChaCha8Rng::seed_from_u64(1));
        group.bench_with_input(BenchmarkId::from_parameter(periods * 10), &history, |b, h| {
            b.iter(|| fit_acceptance_model(black_box(h), &LearnerConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn calibration(c: &mut Criterion) {
    let surface = LogisticSurface { state_coef: 3.0, score_coef: 1.5, intercept: -2.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let arms: Vec<Candidate> = (0..200)
        .map(|j| {
            let v: f64 = rng.random();
            (j, 1.0 + v, v)
        })
        .collect();
    let grid = state_grid(101);
    let curves = SurfaceCurves::new(&surface, &arms, &grid).unwrap();
    let dist = StateDistribution::discrete(&[(0.3, 0.25), (0.5, 0.5), (0.7, 0.25)]).unwrap();
    let problem = CalibrationProblem::new(&curves, &dist, 0.1, 5.0, 10);
    c.bench_function("calibrate_average_200", |b| b.iter(|| calibrate_average(black_box(&problem)).unwrap()));
    c.bench_function("calibrate_minimax_200", |b| b.iter(|| calibrate_minimax(black_box(&problem)).unwrap()));
}

fn stable_matching(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (agents, arms) = (50, 500);
    let perm = |len: usize, rng: &mut ChaCha8Rng| {
        let mut p: Vec<usize> = (0..len).collect();
        p.shuffle(rng);
        p
    };
    let agent_prefs = (0..agents).map(|_| perm(arms, &mut rng)).collect();
    let arm_prefs = (0..arms).map(|_| perm(agents, &mut rng)).collect();
    let inst = DaInstance::new(vec![10; agents], agent_prefs, arm_prefs).unwrap();
    c.bench_function("deferred_acceptance_50x500", |b| b.iter(|| deferred_acceptance(black_box(&inst)).unwrap()));
}

criterion_group!(benches, greedy, learner, calibration, stable_matching);
criterion_main!(benches);
