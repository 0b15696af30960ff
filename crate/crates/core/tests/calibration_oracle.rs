use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagematch::calibration::{calibrate_average, calibrate_minimax, CalibrationProblem, StateDistribution};
use stagematch::learning::fit_state_density;
use stagematch::variational::{state_grid, Candidate, LogisticSurface, SurfaceCurves};

struct Case {
    surface: LogisticSurface,
    arms: Vec<Candidate>,
    dist: StateDistribution,
    eta: f64,
    penalty: f64,
    quota: usize,
}

fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let surface = LogisticSurface {
        state_coef: rng.random_range(1.0..4.0),
        score_coef: rng.random_range(0.5..3.0),
        intercept: rng.random_range(-3.0..0.0),
    };
    let n = rng.random_range(8..30);
    let arms = (0..n)
        .map(|j| {
            let v: f64 = rng.random();
            (j, 1.0 + v + rng.random::<f64>(), v)
        })
        .collect();
    let observed: Vec<f64> = (0..30).map(|_| rng.random()).collect();
    Case {
        surface,
        arms,
        dist: StateDistribution::Continuous(fit_state_density(&observed).unwrap()),
        eta: rng.random_range(0.0..0.3),
        penalty: rng.random_range(3.0..6.0),
        quota: rng.random_range(2..7),
    }
}

#[test]
fn average_and_minimax_match_grid_oracles() {
    let grid = state_grid(101);
    let s_grid = state_grid(41);
    let mut fails = Vec::new();
    for seed in 0..50 {
        let c = case(seed);
        let curves = SurfaceCurves::new(&c.surface, &c.arms, &grid).unwrap();
        let problem = CalibrationProblem::new(&curves, &c.dist, c.eta, c.penalty, c.quota);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let draws: Vec<f64> = (0..10_000).map(|_| c.dist.sample(&mut rng)).collect();
        let mc = |s: f64| {
            let sel = problem.selection(s).selected;
            draws.iter().map(|&t| problem.loss(&sel, t)).sum::<f64>() / draws.len() as f64
        };
        let losses: Vec<f64> = s_grid.iter().map(|&s| mc(s)).collect();
        let lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s = calibrate_average(&problem).unwrap().state;
        let got = mc(s);
        if got > lo + 0.01 * (hi - lo) + 1e-12 {
            fails.push(format!("avg seed {seed}: s={s} loss {got} vs min {lo} range {}", hi - lo));
        }
        let worst = |s: f64| problem.worst_case_loss(s);
        let w: Vec<f64> = s_grid.iter().map(|&s| worst(s)).collect();
        let wlo = w.iter().copied().fold(f64::INFINITY, f64::min);
        let whi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sm = calibrate_minimax(&problem).unwrap().state;
        if worst(sm) > wlo + 0.01 * (whi - wlo) + 1e-12 {
            fails.push(format!("minimax seed {seed}: s={sm} loss {} vs min {wlo} range {}", worst(sm), whi - wlo));
        }
    }
    assert!(fails.is_empty(), "{fails:#?}");
}
