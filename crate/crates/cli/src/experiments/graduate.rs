//! Graduate admissions: 50 colleges in three tiers compete for students over
//! two stages. Every college runs the learned strategy; for each focal
//! college the market is rerun with that college alone on simple cutoff.

use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use stagematch::baselines::{RandomProposing, SimpleCutoff};
use stagematch::learning::{history_from_outcome, HistoryRecord, LearnerConfig};
use stagematch::lub_cdm::{fit_stage_model, LubCdmConfig, LubCdmStrategy, StageModel, StateModel};
use stagematch::market::{
    run_with_strategies, AgentProfile, AgentView, Arm, ArmUtilities, CalibrationMode, Strategy, StrategyDecision,
};
use stagematch::stats::derive_seed;
use stagematch::{Error, Result};

use super::replicate;
use crate::config::ExperimentConfig;
use crate::output::ResultRow;

const EXPERIMENT: &str = "graduate_admissions";
const STAGES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraduateParams {
    pub colleges: usize,
    /// First college index of tiers 1 and 2; tier 0 starts at 0.
    pub tier_starts: [usize; 2],
    pub quota: usize,
    pub penalty: f64,
    pub eta: f64,
    pub states: usize,
    pub student_counts: Vec<usize>,
    /// Zero-based ids of the colleges that switch to simple cutoff.
    pub focal: Vec<usize>,
    pub training_periods_per_state: usize,
    /// Scale of the normal noise in student preferences.
    pub noise: f64,
    pub calibration: CalibrationMode,
    pub learner: LearnerConfig,
}

impl Default for GraduateParams {
    fn default() -> Self {
        GraduateParams {
            colleges: 50,
            tier_starts: [5, 15],
            quota: 5,
            penalty: 2.5,
            eta: 0.1,
            states: 10,
            student_counts: vec![250, 260, 270, 280, 290, 300],
            focal: vec![0, 5, 15],
            training_periods_per_state: 20,
            noise: 0.3,
            calibration: CalibrationMode::Average,
            learner: LearnerConfig {
                lambda_grid: vec![1e-3, 1e-2, 1e-1],
                max_rank: 100,
                state_grid_points: 41,
                ..LearnerConfig::default()
            },
        }
    }
}

impl GraduateParams {
    fn validate(&self) -> Result<()> {
        let [t1, t2] = self.tier_starts;
        if !(0 < t1 && t1 < t2 && t2 < self.colleges)
            || self.quota == 0
            || self.states == 0
            || self.student_counts.iter().any(|&n| n < 110)
            || self.focal.iter().any(|&f| f >= self.colleges)
            || self.training_periods_per_state == 0
            || !(self.penalty > 2.0)
            || !(self.eta >= 0.0)
        {
            return Err(Error::Config("graduate_admissions parameters out of range".into()));
        }
        Ok(())
    }

    fn tier(&self, college: usize) -> usize {
        self.tier_starts.iter().filter(|&&s| college >= s).count()
    }
}

/// College popularity `ω[l][i]` in each state, shared by all replications.
fn popularity(p: &GraduateParams, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..p.states).map(|_| (0..p.colleges).map(|_| rng.random()).collect()).collect()
}

/// Students as arms: 10 top scores in [0.9, 1], 100 in [0.7, 0.9), the rest
/// below 0.7, each with a uniform fit per college. Student preferences are
/// tier, then popularity in the current state, plus noise.
fn market(p: &GraduateParams, omega: &[f64], students: usize, seed: u64) -> (Vec<Arm>, Vec<AgentProfile>, ArmUtilities) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arms: Vec<Arm> = (0..students)
        .map(|j| {
            let score = match j {
                0..10 => rng.random_range(0.9..=1.0),
                10..110 => rng.random_range(0.7..0.9),
                _ => rng.random_range(0.0..0.7),
            };
            Arm::new(j, score, (0..p.colleges).map(|_| rng.random()).collect())
        })
        .collect();
    let values = (0..students)
        .map(|_| {
            (0..p.colleges)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    Some(10.0 * (3 - p.tier(i)) as f64 + omega[i] + p.noise * z)
                })
                .collect()
        })
        .collect();
    let agents = (0..p.colleges)
        .map(|i| {
            let mut a = AgentProfile::new(i, p.quota, p.penalty, STAGES);
            a.eta_schedule = vec![p.eta, 0.0];
            a
        })
        .collect();
    (arms, agents, ArmUtilities::from_values(0.0, values))
}

type Models = Vec<Vec<Option<Arc<StageModel>>>>;

/// Fits every college's stage models from random-proposing periods,
/// cycling through the states and student counts.
fn train(p: &GraduateParams, omega: &[Vec<f64>], config: &LubCdmConfig, seed: u64) -> Result<Models> {
    let mut histories: Vec<Vec<HistoryRecord>> = vec![Vec::new(); p.colleges];
    let periods = p.states * p.training_periods_per_state;
    for t in 0..periods {
        let l = t % p.states;
        let students = p.student_counts[t % p.student_counts.len()];
        let period_seed = derive_seed(seed, t as u64, 0);
        let (arms, agents, prefs) = market(p, &omega[l], students, period_seed);
        let mut strategies: Vec<Box<dyn Strategy>> =
            (0..p.colleges).map(|_| Box::new(RandomProposing) as Box<dyn Strategy>).collect();
        let out = run_with_strategies(&arms, &agents, &prefs, STAGES, period_seed, &mut strategies)?;
        for (i, h) in histories.iter_mut().enumerate() {
            h.extend(history_from_outcome(&out, &arms, i, t as u64, omega[l][i]));
        }
    }
    histories
        .iter()
        .map(|h| (1..=STAGES).map(|k| Ok(fit_stage_model(h, k, config)?.map(Arc::new))).collect())
        .collect()
}

/// Reuses one stage-1 decision across reruns of the same market. Stage-1
/// views do not depend on other agents, so the decision is identical.
struct FirstStageMemo<'a> {
    inner: LubCdmStrategy,
    first: &'a Mutex<Option<StrategyDecision>>,
}

impl Strategy for FirstStageMemo<'_> {
    fn decide(&mut self, view: &AgentView<'_>, rng: &mut dyn RngCore) -> Result<StrategyDecision> {
        if view.stage != 1 {
            return self.inner.decide(view, rng);
        }
        let mut slot = self.first.lock().expect("memo lock");
        if let Some(d) = slot.as_ref() {
            return Ok(d.clone());
        }
        let d = self.inner.decide(view, rng)?;
        *slot = Some(d.clone());
        Ok(d)
    }
}

pub(super) fn run(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let p: GraduateParams = config.params()?;
    p.validate()?;
    let lub = LubCdmConfig {
        learner: p.learner.clone(),
        calibration: p.calibration,
        state_model: StateModel::Empirical,
        ..LubCdmConfig::default()
    };
    let omega = popularity(&p, config.shared_seed(0));
    let models = train(&p, &omega, &lub, config.shared_seed(1))?;

    replicate(config, |r, seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for &students in &p.student_counts {
            let l = rng.random_range(0..p.states);
            let market_seed: u64 = rng.random();
            let (arms, agents, prefs) = market(&p, &omega[l], students, market_seed);
            let memo: Vec<Mutex<Option<StrategyDecision>>> = (0..p.colleges).map(|_| Mutex::new(None)).collect();
            let play = |switched: Option<usize>| {
                let mut strategies: Vec<Box<dyn Strategy + '_>> = (0..p.colleges)
                    .map(|i| -> Box<dyn Strategy + '_> {
                        if Some(i) == switched {
                            Box::new(SimpleCutoff)
                        } else {
                            Box::new(FirstStageMemo {
                                inner: LubCdmStrategy::with_models(models[i].clone(), lub.clone()),
                                first: &memo[i],
                            })
                        }
                    })
                    .collect();
                run_with_strategies(&arms, &agents, &prefs, STAGES, market_seed, &mut strategies)
            };
            let base = play(None)?;
            for &f in &p.focal {
                let alt = play(Some(f))?;
                for (method, out) in [("lub_cdm", &base), ("simple_cutoff", &alt)] {
                    rows.push(
                        ResultRow::new(EXPERIMENT, r, f, method, out.payoffs[f])
                            .stages(STAGES)
                            .students(students)
                            .matched(out.matches_of(f).len()),
                    );
                }
            }
        }
        Ok(rows)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiers_and_score_bands() {
        let p = GraduateParams::default();
        assert_eq!((p.tier(0), p.tier(4), p.tier(5), p.tier(14), p.tier(15), p.tier(49)), (0, 0, 1, 1, 2, 2));
        let omega = vec![0.5; 50];
        let (arms, agents, prefs) = market(&p, &omega, 250, 1);
        assert!(arms[..10].iter().all(|a| a.score >= 0.9));
        assert!(arms[10..110].iter().all(|a| (0.7..0.9).contains(&a.score)));
        assert!(arms[110..].iter().all(|a| a.score < 0.7));
        assert_eq!(agents.len(), 50);
        // Tier gaps dominate the noise.
        let row = prefs.row(0);
        assert!(row[4].unwrap() > row[5].unwrap() && row[14].unwrap() > row[15].unwrap());
    }

    #[test]
    fn small_market_runs_and_reports_focal_colleges() {
        let mut config = ExperimentConfig::named(crate::config::ExperimentName::GraduateAdmissions);
        config.replications = 2;
        let t: toml::Table = toml::from_str(
            "colleges = 12\ntier_starts = [2, 5]\nstates = 3\nstudent_counts = [120]\nfocal = [0, 2]\ntraining_periods_per_state = 3",
        )
        .unwrap();
        config.params = t;
        let rows = run(&config).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        assert!(rows.iter().all(|r| r.student_count == Some(120) && r.matched_count.is_some()));
    }
}
