//! The learned, calibrated cutoff strategy.
//!
//! Per stage: fit an acceptance model and a state distribution from history,
//! calibrate the state, rank arms by the lower uncertainty bound per unit of
//! estimated acceptance probability and pull down to the greedy cutoff.

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::simple_cutoff_strategy;
use crate::calibration::{calibrate_average, calibrate_minimax, CalibrationProblem, StateDistribution, DEFAULT_DELTA_S};
use crate::error::{Error, Result};
use crate::learning::{
    fit_acceptance_model, fit_state_density, period_states, stage_records, FittedAcceptanceModel, HistoryRecord,
    LearnerConfig, ModelCurves,
};
use crate::market::{AgentView, CalibrationMode, Strategy, StrategyDecision};
use crate::variational::{
    greedy_select, greedy_select_terms, logistic, AcceptanceSurface, ArmCurves, Candidate, LogisticSurface,
};

/// How the unknown state's distribution is estimated from past periods.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateModel {
    /// Gaussian kernel density.
    #[default]
    Kde,
    /// The empirical distribution of observed states.
    Empirical,
}

/// Settings shared by every stage of the strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LubCdmConfig {
    pub learner: LearnerConfig,
    pub calibration: CalibrationMode,
    pub state_model: StateModel,
    pub delta_s: f64,
    /// Forces η = 0 at every stage, giving the plain calibrated strategy.
    pub zero_eta: bool,
}

impl Default for LubCdmConfig {
    fn default() -> Self {
        LubCdmConfig {
            learner: LearnerConfig::default(),
            calibration: CalibrationMode::Average,
            state_model: StateModel::Kde,
            delta_s: DEFAULT_DELTA_S,
            zero_eta: false,
        }
    }
}

/// Everything fit from history for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageModel {
    pub model: FittedAcceptanceModel,
    pub states: StateDistribution,
}

/// Fits the stage-`stage` model, or `None` without records for that stage.
pub fn fit_stage_model(history: &[HistoryRecord], stage: usize, config: &LubCdmConfig) -> Result<Option<StageModel>> {
    let records = stage_records(history, stage);
    if records.is_empty() {
        return Ok(None);
    }
    let model = fit_acceptance_model(&records, &config.learner)?;
    let observed = period_states(&records);
    let states = match config.state_model {
        StateModel::Kde => StateDistribution::Continuous(fit_state_density(&observed)?),
        StateModel::Empirical => StateDistribution::empirical(&observed)?,
    };
    Ok(Some(StageModel { model, states }))
}

/// Per-decision inputs besides the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionInputs {
    pub eta: f64,
    pub penalty: f64,
    pub remaining_quota: usize,
    pub calibration: CalibrationMode,
    pub delta_s: f64,
}

/// Calibrates and selects with a fitted stage model.
pub fn decide_with_model(stage: &StageModel, available: &[Candidate], inputs: DecisionInputs) -> Result<StrategyDecision> {
    if !(inputs.eta >= 0.0) {
        return Err(Error::Domain(format!("eta must be nonnegative, got {}", inputs.eta)));
    }
    let curves = ModelCurves::new(&stage.model, available, true);
    let mut problem = CalibrationProblem::new(&curves, &stage.states, inputs.eta, inputs.penalty, inputs.remaining_quota);
    problem.delta_s = inputs.delta_s;
    let calibration = match inputs.calibration {
        CalibrationMode::Average => calibrate_average(&problem)?,
        CalibrationMode::Minimax => calibrate_minimax(&problem)?,
    };
    let terms = curves.terms_at(calibration.state);
    let clamped = terms.iter().filter(|t| t.pi - inputs.eta * t.delta < 0.0).count();
    let cut = greedy_select_terms(&terms, inputs.eta, inputs.remaining_quota, inputs.penalty);

    let mut decision = StrategyDecision::pulls(cut.selected.clone());
    decision.calibrated_state = Some(calibration.state);
    decision.cutoff = Some(cut.b_hat);
    decision.note("ue_dagger", cut.ue_dagger);
    decision.note("plus_branch", cut.used_plus_branch);
    decision.note("exploring", curves.exploring().len());
    decision.note("lambda", stage.model.lambda);
    if clamped > 0 {
        decision.note("lub_clamped", clamped);
    }
    if !calibration.solved {
        decision.note("calibration", calibration.notes.join("; "));
    }
    Ok(decision)
}

/// One decision from raw history: fit, calibrate and select.
#[allow(clippy::too_many_arguments)]
pub fn lub_cdm_decide(
    history: &[HistoryRecord],
    available: &[Candidate],
    stage: usize,
    prior_accepts: usize,
    quota: usize,
    penalty: f64,
    eta: f64,
    config: &LubCdmConfig,
) -> Result<StrategyDecision> {
    if stage == 0 {
        return Err(Error::Domain("stages are numbered from 1".into()));
    }
    let remaining = quota.saturating_sub(prior_accepts);
    let eta = if config.zero_eta { 0.0 } else { eta };
    match fit_stage_model(history, stage, config)? {
        Some(model) => decide_with_model(
            &model,
            available,
            DecisionInputs { eta, penalty, remaining_quota: remaining, calibration: config.calibration, delta_s: config.delta_s },
        ),
        None => Ok(cold_start(available, remaining)),
    }
}

fn cold_start(available: &[Candidate], remaining: usize) -> StrategyDecision {
    let pairs: Vec<(usize, f64)> = available.iter().map(|c| (c.0, c.1)).collect();
    let mut decision = simple_cutoff_strategy(&pairs, remaining);
    decision.note("cold_start", "no history for this stage");
    decision
}

/// The strategy as the engine runs it. Stage models are fit on first use and
/// cached; they can also be supplied prefit and shared.
pub struct LubCdmStrategy {
    history: Arc<Vec<HistoryRecord>>,
    config: LubCdmConfig,
    models: Vec<Option<Option<Arc<StageModel>>>>,
}

impl LubCdmStrategy {
    pub fn new(history: Arc<Vec<HistoryRecord>>, config: LubCdmConfig) -> Self {
        LubCdmStrategy { history, config, models: Vec::new() }
    }

    /// A strategy using prefit stage models, indexed by stage − 1.
    pub fn with_models(models: Vec<Option<Arc<StageModel>>>, config: LubCdmConfig) -> Self {
        LubCdmStrategy {
            history: Arc::new(Vec::new()),
            config,
            models: models.into_iter().map(Some).collect(),
        }
    }

    fn model(&mut self, stage: usize) -> Result<Option<Arc<StageModel>>> {
        if self.models.len() < stage {
            self.models.resize(stage, None);
        }
        if self.models[stage - 1].is_none() {
            let fitted = fit_stage_model(&self.history, stage, &self.config)?.map(Arc::new);
            self.models[stage - 1] = Some(fitted);
        }
        Ok(self.models[stage - 1].clone().flatten())
    }
}

impl Strategy for LubCdmStrategy {
    fn decide(&mut self, view: &AgentView<'_>, _rng: &mut dyn RngCore) -> Result<StrategyDecision> {
        let available: Vec<Candidate> = view
            .available
            .iter()
            .map(|&j| (j, view.utility(j), view.arms[j].score))
            .collect();
        let remaining = view.remaining_quota();
        match self.model(view.stage)? {
            Some(model) => decide_with_model(
                &model,
                &available,
                DecisionInputs {
                    eta: if self.config.zero_eta { 0.0 } else { view.eta() },
                    penalty: view.profile.penalty,
                    remaining_quota: remaining,
                    calibration: self.config.calibration,
                    delta_s: self.config.delta_s,
                },
            ),
            None => Ok(cold_start(&available, remaining)),
        }
    }
}

/// Greedy cutoff selection on a known acceptance surface at a known state,
/// with the agent's per-stage η. A full-information benchmark.
pub struct SurfaceStrategy {
    pub surface: Arc<dyn AcceptanceSurface + Send + Sync>,
    pub state: f64,
    pub grid: Vec<f64>,
}

impl Strategy for SurfaceStrategy {
    fn decide(&mut self, view: &AgentView<'_>, _rng: &mut dyn RngCore) -> Result<StrategyDecision> {
        let available: Vec<Candidate> = view
            .available
            .iter()
            .map(|&j| (j, view.utility(j), view.arms[j].score))
            .collect();
        let cut = greedy_select(
            &available,
            self.surface.as_ref(),
            &self.grid,
            self.state,
            view.eta(),
            view.remaining_quota(),
            view.profile.penalty,
        )?;
        let mut decision = StrategyDecision::pulls(cut.selected);
        decision.calibrated_state = Some(self.state);
        decision.cutoff = Some(cut.b_hat);
        Ok(decision)
    }
}

/// Synthetic single-stage history: each period draws a state uniformly, a
/// fresh set of arms with uniform scores, pulls all of them and records
/// acceptances drawn from `truth`.
pub fn synthetic_history(truth: &LogisticSurface, periods: usize, arms_per_period: usize, rng: &mut dyn RngCore) -> Vec<HistoryRecord> {
    let mut out = Vec::with_capacity(periods * arms_per_period);
    for t in 0..periods {
        let state: f64 = rng.random();
        for _ in 0..arms_per_period {
            let score: f64 = rng.random();
            let p = logistic(truth.log_odds(state, score));
            out.push(HistoryRecord {
                t: t as u64,
                k: 1,
                state,
                score,
                fit: 0.0,
                accepted: (rng.random::<f64>() < p) as u8,
            });
        }
    }
    out
}

/// Mean squared error of the fitted log-odds against the truth over a
/// `points × points` grid of (state, score) in the unit square.
pub fn log_odds_mse(model: &FittedAcceptanceModel, truth: &LogisticSurface, points: usize) -> f64 {
    let mut total = 0.0;
    for a in 0..points {
        for b in 0..points {
            let s = (a as f64 + 0.5) / points as f64;
            let v = (b as f64 + 0.5) / points as f64;
            total += (model.predict_f(s, v) - truth.log_odds(s, v)).powi(2);
        }
    }
    total / (points * points) as f64
}

/// Settings for `consistency_probe`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub arms_per_period: usize,
    pub test_arms: usize,
    pub state: f64,
    pub eta: f64,
    pub quota: usize,
    pub penalty: f64,
    pub learner: LearnerConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            arms_per_period: 10,
            test_arms: 40,
            state: 0.5,
            eta: 0.0,
            quota: 8,
            penalty: 4.0,
            learner: LearnerConfig::default(),
        }
    }
}

/// For each history size, the fraction of test arms on which the learned
/// selection agrees with the greedy selection on the true surface.
pub fn consistency_probe(truth: &LogisticSurface, sizes: &[usize], config: &ProbeConfig, seed: u64) -> Result<Vec<(usize, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let test: Vec<Candidate> = (0..config.test_arms)
        .map(|j| {
            let score: f64 = rng.random();
            (j, 1.0 + score + 0.2 * rng.random::<f64>(), score)
        })
        .collect();
    let grid = crate::variational::state_grid(crate::variational::DEFAULT_GRID_POINTS);
    let oracle = greedy_select(&test, truth, &grid, config.state, config.eta, config.quota, config.penalty)?.selected;
    let mut out = Vec::with_capacity(sizes.len());
    for &t in sizes {
        let learned = if t == 0 {
            cold_start(&test, config.quota).pulls
        } else {
            let history = synthetic_history(truth, t, config.arms_per_period, &mut rng);
            let model = fit_acceptance_model(&history, &config.learner)?;
            let curves = ModelCurves::new(&model, &test, true);
            greedy_select_terms(&curves.terms_at(config.state), config.eta, config.quota, config.penalty).selected
        };
        let agree = test
            .iter()
            .filter(|c| oracle.contains(&c.0) == learned.contains(&c.0))
            .count();
        out.push((t, agree as f64 / test.len() as f64));
    }
    Ok(out)
}
