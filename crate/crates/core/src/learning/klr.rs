use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::HistoryRecord;
use crate::error::{Error, Result};
use crate::variational::{logistic, state_grid, ArmCurves, Candidate, DEFAULT_GRID_POINTS};

/// Bandwidths of the Gaussian kernels over state and score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub bandwidth_state: f64,
    pub bandwidth_score: f64,
}

impl KernelParams {
    /// Median pairwise distance along each input.
    pub fn median_heuristic(states: &[f64], scores: &[f64]) -> Self {
        KernelParams {
            bandwidth_state: median_distance(states),
            bandwidth_score: median_distance(scores),
        }
    }

    /// Product kernel `K_s(s1, s2) K_v(v1, v2)`.
    pub fn eval(&self, s1: f64, v1: f64, s2: f64, v2: f64) -> f64 {
        let a = (s1 - s2) / self.bandwidth_state;
        let b = (v1 - v2) / self.bandwidth_score;
        (-0.5 * (a * a + b * b)).exp()
    }

    fn state_kernel(&self, s1: f64, s2: f64) -> f64 {
        let a = (s1 - s2) / self.bandwidth_state;
        (-0.5 * a * a).exp()
    }

    fn score_kernel(&self, v1: f64, v2: f64) -> f64 {
        let b = (v1 - v2) / self.bandwidth_score;
        (-0.5 * b * b).exp()
    }
}

fn median_distance(xs: &[f64]) -> f64 {
    let step = (xs.len() / 400).max(1);
    let sample: Vec<f64> = xs.iter().step_by(step).copied().collect();
    let mut d = Vec::with_capacity(sample.len() * sample.len().saturating_sub(1) / 2);
    for i in 0..sample.len() {
        for j in i + 1..sample.len() {
            d.push((sample[i] - sample[j]).abs());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let median = *d.select_nth_unstable_by(mid, f64::total_cmp).1;
    if median > 0.0 {
        return median;
    }
    // Mostly repeated values: fall back to the mean nonzero gap.
    let nonzero: Vec<f64> = d.into_iter().filter(|&x| x > 0.0).collect();
    if nonzero.is_empty() {
        1.0
    } else {
        nonzero.iter().sum::<f64>() / nonzero.len() as f64
    }
}

/// Fitting hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    /// Candidate ridge penalties; one entry skips selection.
    pub lambda_grid: Vec<f64>,
    /// Fixed bandwidths; `None` uses the median heuristic.
    pub kernel: Option<KernelParams>,
    /// Multipliers on the score bandwidth, chosen with λ by held-out
    /// likelihood. A sharp change in acceptance across scores needs a
    /// narrower kernel than the median heuristic gives.
    pub score_bandwidth_scales: Vec<f64>,
    pub max_iterations: usize,
    /// Stop once the objective drops by less than this.
    pub tolerance: f64,
    /// Pivoted Cholesky stops when every residual kernel diagonal is below this.
    pub rank_tolerance: f64,
    pub max_rank: usize,
    /// Every `holdout_every`-th period is held out to score penalties.
    pub holdout_every: usize,
    pub state_grid_points: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            lambda_grid: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            kernel: None,
            score_bandwidth_scales: vec![1.0],
            max_iterations: 100,
            tolerance: 1e-8,
            rank_tolerance: 1e-8,
            max_rank: 400,
            holdout_every: 5,
            state_grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

struct Design {
    states: Vec<f64>,
    scores: Vec<f64>,
    labels: Vec<f64>,
    weights: Vec<f64>,
    periods: Vec<u64>,
}

impl Design {
    fn new(records: &[HistoryRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Domain("no training records".into()));
        }
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for r in records {
            *counts.entry(r.t).or_default() += 1;
        }
        Ok(Design {
            states: records.iter().map(|r| r.state).collect(),
            scores: records.iter().map(|r| r.score).collect(),
            labels: records.iter().map(|r| r.accepted as f64).collect(),
            weights: records.iter().map(|r| 1.0 / counts[&r.t] as f64).collect(),
            periods: records.iter().map(|r| r.t).collect(),
        })
    }

    fn subset(&self, idx: &[usize]) -> Design {
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect();
        Design {
            states: pick(&self.states),
            scores: pick(&self.scores),
            labels: pick(&self.labels),
            weights: pick(&self.weights),
            periods: idx.iter().map(|&i| self.periods[i]).collect(),
        }
    }

    fn len(&self) -> usize {
        self.states.len()
    }
}

/// Incomplete Cholesky factor `K ≈ G Gᵀ` with its pivot rows.
struct LowRank {
    g: DMatrix<f64>,
    pivots: Vec<usize>,
}

fn pivoted_cholesky(d: &Design, kernel: &KernelParams, tol: f64, max_rank: usize) -> LowRank {
    let n = d.len();
    let mut diag = vec![1.0; n];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut pivots = Vec::new();
    while cols.len() < max_rank.min(n) {
        let mut p = 0;
        for i in 1..n {
            if diag[i] > diag[p] {
                p = i;
            }
        }
        if diag[p] <= tol {
            break;
        }
        let root = diag[p].sqrt();
        let (sp, vp) = (d.states[p], d.scores[p]);
        let mut col: Vec<f64> = (0..n)
            .map(|i| kernel.eval(d.states[i], d.scores[i], sp, vp))
            .collect();
        for c in &cols {
            let cp = c[p];
            for (x, ci) in col.iter_mut().zip(c) {
                *x -= ci * cp;
            }
        }
        for x in col.iter_mut() {
            *x /= root;
        }
        col[p] = root;
        // Earlier pivots are reproduced exactly; keep the pivot block triangular.
        for &q in &pivots {
            col[q] = 0.0;
        }
        for (di, ci) in diag.iter_mut().zip(&col) {
            *di -= ci * ci;
        }
        diag[p] = 0.0;
        pivots.push(p);
        cols.push(col);
    }
    let r = cols.len();
    LowRank {
        g: DMatrix::from_fn(n, r, |i, j| cols[j][i]),
        pivots,
    }
}

impl LowRank {
    /// Dual coefficients on the pivot points from `β`: solves `Lᵀ c = β`.
    fn coefficients(&self, beta: &DVector<f64>) -> Vec<f64> {
        let r = self.pivots.len();
        let mut c = vec![0.0; r];
        for k in (0..r).rev() {
            let mut acc = beta[k];
            for (j, cj) in c.iter().enumerate().skip(k + 1) {
                acc -= self.g[(self.pivots[j], k)] * cj;
            }
            c[k] = acc / self.g[(self.pivots[k], k)];
        }
        c
    }
}

fn log1pexp(f: f64) -> f64 {
    if f > 0.0 {
        f + (-f).exp().ln_1p()
    } else {
        f.exp().ln_1p()
    }
}

fn objective(f: &DVector<f64>, beta: &DVector<f64>, d: &Design, lambda: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..d.len() {
        total += d.weights[i] * (log1pexp(f[i]) - d.labels[i] * f[i]);
    }
    total + lambda * beta.dot(beta)
}

struct NewtonFit {
    beta: DVector<f64>,
    trace: Vec<f64>,
}

fn newton(
    g: &DMatrix<f64>,
    d: &Design,
    lambda: f64,
    start: DVector<f64>,
    config: &LearnerConfig,
) -> Result<NewtonFit> {
    let n = d.len();
    let r = g.ncols();
    let mut beta = start;
    let mut f = g * &beta;
    let mut current = objective(&f, &beta, d, lambda);
    let mut trace = vec![current];
    let mut last_change = f64::INFINITY;
    let mut residual = DVector::zeros(n);
    for _ in 0..config.max_iterations {
        let mut scaled = g.clone();
        for i in 0..n {
            let mu = logistic(f[i]);
            residual[i] = d.weights[i] * (mu - d.labels[i]);
            let h = (d.weights[i] * mu * (1.0 - mu)).sqrt();
            scaled.row_mut(i).scale_mut(h);
        }
        let grad = g.tr_mul(&residual) + &beta * (2.0 * lambda);
        let mut hessian = scaled.tr_mul(&scaled);
        for k in 0..r {
            hessian[(k, k)] += 2.0 * lambda;
        }
        let step = solve_spd(hessian, -grad);

        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let candidate = &beta + &step * t;
            let fc = g * &candidate;
            let value = objective(&fc, &candidate, d, lambda);
            if value <= current {
                accepted = Some((candidate, fc, value));
                break;
            }
            t *= 0.5;
        }
        let Some((candidate, fc, value)) = accepted else {
            // No descent left at machine precision.
            return Ok(NewtonFit { beta, trace });
        };
        if lambda == 0.0 && fc.amax() > 35.0 {
            return Err(Error::Separable(
                "log-odds diverge without a penalty; the labels are separable".into(),
            ));
        }
        last_change = current - value;
        beta = candidate;
        f = fc;
        current = value;
        trace.push(current);
        if last_change < config.tolerance {
            return Ok(NewtonFit { beta, trace });
        }
    }
    Err(Error::NonConvergence {
        iterations: config.max_iterations,
        last_change,
        last_iterate: beta.iter().copied().collect(),
    })
}

fn solve_spd(mut h: DMatrix<f64>, rhs: DVector<f64>) -> DVector<f64> {
    let scale = (0..h.nrows()).map(|k| h[(k, k)]).fold(0.0, f64::max).max(1e-300);
    let mut jitter = 0.0;
    loop {
        if let Some(chol) = h.clone().cholesky() {
            return chol.solve(&rhs);
        }
        jitter = if jitter == 0.0 { scale * 1e-12 } else { jitter * 10.0 };
        for k in 0..h.nrows() {
            h[(k, k)] += jitter;
        }
    }
}

/// Clamp keeping fitted probabilities strictly inside (0, 1).
fn open_unit(p: f64) -> f64 {
    p.clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

/// Value of the lower uncertainty bound with what happened computing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LubValue {
    pub value: f64,
    /// The score was outside the training range, so the bound is 1.
    pub exploration: bool,
    /// `π̂ − ηδ̂` was negative and has been raised to 0.
    pub clamped: bool,
}

/// A fitted log-odds surface `f̂(s, v) = Σ c_i K_s(s, s_i) K_v(v, v_i)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedAcceptanceModel {
    pub kernel: KernelParams,
    pub lambda: f64,
    pub train_states: Vec<f64>,
    pub train_scores: Vec<f64>,
    /// Dual coefficient per training point; zero off the retained basis.
    pub coefficients: Vec<f64>,
    pub score_range: (f64, f64),
    /// States over which δ̂ is extremized: the observed state range.
    pub state_grid: Vec<f64>,
    /// `(score, δ̂)` over an equispaced grid of the training range.
    pub delta_table: Vec<(f64, f64)>,
    /// Penalized objective after each accepted Newton step.
    pub objective_trace: Vec<f64>,
    #[serde(skip)]
    groups: Groups,
}

/// Expansion terms grouped by distinct training state, so that evaluating
/// many scores at one state costs one state-kernel row.
#[derive(Debug, Clone, Default)]
struct Groups {
    states: Vec<f64>,
    members: Vec<Vec<(f64, f64)>>,
    /// `K_s(grid[g], states[d])`, row-major over the state grid.
    grid_rows: Vec<f64>,
}

impl PartialEq for FittedAcceptanceModel {
    fn eq(&self, other: &Self) -> bool {
        self.kernel == other.kernel
            && self.lambda == other.lambda
            && self.train_states == other.train_states
            && self.train_scores == other.train_scores
            && self.coefficients == other.coefficients
            && self.score_range == other.score_range
            && self.state_grid == other.state_grid
            && self.delta_table == other.delta_table
            && self.objective_trace == other.objective_trace
    }
}

impl FittedAcceptanceModel {
    /// Assembles a model from its stored parts.
    pub fn from_parts(
        kernel: KernelParams,
        lambda: f64,
        train_states: Vec<f64>,
        train_scores: Vec<f64>,
        coefficients: Vec<f64>,
        state_grid_points: usize,
    ) -> Result<Self> {
        if train_states.len() != train_scores.len() || train_states.len() != coefficients.len() {
            return Err(Error::Domain("training arrays differ in length".into()));
        }
        if train_scores.is_empty() {
            return Err(Error::Domain("a model needs training points".into()));
        }
        let lo = train_scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = train_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // δ̂ is extremized over observed states only; beyond them the fit
        // decays toward π̂ = 1/2 and would report spurious uncertainty.
        let s_lo = train_states.iter().copied().fold(f64::INFINITY, f64::min);
        let s_hi = train_states.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let grid = state_grid(state_grid_points).into_iter().map(|t| s_lo + (s_hi - s_lo) * t).collect();
        let mut model = FittedAcceptanceModel {
            kernel,
            lambda,
            train_states,
            train_scores,
            coefficients,
            score_range: (lo, hi),
            state_grid: grid,
            delta_table: Vec::new(),
            objective_trace: Vec::new(),
            groups: Groups::default(),
        };
        model.rebuild();
        model.delta_table = (0..=50)
            .map(|i| {
                let v = lo + (hi - lo) * i as f64 / 50.0;
                (v, model.delta_hat(v))
            })
            .collect();
        Ok(model)
    }

    fn rebuild(&mut self) {
        let mut index: Vec<(u64, usize)> = Vec::new();
        let mut groups = Groups::default();
        for i in 0..self.coefficients.len() {
            let c = self.coefficients[i];
            if c == 0.0 {
                continue;
            }
            let key = self.train_states[i].to_bits();
            let slot = match index.iter().find(|(k, _)| *k == key) {
                Some(&(_, slot)) => slot,
                None => {
                    index.push((key, groups.states.len()));
                    groups.states.push(self.train_states[i]);
                    groups.members.push(Vec::new());
                    groups.states.len() - 1
                }
            };
            groups.members[slot].push((self.train_scores[i], c));
        }
        groups.grid_rows = self
            .state_grid
            .iter()
            .flat_map(|&s| {
                let kernel = self.kernel;
                groups.states.iter().map(move |&sd| kernel.state_kernel(s, sd)).collect::<Vec<_>>()
            })
            .collect();
        self.groups = groups;
    }

    /// Number of distinct-state groups in the expansion.
    pub fn group_count(&self) -> usize {
        self.groups.states.len()
    }

    /// Number of training points with a nonzero coefficient.
    pub fn basis_size(&self) -> usize {
        self.coefficients.iter().filter(|&&c| c != 0.0).count()
    }

    /// `K_s(state, ·)` against each group state.
    pub fn state_row(&self, state: f64) -> Vec<f64> {
        self.groups
            .states
            .iter()
            .map(|&sd| self.kernel.state_kernel(state, sd))
            .collect()
    }

    /// Score-side partial sums, one per group.
    pub fn project(&self, score: f64) -> Vec<f64> {
        self.groups
            .members
            .iter()
            .map(|m| m.iter().map(|&(v, c)| c * self.kernel.score_kernel(score, v)).sum())
            .collect()
    }

    pub fn predict_f(&self, state: f64, score: f64) -> f64 {
        dot(&self.state_row(state), &self.project(score))
    }

    /// Estimated acceptance probability, strictly inside (0, 1).
    pub fn predict_pi(&self, state: f64, score: f64) -> f64 {
        open_unit(logistic(self.predict_f(state, score)))
    }

    fn delta_from_projection(&self, projection: &[f64]) -> f64 {
        let k = projection.len();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for row in self.groups.grid_rows.chunks_exact(k.max(1)) {
            let f = if k == 0 { 0.0 } else { dot(row, projection) };
            lo = lo.min(f);
            hi = hi.max(f);
        }
        if k == 0 {
            return 0.0;
        }
        0.5 * (open_unit(logistic(hi)) - open_unit(logistic(lo)))
    }

    /// Half the range of π̂ over the state grid at `score`.
    pub fn delta_hat(&self, score: f64) -> f64 {
        self.delta_from_projection(&self.project(score))
    }

    pub fn in_range(&self, score: f64) -> bool {
        score >= self.score_range.0 && score <= self.score_range.1
    }

    /// `π̂ − ηδ̂` for in-range scores, 1 outside the training range.
    pub fn lower_uncertainty_bound(&self, state: f64, score: f64, eta: f64) -> LubValue {
        if !self.in_range(score) {
            return LubValue {
                value: 1.0,
                exploration: true,
                clamped: false,
            };
        }
        let raw = self.predict_pi(state, score) - eta * self.delta_hat(score);
        LubValue {
            value: raw.max(0.0),
            exploration: false,
            clamped: raw < 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut model: FittedAcceptanceModel = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<model>".into(),
            line: e.line(),
            field: "model".into(),
            message: e.to_string(),
        })?;
        model.rebuild();
        Ok(model)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits a model with fixed kernel and penalty.
pub fn fit_kernel_logistic(
    data: &[HistoryRecord],
    kernel: KernelParams,
    lambda: f64,
    config: &LearnerConfig,
) -> Result<FittedAcceptanceModel> {
    let design = Design::new(data)?;
    fit_design(&design, kernel, lambda, config)
}

fn fit_design(
    design: &Design,
    kernel: KernelParams,
    lambda: f64,
    config: &LearnerConfig,
) -> Result<FittedAcceptanceModel> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("penalty must be nonnegative, got {lambda}")));
    }
    let positives = design.labels.iter().filter(|&&y| y == 1.0).count();
    if lambda == 0.0 && (positives == 0 || positives == design.len()) {
        return Err(Error::Separable("a single label class needs a positive penalty".into()));
    }
    let low = pivoted_cholesky(design, &kernel, config.rank_tolerance, config.max_rank);
    let fit = newton(&low.g, design, lambda, DVector::zeros(low.g.ncols()), config)?;
    let pivot_coefs = low.coefficients(&fit.beta);
    let mut coefficients = vec![0.0; design.len()];
    for (&p, &c) in low.pivots.iter().zip(&pivot_coefs) {
        coefficients[p] = c;
    }
    let mut model = FittedAcceptanceModel::from_parts(
        kernel,
        lambda,
        design.states.clone(),
        design.scores.clone(),
        coefficients,
        config.state_grid_points,
    )?;
    model.objective_trace = fit.trace;
    Ok(model)
}

/// Fits a model choosing bandwidths by the median heuristic (unless fixed)
/// and the penalty by held-out log-likelihood over whole periods.
pub fn fit_acceptance_model(
    data: &[HistoryRecord],
    config: &LearnerConfig,
) -> Result<FittedAcceptanceModel> {
    let design = Design::new(data)?;
    let base = config
        .kernel
        .unwrap_or_else(|| KernelParams::median_heuristic(&design.states, &design.scores));
    if config.score_bandwidth_scales.is_empty() || config.score_bandwidth_scales.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Config("score bandwidth scales must be positive and nonempty".into()));
    }
    let mut best: Option<(KernelParams, f64, f64)> = None;
    for &scale in &config.score_bandwidth_scales {
        let kernel = KernelParams { bandwidth_score: base.bandwidth_score * scale, ..base };
        let (lambda, ll) = select_lambda(&design, &kernel, config)?;
        let ll = ll.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|b| ll > b.2) {
            best = Some((kernel, lambda, ll));
        }
    }
    let (kernel, lambda, _) = best.expect("at least one scale");
    fit_design(&design, kernel, lambda, config)
}

/// The penalty with the best held-out log-likelihood, and that likelihood
/// when there was a holdout to score.
fn select_lambda(design: &Design, kernel: &KernelParams, config: &LearnerConfig) -> Result<(f64, Option<f64>)> {
    let mut grid = config.lambda_grid.clone();
    if grid.is_empty() {
        return Err(Error::Config("empty penalty grid".into()));
    }
    grid.sort_by(|a, b| b.total_cmp(a));
    if config.holdout_every < 2 || (grid.len() == 1 && config.score_bandwidth_scales.len() == 1) {
        return Ok((grid[0], None));
    }
    let periods: Vec<u64> = {
        let mut p = design.periods.clone();
        p.sort_unstable();
        p.dedup();
        p
    };
    let held: std::collections::BTreeSet<u64> = periods
        .iter()
        .enumerate()
        .filter(|(i, _)| i % config.holdout_every == config.holdout_every - 1)
        .map(|(_, &t)| t)
        .collect();
    let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
        (0..design.len()).partition(|&i| held.contains(&design.periods[i]));
    if test_idx.is_empty() || train_idx.is_empty() {
        return Ok((grid[0], None));
    }
    let train = design.subset(&train_idx);
    let test = design.subset(&test_idx);
    let low = pivoted_cholesky(&train, kernel, config.rank_tolerance, config.max_rank);
    let cross: Vec<Vec<f64>> = low
        .pivots
        .iter()
        .map(|&p| {
            (0..test.len())
                .map(|i| kernel.eval(test.states[i], test.scores[i], train.states[p], train.scores[p]))
                .collect()
        })
        .collect();

    let mut beta = DVector::zeros(low.g.ncols());
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &grid {
        if lambda <= 0.0 {
            continue;
        }
        let fit = match newton(&low.g, &train, lambda, beta.clone(), config) {
            Ok(fit) => fit,
            Err(Error::NonConvergence { .. }) => continue,
            Err(e) => return Err(e),
        };
        let c = low.coefficients(&fit.beta);
        let mut ll = 0.0;
        for i in 0..test.len() {
            let f: f64 = c.iter().zip(&cross).map(|(ck, col)| ck * col[i]).sum();
            ll += test.weights[i] * (test.labels[i] * f - log1pexp(f));
        }
        if best.is_none_or(|(_, b)| ll > b) {
            best = Some((lambda, ll));
        }
        beta = fit.beta;
    }
    Ok(best.map_or((grid[0], None), |(l, ll)| (l, Some(ll))))
}

/// Model-backed π and δ for a fixed arm list, with the score-side kernel sums
/// cached per arm. With `lub` set, arms outside the training range get π = 1
/// and δ = 0, the exploration branch of the lower uncertainty bound.
pub struct ModelCurves<'m> {
    model: &'m FittedAcceptanceModel,
    ids: Vec<usize>,
    weights: Vec<f64>,
    deltas: Vec<f64>,
    explore: Vec<bool>,
    projections: Vec<f64>,
    groups: usize,
}

impl<'m> ModelCurves<'m> {
    pub fn new(model: &'m FittedAcceptanceModel, candidates: &[Candidate], lub: bool) -> Self {
        let groups = model.group_count();
        let mut projections = Vec::with_capacity(candidates.len() * groups);
        let mut deltas = Vec::with_capacity(candidates.len());
        let mut explore = Vec::with_capacity(candidates.len());
        for &(_, _, score) in candidates {
            let p = model.project(score);
            let out = lub && !model.in_range(score);
            deltas.push(if out { 0.0 } else { model.delta_from_projection(&p) });
            explore.push(out);
            projections.extend(p);
        }
        ModelCurves {
            model,
            ids: candidates.iter().map(|c| c.0).collect(),
            weights: candidates.iter().map(|c| c.1).collect(),
            deltas,
            explore,
            projections,
            groups,
        }
    }

    /// Arms routed through the exploration branch.
    pub fn exploring(&self) -> Vec<usize> {
        self.ids
            .iter()
            .zip(&self.explore)
            .filter(|(_, &e)| e)
            .map(|(&id, _)| id)
            .collect()
    }
}

impl ArmCurves for ModelCurves<'_> {
    fn ids(&self) -> &[usize] {
        &self.ids
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    fn pis_at(&self, state: f64, out: &mut [f64]) {
        let row = self.model.state_row(state);
        for (j, o) in out.iter_mut().enumerate() {
            *o = if self.explore[j] {
                1.0
            } else if self.groups == 0 {
                0.5
            } else {
                let p = &self.projections[j * self.groups..(j + 1) * self.groups];
                open_unit(logistic(dot(&row, p)))
            };
        }
    }
}
