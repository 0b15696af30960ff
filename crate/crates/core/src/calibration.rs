//! Choosing the state at which an agent evaluates acceptance probabilities.
//!
//! Lowering the calibrated state makes arms look less likely to accept, so
//! the greedy selection grows. The average-case calibrator keeps lowering it
//! while the marginal arms' expected utility outweighs their expected
//! over-quota penalty. The minimax calibrator balances the regret of the
//! least and most favorable states.

use std::collections::BTreeSet;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::StateDensity;
use crate::variational::{greedy_select_terms, variational_loss, ArmCurves, ArmTerm, CutoffResult};

/// Number of equispaced states scanned by the continuous calibrators.
pub const SCAN_POINTS: usize = 201;
/// Width at which a selection breakpoint counts as located.
pub const BISECTION_TOLERANCE: f64 = 1e-6;
/// Finite perturbation used for marginal sets.
pub const DEFAULT_DELTA_S: f64 = 1e-3;
const QUADRATURE_CELLS: usize = 1000;

/// Distribution of the unknown state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateDistribution {
    /// Support points with probabilities, sorted by state.
    Discrete(Vec<(f64, f64)>),
    Continuous(StateDensity),
}

impl StateDistribution {
    pub fn discrete(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("empty state support".into()));
        }
        let mut merged: Vec<(f64, f64)> = Vec::new();
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (s, p) in sorted {
            if !(0.0..=1.0).contains(&s) || !(p >= 0.0) {
                return Err(Error::Domain(format!("invalid support point ({s}, {p})")));
            }
            match merged.last_mut() {
                Some(last) if last.0 == s => last.1 += p,
                _ => merged.push((s, p)),
            }
        }
        let total: f64 = merged.iter().map(|m| m.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("support weights sum to {total}, not 1")));
        }
        merged.retain(|m| m.1 > 0.0);
        Ok(StateDistribution::Discrete(merged))
    }

    /// Empirical distribution of observed states.
    pub fn empirical(states: &[f64]) -> Result<Self> {
        let w = 1.0 / states.len().max(1) as f64;
        let points: Vec<(f64, f64)> = states.iter().map(|&s| (s, w)).collect();
        Self::discrete(&points)
    }

    /// Smallest and largest state with positive mass.
    pub fn support(&self) -> (f64, f64) {
        match self {
            StateDistribution::Discrete(p) => (p[0].0, p[p.len() - 1].0),
            StateDistribution::Continuous(_) => (0.0, 1.0),
        }
    }

    /// Points and masses used for expectations.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        match self {
            StateDistribution::Discrete(p) => p.clone(),
            StateDistribution::Continuous(d) => d.quadrature(0.0, 1.0, QUADRATURE_CELLS),
        }
    }

    /// One draw of the state.
    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match self {
            StateDistribution::Discrete(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(s, w) in p {
                    acc += w;
                    if u < acc {
                        return s;
                    }
                }
                p[p.len() - 1].0
            }
            StateDistribution::Continuous(d) => d.sample(rng),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, StateDistribution::Discrete(_))
    }
}

/// Everything a calibrator needs for one agent at one stage.
pub struct CalibrationProblem<'a> {
    pub curves: &'a dyn ArmCurves,
    pub distribution: &'a StateDistribution,
    pub eta: f64,
    pub penalty: f64,
    pub remaining_quota: usize,
    pub delta_s: f64,
}

/// A calibrated state with notes on how it was reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub state: f64,
    /// False when no solution was found and a fallback was returned.
    pub solved: bool,
    pub notes: Vec<String>,
}

impl<'a> CalibrationProblem<'a> {
    pub fn new(
        curves: &'a dyn ArmCurves,
        distribution: &'a StateDistribution,
        eta: f64,
        penalty: f64,
        remaining_quota: usize,
    ) -> Self {
        CalibrationProblem {
            curves,
            distribution,
            eta,
            penalty,
            remaining_quota,
            delta_s: DEFAULT_DELTA_S,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !(self.penalty >= 0.0) {
            return Err(Error::Domain("eta and penalty must be nonnegative".into()));
        }
        if !(self.delta_s > 0.0) {
            return Err(Error::Domain("delta_s must be positive".into()));
        }
        Ok(())
    }

    /// Greedy cutoff selection at `state`.
    pub fn selection(&self, state: f64) -> CutoffResult {
        greedy_select_terms(&self.curves.terms_at(state), self.eta, self.remaining_quota, self.penalty)
    }

    fn selected(&self, state: f64) -> Vec<usize> {
        self.selection(state).selected
    }

    /// Variational loss of the selection at `state` when the truth is `truth`.
    pub fn loss(&self, selected: &[usize], truth: f64) -> f64 {
        let terms: Vec<ArmTerm> = self
            .curves
            .terms_at(truth)
            .into_iter()
            .filter(|t| selected.binary_search(&t.id).is_ok())
            .collect();
        variational_loss(&terms, self.eta, 0, self.remaining_quota, self.penalty)
    }

    /// Expected loss of calibrating to `state` under the distribution.
    pub fn expected_loss(&self, state: f64) -> f64 {
        let selected = self.selected(state);
        self.distribution
            .nodes()
            .iter()
            .map(|&(t, p)| p * self.loss(&selected, t))
            .sum()
    }

    /// Largest loss of calibrating to `state` over the states considered possible.
    pub fn worst_case_loss(&self, state: f64) -> f64 {
        let selected = self.selected(state);
        self.worst_case_states()
            .iter()
            .map(|&t| self.loss(&selected, t))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn worst_case_states(&self) -> Vec<f64> {
        match self.distribution {
            StateDistribution::Discrete(p) => p.iter().map(|x| x.0).collect(),
            StateDistribution::Continuous(_) => scan_grid(0.0, 1.0),
        }
    }
}

fn scan_grid(lo: f64, hi: f64) -> Vec<f64> {
    (0..SCAN_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect()
}

/// `selector(state − delta_s) \ selector(state)`, sorted.
pub fn marginal_set(
    selector: impl Fn(f64) -> Vec<usize>,
    state: f64,
    delta_s: f64,
) -> Result<Vec<usize>> {
    if !(delta_s > 0.0) || state - delta_s < 0.0 {
        return Err(Error::Domain(format!(
            "marginal set needs 0 < delta_s <= state, got delta_s = {delta_s}, state = {state}"
        )));
    }
    let here: BTreeSet<usize> = selector(state).into_iter().collect();
    Ok(selector(state - delta_s)
        .into_iter()
        .filter(|id| !here.contains(id))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect())
}

/// π for every arm at every distribution node, cached for repeated sums.
struct NodeTable {
    nodes: Vec<(f64, f64)>,
    /// Row per node, column per arm position.
    pis: Vec<Vec<f64>>,
    position: std::collections::HashMap<usize, usize>,
}

impl NodeTable {
    fn new(problem: &CalibrationProblem) -> Self {
        let nodes = problem.distribution.nodes();
        let n = problem.curves.ids().len();
        let pis = nodes
            .iter()
            .map(|&(t, _)| {
                let mut row = vec![0.0; n];
                problem.curves.pis_at(t, &mut row);
                row
            })
            .collect();
        let position = problem.curves.ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
        NodeTable { nodes, pis, position }
    }

    /// Opportunity side: `Σ_M w (E[π | s* ≠ s] − ηδ) P(s* ≠ s)`.
    fn gain(&self, problem: &CalibrationProblem, marginal: &[usize], exclude: Option<f64>) -> f64 {
        let weights = problem.curves.weights();
        let deltas = problem.curves.deltas();
        let mut total = 0.0;
        for &id in marginal {
            let j = self.position[&id];
            for (row, &(t, p)) in self.pis.iter().zip(&self.nodes) {
                if exclude == Some(t) {
                    continue;
                }
                total += p * weights[j] * (row[j] - problem.eta * deltas[j]);
            }
        }
        total
    }

    /// Penalty side: `γ Σ_M ∫_{t > s} π(t) dF(t)`.
    fn cost(&self, problem: &CalibrationProblem, marginal: &[usize], above: f64) -> f64 {
        let mut total = 0.0;
        for &id in marginal {
            let j = self.position[&id];
            for (row, &(t, p)) in self.pis.iter().zip(&self.nodes) {
                if t > above {
                    total += p * row[j];
                }
            }
        }
        problem.penalty * total
    }
}

fn difference(larger: &[usize], smaller: &[usize]) -> Vec<usize> {
    larger.iter().copied().filter(|id| smaller.binary_search(id).is_err()).collect()
}

/// Locates the largest selection breakpoint in `(lo, hi]`, given that the
/// selections at the two ends differ. Returns `(below, at)`, states a hair
/// apart straddling the breakpoint.
fn bisect_change(problem: &CalibrationProblem, mut lo: f64, mut hi: f64, at_hi: &[usize]) -> (f64, f64) {
    while hi - lo > BISECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if problem.selected(mid) == at_hi {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// Average-case calibration.
///
/// Scans downward from the top of the support. At each point where the
/// selection grows, the added arms are kept if their expected variational
/// utility is at least their expected over-quota penalty; the first
/// breakpoint where that fails is the root. A selection piece with strictly
/// smaller expected loss replaces it.
pub fn calibrate_average(problem: &CalibrationProblem) -> Result<Calibration> {
    problem.validate()?;
    let table = NodeTable::new(problem);
    let root = match problem.distribution {
        StateDistribution::Discrete(points) => average_discrete(problem, &table, points),
        StateDistribution::Continuous(_) => average_continuous(problem, &table),
    };
    Ok(polish(problem, root, |s| problem.expected_loss(s)))
}

/// One state per distinct selection, scanning downward. Each representative
/// is the largest scanned state giving that selection.
fn selection_pieces(problem: &CalibrationProblem) -> Vec<f64> {
    match problem.distribution {
        StateDistribution::Discrete(points) => points.iter().rev().map(|p| p.0).collect(),
        StateDistribution::Continuous(_) => {
            let grid = scan_grid(0.0, 1.0);
            let mut upper = grid[grid.len() - 1];
            let mut at_upper = problem.selected(upper);
            let mut pieces = vec![upper];
            for &lower in grid.iter().rev().skip(1) {
                while problem.selected(lower) != at_upper {
                    let (below, _) = bisect_change(problem, lower, upper, &at_upper);
                    pieces.push(below);
                    upper = below;
                    at_upper = problem.selected(below);
                }
                upper = lower;
            }
            pieces
        }
    }
}

/// The balance conditions are first-order conditions and can have several
/// roots, or miss the optimum when the selection jumps by more than one arm.
/// The loss is piecewise constant in the calibrated state, so every piece is
/// checked and the root is replaced when a piece is strictly better.
fn polish(problem: &CalibrationProblem, root: Calibration, objective: impl Fn(f64) -> f64) -> Calibration {
    let mut best = (root.state, objective(root.state));
    let mut moved = false;
    for s in selection_pieces(problem) {
        let value = objective(s);
        if value < best.1 - 1e-9 * (1.0 + best.1.abs()) {
            best = (s, value);
            moved = true;
        }
    }
    let mut out = root;
    if moved {
        out.notes.push(format!("balance root {} improved to {}", out.state, best.0));
        out.state = best.0;
        out.solved = true;
    }
    out
}

fn average_discrete(problem: &CalibrationProblem, table: &NodeTable, points: &[(f64, f64)]) -> Calibration {
    let mut notes = Vec::new();
    let mut k = points.len() - 1;
    let mut current = problem.selected(points[k].0);
    while k > 0 {
        let candidate = points[k - 1].0;
        let next = problem.selected(candidate);
        let marginal = difference(&next, &current);
        if marginal.is_empty() {
            notes.push(format!("empty marginal set at {candidate}"));
        } else {
            let lhs = table.gain(problem, &marginal, Some(candidate));
            let rhs = table.cost(problem, &marginal, candidate);
            if lhs < rhs {
                return Calibration { state: points[k].0, solved: true, notes };
            }
        }
        current = next;
        k -= 1;
    }
    Calibration { state: points[0].0, solved: true, notes }
}

fn average_continuous(problem: &CalibrationProblem, table: &NodeTable) -> Calibration {
    let grid = scan_grid(0.0, 1.0);
    let mut notes = Vec::new();
    let mut upper = grid[grid.len() - 1];
    let mut at_upper = problem.selected(upper);
    let mut any_marginal = false;
    let mut g = grid.len() - 1;
    while g > 0 {
        let lower = grid[g - 1];
        let at_lower = problem.selected(lower);
        if at_lower == at_upper {
            upper = lower;
            g -= 1;
            continue;
        }
        let (below, at) = bisect_change(problem, lower, upper, &at_upper);
        let before = problem.selected(below);
        let marginal = difference(&before, &at_upper);
        if !marginal.is_empty() {
            any_marginal = true;
            let lhs = table.gain(problem, &marginal, None);
            let rhs = table.cost(problem, &marginal, at);
            if lhs < rhs {
                return Calibration { state: at, solved: true, notes };
            }
        }
        // Keep the added arms and continue from just below the breakpoint.
        upper = below;
        at_upper = before;
        if upper <= lower {
            g -= 1;
        }
    }
    if !any_marginal {
        notes.push("selection constant in the state; returning the support maximum".into());
        return Calibration { state: 1.0, solved: false, notes };
    }
    Calibration { state: 0.0, solved: true, notes }
}

/// Balance between the two sides of the worst-case condition, positive when
/// the selection at `state` is already large enough.
fn minimax_gap(problem: &CalibrationProblem, state: f64, lo_sel: &[ArmTerm], hi_sel: &[ArmTerm], lo: f64, hi: f64) -> f64 {
    let selected = problem.selected(state);
    let at_lo = problem.curves.terms_at(lo);
    let at_hi = problem.curves.terms_at(hi);
    let eta = problem.eta;
    let mut spread = 0.0;
    let mut over = 0.0;
    for (a, b) in at_lo.iter().zip(&at_hi) {
        if selected.binary_search(&a.id).is_ok() {
            spread += a.weight * (b.pi - a.pi);
            over += b.pi;
        }
    }
    let base_lo: f64 = lo_sel.iter().map(|t| t.utility(eta)).sum();
    let base_hi: f64 = hi_sel.iter().map(|t| t.utility(eta)).sum();
    let lhs = spread + base_lo;
    let rhs = base_hi + problem.penalty * over - problem.penalty * problem.remaining_quota as f64;
    lhs - rhs
}

/// Worst-case calibration.
///
/// Finds where the worst-case balance changes sign, scanning downward, and
/// among the states bracketing each change returns the one with the smallest
/// worst-case loss (ties to the larger state). Without a sign change the
/// support maximum is the root. A selection piece with strictly smaller
/// worst-case loss replaces it.
pub fn calibrate_minimax(problem: &CalibrationProblem) -> Result<Calibration> {
    problem.validate()?;
    let (lo, hi) = problem.distribution.support();
    let terms_for = |state: f64| -> Vec<ArmTerm> {
        let selected = problem.selected(state);
        problem
            .curves
            .terms_at(state)
            .into_iter()
            .filter(|t| selected.binary_search(&t.id).is_ok())
            .collect()
    };
    let lo_sel = terms_for(lo);
    let hi_sel = terms_for(hi);
    let gap = |s: f64| minimax_gap(problem, s, &lo_sel, &hi_sel, lo, hi);

    let candidates: Vec<f64> = match problem.distribution {
        StateDistribution::Discrete(points) => points.iter().rev().map(|p| p.0).collect(),
        StateDistribution::Continuous(_) => scan_grid(lo, hi).into_iter().rev().collect(),
    };
    let mut brackets: Vec<f64> = Vec::new();
    let mut prev = (candidates[0], gap(candidates[0]));
    for &s in &candidates[1..] {
        let value = gap(s);
        if (prev.1 > 0.0) != (value > 0.0) {
            if problem.distribution.is_discrete() {
                brackets.extend([prev.0, s]);
            } else {
                let (mut a, mut b) = (s, prev.0);
                let sign_b = prev.1 > 0.0;
                while b - a > BISECTION_TOLERANCE {
                    let mid = 0.5 * (a + b);
                    if (gap(mid) > 0.0) == sign_b {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                brackets.extend([b, a]);
            }
        }
        prev = (s, value);
    }
    if brackets.is_empty() {
        let root = Calibration {
            state: hi,
            solved: false,
            notes: vec!["worst-case condition has no sign change; returning the support maximum".into()],
        };
        return Ok(polish(problem, root, |s| problem.worst_case_loss(s)));
    }
    brackets.push(hi);
    let mut best = (hi, problem.worst_case_loss(hi));
    for &s in &brackets {
        let loss = problem.worst_case_loss(s);
        if loss < best.1 || (loss == best.1 && s > best.0) {
            best = (s, loss);
        }
    }
    let root = Calibration { state: best.0, solved: true, notes: Vec::new() };
    Ok(polish(problem, root, |s| problem.worst_case_loss(s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variational::{state_grid, Candidate, SurfaceCurves};

    fn a1_arms() -> Vec<Candidate> {
        (1..=100).map(|j| (j - 1, 1.0 + 2.0 * j as f64 / 100.0, 1.0 + 2.0 * j as f64 / 100.0)).collect()
    }

    fn a1_surface(s: f64, _v: f64) -> f64 {
        0.7 * s
    }

    #[test]
    fn two_state_example_calibrates_to_the_upper_state() {
        let arms = a1_arms();
        let curves = SurfaceCurves::new(&a1_surface, &arms, &[0.4, 0.6]).unwrap();
        let dist = StateDistribution::discrete(&[(0.6, 0.5), (0.4, 0.5)]).unwrap();
        let problem = CalibrationProblem::new(&curves, &dist, 0.0, 5.0, 10);
        assert_eq!(calibrate_average(&problem).unwrap().state, 0.6);
        assert_eq!(calibrate_minimax(&problem).unwrap().state, 0.6);
    }

    #[test]
    fn point_mass_returns_its_state() {
        let arms = a1_arms();
        let curves = SurfaceCurves::new(&a1_surface, &arms, &state_grid(11)).unwrap();
        let dist = StateDistribution::discrete(&[(0.3, 1.0)]).unwrap();
        let problem = CalibrationProblem::new(&curves, &dist, 0.0, 5.0, 10);
        assert_eq!(calibrate_average(&problem).unwrap().state, 0.3);
    }

    #[test]
    fn constant_selection_returns_the_top() {
        // π ignores the state, δ = 0: every state gives the same selection.
        let arms: Vec<Candidate> = (0..5).map(|j| (j, 1.0 + j as f64, 0.5)).collect();
        let flat = |_: f64, _: f64| 0.5;
        let curves = SurfaceCurves::new(&flat, &arms, &state_grid(11)).unwrap();
        let dist = StateDistribution::Continuous(crate::learning::fit_state_density(&[0.2, 0.5, 0.7]).unwrap());
        let problem = CalibrationProblem::new(&curves, &dist, 0.0, 5.0, 2);
        let avg = calibrate_average(&problem).unwrap();
        assert_eq!(avg.state, 1.0);
        assert!(!avg.solved);
        assert_eq!(calibrate_minimax(&problem).unwrap().state, 1.0);
    }

    #[test]
    fn marginal_set_isolates_breakpoints() {
        // Arm 0 joins below 0.5, arm 1 below 0.4995.
        let selector = |s: f64| {
            let mut v = Vec::new();
            if s < 0.5 {
                v.push(0);
            }
            if s < 0.4995 {
                v.push(1);
            }
            v
        };
        assert_eq!(marginal_set(selector, 0.8, 1e-3).unwrap(), Vec::<usize>::new());
        assert_eq!(marginal_set(selector, 0.5, 1e-3).unwrap(), vec![0, 1]);
        assert_eq!(marginal_set(selector, 0.5, 4e-4).unwrap(), vec![0]);
        assert!(marginal_set(selector, 0.0005, 1e-3).is_err());
    }

    #[test]
    fn marginal_set_on_a_two_arm_rate_breakpoint() {
        // Two arms with π = s; the second is needed once s·1 < quota share.
        let arms: Vec<Candidate> = vec![(0, 2.0, 0.0), (1, 1.0, 0.0)];
        let lin = |s: f64, _: f64| s;
        let curves = SurfaceCurves::new(&lin, &arms, &state_grid(11)).unwrap();
        let dist = StateDistribution::discrete(&[(0.5, 1.0)]).unwrap();
        let problem = CalibrationProblem::new(&curves, &dist, 0.0, 10.0, 1);
        // At s the first arm alone gives s < 1 accepted, so arm 1 enters iff
        // its utility s ≥ γ(2s − 1), i.e. s ≤ 10/19.
        let b = 10.0 / 19.0;
        let selector = |s: f64| problem.selection(s).selected;
        assert_eq!(selector(b + 1e-4), vec![0]);
        assert_eq!(selector(b - 1e-4), vec![0, 1]);
        assert_eq!(marginal_set(selector, b + 5e-5, 1e-3).unwrap(), vec![1]);
        assert!(marginal_set(selector, b + 2e-3, 1e-3).unwrap().is_empty());
    }
}
