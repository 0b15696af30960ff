//! Variational loss, rate ranking and the greedy cutoff with its slack bound.
//!
//! The greedy strategy ranks arms by variational utility per unit of
//! acceptance probability and stops where the expected acceptances reach the
//! remaining quota. When no prefix hits the quota exactly, it compares the
//! prefix just below (B⁻) with the one just above (B⁺). Its loss exceeds the
//! exhaustive optimum by at most `ue_dagger`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of equispaced states used to extremize over the state.
pub const DEFAULT_GRID_POINTS: usize = 101;

/// Largest instance `brute_force_optimal` will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Acceptance probability as a function of (state, score).
pub trait AcceptanceSurface: Sync {
    fn pi(&self, state: f64, score: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64 + Sync> AcceptanceSurface for F {
    fn pi(&self, state: f64, score: f64) -> f64 {
        self(state, score)
    }
}

/// `logistic(state_coef * s + score_coef * v + intercept)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticSurface {
    pub state_coef: f64,
    pub score_coef: f64,
    pub intercept: f64,
}

impl LogisticSurface {
    pub fn log_odds(&self, state: f64, score: f64) -> f64 {
        self.state_coef * state + self.score_coef * score + self.intercept
    }
}

impl AcceptanceSurface for LogisticSurface {
    fn pi(&self, state: f64, score: f64) -> f64 {
        logistic(self.log_odds(state, score))
    }
}

pub fn logistic(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// `points` equispaced states covering [0, 1].
pub fn state_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..points).map(|i| i as f64 / (points - 1) as f64).collect(),
    }
}

/// Half the range of π over the state grid at `score`.
pub fn uncertainty_measure(
    surface: &dyn AcceptanceSurface,
    grid: &[f64],
    score: f64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("empty state grid".into()));
    }
    let (lo, hi) = grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
        let p = surface.pi(s, score);
        (lo.min(p), hi.max(p))
    });
    Ok(0.5 * (hi - lo))
}

/// Confirms π stays in [0,1] and does not decrease along the grid at each score.
pub fn check_monotone(surface: &dyn AcceptanceSurface, grid: &[f64], scores: &[f64]) -> Result<()> {
    for &v in scores {
        let mut prev = f64::NEG_INFINITY;
        for &s in grid {
            let p = surface.pi(s, v);
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("pi({s}, {v}) = {p} outside [0,1]")));
            }
            if p < prev {
                return Err(Error::Domain(format!("pi decreases in the state at score {v}")));
            }
            prev = p;
        }
    }
    Ok(())
}

/// Rejects a nonzero regularizer at the last stage.
pub fn check_last_stage(eta: f64, stage: usize, stages: usize) -> Result<()> {
    if stage == stages && eta != 0.0 {
        return Err(Error::Config(format!("eta must be 0 at the last stage, got {eta}")));
    }
    Ok(())
}

/// An arm reduced to what the loss needs at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmTerm {
    pub id: usize,
    /// Latent utility `v + e`.
    pub weight: f64,
    pub pi: f64,
    pub delta: f64,
}

impl ArmTerm {
    /// Variational expected utility `w (π − ηδ)`.
    pub fn utility(&self, eta: f64) -> f64 {
        self.weight * (self.pi - eta * self.delta)
    }

    /// Variational utility per unit of acceptance probability; `None` when π = 0.
    pub fn rate(&self, eta: f64) -> Option<f64> {
        rate(self.weight, self.pi, self.delta, eta)
    }
}

/// `w (π − ηδ) / π`, undefined when π = 0.
pub fn rate(weight: f64, pi: f64, delta: f64, eta: f64) -> Option<f64> {
    (pi > 0.0).then(|| weight * (pi - eta * delta) / pi)
}

/// Terms for arms given as `(id, latent utility, score)` at `state`.
pub fn arm_terms(
    arms: &[(usize, f64, f64)],
    surface: &dyn AcceptanceSurface,
    grid: &[f64],
    state: f64,
) -> Result<Vec<ArmTerm>> {
    arms.iter()
        .map(|&(id, weight, score)| {
            Ok(ArmTerm {
                id,
                weight,
                pi: surface.pi(state, score),
                delta: uncertainty_measure(surface, grid, score)?,
            })
        })
        .collect()
}

/// Variational loss of pulling `pulled`, summed in arm-id order so equal
/// sets always produce bit-identical values.
pub fn variational_loss(
    pulled: &[ArmTerm],
    eta: f64,
    prior_accepts: usize,
    quota: usize,
    penalty: f64,
) -> f64 {
    let mut sorted: Vec<&ArmTerm> = pulled.iter().collect();
    sorted.sort_by_key(|t| t.id);
    let mut loss = 0.0;
    let mut accepts = 0.0;
    for t in sorted {
        loss += t.weight * (eta * t.delta - t.pi);
        accepts += t.pi;
    }
    let excess = accepts + prior_accepts as f64 - quota as f64;
    loss + penalty * excess.max(0.0)
}

/// Why an arm was left out of the ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exclusion {
    /// π = 0, so the rate is undefined.
    ZeroAcceptance,
    /// `1 − ηδ/π ≤ 0` or a zero latent utility: no positive variational utility.
    NonPositiveRate,
}

/// The greedy selection and how it was reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffResult {
    /// Cutoff level: the rate of the last selected arm, 0 when nothing is selected.
    pub b_hat: f64,
    pub used_plus_branch: bool,
    /// Selected arm ids, sorted.
    pub selected: Vec<usize>,
    /// `B⁺ \ B⁻`, empty when a prefix hits the quota exactly or never reaches it.
    pub boundary: Vec<usize>,
    /// The B⁻ selection, sorted.
    pub b_minus: Vec<usize>,
    pub ue_dagger: f64,
    pub excluded: Vec<(usize, Exclusion)>,
}

/// Strict ranking order: rate descending, then latent utility descending, then id.
fn rank_order(a: &(f64, ArmTerm), b: &(f64, ArmTerm)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then(b.1.weight.total_cmp(&a.1.weight))
        .then(a.1.id.cmp(&b.1.id))
}

/// Greedy cutoff selection over precomputed terms.
pub fn greedy_select_terms(
    terms: &[ArmTerm],
    eta: f64,
    remaining_quota: usize,
    penalty: f64,
) -> CutoffResult {
    let mut excluded = Vec::new();
    let mut ranked: Vec<(f64, ArmTerm)> = Vec::with_capacity(terms.len());
    for t in terms {
        match t.rate(eta) {
            None => excluded.push((t.id, Exclusion::ZeroAcceptance)),
            Some(r) if !(r > 0.0) => excluded.push((t.id, Exclusion::NonPositiveRate)),
            Some(r) => ranked.push((r, *t)),
        }
    }
    let empty = CutoffResult {
        b_hat: 0.0,
        used_plus_branch: false,
        selected: Vec::new(),
        boundary: Vec::new(),
        b_minus: Vec::new(),
        ue_dagger: 0.0,
        excluded: excluded.clone(),
    };
    if remaining_quota == 0 || ranked.is_empty() {
        return empty;
    }
    ranked.sort_by(rank_order);
    let q = remaining_quota as f64;

    let mut prefix = 0.0;
    let mut crossing = None;
    for (pos, (_, t)) in ranked.iter().enumerate() {
        prefix += t.pi;
        if prefix >= q {
            crossing = Some((pos, prefix));
            break;
        }
    }
    let ids = |n: usize| {
        let mut v: Vec<usize> = ranked[..n].iter().map(|(_, t)| t.id).collect();
        v.sort_unstable();
        v
    };

    let Some((m, prefix_plus)) = crossing else {
        // Every rankable arm fits under the quota.
        let b_minus = ids(ranked.len());
        let ue = ue_from_ranked(&ranked, q);
        return CutoffResult {
            b_hat: ranked.last().map(|r| r.0).unwrap_or(0.0),
            used_plus_branch: false,
            selected: b_minus.clone(),
            boundary: Vec::new(),
            b_minus,
            ue_dagger: ue,
            excluded,
        };
    };

    if prefix_plus == q {
        let selected = ids(m + 1);
        return CutoffResult {
            b_hat: ranked[m].0,
            used_plus_branch: false,
            selected: selected.clone(),
            boundary: Vec::new(),
            b_minus: selected,
            ue_dagger: 0.0,
            excluded,
        };
    }

    let boundary_arm = ranked[m].1;
    let ue = ue_from_ranked(&ranked[..m], q);
    let use_plus = boundary_arm.utility(eta) >= penalty * prefix_plus - penalty * q;
    let b_minus = ids(m);
    let (selected, b_hat) = if use_plus {
        (ids(m + 1), ranked[m].0)
    } else if m > 0 {
        (b_minus.clone(), ranked[m - 1].0)
    } else {
        (Vec::new(), ranked[0].0)
    };
    CutoffResult {
        b_hat,
        used_plus_branch: use_plus,
        selected,
        boundary: vec![boundary_arm.id],
        b_minus,
        ue_dagger: ue,
        excluded,
    }
}

fn ue_from_ranked(b_minus: &[(f64, ArmTerm)], q: f64) -> f64 {
    if b_minus.is_empty() {
        return 0.0;
    }
    let min_rate = b_minus.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let used: f64 = b_minus.iter().map(|r| r.1.pi).sum();
    (min_rate * (q - used)).max(0.0)
}

/// Candidate arm for surface-driven selection: `(id, latent utility, score)`.
pub type Candidate = (usize, f64, f64);

/// Greedy cutoff selection evaluating π and δ from a surface.
pub fn greedy_select(
    available: &[Candidate],
    surface: &dyn AcceptanceSurface,
    grid: &[f64],
    state: f64,
    eta: f64,
    remaining_quota: usize,
    penalty: f64,
) -> Result<CutoffResult> {
    if !(eta >= 0.0) {
        return Err(Error::Domain(format!("eta must be nonnegative, got {eta}")));
    }
    let terms = arm_terms(available, surface, grid, state)?;
    Ok(greedy_select_terms(&terms, eta, remaining_quota, penalty))
}

/// Slack bound of the greedy selection: the smallest rate in B⁻ times the
/// quota left unfilled by B⁻. An empty B⁻ gives 0.
pub fn ue_dagger(b_minus: &[ArmTerm], eta: f64, remaining_quota: usize) -> f64 {
    let min_rate = b_minus
        .iter()
        .filter_map(|t| t.rate(eta))
        .fold(f64::INFINITY, f64::min);
    if b_minus.is_empty() || !min_rate.is_finite() {
        return 0.0;
    }
    let used: f64 = b_minus.iter().map(|t| t.pi).sum();
    (min_rate * (remaining_quota as f64 - used)).max(0.0)
}

/// Exact minimizer of the variational loss over all subsets. Ties keep the
/// subset whose membership bitmask (arm position = bit) is smallest.
pub fn brute_force_optimal(
    available: &[ArmTerm],
    eta: f64,
    prior_accepts: usize,
    quota: usize,
    penalty: f64,
) -> Result<(Vec<usize>, f64)> {
    let n = available.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            size: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut best_mask = 0u32;
    let mut best = f64::INFINITY;
    let mut subset = Vec::with_capacity(n);
    for mask in 0u32..(1u32 << n) {
        subset.clear();
        subset.extend((0..n).filter(|b| mask >> b & 1 == 1).map(|b| available[b]));
        let loss = variational_loss(&subset, eta, prior_accepts, quota, penalty);
        if loss < best {
            best = loss;
            best_mask = mask;
        }
    }
    let mut ids: Vec<usize> = (0..n)
        .filter(|b| best_mask >> b & 1 == 1)
        .map(|b| available[b].id)
        .collect();
    ids.sort_unstable();
    Ok((ids, best))
}

/// π and δ for a fixed arm list, evaluated at many states.
///
/// Calibration sweeps the state while the arms stay put, so implementations
/// cache whatever depends on the score alone.
pub trait ArmCurves: Sync {
    fn ids(&self) -> &[usize];
    fn weights(&self) -> &[f64];
    fn deltas(&self) -> &[f64];
    /// Writes π at `state` for each arm into `out`.
    fn pis_at(&self, state: f64, out: &mut [f64]);

    fn terms_at(&self, state: f64) -> Vec<ArmTerm> {
        let mut pis = vec![0.0; self.ids().len()];
        self.pis_at(state, &mut pis);
        self.ids()
            .iter()
            .zip(self.weights())
            .zip(self.deltas())
            .zip(pis)
            .map(|(((&id, &weight), &delta), pi)| ArmTerm { id, weight, pi, delta })
            .collect()
    }
}

/// `ArmCurves` backed by an arbitrary surface.
pub struct SurfaceCurves<'a> {
    surface: &'a dyn AcceptanceSurface,
    ids: Vec<usize>,
    weights: Vec<f64>,
    scores: Vec<f64>,
    deltas: Vec<f64>,
}

impl<'a> SurfaceCurves<'a> {
    pub fn new(surface: &'a dyn AcceptanceSurface, candidates: &[Candidate], grid: &[f64]) -> Result<Self> {
        let deltas = candidates
            .iter()
            .map(|c| uncertainty_measure(surface, grid, c.2))
            .collect::<Result<Vec<_>>>()?;
        Ok(SurfaceCurves {
            surface,
            ids: candidates.iter().map(|c| c.0).collect(),
            weights: candidates.iter().map(|c| c.1).collect(),
            scores: candidates.iter().map(|c| c.2).collect(),
            deltas,
        })
    }
}

impl ArmCurves for SurfaceCurves<'_> {
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
        for (o, &v) in out.iter_mut().zip(&self.scores) {
            *o = self.surface.pi(state, v);
        }
    }
}

/// Terms for the given ids, in the order listed.
pub fn select_terms(terms: &[ArmTerm], ids: &[usize]) -> Vec<ArmTerm> {
    ids.iter()
        .map(|id| *terms.iter().find(|t| t.id == *id).expect("id present"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(id: usize, weight: f64, pi: f64, delta: f64) -> ArmTerm {
        ArmTerm { id, weight, pi, delta }
    }

    #[test]
    fn delta_of_two_state_line() {
        let surface = |s: f64, _v: f64| s;
        assert!((uncertainty_measure(&surface, &[0.4, 0.6], 1.0).unwrap() - 0.1).abs() < 1e-15);
        let flat = |_s: f64, _v: f64| 0.3;
        assert_eq!(uncertainty_measure(&flat, &state_grid(11), 1.0).unwrap(), 0.0);
        assert!(uncertainty_measure(&flat, &[], 1.0).is_err());
    }

    #[test]
    fn coarse_grid_tracks_dense_extremization() {
        let surface = |s: f64, v: f64| logistic(2.0 * s + v);
        let coarse = uncertainty_measure(&surface, &[0.0, 0.5, 1.0], 0.5).unwrap();
        let dense = uncertainty_measure(&surface, &state_grid(10_000), 0.5).unwrap();
        assert!((coarse - dense).abs() < 1e-3);
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate(2.0, 0.3, 0.1, 0.0), Some(2.0));
        assert!((rate(1.5, 0.6, 0.1, 0.5).unwrap() - 1.375).abs() < 1e-12);
        assert!(rate(1.0, 0.2, 0.5, 1.0).unwrap() <= 0.0);
        assert_eq!(rate(1.0, 0.0, 0.0, 0.0), None);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(variational_loss(&[], 0.3, 0, 2, 5.0), 0.0);
        let t = [term(0, 2.0, 0.5, 0.1)];
        assert_eq!(variational_loss(&t, 0.0, 0, 2, 5.0), -1.0);
        // Term by term: 2(0.2·0.1 − 0.5) + 1(0.2·0.2 − 0.9) + 3(0.2·0 − 0.8), accepts 2.2 over q=2.
        let ts = [term(0, 2.0, 0.5, 0.1), term(1, 1.0, 0.9, 0.2), term(2, 3.0, 0.8, 0.0)];
        let expected = 2.0 * (0.02 - 0.5) + (0.04 - 0.9) + 3.0 * (0.0 - 0.8) + 5.0 * 0.2;
        assert!((variational_loss(&ts, 0.2, 0, 2, 5.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn identical_arms_under_a_large_quota_are_all_selected() {
        let ts: Vec<ArmTerm> = (0..4).map(|i| term(i, 1.0, 0.5, 0.0)).collect();
        let r = greedy_select_terms(&ts, 0.0, 4, 5.0);
        assert_eq!(r.selected, vec![0, 1, 2, 3]);
        assert!(!r.used_plus_branch);
    }

    #[test]
    fn zero_quota_selects_nothing() {
        let ts = [term(0, 1.0, 0.5, 0.0)];
        assert!(greedy_select_terms(&ts, 0.0, 0, 5.0).selected.is_empty());
    }

    #[test]
    fn exact_hit_has_no_slack() {
        let ts: Vec<ArmTerm> = (0..4).map(|i| term(i, 2.0 - 0.1 * i as f64, 0.5, 0.0)).collect();
        let r = greedy_select_terms(&ts, 0.0, 1, 5.0);
        assert_eq!(r.selected, vec![0, 1]);
        assert_eq!(r.ue_dagger, 0.0);
        assert!(r.boundary.is_empty());
    }

    #[test]
    fn five_arm_slack_is_rate_times_gap() {
        // Rates equal weights at eta = 0; B⁻ = {0,1}, using 0.7 + 0.6 of q = 2.
        let ts = [
            term(0, 3.0, 0.7, 0.0),
            term(1, 2.5, 0.6, 0.0),
            term(2, 2.0, 0.9, 0.0),
            term(3, 1.5, 0.4, 0.0),
            term(4, 1.0, 0.9, 0.0),
        ];
        let r = greedy_select_terms(&ts, 0.0, 2, 5.0);
        assert_eq!(r.b_minus, vec![0, 1]);
        assert_eq!(r.boundary, vec![2]);
        assert!((r.ue_dagger - 2.5 * (2.0 - 1.3)).abs() < 1e-12);
        assert!((ue_dagger(&select_terms(&ts, &r.b_minus), 0.0, 2) - r.ue_dagger).abs() < 1e-15);
        // Boundary utility 1.8 against 5·(2.2 − 2) = 1.0: take B⁺.
        assert!(r.used_plus_branch);
        assert_eq!(r.selected, vec![0, 1, 2]);
    }

    #[test]
    fn minus_branch_when_overshoot_is_costly() {
        let ts = [term(0, 3.0, 0.7, 0.0), term(1, 2.0, 0.9, 0.0)];
        // Boundary utility 1.8 against 5·(1.6 − 1) = 3.
        let r = greedy_select_terms(&ts, 0.0, 1, 5.0);
        assert!(!r.used_plus_branch);
        assert_eq!(r.selected, vec![0]);
        assert!((r.b_hat - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rate_ties_fall_to_higher_utility_then_id() {
        let ts = [term(2, 1.0, 0.5, 0.0), term(1, 1.0, 0.5, 0.0), term(0, 0.5, 0.5, 0.0)];
        let r = greedy_select_terms(&ts, 0.0, 1, 5.0);
        assert_eq!(r.selected, vec![1, 2]);
        // Same rate 0.75 for both below; the higher-utility arm ranks first.
        let ts = [term(0, 0.75, 0.5, 0.0), term(1, 1.5, 1.0, 0.5)];
        let r = greedy_select_terms(&ts, 1.0, 1, 5.0);
        assert_eq!(r.selected, vec![1]);
    }

    #[test]
    fn unrankable_arms_are_excluded_with_reasons() {
        let ts = [term(0, 1.0, 0.0, 0.0), term(1, 1.0, 0.2, 0.3), term(2, 1.0, 0.5, 0.0)];
        let r = greedy_select_terms(&ts, 1.0, 2, 5.0);
        assert_eq!(r.selected, vec![2]);
        assert_eq!(
            r.excluded,
            vec![(0, Exclusion::ZeroAcceptance), (1, Exclusion::NonPositiveRate)]
        );
    }

    #[test]
    fn first_stage_of_the_three_agent_market_crosses_between_23_and_24() {
        // Every arm accepts with 0.6 · (1 − 0.3); 10 / 0.42 ≈ 23.8 arms fill the quota.
        let surface = |s: f64, _v: f64| s * 0.7;
        let arms: Vec<Candidate> = (1..=100).map(|j| (j - 1, 1.0 + 0.02 * j as f64, 0.0)).collect();
        let r = greedy_select(&arms, &surface, &state_grid(101), 0.6, 0.0, 10, 5.0).unwrap();
        assert_eq!(r.b_minus.len(), 23);
        assert_eq!(r.boundary.len(), 1);
        assert!(r.selected.len() == 23 || r.selected.len() == 24);
    }

    #[test]
    fn brute_force_small_cases() {
        let good = [term(0, 1.0, 0.5, 0.0)];
        assert_eq!(brute_force_optimal(&good, 0.0, 0, 1, 5.0).unwrap().0, vec![0]);
        let bad = [term(0, 1.0, 0.2, 0.5)];
        assert!(brute_force_optimal(&bad, 1.0, 0, 1, 5.0).unwrap().0.is_empty());
        let big: Vec<ArmTerm> = (0..21).map(|i| term(i, 1.0, 0.5, 0.0)).collect();
        assert!(matches!(
            brute_force_optimal(&big, 0.0, 0, 1, 5.0),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn last_stage_guard() {
        assert!(check_last_stage(0.1, 2, 2).is_err());
        assert!(check_last_stage(0.1, 1, 2).is_ok());
        assert!(check_last_stage(0.0, 2, 2).is_ok());
    }
}
