//! Trial ensembles, outcome classification and the consensus-probability
//! lower bound.
//!
//! Each trial draws i.i.d. uniform initial opinions, runs the dynamics with
//! early stopping, and is classified as
//!
//! * `Consensus` once the diameter is within `consensus_tol`, or once it is
//!   within `epsilon` on a schedule that is connected infinitely often with
//!   `inf mu > 0` (the opinion graph then stays complete and the profile equals
//!   the social graph from that point on);
//! * `Dissensus` once the opinion graph splits into components whose convex
//!   hulls are pairwise more than `epsilon` apart (no component can ever
//!   interact with another again), or when `mu` is identically zero;
//! * `Undecided` if neither happens before the horizon.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_trials, Execution};
use crate::geometry::{Ball, Distribution, OpinionSpace};
use crate::graph::{connected_components, opinion_graph};
use crate::invariants::{TauTracker, Violation};
use crate::model::{
    run_trajectory, AgentId, Dynamics, Flow, ModelParams, Norm, Observer, OpinionState, Recording,
    StepContext, Trajectory,
};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// How undecided trials enter the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndecidedPolicy {
    /// Counted in the denominator only.
    #[default]
    Conservative,
    /// Dropped from the denominator; diagnostics only.
    Optimistic,
}

/// Everything shared by the trials of one ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub n: usize,
    pub dynamics: Dynamics,
    pub space: OpinionSpace,
    pub distribution: Distribution,
    pub horizon: u64,
    pub consensus_tol: f64,
    /// Also record `tau_delta` for this `delta` while a trial runs.
    pub track_delta: Option<f64>,
    pub undecided: UndecidedPolicy,
}

pub const DEFAULT_CONSENSUS_TOL: f64 = 1e-6;
pub const DEFAULT_HORIZON: u64 = 1_000_000;

impl EnsembleConfig {
    pub fn new(n: usize, dynamics: Dynamics, space: OpinionSpace) -> Self {
        EnsembleConfig {
            n,
            dynamics,
            space,
            distribution: Distribution::Uniform,
            horizon: DEFAULT_HORIZON,
            consensus_tol: DEFAULT_CONSENSUS_TOL,
            track_delta: None,
            undecided: UndecidedPolicy::Conservative,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("need at least one agent"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if !(self.consensus_tol > 0.0) {
            return Err(Error::config("consensus_tol must be positive"));
        }
        if let Some(d) = self.track_delta {
            if !(d > 0.0) {
                return Err(Error::config("tracked delta must be positive"));
            }
        }
        self.space.validate()?;
        if self.space.dimension() != self.dynamics.params.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dynamics.params.dim,
                got: self.space.dimension(),
            });
        }
        self.dynamics.validate(self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consensus,
    Dissensus,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub verdict: Verdict,
    pub decided_at: Option<u64>,
    pub final_diameter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub outcome: TrialOutcome,
    pub tau_delta: Option<u64>,
}

/// Independent stream for one trial: ChaCha keyed by the master seed, with
/// the trial index as stream id, so no trial depends on the trial count.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// Lower bound on the distance between the convex hulls of two point groups.
///
/// For any direction `u`, `|<u, b - a>| <= |b - a| * dual(u)`, so the gap
/// between the groups' projections divided by `dual(u)` bounds the distance
/// from below. Directions tried: the coordinate axes, the centroid difference
/// and the closest-pair difference. Exact in one dimension.
pub fn hull_gap_lower_bound(state: &OpinionState, a: &[AgentId], b: &[AgentId], norm: Norm) -> f64 {
    let d = state.dim();
    let centroid = |g: &[AgentId]| {
        let mut c = vec![0.0; d];
        for &i in g {
            for (k, x) in state.opinion(i).iter().enumerate() {
                c[k] += x / g.len() as f64;
            }
        }
        c
    };
    let mut directions: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            e
        })
        .collect();
    if d > 1 {
        let (ca, cb) = (centroid(a), centroid(b));
        directions.push(cb.iter().zip(&ca).map(|(y, x)| y - x).collect());
        let mut best = (f64::INFINITY, 0, 0);
        for &i in a {
            for &j in b {
                let dist = state.distance(i, j, Norm::Euclidean);
                if dist < best.0 {
                    best = (dist, i, j);
                }
            }
        }
        let (_, i, j) = best;
        directions.push(state.opinion(j).iter().zip(state.opinion(i)).map(|(y, x)| y - x).collect());
    }

    let dot = |u: &[f64], x: &[f64]| u.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    let mut bound = 0.0f64;
    for u in &directions {
        let scale = norm.dual().length(u);
        if scale == 0.0 {
            continue;
        }
        let proj = |g: &[AgentId]| {
            g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let p = dot(u, state.opinion(i));
                (lo.min(p), hi.max(p))
            })
        };
        let ((alo, ahi), (blo, bhi)) = (proj(a), proj(b));
        let gap = (blo - ahi).max(alo - bhi);
        bound = bound.max(gap / scale);
    }
    bound
}

/// Whether the opinion graph is disconnected with every pair of components'
/// hulls more than `epsilon` apart.
pub fn clusters_separated(state: &OpinionState, params: &ModelParams) -> bool {
    let comps = connected_components(&opinion_graph(state, params), state.len());
    if comps.len() < 2 {
        return false;
    }
    comps.iter().enumerate().all(|(k, a)| {
        comps[k + 1..]
            .iter()
            .all(|b| hull_gap_lower_bound(state, a, b, params.norm) > params.epsilon)
    })
}

/// Per-state verdict rules for one ensemble configuration.
#[derive(Debug, Clone)]
pub struct OutcomeClassifier {
    params: ModelParams,
    consensus_tol: f64,
    eventual_consensus: bool,
    frozen: bool,
    pub decided: Option<(Verdict, u64)>,
}

impl OutcomeClassifier {
    pub fn new(cfg: &EnsembleConfig) -> Self {
        let dynamics = &cfg.dynamics;
        OutcomeClassifier {
            params: dynamics.params,
            consensus_tol: cfg.consensus_tol,
            eventual_consensus: dynamics.graph.connected_infinitely_often(cfg.n)
                && dynamics.mu.has_positive_infimum(),
            frozen: dynamics.mu.is_identically_zero(),
            decided: None,
        }
    }

    /// Verdict for `state`, if one can already be certified.
    pub fn inspect(&self, state: &OpinionState) -> Option<Verdict> {
        let diam = state.diameter(self.params.norm);
        if diam <= self.consensus_tol || (self.eventual_consensus && diam <= self.params.epsilon) {
            return Some(Verdict::Consensus);
        }
        if self.frozen || clusters_separated(state, &self.params) {
            return Some(Verdict::Dissensus);
        }
        None
    }

    fn record(&mut self, state: &OpinionState) -> Flow {
        match self.inspect(state) {
            Some(v) => {
                self.decided = Some((v, state.time()));
                Flow::Stop
            }
            None => Flow::Continue,
        }
    }
}

impl Observer for OutcomeClassifier {
    fn start(&mut self, initial: &OpinionState, _: &ModelParams) -> std::result::Result<Flow, Violation> {
        Ok(self.record(initial))
    }

    fn observe(&mut self, ctx: &StepContext<'_>) -> std::result::Result<Flow, Violation> {
        // Only a fired step with mu > 0 moves the state.
        if ctx.event.fired && ctx.event.mu_used > 0.0 {
            Ok(self.record(ctx.after))
        } else {
            Ok(Flow::Continue)
        }
    }
}

/// Classifies a recorded trajectory: the verdict of the first recorded state
/// that certifies one, otherwise `Undecided`.
pub fn classify_outcome(trajectory: &Trajectory, cfg: &EnsembleConfig) -> TrialOutcome {
    let classifier = OutcomeClassifier::new(cfg);
    let norm = cfg.dynamics.params.norm;
    for s in &trajectory.states {
        if let Some(verdict) = classifier.inspect(s) {
            return TrialOutcome {
                verdict,
                decided_at: Some(s.time()),
                final_diameter: s.diameter(norm),
            };
        }
    }
    TrialOutcome {
        verdict: Verdict::Undecided,
        decided_at: None,
        final_diameter: trajectory.final_state.diameter(norm),
    }
}

/// Initial state and per-trial dynamics for trial `trial_index`.
pub fn trial_setup(cfg: &EnsembleConfig, master_seed: u64, trial_index: u64) -> Result<(OpinionState, Dynamics, ChaCha8Rng)> {
    let mut rng = trial_rng(master_seed, trial_index);
    let graph_seed: u64 = rng.random();
    let Distribution::Uniform = cfg.distribution;
    let initial = cfg.space.sample_uniform(cfg.n, &mut rng)?;
    let dynamics = Dynamics {
        params: cfg.dynamics.params,
        graph: cfg.dynamics.graph.reseeded(graph_seed),
        mu: cfg.dynamics.mu.clone(),
    };
    Ok((initial, dynamics, rng))
}

/// Runs trial `trial_index` with early stopping at the first verdict.
pub fn run_trial(cfg: &EnsembleConfig, master_seed: u64, trial_index: u64) -> Result<TrialRecord> {
    run_trial_with_horizon(cfg, master_seed, trial_index, cfg.horizon)
}

pub fn run_trial_with_horizon(
    cfg: &EnsembleConfig,
    master_seed: u64,
    trial_index: u64,
    horizon: u64,
) -> Result<TrialRecord> {
    let (initial, dynamics, mut rng) = trial_setup(cfg, master_seed, trial_index)?;
    let mut classifier = OutcomeClassifier::new(cfg);
    let mut tau = cfg.track_delta.map(|d| TauTracker::new(d, false));
    let tr = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut classifier];
        if let Some(t) = tau.as_mut() {
            observers.push(t);
        }
        run_trajectory(initial, &dynamics, horizon, Recording::NONE, &mut rng, &mut observers)?
    };
    let final_diameter = tr.final_state.diameter(dynamics.params.norm);
    let (verdict, decided_at) = match classifier.decided {
        Some((v, t)) => (v, Some(t)),
        None => (Verdict::Undecided, None),
    };
    Ok(TrialRecord {
        trial_index,
        outcome: TrialOutcome {
            verdict,
            decided_at,
            final_diameter,
        },
        tau_delta: tau.and_then(|t| t.hit),
    })
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsensusEstimate {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Binomial standard error `sqrt(p (1 - p) / n)`.
    pub std_error: f64,
    pub n_trials: u64,
    pub n_consensus: u64,
    pub n_dissensus: u64,
    pub n_undecided: u64,
}

impl ConsensusEstimate {
    pub fn from_records(records: &[TrialRecord], policy: UndecidedPolicy) -> Self {
        let count = |v| records.iter().filter(|r| r.outcome.verdict == v).count() as u64;
        let (c, d, u) = (
            count(Verdict::Consensus),
            count(Verdict::Dissensus),
            count(Verdict::Undecided),
        );
        let total = records.len() as u64;
        let denom = match policy {
            UndecidedPolicy::Conservative => total,
            UndecidedPolicy::Optimistic => total - u,
        };
        let p_hat = if denom == 0 { 0.0 } else { c as f64 / denom as f64 };
        let (ci_low, ci_high) = wilson_interval(c, denom, Z_95);
        let std_error = if denom == 0 {
            0.0
        } else {
            (p_hat * (1.0 - p_hat) / denom as f64).sqrt()
        };
        ConsensusEstimate {
            p_hat,
            ci_low,
            ci_high,
            std_error,
            n_trials: total,
            n_consensus: c,
            n_dissensus: d,
            n_undecided: u,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub estimate: ConsensusEstimate,
    pub records: Vec<TrialRecord>,
}

/// Runs `n_trials` independent trials and estimates `P(consensus)`.
pub fn estimate_consensus_probability(
    cfg: &EnsembleConfig,
    n_trials: u64,
    master_seed: u64,
    exec: Execution,
) -> Result<EnsembleResult> {
    cfg.validate()?;
    if n_trials == 0 {
        return Err(Error::config("need at least one trial"));
    }
    let records = map_trials(n_trials, exec, |idx| run_trial(cfg, master_seed, idx))?;
    Ok(EnsembleResult {
        estimate: ConsensusEstimate::from_records(&records, cfg.undecided),
        records,
    })
}

/// `max(0, 1 - E|X - c| / (epsilon - r))`, defined only for `epsilon > r`.
pub fn theoretical_lower_bound(epsilon: f64, ball: &Ball, expected_dist: f64) -> Result<f64> {
    if epsilon <= ball.radius {
        return Err(Error::BoundInapplicable {
            epsilon,
            radius: ball.radius,
        });
    }
    Ok((1.0 - expected_dist / (epsilon - ball.radius)).max(0.0))
}

/// Estimate next to the bound. `pass` is false only when the whole interval
/// lies below an applicable bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: Option<f64>,
    pub bound_applicable: bool,
    pub margin: Option<f64>,
    pub pass: bool,
}

pub fn bound_comparison_report(estimate: &ConsensusEstimate, bound: Option<f64>) -> BoundReport {
    BoundReport {
        p_hat: estimate.p_hat,
        ci_low: estimate.ci_low,
        ci_high: estimate.ci_high,
        bound,
        bound_applicable: bound.is_some(),
        margin: bound.map(|b| estimate.ci_low - b),
        pass: bound.is_none_or(|b| estimate.ci_high >= b),
    }
}

/// Soft check that estimates do not fall as `epsilon` grows, beyond what the
/// intervals allow. Points are `(epsilon, estimate)` in any order.
pub fn epsilon_trend_consistent(points: &[(f64, ConsensusEstimate)]) -> bool {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ok = sorted.windows(2).all(|w| w[1].1.ci_high >= w[0].1.ci_low);
    if !ok {
        log::warn!("consensus estimates decrease in epsilon beyond interval overlap");
    }
    ok
}

/// `tau_delta` of trial `trial_index`, stopping as soon as it is reached. No
/// verdict-based early stopping.
pub fn run_tau_trial(cfg: &EnsembleConfig, delta: f64, master_seed: u64, trial_index: u64) -> Result<Option<u64>> {
    let (initial, dynamics, mut rng) = trial_setup(cfg, master_seed, trial_index)?;
    let mut tau = TauTracker::new(delta, true);
    run_trajectory(initial, &dynamics, cfg.horizon, Recording::NONE, &mut rng, &mut [&mut tau])?;
    Ok(tau.hit)
}

pub fn tau_delta_evidence(
    cfg: &EnsembleConfig,
    delta: f64,
    n_trials: u64,
    master_seed: u64,
    exec: Execution,
) -> Result<Vec<Option<u64>>> {
    cfg.validate()?;
    if !(delta > 0.0) {
        return Err(Error::config("delta must be positive"));
    }
    map_trials(n_trials, exec, |idx| run_tau_trial(cfg, delta, master_seed, idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeSet, GraphSchedule};
    use crate::model::{MuSchedule, Opinion};

    fn interval_cfg(n: usize, eps: f64, mu: f64) -> EnsembleConfig {
        EnsembleConfig::new(
            n,
            Dynamics {
                params: ModelParams::new(eps, 1, Norm::Euclidean).unwrap(),
                graph: GraphSchedule::complete(n),
                mu: MuSchedule::constant(mu),
            },
            OpinionSpace::Interval { a: 0.0, b: 1.0 },
        )
    }

    fn traj(states: Vec<OpinionState>) -> Trajectory {
        Trajectory {
            final_state: states.last().unwrap().clone(),
            states,
            events: vec![],
            stopped_at: None,
        }
    }

    #[test]
    fn equal_opinions_are_consensus_at_zero() {
        let cfg = interval_cfg(3, 0.3, 0.5);
        let out = classify_outcome(&traj(vec![OpinionState::from_scalars(&[0.4; 3]).unwrap()]), &cfg);
        assert_eq!(out.verdict, Verdict::Consensus);
        assert_eq!(out.decided_at, Some(0));
    }

    #[test]
    fn far_pair_is_dissensus_at_zero() {
        let cfg = interval_cfg(2, 0.3, 0.5);
        let out = classify_outcome(&traj(vec![OpinionState::from_scalars(&[0.0, 1.0]).unwrap()]), &cfg);
        assert_eq!(out.verdict, Verdict::Dissensus);
        assert_eq!(out.decided_at, Some(0));
        assert_eq!(out.final_diameter, 1.0);
    }

    #[test]
    fn within_epsilon_needs_the_flags() {
        let s = OpinionState::from_scalars(&[0.0, 0.2, 0.25]).unwrap();
        let cfg = interval_cfg(3, 0.3, 0.5);
        assert_eq!(OutcomeClassifier::new(&cfg).inspect(&s), Some(Verdict::Consensus));
        let mut no_graph = cfg.clone();
        no_graph.dynamics.graph = GraphSchedule::Constant(EdgeSet::from_pairs([(0, 1)], 3).unwrap());
        assert_eq!(OutcomeClassifier::new(&no_graph).inspect(&s), None);
        let mut weak_mu = cfg.clone();
        weak_mu.dynamics.mu = MuSchedule::RandomUniform { min: 0.0, max: 0.5 };
        assert_eq!(OutcomeClassifier::new(&weak_mu).inspect(&s), None);
    }

    #[test]
    fn chained_clusters_are_not_separated() {
        // 0 - 0.25 - 0.5 is one opinion component under eps 0.3.
        let s = OpinionState::from_scalars(&[0.0, 0.25, 0.5]).unwrap();
        let p = ModelParams::new(0.3, 1, Norm::Euclidean).unwrap();
        assert!(!clusters_separated(&s, &p));
        let s = OpinionState::from_scalars(&[0.0, 0.1, 0.5, 0.55]).unwrap();
        assert!(clusters_separated(&s, &p));
    }

    #[test]
    fn hull_gap_is_exact_in_1d() {
        let s = OpinionState::from_scalars(&[0.0, 0.2, 0.7, 0.9]).unwrap();
        let g = hull_gap_lower_bound(&s, &[0, 1], &[2, 3], Norm::Euclidean);
        assert!((g - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hull_gap_never_exceeds_point_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for norm in [Norm::Euclidean, Norm::L1, Norm::Linf] {
            for _ in 0..300 {
                let mut v: Vec<f64> = (0..12).map(|_| rng.random()).collect();
                for k in (6..12).step_by(2) {
                    v[k] += 1.5;
                }
                let s = OpinionState::from_flat(2, v).unwrap();
                let (a, b) = ([0, 1, 2], [3, 4, 5]);
                let g = hull_gap_lower_bound(&s, &a, &b, norm);
                let min_pair = a
                    .iter()
                    .flat_map(|&i| b.iter().map(move |&j| (i, j)))
                    .map(|(i, j)| s.distance(i, j, norm))
                    .fold(f64::INFINITY, f64::min);
                assert!(g <= min_pair + 1e-12, "{g} > {min_pair}");
                assert!(g > 0.0);
            }
        }
    }

    #[test]
    fn frozen_dynamics_decide_at_zero() {
        let cfg = interval_cfg(5, 0.3, 0.0);
        let r = run_trial(&cfg, 1, 0).unwrap();
        assert_eq!(r.outcome.verdict, Verdict::Dissensus);
        assert_eq!(r.outcome.decided_at, Some(0));
    }

    #[test]
    fn zero_mu_estimate_is_fraction_at_time_zero() {
        let mut cfg = interval_cfg(4, 0.3, 0.0);
        let est = estimate_consensus_probability(&cfg, 50, 3, Execution::Sequential).unwrap().estimate;
        assert_eq!(est.p_hat, 0.0);
        cfg.space = OpinionSpace::Interval { a: 0.0, b: 1e-7 };
        let est = estimate_consensus_probability(&cfg, 50, 3, Execution::Sequential).unwrap().estimate;
        assert_eq!(est.p_hat, 1.0);
    }

    #[test]
    fn epsilon_at_diameter_is_sure_consensus() {
        let cfg = interval_cfg(10, 1.0, 0.5);
        let r = estimate_consensus_probability(&cfg, 200, 9, Execution::default()).unwrap();
        assert_eq!(r.estimate.p_hat, 1.0);
        assert_eq!(r.estimate.n_consensus, 200);
    }

    #[test]
    fn verdicts_agree_with_longer_reruns() {
        let mut cfg = interval_cfg(10, 0.9, 0.5);
        cfg.horizon = 10_000;
        for idx in 0..100 {
            let short = run_trial(&cfg, 77, idx).unwrap();
            let long = run_trial_with_horizon(&cfg, 77, idx, 100_000).unwrap();
            if short.outcome.verdict != Verdict::Undecided {
                assert_eq!(short.outcome, long.outcome, "trial {idx}");
            }
        }
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(50, 100, Z_95);
        assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4);
        let (lo, hi) = wilson_interval(10, 10, Z_95);
        assert_eq!(hi, 1.0);
        assert!((lo - 0.7225).abs() < 1e-4);
        let (lo, hi) = wilson_interval(0, 10, Z_95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.2775).abs() < 1e-4);
    }

    #[test]
    fn bound_examples() {
        let unit = Ball {
            center: Opinion::new(vec![0.5]),
            radius: 0.5,
        };
        let b = theoretical_lower_bound(0.9, &unit, 0.25).unwrap();
        assert!((b - (4.0 * 0.9 - 3.0) / (4.0 * 0.9 - 2.0)).abs() < 1e-12);
        assert!((b - 0.375).abs() < 1e-12);

        // Ball of radius r in 1D with eps = 2r: (2 eps - 3r) / (2 eps - 2r) = 1/2.
        let r = 0.3;
        let ball = Ball {
            center: Opinion::new(vec![0.0]),
            radius: r,
        };
        assert!((theoretical_lower_bound(2.0 * r, &ball, r / 2.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(theoretical_lower_bound(0.9, &unit, 0.0).unwrap(), 1.0);
        assert!(matches!(
            theoretical_lower_bound(0.5, &unit, 0.25),
            Err(Error::BoundInapplicable { .. })
        ));
        assert_eq!(theoretical_lower_bound(0.6, &unit, 0.25).unwrap(), 0.0);
    }

    #[test]
    fn report_examples() {
        let est = |p: f64, lo: f64, hi: f64| ConsensusEstimate {
            p_hat: p,
            ci_low: lo,
            ci_high: hi,
            std_error: 0.0,
            n_trials: 100,
            n_consensus: 0,
            n_dissensus: 0,
            n_undecided: 0,
        };
        let r = bound_comparison_report(&est(1.0, 0.96, 1.0), Some(0.375));
        assert!(r.pass);
        assert!((r.margin.unwrap() - 0.585).abs() < 1e-12);
        assert!(!bound_comparison_report(&est(0.2, 0.15, 0.25), Some(0.375)).pass);
        assert!(bound_comparison_report(&est(0.2, 0.15, 0.25), None).pass);
    }

    #[test]
    fn estimates_are_deterministic_across_execution() {
        let mut cfg = interval_cfg(8, 0.7, 0.4);
        cfg.track_delta = Some(0.05);
        cfg.horizon = 20_000;
        let a = estimate_consensus_probability(&cfg, 64, 5, Execution::Sequential).unwrap();
        let b = estimate_consensus_probability(&cfg, 64, 5, Execution::Parallel { threads: Some(4) }).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.estimate, b.estimate);
        // A trial does not depend on how many trials run.
        let c = estimate_consensus_probability(&cfg, 10, 5, Execution::Sequential).unwrap();
        assert_eq!(&a.records[..10], c.records.as_slice());
    }

    #[test]
    fn optimistic_policy_drops_undecided() {
        let mk = |v| TrialRecord {
            trial_index: 0,
            outcome: TrialOutcome {
                verdict: v,
                decided_at: None,
                final_diameter: 0.0,
            },
            tau_delta: None,
        };
        let recs = [mk(Verdict::Consensus), mk(Verdict::Undecided), mk(Verdict::Dissensus), mk(Verdict::Consensus)];
        assert_eq!(ConsensusEstimate::from_records(&recs, UndecidedPolicy::Conservative).p_hat, 0.5);
        let opt = ConsensusEstimate::from_records(&recs, UndecidedPolicy::Optimistic);
        assert!((opt.p_hat - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(opt.n_undecided, 1);
    }

    #[test]
    fn trend_check() {
        let e = |lo: f64, hi: f64| ConsensusEstimate {
            p_hat: (lo + hi) / 2.0,
            ci_low: lo,
            ci_high: hi,
            std_error: 0.0,
            n_trials: 1,
            n_consensus: 0,
            n_dissensus: 0,
            n_undecided: 0,
        };
        assert!(epsilon_trend_consistent(&[(0.9, e(0.8, 0.9)), (0.6, e(0.1, 0.2)), (0.75, e(0.4, 0.5))]));
        assert!(!epsilon_trend_consistent(&[(0.6, e(0.8, 0.9)), (0.9, e(0.1, 0.2))]));
    }

    #[test]
    fn config_validation() {
        let mut cfg = interval_cfg(3, 0.5, 0.5);
        cfg.horizon = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = interval_cfg(3, 0.5, 0.5);
        cfg.consensus_tol = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = interval_cfg(3, 0.5, 0.5);
        cfg.space = OpinionSpace::Box { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] };
        assert!(matches!(cfg.validate(), Err(Error::DimensionMismatch { .. })));
    }
}
