//! State representation and the single-step update of the mixed Deffuant model.
//!
//! At each time step one edge is drawn uniformly from the current social
//! edge set. If the two endpoints are within the confidence threshold, both
//! move toward each other by the fraction `mu(t)` of their gap.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeSet, GraphSchedule};

/// Index of an agent, in `[0, n)`.
pub type AgentId = usize;

/// Norm used for every opinion distance in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    Euclidean,
    L1,
    Linf,
}

impl Norm {
    /// Norm of a vector.
    #[inline]
    pub fn length(self, v: &[f64]) -> f64 {
        match self {
            Norm::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// Distance between two points of equal dimension.
    #[inline]
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Norm::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Norm::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Norm::Linf => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
        }
    }

    /// The dual norm, so that `|<u, v>| <= self(v) * dual(u)`.
    pub fn dual(self) -> Norm {
        match self {
            Norm::Euclidean => Norm::Euclidean,
            Norm::L1 => Norm::Linf,
            Norm::Linf => Norm::L1,
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::Euclidean => "euclidean",
            Norm::L1 => "l1",
            Norm::Linf => "linf",
        })
    }
}

/// A single opinion vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Opinion(pub Vec<f64>);

impl Opinion {
    pub fn new(coords: Vec<f64>) -> Self {
        Opinion(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Opinion {
    fn from(v: Vec<f64>) -> Self {
        Opinion(v)
    }
}

impl AsRef<[f64]> for Opinion {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Measures `a - b` in `norm`, checking dimensions.
pub fn opinion_distance(a: &Opinion, b: &Opinion, norm: Norm) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(norm.distance(a.as_slice(), b.as_slice()))
}

/// Positions of all agents at one time step, stored row-major (`n * dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionState {
    time: u64,
    dim: usize,
    coords: Vec<f64>,
}

impl OpinionState {
    pub fn new(dim: usize, opinions: &[Opinion]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dimension must be at least 1"));
        }
        let mut coords = Vec::with_capacity(opinions.len() * dim);
        for o in opinions {
            if o.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: o.dim(),
                });
            }
            coords.extend_from_slice(o.as_slice());
        }
        Self::from_flat(dim, coords)
    }

    /// Builds a state at time 0 from row-major coordinates.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dimension must be at least 1"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::config(format!(
                "{} coordinates do not split into rows of {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("opinions must be finite"));
        }
        Ok(OpinionState {
            time: 0,
            dim,
            coords,
        })
    }

    /// One-dimensional convenience constructor.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::from_flat(1, values.to_vec())
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn opinion(&self, i: AgentId) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn opinions(&self) -> impl ExactSizeIterator<Item = &[f64]> + Clone + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn to_opinions(&self) -> Vec<Opinion> {
        self.opinions().map(|o| Opinion(o.to_vec())).collect()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn distance(&self, i: AgentId, j: AgentId, norm: Norm) -> f64 {
        norm.distance(self.opinion(i), self.opinion(j))
    }

    /// Largest pairwise distance over all agents; zero for `n <= 1`.
    pub fn diameter(&self, norm: Norm) -> f64 {
        let n = self.len();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(self.distance(i, j, norm));
            }
        }
        best
    }

    pub(crate) fn copy_from(&mut self, other: &OpinionState) {
        self.time = other.time;
        self.dim = other.dim;
        self.coords.clear();
        self.coords.extend_from_slice(&other.coords);
    }
}

/// Model parameters shared by every step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub epsilon: f64,
    pub dim: usize,
    #[serde(default)]
    pub norm: Norm,
}

impl ModelParams {
    pub fn new(epsilon: f64, dim: usize, norm: Norm) -> Result<Self> {
        let p = ModelParams { epsilon, dim, norm };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if self.dim == 0 {
            return Err(Error::config("dimension must be at least 1"));
        }
        Ok(())
    }
}

/// Time-indexed convergence parameter `mu(t)`, always in `[0, 1/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MuSchedule {
    Constant { value: f64 },
    /// Values cycle when `t` runs past the end of the list.
    Sequence { values: Vec<f64> },
    /// Fresh uniform draw from `[min, max]` each step.
    RandomUniform { min: f64, max: f64 },
}

const MU_MAX: f64 = 0.5;

fn mu_in_range(mu: f64) -> bool {
    (0.0..=MU_MAX).contains(&mu)
}

impl MuSchedule {
    pub fn constant(value: f64) -> Self {
        MuSchedule::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MuSchedule::Constant { value } if !mu_in_range(*value) => Err(Error::config(format!(
                "mu must lie in [0, 1/2], got {value}"
            ))),
            MuSchedule::Sequence { values } if values.is_empty() => {
                Err(Error::config("mu sequence must be nonempty"))
            }
            MuSchedule::Sequence { values } if !values.iter().all(|m| mu_in_range(*m)) => Err(
                Error::config("every mu in the sequence must lie in [0, 1/2]"),
            ),
            MuSchedule::RandomUniform { min, max }
                if !(mu_in_range(*min) && mu_in_range(*max) && min <= max) =>
            {
                Err(Error::config(format!(
                    "random mu needs 0 <= min <= max <= 1/2, got [{min}, {max}]"
                )))
            }
            _ => Ok(()),
        }
    }

    /// `mu(t)`. Only the random variant consumes randomness.
    pub fn value_at<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> f64 {
        match self {
            MuSchedule::Constant { value } => *value,
            MuSchedule::Sequence { values } => values[(t % values.len() as u64) as usize],
            MuSchedule::RandomUniform { min, max } => {
                if min == max {
                    *min
                } else {
                    rng.random_range(*min..=*max)
                }
            }
        }
    }

    /// Whether `inf_t mu(t) > 0` holds for every realization.
    pub fn has_positive_infimum(&self) -> bool {
        match self {
            MuSchedule::Constant { value } => *value > 0.0,
            MuSchedule::Sequence { values } => values.iter().all(|m| *m > 0.0),
            MuSchedule::RandomUniform { min, .. } => *min > 0.0,
        }
    }

    /// Whether `mu(t) = 0` for all `t`, so the state never moves.
    pub fn is_identically_zero(&self) -> bool {
        match self {
            MuSchedule::Constant { value } => *value == 0.0,
            MuSchedule::Sequence { values } => values.iter().all(|m| *m == 0.0),
            MuSchedule::RandomUniform { max, .. } => *max == 0.0,
        }
    }
}

/// Audit record for one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub time: u64,
    pub selected_edge: Option<(AgentId, AgentId)>,
    pub fired: bool,
    pub mu_used: f64,
}

/// Uniform draw from the current social edge set; `None` when it is empty.
pub fn select_pair<R: Rng + ?Sized>(social: &EdgeSet, rng: &mut R) -> Option<(AgentId, AgentId)> {
    let edges = social.as_slice();
    if edges.is_empty() {
        None
    } else {
        Some(edges[rng.random_range(0..edges.len())])
    }
}

/// Applies one update on `edge` in place and advances the clock.
pub fn step_in_place(
    state: &mut OpinionState,
    edge: (AgentId, AgentId),
    mu: f64,
    params: &ModelParams,
) -> Result<StepEvent> {
    let (i, j) = edge;
    let n = state.len();
    if i == j || i >= n || j >= n {
        return Err(Error::usage(format!(
            "invalid edge ({i}, {j}) for {n} agents"
        )));
    }
    if !mu_in_range(mu) {
        return Err(Error::usage(format!("mu {mu} outside [0, 1/2]")));
    }
    let time = state.time;
    let fired = state.distance(i, j, params.norm) <= params.epsilon;
    if fired {
        let d = state.dim;
        for k in 0..d {
            let xi = state.coords[i * d + k];
            let xj = state.coords[j * d + k];
            state.coords[i * d + k] = xi + mu * (xj - xi);
            state.coords[j * d + k] = xj + mu * (xi - xj);
        }
    }
    state.time += 1;
    Ok(StepEvent {
        time,
        selected_edge: Some(edge),
        fired,
        mu_used: mu,
    })
}

/// Functional form of [`step_in_place`].
pub fn step(
    state: &OpinionState,
    edge: (AgentId, AgentId),
    mu: f64,
    params: &ModelParams,
) -> Result<(OpinionState, StepEvent)> {
    let mut next = state.clone();
    let event = step_in_place(&mut next, edge, mu, params)?;
    Ok((next, event))
}

/// Everything that drives a trajectory besides the initial state and RNG.
#[derive(Debug, Clone, PartialEq)]
pub struct Dynamics {
    pub params: ModelParams,
    pub graph: GraphSchedule,
    pub mu: MuSchedule,
}

impl Dynamics {
    pub fn validate(&self, n: usize) -> Result<()> {
        self.params.validate()?;
        self.mu.validate()?;
        self.graph.validate(n)
    }
}

/// What an observer tells the driver after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// View of one completed step handed to observers.
pub struct StepContext<'a> {
    /// Time `t` of the pre-step state.
    pub time: u64,
    /// Social edge set `E(t)` used for selection.
    pub social: &'a EdgeSet,
    pub before: &'a OpinionState,
    pub after: &'a OpinionState,
    pub event: &'a StepEvent,
    pub params: &'a ModelParams,
}

/// Hook invoked by [`run_trajectory`]. Returning an error aborts the run.
pub trait Observer {
    fn start(
        &mut self,
        _initial: &OpinionState,
        _params: &ModelParams,
    ) -> std::result::Result<Flow, crate::invariants::Violation> {
        Ok(Flow::Continue)
    }

    fn observe(&mut self, ctx: &StepContext<'_>)
        -> std::result::Result<Flow, crate::invariants::Violation>;
}

/// Which parts of a run are retained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recording {
    /// Keep the full state every `stride` steps; `0` keeps only the initial state.
    pub stride: u64,
    pub events: bool,
}

impl Recording {
    /// Every state and event.
    pub const FULL: Recording = Recording {
        stride: 1,
        events: true,
    };
    /// Initial and final state only.
    pub const NONE: Recording = Recording {
        stride: 0,
        events: false,
    };

    pub fn every(stride: u64) -> Self {
        Recording {
            stride,
            events: true,
        }
    }
}

impl Default for Recording {
    fn default() -> Self {
        Recording::FULL
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Recorded states, starting with the initial state.
    pub states: Vec<OpinionState>,
    pub events: Vec<StepEvent>,
    pub final_state: OpinionState,
    /// Set when an observer stopped the run before the horizon.
    pub stopped_at: Option<u64>,
}

impl Trajectory {
    pub fn fired_steps(&self) -> usize {
        self.events.iter().filter(|e| e.fired).count()
    }
}

/// Runs `horizon` steps of select-then-update, calling observers after each.
pub fn run_trajectory<R: Rng + ?Sized>(
    initial: OpinionState,
    dynamics: &Dynamics,
    horizon: u64,
    recording: Recording,
    rng: &mut R,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory> {
    let n = initial.len();
    dynamics.validate(n)?;
    if initial.dim() != dynamics.params.dim {
        return Err(Error::DimensionMismatch {
            expected: dynamics.params.dim,
            got: initial.dim(),
        });
    }

    let mut states = vec![initial.clone()];
    let mut events = Vec::new();
    let mut stopped_at = None;

    for obs in observers.iter_mut() {
        if obs.start(&initial, &dynamics.params)? == Flow::Stop {
            stopped_at = Some(initial.time());
        }
    }
    if stopped_at.is_some() {
        return Ok(Trajectory {
            states,
            events,
            final_state: initial,
            stopped_at,
        });
    }

    let mut current = initial;
    let mut before = current.clone();
    let start = current.time();
    for t in start..start + horizon {
        let social = dynamics.graph.edges_at(t, n);
        let mu = dynamics.mu.value_at(t, rng);
        before.copy_from(&current);
        let event = match select_pair(&social, rng) {
            Some(edge) => step_in_place(&mut current, edge, mu, &dynamics.params)?,
            None => {
                current.time += 1;
                StepEvent {
                    time: t,
                    selected_edge: None,
                    fired: false,
                    mu_used: mu,
                }
            }
        };

        let ctx = StepContext {
            time: t,
            social: &social,
            before: &before,
            after: &current,
            event: &event,
            params: &dynamics.params,
        };
        let mut stop = false;
        for obs in observers.iter_mut() {
            if obs.observe(&ctx)? == Flow::Stop {
                stop = true;
            }
        }

        if recording.events {
            events.push(event);
        }
        let elapsed = current.time() - start;
        if stop || (recording.stride > 0 && elapsed.is_multiple_of(recording.stride)) {
            states.push(current.clone());
        }
        if stop {
            stopped_at = Some(current.time());
            break;
        }
    }
    if recording.stride > 0 && states.last().map(|s| s.time()) != Some(current.time()) {
        states.push(current.clone());
    }

    Ok(Trajectory {
        states,
        events,
        final_state: current,
        stopped_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p1(eps: f64) -> ModelParams {
        ModelParams::new(eps, 1, Norm::Euclidean).unwrap()
    }

    #[test]
    fn distance_examples() {
        let a = Opinion::new(vec![0.0, 0.0]);
        let b = Opinion::new(vec![3.0, 4.0]);
        assert_eq!(opinion_distance(&a, &b, Norm::Euclidean).unwrap(), 5.0);
        let c = Opinion::new(vec![0.7]);
        assert_eq!(opinion_distance(&c, &c, Norm::L1).unwrap(), 0.0);
        let d = Opinion::new(vec![1.0, 1.0]);
        assert_eq!(opinion_distance(&d, &a, Norm::Linf).unwrap(), 1.0);
        assert_eq!(opinion_distance(&d, &a, Norm::L1).unwrap(), 2.0);
    }

    #[test]
    fn distance_dimension_mismatch_is_config_error() {
        let err = opinion_distance(&Opinion::new(vec![0.0]), &Opinion::new(vec![0.0, 1.0]), Norm::L1)
            .unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn midpoint_when_mu_is_half() {
        let s = OpinionState::from_scalars(&[0.2, 0.4]).unwrap();
        let (next, ev) = step(&s, (0, 1), 0.5, &p1(0.5)).unwrap();
        assert!(ev.fired);
        assert!((next.opinion(0)[0] - 0.3).abs() < 1e-15);
        assert!((next.opinion(1)[0] - 0.3).abs() < 1e-15);
        assert_eq!(next.time(), 1);
    }

    #[test]
    fn no_update_beyond_threshold() {
        let s = OpinionState::from_scalars(&[0.0, 0.9]).unwrap();
        for mu in [0.0, 0.25, 0.5] {
            let (next, ev) = step(&s, (0, 1), mu, &p1(0.5)).unwrap();
            assert!(!ev.fired);
            assert_eq!(next.coords(), s.coords());
        }
    }

    #[test]
    fn partial_move_matches_hand_oracle() {
        // x' = x + mu (y - x), written out independently.
        let oracle = |x: f64, y: f64, mu: f64| x + mu * (y - x);
        let s = OpinionState::from_scalars(&[0.2, 0.4]).unwrap();
        let (next, _) = step(&s, (0, 1), 0.1, &p1(0.5)).unwrap();
        assert!((next.opinion(0)[0] - oracle(0.2, 0.4, 0.1)).abs() < 1e-15);
        assert!((next.opinion(1)[0] - oracle(0.4, 0.2, 0.1)).abs() < 1e-15);
        assert!((next.opinion(0)[0] - 0.22).abs() < 1e-15);
        assert!((next.opinion(1)[0] - 0.38).abs() < 1e-15);
    }

    #[test]
    fn threshold_comparison_is_inclusive() {
        let s = OpinionState::from_scalars(&[0.0, 0.5]).unwrap();
        let (_, ev) = step(&s, (0, 1), 0.5, &p1(0.5)).unwrap();
        assert!(ev.fired);
    }

    #[test]
    fn step_rejects_bad_preconditions() {
        let s = OpinionState::from_scalars(&[0.0, 0.5]).unwrap();
        assert!(matches!(step(&s, (1, 1), 0.5, &p1(1.0)), Err(Error::Usage(_))));
        assert!(matches!(step(&s, (0, 2), 0.5, &p1(1.0)), Err(Error::Usage(_))));
        assert!(matches!(step(&s, (0, 1), 0.6, &p1(1.0)), Err(Error::Usage(_))));
    }

    #[test]
    fn params_reject_nonpositive_epsilon() {
        assert!(ModelParams::new(0.0, 1, Norm::Euclidean).is_err());
        assert!(ModelParams::new(-1.0, 1, Norm::Euclidean).is_err());
        assert!(ModelParams::new(1.0, 0, Norm::Euclidean).is_err());
    }

    #[test]
    fn mu_schedule_validation_and_flags() {
        assert!(MuSchedule::constant(0.6).validate().is_err());
        assert!(MuSchedule::Sequence { values: vec![] }.validate().is_err());
        assert!(MuSchedule::RandomUniform { min: 0.3, max: 0.2 }.validate().is_err());
        let seq = MuSchedule::Sequence {
            values: vec![0.1, 0.0, 0.3],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(seq.value_at(4, &mut rng), 0.0);
        assert!(!seq.has_positive_infimum());
        assert!(MuSchedule::constant(0.0).is_identically_zero());
        let r = MuSchedule::RandomUniform { min: 0.1, max: 0.5 };
        assert!(r.has_positive_infimum());
        for t in 0..1000 {
            let m = r.value_at(t, &mut rng);
            assert!((0.1..=0.5).contains(&m));
        }
    }

    #[test]
    fn select_pair_single_edge_and_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let one = EdgeSet::from_pairs([(0, 1)], 2).unwrap();
        for _ in 0..50 {
            assert_eq!(select_pair(&one, &mut rng), Some((0, 1)));
        }
        assert_eq!(select_pair(&EdgeSet::empty(), &mut rng), None);
    }

    #[test]
    fn select_pair_is_uniform_over_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k3 = EdgeSet::complete(3);
        let mut counts = [0u32; 3];
        for _ in 0..30_000 {
            let e = select_pair(&k3, &mut rng).unwrap();
            let idx = k3.as_slice().iter().position(|x| *x == e).unwrap();
            counts[idx] += 1;
        }
        // chi-square with 2 dof; 13.8 is the 0.999 quantile.
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - 10_000.0).powi(2) / 10_000.0)
            .sum();
        assert!(chi2 < 13.8, "chi2 = {chi2}, counts = {counts:?}");
        for c in counts {
            assert!((c as i64 - 10_000).abs() <= 300, "{counts:?}");
        }
    }

    fn dynamics(graph: GraphSchedule, mu: MuSchedule, eps: f64) -> Dynamics {
        Dynamics {
            params: p1(eps),
            graph,
            mu,
        }
    }

    #[test]
    fn zero_horizon_returns_initial() {
        let s = OpinionState::from_scalars(&[0.1, 0.7]).unwrap();
        let d = dynamics(GraphSchedule::complete(2), MuSchedule::constant(0.5), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = run_trajectory(s.clone(), &d, 0, Recording::FULL, &mut rng, &mut []).unwrap();
        assert_eq!(tr.states, vec![s.clone()]);
        assert!(tr.events.is_empty());
        assert_eq!(tr.final_state, s);
    }

    #[test]
    fn equal_opinions_stay_constant() {
        let s = OpinionState::from_scalars(&[0.4, 0.4]).unwrap();
        let d = dynamics(
            GraphSchedule::complete(2),
            MuSchedule::RandomUniform { min: 0.0, max: 0.5 },
            0.1,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tr = run_trajectory(s.clone(), &d, 100, Recording::FULL, &mut rng, &mut []).unwrap();
        assert_eq!(tr.states.len(), 101);
        assert!(tr.states.iter().all(|x| x.coords() == s.coords()));
        assert_eq!(tr.events.len(), 100);
    }

    #[test]
    fn path_graph_contracts_to_consensus() {
        let s = OpinionState::from_scalars(&[0.0, 0.5, 1.0]).unwrap();
        let d = dynamics(GraphSchedule::path(3), MuSchedule::constant(0.5), 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tr = run_trajectory(s, &d, 10_000, Recording::every(100), &mut rng, &mut []).unwrap();
        assert!(tr.final_state.diameter(Norm::Euclidean) < 1e-6);
        assert_eq!(tr.states.len(), 101);
        assert_eq!(tr.events.len(), 10_000);
    }

    #[test]
    fn empty_social_graph_still_advances_time() {
        let s = OpinionState::from_scalars(&[0.0, 0.1]).unwrap();
        let d = dynamics(
            GraphSchedule::Constant(EdgeSet::empty()),
            MuSchedule::constant(0.5),
            1.0,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = run_trajectory(s, &d, 5, Recording::FULL, &mut rng, &mut []).unwrap();
        assert_eq!(tr.final_state.time(), 5);
        assert!(tr.events.iter().all(|e| e.selected_edge.is_none() && !e.fired));
    }

    #[test]
    fn single_agent_is_constant() {
        let s = OpinionState::from_scalars(&[0.3]).unwrap();
        let d = dynamics(GraphSchedule::complete(1), MuSchedule::constant(0.5), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tr = run_trajectory(s.clone(), &d, 20, Recording::FULL, &mut rng, &mut []).unwrap();
        assert_eq!(tr.final_state.coords(), s.coords());
        assert_eq!(tr.final_state.diameter(Norm::Euclidean), 0.0);
    }

    struct StopAfter(u64);
    impl Observer for StopAfter {
        fn observe(
            &mut self,
            ctx: &StepContext<'_>,
        ) -> std::result::Result<Flow, crate::invariants::Violation> {
            Ok(if ctx.time + 1 >= self.0 {
                Flow::Stop
            } else {
                Flow::Continue
            })
        }
    }

    #[test]
    fn observer_can_stop_early() {
        let s = OpinionState::from_scalars(&[0.0, 0.3, 0.9]).unwrap();
        let d = dynamics(GraphSchedule::complete(3), MuSchedule::constant(0.2), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut stop = StopAfter(7);
        let tr = run_trajectory(s, &d, 1000, Recording::every(5), &mut rng, &mut [&mut stop])
            .unwrap();
        assert_eq!(tr.stopped_at, Some(7));
        assert_eq!(tr.final_state.time(), 7);
        assert_eq!(tr.states.last().unwrap().time(), 7);
    }
}
