//! Checks of the pairwise-update inequalities and the `Z_c` potential on live
//! trajectories, plus the stopping times `tau_delta` and `T_delta`.
//!
//! Every check reports a *slack* (right side minus left side). A slack below
//! `-SLACK_TOL` is a violation; the identities use the tighter `IDENTITY_TOL`.

use std::fmt;

use serde::Serialize;

use crate::geometry::z_potential_unchecked;
use crate::graph::{is_connected, longest_profile_edge, opinion_graph, profile_of, EdgeSet, GraphSchedule};
use crate::model::{AgentId, Flow, ModelParams, Norm, Observer, Opinion, OpinionState, StepContext};

/// Absolute tolerance for inequality slacks.
pub const SLACK_TOL: f64 = 1e-9;
/// Absolute tolerance for single-operation identities.
pub const IDENTITY_TOL: f64 = 1e-12;

/// Diagnostic for a failed check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub step: u64,
    pub invariant: String,
    pub slack: f64,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

impl Violation {
    pub fn new(step: u64, invariant: &str, slack: f64, detail: impl Into<String>) -> Self {
        Violation {
            step,
            invariant: invariant.to_string(),
            slack,
            detail: detail.into(),
            seed: None,
            config_digest: None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at step {} (slack {:e}): {}",
            self.invariant, self.step, self.slack, self.detail
        )
    }
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect()
}

/// Slacks of both pairwise inequalities for one step and one `c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaCheckReport {
    pub step: u64,
    pub inequality_1_slack: f64,
    pub inequality_2_slack: f64,
    pub c_used: Opinion,
}

impl LemmaCheckReport {
    pub fn ensure(&self) -> Result<(), Violation> {
        let detail = || format!("c = {:?}", self.c_used.as_slice());
        if self.inequality_1_slack < -SLACK_TOL {
            return Err(Violation::new(self.step, "lemma1_inequality_1", self.inequality_1_slack, detail()));
        }
        if self.inequality_2_slack < -SLACK_TOL {
            return Err(Violation::new(self.step, "lemma1_inequality_2", self.inequality_2_slack, detail()));
        }
        Ok(())
    }
}

/// Evaluates, for the interacting pair `(i, j)`,
///
/// ```text
/// |x_i' - c| + |x_j' - c| <= |x_i - c| + |x_j - c|
/// |x_i' - c| + |x_j' - c| <= |x_i - c| + |x_j - c| - 2|x_i - x_i'| + 2|c_ij - c|
/// ```
///
/// where `c_ij` is the pre-step midpoint of the pair.
pub fn check_lemma1(
    pre: &OpinionState,
    post: &OpinionState,
    edge: (AgentId, AgentId),
    c: &[f64],
    norm: Norm,
) -> LemmaCheckReport {
    let (i, j) = edge;
    let (xi, xj) = (pre.opinion(i), pre.opinion(j));
    let (yi, yj) = (post.opinion(i), post.opinion(j));
    let before = norm.distance(xi, c) + norm.distance(xj, c);
    let after = norm.distance(yi, c) + norm.distance(yj, c);
    let cij = midpoint(xi, xj);
    let rhs2 = before - 2.0 * norm.distance(xi, yi) + 2.0 * norm.distance(&cij, c);
    LemmaCheckReport {
        step: pre.time(),
        inequality_1_slack: before - after,
        inequality_2_slack: rhs2 - after,
        c_used: Opinion::new(c.to_vec()),
    }
}

/// Slack of `Z_c(t) - Z_c(t+1) >= 2(|x_i(t) - x_i(t+1)| - |c_ij(t) - c|)`,
/// with both potentials summed over all agents.
pub fn check_eq1(
    pre: &OpinionState,
    post: &OpinionState,
    edge: (AgentId, AgentId),
    c: &[f64],
    norm: Norm,
) -> f64 {
    let decrement = z_potential_unchecked(pre, c, norm) - z_potential_unchecked(post, c, norm);
    eq1_slack(pre, post, edge, c, norm, decrement)
}

fn eq1_slack(
    pre: &OpinionState,
    post: &OpinionState,
    (i, j): (AgentId, AgentId),
    c: &[f64],
    norm: Norm,
    decrement: f64,
) -> f64 {
    let cij = midpoint(pre.opinion(i), pre.opinion(j));
    decrement - 2.0 * (norm.distance(pre.opinion(i), post.opinion(i)) - norm.distance(&cij, c))
}

/// Verifies `Z_c` never rises by more than `SLACK_TOL` between consecutive
/// recorded states, for each sampled `c`.
pub fn check_zc_monotone(states: &[OpinionState], c_samples: &[Opinion], norm: Norm) -> Result<(), Violation> {
    for c in c_samples {
        let mut prev: Option<f64> = None;
        for s in states {
            let z = z_potential_unchecked(s, c.as_slice(), norm);
            if let Some(p) = prev {
                if z - p > SLACK_TOL {
                    return Err(Violation::new(
                        s.time(),
                        "zc_monotone",
                        p - z,
                        format!("c = {:?}: Z rose from {p} to {z}", c.as_slice()),
                    ));
                }
            }
            prev = Some(z);
        }
    }
    Ok(())
}

/// Residuals of the exact pairwise identities of one fired step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairIdentities {
    /// `max_k |x_i' + x_j' - x_i - x_j|`.
    pub sum_residual: f64,
    /// `| |x_i' - x_i| - |x_j' - x_j| |`.
    pub displacement_gap: f64,
    /// Euclidean distance of `x_i'` and `x_j'` from the segment line.
    pub collinearity_residual: f64,
    /// Amount by which a displacement leaves `[0, |x_j - x_i| / 2]`, in opinion units.
    pub coefficient_excess: f64,
}

impl PairIdentities {
    pub fn ensure(&self, step: u64) -> Result<(), Violation> {
        let checks = [
            ("pair_sum_conservation", self.sum_residual),
            ("equal_displacement", self.displacement_gap),
            ("collinearity", self.collinearity_residual),
            ("convex_coefficient", self.coefficient_excess),
        ];
        for (name, r) in checks {
            if r > IDENTITY_TOL {
                return Err(Violation::new(step, name, -r, format!("residual {r:e}")));
            }
        }
        Ok(())
    }
}

pub fn pair_identities(
    pre: &OpinionState,
    post: &OpinionState,
    (i, j): (AgentId, AgentId),
    norm: Norm,
) -> PairIdentities {
    let (xi, xj) = (pre.opinion(i), pre.opinion(j));
    let (yi, yj) = (post.opinion(i), post.opinion(j));
    let sum_residual = (0..xi.len())
        .map(|k| ((yi[k] + yj[k]) - (xi[k] + xj[k])).abs())
        .fold(0.0, f64::max);
    let displacement_gap = (norm.distance(xi, yi) - norm.distance(xj, yj)).abs();

    let gap: Vec<f64> = xj.iter().zip(xi).map(|(b, a)| b - a).collect();
    let gap_sq: f64 = gap.iter().map(|g| g * g).sum();
    let (mut collinearity_residual, mut coefficient_excess) = (0.0f64, 0.0f64);
    if gap_sq > 0.0 {
        let gap_len = gap_sq.sqrt();
        // Agent i moves along +gap, agent j along -gap.
        for (from, to, sign) in [(xi, yi, 1.0), (xj, yj, -1.0)] {
            let disp: Vec<f64> = to.iter().zip(from).map(|(b, a)| b - a).collect();
            let along = sign * disp.iter().zip(&gap).map(|(d, g)| d * g).sum::<f64>() / gap_len;
            let perp_sq: f64 = disp
                .iter()
                .zip(&gap)
                .map(|(d, g)| {
                    let r = d - sign * along * g / gap_len;
                    r * r
                })
                .sum();
            collinearity_residual = collinearity_residual.max(perp_sq.sqrt());
            coefficient_excess = coefficient_excess
                .max(-along)
                .max(along - gap_len / 2.0);
        }
    }
    PairIdentities {
        sum_residual,
        displacement_gap,
        collinearity_residual,
        coefficient_excess: coefficient_excess.max(0.0),
    }
}

/// `count` deterministic Halton points over the bounding box of `state`,
/// padded by a quarter of its width on each side.
pub fn lattice_points(state: &OpinionState, count: usize) -> Vec<Opinion> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    let d = state.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for x in state.opinions() {
        for k in 0..d {
            lo[k] = lo[k].min(x[k]);
            hi[k] = hi[k].max(x[k]);
        }
    }
    for k in 0..d {
        let w = hi[k] - lo[k];
        let pad = if w > 0.0 { w / 4.0 } else { 0.5 };
        lo[k] -= pad;
        hi[k] += pad;
    }
    (1..=count as u64)
        .map(|idx| {
            let coords = (0..d)
                .map(|k| lo[k] + (hi[k] - lo[k]) * radical_inverse(idx, PRIMES[k % PRIMES.len()]))
                .collect();
            Opinion::new(coords)
        })
        .collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut out) = (inv, 0.0);
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

/// Which checks an [`InvariantSuite`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Checks {
    pub lemma1: bool,
    pub eq1: bool,
    pub zc: bool,
    pub identities: bool,
    pub triviality: bool,
}

impl Checks {
    pub const ALL: Checks = Checks {
        lemma1: true,
        eq1: true,
        zc: true,
        identities: true,
        triviality: true,
    };
    pub const NONE: Checks = Checks {
        lemma1: false,
        eq1: false,
        zc: false,
        identities: false,
        triviality: false,
    };
}

/// Worst observed values, for reporting how close each check came to failing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteStats {
    pub steps: u64,
    pub fired_steps: u64,
    pub lemma1_checks: u64,
    pub min_inequality_1_slack: f64,
    pub min_inequality_2_slack: f64,
    pub eq1_checks: u64,
    pub min_eq1_slack: f64,
    pub zc_checks: u64,
    pub max_zc_increase: f64,
    pub identity_checks: u64,
    pub max_sum_residual: f64,
    pub max_displacement_gap: f64,
    pub max_collinearity_residual: f64,
    pub max_coefficient_excess: f64,
    pub diameter_checks: u64,
    pub max_diameter_increase: f64,
}

impl Default for SuiteStats {
    fn default() -> Self {
        SuiteStats {
            steps: 0,
            fired_steps: 0,
            lemma1_checks: 0,
            min_inequality_1_slack: f64::INFINITY,
            min_inequality_2_slack: f64::INFINITY,
            eq1_checks: 0,
            min_eq1_slack: f64::INFINITY,
            zc_checks: 0,
            max_zc_increase: f64::NEG_INFINITY,
            identity_checks: 0,
            max_sum_residual: 0.0,
            max_displacement_gap: 0.0,
            max_collinearity_residual: 0.0,
            max_coefficient_excess: 0.0,
            diameter_checks: 0,
            max_diameter_increase: f64::NEG_INFINITY,
        }
    }
}

impl SuiteStats {
    pub fn merge(&mut self, o: &SuiteStats) {
        self.steps += o.steps;
        self.fired_steps += o.fired_steps;
        self.lemma1_checks += o.lemma1_checks;
        self.min_inequality_1_slack = self.min_inequality_1_slack.min(o.min_inequality_1_slack);
        self.min_inequality_2_slack = self.min_inequality_2_slack.min(o.min_inequality_2_slack);
        self.eq1_checks += o.eq1_checks;
        self.min_eq1_slack = self.min_eq1_slack.min(o.min_eq1_slack);
        self.zc_checks += o.zc_checks;
        self.max_zc_increase = self.max_zc_increase.max(o.max_zc_increase);
        self.identity_checks += o.identity_checks;
        self.max_sum_residual = self.max_sum_residual.max(o.max_sum_residual);
        self.max_displacement_gap = self.max_displacement_gap.max(o.max_displacement_gap);
        self.max_collinearity_residual = self.max_collinearity_residual.max(o.max_collinearity_residual);
        self.max_coefficient_excess = self.max_coefficient_excess.max(o.max_coefficient_excess);
        self.diameter_checks += o.diameter_checks;
        self.max_diameter_increase = self.max_diameter_increase.max(o.max_diameter_increase);
    }
}

/// Observer running the selected checks after every step.
///
/// `c` ranges over a fixed point set (usually [`lattice_points`]) plus the
/// current pair midpoint.
pub struct InvariantSuite {
    checks: Checks,
    c_points: Vec<Opinion>,
    z_cache: Vec<f64>,
    diameter_cache: f64,
    pub stats: SuiteStats,
}

impl InvariantSuite {
    pub fn new(checks: Checks, c_points: Vec<Opinion>) -> Self {
        InvariantSuite {
            checks,
            z_cache: vec![0.0; c_points.len()],
            c_points,
            diameter_cache: 0.0,
            stats: SuiteStats::default(),
        }
    }

    /// Suite over `c_count` lattice points around `initial`.
    pub fn for_initial(checks: Checks, initial: &OpinionState, c_count: usize) -> Self {
        Self::new(checks, lattice_points(initial, c_count))
    }
}

fn zc_step(stats: &mut SuiteStats, time: u64, c: &[f64], z_before: f64, z_after: f64) -> Result<(), Violation> {
    let rise = z_after - z_before;
    stats.zc_checks += 1;
    stats.max_zc_increase = stats.max_zc_increase.max(rise);
    if rise > SLACK_TOL {
        return Err(Violation::new(
            time,
            "zc_monotone",
            -rise,
            format!("c = {c:?}: Z rose from {z_before} to {z_after}"),
        ));
    }
    Ok(())
}

fn pair_checks(
    stats: &mut SuiteStats,
    checks: Checks,
    ctx: &StepContext<'_>,
    edge: (AgentId, AgentId),
    c: &[f64],
    decrement: f64,
) -> Result<(), Violation> {
    let norm = ctx.params.norm;
    if checks.lemma1 {
        let r = check_lemma1(ctx.before, ctx.after, edge, c, norm);
        stats.lemma1_checks += 1;
        stats.min_inequality_1_slack = stats.min_inequality_1_slack.min(r.inequality_1_slack);
        stats.min_inequality_2_slack = stats.min_inequality_2_slack.min(r.inequality_2_slack);
        r.ensure()?;
    }
    if checks.eq1 {
        let slack = eq1_slack(ctx.before, ctx.after, edge, c, norm, decrement);
        stats.eq1_checks += 1;
        stats.min_eq1_slack = stats.min_eq1_slack.min(slack);
        if slack < -SLACK_TOL {
            return Err(Violation::new(ctx.time, "eq1_decrement", slack, format!("c = {c:?}")));
        }
    }
    Ok(())
}

impl Observer for InvariantSuite {
    fn start(&mut self, initial: &OpinionState, params: &ModelParams) -> Result<Flow, Violation> {
        for (z, c) in self.z_cache.iter_mut().zip(&self.c_points) {
            *z = z_potential_unchecked(initial, c.as_slice(), params.norm);
        }
        self.diameter_cache = initial.diameter(params.norm);
        Ok(Flow::Continue)
    }

    fn observe(&mut self, ctx: &StepContext<'_>) -> Result<Flow, Violation> {
        let norm = ctx.params.norm;
        self.stats.steps += 1;
        let fired_edge = ctx.event.selected_edge.filter(|_| ctx.event.fired);
        if fired_edge.is_some() {
            self.stats.fired_steps += 1;
        }

        let checks = self.checks;
        let need_z = checks.zc || (fired_edge.is_some() && checks.eq1);
        for (c, z_cached) in self.c_points.iter().zip(self.z_cache.iter_mut()) {
            let c = c.as_slice();
            let mut decrement = 0.0;
            if need_z {
                let z_before = *z_cached;
                let z_after = z_potential_unchecked(ctx.after, c, norm);
                *z_cached = z_after;
                decrement = z_before - z_after;
                if checks.zc {
                    zc_step(&mut self.stats, ctx.time, c, z_before, z_after)?;
                }
            }
            if let Some(edge) = fired_edge {
                pair_checks(&mut self.stats, checks, ctx, edge, c, decrement)?;
            }
        }

        if let Some(edge) = ctx.event.selected_edge {
            let cij = midpoint(ctx.before.opinion(edge.0), ctx.before.opinion(edge.1));
            let z_before = z_potential_unchecked(ctx.before, &cij, norm);
            let z_after = z_potential_unchecked(ctx.after, &cij, norm);
            if checks.zc {
                zc_step(&mut self.stats, ctx.time, &cij, z_before, z_after)?;
            }
            if fired_edge.is_some() {
                pair_checks(&mut self.stats, checks, ctx, edge, &cij, z_before - z_after)?;
            }
        }

        if let (true, Some(edge)) = (self.checks.identities, fired_edge) {
            let id = pair_identities(ctx.before, ctx.after, edge, norm);
            let s = &mut self.stats;
            s.identity_checks += 1;
            s.max_sum_residual = s.max_sum_residual.max(id.sum_residual);
            s.max_displacement_gap = s.max_displacement_gap.max(id.displacement_gap);
            s.max_collinearity_residual = s.max_collinearity_residual.max(id.collinearity_residual);
            s.max_coefficient_excess = s.max_coefficient_excess.max(id.coefficient_excess);
            id.ensure(ctx.time)?;
        }

        if self.checks.triviality {
            let d = ctx.after.diameter(norm);
            let rise = d - self.diameter_cache;
            self.stats.diameter_checks += 1;
            self.stats.max_diameter_increase = self.stats.max_diameter_increase.max(rise);
            self.diameter_cache = d;
            if rise > IDENTITY_TOL {
                return Err(Violation::new(
                    ctx.time,
                    "diameter_nonincreasing",
                    -rise,
                    format!("diameter rose to {d}"),
                ));
            }
        }
        Ok(Flow::Continue)
    }
}

/// `tau_delta` over recorded states: the first time every edge of the
/// profile `E(t) ∩ 𝒢(t)` has length at most `delta`.
pub fn track_tau_delta(
    states: &[OpinionState],
    schedule: &GraphSchedule,
    delta: f64,
    params: &ModelParams,
) -> Option<u64> {
    states.iter().find_map(|s| {
        let social = schedule.edges_at(s.time(), s.len());
        profile_ok(s, &social, delta, params).then_some(s.time())
    })
}

fn profile_ok(state: &OpinionState, social: &EdgeSet, delta: f64, params: &ModelParams) -> bool {
    longest_profile_edge(state, social, params).is_none_or(|m| m <= delta)
}

/// Result of the retrospective `T_delta` search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TDelta {
    pub time: Option<u64>,
    /// "All later profiles" was only certified up to the horizon.
    pub censored: bool,
}

/// `T_delta` over recorded states: the smallest recorded `t` whose profile is
/// connected and after which (inclusive) every recorded profile has all
/// edges of length at most `delta`.
pub fn track_t_delta(
    states: &[OpinionState],
    schedule: &GraphSchedule,
    delta: f64,
    params: &ModelParams,
) -> TDelta {
    let mut candidate = None;
    for s in states {
        let social = schedule.edges_at(s.time(), s.len());
        if !profile_ok(s, &social, delta, params) {
            candidate = None;
        } else if candidate.is_none() && is_connected(&profile_of(s, &social, params).edges, s.len()) {
            candidate = Some(s.time());
        }
    }
    TDelta {
        time: candidate,
        censored: true,
    }
}

/// Both stopping times for one `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StoppingTimeRecord {
    pub delta: f64,
    pub tau_delta: Option<u64>,
    pub t_delta: Option<u64>,
    pub t_delta_censored: bool,
    pub horizon: u64,
}

pub fn stopping_times(
    states: &[OpinionState],
    schedule: &GraphSchedule,
    delta: f64,
    params: &ModelParams,
    horizon: u64,
) -> StoppingTimeRecord {
    let t = track_t_delta(states, schedule, delta, params);
    StoppingTimeRecord {
        delta,
        tau_delta: track_tau_delta(states, schedule, delta, params),
        t_delta: t.time,
        t_delta_censored: t.censored,
        horizon,
    }
}

/// Online `tau_delta`, evaluated on each pre-step state with its `E(t)`.
pub struct TauTracker {
    delta: f64,
    stop_on_hit: bool,
    pub hit: Option<u64>,
}

impl TauTracker {
    pub fn new(delta: f64, stop_on_hit: bool) -> Self {
        TauTracker {
            delta,
            stop_on_hit,
            hit: None,
        }
    }
}

impl Observer for TauTracker {
    fn observe(&mut self, ctx: &StepContext<'_>) -> Result<Flow, Violation> {
        if self.hit.is_none() && profile_ok(ctx.before, ctx.social, self.delta, ctx.params) {
            self.hit = Some(ctx.time);
        }
        Ok(if self.hit.is_some() && self.stop_on_hit {
            Flow::Stop
        } else {
            Flow::Continue
        })
    }
}

/// Counts steps on which the opinion graph gained an edge it did not have
/// before. Recorded as a statistic only; edge sets of 𝒢(t) are not monotone
/// in general.
#[derive(Debug, Default)]
pub struct OpinionGraphMonitor {
    previous: Option<EdgeSet>,
    pub steps_with_new_edges: u64,
    pub new_edges: u64,
}

impl Observer for OpinionGraphMonitor {
    fn start(&mut self, initial: &OpinionState, params: &ModelParams) -> Result<Flow, Violation> {
        self.previous = Some(opinion_graph(initial, params));
        Ok(Flow::Continue)
    }

    fn observe(&mut self, ctx: &StepContext<'_>) -> Result<Flow, Violation> {
        if !ctx.event.fired {
            return Ok(Flow::Continue);
        }
        let now = opinion_graph(ctx.after, ctx.params);
        if let Some(prev) = &self.previous {
            let gained = now.iter().filter(|&(i, j)| !prev.contains(i, j)).count() as u64;
            if gained > 0 {
                self.steps_with_new_edges += 1;
                self.new_edges += gained;
            }
        }
        self.previous = Some(now);
        Ok(Flow::Continue)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{run_trajectory, step, Dynamics, MuSchedule, Recording};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(eps: f64, dim: usize, norm: Norm) -> ModelParams {
        ModelParams::new(eps, dim, norm).unwrap()
    }

    #[test]
    fn lemma1_mu_zero_is_tight() {
        let s = OpinionState::from_scalars(&[0.1, 0.3]).unwrap();
        let (next, ev) = step(&s, (0, 1), 0.0, &p(1.0, 1, Norm::Euclidean)).unwrap();
        assert!(ev.fired);
        let r = check_lemma1(&s, &next, (0, 1), &[0.7], Norm::Euclidean);
        assert_eq!(r.inequality_1_slack, 0.0);
        assert!(r.ensure().is_ok());
    }

    #[test]
    fn lemma1_midpoint_case_by_hand() {
        // x_i = 0, x_j = 0.4, mu = 1/2, c = c_ij = 0.2:
        // LHS 0 + 0, RHS 0.2 + 0.2 - 2 * 0.2 + 0 = 0.
        let s = OpinionState::from_scalars(&[0.0, 0.4]).unwrap();
        let (next, _) = step(&s, (0, 1), 0.5, &p(1.0, 1, Norm::Euclidean)).unwrap();
        let r = check_lemma1(&s, &next, (0, 1), &[0.2], Norm::Euclidean);
        let hand = (0.2 + 0.2 - 2.0 * 0.2 + 0.0) - (0.0 + 0.0);
        assert!((r.inequality_2_slack - hand).abs() < 1e-15);
        assert!(r.inequality_2_slack.abs() < 1e-15);
    }

    #[test]
    fn eq1_far_c_and_unfired() {
        let s = OpinionState::from_scalars(&[0.0, 0.4, 0.9]).unwrap();
        let params = p(0.5, 1, Norm::Euclidean);
        let (next, _) = step(&s, (0, 1), 0.3, &params).unwrap();
        assert!(check_eq1(&s, &next, (0, 1), &[100.0], Norm::Euclidean) > 100.0);
        let (same, ev) = step(&s, (0, 2), 0.3, &params).unwrap();
        assert!(!ev.fired);
        assert!(check_eq1(&s, &same, (0, 2), &[0.45], Norm::Euclidean) >= 0.0);
    }

    #[test]
    fn sign_flipped_update_is_caught() {
        // Mutant: agents move apart instead of together.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut caught = 0;
        for _ in 0..200 {
            let v: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            let s = OpinionState::from_flat(2, v.clone()).unwrap();
            let mu: f64 = rng.random_range(0.05..0.5);
            let mut bad = v.clone();
            for k in 0..2 {
                bad[k] = v[k] - mu * (v[2 + k] - v[k]);
                bad[2 + k] = v[2 + k] - mu * (v[k] - v[2 + k]);
            }
            let post = OpinionState::from_flat(2, bad).unwrap();
            let c = midpoint(s.opinion(0), s.opinion(1));
            if check_lemma1(&s, &post, (0, 1), &c, Norm::Euclidean).ensure().is_err() {
                caught += 1;
            }
        }
        assert_eq!(caught, 200);
    }

    #[test]
    fn identities_on_random_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for norm in [Norm::Euclidean, Norm::L1, Norm::Linf] {
            for _ in 0..500 {
                let v: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
                let s = OpinionState::from_flat(3, v).unwrap();
                let mu = rng.random_range(0.0..=0.5);
                let (next, ev) = step(&s, (0, 2), mu, &p(10.0, 3, norm)).unwrap();
                assert!(ev.fired);
                pair_identities(&s, &next, (0, 2), norm).ensure(0).unwrap();
            }
        }
    }

    #[test]
    fn identities_flag_overshoot() {
        let s = OpinionState::from_scalars(&[0.0, 1.0]).unwrap();
        let post = OpinionState::from_scalars(&[0.7, 0.3]).unwrap();
        let id = pair_identities(&s, &post, (0, 1), Norm::Euclidean);
        assert!(id.coefficient_excess > 0.19);
        assert!(id.ensure(0).is_err());
    }

    #[test]
    fn zc_monotone_examples() {
        let s = OpinionState::from_scalars(&[0.1, 0.9]).unwrap();
        let states = vec![s.clone(), s.clone(), s];
        let cs = vec![Opinion::new(vec![0.5]), Opinion::new(vec![3.0])];
        assert!(check_zc_monotone(&states, &cs, Norm::Euclidean).is_ok());
        let rising = vec![
            OpinionState::from_scalars(&[0.4, 0.6]).unwrap(),
            OpinionState::from_scalars(&[0.0, 1.0]).unwrap(),
        ];
        let v = check_zc_monotone(&rising, &cs[..1], Norm::Euclidean).unwrap_err();
        assert_eq!(v.invariant, "zc_monotone");
    }

    #[test]
    fn zc_strictly_decreases_toward_limit() {
        let init = OpinionState::from_scalars(&[0.0, 0.2, 0.5, 0.9]).unwrap();
        let dynamics = Dynamics {
            params: p(1.0, 1, Norm::Euclidean),
            graph: GraphSchedule::complete(4),
            mu: MuSchedule::constant(0.5),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tr = run_trajectory(init, &dynamics, 2000, Recording::FULL, &mut rng, &mut []).unwrap();
        let limit = Opinion::new(tr.final_state.opinion(0).to_vec());
        let mut strict = 0;
        for (w, ev) in tr.states.windows(2).zip(&tr.events).take(20) {
            let before = z_potential_unchecked(&w[0], limit.as_slice(), Norm::Euclidean);
            let after = z_potential_unchecked(&w[1], limit.as_slice(), Norm::Euclidean);
            let (i, j) = ev.selected_edge.unwrap();
            let (xi, xj, c) = (w[0].opinion(i)[0], w[0].opinion(j)[0], limit.as_slice()[0]);
            // In 1D the pair's distance sum drops exactly when c separates them.
            if ev.fired && (xi - c) * (xj - c) < 0.0 {
                assert!(after < before, "Z did not drop at step {}", ev.time);
                strict += 1;
            } else {
                assert!(after <= before + SLACK_TOL);
            }
        }
        assert!(strict > 0);
    }

    #[test]
    fn tau_examples() {
        let params = p(1.0, 1, Norm::Euclidean);
        let s = OpinionState::from_scalars(&[0.0, 1.0]).unwrap();
        let empty = GraphSchedule::Constant(EdgeSet::empty());
        assert_eq!(track_tau_delta(&[s.clone()], &empty, 0.01, &params), Some(0));
        let same = OpinionState::from_scalars(&[0.3; 5]).unwrap();
        assert_eq!(track_tau_delta(&[same], &GraphSchedule::complete(5), 0.01, &params), Some(0));
        assert_eq!(track_tau_delta(&[s], &GraphSchedule::complete(2), 0.01, &params), None);
    }

    #[test]
    fn t_delta_examples() {
        let params = p(1.0, 1, Norm::Euclidean);
        let same = OpinionState::from_scalars(&[0.3; 4]).unwrap();
        let t = track_t_delta(&[same.clone()], &GraphSchedule::complete(4), 0.1, &params);
        assert_eq!(t.time, Some(0));
        assert!(t.censored);
        let never = GraphSchedule::Constant(EdgeSet::from_pairs([(0, 1)], 4).unwrap());
        assert_eq!(track_t_delta(&[same], &never, 0.1, &params).time, None);
    }

    #[test]
    fn tau_precedes_t_delta_on_converging_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let init = crate::geometry::OpinionSpace::Interval { a: 0.0, b: 1.0 }
                .sample_uniform(6, &mut rng)
                .unwrap();
            let dynamics = Dynamics {
                params: p(1.0, 1, Norm::Euclidean),
                graph: GraphSchedule::ErdosRenyi { p: 0.6, seed: rng.random() },
                mu: MuSchedule::RandomUniform { min: 0.1, max: 0.5 },
            };
            let tr = run_trajectory(init, &dynamics, 3000, Recording::FULL, &mut rng, &mut []).unwrap();
            let rec = stopping_times(&tr.states, &dynamics.graph, 0.01, &dynamics.params, 3000);
            let (tau, big_t) = (rec.tau_delta.unwrap(), rec.t_delta.unwrap());
            assert!(tau <= big_t, "{rec:?}");
        }
    }

    #[test]
    fn online_tau_matches_retrospective() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let init = OpinionState::from_scalars(&[0.0, 0.3, 0.6, 0.95]).unwrap();
        let dynamics = Dynamics {
            params: p(0.5, 1, Norm::Euclidean),
            graph: GraphSchedule::ErdosRenyi { p: 0.5, seed: 4 },
            mu: MuSchedule::constant(0.3),
        };
        let mut tracker = TauTracker::new(0.05, false);
        let tr = run_trajectory(init, &dynamics, 2000, Recording::FULL, &mut rng, &mut [&mut tracker]).unwrap();
        let retro = track_tau_delta(&tr.states[..tr.states.len() - 1], &dynamics.graph, 0.05, &dynamics.params);
        assert_eq!(tracker.hit, retro);
        assert!(tracker.hit.is_some());
    }

    #[test]
    fn lattice_is_deterministic_and_spread() {
        let s = OpinionState::from_flat(2, vec![0.0, 0.0, 1.0, 2.0]).unwrap();
        let a = lattice_points(&s, 10);
        assert_eq!(a, lattice_points(&s, 10));
        assert_eq!(a.len(), 10);
        assert!(a.iter().all(|c| (-0.25..=1.25).contains(&c.0[0]) && (-0.5..=2.5).contains(&c.0[1])));
        let firsts: std::collections::BTreeSet<u64> = a.iter().map(|c| c.0[0].to_bits()).collect();
        assert_eq!(firsts.len(), 10);
    }

    #[test]
    fn suite_passes_on_valid_run_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let init = crate::geometry::OpinionSpace::Box { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] }
            .sample_uniform(8, &mut rng)
            .unwrap();
        let dynamics = Dynamics {
            params: p(0.6, 2, Norm::L1),
            graph: GraphSchedule::complete(8),
            mu: MuSchedule::RandomUniform { min: 0.0, max: 0.5 },
        };
        let mut suite = InvariantSuite::for_initial(Checks::ALL, &init, 10);
        run_trajectory(init, &dynamics, 2000, Recording::NONE, &mut rng, &mut [&mut suite]).unwrap();
        let st = suite.stats;
        assert_eq!(st.steps, 2000);
        assert!(st.fired_steps > 0);
        assert_eq!(st.lemma1_checks, st.fired_steps * 11);
        assert!(st.min_inequality_1_slack >= -SLACK_TOL);
        assert!(st.max_diameter_increase <= IDENTITY_TOL);
    }

    #[test]
    fn monitor_sees_new_opinion_edges() {
        // 0 and 0.55 start out of range; averaging 0 with 0.4 brings them within 0.5.
        let init = OpinionState::from_scalars(&[0.0, 0.4, 0.55]).unwrap();
        let dynamics = Dynamics {
            params: p(0.5, 1, Norm::Euclidean),
            graph: GraphSchedule::Constant(EdgeSet::from_pairs([(0, 1)], 3).unwrap()),
            mu: MuSchedule::constant(0.5),
        };
        let mut mon = OpinionGraphMonitor::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        run_trajectory(init, &dynamics, 1, Recording::NONE, &mut rng, &mut [&mut mon]).unwrap();
        assert_eq!(mon.steps_with_new_edges, 1);
    }
}
