//! Named randomized property suites over a fixed seeded ensemble.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{map_trials, Execution};
use crate::geometry::{check_radius_bounds, chebyshev_center, min_enclosing_ball, OpinionSpace};
use crate::graph::{EdgeSet, GraphSchedule};
use crate::invariants::{Checks, InvariantSuite, SuiteStats, Violation};
use crate::model::{run_trajectory, Dynamics, ModelParams, MuSchedule, Norm, OpinionState, Recording};
use crate::montecarlo::trial_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Lemma1,
    Eq1,
    Zc,
    Triviality,
    Geometry,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = ["lemma1", "eq1", "zc", "triviality", "geometry", "all"];

    /// Observer checks the suite turns on; the lemma suite includes the
    /// per-step update identities.
    pub fn checks(self) -> Checks {
        let mut c = Checks::NONE;
        match self {
            Suite::Lemma1 => {
                c.lemma1 = true;
                c.identities = true;
            }
            Suite::Eq1 => c.eq1 = true,
            Suite::Zc => c.zc = true,
            Suite::Triviality => c.triviality = true,
            Suite::Geometry => {}
            Suite::All => c = Checks::ALL,
        }
        c
    }

    fn runs_geometry(self) -> bool {
        matches!(self, Suite::Geometry | Suite::All)
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lemma1" => Suite::Lemma1,
            "eq1" => Suite::Eq1,
            "zc" => Suite::Zc,
            "triviality" => Suite::Triviality,
            "geometry" => Suite::Geometry,
            "all" => Suite::All,
            other => {
                return Err(Error::config(format!(
                    "unknown suite {other:?}; expected one of {}",
                    Suite::NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = *self as usize;
        f.write_str(Suite::NAMES[i])
    }
}

/// Size of the invariant ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EnsembleSpec {
    pub trajectories: u64,
    pub n: usize,
    pub steps: u64,
    pub c_samples: usize,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            trajectories: 100,
            n: 10,
            steps: 10_000,
            c_samples: 10,
        }
    }
}

/// Initial state and dynamics of ensemble member `idx`. Dimension cycles
/// through 1..=3; norm, graph and mu schedules vary independently.
pub fn ensemble_case(spec: &EnsembleSpec, seed: u64, idx: u64) -> Result<(OpinionState, Dynamics, ChaCha8Rng)> {
    let n = spec.n;
    let mut rng = trial_rng(seed, idx);
    let dim = 1 + (idx % 3) as usize;
    let norm = [Norm::Euclidean, Norm::L1, Norm::Linf][(idx / 3 % 3) as usize];
    let epsilon = [0.2, 0.5, 1.0, 3.0][(idx / 9 % 4) as usize];
    let graph = match idx % 4 {
        0 => GraphSchedule::complete(n),
        1 => GraphSchedule::Constant(EdgeSet::cycle(n)),
        2 => GraphSchedule::ErdosRenyi {
            p: 0.3,
            seed: rng.random(),
        },
        _ => GraphSchedule::Cyclic(vec![EdgeSet::path(n), EdgeSet::empty(), EdgeSet::star(n)]),
    };
    let mu = match idx % 5 {
        0 => MuSchedule::constant(0.5),
        1 => MuSchedule::constant(0.25),
        2 => MuSchedule::RandomUniform { min: 0.0, max: 0.5 },
        3 => MuSchedule::Sequence {
            values: vec![0.1, 0.5, 0.0, 0.35],
        },
        _ => MuSchedule::RandomUniform { min: 0.1, max: 0.5 },
    };
    let space = OpinionSpace::Box {
        lo: vec![0.0; dim],
        hi: vec![1.0; dim],
    };
    let initial = space.sample_uniform(n, &mut rng)?;
    let dynamics = Dynamics {
        params: ModelParams::new(epsilon, dim, norm)?,
        graph,
        mu,
    };
    Ok((initial, dynamics, rng))
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GeometryStats {
    pub clouds: u64,
    pub max_coverage_excess: f64,
    /// Largest radius reduction found by perturbing a center; positive means
    /// a better center existed.
    pub max_perturbation_gain: f64,
    pub radius_bound_checks: u64,
    pub radius_lower_failures: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub seed: u64,
    pub spec: EnsembleSpec,
    pub stats: SuiteStats,
    pub geometry: Option<GeometryStats>,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs the observer checks over the whole ensemble. Each violating
/// trajectory contributes one violation (its first) tagged with the seed.
pub fn run_invariant_ensemble(
    spec: &EnsembleSpec,
    checks: Checks,
    seed: u64,
    exec: Execution,
) -> Result<(SuiteStats, Vec<Violation>)> {
    let per_trial = map_trials(spec.trajectories, exec, |idx| {
        let (initial, dynamics, mut rng) = ensemble_case(spec, seed, idx)?;
        let mut suite = InvariantSuite::for_initial(checks, &initial, spec.c_samples);
        let outcome = run_trajectory(initial, &dynamics, spec.steps, Recording::NONE, &mut rng, &mut [&mut suite]);
        match outcome {
            Ok(_) => Ok((suite.stats, None)),
            Err(Error::Invariant(mut v)) => {
                v.seed = Some(seed);
                v.detail = format!("trajectory {idx}: {}", v.detail);
                Ok((suite.stats, Some(*v)))
            }
            Err(e) => Err(e),
        }
    })?;
    let mut stats = SuiteStats::default();
    let mut violations = Vec::new();
    for (s, v) in per_trial {
        stats.merge(&s);
        violations.extend(v);
    }
    Ok((stats, violations))
}

const COVER_TOL: f64 = 1e-9;

/// Enclosing-ball coverage and minimality on random clouds, plus the
/// `d/2 <= r` bound on a fixed list of spaces.
pub fn run_geometry_suite(seed: u64) -> Result<(GeometryStats, Vec<Violation>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = GeometryStats::default();
    let mut violations = Vec::new();

    for k in 0..60u64 {
        let d = 1 + (k % 3) as usize;
        let m = rng.random_range(1..40);
        let mut points: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        if k % 7 == 0 {
            // Duplicates and shuffled order.
            let extra = points[..m / 2].to_vec();
            points.extend(extra);
            points.shuffle(&mut rng);
        }
        let ball = min_enclosing_ball(&points);
        let covering = |c: &[f64]| points.iter().map(|p| Norm::Euclidean.distance(c, p)).fold(0.0, f64::max);
        let excess = covering(ball.center.as_slice()) - ball.radius;
        stats.clouds += 1;
        stats.max_coverage_excess = stats.max_coverage_excess.max(excess);
        if excess > COVER_TOL {
            violations.push(Violation::new(k, "meb_coverage", -excess, format!("cloud {k}: point outside ball")));
        }
        for _ in 0..20 {
            let c: Vec<f64> = ball
                .center
                .as_slice()
                .iter()
                .map(|x| x + rng.random_range(-1e-3..1e-3))
                .collect();
            let gain = ball.radius - covering(&c);
            stats.max_perturbation_gain = stats.max_perturbation_gain.max(gain);
            if gain > COVER_TOL {
                violations.push(Violation::new(k, "meb_minimality", -gain, format!("cloud {k}: perturbed center is better")));
                break;
            }
        }
    }

    let spaces = [
        OpinionSpace::Interval { a: 0.0, b: 1.0 },
        OpinionSpace::Interval { a: -2.0, b: 5.0 },
        OpinionSpace::Box {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 2.0],
        },
        OpinionSpace::Box {
            lo: vec![0.0; 3],
            hi: vec![1.0; 3],
        },
        OpinionSpace::Ball {
            center: vec![0.0, 0.0],
            radius: 0.5,
        },
        OpinionSpace::PointCloud {
            points: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]],
        },
    ];
    for (k, space) in spaces.iter().enumerate() {
        for norm in [Norm::Euclidean, Norm::L1, Norm::Linf] {
            let ball = chebyshev_center(space, norm)?;
            let rb = check_radius_bounds(&ball, space.diameter(norm)?);
            stats.radius_bound_checks += 1;
            if !rb.lower_holds {
                stats.radius_lower_failures += 1;
                violations.push(Violation::new(
                    k as u64,
                    "radius_lower_bound",
                    rb.radius - rb.diameter / 2.0,
                    format!("space {k} under {norm}: r {} < d/2 {}", rb.radius, rb.diameter / 2.0),
                ));
            }
        }
    }
    Ok((stats, violations))
}

/// Runs `suite` at its fixed size.
pub fn run_suite(suite: Suite, seed: u64, exec: Execution) -> Result<VerifyReport> {
    run_suite_with(suite, seed, &EnsembleSpec::default(), exec)
}

pub fn run_suite_with(suite: Suite, seed: u64, spec: &EnsembleSpec, exec: Execution) -> Result<VerifyReport> {
    let checks = suite.checks();
    let (stats, mut violations) = if checks == Checks::NONE {
        (SuiteStats::default(), Vec::new())
    } else {
        run_invariant_ensemble(spec, checks, seed, exec)?
    };
    let geometry = if suite.runs_geometry() {
        let (g, v) = run_geometry_suite(seed)?;
        violations.extend(v.into_iter().map(|mut v| {
            v.seed = Some(seed);
            v
        }));
        Some(g)
    } else {
        None
    };
    Ok(VerifyReport {
        suite,
        seed,
        spec: *spec,
        stats,
        geometry,
        violations,
    })
}
