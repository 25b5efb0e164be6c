//! Experiment configuration files (JSON, one experiment per file).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use deffuant_core::graph::parse_schedule_file;
use deffuant_core::montecarlo::{EnsembleConfig, UndecidedPolicy, DEFAULT_CONSENSUS_TOL, DEFAULT_HORIZON};
use deffuant_core::{Distribution, Dynamics, EdgeSet, GraphSchedule, ModelParams, MuSchedule, Norm, Opinion, OpinionSpace, OpinionState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Marks errors that map to the configuration exit code.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    // Empty braces so `deny_unknown_fields` applies to these too.
    Complete {},
    Path {},
    Cycle {},
    Star {},
    Empty {},
    Edges { edges: Vec<(usize, usize)> },
    /// Repeats `members` in order, one per step.
    Cyclic { members: Vec<Vec<(usize, usize)>> },
    /// Fresh G(n, p) each step, seeded from the run seed.
    ErdosRenyi { p: f64 },
    /// Step-keyed change points; relative paths resolve against the config file.
    FromFile { path: PathBuf },
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec::Complete {}
    }
}

fn default_space() -> OpinionSpace {
    OpinionSpace::Interval { a: 0.0, b: 1.0 }
}
fn default_mu() -> MuSchedule {
    MuSchedule::constant(0.5)
}
fn default_horizon() -> u64 {
    DEFAULT_HORIZON
}
fn default_tol() -> f64 {
    DEFAULT_CONSENSUS_TOL
}
fn default_trials() -> u64 {
    1000
}
fn default_c_samples() -> usize {
    10
}
fn default_stride() -> u64 {
    1
}
fn default_expected_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub norm: Norm,
    #[serde(default = "default_space")]
    pub space: OpinionSpace,
    #[serde(default)]
    pub distribution: Distribution,
    #[serde(default)]
    pub graph: GraphSpec,
    #[serde(default = "default_mu")]
    pub mu: MuSchedule,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_tol")]
    pub consensus_tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// `delta` values whose stopping times `simulate` reports.
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default = "default_c_samples")]
    pub c_samples: usize,
    /// `simulate` keeps every `stride`-th state.
    #[serde(default = "default_stride")]
    pub stride: u64,
    /// Fixed initial opinions for `simulate`; sampled from `space` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<Vec<f64>>>,
    /// Monte Carlo draws for `E|X - c|` when no closed form exists.
    #[serde(default = "default_expected_samples")]
    pub expected_samples: usize,
    #[serde(default)]
    pub undecided: UndecidedPolicy,
}

/// Command-line values that beat the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub mu: Option<f64>,
    pub n: Option<usize>,
    pub horizon: Option<u64>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
}

/// A loaded, overridden and validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub ensemble: EnsembleConfig,
    pub digest: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).map_err(|e| config_error(format!("invalid config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.epsilon {
            self.epsilon = v;
        }
        if let Some(v) = o.mu {
            self.mu = MuSchedule::constant(v);
        }
        if let Some(v) = o.n {
            self.n = v;
        }
        if let Some(v) = o.horizon {
            self.horizon = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.trials {
            self.trials = v;
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    fn graph_schedule(&self, base: &Path) -> anyhow::Result<GraphSchedule> {
        let n = self.n;
        let edges = |pairs: &[(usize, usize)]| EdgeSet::from_pairs(pairs.iter().copied(), n);
        Ok(match &self.graph {
            GraphSpec::Complete {} => GraphSchedule::complete(n),
            GraphSpec::Path {} => GraphSchedule::path(n),
            GraphSpec::Cycle {} => GraphSchedule::Constant(EdgeSet::cycle(n)),
            GraphSpec::Star {} => GraphSchedule::Constant(EdgeSet::star(n)),
            GraphSpec::Empty {} => GraphSchedule::Constant(EdgeSet::empty()),
            GraphSpec::Edges { edges: e } => GraphSchedule::Constant(edges(e)?),
            GraphSpec::Cyclic { members } => {
                GraphSchedule::Cyclic(members.iter().map(|m| edges(m)).collect::<Result<_, _>>()?)
            }
            GraphSpec::ErdosRenyi { p } => GraphSchedule::ErdosRenyi { p: *p, seed: 0 },
            GraphSpec::FromFile { path } => {
                let full = base.join(path);
                let text = fs::read_to_string(&full)
                    .map_err(|e| config_error(format!("cannot read schedule {}: {e}", full.display())))?;
                parse_schedule_file(&text, n)?
            }
        })
    }

    /// Validates everything and builds the ensemble configuration.
    pub fn build(&self, base: &Path) -> anyhow::Result<EnsembleConfig> {
        if self.trials == 0 {
            return Err(config_error("trials must be at least 1"));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d > 0.0)) {
            return Err(config_error(format!("deltas must be positive, got {d}")));
        }
        if self.expected_samples < 2 {
            return Err(config_error("expected_samples must be at least 2"));
        }
        let params = ModelParams::new(self.epsilon, self.space.dimension(), self.norm)?;
        let dynamics = Dynamics {
            params,
            graph: self.graph_schedule(base)?,
            mu: self.mu.clone(),
        };
        let ensemble = EnsembleConfig {
            n: self.n,
            dynamics,
            space: self.space.clone(),
            distribution: self.distribution,
            horizon: self.horizon,
            consensus_tol: self.consensus_tol,
            track_delta: None,
            undecided: self.undecided,
        };
        ensemble.validate()?;
        if self.initial.is_some() {
            self.initial_state()?;
        }
        Ok(ensemble)
    }

    /// The configured initial state, if one is given.
    pub fn initial_state(&self) -> anyhow::Result<Option<OpinionState>> {
        let Some(rows) = &self.initial else {
            return Ok(None);
        };
        if rows.len() != self.n {
            return Err(config_error(format!("initial has {} opinions, n is {}", rows.len(), self.n)));
        }
        let ops: Vec<Opinion> = rows.iter().cloned().map(Opinion::new).collect();
        Ok(Some(OpinionState::new(self.space.dimension(), &ops)?))
    }
}

/// Reads, overrides and validates a config file.
pub fn load(path: &Path, overrides: &Overrides) -> anyhow::Result<Experiment> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    config.apply(overrides);
    let base = path.parent().unwrap_or(Path::new("."));
    let ensemble = config.build(base).with_context(|| format!("in {}", path.display()))?;
    let digest = config.digest();
    Ok(Experiment {
        config,
        ensemble,
        digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_json(r#"{"n": 10, "epsilon": 0.9}"#).unwrap();
        assert_eq!(c.horizon, 1_000_000);
        assert_eq!(c.consensus_tol, 1e-6);
        assert_eq!(c.graph, GraphSpec::Complete {});
        assert_eq!(c.mu, MuSchedule::constant(0.5));
        let e = c.build(Path::new(".")).unwrap();
        assert_eq!(e.dynamics.params.dim, 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_json(r#"{"n": 10, "epsilon": 0.9, "epsilom": 1}"#).unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some());
        assert!(ExperimentConfig::from_json(r#"{"n": 3, "epsilon": 1, "graph": {"kind": "complete", "p": 1}}"#).is_err());
    }

    #[test]
    fn overrides_win() {
        let mut c = ExperimentConfig::from_json(r#"{"n": 10, "epsilon": 0.9, "seed": 3}"#).unwrap();
        let before = c.digest();
        c.apply(&Overrides {
            epsilon: Some(0.5),
            mu: Some(0.25),
            seed: Some(4),
            ..Default::default()
        });
        assert_eq!((c.epsilon, c.seed), (0.5, 4));
        assert_eq!(c.mu, MuSchedule::constant(0.25));
        assert_ne!(before, c.digest());
    }

    #[test]
    fn bad_values_fail_validation() {
        for json in [
            r#"{"n": 3, "epsilon": 0}"#,
            r#"{"n": 3, "epsilon": 1, "horizon": 0}"#,
            r#"{"n": 3, "epsilon": 1, "mu": {"kind": "constant", "value": 0.7}}"#,
            r#"{"n": 3, "epsilon": 1, "graph": {"kind": "edges", "edges": [[0, 5]]}}"#,
            r#"{"n": 3, "epsilon": 1, "initial": [[0.1], [0.2]]}"#,
            r#"{"n": 3, "epsilon": 1, "deltas": [-1]}"#,
        ] {
            let c = ExperimentConfig::from_json(json).unwrap();
            assert!(c.build(Path::new(".")).is_err(), "{json}");
        }
    }

    #[test]
    fn digest_is_stable() {
        let a = ExperimentConfig::from_json(r#"{"n": 10, "epsilon": 0.9}"#).unwrap();
        let b = ExperimentConfig::from_json(r#"{"epsilon": 0.9, "n": 10, "horizon": 1000000}"#).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
