use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use deffuant_core::geometry::expected_center_distance;
use deffuant_core::invariants::{track_t_delta, Checks, InvariantSuite, OpinionGraphMonitor, StoppingTimeRecord, SuiteStats, TauTracker};
use deffuant_core::model::{run_trajectory, Observer, StepEvent, Trajectory};
use deffuant_core::montecarlo::{
    bound_comparison_report, estimate_consensus_probability, theoretical_lower_bound, trial_rng, trial_setup,
    BoundReport, ConsensusEstimate, TrialRecord,
};
use deffuant_core::verify::{run_suite, Suite};
use deffuant_core::{chebyshev_center, Ball, Error, Execution, Recording, Violation};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;
pub const EXIT_BOUND: u8 = 4;

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_violations(out: &Path, violations: &[Violation]) -> anyhow::Result<()> {
    write_json(&out.join("violations.json"), &violations)
}

#[derive(Serialize)]
struct GraphGains {
    steps_with_new_edges: u64,
    new_edges: u64,
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    config_digest: &'a str,
    seed: u64,
    n: usize,
    dimension: usize,
    horizon: u64,
    steps: u64,
    fired_steps: u64,
    initial_diameter: f64,
    final_diameter: f64,
    stopping_times: Vec<StoppingTimeRecord>,
    opinion_graph_gains: GraphGains,
    invariants: SuiteStats,
}

fn write_states(path: &Path, tr: &Trajectory) -> anyhow::Result<()> {
    let dim = tr.final_state.dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step".to_string(), "agent_id".to_string()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for s in &tr.states {
        for (i, x) in s.opinions().enumerate() {
            let mut row = vec![s.time().to_string(), i.to_string()];
            row.extend(x.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_events(path: &Path, events: &[StepEvent]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "i", "j", "fired", "mu"])?;
    for e in events {
        let (i, j) = match e.selected_edge {
            Some((i, j)) => (i.to_string(), j.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([e.time.to_string(), i, j, e.fired.to_string(), e.mu_used.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One trajectory with every observer on; writes states, events and summary.
pub fn simulate(exp: &Experiment, out: &Path) -> anyhow::Result<u8> {
    let cfg = &exp.config;
    let ens = &exp.ensemble;
    let (sampled, dynamics, mut rng) = trial_setup(ens, cfg.seed, 0)?;
    let initial = cfg.initial_state()?.unwrap_or(sampled);
    let norm = dynamics.params.norm;

    let mut suite = InvariantSuite::for_initial(Checks::ALL, &initial, cfg.c_samples);
    let mut monitor = OpinionGraphMonitor::default();
    let mut taus: Vec<TauTracker> = cfg.deltas.iter().map(|&d| TauTracker::new(d, false)).collect();
    let result = {
        let mut observers: Vec<&mut dyn Observer> = vec![&mut suite, &mut monitor];
        observers.extend(taus.iter_mut().map(|t| t as &mut dyn Observer));
        run_trajectory(
            initial.clone(),
            &dynamics,
            cfg.horizon,
            Recording::every(cfg.stride),
            &mut rng,
            &mut observers,
        )
    };
    let tr = match result {
        Ok(tr) => tr,
        Err(Error::Invariant(mut v)) => {
            v.seed = Some(cfg.seed);
            v.config_digest = Some(exp.digest.clone());
            write_violations(out, &[*v.clone()])?;
            println!("invariant violated: {v}");
            println!("diagnostics written to {}", out.join("violations.json").display());
            return Ok(EXIT_INVARIANT);
        }
        Err(e) => return Err(e.into()),
    };

    let stopping_times = cfg
        .deltas
        .iter()
        .zip(&taus)
        .map(|(&delta, tau)| {
            let t = track_t_delta(&tr.states, &dynamics.graph, delta, &dynamics.params);
            StoppingTimeRecord {
                delta,
                tau_delta: tau.hit,
                t_delta: t.time,
                t_delta_censored: t.censored,
                horizon: cfg.horizon,
            }
        })
        .collect();
    let summary = SimulateSummary {
        config_digest: &exp.digest,
        seed: cfg.seed,
        n: cfg.n,
        dimension: initial.dim(),
        horizon: cfg.horizon,
        steps: suite.stats.steps,
        fired_steps: suite.stats.fired_steps,
        initial_diameter: initial.diameter(norm),
        final_diameter: tr.final_state.diameter(norm),
        stopping_times,
        opinion_graph_gains: GraphGains {
            steps_with_new_edges: monitor.steps_with_new_edges,
            new_edges: monitor.new_edges,
        },
        invariants: suite.stats,
    };

    write_states(&out.join("states.csv"), &tr)?;
    write_events(&out.join("events.csv"), &tr.events)?;
    write_json(&out.join("summary.json"), &summary)?;

    println!("simulated {} steps ({} fired), n = {}, d = {}", summary.steps, summary.fired_steps, cfg.n, summary.dimension);
    println!("diameter {} -> {}", summary.initial_diameter, summary.final_diameter);
    for r in &summary.stopping_times {
        println!("delta {}: tau = {:?}, T = {:?} (censored at {})", r.delta, r.tau_delta, r.t_delta, r.horizon);
    }
    println!("all invariant checks passed; outputs in {}", out.display());
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct Hypotheses {
    connected_infinitely_often: bool,
    mu_positive_infimum: bool,
}

#[derive(Serialize)]
struct ExpectedDistance {
    estimate: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct EstimateSummary<'a> {
    config_digest: &'a str,
    config: &'a ExperimentConfig,
    estimate: ConsensusEstimate,
    center: &'a Ball,
    expected_center_distance: ExpectedDistance,
    bound: Option<f64>,
    bound_status: &'static str,
    hypotheses: Hypotheses,
    report: BoundReport,
}

fn write_trials(path: &Path, records: &[TrialRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial_index", "verdict", "decided_at", "final_diameter", "tau_delta"])?;
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let verdict = serde_json::to_value(r.outcome.verdict)?;
        w.write_record([
            r.trial_index.to_string(),
            verdict.as_str().unwrap_or_default().to_string(),
            opt(r.outcome.decided_at),
            r.outcome.final_diameter.to_string(),
            opt(r.tau_delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Monte Carlo estimate of the consensus probability against the lower bound.
pub fn estimate(exp: &Experiment, out: &Path, exec: Execution, trials_csv: bool) -> anyhow::Result<u8> {
    let cfg = &exp.config;
    let ens = &exp.ensemble;
    let params = ens.dynamics.params;
    let started = Instant::now();

    let result = estimate_consensus_probability(ens, cfg.trials, cfg.seed, exec)?;
    let ball = chebyshev_center(&ens.space, params.norm)?;
    let mut rng = trial_rng(cfg.seed, u64::MAX);
    let expected = expected_center_distance(
        &ens.space,
        ens.distribution,
        &ball.center,
        params.norm,
        cfg.expected_samples,
        &mut rng,
    )?;
    let bound = match theoretical_lower_bound(params.epsilon, &ball, expected.estimate) {
        Ok(b) => Some(b),
        Err(Error::BoundInapplicable { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let report = bound_comparison_report(&result.estimate, bound);
    let summary = EstimateSummary {
        config_digest: &exp.digest,
        config: cfg,
        estimate: result.estimate,
        center: &ball,
        expected_center_distance: ExpectedDistance {
            estimate: expected.estimate,
            std_error: expected.std_error,
        },
        bound,
        bound_status: if bound.is_some() { "applicable" } else { "inapplicable" },
        hypotheses: Hypotheses {
            connected_infinitely_often: ens.dynamics.graph.connected_infinitely_often(ens.n),
            mu_positive_infimum: ens.dynamics.mu.has_positive_infimum(),
        },
        report,
    };
    write_json(&out.join("estimate.json"), &summary)?;
    if trials_csv {
        write_trials(&out.join("trials.csv"), &result.records)?;
    }

    let e = &result.estimate;
    println!(
        "{} trials: {} consensus, {} dissensus, {} undecided",
        e.n_trials, e.n_consensus, e.n_dissensus, e.n_undecided
    );
    println!("p_hat = {:.4}, 95% CI [{:.4}, {:.4}], SE {:.4}", e.p_hat, e.ci_low, e.ci_high, e.std_error);
    println!("center {:?}, radius {}, E|X - c| = {:.6}", ball.center.as_slice(), ball.radius, expected.estimate);
    match bound {
        Some(b) => println!("lower bound {b:.4}, margin {:.4}", e.ci_low - b),
        None => println!("lower bound inapplicable: epsilon {} <= radius {}", params.epsilon, ball.radius),
    }
    println!("elapsed {:.2?}", started.elapsed());
    if !report.pass {
        println!("bound contradiction: ci_high {:.4} < bound {:.4}", e.ci_high, bound.unwrap_or(f64::NAN));
        return Ok(EXIT_BOUND);
    }
    Ok(EXIT_OK)
}

/// Named property suite at its fixed size.
pub fn verify(suite: Suite, seed: u64, out: &Path, exec: Execution) -> anyhow::Result<u8> {
    let started = Instant::now();
    let report = run_suite(suite, seed, exec)?;
    write_json(&out.join("verify.json"), &report)?;
    let s = &report.stats;
    println!(
        "suite {suite}, seed {seed}: {} steps, {} fired, {} lemma / {} eq1 / {} zc / {} identity / {} diameter checks",
        s.steps, s.fired_steps, s.lemma1_checks, s.eq1_checks, s.zc_checks, s.identity_checks, s.diameter_checks
    );
    if let Some(g) = &report.geometry {
        println!("geometry: {} clouds, {} radius-bound checks", g.clouds, g.radius_bound_checks);
    }
    println!("elapsed {:.2?}", started.elapsed());
    if !report.passed() {
        write_violations(out, &report.violations)?;
        for v in &report.violations {
            println!("violation: {v}");
        }
        return Ok(EXIT_INVARIANT);
    }
    println!("pass");
    Ok(EXIT_OK)
}
