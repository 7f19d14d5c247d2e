//! κ-sweeps: SAC training cells with periodic evaluation.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::NetworkedMdp;
use crate::parallel::Execution;
use crate::policy::LocalizedPolicyTable;
use crate::rng::{Purpose, SeedKey};
use crate::sac::{train, IterationReport, TrainSpec};

use super::config::ExperimentConfig;
use super::evaluate::{eval_horizon, evaluate, Estimate};
use super::output::{analyze, create_dir, write_json, OrderedSink, ResultRow, SweepAnalysis, RESULT_COLUMNS, SCHEMA};

/// Stream root of everything a `(kappa, seed)` cell samples while training.
pub fn cell_key(master_seed: u64, kappa: usize, seed: u64) -> SeedKey {
    SeedKey::new(master_seed).child(seed).purpose(Purpose::Cell).child(kappa as u64)
}

/// Evaluation streams of a seed; shared by every method on that seed.
pub fn evaluation_key(master_seed: u64, seed: u64) -> SeedKey {
    SeedKey::new(master_seed).child(seed).purpose(Purpose::Evaluation)
}

/// Everything one training cell produced.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub kappa: usize,
    pub seed: u64,
    pub rows: Vec<ResultRow>,
    /// Per-iteration metric records, already formatted.
    pub metrics: Vec<Vec<String>>,
    pub policy: LocalizedPolicyTable,
    pub final_estimate: Estimate,
}

pub fn metrics_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = ["run_id", "kappa", "seed", "m", "eta_m", "eval_J", "wall_ms"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..n).map(|i| format!("q_sup_{i}")));
    h.extend((0..n).map(|i| format!("grad_norm_{i}")));
    h
}

/// Trains one `(kappa, seed)` cell and evaluates `θ(m)` every
/// `evaluation.every` iterations and at `m = M`.
pub fn run_cell(
    config: &ExperimentConfig,
    mdp: &NetworkedMdp,
    kappa: usize,
    seed: u64,
    run: &str,
    exec: Execution,
) -> Result<CellResult> {
    let start = Instant::now();
    let spec = TrainSpec {
        kappa,
        critic: config.critic,
        actor: config.actor,
    };
    let eval_key = evaluation_key(config.master_seed, seed);
    let elapsed = |timing: bool| timing.then(|| start.elapsed().as_millis() as u64);
    let every = config.evaluation.every;
    let optimum = mdp.known_optimum();
    let row = |m: usize, est: Estimate, wall: Option<u64>| ResultRow {
        run_id: run.to_string(),
        env: mdp.name().to_string(),
        kappa: Some(kappa),
        seed,
        m: Some(m),
        eval_j: est.mean,
        eval_se: est.se,
        gap: optimum.map(|o| o - est.mean),
        wall_ms: wall,
    };
    let mut rows = Vec::new();
    let mut metrics = Vec::new();
    let outcome = train(
        mdp,
        &spec,
        cell_key(config.master_seed, kappa, seed).purpose(Purpose::Iteration),
        exec,
        |report: &IterationReport, policy| {
            let est = if every > 0 && report.m % every == 0 {
                Some(evaluate(mdp, policy, &config.evaluation, eval_key.child(report.m as u64), exec)?)
            } else {
                None
            };
            let wall = elapsed(config.output.timing);
            if let Some(est) = est {
                rows.push(row(report.m, est, wall));
            }
            let mut rec = vec![
                run.to_string(),
                kappa.to_string(),
                seed.to_string(),
                report.m.to_string(),
                report.eta_m.to_string(),
                est.map(|e| e.mean.to_string()).unwrap_or_default(),
                wall.map(|w| w.to_string()).unwrap_or_default(),
            ];
            rec.extend(report.q_sup.iter().map(|q| q.to_string()));
            rec.extend(report.grad_norm.iter().map(|g| g.to_string()));
            metrics.push(rec);
            Ok(())
        },
    )?;
    let m_final = config.actor.iterations;
    let final_estimate = evaluate(
        mdp,
        &outcome.policy,
        &config.evaluation,
        eval_key.child(m_final as u64),
        exec,
    )?;
    rows.push(row(m_final, final_estimate, elapsed(config.output.timing)));
    Ok(CellResult {
        kappa,
        seed,
        rows,
        metrics,
        policy: outcome.policy,
        final_estimate,
    })
}

/// Files and summary of a finished sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepOutcome {
    pub run_id: String,
    pub results_csv: PathBuf,
    pub finals: Vec<ResultRow>,
    pub analysis: SweepAnalysis,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    schema: &'a str,
    version: &'a str,
    run_id: &'a str,
    env: &'a str,
    reward_transform: &'a str,
    eval_horizon: Option<usize>,
    config: &'a ExperimentConfig,
    analysis: &'a SweepAnalysis,
}

/// Short description of how stored rewards relate to the model's native rewards.
pub fn reward_transform(config: &ExperimentConfig) -> &'static str {
    use super::config::EnvSpec;
    match config.env {
        EnvSpec::Line { .. } => "identity",
        EnvSpec::Wireless { .. } => "expected delivery probability of the chosen access point",
        EnvSpec::Sis { .. } => "(1{susceptible} - c_i(a_i) + max c_i) / (1 + max c_i - min c_i)",
        EnvSpec::Traffic { .. } => "(S*deg - sum of queues) / (S*deg)",
    }
}

/// Trains every `(kappa, seed)` cell, writing `sweep.csv`, `metrics.csv`,
/// `sweep.json` and per-cell policy checkpoints into `out_dir`.
pub fn run_kappa_sweep(config: &ExperimentConfig, out_dir: &Path, exec: Execution) -> Result<SweepOutcome> {
    config.validate()?;
    create_dir(out_dir)?;
    let policies_dir = out_dir.join("policies");
    if config.output.checkpoints {
        create_dir(&policies_dir)?;
    }
    let canonical = config.canonical();
    let run = config.run_id()?;
    let envs: Vec<NetworkedMdp> = (0..config.seeds)
        .map(|s| config.env.build(config.gamma, config.master_seed, s))
        .collect::<Result<_>>()?;
    let n = envs[0].n();
    let header: Vec<String> = RESULT_COLUMNS.iter().map(|s| s.to_string()).collect();
    let results_csv = out_dir.join("sweep.csv");
    let results = Mutex::new(OrderedSink::create(&results_csv, &header)?);
    let metrics = Mutex::new(OrderedSink::create(&out_dir.join("metrics.csv"), &metrics_header(n))?);
    let cells: Vec<(usize, u64)> = config
        .kappas
        .iter()
        .flat_map(|&k| (0..config.seeds).map(move |s| (k, s)))
        .collect();
    let outcomes = exec.map_range(cells.len(), |c| -> Result<Vec<ResultRow>> {
        let (kappa, seed) = cells[c];
        let wrap = |e: Error| Error::Cell {
            kappa,
            seed,
            source: Box::new(e),
        };
        let cell = run_cell(config, &envs[seed as usize], kappa, seed, &run, exec).map_err(wrap)?;
        if config.output.checkpoints {
            let path = policies_dir.join(format!("kappa{kappa}_seed{seed}.json"));
            let mut text = cell.policy.to_json()?;
            text.push('\n');
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        results
            .lock()
            .expect("sink lock")
            .submit(c, cell.rows.iter().map(ResultRow::fields).collect())?;
        metrics.lock().expect("sink lock").submit(c, cell.metrics)?;
        Ok(cell.rows)
    });
    let mut rows = Vec::new();
    for o in outcomes {
        rows.extend(o?);
    }
    let analysis = analyze(&rows);
    let horizon = (config.evaluation.method == super::config::EvalMethod::MonteCarlo)
        .then(|| eval_horizon(config.gamma, envs[0].reward_bound(), config.evaluation.tail_tol));
    write_json(
        &out_dir.join("sweep.json"),
        &Sidecar {
            schema: SCHEMA,
            version: env!("CARGO_PKG_VERSION"),
            run_id: &run,
            env: envs[0].name(),
            reward_transform: reward_transform(config),
            eval_horizon: horizon,
            config: &canonical,
            analysis: &analysis,
        },
    )?;
    Ok(SweepOutcome {
        run_id: run,
        results_csv,
        finals: super::output::final_rows(&rows),
        analysis,
    })
}
