//! SAC against the ALOHA baseline on seeded wireless grids.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;

use crate::environments::aloha_policy;
use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::stats::{median, sign_test};

use super::config::ExperimentConfig;
use super::evaluate::{evaluate, Estimate};
use super::output::{create_dir, write_csv, write_json, OrderedSink, PairedComparison, ResultRow, RESULT_COLUMNS, SCHEMA};
use super::sweep::{evaluation_key, run_cell};

pub const METHOD_SAC: &str = "sac";
pub const METHOD_ALOHA: &str = "aloha";
pub const METHOD_ALOHA_BEST: &str = "aloha_best";

/// One evaluated policy of one seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub run_id: String,
    pub env: String,
    pub method: String,
    pub kappa: Option<usize>,
    pub send_prob: Option<f64>,
    pub seed: u64,
    #[serde(rename = "eval_J")]
    pub eval_j: f64,
    pub eval_se: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub kappa: Option<usize>,
    pub median_j: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WirelessSummary {
    pub schema: &'static str,
    pub version: &'static str,
    pub run_id: String,
    pub config: ExperimentConfig,
    pub methods: Vec<MethodSummary>,
    /// Each SAC κ against the best ALOHA policy of the same seed, then
    /// consecutive κ against each other.
    pub comparisons: Vec<PairedComparison>,
}

#[derive(Clone, Debug)]
pub struct WirelessOutcome {
    pub rows: Vec<ComparisonRow>,
    pub summary: WirelessSummary,
    pub comparison_csv: PathBuf,
}

/// Final `J` of `method` (and `kappa`) per seed, in seed order.
pub fn finals_of(rows: &[ComparisonRow], method: &str, kappa: Option<usize>) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.method == method && r.kappa == kappa)
        .map(|r| r.eval_j)
        .collect()
}

/// Trains SAC for every κ and evaluates the ALOHA grid on each seed's
/// instance. All methods of a seed are evaluated on the same episode streams.
/// Writes `comparison.csv`, `training.csv` and `wireless.json` into `out_dir`.
pub fn run_wireless_benchmark(config: &ExperimentConfig, out_dir: &Path, exec: Execution) -> Result<WirelessOutcome> {
    config.validate()?;
    if !config.env.is_wireless() {
        return Err(Error::Config("the wireless benchmark needs a wireless environment".into()));
    }
    create_dir(out_dir)?;
    let run = config.run_id()?;
    let header: Vec<String> = RESULT_COLUMNS.iter().map(|s| s.to_string()).collect();
    let training = Mutex::new(OrderedSink::create(&out_dir.join("training.csv"), &header)?);
    let m_final = config.actor.iterations as u64;
    let per_seed = exec.map_range(config.seeds as usize, |s| -> Result<Vec<ComparisonRow>> {
        let seed = s as u64;
        let env = config.env.wireless(config.master_seed, seed)?;
        let mdp = env.into_mdp(config.gamma)?;
        let name = mdp.name().to_string();
        let row = |method: &str, kappa: Option<usize>, send_prob: Option<f64>, est: Estimate| ComparisonRow {
            run_id: run.clone(),
            env: name.clone(),
            method: method.to_string(),
            kappa,
            send_prob,
            seed,
            eval_j: est.mean,
            eval_se: est.se,
        };
        let mut rows = Vec::new();
        let mut trained: Vec<ResultRow> = Vec::new();
        for &kappa in &config.kappas {
            let cell = run_cell(config, &mdp, kappa, seed, &run, exec).map_err(|e| Error::Cell {
                kappa,
                seed,
                source: Box::new(e),
            })?;
            rows.push(row(METHOD_SAC, Some(kappa), None, cell.final_estimate));
            trained.extend(cell.rows);
        }
        let eval_key = evaluation_key(config.master_seed, seed).child(m_final);
        let mut best: Option<(f64, Estimate)> = None;
        for &p in &config.aloha.send_probs {
            let policy = aloha_policy(&env, &vec![p; env.n()])?;
            let est = evaluate(&mdp, &policy, &config.evaluation, eval_key, exec)?;
            rows.push(row(METHOD_ALOHA, None, Some(p), est));
            if best.map_or(true, |(_, b)| est.mean > b.mean) {
                best = Some((p, est));
            }
        }
        let (p, est) = best.expect("send_probs is non-empty");
        rows.push(row(METHOD_ALOHA_BEST, None, Some(p), est));
        training
            .lock()
            .expect("sink lock")
            .submit(s, trained.iter().map(ResultRow::fields).collect())?;
        Ok(rows)
    });
    let mut rows = Vec::new();
    for r in per_seed {
        rows.extend(r?);
    }
    let comparison_csv = out_dir.join("comparison.csv");
    write_csv(&comparison_csv, &rows)?;

    let mut methods: Vec<MethodSummary> = config
        .kappas
        .iter()
        .map(|&k| MethodSummary {
            method: METHOD_SAC.into(),
            kappa: Some(k),
            median_j: median(&finals_of(&rows, METHOD_SAC, Some(k))),
        })
        .collect();
    methods.push(MethodSummary {
        method: METHOD_ALOHA_BEST.into(),
        kappa: None,
        median_j: median(&finals_of(&rows, METHOD_ALOHA_BEST, None)),
    });
    let aloha = finals_of(&rows, METHOD_ALOHA_BEST, None);
    let mut comparisons: Vec<PairedComparison> = config
        .kappas
        .iter()
        .map(|&k| {
            PairedComparison::new(
                format!("sac_kappa{k}"),
                METHOD_ALOHA_BEST,
                sign_test(&finals_of(&rows, METHOD_SAC, Some(k)), &aloha),
            )
        })
        .collect();
    let mut sorted = config.kappas.clone();
    sorted.sort_unstable();
    sorted.dedup();
    for w in sorted.windows(2) {
        comparisons.push(PairedComparison::new(
            format!("sac_kappa{}", w[1]),
            format!("sac_kappa{}", w[0]),
            sign_test(
                &finals_of(&rows, METHOD_SAC, Some(w[1])),
                &finals_of(&rows, METHOD_SAC, Some(w[0])),
            ),
        ));
    }
    let summary = WirelessSummary {
        schema: SCHEMA,
        version: env!("CARGO_PKG_VERSION"),
        run_id: run,
        config: config.canonical(),
        methods,
        comparisons,
    };
    write_json(&out_dir.join("wireless.json"), &summary)?;
    Ok(WirelessOutcome {
        rows,
        summary,
        comparison_csv,
    })
}
