//! Exact decay report on small instances.

use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::mdp::NetworkedMdp;
use crate::oracle::{build_chain, mixing_profile, truncation_report, TruncationRow};
use crate::parallel::Execution;
use crate::policy::LocalizedPolicyTable;
use crate::rng::{Purpose, SeedKey};

use super::config::ExperimentConfig;
use super::output::{create_dir, write_csv, write_json, SCHEMA};

/// Tolerance used when comparing measured quantities with their bounds.
pub const BOUND_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    pub agent: usize,
    pub kappa: usize,
    pub measured_variation: f64,
    pub lemma2a_bound: f64,
    pub trunc_q_error: f64,
    pub lemma3a_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientRow {
    pub agent: usize,
    pub kappa: usize,
    pub grad_gap: f64,
    pub lemma3b_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingRow {
    pub policy: usize,
    pub agent: usize,
    pub t: usize,
    pub tv: f64,
}

/// Worst case over the policy grid.
#[derive(Clone, Debug, Serialize)]
pub struct DecaySummary {
    pub schema: &'static str,
    pub run_id: String,
    pub env: String,
    pub gamma: f64,
    pub policies: usize,
    pub kappa_max: usize,
    pub diameter: Option<usize>,
    pub variation_within_bound: bool,
    pub truncation_within_bound: bool,
    pub gradient_within_bound: bool,
    /// Largest gradient gap at `κ ≥ diameter`, if any such κ was measured.
    pub gap_at_diameter: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct DecayOutcome {
    pub decay: Vec<DecayRow>,
    pub gradient: Vec<GradientRow>,
    pub mixing: Vec<MixingRow>,
    pub summary: DecaySummary,
}

/// The uniform policy followed by `count` policies with logits drawn
/// uniformly from `[-scale, scale]`.
pub fn policy_grid(mdp: &NetworkedMdp, count: usize, scale: f64, key: SeedKey) -> Result<Vec<LocalizedPolicyTable>> {
    let mut grid = vec![LocalizedPolicyTable::uniform(mdp.spaces())];
    for p in 0..count {
        let mut rng = key.child(p as u64).stream(Purpose::Policy, 0);
        let agents = mdp
            .spaces()
            .iter()
            .map(|sp| {
                let logits = (0..sp.states * sp.actions).map(|_| rng.gen_range(-scale..=scale)).collect();
                (sp.states, sp.actions, logits)
            })
            .collect();
        grid.push(LocalizedPolicyTable::from_logits(agents)?);
    }
    Ok(grid)
}

/// Elementwise maximum of the measured columns over several reports.
fn worst_case(reports: &[Vec<TruncationRow>]) -> Vec<TruncationRow> {
    let mut worst = reports[0].clone();
    for report in &reports[1..] {
        for (w, r) in worst.iter_mut().zip(report) {
            w.measured_variation = w.measured_variation.max(r.measured_variation);
            w.trunc_q_error = w.trunc_q_error.max(r.trunc_q_error);
            w.grad_gap = w.grad_gap.max(r.grad_gap);
        }
    }
    worst
}

/// Runs the exact decay, truncation and gradient checks for the config's
/// environment (seed 0) under every policy of the grid.
pub fn decay_report(config: &ExperimentConfig, exec: Execution) -> Result<DecayOutcome> {
    config.validate()?;
    let mdp = config.env.build(config.gamma, config.master_seed, 0)?;
    let spec = &config.decay;
    let key = SeedKey::new(config.master_seed).purpose(Purpose::Policy);
    let policies = policy_grid(&mdp, spec.random_policies, spec.logit_scale, key)?;
    let reports = exec
        .map_range(policies.len(), |p| truncation_report(&mdp, &policies[p], spec.kappa_max))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let worst = worst_case(&reports);
    let mixing = exec
        .map_range(policies.len(), |p| -> Result<Vec<MixingRow>> {
            let chain = build_chain(&mdp, &policies[p])?;
            let mut rows = Vec::new();
            for agent in 0..mdp.n() {
                let tv = mixing_profile(&chain, agent, spec.mixing_horizon);
                rows.extend(tv.into_iter().enumerate().map(|(t, tv)| MixingRow { policy: p, agent, t, tv }));
            }
            Ok(rows)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .concat();
    let diameter = mdp.graph().diameter();
    let all = |f: &dyn Fn(&TruncationRow) -> bool| reports.iter().flatten().all(f);
    let gap_at_diameter = diameter.and_then(|d| {
        worst
            .iter()
            .filter(|r| r.kappa >= d)
            .map(|r| r.grad_gap)
            .reduce(f64::max)
    });
    let summary = DecaySummary {
        schema: SCHEMA,
        run_id: config.run_id()?,
        env: mdp.name().to_string(),
        gamma: config.gamma,
        policies: policies.len(),
        kappa_max: spec.kappa_max,
        diameter,
        variation_within_bound: all(&|r| r.measured_variation <= r.lemma2a_bound + BOUND_TOL),
        truncation_within_bound: all(&|r| r.trunc_q_error <= r.lemma3a_bound + BOUND_TOL),
        gradient_within_bound: all(&|r| r.grad_gap <= r.lemma3b_bound + BOUND_TOL),
        gap_at_diameter,
    };
    let decay = worst
        .iter()
        .map(|r| DecayRow {
            agent: r.agent,
            kappa: r.kappa,
            measured_variation: r.measured_variation,
            lemma2a_bound: r.lemma2a_bound,
            trunc_q_error: r.trunc_q_error,
            lemma3a_bound: r.lemma3a_bound,
        })
        .collect();
    let gradient = worst
        .iter()
        .map(|r| GradientRow {
            agent: r.agent,
            kappa: r.kappa,
            grad_gap: r.grad_gap,
            lemma3b_bound: r.lemma3b_bound,
        })
        .collect();
    Ok(DecayOutcome {
        decay,
        gradient,
        mixing,
        summary,
    })
}

/// Writes `decay.csv`, `gradient.csv`, `mixing.csv` and `decay.json`.
pub fn write_decay_report(outcome: &DecayOutcome, out_dir: &Path) -> Result<()> {
    create_dir(out_dir)?;
    write_csv(&out_dir.join("decay.csv"), &outcome.decay)?;
    write_csv(&out_dir.join("gradient.csv"), &outcome.gradient)?;
    write_csv(&out_dir.join("mixing.csv"), &outcome.mixing)?;
    write_json(&out_dir.join("decay.json"), &outcome.summary)
}
