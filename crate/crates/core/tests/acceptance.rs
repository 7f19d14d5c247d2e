//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Pass a substring as the first argument to run only matching criteria.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use netsac::environments::{line_env, line_optimum};
use netsac::experiment::decay::{decay_report, BOUND_TOL};
use netsac::experiment::output::PairedComparison;
use netsac::experiment::wireless::{finals_of, run_wireless_benchmark, METHOD_ALOHA_BEST, METHOD_SAC};
use netsac::experiment::{run_kappa_sweep, ExperimentConfig};
use netsac::oracle::{build_chain, exact_policy_gradient, exact_q, exact_return};
use netsac::rng::{Purpose, SeedKey};
use netsac::sac::{run_critic, CriticSchedule};
use netsac::stats::median;
use netsac::{Execution, LocalizedPolicyTable, Result};
use rand::Rng;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).expect("committed config loads")
}

struct Check {
    name: String,
    pass: bool,
    detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        pass,
        detail,
    }
}

fn comparison<'a>(cmps: &'a [PairedComparison], better: &str, worse: &str) -> Option<&'a PairedComparison> {
    cmps.iter().find(|c| c.better == better && c.worse == worse)
}

/// Known optimum, κ ordering and gap decay from one κ-sweep on the 8-agent line.
fn line_sweep() -> Result<Vec<Check>> {
    let config = load("line_n8.json");
    let dir = tempfile::tempdir().expect("tempdir");
    let out = run_kappa_sweep(&config, dir.path(), Execution::Parallel)?;
    let a = &out.analysis;
    let opt = line_optimum(8, config.gamma);
    let optimum_ok = (opt - 0.416667).abs() < 1e-6;
    let k1 = a.kappas.iter().find(|k| k.kappa == 1).expect("kappa 1 swept");
    let within = (opt - k1.median_j).abs() <= 0.02;
    let mut checks = vec![check(
        "known-optimum",
        optimum_ok && within && config.seeds >= 10,
        format!(
            "line n=8 kappa=1: median J {:.6} vs optimum {:.6} (gap {:.5}, tol 0.02, {} seeds)",
            k1.median_j,
            opt,
            opt - k1.median_j,
            config.seeds
        ),
    )];
    let ordering = comparison(&a.comparisons, "kappa=1", "kappa=0");
    let k0 = a.kappas.iter().find(|k| k.kappa == 0).expect("kappa 0 swept");
    checks.push(match ordering {
        Some(c) => check(
            "monotone-kappa",
            k1.median_j >= k0.median_j && c.p_value < 0.05 && config.seeds >= 10,
            format!(
                "median J kappa1 {:.6} >= kappa0 {:.6}; sign test {}/{} wins, p = {:.5}",
                k1.median_j,
                k0.median_j,
                c.wins,
                c.wins + c.losses + c.ties,
                c.p_value
            ),
        ),
        None => check("monotone-kappa", false, "no kappa1 vs kappa0 comparison".into()),
    });
    let gaps: Vec<String> = a
        .kappas
        .iter()
        .map(|k| format!("{}:{:.5}", k.kappa, k.median_gap.unwrap_or(f64::NAN)))
        .collect();
    let covers = (0..=4).all(|k| a.kappas.iter().any(|s| s.kappa == k));
    checks.push(check(
        "gap-decay",
        covers && a.log_gap_slope.is_some_and(|s| s < 0.0),
        format!("median gaps {}; slope of log gap {:?}", gaps.join(" "), a.log_gap_slope),
    ));
    Ok(checks)
}

fn decay_config(env: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "env": {env},
            "gamma": 0.7,
            "seeds": 1,
            "master_seed": 11,
            "critic": {{"h": 1, "t0": 1, "horizon": 1}},
            "actor": {{"eta": 1.0, "iterations": 1}},
            "decay": {{"kappa_max": 3, "random_policies": 5, "logit_scale": 2.0, "mixing_horizon": 10}}
        }}"#
    ))
    .expect("decay config")
}

/// Exact bounds on every small model whose rewards are local.
fn exact_bounds() -> Result<Vec<Check>> {
    let envs = [
        r#"{"name": "line", "n": 4}"#,
        r#"{"name": "sis", "n": 3, "params": {
            "recovery": [0.3, 0.5, 0.4],
            "transmission": [[0.6, 0.2], [0.5, 0.1], [0.7, 0.3]],
            "cost": [[0.0, 0.2], [0.0, 0.3], [0.0, 0.1]],
            "initial_infection": [0.5, 0.2, 0.4]}}"#,
        r#"{"name": "sis", "n": 4, "edges": [[0, 1], [0, 2], [0, 3]], "params": {
            "recovery": [0.2, 0.6, 0.6, 0.6],
            "transmission": [[0.5, 0.1], [0.4, 0.2], [0.4, 0.2], [0.4, 0.2]],
            "cost": [[0.0, 0.4], [0.0, 0.1], [0.0, 0.1], [0.0, 0.1]],
            "initial_infection": [0.5, 0.5, 0.5, 0.5]}}"#,
        r#"{"name": "traffic", "params": {"links": 3, "turns": [[0, 1], [1, 2], [2, 0]], "queue_cap": 1,
            "capacity": [[0.3, 0.7], [0.3, 0.7], [0.3, 0.7]], "routing": [[1.0], [1.0], [1.0]]}}"#,
    ];
    let mut variation = (true, 0.0f64);
    let mut truncation = (true, 0.0f64);
    let mut gradient = (true, 0.0f64);
    let mut at_diameter = 0.0f64;
    let mut names = Vec::new();
    for env in envs {
        let config = decay_config(env);
        let out = decay_report(&config, Execution::Parallel)?;
        let s = &out.summary;
        names.push(format!("{}x{}", s.env, s.policies));
        variation.0 &= s.variation_within_bound;
        truncation.0 &= s.truncation_within_bound;
        gradient.0 &= s.gradient_within_bound;
        for r in &out.decay {
            variation.1 = variation.1.max(r.measured_variation / r.lemma2a_bound);
            truncation.1 = truncation.1.max(r.trunc_q_error / r.lemma3a_bound);
        }
        for r in &out.gradient {
            gradient.1 = gradient.1.max(r.grad_gap / r.lemma3b_bound);
        }
        match s.gap_at_diameter {
            Some(g) => at_diameter = at_diameter.max(g),
            None => at_diameter = f64::INFINITY,
        }
    }
    let models = names.join(", ");
    Ok(vec![
        check(
            "decay-bound",
            variation.0,
            format!("{models}: max variation/bound {:.4} (tol {BOUND_TOL:e})", variation.1),
        ),
        check(
            "truncation-error",
            truncation.0,
            format!("max truncation error/bound {:.4}", truncation.1),
        ),
        check(
            "gradient-bound",
            gradient.0 && at_diameter <= 1e-8,
            format!(
                "max gradient gap/bound {:.4}; gap at kappa >= diameter {:.2e}",
                gradient.1, at_diameter
            ),
        ),
    ])
}

/// Sup-norm error of κ=1 tables against exact Q on the 2-agent line.
fn critic_error(horizon: usize, seed: u64, schedule: CriticSchedule) -> Result<f64> {
    let mdp = line_env(2, 0.7)?;
    let policy = LocalizedPolicyTable::uniform(mdp.spaces());
    let chain = build_chain(&mdp, &policy)?;
    let qs = exact_q(&chain)?;
    let sched = CriticSchedule { horizon, ..schedule };
    let (tables, _) = run_critic(&mdp, &policy, 1, &sched, SeedKey::new(seed), Execution::Sequential)?;
    let mut err = 0.0f64;
    for z in 0..chain.len() {
        let (s, a) = chain.config(z);
        for (t, q) in tables.iter().zip(&qs) {
            err = err.max((t.value(s, a) - q.values[z]).abs());
        }
    }
    Ok(err)
}

fn critic_convergence() -> Result<Vec<Check>> {
    let schedule = CriticSchedule::new(50.0, 1000.0, 10_000)?;
    let mut long = Vec::new();
    let mut short = Vec::new();
    for seed in 0..10 {
        long.push(critic_error(200_000, seed, schedule)?);
        short.push(critic_error(10_000, seed, schedule)?);
    }
    let (l, s) = (median(&long).unwrap_or(f64::NAN), median(&short).unwrap_or(f64::NAN));
    let worst = long.iter().copied().fold(0.0, f64::max);
    Ok(vec![check(
        "critic-convergence",
        worst <= 0.05 && l <= s,
        format!("h={} t0={}: sup error T=2e5 max {worst:.4} median {l:.4}; T=1e4 median {s:.4}", schedule.h, schedule.t0),
    )])
}

fn gradient_correctness() -> Result<Vec<Check>> {
    let mdp = line_env(2, 0.7)?;
    let mut rng = SeedKey::new(2024).stream(Purpose::Policy, 0);
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let logits: Vec<Vec<f64>> = (0..2).map(|_| (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let dir: Vec<Vec<f64>> = (0..2).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let at = |step: f64| -> Result<f64> {
            let agents = logits
                .iter()
                .zip(&dir)
                .map(|(l, d)| (2, 2, l.iter().zip(d).map(|(x, y)| x + step * y).collect()))
                .collect();
            exact_return(&mdp, &LocalizedPolicyTable::from_logits(agents)?)
        };
        let policy = LocalizedPolicyTable::from_logits(logits.iter().map(|l| (2, 2, l.clone())).collect())?;
        let grad = exact_policy_gradient(&mdp, &policy)?;
        let analytic: f64 = grad.iter().flatten().zip(dir.iter().flatten()).map(|(g, d)| g * d).sum();
        let numeric = (at(eps)? - at(-eps)?) / (2.0 * eps);
        worst = worst.max((analytic - numeric).abs());
    }
    Ok(vec![check(
        "gradient-correctness",
        worst <= 1e-5,
        format!("20 random (policy, direction) pairs, max |analytic - central difference| {worst:.2e}"),
    )])
}

fn wireless() -> Result<Vec<Check>> {
    let config = load("wireless_3x3.json");
    let dir = tempfile::tempdir().expect("tempdir");
    let out = run_wireless_benchmark(&config, dir.path(), Execution::Parallel)?;
    let sac1 = median(&finals_of(&out.rows, METHOD_SAC, Some(1))).unwrap_or(f64::NAN);
    let sac0 = median(&finals_of(&out.rows, METHOD_SAC, Some(0))).unwrap_or(f64::NAN);
    let aloha = median(&finals_of(&out.rows, METHOD_ALOHA_BEST, None)).unwrap_or(f64::NAN);
    let cmps = &out.summary.comparisons;
    let vs_aloha = comparison(cmps, "sac_kappa1", METHOD_ALOHA_BEST);
    let vs_zero = comparison(cmps, "sac_kappa1", "sac_kappa0");
    let (Some(a), Some(z)) = (vs_aloha, vs_zero) else {
        return Ok(vec![check("wireless", false, "missing comparisons".into())]);
    };
    Ok(vec![check(
        "wireless",
        sac1 >= aloha && sac1 >= sac0 && a.p_value < 0.05 && z.p_value < 0.05 && config.seeds >= 10,
        format!(
            "median J sac1 {sac1:.4}, best aloha {aloha:.4}, sac0 {sac0:.4}; vs aloha {}-{} p={:.4}; vs sac0 {}-{} p={:.4}",
            a.wins, a.losses, a.p_value, z.wins, z.losses, z.p_value
        ),
    )])
}

fn same_bytes(a: &Path, b: &Path, names: &[&str]) -> std::result::Result<(), String> {
    for name in names {
        let x = std::fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = std::fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if x != y {
            return Err(format!("{name} differs"));
        }
    }
    Ok(())
}

fn determinism() -> Result<Vec<Check>> {
    let line = load("line_n4_ci.json");
    let mut wireless = load("wireless_3x3.json");
    wireless.seeds = 2;
    wireless.actor.iterations = 3;
    wireless.critic.horizon = 500;
    let decay = load("decay.json");
    let mut failures = Vec::new();
    let mut files = 0;
    let runs: [(&str, &[&str]); 3] = [
        ("sweep", &["sweep.csv", "metrics.csv"]),
        ("wireless", &["comparison.csv", "training.csv"]),
        ("decay", &["decay.csv", "gradient.csv", "mixing.csv"]),
    ];
    for (name, outputs) in runs {
        let a = tempfile::tempdir().expect("tempdir");
        let b = tempfile::tempdir().expect("tempdir");
        for (dir, exec) in [(a.path(), Execution::Parallel), (b.path(), Execution::Sequential)] {
            match name {
                "sweep" => {
                    run_kappa_sweep(&line, dir, exec)?;
                }
                "wireless" => {
                    run_wireless_benchmark(&wireless, dir, exec)?;
                }
                _ => {
                    let out = decay_report(&decay, exec)?;
                    netsac::experiment::write_decay_report(&out, dir)?;
                }
            }
        }
        files += outputs.len();
        if let Err(e) = same_bytes(a.path(), b.path(), outputs) {
            failures.push(format!("{name}: {e}"));
        }
    }
    Ok(vec![check(
        "determinism",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{files} CSV files byte-identical across two runs (parallel and sequential)")
        } else {
            failures.join("; ")
        },
    )])
}

type Group = (&'static str, fn() -> Result<Vec<Check>>);

fn main() -> ExitCode {
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let groups: [Group; 6] = [
        ("known-optimum monotone-kappa gap-decay", line_sweep),
        ("decay-bound truncation-error gradient-bound", exact_bounds),
        ("critic-convergence", critic_convergence),
        ("gradient-correctness", gradient_correctness),
        ("wireless", wireless),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (names, run) in groups {
        if filter.as_deref().is_some_and(|f| !names.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let checks = match run() {
            Ok(c) => c,
            Err(e) => names
                .split(' ')
                .map(|n| check(n, false, format!("error: {e}")))
                .collect(),
        };
        let secs = start.elapsed().as_secs_f64();
        for c in checks {
            if !c.pass {
                failed += 1;
            }
            println!("{} {:<22} {} [{secs:.0}s]", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
