//! `netsac` experiment runner.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netsac::experiment::output::{create_dir, write_csv, ResultRow};
use netsac::experiment::sweep::evaluation_key;
use netsac::experiment::{
    decay_report, evaluate, run_kappa_sweep, run_wireless_benchmark, validate_config, write_decay_report,
    ExperimentConfig,
};
use netsac::parallel::with_threads;
use netsac::{Error, Execution, LocalizedPolicy, LocalizedPolicyTable};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "netsac", version, about = "Scalable actor-critic experiments on networked MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train SAC over every (kappa, seed) cell and write sweep.csv.
    Sweep(Common),
    /// Compare SAC with the best ALOHA policy on seeded wireless grids.
    Wireless(Common),
    /// Evaluate a saved policy (or the uniform one) on each seed's instance.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Policy checkpoint written by `sweep`.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Exact decay, truncation and gradient bounds on a small instance.
    DecayReport(Common),
    /// Check step sizes against the supplied assumption estimates.
    Validate(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially, 0 uses every core.
    #[arg(long, default_value_t = 0)]
    parallel: usize,
}

impl Common {
    fn load(&self) -> netsac::Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config).map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            other => other,
        })?;
        if let Some(seed) = self.seed {
            config.master_seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            config.output.dir = dir.clone();
        }
        Ok(config)
    }

    fn execution(&self) -> Execution {
        if self.parallel == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

fn run(command: &Command) -> netsac::Result<()> {
    match command {
        Command::Sweep(c) => {
            let config = c.load()?;
            let out = with_threads(c.parallel, || run_kappa_sweep(&config, &config.output.dir, c.execution()))?;
            println!("run {} -> {}", out.run_id, out.results_csv.display());
            for k in &out.analysis.kappas {
                match k.median_gap {
                    Some(gap) => println!("kappa {}: median J {:.6}, median gap {:.6}", k.kappa, k.median_j, gap),
                    None => println!("kappa {}: median J {:.6}", k.kappa, k.median_j),
                }
            }
            if let Some(slope) = out.analysis.log_gap_slope {
                println!("slope of log median gap over kappa: {slope:.4}");
            }
            for cmp in &out.analysis.comparisons {
                print_comparison(&cmp.better, &cmp.worse, cmp.wins, cmp.losses, cmp.p_value);
            }
        }
        Command::Wireless(c) => {
            let config = c.load()?;
            let out = with_threads(c.parallel, || {
                run_wireless_benchmark(&config, &config.output.dir, c.execution())
            })?;
            println!("run {} -> {}", out.summary.run_id, out.comparison_csv.display());
            for m in &out.summary.methods {
                let label = m.kappa.map_or(m.method.clone(), |k| format!("{} kappa {k}", m.method));
                println!("{label}: median J {:.6}", m.median_j.unwrap_or(f64::NAN));
            }
            for cmp in &out.summary.comparisons {
                print_comparison(&cmp.better, &cmp.worse, cmp.wins, cmp.losses, cmp.p_value);
            }
        }
        Command::Evaluate { common, policy } => {
            let config = common.load()?;
            let rows = with_threads(common.parallel, || evaluate_command(&config, policy.as_deref(), common.execution()))?;
            let dir = &config.output.dir;
            create_dir(dir)?;
            let path = dir.join("evaluate.csv");
            write_csv(&path, &rows)?;
            for r in &rows {
                println!("seed {}: J {:.6} (se {:.6})", r.seed, r.eval_j, r.eval_se);
            }
            println!("-> {}", path.display());
        }
        Command::DecayReport(c) => {
            let config = c.load()?;
            let out = with_threads(c.parallel, || decay_report(&config, c.execution()))?;
            write_decay_report(&out, &config.output.dir)?;
            let s = &out.summary;
            println!("{}: {} policies, kappa 0..={}", s.env, s.policies, s.kappa_max);
            println!("variation within bound: {}", s.variation_within_bound);
            println!("truncation error within bound: {}", s.truncation_within_bound);
            println!("gradient gap within bound: {}", s.gradient_within_bound);
            println!("-> {}", config.output.dir.join("decay.csv").display());
        }
        Command::Validate(c) => {
            let config = c.load()?;
            let warnings = validate_config(&config)?;
            if config.assumptions.is_none() {
                println!("no assumption estimates supplied; nothing to check");
            } else if warnings.is_empty() {
                println!("all step-size conditions hold for the supplied estimates");
            }
            for w in warnings {
                println!("warning: {w}");
            }
        }
    }
    Ok(())
}

fn print_comparison(better: &str, worse: &str, wins: usize, losses: usize, p: f64) {
    println!("{better} vs {worse}: {wins} wins, {losses} losses, sign-test p = {p:.4}");
}

fn evaluate_command(config: &ExperimentConfig, policy: Option<&Path>, exec: Execution) -> netsac::Result<Vec<ResultRow>> {
    let loaded = match policy {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            Some(LocalizedPolicyTable::from_json(&text)?)
        }
        None => None,
    };
    let run = config.run_id()?;
    let mut rows = Vec::new();
    for seed in 0..config.seeds {
        let mdp = config.env.build(config.gamma, config.master_seed, seed)?;
        let uniform;
        let policy = match &loaded {
            Some(p) => {
                let fits = p.n_agents() == mdp.n()
                    && (0..mdp.n()).all(|i| {
                        let sp = mdp.space(i);
                        p.shape(i) == (sp.states, sp.actions)
                    });
                if !fits {
                    return Err(Error::Config(format!("policy does not match the {} environment", mdp.name())));
                }
                p
            }
            None => {
                uniform = LocalizedPolicyTable::uniform(mdp.spaces());
                &uniform
            }
        };
        let est = evaluate(&mdp, policy, &config.evaluation, evaluation_key(config.master_seed, seed), exec)?;
        rows.push(ResultRow {
            run_id: run.clone(),
            env: mdp.name().to_string(),
            kappa: None,
            seed,
            m: None,
            eval_j: est.mean,
            eval_se: est.se,
            gap: mdp.known_optimum().map(|o| o - est.mean),
            wall_ms: None,
        });
    }
    Ok(rows)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
