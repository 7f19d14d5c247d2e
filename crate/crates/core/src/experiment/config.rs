//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environments::{line_env, SisEnv, SisParams, TrafficEnv, TrafficParams, WirelessGridEnv, WirelessParams};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mdp::NetworkedMdp;
use crate::rng::{Purpose, SeedKey};
use crate::sac::{ActorSchedule, CriticSchedule};

/// Environment selection, tagged by `"name"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Line {
        n: usize,
    },
    Wireless {
        rows: usize,
        cols: usize,
        deadline: usize,
        /// Users pick blocks at random instead of one user per block.
        #[serde(default)]
        random_layout: bool,
    },
    Sis {
        n: usize,
        /// Defaults to a path over `n` nodes.
        #[serde(default)]
        edges: Option<Vec<(usize, usize)>>,
        params: SisParams,
    },
    Traffic {
        params: TrafficParams,
    },
}

impl EnvSpec {
    /// Builds the MDP for one seed. Only the wireless grid draws its
    /// parameters from `(master_seed, seed)`; the other models are fixed.
    pub fn build(&self, gamma: f64, master_seed: u64, seed: u64) -> Result<NetworkedMdp> {
        match self {
            EnvSpec::Line { n } => line_env(*n, gamma),
            EnvSpec::Wireless { .. } => self.wireless(master_seed, seed)?.into_mdp(gamma),
            EnvSpec::Sis { n, edges, params } => {
                let graph = match edges {
                    Some(e) => Graph::new(*n, e)?,
                    None => Graph::path(*n)?,
                };
                SisEnv::new(*n, params.clone())?.into_mdp(graph, gamma)
            }
            EnvSpec::Traffic { params } => TrafficEnv::new(params.clone())?.into_mdp(gamma),
        }
    }

    /// The wireless instance of a seed, with `p_i, q_k ~ U[0, 1]`.
    pub fn wireless(&self, master_seed: u64, seed: u64) -> Result<WirelessGridEnv> {
        match self {
            EnvSpec::Wireless {
                rows,
                cols,
                deadline,
                random_layout,
            } => {
                let mut rng = SeedKey::new(master_seed).child(seed).stream(Purpose::EnvParams, 0);
                WirelessGridEnv::new(WirelessParams::random(*rows, *cols, *deadline, *random_layout, &mut rng))
            }
            _ => Err(Error::Config("this subcommand needs a wireless environment".into())),
        }
    }

    pub fn is_wireless(&self) -> bool {
        matches!(self, EnvSpec::Wireless { .. })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    /// Exact `J(θ)` through the state chain.
    Exact,
    #[default]
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    #[serde(default)]
    pub method: EvalMethod,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Truncation bias allowed in each Monte-Carlo return.
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    /// Evaluate every `every` outer iterations; 0 evaluates only the final policy.
    #[serde(default)]
    pub every: usize,
}

fn default_episodes() -> usize {
    200
}

fn default_tail_tol() -> f64 {
    1e-4
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        EvaluationSpec {
            method: EvalMethod::default(),
            episodes: default_episodes(),
            tail_tol: default_tail_tol(),
            every: 0,
        }
    }
}

/// User estimates of the exploration and smoothness constants.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionEstimates {
    /// Local exploration probability `σ ∈ (0, 1)`.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Local exploration time `τ`.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Lipschitz constant `L'` of `∇J`.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    /// Failure probability `δ` of the high-probability bound.
    #[serde(default)]
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Fill the `wall_ms` column. Off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
    /// Write a policy checkpoint per cell.
    #[serde(default = "default_true")]
    pub checkpoints: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_true() -> bool {
    true
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: default_out_dir(),
            timing: false,
            checkpoints: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlohaSpec {
    #[serde(default = "default_send_probs")]
    pub send_probs: Vec<f64>,
}

fn default_send_probs() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

impl Default for AlohaSpec {
    fn default() -> Self {
        AlohaSpec {
            send_probs: default_send_probs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    #[serde(default = "default_kappa_max")]
    pub kappa_max: usize,
    /// Random policies besides the uniform one.
    #[serde(default = "default_policies")]
    pub random_policies: usize,
    /// Logits are drawn uniformly from `[-scale, scale]`.
    #[serde(default = "default_logit_scale")]
    pub logit_scale: f64,
    /// Horizon of the mixing probe.
    #[serde(default = "default_mixing_horizon")]
    pub mixing_horizon: usize,
}

fn default_kappa_max() -> usize {
    3
}

fn default_policies() -> usize {
    5
}

fn default_logit_scale() -> f64 {
    2.0
}

fn default_mixing_horizon() -> usize {
    30
}

impl Default for DecaySpec {
    fn default() -> Self {
        DecaySpec {
            kappa_max: default_kappa_max(),
            random_policies: default_policies(),
            logit_scale: default_logit_scale(),
            mixing_horizon: default_mixing_horizon(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub gamma: f64,
    #[serde(default = "default_kappas")]
    pub kappas: Vec<usize>,
    /// Number of seeds; seeds are `0..seeds`.
    pub seeds: u64,
    #[serde(default)]
    pub master_seed: u64,
    pub critic: CriticSchedule,
    pub actor: ActorSchedule,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
    #[serde(default)]
    pub assumptions: Option<AssumptionEstimates>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub aloha: AlohaSpec,
    #[serde(default)]
    pub decay: DecaySpec,
}

fn default_kappas() -> Vec<usize> {
    vec![0, 1]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Checks ranges that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        if self.kappas.is_empty() {
            return bad("kappas must not be empty".into());
        }
        self.critic.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.actor.validate().map_err(|e| Error::Config(e.to_string()))?;
        let ev = &self.evaluation;
        if ev.episodes == 0 {
            return bad("evaluation.episodes must be at least 1".into());
        }
        if !(ev.tail_tol > 0.0 && ev.tail_tol < 1.0) {
            return bad(format!("evaluation.tail_tol must lie in (0, 1), got {}", ev.tail_tol));
        }
        if self.aloha.send_probs.is_empty() || self.aloha.send_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("aloha.send_probs must be a non-empty list of probabilities".into());
        }
        if !(self.decay.logit_scale.is_finite() && self.decay.logit_scale >= 0.0) {
            return bad("decay.logit_scale must be a non-negative number".into());
        }
        if let Some(a) = &self.assumptions {
            if a.sigma.is_some_and(|s| !(s > 0.0 && s < 1.0)) {
                return bad("assumptions.sigma must lie in (0, 1)".into());
            }
            if a.delta.is_some_and(|d| !(d > 0.0 && d < 1.0)) {
                return bad("assumptions.delta must lie in (0, 1)".into());
            }
            if a.tau.is_some_and(|t| !(t >= 1.0)) || a.lipschitz.is_some_and(|l| !(l > 0.0)) {
                return bad("assumptions.tau must be at least 1 and assumptions.lipschitz positive".into());
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The configuration without its output location, so that results do
    /// not depend on where they are written.
    pub fn canonical(&self) -> ExperimentConfig {
        let mut c = self.clone();
        c.output.dir = OutputSpec::default().dir;
        c
    }

    /// Identifier of the canonical configuration.
    pub fn run_id(&self) -> Result<String> {
        Ok(super::output::run_id(&self.canonical().to_json()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "env": {"name": "line", "n": 4},
        "gamma": 0.7,
        "seeds": 2,
        "critic": {"h": 50, "t0": 1000, "horizon": 100},
        "actor": {"eta": 1.0, "iterations": 3}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.env, EnvSpec::Line { n: 4 });
        assert_eq!(cfg.kappas, vec![0, 1]);
        assert_eq!(cfg.evaluation.episodes, 200);
        assert_eq!(cfg.aloha.send_probs.len(), 9);
        assert!(cfg.assumptions.is_none());
        let again = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let extra = MINIMAL.replace("\"gamma\"", "\"gama\": 1, \"gamma\"");
        assert!(matches!(ExperimentConfig::from_json(&extra), Err(Error::Config(_))));
        let nested = MINIMAL.replace("\"n\": 4", "\"n\": 4, \"width\": 2");
        assert!(ExperimentConfig::from_json(&nested).is_err());
        let critic = MINIMAL.replace("\"horizon\": 100", "\"horizon\": 100, \"lambda\": 0.5");
        assert!(ExperimentConfig::from_json(&critic).is_err());
    }

    #[test]
    fn ranges_checked() {
        let bad_gamma = MINIMAL.replace("0.7", "1.0");
        assert!(ExperimentConfig::from_json(&bad_gamma).is_err());
        let bad_t0 = MINIMAL.replace("\"t0\": 1000", "\"t0\": 10");
        assert!(ExperimentConfig::from_json(&bad_t0).is_err());
        let no_seeds = MINIMAL.replace("\"seeds\": 2", "\"seeds\": 0");
        assert!(ExperimentConfig::from_json(&no_seeds).unwrap_err().is_config_error());
    }

    #[test]
    fn wireless_instances_depend_on_seed_only() {
        let spec = EnvSpec::Wireless {
            rows: 3,
            cols: 3,
            deadline: 2,
            random_layout: false,
        };
        let a = spec.wireless(7, 1).unwrap();
        let b = spec.wireless(7, 1).unwrap();
        let c = spec.wireless(7, 2).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        assert!(EnvSpec::Line { n: 3 }.wireless(0, 0).is_err());
    }
}
