//! Warnings for step sizes that break the convergence conditions under
//! user-supplied estimates of the model constants.

use crate::error::Result;

use super::config::{AssumptionEstimates, ExperimentConfig};

const DEFAULT_DELTA: f64 = 0.1;

/// Model quantities the step-size conditions depend on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSizes {
    pub n: usize,
    pub reward_bound: f64,
    /// `f(κ) = max_i |N_i^κ|`.
    pub max_neighborhood: usize,
    /// Largest local state space.
    pub states: usize,
    /// Largest local action space.
    pub actions: usize,
}

/// `(C_a(δ', T), C_a')` with `δ' = δ / (2 n M)` and `ε̄ = 4 r̄/(1−γ) + 2 r̄`.
pub fn critic_constants(
    sizes: &ModelSizes,
    gamma: f64,
    h: f64,
    t0: f64,
    horizon: usize,
    iterations: usize,
    sigma: f64,
    tau: f64,
    delta: f64,
) -> (f64, f64) {
    let r = sizes.reward_bound;
    let eps = 4.0 * r / (1.0 - gamma) + 2.0 * r;
    let sg = 1.0 - gamma.sqrt();
    let delta = delta / (2.0 * sizes.n as f64 * iterations.max(1) as f64);
    let t = horizon.max(1) as f64;
    let log_term = (2.0 * tau * t * t / delta).ln()
        + sizes.max_neighborhood as f64 * ((sizes.states * sizes.actions) as f64).ln();
    let ca = 6.0 * eps / sg * (tau * h / sigma * log_term).sqrt();
    let ca_prime = 2.0 / sg * f64::max(16.0 * eps * h * tau / sigma, 2.0 * r / (1.0 - gamma) * (tau + t0));
    (ca, ca_prime)
}

/// Checks one κ against the estimates; every violated condition yields a
/// human-readable warning.
pub fn check_conditions(
    config: &ExperimentConfig,
    est: &AssumptionEstimates,
    kappa: usize,
    sizes: &ModelSizes,
) -> Vec<String> {
    let gamma = config.gamma;
    let h = config.critic.h;
    let t0 = config.critic.t0;
    let horizon = config.critic.horizon;
    let mut warnings = Vec::new();
    if let Some(sigma) = est.sigma {
        let need = f64::max(2.0, 1.0 / (1.0 - gamma.sqrt())) / sigma;
        if h < need {
            warnings.push(format!(
                "critic.h = {h} is below (1/sigma) max(2, 1/(1 - sqrt(gamma))) = {need:.4} for sigma = {sigma}"
            ));
        }
    }
    if est.sigma.is_some() || est.tau.is_some() {
        let sigma = est.sigma.unwrap_or(0.0);
        let tau = est.tau.unwrap_or(0.0);
        let need = f64::max(2.0 * h, f64::max(4.0 * sigma * h, tau));
        if t0 < need {
            warnings.push(format!(
                "critic.t0 = {t0} violates t_0 >= max(2h, 4 sigma h, tau) = {need:.4}"
            ));
        }
    }
    if let Some(l) = est.lipschitz {
        let need = 1.0 / (4.0 * l);
        if config.actor.eta > need {
            warnings.push(format!(
                "actor.eta = {} exceeds 1/(4 L') = {need:.6} for L' = {l}",
                config.actor.eta
            ));
        }
    }
    // With (c, rho) = (r/(1-gamma), gamma) the horizon condition is T + 1 >= kappa + 1.
    if horizon < kappa {
        warnings.push(format!(
            "kappa = {kappa}: critic.horizon = {horizon} is too short; T + 1 must be at least kappa + 1"
        ));
    }
    if let (Some(sigma), Some(tau)) = (est.sigma, est.tau) {
        let delta = est.delta.unwrap_or(DEFAULT_DELTA);
        let (ca, ca_prime) = critic_constants(
            sizes,
            gamma,
            h,
            t0,
            horizon,
            config.actor.iterations,
            sigma,
            tau,
            delta,
        );
        let t = horizon as f64 + t0;
        let lhs = ca / t.sqrt() + ca_prime / t;
        let c = sizes.reward_bound / (1.0 - gamma);
        let rhs = 2.0 * c * gamma.powi(kappa as i32 + 1) / (1.0 - gamma).powi(2);
        if lhs > rhs {
            warnings.push(format!(
                "kappa = {kappa}: critic error term {lhs:.4e} exceeds the truncation level {rhs:.4e}; \
                 critic.horizon = {horizon} is too short for the supplied sigma and tau"
            ));
        }
    }
    if config.actor.iterations < 3 {
        warnings.push(format!("actor.iterations = {} is below 3", config.actor.iterations));
    }
    warnings
}

/// Warnings for every κ in the config. Without an `assumptions` block there
/// is nothing to check against and the list is empty.
pub fn validate_config(config: &ExperimentConfig) -> Result<Vec<String>> {
    let Some(est) = &config.assumptions else {
        return Ok(Vec::new());
    };
    let mdp = config.env.build(config.gamma, config.master_seed, 0)?;
    let states = mdp.spaces().iter().map(|s| s.states).max().unwrap_or(1);
    let actions = mdp.spaces().iter().map(|s| s.actions).max().unwrap_or(1);
    let mut warnings = Vec::new();
    for &kappa in &config.kappas {
        let sizes = ModelSizes {
            n: mdp.n(),
            reward_bound: mdp.reward_bound(),
            max_neighborhood: mdp.graph().max_neighborhood_size(kappa),
            states,
            actions,
        };
        for w in check_conditions(config, est, kappa, &sizes) {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
    }
    Ok(warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(assumptions: &str, h: f64, t0: f64, horizon: usize, eta: f64) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
                "env": {{"name": "line", "n": 4}},
                "gamma": 0.7,
                "kappas": [0, 1, 2],
                "seeds": 1,
                "critic": {{"h": {h}, "t0": {t0}, "horizon": {horizon}}},
                "actor": {{"eta": {eta}, "iterations": 10}},
                "assumptions": {assumptions}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn small_h_warns() {
        // 1/(1 - sqrt 0.7) = 6.12, so h must be at least 61.2 for sigma = 0.1
        let w = validate_config(&config(r#"{"sigma": 0.1}"#, 10.0, 100.0, 100, 0.1)).unwrap();
        assert!(w.iter().any(|m| m.starts_with("critic.h = 10")), "{w:?}");
        let w = validate_config(&config(r#"{"sigma": 0.1}"#, 62.0, 200.0, 100, 0.1)).unwrap();
        assert!(w.is_empty(), "{w:?}");
    }

    #[test]
    fn t0_condition_mentions_formula() {
        let w = validate_config(&config(r#"{"sigma": 0.5, "tau": 500}"#, 10.0, 100.0, 100, 0.1)).unwrap();
        assert!(w.iter().any(|m| m.contains("t_0 >= max(2h, 4 sigma h, tau) = 500")), "{w:?}");
    }

    #[test]
    fn eta_and_horizon() {
        let w = validate_config(&config(r#"{"lipschitz": 10}"#, 10.0, 100.0, 1, 0.1)).unwrap();
        assert!(w.iter().any(|m| m.starts_with("actor.eta = 0.1 exceeds")), "{w:?}");
        assert!(w.iter().any(|m| m.starts_with("kappa = 2: critic.horizon = 1")), "{w:?}");
        assert!(!w.iter().any(|m| m.starts_with("kappa = 1:")), "{w:?}");
    }

    #[test]
    fn no_assumptions_no_warnings() {
        let mut cfg = config(r#"{"sigma": 0.1}"#, 1.0, 1.0, 1, 100.0);
        cfg.assumptions = None;
        assert!(validate_config(&cfg).unwrap().is_empty());
    }

    #[test]
    fn critic_error_term_shrinks_with_horizon() {
        let sizes = ModelSizes {
            n: 4,
            reward_bound: 1.0,
            max_neighborhood: 3,
            states: 2,
            actions: 2,
        };
        let lhs = |t: usize| {
            let (a, b) = critic_constants(&sizes, 0.7, 70.0, 1000.0, t, 10, 0.1, 2.0, 0.1);
            a / (t as f64 + 1000.0).sqrt() + b / (t as f64 + 1000.0)
        };
        assert!(lhs(1_000_000_000) < lhs(10_000));
        let w = validate_config(&config(r#"{"sigma": 0.1, "tau": 2}"#, 70.0, 1000.0, 10_000, 0.1)).unwrap();
        assert!(w.iter().any(|m| m.contains("critic error term")), "{w:?}");
    }
}
