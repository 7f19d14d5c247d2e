//! Localized policies `ζ_i(a_i | s_i)`.
//!
//! [`LocalizedPolicyTable`] is the trainable tabular softmax policy;
//! [`PolicyTable`] holds explicit probabilities for fixed baselines. The joint
//! policy is always the product of the per-agent policies.

use std::collections::BTreeMap;

use rand::Rng;
use serde::ser::{SerializeMap, SerializeSeq, SerializeStruct};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mdp::LocalSpace;
use crate::rng::{sample_index, Stream};

/// A product policy whose agents each condition on their own local state.
pub trait LocalizedPolicy: Sync {
    fn n_agents(&self) -> usize;
    fn state_count(&self, agent: usize) -> usize;
    fn action_count(&self, agent: usize) -> usize;

    /// Writes `ζ_i(· | s_i)` into `out` (length `|A_i|`).
    fn action_probs_into(&self, agent: usize, state: usize, out: &mut [f64]);

    fn action_probs(&self, agent: usize, state: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.action_count(agent)];
        self.action_probs_into(agent, state, &mut out);
        out
    }

    fn sample_action(&self, agent: usize, state: usize, rng: &mut Stream) -> usize {
        sample_index(&self.action_probs(agent, state), rng.gen::<f64>())
    }

    /// `ζ(a | s) = ∏_i ζ_i(a_i | s_i)`.
    fn joint_prob(&self, s: &[usize], a: &[usize]) -> f64 {
        s.iter()
            .zip(a)
            .enumerate()
            .map(|(i, (&si, &ai))| self.action_probs(i, si)[ai])
            .product()
    }
}

/// Softmax of `logits` into `out`, with max-subtraction.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn logsumexp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, PartialEq)]
struct Logits {
    states: usize,
    actions: usize,
    values: Vec<f64>,
}

/// Tabular softmax parameters `θ_i ∈ R^{|S_i| × |A_i|}`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizedPolicyTable {
    agents: Vec<Logits>,
}

impl LocalizedPolicyTable {
    /// All-zero logits: the uniform policy.
    pub fn uniform(spaces: &[LocalSpace]) -> Self {
        LocalizedPolicyTable {
            agents: spaces
                .iter()
                .map(|sp| Logits {
                    states: sp.states,
                    actions: sp.actions,
                    values: vec![0.0; sp.states * sp.actions],
                })
                .collect(),
        }
    }

    /// Builds from `(|S_i|, |A_i|, row-major logits)` per agent.
    pub fn from_logits(agents: Vec<(usize, usize, Vec<f64>)>) -> Result<Self> {
        let agents = agents
            .into_iter()
            .enumerate()
            .map(|(i, (states, actions, values))| {
                if states == 0 || actions == 0 || values.len() != states * actions {
                    return Err(Error::ShapeMismatch(format!(
                        "agent {i}: {} logits for shape {states}x{actions}",
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "agent {i}: logits must be finite"
                    )));
                }
                Ok(Logits {
                    states,
                    actions,
                    values,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LocalizedPolicyTable { agents })
    }

    /// Policy that picks `choice[i]` in every state, expressed with logit gap `scale`.
    pub fn near_deterministic(spaces: &[LocalSpace], choice: &[usize], scale: f64) -> Self {
        let mut table = Self::uniform(spaces);
        for (i, &c) in choice.iter().enumerate() {
            let lg = &mut table.agents[i];
            for s in 0..lg.states {
                lg.values[s * lg.actions + c] = scale;
            }
        }
        table
    }

    pub fn logits(&self, agent: usize) -> &[f64] {
        &self.agents[agent].values
    }

    pub fn logits_mut(&mut self, agent: usize) -> &mut [f64] {
        &mut self.agents[agent].values
    }

    pub fn shape(&self, agent: usize) -> (usize, usize) {
        let lg = &self.agents[agent];
        (lg.states, lg.actions)
    }

    pub fn row(&self, agent: usize, state: usize) -> &[f64] {
        let lg = &self.agents[agent];
        &lg.values[state * lg.actions..(state + 1) * lg.actions]
    }

    /// `log ζ_i(a | s) = θ_i[s, a] − logsumexp(θ_i[s, ·])`.
    pub fn log_prob(&self, agent: usize, state: usize, action: usize) -> f64 {
        let row = self.row(agent, state);
        row[action] - logsumexp(row)
    }

    /// Score-function row `e_a − ζ_i(· | s)`: the only nonzero row of
    /// `∇_{θ_i} log ζ_i(a | s)`.
    pub fn score_row_into(&self, agent: usize, state: usize, action: usize, out: &mut [f64]) {
        softmax_into(self.row(agent, state), out);
        for o in out.iter_mut() {
            *o = -*o;
        }
        out[action] += 1.0;
    }

    /// Full `∇_{θ_i} log ζ_i(a | s)`, shaped like `θ_i`.
    pub fn log_policy_grad(&self, agent: usize, state: usize, action: usize) -> Vec<f64> {
        let (states, actions) = self.shape(agent);
        let mut grad = vec![0.0; states * actions];
        self.score_row_into(
            agent,
            state,
            action,
            &mut grad[state * actions..(state + 1) * actions],
        );
        grad
    }

    /// `θ_i ← θ_i + step · g_i` for every agent, returning the new table.
    pub fn gradient_ascent_step(&self, grads: &[Vec<f64>], step: f64) -> Result<Self> {
        let mut next = self.clone();
        next.apply_gradient(grads, step)?;
        Ok(next)
    }

    pub fn apply_gradient(&mut self, grads: &[Vec<f64>], step: f64) -> Result<()> {
        if grads.len() != self.agents.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} gradients for {} agents",
                grads.len(),
                self.agents.len()
            )));
        }
        for (i, (lg, g)) in self.agents.iter().zip(grads).enumerate() {
            if g.len() != lg.values.len() {
                return Err(Error::ShapeMismatch(format!(
                    "agent {i}: gradient has {} entries, θ_i has {}",
                    g.len(),
                    lg.values.len()
                )));
            }
        }
        for (lg, g) in self.agents.iter_mut().zip(grads) {
            for (v, d) in lg.values.iter_mut().zip(g) {
                *v += step * d;
            }
        }
        Ok(())
    }

    /// Serialises to the checkpoint JSON document.
    ///
    /// Every logit is written in scientific notation with 17 significant
    /// digits, which round-trips `f64` exactly.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CheckpointOut(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointIn = serde_json::from_str(text)?;
        if doc.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "unsupported checkpoint format {:?}",
                doc.format
            )));
        }
        let mut agents = BTreeMap::new();
        for (key, agent) in doc.agents {
            let id: usize = key
                .parse()
                .map_err(|_| Error::Config(format!("agent id {key:?} is not an integer")))?;
            agents.insert(id, agent);
        }
        if agents.keys().copied().ne(0..agents.len()) {
            return Err(Error::Config("agent ids must be 0..n without gaps".into()));
        }
        Self::from_logits(
            agents
                .into_values()
                .map(|a| (a.shape[0], a.shape[1], a.logits))
                .collect(),
        )
    }
}

impl LocalizedPolicy for LocalizedPolicyTable {
    fn n_agents(&self) -> usize {
        self.agents.len()
    }

    fn state_count(&self, agent: usize) -> usize {
        self.agents[agent].states
    }

    fn action_count(&self, agent: usize) -> usize {
        self.agents[agent].actions
    }

    fn action_probs_into(&self, agent: usize, state: usize, out: &mut [f64]) {
        softmax_into(self.row(agent, state), out);
    }
}

pub const CHECKPOINT_FORMAT: &str = "netsac-policy-v1";

struct CheckpointOut<'a>(&'a LocalizedPolicyTable);
struct AgentOut<'a>(&'a Logits);
struct Sci17<'a>(&'a [f64]);

impl Serialize for CheckpointOut<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        struct Agents<'a>(&'a [Logits]);
        impl Serialize for Agents<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut map = s.serialize_map(Some(self.0.len()))?;
                for (i, lg) in self.0.iter().enumerate() {
                    map.serialize_entry(&i.to_string(), &AgentOut(lg))?;
                }
                map.end()
            }
        }
        let mut st = serializer.serialize_struct("Checkpoint", 2)?;
        st.serialize_field("format", CHECKPOINT_FORMAT)?;
        st.serialize_field("agents", &Agents(&self.0.agents))?;
        st.end()
    }
}

impl Serialize for AgentOut<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("Agent", 2)?;
        st.serialize_field("shape", &[self.0.states, self.0.actions])?;
        st.serialize_field("logits", &Sci17(&self.0.values))?;
        st.end()
    }
}

impl Serialize for Sci17<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
        for &v in self.0 {
            let raw = serde_json::value::RawValue::from_string(format!("{v:.16e}"))
                .map_err(S::Error::custom)?;
            seq.serialize_element(&raw)?;
        }
        seq.end()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointIn {
    format: String,
    agents: BTreeMap<String, AgentIn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentIn {
    shape: [usize; 2],
    logits: Vec<f64>,
}

/// Explicit per-agent action probabilities `ζ_i(a | s)`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTable {
    agents: Vec<(usize, usize, Vec<f64>)>,
}

impl PolicyTable {
    pub fn new(agents: Vec<(usize, usize, Vec<f64>)>) -> Result<Self> {
        for (i, (states, actions, probs)) in agents.iter().enumerate() {
            if probs.len() != states * actions {
                return Err(Error::ShapeMismatch(format!(
                    "agent {i}: {} probabilities for shape {states}x{actions}",
                    probs.len()
                )));
            }
            for row in probs.chunks(*actions) {
                crate::mdp::check_distribution(i, row)?;
            }
        }
        Ok(PolicyTable { agents })
    }
}

impl LocalizedPolicy for PolicyTable {
    fn n_agents(&self) -> usize {
        self.agents.len()
    }

    fn state_count(&self, agent: usize) -> usize {
        self.agents[agent].0
    }

    fn action_count(&self, agent: usize) -> usize {
        self.agents[agent].1
    }

    fn action_probs_into(&self, agent: usize, state: usize, out: &mut [f64]) {
        let (_, actions, probs) = &self.agents[agent];
        out.copy_from_slice(&probs[state * actions..(state + 1) * actions]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn single(row: Vec<f64>) -> LocalizedPolicyTable {
        let k = row.len();
        LocalizedPolicyTable::from_logits(vec![(1, k, row)]).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let p = single(vec![0.0, 0.0]);
        assert_eq!(p.action_probs(0, 0), vec![0.5, 0.5]);
        let p = single(vec![3f64.ln(), 0.0]);
        let probs = p.action_probs(0, 0);
        assert_abs_diff_eq!(probs[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(probs[1], 0.25, epsilon = 1e-15);
        let p = single(vec![1000.0, 0.0]);
        let probs = p.action_probs(0, 0);
        assert_eq!(probs[0], 1.0);
        assert!(probs[1] >= 0.0 && probs[1] < 1e-300);
        assert!(p.log_prob(0, 0, 1).is_finite());
    }

    #[test]
    fn score_examples() {
        let spaces = [LocalSpace::new(3, 2).unwrap()];
        let p = LocalizedPolicyTable::uniform(&spaces);
        let g = p.log_policy_grad(0, 1, 0);
        assert_eq!(g, vec![0.0, 0.0, 0.5, -0.5, 0.0, 0.0]);

        let p = single(vec![60.0, 0.0]);
        let g = p.log_policy_grad(0, 0, 0);
        assert!(g.iter().all(|v| v.abs() < 1e-25));
    }

    #[test]
    fn ascent_step() {
        let spaces = [LocalSpace::new(2, 2).unwrap(); 2];
        let p = LocalizedPolicyTable::uniform(&spaces);
        let zero = vec![vec![0.0; 4]; 2];
        assert_eq!(p.gradient_ascent_step(&zero, 0.3).unwrap(), p);
        let g = vec![vec![1.0, -1.0, 0.0, 2.0], vec![0.5; 4]];
        let q = p.gradient_ascent_step(&g, 0.1).unwrap();
        assert_eq!(q.logits(0), &[0.1, -0.1, 0.0, 0.2]);
        assert!(p.gradient_ascent_step(&g[..1], 0.1).is_err());
        assert!(p.gradient_ascent_step(&[vec![0.0; 3], vec![0.0; 4]], 0.1).is_err());
    }

    #[test]
    fn checkpoint_format() {
        let p = LocalizedPolicyTable::from_logits(vec![(1, 2, vec![0.1, -2.5e-300])]).unwrap();
        let json = p.to_json().unwrap();
        assert!(json.contains("\"format\": \"netsac-policy-v1\""));
        assert!(json.contains("1.0000000000000001e-1"));
        assert_eq!(LocalizedPolicyTable::from_json(&json).unwrap(), p);
        let bad = json.replace("\"0\"", "\"1\"");
        assert!(LocalizedPolicyTable::from_json(&bad).is_err());
    }

    #[test]
    fn explicit_table_validates_rows() {
        assert!(PolicyTable::new(vec![(1, 2, vec![0.5, 0.6])]).is_err());
        let t = PolicyTable::new(vec![(2, 2, vec![1.0, 0.0, 0.3, 0.7])]).unwrap();
        assert_eq!(t.action_probs(0, 1), vec![0.3, 0.7]);
        assert_abs_diff_eq!(t.joint_prob(&[1], &[1]), 0.7);
    }

    fn arb_row() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-8.0f64..8.0, 2..6)
    }

    proptest! {
        #[test]
        fn probabilities_normalised_and_positive(row in arb_row(), shift in -50.0f64..50.0) {
            let p = single(row.clone());
            let probs = p.action_probs(0, 0);
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(probs.iter().all(|&x| x > 0.0));
            let shifted = single(row.iter().map(|x| x + shift).collect());
            for (a, b) in probs.iter().zip(shifted.action_probs(0, 0)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn score_bounded_and_mean_zero(row in arb_row()) {
            let p = single(row.clone());
            let probs = p.action_probs(0, 0);
            let mut mean = vec![0.0; row.len()];
            for a in 0..row.len() {
                let g = p.log_policy_grad(0, 0, a);
                let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!(norm <= 2f64.sqrt() + 1e-12);
                for (m, gi) in mean.iter_mut().zip(&g) {
                    *m += probs[a] * gi;
                }
            }
            prop_assert!(mean.iter().all(|m| m.abs() < 1e-10));
        }

        #[test]
        fn score_matches_central_differences(row in arb_row(), a in 0usize..6) {
            let a = a % row.len();
            let p = single(row.clone());
            let g = p.log_policy_grad(0, 0, a);
            let eps = 1e-5;
            for k in 0..row.len() {
                let mut plus = row.clone();
                plus[k] += eps;
                let mut minus = row.clone();
                minus[k] -= eps;
                let fd = (single(plus).log_prob(0, 0, a) - single(minus).log_prob(0, 0, a)) / (2.0 * eps);
                prop_assert!((fd - g[k]).abs() < 1e-6, "k={} fd={} g={}", k, fd, g[k]);
            }
        }

        #[test]
        fn checkpoint_round_trip_is_bit_exact(values in proptest::collection::vec(-1e6f64..1e6, 6)) {
            let p = LocalizedPolicyTable::from_logits(vec![(2, 3, values)]).unwrap();
            let back = LocalizedPolicyTable::from_json(&p.to_json().unwrap()).unwrap();
            for (x, y) in p.logits(0).iter().zip(back.logits(0)) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
