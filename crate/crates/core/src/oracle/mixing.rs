//! Exact mixing probe for the local `(s_i, a_i)` marginals.

use nalgebra::DVector;

use super::chain::GlobalChain;

/// Iteration cap when locating the long-run distribution.
const LONG_RUN_CAP: usize = 100_000;

/// Total-variation distance between the law of `(s_i(t), a_i(t))` and its
/// long-run limit, for `t = 0..=t_max`.
///
/// The limit is approximated by iterating the chain from `π_0 ⊗ ζ` until
/// successive distributions differ by less than 1e−13 in sup-norm. On
/// periodic chains the iterate need not settle; the last one is used.
pub fn mixing_profile(chain: &GlobalChain, agent: usize, t_max: usize) -> Vec<f64> {
    let ns = chain.state_count();
    let mut mu = DVector::from_fn(chain.len(), |z, _| {
        let (s, a) = (z % ns, z / ns);
        chain.initial()[s] * chain.policy()[(s, a)]
    });
    let pt = chain.matrix().transpose();
    let mut history = vec![marginal(chain, agent, &mu)];
    let mut limit = mu.clone();
    for t in 1..=LONG_RUN_CAP.max(t_max) {
        let next = &pt * &limit;
        let settled = (&next - &limit).amax() < 1e-13;
        limit = next;
        if t <= t_max {
            mu = limit.clone();
            history.push(marginal(chain, agent, &mu));
        } else if settled {
            break;
        }
    }
    let target = marginal(chain, agent, &limit);
    history
        .iter()
        .map(|m| 0.5 * m.iter().zip(&target).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .collect()
}

fn marginal(chain: &GlobalChain, agent: usize, mu: &DVector<f64>) -> Vec<f64> {
    let mut sizes = (1usize, 1usize);
    for z in 0..chain.len() {
        let (s, a) = chain.config(z);
        sizes = (sizes.0.max(s[agent] + 1), sizes.1.max(a[agent] + 1));
    }
    let mut out = vec![0.0; sizes.0 * sizes.1];
    for z in 0..chain.len() {
        let (s, a) = chain.config(z);
        out[s[agent] + sizes.0 * a[agent]] += mu[z];
    }
    out
}
