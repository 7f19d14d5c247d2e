//! Traffic-signal network of road links.
//!
//! Link `i` keeps one queue per outgoing turn `i → j` with `x_{i,j} ∈ [0, S]`
//! and one binary signal `y_{i,j}` per turn. Each step a green turn releases
//! `min(C_{i,j} y_{i,j}, x_{i,j})` vehicles, `C` drawn from the turn's
//! capacity distribution, and the link receives the released vehicles of its
//! upstream turns `k → i`. The integer inflow is routed multinomially over the
//! link's queues using its split probabilities `R_{i,·}`, then each queue is
//! clamped to `[0, S]`. The congestion reward `−Σ_j x_{i,j}` is mapped
//! affinely to `(S·deg − Σ_j x_{i,j}) / (S·deg) ∈ [0, 1]`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::MixedRadixCodec;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mdp::{LocalContext, LocalDynamics, LocalSpace, NetworkedMdp};
use crate::rng::{sample_index, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficParams {
    pub links: usize,
    /// Directed turns `(from, to)`.
    pub turns: Vec<(usize, usize)>,
    /// Queue cap `S`.
    pub queue_cap: usize,
    /// Distribution of `C` over `{0, 1, ...}` for each turn, aligned with `turns`.
    pub capacity: Vec<Vec<f64>>,
    /// Split probabilities over each link's outgoing turns, sorted by target.
    pub routing: Vec<Vec<f64>>,
}

impl TrafficParams {
    /// Ring `0 → 1 → ... → n−1 → 0` with a shared capacity distribution.
    pub fn ring(links: usize, queue_cap: usize, capacity: Vec<f64>) -> Self {
        let turns: Vec<_> = (0..links).map(|i| (i, (i + 1) % links)).collect();
        TrafficParams {
            links,
            capacity: vec![capacity; turns.len()],
            routing: vec![vec![1.0]; links],
            turns,
            queue_cap,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrafficEnv {
    params: TrafficParams,
    /// Outgoing targets per link, sorted.
    outgoing: Vec<Vec<usize>>,
    /// Turn index for each outgoing queue.
    out_turn: Vec<Vec<usize>>,
    /// `(upstream link, queue position at upstream, turn index)` per link.
    incoming: Vec<Vec<(usize, usize, usize)>>,
    state_codecs: Vec<MixedRadixCodec>,
}

impl TrafficEnv {
    pub fn new(params: TrafficParams) -> Result<Self> {
        let n = params.links;
        if n == 0 {
            return Err(Error::InvalidParameter("traffic network needs a link".into()));
        }
        if params.queue_cap == 0 {
            return Err(Error::InvalidParameter("queue cap must be positive".into()));
        }
        if params.capacity.len() != params.turns.len() || params.routing.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} turns with {} capacity distributions; {n} links with {} routing vectors",
                params.turns.len(),
                params.capacity.len(),
                params.routing.len()
            )));
        }
        let mut outgoing = vec![Vec::new(); n];
        for (t, &(i, j)) in params.turns.iter().enumerate() {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidParameter(format!("invalid turn {i} -> {j}")));
            }
            if outgoing[i].iter().any(|&(jj, _)| jj == j) {
                return Err(Error::InvalidParameter(format!("duplicate turn {i} -> {j}")));
            }
            outgoing[i].push((j, t));
            crate::mdp::check_distribution(i, &params.capacity[t])?;
        }
        for list in &mut outgoing {
            list.sort_unstable();
        }
        for (i, r) in params.routing.iter().enumerate() {
            if r.len() != outgoing[i].len() {
                return Err(Error::ShapeMismatch(format!(
                    "link {i} has {} turns but {} split probabilities",
                    outgoing[i].len(),
                    r.len()
                )));
            }
            if !r.is_empty() {
                crate::mdp::check_distribution(i, r)?;
            }
        }
        let mut incoming = vec![Vec::new(); n];
        for (k, list) in outgoing.iter().enumerate() {
            for (pos, &(i, t)) in list.iter().enumerate() {
                incoming[i].push((k, pos, t));
            }
        }
        let state_codecs = outgoing
            .iter()
            .map(|list| MixedRadixCodec::new(vec![params.queue_cap + 1; list.len()]))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrafficEnv {
            out_turn: outgoing.iter().map(|l| l.iter().map(|&(_, t)| t).collect()).collect(),
            outgoing: outgoing.iter().map(|l| l.iter().map(|&(j, _)| j).collect()).collect(),
            incoming,
            state_codecs,
            params,
        })
    }

    pub fn params(&self) -> &TrafficParams {
        &self.params
    }

    pub fn local_space(&self, link: usize) -> LocalSpace {
        let deg = self.outgoing[link].len();
        LocalSpace {
            states: self.state_codecs[link].size() as usize,
            actions: 1 << deg,
        }
    }

    /// Queue lengths encoded in a local state index.
    pub fn queues(&self, link: usize, state: usize) -> Vec<usize> {
        self.state_codecs[link]
            .decode(state as u128)
            .expect("state index within local space")
    }

    pub fn encode_queues(&self, link: usize, queues: &[usize]) -> Result<usize> {
        Ok(self.state_codecs[link].encode(queues)? as usize)
    }

    fn signal(action: usize, pos: usize) -> bool {
        (action >> pos) & 1 == 1
    }

    /// Distribution of vehicles released on turn `k → i` into link `i`.
    fn release_dist(&self, queue: usize, green: bool, turn: usize) -> Vec<f64> {
        let mut out = vec![0.0; queue + 1];
        for (c, &p) in self.params.capacity[turn].iter().enumerate() {
            let released = if green { c.min(queue) } else { 0 };
            out[released] += p;
        }
        out
    }

    fn inflow_dist(&self, ctx: &LocalContext<'_>) -> Vec<f64> {
        let mut total = vec![1.0];
        for &(k, pos, turn) in &self.incoming[ctx.agent] {
            let sk = ctx.state_of(k).expect("upstream link is a neighbour");
            let ak = ctx.action_of(k).expect("upstream link is a neighbour");
            let xk = self.queues(k, sk)[pos];
            let part = self.release_dist(xk, Self::signal(ak, pos), turn);
            let mut next = vec![0.0; total.len() + part.len() - 1];
            for (u, &pu) in total.iter().enumerate() {
                for (v, &pv) in part.iter().enumerate() {
                    next[u + v] += pu * pv;
                }
            }
            total = next;
        }
        total
    }

    fn reward_of(&self, link: usize, state: usize) -> f64 {
        let deg = self.outgoing[link].len();
        if deg == 0 {
            return 1.0;
        }
        let cap = (self.params.queue_cap * deg) as f64;
        let load: usize = self.queues(link, state).iter().sum();
        (cap - load as f64) / cap
    }

    pub fn into_mdp(&self, gamma: f64) -> Result<NetworkedMdp> {
        let n = self.params.links;
        let edges: Vec<_> = self.params.turns.clone();
        let graph = Graph::new(n, &edges)?;
        let spaces: Vec<_> = (0..n).map(|i| self.local_space(i)).collect();
        let initial = spaces
            .iter()
            .map(|sp| vec![1.0 / sp.states as f64; sp.states])
            .collect();
        NetworkedMdp::new(
            format!("traffic{n}"),
            graph,
            spaces,
            gamma,
            1.0,
            initial,
            Arc::new(self.clone()),
        )
    }
}

/// Probability of each way to split `total` items over categories with probabilities `probs`.
fn for_each_split(total: usize, probs: &[f64], f: &mut impl FnMut(&[usize], f64)) {
    fn rec(
        left: usize,
        k: usize,
        probs: &[f64],
        counts: &mut Vec<usize>,
        weight: f64,
        f: &mut impl FnMut(&[usize], f64),
    ) {
        if k + 1 == probs.len() {
            counts.push(left);
            f(counts, weight);
            counts.pop();
            return;
        }
        // binomial split between category k and the categories after it
        let mass: f64 = probs[k..].iter().sum();
        let pk = if mass > 0.0 { (probs[k] / mass).min(1.0) } else { 0.0 };
        for c in 0..=left {
            let w = binomial(left, c) * pk.powi(c as i32) * (1.0 - pk).powi((left - c) as i32);
            if w == 0.0 {
                continue;
            }
            counts.push(c);
            rec(left - c, k + 1, probs, counts, weight * w, f);
            counts.pop();
        }
    }
    if probs.is_empty() {
        return;
    }
    rec(total, 0, probs, &mut Vec::with_capacity(probs.len()), 1.0, f);
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl LocalDynamics for TrafficEnv {
    fn transition_probs(&self, ctx: &LocalContext<'_>, out: &mut [f64]) {
        let i = ctx.agent;
        out.fill(0.0);
        let deg = self.outgoing[i].len();
        if deg == 0 {
            out[0] = 1.0;
            return;
        }
        let cap = self.params.queue_cap;
        let queues = self.queues(i, ctx.own_state());
        let action = ctx.own_action();
        let remaining: Vec<Vec<f64>> = (0..deg)
            .map(|pos| {
                let released = self.release_dist(queues[pos], Self::signal(action, pos), self.out_turn[i][pos]);
                let mut left = vec![0.0; queues[pos] + 1];
                for (r, p) in released.into_iter().enumerate() {
                    left[queues[pos] - r] += p;
                }
                left
            })
            .collect();
        let inflow = self.inflow_dist(ctx);
        let codec = &self.state_codecs[i];
        let mut per_queue = vec![vec![0.0; cap + 1]; deg];
        for (total, &p_total) in inflow.iter().enumerate() {
            if p_total == 0.0 {
                continue;
            }
            for_each_split(total, &self.params.routing[i], &mut |split, p_split| {
                let w = p_total * p_split;
                if w == 0.0 {
                    return;
                }
                for (pos, dist) in per_queue.iter_mut().enumerate() {
                    dist.fill(0.0);
                    for (x, &p) in remaining[pos].iter().enumerate() {
                        dist[(x + split[pos]).min(cap)] += p;
                    }
                }
                // product over queues
                let mut values = vec![0usize; deg];
                for idx in 0..codec.size() {
                    codec.decode_into(idx, &mut values).expect("index in range");
                    let p: f64 = values.iter().zip(&per_queue).map(|(&v, d)| d[v]).product();
                    if p != 0.0 {
                        out[idx as usize] += w * p;
                    }
                }
            });
        }
    }

    fn reward(&self, ctx: &LocalContext<'_>) -> f64 {
        self.reward_of(ctx.agent, ctx.own_state())
    }

    fn sample_transition(&self, ctx: &LocalContext<'_>, rng: &mut Stream) -> Result<usize> {
        let i = ctx.agent;
        let deg = self.outgoing[i].len();
        if deg == 0 {
            return Ok(0);
        }
        let cap = self.params.queue_cap;
        let mut queues = self.queues(i, ctx.own_state());
        let action = ctx.own_action();
        for (pos, x) in queues.iter_mut().enumerate() {
            if Self::signal(action, pos) {
                let c = sample_index(&self.params.capacity[self.out_turn[i][pos]], rng.gen::<f64>());
                *x -= c.min(*x);
            }
        }
        let mut inflow = 0;
        for &(k, pos, turn) in &self.incoming[i] {
            let sk = ctx.state_of(k).expect("upstream link is a neighbour");
            let ak = ctx.action_of(k).expect("upstream link is a neighbour");
            if Self::signal(ak, pos) {
                let xk = self.queues(k, sk)[pos];
                let c = sample_index(&self.params.capacity[turn], rng.gen::<f64>());
                inflow += c.min(xk);
            }
        }
        for _ in 0..inflow {
            let q = sample_index(&self.params.routing[i], rng.gen::<f64>());
            queues[q] += 1;
        }
        for x in &mut queues {
            *x = (*x).min(cap);
        }
        Ok(self.state_codecs[i].encode_unchecked(&queues) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Scratch;
    use crate::rng::{Purpose, SeedKey};

    fn next_dist(mdp: &NetworkedMdp, i: usize, s: &[usize], a: &[usize]) -> Vec<f64> {
        let mut scratch = Scratch::default();
        let ctx = mdp.context(i, s, a, &mut scratch);
        let mut out = vec![0.0; mdp.space(i).states];
        mdp.dynamics().transition_probs(&ctx, &mut out);
        out
    }

    fn point(len: usize, at: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        v[at] = 1.0;
        v
    }

    #[test]
    fn signals_off_keep_queues() {
        let env = TrafficEnv::new(TrafficParams::ring(3, 4, vec![0.0, 0.5, 0.5])).unwrap();
        let mdp = env.into_mdp(0.9).unwrap();
        for x in 0..=4 {
            assert_eq!(next_dist(&mdp, 1, &[3, x, 2], &[0, 0, 0]), point(5, x));
        }
    }

    #[test]
    fn upper_clamp() {
        let env = TrafficEnv::new(TrafficParams::ring(3, 4, vec![0.0, 0.0, 1.0])).unwrap();
        let mdp = env.into_mdp(0.9).unwrap();
        // link 0 releases 2 into link 1, which is full and red
        assert_eq!(next_dist(&mdp, 1, &[3, 4, 0], &[1, 0, 0]), point(5, 4));
    }

    #[test]
    fn single_link_release() {
        let params = TrafficParams {
            links: 2,
            turns: vec![(0, 1)],
            queue_cap: 5,
            capacity: vec![vec![0.0, 0.0, 1.0]],
            routing: vec![vec![1.0], vec![]],
        };
        let env = TrafficEnv::new(params).unwrap();
        let mdp = env.into_mdp(0.9).unwrap();
        assert_eq!(next_dist(&mdp, 0, &[3, 0], &[1, 0]), point(6, 1));
        assert_eq!(mdp.space(1), LocalSpace { states: 1, actions: 1 });
        assert_eq!(next_dist(&mdp, 1, &[3, 0], &[1, 0]), vec![1.0]);
    }

    #[test]
    fn reward_scaling() {
        let env = TrafficEnv::new(TrafficParams::ring(2, 3, vec![0.5, 0.5])).unwrap();
        let mdp = env.into_mdp(0.9).unwrap();
        let r = mdp.rewards(&[0, 3], &[0, 0]);
        assert_eq!(r, vec![1.0, 0.0]);
        let r = mdp.rewards(&[1, 2], &[0, 0]);
        assert!((r[0] - 2.0 / 3.0).abs() < 1e-15 && (r[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    fn branching() -> TrafficEnv {
        // link 0 feeds 1 and 2; link 1 feeds 2; link 2 feeds 0
        TrafficEnv::new(TrafficParams {
            links: 3,
            turns: vec![(0, 1), (0, 2), (1, 2), (2, 0)],
            queue_cap: 2,
            capacity: vec![vec![0.2, 0.5, 0.3]; 4],
            routing: vec![vec![0.4, 0.6], vec![1.0], vec![1.0]],
        })
        .unwrap()
    }

    #[test]
    fn kernels_normalised() {
        let mdp = branching().into_mdp(0.8).unwrap();
        assert!(mdp.validate_kernels(1 << 20).unwrap() > 0);
    }

    #[test]
    fn sampler_matches_exact_kernel() {
        let env = branching();
        let mdp = env.into_mdp(0.8).unwrap();
        let s = [env.encode_queues(0, &[1, 2]).unwrap(), 2, 1];
        let a = [3, 1, 1];
        let exact = next_dist(&mdp, 0, &s, &a);
        let mut rng = SeedKey::new(12).stream(Purpose::Transition, 0);
        let mut scratch = Scratch::default();
        let ctx = mdp.context(0, &s, &a, &mut scratch);
        let draws = 100_000;
        let mut counts = vec![0usize; exact.len()];
        for _ in 0..draws {
            counts[mdp.dynamics().sample_transition(&ctx, &mut rng).unwrap()] += 1;
        }
        for (k, &p) in exact.iter().enumerate() {
            let freq = counts[k] as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * se + 1e-12, "state {k}: {freq} vs {p}");
        }
    }

    #[test]
    fn multinomial_split_probabilities() {
        let mut seen = Vec::new();
        for_each_split(2, &[0.25, 0.75], &mut |split, p| seen.push((split.to_vec(), p)));
        let expect = [(vec![0, 2], 0.5625), (vec![1, 1], 0.375), (vec![2, 0], 0.0625)];
        for (split, p) in expect {
            let got = seen.iter().find(|(s, _)| *s == split).unwrap().1;
            assert!((got - p).abs() < 1e-15);
        }
        let mut total = 0.0;
        for_each_split(3, &[0.2, 0.3, 0.5], &mut |_, p| total += p);
        assert!((total - 1.0).abs() < 1e-14);
    }
}
