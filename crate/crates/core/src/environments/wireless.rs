//! Multi-access wireless grid.
//!
//! Users live in the blocks of a grid whose corners are access points; a user
//! can reach the four corners of its block. Two users interact iff they share
//! an access point. A user's state is a `d`-bit queue where bit `ℓ − 1` marks
//! a packet with `ℓ` steps left; actions are `0 = null` or `k + 1 = send the
//! earliest packet to the k-th reachable access point`.
//!
//! Each step the queue shifts towards its deadline, dropping the packet
//! that expires, and a new packet arrives with probability `p_i`. A send
//! that no non-empty neighbour contests at the same access point first
//! removes the earliest packet with probability `q_k`. The reward function
//! returns the expected number of delivered packets, `q_k` for an
//! uncontested send and 0 otherwise.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mdp::{LocalContext, LocalDynamics, LocalSpace, NetworkedMdp};
use crate::policy::PolicyTable;
use crate::rng::Stream;

pub const NULL_ACTION: usize = 0;

/// Full parameter set of a wireless grid instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WirelessParams {
    pub rows: usize,
    pub cols: usize,
    /// `(row, col)` block of each user.
    pub user_blocks: Vec<(usize, usize)>,
    /// `d_i` per user.
    pub deadlines: Vec<usize>,
    /// `p_i` per user.
    pub arrival: Vec<f64>,
    /// `q_k` per access point, row-major over the `(rows+1) × (cols+1)` corners.
    pub success: Vec<f64>,
}

impl WirelessParams {
    /// One user per block, row-major, with explicit probabilities.
    pub fn grid(rows: usize, cols: usize, deadline: usize, arrival: Vec<f64>, success: Vec<f64>) -> Self {
        let user_blocks = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .collect::<Vec<_>>();
        WirelessParams {
            rows,
            cols,
            deadlines: vec![deadline; user_blocks.len()],
            user_blocks,
            arrival,
            success,
        }
    }

    /// Draws `p_i` and `q_k` uniformly from `[0, 1]`. With `random_layout`
    /// each of the `rows · cols` users picks a block uniformly at random
    /// instead of occupying its own block.
    pub fn random(rows: usize, cols: usize, deadline: usize, random_layout: bool, rng: &mut Stream) -> Self {
        let users = rows * cols;
        let aps = (rows + 1) * (cols + 1);
        let arrival = (0..users).map(|_| rng.gen::<f64>()).collect();
        let success = (0..aps).map(|_| rng.gen::<f64>()).collect();
        let mut params = Self::grid(rows, cols, deadline, arrival, success);
        if random_layout {
            params.user_blocks = (0..users)
                .map(|_| (rng.gen_range(0..rows), rng.gen_range(0..cols)))
                .collect();
        }
        params
    }
}

#[derive(Clone, Debug)]
pub struct WirelessGridEnv {
    params: WirelessParams,
    /// Reachable access points `Y_i`, sorted.
    access: Vec<Vec<usize>>,
    /// Number of users that can reach each access point.
    sharers: Vec<usize>,
}

impl WirelessGridEnv {
    pub fn new(params: WirelessParams) -> Result<Self> {
        let WirelessParams {
            rows,
            cols,
            ref user_blocks,
            ref deadlines,
            ref arrival,
            ref success,
        } = params;
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("grid must have at least one block".into()));
        }
        let n = user_blocks.len();
        if n == 0 || deadlines.len() != n || arrival.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} users, {} deadlines, {} arrival probabilities",
                deadlines.len(),
                arrival.len()
            )));
        }
        let aps = (rows + 1) * (cols + 1);
        if success.len() != aps {
            return Err(Error::ShapeMismatch(format!(
                "{aps} access points but {} success probabilities",
                success.len()
            )));
        }
        let unit = |x: &f64| (0.0..=1.0).contains(x);
        if !arrival.iter().all(unit) || !success.iter().all(unit) {
            return Err(Error::InvalidParameter("p_i and q_k must lie in [0, 1]".into()));
        }
        if deadlines.iter().any(|&d| d == 0 || d > 16) {
            return Err(Error::InvalidParameter("deadlines must lie in 1..=16".into()));
        }
        let mut access = Vec::with_capacity(n);
        for &(r, c) in user_blocks {
            if r >= rows || c >= cols {
                return Err(Error::InvalidParameter(format!(
                    "block ({r}, {c}) outside a {rows}x{cols} grid"
                )));
            }
            let corner = |rr: usize, cc: usize| rr * (cols + 1) + cc;
            access.push(vec![
                corner(r, c),
                corner(r, c + 1),
                corner(r + 1, c),
                corner(r + 1, c + 1),
            ]);
        }
        let mut sharers = vec![0; aps];
        for ys in &access {
            for &y in ys {
                sharers[y] += 1;
            }
        }
        Ok(WirelessGridEnv {
            params,
            access,
            sharers,
        })
    }

    pub fn params(&self) -> &WirelessParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.access.len()
    }

    pub fn access_points(&self, user: usize) -> &[usize] {
        &self.access[user]
    }

    pub fn sharers(&self, ap: usize) -> usize {
        self.sharers[ap]
    }

    /// Users `i ≠ j` are adjacent iff `Y_i ∩ Y_j ≠ ∅`.
    pub fn conflict_graph(&self) -> Result<Graph> {
        let n = self.n();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.access[i].iter().any(|y| self.access[j].contains(y)) {
                    edges.push((i, j));
                }
            }
        }
        Graph::new(n, &edges)
    }

    pub fn local_space(&self, user: usize) -> LocalSpace {
        LocalSpace {
            states: 1 << self.params.deadlines[user],
            actions: self.access[user].len() + 1,
        }
    }

    /// Access point targeted by `action`, if any.
    pub fn target(&self, user: usize, action: usize) -> Option<usize> {
        action.checked_sub(1).map(|k| self.access[user][k])
    }

    /// Success probability of the agent's transmission this step: `q_k` when
    /// it sends a non-empty queue to `y_k` and no non-empty neighbour sends
    /// to `y_k`, otherwise 0.
    pub fn delivery_prob(&self, ctx: &LocalContext<'_>) -> f64 {
        let i = ctx.agent;
        if ctx.own_state() == 0 {
            return 0.0;
        }
        let Some(ap) = self.target(i, ctx.own_action()) else {
            return 0.0;
        };
        let contested = ctx
            .others()
            .any(|(j, sj, aj)| sj != 0 && self.target(j, aj) == Some(ap));
        if contested {
            0.0
        } else {
            self.params.success[ap]
        }
    }

    /// Removes the packet closest to its deadline.
    fn flip_earliest(queue: usize) -> usize {
        queue & queue.wrapping_sub(1)
    }

    pub fn into_mdp(&self, gamma: f64) -> Result<NetworkedMdp> {
        let n = self.n();
        let spaces: Vec<_> = (0..n).map(|i| self.local_space(i)).collect();
        let initial = spaces
            .iter()
            .map(|sp| vec![1.0 / sp.states as f64; sp.states])
            .collect();
        NetworkedMdp::new(
            format!("wireless{}x{}", self.params.rows, self.params.cols),
            self.conflict_graph()?,
            spaces,
            gamma,
            1.0,
            initial,
            Arc::new(self.clone()),
        )
    }
}

impl LocalDynamics for WirelessGridEnv {
    fn transition_probs(&self, ctx: &LocalContext<'_>, out: &mut [f64]) {
        let i = ctx.agent;
        let d = self.params.deadlines[i];
        let p = self.params.arrival[i];
        let q = self.delivery_prob(ctx);
        let s = ctx.own_state();
        let top = 1 << (d - 1);
        out.fill(0.0);
        for (queue, w) in [(s, 1.0 - q), (Self::flip_earliest(s), q)] {
            if w == 0.0 {
                continue;
            }
            let shifted = queue >> 1;
            out[shifted] += w * (1.0 - p);
            out[shifted | top] += w * p;
        }
    }

    fn reward(&self, ctx: &LocalContext<'_>) -> f64 {
        self.delivery_prob(ctx)
    }

    fn sample_transition(&self, ctx: &LocalContext<'_>, rng: &mut Stream) -> Result<usize> {
        let i = ctx.agent;
        let d = self.params.deadlines[i];
        let mut queue = ctx.own_state();
        if rng.gen::<f64>() < self.delivery_prob(ctx) {
            queue = Self::flip_earliest(queue);
        }
        let arrival = usize::from(rng.gen::<f64>() < self.params.arrival[i]);
        Ok((queue >> 1) | (arrival << (d - 1)))
    }
}

/// Localized ALOHA baseline: with a non-empty queue, user `i` sends with
/// probability `send_prob[i]`, choosing access point `y_k ∈ Y_i` with
/// probability proportional to `q_k / sharers(y_k)`; otherwise it stays silent.
pub fn aloha_policy(env: &WirelessGridEnv, send_prob: &[f64]) -> Result<PolicyTable> {
    let n = env.n();
    if send_prob.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} send probabilities for {n} users",
            send_prob.len()
        )));
    }
    if !send_prob.iter().all(|p| (0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter("send probabilities must lie in [0, 1]".into()));
    }
    let mut agents = Vec::with_capacity(n);
    for (i, &sp) in send_prob.iter().enumerate() {
        let space = env.local_space(i);
        let aps = env.access_points(i);
        let mut weights: Vec<f64> = aps
            .iter()
            .map(|&y| env.params.success[y] / env.sharers(y) as f64)
            .collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        } else {
            weights.fill(1.0 / aps.len() as f64);
        }
        let mut probs = Vec::with_capacity(space.states * space.actions);
        for s in 0..space.states {
            if s == 0 {
                probs.push(1.0);
                probs.extend(std::iter::repeat(0.0).take(aps.len()));
            } else {
                probs.push(1.0 - sp);
                probs.extend(weights.iter().map(|w| sp * w));
            }
        }
        agents.push((space.states, space.actions, probs));
    }
    PolicyTable::new(agents)
}
