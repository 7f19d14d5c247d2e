//! The global chain over `z = (s, a)` and the state-marginal chain.

use nalgebra::{DMatrix, DVector};

use crate::codec::MixedRadixCodec;
use crate::error::{Error, Result};
use crate::mdp::{ActionScope, NetworkedMdp, Scratch};
use crate::parallel::Execution;
use crate::policy::LocalizedPolicy;

/// Largest admissible `|Z|²` for a materialised chain.
pub const CHAIN_ENTRY_LIMIT: u128 = 10_000_000;

/// Largest admissible `|S|² · |A|` when a state chain has to enumerate joint actions.
const STATE_CHAIN_WORK_LIMIT: u128 = 2_000_000_000;

/// Row-sum tolerance of assembled chains.
const ROW_TOLERANCE: f64 = 1e-10;

/// Bellman residual accepted from the direct solve.
const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Target accuracy of the value-iteration fallback.
const VI_TOLERANCE: f64 = 1e-10;

/// Transition matrix over `Z = S × A` under a fixed policy.
///
/// `z = s + |S| · a` with `s` and `a` flattened least-significant agent first.
#[derive(Clone, Debug)]
pub struct GlobalChain {
    n: usize,
    gamma: f64,
    reward_bound: f64,
    states: MixedRadixCodec,
    actions: MixedRadixCodec,
    /// Decoded `(s, a)` of every `z`, `2n` entries each.
    configs: Vec<usize>,
    p: DMatrix<f64>,
    rewards: Vec<DVector<f64>>,
    /// `ζ(a | s)` as an `|S| × |A|` matrix.
    policy: DMatrix<f64>,
    initial: DVector<f64>,
}

fn codecs(mdp: &NetworkedMdp) -> Result<(MixedRadixCodec, MixedRadixCodec)> {
    Ok((
        MixedRadixCodec::new(mdp.spaces().iter().map(|s| s.states).collect())?,
        MixedRadixCodec::new(mdp.spaces().iter().map(|s| s.actions).collect())?,
    ))
}

fn joint_policy<P: LocalizedPolicy + ?Sized>(
    policy: &P,
    states: &MixedRadixCodec,
    actions: &MixedRadixCodec,
) -> DMatrix<f64> {
    let (ns, na) = (states.size() as usize, actions.size() as usize);
    let mut s = vec![0; states.len()];
    let mut a = vec![0; actions.len()];
    DMatrix::from_fn(ns, na, |si, ai| {
        states.decode_into(si as u128, &mut s).expect("in range");
        actions.decode_into(ai as u128, &mut a).expect("in range");
        policy.joint_prob(&s, &a)
    })
}

fn initial_distribution(mdp: &NetworkedMdp, states: &MixedRadixCodec) -> DVector<f64> {
    let mut s = vec![0; states.len()];
    DVector::from_fn(states.size() as usize, |si, _| {
        states.decode_into(si as u128, &mut s).expect("in range");
        s.iter().enumerate().map(|(i, &v)| mdp.initial(i)[v]).product()
    })
}

/// Product of per-agent next-state distributions, flattened like `s`.
fn product_distribution(factors: &[Vec<f64>], out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    for f in factors {
        let len = out.len();
        let mut next = vec![0.0; len * f.len()];
        for (v, &pv) in f.iter().enumerate() {
            if pv == 0.0 {
                continue;
            }
            for (k, &pk) in out.iter().enumerate() {
                next[v * len + k] = pk * pv;
            }
        }
        *out = next;
    }
}

fn check_policy_shape<P: LocalizedPolicy + ?Sized>(mdp: &NetworkedMdp, policy: &P) -> Result<()> {
    if policy.n_agents() != mdp.n() {
        return Err(Error::ShapeMismatch(format!(
            "policy covers {} agents, MDP has {}",
            policy.n_agents(),
            mdp.n()
        )));
    }
    for (i, sp) in mdp.spaces().iter().enumerate() {
        if policy.state_count(i) != sp.states || policy.action_count(i) != sp.actions {
            return Err(Error::ShapeMismatch(format!("policy shape of agent {i} differs from its local space")));
        }
    }
    Ok(())
}

/// Builds `P[(s,a) → (s',a')] = ∏_i P_i(s_i' | s_{N_i}, a_{N_i}) · ∏_i ζ_i(a_i' | s_i')`.
pub fn build_chain<P: LocalizedPolicy + ?Sized>(mdp: &NetworkedMdp, policy: &P) -> Result<GlobalChain> {
    check_policy_shape(mdp, policy)?;
    let n = mdp.n();
    let (states, actions) = codecs(mdp)?;
    let z_size = states
        .size()
        .checked_mul(actions.size())
        .ok_or(Error::IndexOverflow)?;
    let entries = z_size.checked_mul(z_size).ok_or(Error::IndexOverflow)?;
    if entries > CHAIN_ENTRY_LIMIT {
        return Err(Error::SizeGuard {
            what: "global chain entries",
            required: entries,
            limit: CHAIN_ENTRY_LIMIT,
        });
    }
    let (ns, nz) = (states.size() as usize, z_size as usize);
    let pi = joint_policy(policy, &states, &actions);
    let mut configs = vec![0; nz * 2 * n];
    for z in 0..nz {
        let row = &mut configs[z * 2 * n..(z + 1) * 2 * n];
        states.decode_into((z % ns) as u128, &mut row[..n])?;
        actions.decode_into((z / ns) as u128, &mut row[n..])?;
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = Execution::default().map_range(nz, |z| {
        let cfg = &configs[z * 2 * n..(z + 1) * 2 * n];
        let (s, a) = cfg.split_at(n);
        let mut scratch = Scratch::default();
        let mut factors = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for i in 0..n {
            let ctx = mdp.context(i, s, a, &mut scratch);
            let mut probs = vec![0.0; mdp.space(i).states];
            mdp.dynamics().transition_probs(&ctx, &mut probs);
            factors.push(probs);
            rewards.push(mdp.dynamics().reward(&ctx));
        }
        let mut next_s = Vec::new();
        product_distribution(&factors, &mut next_s);
        let mut row = vec![0.0; nz];
        for (sp, &ps) in next_s.iter().enumerate() {
            if ps == 0.0 {
                continue;
            }
            for ap in 0..pi.ncols() {
                row[sp + ns * ap] = ps * pi[(sp, ap)];
            }
        }
        (row, rewards)
    });
    let mut p = DMatrix::zeros(nz, nz);
    let mut rewards = vec![DVector::zeros(nz); n];
    for (z, (row, r)) in rows.into_iter().enumerate() {
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::Numerical(format!("chain row {z} sums to {total}")));
        }
        for (zp, v) in row.into_iter().enumerate() {
            p[(z, zp)] = v;
        }
        for (i, ri) in r.into_iter().enumerate() {
            rewards[i][z] = ri;
        }
    }
    Ok(GlobalChain {
        n,
        gamma: mdp.gamma(),
        reward_bound: mdp.reward_bound(),
        initial: initial_distribution(mdp, &states),
        states,
        actions,
        configs,
        p,
        rewards,
        policy: pi,
    })
}

impl GlobalChain {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.nrows() == 0
    }

    pub fn state_count(&self) -> usize {
        self.states.size() as usize
    }

    pub fn action_count(&self) -> usize {
        self.actions.size() as usize
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn reward(&self, i: usize) -> &DVector<f64> {
        &self.rewards[i]
    }

    /// `r = (1/n) Σ_i r_i` over `Z`.
    pub fn global_reward(&self) -> DVector<f64> {
        self.rewards.iter().fold(DVector::zeros(self.len()), |acc, r| acc + r) / self.n as f64
    }

    pub fn policy(&self) -> &DMatrix<f64> {
        &self.policy
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.initial
    }

    /// `(s, a)` of a flat index.
    pub fn config(&self, z: usize) -> (&[usize], &[usize]) {
        self.configs[z * 2 * self.n..(z + 1) * 2 * self.n].split_at(self.n)
    }

    /// Flat index of `(s, a)`.
    pub fn index(&self, s: &[usize], a: &[usize]) -> Result<usize> {
        Ok((self.states.encode(s)? + self.states.size() * self.actions.encode(a)?) as usize)
    }

    /// `z = (s, a)` split into its state and action parts.
    pub fn split(&self, z: usize) -> (usize, usize) {
        (z % self.state_count(), z / self.state_count())
    }

    /// `P_S(s, s') = Σ_a ζ(a|s) Σ_{a'} P((s,a), (s',a'))`.
    pub fn state_marginal(&self) -> DMatrix<f64> {
        let (ns, na) = (self.state_count(), self.action_count());
        let mut ps = DMatrix::zeros(ns, ns);
        for s in 0..ns {
            for a in 0..na {
                let w = self.policy[(s, a)];
                if w == 0.0 {
                    continue;
                }
                let z = s + ns * a;
                for zp in 0..self.len() {
                    ps[(s, zp % ns)] += w * self.p[(z, zp)];
                }
            }
        }
        ps
    }

    /// `‖q − (r + γ P q)‖_∞`.
    pub fn bellman_residual(&self, q: &DVector<f64>, r: &DVector<f64>) -> f64 {
        (q - (r + self.gamma * (&self.p * q))).amax()
    }
}

/// Exact `Q_i` over `Z`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactQ {
    pub agent: usize,
    pub values: DVector<f64>,
}

/// Solves `(I − γP) Q_i = r_i` for every agent with a single LU factorisation,
/// falling back to value iteration when the residual exceeds 1e−8.
pub fn exact_q(chain: &GlobalChain) -> Result<Vec<ExactQ>> {
    let nz = chain.len();
    let system = DMatrix::identity(nz, nz) - chain.gamma * &chain.p;
    let rhs = DMatrix::from_columns(&chain.rewards);
    let solved = system.lu().solve(&rhs);
    (0..chain.n)
        .map(|i| {
            let r = &chain.rewards[i];
            let direct = solved.as_ref().map(|m| m.column(i).into_owned());
            let values = match direct {
                Some(q) if chain.bellman_residual(&q, r) <= RESIDUAL_TOLERANCE => q,
                _ => value_iteration(chain, r)?,
            };
            Ok(ExactQ { agent: i, values })
        })
        .collect()
}

/// Iterates `Q ← r + γ P Q` from zero for at most
/// `⌈log(1e−10 (1−γ) / r̄) / log γ⌉` sweeps.
pub fn value_iteration(chain: &GlobalChain, r: &DVector<f64>) -> Result<DVector<f64>> {
    let gamma = chain.gamma;
    let scale = chain.reward_bound.max(r.amax()).max(f64::MIN_POSITIVE);
    let cap = ((VI_TOLERANCE * (1.0 - gamma) / scale).ln() / gamma.ln()).ceil().max(1.0) as usize;
    let mut q = DVector::zeros(chain.len());
    for _ in 0..cap {
        let next = r + gamma * (&chain.p * &q);
        let delta = (&next - &q).amax();
        q = next;
        // contraction: remaining error ≤ γ δ / (1 − γ)
        if gamma * delta / (1.0 - gamma) <= VI_TOLERANCE {
            break;
        }
    }
    let residual = chain.bellman_residual(&q, r);
    if residual > RESIDUAL_TOLERANCE {
        return Err(Error::Numerical(format!("value iteration stopped with residual {residual}")));
    }
    Ok(q)
}

/// `π^θ(s) = (1−γ) Σ_t γ^t P(s(t) = s)`, from `(I − γ P_Sᵀ) d = (1−γ) π_0`.
pub fn discounted_visitation(chain: &GlobalChain) -> Result<DVector<f64>> {
    let ps = chain.state_marginal();
    visitation_from(&ps, &chain.initial, chain.gamma)
}

fn visitation_from(ps: &DMatrix<f64>, initial: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
    let ns = ps.nrows();
    let system = DMatrix::identity(ns, ns) - gamma * ps.transpose();
    let d = system
        .lu()
        .solve(&((1.0 - gamma) * initial))
        .ok_or_else(|| Error::Numerical("visitation system is singular".into()))?;
    let total = d.sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::Numerical(format!("visitation sums to {total}")));
    }
    Ok(d)
}

/// Transition matrix and expected reward over global states only.
///
/// Built directly from the local kernels without materialising `Z`, so it
/// reaches instances such as the 8-agent line where `|Z|` is too large.
#[derive(Clone, Debug)]
pub struct StateChain {
    pub gamma: f64,
    pub p: DMatrix<f64>,
    /// `Σ_a ζ(a|s) r(s, a)` with `r = (1/n) Σ_i r_i`.
    pub reward: DVector<f64>,
    pub initial: DVector<f64>,
}

impl StateChain {
    pub fn build<P: LocalizedPolicy + ?Sized>(mdp: &NetworkedMdp, policy: &P) -> Result<Self> {
        check_policy_shape(mdp, policy)?;
        let n = mdp.n();
        let (states, actions) = codecs(mdp)?;
        let ns = states.size();
        let sq = ns.checked_mul(ns).ok_or(Error::IndexOverflow)?;
        if sq > CHAIN_ENTRY_LIMIT {
            return Err(Error::SizeGuard {
                what: "state chain entries",
                required: sq,
                limit: CHAIN_ENTRY_LIMIT,
            });
        }
        let own = mdp.dynamics().action_scope() == ActionScope::Own;
        if !own {
            let work = sq.checked_mul(actions.size()).ok_or(Error::IndexOverflow)?;
            if work > STATE_CHAIN_WORK_LIMIT {
                return Err(Error::SizeGuard {
                    what: "state chain work",
                    required: work,
                    limit: STATE_CHAIN_WORK_LIMIT,
                });
            }
        }
        let ns = ns as usize;
        let rows: Vec<(Vec<f64>, f64)> = Execution::default().map_range(ns, |si| {
            let s = states.decode(si as u128).expect("in range");
            let mut scratch = Scratch::default();
            if own {
                own_scope_row(mdp, policy, &s, &mut scratch)
            } else {
                joint_action_row(mdp, policy, &s, &actions, &mut scratch)
            }
        });
        let mut p = DMatrix::zeros(ns, ns);
        let mut reward = DVector::zeros(ns);
        for (si, (row, r)) in rows.into_iter().enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::Numerical(format!("state chain row {si} sums to {total}")));
            }
            for (sp, v) in row.into_iter().enumerate() {
                p[(si, sp)] = v;
            }
            reward[si] = r / n as f64;
        }
        Ok(StateChain {
            gamma: mdp.gamma(),
            p,
            reward,
            initial: initial_distribution(mdp, &states),
        })
    }

    /// `V = (I − γ P_S)^{-1} r_S`.
    pub fn values(&self) -> Result<DVector<f64>> {
        let ns = self.p.nrows();
        (DMatrix::identity(ns, ns) - self.gamma * &self.p)
            .lu()
            .solve(&self.reward)
            .ok_or_else(|| Error::Numerical("state value system is singular".into()))
    }

    /// `J = Σ_s π_0(s) V(s)`.
    pub fn objective(&self) -> Result<f64> {
        Ok(self.initial.dot(&self.values()?))
    }

    pub fn visitation(&self) -> Result<DVector<f64>> {
        visitation_from(&self.p, &self.initial, self.gamma)
    }
}

/// With own-action scope the next-state law factorises as
/// `∏_i Σ_{a_i} ζ_i(a_i|s_i) P_i(· | s_{N_i}, a_i)`.
fn own_scope_row<P: LocalizedPolicy + ?Sized>(
    mdp: &NetworkedMdp,
    policy: &P,
    s: &[usize],
    scratch: &mut Scratch,
) -> (Vec<f64>, f64) {
    let n = mdp.n();
    let mut a = vec![0; n];
    let mut factors = Vec::with_capacity(n);
    let mut reward = 0.0;
    for i in 0..n {
        let sp = mdp.space(i);
        let probs = policy.action_probs(i, s[i]);
        let mut marginal = vec![0.0; sp.states];
        let mut buf = vec![0.0; sp.states];
        for (ai, &w) in probs.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            a[i] = ai;
            let ctx = mdp.context(i, s, &a, scratch);
            mdp.dynamics().transition_probs(&ctx, &mut buf);
            reward += w * mdp.dynamics().reward(&ctx);
            for (m, b) in marginal.iter_mut().zip(&buf) {
                *m += w * b;
            }
        }
        a[i] = 0;
        factors.push(marginal);
    }
    let mut row = Vec::new();
    product_distribution(&factors, &mut row);
    (row, reward)
}

fn joint_action_row<P: LocalizedPolicy + ?Sized>(
    mdp: &NetworkedMdp,
    policy: &P,
    s: &[usize],
    actions: &MixedRadixCodec,
    scratch: &mut Scratch,
) -> (Vec<f64>, f64) {
    let n = mdp.n();
    let mut a = vec![0; n];
    let mut row: Vec<f64> = Vec::new();
    let mut next = Vec::new();
    let mut reward = 0.0;
    for ai in 0..actions.size() {
        actions.decode_into(ai, &mut a).expect("in range");
        let w = policy.joint_prob(s, &a);
        if w == 0.0 {
            continue;
        }
        let mut factors = Vec::with_capacity(n);
        for i in 0..n {
            let ctx = mdp.context(i, s, &a, scratch);
            let mut probs = vec![0.0; mdp.space(i).states];
            mdp.dynamics().transition_probs(&ctx, &mut probs);
            reward += w * mdp.dynamics().reward(&ctx);
            factors.push(probs);
        }
        product_distribution(&factors, &mut next);
        if row.is_empty() {
            row = vec![0.0; next.len()];
        }
        for (r, x) in row.iter_mut().zip(&next) {
            *r += w * x;
        }
    }
    (row, reward)
}

/// Exact `J(θ)` through the state chain.
pub fn exact_return<P: LocalizedPolicy + ?Sized>(mdp: &NetworkedMdp, policy: &P) -> Result<f64> {
    StateChain::build(mdp, policy)?.objective()
}
