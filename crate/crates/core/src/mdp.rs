//! Exact finite MDPs and the Bellman-operator machinery over them.
//!
//! Everything here is a pure function of immutable inputs. Arrays are stored
//! flat and row-major: `transition[(s * n_actions + a) * n_states + s_next]`,
//! `reward[s * n_actions + a]`, `policy[s * n_actions + a]`.

use std::ops::Deref;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Tolerance on probability-row sums.
pub const PROB_TOL: f64 = 1e-12;

/// Default tolerance for [`policy_evaluation`] and [`value_iteration`].
pub const DEFAULT_TOL: f64 = 1e-10;

/// Sweep cap for the fixed-point iterations.
pub const MAX_SWEEPS: usize = 100_000;

fn check_rows(what: &'static str, data: &[f64], width: usize) -> Result<()> {
    for (row, chunk) in data.chunks(width).enumerate() {
        let mut sum = 0.0;
        for &p in chunk {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::NotStochastic { what, row, sum: p });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::NotStochastic { what, row, sum });
        }
    }
    Ok(())
}

fn check_finite(what: &str, data: &[f64]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::invalid(format!("{what}: entry {i} is not finite"))),
        None => Ok(()),
    }
}

/// A finite MDP with expected rewards `r(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("an MDP needs at least one state and one action"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::invalid(format!("discount {gamma} outside [0, 1)")));
        }
        Error::check_dim("transition", n_states * n_actions * n_states, transition.len())?;
        Error::check_dim("reward", n_states * n_actions, reward.len())?;
        check_rows("transition", &transition, n_states)?;
        check_finite("reward", &reward)?;
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
        })
    }

    /// Random MDP: transition rows from normalized exponential weights,
    /// rewards standard normal.
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let weights: Vec<f64> = (0..n_states)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            transition.extend(normalize(&weights));
        }
        let reward = (0..n_states * n_actions)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Self::new(n_states, n_actions, transition, reward, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    /// `p(· | s, a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition_row(s, a)[s_next]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// One-step backup `r(s, a) + γ Σ_{s'} p(s'|s, a) v(s')`.
    pub(crate) fn backup(&self, v: &[f64], s: usize, a: usize) -> f64 {
        let expected: f64 = self
            .transition_row(s, a)
            .iter()
            .zip(v)
            .map(|(p, x)| p * x)
            .sum();
        self.reward(s, a) + self.gamma * expected
    }

    pub(crate) fn check_policy(&self, policy: &PolicyTable) -> Result<()> {
        Error::check_dim("policy states", self.n_states, policy.n_states())?;
        Error::check_dim("policy actions", self.n_actions, policy.n_actions())
    }

    pub(crate) fn check_values(&self, v: &[f64]) -> Result<()> {
        Error::check_dim("state values", self.n_states, v.len())
    }
}

/// Normalizes non-negative weights to sum to one.
pub(crate) fn normalize(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// A stochastic policy `π(a | s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTable {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("empty policy table"));
        }
        Error::check_dim("policy", n_states * n_actions, probs.len())?;
        check_rows("policy", &probs, n_actions)?;
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_actions],
        }
    }

    /// One-hot policy picking `actions[s]` in every state.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::IndexOutOfRange {
                    what: "action",
                    index: a,
                    limit: n_actions,
                });
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The chosen action per state if every row is one-hot.
    pub fn greedy_actions(&self) -> Option<Vec<usize>> {
        (0..self.n_states)
            .map(|s| {
                let row = self.row(s);
                let hot = row.iter().position(|&p| p == 1.0)?;
                row.iter()
                    .enumerate()
                    .all(|(a, &p)| a == hot || p == 0.0)
                    .then_some(hot)
            })
            .collect()
    }
}

/// A state-value function `v(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateValues(Vec<f64>);

impl StateValues {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite("state values", &values)?;
        Ok(Self(values))
    }

    pub fn zeros(n_states: usize) -> Self {
        Self(vec![0.0; n_states])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `‖self − other‖∞`.
    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for StateValues {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// An action-value function `q(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionValues {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl ActionValues {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        Error::check_dim("action values", n_states * n_actions, values.len())?;
        check_finite("action values", &values)?;
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// A row-stochastic square matrix (Markov-chain kernel).
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl StochasticMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("empty stochastic matrix"));
        }
        Error::check_dim("stochastic matrix", n * n, entries.len())?;
        check_rows("stochastic matrix", &entries, n)?;
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `self · other`. Rows of a product of stochastic matrices stay
    /// stochastic up to rounding, so the result is not re-validated.
    pub fn matmul(&self, other: &StochasticMatrix) -> Result<StochasticMatrix> {
        Error::check_dim("matmul", self.n, other.n)?;
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            let out = &mut entries[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(StochasticMatrix { n, entries })
    }

    /// `self^l` by repeated multiplication.
    pub fn power(&self, l: usize) -> StochasticMatrix {
        let mut acc = StochasticMatrix::identity(self.n);
        for _ in 0..l {
            acc = acc.matmul(self).expect("same size");
        }
        acc
    }

    /// `dist · self` for a row distribution.
    fn propagate(&self, dist: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; self.n];
        for (i, &d) in dist.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (o, p) in next.iter_mut().zip(self.row(i)) {
                *o += d * p;
            }
        }
        next
    }
}

pub(crate) fn eval_into(mdp: &TabularMdp, policy: &PolicyTable, v: &[f64], out: &mut [f64]) {
    for (s, o) in out.iter_mut().enumerate() {
        *o = policy
            .row(s)
            .iter()
            .enumerate()
            .map(|(a, &pi)| pi * mdp.backup(v, s, a))
            .sum();
    }
}

pub(crate) fn opt_into(mdp: &TabularMdp, v: &[f64], out: &mut [f64]) {
    for (s, o) in out.iter_mut().enumerate() {
        *o = (0..mdp.n_actions())
            .map(|a| mdp.backup(v, s, a))
            .fold(f64::NEG_INFINITY, f64::max);
    }
}

/// `T^π v`.
pub fn bellman_eval_apply(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    v: &[f64],
) -> Result<StateValues> {
    mdp.check_policy(policy)?;
    mdp.check_values(v)?;
    let mut out = vec![0.0; mdp.n_states()];
    eval_into(mdp, policy, v, &mut out);
    Ok(StateValues(out))
}

/// `(T^π)^k v`; `k = 0` returns `v` unchanged.
pub fn bellman_eval_apply_k(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    v: &[f64],
    k: usize,
) -> Result<StateValues> {
    mdp.check_policy(policy)?;
    mdp.check_values(v)?;
    let mut cur = v.to_vec();
    let mut next = vec![0.0; v.len()];
    for _ in 0..k {
        eval_into(mdp, policy, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(StateValues(cur))
}

/// `T* v`.
pub fn bellman_opt_apply(mdp: &TabularMdp, v: &[f64]) -> Result<StateValues> {
    mdp.check_values(v)?;
    let mut out = vec![0.0; mdp.n_states()];
    opt_into(mdp, v, &mut out);
    Ok(StateValues(out))
}

/// `(T*)^k v`.
pub fn bellman_opt_apply_k(mdp: &TabularMdp, v: &[f64], k: usize) -> Result<StateValues> {
    mdp.check_values(v)?;
    let mut cur = v.to_vec();
    let mut next = vec![0.0; v.len()];
    for _ in 0..k {
        opt_into(mdp, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(StateValues(cur))
}

fn iterate_to_fixed_point(
    n_states: usize,
    tol: f64,
    mut apply: impl FnMut(&[f64], &mut [f64]),
) -> Result<StateValues> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mut v = vec![0.0; n_states];
    let mut next = vec![0.0; n_states];
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        apply(&v, &mut next);
        residual = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // `residual` is the Bellman residual of `v`, so return `v` itself.
        if residual <= tol {
            return Ok(StateValues(v));
        }
        std::mem::swap(&mut v, &mut next);
    }
    Err(Error::NotConverged {
        iterations: MAX_SWEEPS,
        residual,
    })
}

/// `v^π` by fixed-point iteration; the result satisfies `‖T^π v − v‖∞ ≤ tol`.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &PolicyTable, tol: f64) -> Result<StateValues> {
    mdp.check_policy(policy)?;
    iterate_to_fixed_point(mdp.n_states(), tol, |v, out| eval_into(mdp, policy, v, out))
}

/// `v*` by value iteration; the result satisfies `‖T* v − v‖∞ ≤ tol`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<StateValues> {
    iterate_to_fixed_point(mdp.n_states(), tol, |v, out| opt_into(mdp, v, out))
}

/// `v(s) = Σ_a π(a|s) q(s, a)`.
pub fn induce_state_values(q: &ActionValues, policy: &PolicyTable) -> Result<StateValues> {
    Error::check_dim("policy states", q.n_states(), policy.n_states())?;
    Error::check_dim("policy actions", q.n_actions(), policy.n_actions())?;
    let values = (0..q.n_states())
        .map(|s| q.row(s).iter().zip(policy.row(s)).map(|(x, p)| x * p).sum())
        .collect();
    Ok(StateValues(values))
}

/// `P^π[s, s'] = Σ_a π(a|s) p(s'|s, a)`.
pub fn policy_transition_kernel(
    mdp: &TabularMdp,
    policy: &PolicyTable,
) -> Result<StochasticMatrix> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states();
    let mut entries = vec![0.0; n * n];
    for s in 0..n {
        let out = &mut entries[s * n..(s + 1) * n];
        for (a, &pi) in policy.row(s).iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(mdp.transition_row(s, a)) {
                *o += pi * p;
            }
        }
    }
    Ok(StochasticMatrix { n, entries })
}

fn check_state(kernel: &StochasticMatrix, s: usize) -> Result<()> {
    if s < kernel.size() {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange {
            what: "state",
            index: s,
            limit: kernel.size(),
        })
    }
}

/// `(P^l)[start, target]`: the probability of occupying `target` exactly
/// `l` steps after leaving `start`.
pub fn occupancy_probability(
    kernel: &StochasticMatrix,
    start: usize,
    target: usize,
    l: usize,
) -> Result<f64> {
    check_state(kernel, start)?;
    check_state(kernel, target)?;
    let mut dist = vec![0.0; kernel.size()];
    dist[start] = 1.0;
    for _ in 0..l {
        dist = kernel.propagate(&dist);
    }
    Ok(dist[target])
}

/// Occupancy probabilities for `l = 1..=l_max`, sharing one propagation.
pub fn occupancy_curve(
    kernel: &StochasticMatrix,
    start: usize,
    target: usize,
    l_max: usize,
) -> Result<Vec<f64>> {
    check_state(kernel, start)?;
    check_state(kernel, target)?;
    let mut dist = vec![0.0; kernel.size()];
    dist[start] = 1.0;
    let mut curve = Vec::with_capacity(l_max);
    for _ in 0..l_max {
        dist = kernel.propagate(&dist);
        curve.push(dist[target]);
    }
    Ok(curve)
}
