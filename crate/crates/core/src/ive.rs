//! Implicit value ensembles.
//!
//! For a model `m̂`, policy `π` and value estimate `v̂`, the k-step
//! model-predicted value is `(T^π_m̂)^k v̂`. The ensemble `{k = 0..n}` comes
//! from a single model and value function; the spread across its members is
//! the model-value inconsistency signal.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{self, ActionValues, PolicyTable, TabularMdp};
use crate::rng::{self, sample_categorical};
use crate::tabular_learn::{learned_model_to_mdp, LearnedTabularModel};

/// Population mean and standard deviation. The mean is clamped into
/// `[min, max]` so rounding can never push it outside the members' hull.
pub fn population_stats(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = (xs.iter().sum::<f64>() / m).clamp(lo, hi);
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / m;
    (mean, var.sqrt())
}

/// k-MPVs for every row (state, or state-action pair) plus their
/// ensemble mean (μ-IVE) and population standard deviation (σ-IVE).
#[derive(Clone, Debug, PartialEq)]
pub struct IveReport {
    horizon: usize,
    first_k: usize,
    n_states: usize,
    n_actions: Option<usize>,
    /// `[row][member]`, member `j` holding `k = first_k + j`.
    kmpv: Vec<f64>,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl IveReport {
    fn from_columns(
        horizon: usize,
        first_k: usize,
        n_states: usize,
        n_actions: Option<usize>,
        columns: &[Vec<f64>],
    ) -> Self {
        let rows = columns[0].len();
        let members = columns.len();
        let mut kmpv = vec![0.0; rows * members];
        for (j, col) in columns.iter().enumerate() {
            for (r, &x) in col.iter().enumerate() {
                kmpv[r * members + j] = x;
            }
        }
        let (mean, std) = kmpv.chunks(members).map(population_stats).unzip();
        Self {
            horizon,
            first_k,
            n_states,
            n_actions,
            kmpv,
            mean,
            std,
        }
    }

    /// The largest `k` in the ensemble.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Smallest `k`: 0 for state reports, 1 for action-conditioned ones.
    pub fn first_k(&self) -> usize {
        self.first_k
    }

    pub fn members(&self) -> usize {
        self.horizon + 1 - self.first_k
    }

    pub fn rows(&self) -> usize {
        self.mean.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// `Some(n_actions)` for action-conditioned reports.
    pub fn n_actions(&self) -> Option<usize> {
        self.n_actions
    }

    pub fn kmpv(&self, row: usize, k: usize) -> f64 {
        assert!(k >= self.first_k && k <= self.horizon, "k = {k} not in the ensemble");
        self.kmpv[row * self.members() + (k - self.first_k)]
    }

    /// All members of one row, ordered by `k`.
    pub fn row_members(&self, row: usize) -> &[f64] {
        let m = self.members();
        &self.kmpv[row * m..(row + 1) * m]
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.kmpv(r, k)).collect()
    }

    /// μ-IVE(n).
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// σ-IVE(n).
    pub fn std(&self) -> &[f64] {
        &self.std
    }

    fn row_label(&self, row: usize) -> String {
        match self.n_actions {
            Some(na) => format!("{},{}", row / na, row % na),
            None => row.to_string(),
        }
    }

    fn key_header(&self) -> &'static str {
        if self.n_actions.is_some() {
            "state,action"
        } else {
            "state"
        }
    }

    /// `state,k,value` (or `state,action,k,value`).
    pub fn write_members_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{},k,value", self.key_header())?;
        for row in 0..self.rows() {
            let label = self.row_label(row);
            for (j, v) in self.row_members(row).iter().enumerate() {
                writeln!(out, "{label},{},{v}", self.first_k + j)?;
            }
        }
        Ok(())
    }

    /// `state,mu,sigma` (or `state,action,mu,sigma`).
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{},mu,sigma", self.key_header())?;
        for row in 0..self.rows() {
            writeln!(out, "{},{},{}", self.row_label(row), self.mean[row], self.std[row])?;
        }
        Ok(())
    }
}

fn check_horizon(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::invalid("ensemble horizon n must be at least 1"))
    } else {
        Ok(())
    }
}

/// `{(T^π_m̂)^k v : k = 0..n}`, computed with `n` operator applications.
pub fn ive_exact(
    model_mdp: &TabularMdp,
    policy: &PolicyTable,
    v: &[f64],
    n: usize,
) -> Result<IveReport> {
    check_horizon(n)?;
    model_mdp.check_policy(policy)?;
    model_mdp.check_values(v)?;
    let mut columns = vec![v.to_vec()];
    for k in 1..=n {
        let mut next = vec![0.0; v.len()];
        mdp::eval_into(model_mdp, policy, &columns[k - 1], &mut next);
        columns.push(next);
    }
    Ok(IveReport::from_columns(n, 0, model_mdp.n_states(), None, &columns))
}

/// `{(T*_m̂)^k v : k = 0..n}`.
pub fn ive_opt_exact(model_mdp: &TabularMdp, v: &[f64], n: usize) -> Result<IveReport> {
    check_horizon(n)?;
    model_mdp.check_values(v)?;
    let mut columns = vec![v.to_vec()];
    for k in 1..=n {
        let mut next = vec![0.0; v.len()];
        mdp::opt_into(model_mdp, &columns[k - 1], &mut next);
        columns.push(next);
    }
    Ok(IveReport::from_columns(n, 0, model_mdp.n_states(), None, &columns))
}

/// Action-conditioned k-MPVs for `k = 1..n`: the first step takes action
/// `a`, the remaining `k − 1` follow `π`:
/// `r̂(s, a) + γ Σ_{s'} p̂(s'|s, a) ((T^π_m̂)^{k−1} v)(s')`.
pub fn ive_exact_q(
    model_mdp: &TabularMdp,
    policy: &PolicyTable,
    v: &[f64],
    n: usize,
) -> Result<IveReport> {
    check_horizon(n)?;
    model_mdp.check_policy(policy)?;
    model_mdp.check_values(v)?;
    let (ns, na) = (model_mdp.n_states(), model_mdp.n_actions());
    let mut base = v.to_vec();
    let mut columns = Vec::with_capacity(n);
    for k in 1..=n {
        if k > 1 {
            let mut next = vec![0.0; ns];
            mdp::eval_into(model_mdp, policy, &base, &mut next);
            base = next;
        }
        let col = (0..ns * na)
            .map(|row| model_mdp.backup(&base, row / na, row % na))
            .collect();
        columns.push(col);
    }
    Ok(IveReport::from_columns(n, 1, ns, Some(na), &columns))
}

/// Draws `(r', s')` from a model.
pub trait ModelSampler {
    fn discount(&self) -> f64;
    fn sample_step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> (f64, usize);
}

/// Draws `a` from a policy.
pub trait PolicySampler {
    fn sample_action<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize;
}

impl ModelSampler for TabularMdp {
    fn discount(&self) -> f64 {
        self.gamma()
    }

    /// Expected reward, sampled next state.
    fn sample_step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> (f64, usize) {
        (self.reward(s, a), sample_categorical(self.transition_row(s, a), rng))
    }
}

impl PolicySampler for PolicyTable {
    fn sample_action<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_categorical(self.row(s), rng)
    }
}

/// One sampled model rollout and every k-MPV estimate read off it.
#[derive(Clone, Debug, PartialEq)]
pub struct McTrajectory {
    /// `s_0 .. s_n`.
    pub states: Vec<usize>,
    /// `a_0 .. a_{n-1}`.
    pub actions: Vec<usize>,
    /// `r_1 .. r_n`.
    pub rewards: Vec<f64>,
    /// Entry `k`: `Σ_{i=1}^{k} γ^{i−1} r_i + γ^k v(s_k)`.
    pub estimates: Vec<f64>,
}

fn sample_trajectory<M, P, V, R>(model: &M, policy: &P, v: &V, s: usize, n: usize, rng: &mut R) -> McTrajectory
where
    M: ModelSampler,
    P: PolicySampler,
    V: Fn(usize) -> f64,
    R: Rng + ?Sized,
{
    let gamma = model.discount();
    let mut states = vec![s];
    let mut actions = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    for _ in 0..n {
        let cur = *states.last().expect("non-empty");
        let a = policy.sample_action(cur, rng);
        let (r, next) = model.sample_step(cur, a, rng);
        actions.push(a);
        rewards.push(r);
        states.push(next);
    }
    // Nested evaluation r_1 + γ(r_2 + … + γ v(s_k)) mirrors the operator's
    // association, so a deterministic model reproduces the exact k-MPV.
    let estimates = (0..=n)
        .map(|k| {
            rewards[..k]
                .iter()
                .rev()
                .fold(v(states[k]), |acc, r| r + gamma * acc)
        })
        .collect();
    McTrajectory {
        states,
        actions,
        rewards,
        estimates,
    }
}

/// Samples one trajectory of length `n` from `s` and returns it together with
/// all `n + 1` prefix estimates.
pub fn mc_k_mpv_trajectory<M, P, V>(model: &M, policy: &P, v: V, s: usize, n: usize, seed: u64) -> Result<McTrajectory>
where
    M: ModelSampler,
    P: PolicySampler,
    V: Fn(usize) -> f64,
{
    check_horizon(n)?;
    let mut rng = rng::seeded(seed, rng::stream::ROLLOUT);
    Ok(sample_trajectory(model, policy, &v, s, n, &mut rng))
}

/// Monte-Carlo k-MPVs `k = 0..n` from a single shared trajectory.
pub fn mc_k_mpv<M, P, V>(model: &M, policy: &P, v: V, s: usize, n: usize, seed: u64) -> Result<Vec<f64>>
where
    M: ModelSampler,
    P: PolicySampler,
    V: Fn(usize) -> f64,
{
    mc_k_mpv_trajectory(model, policy, v, s, n, seed).map(|t| t.estimates)
}

/// Average of `samples` trajectories drawn from one seeded stream.
pub fn mc_k_mpv_mean<M, P, V>(
    model: &M,
    policy: &P,
    v: V,
    s: usize,
    n: usize,
    seed: u64,
    samples: usize,
) -> Result<Vec<f64>>
where
    M: ModelSampler,
    P: PolicySampler,
    V: Fn(usize) -> f64,
{
    check_horizon(n)?;
    if samples == 0 {
        return Err(Error::invalid("at least one sample is required"));
    }
    let mut rng = rng::seeded(seed, rng::stream::ROLLOUT);
    let mut acc = vec![0.0; n + 1];
    for _ in 0..samples {
        let t = sample_trajectory(model, policy, &v, s, n, &mut rng);
        for (a, e) in acc.iter_mut().zip(&t.estimates) {
            *a += e;
        }
    }
    Ok(acc.into_iter().map(|a| a / samples as f64).collect())
}

/// Weight `β` of the σ term: `β > 0` seeks inconsistency, `β < 0` avoids it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalCombiner {
    beta: f64,
}

impl SignalCombiner {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_finite() {
            Ok(Self { beta })
        } else {
            Err(Error::invalid("beta must be finite"))
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// `μ + β·σ` per row.
pub fn combine(report: &IveReport, combiner: SignalCombiner) -> Vec<f64> {
    report
        .mean()
        .iter()
        .zip(report.std())
        .map(|(m, s)| m + combiner.beta * s)
        .collect()
}

/// Mean and population standard deviation across explicit ensemble members.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl EnsembleStats {
    fn across(members: &[Vec<f64>]) -> Self {
        let rows = members[0].len();
        let mut buf = vec![0.0; members.len()];
        let (mean, std) = (0..rows)
            .map(|r| {
                for (b, m) in buf.iter_mut().zip(members) {
                    *b = m[r];
                }
                population_stats(&buf)
            })
            .unzip();
        Self { mean, std }
    }

    /// `state,mu,sigma`.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "state,mu,sigma")?;
        for (s, (m, d)) in self.mean.iter().zip(&self.std).enumerate() {
            writeln!(out, "{s},{m},{d}")?;
        }
        Ok(())
    }
}

fn check_members(len: usize) -> Result<()> {
    if len < 2 {
        Err(Error::invalid("ensemble statistics need at least 2 members"))
    } else {
        Ok(())
    }
}

/// Per-(s, a) statistics over an explicit value ensemble.
pub fn eve_stats(members: &[ActionValues]) -> Result<EnsembleStats> {
    check_members(members.len())?;
    for m in &members[1..] {
        Error::check_dim("ensemble member", members[0].values().len(), m.values().len())?;
    }
    let cols: Vec<Vec<f64>> = members.iter().map(|m| m.values().to_vec()).collect();
    Ok(EnsembleStats::across(&cols))
}

/// Per-state statistics of `v_i(s) = Σ_a π(a|s) q_i(s, a)`.
pub fn eve_state_stats(members: &[ActionValues], policy: &PolicyTable) -> Result<EnsembleStats> {
    check_members(members.len())?;
    let cols = members
        .iter()
        .map(|q| mdp::induce_state_values(q, policy).map(|v| v.into_inner()))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleStats::across(&cols))
}

/// Per-state statistics of `{T^π_{m̂_i} v}` over an explicit model ensemble.
pub fn emve_stats(
    models: &[LearnedTabularModel],
    policy: &PolicyTable,
    v: &[f64],
    gamma: f64,
) -> Result<EnsembleStats> {
    check_members(models.len())?;
    let cols = models
        .iter()
        .map(|m| {
            let mdp = learned_model_to_mdp(m, gamma)?;
            mdp::bellman_eval_apply(&mdp, policy, v).map(|x| x.into_inner())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleStats::across(&cols))
}
