//! Gradient-based learning of tabular models and action-values.
//!
//! Both learners start from standard-normal parameters and run Adam over
//! mini-batches drawn with replacement from the buffer. One epoch is
//! `ceil(|buffer| / batch_size)` optimizer steps.

use std::io::{BufRead, Write};
use std::path::Path;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::env::ExperienceBuffer;
use crate::error::{Error, Result};
use crate::mdp::{ActionValues, PolicyTable, TabularMdp};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::rng::{self, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableShape {
    pub n_states: usize,
    pub n_actions: usize,
}

impl TableShape {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
        }
    }

    pub fn pairs(&self) -> usize {
        self.n_states * self.n_actions
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            epochs: 10_000,
            batch_size: 128,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid("adam_eps must be positive"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: 0.0,
        }
    }

    /// Optimizer steps for a buffer of `len` transitions.
    pub fn total_steps(&self, len: usize) -> usize {
        self.epochs * len.div_ceil(self.batch_size)
    }
}

/// Outcome flag of a fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitStatus {
    Trained { steps: usize },
    /// Nothing to learn from; the initialization is returned untouched.
    EmptyBuffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fitted<T> {
    pub value: T,
    pub status: FitStatus,
}

/// Transition logits and expected rewards of a learned model.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedTabularModel {
    shape: TableShape,
    /// `[state][action][next_state]`, row-major.
    transition_logits: Vec<f64>,
    /// `[state][action]`.
    reward: Vec<f64>,
}

impl LearnedTabularModel {
    pub fn new(shape: TableShape, transition_logits: Vec<f64>, reward: Vec<f64>) -> Result<Self> {
        Error::check_dim("transition logits", shape.pairs() * shape.n_states, transition_logits.len())?;
        Error::check_dim("model reward", shape.pairs(), reward.len())?;
        if transition_logits.iter().chain(&reward).any(|x| !x.is_finite()) {
            return Err(Error::invalid("model parameters must be finite"));
        }
        Ok(Self {
            shape,
            transition_logits,
            reward,
        })
    }

    /// Standard-normal initialization: all logits, then all rewards.
    pub fn init(shape: TableShape, seed: u64) -> Self {
        let mut rng = rng::seeded(seed, stream::INIT);
        let transition_logits = normal_vec(shape.pairs() * shape.n_states, &mut rng);
        let reward = normal_vec(shape.pairs(), &mut rng);
        Self {
            shape,
            transition_logits,
            reward,
        }
    }

    pub fn shape(&self) -> TableShape {
        self.shape
    }

    pub fn transition_logits(&self) -> &[f64] {
        &self.transition_logits
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn logits(&self, s: usize, a: usize) -> &[f64] {
        let n = self.shape.n_states;
        let start = (s * self.shape.n_actions + a) * n;
        &self.transition_logits[start..start + n]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.shape.n_actions + a]
    }

    /// `softmax(logits[s][a])`.
    pub fn transition_probs(&self, s: usize, a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.shape.n_states];
        softmax_into(self.logits(s, a), &mut out);
        out
    }

    pub fn to_named_arrays(&self) -> Vec<NamedArray> {
        let TableShape {
            n_states,
            n_actions,
        } = self.shape;
        vec![
            NamedArray {
                name: "transition_logits".into(),
                dims: vec![n_states, n_actions, n_states],
                values: self.transition_logits.clone(),
            },
            NamedArray {
                name: "reward".into(),
                dims: vec![n_states, n_actions],
                values: self.reward.clone(),
            },
        ]
    }

    pub fn from_named_arrays(arrays: &[NamedArray]) -> Result<Self> {
        let find = |name: &str| {
            arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| Error::invalid(format!("missing array {name}")))
        };
        let logits = find("transition_logits")?;
        let reward = find("reward")?;
        if logits.dims.len() != 3 {
            return Err(Error::invalid("transition_logits must be 3-dimensional"));
        }
        let shape = TableShape::new(logits.dims[0], logits.dims[1]);
        Self::new(shape, logits.values.clone(), reward.values.clone())
    }
}

fn normal_vec<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Numerically stable softmax.
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
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

/// Standard-normal action-values.
pub fn init_action_values(shape: TableShape, seed: u64) -> ActionValues {
    let mut rng = rng::seeded(seed, stream::INIT);
    ActionValues::new(shape.n_states, shape.n_actions, normal_vec(shape.pairs(), &mut rng))
        .expect("finite normal draws")
}

fn check_buffer(buffer: &ExperienceBuffer, shape: TableShape, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if shape.n_states == 0 || shape.n_actions == 0 {
        return Err(Error::invalid("table shape must be non-empty"));
    }
    buffer.check_shape(shape.n_states, shape.n_actions)
}

/// Runs `steps` minibatch updates; `grad_fn` fills gradients for one batch.
fn run_minibatch_adam(
    params: &mut [f64],
    buffer: &ExperienceBuffer,
    config: &TrainConfig,
    mut grad_fn: impl FnMut(&[f64], &[usize], &mut [f64]),
) -> usize {
    let steps = config.total_steps(buffer.len());
    let adam = config.adam();
    let mut state = AdamState::new(params.len());
    let mut rng = rng::seeded(config.seed, stream::BATCHES);
    let mut batch = vec![0usize; config.batch_size];
    let mut grads = vec![0.0; params.len()];
    for _ in 0..steps {
        for b in batch.iter_mut() {
            *b = rng.random_range(0..buffer.len());
        }
        grads.iter_mut().for_each(|g| *g = 0.0);
        grad_fn(params, &batch, &mut grads);
        adam_step(params, &grads, &mut state, &adam).expect("matching shapes");
    }
    steps
}

/// Maximum-likelihood model fit from a standard-normal initialization.
pub fn fit_model_mle(
    buffer: &ExperienceBuffer,
    shape: TableShape,
    config: &TrainConfig,
) -> Result<Fitted<LearnedTabularModel>> {
    fit_model_mle_from(LearnedTabularModel::init(shape, config.seed), buffer, config)
}

/// Minimizes the batch mean of `−log softmax(logits[s][a])[s'] + (r̂(s, a) − r)²`.
pub fn fit_model_mle_from(
    init: LearnedTabularModel,
    buffer: &ExperienceBuffer,
    config: &TrainConfig,
) -> Result<Fitted<LearnedTabularModel>> {
    let shape = init.shape;
    check_buffer(buffer, shape, config)?;
    if buffer.is_empty() {
        warn!("fit_model_mle: empty buffer, returning the initialization");
        return Ok(Fitted {
            value: init,
            status: FitStatus::EmptyBuffer,
        });
    }
    let n = shape.n_states;
    let n_logits = shape.pairs() * n;
    let mut params = init.transition_logits;
    params.extend(init.reward);
    let scale = 1.0 / config.batch_size as f64;
    let mut probs = vec![0.0; n];
    let steps = run_minibatch_adam(&mut params, buffer, config, |params, batch, grads| {
        for &i in batch {
            let t = &buffer.transitions[i];
            let pair = t.s * shape.n_actions + t.a;
            let row = pair * n;
            softmax_into(&params[row..row + n], &mut probs);
            for (g, p) in grads[row..row + n].iter_mut().zip(&probs) {
                *g += p * scale;
            }
            grads[row + t.s_next] -= scale;
            grads[n_logits + pair] += 2.0 * (params[n_logits + pair] - t.r) * scale;
        }
    });
    let reward = params.split_off(n_logits);
    Ok(Fitted {
        value: LearnedTabularModel {
            shape,
            transition_logits: params,
            reward,
        },
        status: FitStatus::Trained { steps },
    })
}

/// Expected-SARSA action-values from a standard-normal initialization.
pub fn fit_q_expected_sarsa(
    buffer: &ExperienceBuffer,
    policy: &PolicyTable,
    shape: TableShape,
    gamma: f64,
    config: &TrainConfig,
) -> Result<Fitted<ActionValues>> {
    fit_q_expected_sarsa_from(init_action_values(shape, config.seed), buffer, policy, gamma, config)
}

/// Semi-gradient expected SARSA: minimizes the batch mean of
/// `(q(s, a) − r − γ Σ_a' π(a'|s') q̄(s', a'))²` with `q̄` held fixed.
pub fn fit_q_expected_sarsa_from(
    init: ActionValues,
    buffer: &ExperienceBuffer,
    policy: &PolicyTable,
    gamma: f64,
    config: &TrainConfig,
) -> Result<Fitted<ActionValues>> {
    let shape = TableShape::new(init.n_states(), init.n_actions());
    check_buffer(buffer, shape, config)?;
    Error::check_dim("policy states", shape.n_states, policy.n_states())?;
    Error::check_dim("policy actions", shape.n_actions, policy.n_actions())?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma {gamma} outside [0, 1)")));
    }
    if buffer.is_empty() {
        warn!("fit_q_expected_sarsa: empty buffer, returning the initialization");
        return Ok(Fitted {
            value: init,
            status: FitStatus::EmptyBuffer,
        });
    }
    let na = shape.n_actions;
    let scale = 1.0 / config.batch_size as f64;
    let mut q = init;
    let steps = run_minibatch_adam(q.values_mut(), buffer, config, |params, batch, grads| {
        for &i in batch {
            let t = &buffer.transitions[i];
            let next = &params[t.s_next * na..(t.s_next + 1) * na];
            let expected: f64 = next.iter().zip(policy.row(t.s_next)).map(|(x, p)| x * p).sum();
            let target = t.r + gamma * expected;
            let pair = t.s * na + t.a;
            grads[pair] += 2.0 * (params[pair] - target) * scale;
        }
    });
    Ok(Fitted {
        value: q,
        status: FitStatus::Trained { steps },
    })
}

/// Materializes `softmax(logits)` and the reward table as an exact MDP.
pub fn learned_model_to_mdp(model: &LearnedTabularModel, gamma: f64) -> Result<TabularMdp> {
    let n = model.shape.n_states;
    let mut transition = vec![0.0; model.transition_logits.len()];
    for (row, logits) in transition
        .chunks_mut(n)
        .zip(model.transition_logits.chunks(n))
    {
        softmax_into(logits, row);
    }
    TabularMdp::new(n, model.shape.n_actions, transition, model.reward.clone(), gamma)
}

/// Explicit value ensemble: member `i` uses seed `config.seed + i`.
pub fn train_eve(
    buffer: &ExperienceBuffer,
    policy: &PolicyTable,
    shape: TableShape,
    gamma: f64,
    config: &TrainConfig,
    n: usize,
) -> Result<Vec<ActionValues>> {
    if n < 2 {
        return Err(Error::invalid("an explicit ensemble needs at least 2 members"));
    }
    let seeds: Vec<u64> = (0..n as u64).map(|i| config.seed.wrapping_add(i)).collect();
    train_eve_with_seeds(buffer, policy, shape, gamma, config, &seeds)
}

pub fn train_eve_with_seeds(
    buffer: &ExperienceBuffer,
    policy: &PolicyTable,
    shape: TableShape,
    gamma: f64,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<ActionValues>> {
    seeds
        .iter()
        .map(|&seed| {
            fit_q_expected_sarsa(buffer, policy, shape, gamma, &config.with_seed(seed)).map(|f| f.value)
        })
        .collect()
}

/// Explicit model ensemble: member `i` uses seed `config.seed + i`.
pub fn train_emve(
    buffer: &ExperienceBuffer,
    shape: TableShape,
    config: &TrainConfig,
    n: usize,
) -> Result<Vec<LearnedTabularModel>> {
    if n < 2 {
        return Err(Error::invalid("an explicit ensemble needs at least 2 members"));
    }
    let seeds: Vec<u64> = (0..n as u64).map(|i| config.seed.wrapping_add(i)).collect();
    train_emve_with_seeds(buffer, shape, config, &seeds)
}

pub fn train_emve_with_seeds(
    buffer: &ExperienceBuffer,
    shape: TableShape,
    config: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<LearnedTabularModel>> {
    seeds
        .iter()
        .map(|&seed| fit_model_mle(buffer, shape, &config.with_seed(seed)).map(|f| f.value))
        .collect()
}

/// A named dense array, serialized one entry per CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

impl NamedArray {
    pub fn from_action_values(name: &str, q: &ActionValues) -> Self {
        Self {
            name: name.into(),
            dims: vec![q.n_states(), q.n_actions()],
            values: q.values().to_vec(),
        }
    }

    fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for (slot, &d) in idx.iter_mut().zip(&self.dims).rev() {
            *slot = flat % d;
            flat /= d;
        }
        idx
    }
}

/// Writes `name,index,value` rows; `index` is colon-separated (`3:1:4`).
pub fn write_named_arrays<W: Write>(mut out: W, arrays: &[NamedArray]) -> Result<()> {
    writeln!(out, "name,index,value")?;
    for array in arrays {
        for (flat, v) in array.values.iter().enumerate() {
            let idx: Vec<String> = array.unravel(flat).iter().map(|i| i.to_string()).collect();
            writeln!(out, "{},{},{}", array.name, idx.join(":"), v)?;
        }
    }
    Ok(())
}

/// Inverse of [`write_named_arrays`]. Entries must appear in row-major order.
pub fn read_named_arrays<R: BufRead>(input: R, path: &Path) -> Result<Vec<NamedArray>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut arrays: Vec<NamedArray> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "name,index,value" {
                return Err(err(1, "expected header name,index,value".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(err(i + 1, "expected 3 fields".into()));
        }
        let idx = fields[1]
            .split(':')
            .map(|x| x.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(i + 1, e.to_string()))?;
        let value: f64 = fields[2].parse().map_err(|e: std::num::ParseFloatError| err(i + 1, e.to_string()))?;
        if arrays.last().map(|a| a.name.as_str()) != Some(fields[0]) {
            arrays.push(NamedArray {
                name: fields[0].to_string(),
                dims: vec![0; idx.len()],
                values: Vec::new(),
            });
        }
        let array = arrays.last_mut().expect("pushed above");
        if array.dims.len() != idx.len() {
            return Err(err(i + 1, "index rank changed within an array".into()));
        }
        for (d, &x) in array.dims.iter_mut().zip(&idx) {
            *d = (*d).max(x + 1);
        }
        array.values.push(value);
    }
    for array in &arrays {
        let expected: usize = array.dims.iter().product();
        if expected != array.values.len() {
            return Err(err(0, format!("array {} is not dense", array.name)));
        }
    }
    Ok(arrays)
}
