//! The 1-D didactic problem: a representation network, value and reward
//! heads, and a gated transition cell, composed into k-step model-predicted
//! values and trained jointly on the squared value error for every k.

use std::io::{BufRead, Write};
use std::path::Path;

use log::info;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tape::{elu, sigmoid, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::ive::population_stats;
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::rng::{self, stream};

/// Width of every hidden layer and of the latent state.
pub const HIDDEN: usize = 32;

/// Inputs are restricted to this interval.
pub const STATE_BOUND: f64 = 3.0;

/// One hidden layer with ELU; the output layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// A single step of a gated recurrent cell applied to the latent with zero
/// memory. Recurrent weights would only multiply the zero hidden state, so
/// they are not represented; the forget gate is kept and acts on the zero
/// memory cell, which leaves its gradient identically zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedCell {
    pub w_input: Tensor,
    pub b_input: Tensor,
    pub w_forget: Tensor,
    pub b_forget: Tensor,
    pub w_cand: Tensor,
    pub b_cand: Tensor,
    pub w_output: Tensor,
    pub b_output: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DidacticParams {
    /// Representation: `s ↦ tanh(W2 · elu(W1 s + b1) + b2)`.
    pub omega: Mlp,
    /// Value head on the latent.
    pub phi: Mlp,
    /// Reward head on the latent.
    pub theta_r: Mlp,
    /// Latent transition.
    pub theta_p: GatedCell,
}

fn gaussian_tensor<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let scale = 1.0 / (rows as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    Tensor::new(rows, cols, data).expect("shape matches")
}

impl Mlp {
    fn init<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        Self {
            w1: gaussian_tensor(n_in, HIDDEN, rng),
            b1: Tensor::zeros(1, HIDDEN),
            w2: gaussian_tensor(HIDDEN, n_out, rng),
            b2: Tensor::zeros(1, n_out),
        }
    }

    fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Forward pass on one input vector, without recording.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = affine(x, &self.w1, &self.b1).into_iter().map(elu).collect();
        affine(&hidden, &self.w2, &self.b2)
    }
}

impl GatedCell {
    fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut layer = || (gaussian_tensor(HIDDEN, HIDDEN, rng), Tensor::zeros(1, HIDDEN));
        let (w_input, b_input) = layer();
        let (w_forget, b_forget) = layer();
        let (w_cand, b_cand) = layer();
        let (w_output, b_output) = layer();
        Self {
            w_input,
            b_input,
            w_forget,
            b_forget,
            w_cand,
            b_cand,
            w_output,
            b_output,
        }
    }

    fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.w_input,
            &self.b_input,
            &self.w_forget,
            &self.b_forget,
            &self.w_cand,
            &self.b_cand,
            &self.w_output,
            &self.b_output,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.w_input,
            &mut self.b_input,
            &mut self.w_forget,
            &mut self.b_forget,
            &mut self.w_cand,
            &mut self.b_cand,
            &mut self.w_output,
            &mut self.b_output,
        ]
    }

    /// One transition of a latent, without recording.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let gate = |w, b| affine(z, w, b);
        let i = gate(&self.w_input, &self.b_input);
        let f = gate(&self.w_forget, &self.b_forget);
        let g = gate(&self.w_cand, &self.b_cand);
        let o = gate(&self.w_output, &self.b_output);
        (0..HIDDEN)
            .map(|j| {
                let cell = sigmoid(f[j]) * 0.0 + sigmoid(i[j]) * g[j].tanh();
                sigmoid(o[j]) * cell.tanh()
            })
            .collect()
    }
}

/// `x · W + b` for a single row `x`.
fn affine(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    let mut out = b.data().to_vec();
    for (i, &xi) in x.iter().enumerate() {
        let row = &w.data()[i * w.cols()..(i + 1) * w.cols()];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
    out
}

impl DidacticParams {
    /// Fan-in-scaled Gaussian weights and zero biases, drawn in a fixed order.
    pub fn init(seed: u64) -> Self {
        let mut rng = rng::seeded(seed, stream::INIT);
        let omega = Mlp::init(1, HIDDEN, &mut rng);
        let phi = Mlp::init(HIDDEN, 1, &mut rng);
        let theta_r = Mlp::init(HIDDEN, 1, &mut rng);
        let theta_p = GatedCell::init(&mut rng);
        Self {
            omega,
            phi,
            theta_r,
            theta_p,
        }
    }

    /// Parameter tensors in the canonical order: ω, φ, θ_r, θ_p.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = Vec::with_capacity(20);
        out.extend(self.omega.tensors());
        out.extend(self.phi.tensors());
        out.extend(self.theta_r.tensors());
        out.extend(self.theta_p.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::with_capacity(20);
        out.extend(self.omega.tensors_mut());
        out.extend(self.phi.tensors_mut());
        out.extend(self.theta_r.tensors_mut());
        out.extend(self.theta_p.tensors_mut());
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        Error::check_dim("flat parameters", self.n_params(), flat.len())?;
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data().iter().all(|x| x.is_finite()))
    }

    /// The latent `ĥ_ω(s)`.
    pub fn encode(&self, s: f64) -> Vec<f64> {
        self.omega.apply(&[s]).into_iter().map(f64::tanh).collect()
    }

    /// `[z⁰, z¹, …, z^k]`, each latent one cell application after the last.
    pub fn latents(&self, s: f64, k: usize) -> Vec<Vec<f64>> {
        let mut zs = vec![self.encode(s)];
        for j in 0..k {
            let next = self.theta_p.apply(&zs[j]);
            zs.push(next);
        }
        zs
    }

    /// `[v⁰(s), …, v^{k_max}(s)]` without recording a graph.
    pub fn kmpvs(&self, s: f64, k_max: usize, gamma: f64) -> Vec<f64> {
        let zs = self.latents(s, k_max);
        let mut out = Vec::with_capacity(k_max + 1);
        let mut rewards = 0.0;
        let mut discount = 1.0;
        for (k, z) in zs.iter().enumerate() {
            if k > 0 {
                rewards += discount * self.theta_r.apply(z)[0];
                discount *= gamma;
            }
            out.push(rewards + discount * self.phi.apply(z)[0]);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DidacticConfig {
    pub gamma: f64,
    pub n_points: usize,
    pub k_max: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for DidacticConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            n_points: 10,
            k_max: 10,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            steps: 5000,
            seed: 0,
        }
    }
}

impl DidacticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must be in [0, 1), got {}", self.gamma)));
        }
        if self.k_max == 0 {
            return Err(Error::invalid("k_max must be at least 1"));
        }
        if self.n_points == 0 {
            return Err(Error::invalid("n_points must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::invalid("weight decay must be non-negative"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Training pairs `(s_i, v̄_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub states: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(states: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        Error::check_dim("dataset targets", states.len(), targets.len())?;
        if states.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        if let Some(s) = states.iter().find(|s| !(s.abs() <= STATE_BOUND)) {
            return Err(Error::invalid(format!("state {s} outside [-3, 3]")));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("targets must be finite"));
        }
        Ok(Self { states, targets })
    }

    /// `v̄ = sin(2s)` at `n` evenly spaced states in `[−2, 2]`.
    pub fn sine(n: usize) -> Result<Self> {
        let states = linspace(-2.0, 2.0, n);
        let targets = states.iter().map(|s| (2.0 * s).sin()).collect();
        Self::new(states, targets)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `s,target` rows.
    pub fn read_csv<R: BufRead>(input: R, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut states = Vec::new();
        let mut targets = Vec::new();
        let mut header_seen = false;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !header_seen {
                if trimmed != "s,target" {
                    return Err(parse_err(i + 1, format!("expected header `s,target`, found `{trimmed}`")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 2 {
                return Err(parse_err(i + 1, "expected two fields".into()));
            }
            let num = |f: &str| f.trim().parse::<f64>().map_err(|e| parse_err(i + 1, e.to_string()));
            states.push(num(fields[0])?);
            targets.push(num(fields[1])?);
        }
        Self::new(states, targets)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "s,target")?;
        for (s, t) in self.states.iter().zip(&self.targets) {
            writeln!(out, "{s},{t}")?;
        }
        Ok(())
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `v^k(s)` for one state.
pub fn forward_kmpv(params: &DidacticParams, s: f64, k: usize, config: &DidacticConfig) -> Result<f64> {
    if k > config.k_max {
        return Err(Error::invalid(format!("k = {k} exceeds k_max = {}", config.k_max)));
    }
    Ok(params.kmpvs(s, k, config.gamma)[k])
}

/// Parameter leaves on a tape, mirroring [`DidacticParams::tensors`].
pub struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    pub fn record(tape: &mut Tape, params: &DidacticParams) -> Self {
        Self {
            vars: params.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn mlp(&self, offset: usize) -> [Var; 4] {
        [self.vars[offset], self.vars[offset + 1], self.vars[offset + 2], self.vars[offset + 3]]
    }

    /// Gradients collected after `tape.backward`, shaped like the parameters.
    pub fn gradients(&self, tape: &Tape, like: &DidacticParams) -> DidacticParams {
        let mut out = like.clone();
        for (t, v) in out.tensors_mut().into_iter().zip(&self.vars) {
            *t = tape.grad(*v).clone();
        }
        out
    }
}

const OMEGA: usize = 0;
const PHI: usize = 4;
const THETA_R: usize = 8;
const THETA_P: usize = 12;

fn record_mlp(tape: &mut Tape, p: [Var; 4], x: Var) -> Var {
    let h = tape.matmul(x, p[0]);
    let h = tape.add_row(h, p[1]);
    let h = tape.elu(h);
    let y = tape.matmul(h, p[2]);
    tape.add_row(y, p[3])
}

fn record_cell(tape: &mut Tape, vars: &ParamVars, z: Var, zero_memory: Var) -> Var {
    let v = &vars.vars[THETA_P..THETA_P + 8];
    let mut gate = |w: Var, b: Var| {
        let a = tape.matmul(z, w);
        tape.add_row(a, b)
    };
    let (i, f, g, o) = (gate(v[0], v[1]), gate(v[2], v[3]), gate(v[4], v[5]), gate(v[6], v[7]));
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let kept = tape.mul(f, zero_memory);
    let written = tape.mul(i, g);
    let cell = tape.add(kept, written);
    let cell = tape.tanh(cell);
    tape.mul(o, cell)
}

/// Records `v⁰ … v^{k_max}` for a batch of states; each output is `N × 1`.
/// The `k = 0` prediction touches only ω and φ.
pub fn record_kmpvs(tape: &mut Tape, vars: &ParamVars, states: &[f64], k_max: usize, gamma: f64) -> Vec<Var> {
    let x = tape.leaf(Tensor::column(states));
    let z = record_mlp(tape, vars.mlp(OMEGA), x);
    let mut z = tape.tanh(z);
    let mut preds = vec![record_mlp(tape, vars.mlp(PHI), z)];
    if k_max == 0 {
        return preds;
    }
    let zero_memory = tape.leaf(Tensor::zeros(states.len(), HIDDEN));
    let mut rewards: Option<Var> = None;
    let mut discount = 1.0;
    for _ in 0..k_max {
        z = record_cell(tape, vars, z, zero_memory);
        let r = record_mlp(tape, vars.mlp(THETA_R), z);
        let r = tape.scale(r, discount);
        let acc = match rewards {
            Some(acc) => tape.add(acc, r),
            None => r,
        };
        rewards = Some(acc);
        discount *= gamma;
        let v = record_mlp(tape, vars.mlp(PHI), z);
        let v = tape.scale(v, discount);
        preds.push(tape.add(acc, v));
    }
    preds
}

/// `Σ_i Σ_{k=0}^{k_max} (v^k(s_i) − v̄_i)²` on a fresh tape.
pub fn record_loss(tape: &mut Tape, vars: &ParamVars, data: &Dataset, k_max: usize, gamma: f64) -> Var {
    let preds = record_kmpvs(tape, vars, &data.states, k_max, gamma);
    let targets = tape.leaf(Tensor::column(&data.targets));
    let mut total: Option<Var> = None;
    for p in preds {
        let err = tape.sub(p, targets);
        let sq = tape.sum_squares(err);
        total = Some(match total {
            Some(t) => tape.add(t, sq),
            None => sq,
        });
    }
    total.expect("at least the k = 0 term")
}

/// The training loss and its gradient with respect to every parameter.
pub fn loss_and_gradient(
    params: &DidacticParams,
    data: &Dataset,
    k_max: usize,
    gamma: f64,
) -> Result<(f64, DidacticParams)> {
    let mut tape = Tape::new();
    let vars = ParamVars::record(&mut tape, params);
    let loss = record_loss(&mut tape, &vars, data, k_max, gamma);
    tape.backward(loss)?;
    Ok((tape.value(loss).data()[0], vars.gradients(&tape, params)))
}

/// Mean squared error over the dataset, per k.
pub fn per_k_mse(params: &DidacticParams, data: &Dataset, k_max: usize, gamma: f64) -> Vec<f64> {
    let mut sums = vec![0.0; k_max + 1];
    for (&s, &t) in data.states.iter().zip(&data.targets) {
        for (acc, v) in sums.iter_mut().zip(params.kmpvs(s, k_max, gamma)) {
            *acc += (v - t) * (v - t);
        }
    }
    sums.iter().map(|x| x / data.len() as f64).collect()
}

/// Full-batch Adam with decoupled weight decay from the seeded initialization.
pub fn train_didactic(data: &Dataset, config: &DidacticConfig) -> Result<DidacticParams> {
    train_didactic_from(DidacticParams::init(config.seed), data, config)
}

pub fn train_didactic_from(
    mut params: DidacticParams,
    data: &Dataset,
    config: &DidacticConfig,
) -> Result<DidacticParams> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let adam = config.adam();
    let mut flat = params.to_flat();
    let mut state = AdamState::new(flat.len());
    for step in 0..config.steps {
        let (loss, grads) = loss_and_gradient(&params, data, config.k_max, config.gamma)?;
        if !loss.is_finite() {
            return Err(Error::invalid(format!("training loss diverged at step {step}")));
        }
        if step % 1000 == 0 {
            info!("didactic step {step}: loss {loss:.6}");
        }
        adam_step(&mut flat, &grads.to_flat(), &mut state, &adam)?;
        params.set_flat(&flat)?;
    }
    Ok(params)
}

/// k-MPVs over a probe grid with per-probe ensemble statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct IveCurve {
    pub probes: Vec<f64>,
    /// `[probe][k]` for `k = 0..=n`.
    pub values: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl IveCurve {
    /// `s,k,value` rows.
    pub fn write_members_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "s,k,value")?;
        for (s, row) in self.probes.iter().zip(&self.values) {
            for (k, v) in row.iter().enumerate() {
                writeln!(out, "{s},{k},{v}")?;
            }
        }
        Ok(())
    }

    /// `s,mu,sigma` rows.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "s,mu,sigma")?;
        for ((s, m), sd) in self.probes.iter().zip(&self.mean).zip(&self.std) {
            writeln!(out, "{s},{m},{sd}")?;
        }
        Ok(())
    }

    /// Mean σ over probes selected by `keep`.
    pub fn mean_std_where(&self, keep: impl Fn(f64) -> bool) -> f64 {
        let picked: Vec<f64> = self
            .probes
            .iter()
            .zip(&self.std)
            .filter(|(s, _)| keep(**s))
            .map(|(_, sd)| *sd)
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    }
}

pub fn ive_curve(params: &DidacticParams, probes: &[f64], n: usize, gamma: f64) -> IveCurve {
    let values: Vec<Vec<f64>> = probes.iter().map(|&s| params.kmpvs(s, n, gamma)).collect();
    let (mean, std) = values.iter().map(|row| population_stats(row)).unzip();
    IveCurve {
        probes: probes.to_vec(),
        values,
        mean,
        std,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_data() -> Dataset {
        Dataset::new(vec![-1.0, 0.5], vec![0.3, -0.2]).unwrap()
    }

    #[test]
    fn parameter_count_and_flat_round_trip() {
        let p = DidacticParams::init(0);
        // ω: 1·32 + 32 + 32·32 + 32; φ, θ_r: 32·32 + 32 + 32 + 1; cell: 4 (32·32 + 32)
        assert_eq!(p.n_params(), 1120 + 2 * 1089 + 4 * 1056);
        let mut q = DidacticParams::init(1);
        q.set_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[0.0]).is_err());
    }

    #[test]
    fn k_zero_is_value_of_encoding() {
        let p = DidacticParams::init(3);
        let cfg = DidacticConfig::default();
        let want = p.phi.apply(&p.encode(0.7))[0];
        assert_eq!(forward_kmpv(&p, 0.7, 0, &cfg).unwrap(), want);
        assert!(forward_kmpv(&p, 0.7, 11, &cfg).is_err());
    }

    #[test]
    fn k_two_matches_hand_composition() {
        let p = DidacticParams::init(4);
        let g = 0.9;
        let z0 = p.encode(-1.2);
        let z1 = p.theta_p.apply(&z0);
        let z2 = p.theta_p.apply(&z1);
        let want = p.theta_r.apply(&z1)[0] + g * p.theta_r.apply(&z2)[0] + g * g * p.phi.apply(&z2)[0];
        let cfg = DidacticConfig::default();
        assert!((forward_kmpv(&p, -1.2, 2, &cfg).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn latents_stay_in_unit_box() {
        let p = DidacticParams::init(5);
        for s in [-3.0, -0.1, 2.9] {
            for z in p.latents(s, 25) {
                assert!(z.iter().all(|x| x.abs() <= 1.0));
            }
        }
    }

    #[test]
    fn tape_forward_matches_plain_forward() {
        let p = DidacticParams::init(6);
        let states = [-2.5, 0.0, 1.7];
        let mut tape = Tape::new();
        let vars = ParamVars::record(&mut tape, &p);
        let preds = record_kmpvs(&mut tape, &vars, &states, 4, 0.9);
        for (i, &s) in states.iter().enumerate() {
            let plain = p.kmpvs(s, 4, 0.9);
            for k in 0..=4 {
                assert!((tape.value(preds[k]).data()[i] - plain[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn k_zero_loss_ignores_model_parameters() {
        let p = DidacticParams::init(7);
        let (_, g) = loss_and_gradient(&p, &small_data(), 0, 0.9).unwrap();
        for t in g.theta_r.tensors().into_iter().chain(g.theta_p.tensors()) {
            assert!(t.data().iter().all(|&x| x == 0.0));
        }
        assert!(g.phi.w2.data().iter().any(|&x| x != 0.0));
    }

    #[test]
    fn forget_gate_gradient_is_zero() {
        let p = DidacticParams::init(8);
        let (_, g) = loss_and_gradient(&p, &small_data(), 3, 0.9).unwrap();
        assert!(g.theta_p.w_forget.data().iter().all(|&x| x == 0.0));
        assert!(g.theta_p.w_input.data().iter().any(|&x| x != 0.0));
    }

    #[test]
    fn zero_steps_returns_init() {
        let cfg = DidacticConfig {
            steps: 0,
            ..DidacticConfig::default()
        };
        assert_eq!(train_didactic(&small_data(), &cfg).unwrap(), DidacticParams::init(0));
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let cfg = DidacticConfig {
            steps: 30,
            ..DidacticConfig::default()
        };
        let data = small_data();
        let a = train_didactic(&data, &cfg).unwrap();
        let b = train_didactic(&data, &cfg).unwrap();
        assert_eq!(a, b);
        let before = loss_and_gradient(&DidacticParams::init(0), &data, 10, 0.9).unwrap().0;
        let after = loss_and_gradient(&a, &data, 10, 0.9).unwrap().0;
        assert!(after < before);
    }

    #[test]
    fn dataset_validation_and_csv() {
        assert!(Dataset::new(vec![], vec![]).is_err());
        assert!(Dataset::new(vec![3.5], vec![0.0]).is_err());
        let d = Dataset::sine(10).unwrap();
        assert_eq!(d.states[0], -2.0);
        assert_eq!(d.states[9], 2.0);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, d);
        assert!(Dataset::read_csv(&b"x,y\n1,2\n"[..], Path::new("mem")).is_err());
    }

    #[test]
    fn curve_statistics() {
        let p = DidacticParams::init(9);
        let probes = linspace(-3.0, 3.0, 7);
        let c = ive_curve(&p, &probes, 10, 0.9);
        assert_eq!(c.values.len(), 7);
        assert!(c.values.iter().all(|r| r.len() == 11));
        assert!(c.std.iter().all(|&s| s >= 0.0));
        let mut out = Vec::new();
        c.write_summary_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("s,mu,sigma\n-3,"));
    }
}
