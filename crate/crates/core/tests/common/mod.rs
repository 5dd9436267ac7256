//! Independent reference implementations used as oracles by the integration
//! tests. Nothing here calls into the library's numerical code.

#![allow(dead_code)]

pub const H: usize = 32;

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

/// `v = (I − γ P^π)⁻¹ R^π` from raw `p[s][a][s']`, `r[s][a]`, `pi[s][a]`.
pub fn linear_solve_values(ns: usize, na: usize, p: &[f64], r: &[f64], pi: &[f64], gamma: f64) -> Vec<f64> {
    let mut a = vec![vec![0.0; ns]; ns];
    let mut b = vec![0.0; ns];
    for s in 0..ns {
        a[s][s] += 1.0;
        for act in 0..na {
            let w = pi[s * na + act];
            b[s] += w * r[s * na + act];
            for t in 0..ns {
                a[s][t] -= gamma * w * p[(s * na + act) * ns + t];
            }
        }
    }
    solve(a, b)
}

/// One dense layer `x · W + b` with `W` stored row-major as `n_in × n_out`.
struct Dense<'a> {
    w: &'a [f64],
    b: &'a [f64],
    n_out: usize,
}

impl Dense<'_> {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.b.to_vec();
        for (xi, row) in x.iter().zip(self.w.chunks_exact(self.n_out)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        out
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Views a flat parameter vector laid out as ω, φ, θ_r, θ_p, each weight
/// matrix followed by its bias.
pub struct FlatNet<'a> {
    layers: Vec<Dense<'a>>,
}

/// `(n_in, n_out)` of every dense layer in flat order.
const SHAPES: [(usize, usize); 10] = [
    (1, H),
    (H, H),
    (H, H),
    (H, 1),
    (H, H),
    (H, 1),
    (H, H),
    (H, H),
    (H, H),
    (H, H),
];

pub fn flat_len() -> usize {
    SHAPES.iter().map(|(i, o)| i * o + o).sum()
}

impl<'a> FlatNet<'a> {
    pub fn new(flat: &'a [f64]) -> Self {
        assert_eq!(flat.len(), flat_len());
        let mut layers = Vec::new();
        let mut at = 0;
        for (n_in, n_out) in SHAPES {
            let w = &flat[at..at + n_in * n_out];
            at += n_in * n_out;
            let b = &flat[at..at + n_out];
            at += n_out;
            layers.push(Dense { w, b, n_out });
        }
        Self { layers }
    }

    fn mlp(&self, first: usize, x: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = self.layers[first].apply(x).into_iter().map(elu).collect();
        self.layers[first + 1].apply(&hidden)
    }

    pub fn encode(&self, s: f64) -> Vec<f64> {
        self.mlp(0, &[s]).into_iter().map(f64::tanh).collect()
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.mlp(2, z)[0]
    }

    pub fn reward(&self, z: &[f64]) -> f64 {
        self.mlp(4, z)[0]
    }

    /// Gated cell with zero memory: `h = σ(o) · tanh(σ(i) · tanh(g))`.
    pub fn step(&self, z: &[f64]) -> Vec<f64> {
        let i = self.layers[6].apply(z);
        let g = self.layers[8].apply(z);
        let o = self.layers[9].apply(z);
        (0..H)
            .map(|j| sigmoid(o[j]) * (sigmoid(i[j]) * g[j].tanh()).tanh())
            .collect()
    }

    pub fn latents(&self, s: f64, k_max: usize) -> Vec<Vec<f64>> {
        let mut zs = vec![self.encode(s)];
        for _ in 0..k_max {
            let next = self.step(zs.last().unwrap());
            zs.push(next);
        }
        zs
    }

    /// `v^k = Σ_{j=1}^{k} γ^{j−1} r(z^j) + γ^k v(z^k)` for `k = 0..=k_max`.
    pub fn kmpvs_from_latents(&self, zs: &[Vec<f64>], gamma: f64) -> Vec<f64> {
        let values: Vec<f64> = zs.iter().map(|z| self.value(z)).collect();
        let rewards: Vec<f64> = zs.iter().skip(1).map(|z| self.reward(z)).collect();
        compose(&values, &rewards, gamma)
    }

    pub fn kmpvs(&self, s: f64, k_max: usize, gamma: f64) -> Vec<f64> {
        self.kmpvs_from_latents(&self.latents(s, k_max), gamma)
    }
}

/// Combines per-latent head outputs into k-MPVs; `rewards[j − 1] = r(z^j)`.
fn compose(values: &[f64], rewards: &[f64], gamma: f64) -> Vec<f64> {
    (0..values.len())
        .map(|k| {
            let paid: f64 = (1..=k).map(|j| gamma.powi(j as i32 - 1) * rewards[j - 1]).sum();
            paid + gamma.powi(k as i32) * values[k]
        })
        .collect()
}

fn squared_error(kmpvs: &[f64], target: f64) -> f64 {
    kmpvs.iter().map(|v| (v - target).powi(2)).sum()
}

/// `Σ_i Σ_{k=0}^{k_max} (v^k(s_i) − target_i)²`.
pub fn loss(flat: &[f64], states: &[f64], targets: &[f64], k_max: usize, gamma: f64) -> f64 {
    let net = FlatNet::new(flat);
    states
        .iter()
        .zip(targets)
        .map(|(&s, &y)| squared_error(&net.kmpvs(s, k_max, gamma), y))
        .sum()
}

/// Flat index ranges of the value head, the reward head and the forget gate.
fn ranges() -> [std::ops::Range<usize>; 3] {
    let sizes: Vec<usize> = SHAPES.iter().map(|(i, o)| i * o + o).collect();
    let start = |layer: usize| sizes[..layer].iter().sum::<usize>();
    [start(2)..start(4), start(4)..start(6), start(7)..start(8)]
}

/// Central finite differences of [`loss`] for every parameter.
///
/// Head parameters only change one head's outputs, so their differences are
/// taken with the latents and the other head held at their cached values.
/// The oracle's cell never reads the forget gate (it multiplies a zero
/// memory), so those entries are exactly zero.
pub fn fd_gradient(flat: &[f64], states: &[f64], targets: &[f64], k_max: usize, gamma: f64, step: f64) -> Vec<f64> {
    let net = FlatNet::new(flat);
    let latents: Vec<Vec<Vec<f64>>> = states.iter().map(|&s| net.latents(s, k_max)).collect();
    let values: Vec<Vec<f64>> = latents.iter().map(|zs| zs.iter().map(|z| net.value(z)).collect()).collect();
    let rewards: Vec<Vec<f64>> = latents
        .iter()
        .map(|zs| zs.iter().skip(1).map(|z| net.reward(z)).collect())
        .collect();
    let [value_head, reward_head, forget] = ranges();

    let mut work = flat.to_vec();
    (0..flat.len())
        .map(|i| {
            if forget.contains(&i) {
                return 0.0;
            }
            let f = |w: &[f64]| -> f64 {
                let net = FlatNet::new(w);
                (0..states.len())
                    .map(|p| {
                        let kmpvs = if value_head.contains(&i) {
                            let v: Vec<f64> = latents[p].iter().map(|z| net.value(z)).collect();
                            compose(&v, &rewards[p], gamma)
                        } else if reward_head.contains(&i) {
                            let r: Vec<f64> = latents[p].iter().skip(1).map(|z| net.reward(z)).collect();
                            compose(&values[p], &r, gamma)
                        } else {
                            net.kmpvs(states[p], k_max, gamma)
                        };
                        squared_error(&kmpvs, targets[p])
                    })
                    .sum()
            };
            let x = work[i];
            work[i] = x + step;
            let up = f(&work);
            work[i] = x - step;
            let down = f(&work);
            work[i] = x;
            (up - down) / (2.0 * step)
        })
        .collect()
}
