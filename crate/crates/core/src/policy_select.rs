//! Acting on ensemble disagreement, and μ-IVE as a planning value estimate.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ive::{ive_opt_exact, EnsembleStats, IveReport};
use crate::mdp::{value_iteration, PolicyTable, StateValues, TabularMdp};
use crate::rng::{self, stream};
use crate::tabular_learn::softmax_into;

/// Per-(s, a) ensemble standard deviations.
#[derive(Clone, Debug, PartialEq)]
pub struct DisagreementTable {
    n_states: usize,
    n_actions: usize,
    sigma: Vec<f64>,
}

impl DisagreementTable {
    pub fn new(n_states: usize, n_actions: usize, sigma: Vec<f64>) -> Result<Self> {
        Error::check_dim("disagreement table", n_states * n_actions, sigma.len())?;
        if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::invalid("disagreement entries must be finite and non-negative"));
        }
        Ok(Self {
            n_states,
            n_actions,
            sigma,
        })
    }

    /// σ of an action-conditioned IVE report.
    pub fn from_report(report: &IveReport) -> Result<Self> {
        let na = report
            .n_actions()
            .ok_or_else(|| Error::invalid("report is not action-conditioned"))?;
        Self::new(report.n_states(), na, report.std().to_vec())
    }

    /// σ of an explicit ensemble of action-values.
    pub fn from_eve(stats: &EnsembleStats, n_states: usize, n_actions: usize) -> Result<Self> {
        Self::new(n_states, n_actions, stats.std.clone())
    }

    pub fn sigma(&self, s: usize, a: usize) -> f64 {
        self.sigma[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.sigma[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

/// Index of the first extreme entry under `better`.
fn pick(row: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (a, &x) in row.iter().enumerate().skip(1) {
        if better(x, row[best]) {
            best = a;
        }
    }
    best
}

fn one_hot_policy(table: &DisagreementTable, better: impl Fn(f64, f64) -> bool + Copy) -> PolicyTable {
    let actions: Vec<usize> = (0..table.n_states).map(|s| pick(table.row(s), better)).collect();
    PolicyTable::deterministic(&actions, table.n_actions).expect("actions in range")
}

/// `argmax_a σ[s, a]` per state, ties to the lowest action index.
pub fn seeking_policy(table: &DisagreementTable) -> PolicyTable {
    one_hot_policy(table, |x, best| x > best)
}

/// `argmin_a σ[s, a]` per state, ties to the lowest action index.
pub fn averse_policy(table: &DisagreementTable) -> PolicyTable {
    one_hot_policy(table, |x, best| x < best)
}

/// μ-IVE(n) under the optimality operator.
pub fn mu_ive_value_estimate(model_mdp: &TabularMdp, v: &[f64], n: usize) -> Result<StateValues> {
    let report = ive_opt_exact(model_mdp, v, n)?;
    StateValues::new(report.mean().to_vec())
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Absolute errors of one estimator in one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorErrors {
    pub estimator: String,
    pub abs_err: Vec<f64>,
}

impl EstimatorErrors {
    pub fn mean(&self) -> f64 {
        mean(&self.abs_err)
    }

    pub fn median(&self) -> f64 {
        median(&self.abs_err)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    /// `k0 ..= kn`, then `mu_ive`.
    pub estimators: Vec<EstimatorErrors>,
    /// States where `|μ − v*| > max_k |v^k − v*|`.
    pub hull_violations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub mean_abs_err: f64,
    pub median_abs_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudySummary {
    pub horizon: usize,
    pub perturbation_scale: f64,
    pub trials: Vec<TrialResult>,
    /// Errors pooled over every trial and state.
    pub overall: Vec<EstimatorSummary>,
}

impl StudySummary {
    pub fn overall_for(&self, estimator: &str) -> Option<&EstimatorSummary> {
        self.overall.iter().find(|e| e.estimator == estimator)
    }

    pub fn hull_violations(&self) -> usize {
        self.trials.iter().map(|t| t.hull_violations).sum()
    }

    /// Whether the pooled median error of μ-IVE(n) is at most that of both
    /// the one-step and the n-step estimator.
    pub fn mu_median_beats_fixed_k(&self) -> bool {
        let get = |name: &str| self.overall_for(name).map(|e| e.median_abs_err);
        match (get("mu_ive"), get("k1"), get(&format!("k{}", self.horizon))) {
            (Some(mu), Some(k1), Some(kn)) => mu <= k1 && mu <= kn,
            _ => false,
        }
    }

    /// `trial,estimator,mean_abs_err,median_abs_err`; pooled rows use trial `all`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "trial,estimator,mean_abs_err,median_abs_err")?;
        for t in &self.trials {
            for e in &t.estimators {
                writeln!(out, "{},{},{},{}", t.trial, e.estimator, e.mean(), e.median())?;
            }
        }
        for e in &self.overall {
            writeln!(out, "all,{},{},{}", e.estimator, e.mean_abs_err, e.median_abs_err)?;
        }
        Ok(())
    }
}

/// Solver tolerance for `v*` inside the study.
const STUDY_TOL: f64 = 1e-12;

/// Perturbs the true model (Gaussian noise on transition logits and rewards)
/// and `v*`, then scores each fixed-k optimality k-MPV and μ-IVE(n) against
/// `v*`.
pub fn planning_robustness_study(
    true_mdp: &TabularMdp,
    perturbation_scale: f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<StudySummary> {
    if !(perturbation_scale >= 0.0) || !perturbation_scale.is_finite() {
        return Err(Error::invalid("perturbation scale must be finite and non-negative"));
    }
    if trials == 0 {
        return Err(Error::invalid("the study needs at least one trial"));
    }
    if n == 0 {
        return Err(Error::invalid("ensemble horizon n must be at least 1"));
    }
    let v_star = value_iteration(true_mdp, STUDY_TOL)?;
    let (ns, na) = (true_mdp.n_states(), true_mdp.n_actions());
    let true_logits: Vec<f64> = true_mdp.transitions().iter().map(|p| p.ln()).collect();
    let mut rng = rng::seeded(seed, stream::NOISE);
    let mut noise = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                perturbation_scale * z
            })
            .collect()
    };

    let mut results = Vec::with_capacity(trials);
    for trial in 0..trials {
        let logit_noise = noise(true_logits.len());
        let reward_noise = noise(ns * na);
        let value_noise = noise(ns);
        let model = if perturbation_scale == 0.0 {
            true_mdp.clone()
        } else {
            let noisy: Vec<f64> = true_logits.iter().zip(&logit_noise).map(|(l, e)| l + e).collect();
            let mut transition = vec![0.0; noisy.len()];
            for (out, row) in transition.chunks_mut(ns).zip(noisy.chunks(ns)) {
                softmax_into(row, out);
            }
            let reward = true_mdp.rewards().iter().zip(&reward_noise).map(|(r, e)| r + e).collect();
            TabularMdp::new(ns, na, transition, reward, true_mdp.gamma())?
        };
        let v_hat: Vec<f64> = v_star.iter().zip(&value_noise).map(|(v, e)| v + e).collect();
        let report = ive_opt_exact(&model, &v_hat, n)?;

        let mut estimators: Vec<EstimatorErrors> = (0..=n)
            .map(|k| EstimatorErrors {
                estimator: format!("k{k}"),
                abs_err: report.column(k).iter().zip(v_star.iter()).map(|(x, v)| (x - v).abs()).collect(),
            })
            .collect();
        let mu_err: Vec<f64> = report.mean().iter().zip(v_star.iter()).map(|(x, v)| (x - v).abs()).collect();
        let hull_violations = (0..ns)
            .filter(|&s| {
                let worst = estimators.iter().map(|e| e.abs_err[s]).fold(0.0, f64::max);
                mu_err[s] > worst
            })
            .count();
        estimators.push(EstimatorErrors {
            estimator: "mu_ive".into(),
            abs_err: mu_err,
        });
        results.push(TrialResult {
            trial,
            estimators,
            hull_violations,
        });
    }

    let overall = (0..=n + 1)
        .map(|i| {
            let pooled: Vec<f64> = results
                .iter()
                .flat_map(|t| t.estimators[i].abs_err.iter().copied())
                .collect();
            EstimatorSummary {
                estimator: results[0].estimators[i].estimator.clone(),
                mean_abs_err: mean(&pooled),
                median_abs_err: median(&pooled),
            }
        })
        .collect();

    Ok(StudySummary {
        horizon: n,
        perturbation_scale,
        trials: results,
        overall,
    })
}
