//! End-to-end experiment legs as pure functions of a config and a seed.
//! The commands serialize these results; the tests inspect them directly.

use std::fs::File;
use std::io::BufReader;

use log::debug;

use super::config::RunConfig;
use crate::env::{build_gridworld, exclude_cell, rollout, ExperienceBuffer, GridworldSpec};
use crate::error::{Error, Result};
use crate::funcapprox::{ive_curve, linspace, per_k_mse, train_didactic, Dataset, DidacticParams, IveCurve};
use crate::ive::{
    combine, emve_stats, eve_state_stats, eve_stats, ive_exact, ive_exact_q, EnsembleStats, SignalCombiner,
};
use crate::mdp::{induce_state_values, ActionValues, occupancy_curve, policy_transition_kernel, PolicyTable, StateValues, TabularMdp};
use crate::policy_select::{averse_policy, planning_robustness_study, seeking_policy, DisagreementTable, StudySummary};
use crate::rng::{self, mix_seed, stream};
use crate::tabular_learn::{
    fit_model_mle, fit_q_expected_sarsa, learned_model_to_mdp, train_emve, train_eve, TableShape,
};

/// Component seeds of one experiment leg, derived from the leg seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LegSeeds {
    pub rollout: u64,
    pub train: u64,
    pub eve: u64,
    pub emve: u64,
}

impl LegSeeds {
    pub fn derive(seed: u64) -> Self {
        Self {
            rollout: mix_seed(seed, 1),
            train: mix_seed(seed, 2),
            eve: mix_seed(seed, 3),
            emve: mix_seed(seed, 4),
        }
    }
}

/// The learned value function and model behind one leg.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub seeds: LegSeeds,
    pub buffer: ExperienceBuffer,
    pub q: ActionValues,
    pub v: StateValues,
    pub model_mdp: TabularMdp,
}

impl Artifacts {
    /// States appearing in the training data, as source or successor.
    pub fn visited(&self, n_states: usize) -> Vec<bool> {
        let mut seen = vec![false; n_states];
        for t in &self.buffer.transitions {
            seen[t.s] = true;
            seen[t.s_next] = true;
        }
        seen
    }
}

fn shape(spec: &GridworldSpec) -> TableShape {
    TableShape::new(spec.n_states(), crate::env::N_ACTIONS)
}

fn uniform(spec: &GridworldSpec) -> PolicyTable {
    PolicyTable::uniform(spec.n_states(), crate::env::N_ACTIONS)
}

/// Uniform rollout, exclusion of the configured cell, expected SARSA for the
/// uniform policy, and a maximum-likelihood model.
pub fn train_artifacts(cfg: &RunConfig, true_mdp: &TabularMdp, seed: u64) -> Result<Artifacts> {
    let seeds = LegSeeds::derive(seed);
    let spec = &cfg.grid;
    let pi = uniform(spec);
    let raw = rollout(true_mdp, spec, &pi, "uniform", cfg.rollout_steps, cfg.start(), seeds.rollout)?;
    let buffer = match spec.excluded_state() {
        Some(cell) => exclude_cell(&raw, cell),
        None => raw,
    };
    debug!("seed {seed}: {} transitions after exclusion", buffer.len());
    let train = cfg.train.with_seed(seeds.train);
    let q = fit_q_expected_sarsa(&buffer, &pi, shape(spec), spec.gamma, &train)?.value;
    let v = induce_state_values(&q, &pi)?;
    let model = fit_model_mle(&buffer, shape(spec), &train)?.value;
    let model_mdp = learned_model_to_mdp(&model, spec.gamma)?;
    Ok(Artifacts {
        seeds,
        buffer,
        q,
        v,
        model_mdp,
    })
}

/// One per-state uncertainty map.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub name: String,
    pub stats: EnsembleStats,
}

#[derive(Clone, Debug)]
pub struct Fig3Result {
    pub seed: u64,
    pub artifacts: Artifacts,
    pub panels: Vec<Panel>,
    /// `μ + βσ` of the longest implicit ensemble.
    pub combined: Vec<f64>,
}

impl Fig3Result {
    pub fn panel(&self, name: &str) -> Option<&Panel> {
        self.panels.iter().find(|p| p.name == name)
    }
}

/// σ-IVE for every configured horizon, then σ-EVE and σ-EMVE of the
/// configured ensemble size.
pub fn run_fig3(cfg: &RunConfig, seed: u64) -> Result<Fig3Result> {
    let spec = &cfg.grid;
    let true_mdp = build_gridworld(spec)?;
    let artifacts = train_artifacts(cfg, &true_mdp, seed)?;
    let pi = uniform(spec);
    let mut panels = Vec::new();
    let mut longest = None;
    for &n in &cfg.ive_horizons {
        let report = ive_exact(&artifacts.model_mdp, &pi, &artifacts.v, n)?;
        panels.push(Panel {
            name: format!("ive_{n}"),
            stats: EnsembleStats {
                mean: report.mean().to_vec(),
                std: report.std().to_vec(),
            },
        });
        if longest.as_ref().is_none_or(|r: &crate::ive::IveReport| r.horizon() < n) {
            longest = Some(report);
        }
    }
    let combined = combine(&longest.expect("at least one horizon"), SignalCombiner::new(cfg.beta)?);

    let n = cfg.ensemble_size;
    let seeds = artifacts.seeds;
    let eve = train_eve(&artifacts.buffer, &pi, shape(spec), spec.gamma, &cfg.train.with_seed(seeds.eve), n)?;
    panels.push(Panel {
        name: format!("eve_{n}"),
        stats: eve_state_stats(&eve, &pi)?,
    });
    let emve = train_emve(&artifacts.buffer, shape(spec), &cfg.train.with_seed(seeds.emve), n)?;
    panels.push(Panel {
        name: format!("emve_{n}"),
        stats: emve_stats(&emve, &pi, &artifacts.v, spec.gamma)?,
    });
    Ok(Fig3Result {
        seed,
        artifacts,
        panels,
        combined,
    })
}

/// Policies derived from per-(s, a) disagreement.
pub const SELECTION_POLICIES: [&str; 4] = ["ive_seeking", "ive_averse", "eve_seeking", "eve_averse"];

/// Seeking and averse policies from σ-IVE(h)[s, a] and from an explicit
/// value ensemble of `h` members, in [`SELECTION_POLICIES`] order.
pub fn selection_policies(cfg: &RunConfig, artifacts: &Artifacts) -> Result<Vec<(String, PolicyTable)>> {
    let spec = &cfg.grid;
    let pi = uniform(spec);
    let h = cfg.select_horizon;
    let ive = ive_exact_q(&artifacts.model_mdp, &pi, &artifacts.v, h)?;
    let ive_table = DisagreementTable::from_report(&ive)?;
    let train = cfg.train.with_seed(artifacts.seeds.eve);
    let members = train_eve(&artifacts.buffer, &pi, shape(spec), spec.gamma, &train, h.max(2))?;
    let eve_table = DisagreementTable::from_eve(&eve_stats(&members)?, spec.n_states(), crate::env::N_ACTIONS)?;
    let policies = vec![
        seeking_policy(&ive_table),
        averse_policy(&ive_table),
        seeking_policy(&eve_table),
        averse_policy(&eve_table),
    ];
    Ok(SELECTION_POLICIES.iter().map(|s| s.to_string()).zip(policies).collect())
}

/// Occupancy of the target for `l = 1..=L` under a policy coupled with `mdp`.
pub fn occupancy(cfg: &RunConfig, mdp: &TabularMdp, policy: &PolicyTable) -> Result<Vec<f64>> {
    let kernel = policy_transition_kernel(mdp, policy)?;
    occupancy_curve(&kernel, cfg.start(), cfg.target(), cfg.occupancy_horizon)
}

/// Per-seed curves, `(policy, curve)`, uniform first.
pub fn run_fig5_seed(cfg: &RunConfig, seed: u64) -> Result<Vec<(String, Vec<f64>)>> {
    let true_mdp = build_gridworld(&cfg.grid)?;
    let artifacts = train_artifacts(cfg, &true_mdp, seed)?;
    let mut curves = vec![("uniform".to_string(), occupancy(cfg, &true_mdp, &uniform(&cfg.grid))?)];
    for (name, policy) in selection_policies(cfg, &artifacts)? {
        curves.push((name, occupancy(cfg, &true_mdp, &policy)?));
    }
    Ok(curves)
}

/// Averse policies trained under the configured wind and evaluated under
/// both the training and the shifted wind; `(policy, wind, curve)`.
pub fn run_shift_seed(cfg: &RunConfig, seed: u64) -> Result<Vec<(String, f64, Vec<f64>)>> {
    let train_mdp = build_gridworld(&cfg.grid)?;
    let artifacts = train_artifacts(cfg, &train_mdp, seed)?;
    let policies = selection_policies(cfg, &artifacts)?;
    let mut out = Vec::new();
    for wind in shift_winds(cfg) {
        let eval_mdp = build_gridworld(&GridworldSpec {
            wind_prob: wind,
            ..cfg.grid.clone()
        })?;
        out.push(("uniform".to_string(), wind, occupancy(cfg, &eval_mdp, &uniform(&cfg.grid))?));
        for (name, policy) in policies.iter().filter(|(n, _)| n.ends_with("averse")) {
            out.push((name.clone(), wind, occupancy(cfg, &eval_mdp, policy)?));
        }
    }
    Ok(out)
}

/// Training wind first, then the shifted wind.
pub fn shift_winds(cfg: &RunConfig) -> Vec<f64> {
    vec![cfg.grid.wind_prob, cfg.shift_wind_prob]
}

/// Mean and standard error across seeds of curves sharing a key.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveStats {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Pointwise mean and `s / √m` with the sample standard deviation `s`;
/// one curve gives zero standard error.
pub fn curve_stats(curves: &[&Vec<f64>]) -> CurveStats {
    let m = curves.len() as f64;
    let len = curves[0].len();
    let mut mean = vec![0.0; len];
    let mut stderr = vec![0.0; len];
    for l in 0..len {
        let mu = curves.iter().map(|c| c[l]).sum::<f64>() / m;
        mean[l] = mu;
        if curves.len() > 1 {
            let var = curves.iter().map(|c| (c[l] - mu) * (c[l] - mu)).sum::<f64>() / (m - 1.0);
            stderr[l] = (var / m).sqrt();
        }
    }
    CurveStats { mean, stderr }
}

#[derive(Clone, Debug)]
pub struct DidacticRun {
    pub dataset: Dataset,
    pub params: DidacticParams,
    pub before: IveCurve,
    pub after: IveCurve,
    /// Training-set curve after training.
    pub at_data: IveCurve,
    pub mse: Vec<f64>,
}

pub fn didactic_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.dataset {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| Error::Config(format!("cannot open dataset {}: {e}", path.display())))?;
            Dataset::read_csv(BufReader::new(file), path).map_err(|e| Error::Config(e.to_string()))
        }
        None => Dataset::sine(cfg.didactic.n_points),
    }
}

pub fn run_didactic(cfg: &RunConfig, seed: u64) -> Result<DidacticRun> {
    let dataset = didactic_dataset(cfg)?;
    let d = crate::funcapprox::DidacticConfig {
        seed,
        ..cfg.didactic.clone()
    };
    let probes = linspace(-3.0, 3.0, cfg.probe_points);
    let before = ive_curve(&DidacticParams::init(seed), &probes, d.k_max, d.gamma);
    let params = train_didactic(&dataset, &d)?;
    let after = ive_curve(&params, &probes, d.k_max, d.gamma);
    let at_data = ive_curve(&params, &dataset.states, d.k_max, d.gamma);
    let mse = per_k_mse(&params, &dataset, d.k_max, d.gamma);
    Ok(DidacticRun {
        dataset,
        params,
        before,
        after,
        at_data,
        mse,
    })
}

/// Seed of the random MDP and of the perturbation noise for one study leg.
pub fn study_seeds(seed: u64) -> (u64, u64) {
    (mix_seed(seed, 5), mix_seed(seed, 6))
}

pub fn run_plan_study(cfg: &RunConfig, seed: u64) -> Result<StudySummary> {
    let (mdp_seed, noise_seed) = study_seeds(seed);
    let mut rng = rng::seeded(mdp_seed, stream::INIT);
    let mdp = TabularMdp::random(cfg.study_states, cfg.study_actions, cfg.grid.gamma, &mut rng)?;
    planning_robustness_study(&mdp, cfg.perturbation_scale, cfg.study_horizon, cfg.trials, noise_seed)
}
