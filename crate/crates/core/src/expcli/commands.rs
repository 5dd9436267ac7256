//! Commands: run an experiment, write CSVs, graymaps and a manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;

use super::config::RunConfig;
use super::experiments::{
    curve_stats, run_didactic, run_fig3, run_fig5_seed, run_plan_study, run_shift_seed, shift_winds, study_seeds,
    LegSeeds,
};
use super::heatmap::HeatmapImage;
use crate::error::Result;
use crate::rng::RNG_ALGORITHM;

/// Output directory plus the list of files written so far.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Writes `name` through `fill` and records it.
    pub fn write(&mut self, name: &str, fill: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut out = BufWriter::new(File::create(self.root.join(name))?);
        fill(&mut out)?;
        out.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn files(&self) -> Vec<PathBuf> {
        self.written.iter().map(|n| self.root.join(n)).collect()
    }
}

/// `key = value` lines, no timestamps, so re-runs are byte-identical.
pub struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    fn new(command: &str, cfg: &RunConfig, seeds: &[u64], seed_offset: u64) -> Self {
        let mut m = Self { lines: Vec::new() };
        m.add("command", command);
        m.add("rng", RNG_ALGORITHM);
        m.add("seed_offset", seed_offset);
        m.add("seeds", seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
        for (k, v) in cfg.describe() {
            m.add(&format!("config.{k}"), v);
        }
        m
    }

    fn add(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    fn finish(mut self, out: &mut OutputDir) -> Result<()> {
        for name in out.written.clone() {
            self.add("output", name);
        }
        out.write("manifest.txt", |w| {
            for (k, v) in &self.lines {
                writeln!(w, "{k} = {v}")?;
            }
            Ok(())
        })
    }
}

fn offset_seeds(cfg: &RunConfig, default: &[u64], offset: u64) -> Vec<u64> {
    cfg.seeds_or(default).into_iter().map(|s| s.wrapping_add(offset)).collect()
}

fn record_leg(m: &mut Manifest, seed: u64) {
    let s = LegSeeds::derive(seed);
    m.add(&format!("seed.{seed}.rollout"), s.rollout);
    m.add(&format!("seed.{seed}.train"), s.train);
    m.add(&format!("seed.{seed}.eve"), s.eve);
    m.add(&format!("seed.{seed}.emve"), s.emve);
}

/// Per-state uncertainty maps: one CSV and one graymap per panel.
pub fn cmd_fig3(cfg: &RunConfig, out_dir: &Path, seed_offset: u64) -> Result<Vec<PathBuf>> {
    let seeds = offset_seeds(cfg, &[0], seed_offset);
    let mut out = OutputDir::create(out_dir)?;
    let mut manifest = Manifest::new("fig3", cfg, &seeds, seed_offset);
    for &seed in &seeds {
        info!("fig3: seed {seed}");
        let result = run_fig3(cfg, seed)?;
        record_leg(&mut manifest, seed);
        manifest.add(&format!("seed.{seed}.transitions"), result.artifacts.buffer.len());
        out.write(&format!("fig3_seed{seed}_buffer.csv"), |w| result.artifacts.buffer.write_csv(w))?;
        for panel in &result.panels {
            let stem = format!("fig3_seed{seed}_{}", panel.name);
            out.write(&format!("{stem}.csv"), |w| panel.stats.write_summary_csv(w))?;
            let img = HeatmapImage::from_values(cfg.grid.width, cfg.grid.height, &panel.stats.std)?;
            out.write(&format!("{stem}.pgm"), |w| img.write_pgm(w))?;
        }
        let longest = cfg.ive_horizons.iter().max().expect("validated non-empty");
        out.write(&format!("fig3_seed{seed}_ive_{longest}_combined.csv"), |w| {
            writeln!(w, "state,value")?;
            for (s, x) in result.combined.iter().enumerate() {
                writeln!(w, "{s},{x}")?;
            }
            Ok(())
        })?;
    }
    manifest.finish(&mut out)?;
    Ok(out.files())
}

fn write_curve_rows(
    w: &mut impl Write,
    prefix: &str,
    mean: &[f64],
    stderr: &[f64],
) -> Result<()> {
    for (l, (m, e)) in mean.iter().zip(stderr).enumerate() {
        writeln!(w, "{prefix},{},{m},{e}", l + 1)?;
    }
    Ok(())
}

const GREEDY_NOTE: &str =
    "greedy baseline omitted: with all-zero rewards a greedy policy has no defined preference";

/// Target occupancy curves for the uniform, seeking and averse policies.
pub fn cmd_fig5(cfg: &RunConfig, out_dir: &Path, seed_offset: u64) -> Result<Vec<PathBuf>> {
    let seeds = offset_seeds(cfg, &(0..20).collect::<Vec<_>>(), seed_offset);
    let mut out = OutputDir::create(out_dir)?;
    let mut manifest = Manifest::new("fig5", cfg, &seeds, seed_offset);
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        info!("fig5: seed {seed}");
        per_seed.push(run_fig5_seed(cfg, seed)?);
        record_leg(&mut manifest, seed);
    }
    out.write("fig5_occupancy_per_seed.csv", |w| {
        writeln!(w, "seed,policy,l,value")?;
        for (seed, curves) in seeds.iter().zip(&per_seed) {
            for (name, curve) in curves {
                for (l, x) in curve.iter().enumerate() {
                    writeln!(w, "{seed},{name},{},{x}", l + 1)?;
                }
            }
        }
        Ok(())
    })?;
    out.write("fig5_occupancy.csv", |w| {
        writeln!(w, "policy,l,mean,stderr")?;
        for (i, (name, _)) in per_seed[0].iter().enumerate() {
            let curves: Vec<&Vec<f64>> = per_seed.iter().map(|c| &c[i].1).collect();
            let stats = curve_stats(&curves);
            write_curve_rows(w, name, &stats.mean, &stats.stderr)?;
        }
        Ok(())
    })?;
    manifest.add("note", GREEDY_NOTE);
    manifest.finish(&mut out)?;
    Ok(out.files())
}

/// Averse policies under the training wind and the shifted wind.
pub fn cmd_shift(cfg: &RunConfig, out_dir: &Path, seed_offset: u64) -> Result<Vec<PathBuf>> {
    let seeds = offset_seeds(cfg, &(0..20).collect::<Vec<_>>(), seed_offset);
    let mut out = OutputDir::create(out_dir)?;
    let mut manifest = Manifest::new("shift", cfg, &seeds, seed_offset);
    let winds = shift_winds(cfg);
    manifest.add("train_wind_prob", winds[0]);
    manifest.add("eval_wind_probs", format!("{},{}", winds[0], winds[1]));
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        info!("shift: seed {seed}");
        per_seed.push(run_shift_seed(cfg, seed)?);
        record_leg(&mut manifest, seed);
    }
    out.write("shift_occupancy.csv", |w| {
        writeln!(w, "policy,wind_prob,l,mean,stderr")?;
        for (i, (name, wind, _)) in per_seed[0].iter().enumerate() {
            let curves: Vec<&Vec<f64>> = per_seed.iter().map(|c| &c[i].2).collect();
            let stats = curve_stats(&curves);
            write_curve_rows(w, &format!("{name},{wind}"), &stats.mean, &stats.stderr)?;
        }
        Ok(())
    })?;
    manifest.add("note", GREEDY_NOTE);
    manifest.finish(&mut out)?;
    Ok(out.files())
}

/// Implicit-ensemble curves over the probe grid before and after training.
pub fn cmd_didactic(cfg: &RunConfig, out_dir: &Path, seed_offset: u64) -> Result<Vec<PathBuf>> {
    let seeds = offset_seeds(cfg, &[0], seed_offset);
    let mut out = OutputDir::create(out_dir)?;
    let mut manifest = Manifest::new("didactic", cfg, &seeds, seed_offset);
    for &seed in &seeds {
        info!("didactic: seed {seed}");
        let run = run_didactic(cfg, seed)?;
        let stem = format!("didactic_seed{seed}");
        out.write(&format!("{stem}_dataset.csv"), |w| run.dataset.write_csv(w))?;
        for (phase, curve) in [("before", &run.before), ("after", &run.after)] {
            out.write(&format!("{stem}_{phase}_members.csv"), |w| curve.write_members_csv(w))?;
            out.write(&format!("{stem}_{phase}_summary.csv"), |w| curve.write_summary_csv(w))?;
        }
        out.write(&format!("{stem}_loss.csv"), |w| {
            writeln!(w, "k,mse")?;
            for (k, x) in run.mse.iter().enumerate() {
                writeln!(w, "{k},{x}")?;
            }
            Ok(())
        })?;
        let in_sigma = run.at_data.std.iter().sum::<f64>() / run.at_data.std.len() as f64;
        manifest.add(&format!("seed.{seed}.mean_sigma_at_data"), in_sigma);
        manifest.add(&format!("seed.{seed}.mean_sigma_ood"), run.after.mean_std_where(|s| s.abs() >= 2.5));
    }
    manifest.finish(&mut out)?;
    Ok(out.files())
}

/// μ-IVE against fixed-k optimality estimates on perturbed random models.
pub fn cmd_plan_study(cfg: &RunConfig, out_dir: &Path, seed_offset: u64) -> Result<Vec<PathBuf>> {
    let seeds = offset_seeds(cfg, &[0], seed_offset);
    let mut out = OutputDir::create(out_dir)?;
    let mut manifest = Manifest::new("plan-study", cfg, &seeds, seed_offset);
    for &seed in &seeds {
        info!("plan-study: seed {seed}");
        let summary = run_plan_study(cfg, seed)?;
        out.write(&format!("plan_study_seed{seed}.csv"), |w| summary.write_csv(w))?;
        let (mdp_seed, noise_seed) = study_seeds(seed);
        manifest.add(&format!("seed.{seed}.mdp"), mdp_seed);
        manifest.add(&format!("seed.{seed}.noise"), noise_seed);
        manifest.add(&format!("seed.{seed}.hull_violations"), summary.hull_violations());
        manifest.add(
            &format!("seed.{seed}.mu_median_beats_k1_and_k{}", summary.horizon),
            summary.mu_median_beats_fixed_k(),
        );
    }
    manifest.finish(&mut out)?;
    Ok(out.files())
}
