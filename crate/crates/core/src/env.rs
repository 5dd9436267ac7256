//! The windy gridworld and experience collection.
//!
//! States are row-major with index 0 in the top-left corner. Actions are
//! `N, W, S, E` in that order. With probability `wind_prob` the chosen action
//! is replaced by a uniform draw over all four actions (the draw may coincide
//! with the chosen one), so the intended move succeeds with probability
//! `(1 - wind_prob) + wind_prob / 4`. Moving into a wall leaves the agent in
//! place and every reward is zero.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::{PolicyTable, TabularMdp};
use crate::rng::{self, sample_categorical, RNG_ALGORITHM};

pub const N_ACTIONS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    North = 0,
    West = 1,
    South = 2,
    East = 3,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::North, Action::West, Action::South, Action::East];

    fn delta(self) -> (isize, isize) {
        match self {
            Action::North => (-1, 0),
            Action::West => (0, -1),
            Action::South => (1, 0),
            Action::East => (0, 1),
        }
    }
}

/// A grid coordinate, row 0 at the top.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub wind_prob: f64,
    pub episode_length: usize,
    pub excluded_cell: Option<Cell>,
    pub gamma: f64,
}

impl Default for GridworldSpec {
    fn default() -> Self {
        Self {
            width: 5,
            height: 5,
            wind_prob: 0.1,
            episode_length: 20,
            excluded_cell: None,
            gamma: 0.9,
        }
    }
}

impl GridworldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        if !(0.0..=1.0).contains(&self.wind_prob) {
            return Err(Error::invalid(format!(
                "wind_prob {} outside [0, 1]",
                self.wind_prob
            )));
        }
        if self.episode_length == 0 {
            return Err(Error::invalid("episode_length must be positive"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if let Some(cell) = self.excluded_cell {
            if cell.row >= self.height || cell.col >= self.width {
                return Err(Error::invalid(format!(
                    "excluded cell ({}, {}) outside the {}x{} grid",
                    cell.row, cell.col, self.height, self.width
                )));
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn state(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell(&self, state: usize) -> Cell {
        Cell {
            row: state / self.width,
            col: state % self.width,
        }
    }

    pub fn top_left(&self) -> usize {
        0
    }

    pub fn bottom_right(&self) -> usize {
        self.n_states() - 1
    }

    pub fn excluded_state(&self) -> Option<usize> {
        self.excluded_cell.map(|c| self.state(c))
    }

    /// Deterministic successor of `state` under `action`.
    pub fn step(&self, state: usize, action: Action) -> usize {
        let Cell { row, col } = self.cell(state);
        let (dr, dc) = action.delta();
        let r = row as isize + dr;
        let c = col as isize + dc;
        if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
            state
        } else {
            r as usize * self.width + c as usize
        }
    }
}

/// Exact transition probabilities of the windy gridworld.
pub fn build_gridworld(spec: &GridworldSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let n = spec.n_states();
    let wind_share = spec.wind_prob / N_ACTIONS as f64;
    let mut transition = vec![0.0; n * N_ACTIONS * n];
    for s in 0..n {
        for chosen in Action::ALL {
            let row = &mut transition[(s * N_ACTIONS + chosen as usize) * n..][..n];
            row[spec.step(s, chosen)] += 1.0 - spec.wind_prob;
            for applied in Action::ALL {
                row[spec.step(s, applied)] += wind_share;
            }
        }
    }
    TabularMdp::new(n, N_ACTIONS, transition, vec![0.0; n * N_ACTIONS], spec.gamma)
}

/// One experience tuple `(s, a, r, s')`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BufferMeta {
    pub seed: u64,
    pub policy: String,
    /// Number of environment steps taken to generate the buffer.
    pub steps: usize,
    pub rng: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperienceBuffer {
    pub transitions: Vec<Transition>,
    pub meta: BufferMeta,
}

impl ExperienceBuffer {
    pub fn new(transitions: Vec<Transition>, meta: BufferMeta) -> Self {
        Self { transitions, meta }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Checks every index against an `(n_states, n_actions)` table.
    pub fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<()> {
        for t in &self.transitions {
            for (what, index, limit) in [
                ("state", t.s, n_states),
                ("action", t.a, n_actions),
                ("next state", t.s_next, n_states),
            ] {
                if index >= limit {
                    return Err(Error::IndexOutOfRange { what, index, limit });
                }
            }
        }
        Ok(())
    }

    /// How often each state appears as a source state.
    pub fn state_visits(&self, n_states: usize) -> Vec<usize> {
        let mut counts = vec![0; n_states];
        for t in &self.transitions {
            counts[t.s] += 1;
        }
        counts
    }

    pub fn pair_counts(&self, n_states: usize, n_actions: usize) -> Vec<usize> {
        let mut counts = vec![0; n_states * n_actions];
        for t in &self.transitions {
            counts[t.s * n_actions + t.a] += 1;
        }
        counts
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# seed={} policy={} steps={}",
            self.meta.seed, self.meta.policy, self.meta.steps
        )?;
        writeln!(out, "s,a,r,s_next")?;
        for t in &self.transitions {
            writeln!(out, "{},{},{},{}", t.s, t.a, t.r, t.s_next)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = input.lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty buffer file".into()))?;
        let first = first?;
        let meta = parse_meta(&first).ok_or_else(|| parse_err(1, format!("bad metadata line {first:?}")))?;
        match lines.next() {
            Some((_, Ok(h))) if h.trim() == "s,a,r,s_next" => {}
            _ => return Err(parse_err(2, "expected header s,a,r,s_next".into())),
        }
        let mut transitions = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(parse_err(i + 1, format!("expected 4 fields, got {}", fields.len())));
            }
            let idx = |f: &str| f.parse::<usize>().map_err(|e| parse_err(i + 1, e.to_string()));
            transitions.push(Transition {
                s: idx(fields[0])?,
                a: idx(fields[1])?,
                r: fields[2]
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| parse_err(i + 1, e.to_string()))?,
                s_next: idx(fields[3])?,
            });
        }
        Ok(Self { transitions, meta })
    }
}

fn parse_meta(line: &str) -> Option<BufferMeta> {
    let body = line.strip_prefix('#')?.trim();
    let mut seed = None;
    let mut policy = None;
    let mut steps = None;
    for pair in body.split_whitespace() {
        let (k, v) = pair.split_once('=')?;
        match k {
            "seed" => seed = v.parse().ok(),
            "policy" => policy = Some(v.to_string()),
            "steps" => steps = v.parse().ok(),
            _ => return None,
        }
    }
    Some(BufferMeta {
        seed: seed?,
        policy: policy?,
        steps: steps?,
        rng: RNG_ALGORITHM.to_string(),
    })
}

/// Collects `n_steps` transitions in episodes of `spec.episode_length`
/// steps, each episode restarting at `start`.
pub fn rollout(
    mdp: &TabularMdp,
    spec: &GridworldSpec,
    policy: &PolicyTable,
    policy_label: &str,
    n_steps: usize,
    start: usize,
    seed: u64,
) -> Result<ExperienceBuffer> {
    spec.validate()?;
    if n_steps == 0 {
        return Err(Error::invalid("rollout needs at least one step"));
    }
    if start >= mdp.n_states() {
        return Err(Error::IndexOutOfRange {
            what: "start state",
            index: start,
            limit: mdp.n_states(),
        });
    }
    if policy_label.is_empty() || policy_label.contains(char::is_whitespace) {
        return Err(Error::invalid("policy label must be a non-empty word"));
    }
    mdp.check_policy(policy)?;
    let mut rng = rng::seeded(seed, rng::stream::ROLLOUT);
    let mut transitions = Vec::with_capacity(n_steps);
    let mut s = start;
    for t in 0..n_steps {
        if t > 0 && t % spec.episode_length == 0 {
            s = start;
        }
        let a = sample_categorical(policy.row(s), &mut rng);
        let s_next = sample_categorical(mdp.transition_row(s, a), &mut rng);
        transitions.push(Transition {
            s,
            a,
            r: mdp.reward(s, a),
            s_next,
        });
        s = s_next;
    }
    Ok(ExperienceBuffer {
        transitions,
        meta: BufferMeta {
            seed,
            policy: policy_label.to_string(),
            steps: n_steps,
            rng: RNG_ALGORITHM.to_string(),
        },
    })
}

/// Drops every transition that leaves from or arrives at `cell`.
pub fn exclude_cell(buffer: &ExperienceBuffer, cell: usize) -> ExperienceBuffer {
    ExperienceBuffer {
        transitions: buffer
            .transitions
            .iter()
            .filter(|t| t.s != cell && t.s_next != cell)
            .copied()
            .collect(),
        meta: buffer.meta.clone(),
    }
}
