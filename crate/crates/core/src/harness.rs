//! Latent-learning experiment: a Horde learns from uniform-random behavior
//! while, every few episodes, each demon's greedy policy and the voting
//! ensemble are rolled out once without learning.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{McAction, MountainCar, UniformBehavior};
use crate::horde::{DemonSpec, Horde, HordeConfig, HordeError, PolicySnapshot};
use crate::shaping::{Potential, PotentialKind, PotentialTable, ShapingError};
use crate::tiles::TileCoderConfig;
use crate::voting::{TieBreak, VotingMethod};

/// Policy id of the voting ensemble in records and reports.
pub const COMBINATION: &str = "combination";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error(transparent)]
    Horde(#[from] HordeError),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Right and height shapings.
    #[default]
    TwoShapings,
    /// Right, height and speed shapings.
    ThreeShapings,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialName {
    None,
    Right,
    Height,
    Speed,
    Table,
}

/// One demon as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemonConfig {
    /// Report id; defaults to the potential name (`no-shaping` for none).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub potential: PotentialName,
    #[serde(default = "default_scale")]
    pub scale: f64,
    pub alpha: f64,
    /// Grid of a `table` potential, position cells first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_grid: Option<[usize; 2]>,
    /// Row-major normalized values of a `table` potential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_values: Option<Vec<f64>>,
}

fn default_scale() -> f64 {
    1.0
}

impl DemonConfig {
    pub fn new(potential: PotentialName, scale: f64, alpha: f64) -> Self {
        Self { name: None, potential, scale, alpha, table_grid: None, table_values: None }
    }

    pub fn policy_id(&self) -> String {
        self.name.clone().unwrap_or_else(|| match self.potential {
            PotentialName::None => "no-shaping".into(),
            PotentialName::Right => "right".into(),
            PotentialName::Height => "height".into(),
            PotentialName::Speed => "speed".into(),
            PotentialName::Table => "table".into(),
        })
    }

    fn to_spec(&self, field: &str) -> Result<DemonSpec, ConfigError> {
        let shaping_err = |e: ShapingError| invalid(field, e.to_string());
        let kind = match self.potential {
            PotentialName::None => None,
            PotentialName::Right => Some(PotentialKind::Right),
            PotentialName::Height => Some(PotentialKind::Height),
            PotentialName::Speed => Some(PotentialKind::Speed),
            PotentialName::Table => {
                let (Some(grid), Some(values)) = (self.table_grid, self.table_values.clone()) else {
                    return Err(invalid(field, "table potentials need table_grid and table_values"));
                };
                Some(PotentialKind::Table(PotentialTable::new(grid, values).map_err(shaping_err)?))
            }
        };
        if !matches!(self.potential, PotentialName::Table) && (self.table_grid.is_some() || self.table_values.is_some())
        {
            return Err(invalid(field, "table_grid/table_values only apply to table potentials"));
        }
        let potential = kind.map(|k| Potential::new(k, self.scale)).transpose().map_err(shaping_err)?;
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(invalid(format!("{field}.alpha"), "must be finite and non-negative"));
        }
        Ok(DemonSpec { name: self.policy_id(), potential, alpha: self.alpha })
    }
}

/// Default potential scales, tuned on the two scenarios. Each potential is
/// normalized to [0, 1] before scaling.
pub const SCALE_RIGHT: f64 = 50.0;
pub const SCALE_HEIGHT: f64 = 10.0;
pub const SCALE_SPEED: f64 = 30.0;

impl Scenario {
    /// The demon roster: base demon first, then one demon per shaping.
    pub fn demons(self) -> Vec<DemonConfig> {
        let mut d = vec![
            DemonConfig::new(PotentialName::None, 0.0, 0.1),
            DemonConfig::new(PotentialName::Right, SCALE_RIGHT, 0.05),
            DemonConfig::new(PotentialName::Height, SCALE_HEIGHT, 0.1),
        ];
        if self == Scenario::ThreeShapings {
            d.push(DemonConfig::new(PotentialName::Speed, SCALE_SPEED, 0.1));
        }
        d
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::TwoShapings => "two-shapings",
            Scenario::ThreeShapings => "three-shapings",
        }
    }
}

/// Everything that determines an experiment's results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub runs: u64,
    pub episodes: u32,
    pub eval_interval: u32,
    pub step_cap: u32,
    pub seed: u64,
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub voting: VotingMethod,
    /// Tie rule of the ensemble vote. Single demons always take the lowest index.
    pub ensemble_ties: TieBreak,
    /// Divide each demon's α by the number of tilings.
    pub normalize_alpha: bool,
    /// Fraction of evaluation points in the initial and final windows.
    pub window_fraction: f64,
    pub tiles: TileCoderConfig,
    /// Empty means the scenario's roster.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub demons: Vec<DemonConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::TwoShapings,
            runs: 1000,
            episodes: 100,
            eval_interval: 5,
            step_cap: 2000,
            seed: 0,
            gamma: 0.99,
            lambda: 0.4,
            beta: 0.0001,
            voting: VotingMethod::Rank,
            ensemble_ties: TieBreak::Random,
            normalize_alpha: true,
            window_fraction: 0.2,
            tiles: TileCoderConfig::default(),
            demons: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self { scenario, ..Self::default() }
    }

    /// The demon roster actually used.
    pub fn roster(&self) -> Vec<DemonConfig> {
        if self.demons.is_empty() {
            self.scenario.demons()
        } else {
            self.demons.clone()
        }
    }

    /// Copy with every default written out, as stored in run manifests.
    pub fn resolved(&self) -> Self {
        Self { demons: self.roster(), ..self.clone() }
    }

    pub fn eval_points(&self) -> u32 {
        self.episodes / self.eval_interval.max(1)
    }

    /// Policy ids in record order: demons, then the ensemble.
    pub fn policy_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.roster().iter().map(DemonConfig::policy_id).collect();
        ids.push(COMBINATION.into());
        ids
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.runs == 0 {
            return Err(invalid("runs", "must be at least 1"));
        }
        if self.eval_interval == 0 {
            return Err(invalid("eval_interval", "must be at least 1"));
        }
        if self.episodes < self.eval_interval {
            return Err(invalid("episodes", "must be at least eval_interval"));
        }
        if self.step_cap == 0 {
            return Err(invalid("step_cap", "must be at least 1"));
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(invalid("window_fraction", "must lie in (0, 1]"));
        }
        if self.tiles.action_count != McAction::COUNT {
            return Err(invalid("tiles.action_count", format!("mountain car has {} actions", McAction::COUNT)));
        }
        let ids = self.policy_ids();
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return Err(invalid("demons", format!("duplicate policy id `{id}`")));
            }
        }
        let roster = self.roster();
        if roster.len() < 2 {
            return Err(invalid("demons", "need the base demon and at least one shaped demon"));
        }
        self.horde_config().and_then(|h| Horde::new(&h).map(drop).map_err(ConfigError::from))
    }

    pub fn horde_config(&self) -> Result<HordeConfig, ConfigError> {
        let demons = self
            .roster()
            .iter()
            .enumerate()
            .map(|(i, d)| d.to_spec(&format!("demons[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(HordeConfig {
            demons,
            gamma: self.gamma,
            lambda: self.lambda,
            beta: self.beta,
            tiles: self.tiles.clone(),
            normalize_alpha: self.normalize_alpha,
        })
    }
}

/// Result of one greedy evaluation episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub run_id: u64,
    /// 1-based evaluation point within the run.
    pub eval_index: u32,
    pub policy_id: String,
    /// Undiscounted sum of base rewards, i.e. minus the steps taken.
    pub base_return: f64,
    pub reached_goal: bool,
}

/// Why a run was abandoned.
#[derive(Clone, Debug, PartialEq)]
pub struct RunDiagnostic {
    pub run_id: u64,
    pub episode: u32,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    /// Sorted by run, evaluation point, then policy order.
    pub records: Vec<EvalRecord>,
    pub diagnostics: Vec<RunDiagnostic>,
}

/// Which policy to roll out from a snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalPolicy {
    Demon(usize),
    Ensemble(VotingMethod, TieBreak),
}

/// Greedy episode from the start state without learning. Returns the
/// number of steps taken and whether the goal was reached. `rng` only
/// resolves ensemble ties.
pub fn rollout<R: Rng + ?Sized>(
    snapshot: &PolicySnapshot,
    policy: EvalPolicy,
    step_cap: u32,
    rng: &mut R,
) -> Result<(u32, bool), HordeError> {
    let env = MountainCar;
    let mut s = env.reset();
    for step in 1..=step_cap {
        let a = match policy {
            EvalPolicy::Demon(d) => snapshot.greedy_action(d, s)?,
            EvalPolicy::Ensemble(m, tie) => snapshot.ensemble_action_with(s, m, tie, rng)?,
        };
        let t = env.step(s, a);
        if t.terminal {
            return Ok((step, true));
        }
        s = t.to;
    }
    Ok((step_cap, false))
}

/// Runs every demon and the ensemble once from `snapshot`.
pub fn evaluate<R: Rng + ?Sized>(
    snapshot: &PolicySnapshot,
    cfg: &ExperimentConfig,
    policy_ids: &[String],
    run_id: u64,
    eval_index: u32,
    rng: &mut R,
) -> Result<Vec<EvalRecord>, HordeError> {
    let ensemble = EvalPolicy::Ensemble(cfg.voting, cfg.ensemble_ties);
    let policies = (0..snapshot.len()).map(EvalPolicy::Demon).chain([ensemble]);
    policies
        .zip(policy_ids)
        .map(|(policy, id)| {
            let (steps, reached_goal) = rollout(snapshot, policy, cfg.step_cap, rng)?;
            Ok(EvalRecord { run_id, eval_index, policy_id: id.clone(), base_return: -f64::from(steps), reached_goal })
        })
        .collect()
}

/// RNG of one run: the master seed selects the key, the run id the stream.
pub fn run_rng(seed: u64, run_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_id);
    rng
}

/// One independent run. Learning happens only on behavior episodes.
pub fn run_single(cfg: &ExperimentConfig, run_id: u64) -> Result<Vec<EvalRecord>, RunDiagnostic> {
    let diag = |episode, message: String| RunDiagnostic { run_id, episode, message };
    let horde_cfg = cfg.horde_config().map_err(|e| diag(0, e.to_string()))?;
    let mut horde = Horde::new(&horde_cfg).map_err(|e| diag(0, e.to_string()))?;
    let policy_ids = cfg.policy_ids();
    let env = MountainCar;
    let behavior = UniformBehavior;
    let mut rng = run_rng(cfg.seed, run_id);
    // evaluation draws from its own generator so it cannot shift behavior
    let mut eval_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
    let mut records = Vec::with_capacity(cfg.eval_points() as usize * policy_ids.len());

    for episode in 1..=cfg.episodes {
        let mut s = env.reset();
        for _ in 0..cfg.step_cap {
            let a = behavior.sample(&mut rng);
            let t = env.step(s, a);
            horde.observe(&t, behavior.prob(a)).map_err(|e| diag(episode, e.to_string()))?;
            if t.terminal {
                break;
            }
            s = t.to;
        }
        horde.end_episode();

        if episode % cfg.eval_interval == 0 {
            let snapshot = horde.snapshot();
            let eval_index = episode / cfg.eval_interval;
            records.extend(
                evaluate(&snapshot, cfg, &policy_ids, run_id, eval_index, &mut eval_rng)
                    .map_err(|e| diag(episode, e.to_string()))?,
            );
        }
    }
    Ok(records)
}

/// All runs, on a pool of `jobs` threads (0 = all cores). Results do not
/// depend on `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    let results: Vec<_> = pool.install(|| (0..cfg.runs).into_par_iter().map(|run| run_single(cfg, run)).collect());
    let mut out = ExperimentOutput { records: Vec::new(), diagnostics: Vec::new() };
    // collect() keeps run order, so the merge is deterministic
    for r in results {
        match r {
            Ok(records) => out.records.extend(records),
            Err(d) => out.diagnostics.push(d),
        }
    }
    Ok(out)
}
