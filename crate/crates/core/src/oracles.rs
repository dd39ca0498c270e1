//! Small tabular MDPs with exact references: value iteration and tabular
//! Q-learning, plus a driver that runs Greedy-GQ(λ) on one-hot features so
//! the learner can be checked against the exact optimum.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gq::{argmax, GqParams, LearnError, WeightPair};
use crate::tiles::SparseFeatures;

const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error(transparent)]
    Learn(#[from] LearnError),
}

/// Finite MDP with transition probabilities `T(s, a, s')`, rewards
/// `R(s, a, s')` and absorbing terminal states (value 0).
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    gamma: f64,
    terminal: Vec<bool>,
}

impl TabularMdp {
    /// `transitions` and `rewards` are indexed `[(s * n_actions + a) * n_states + s']`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: f64,
        terminal: Vec<bool>,
    ) -> Result<Self, OracleError> {
        let len = n_states * n_actions * n_states;
        if n_states == 0 || n_actions == 0 {
            return Err(OracleError::InvalidMdp("empty state or action set".into()));
        }
        if transitions.len() != len || rewards.len() != len || terminal.len() != n_states {
            return Err(OracleError::InvalidMdp("table sizes do not match dimensions".into()));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(OracleError::InvalidMdp(format!("gamma {gamma} not in (0, 1]")));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(OracleError::InvalidMdp("non-finite reward".into()));
        }
        for (sa, row) in transitions.chunks(n_states).enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(OracleError::InvalidMdp(format!("row {sa} has a probability outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(OracleError::InvalidMdp(format!("row {sa} sums to {sum}")));
            }
        }
        Ok(Self { n_states, n_actions, transitions, rewards, gamma, terminal })
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

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    fn row(&self, s: usize, a: usize) -> std::ops::Range<usize> {
        let start = (s * self.n_actions + a) * self.n_states;
        start..start + self.n_states
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[self.row(s, a).start + next]
    }

    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.rewards[self.row(s, a).start + next]
    }

    /// Samples `(reward, next_state)`.
    pub fn sample<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> (f64, usize) {
        let row = &self.transitions[self.row(s, a)];
        let next = WeightedIndex::new(row).expect("validated row").sample(rng);
        (self.reward(s, a, next), next)
    }

    /// The same MDP with rewards `R + γΦ(s') − Φ(s)`.
    pub fn shaped(&self, potential: &[f64]) -> Result<Self, OracleError> {
        if potential.len() != self.n_states || potential.iter().any(|p| !p.is_finite()) {
            return Err(OracleError::InvalidMdp("potential must have one finite value per state".into()));
        }
        let mut out = self.clone();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let start = self.row(s, a).start;
                for next in 0..self.n_states {
                    out.rewards[start + next] += self.gamma * potential[next] - potential[s];
                }
            }
        }
        Ok(out)
    }

    fn backup(&self, q: &[f64], s: usize, a: usize) -> f64 {
        let row = self.row(s, a);
        let mut v = 0.0;
        for next in 0..self.n_states {
            let p = self.transitions[row.start + next];
            if p == 0.0 {
                continue;
            }
            let future = if self.terminal[next] { 0.0 } else { max_row(q, next, self.n_actions) };
            v += p * (self.rewards[row.start + next] + self.gamma * future);
        }
        v
    }
}

fn max_row(q: &[f64], s: usize, n_actions: usize) -> f64 {
    q[s * n_actions..(s + 1) * n_actions].iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViSolution {
    /// Flat `Q[s * n_actions + a]`; zero at terminal states.
    pub q: Vec<f64>,
    /// Greedy action per state, lowest index on ties.
    pub policy: Vec<usize>,
    pub sweeps: usize,
    /// Sup-norm change of each sweep.
    pub residuals: Vec<f64>,
}

impl ViSolution {
    pub fn q_row(&self, s: usize) -> &[f64] {
        let n = self.q.len() / self.policy.len();
        &self.q[s * n..(s + 1) * n]
    }
}

/// Synchronous value iteration on Q until the sup-norm Bellman residual
/// falls below `tol`.
pub fn value_iteration(m: &TabularMdp, tol: f64) -> Result<ViSolution, OracleError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(OracleError::BadTolerance);
    }
    let (ns, na) = (m.n_states, m.n_actions);
    let mut q = vec![0.0; ns * na];
    let mut residuals = Vec::new();
    for sweep in 1..=MAX_SWEEPS {
        let mut next = vec![0.0; ns * na];
        let mut residual: f64 = 0.0;
        for s in (0..ns).filter(|&s| !m.terminal[s]) {
            for a in 0..na {
                let v = m.backup(&q, s, a);
                residual = residual.max((v - q[s * na + a]).abs());
                next[s * na + a] = v;
            }
        }
        q = next;
        residuals.push(residual);
        if residual < tol {
            let policy = (0..ns).map(|s| argmax(&q[s * na..(s + 1) * na]).expect("actions")).collect();
            return Ok(ViSolution { q, policy, sweeps: sweep, residuals });
        }
        if !residual.is_finite() {
            return Err(OracleError::NoConvergence { sweeps: sweep, residual });
        }
    }
    Err(OracleError::NoConvergence { sweeps: MAX_SWEEPS, residual: *residuals.last().expect("swept") })
}

/// Actions whose value is within `tie_tol` of the best in that row.
pub fn optimal_action_set(q_row: &[f64], tie_tol: f64) -> Vec<usize> {
    let best = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..q_row.len()).filter(|&a| q_row[a] >= best - tie_tol).collect()
}

/// Step-size schedule for tabular Q-learning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `1 / n(s, a)^exponent` with `n` the visit count.
    VisitCount {
        exponent: f64,
    },
}

impl StepSchedule {
    fn alpha(&self, visits: u64) -> f64 {
        match *self {
            StepSchedule::Constant(a) => a,
            StepSchedule::VisitCount { exponent } => (visits as f64).powf(-exponent),
        }
    }
}

/// Tabular Q-learning under the uniform behavior policy, restarting from
/// `start` after each terminal state. Returns the flat Q table.
pub fn tabular_q_learning(m: &TabularMdp, start: usize, steps: usize, schedule: StepSchedule, seed: u64) -> Vec<f64> {
    let na = m.n_actions;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = vec![0.0; m.n_states * na];
    let mut visits = vec![0u64; m.n_states * na];
    let mut s = start;
    for _ in 0..steps {
        let a = rng.gen_range(0..na);
        let (r, next) = m.sample(s, a, &mut rng);
        let future = if m.terminal[next] { 0.0 } else { max_row(&q, next, na) };
        let idx = s * na + a;
        visits[idx] += 1;
        let delta = r + m.gamma * future - q[idx];
        q[idx] += schedule.alpha(visits[idx]) * delta;
        s = if m.terminal[next] { start } else { next };
    }
    q
}

/// Deterministic chain of `n` decision states plus one terminal goal state
/// (index `n`). Action 0 moves left (staying put at state 0), action 1 moves
/// right. Every step costs −1.
pub fn chain_mdp(n: usize, gamma: f64) -> Result<TabularMdp, OracleError> {
    let ns = n + 1;
    let mut t = vec![0.0; ns * 2 * ns];
    let r = vec![-1.0; ns * 2 * ns];
    let mut terminal = vec![false; ns];
    terminal[n] = true;
    for s in 0..ns {
        let left = if s == n { n } else { s.saturating_sub(1) };
        let right = (s + 1).min(n);
        t[(s * 2) * ns + left] = 1.0;
        t[(s * 2 + 1) * ns + right] = 1.0;
    }
    TabularMdp::new(ns, 2, t, r, gamma, terminal)
}

/// Random MDP without terminal states: each row has 1..=3 successors with
/// random probabilities, rewards uniform in [−1, 1].
pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    let len = n_states * n_actions * n_states;
    let mut t = vec![0.0; len];
    let mut r = vec![0.0; len];
    for sa in 0..n_states * n_actions {
        let row = sa * n_states;
        let k = rng.gen_range(1..=3.min(n_states));
        let mut total = 0.0;
        for _ in 0..k {
            let next = rng.gen_range(0..n_states);
            let w = rng.gen_range(0.1..1.0);
            t[row + next] += w;
            total += w;
        }
        for next in 0..n_states {
            t[row + next] /= total;
            r[row + next] = rng.gen_range(-1.0..1.0);
        }
    }
    TabularMdp::new(n_states, n_actions, t, r, gamma, vec![false; n_states]).expect("well-formed by construction")
}

/// Signature shared by [`WeightPair::update`] and its fault-injected twin.
pub type UpdateFn =
    fn(&mut WeightPair, &GqParams, f64, &SparseFeatures, &SparseFeatures, f64) -> Result<f64, LearnError>;

/// Runs Greedy-GQ(λ) with one-hot `(s, a)` features on `m` under the uniform
/// behavior policy. Returns the flat θ, comparable to a Q table.
pub fn train_gq_tabular(
    m: &TabularMdp,
    params: &GqParams,
    start: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<f64>, OracleError> {
    train_gq_tabular_with(m, params, start, steps, seed, WeightPair::update)
}

pub fn train_gq_tabular_with(
    m: &TabularMdp,
    params: &GqParams,
    start: usize,
    steps: usize,
    seed: u64,
    update: UpdateFn,
) -> Result<Vec<f64>, OracleError> {
    params.validate()?;
    let na = m.n_actions;
    let dim = m.n_states * na;
    let one_hot = |s: usize, a: usize| SparseFeatures::one_hot(s * na + a, dim).expect("in range");
    let behavior_prob = 1.0 / na as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wp = WeightPair::zeros(dim);
    let mut s = start;
    for _ in 0..steps {
        let a = rng.gen_range(0..na);
        let (r, next) = m.sample(s, a, &mut rng);
        let greedy = argmax(&wp.theta()[s * na..(s + 1) * na]).expect("actions");
        let rho = if a == greedy { 1.0 / behavior_prob } else { 0.0 };
        let phi_bar = if m.terminal[next] {
            SparseFeatures::zero(dim)
        } else {
            one_hot(next, argmax(&wp.theta()[next * na..(next + 1) * na]).expect("actions"))
        };
        update(&mut wp, params, r, &one_hot(s, a), &phi_bar, rho)?;
        if m.terminal[next] {
            wp.reset_trace();
            s = start;
        } else {
            s = next;
        }
    }
    Ok(wp.theta().to_vec())
}

/// Largest |Q − Q*| over non-terminal states.
pub fn sup_error(m: &TabularMdp, q: &[f64], q_star: &[f64]) -> f64 {
    let na = m.n_actions;
    (0..m.n_states)
        .filter(|&s| !m.terminal[s])
        .flat_map(|s| (0..na).map(move |a| s * na + a))
        .map(|i| (q[i] - q_star[i]).abs())
        .fold(0.0, f64::max)
}
