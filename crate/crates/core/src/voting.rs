//! Combining the shaped demons' action preferences into one ensemble policy.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gq::argmax;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoteError {
    #[error("no voting demons")]
    NoVoters,
    #[error("no actions to rank")]
    NoActions,
    #[error("non-finite Q value {value} for action {action}")]
    NonFinite { action: usize, value: f64 },
    #[error("voters disagree on the number of actions ({0} vs {1})")]
    Ragged(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VotingMethod {
    /// Sum of per-demon action ranks.
    #[default]
    Rank,
    /// One vote per demon for its greedy action.
    Majority,
    /// Sum of raw Q values (sensitive to value scale).
    Qsum,
}

impl VotingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            VotingMethod::Rank => "rank",
            VotingMethod::Majority => "majority",
            VotingMethod::Qsum => "qsum",
        }
    }
}

impl fmt::Display for VotingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VotingMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rank" => Ok(VotingMethod::Rank),
            "majority" => Ok(VotingMethod::Majority),
            "qsum" => Ok(VotingMethod::Qsum),
            other => Err(format!("unknown voting method `{other}` (expected rank, majority or qsum)")),
        }
    }
}

/// How the ensemble picks among actions with equal preference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Uniformly among the tied actions.
    #[default]
    Random,
    /// Lowest action index.
    LowestIndex,
}

impl TieBreak {
    pub fn as_str(self) -> &'static str {
        match self {
            TieBreak::Random => "random",
            TieBreak::LowestIndex => "lowest-index",
        }
    }
}

/// Per-action ranks forming a permutation of `0..n`; `n - 1` is most preferred.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankVector(Vec<usize>);

impl RankVector {
    pub fn ranks(&self) -> &[usize] {
        &self.0
    }
}

/// Cumulative per-action score `P(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceVector(Vec<f64>);

impl PreferenceVector {
    pub fn prefs(&self) -> &[f64] {
        &self.0
    }

    /// Most preferred action, lowest index on ties.
    pub fn best(&self) -> usize {
        argmax(&self.0).expect("preference vectors are never empty")
    }

    /// Actions sharing the maximum preference, in index order.
    pub fn maximizers(&self) -> Vec<usize> {
        let top = self.0[self.best()];
        (0..self.0.len()).filter(|&a| self.0[a] == top).collect()
    }

    /// Most preferred action; ties resolved by `tie`. The RNG is drawn from
    /// only when more than one action ties.
    pub fn choose<R: Rng + ?Sized>(&self, tie: TieBreak, rng: &mut R) -> usize {
        match tie {
            TieBreak::LowestIndex => self.best(),
            TieBreak::Random => {
                let m = self.maximizers();
                if m.len() == 1 {
                    m[0]
                } else {
                    m[rng.gen_range(0..m.len())]
                }
            }
        }
    }
}

fn check_finite(q: &[f64]) -> Result<(), VoteError> {
    if q.is_empty() {
        return Err(VoteError::NoActions);
    }
    match q.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        Some((action, &value)) => Err(VoteError::NonFinite { action, value }),
        None => Ok(()),
    }
}

/// Ranks actions by Q value. Equal values are ordered by index, the lower
/// index receiving the higher rank.
pub fn rank_actions(q: &[f64]) -> Result<RankVector, VoteError> {
    check_finite(q)?;
    let n = q.len();
    let mut order: Vec<usize> = (0..n).collect();
    // ascending by value; among equal values the higher index comes first
    order.sort_by(|&a, &b| q[a].partial_cmp(&q[b]).expect("finite").then(b.cmp(&a)));
    let mut ranks = vec![0; n];
    for (rank, &a) in order.iter().enumerate() {
        ranks[a] = rank;
    }
    Ok(RankVector(ranks))
}

/// Preference values of the ensemble under `method`. `q_per_voter` holds one
/// Q vector per voting demon.
pub fn preferences(q_per_voter: &[Vec<f64>], method: VotingMethod) -> Result<PreferenceVector, VoteError> {
    let first = q_per_voter.first().ok_or(VoteError::NoVoters)?;
    let n = first.len();
    let mut prefs = vec![0.0; n];
    for q in q_per_voter {
        if q.len() != n {
            return Err(VoteError::Ragged(n, q.len()));
        }
        check_finite(q)?;
        match method {
            VotingMethod::Rank => {
                for (p, r) in prefs.iter_mut().zip(rank_actions(q)?.0) {
                    *p += r as f64;
                }
            }
            VotingMethod::Majority => prefs[argmax(q).expect("checked")] += 1.0,
            VotingMethod::Qsum => {
                for (p, v) in prefs.iter_mut().zip(q) {
                    *p += v;
                }
            }
        }
    }
    Ok(PreferenceVector(prefs))
}

/// The ensemble's action: argmax of the preference values, lowest index on ties.
pub fn ensemble_action(q_per_voter: &[Vec<f64>], method: VotingMethod) -> Result<usize, VoteError> {
    Ok(preferences(q_per_voter, method)?.best())
}

/// The ensemble's action under an explicit tie rule.
pub fn ensemble_action_with<R: Rng + ?Sized>(
    q_per_voter: &[Vec<f64>],
    method: VotingMethod,
    tie: TieBreak,
    rng: &mut R,
) -> Result<usize, VoteError> {
    Ok(preferences(q_per_voter, method)?.choose(tie, rng))
}
