//! A Horde of Greedy-GQ(λ) demons sharing one behavior stream. Each demon
//! learns on the base reward plus its own potential-based shaping reward;
//! demon 0 always learns on the base reward alone.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::env::{McAction, McState, Transition};
use crate::gq::{argmax, GqParams, LearnError, WeightPair};
use crate::shaping::{Potential, ShapingReward};
use crate::tiles::{FeatureError, SparseFeatures, TileCoder, TileCoderConfig};
use crate::voting::{self, TieBreak, VoteError, VotingMethod};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HordeError {
    #[error("demon {id} ({name}): {source}")]
    Demon {
        id: usize,
        name: String,
        #[source]
        source: LearnError,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Vote(#[from] VoteError),
    #[error("invalid horde: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemonSpec {
    /// Policy id used in reports, e.g. `no-shaping` or `speed`.
    pub name: String,
    pub potential: Option<Potential>,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HordeConfig {
    pub demons: Vec<DemonSpec>,
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub tiles: TileCoderConfig,
    /// Divide each α by the number of active features per state-action.
    /// β is used as given.
    pub normalize_alpha: bool,
}

#[derive(Clone, Debug)]
pub struct Demon {
    id: usize,
    name: String,
    shaping: Option<ShapingReward>,
    params: GqParams,
    weights: WeightPair,
}

impl Demon {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &GqParams {
        &self.params
    }

    pub fn weights(&self) -> &WeightPair {
        &self.weights
    }

    pub fn potential(&self) -> Option<&Potential> {
        self.shaping.as_ref().map(|s| s.potential())
    }

    /// Base reward plus this demon's shaping reward.
    pub fn reward(&self, t: &Transition) -> f64 {
        match &self.shaping {
            Some(sr) => t.reward + sr.reward(t.from, t.to),
            None => t.reward,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Horde {
    coder: Arc<TileCoder>,
    demons: Vec<Demon>,
}

impl Horde {
    pub fn new(cfg: &HordeConfig) -> Result<Self, HordeError> {
        if cfg.demons.is_empty() {
            return Err(HordeError::Config("at least one demon is required".into()));
        }
        if cfg.demons[0].potential.is_some() {
            return Err(HordeError::Config("demon 0 must learn on the base reward (no potential)".into()));
        }
        let coder = Arc::new(TileCoder::new(cfg.tiles.clone())?);
        let norm = if cfg.normalize_alpha { coder.tilings() as f64 } else { 1.0 };
        let dim = coder.total_dim();
        let demons = cfg
            .demons
            .iter()
            .enumerate()
            .map(|(id, spec)| {
                let params =
                    GqParams { alpha: spec.alpha / norm, beta: cfg.beta, lambda: cfg.lambda, gamma: cfg.gamma };
                let wrap = |source| HordeError::Demon { id, name: spec.name.clone(), source };
                params.validate().map_err(wrap)?;
                let shaping = spec
                    .potential
                    .clone()
                    .map(|p| ShapingReward::new(p, cfg.gamma))
                    .transpose()
                    .map_err(|e| HordeError::Config(format!("demon {id}: {e}")))?;
                Ok(Demon { id, name: spec.name.clone(), shaping, params, weights: WeightPair::zeros(dim) })
            })
            .collect::<Result<Vec<_>, HordeError>>()?;
        Ok(Self { coder, demons })
    }

    pub fn demons(&self) -> &[Demon] {
        &self.demons
    }

    pub fn coder(&self) -> &TileCoder {
        &self.coder
    }

    /// `⟨R + F_0, R + F_1, …⟩` for one transition, with `F_0 = 0`.
    pub fn reward_vector(&self, t: &Transition) -> Vec<f64> {
        self.demons.iter().map(|d| d.reward(t)).collect()
    }

    /// Feeds one behavior transition to every demon. Returns the TD error of
    /// each demon, in demon order.
    pub fn observe(&mut self, t: &Transition, behavior_prob: f64) -> Result<Vec<f64>, HordeError> {
        if !(behavior_prob > 0.0 && behavior_prob <= 1.0) {
            return Err(HordeError::Demon {
                id: 0,
                name: self.demons[0].name.clone(),
                source: LearnError::BadBehaviorProb(behavior_prob),
            });
        }
        let coder = &self.coder;
        let tiles = coder.encode_state(t.from)?;
        let next_tiles = coder.encode_state(t.to)?;
        let taken = t.action.index();
        let phi = coder.features_for(&tiles, taken)?;

        self.demons
            .iter_mut()
            .map(|d| {
                let theta = d.weights.theta();
                let greedy = argmax(&coder.q_values(theta, &tiles)?).expect("actions exist");
                let rho = if greedy == taken { 1.0 / behavior_prob } else { 0.0 };
                let phi_bar_next = if t.terminal {
                    SparseFeatures::zero(coder.total_dim())
                } else {
                    let a_next = argmax(&coder.q_values(theta, &next_tiles)?).expect("actions exist");
                    coder.features_for(&next_tiles, a_next)?
                };
                let reward = d.reward(t);
                d.weights.update(&d.params, reward, &phi, &phi_bar_next, rho).map_err(|source| HordeError::Demon {
                    id: d.id,
                    name: d.name.clone(),
                    source,
                })
            })
            .collect()
    }

    /// Clears every demon's eligibility trace.
    pub fn end_episode(&mut self) {
        for d in &mut self.demons {
            d.weights.reset_trace();
        }
    }

    /// Frozen copy of every demon's greedy policy.
    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            coder: Arc::clone(&self.coder),
            policies: self
                .demons
                .iter()
                .map(|d| FrozenPolicy { name: d.name.clone(), theta: d.weights.theta().to_vec() })
                .collect(),
        }
    }

    /// Hash of all primary and correction weights.
    pub fn weights_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for d in &self.demons {
            for v in d.weights.theta().iter().chain(d.weights.w()) {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }
}

#[derive(Clone, Debug)]
pub struct FrozenPolicy {
    pub name: String,
    pub theta: Vec<f64>,
}

/// Immutable per-demon Q evaluators taken between time steps.
#[derive(Clone, Debug)]
pub struct PolicySnapshot {
    coder: Arc<TileCoder>,
    policies: Vec<FrozenPolicy>,
}

impl PolicySnapshot {
    pub fn policies(&self) -> &[FrozenPolicy] {
        &self.policies
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn q_values(&self, demon: usize, s: McState) -> Result<Vec<f64>, HordeError> {
        let p = self.policies.get(demon).ok_or_else(|| HordeError::Config(format!("no demon {demon}")))?;
        let tiles = self.coder.encode_state(s)?;
        Ok(self.coder.q_values(&p.theta, &tiles)?)
    }

    pub fn greedy_action(&self, demon: usize, s: McState) -> Result<McAction, HordeError> {
        let q = self.q_values(demon, s)?;
        Ok(McAction::from_index(argmax(&q).expect("actions exist")).expect("three actions"))
    }

    fn voter_q_values(&self, s: McState) -> Result<Vec<Vec<f64>>, HordeError> {
        let tiles = self.coder.encode_state(s)?;
        Ok(self.policies[1.min(self.policies.len())..]
            .iter()
            .map(|p| self.coder.q_values(&p.theta, &tiles))
            .collect::<Result<Vec<_>, _>>()?)
    }

    /// Action of the ensemble formed by demons `1..`, lowest index on ties.
    /// Demon 0 never votes.
    pub fn ensemble_action(&self, s: McState, method: VotingMethod) -> Result<McAction, HordeError> {
        let a = voting::ensemble_action(&self.voter_q_values(s)?, method)?;
        Ok(McAction::from_index(a).expect("three actions"))
    }

    /// Like [`ensemble_action`](Self::ensemble_action) with an explicit tie rule.
    pub fn ensemble_action_with<R: Rng + ?Sized>(
        &self,
        s: McState,
        method: VotingMethod,
        tie: TieBreak,
        rng: &mut R,
    ) -> Result<McAction, HordeError> {
        let a = voting::ensemble_action_with(&self.voter_q_values(s)?, method, tie, rng)?;
        Ok(McAction::from_index(a).expect("three actions"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{MountainCar, UniformBehavior};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(name: &str, potential: Option<Potential>, alpha: f64) -> DemonSpec {
        DemonSpec { name: name.into(), potential, alpha }
    }

    fn four_demons() -> HordeConfig {
        HordeConfig {
            demons: vec![
                spec("no-shaping", None, 0.1),
                spec("right", Some(Potential::right(10.0).unwrap()), 0.05),
                spec("height", Some(Potential::height(10.0).unwrap()), 0.1),
                spec("speed", Some(Potential::speed(10.0).unwrap()), 0.1),
            ],
            gamma: 0.99,
            lambda: 0.4,
            beta: 0.0001,
            tiles: TileCoderConfig::default(),
            normalize_alpha: true,
        }
    }

    fn drive(h: &mut Horde, steps: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = MountainCar.reset();
        for _ in 0..steps {
            let a = UniformBehavior.sample(&mut rng);
            let t = MountainCar.step(s, a);
            h.observe(&t, UniformBehavior.prob(a)).unwrap();
            s = if t.terminal {
                h.end_episode();
                MountainCar.reset()
            } else {
                t.to
            };
        }
    }

    #[test]
    fn base_demon_must_be_unshaped() {
        let mut cfg = four_demons();
        cfg.demons.swap(0, 1);
        assert!(matches!(Horde::new(&cfg), Err(HordeError::Config(_))));
        cfg.demons.clear();
        assert!(Horde::new(&cfg).is_err());
    }

    #[test]
    fn reward_vector_recomposes_shaping() {
        let h = Horde::new(&four_demons()).unwrap();
        let t = MountainCar.step(McState::new(-0.3, 0.02), McAction::Forward);
        let g = 0.99;
        let f = |p: Potential| g * p.phi(t.to) - p.phi(t.from);
        let expected = [
            -1.0,
            -1.0 + f(Potential::right(10.0).unwrap()),
            -1.0 + f(Potential::height(10.0).unwrap()),
            -1.0 + f(Potential::speed(10.0).unwrap()),
        ];
        let r = h.reward_vector(&t);
        assert_eq!(r[0], -1.0);
        for i in 0..4 {
            assert!((r[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_potentials_collapse_demons() {
        let mut cfg = four_demons();
        for d in cfg.demons.iter_mut().skip(1) {
            d.potential = Some(Potential::right(0.0).unwrap());
            d.alpha = 0.1;
        }
        let mut h = Horde::new(&cfg).unwrap();
        drive(&mut h, 3000, 1);
        let t0 = h.demons()[0].weights().theta().to_vec();
        for d in h.demons() {
            assert_eq!(d.weights().theta(), &t0[..]);
        }
        assert!(t0.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn demon_order_does_not_matter() {
        let cfg = four_demons();
        let mut reordered = cfg.clone();
        reordered.demons[1..].reverse();
        let mut a = Horde::new(&cfg).unwrap();
        let mut b = Horde::new(&reordered).unwrap();
        drive(&mut a, 5000, 2);
        drive(&mut b, 5000, 2);
        for d in a.demons() {
            let other = b.demons().iter().find(|o| o.name() == d.name()).unwrap();
            assert_eq!(d.weights().theta(), other.weights().theta());
            assert_eq!(d.weights().w(), other.weights().w());
        }
    }

    #[test]
    fn snapshot_is_frozen() {
        let mut h = Horde::new(&four_demons()).unwrap();
        drive(&mut h, 2000, 3);
        let snap = h.snapshot();
        let probe = [McState::new(-0.5, 0.0), McState::new(0.2, -0.05), McState::new(-1.0, 0.06)];
        let before: Vec<_> = probe.iter().map(|&s| snap.q_values(2, s).unwrap()).collect();
        // Q values recomputed from the live weights at snapshot time
        let live = &h.demons()[2].weights().theta().to_vec();
        for (s, q) in probe.iter().zip(&before) {
            for a in McAction::ALL {
                let f = h.coder().featurize(*s, a).unwrap();
                assert_eq!(q[a.index()], f.dot(live).unwrap());
            }
        }
        drive(&mut h, 100, 4);
        let after: Vec<_> = probe.iter().map(|&s| snap.q_values(2, s).unwrap()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn zero_snapshot_picks_action_zero() {
        let h = Horde::new(&four_demons()).unwrap();
        let snap = h.snapshot();
        let s = McState::new(0.1, 0.01);
        for d in 0..4 {
            assert_eq!(snap.greedy_action(d, s).unwrap(), McAction::Reverse);
        }
        assert_eq!(snap.ensemble_action(s, VotingMethod::Rank).unwrap(), McAction::Reverse);
    }

    #[test]
    fn lone_base_demon_cannot_vote() {
        let mut cfg = four_demons();
        cfg.demons.truncate(1);
        let h = Horde::new(&cfg).unwrap();
        let err = h.snapshot().ensemble_action(McState::new(0.0, 0.0), VotingMethod::Rank).unwrap_err();
        assert_eq!(err, HordeError::Vote(VoteError::NoVoters));
    }

    #[test]
    fn bad_behavior_probability() {
        let mut h = Horde::new(&four_demons()).unwrap();
        let t = MountainCar.step(MountainCar.reset(), McAction::Coast);
        assert!(h.observe(&t, 0.0).is_err());
    }

    #[test]
    fn every_demon_learns() {
        let mut h = Horde::new(&four_demons()).unwrap();
        drive(&mut h, 4000, 5);
        for d in h.demons() {
            assert!(d.weights().theta().iter().any(|&v| v != 0.0), "{}", d.name());
            assert!(d.weights().theta().iter().all(|v| v.is_finite()));
        }
    }
}
