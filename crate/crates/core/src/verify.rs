//! Self-check suite behind `shaping-horde verify`: each property compares
//! the implementation against an independent oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{McAction, McState, MountainCar};
use crate::gq::{two_timescale_update, GqParams, WeightPair};
use crate::oracles::{
    chain_mdp, optimal_action_set, random_mdp, sup_error, tabular_q_learning, train_gq_tabular_with, value_iteration,
    StepSchedule, UpdateFn,
};
use crate::shaping::{Potential, PotentialKind, PotentialTable, ShapingReward};
use crate::tiles::SparseFeatures;
use crate::voting::{ensemble_action, preferences, VotingMethod};

/// Tie tolerance when comparing optimal action sets.
pub const TIE_TOLERANCE: f64 = 1e-9;
/// Required sup-norm error of tabular Greedy-GQ(λ) on the chain.
pub const CHAIN_TOLERANCE: f64 = 1e-2;
pub const CHAIN_STEPS: usize = 200_000;
/// Tolerance of the exact algebraic checks.
pub const EXACT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Optimal action sets of random 6-state, 3-action MDPs are unchanged by
/// potential-based shaping. Potentials are uniform in `[-scale, scale]`.
pub fn shaping_invariance(cases: usize, scale: f64, seed: u64) -> PropertyResult {
    let name = if scale == 1.0 { "shaping invariance" } else { "shaping invariance (scaled potential)" };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let gamma = rng.gen_range(0.5..0.95);
        let m = random_mdp(&mut rng, 6, 3, gamma);
        let potential: Vec<f64> = (0..6).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        let shaped = m.shaped(&potential).expect("finite potential");
        let (plain, with_f) = match (value_iteration(&m, 1e-12), value_iteration(&shaped, 1e-12)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return PropertyResult::new(name, false, format!("case {case}: {e}")),
        };
        for s in 0..6 {
            let a = optimal_action_set(plain.q_row(s), TIE_TOLERANCE);
            let b = optimal_action_set(with_f.q_row(s), TIE_TOLERANCE);
            if a != b {
                return PropertyResult::new(name, false, format!("case {case}, state {s}: {a:?} vs {b:?}"));
            }
        }
    }
    PropertyResult::new(name, true, format!("{cases} random MDPs, potential scale {scale}"))
}

/// Sup-norm error of tabular Greedy-GQ(λ=0.4) on the 5-state chain after
/// `steps` uniform-behavior steps, using `update` as the learning rule.
pub fn chain_error(update: UpdateFn, steps: usize) -> Result<f64, String> {
    let m = chain_mdp(5, 0.9).map_err(|e| e.to_string())?;
    let q_star = value_iteration(&m, 1e-12).map_err(|e| e.to_string())?.q;
    let p = GqParams { alpha: 0.1, beta: 0.05, lambda: 0.4, gamma: 0.9 };
    let theta = train_gq_tabular_with(&m, &p, 0, steps, 11, update).map_err(|e| e.to_string())?;
    Ok(sup_error(&m, &theta, &q_star))
}

pub fn gq_chain_convergence() -> PropertyResult {
    let name = "greedy-gq chain convergence";
    match chain_error(WeightPair::update, CHAIN_STEPS) {
        Ok(err) => PropertyResult::new(
            name,
            err < CHAIN_TOLERANCE,
            format!("|theta - Q*|inf = {err:.3e} after {CHAIN_STEPS} steps (need < {CHAIN_TOLERANCE})"),
        ),
        Err(e) => PropertyResult::new(name, false, e),
    }
}

/// The convergence check must reject a learner whose trace accumulates −φ.
pub fn mutant_detected() -> PropertyResult {
    let name = "trace sign mutant detected";
    match chain_error(WeightPair::update_with_trace_sign_fault, CHAIN_STEPS) {
        Ok(err) => PropertyResult::new(name, err >= CHAIN_TOLERANCE, format!("mutant error {err:.3e}")),
        Err(e) => PropertyResult::new(name, true, format!("mutant failed: {e}")),
    }
}

fn random_features(rng: &mut ChaCha8Rng, dim: usize) -> SparseFeatures {
    let k = rng.gen_range(1..=4);
    SparseFeatures::new((0..k).map(|_| rng.gen_range(0..dim)).collect(), dim).expect("in range")
}

/// With λ = 0 and a fresh trace, the Greedy-GQ(λ) update equals the
/// trace-free two-timescale form.
pub fn lambda_zero_identity(cases: usize, seed: u64) -> PropertyResult {
    let name = "lambda=0 identity";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let dim = rng.gen_range(2..16);
        let theta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let phi = random_features(&mut rng, dim);
        let phi_next = if rng.gen_bool(0.1) { SparseFeatures::zero(dim) } else { random_features(&mut rng, dim) };
        let p = GqParams {
            alpha: rng.gen_range(0.0..0.5),
            beta: rng.gen_range(0.0..0.5),
            lambda: 0.0,
            gamma: rng.gen_range(0.0..=1.0),
        };
        let r = rng.gen_range(-5.0..5.0);
        let mut wp = WeightPair::from_weights(theta.clone(), w.clone()).expect("same dims");
        let d1 = match wp.update(&p, r, &phi, &phi_next, 1.0) {
            Ok(d) => d,
            Err(e) => return PropertyResult::new(name, false, e.to_string()),
        };
        let (mut t2, mut w2) = (theta, w);
        let d2 =
            two_timescale_update(&mut t2, &mut w2, p.alpha, p.beta, p.gamma, r, &phi.to_dense(), &phi_next.to_dense());
        worst = worst.max((d1 - d2).abs());
        for i in 0..dim {
            worst = worst.max((wp.theta()[i] - t2[i]).abs()).max((wp.w()[i] - w2[i]).abs());
        }
    }
    PropertyResult::new(name, worst <= EXACT_TOLERANCE, format!("{cases} cases, max deviation {worst:.1e}"))
}

fn random_potential(rng: &mut ChaCha8Rng) -> Potential {
    let kind = match rng.gen_range(0..4) {
        0 => PotentialKind::Right,
        1 => PotentialKind::Height,
        2 => PotentialKind::Speed,
        _ => {
            let values = (0..25).map(|_| rng.gen_range(0.0..1.0)).collect();
            PotentialKind::Table(PotentialTable::new([5, 5], values).expect("valid table"))
        }
    };
    Potential::new(kind, 1.0).expect("unit scale")
}

/// Undiscounted shaping rewards along random trajectories sum to
/// `Φ(end) − Φ(start)`.
pub fn telescoping(cases: usize, seed: u64) -> PropertyResult {
    let name = "telescoping shaping sum";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let pot = random_potential(&mut rng);
        let sr = ShapingReward::new(pot.clone(), 1.0).expect("gamma 1 is valid");
        let start = McState::new(rng.gen_range(-1.2..0.5), rng.gen_range(-0.07..=0.07));
        let mut s = start;
        let mut total = 0.0;
        for _ in 0..rng.gen_range(1..300) {
            let t = MountainCar.step(s, McAction::ALL[rng.gen_range(0..3)]);
            total += sr.reward(s, t.to);
            s = t.to;
            if t.terminal {
                break;
            }
        }
        worst = worst.max((total - (pot.phi(s) - pot.phi(start))).abs());
    }
    PropertyResult::new(name, worst <= EXACT_TOLERANCE, format!("{cases} trajectories, max deviation {worst:.1e}"))
}

/// Rank preferences, and so the ensemble action, are unchanged when each
/// voter's Q values go through its own strictly increasing map.
pub fn rank_invariance(cases: usize, seed: u64) -> PropertyResult {
    let name = "rank vote invariance";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let voters = rng.gen_range(1..6);
        // coarse values so ties occur
        let qs: Vec<Vec<f64>> =
            (0..voters).map(|_| (0..3).map(|_| f64::from(rng.gen_range(-6i32..6)) * 0.5).collect()).collect();
        let transformed: Vec<Vec<f64>> = qs
            .iter()
            .map(|q| {
                let (scale, shift) = (rng.gen_range(0.01..100.0), rng.gen_range(-100.0..100.0));
                let cubic = rng.gen_bool(0.5);
                q.iter().map(|&v| if cubic { v * v * v + v + shift } else { scale * v + shift }).collect()
            })
            .collect();
        let same_prefs = preferences(&qs, VotingMethod::Rank) == preferences(&transformed, VotingMethod::Rank);
        let same_action = ensemble_action(&qs, VotingMethod::Rank) == ensemble_action(&transformed, VotingMethod::Rank);
        if !(same_prefs && same_action) {
            return PropertyResult::new(name, false, format!("case {case}: {qs:?} vs {transformed:?}"));
        }
    }
    PropertyResult::new(name, true, format!("{cases} random cases"))
}

/// Tabular Q-learning reaches the value-iteration fixed point on the chain.
pub fn q_learning_matches_value_iteration() -> PropertyResult {
    let name = "q-learning vs value iteration";
    let m = chain_mdp(5, 0.9).expect("valid chain");
    let q_star = match value_iteration(&m, 1e-12) {
        Ok(sol) => sol.q,
        Err(e) => return PropertyResult::new(name, false, e.to_string()),
    };
    let q = tabular_q_learning(&m, 0, 100_000, StepSchedule::Constant(0.1), 7);
    let err = sup_error(&m, &q, &q_star);
    PropertyResult::new(name, err < CHAIN_TOLERANCE, format!("|Q - Q*|inf = {err:.3e}"))
}

/// Every property, in a fixed order.
pub fn run_all() -> Vec<PropertyResult> {
    vec![
        shaping_invariance(50, 1.0, 1),
        shaping_invariance(50, 1000.0, 2),
        gq_chain_convergence(),
        mutant_detected(),
        lambda_zero_identity(1000, 3),
        telescoping(1000, 4),
        rank_invariance(1000, 5),
        q_learning_matches_value_iteration(),
    ]
}
