//! Mountain car: deterministic dynamics, the fixed start state and the
//! uniform-random behavior policy.

use rand::Rng;

pub const POSITION_MIN: f64 = -1.2;
pub const POSITION_MAX: f64 = 0.6;
pub const VELOCITY_MIN: f64 = -0.07;
pub const VELOCITY_MAX: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.6;
pub const START_POSITION: f64 = -0.5;

const THRUST: f64 = 0.001;
const GRAVITY: f64 = 0.0025;
const STEP_REWARD: f64 = -1.0;

/// Position and velocity of the car.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McState {
    pub position: f64,
    pub velocity: f64,
}

impl McState {
    pub fn new(position: f64, velocity: f64) -> Self {
        Self { position, velocity }
    }

    pub fn in_bounds(&self) -> bool {
        (POSITION_MIN..=POSITION_MAX).contains(&self.position) && (VELOCITY_MIN..=VELOCITY_MAX).contains(&self.velocity)
    }

    pub fn is_goal(&self) -> bool {
        self.position >= GOAL_POSITION
    }
}

/// Throttle setting. Index order is reverse, coast, forward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum McAction {
    Reverse,
    Coast,
    Forward,
}

impl McAction {
    pub const COUNT: usize = 3;
    pub const ALL: [McAction; 3] = [McAction::Reverse, McAction::Coast, McAction::Forward];

    pub fn throttle(self) -> i8 {
        match self {
            McAction::Reverse => -1,
            McAction::Coast => 0,
            McAction::Forward => 1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

/// One sample from the behavior stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub from: McState,
    pub action: McAction,
    pub reward: f64,
    pub to: McState,
    pub terminal: bool,
}

/// The mountain-car dynamics. Stateless: episodes are driven by the caller.
#[derive(Clone, Copy, Debug, Default)]
pub struct MountainCar;

impl MountainCar {
    pub fn reset(&self) -> McState {
        McState::new(START_POSITION, 0.0)
    }

    pub fn step(&self, s: McState, a: McAction) -> Transition {
        let mut velocity = (s.velocity + THRUST * f64::from(a.throttle()) - GRAVITY * (3.0 * s.position).cos())
            .clamp(VELOCITY_MIN, VELOCITY_MAX);
        let position = (s.position + velocity).clamp(POSITION_MIN, POSITION_MAX);
        // inelastic left wall
        if position <= POSITION_MIN {
            velocity = 0.0;
        }
        let to = McState::new(position, velocity);
        Transition { from: s, action: a, reward: STEP_REWARD, to, terminal: to.is_goal() }
    }
}

/// Uniform distribution over the three throttle actions.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformBehavior;

impl UniformBehavior {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> McAction {
        McAction::ALL[rng.gen_range(0..McAction::COUNT)]
    }

    pub fn prob(&self, _a: McAction) -> f64 {
        1.0 / McAction::COUNT as f64
    }
}
