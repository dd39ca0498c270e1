//! State potentials for mountain car and the potential-based shaping reward
//! `F(s, s') = gamma * phi(s') - phi(s)`.

use thiserror::Error;

use crate::env::{McState, POSITION_MAX, POSITION_MIN, VELOCITY_MAX, VELOCITY_MIN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapingError {
    #[error("potential scale must be finite and non-negative, got {0}")]
    BadScale(f64),
    #[error("discount must lie in (0, 1], got {0}")]
    BadGamma(f64),
    #[error("potential table: {0}")]
    BadTable(String),
}

/// Lookup potential over a regular grid on the state box. Values are the
/// normalized potential and must lie in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTable {
    grid: [usize; 2],
    values: Vec<f64>,
}

impl PotentialTable {
    /// `values` is row-major with position varying fastest.
    pub fn new(grid: [usize; 2], values: Vec<f64>) -> Result<Self, ShapingError> {
        if grid.contains(&0) || values.len() != grid[0] * grid[1] {
            return Err(ShapingError::BadTable(format!(
                "{} values do not fill a {}x{} grid",
                values.len(),
                grid[0],
                grid[1]
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ShapingError::BadTable("values must lie in [0, 1]".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> [usize; 2] {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn lookup(&self, s: McState) -> f64 {
        let cell = |v: f64, lo: f64, hi: f64, g: usize| {
            (((v - lo) / (hi - lo) * g as f64).floor().max(0.0) as usize).min(g - 1)
        };
        let i = cell(s.position, POSITION_MIN, POSITION_MAX, self.grid[0]);
        let j = cell(s.velocity, VELOCITY_MIN, VELOCITY_MAX, self.grid[1]);
        self.values[j * self.grid[0] + i]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialKind {
    /// Progress to the right: (x + 1.2) / 1.8.
    Right,
    /// Mountain height sin(3x), mapped to [0, 1].
    Height,
    /// Kinetic energy (xdot / 0.07)^2.
    Speed,
    Table(PotentialTable),
}

impl PotentialKind {
    pub fn label(&self) -> &'static str {
        match self {
            PotentialKind::Right => "right",
            PotentialKind::Height => "height",
            PotentialKind::Speed => "speed",
            PotentialKind::Table(_) => "table",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    scale: f64,
}

impl Potential {
    pub fn new(kind: PotentialKind, scale: f64) -> Result<Self, ShapingError> {
        if !scale.is_finite() || scale < 0.0 {
            return Err(ShapingError::BadScale(scale));
        }
        Ok(Self { kind, scale })
    }

    pub fn right(scale: f64) -> Result<Self, ShapingError> {
        Self::new(PotentialKind::Right, scale)
    }

    pub fn height(scale: f64) -> Result<Self, ShapingError> {
        Self::new(PotentialKind::Height, scale)
    }

    pub fn speed(scale: f64) -> Result<Self, ShapingError> {
        Self::new(PotentialKind::Speed, scale)
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Normalized value in [0, 1] before scaling.
    pub fn normalized(&self, s: McState) -> f64 {
        let v = match &self.kind {
            PotentialKind::Right => (s.position - POSITION_MIN) / (POSITION_MAX - POSITION_MIN),
            PotentialKind::Height => ((3.0 * s.position).sin() + 1.0) / 2.0,
            PotentialKind::Speed => (s.velocity / VELOCITY_MAX).powi(2),
            PotentialKind::Table(t) => t.lookup(s),
        };
        v.clamp(0.0, 1.0)
    }

    pub fn phi(&self, s: McState) -> f64 {
        self.scale * self.normalized(s)
    }
}

/// `gamma * phi_next - phi`.
#[inline]
pub fn potential_difference(gamma: f64, phi: f64, phi_next: f64) -> f64 {
    gamma * phi_next - phi
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShapingReward {
    potential: Potential,
    gamma: f64,
}

impl ShapingReward {
    pub fn new(potential: Potential, gamma: f64) -> Result<Self, ShapingError> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(ShapingError::BadGamma(gamma));
        }
        Ok(Self { potential, gamma })
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn reward(&self, s: McState, s_next: McState) -> f64 {
        potential_difference(self.gamma, self.potential.phi(s), self.potential.phi(s_next))
    }
}
