//! Greedy-GQ(λ): linear off-policy gradient-TD control with eligibility
//! traces, targeting the greedy policy with respect to the primary weights.
//!
//! Per transition `(φ, r, φ̄')`, where `φ̄'` are the features of the greedy
//! next action (zero at terminal transitions) and `ρ` the importance ratio:
//!
//! ```text
//! δ  = r + γ θᵀφ̄' − θᵀφ
//! e  ← φ + γλρ e
//! θ  ← θ + α [δ e − γ(1−λ)(eᵀw) φ̄']
//! w  ← w + β [δ e − (φᵀw) φ]
//! ```
//!
//! With a deterministic greedy target, `ρ` is zero whenever the behavior
//! action is not greedy, which cuts the inherited trace (Watkins-style); the
//! current features always enter it. The trace is stored densely but
//! updated only over its support, which stays small.

use thiserror::Error;

use crate::tiles::{FeatureError, SparseFeatures};

/// Largest admissible |θ_i| before a learner is declared diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("learner diverged: {0}")]
    Diverged(String),
    #[error("no actions to choose from")]
    NoActions,
    #[error("behavior probability must be in (0, 1], got {0}")]
    BadBehaviorProb(f64),
    #[error("importance ratio must be finite and non-negative, got {0}")]
    BadRatio(f64),
    #[error("invalid learning parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GqParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl GqParams {
    pub fn validate(&self) -> Result<(), LearnError> {
        let finite = [self.alpha, self.beta, self.lambda, self.gamma].iter().all(|v| v.is_finite() && *v >= 0.0);
        if !finite {
            return Err(LearnError::BadParams(format!("{self:?}: all must be finite and >= 0")));
        }
        if self.lambda > 1.0 {
            return Err(LearnError::BadParams(format!("lambda {} > 1", self.lambda)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(LearnError::BadParams(format!("gamma {} not in (0, 1]", self.gamma)));
        }
        Ok(())
    }
}

/// Index of the largest value, lowest index on ties. `None` when empty.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if v.partial_cmp(&values[b]) != Some(std::cmp::Ordering::Greater) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Greedy action under `theta`: argmax over `θᵀφ(s, a)`, lowest index on ties.
pub fn greedy_action(theta: &[f64], feats_per_action: &[SparseFeatures]) -> Result<usize, LearnError> {
    if feats_per_action.is_empty() {
        return Err(LearnError::NoActions);
    }
    let q = feats_per_action.iter().map(|f| f.dot(theta)).collect::<Result<Vec<_>, _>>()?;
    Ok(argmax(&q).expect("non-empty"))
}

/// `π(taken | s) / b(taken | s)` for the deterministic greedy target.
pub fn importance_ratio(
    theta: &[f64],
    feats_per_action: &[SparseFeatures],
    taken: usize,
    behavior_prob: f64,
) -> Result<f64, LearnError> {
    if !(behavior_prob > 0.0 && behavior_prob <= 1.0) {
        return Err(LearnError::BadBehaviorProb(behavior_prob));
    }
    let greedy = greedy_action(theta, feats_per_action)?;
    Ok(if taken == greedy { 1.0 / behavior_prob } else { 0.0 })
}

/// Primary weights θ, correction weights w and the eligibility trace e.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightPair {
    theta: Vec<f64>,
    w: Vec<f64>,
    trace: Vec<f64>,
    support: Vec<usize>,
    in_support: Vec<bool>,
}

impl WeightPair {
    pub fn zeros(dim: usize) -> Self {
        Self {
            theta: vec![0.0; dim],
            w: vec![0.0; dim],
            trace: vec![0.0; dim],
            support: Vec::new(),
            in_support: vec![false; dim],
        }
    }

    /// Starts from the given primary and correction weights with an empty trace.
    pub fn from_weights(theta: Vec<f64>, w: Vec<f64>) -> Result<Self, FeatureError> {
        if theta.len() != w.len() {
            return Err(FeatureError::DimensionMismatch { weights: theta.len(), features: w.len() });
        }
        let dim = theta.len();
        Ok(Self { theta, w, ..Self::zeros(dim) })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// Dense view of the eligibility trace.
    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    /// Indices where the trace may be non-zero, ascending.
    pub fn trace_support(&self) -> &[usize] {
        &self.support
    }

    pub fn q(&self, f: &SparseFeatures) -> Result<f64, FeatureError> {
        f.dot(&self.theta)
    }

    /// Zeroes the eligibility trace; call at every episode boundary.
    pub fn reset_trace(&mut self) {
        for &i in &self.support {
            self.trace[i] = 0.0;
            self.in_support[i] = false;
        }
        self.support.clear();
    }

    /// One Greedy-GQ(λ) step. `phi_bar_next` must be the greedy next
    /// features under the current θ, or the zero set at terminal transitions.
    /// Returns the TD error δ.
    pub fn update(
        &mut self,
        p: &GqParams,
        reward: f64,
        phi: &SparseFeatures,
        phi_bar_next: &SparseFeatures,
        rho: f64,
    ) -> Result<f64, LearnError> {
        self.update_impl(p, reward, phi, phi_bar_next, rho, 1.0)
    }

    /// Same as [`update`](Self::update) but accumulates `-φ` into the trace.
    /// Exists only so the verification suite can show that the convergence
    /// check catches a sign error in the trace.
    #[doc(hidden)]
    pub fn update_with_trace_sign_fault(
        &mut self,
        p: &GqParams,
        reward: f64,
        phi: &SparseFeatures,
        phi_bar_next: &SparseFeatures,
        rho: f64,
    ) -> Result<f64, LearnError> {
        self.update_impl(p, reward, phi, phi_bar_next, rho, -1.0)
    }

    fn update_impl(
        &mut self,
        p: &GqParams,
        reward: f64,
        phi: &SparseFeatures,
        phi_bar_next: &SparseFeatures,
        rho: f64,
        feature_sign: f64,
    ) -> Result<f64, LearnError> {
        let dim = self.dim();
        for f in [phi, phi_bar_next] {
            if f.total_dim() != dim {
                return Err(FeatureError::DimensionMismatch { weights: dim, features: f.total_dim() }.into());
            }
        }
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(LearnError::BadRatio(rho));
        }

        let q = phi.dot_unchecked(&self.theta);
        let q_next = phi_bar_next.dot_unchecked(&self.theta);
        let delta = reward + p.gamma * q_next - q;
        let phi_w = phi.dot_unchecked(&self.w);

        // e <- phi + gamma * lambda * rho * e
        let decay = p.gamma * p.lambda * rho;
        if decay == 0.0 {
            self.reset_trace();
        } else {
            for &i in &self.support {
                self.trace[i] *= decay;
            }
        }
        let mut grew = false;
        for &i in phi.active() {
            if !self.in_support[i] {
                self.in_support[i] = true;
                self.support.push(i);
                grew = true;
            }
            self.trace[i] += feature_sign;
        }
        if grew {
            self.support.sort_unstable();
        }

        let e_w: f64 = self.support.iter().map(|&i| self.trace[i] * self.w[i]).sum();
        let correction = p.gamma * (1.0 - p.lambda) * e_w;

        for &i in &self.support {
            self.theta[i] += p.alpha * delta * self.trace[i];
            self.w[i] += p.beta * delta * self.trace[i];
        }
        for &i in phi_bar_next.active() {
            self.theta[i] -= p.alpha * correction;
        }
        for &i in phi.active() {
            self.w[i] -= p.beta * phi_w;
        }

        self.check_divergence(delta, phi_bar_next)?;
        Ok(delta)
    }

    fn check_divergence(&self, delta: f64, phi_bar_next: &SparseFeatures) -> Result<(), LearnError> {
        if !delta.is_finite() {
            return Err(LearnError::Diverged(format!("non-finite TD error {delta}")));
        }
        // only entries touched by this step can have changed
        let touched = self.support.iter().chain(phi_bar_next.active());
        for &i in touched {
            let t = self.theta[i];
            if !t.is_finite() || t.abs() > DIVERGENCE_LIMIT || !self.w[i].is_finite() {
                return Err(LearnError::Diverged(format!(
                    "theta[{i}] = {t}, w[{i}] = {} (limit {DIVERGENCE_LIMIT})",
                    self.w[i]
                )));
            }
        }
        Ok(())
    }
}

/// The trace-free two-timescale gradient-TD update on dense vectors:
///
/// ```text
/// θ ← θ + α δ φ − α γ φ' (φᵀw)
/// w ← w + β (δ − φᵀw) φ
/// ```
///
/// Kept as an independent reference for the λ = 0 case of
/// [`WeightPair::update`]. Returns δ.
#[allow(clippy::too_many_arguments)]
pub fn two_timescale_update(
    theta: &mut [f64],
    w: &mut [f64],
    alpha: f64,
    beta: f64,
    gamma: f64,
    reward: f64,
    phi: &[f64],
    phi_next: &[f64],
) -> f64 {
    let dotv = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let delta = reward + gamma * dotv(theta, phi_next) - dotv(theta, phi);
    let phi_w = dotv(phi, w);
    for i in 0..theta.len() {
        theta[i] += alpha * delta * phi[i] - alpha * gamma * phi_next[i] * phi_w;
        w[i] += beta * (delta - phi_w) * phi[i];
    }
    delta
}
