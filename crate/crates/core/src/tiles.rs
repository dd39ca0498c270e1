//! Grid tile coding of the two-dimensional mountain-car state, with one
//! disjoint block of weights per action.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{McAction, McState, POSITION_MAX, POSITION_MIN, VELOCITY_MAX, VELOCITY_MIN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("state dimension {dim} value {value} outside [{lo}, {hi}]")]
    OutOfRange { dim: usize, value: f64, lo: f64, hi: f64 },
    #[error("dimension mismatch: weights have {weights}, features have {features}")]
    DimensionMismatch { weights: usize, features: usize },
    #[error("action index {0} out of range")]
    BadAction(usize),
    #[error("invalid tile coder config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TileCoderConfig {
    pub tilings: usize,
    /// Cells per dimension (position, velocity).
    pub grid: [usize; 2],
    pub state_ranges: [[f64; 2]; 2],
    pub action_count: usize,
    /// Per-tiling displacement in units of one cell, each component in
    /// [0, 1). Empty means uniform diagonal offsets k / tilings.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub offsets: Vec<[f64; 2]>,
}

impl Default for TileCoderConfig {
    fn default() -> Self {
        Self {
            tilings: 10,
            grid: [10, 10],
            state_ranges: [[POSITION_MIN, POSITION_MAX], [VELOCITY_MIN, VELOCITY_MAX]],
            action_count: McAction::COUNT,
            offsets: Vec::new(),
        }
    }
}

impl TileCoderConfig {
    pub fn total_dim(&self) -> usize {
        self.tilings * self.grid[0] * self.grid[1] * self.action_count
    }
}

/// Active binary features: strictly increasing indices below `total_dim`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseFeatures {
    active: Vec<usize>,
    total_dim: usize,
}

impl SparseFeatures {
    /// Builds a feature set, sorting and deduplicating `active`.
    pub fn new(mut active: Vec<usize>, total_dim: usize) -> Result<Self, FeatureError> {
        active.sort_unstable();
        active.dedup();
        if let Some(&last) = active.last() {
            if last >= total_dim {
                return Err(FeatureError::DimensionMismatch { weights: total_dim, features: last + 1 });
            }
        }
        Ok(Self { active, total_dim })
    }

    /// The all-zero feature vector (used as the bootstrap target at terminal
    /// transitions).
    pub fn zero(total_dim: usize) -> Self {
        Self { active: Vec::new(), total_dim }
    }

    pub fn one_hot(index: usize, total_dim: usize) -> Result<Self, FeatureError> {
        Self::new(vec![index], total_dim)
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn is_zero(&self) -> bool {
        self.active.is_empty()
    }

    pub fn dot(&self, theta: &[f64]) -> Result<f64, FeatureError> {
        dot(theta, self)
    }

    /// Dense 0/1 expansion.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.total_dim];
        for &i in &self.active {
            v[i] = 1.0;
        }
        v
    }

    pub(crate) fn dot_unchecked(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.total_dim);
        self.active.iter().map(|&i| theta[i]).sum()
    }
}

/// Linear value of binary features: the sum of the active weights.
pub fn dot(theta: &[f64], f: &SparseFeatures) -> Result<f64, FeatureError> {
    if theta.len() != f.total_dim {
        return Err(FeatureError::DimensionMismatch { weights: theta.len(), features: f.total_dim });
    }
    Ok(f.dot_unchecked(theta))
}

/// Tile indices of one state, relative to an action block. One index per
/// tiling, strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateTiles(Vec<usize>);

impl StateTiles {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Clone, Debug)]
pub struct TileCoder {
    cfg: TileCoderConfig,
    offsets: Vec<[f64; 2]>,
    cells_per_tiling: usize,
    block: usize,
}

impl TileCoder {
    pub fn new(cfg: TileCoderConfig) -> Result<Self, FeatureError> {
        if cfg.tilings == 0 || cfg.grid.contains(&0) || cfg.action_count == 0 {
            return Err(FeatureError::InvalidConfig("tilings, grid and action_count must be positive".into()));
        }
        for (d, r) in cfg.state_ranges.iter().enumerate() {
            if !r[0].is_finite() || !r[1].is_finite() || r[0] >= r[1] {
                return Err(FeatureError::InvalidConfig(format!(
                    "state range {d} must be a finite interval with lo < hi"
                )));
            }
        }
        let offsets = if cfg.offsets.is_empty() {
            (0..cfg.tilings)
                .map(|k| {
                    let o = k as f64 / cfg.tilings as f64;
                    [o, o]
                })
                .collect()
        } else {
            if cfg.offsets.len() != cfg.tilings {
                return Err(FeatureError::InvalidConfig(format!(
                    "{} offsets given for {} tilings",
                    cfg.offsets.len(),
                    cfg.tilings
                )));
            }
            if cfg.offsets.iter().flatten().any(|o| !(0.0..1.0).contains(o)) {
                return Err(FeatureError::InvalidConfig("offsets must lie in [0, 1)".into()));
            }
            cfg.offsets.clone()
        };
        let cells_per_tiling = cfg.grid[0] * cfg.grid[1];
        let block = cfg.tilings * cells_per_tiling;
        Ok(Self { cfg, offsets, cells_per_tiling, block })
    }

    pub fn config(&self) -> &TileCoderConfig {
        &self.cfg
    }

    pub fn total_dim(&self) -> usize {
        self.block * self.cfg.action_count
    }

    pub fn action_count(&self) -> usize {
        self.cfg.action_count
    }

    pub fn tilings(&self) -> usize {
        self.cfg.tilings
    }

    pub fn encode_state(&self, s: McState) -> Result<StateTiles, FeatureError> {
        let x = [s.position, s.velocity];
        for (d, &v) in x.iter().enumerate() {
            let [lo, hi] = self.cfg.state_ranges[d];
            if !(lo..=hi).contains(&v) {
                return Err(FeatureError::OutOfRange { dim: d, value: v, lo, hi });
            }
        }
        let idx = self
            .offsets
            .iter()
            .enumerate()
            .map(|(k, off)| {
                let mut cell = [0usize; 2];
                for d in 0..2 {
                    let [lo, hi] = self.cfg.state_ranges[d];
                    let g = self.cfg.grid[d];
                    let coord = (x[d] - lo) / (hi - lo) * g as f64 + off[d];
                    // the top cell is right-closed and absorbs offset overhang
                    cell[d] = (coord.floor() as usize).min(g - 1);
                }
                k * self.cells_per_tiling + cell[1] * self.cfg.grid[0] + cell[0]
            })
            .collect();
        Ok(StateTiles(idx))
    }

    pub fn features_for(&self, tiles: &StateTiles, action: usize) -> Result<SparseFeatures, FeatureError> {
        if action >= self.cfg.action_count {
            return Err(FeatureError::BadAction(action));
        }
        let base = action * self.block;
        Ok(SparseFeatures { active: tiles.0.iter().map(|&i| base + i).collect(), total_dim: self.total_dim() })
    }

    pub fn featurize(&self, s: McState, a: McAction) -> Result<SparseFeatures, FeatureError> {
        let tiles = self.encode_state(s)?;
        self.features_for(&tiles, a.index())
    }

    /// Feature sets for every action at one state.
    pub fn featurize_all(&self, s: McState) -> Result<Vec<SparseFeatures>, FeatureError> {
        let tiles = self.encode_state(s)?;
        (0..self.cfg.action_count).map(|a| self.features_for(&tiles, a)).collect()
    }

    /// Q(s, a) for every action; `theta` must have `total_dim` entries.
    pub fn q_values(&self, theta: &[f64], tiles: &StateTiles) -> Result<Vec<f64>, FeatureError> {
        if theta.len() != self.total_dim() {
            return Err(FeatureError::DimensionMismatch { weights: theta.len(), features: self.total_dim() });
        }
        Ok((0..self.cfg.action_count)
            .map(|a| {
                let block = &theta[a * self.block..(a + 1) * self.block];
                tiles.0.iter().map(|&i| block[i]).sum()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn coder() -> TileCoder {
        TileCoder::new(TileCoderConfig::default()).unwrap()
    }

    #[test]
    fn default_dimension() {
        assert_eq!(coder().total_dim(), 3000);
    }

    #[test]
    fn ten_active_features() {
        let f = coder().featurize(McState::new(-0.5, 0.0), McAction::Coast).unwrap();
        assert_eq!(f.active().len(), 10);
    }

    #[test]
    fn actions_use_disjoint_blocks() {
        let c = coder();
        let s = McState::new(0.1, -0.03);
        let fs = c.featurize_all(s).unwrap();
        for a in 0..3 {
            for &i in fs[a].active() {
                assert!(i >= a * 1000 && i < (a + 1) * 1000);
                for b in (0..3).filter(|&b| b != a) {
                    assert!(!fs[b].active().contains(&i));
                }
            }
        }
    }

    #[test]
    fn range_minimum_hits_origin_cell() {
        let c = coder();
        let f = c.featurize(McState::new(POSITION_MIN, VELOCITY_MIN), McAction::Reverse).unwrap();
        // tiling 0, cell (0, 0), action block 0
        assert_eq!(f.active()[0], 0);
    }

    #[test]
    fn explicit_floor_reference() {
        // Recompute cells by hand for a fixed state and tiling 3.
        let c = coder();
        let s = McState::new(0.13, 0.021);
        let px: f64 = (0.13 + 1.2) / 1.8 * 10.0 + 0.3; // 7.6888.. -> 7
        let vx: f64 = (0.021 + 0.07) / 0.14 * 10.0 + 0.3; // 6.8 -> 6
        assert_eq!((px.floor(), vx.floor()), (7.0, 6.0));
        let f = c.featurize(s, McAction::Forward).unwrap();
        assert_eq!(f.active()[3], 2000 + 3 * 100 + 6 * 10 + 7);
    }

    #[test]
    fn goal_boundary_maps_to_last_cell() {
        let c = coder();
        let f = c.featurize(McState::new(POSITION_MAX, VELOCITY_MAX), McAction::Reverse).unwrap();
        assert_eq!(f.active()[0], 99);
        assert_eq!(f.active()[9], 999);
    }

    #[test]
    fn out_of_range_rejected() {
        let err = coder().featurize(McState::new(0.7, 0.0), McAction::Coast).unwrap_err();
        assert!(matches!(err, FeatureError::OutOfRange { dim: 0, .. }));
    }

    #[test]
    fn bad_offsets_rejected() {
        let cfg = TileCoderConfig { offsets: vec![[0.0, 0.0]; 3], ..Default::default() };
        assert!(TileCoder::new(cfg).is_err());
    }

    #[test]
    fn dot_basics() {
        let c = coder();
        let f = c.featurize(McState::new(-0.5, 0.0), McAction::Coast).unwrap();
        assert_eq!(dot(&vec![0.0; 3000], &f).unwrap(), 0.0);
        assert_eq!(dot(&vec![1.0; 3000], &f).unwrap(), 10.0);
        assert!(matches!(dot(&[1.0; 10], &f), Err(FeatureError::DimensionMismatch { .. })));
    }

    #[test]
    fn dot_matches_dense_expansion() {
        let c = coder();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let theta: Vec<f64> = (0..3000).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let s = McState::new(rng.gen_range(-1.2..0.6), rng.gen_range(-0.07..0.07));
            let f = c.featurize(s, McAction::ALL[rng.gen_range(0..3)]).unwrap();
            let dense: f64 = f.to_dense().iter().zip(&theta).map(|(x, t)| x * t).sum();
            assert!((f.dot(&theta).unwrap() - dense).abs() < 1e-12);
        }
    }

    #[test]
    fn q_values_agree_with_featurize() {
        let c = coder();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta: Vec<f64> = (0..3000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = McState::new(-0.9, 0.04);
        let q = c.q_values(&theta, &c.encode_state(s).unwrap()).unwrap();
        for a in McAction::ALL {
            assert_eq!(q[a.index()], c.featurize(s, a).unwrap().dot(&theta).unwrap());
        }
    }

    proptest! {
        #[test]
        fn features_are_valid(p in POSITION_MIN..=POSITION_MAX, v in VELOCITY_MIN..=VELOCITY_MAX, a in 0usize..3) {
            let c = coder();
            let f = c.featurize(McState::new(p, v), McAction::ALL[a]).unwrap();
            prop_assert_eq!(f.active().len(), 10);
            prop_assert!(f.active().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(f.active().iter().all(|&i| i >= a * 1000 && i < (a + 1) * 1000));
        }
    }
}
