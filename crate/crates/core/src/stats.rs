//! Aggregation of evaluation records into learning curves and per-window
//! summaries, and the pooled two-sample Student's t-test used to mark
//! results that are not significantly different from the best.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::harness::EvalRecord;

/// Significance level for "not significantly different from the best".
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no evaluation records")]
    Empty,
    #[error("each sample needs at least two values (got {0} and {1})")]
    SampleTooSmall(usize, usize),
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("run {run_id} has {found} evaluation points for `{policy}`, expected {expected}")]
    UnevenRuns { run_id: u64, policy: String, found: usize, expected: usize },
    #[error("window fraction must be in (0, 1], got {0}")]
    BadWindow(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p value.
    pub p: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n − 1 denominator); 0 for fewer than two values.
fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Two-sided pooled-variance Student's t-test.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::SampleTooSmall(a.len(), b.len()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / df;
    let diff = mean(a) - mean(b);
    if pooled == 0.0 {
        return Ok(if diff == 0.0 {
            TTest { t: 0.0, df, p: 1.0 }
        } else {
            TTest { t: diff.signum() * f64::INFINITY, df, p: 0.0 }
        });
    }
    let t = diff / (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(TTest { t, df, p })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowStat {
    pub mean: f64,
    pub std: f64,
    /// One value per run, in run order.
    pub per_run: Vec<f64>,
    /// True when this is the best mean or not significantly different from it.
    pub near_best: bool,
}

impl WindowStat {
    fn from_runs(per_run: Vec<f64>) -> Self {
        Self { mean: mean(&per_run), std: variance(&per_run).sqrt(), per_run, near_best: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Cumulative,
    Initial,
    Final,
}

impl Window {
    pub const ALL: [Window; 3] = [Window::Cumulative, Window::Initial, Window::Final];

    pub fn label(self) -> &'static str {
        match self {
            Window::Cumulative => "cumulative",
            Window::Initial => "initial",
            Window::Final => "final",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub policy_id: String,
    pub cumulative: WindowStat,
    pub initial: WindowStat,
    pub final_: WindowStat,
}

impl SummaryRow {
    pub fn window(&self, w: Window) -> &WindowStat {
        match w {
            Window::Cumulative => &self.cumulative,
            Window::Initial => &self.initial,
            Window::Final => &self.final_,
        }
    }

    fn window_mut(&mut self, w: Window) -> &mut WindowStat {
        match w {
            Window::Cumulative => &mut self.cumulative,
            Window::Initial => &mut self.initial,
            Window::Final => &mut self.final_,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub runs: usize,
    pub eval_points: usize,
    /// Evaluation points in each of the initial and final windows.
    pub window_len: usize,
}

impl Summary {
    pub fn row(&self, policy_id: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.policy_id == policy_id)
    }
}

/// Policy ids in order of first appearance.
fn policy_order(records: &[EvalRecord]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for r in records {
        if !seen.iter().any(|p| p == &r.policy_id) {
            seen.push(r.policy_id.clone());
        }
    }
    seen
}

/// (eval_index, return) pairs for one run of one policy.
type RunCurve = Vec<(u32, f64)>;

/// Per-policy window statistics. The initial and final windows each cover
/// `window_fraction` of a run's evaluation points (rounded, at least one);
/// the cumulative window is the mean over all points. Runs must all have the
/// same number of evaluation points.
pub fn summarize(records: &[EvalRecord], window_fraction: f64) -> Result<Summary, StatsError> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(StatsError::BadWindow(window_fraction));
    }
    let mut grouped: BTreeMap<&str, BTreeMap<u64, RunCurve>> = BTreeMap::new();
    for r in records {
        grouped
            .entry(r.policy_id.as_str())
            .or_default()
            .entry(r.run_id)
            .or_default()
            .push((r.eval_index, r.base_return));
    }
    let expected = grouped.values().next().and_then(|runs| runs.values().next()).map_or(0, Vec::len);
    let window_len = ((expected as f64 * window_fraction).round() as usize).clamp(1, expected);

    let mut rows = Vec::new();
    let mut run_count = None;
    for policy in policy_order(records) {
        let runs = &grouped[policy.as_str()];
        if *run_count.get_or_insert(runs.len()) != runs.len() {
            return Err(StatsError::UnevenRuns {
                run_id: *runs.keys().next().expect("non-empty"),
                policy,
                found: runs.len(),
                expected: run_count.unwrap_or(0),
            });
        }
        let (mut cum, mut init, mut fin) = (Vec::new(), Vec::new(), Vec::new());
        for (&run_id, points) in runs {
            if points.len() != expected {
                return Err(StatsError::UnevenRuns { run_id, policy, found: points.len(), expected });
            }
            let mut points = points.clone();
            points.sort_by_key(|p| p.0);
            let returns: Vec<f64> = points.iter().map(|p| p.1).collect();
            cum.push(mean(&returns));
            init.push(mean(&returns[..window_len]));
            fin.push(mean(&returns[expected - window_len..]));
        }
        rows.push(SummaryRow {
            policy_id: policy,
            cumulative: WindowStat::from_runs(cum),
            initial: WindowStat::from_runs(init),
            final_: WindowStat::from_runs(fin),
        });
    }
    mark_near_best(&mut rows);
    Ok(Summary { runs: run_count.unwrap_or(0), eval_points: expected, window_len, rows })
}

fn mark_near_best(rows: &mut [SummaryRow]) {
    for w in Window::ALL {
        let Some(best) =
            (0..rows.len()).max_by(|&a, &b| rows[a].window(w).mean.total_cmp(&rows[b].window(w).mean).then(b.cmp(&a)))
        else {
            continue;
        };
        let best_stat = rows[best].window(w).clone();
        for (i, row) in rows.iter_mut().enumerate() {
            let stat = row.window_mut(w);
            stat.near_best = i == best
                || match t_test(&stat.per_run, &best_stat.per_run) {
                    Ok(t) => t.p > SIGNIFICANCE,
                    // fewer than two runs: only exact ties count
                    Err(_) => stat.mean == best_stat.mean,
                };
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub eval_index: u32,
    pub policy_id: String,
    pub mean_return: f64,
    pub std_return: f64,
}

/// Mean and sample standard deviation across runs at every evaluation point.
pub fn learning_curves(records: &[EvalRecord]) -> Vec<CurvePoint> {
    let order = policy_order(records);
    let mut grouped: BTreeMap<(u32, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        let p = order.iter().position(|p| p == &r.policy_id).expect("collected above");
        grouped.entry((r.eval_index, p)).or_default().push(r.base_return);
    }
    grouped
        .into_iter()
        .map(|((eval_index, p), xs)| CurvePoint {
            eval_index,
            policy_id: order[p].clone(),
            mean_return: mean(&xs),
            std_return: variance(&xs).sqrt(),
        })
        .collect()
}
