//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Runs without the libtest harness so the lines show
//! up in plain `cargo test` output.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shaping_horde::env::{McAction, McState, MountainCar};
use shaping_horde::gq::{GqParams, WeightPair};
use shaping_horde::harness::{run_experiment, ExperimentConfig, ExperimentOutput, Scenario, COMBINATION};
use shaping_horde::oracles::{optimal_action_set, random_mdp, value_iteration};
use shaping_horde::shaping::{Potential, ShapingReward};
use shaping_horde::stats::{summarize, t_test, Summary, WindowStat};
use shaping_horde::tiles::SparseFeatures;
use shaping_horde::verify;
use shaping_horde::voting::{ensemble_action, VotingMethod};

const RUNS: u64 = 200;
const ALPHA: f64 = 0.05;
const SPEED_GAP: f64 = 0.15;
const FINAL_TARGET: f64 = -185.0;
const FINAL_BAND: f64 = 30.0;
const TIE_TOL: f64 = 1e-9;
const CHAIN_TOL: f64 = 1e-2;
const CHAIN_STEPS: usize = 200_000;
const EXACT_TOL: f64 = 1e-12;
const CASES: usize = 1000;
const RANDOM_MDPS: usize = 50;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

struct Experiment {
    summary: Summary,
    diverged: usize,
}

fn experiment(scenario: Scenario) -> Experiment {
    let cfg = ExperimentConfig { runs: RUNS, ..ExperimentConfig::for_scenario(scenario) };
    let start = Instant::now();
    let ExperimentOutput { records, diagnostics } = run_experiment(&cfg, 0).expect("valid default config");
    let summary = summarize(&records, cfg.window_fraction).expect("records");
    eprintln!("  {} x {} episodes of {} in {:.0?}", RUNS, cfg.episodes, scenario.as_str(), start.elapsed());
    Experiment { summary, diverged: diagnostics.len() }
}

/// `a` is at least as good as `b`, or not significantly worse.
fn not_worse(a: &WindowStat, b: &WindowStat) -> (bool, f64) {
    let p = t_test(&a.per_run, &b.per_run).expect("200 runs each").p;
    (a.mean >= b.mean || p > ALPHA, p)
}

fn window<'a>(s: &'a Summary, id: &str, pick: fn(&shaping_horde::stats::SummaryRow) -> &WindowStat) -> &'a WindowStat {
    pick(s.row(id).unwrap_or_else(|| panic!("no row {id}")))
}

fn cumulative(r: &shaping_horde::stats::SummaryRow) -> &WindowStat {
    &r.cumulative
}
fn initial(r: &shaping_horde::stats::SummaryRow) -> &WindowStat {
    &r.initial
}
fn final_(r: &shaping_horde::stats::SummaryRow) -> &WindowStat {
    &r.final_
}

fn criterion_1(s1: &Summary) -> Outcome {
    let comb = window(s1, COMBINATION, cumulative);
    let mut ok = true;
    let mut parts = vec![format!("combination {:.1}", comb.mean)];
    for other in ["no-shaping", "right", "height"] {
        let o = window(s1, other, cumulative);
        let (good, p) = not_worse(comb, o);
        ok &= good;
        parts.push(format!("{other} {:.1} (p={p:.2e})", o.mean));
    }
    outcome(ok, format!("cumulative: {}", parts.join(", ")))
}

fn criterion_2(s1: &Summary) -> Outcome {
    let (init_ok, p_init) = not_worse(window(s1, COMBINATION, initial), window(s1, "right", initial));
    let (fin_ok, p_fin) = not_worse(window(s1, COMBINATION, final_), window(s1, "height", final_));
    outcome(
        init_ok && fin_ok,
        format!(
            "initial combination {:.1} vs right {:.1} (p={p_init:.3}); final combination {:.1} vs height {:.1} (p={p_fin:.3})",
            window(s1, COMBINATION, initial).mean,
            window(s1, "right", initial).mean,
            window(s1, COMBINATION, final_).mean,
            window(s1, "height", final_).mean,
        ),
    )
}

fn criterion_3(s2: &Summary) -> Outcome {
    let speed = window(s2, "speed", cumulative).mean;
    let best_single = ["right", "height"].iter().all(|id| speed > window(s2, id, cumulative).mean);
    let comb = window(s2, COMBINATION, cumulative).mean;
    let gap = (comb - speed).abs() / speed.abs();
    outcome(
        best_single && gap <= SPEED_GAP,
        format!(
            "speed {speed:.1} vs right {:.1}, height {:.1}; combination {comb:.1}, relative gap {:.1}% (limit {:.0}%)",
            window(s2, "right", cumulative).mean,
            window(s2, "height", cumulative).mean,
            gap * 100.0,
            SPEED_GAP * 100.0
        ),
    )
}

fn criterion_4(s1: &Summary) -> Outcome {
    let m = window(s1, "no-shaping", final_).mean;
    outcome(
        (m - FINAL_TARGET).abs() <= FINAL_BAND,
        format!("no-shaping final {m:.1} (target {FINAL_TARGET} ± {FINAL_BAND})"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..RANDOM_MDPS {
        let gamma = rng.gen_range(0.5..0.95);
        let m = random_mdp(&mut rng, 6, 3, gamma);
        let potential: Vec<f64> = (0..6).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let plain = value_iteration(&m, 1e-12).expect("contraction");
        let shaped = value_iteration(&m.shaped(&potential).expect("finite"), 1e-12).expect("contraction");
        for s in 0..6 {
            let a = optimal_action_set(plain.q_row(s), TIE_TOL);
            let b = optimal_action_set(shaped.q_row(s), TIE_TOL);
            if a != b {
                return outcome(false, format!("MDP {case} state {s}: {a:?} vs {b:?}"));
            }
        }
    }
    outcome(true, format!("{RANDOM_MDPS} random 6x3 MDPs, identical optimal action sets (tie tol {TIE_TOL:e})"))
}

fn criterion_6(diverged: usize) -> Outcome {
    let err = verify::chain_error(WeightPair::update, CHAIN_STEPS);
    match err {
        Ok(e) => outcome(
            e < CHAIN_TOL && diverged == 0,
            format!("chain |theta - Q*|inf = {e:.2e} after {CHAIN_STEPS} steps (need < {CHAIN_TOL}); diverged runs {diverged}"),
        ),
        Err(e) => outcome(false, e),
    }
}

/// Trace-free two-timescale update, written densely from scratch.
fn two_timescale(theta: &mut [f64], w: &mut [f64], p: &GqParams, r: f64, phi: &[f64], phi_next: &[f64]) -> f64 {
    let q = |v: &[f64], x: &[f64]| v.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    let delta = r + p.gamma * q(theta, phi_next) - q(theta, phi);
    let phi_w = q(phi, w);
    for i in 0..theta.len() {
        theta[i] += p.alpha * (delta * phi[i] - p.gamma * phi_w * phi_next[i]);
        w[i] += p.beta * (delta - phi_w) * phi[i];
    }
    delta
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let dim = rng.gen_range(3..20);
        let feats = |rng: &mut ChaCha8Rng| {
            let idx: Vec<usize> = (0..rng.gen_range(1..4)).map(|_| rng.gen_range(0..dim)).collect();
            SparseFeatures::new(idx, dim).expect("in range")
        };
        let theta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (phi, phi_next) = (feats(&mut rng), feats(&mut rng));
        let p = GqParams {
            alpha: rng.gen_range(0.0..0.3),
            beta: rng.gen_range(0.0..0.3),
            lambda: 0.0,
            gamma: rng.gen_range(0.0..=1.0),
        };
        let r = rng.gen_range(-3.0..3.0);
        let mut wp = WeightPair::from_weights(theta.clone(), w.clone()).expect("dims");
        let d1 = wp.update(&p, r, &phi, &phi_next, 1.0).expect("finite");
        let (mut t2, mut w2) = (theta, w);
        let d2 = two_timescale(&mut t2, &mut w2, &p, r, &phi.to_dense(), &phi_next.to_dense());
        worst = worst.max((d1 - d2).abs());
        for i in 0..dim {
            worst = worst.max((wp.theta()[i] - t2[i]).abs()).max((wp.w()[i] - w2[i]).abs());
        }
    }
    outcome(worst <= EXACT_TOL, format!("{CASES} random updates, max deviation {worst:.1e} (limit {EXACT_TOL:e})"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut rank_ok = true;
    for _ in 0..CASES {
        let voters = rng.gen_range(1..5);
        let qs: Vec<Vec<f64>> =
            (0..voters).map(|_| (0..3).map(|_| f64::from(rng.gen_range(-4i32..4))).collect()).collect();
        let mapped: Vec<Vec<f64>> = qs
            .iter()
            .map(|q| {
                let (a, b) = (rng.gen_range(0.001..1000.0), rng.gen_range(-1e3..1e3));
                if rng.gen_bool(0.5) {
                    q.iter().map(|v| a * v + b).collect()
                } else {
                    q.iter().map(|v| v.exp()).collect()
                }
            })
            .collect();
        rank_ok &= ensemble_action(&qs, VotingMethod::Rank) == ensemble_action(&mapped, VotingMethod::Rank);
    }

    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let pot = match rng.gen_range(0..3) {
            0 => Potential::right(1.0),
            1 => Potential::height(1.0),
            _ => Potential::speed(1.0),
        }
        .expect("unit scale");
        let sr = ShapingReward::new(pot.clone(), 1.0).expect("gamma 1");
        let start = McState::new(rng.gen_range(-1.2..0.59), rng.gen_range(-0.07..0.07));
        let mut s = start;
        let mut sum = 0.0;
        for _ in 0..rng.gen_range(1..500) {
            let next = MountainCar.step(s, McAction::ALL[rng.gen_range(0..3)]).to;
            sum += sr.reward(s, next);
            s = next;
        }
        worst = worst.max((sum - (pot.phi(s) - pot.phi(start))).abs());
    }
    outcome(
        rank_ok && worst <= EXACT_TOL,
        format!("rank invariance over {CASES} cases: {rank_ok}; telescoping max deviation {worst:.1e} (limit {EXACT_TOL:e})"),
    )
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_shaping-horde")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = |name: &str| tmp.path().join(name).display().to_string();
    let first = dir("first");
    let manifest = Path::new(&first).join("manifest.toml").display().to_string();
    let args = [
        "run",
        "--scenario",
        "three-shapings",
        "--runs",
        "6",
        "--episodes",
        "10",
        "--seed",
        "7",
        "--jobs",
        "1",
        "--out",
        &first,
    ];
    if let Err(e) = cli(&args) {
        return outcome(false, format!("cmd_run failed: {e}"));
    }
    let replays = [("second", "1"), ("parallel", "4"), ("all-cores", "0")];
    for (name, jobs) in replays {
        if let Err(e) = cli(&["run", "--manifest", &manifest, "--jobs", jobs, "--out", &dir(name)]) {
            return outcome(false, format!("replay failed: {e}"));
        }
    }
    for file in ["records.csv", "summary.csv", "curves.csv", "summary.txt"] {
        let reference = fs::read(Path::new(&first).join(file)).expect("written");
        for (name, _) in replays {
            if fs::read(Path::new(&dir(name)).join(file)).expect("written") != reference {
                return outcome(false, format!("{file} differs in {name}"));
            }
        }
    }
    outcome(true, "records/summary/curves identical across 4 executions with --jobs 1, 1, 4, 0".into())
}

fn main() -> ExitCode {
    eprintln!("running scaled mountain-car experiments ({RUNS} runs each)...");
    let s1 = experiment(Scenario::TwoShapings);
    let s2 = experiment(Scenario::ThreeShapings);
    let results = [
        ("1 scenario 1 cumulative ordering", criterion_1(&s1.summary)),
        ("2 scenario 1 window structure", criterion_2(&s1.summary)),
        ("3 scenario 2 speed and combination", criterion_3(&s2.summary)),
        ("4 no-shaping final performance", criterion_4(&s1.summary)),
        ("5 shaping policy invariance", criterion_5()),
        ("6 greedy-gq soundness", criterion_6(s1.diverged + s2.diverged)),
        ("7 lambda=0 identity", criterion_7()),
        ("8 voting invariance and telescoping", criterion_8()),
        ("9 determinism", criterion_9()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name}: {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
