use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use shaping_horde_ffi::*;

fn last_error() -> String {
    let p = sh_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn new_horde(scenario: u32) -> *mut ShHorde {
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { sh_horde_new(scenario, &mut h) }, ShStatus::Ok);
    assert!(!h.is_null());
    h
}

#[test]
fn environment_round_trip() {
    let mut s = ShState { position: 0.0, velocity: 1.0 };
    assert_eq!(unsafe { sh_mc_reset(&mut s) }, ShStatus::Ok);
    assert_eq!(s, ShState { position: -0.5, velocity: 0.0 });

    let mut t = ShTransition { next: s, reward: 0.0, terminal: true };
    assert_eq!(unsafe { sh_mc_step(s, 2, &mut t) }, ShStatus::Ok);
    // v' = 0.001 - 0.0025 cos(-1.5)
    let v = 0.001 - 0.0025 * (-1.5f64).cos();
    assert!((t.next.velocity - v).abs() < 1e-15);
    assert!((t.next.position - (-0.5 + v)).abs() < 1e-15);
    assert_eq!(t.reward, -1.0);
    assert!(!t.terminal);
}

#[test]
fn argument_errors_set_messages() {
    let s = ShState { position: -0.5, velocity: 0.0 };
    let mut t = ShTransition { next: s, reward: 0.0, terminal: false };
    assert_eq!(unsafe { sh_mc_step(s, 7, &mut t) }, ShStatus::InvalidArgument);
    assert!(last_error().contains("action 7"));
    let outside = ShState { position: 2.0, velocity: 0.0 };
    assert_eq!(unsafe { sh_mc_step(outside, 0, &mut t) }, ShStatus::OutOfRange);
    assert_eq!(unsafe { sh_mc_step(s, 0, ptr::null_mut()) }, ShStatus::NullPointer);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { sh_horde_new(9, &mut h) }, ShStatus::InvalidArgument);
    assert!(h.is_null());
}

#[test]
fn horde_lifecycle() {
    let h = new_horde(SH_SCENARIO_THREE_SHAPINGS);
    let mut n = 0usize;
    assert_eq!(unsafe { sh_horde_demon_count(h, &mut n) }, ShStatus::Ok);
    assert_eq!(n, 4);

    let s = ShState { position: -0.5, velocity: 0.0 };
    let mut a = 9u32;
    assert_eq!(unsafe { sh_horde_greedy_action(h, 0, s, &mut a) }, ShStatus::Ok);
    assert_eq!(a, 0, "zero weights tie, lowest index wins");
    assert_eq!(unsafe { sh_horde_ensemble_action(h, s, SH_VOTING_RANK, &mut a) }, ShStatus::Ok);
    assert_eq!(a, 0);

    // drive a short random-ish episode through the C interface
    let mut state = s;
    let mut deltas = [0.0; 4];
    for k in 0..500u32 {
        let mut t = ShTransition { next: state, reward: 0.0, terminal: false };
        let action = (k * 7 + k / 3) % 3;
        assert_eq!(unsafe { sh_mc_step(state, action, &mut t) }, ShStatus::Ok);
        let st = unsafe {
            sh_horde_observe(h, state, action, t.reward, t.next, t.terminal, 1.0 / 3.0, deltas.as_mut_ptr(), 4)
        };
        assert_eq!(st, ShStatus::Ok);
        assert!(deltas.iter().all(|d| d.is_finite()));
        state = t.next;
    }
    assert_eq!(unsafe { sh_horde_end_episode(h) }, ShStatus::Ok);

    let mut q = [0.0; 3];
    assert_eq!(unsafe { sh_horde_q_values(h, 0, s, q.as_mut_ptr(), 3) }, ShStatus::Ok);
    assert!(q.iter().any(|&v| v != 0.0), "learning touched the start state");
    assert_eq!(unsafe { sh_horde_q_values(h, 9, s, q.as_mut_ptr(), 3) }, ShStatus::InvalidArgument);
    assert_eq!(unsafe { sh_horde_q_values(h, 0, s, q.as_mut_ptr(), 2) }, ShStatus::InvalidArgument);
    assert_eq!(unsafe { sh_horde_ensemble_action(h, s, 17, &mut a) }, ShStatus::InvalidArgument);
    // td buffer too short
    let st = unsafe { sh_horde_observe(h, s, 0, -1.0, s, false, 1.0 / 3.0, deltas.as_mut_ptr(), 3) };
    assert_eq!(st, ShStatus::InvalidArgument);
    let st = unsafe { sh_horde_observe(h, s, 0, -1.0, s, false, 0.0, ptr::null_mut(), 0) };
    assert_eq!(st, ShStatus::InvalidArgument);
    assert!(last_error().contains("behavior"), "{}", last_error());
    unsafe { sh_horde_free(h) };
    unsafe { sh_horde_free(ptr::null_mut()) };
}

#[test]
fn horde_from_toml() {
    let text = CString::new("[[demons]]\npotential = \"none\"\nalpha = 0.1\n\n[[demons]]\npotential = \"speed\"\nscale = 2.0\nalpha = 0.1\n").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { sh_horde_new_from_toml(text.as_ptr(), &mut h) }, ShStatus::Ok);
    let mut n = 0usize;
    assert_eq!(unsafe { sh_horde_demon_count(h, &mut n) }, ShStatus::Ok);
    assert_eq!(n, 2);
    unsafe { sh_horde_free(h) };

    let bad = CString::new("colour = 3").unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { sh_horde_new_from_toml(bad.as_ptr(), &mut h) }, ShStatus::InvalidArgument);
    assert!(last_error().contains("colour"));
}

#[test]
fn t_test_matches_core() {
    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [2.0, 3.0, 4.0, 5.5];
    let mut out = ShTTest { t: 0.0, df: 0.0, p: 0.0 };
    assert_eq!(unsafe { sh_t_test(a.as_ptr(), 4, b.as_ptr(), 4, &mut out) }, ShStatus::Ok);
    let core = shaping_horde::stats::t_test(&a, &b).unwrap();
    assert_eq!((out.t, out.df, out.p), (core.t, core.df, core.p));
    assert_eq!(unsafe { sh_t_test(a.as_ptr(), 1, b.as_ptr(), 4, &mut out) }, ShStatus::InvalidArgument);
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/shaping_horde.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "sh_last_error_message",
        "sh_mc_reset",
        "sh_mc_step",
        "sh_horde_new",
        "sh_horde_new_from_toml",
        "sh_horde_free",
        "sh_horde_demon_count",
        "sh_horde_observe",
        "sh_horde_end_episode",
        "sh_horde_q_values",
        "sh_horde_greedy_action",
        "sh_horde_ensemble_action",
        "sh_t_test",
        "SH_STATUS_OK",
        "typedef struct ShHorde ShHorde",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // syntax-check the header as C when a compiler is around
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"shaping_horde.h\"\nint main(void) { ShState s; return sh_mc_reset(&s) == SH_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = header.parent().unwrap();
    match Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg("-I").arg(include).arg(&src).output() {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found; skipped compiling the header"),
    }
}
