//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use hysmc::casestudy::{
    analytic_oracles, build_battery_only, build_fatigue_aware_scenario, build_nonstop_walk,
    build_scenario, build_scripted_scenario, ControllerParams, ScenarioParams, Schedule,
    PASS_OUT_GOAL,
};
use hysmc::cli;
use hysmc::smc::{parse_goal, parse_property};
use hysmc::trace::Trace;
use hysmc::{estimate_probability, parse_model, pretty_print, simulate, sweep, SimConfig, SmcOptions};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, TestRunner};

const TOL_EVT: f64 = 1e-6;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn first_event(trace: &Trace, automaton: &str, edge: &str) -> Option<f64> {
    trace
        .transitions()
        .find(|(_, a, e, _)| trace.automata[*a] == automaton && trace.edges[*a][*e] == edge)
        .map(|(ev, ..)| ev.time())
}

fn battery_lifetime() -> Verdict {
    let p = ScenarioParams::default();
    let oracle = 20.0 / p.r1 + 60.0 / p.r2 + 20.0 / p.r3;
    let m = build_battery_only(&p).unwrap();
    let trace = simulate(&m, &SimConfig::new(10_000.0, 0)).unwrap();
    match first_event(&trace, "Battery", "20_to_empty->empty") {
        Some(t) => verdict(
            (t - oracle).abs() <= 0.5,
            format!("C = 0 at {:.4} s, oracle {:.4} s, tolerance 0.5 s", t, oracle),
        ),
        None => verdict(false, "battery never emptied".into()),
    }
}

fn trapezoid_kinematics() -> Verdict {
    let p = ScenarioParams::default();
    let m = build_scripted_scenario(&p, &Schedule::new(vec![(0.0, 60.0)])).unwrap();
    let trace = simulate(&m, &SimConfig::new(120.0, 0)).unwrap();
    let start = first_event(&trace, "Robot", "idle_0->starting_0");
    let cruise = trace
        .transitions()
        .find(|(_, a, e, _)| trace.automata[*a] == "Robot" && trace.edges[*a][*e] == "starting_0->moving_0");
    match (start, cruise) {
        (Some(t0), Some((ev, ..))) => {
            let duration = ev.time() - t0;
            let distance = ev.after.state[trace.variable_index("r").unwrap()];
            verdict(
                (duration - 1.3).abs() <= TOL_EVT && (distance - 42.25).abs() <= 0.01,
                format!(
                    "acceleration {:.9} s (1.3 +/- {:e}), distance {:.6} cm (42.25 +/- 0.01)",
                    duration, TOL_EVT, distance
                ),
            )
        }
        _ => verdict(false, "robot never reached cruising speed".into()),
    }
}

fn fatigue_exhaustion() -> Verdict {
    let p = ScenarioParams::default();
    let oracle = analytic_oracles(&p).unwrap().time_to_exhaustion(0.1);
    let m = build_nonstop_walk(&p, 0.1).unwrap();
    let trace = simulate(&m, &SimConfig::new(1000.0, 0)).unwrap();
    match first_event(&trace, "Human", "moving->passed_out") {
        Some(t) => verdict(
            (t - 460.52).abs() <= 0.5,
            format!("passed_out at {:.4} s, closed form {:.4} s, expected 460.52 +/- 0.5", t, oracle),
        ),
        None => verdict(false, "patient never passed out".into()),
    }
}

fn simulator_vs_oracle() -> Verdict {
    let p = ScenarioParams::default();
    let schedule = Schedule::walk_rest_walk();
    let m = build_scripted_scenario(&p, &schedule).unwrap();
    let oracles = analytic_oracles(&p).unwrap();
    let settings = SimConfig {
        step: 0.5,
        stride: 1,
        ..SimConfig::new(1800.0, 0)
    };
    let trace = simulate(&m, &settings).unwrap();
    let idx = |n: &str| trace.variable_index(n).unwrap();
    let columns = [("F", idx("F")), ("C", idx("C")), ("V", idx("V")), ("r", idx("r")), ("h", idx("h"))];
    let mut worst = [0.0f64; 5];
    for s in &trace.samples {
        let o = oracles.along(&schedule, s.time);
        let want = [o.f, o.c, o.v, o.r, o.h];
        for (k, &(_, i)) in columns.iter().enumerate() {
            worst[k] = worst[k].max((s.state[i] - want[k]).abs());
        }
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    let detail = columns
        .iter()
        .zip(worst)
        .map(|((n, _), w)| format!("{} {:.2e}", n, w))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        max <= 1e-4,
        format!("max abs error {:.2e} over {} samples ({}), limit 1e-4", max, trace.samples.len(), detail),
    )
}

fn estimator_calibration() -> Verdict {
    let m = parse_model(
        "network bench {
           automaton A {
             location waiting init { dwell exponential(0.01); }
             location goal { }
             edge waiting -> goal { }
           }
         }",
    )
    .unwrap();
    let property = parse_property("Pr[<=100](<> A.goal)", &m).unwrap();
    let truth = 1.0 - (-1.0f64).exp();
    let mut covered = 0;
    let mut first = None;
    for seed in 0..50 {
        let r = estimate_probability(&m, &property, &SmcOptions::new(0.05, 0.05, seed)).unwrap();
        if r.ci_lo <= truth && truth <= r.ci_hi {
            covered += 1;
        }
        first.get_or_insert(r.p_hat);
    }
    let p_hat = first.unwrap();
    verdict(
        (p_hat - truth).abs() <= 0.05 && covered >= 46,
        format!(
            "p_hat {:.4} vs truth {:.4} (+/- 0.05); {}/50 intervals cover the truth (need 46)",
            p_hat, truth, covered
        ),
    )
}

fn curve_shape() -> Verdict {
    let m = build_scenario(&ScenarioParams::default()).unwrap();
    let goal = parse_goal(PASS_OUT_GOAL, &m).unwrap();
    let bounds: Vec<f64> = (1..=24).map(|i| 300.0 * i as f64).collect();
    let rows = sweep(&m, &goal, &bounds, &SmcOptions::new(0.05, 0.05, 42)).unwrap();
    let monotone = rows.windows(2).all(|w| w[0].p_hat <= w[1].p_hat);
    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    verdict(
        first.p_hat <= 0.05 && monotone && last.p_hat >= 0.85,
        format!(
            "p_hat(300) = {:.4} (<= 0.05), non-decreasing: {}, p_hat(7200) = {:.4} (>= 0.85), N = {}",
            first.p_hat, monotone, last.p_hat, last.n
        ),
    )
}

fn controller_safety() -> Verdict {
    let p = ScenarioParams::default();
    let m = build_fatigue_aware_scenario(&p, &ControllerParams { f_high: 0.9, f_low: 0.2 }).unwrap();
    let goal = parse_goal(PASS_OUT_GOAL, &m).unwrap();
    let bounds: Vec<f64> = (1..=24).map(|i| 300.0 * i as f64).collect();
    let rows = sweep(&m, &goal, &bounds, &SmcOptions::new(0.05, 0.05, 42)).unwrap();
    let worst = rows.iter().map(|r| r.k).max().unwrap();
    verdict(
        worst == 0 && rows.iter().all(|r| r.n == 738),
        format!("max k over {} bounds = {} with N = {}", rows.len(), worst, rows[0].n),
    )
}

fn run_cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cli::run(std::iter::once("hysmc").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8_lossy(&err).into_owned())
}

fn outputs(dir: &Path, prefix: &str) -> Vec<(String, Vec<u8>)> {
    let mut found: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.starts_with(prefix) && !n.ends_with("manifest.json"))
        .map(|n| (n[prefix.len()..].to_string(), fs::read(dir.join(&n)).unwrap()))
        .collect();
    found.sort();
    found
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let at = |name: &str| d.join(name).to_str().unwrap().to_string();
    let commands: [&[&str]; 3] = [
        &["simulate", "scenario", "--horizon", "7200"],
        &["check", "scenario", "--prop", "Pr[<=1800](<> Human.passed_out)", "--epsilon", "0.1"],
        &["sweep", "scenario", "--prop-goal", PASS_OUT_GOAL, "--bounds", "600:3600:600", "--epsilon", "0.1"],
    ];
    let mut failures = Vec::new();
    for (i, command) in commands.iter().enumerate() {
        let first = at(&format!("first{}", i));
        let mut args = command.to_vec();
        args.extend(["--out", first.as_str()]);
        let (code, err) = run_cli(&args);
        if code != 0 {
            failures.push(format!("{} failed: {}", command[0], err.trim()));
            continue;
        }
        let manifest = at(&format!("first{}_manifest.json", i));
        let second = at(&format!("second{}", i));
        let (code, err) = run_cli(&["replay", &manifest, "--out", &second]);
        let a = outputs(d, &format!("first{}_", i));
        let b = outputs(d, &format!("second{}_", i));
        if code != 0 || a.is_empty() || a != b {
            failures.push(format!("{} replay differs ({})", command[0], err.trim()));
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "simulate, check and sweep replay byte-identically from their manifests".into()
        } else {
            failures.join("; ")
        },
    )
}

fn parser_round_trip() -> Verdict {
    let mut runner = TestRunner::new(Config::default());
    let strategy = common::network();
    let mut failures = 0;
    for _ in 0..1000 {
        let model = strategy.new_tree(&mut runner).unwrap().current();
        let text = pretty_print(&model);
        let ok = match parse_model(&text) {
            Ok(once) => parse_model(&pretty_print(&once)).is_ok_and(|twice| twice == once),
            Err(_) => false,
        };
        if !ok {
            failures += 1;
        }
    }
    verdict(failures == 0, format!("{} failures over 1000 generated models", failures))
}

fn main() {
    type Check = fn() -> Verdict;
    let criteria: [(&str, Check, Duration); 9] = [
        ("battery lifetime", battery_lifetime, Duration::from_secs(1)),
        ("trapezoid kinematics", trapezoid_kinematics, Duration::from_secs(1)),
        ("fatigue exhaustion", fatigue_exhaustion, Duration::from_secs(1)),
        ("simulator vs oracle", simulator_vs_oracle, Duration::from_secs(5)),
        ("estimator calibration", estimator_calibration, Duration::from_secs(30)),
        ("pass-out curve shape", curve_shape, Duration::from_secs(600)),
        ("controller safety", controller_safety, Duration::from_secs(600)),
        ("determinism", determinism, Duration::from_secs(60)),
        ("parser round trip", parser_round_trip, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let pass = v.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} {:<22} {}  {}; {:.2} s (budget {} s{})",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", exceeded" }
        );
    }
    println!("acceptance: {} passed, {} failed", criteria.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
