use approx::assert_abs_diff_eq;
use hysmc::casestudy::{build_nonstop_walk, build_scenario, ScenarioParams};
use hysmc::model::{initial_configuration, DwellPolicy};
use hysmc::sim::{
    exponential_delay, integrate_step, locate_boundary, run_rng, sample_delay, simulate,
    EndReason, EventKind, Observer, Point, SimConfig, SimError, Simulator,
};
use hysmc::trace::Trace;
use hysmc::{parse_expression, parse_model, CompiledNetwork, Configuration, NetworkModel};
use proptest::prelude::*;

fn model(text: &str) -> NetworkModel {
    parse_model(text).unwrap_or_else(|e| panic!("{}", e))
}

fn one_flow(var_init: &str, flow: &str) -> NetworkModel {
    model(&format!(
        "network n {{ {} automaton A {{ clock t; location l init {{ {} }} }} }}",
        var_init, flow
    ))
}

#[test]
fn rk4_reproduces_the_walking_fatigue_curve() {
    let m = one_flow("var F init 0;", "d(F) = 0.005 * exp(-0.005 * t);");
    let net = CompiledNetwork::new(&m).unwrap();
    let mut c = initial_configuration(&m).unwrap();
    for _ in 0..1800 {
        c = integrate_step(&net, &c, 0.5).unwrap();
    }
    assert_abs_diff_eq!(c.time, 900.0, epsilon = 1e-9);
    // 1 - exp(-4.5)
    assert_abs_diff_eq!(c.values()[0], 0.988_891_003_461_759, epsilon = 1e-6);
}

#[test]
fn constant_derivative_step_is_exact() {
    let m = one_flow("var V init 0;", "d(V) = 50;");
    let net = CompiledNetwork::new(&m).unwrap();
    let c = integrate_step(&net, &initial_configuration(&m).unwrap(), 0.01).unwrap();
    assert_eq!(c.values()[0], 0.5);
}

#[test]
fn zero_flows_only_advance_clocks() {
    let m = one_flow("var V init 3; const k = 2;", "");
    let net = CompiledNetwork::new(&m).unwrap();
    let c0 = initial_configuration(&m).unwrap();
    let c = integrate_step(&net, &c0, 0.25).unwrap();
    assert_eq!(c.values(), c0.values());
    assert_eq!(c.clocks(), &[0.25]);
    assert_eq!(c.locations, c0.locations);
}

#[test]
fn non_positive_step_is_rejected() {
    let m = one_flow("var V init 0;", "d(V) = 1;");
    let net = CompiledNetwork::new(&m).unwrap();
    let c0 = initial_configuration(&m).unwrap();
    assert!(integrate_step(&net, &c0, 0.0).is_err());
}

fn crossing(var_init: &str, flow: &str, predicate: &str, step: f64) -> Result<f64, SimError> {
    let m = one_flow(var_init, flow);
    let net = CompiledNetwork::new(&m).unwrap();
    let p = net.compile(&parse_expression(predicate).unwrap(), None).unwrap();
    locate_boundary(&net, &initial_configuration(&m).unwrap(), step, &p, 1e-6)
}

#[test]
fn boundary_of_the_acceleration_ramp() {
    let t = crossing("var V init 0;", "d(V) = 50;", "V >= 65", 2.0).unwrap();
    assert_abs_diff_eq!(t, 1.3, epsilon = 1e-6);
}

#[test]
fn boundary_of_the_first_discharge_band() {
    let t = crossing("var C init 100;", "d(C) = -0.035;", "C <= 80", 600.0).unwrap();
    assert_abs_diff_eq!(t, 20.0 / 0.035, epsilon = 1e-6);
}

#[test]
fn boundary_already_crossed_is_immediate() {
    let t = crossing("var V init 70;", "d(V) = 50;", "V >= 65", 2.0).unwrap();
    assert_eq!(t, 0.0);
}

#[test]
fn boundary_outside_the_step_is_not_bracketed() {
    let err = crossing("var V init 0;", "d(V) = 50;", "V >= 65", 1.0).unwrap_err();
    assert_eq!(err, SimError::NotBracketed);
}

#[test]
fn exponential_delay_has_the_right_mean() {
    let mut rng = run_rng(2024, 0);
    let policy = DwellPolicy::Exponential { rate: 0.01 };
    let n = 100_000;
    let mean = (0..n).map(|_| sample_delay(&policy, &mut rng)).sum::<f64>() / n as f64;
    assert!((mean - 100.0).abs() < 2.0, "mean {}", mean);
}

#[test]
fn delay_edge_cases() {
    assert_eq!(exponential_delay(0.3, 1.0), 0.0);
    let mut rng = run_rng(0, 0);
    assert_eq!(sample_delay(&DwellPolicy::Eager, &mut rng), f64::INFINITY);
}

#[test]
fn equal_weights_split_evenly() {
    let m = model(
        "network coin {
           channel a; channel b;
           automaton Robot {
             location idle init { dwell exponential(1); }
             location left { }
             location right { }
             edge idle -> left { }
             edge idle -> right { }
             edge left -> idle { }
             edge right -> idle { }
           }
         }",
    );
    let net = CompiledNetwork::new(&m).unwrap();
    let mut sim = Simulator::new(&net, SimConfig { horizon: 1e9, seed: 5, ..SimConfig::default() }).unwrap();
    let (mut left, mut total) = (0u32, 0u32);
    while total < 10_000 {
        if let hysmc::sim::StepOutcome::Fired(events) = sim.macro_step(&mut ()).unwrap() {
            for e in events {
                if let EventKind::Transition { edge, .. } = e.kind {
                    match edge {
                        0 => left += 1,
                        1 => {}
                        _ => continue,
                    }
                    total += 1;
                }
            }
        }
    }
    let share = f64::from(left) / f64::from(total);
    assert!((share - 0.5).abs() <= 0.02, "share {}", share);
}

fn scenario() -> NetworkModel {
    build_scenario(&ScenarioParams::default()).unwrap()
}

fn run(m: &NetworkModel, horizon: f64, seed: u64) -> Trace {
    simulate(m, &SimConfig::new(horizon, seed)).unwrap()
}

fn events_of<'a>(trace: &'a Trace, label: &'a str) -> impl Iterator<Item = f64> + 'a {
    trace.transitions().filter_map(move |(e, a, edge, _)| {
        (format!("{}:{}", trace.automata[a], trace.edges[a][edge]) == label).then_some(e.time())
    })
}

#[test]
fn full_battery_releases_the_robot_without_delay() {
    let m = scenario();
    let mut checked = 0;
    for seed in 0..40 {
        let trace = run(&m, 20_000.0, seed);
        let full: Vec<f64> = events_of(&trace, "Battery:recharging_upto100->recharging_full").collect();
        let sync: Vec<f64> = events_of(&trace, "Battery:recharging_full->full_to_80").collect();
        let released: Vec<f64> = events_of(&trace, "Robot:recharging->idle").collect();
        assert_eq!(full, sync);
        assert_eq!(sync, released);
        checked += full.len();
    }
    assert!(checked > 0, "no recharge completed in 40 runs");
}

#[test]
fn exhaustion_is_a_boundary_event() {
    let params = ScenarioParams::default();
    let m = build_nonstop_walk(&params, 0.1).unwrap();
    let trace = run(&m, 1000.0, 0);
    let t = events_of(&trace, "Human:moving->passed_out").next().expect("passes out");
    assert_abs_diff_eq!(t, -(0.1f64.ln()) / 0.005, epsilon = 1e-5);
    let f = trace.variable_index("F").unwrap();
    let after: Vec<f64> = trace.samples.iter().filter(|s| s.time >= t).map(|s| s.state[f]).collect();
    assert!(after.len() > 10);
    assert!(after.iter().all(|&x| x == after[0]));
    assert!((after[0] - 1.0).abs() < 1e-9);
}

#[test]
fn resting_network_has_no_events() {
    let text = include_str!("../models/scenario.hynet")
        .replace("emit start_moving;", "guard false; emit start_moving;")
        .replace("emit start_recharging;", "guard false; emit start_recharging;")
        .replace("var F init 0", "var F init 0.5");
    let m = model(&text);
    let trace = run(&m, 500.0, 3);
    assert!(trace.events.is_empty());
    assert_eq!(trace.end, EndReason::Horizon);
    assert_eq!(trace.end_time(), 500.0);
    let f = trace.series("F").unwrap();
    assert_eq!(f.last().unwrap().1, 0.0);
    assert!(f.windows(2).all(|w| w[1].1 <= w[0].1));
}

#[test]
fn frozen_network_ends_in_deadlock() {
    let m = one_flow("var x init 1;", "");
    let trace = run(&m, 100.0, 0);
    assert_eq!(trace.end, EndReason::Deadlock);
    assert_eq!(trace.events.len(), 1);
    assert_eq!(trace.events[0].event.kind, EventKind::Deadlock);
}

#[test]
fn broken_invariant_without_exit_is_a_timelock() {
    let m = one_flow("var x init 0;", "d(x) = 1; invariant x <= 1;");
    let err = simulate(&m, &SimConfig::new(10.0, 0)).unwrap_err();
    match err {
        SimError::Timelock { time, .. } => assert_abs_diff_eq!(time, 1.0, epsilon = 1e-6),
        other => panic!("unexpected {:?}", other),
    }
}

#[test]
fn blow_up_is_reported() {
    let m = one_flow("var x init 1;", "d(x) = x * x * x;");
    let err = simulate(&m, &SimConfig::new(10.0, 0)).unwrap_err();
    assert!(matches!(err, SimError::NonFinite { .. }), "{:?}", err);
}

#[test]
fn invalid_settings_are_rejected() {
    let m = scenario();
    for cfg in [
        SimConfig { horizon: 0.0, ..SimConfig::default() },
        SimConfig { step: -1.0, ..SimConfig::default() },
        SimConfig { tol_evt: 0.5, step: 0.1, ..SimConfig::default() },
        SimConfig { stride: 0, ..SimConfig::default() },
    ] {
        assert!(matches!(simulate(&m, &cfg), Err(SimError::Config(_))));
    }
}

#[test]
fn same_seed_same_bytes() {
    let m = scenario();
    let a = run(&m, 7200.0, 11);
    let b = run(&m, 7200.0, 11);
    assert_eq!(a.samples_csv(), b.samples_csv());
    assert_eq!(a.events_csv(), b.events_csv());
    let c = run(&m, 7200.0, 12);
    assert_ne!(a.events_csv(), c.events_csv());
}

#[test]
fn csv_layout() {
    let trace = run(&scenario(), 100.0, 1);
    let csv = trace.samples_csv();
    assert_eq!(
        csv.lines().next().unwrap(),
        "time,V,r,C,F,h,Robot.location,Battery.location,Human.location"
    );
    assert_eq!(trace.events_csv().lines().next().unwrap(), "time,automaton,edge,channel");
    let row: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    assert_eq!(row[3], "99.965");
}

struct StopAt(f64);

impl Observer for StopAt {
    fn observe(&mut self, c: &Configuration, _: Point<'_>) -> bool {
        c.time < self.0
    }
}

#[test]
fn observer_can_stop_a_run() {
    let m = scenario();
    let net = CompiledNetwork::new(&m).unwrap();
    let mut sim = Simulator::new(&net, SimConfig::new(7200.0, 0)).unwrap();
    assert_eq!(sim.run(&mut StopAt(50.0)).unwrap(), EndReason::Stopped);
    assert!(sim.config().time >= 50.0 && sim.config().time < 50.2);
}

const TOL_INV: f64 = 1e-9;

fn location(trace: &Trace, s: &hysmc::trace::Sample, a: &str) -> String {
    trace.location_name(s, trace.automaton_index(a).unwrap()).to_string()
}

fn check_scenario_trace(trace: &Trace) -> Result<(), TestCaseError> {
    let idx = |n: &str| trace.variable_index(n).unwrap();
    let (v, r, c, f, h) = (idx("V"), idx("r"), idx("C"), idx("F"), idx("h"));
    let rates = [(v, 50.0), (r, 65.0), (c, 0.055), (f, 0.005), (h, 65.0)];
    let n_vars = trace.variables.len();
    let mut last_change = vec![0.0; trace.automata.len()];
    let mut events = trace.events.iter().peekable();

    for s in &trace.samples {
        prop_assert!(s.state[v] >= -TOL_INV && s.state[v] <= 65.0 + TOL_INV);
        prop_assert!(s.state[c] >= -TOL_INV && s.state[c] <= 100.0 + TOL_INV);
        prop_assert!(s.state[f] >= -TOL_INV && s.state[f] <= 1.0 + TOL_INV);
        let human = location(trace, s, "Human");
        let battery = location(trace, s, "Battery");
        let robot = location(trace, s, "Robot");
        if human == "moving" {
            prop_assert!(s.state[f] <= 1.0 + TOL_INV);
        }
        match battery.as_str() {
            "full_to_80" => prop_assert!(s.state[c] >= 80.0 - TOL_INV),
            "80_to_20" => prop_assert!(s.state[c] >= 20.0 - TOL_INV),
            "recharging_upto20" => prop_assert!(s.state[c] <= 20.0 + TOL_INV),
            "recharging_upto80" => prop_assert!(s.state[c] <= 80.0 + TOL_INV),
            _ => {}
        }
        if robot == "starting" {
            prop_assert!(s.state[v] <= 65.0 + TOL_INV);
        }
        // local clocks measure time since the last location change
        while let Some(e) = events.peek() {
            if e.time() > s.time {
                break;
            }
            if let EventKind::Transition { automaton, .. } = e.event.kind {
                last_change[automaton] = e.time();
            }
            events.next();
        }
        for (a, since) in last_change.iter().enumerate() {
            let clock = s.state[n_vars + a];
            if clock != 0.0 {
                prop_assert!((clock - (s.time - since)).abs() < 1e-6, "clock {} vs {}", clock, s.time - since);
            }
        }
    }

    for w in trace.samples.windows(2) {
        let (s0, s1) = (&w[0], &w[1]);
        prop_assert!(s1.time > s0.time);
        let dt = s1.time - s0.time;
        for &(i, rate) in &rates {
            prop_assert!((s1.state[i] - s0.state[i]).abs() <= rate * dt * (1.0 + TOL_INV) + 1e-12);
        }
        let battery = location(trace, s0, "Battery");
        if !battery.starts_with("recharging") {
            prop_assert!(s1.state[c] <= s0.state[c] + 1e-12);
        }
        match location(trace, s0, "Human").as_str() {
            "idle" => prop_assert!(s1.state[f] <= s0.state[f] + 1e-12),
            "moving" => prop_assert!(s1.state[f] >= s0.state[f] - 1e-12),
            _ => prop_assert_eq!(s1.state[f], s0.state[f]),
        }
        prop_assert!(s1.state[h] >= s0.state[h]);
        prop_assert!(s1.state[r] >= s0.state[r] - 1e-12);
    }

    let times: Vec<f64> = trace.events.iter().map(|e| e.time()).collect();
    prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
    prop_assert!(times.iter().all(|&t| (0.0..=trace.horizon).contains(&t)));
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scenario_runs_respect_the_physics(seed in any::<u64>()) {
        let trace = run(&scenario(), 7200.0, seed);
        check_scenario_trace(&trace)?;
    }

    #[test]
    fn longer_horizons_extend_shorter_runs(seed in any::<u64>(), cut in 100.0f64..3000.0) {
        let m = scenario();
        let short = run(&m, cut, seed);
        let long = run(&m, 2.0 * cut, seed);
        let early: Vec<_> = long.events.iter().filter(|e| e.time() < cut).map(|e| e.event).collect();
        let short_events: Vec<_> = short.events.iter().filter(|e| e.time() < cut).map(|e| e.event).collect();
        prop_assert_eq!(early, short_events);
    }
}
