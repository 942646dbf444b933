//! Closed-form trajectories for a frozen walk/rest schedule, side by side
//! with the simulator.

use hysmc::casestudy::{analytic_oracles, build_scripted_scenario, ScenarioParams, Schedule};
use hysmc::{simulate, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = ScenarioParams::default();
    let oracles = analytic_oracles(&params)?;
    println!("ramp: {} s, {} cm", oracles.ramp_time(), oracles.ramp_distance());
    println!("exhaustion from F = 0.1: {:.3} s", oracles.time_to_exhaustion(0.1));

    let schedule = Schedule::walk_rest_walk();
    let model = build_scripted_scenario(&params, &schedule)?;
    let trace = simulate(&model, &SimConfig { step: 0.5, stride: 1, ..SimConfig::new(1800.0, 0) })?;
    let f = trace.variable_index("F").unwrap();
    let c = trace.variable_index("C").unwrap();

    println!("{:>8} {:>12} {:>12} {:>12} {:>12}", "t", "F sim", "F exact", "C sim", "C exact");
    for mark in (0..=12).map(|k| 150.0 * k as f64) {
        let Some(s) = trace.samples.iter().find(|s| s.time >= mark) else { break };
        let o = oracles.along(&schedule, s.time);
        println!("{:>8.2} {:>12.8} {:>12.8} {:>12.6} {:>12.6}", s.time, s.state[f], o.f, s.state[c], o.c);
    }
    Ok(())
}
