//! Sweep the pass-out probability over bounds 5, 10, ..., 120 minutes and
//! print the curve as CSV plus a crude text plot.

use hysmc::casestudy::{build_scenario, ScenarioParams, PASS_OUT_GOAL};
use hysmc::smc::{parse_goal, sweep_csv};
use hysmc::{sweep, SmcOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = build_scenario(&ScenarioParams::default())?;
    let goal = parse_goal(PASS_OUT_GOAL, &model)?;
    let bounds: Vec<f64> = (1..=24).map(|i| 300.0 * i as f64).collect();
    let rows = sweep(&model, &goal, &bounds, &SmcOptions::new(0.05, 0.05, 42))?;

    print!("{}", sweep_csv(&rows));
    println!();
    for r in &rows {
        let bar = "#".repeat((r.p_hat * 50.0).round() as usize);
        println!("{:>5} min |{:<50}| {:.3}", r.t_s / 60.0, bar, r.p_hat);
    }
    Ok(())
}
