//! Compare the plain scenario with the fatigue-aware controller that stops
//! the robot at F_high and waits for F_low before moving on.

use hysmc::casestudy::{
    build_fatigue_aware_scenario, build_scenario, ControllerParams, ScenarioParams, PASS_OUT_GOAL,
};
use hysmc::smc::parse_goal;
use hysmc::{simulate, sweep, SimConfig, SmcOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = ScenarioParams::default();
    let controller = ControllerParams { f_high: 0.9, f_low: 0.2 };
    let plain = build_scenario(&params)?;
    let guarded = build_fatigue_aware_scenario(&params, &controller)?;
    let bounds = [1800.0, 3600.0, 5400.0, 7200.0];
    let options = SmcOptions::new(0.05, 0.05, 1);

    for model in [&plain, &guarded] {
        let goal = parse_goal(PASS_OUT_GOAL, model)?;
        let rows = sweep(model, &goal, &bounds, &options)?;
        let cells: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.p_hat)).collect();
        println!("{:<20} {}", model.name, cells.join("  "));
    }

    // peak fatigue in one controlled run
    let trace = simulate(&guarded, &SimConfig::new(7200.0, 3))?;
    let peak = trace.series("F").unwrap().into_iter().map(|(_, f)| f).fold(0.0, f64::max);
    println!("peak fatigue with controller: {:.4} (F_high = {})", peak, controller.f_high);
    Ok(())
}
