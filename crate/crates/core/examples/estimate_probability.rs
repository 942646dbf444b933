//! Estimate the chance that the patient passes out while the robot is
//! moving within two hours.

use hysmc::casestudy::{build_scenario, ScenarioParams, PASS_OUT_GOAL};
use hysmc::smc::required_runs;
use hysmc::{estimate_probability, parse_property, SmcOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = build_scenario(&ScenarioParams::default())?;
    let property = parse_property(&format!("Pr[<=7200](<> {})", PASS_OUT_GOAL), &model)?;
    let options = SmcOptions::new(0.05, 0.05, 42);
    println!("{} with {} runs", property, required_runs(options.epsilon, options.alpha)?);

    let r = estimate_probability(&model, &property, &options)?;
    println!("p_hat = {:.4}  95% interval [{:.4}, {:.4}]  ({} of {})", r.p_hat, r.ci_lo, r.ci_hi, r.k, r.n);
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}
