//! Simulate the scenario once and summarise what happened.

use hysmc::casestudy::{build_scenario, ScenarioParams};
use hysmc::{simulate, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let model = build_scenario(&ScenarioParams::default())?;
    let trace = simulate(&model, &SimConfig::new(7200.0, seed))?;

    println!("seed {}: {} samples, {} events, ended by {:?} at {} s", seed, trace.samples.len(), trace.events.len(), trace.end, trace.end_time());
    for (event, automaton, edge, channel) in trace.transitions().take(20) {
        let sync = channel.map(|c| format!(" [{}]", trace.channels[c])).unwrap_or_default();
        println!("{:>10.3}  {:<8} {}{}", event.time(), trace.automata[automaton], trace.edges[automaton][edge], sync);
    }
    if trace.events.len() > 20 {
        println!("         ... {} more", trace.events.len() - 20);
    }

    let last = trace.samples.last().expect("at least one sample");
    for name in ["C", "F", "r", "h"] {
        println!("{} = {:.4}", name, last.state[trace.variable_index(name).unwrap()]);
    }
    println!();
    for line in trace.samples_csv().lines().take(4) {
        println!("{}", line);
    }
    Ok(())
}
