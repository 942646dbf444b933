//! Boundary crossings are located to within the event tolerance: a robot
//! accelerating at 50 cm/s^2 reaches 65 cm/s after exactly 1.3 s even with
//! a coarse integration step.

use hysmc::sim::locate_boundary;
use hysmc::{initial_configuration, parse_expression, parse_model, simulate, CompiledNetwork, SimConfig};

const MODEL: &str = "network ramp {
  var V init 0;
  automaton Cart {
    location accelerating init {
      d(V) = 50;
      invariant V <= 65;
    }
    location cruising { }
    edge accelerating -> cruising { guard V >= 65; }
  }
}";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = parse_model(MODEL)?;
    let net = CompiledNetwork::new(&model)?;
    let start = initial_configuration(&model)?;
    let predicate = net.compile(&parse_expression("V >= 65")?, None)?;
    for tol in [1e-3, 1e-6, 1e-9] {
        let t = locate_boundary(&net, &start, 2.0, &predicate, tol)?;
        println!("tol {:e}: crossing at {:.12} s", tol, t);
    }

    for step in [1.0, 0.1, 0.01] {
        let trace = simulate(&model, &SimConfig { step, ..SimConfig::new(5.0, 0) })?;
        let (event, ..) = trace.transitions().next().expect("cart reaches cruising speed");
        let v = event.after.state[trace.variable_index("V").unwrap()];
        println!("step {:>5}: cruising from {:.9} s at V = {:.9}", step, event.time(), v);
    }
    Ok(())
}
