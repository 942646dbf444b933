//! Simulation and statistical model checking for networks of stochastic
//! hybrid automata.
//!
//! A model is a [`NetworkModel`]: automata whose locations carry flows
//! (ODE right-hand sides), invariants and dwell policies, connected by
//! broadcast-free binary channels. Models can be written in the `.hynet`
//! text format ([`dsl`]) or built programmatically ([`casestudy`]).
//!
//! ```
//! use hysmc::{casestudy, sim};
//!
//! let model = casestudy::build_scenario(&casestudy::ScenarioParams::default()).unwrap();
//! let trace = sim::simulate(&model, &sim::SimConfig::new(600.0, 7)).unwrap();
//! assert!(trace.end_time() <= 600.0);
//! ```

pub mod casestudy;
pub mod cli;
mod compiled;
pub mod dsl;
pub mod expr;
pub mod model;
pub mod sim;
pub mod smc;
pub mod trace;

pub use compiled::{CompiledExpr, CompiledNetwork};
pub use dsl::{parse_expression, parse_model, pretty_print};
pub use expr::{evaluate, Environment, Expr, Value};
pub use model::{
    initial_configuration, validate_network, Configuration, HybridAutomaton, NetworkModel,
    ValidationReport,
};
pub use sim::{simulate, SimConfig, SimError};
pub use smc::{estimate_probability, parse_property, sweep, EstimateResult, Property, SmcOptions};
pub use trace::Trace;
