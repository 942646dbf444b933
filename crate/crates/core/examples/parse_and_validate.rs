//! Parse a model file (or the shipped scenario) and list validation findings.
//!
//!     cargo run --example parse_and_validate -- models/scenario.hynet

use hysmc::dsl::parse_model_unchecked;
use hysmc::validate_network;

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "models/scenario.hynet".into());
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| {
        eprintln!("{}: {}", path, e);
        std::process::exit(2);
    });
    let (model, sources) = match parse_model_unchecked(&text) {
        Ok(parsed) => parsed,
        Err(e) => {
            eprintln!("{}: {}", path, e);
            std::process::exit(1);
        }
    };
    let report = validate_network(&model);
    for issue in sources.locate(&report.issues) {
        println!("{}", issue);
    }
    println!(
        "{}: {} automata, {} channels, {} variables",
        model.name,
        model.automata.len(),
        model.channels.len(),
        model.variables.len()
    );
    for a in &model.automata {
        let names: Vec<&str> = a.locations.iter().map(|l| l.name.as_str()).collect();
        println!("  {} starts in {}; locations: {}", a.name, a.initial, names.join(", "));
    }
}
