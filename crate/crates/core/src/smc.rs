//! Statistical model checking of time-bounded reachability.
//!
//! Each estimate runs `N = ceil(ln(2/alpha) / (2 epsilon^2))` simulations and
//! reports the exact Clopper-Pearson interval for the observed count.

use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::compiled::{resolve, Code, CompiledExpr, CompiledNetwork, Names};
use crate::dsl::{Parser, Pos, SyntaxError};
use crate::expr::{Expr, Type};
use crate::model::{Configuration, IssueCode, NetworkModel};
use crate::sim::{EndReason, Observer, Point, SimConfig, SimError, Simulator};
use crate::trace::{sig9, Sample, Trace};

/// `Pr[<= bound](<> goal)`: probability that `goal` holds at some instant in `[0, bound]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub bound: f64,
    pub goal: Expr,
}

impl Property {
    pub fn new(bound: f64, goal: Expr) -> Self {
        Property { bound, goal }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pr[<={}](<> {})", self.bound, self.goal)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PropertyError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("{pos}: time bound must be positive, found {bound}")]
    Bound { pos: Pos, bound: f64 },
    #[error("{code}: {message}")]
    Semantic { code: IssueCode, message: String },
}

impl PropertyError {
    pub fn code(&self) -> Option<IssueCode> {
        match self {
            PropertyError::Semantic { code, .. } => Some(*code),
            _ => None,
        }
    }
}

/// Parses `Pr[<= NUMBER] (<> expr)` and checks the goal against `model`.
pub fn parse_property(text: &str, model: &NetworkModel) -> Result<Property, PropertyError> {
    let mut p = Parser::new(text)?;
    p.expect_kw("Pr")?;
    p.expect_sym("[")?;
    p.expect_sym("<=")?;
    let pos = p.pos();
    let bound = p.number()?;
    if bound <= 0.0 {
        return Err(PropertyError::Bound { pos, bound });
    }
    p.expect_sym("]")?;
    p.expect_sym("(")?;
    p.expect_sym("<>")?;
    let goal = p.expr()?;
    p.expect_sym(")")?;
    p.expect_end()?;
    check_goal(&goal, model)?;
    Ok(Property { bound, goal })
}

/// Parses a bare goal expression and checks it against `model`.
pub fn parse_goal(text: &str, model: &NetworkModel) -> Result<Expr, PropertyError> {
    let mut p = Parser::new(text)?;
    let goal = p.expr()?;
    p.expect_end()?;
    check_goal(&goal, model)?;
    Ok(goal)
}

fn check_goal(goal: &Expr, model: &NetworkModel) -> Result<(), PropertyError> {
    let mut problem = None;
    goal.walk(&mut |e| {
        if problem.is_some() {
            return;
        }
        match e {
            Expr::Var(v) if model.variable(v).is_none() => {
                problem = Some((IssueCode::UndeclaredVar, format!("undeclared variable `{}`", v)))
            }
            Expr::Loc { automaton, location } => {
                let known = model
                    .automaton(automaton)
                    .is_some_and(|a| a.location_index(location).is_some());
                if !known {
                    problem = Some((
                        IssueCode::UnknownLocation,
                        format!("unknown location `{}.{}`", automaton, location),
                    ));
                }
            }
            _ => {}
        }
    });
    if let Some((code, message)) = problem {
        return Err(PropertyError::Semantic { code, message });
    }
    match goal.type_check() {
        Ok(Type::Bool) => Ok(()),
        Ok(Type::Num) => Err(PropertyError::Semantic {
            code: IssueCode::TypeError,
            message: "goal must be a boolean expression".into(),
        }),
        Err(e) => Err(PropertyError::Semantic {
            code: IssueCode::TypeError,
            message: e.to_string(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmcError {
    #[error("{0}")]
    Domain(String),
    #[error("invalid goal: {0}")]
    Goal(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("trace ends at t = {end} before the bound {bound}")]
    TraceTooShort { end: f64, bound: f64 },
    #[error("run {run}: {source}")]
    Run { run: u64, source: SimError },
}

fn trace_names(trace: &Trace) -> Names<'_> {
    Names {
        variables: trace.variables.iter().map(String::as_str).collect(),
        automata: trace.automata.iter().map(String::as_str).collect(),
        locations: trace
            .locations
            .iter()
            .map(|ls| ls.iter().map(String::as_str).collect())
            .collect(),
    }
}

/// Whether the goal holds at some recorded sample or event instant with
/// time at most the bound. A trace that ended in deadlock is held constant.
pub fn evaluate_on_trace(property: &Property, trace: &Trace) -> Result<bool, SmcError> {
    if trace.end_time() < property.bound && trace.end != EndReason::Deadlock {
        return Err(SmcError::TraceTooShort {
            end: trace.end_time(),
            bound: property.bound,
        });
    }
    let code = resolve(&property.goal, &trace_names(trace), None)
        .map_err(|e| SmcError::Goal(format!("{:?}", e)))?;
    let holds = |s: &Sample| s.time <= property.bound && code.truth(&s.state, &s.locations);
    Ok(trace.samples.iter().any(holds) || trace.events.iter().any(|e| holds(&e.after)))
}

/// Chernoff-Hoeffding sample size `ceil(ln(2/alpha) / (2 epsilon^2))`.
pub fn required_runs(epsilon: f64, alpha: f64) -> Result<u64, SmcError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SmcError::Domain(format!("epsilon must lie in (0, 1), got {}", epsilon)));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SmcError::Domain(format!("alpha must lie in (0, 1), got {}", alpha)));
    }
    let exact = (2.0 / alpha).ln() / (2.0 * epsilon * epsilon);
    // absorb rounding noise when the quotient is an integer
    Ok((exact * (1.0 - 1e-12)).ceil().max(1.0) as u64)
}

fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact two-sided `(1 - alpha)` Clopper-Pearson interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> Result<(f64, f64), SmcError> {
    if n == 0 || k > n {
        return Err(SmcError::Domain(format!("need 0 <= k <= n and n > 0, got k = {}, n = {}", k, n)));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SmcError::Domain(format!("alpha must lie in (0, 1), got {}", alpha)));
    }
    let (kf, nf) = (k as f64, n as f64);
    let p_hat = kf / nf;
    let lo = if k == 0 {
        0.0
    } else {
        beta_quantile(kf, nf - kf + 1.0, alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        beta_quantile(kf + 1.0, nf - kf, 1.0 - alpha / 2.0)
    };
    Ok((lo.min(p_hat), hi.max(p_hat)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcOptions {
    pub epsilon: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Reuse run `j`'s random stream at every bound of a sweep.
    pub seed_sharing: bool,
    pub step: f64,
    pub tol_evt: f64,
}

impl Default for SmcOptions {
    fn default() -> Self {
        let sim = SimConfig::default();
        SmcOptions {
            epsilon: 0.05,
            alpha: 0.05,
            seed: 0,
            seed_sharing: true,
            step: sim.step,
            tol_evt: sim.tol_evt,
        }
    }
}

impl SmcOptions {
    pub fn new(epsilon: f64, alpha: f64, seed: u64) -> Self {
        SmcOptions {
            epsilon,
            alpha,
            seed,
            ..SmcOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub t_s: f64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub k: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub epsilon: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl EstimateResult {
    fn from_counts(t_s: f64, k: u64, n: u64, options: &SmcOptions) -> Result<Self, SmcError> {
        let (ci_lo, ci_hi) = clopper_pearson(k, n, options.alpha)?;
        Ok(EstimateResult {
            t_s,
            p_hat: k as f64 / n as f64,
            ci_lo,
            ci_hi,
            k,
            n,
            epsilon: options.epsilon,
            alpha: options.alpha,
            seed: options.seed,
        })
    }
}

/// Stops a run the first time the goal holds and remembers when.
pub struct GoalMonitor {
    goal: CompiledExpr,
    hit: Option<f64>,
}

impl GoalMonitor {
    pub fn new(goal: CompiledExpr) -> Self {
        GoalMonitor { goal, hit: None }
    }

    pub fn hit(&self) -> Option<f64> {
        self.hit
    }
}

impl Observer for GoalMonitor {
    fn watch(&self) -> Option<&CompiledExpr> {
        Some(&self.goal)
    }

    fn observe(&mut self, config: &Configuration, point: Point<'_>) -> bool {
        if matches!(point, Point::End(_)) || self.hit.is_some() {
            return self.hit.is_none();
        }
        let code: &Code = self.goal.code();
        if code.truth(&config.state, &config.locations) {
            self.hit = Some(config.time);
            return false;
        }
        true
    }
}

/// First time `goal` holds in run `stream` under `seed`, if it does before `horizon`.
pub fn first_hit(
    net: &CompiledNetwork,
    goal: &CompiledExpr,
    horizon: f64,
    seed: u64,
    stream: u64,
    options: &SmcOptions,
) -> Result<Option<f64>, SimError> {
    let settings = SimConfig {
        horizon,
        step: options.step,
        tol_evt: options.tol_evt,
        seed,
        stream,
        ..SimConfig::default()
    };
    let mut sim = Simulator::new(net, settings)?;
    let mut monitor = GoalMonitor::new(goal.clone());
    sim.run(&mut monitor)?;
    Ok(monitor.hit().filter(|&t| t <= horizon))
}

fn check_options(options: &SmcOptions) -> Result<u64, SmcError> {
    let n = required_runs(options.epsilon, options.alpha)?;
    let sim = SimConfig {
        step: options.step,
        tol_evt: options.tol_evt,
        ..SimConfig::default()
    };
    sim.validate().map_err(|e| SmcError::Domain(e.to_string()))?;
    Ok(n)
}

fn run_batch(
    net: &CompiledNetwork,
    goal: &CompiledExpr,
    horizon: f64,
    streams: impl Fn(u64) -> u64 + Sync,
    n: u64,
    options: &SmcOptions,
) -> Result<Vec<Option<f64>>, SmcError> {
    let outcomes: Vec<Result<Option<f64>, SimError>> = (0..n)
        .into_par_iter()
        .map(|j| first_hit(net, goal, horizon, options.seed, streams(j), options))
        .collect();
    outcomes
        .into_iter()
        .enumerate()
        .map(|(j, r)| r.map_err(|source| SmcError::Run { run: j as u64, source }))
        .collect()
}

/// Estimates `Pr[<= t_s](<> goal)` from `required_runs(epsilon, alpha)` runs.
pub fn estimate_probability(
    model: &NetworkModel,
    property: &Property,
    options: &SmcOptions,
) -> Result<EstimateResult, SmcError> {
    let mut results = sweep(model, &property.goal, &[property.bound], options)?;
    Ok(results.remove(0))
}

/// One estimate per bound. With seed sharing each run is simulated once up to
/// the largest bound and its first hitting time is compared against every
/// bound, so per-run satisfaction is monotone in the bound.
pub fn sweep(
    model: &NetworkModel,
    goal: &Expr,
    bounds: &[f64],
    options: &SmcOptions,
) -> Result<Vec<EstimateResult>, SmcError> {
    if bounds.is_empty() {
        return Err(SmcError::Domain("at least one bound is required".into()));
    }
    if bounds.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(SmcError::Domain("bounds must be positive".into()));
    }
    if bounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SmcError::Domain("bounds must be strictly increasing".into()));
    }
    let n = check_options(options)?;
    let net = CompiledNetwork::new(model).map_err(|e| SmcError::Model(e.to_string()))?;
    let goal = net.compile(goal, None).map_err(SmcError::Goal)?;

    if options.seed_sharing {
        let last = *bounds.last().expect("non-empty");
        let hits = run_batch(&net, &goal, last, |j| j, n, options)?;
        bounds
            .iter()
            .map(|&b| {
                let k = hits.iter().filter(|h| h.is_some_and(|t| t <= b)).count() as u64;
                EstimateResult::from_counts(b, k, n, options)
            })
            .collect()
    } else {
        bounds
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let hits = run_batch(&net, &goal, b, |j| ((i as u64) << 32) | j, n, options)?;
                let k = hits.iter().filter(|h| h.is_some()).count() as u64;
                EstimateResult::from_counts(b, k, n, options)
            })
            .collect()
    }
}

/// Writes `t_s,p_hat,ci_lo,ci_hi,k,N` rows.
pub fn write_sweep_csv(results: &[EstimateResult], out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "t_s,p_hat,ci_lo,ci_hi,k,N")?;
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            sig9(r.t_s),
            sig9(r.p_hat),
            sig9(r.ci_lo),
            sig9(r.ci_hi),
            r.k,
            r.n
        )?;
    }
    Ok(())
}

pub fn sweep_csv(results: &[EstimateResult]) -> String {
    let mut buf = Vec::new();
    write_sweep_csv(results, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_counts() {
        assert_eq!(required_runs(0.05, 0.05).unwrap(), 738);
        assert_eq!(required_runs(0.1, 0.05).unwrap(), 185);
        assert_eq!(required_runs(0.5, 2.0 / std::f64::consts::E).unwrap(), 2);
        assert!(required_runs(0.0, 0.05).is_err());
        assert!(required_runs(0.1, 1.0).is_err());
    }

    #[test]
    fn interval_edges() {
        let (lo, hi) = clopper_pearson(0, 10, 0.05).unwrap();
        assert_eq!(lo, 0.0);
        // (alpha/2)^(1/n) complement
        assert!((hi - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(10, 10, 0.05).unwrap();
        assert!((lo - 0.025f64.powf(0.1)).abs() < 1e-9);
        assert_eq!(hi, 1.0);
    }
}
