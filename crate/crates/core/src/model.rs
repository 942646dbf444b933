//! Hybrid-automata network data model and structural validation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::expr::{Expr, Type};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Fixed parameter; never has a flow or a reset.
    Const,
    /// Continuous state variable.
    Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub kind: VarKind,
    pub init: f64,
    /// Free-text unit annotation; documentation only.
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDecl {
    pub name: String,
    pub urgent: bool,
}

/// How long an automaton lingers in a location before taking initiative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DwellPolicy {
    /// Leave as soon as an initiable edge is enabled.
    Eager,
    /// Leave after an exponentially distributed delay with the given rate.
    Exponential { rate: f64 },
}

/// Right-hand side of `d(var)/dt`, optionally active only while `gate` holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub var: String,
    pub rhs: Expr,
    pub gate: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub name: String,
    pub flows: Vec<Flow>,
    pub invariant: Option<Expr>,
    pub dwell: DwellPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyncLabel {
    None,
    Emit(String),
    Receive(String),
}

impl SyncLabel {
    pub fn channel(&self) -> Option<&str> {
        match self {
            SyncLabel::None => None,
            SyncLabel::Emit(c) | SyncLabel::Receive(c) => Some(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reset {
    /// A declared variable or the automaton's local clock.
    pub target: String,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub guard: Option<Expr>,
    pub sync: SyncLabel,
    pub resets: Vec<Reset>,
    pub weight: f64,
}

impl Edge {
    pub fn label(&self) -> String {
        format!("{}->{}", self.source, self.target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridAutomaton {
    pub name: String,
    pub clock: Option<String>,
    pub locations: Vec<Location>,
    pub edges: Vec<Edge>,
    pub initial: String,
}

impl HybridAutomaton {
    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.name == name)
    }

    pub fn location(&self, name: &str) -> Option<&Location> {
        self.locations.iter().find(|l| l.name == name)
    }

    pub fn location_mut(&mut self, name: &str) -> Option<&mut Location> {
        self.locations.iter_mut().find(|l| l.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub name: String,
    pub variables: Vec<VarDecl>,
    pub channels: Vec<ChannelDecl>,
    pub automata: Vec<HybridAutomaton>,
}

impl NetworkModel {
    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn variable(&self, name: &str) -> Option<&VarDecl> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn automaton_index(&self, name: &str) -> Option<usize> {
        self.automata.iter().position(|a| a.name == name)
    }

    pub fn automaton(&self, name: &str) -> Option<&HybridAutomaton> {
        self.automata.iter().find(|a| a.name == name)
    }

    pub fn automaton_mut(&mut self, name: &str) -> Option<&mut HybridAutomaton> {
        self.automata.iter_mut().find(|a| a.name == name)
    }

    pub fn channel(&self, name: &str) -> Option<&ChannelDecl> {
        self.channels.iter().find(|c| c.name == name)
    }

    /// Overrides the initial value of a declared variable or constant.
    pub fn set_initial(&mut self, name: &str, value: f64) -> Result<(), ModelError> {
        let decl = self
            .variables
            .iter_mut()
            .find(|v| v.name == name)
            .ok_or_else(|| ModelError::UnknownVariable(name.to_string()))?;
        decl.init = value;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model is invalid:\n{0}")]
    Invalid(ValidationReport),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
}

/// Points at one element of a [`NetworkModel`] by position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElementRef {
    Network,
    Variable(usize),
    Channel(usize),
    Automaton(usize),
    Location(usize, usize),
    Edge(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IssueCode {
    DuplicateName,
    UndeclaredVar,
    UnknownLocation,
    UnknownChannel,
    MissingInitial,
    BadFlowTarget,
    DuplicateFlow,
    BadResetTarget,
    TypeError,
    StrictInvariant,
    LocationAtom,
    MissingClock,
    BadWeight,
    BadRate,
    BadValue,
    UnmatchedEmit,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::DuplicateName => "DUPLICATE_NAME",
            IssueCode::UndeclaredVar => "UNDECLARED_VAR",
            IssueCode::UnknownLocation => "UNKNOWN_LOCATION",
            IssueCode::UnknownChannel => "UNKNOWN_CHANNEL",
            IssueCode::MissingInitial => "MISSING_INITIAL",
            IssueCode::BadFlowTarget => "BAD_FLOW_TARGET",
            IssueCode::DuplicateFlow => "DUPLICATE_FLOW",
            IssueCode::BadResetTarget => "BAD_RESET_TARGET",
            IssueCode::TypeError => "TYPE_ERROR",
            IssueCode::StrictInvariant => "STRICT_INVARIANT",
            IssueCode::LocationAtom => "LOCATION_ATOM",
            IssueCode::MissingClock => "MISSING_CLOCK",
            IssueCode::BadWeight => "BAD_WEIGHT",
            IssueCode::BadRate => "BAD_RATE",
            IssueCode::BadValue => "BAD_VALUE",
            IssueCode::UnmatchedEmit => "UNMATCHED_EMIT",
        }
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub severity: Severity,
    pub code: IssueCode,
    pub element: ElementRef,
    /// Earlier element involved in the problem (first declaration of a duplicate).
    pub related: Option<ElementRef>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn codes(&self) -> Vec<IssueCode> {
        self.issues.iter().map(|i| i.code).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            let level = match issue.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{}[{}]: {}", level, issue.code, issue.message)?;
        }
        Ok(())
    }
}

struct Checker<'m> {
    model: &'m NetworkModel,
    report: ValidationReport,
}

impl Checker<'_> {
    fn push(&mut self, severity: Severity, code: IssueCode, element: ElementRef, message: String) {
        self.report.issues.push(Issue {
            severity,
            code,
            element,
            related: None,
            message,
        });
    }

    fn error(&mut self, code: IssueCode, element: ElementRef, message: String) {
        self.push(Severity::Error, code, element, message);
    }

    fn duplicates<'a>(
        &mut self,
        kind: &str,
        names: impl Iterator<Item = (&'a str, ElementRef)>,
    ) {
        let mut seen: HashMap<&str, ElementRef> = HashMap::new();
        for (name, element) in names {
            if let Some(first) = seen.get(name) {
                self.report.issues.push(Issue {
                    severity: Severity::Error,
                    code: IssueCode::DuplicateName,
                    element,
                    related: Some(*first),
                    message: format!("duplicate {} name `{}`", kind, name),
                });
            } else {
                seen.insert(name, element);
            }
        }
    }

    /// Checks that `expr` has type `want` and only reads declared names.
    fn expression(
        &mut self,
        expr: &Expr,
        want: Type,
        automaton: &HybridAutomaton,
        element: ElementRef,
        what: &str,
    ) {
        match expr.type_check() {
            Ok(found) if found != want => self.error(
                IssueCode::TypeError,
                element,
                format!("{} `{}` must be {}, found {}", what, expr, want, found),
            ),
            Ok(_) => {}
            Err(e) => self.error(IssueCode::TypeError, element, format!("{}: {}", what, e)),
        }
        for name in expr.variables() {
            if self.model.variable(name).is_none() {
                self.error(
                    IssueCode::UndeclaredVar,
                    element,
                    format!("{} reads undeclared variable `{}`", what, name),
                );
            }
        }
        if expr.has_location_atoms() {
            self.error(
                IssueCode::LocationAtom,
                element,
                format!("{} `{}` uses a location atom; only properties may", what, expr),
            );
        }
        if expr.mentions_clock() && automaton.clock.is_none() {
            self.error(
                IssueCode::MissingClock,
                element,
                format!("{} reads the local clock but `{}` declares none", what, automaton.name),
            );
        }
    }

    fn run(mut self) -> ValidationReport {
        let model = self.model;
        self.duplicates(
            "variable",
            model
                .variables
                .iter()
                .enumerate()
                .map(|(i, v)| (v.name.as_str(), ElementRef::Variable(i))),
        );
        self.duplicates(
            "channel",
            model
                .channels
                .iter()
                .enumerate()
                .map(|(i, c)| (c.name.as_str(), ElementRef::Channel(i))),
        );
        self.duplicates(
            "automaton",
            model
                .automata
                .iter()
                .enumerate()
                .map(|(i, a)| (a.name.as_str(), ElementRef::Automaton(i))),
        );
        for (i, v) in model.variables.iter().enumerate() {
            if !v.init.is_finite() {
                self.error(
                    IssueCode::BadValue,
                    ElementRef::Variable(i),
                    format!("initial value of `{}` is not finite", v.name),
                );
            }
        }
        for (ai, aut) in model.automata.iter().enumerate() {
            self.automaton(ai, aut);
        }
        self.unmatched_emits();
        self.report
    }

    fn automaton(&mut self, ai: usize, aut: &HybridAutomaton) {
        let model = self.model;
        self.duplicates(
            "location",
            aut.locations
                .iter()
                .enumerate()
                .map(|(li, l)| (l.name.as_str(), ElementRef::Location(ai, li))),
        );
        if let Some(clock) = &aut.clock {
            if let Some(vi) = model.variable_index(clock) {
                self.report.issues.push(Issue {
                    severity: Severity::Error,
                    code: IssueCode::DuplicateName,
                    element: ElementRef::Automaton(ai),
                    related: Some(ElementRef::Variable(vi)),
                    message: format!("clock `{}` of `{}` shadows a variable", clock, aut.name),
                });
            }
        }
        if aut.location(&aut.initial).is_none() {
            self.error(
                IssueCode::MissingInitial,
                ElementRef::Automaton(ai),
                format!("initial location `{}` of `{}` does not exist", aut.initial, aut.name),
            );
        }
        for (li, loc) in aut.locations.iter().enumerate() {
            let here = ElementRef::Location(ai, li);
            let mut flowed: Vec<&str> = Vec::new();
            for flow in &loc.flows {
                match model.variable(&flow.var) {
                    None => self.error(
                        IssueCode::UndeclaredVar,
                        here,
                        format!("flow for undeclared variable `{}` in `{}`", flow.var, loc.name),
                    ),
                    Some(decl) if decl.kind == VarKind::Const => self.error(
                        IssueCode::BadFlowTarget,
                        here,
                        format!("flow assigned to constant `{}` in `{}`", flow.var, loc.name),
                    ),
                    Some(_) => {}
                }
                if flowed.contains(&flow.var.as_str()) {
                    self.error(
                        IssueCode::DuplicateFlow,
                        here,
                        format!("`{}` has two flows in `{}`", flow.var, loc.name),
                    );
                }
                flowed.push(&flow.var);
                self.expression(&flow.rhs, Type::Num, aut, here, "flow");
                if let Some(gate) = &flow.gate {
                    self.expression(gate, Type::Bool, aut, here, "flow gate");
                }
            }
            if let Some(inv) = &loc.invariant {
                self.expression(inv, Type::Bool, aut, here, "invariant");
                if inv.has_strict_comparison() {
                    self.error(
                        IssueCode::StrictInvariant,
                        here,
                        format!("invariant `{}` of `{}` uses a strict comparison", inv, loc.name),
                    );
                }
            }
            if let DwellPolicy::Exponential { rate } = loc.dwell {
                if !(rate.is_finite() && rate > 0.0) {
                    self.error(
                        IssueCode::BadRate,
                        here,
                        format!("exponential rate {} of `{}` must be positive", rate, loc.name),
                    );
                }
            }
        }
        for (ei, edge) in aut.edges.iter().enumerate() {
            let here = ElementRef::Edge(ai, ei);
            for end in [&edge.source, &edge.target] {
                if aut.location(end).is_none() {
                    self.error(
                        IssueCode::UnknownLocation,
                        here,
                        format!("edge {} of `{}` names unknown location `{}`", edge.label(), aut.name, end),
                    );
                }
            }
            if let Some(guard) = &edge.guard {
                self.expression(guard, Type::Bool, aut, here, "guard");
            }
            if let Some(channel) = edge.sync.channel() {
                if model.channel(channel).is_none() {
                    self.error(
                        IssueCode::UnknownChannel,
                        here,
                        format!("edge {} of `{}` uses undeclared channel `{}`", edge.label(), aut.name, channel),
                    );
                }
            }
            for reset in &edge.resets {
                let is_clock = aut.clock.as_deref() == Some(reset.target.as_str());
                let ok = is_clock
                    || matches!(model.variable(&reset.target), Some(d) if d.kind == VarKind::Var);
                if !ok {
                    self.error(
                        IssueCode::BadResetTarget,
                        here,
                        format!("reset target `{}` is not a variable or the local clock", reset.target),
                    );
                }
                self.expression(&reset.value, Type::Num, aut, here, "reset");
            }
            if !(edge.weight.is_finite() && edge.weight > 0.0) {
                self.error(
                    IssueCode::BadWeight,
                    here,
                    format!("edge weight {} must be positive", edge.weight),
                );
            }
        }
    }

    fn unmatched_emits(&mut self) {
        let model = self.model;
        for (ai, aut) in model.automata.iter().enumerate() {
            for (ei, edge) in aut.edges.iter().enumerate() {
                let SyncLabel::Emit(channel) = &edge.sync else { continue };
                let received = model.automata.iter().enumerate().any(|(bi, other)| {
                    bi != ai
                        && other
                            .edges
                            .iter()
                            .any(|e| matches!(&e.sync, SyncLabel::Receive(c) if c == channel))
                });
                if !received {
                    self.push(
                        Severity::Warning,
                        IssueCode::UnmatchedEmit,
                        ElementRef::Edge(ai, ei),
                        format!(
                            "`{}` emits `{}` on {} but no other automaton receives it",
                            aut.name,
                            channel,
                            edge.label()
                        ),
                    );
                }
            }
        }
    }
}

/// Structural well-formedness check. Never fails; problems are reported.
pub fn validate_network(model: &NetworkModel) -> ValidationReport {
    Checker {
        model,
        report: ValidationReport::default(),
    }
    .run()
}

/// Reference to one edge of one automaton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EdgeRef {
    pub automaton: usize,
    pub edge: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SyncBucket {
    pub emitters: Vec<EdgeRef>,
    pub receivers: Vec<EdgeRef>,
}

/// Emitting and receiving edges per declared channel, ordered by automaton
/// name then edge index.
pub fn sync_table(model: &NetworkModel) -> BTreeMap<String, SyncBucket> {
    let mut table: BTreeMap<String, SyncBucket> = model
        .channels
        .iter()
        .map(|c| (c.name.clone(), SyncBucket::default()))
        .collect();
    let mut order: Vec<usize> = (0..model.automata.len()).collect();
    order.sort_by(|&a, &b| model.automata[a].name.cmp(&model.automata[b].name).then(a.cmp(&b)));
    for ai in order {
        for (ei, edge) in model.automata[ai].edges.iter().enumerate() {
            let r = EdgeRef { automaton: ai, edge: ei };
            match &edge.sync {
                SyncLabel::None => {}
                SyncLabel::Emit(c) => table.entry(c.clone()).or_default().emitters.push(r),
                SyncLabel::Receive(c) => table.entry(c.clone()).or_default().receivers.push(r),
            }
        }
    }
    table
}

/// Simulation state: global time, one location per automaton, and the
/// continuous state vector.
///
/// `state` holds every declared variable (constants included) in
/// declaration order followed by one local clock per automaton.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub time: f64,
    pub locations: Vec<usize>,
    pub state: Vec<f64>,
    pub n_vars: usize,
}

impl Configuration {
    pub fn values(&self) -> &[f64] {
        &self.state[..self.n_vars]
    }

    pub fn clocks(&self) -> &[f64] {
        &self.state[self.n_vars..]
    }

    pub fn value(&self, model: &NetworkModel, name: &str) -> Option<f64> {
        model.variable_index(name).map(|i| self.state[i])
    }

    pub fn clock(&self, automaton: usize) -> f64 {
        self.state[self.n_vars + automaton]
    }

    pub fn location_name<'m>(&self, model: &'m NetworkModel, automaton: usize) -> &'m str {
        &model.automata[automaton].locations[self.locations[automaton]].name
    }
}

/// Places every automaton at its initial location with declared initial
/// values, zero clocks and zero time.
pub fn initial_configuration(model: &NetworkModel) -> Result<Configuration, ModelError> {
    let report = validate_network(model);
    if report.has_errors() {
        return Err(ModelError::Invalid(report));
    }
    let mut state: Vec<f64> = model.variables.iter().map(|v| v.init).collect();
    state.extend(std::iter::repeat_n(0.0, model.automata.len()));
    let locations = model
        .automata
        .iter()
        .map(|a| a.location_index(&a.initial).expect("validated"))
        .collect();
    Ok(Configuration {
        time: 0.0,
        locations,
        state,
        n_vars: model.variables.len(),
    })
}
