//! Index-resolved expressions and network tables used on the simulation hot path.

use crate::expr::{BinaryOp, Expr, UnaryOp};
use crate::model::{
    validate_network, DwellPolicy, ModelError, NetworkModel, SyncLabel, VarKind,
};

/// Expression with names resolved to state-vector slots and location indices.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Code {
    Const(f64),
    Bool(bool),
    Slot(usize),
    Loc(usize, usize),
    Neg(Box<Code>),
    Exp(Box<Code>),
    Bin(BinaryOp, Box<Code>, Box<Code>),
}

impl Code {
    #[inline]
    pub(crate) fn num(&self, y: &[f64], locs: &[usize]) -> f64 {
        match self {
            Code::Const(x) => *x,
            Code::Slot(i) => y[*i],
            Code::Neg(a) => -a.num(y, locs),
            Code::Exp(a) => a.num(y, locs).exp(),
            Code::Bin(op, a, b) => {
                let (a, b) = (a.num(y, locs), b.num(y, locs));
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => a / b,
                    _ => f64::NAN,
                }
            }
            Code::Bool(_) | Code::Loc(..) => f64::NAN,
        }
    }

    #[inline]
    pub(crate) fn truth(&self, y: &[f64], locs: &[usize]) -> bool {
        match self {
            Code::Bool(b) => *b,
            Code::Loc(a, l) => locs[*a] == *l,
            Code::Bin(BinaryOp::And, a, b) => a.truth(y, locs) && b.truth(y, locs),
            Code::Bin(BinaryOp::Or, a, b) => a.truth(y, locs) || b.truth(y, locs),
            Code::Bin(op, a, b) => {
                let (a, b) = (a.num(y, locs), b.num(y, locs));
                match op {
                    BinaryOp::Lt => a < b,
                    BinaryOp::Le => a <= b,
                    BinaryOp::Gt => a > b,
                    BinaryOp::Ge => a >= b,
                    BinaryOp::Eq => a == b,
                    _ => false,
                }
            }
            _ => false,
        }
    }

    /// Signed distance-like quantity that is non-negative where the
    /// predicate holds (up to strictness at zero). Used to refine crossings.
    pub(crate) fn margin(&self, y: &[f64], locs: &[usize]) -> f64 {
        match self {
            Code::Bool(_) | Code::Loc(..) => {
                if self.truth(y, locs) {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            }
            Code::Bin(BinaryOp::And, a, b) => a.margin(y, locs).min(b.margin(y, locs)),
            Code::Bin(BinaryOp::Or, a, b) => a.margin(y, locs).max(b.margin(y, locs)),
            Code::Bin(op, a, b) => {
                let (a, b) = (a.num(y, locs), b.num(y, locs));
                match op {
                    BinaryOp::Lt | BinaryOp::Le => b - a,
                    BinaryOp::Gt | BinaryOp::Ge => a - b,
                    BinaryOp::Eq => -(a - b).abs(),
                    _ => f64::NAN,
                }
            }
            _ => f64::NAN,
        }
    }

    pub(crate) fn reads_slot(&self, pred: &impl Fn(usize) -> bool) -> bool {
        match self {
            Code::Slot(i) => pred(*i),
            Code::Neg(a) | Code::Exp(a) => a.reads_slot(pred),
            Code::Bin(_, a, b) => a.reads_slot(pred) || b.reads_slot(pred),
            _ => false,
        }
    }
}

/// Name tables against which expressions are resolved.
pub(crate) struct Names<'a> {
    pub variables: Vec<&'a str>,
    pub automata: Vec<&'a str>,
    pub locations: Vec<Vec<&'a str>>,
}

impl<'a> Names<'a> {
    pub(crate) fn of(model: &'a NetworkModel) -> Self {
        Names {
            variables: model.variables.iter().map(|v| v.name.as_str()).collect(),
            automata: model.automata.iter().map(|a| a.name.as_str()).collect(),
            locations: model
                .automata
                .iter()
                .map(|a| a.locations.iter().map(|l| l.name.as_str()).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum ResolveError {
    Variable(String),
    Automaton(String),
    Location(String, String),
    Clock,
}

/// Resolves `expr`; `owner` is the automaton whose clock `Expr::Clock` denotes.
pub(crate) fn resolve(expr: &Expr, names: &Names<'_>, owner: Option<usize>) -> Result<Code, ResolveError> {
    let n_vars = names.variables.len();
    Ok(match expr {
        Expr::Const(x) => Code::Const(*x),
        Expr::Bool(b) => Code::Bool(*b),
        Expr::Var(name) => Code::Slot(
            names
                .variables
                .iter()
                .position(|v| v == name)
                .ok_or_else(|| ResolveError::Variable(name.clone()))?,
        ),
        Expr::Clock => Code::Slot(n_vars + owner.ok_or(ResolveError::Clock)?),
        Expr::Loc { automaton, location } => {
            let a = names
                .automata
                .iter()
                .position(|n| n == automaton)
                .ok_or_else(|| ResolveError::Automaton(automaton.clone()))?;
            let l = names.locations[a]
                .iter()
                .position(|n| n == location)
                .ok_or_else(|| ResolveError::Location(automaton.clone(), location.clone()))?;
            Code::Loc(a, l)
        }
        Expr::Unary(UnaryOp::Neg, a) => Code::Neg(Box::new(resolve(a, names, owner)?)),
        Expr::Unary(UnaryOp::Exp, a) => Code::Exp(Box::new(resolve(a, names, owner)?)),
        Expr::Binary(op, a, b) => Code::Bin(
            *op,
            Box::new(resolve(a, names, owner)?),
            Box::new(resolve(b, names, owner)?),
        ),
    })
}

#[derive(Debug, Clone)]
pub(crate) struct CFlow {
    pub slot: usize,
    pub rhs: Code,
    pub gate: Option<Code>,
}

#[derive(Debug, Clone)]
pub(crate) struct CLocation {
    pub flows: Vec<CFlow>,
    pub invariant: Option<Code>,
    pub dwell: DwellPolicy,
    /// Edges the automaton may take on its own initiative (no sync or emit).
    pub initiable: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CSync {
    None,
    Emit(usize),
    Receive(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct CEdge {
    pub source: usize,
    pub target: usize,
    pub guard: Option<Code>,
    pub sync: CSync,
    pub resets: Vec<(usize, Code)>,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct CAutomaton {
    pub locations: Vec<CLocation>,
    pub edges: Vec<CEdge>,
}

/// A validated network with every expression resolved, ready to simulate.
/// Immutable; share it freely between concurrent runs.
#[derive(Debug, Clone)]
pub struct CompiledNetwork {
    pub(crate) model: NetworkModel,
    pub(crate) n_vars: usize,
    pub(crate) automata: Vec<CAutomaton>,
    /// Automaton indices sorted by name.
    pub(crate) order: Vec<usize>,
    pub(crate) urgent: Vec<bool>,
    /// Slots of `Var`-kind variables (the ones that may flow).
    pub(crate) var_slots: Vec<usize>,
}

/// A goal or boundary predicate resolved against a [`CompiledNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr(pub(crate) Code);

impl CompiledExpr {
    pub(crate) fn code(&self) -> &Code {
        &self.0
    }
}

impl CompiledNetwork {
    pub fn new(model: &NetworkModel) -> Result<Self, ModelError> {
        let report = validate_network(model);
        if report.has_errors() {
            return Err(ModelError::Invalid(report));
        }
        let names = Names::of(model);
        let n_vars = model.variables.len();
        let channel = |c: &str| model.channels.iter().position(|d| d.name == c).expect("validated");
        let r = |e: &Expr, owner: usize| resolve(e, &names, Some(owner)).expect("validated");
        let mut automata = Vec::with_capacity(model.automata.len());
        for (ai, aut) in model.automata.iter().enumerate() {
            let loc_index = |n: &str| aut.location_index(n).expect("validated");
            let edges: Vec<CEdge> = aut
                .edges
                .iter()
                .map(|e| CEdge {
                    source: loc_index(&e.source),
                    target: loc_index(&e.target),
                    guard: e.guard.as_ref().map(|g| r(g, ai)),
                    sync: match &e.sync {
                        SyncLabel::None => CSync::None,
                        SyncLabel::Emit(c) => CSync::Emit(channel(c)),
                        SyncLabel::Receive(c) => CSync::Receive(channel(c)),
                    },
                    resets: e
                        .resets
                        .iter()
                        .map(|rs| {
                            let slot = if aut.clock.as_deref() == Some(rs.target.as_str()) {
                                n_vars + ai
                            } else {
                                model.variable_index(&rs.target).expect("validated")
                            };
                            (slot, r(&rs.value, ai))
                        })
                        .collect(),
                    weight: e.weight,
                })
                .collect();
            let locations = aut
                .locations
                .iter()
                .enumerate()
                .map(|(li, loc)| CLocation {
                    flows: loc
                        .flows
                        .iter()
                        .map(|f| CFlow {
                            slot: model.variable_index(&f.var).expect("validated"),
                            rhs: r(&f.rhs, ai),
                            gate: f.gate.as_ref().map(|g| r(g, ai)),
                        })
                        .collect(),
                    invariant: loc.invariant.as_ref().map(|i| r(i, ai)),
                    dwell: loc.dwell,
                    initiable: edges
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| e.source == li && !matches!(e.sync, CSync::Receive(_)))
                        .map(|(ei, _)| ei)
                        .collect(),
                })
                .collect();
            automata.push(CAutomaton { locations, edges });
        }
        let mut order: Vec<usize> = (0..model.automata.len()).collect();
        order.sort_by(|&a, &b| model.automata[a].name.cmp(&model.automata[b].name).then(a.cmp(&b)));
        Ok(CompiledNetwork {
            model: model.clone(),
            n_vars,
            automata,
            order,
            urgent: model.channels.iter().map(|c| c.urgent).collect(),
            var_slots: model
                .variables
                .iter()
                .enumerate()
                .filter(|(_, v)| v.kind == VarKind::Var)
                .map(|(i, _)| i)
                .collect(),
        })
    }

    pub fn model(&self) -> &NetworkModel {
        &self.model
    }

    /// Resolves a predicate or goal. `owner` selects whose clock `Expr::Clock` reads.
    pub fn compile(&self, expr: &Expr, owner: Option<usize>) -> Result<CompiledExpr, String> {
        resolve(expr, &Names::of(&self.model), owner)
            .map(CompiledExpr)
            .map_err(|e| match e {
                ResolveError::Variable(v) => format!("undeclared variable `{}`", v),
                ResolveError::Automaton(a) => format!("unknown automaton `{}`", a),
                ResolveError::Location(a, l) => format!("unknown location `{}.{}`", a, l),
                ResolveError::Clock => "the local clock needs an owning automaton".to_string(),
            })
    }
}
