//! Arithmetic/boolean expression trees used for flows, guards, invariants,
//! resets and property goals.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge | BinaryOp::Eq
        )
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinaryOp::And | BinaryOp::Or)
    }

    pub fn is_strict(self) -> bool {
        matches!(self, BinaryOp::Lt | BinaryOp::Gt)
    }

    // Binding strength used by the parser and the printer.
    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge | BinaryOp::Eq => 3,
            BinaryOp::Add | BinaryOp::Sub => 4,
            BinaryOp::Mul | BinaryOp::Div => 5,
        }
    }
}

/// Expression tree.
///
/// `Clock` denotes the local clock of the automaton that owns the expression.
/// `Loc` atoms (`Automaton.location`) only appear in property goals.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Bool(bool),
    Var(String),
    Clock,
    Loc { automaton: String, location: String },
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Type {
    Num,
    Bool,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Num => f.write_str("numeric"),
            Type::Bool => f.write_str("boolean"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
}

impl Value {
    pub fn as_num(self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(x),
            Value::Bool(_) => None,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            Value::Num(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("type error in `{expr}`: expected {expected} operand, found {found}")]
pub struct TypeError {
    pub expr: String,
    pub expected: Type,
    pub found: Type,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound identifier `{0}`")]
    Unbound(String),
    #[error("local clock is not bound in this environment")]
    UnboundClock,
    #[error("no location bound for automaton `{0}`")]
    UnboundAutomaton(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("expected {expected} value")]
    TypeMismatch { expected: Type },
}

/// Bindings for evaluating an [`Expr`] by name.
#[derive(Debug, Clone, Default)]
pub struct Environment {
    values: HashMap<String, f64>,
    clock: Option<f64>,
    locations: HashMap<String, String>,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.values.insert(name.into(), value);
        self
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.bind(name, value);
        self
    }

    pub fn with_clock(mut self, clock: f64) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn set_clock(&mut self, clock: f64) {
        self.clock = Some(clock);
    }

    pub fn set_location(&mut self, automaton: impl Into<String>, location: impl Into<String>) {
        self.locations.insert(automaton.into(), location.into());
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}

/// Evaluates `expr` in IEEE double precision.
pub fn evaluate(expr: &Expr, env: &Environment) -> Result<Value, EvalError> {
    Ok(match expr {
        Expr::Const(x) => Value::Num(*x),
        Expr::Bool(b) => Value::Bool(*b),
        Expr::Var(name) => Value::Num(env.get(name).ok_or_else(|| EvalError::Unbound(name.clone()))?),
        Expr::Clock => Value::Num(env.clock.ok_or(EvalError::UnboundClock)?),
        Expr::Loc { automaton, location } => {
            let current = env
                .locations
                .get(automaton)
                .ok_or_else(|| EvalError::UnboundAutomaton(automaton.clone()))?;
            Value::Bool(current == location)
        }
        Expr::Unary(op, inner) => {
            let x = num(evaluate(inner, env)?)?;
            Value::Num(match op {
                UnaryOp::Neg => -x,
                UnaryOp::Exp => x.exp(),
            })
        }
        Expr::Binary(op, lhs, rhs) => {
            if op.is_logical() {
                let a = boolean(evaluate(lhs, env)?)?;
                // both sides are evaluated so that type errors surface regardless of value
                let b = boolean(evaluate(rhs, env)?)?;
                return Ok(Value::Bool(match op {
                    BinaryOp::And => a && b,
                    _ => a || b,
                }));
            }
            let a = num(evaluate(lhs, env)?)?;
            let b = num(evaluate(rhs, env)?)?;
            match op {
                BinaryOp::Add => Value::Num(a + b),
                BinaryOp::Sub => Value::Num(a - b),
                BinaryOp::Mul => Value::Num(a * b),
                BinaryOp::Div => {
                    if b == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    Value::Num(a / b)
                }
                BinaryOp::Lt => Value::Bool(a < b),
                BinaryOp::Le => Value::Bool(a <= b),
                BinaryOp::Gt => Value::Bool(a > b),
                BinaryOp::Ge => Value::Bool(a >= b),
                BinaryOp::Eq => Value::Bool(a == b),
                BinaryOp::And | BinaryOp::Or => unreachable!(),
            }
        }
    })
}

fn num(v: Value) -> Result<f64, EvalError> {
    v.as_num().ok_or(EvalError::TypeMismatch { expected: Type::Num })
}

fn boolean(v: Value) -> Result<bool, EvalError> {
    v.as_bool().ok_or(EvalError::TypeMismatch { expected: Type::Bool })
}

impl Expr {
    pub fn num(x: f64) -> Expr {
        Expr::Const(x)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn clock() -> Expr {
        Expr::Clock
    }

    pub fn at(automaton: impl Into<String>, location: impl Into<String>) -> Expr {
        Expr::Loc {
            automaton: automaton.into(),
            location: location.into(),
        }
    }

    pub fn exp(self) -> Expr {
        Expr::Unary(UnaryOp::Exp, Box::new(self))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn lt(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Lt, self, rhs)
    }

    pub fn le(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Le, self, rhs)
    }

    pub fn gt(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Gt, self, rhs)
    }

    pub fn ge(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Ge, self, rhs)
    }

    pub fn and(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::And, self, rhs)
    }

    pub fn or(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Or, self, rhs)
    }

    /// Static type of the expression, or the first operand mismatch found.
    pub fn type_check(&self) -> Result<Type, TypeError> {
        match self {
            Expr::Const(_) | Expr::Var(_) | Expr::Clock => Ok(Type::Num),
            Expr::Bool(_) | Expr::Loc { .. } => Ok(Type::Bool),
            Expr::Unary(_, inner) => {
                self.expect(inner, Type::Num)?;
                Ok(Type::Num)
            }
            Expr::Binary(op, lhs, rhs) => {
                let operand = if op.is_logical() { Type::Bool } else { Type::Num };
                self.expect(lhs, operand)?;
                self.expect(rhs, operand)?;
                Ok(if op.is_logical() || op.is_comparison() {
                    Type::Bool
                } else {
                    Type::Num
                })
            }
        }
    }

    fn expect(&self, operand: &Expr, expected: Type) -> Result<(), TypeError> {
        let found = operand.type_check()?;
        if found != expected {
            return Err(TypeError {
                expr: self.to_string(),
                expected,
                found,
            });
        }
        Ok(())
    }

    /// Visits every node, parents before children.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Expr)) {
        visit(self);
        match self {
            Expr::Unary(_, inner) => inner.walk(visit),
            Expr::Binary(_, lhs, rhs) => {
                lhs.walk(visit);
                rhs.walk(visit);
            }
            _ => {}
        }
    }

    /// Names of all variables referenced, in first-occurrence order.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Var(name) = e {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
        });
        out
    }

    pub fn mentions_clock(&self) -> bool {
        self.any(|e| matches!(e, Expr::Clock))
    }

    pub fn has_strict_comparison(&self) -> bool {
        self.any(|e| matches!(e, Expr::Binary(op, _, _) if op.is_strict()))
    }

    pub fn has_location_atoms(&self) -> bool {
        self.any(|e| matches!(e, Expr::Loc { .. }))
    }

    fn any(&self, pred: impl Fn(&Expr) -> bool) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= pred(e));
        found
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Unary(UnaryOp::Neg, _) => 6,
            Expr::Const(x) if x.is_sign_negative() => 6,
            _ => 7,
        }
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, self, rhs)
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, self, rhs)
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::binary(BinaryOp::Div, self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Unary(UnaryOp::Neg, Box::new(self))
    }
}

/// Canonical textual form, accepted back by the expression parser.
///
/// The clock prints as `clock`; the model printer substitutes the
/// automaton's clock name.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, "clock")
    }
}

pub(crate) struct WithClock<'a>(pub &'a Expr, pub &'a str);

impl fmt::Display for WithClock<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self.0, self.1)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, clock: &str) -> fmt::Result {
    match e {
        Expr::Const(x) if x.is_sign_negative() && *x != 0.0 => write!(f, "(-{})", -x),
        Expr::Const(x) => write!(f, "{}", x),
        Expr::Bool(b) => write!(f, "{}", b),
        Expr::Var(name) => f.write_str(name),
        Expr::Clock => f.write_str(clock),
        Expr::Loc { automaton, location } => write!(f, "{}.{}", automaton, location),
        Expr::Unary(UnaryOp::Exp, inner) => {
            f.write_str("exp(")?;
            write_expr(f, inner, clock)?;
            f.write_str(")")
        }
        Expr::Unary(UnaryOp::Neg, inner) => {
            // A leading minus takes the whole multiplicative chain that follows it.
            f.write_str("-")?;
            let bare = matches!(
                **inner,
                Expr::Binary(BinaryOp::Mul | BinaryOp::Div, _, _)
            ) || inner.precedence() >= 6;
            write_operand(f, inner, clock, !bare)
        }
        Expr::Binary(op, lhs, rhs) => {
            let p = op.precedence();
            let mul = matches!(op, BinaryOp::Mul | BinaryOp::Div);
            let is_neg = |x: &Expr| matches!(x, Expr::Unary(UnaryOp::Neg, _));
            let left_parens = lhs.precedence() < p
                || (op.is_comparison() && lhs.precedence() == p)
                || (mul && is_neg(lhs));
            let right_parens = rhs.precedence() <= p || (mul && is_neg(rhs));
            write_operand(f, lhs, clock, left_parens)?;
            write!(f, " {} ", op.symbol())?;
            write_operand(f, rhs, clock, right_parens)
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, clock: &str, parens: bool) -> fmt::Result {
    if parens {
        f.write_str("(")?;
        write_expr(f, e, clock)?;
        f.write_str(")")
    } else {
        write_expr(f, e, clock)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fatigue_curve_at_nine_hundred_seconds() {
        let e = Expr::num(1.0) - (-(Expr::num(0.005) * Expr::num(900.0))).exp();
        let v = evaluate(&e, &Environment::new()).unwrap().as_num().unwrap();
        // 1 - e^-4.5, evaluated independently with mpmath at 30 digits
        assert!((v - 0.988_891_003_461_759).abs() < 1e-6);
    }

    #[test]
    fn exp_zero_is_one() {
        let v = evaluate(&Expr::num(0.0).exp(), &Environment::new()).unwrap();
        assert_eq!(v, Value::Num(1.0));
    }

    #[test]
    fn walking_derivative_at_start() {
        let e = Expr::num(0.005) * (-(Expr::num(0.005) * Expr::num(0.0))).exp();
        assert_eq!(evaluate(&e, &Environment::new()).unwrap(), Value::Num(0.005));
    }

    #[test]
    fn unbound_identifier_is_an_error() {
        let err = evaluate(&Expr::var("x"), &Environment::new()).unwrap_err();
        assert_eq!(err, EvalError::Unbound("x".into()));
        assert_eq!(
            evaluate(&Expr::clock(), &Environment::new()).unwrap_err(),
            EvalError::UnboundClock
        );
    }

    #[test]
    fn division_by_zero() {
        let e = Expr::num(1.0) / Expr::var("x");
        let env = Environment::new().with("x", 0.0);
        assert_eq!(evaluate(&e, &env).unwrap_err(), EvalError::DivisionByZero);
    }

    #[test]
    fn boolean_numeric_mismatch() {
        let e = Expr::num(1.0) + Expr::Bool(true);
        assert!(matches!(
            evaluate(&e, &Environment::new()),
            Err(EvalError::TypeMismatch { expected: Type::Num })
        ));
        assert!(e.type_check().is_err());
        let g = Expr::var("V").ge(Expr::var("v_max"));
        assert_eq!(g.type_check(), Ok(Type::Bool));
        assert!(Expr::var("V").and(Expr::Bool(true)).type_check().is_err());
    }

    #[test]
    fn location_atoms() {
        let mut env = Environment::new();
        env.set_location("Human", "passed_out");
        env.set_location("Robot", "moving");
        let goal = Expr::at("Human", "passed_out")
            .and(Expr::at("Robot", "starting").or(Expr::at("Robot", "moving")));
        assert_eq!(evaluate(&goal, &env).unwrap(), Value::Bool(true));
        env.set_location("Robot", "idle");
        assert_eq!(evaluate(&goal, &env).unwrap(), Value::Bool(false));
    }

    #[test]
    fn printing_keeps_structure_visible() {
        let e = Expr::num(1.0) - (-(Expr::var("lambda_f") * Expr::clock())).exp();
        assert_eq!(e.to_string(), "1 - exp(-lambda_f * clock)");
        assert_eq!(WithClock(&e, "t").to_string(), "1 - exp(-lambda_f * t)");
        let e = Expr::var("a") - (Expr::var("b") - Expr::var("c"));
        assert_eq!(e.to_string(), "a - (b - c)");
        let e = (-Expr::var("a")) * Expr::var("b");
        assert_eq!(e.to_string(), "(-a) * b");
    }
}
