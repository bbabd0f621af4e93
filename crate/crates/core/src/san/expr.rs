//! Marking expression language used by gates, rates and case probabilities.
//!
//! Everything a gate can compute is data, so models can be dumped, compared
//! and hashed. The language is deliberately small: integer comparisons on
//! place tokens, token add/subtract/set, and real arithmetic over constants
//! and token counts.

use std::fmt;
use std::ops;

use serde::Serialize;

use super::model::{Marking, PlaceId};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Tokens(PlaceId),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn constant(value: f64) -> Self {
        Expr::Const(value)
    }

    pub fn tokens(place: PlaceId) -> Self {
        Expr::Tokens(place)
    }

    pub fn eval(&self, m: &Marking) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Tokens(p) => f64::from(m.tokens(*p)),
            Expr::Add(a, b) => a.eval(m) + b.eval(m),
            Expr::Sub(a, b) => a.eval(m) - b.eval(m),
            Expr::Mul(a, b) => a.eval(m) * b.eval(m),
            Expr::Div(a, b) => a.eval(m) / b.eval(m),
        }
    }

    /// Constant value, if the expression does not read the marking.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub(crate) fn visit_places(&self, f: &mut impl FnMut(PlaceId)) {
        match self {
            Expr::Const(_) => {}
            Expr::Tokens(p) => f(*p),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit_places(f);
                b.visit_places(f);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            _ => 3,
        }
    }

    /// Render with place ids substituted for place indices.
    pub fn render(&self, names: &[&str]) -> String {
        let mut out = String::new();
        self.render_into(names, &mut out);
        out
    }

    fn render_into(&self, names: &[&str], out: &mut String) {
        let (a, b, op) = match self {
            Expr::Const(c) => {
                out.push_str(&c.to_string());
                return;
            }
            Expr::Tokens(p) => {
                out.push_str(names.get(p.0).copied().unwrap_or("?"));
                return;
            }
            Expr::Add(a, b) => (a, b, " + "),
            Expr::Sub(a, b) => (a, b, " - "),
            Expr::Mul(a, b) => (a, b, " * "),
            Expr::Div(a, b) => (a, b, " / "),
        };
        let prec = self.precedence();
        let non_assoc = matches!(self, Expr::Sub(..) | Expr::Div(..));
        let wrap = |e: &Expr, right: bool, out: &mut String| {
            let p = e.precedence();
            let paren = p < prec || (right && non_assoc && p == prec);
            if paren {
                out.push('(');
            }
            e.render_into(names, out);
            if paren {
                out.push(')');
            }
        };
        wrap(a, false, out);
        out.push_str(op);
        wrap(b, true, out);
    }
}

impl From<f64> for Expr {
    fn from(value: f64) -> Self {
        Expr::Const(value)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Box::new(self), Box::new(rhs))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Cmp::Eq => lhs == rhs,
            Cmp::Ne => lhs != rhs,
            Cmp::Lt => lhs < rhs,
            Cmp::Le => lhs <= rhs,
            Cmp::Gt => lhs > rhs,
            Cmp::Ge => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Eq => "=",
            Cmp::Ne => "!=",
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        }
    }
}

/// `tokens(place) <cmp> value`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Condition {
    pub place: PlaceId,
    pub cmp: Cmp,
    pub value: i64,
}

impl Condition {
    pub fn new(place: PlaceId, cmp: Cmp, value: i64) -> Self {
        Self { place, cmp, value }
    }

    pub fn holds(&self, m: &Marking) -> bool {
        self.cmp.holds(i64::from(m.tokens(self.place)), self.value)
    }

    pub fn render(&self, names: &[&str]) -> String {
        let name = names.get(self.place.0).copied().unwrap_or("?");
        format!("{name} {} {}", self.cmp.symbol(), self.value)
    }
}

/// Conjunction of conditions. The empty guard is always true.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Guard(pub Vec<Condition>);

impl Guard {
    pub fn always() -> Self {
        Guard(Vec::new())
    }

    pub fn holds(&self, m: &Marking) -> bool {
        self.0.iter().all(|c| c.holds(m))
    }

    pub fn and(mut self, c: Condition) -> Self {
        self.0.push(c);
        self
    }
}

impl From<Condition> for Guard {
    fn from(c: Condition) -> Self {
        Guard(vec![c])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Add,
    Sub,
    Set,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenOp {
    pub place: PlaceId,
    pub kind: OpKind,
    pub amount: u32,
}

impl TokenOp {
    pub fn add(place: PlaceId, amount: u32) -> Self {
        Self { place, kind: OpKind::Add, amount }
    }

    pub fn sub(place: PlaceId, amount: u32) -> Self {
        Self { place, kind: OpKind::Sub, amount }
    }

    pub fn set(place: PlaceId, amount: u32) -> Self {
        Self { place, kind: OpKind::Set, amount }
    }

    /// Apply in place. Returns `false` (leaving `m` untouched) if the result
    /// would be negative or overflow.
    pub(crate) fn apply(&self, m: &mut Marking) -> bool {
        let slot = m.slot_mut(self.place);
        let next = match self.kind {
            OpKind::Add => slot.checked_add(self.amount),
            OpKind::Sub => slot.checked_sub(self.amount),
            OpKind::Set => Some(self.amount),
        };
        match next {
            Some(v) => {
                *slot = v;
                true
            }
            None => false,
        }
    }

    pub fn render(&self, names: &[&str]) -> String {
        let name = names.get(self.place.0).copied().unwrap_or("?");
        let op = match self.kind {
            OpKind::Add => "+=",
            OpKind::Sub => "-=",
            OpKind::Set => ":=",
        };
        format!("{name} {op} {}", self.amount)
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Set => "set",
        })
    }
}
