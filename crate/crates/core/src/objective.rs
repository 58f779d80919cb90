//! Scalar expressions over the entries of `C^H` with reverse-mode gradients.
//!
//! Expressions are immutable DAGs built with ordinary arithmetic operators;
//! constant subexpressions fold when they are built.
//!
//! ```
//! use voxhom::objective::{bulk_objective, Expr};
//! let c = [[0.0; 6]; 6];
//! let f = Expr::entry(0, 0) * 2.0 + 1.0;
//! assert_eq!(f.eval(&c).unwrap(), 1.0);
//! assert_eq!(bulk_objective().eval(&c).unwrap(), 0.0);
//! ```

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub type Tensor6 = [[f64; 6]; 6];

#[derive(Debug)]
enum Node {
    Const(f64),
    Entry(usize, usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, f64),
    Log(Expr),
    Exp(Expr),
}

/// Shared handle to an expression node.
#[derive(Clone, Debug)]
pub struct Expr(Arc<Node>);

/// Domain error raised while evaluating an expression.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{op} domain error at node {node} ({expr}): {detail}")]
pub struct ExprError {
    /// Position of the failing node in evaluation order.
    pub node: usize,
    pub op: &'static str,
    /// Rendering of the failing subexpression.
    pub expr: String,
    pub detail: String,
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Self(Arc::new(Node::Const(v)))
    }

    /// Tensor entry `C(i, j)`.
    ///
    /// # Panics
    /// When `i` or `j` exceeds 5.
    pub fn entry(i: usize, j: usize) -> Self {
        assert!(i < 6 && j < 6, "tensor entry ({i}, {j}) out of range");
        Self(Arc::new(Node::Entry(i, j)))
    }

    fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn powf(self, p: f64) -> Self {
        match self.as_const() {
            Some(v) => Self::constant(v.powf(p)),
            None => Self(Arc::new(Node::Pow(self, p))),
        }
    }

    pub fn ln(self) -> Self {
        match self.as_const() {
            Some(v) if v > 0.0 => Self::constant(v.ln()),
            _ => Self(Arc::new(Node::Log(self))),
        }
    }

    pub fn exp(self) -> Self {
        match self.as_const() {
            Some(v) => Self::constant(v.exp()),
            None => Self(Arc::new(Node::Exp(self))),
        }
    }

    fn children(&self) -> Vec<&Expr> {
        match &*self.0 {
            Node::Const(_) | Node::Entry(..) => vec![],
            Node::Neg(a) | Node::Pow(a, _) | Node::Log(a) | Node::Exp(a) => vec![a],
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => vec![a, b],
        }
    }

    fn key(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    /// Nodes in dependency order (children first), shared nodes listed once.
    fn tape(&self) -> Vec<Expr> {
        let mut order = Vec::new();
        let mut seen = HashMap::new();
        let mut stack = vec![(self.clone(), false)];
        while let Some((e, expanded)) = stack.pop() {
            if seen.contains_key(&e.key()) {
                continue;
            }
            if expanded {
                seen.insert(e.key(), order.len());
                order.push(e);
            } else {
                stack.push((e.clone(), true));
                for c in e.children() {
                    if !seen.contains_key(&c.key()) {
                        stack.push((c.clone(), false));
                    }
                }
            }
        }
        order
    }

    fn forward(&self, c: &Tensor6) -> Result<(Vec<Expr>, HashMap<*const Node, usize>, Vec<f64>), ExprError> {
        let tape = self.tape();
        let index: HashMap<*const Node, usize> = tape.iter().enumerate().map(|(i, e)| (e.key(), i)).collect();
        let mut vals = vec![0.0; tape.len()];
        for (n, e) in tape.iter().enumerate() {
            let v = |x: &Expr| vals[index[&x.key()]];
            let err = |op: &'static str, detail: String| ExprError {
                node: n,
                op,
                expr: e.to_string(),
                detail,
            };
            let out = match &*e.0 {
                Node::Const(x) => *x,
                Node::Entry(i, j) => c[*i][*j],
                Node::Neg(a) => -v(a),
                Node::Add(a, b) => v(a) + v(b),
                Node::Sub(a, b) => v(a) - v(b),
                Node::Mul(a, b) => v(a) * v(b),
                Node::Div(a, b) => {
                    let d = v(b);
                    if d == 0.0 {
                        return Err(err("div", "division by zero".into()));
                    }
                    v(a) / d
                }
                Node::Pow(a, p) => {
                    let x = v(a);
                    if x < 0.0 && p.fract() != 0.0 {
                        return Err(err("pow", format!("negative base {x} with non-integer exponent {p}")));
                    }
                    if x == 0.0 && *p < 1.0 {
                        return Err(err("pow", format!("zero base with exponent {p}")));
                    }
                    x.powf(*p)
                }
                Node::Log(a) => {
                    let x = v(a);
                    if !(x > 0.0) {
                        return Err(err("log", format!("argument {x} is not positive")));
                    }
                    x.ln()
                }
                Node::Exp(a) => v(a).exp(),
            };
            if !out.is_finite() {
                return Err(err("eval", format!("non-finite value {out}")));
            }
            vals[n] = out;
        }
        Ok((tape, index, vals))
    }

    pub fn eval(&self, c: &Tensor6) -> Result<f64, ExprError> {
        let (_, _, vals) = self.forward(c)?;
        Ok(*vals.last().expect("non-empty tape"))
    }

    /// Value and `seed · ∂f/∂C`; `(i, j)` and `(j, i)` are kept apart as referenced.
    pub fn eval_backward(&self, seed: f64, c: &Tensor6) -> Result<(f64, Tensor6), ExprError> {
        let (tape, index, vals) = self.forward(c)?;
        let mut adj = vec![0.0; tape.len()];
        let last = tape.len() - 1;
        adj[last] = seed;
        let mut grad = [[0.0; 6]; 6];
        for n in (0..tape.len()).rev() {
            let g = adj[n];
            if g == 0.0 {
                continue;
            }
            let idx = |x: &Expr| index[&x.key()];
            match &*tape[n].0 {
                Node::Const(_) => {}
                Node::Entry(i, j) => grad[*i][*j] += g,
                Node::Neg(a) => adj[idx(a)] -= g,
                Node::Add(a, b) => {
                    adj[idx(a)] += g;
                    adj[idx(b)] += g;
                }
                Node::Sub(a, b) => {
                    adj[idx(a)] += g;
                    adj[idx(b)] -= g;
                }
                Node::Mul(a, b) => {
                    let (ia, ib) = (idx(a), idx(b));
                    let (va, vb) = (vals[ia], vals[ib]);
                    adj[ia] += g * vb;
                    adj[ib] += g * va;
                }
                Node::Div(a, b) => {
                    let (ia, ib) = (idx(a), idx(b));
                    let vb = vals[ib];
                    adj[ia] += g / vb;
                    adj[ib] -= g * vals[ia] / (vb * vb);
                }
                Node::Pow(a, p) => {
                    let ia = idx(a);
                    adj[ia] += g * p * vals[ia].powf(p - 1.0);
                }
                Node::Log(a) => {
                    let ia = idx(a);
                    adj[ia] += g / vals[ia];
                }
                Node::Exp(a) => adj[idx(a)] += g * vals[n],
            }
        }
        Ok((vals[last], grad))
    }

    pub fn backward(&self, seed: f64, c: &Tensor6) -> Result<Tensor6, ExprError> {
        Ok(self.eval_backward(seed, c)?.1)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::Const(v) => write!(f, "{v}"),
            Node::Entry(i, j) => write!(f, "C{i}{j}"),
            Node::Neg(a) => write!(f, "-({a})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Pow(a, p) => write!(f, "({a})^{p}"),
            Node::Log(a) => write!(f, "log({a})"),
            Node::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::constant(v)
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self.as_const() {
            Some(v) => Expr::constant(-v),
            None => Expr(Arc::new(Node::Neg(self))),
        }
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident, $fold:expr) => {
        impl $trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                match (self.as_const(), rhs.as_const()) {
                    (Some(a), Some(b)) => {
                        let f: fn(f64, f64) -> Option<f64> = $fold;
                        match f(a, b) {
                            Some(v) => Expr::constant(v),
                            None => Expr(Arc::new(Node::$variant(self, rhs))),
                        }
                    }
                    _ => Expr(Arc::new(Node::$variant(self, rhs))),
                }
            }
        }
        impl $trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                self.$method(Expr::constant(rhs))
            }
        }
        impl $trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::constant(self).$method(rhs)
            }
        }
    };
}

binop!(Add, add, Add, |a, b| Some(a + b));
binop!(Sub, sub, Sub, |a, b| Some(a - b));
binop!(Mul, mul, Mul, |a, b| Some(a * b));
binop!(Div, div, Div, |a, b| (b != 0.0).then(|| a / b));

fn c(i: usize, j: usize) -> Expr {
    Expr::entry(i, j)
}

/// `-(C00 + C11 + C22 + 2 (C01 + C02 + C12)) / 9`.
pub fn bulk_objective() -> Expr {
    -(c(0, 0) + c(1, 1) + c(2, 2) + (c(0, 1) + c(0, 2) + c(1, 2)) * 2.0) / 9.0
}

/// `-(C33 + C44 + C55) / 3`.
pub fn shear_objective() -> Expr {
    -(c(3, 3) + c(4, 4) + c(5, 5)) / 3.0
}

/// `C01 + C02 + C12 - β^l (C00 + C11 + C22)`.
pub fn npr_relaxed(beta: f64, iteration: usize) -> Expr {
    let w = beta.powi(iteration as i32);
    c(0, 1) + c(0, 2) + c(1, 2) - (c(0, 0) + c(1, 1) + c(2, 2)) * w
}

/// `ln(1 + η (C01 + C12 + C20) / (C00 + C11 + C22)) + τ (C00 + C11 + C22)^γ`.
pub fn npr_log(eta: f64, tau: f64, gamma: f64) -> Expr {
    let diag = c(0, 0) + c(1, 1) + c(2, 2);
    let off = c(0, 1) + c(1, 2) + c(2, 0);
    (1.0 + eta * off / diag.clone()).ln() + tau * diag.powf(gamma)
}

/// Isotropic Poisson's ratio estimate `C01avg / (C00avg + C01avg)`.
pub fn poisson_ratio_report(c: &Tensor6) -> f64 {
    let d = (c[0][0] + c[1][1] + c[2][2]) / 3.0;
    let o = (c[0][1] + c[0][2] + c[1][2]) / 3.0;
    if o == 0.0 {
        0.0
    } else {
        o / (d + o)
    }
}

/// Named objectives selectable from configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Bulk,
    Shear,
    NprRelaxed,
    NprLog,
}

impl std::str::FromStr for ObjectiveKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bulk" => Ok(Self::Bulk),
            "shear" => Ok(Self::Shear),
            "npr-relaxed" => Ok(Self::NprRelaxed),
            "npr-log" => Ok(Self::NprLog),
            _ => Err(format!("unknown objective '{s}' (expected bulk|shear|npr-relaxed|npr-log)")),
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bulk => "bulk",
            Self::Shear => "shear",
            Self::NprRelaxed => "npr-relaxed",
            Self::NprLog => "npr-log",
        })
    }
}
