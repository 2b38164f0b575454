//! Symbolic phase-space observables.
//!
//! An [`ObservableExpr`] is an expression tree over the canonical variables
//! `q1..qn`, `p1..pn`, named parameters, and the functions `sin`, `cos`,
//! `exp`. It supports exact partial differentiation, Poisson brackets, the
//! associated Lagrangian `p · ∂A/∂p − A`, and evaluation at phase-space
//! points.
//!
//! # Grammar
//!
//! Expressions are parsed with [`ObservableExpr::parse`] from the grammar
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := factor (("*" | "/") factor)*
//! factor  := ("+" | "-")* power
//! power   := primary ("^" integer)?
//! primary := number
//!          | func "(" expr ")"
//!          | variable                  q<k> or p<k>, 1 <= k <= n
//!          | parameter                 any other identifier
//!          | "(" expr ")"
//! func    := "sin" | "cos" | "exp"
//! integer := ("-")? digit+
//! number  := digit+ ("." digit*)? (("e" | "E") ("+" | "-")? digit+)?
//! ```
//!
//! Exponents are integer literals; negative exponents denote reciprocal
//! powers. There is no implicit multiplication: write `q1*p1`, not `q1 p1`.
//!
//! # Canonical form
//!
//! [`ObservableExpr::simplify`] rewrites an expression to a canonical sum of
//! products with sorted monomials. Polynomial identities (in the variables
//! and parameters) therefore reduce to structural equality; coefficients with
//! magnitude below `1e-12` are dropped. Expressions containing
//! transcendental subterms keep those subterms as opaque atoms, so identity
//! testing for them falls back to randomized numeric evaluation
//! ([`ObservableExpr::is_zero`]).
//!
//! Expressions are immutable once built; cloning is cheap relative to the
//! numerics and all types are `Send + Sync`.

mod canonical;
mod compiled;
mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::flow::PhaseState;

pub use compiled::CompiledExpr;
pub use parse::ParseError;

/// A canonical variable: coordinate `Q(k)` or momentum `P(k)`, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    Q(usize),
    P(usize),
}

impl Var {
    pub fn index(self) -> usize {
        match self {
            Var::Q(k) | Var::P(k) => k,
        }
    }

    pub fn is_momentum(self) -> bool {
        matches!(self, Var::P(_))
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Q(k) => write!(f, "q{k}"),
            Var::P(k) => write!(f, "p{k}"),
        }
    }
}

/// Built-in transcendental functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
        }
    }
}

/// Expression tree node. `Sum` and `Product` are n-ary; `Pow` has an integer
/// exponent; `Div` is kept as a node so that evaluation can guard against
/// singular points.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Param(String),
    Var(Var),
    Sum(Vec<Node>),
    Product(Vec<Node>),
    Pow(Box<Node>, i32),
    Div(Box<Node>, Box<Node>),
    Func(Func, Box<Node>),
}

/// Named parameter bindings used at evaluation time.
pub type Params = BTreeMap<String, f64>;

/// Errors from structural operations on expressions.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("dimension mismatch: {0} degrees of freedom vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("variable index {index} out of range for dimension {dim}")]
    VarOutOfRange { index: usize, dim: usize },
}

/// Errors from numeric evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("state has {state} degrees of freedom, expression has {expr}")]
    DimensionMismatch { state: usize, expr: usize },
}

/// A phase-space observable `A(q, p)`: an expression tree plus the number of
/// degrees of freedom it acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableExpr {
    root: Node,
    dim: usize,
}

impl ObservableExpr {
    /// Parse `text` as an observable over `q1..q<dim>`, `p1..p<dim>`.
    pub fn parse(text: &str, dim: usize) -> Result<Self, ParseError> {
        let root = parse::parse(text, dim)?;
        Ok(Self { root, dim })
    }

    /// The constant observable `c`.
    pub fn constant(c: f64, dim: usize) -> Self {
        Self { root: Node::Const(c), dim }
    }

    /// The coordinate observable `q_k` or `p_k`.
    pub fn var(v: Var, dim: usize) -> Result<Self, ExprError> {
        if v.index() == 0 || v.index() > dim {
            return Err(ExprError::VarOutOfRange { index: v.index(), dim });
        }
        Ok(Self { root: Node::Var(v), dim })
    }

    pub fn from_node(root: Node, dim: usize) -> Self {
        Self { root, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Rewrite to the canonical sum-of-products form with sorted monomials.
    pub fn simplify(&self) -> Self {
        Self {
            root: canonical::canonicalize(&self.root).into_node(),
            dim: self.dim,
        }
    }

    /// Exact partial derivative with respect to `var`; parameters are
    /// treated as constants. The result is simplified.
    pub fn differentiate(&self, var: Var) -> Result<Self, ExprError> {
        if var.index() == 0 || var.index() > self.dim {
            return Err(ExprError::VarOutOfRange { index: var.index(), dim: self.dim });
        }
        let d = differentiate_node(&self.root, var);
        Ok(Self { root: canonical::canonicalize(&d).into_node(), dim: self.dim })
    }

    /// Poisson bracket `{self, other} = Σ_k (∂A/∂q_k ∂B/∂p_k − ∂A/∂p_k ∂B/∂q_k)`,
    /// simplified.
    pub fn poisson(&self, other: &Self) -> Result<Self, ExprError> {
        if self.dim != other.dim {
            return Err(ExprError::DimensionMismatch(self.dim, other.dim));
        }
        let mut terms = Vec::with_capacity(2 * self.dim);
        for k in 1..=self.dim {
            let aq = differentiate_node(&self.root, Var::Q(k));
            let bp = differentiate_node(&other.root, Var::P(k));
            let ap = differentiate_node(&self.root, Var::P(k));
            let bq = differentiate_node(&other.root, Var::Q(k));
            terms.push(Node::Product(vec![aq, bp]));
            terms.push(Node::Product(vec![Node::Const(-1.0), ap, bq]));
        }
        let bracket = Node::Sum(terms);
        Ok(Self { root: canonical::canonicalize(&bracket).into_node(), dim: self.dim })
    }

    /// Associated Lagrangian `L̄_A = Σ_k p_k ∂A/∂p_k − A`, simplified.
    pub fn associated_lagrangian(&self) -> Self {
        let mut terms = Vec::with_capacity(self.dim + 1);
        for k in 1..=self.dim {
            let ap = differentiate_node(&self.root, Var::P(k));
            terms.push(Node::Product(vec![Node::Var(Var::P(k)), ap]));
        }
        terms.push(Node::Product(vec![Node::Const(-1.0), self.root.clone()]));
        let l = Node::Sum(terms);
        Self { root: canonical::canonicalize(&l).into_node(), dim: self.dim }
    }

    /// Evaluate at a phase-space point with the given parameter bindings.
    pub fn evaluate(&self, state: &PhaseState, params: &Params) -> Result<f64, EvalError> {
        if state.dim() != self.dim {
            return Err(EvalError::DimensionMismatch { state: state.dim(), expr: self.dim });
        }
        self.eval_qp(state.q(), state.p(), params)
    }

    /// Evaluate from raw coordinate slices (`q.len() == p.len() == dim`).
    pub fn eval_qp(&self, q: &[f64], p: &[f64], params: &Params) -> Result<f64, EvalError> {
        let v = eval_node(&self.root, q, p, params)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Substitute the given parameters by their values. Parameters not in the
    /// map remain symbolic. The result is simplified.
    pub fn bind(&self, params: &Params) -> Self {
        let bound = bind_node(&self.root, params);
        Self { root: canonical::canonicalize(&bound).into_node(), dim: self.dim }
    }

    /// Names of all parameters occurring in the expression.
    pub fn param_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        collect_params(&self.root, &mut out);
        out
    }

    /// All canonical variables occurring in the expression.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        collect_vars(&self.root, &mut out);
        out
    }

    /// True if the canonical form is polynomial in the variables: no variable
    /// under a transcendental function, inside a denominator, or raised to a
    /// negative power. Parameters may appear anywhere.
    pub fn is_polynomial(&self) -> bool {
        canonical::canonicalize(&self.root).is_polynomial()
    }

    /// True if the expression splits as `T(p) + V(q)`: no canonical monomial
    /// mixes coordinate and momentum dependence.
    pub fn is_separable(&self) -> bool {
        canonical::canonicalize(&self.root).is_separable()
    }

    /// Decide whether the expression is identically zero.
    ///
    /// Polynomial expressions are decided exactly on the canonical form.
    /// Otherwise falls back to evaluation at 100 pseudo-random points (with
    /// pseudo-random parameter values), declaring zero when every sample is
    /// below `1e-9` in magnitude relative to the expression scale.
    pub fn is_zero(&self) -> bool {
        let canon = canonical::canonicalize(&self.root);
        if canon.is_empty() {
            return true;
        }
        if canon.is_polynomial() {
            return false;
        }
        self.is_numerically_zero(100, 0x5eed, 1e-9)
    }

    /// Randomized zero test at `n_points` points in `[-1, 1]^{2n}`.
    pub fn is_numerically_zero(&self, n_points: usize, seed: u64, tol: f64) -> bool {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let names = self.param_names();
        let mut scale: f64 = 1.0;
        let mut worst: f64 = 0.0;
        for _ in 0..n_points {
            let q: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let params: Params = names
                .iter()
                .map(|n| (n.clone(), rng.gen_range(0.5..1.5)))
                .collect();
            match self.eval_qp(&q, &p, &params) {
                Ok(v) => {
                    worst = worst.max(v.abs());
                    scale = scale.max(v.abs());
                }
                Err(_) => return false,
            }
        }
        worst <= tol * scale.max(1.0)
    }
}

impl fmt::Display for ObservableExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, 0)
    }
}

fn differentiate_node(node: &Node, var: Var) -> Node {
    match node {
        Node::Const(_) | Node::Param(_) => Node::Const(0.0),
        Node::Var(v) => Node::Const(if *v == var { 1.0 } else { 0.0 }),
        Node::Sum(terms) => Node::Sum(terms.iter().map(|t| differentiate_node(t, var)).collect()),
        Node::Product(factors) => {
            let mut terms = Vec::with_capacity(factors.len());
            for i in 0..factors.len() {
                let mut fs = Vec::with_capacity(factors.len());
                for (j, f) in factors.iter().enumerate() {
                    if i == j {
                        fs.push(differentiate_node(f, var));
                    } else {
                        fs.push(f.clone());
                    }
                }
                terms.push(Node::Product(fs));
            }
            Node::Sum(terms)
        }
        Node::Pow(base, k) => {
            if *k == 0 {
                return Node::Const(0.0);
            }
            let db = differentiate_node(base, var);
            Node::Product(vec![
                Node::Const(f64::from(*k)),
                Node::Pow(base.clone(), k - 1),
                db,
            ])
        }
        Node::Div(num, den) => {
            let dn = differentiate_node(num, var);
            let dd = differentiate_node(den, var);
            // (n/d)' = (n' d - n d') / d^2
            Node::Div(
                Box::new(Node::Sum(vec![
                    Node::Product(vec![dn, (**den).clone()]),
                    Node::Product(vec![Node::Const(-1.0), (**num).clone(), dd]),
                ])),
                Box::new(Node::Product(vec![(**den).clone(), (**den).clone()])),
            )
        }
        Node::Func(f, inner) => {
            let di = differentiate_node(inner, var);
            let outer = match f {
                Func::Sin => Node::Func(Func::Cos, inner.clone()),
                Func::Cos => Node::Product(vec![
                    Node::Const(-1.0),
                    Node::Func(Func::Sin, inner.clone()),
                ]),
                Func::Exp => Node::Func(Func::Exp, inner.clone()),
            };
            Node::Product(vec![outer, di])
        }
    }
}

fn eval_node(node: &Node, q: &[f64], p: &[f64], params: &Params) -> Result<f64, EvalError> {
    match node {
        Node::Const(c) => Ok(*c),
        Node::Param(name) => params
            .get(name)
            .copied()
            .ok_or_else(|| EvalError::UnboundParameter(name.clone())),
        Node::Var(Var::Q(k)) => Ok(q[k - 1]),
        Node::Var(Var::P(k)) => Ok(p[k - 1]),
        Node::Sum(terms) => {
            let mut acc = 0.0;
            for t in terms {
                acc += eval_node(t, q, p, params)?;
            }
            Ok(acc)
        }
        Node::Product(factors) => {
            let mut acc = 1.0;
            for f in factors {
                acc *= eval_node(f, q, p, params)?;
            }
            Ok(acc)
        }
        Node::Pow(base, k) => {
            let b = eval_node(base, q, p, params)?;
            if *k < 0 && b == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            Ok(b.powi(*k))
        }
        Node::Div(num, den) => {
            let d = eval_node(den, q, p, params)?;
            if d == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            Ok(eval_node(num, q, p, params)? / d)
        }
        Node::Func(f, inner) => Ok(f.apply(eval_node(inner, q, p, params)?)),
    }
}

fn bind_node(node: &Node, params: &Params) -> Node {
    match node {
        Node::Param(name) => match params.get(name) {
            Some(v) => Node::Const(*v),
            None => node.clone(),
        },
        Node::Const(_) | Node::Var(_) => node.clone(),
        Node::Sum(ts) => Node::Sum(ts.iter().map(|t| bind_node(t, params)).collect()),
        Node::Product(fs) => Node::Product(fs.iter().map(|t| bind_node(t, params)).collect()),
        Node::Pow(b, k) => Node::Pow(Box::new(bind_node(b, params)), *k),
        Node::Div(n, d) => Node::Div(
            Box::new(bind_node(n, params)),
            Box::new(bind_node(d, params)),
        ),
        Node::Func(f, i) => Node::Func(*f, Box::new(bind_node(i, params))),
    }
}

fn collect_params(node: &Node, out: &mut BTreeSet<String>) {
    match node {
        Node::Param(name) => {
            out.insert(name.clone());
        }
        Node::Const(_) | Node::Var(_) => {}
        Node::Sum(ts) | Node::Product(ts) => ts.iter().for_each(|t| collect_params(t, out)),
        Node::Pow(b, _) => collect_params(b, out),
        Node::Div(n, d) => {
            collect_params(n, out);
            collect_params(d, out);
        }
        Node::Func(_, i) => collect_params(i, out),
    }
}

fn collect_vars(node: &Node, out: &mut BTreeSet<Var>) {
    match node {
        Node::Var(v) => {
            out.insert(*v);
        }
        Node::Const(_) | Node::Param(_) => {}
        Node::Sum(ts) | Node::Product(ts) => ts.iter().for_each(|t| collect_vars(t, out)),
        Node::Pow(b, _) => collect_vars(b, out),
        Node::Div(n, d) => {
            collect_vars(n, out);
            collect_vars(d, out);
        }
        Node::Func(_, i) => collect_vars(i, out),
    }
}

// Precedence levels for printing: 0 sum, 1 product, 2 power/primary.
fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, prec: u8) -> fmt::Result {
    match node {
        Node::Const(c) => {
            if *c < 0.0 && prec > 0 {
                write!(f, "({c})")
            } else {
                write!(f, "{c}")
            }
        }
        Node::Param(name) => write!(f, "{name}"),
        Node::Var(v) => write!(f, "{v}"),
        Node::Sum(terms) => {
            if terms.is_empty() {
                return write!(f, "0");
            }
            let parens = prec > 0;
            if parens {
                write!(f, "(")?;
            }
            for (i, t) in terms.iter().enumerate() {
                if i == 0 {
                    write_node(f, t, 1)?;
                } else if let Some(pos) = negated_term(t) {
                    write!(f, " - ")?;
                    write_node(f, &pos, 1)?;
                } else {
                    write!(f, " + ")?;
                    write_node(f, t, 1)?;
                }
            }
            if parens {
                write!(f, ")")?;
            }
            Ok(())
        }
        Node::Product(factors) => {
            if factors.is_empty() {
                return write!(f, "1");
            }
            let parens = prec > 1;
            if parens {
                write!(f, "(")?;
            }
            for (i, t) in factors.iter().enumerate() {
                if i > 0 {
                    write!(f, "*")?;
                }
                write_node(f, t, 2)?;
            }
            if parens {
                write!(f, ")")?;
            }
            Ok(())
        }
        Node::Pow(base, k) => {
            write_node(f, base, 3)?;
            write!(f, "^{k}")
        }
        Node::Div(num, den) => {
            let parens = prec > 1;
            if parens {
                write!(f, "(")?;
            }
            write_node(f, num, 2)?;
            write!(f, "/")?;
            write_node(f, den, 3)?;
            if parens {
                write!(f, ")")?;
            }
            Ok(())
        }
        Node::Func(func, inner) => {
            write!(f, "{}(", func.name())?;
            write_node(f, inner, 0)?;
            write!(f, ")")
        }
    }
}

/// If `t` is a term with a negative leading constant, return the positive
/// counterpart for `a - b` style printing.
fn negated_term(t: &Node) -> Option<Node> {
    match t {
        Node::Const(c) if *c < 0.0 => Some(Node::Const(-c)),
        Node::Product(fs) => match fs.first() {
            Some(Node::Const(c)) if *c < 0.0 => {
                let mut fs = fs.clone();
                if *c == -1.0 && fs.len() > 1 {
                    fs.remove(0);
                    if fs.len() == 1 {
                        return Some(fs.pop().unwrap());
                    }
                } else {
                    fs[0] = Node::Const(-c);
                }
                Some(Node::Product(fs))
            }
            _ => None,
        },
        _ => None,
    }
}

#[cfg(test)]
mod tests;
