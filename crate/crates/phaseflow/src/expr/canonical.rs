//! Canonical sum-of-products form.
//!
//! Every expression is flattened to `Σ_m c_m · Π_j a_j^{e_j}` where the atoms
//! `a_j` are variables, parameters, transcendental calls with canonical
//! arguments, or parenthesized canonical sums (which absorb unexpandable
//! powers and denominators). Atoms carry signed integer exponents, monomials
//! are sorted, and coefficients below [`COEFF_EPS`] are dropped, so equality
//! of polynomial expressions is structural equality of canonical forms.

use std::cmp::Ordering;

use super::{Func, Node, Var};

/// Coefficients with magnitude at or below this are treated as exact zeros.
pub const COEFF_EPS: f64 = 1e-12;

/// Sums raised to integer powers are expanded up to this exponent; beyond it
/// they stay opaque atoms (the zero test then falls back to numerics).
const EXPAND_LIMIT: i32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Var(Var),
    Param(String),
    Func(Func, Node),
    /// A canonical multi-term sum kept opaque, normalized to leading
    /// coefficient one.
    Sum(Node),
}

impl Atom {
    fn rank(&self) -> u8 {
        match self {
            Atom::Var(_) => 0,
            Atom::Param(_) => 1,
            Atom::Func(..) => 2,
            Atom::Sum(_) => 3,
        }
    }

    fn cmp_atoms(&self, other: &Atom) -> Ordering {
        match (self, other) {
            (Atom::Var(a), Atom::Var(b)) => a.cmp(b),
            (Atom::Param(a), Atom::Param(b)) => a.cmp(b),
            (Atom::Func(fa, na), Atom::Func(fb, nb)) => {
                fa.cmp(fb).then_with(|| cmp_nodes(na, nb))
            }
            (Atom::Sum(a), Atom::Sum(b)) => cmp_nodes(a, b),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    /// Variables occurring anywhere inside the atom.
    pub fn vars(&self) -> Vec<Var> {
        match self {
            Atom::Var(v) => vec![*v],
            Atom::Param(_) => vec![],
            Atom::Func(_, n) | Atom::Sum(n) => {
                let mut set = std::collections::BTreeSet::new();
                super::collect_vars(n, &mut set);
                set.into_iter().collect()
            }
        }
    }

    fn into_node(self) -> Node {
        match self {
            Atom::Var(v) => Node::Var(v),
            Atom::Param(s) => Node::Param(s),
            Atom::Func(f, n) => Node::Func(f, Box::new(n)),
            Atom::Sum(n) => n,
        }
    }
}

/// Total structural order on nodes (used only for canonical sorting).
fn cmp_nodes(a: &Node, b: &Node) -> Ordering {
    fn rank(n: &Node) -> u8 {
        match n {
            Node::Const(_) => 0,
            Node::Param(_) => 1,
            Node::Var(_) => 2,
            Node::Sum(_) => 3,
            Node::Product(_) => 4,
            Node::Pow(..) => 5,
            Node::Div(..) => 6,
            Node::Func(..) => 7,
        }
    }
    match (a, b) {
        (Node::Const(x), Node::Const(y)) => x.total_cmp(y),
        (Node::Param(x), Node::Param(y)) => x.cmp(y),
        (Node::Var(x), Node::Var(y)) => x.cmp(y),
        (Node::Sum(xs), Node::Sum(ys)) | (Node::Product(xs), Node::Product(ys)) => {
            cmp_node_lists(xs, ys)
        }
        (Node::Pow(xb, xk), Node::Pow(yb, yk)) => {
            cmp_nodes(xb, yb).then_with(|| xk.cmp(yk))
        }
        (Node::Div(xn, xd), Node::Div(yn, yd)) => {
            cmp_nodes(xn, yn).then_with(|| cmp_nodes(xd, yd))
        }
        (Node::Func(xf, xi), Node::Func(yf, yi)) => {
            xf.cmp(yf).then_with(|| cmp_nodes(xi, yi))
        }
        _ => rank(a).cmp(&rank(b)),
    }
}

fn cmp_node_lists(xs: &[Node], ys: &[Node]) -> Ordering {
    for (x, y) in xs.iter().zip(ys) {
        let o = cmp_nodes(x, y);
        if o != Ordering::Equal {
            return o;
        }
    }
    xs.len().cmp(&ys.len())
}

/// Product of atoms with signed exponents, sorted by atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial(pub Vec<(Atom, i32)>);

impl Monomial {
    fn one() -> Self {
        Monomial(Vec::new())
    }

    fn single(atom: Atom, exp: i32) -> Self {
        if exp == 0 {
            Monomial::one()
        } else {
            Monomial(vec![(atom, exp)])
        }
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        let mut out: Vec<(Atom, i32)> = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp_atoms(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    let e = self.0[i].1 + other.0[j].1;
                    if e != 0 {
                        out.push((self.0[i].0.clone(), e));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Monomial(out)
    }

    fn pow(&self, k: i32) -> Monomial {
        if k == 0 {
            return Monomial::one();
        }
        Monomial(self.0.iter().map(|(a, e)| (a.clone(), e * k)).collect())
    }

    fn cmp_monomials(&self, other: &Monomial) -> Ordering {
        for ((aa, ae), (ba, be)) in self.0.iter().zip(&other.0) {
            let o = aa.cmp_atoms(ba).then_with(|| ae.cmp(be));
            if o != Ordering::Equal {
                return o;
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

/// Canonical polynomial: sorted monomials with nonzero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<(Monomial, f64)>);

impl Poly {
    pub fn zero() -> Self {
        Poly(Vec::new())
    }

    pub fn constant(c: f64) -> Self {
        if c.abs() <= COEFF_EPS {
            Poly::zero()
        } else {
            Poly(vec![(Monomial::one(), c)])
        }
    }

    fn from_atom(atom: Atom) -> Self {
        Poly(vec![(Monomial::single(atom, 1), 1.0)])
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The constant value if the polynomial is a plain constant.
    fn as_constant(&self) -> Option<f64> {
        match self.0.len() {
            0 => Some(0.0),
            1 if self.0[0].0 .0.is_empty() => Some(self.0[0].1),
            _ => None,
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out: Vec<(Monomial, f64)> = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp_monomials(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    let c = self.0[i].1 + other.0[j].1;
                    if c.abs() > COEFF_EPS {
                        out.push((self.0[i].0.clone(), c));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        Poly(out)
    }

    pub fn scale(&self, c: f64) -> Poly {
        if c.abs() <= COEFF_EPS {
            return Poly::zero();
        }
        Poly(self.0.iter().map(|(m, x)| (m.clone(), x * c)).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut acc = Poly::zero();
        for (ma, ca) in &self.0 {
            let part: Vec<(Monomial, f64)> = other
                .0
                .iter()
                .map(|(mb, cb)| (ma.mul(mb), ca * cb))
                .collect();
            let mut part = Poly(part);
            part.0.sort_by(|a, b| a.0.cmp_monomials(&b.0));
            part = part.merge_sorted();
            acc = acc.add(&part);
        }
        acc
    }

    fn merge_sorted(self) -> Poly {
        let mut out: Vec<(Monomial, f64)> = Vec::with_capacity(self.0.len());
        for (m, c) in self.0 {
            match out.last_mut() {
                Some((lm, lc)) if lm.cmp_monomials(&m) == Ordering::Equal => *lc += c,
                _ => out.push((m, c)),
            }
        }
        out.retain(|(_, c)| c.abs() > COEFF_EPS);
        Poly(out)
    }

    pub fn pow(&self, k: i32) -> Poly {
        if k == 0 {
            return Poly::constant(1.0);
        }
        if let Some(c) = self.as_constant() {
            if c == 0.0 && k < 0 {
                // 0 raised to a negative power: keep symbolic; evaluation errors.
                return Poly::from_atom(Atom::Sum(Node::Const(0.0))).pow_atomized(k);
            }
            return Poly::constant(c.powi(k));
        }
        if self.0.len() == 1 {
            let (m, c) = &self.0[0];
            return Poly(vec![(m.pow(k), c.powi(k))]);
        }
        if k > 0 && k <= EXPAND_LIMIT {
            let mut acc = Poly::constant(1.0);
            for _ in 0..k {
                acc = acc.mul(self);
            }
            return acc;
        }
        // Opaque: normalize leading coefficient into the outer scale.
        let lead = self.0[0].1;
        let normalized = self.scale(1.0 / lead);
        Poly(vec![(
            Monomial::single(Atom::Sum(normalized.into_node()), k),
            lead.powi(k),
        )])
    }

    fn pow_atomized(&self, k: i32) -> Poly {
        Poly(vec![(
            Monomial::single(Atom::Sum(self.clone().into_node()), k),
            1.0,
        )])
    }

    /// Rebuild a (deterministic) expression tree from the canonical form.
    pub fn into_node(self) -> Node {
        if self.0.is_empty() {
            return Node::Const(0.0);
        }
        let mut terms: Vec<Node> = Vec::with_capacity(self.0.len());
        for (mono, coeff) in self.0 {
            terms.push(term_node(mono, coeff));
        }
        if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Node::Sum(terms)
        }
    }

    /// No transcendental/opaque atoms with variable dependence and no
    /// negative powers of variable-dependent atoms.
    pub fn is_polynomial(&self) -> bool {
        self.0.iter().all(|(m, _)| {
            m.0.iter().all(|(atom, exp)| match atom {
                Atom::Var(_) => *exp > 0,
                Atom::Param(_) => true,
                Atom::Func(..) | Atom::Sum(_) => atom.vars().is_empty(),
            })
        })
    }

    /// No monomial mixes `q` and `p` dependence.
    pub fn is_separable(&self) -> bool {
        self.0.iter().all(|(m, _)| {
            let mut has_q = false;
            let mut has_p = false;
            for (atom, _) in &m.0 {
                for v in atom.vars() {
                    match v {
                        Var::Q(_) => has_q = true,
                        Var::P(_) => has_p = true,
                    }
                }
            }
            !(has_q && has_p)
        })
    }
}

fn term_node(mono: Monomial, coeff: f64) -> Node {
    let mut factors: Vec<Node> = Vec::with_capacity(mono.0.len() + 1);
    if coeff != 1.0 || mono.0.is_empty() {
        factors.push(Node::Const(coeff));
    }
    for (atom, exp) in mono.0 {
        let base = atom.into_node();
        if exp == 1 {
            factors.push(base);
        } else {
            factors.push(Node::Pow(Box::new(base), exp));
        }
    }
    if factors.len() == 1 {
        factors.pop().unwrap()
    } else {
        Node::Product(factors)
    }
}

/// Flatten an arbitrary expression tree into canonical form.
pub fn canonicalize(node: &Node) -> Poly {
    match node {
        Node::Const(c) => Poly::constant(*c),
        Node::Param(name) => Poly::from_atom(Atom::Param(name.clone())),
        Node::Var(v) => Poly::from_atom(Atom::Var(*v)),
        Node::Sum(terms) => {
            let mut acc = Poly::zero();
            for t in terms {
                acc = acc.add(&canonicalize(t));
            }
            acc
        }
        Node::Product(factors) => {
            let mut acc = Poly::constant(1.0);
            for f in factors {
                if acc.is_empty() {
                    return acc;
                }
                acc = acc.mul(&canonicalize(f));
            }
            acc
        }
        Node::Pow(base, k) => canonicalize(base).pow(*k),
        Node::Div(num, den) => {
            let n = canonicalize(num);
            let d = canonicalize(den);
            n.mul(&d.pow(-1))
        }
        Node::Func(f, inner) => {
            let arg = canonicalize(inner);
            if let Some(c) = arg.as_constant() {
                return Poly::constant(f.apply(c));
            }
            Poly::from_atom(Atom::Func(*f, arg.into_node()))
        }
    }
}
