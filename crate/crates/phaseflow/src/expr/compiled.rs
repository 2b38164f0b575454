//! Postfix compilation of expression trees.
//!
//! Grid transport and flow integration evaluate the same handful of partial
//! derivatives millions of times; a flat instruction tape avoids the pointer
//! chasing of tree-walk evaluation. Parameters must be bound before
//! compilation.

use super::{EvalError, Func, Node, ObservableExpr};

#[derive(Debug, Clone)]
enum Instr {
    Const(f64),
    Q(usize),
    P(usize),
    Add,
    Mul,
    Pow(i32),
    Div,
    Sin,
    Cos,
    Exp,
}

/// A compiled, parameter-free observable.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    dim: usize,
    code: Vec<Instr>,
    max_stack: usize,
}

impl CompiledExpr {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluate using an external scratch stack (cleared on entry).
    pub fn eval_with(&self, q: &[f64], p: &[f64], stack: &mut Vec<f64>) -> Result<f64, EvalError> {
        debug_assert_eq!(q.len(), self.dim);
        debug_assert_eq!(p.len(), self.dim);
        stack.clear();
        stack.reserve(self.max_stack);
        for instr in &self.code {
            match instr {
                Instr::Const(c) => stack.push(*c),
                Instr::Q(i) => stack.push(q[*i]),
                Instr::P(i) => stack.push(p[*i]),
                Instr::Add => {
                    let b = stack.pop().unwrap();
                    *stack.last_mut().unwrap() += b;
                }
                Instr::Mul => {
                    let b = stack.pop().unwrap();
                    *stack.last_mut().unwrap() *= b;
                }
                Instr::Pow(k) => {
                    let a = stack.last_mut().unwrap();
                    if *k < 0 && *a == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    *a = a.powi(*k);
                }
                Instr::Div => {
                    let b = stack.pop().unwrap();
                    if b == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    *stack.last_mut().unwrap() /= b;
                }
                Instr::Sin => {
                    let a = stack.last_mut().unwrap();
                    *a = a.sin();
                }
                Instr::Cos => {
                    let a = stack.last_mut().unwrap();
                    *a = a.cos();
                }
                Instr::Exp => {
                    let a = stack.last_mut().unwrap();
                    *a = a.exp();
                }
            }
        }
        let v = stack.pop().unwrap();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    pub fn eval(&self, q: &[f64], p: &[f64]) -> Result<f64, EvalError> {
        let mut stack = Vec::with_capacity(self.max_stack);
        self.eval_with(q, p, &mut stack)
    }
}

impl ObservableExpr {
    /// Compile for fast repeated evaluation. Fails if any parameter is still
    /// unbound.
    pub fn compile(&self) -> Result<CompiledExpr, EvalError> {
        let mut code = Vec::new();
        emit(self.root(), &mut code)?;
        let mut depth = 0usize;
        let mut max_stack = 0usize;
        for instr in &code {
            match instr {
                Instr::Const(_) | Instr::Q(_) | Instr::P(_) => depth += 1,
                Instr::Add | Instr::Mul | Instr::Div => depth -= 1,
                _ => {}
            }
            max_stack = max_stack.max(depth);
        }
        Ok(CompiledExpr { dim: self.dim(), code, max_stack })
    }
}

fn emit(node: &Node, code: &mut Vec<Instr>) -> Result<(), EvalError> {
    match node {
        Node::Const(c) => code.push(Instr::Const(*c)),
        Node::Param(name) => return Err(EvalError::UnboundParameter(name.clone())),
        Node::Var(super::Var::Q(k)) => code.push(Instr::Q(k - 1)),
        Node::Var(super::Var::P(k)) => code.push(Instr::P(k - 1)),
        Node::Sum(terms) => {
            if terms.is_empty() {
                code.push(Instr::Const(0.0));
            } else {
                for (i, t) in terms.iter().enumerate() {
                    emit(t, code)?;
                    if i > 0 {
                        code.push(Instr::Add);
                    }
                }
            }
        }
        Node::Product(factors) => {
            if factors.is_empty() {
                code.push(Instr::Const(1.0));
            } else {
                for (i, t) in factors.iter().enumerate() {
                    emit(t, code)?;
                    if i > 0 {
                        code.push(Instr::Mul);
                    }
                }
            }
        }
        Node::Pow(base, k) => {
            emit(base, code)?;
            code.push(Instr::Pow(*k));
        }
        Node::Div(num, den) => {
            emit(num, code)?;
            emit(den, code)?;
            code.push(Instr::Div);
        }
        Node::Func(f, inner) => {
            emit(inner, code)?;
            code.push(match f {
                Func::Sin => Instr::Sin,
                Func::Cos => Instr::Cos,
                Func::Exp => Instr::Exp,
            });
        }
    }
    Ok(())
}
