use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::*;
use crate::flow::PhaseState;

fn expr(text: &str, dim: usize) -> ObservableExpr {
    ObservableExpr::parse(text, dim).unwrap()
}

fn no_params() -> Params {
    BTreeMap::new()
}

/// Independent derivative oracle: central finite difference of `evaluate`.
fn fd_partial(a: &ObservableExpr, var: Var, q: &[f64], p: &[f64]) -> f64 {
    let h = 1e-6;
    let mut qp = (q.to_vec(), p.to_vec());
    let slot = match var {
        Var::Q(k) => &mut qp.0[k - 1],
        Var::P(k) => &mut qp.1[k - 1],
    };
    let x = *slot;
    *slot = x + h;
    let hi = a.eval_qp(&qp.0, &qp.1, &no_params()).unwrap();
    let slot = match var {
        Var::Q(k) => &mut qp.0[k - 1],
        Var::P(k) => &mut qp.1[k - 1],
    };
    *slot = x - h;
    let lo = a.eval_qp(&qp.0, &qp.1, &no_params()).unwrap();
    (hi - lo) / (2.0 * h)
}

/// Independent bracket oracle built from the finite-difference partials.
fn fd_poisson(a: &ObservableExpr, b: &ObservableExpr, q: &[f64], p: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 1..=a.dim() {
        acc += fd_partial(a, Var::Q(k), q, p) * fd_partial(b, Var::P(k), q, p)
            - fd_partial(a, Var::P(k), q, p) * fd_partial(b, Var::Q(k), q, p);
    }
    acc
}

/// Random polynomial with integer-ish coefficients, for property checks.
fn random_poly(rng: &mut ChaCha12Rng, dim: usize, max_degree: u32, n_terms: usize) -> ObservableExpr {
    let mut terms = Vec::new();
    for _ in 0..n_terms {
        let mut factors = vec![Node::Const(rng.gen_range(-2.0..2.0))];
        let degree = rng.gen_range(0..=max_degree);
        for _ in 0..degree {
            let k = rng.gen_range(1..=dim);
            let v = if rng.gen_bool(0.5) { Var::Q(k) } else { Var::P(k) };
            factors.push(Node::Var(v));
        }
        terms.push(Node::Product(factors));
    }
    ObservableExpr::from_node(Node::Sum(terms), dim)
}

fn random_point(rng: &mut ChaCha12Rng, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let q = (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let p = (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
    (q, p)
}

#[test]
fn parses_angular_momentum() {
    let l3 = expr("q1*p2 - q2*p1", 3);
    let state = PhaseState::new(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]).unwrap();
    assert_eq!(l3.evaluate(&state, &no_params()).unwrap(), 1.0);
    // round-trip: print then parse is structurally idempotent after simplification
    let simplified = l3.simplify();
    let reparsed = ObservableExpr::parse(&simplified.to_string(), 3).unwrap();
    assert_eq!(reparsed.simplify(), simplified);
}

#[test]
fn parses_atomic_variable() {
    let p1 = expr("p1", 1);
    assert_eq!(p1.root(), &Node::Var(Var::P(1)));
}

#[test]
fn unclosed_paren_is_a_positioned_syntax_error() {
    let err = ObservableExpr::parse("q1*(p1", 1).unwrap_err();
    match err {
        ParseError::Syntax { pos, .. } => assert_eq!(pos, 6),
        other => panic!("expected syntax error, got {other:?}"),
    }
}

#[test]
fn variable_out_of_range_is_rejected() {
    let err = ObservableExpr::parse("q4", 3).unwrap_err();
    assert!(matches!(err, ParseError::VariableOutOfRange { dim: 3, .. }));
    assert!(ObservableExpr::parse("q0", 3).is_err());
}

#[test]
fn unknown_function_is_rejected() {
    let err = ObservableExpr::parse("tan(q1)", 1).unwrap_err();
    assert!(matches!(err, ParseError::UnknownFunction { name, .. } if name == "tan"));
}

#[test]
fn trailing_garbage_is_rejected() {
    assert!(ObservableExpr::parse("q1 )", 1).is_err());
    assert!(ObservableExpr::parse("", 1).is_err());
}

#[test]
fn derivative_of_l3_wrt_q1_is_p2() {
    let l3 = expr("q1*p2 - q2*p1", 3);
    let d = l3.differentiate(Var::Q(1)).unwrap();
    assert_eq!(d, expr("p2", 3).simplify());
}

#[test]
fn derivative_of_kinetic_energy() {
    let t = expr("(p1^2 + p2^2)/2", 2);
    let d = t.differentiate(Var::P(1)).unwrap();
    assert_eq!(d, expr("p1", 2).simplify());
}

#[test]
fn derivative_of_independent_variable_is_zero() {
    let a = expr("q1", 1);
    let d = a.differentiate(Var::P(1)).unwrap();
    assert_eq!(d.root(), &Node::Const(0.0));
}

#[test]
fn derivative_rejects_out_of_range_variable() {
    let a = expr("q1", 1);
    assert!(matches!(
        a.differentiate(Var::Q(2)),
        Err(ExprError::VarOutOfRange { index: 2, dim: 1 })
    ));
}

#[test]
fn canonical_pair_bracket_is_one() {
    let q1 = expr("q1", 1);
    let p1 = expr("p1", 1);
    assert_eq!(q1.poisson(&p1).unwrap().root(), &Node::Const(1.0));
}

#[test]
fn self_bracket_is_zero() {
    let a = expr("q1^2*p1 + sin(q1)*p1 - 3*q1/p1", 1);
    let z = a.poisson(&a).unwrap();
    assert_eq!(z.root(), &Node::Const(0.0));
    assert!(z.is_zero());
}

#[test]
fn l3_commutes_with_planar_kinetic_energy() {
    let l3 = expr("q1*p2 - q2*p1", 3);
    let t = expr("(p1^2 + p2^2)/2", 3);
    let bracket = l3.poisson(&t).unwrap();
    assert_eq!(bracket.root(), &Node::Const(0.0));

    // cross-check against the independent finite-difference bracket
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    for _ in 0..10 {
        let (q, p) = random_point(&mut rng, 3);
        assert!(fd_poisson(&l3, &t, &q, &p).abs() < 1e-6);
    }
}

#[test]
fn bracket_dimension_mismatch_is_rejected() {
    let a = expr("q1", 1);
    let b = expr("q1", 2);
    assert!(matches!(a.poisson(&b), Err(ExprError::DimensionMismatch(1, 2))));
}

#[test]
fn lagrangian_of_momentum_is_zero() {
    let p1 = expr("p1", 1);
    assert_eq!(p1.associated_lagrangian().root(), &Node::Const(0.0));
}

#[test]
fn lagrangian_of_coordinate_is_minus_itself() {
    let q1 = expr("q1", 1);
    let l = q1.associated_lagrangian();
    assert_eq!(l, expr("-q1", 1).simplify());
}

#[test]
fn lagrangian_of_standard_hamiltonian_flips_potential() {
    // H = p^2/(2m) + lam*q1^2  =>  L = p^2/(2m) - lam*q1^2
    let h = expr("p1^2/(2*m) + lam*q1^2", 1);
    let l = h.associated_lagrangian();
    let expect = expr("p1^2/(2*m) - lam*q1^2", 1).simplify();
    assert_eq!(l, expect);
}

#[test]
fn evaluates_constants_and_arithmetic() {
    let c = expr("3", 2);
    let state = PhaseState::new(vec![0.4, -1.0], vec![2.0, 0.0]).unwrap();
    assert_eq!(c.evaluate(&state, &no_params()).unwrap(), 3.0);

    let h = expr("(p1^2 + q1^2)/2", 1);
    let state = PhaseState::new(vec![3.0], vec![4.0]).unwrap();
    assert_eq!(h.evaluate(&state, &no_params()).unwrap(), 12.5);
}

#[test]
fn evaluate_reports_unbound_parameter() {
    let a = expr("m*q1", 1);
    let state = PhaseState::new(vec![1.0], vec![0.0]).unwrap();
    assert!(matches!(
        a.evaluate(&state, &no_params()),
        Err(EvalError::UnboundParameter(name)) if name == "m"
    ));
    let mut params = Params::new();
    params.insert("m".into(), 2.0);
    assert_eq!(a.evaluate(&state, &params).unwrap(), 2.0);
}

#[test]
fn evaluate_guards_division_by_zero() {
    let a = expr("q1/p1", 1);
    let state = PhaseState::new(vec![1.0], vec![0.0]).unwrap();
    assert_eq!(a.evaluate(&state, &no_params()), Err(EvalError::DivisionByZero));
    let b = expr("p1^-2", 1);
    assert_eq!(b.evaluate(&state, &no_params()), Err(EvalError::DivisionByZero));
}

#[test]
fn bind_substitutes_parameters() {
    let a = expr("m*p1^2 + c", 1);
    let mut params = Params::new();
    params.insert("m".into(), 0.5);
    let bound = a.bind(&params);
    assert_eq!(bound.param_names().len(), 1); // `c` still symbolic
    let full = bound.bind(&BTreeMap::from([("c".to_string(), 1.0)]));
    let state = PhaseState::new(vec![0.0], vec![2.0]).unwrap();
    assert_eq!(full.evaluate(&state, &no_params()).unwrap(), 3.0);
}

#[test]
fn separability_classification() {
    assert!(expr("p1^2/2 + q1^4", 1).is_separable());
    assert!(expr("sin(q1) + exp(p1)", 1).is_separable());
    assert!(!expr("q1*p2 - q2*p1", 2).is_separable());
    assert!(!expr("sin(q1*p1)", 1).is_separable());
}

#[test]
fn polynomial_classification() {
    assert!(expr("q1^3*p1 - 2*p1", 1).is_polynomial());
    assert!(expr("p1^2/(2*m)", 1).is_polynomial()); // 1/m is fine
    assert!(!expr("1/q1", 1).is_polynomial());
    assert!(!expr("sin(q1)", 1).is_polynomial());
}

#[test]
fn antisymmetry_of_bracket_simplifies_to_zero() {
    let mut rng = ChaCha12Rng::seed_from_u64(42);
    for _ in 0..25 {
        let a = random_poly(&mut rng, 2, 3, 4);
        let b = random_poly(&mut rng, 2, 3, 4);
        let ab = a.poisson(&b).unwrap();
        let ba = b.poisson(&a).unwrap();
        let sum = ObservableExpr::from_node(
            Node::Sum(vec![ab.root().clone(), ba.root().clone()]),
            2,
        )
        .simplify();
        assert_eq!(sum.root(), &Node::Const(0.0), "a={a} b={b}");
    }
}

#[test]
fn product_rule_holds_at_random_points() {
    let mut rng = ChaCha12Rng::seed_from_u64(43);
    for _ in 0..10 {
        let a = random_poly(&mut rng, 2, 2, 3);
        let b = random_poly(&mut rng, 2, 2, 3);
        let c = random_poly(&mut rng, 2, 2, 3);
        let ab = ObservableExpr::from_node(
            Node::Product(vec![a.root().clone(), b.root().clone()]),
            2,
        );
        let lhs = ab.poisson(&c).unwrap();
        let bc = b.poisson(&c).unwrap();
        let ac = a.poisson(&c).unwrap();
        for _ in 0..100 {
            let (q, p) = random_point(&mut rng, 2);
            let l = lhs.eval_qp(&q, &p, &no_params()).unwrap();
            let r = a.eval_qp(&q, &p, &no_params()).unwrap()
                * bc.eval_qp(&q, &p, &no_params()).unwrap()
                + ac.eval_qp(&q, &p, &no_params()).unwrap()
                    * b.eval_qp(&q, &p, &no_params()).unwrap();
            assert!((l - r).abs() < 1e-9, "|{l} - {r}|");
        }
    }
}

#[test]
fn jacobi_identity_holds_at_random_points() {
    let mut rng = ChaCha12Rng::seed_from_u64(44);
    for _ in 0..10 {
        let a = random_poly(&mut rng, 2, 2, 3);
        let b = random_poly(&mut rng, 2, 2, 3);
        let c = random_poly(&mut rng, 2, 2, 3);
        let t1 = a.poisson(&b).unwrap().poisson(&c).unwrap();
        let t2 = b.poisson(&c).unwrap().poisson(&a).unwrap();
        let t3 = c.poisson(&a).unwrap().poisson(&b).unwrap();
        for _ in 0..100 {
            let (q, p) = random_point(&mut rng, 2);
            let sum = t1.eval_qp(&q, &p, &no_params()).unwrap()
                + t2.eval_qp(&q, &p, &no_params()).unwrap()
                + t3.eval_qp(&q, &p, &no_params()).unwrap();
            assert!(sum.abs() < 1e-10, "jacobi residual {sum}");
        }
    }
}

#[test]
fn symbolic_derivative_matches_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(45);
    let exprs = [
        expr("q1^3*p1 - 2*q1*p1^2", 1),
        expr("sin(q1)*p1 + cos(p1)", 1),
        expr("exp(q1/2)*p1^2", 1),
    ];
    for a in &exprs {
        for var in [Var::Q(1), Var::P(1)] {
            let d = a.differentiate(var).unwrap();
            for _ in 0..20 {
                let (q, p) = random_point(&mut rng, 1);
                let sym = d.eval_qp(&q, &p, &no_params()).unwrap();
                let num = fd_partial(a, var, &q, &p);
                let scale = sym.abs().max(1.0);
                assert!(
                    (sym - num).abs() / scale < 1e-6,
                    "{a} d{var}: {sym} vs {num}"
                );
            }
        }
    }
}

#[test]
fn display_round_trips_canonical_forms() {
    let mut rng = ChaCha12Rng::seed_from_u64(46);
    for _ in 0..50 {
        let a = random_poly(&mut rng, 2, 4, 5).simplify();
        let reparsed = ObservableExpr::parse(&a.to_string(), 2).unwrap().simplify();
        assert_eq!(reparsed, a, "text was `{a}`");
    }
    // non-polynomial shapes too
    for text in ["sin(q1)^2/(1 + cos(p1))", "exp(-q1^2/2)*p1^-1", "q1/(p1*p1 - 4)"] {
        let a = expr(text, 1).simplify();
        let reparsed = ObservableExpr::parse(&a.to_string(), 1).unwrap().simplify();
        assert_eq!(reparsed, a, "text was `{a}`");
    }
}

#[test]
fn transcendental_zero_detected_numerically() {
    // sin^2 + cos^2 - 1 is invisible to the polynomial canonicalizer
    let a = expr("sin(q1)^2 + cos(q1)^2 - 1", 1);
    assert!(a.is_zero());
    let b = expr("sin(q1)^2 + cos(q1)^2 - 0.999", 1);
    assert!(!b.is_zero());
}
