//! Stationary densities and action fields.
//!
//! A density built from invariants of the generator is constant along its
//! flow (`{√ρ̄, A} = 0`); an α-independent action field solves
//! `−a + {S̄, A} = L̄_A`, which along the characteristics of `A` reads
//! `dS̄/dα = a + L̄_A` and is integrated from a transversal section. The
//! integration is available for the closed families below, and a residual of
//! the defining equation is measured on interior grid points by central
//! differences.

use super::{Boundary, FieldError, FieldKind, FieldValues, GridField, PhaseGrid};
use crate::expr::{ObservableExpr, Params, Var};

/// Generators with a built-in stationary action solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationaryFamily {
    /// `A = p_k`: translations in `q_k`.
    Momentum(usize),
    /// `A = q_k`: translations in `−p_k`.
    Coordinate(usize),
    /// `A = (q_k² + p_k²)/2`: rotation in the `(q_k, p_k)` plane.
    Harmonic(usize),
    /// `A = q1 p2 − q2 p1`: simultaneous rotation of the `(q1, q2)` and
    /// `(p1, p2)` planes.
    AngularMomentum,
}

/// Match a generator against the supported stationary-action families.
pub fn classify_generator(gen: &ObservableExpr) -> Option<StationaryFamily> {
    let canon = gen.simplify();
    let dim = gen.dim();
    for k in 1..=dim {
        if canon == ObservableExpr::var(Var::P(k), dim).ok()?.simplify() {
            return Some(StationaryFamily::Momentum(k));
        }
        if canon == ObservableExpr::var(Var::Q(k), dim).ok()?.simplify() {
            return Some(StationaryFamily::Coordinate(k));
        }
        let harmonic = ObservableExpr::parse(&format!("(q{k}^2 + p{k}^2)/2"), dim)
            .ok()?
            .simplify();
        if canon == harmonic {
            return Some(StationaryFamily::Harmonic(k));
        }
    }
    if dim >= 2 {
        let l = ObservableExpr::parse("q1*p2 - q2*p1", dim).ok()?.simplify();
        if canon == l {
            return Some(StationaryFamily::AngularMomentum);
        }
    }
    None
}

/// Build the stationary density `ρ̄ = profile(inv_1(ω), …, inv_m(ω))`.
///
/// Each invariant must Poisson-commute with the generator (checked exactly
/// for polynomials, numerically otherwise). `profile` is an expression over
/// placeholder coordinates `q1..qm`, one per invariant. Returns the
/// normalized field together with the max-norm residual of `{√ρ̄, A}` on the
/// grid.
pub fn stationary_density(
    gen: &ObservableExpr,
    grid: &PhaseGrid,
    invariants: &[ObservableExpr],
    profile: &ObservableExpr,
    params: &Params,
) -> Result<(GridField, f64), FieldError> {
    if gen.dim() != grid.dof() {
        return Err(FieldError::DimensionMismatch { grid: grid.dof(), expr: gen.dim() });
    }
    for (index, inv) in invariants.iter().enumerate() {
        let bracket = inv
            .bind(params)
            .poisson(&gen.bind(params))
            .map_err(|_| FieldError::DimensionMismatch { grid: grid.dof(), expr: inv.dim() })?;
        if !bracket.is_zero() {
            return Err(FieldError::InvariantNotConserved { index });
        }
    }
    let compiled_invs: Vec<_> = invariants
        .iter()
        .map(|inv| inv.bind(params).compile())
        .collect::<Result<_, _>>()?;
    let compiled_profile = profile.bind(params).compile()?;

    let n = grid.dof();
    let m = invariants.len();
    let mut values = vec![0.0; grid.len()];
    let mut z = vec![0.0; 2 * n];
    let mut slots_q = vec![0.0; m];
    let slots_p = vec![0.0; m];
    let mut stack = Vec::new();
    for (idx, out) in values.iter_mut().enumerate() {
        grid.coords_into(idx, &mut z);
        for (i, inv) in compiled_invs.iter().enumerate() {
            slots_q[i] = inv.eval_with(&z[..n], &z[n..], &mut stack)?;
        }
        *out = compiled_profile.eval_with(&slots_q, &slots_p, &mut stack)?;
    }
    let field = GridField::new(grid.clone(), FieldKind::Density, FieldValues::Real(values))?
        .into_normalized_density()?;

    let residual = bracket_residual_sqrt(&field, gen, params)?;
    Ok((field, residual))
}

/// Max-norm of the grid-level bracket `{√ρ, A}` over measurable points.
fn bracket_residual_sqrt(
    rho: &GridField,
    gen: &ObservableExpr,
    params: &Params,
) -> Result<f64, FieldError> {
    let grid = rho.grid();
    let n = grid.dof();
    let sqrt_vals: Vec<f64> = rho.values_real()?.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut grad_q = Vec::with_capacity(n);
    let mut grad_p = Vec::with_capacity(n);
    let bound = gen.bind(params);
    for k in 1..=n {
        grad_q.push(bound.differentiate(Var::Q(k)).map_err(|_| {
            FieldError::DimensionMismatch { grid: n, expr: gen.dim() }
        })?.compile()?);
        grad_p.push(bound.differentiate(Var::P(k)).map_err(|_| {
            FieldError::DimensionMismatch { grid: n, expr: gen.dim() }
        })?.compile()?);
    }

    let mut worst: f64 = 0.0;
    let mut z = vec![0.0; 2 * n];
    let mut stack = Vec::new();
    for idx in 0..grid.len() {
        let multi = grid.multi_index(idx);
        if grid.boundary() == Boundary::Truncated {
            let interior = multi
                .iter()
                .enumerate()
                .all(|(d, &i)| i >= 1 && i + 1 < grid.axes()[d].count);
            if !interior {
                continue;
            }
        }
        grid.coords_into(idx, &mut z);
        let mut r = 0.0;
        for k in 0..n {
            let aq = grad_q[k].eval_with(&z[..n], &z[n..], &mut stack)?;
            let ap = grad_p[k].eval_with(&z[..n], &z[n..], &mut stack)?;
            let ds_dq = central_diff(grid, &sqrt_vals, idx, &multi, k);
            let ds_dp = central_diff(grid, &sqrt_vals, idx, &multi, n + k);
            r += aq * ds_dp - ap * ds_dq;
        }
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

fn central_diff(
    grid: &PhaseGrid,
    values: &[f64],
    idx: usize,
    multi: &[usize],
    axis: usize,
) -> f64 {
    let count = grid.axes()[axis].count;
    let stride = grid.stride(axis);
    let i = multi[axis];
    let (up, dn) = match grid.boundary() {
        Boundary::Periodic => (
            idx + ((i + 1) % count) * stride - i * stride,
            idx + ((i + count - 1) % count) * stride - i * stride,
        ),
        Boundary::Truncated => (idx + stride, idx - stride),
    };
    (values[up] - values[dn]) / (2.0 * grid.axes()[axis].spacing())
}

/// Report of a stationary action solve.
#[derive(Debug, Clone, Copy)]
pub struct StationaryActionReport {
    /// Max-norm residual of the stationary action equation over unmasked
    /// interior points.
    pub max_residual: f64,
    /// Fraction of points excluded (boundary stencil, branch cut of the flow
    /// angle, coordinate singularity).
    pub masked_fraction: f64,
}

/// Solve the stationary action equation for a built-in generator family by
/// integrating `a + L̄_A` along characteristics from a transversal section.
pub fn stationary_action(
    gen: &ObservableExpr,
    grid: &PhaseGrid,
    a: f64,
) -> Result<(GridField, StationaryActionReport), FieldError> {
    if gen.dim() != grid.dof() {
        return Err(FieldError::DimensionMismatch { grid: grid.dof(), expr: gen.dim() });
    }
    let family = classify_generator(gen).ok_or(FieldError::UnsupportedGenerator)?;

    let value_at = |q: &[f64], p: &[f64]| -> f64 {
        match family {
            // section q_k = 0, L̄ = 0: S̄ = a·q_k
            StationaryFamily::Momentum(k) => a * q[k - 1],
            // section p_k = 0, L̄ = −q_k, flow lowers p_k: S̄ = (q_k − a)·p_k
            StationaryFamily::Coordinate(k) => (q[k - 1] - a) * p[k - 1],
            // section {p_k = 0, q_k > 0}; along the rotation dS̄ = a + L̄,
            // ∫L̄ = q_k p_k / 2
            StationaryFamily::Harmonic(k) => {
                let theta = (-p[k - 1]).atan2(q[k - 1]).rem_euclid(std::f64::consts::TAU);
                a * theta + 0.5 * q[k - 1] * p[k - 1]
            }
            // L̄ vanishes; S̄ = a × rotation angle from the section
            StationaryFamily::AngularMomentum => {
                let theta = if q[0].hypot(q[1]) > 1e-12 {
                    q[1].atan2(q[0])
                } else {
                    p[1].atan2(p[0])
                };
                a * theta.rem_euclid(std::f64::consts::TAU)
            }
        }
    };
    let field = GridField::sample_real(grid.clone(), FieldKind::Action, value_at);

    let report = stationary_action_residual(&field, gen, a, family)?;
    Ok((field, report))
}

/// Central-difference residual of `−a + {S̄, A} − L̄_A` on interior points.
/// Points are masked when their stencil straddles the branch cut of the flow
/// angle or sits at the rotation center, where the angle is singular.
fn stationary_action_residual(
    s: &GridField,
    gen: &ObservableExpr,
    a: f64,
    family: StationaryFamily,
) -> Result<StationaryActionReport, FieldError> {
    let grid = s.grid();
    let n = grid.dof();
    let values = s.values_real()?;
    let params = Params::new();
    let bound = gen.bind(&params);
    let mut grad_q = Vec::with_capacity(n);
    let mut grad_p = Vec::with_capacity(n);
    for k in 1..=n {
        grad_q.push(bound.differentiate(Var::Q(k)).unwrap().compile()?);
        grad_p.push(bound.differentiate(Var::P(k)).unwrap().compile()?);
    }
    let lagrangian = bound.associated_lagrangian().compile()?;

    // neighbor jumps above this straddle the section cut
    let jump_cut = std::f64::consts::PI * a.abs().max(1e-12);
    // the flow angle is singular at the rotation center
    let near_center = |q: &[f64], p: &[f64]| -> bool {
        match family {
            StationaryFamily::Momentum(_) | StationaryFamily::Coordinate(_) => false,
            StationaryFamily::Harmonic(k) => {
                let r = q[k - 1].hypot(p[k - 1]);
                let h = grid.axes()[k - 1]
                    .spacing()
                    .max(grid.axes()[n + k - 1].spacing());
                r < 3.0 * h
            }
            StationaryFamily::AngularMomentum => {
                let h = grid.axes()[0].spacing().max(grid.axes()[1].spacing());
                q[0].hypot(q[1]) < 3.0 * h
            }
        }
    };

    let mut worst: f64 = 0.0;
    let mut measured = 0usize;
    let mut masked = 0usize;
    let mut z = vec![0.0; 2 * n];
    let mut stack = Vec::new();
    'points: for idx in 0..grid.len() {
        let multi = grid.multi_index(idx);
        let interior = multi
            .iter()
            .enumerate()
            .all(|(d, &i)| i >= 1 && i + 1 < grid.axes()[d].count);
        if !interior {
            masked += 1;
            continue;
        }
        grid.coords_into(idx, &mut z);
        if near_center(&z[..n], &z[n..]) {
            masked += 1;
            continue;
        }
        for axis in 0..2 * n {
            let stride = grid.stride(axis);
            let up = values[idx + stride];
            let dn = values[idx - stride];
            if (up - dn).abs() > jump_cut {
                masked += 1;
                continue 'points;
            }
        }
        let mut bracket = 0.0;
        for k in 0..n {
            let aq = grad_q[k].eval_with(&z[..n], &z[n..], &mut stack)?;
            let ap = grad_p[k].eval_with(&z[..n], &z[n..], &mut stack)?;
            let ds_dq = central_diff(grid, values, idx, &multi, k);
            let ds_dp = central_diff(grid, values, idx, &multi, n + k);
            bracket += ds_dq * ap - ds_dp * aq;
        }
        let lbar = lagrangian.eval_with(&z[..n], &z[n..], &mut stack)?;
        let r = -a + bracket - lbar;
        worst = worst.max(r.abs());
        measured += 1;
    }
    Ok(StationaryActionReport {
        max_residual: worst,
        masked_fraction: masked as f64 / (measured + masked) as f64,
    })
}
