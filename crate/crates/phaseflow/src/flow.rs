//! Canonical flows generated by arbitrary observables.
//!
//! Any observable `A(q, p)` defines the equations `q̇_k = ∂A/∂p_k`,
//! `ṗ_k = −∂A/∂q_k` in a flow parameter `α`. [`advance`] integrates them with
//! a symplectic scheme: Störmer–Verlet for separable generators, implicit
//! midpoint otherwise, each optionally raised to fourth order by a
//! triple-jump composition. [`invert`] runs the flow backwards and
//! [`jacobian_determinant`] measures volume preservation by finite
//! differences of the integrated map (the exact flow has determinant one).

use thiserror::Error;

use crate::expr::{CompiledExpr, EvalError, ExprError, ObservableExpr, Var};

/// A point `(q, p)` in 2n-dimensional phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    q: Vec<f64>,
    p: Vec<f64>,
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self, FlowError> {
        if q.len() != p.len() {
            return Err(FlowError::MismatchedComponents { q: q.len(), p: p.len() });
        }
        if q.iter().chain(&p).any(|x| !x.is_finite()) {
            return Err(FlowError::NonFiniteState);
        }
        Ok(Self { q, p })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Flattened `[q_1..q_n, p_1..p_n]` layout.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.q.clone();
        out.extend_from_slice(&self.p);
        out
    }

    pub fn from_flat(z: &[f64]) -> Result<Self, FlowError> {
        let n = z.len() / 2;
        Self::new(z[..n].to_vec(), z[n..].to_vec())
    }

    pub fn max_abs_diff(&self, other: &PhaseState) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .chain(self.p.iter().zip(&other.p))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Integration scheme selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Störmer–Verlet for separable generators, implicit midpoint otherwise.
    #[default]
    Auto,
    StormerVerlet,
    ImplicitMidpoint,
}

/// Integrator configuration.
#[derive(Debug, Clone)]
pub struct FlowConfig {
    /// Nominal step size in the flow parameter (the actual step divides the
    /// total parameter interval evenly).
    pub step: f64,
    pub scheme: Scheme,
    /// 2 for the bare second-order scheme, 4 for the triple-jump composition.
    pub composition_order: u8,
    /// Blow-up guard: integration aborts when any component exceeds this.
    pub bound: f64,
    /// Fixed-point tolerance of the implicit midpoint solve.
    pub fixed_point_tol: f64,
    pub max_fixed_point_iters: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            scheme: Scheme::Auto,
            composition_order: 4,
            bound: 1e6,
            fixed_point_tol: 1e-12,
            max_fixed_point_iters: 50,
        }
    }
}

impl FlowConfig {
    pub fn with_step(step: f64) -> Self {
        Self { step, ..Self::default() }
    }
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("q has {q} components but p has {p}")]
    MismatchedComponents { q: usize, p: usize },
    #[error("non-finite state component")]
    NonFiniteState,
    #[error("trajectory escaped the bounding box |x| < {bound} after {steps} steps")]
    TrajectoryEscaped { bound: f64, steps: usize },
    #[error("non-finite derivative encountered during integration")]
    NonFiniteDerivative,
    #[error("implicit midpoint iteration did not reach tolerance {tol} in {iters} iterations")]
    FixedPointDiverged { tol: f64, iters: usize },
    #[error("state has {state} degrees of freedom, generator has {gen}")]
    DimensionMismatch { state: usize, gen: usize },
    #[error("invalid flow parameter or step")]
    InvalidParameter,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

// Yoshida triple-jump coefficients for the 4th-order composition:
// w1 = 1/(2 - 2^(1/3)), w2 = -2^(1/3) * w1, with 2*w1 + w2 = 1.
const W1: f64 = 1.351_207_191_959_657_7;
const W2: f64 = -1.702_414_383_919_315_5;

/// The canonical vector field of a generator, with compiled gradients.
pub struct CanonicalSystem {
    dim: usize,
    grad_q: Vec<CompiledExpr>,
    grad_p: Vec<CompiledExpr>,
    lagrangian: CompiledExpr,
    separable: bool,
}

impl CanonicalSystem {
    /// Differentiate and compile the generator. All parameters must be bound.
    pub fn new(gen: &ObservableExpr) -> Result<Self, FlowError> {
        let dim = gen.dim();
        let mut grad_q = Vec::with_capacity(dim);
        let mut grad_p = Vec::with_capacity(dim);
        for k in 1..=dim {
            grad_q.push(gen.differentiate(Var::Q(k))?.compile()?);
            grad_p.push(gen.differentiate(Var::P(k))?.compile()?);
        }
        let lagrangian = gen.associated_lagrangian().compile()?;
        Ok(Self {
            dim,
            grad_q,
            grad_p,
            lagrangian,
            separable: gen.is_separable(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_separable(&self) -> bool {
        self.separable
    }

    fn velocity(
        &self,
        q: &[f64],
        p: &[f64],
        qdot: &mut [f64],
        pdot: &mut [f64],
        stack: &mut Vec<f64>,
    ) -> Result<(), FlowError> {
        for k in 0..self.dim {
            qdot[k] = self.grad_p[k].eval_with(q, p, stack)?;
            pdot[k] = -self.grad_q[k].eval_with(q, p, stack)?;
        }
        Ok(())
    }

    fn lagrangian_at(&self, q: &[f64], p: &[f64], stack: &mut Vec<f64>) -> Result<f64, FlowError> {
        Ok(self.lagrangian.eval_with(q, p, stack)?)
    }
}

struct Integrator<'a> {
    system: &'a CanonicalSystem,
    cfg: &'a FlowConfig,
    use_verlet: bool,
    q: Vec<f64>,
    p: Vec<f64>,
    action: f64,
    // scratch
    stack: Vec<f64>,
    buf_a: Vec<f64>,
    buf_b: Vec<f64>,
    buf_c: Vec<f64>,
    buf_d: Vec<f64>,
}

impl<'a> Integrator<'a> {
    fn new(system: &'a CanonicalSystem, start: &PhaseState, cfg: &'a FlowConfig) -> Self {
        let n = system.dim();
        let use_verlet = match cfg.scheme {
            Scheme::StormerVerlet => true,
            Scheme::ImplicitMidpoint => false,
            Scheme::Auto => system.is_separable(),
        };
        Integrator {
            system,
            cfg,
            use_verlet,
            q: start.q().to_vec(),
            p: start.p().to_vec(),
            action: 0.0,
            stack: Vec::new(),
            buf_a: vec![0.0; n],
            buf_b: vec![0.0; n],
            buf_c: vec![0.0; n],
            buf_d: vec![0.0; n],
        }
    }

    fn run(&mut self, alpha: f64, accumulate_action: bool) -> Result<(), FlowError> {
        if !alpha.is_finite() {
            return Err(FlowError::InvalidParameter);
        }
        if alpha == 0.0 {
            return Ok(());
        }
        if !(self.cfg.step.is_finite() && self.cfg.step > 0.0) {
            return Err(FlowError::InvalidParameter);
        }
        let n_steps = ((alpha.abs() / self.cfg.step).ceil() as usize).max(1);
        let h = alpha / n_steps as f64;
        let substeps: &[f64] = match self.cfg.composition_order {
            2 => &[1.0],
            _ => &[W1, W2, W1],
        };
        for step in 0..n_steps {
            for gamma in substeps {
                self.substep(gamma * h, accumulate_action)?;
                self.check_bounds(step)?;
            }
        }
        Ok(())
    }

    fn check_bounds(&self, steps: usize) -> Result<(), FlowError> {
        for x in self.q.iter().chain(&self.p) {
            if !x.is_finite() {
                return Err(FlowError::NonFiniteDerivative);
            }
            if x.abs() >= self.cfg.bound {
                return Err(FlowError::TrajectoryEscaped { bound: self.cfg.bound, steps });
            }
        }
        Ok(())
    }

    fn substep(&mut self, h: f64, accumulate_action: bool) -> Result<(), FlowError> {
        if self.use_verlet && !accumulate_action {
            self.verlet_step(h)
        } else {
            self.midpoint_step(h, accumulate_action)
        }
    }

    /// Kick–drift–kick. Correct for separable generators, where ∂A/∂q is
    /// independent of p and ∂A/∂p independent of q.
    fn verlet_step(&mut self, h: f64) -> Result<(), FlowError> {
        let n = self.system.dim();
        for k in 0..n {
            let dq = self.system.grad_q[k].eval_with(&self.q, &self.p, &mut self.stack)?;
            self.buf_a[k] = self.p[k] - 0.5 * h * dq;
        }
        self.p.copy_from_slice(&self.buf_a);
        for k in 0..n {
            let dp = self.system.grad_p[k].eval_with(&self.q, &self.p, &mut self.stack)?;
            self.buf_b[k] = self.q[k] + h * dp;
        }
        self.q.copy_from_slice(&self.buf_b);
        for k in 0..n {
            let dq = self.system.grad_q[k].eval_with(&self.q, &self.p, &mut self.stack)?;
            self.buf_a[k] = self.p[k] - 0.5 * h * dq;
        }
        self.p.copy_from_slice(&self.buf_a);
        Ok(())
    }

    /// Implicit midpoint by fixed-point iteration, with the action integral
    /// accumulated by the midpoint quadrature rule.
    fn midpoint_step(&mut self, h: f64, accumulate_action: bool) -> Result<(), FlowError> {
        let n = self.system.dim();
        // predictor: explicit Euler
        self.system.velocity(
            &self.q,
            &self.p,
            &mut self.buf_a,
            &mut self.buf_b,
            &mut self.stack,
        )?;
        let (mut next_q, mut next_p) = (self.buf_c.clone(), self.buf_d.clone());
        for k in 0..n {
            next_q[k] = self.q[k] + h * self.buf_a[k];
            next_p[k] = self.p[k] + h * self.buf_b[k];
        }
        let mut mid_q = vec![0.0; n];
        let mut mid_p = vec![0.0; n];
        let mut converged = false;
        for _ in 0..self.cfg.max_fixed_point_iters {
            for k in 0..n {
                mid_q[k] = 0.5 * (self.q[k] + next_q[k]);
                mid_p[k] = 0.5 * (self.p[k] + next_p[k]);
            }
            self.system.velocity(
                &mid_q,
                &mid_p,
                &mut self.buf_a,
                &mut self.buf_b,
                &mut self.stack,
            )?;
            let mut delta: f64 = 0.0;
            for k in 0..n {
                let nq = self.q[k] + h * self.buf_a[k];
                let np = self.p[k] + h * self.buf_b[k];
                delta = delta.max((nq - next_q[k]).abs()).max((np - next_p[k]).abs());
                next_q[k] = nq;
                next_p[k] = np;
            }
            if delta <= self.cfg.fixed_point_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(FlowError::FixedPointDiverged {
                tol: self.cfg.fixed_point_tol,
                iters: self.cfg.max_fixed_point_iters,
            });
        }
        if accumulate_action {
            for k in 0..n {
                mid_q[k] = 0.5 * (self.q[k] + next_q[k]);
                mid_p[k] = 0.5 * (self.p[k] + next_p[k]);
            }
            self.action += h * self.system.lagrangian_at(&mid_q, &mid_p, &mut self.stack)?;
        }
        self.q.copy_from_slice(&next_q);
        self.p.copy_from_slice(&next_p);
        Ok(())
    }

    fn into_state(self) -> PhaseState {
        PhaseState { q: self.q, p: self.p }
    }
}

fn check_dims(system: &CanonicalSystem, omega: &PhaseState) -> Result<(), FlowError> {
    if system.dim() != omega.dim() {
        return Err(FlowError::DimensionMismatch { state: omega.dim(), gen: system.dim() });
    }
    Ok(())
}

/// Integrate the canonical equations of `gen` from `omega0` to flow
/// parameter `alpha`.
pub fn advance(
    gen: &ObservableExpr,
    omega0: &PhaseState,
    alpha: f64,
    cfg: &FlowConfig,
) -> Result<PhaseState, FlowError> {
    let system = CanonicalSystem::new(gen)?;
    advance_system(&system, omega0, alpha, cfg)
}

/// [`advance`] with a pre-built [`CanonicalSystem`] (avoids recompiling the
/// generator in hot loops).
pub fn advance_system(
    system: &CanonicalSystem,
    omega0: &PhaseState,
    alpha: f64,
    cfg: &FlowConfig,
) -> Result<PhaseState, FlowError> {
    check_dims(system, omega0)?;
    let mut integrator = Integrator::new(system, omega0, cfg);
    integrator.run(alpha, false)?;
    Ok(integrator.into_state())
}

/// Advance while accumulating the line integral of the associated Lagrangian
/// `∫ L̄_A dα` along the trajectory. Always uses the implicit midpoint
/// scheme so the quadrature matches the integrator order.
pub fn advance_with_action(
    system: &CanonicalSystem,
    omega0: &PhaseState,
    alpha: f64,
    cfg: &FlowConfig,
) -> Result<(PhaseState, f64), FlowError> {
    check_dims(system, omega0)?;
    let mut integrator = Integrator::new(system, omega0, cfg);
    integrator.run(alpha, true)?;
    let action = integrator.action;
    Ok((integrator.into_state(), action))
}

/// The inverse flow: `advance` with parameter `−alpha`.
pub fn invert(
    gen: &ObservableExpr,
    omega: &PhaseState,
    alpha: f64,
    cfg: &FlowConfig,
) -> Result<PhaseState, FlowError> {
    advance(gen, omega, -alpha, cfg)
}

/// Determinant of the Jacobian of the flow map with respect to the start
/// point, by central finite differences of the integrated flow. Symplectic
/// maps have determinant one.
pub fn jacobian_determinant(
    gen: &ObservableExpr,
    omega0: &PhaseState,
    alpha: f64,
    cfg: &FlowConfig,
) -> Result<f64, FlowError> {
    let system = CanonicalSystem::new(gen)?;
    let n2 = 2 * omega0.dim();
    let z0 = omega0.flatten();
    let mut jac = nalgebra::DMatrix::<f64>::zeros(n2, n2);
    for j in 0..n2 {
        let h = 1e-5 * z0[j].abs().max(1.0);
        let mut zp = z0.clone();
        zp[j] += h;
        let mut zm = z0.clone();
        zm[j] -= h;
        let fp = advance_system(&system, &PhaseState::from_flat(&zp)?, alpha, cfg)?.flatten();
        let fm = advance_system(&system, &PhaseState::from_flat(&zm)?, alpha, cfg)?.flatten();
        for i in 0..n2 {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac.lu().determinant())
}

/// The flow map `Φ_α^A` at a fixed parameter value.
pub struct FlowMap {
    system: CanonicalSystem,
    alpha: f64,
    cfg: FlowConfig,
}

impl FlowMap {
    pub fn new(gen: &ObservableExpr, alpha: f64, cfg: FlowConfig) -> Result<Self, FlowError> {
        Ok(Self { system: CanonicalSystem::new(gen)?, alpha, cfg })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn apply(&self, omega: &PhaseState) -> Result<PhaseState, FlowError> {
        advance_system(&self.system, omega, self.alpha, &self.cfg)
    }

    pub fn apply_inverse(&self, omega: &PhaseState) -> Result<PhaseState, FlowError> {
        advance_system(&self.system, omega, -self.alpha, &self.cfg)
    }
}
