//! The three equivalent routes to a classical expectation value, and the
//! measurement-value histogram.
//!
//! For a state `φ = √ρ·exp(iS/ħ)` the observable average can be computed
//! (i) directly as `∫ A ρ dω`, (ii) through the Hermitian operator as
//! `⟨φ, L̂_A φ⟩` plus a compensating term `⟨φ, Δ̂_A φ⟩`, or (iii) through the
//! spectral resolution `Σ_k a_k |⟨φ, φ̄_k⟩|²` plus the same compensation.
//! The compensating operator is built with the identical skew-split stencils
//! as `L̂_A`, which makes `L̂_A + Δ̂_A = diag(A)` an exact matrix identity:
//! the three routes agree to round-off and are all independent of the phase
//! `S`, whatever the grid resolution.

use super::{
    build_l_operator, build_parts, inner_product, sample_on_grid, DiffScheme, OperatorError,
    PhaseOperator, Spectrum,
};
use crate::expr::{ObservableExpr, Params, Var};
use crate::field::{FieldKind, GridField, PhaseGrid};
use crate::util::pairwise_sum_by;

/// Quadrature of `A·ρ` over the grid.
pub fn expectation_direct(
    rho: &GridField,
    observable: &ObservableExpr,
    params: &Params,
) -> Result<f64, OperatorError> {
    if rho.kind() != FieldKind::Density {
        return Err(OperatorError::WrongFieldKind { expected: "density" });
    }
    let samples = sample_on_grid(&observable.bind(params), rho.grid())
        .map_err(|e| match e {
            OperatorError::Eval(err) => OperatorError::Eval(err),
            other => other,
        })?;
    let values = rho.values_real()?;
    let dv = rho.grid().cell_volume();
    Ok(pairwise_sum_by(values.len(), |i| samples[i] * values[i]) * dv)
}

/// The compensating operator `Δ̂_A = −iħ·K_A + diag(Σ p_k ∂A/∂p_k)`, using
/// the same antisymmetric kernel `K_A` as `L̂_A` so that
/// `L̂_A + Δ̂_A = diag(A)` exactly.
pub fn build_delta_operator(
    gen: &ObservableExpr,
    grid: &PhaseGrid,
    hbar: f64,
    scheme: DiffScheme,
    params: &Params,
) -> Result<PhaseOperator, OperatorError> {
    let (mut skew, bound) = build_parts(gen, grid, params)?;
    for term in &mut skew {
        term.coeff.iter_mut().for_each(|c| *c = -*c);
    }
    // Σ p_k ∂A/∂p_k = A + L̄_A
    let mut p_grad_terms = Vec::with_capacity(gen.dim());
    for k in 1..=gen.dim() {
        let dp = bound.differentiate(Var::P(k))?;
        p_grad_terms.push(crate::expr::Node::Product(vec![
            crate::expr::Node::Var(Var::P(k)),
            dp.root().clone(),
        ]));
    }
    let p_dot_grad =
        ObservableExpr::from_node(crate::expr::Node::Sum(p_grad_terms), gen.dim()).simplify();
    let diag = sample_on_grid(&p_dot_grad, grid)?;
    let derivs = grid
        .axes()
        .iter()
        .map(|a| super::axis_derivative(a.count, a.spacing(), scheme))
        .collect();
    Ok(PhaseOperator {
        grid: grid.clone(),
        hbar,
        scheme,
        part: super::OperatorPart::SelfAdjoint,
        derivs,
        skew,
        diag,
        generator: bound,
    })
}

/// Expectation value through the operator route.
#[derive(Debug, Clone, Copy)]
pub struct OperatorExpectation {
    /// `Re ⟨φ, L̂_A φ⟩`
    pub main_term: f64,
    /// `Re ⟨φ, Δ̂_A φ⟩`
    pub delta_term: f64,
    /// `main_term + delta_term`; equals the direct quadrature of `A|φ|²`.
    pub total: f64,
    /// Largest imaginary residue of the two quadratic forms.
    pub imag_residue: f64,
}

/// `⟨φ, L̂_A φ⟩ + ⟨φ, Δ̂_A φ⟩` for a complex classical state.
pub fn expectation_operator(
    phi: &GridField,
    observable: &ObservableExpr,
    hbar: f64,
    scheme: DiffScheme,
    params: &Params,
) -> Result<OperatorExpectation, OperatorError> {
    if phi.kind() != FieldKind::ClassicalState {
        return Err(OperatorError::WrongFieldKind { expected: "classical state" });
    }
    let f = phi.values_complex()?;
    let grid = phi.grid();
    let l_op = build_l_operator(observable, grid, hbar, scheme, params)?;
    let d_op = build_delta_operator(observable, grid, hbar, scheme, params)?;
    let main = inner_product(grid, f, &l_op.apply(f));
    let delta = inner_product(grid, f, &d_op.apply(f));
    Ok(OperatorExpectation {
        main_term: main.re,
        delta_term: delta.re,
        total: main.re + delta.re,
        imag_residue: main.im.abs().max(delta.im.abs()),
    })
}

/// Expectation value through the spectral resolution.
#[derive(Debug, Clone, Copy)]
pub struct SpectralExpectation {
    /// `Σ_k a_k |⟨φ, φ̄_k⟩|²`
    pub sum_term: f64,
    /// Same compensation as [`OperatorExpectation::delta_term`].
    pub delta_term: f64,
    pub total: f64,
    /// State norm missed by the provided eigenbasis.
    pub uncaptured_norm: f64,
}

/// `Σ_k a_k |⟨φ, φ̄_k⟩|² + ⟨φ, Δ̂_A φ⟩` over the spectrum of `L̂_A`.
/// Errors when the basis misses more than `1e-6` of the state norm.
pub fn expectation_spectral(
    phi: &GridField,
    spectrum: &Spectrum,
    observable: &ObservableExpr,
    hbar: f64,
    scheme: DiffScheme,
    params: &Params,
) -> Result<SpectralExpectation, OperatorError> {
    if phi.kind() != FieldKind::ClassicalState {
        return Err(OperatorError::WrongFieldKind { expected: "classical state" });
    }
    if phi.grid() != spectrum.grid() {
        return Err(OperatorError::GridMismatch);
    }
    let f = phi.values_complex()?;
    let grid = phi.grid();
    let mut sum = 0.0;
    let mut captured = 0.0;
    for k in 0..spectrum.len() {
        let c = inner_product(grid, spectrum.eigenvector(k), f);
        let w = c.norm_sqr();
        sum += spectrum.eigenvalues()[k] * w;
        captured += w;
    }
    let total_norm = inner_product(grid, f, f).re;
    let uncaptured = (total_norm - captured).abs();
    if uncaptured > 1e-6 {
        return Err(OperatorError::IncompleteSpectrum { uncaptured });
    }
    let d_op = build_delta_operator(observable, grid, hbar, scheme, params)?;
    let delta = inner_product(grid, f, &d_op.apply(f)).re;
    Ok(SpectralExpectation {
        sum_term: sum,
        delta_term: delta,
        total: sum + delta,
        uncaptured_norm: uncaptured,
    })
}

/// Probability density over measured values of an observable.
#[derive(Debug, Clone)]
pub struct BornHistogram {
    pub centers: Vec<f64>,
    /// Densities `W(a)`; `Σ W·Δa = 1`.
    pub densities: Vec<f64>,
    pub bin_width: f64,
}

impl BornHistogram {
    /// First moment `∫ a W(a) da`.
    pub fn moment(&self) -> f64 {
        self.centers
            .iter()
            .zip(&self.densities)
            .map(|(a, w)| a * w * self.bin_width)
            .sum()
    }

    /// Total mass `∫ W da`.
    pub fn mass(&self) -> f64 {
        self.densities.iter().sum::<f64>() * self.bin_width
    }
}

/// Histogram of observable values weighted by the density: the grid-cell
/// realization of the level-set partition of phase space.
pub fn born_histogram(
    rho: &GridField,
    observable: &ObservableExpr,
    bins: usize,
    params: &Params,
) -> Result<BornHistogram, OperatorError> {
    if rho.kind() != FieldKind::Density {
        return Err(OperatorError::WrongFieldKind { expected: "density" });
    }
    if bins == 0 {
        return Err(OperatorError::DegenerateBins);
    }
    let samples = sample_on_grid(&observable.bind(params), rho.grid())?;
    let weights = rho.values_real()?;
    let dv = rho.grid().cell_volume();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for a in &samples {
        lo = lo.min(*a);
        hi = hi.max(*a);
    }
    if !(hi - lo).is_normal() {
        // constant observable: one occupied bin of unit width
        let total: f64 = pairwise_sum_by(weights.len(), |i| weights[i]) * dv;
        return Ok(BornHistogram {
            centers: vec![lo],
            densities: vec![total],
            bin_width: 1.0,
        });
    }
    let width = (hi - lo) / bins as f64;
    let mut mass = vec![0.0; bins];
    for (a, w) in samples.iter().zip(weights) {
        let b = (((a - lo) / width) as usize).min(bins - 1);
        mass[b] += w * dv;
    }
    let centers = (0..bins)
        .map(|b| lo + (b as f64 + 0.5) * width)
        .collect();
    let densities = mass.into_iter().map(|m| m / width).collect();
    Ok(BornHistogram { centers, densities, bin_width: width })
}
