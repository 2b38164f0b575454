//! Grid fields on phase space.
//!
//! A [`PhaseGrid`] is a uniform rectangular lattice over the `2n` axes
//! `q1..qn, p1..pn` with periodic or truncated boundaries; a [`GridField`]
//! carries real or complex samples tagged by what they represent (density,
//! action, complex classical state, wavefunction, Wigner function).
//!
//! Grid points sit at `min + j·Δ` for `j = 0..count`, with
//! `Δ = (max − min)/count`; in periodic mode `max` is identified with `min`,
//! and the lattice quadrature `Σ f·ΔV` is the trapezoid rule. Densities are
//! normalized against that quadrature.

mod interp;
mod io;
mod stationary;
mod transport;

use num_complex::Complex64;
use thiserror::Error;

use crate::expr::{EvalError, ObservableExpr, Params};
use crate::flow::FlowError;

pub use interp::InterpValue;
pub use io::FieldIoError;
pub use stationary::{
    classify_generator, stationary_action, stationary_density, StationaryActionReport,
    StationaryFamily,
};
pub use transport::{transport_action, transport_density, TransportConfig, TransportReport};

/// Default cap on the total number of grid points.
pub const DEFAULT_POINT_CAP: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("axis {axis}: needs at least 4 points, got {count}")]
    TooFewPoints { axis: usize, count: usize },
    #[error("axis {axis}: invalid bounds [{min}, {max}]")]
    InvalidBounds { axis: usize, min: f64, max: f64 },
    #[error("grid has {total} points, exceeding the cap of {cap}")]
    TooManyPoints { total: usize, cap: usize },
    #[error("grid needs an even number of axes (q1..qn, p1..pn), got {0}")]
    OddAxisCount(usize),
    #[error("field value count {values} does not match grid size {grid}")]
    ValueCount { values: usize, grid: usize },
    #[error("expected a {expected:?} field, got {found:?}")]
    KindMismatch { expected: FieldKind, found: FieldKind },
    #[error("operation needs a real-valued field")]
    ExpectedReal,
    #[error("operation needs a complex-valued field")]
    ExpectedComplex,
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("density has negative values (min {min})")]
    NegativeDensity { min: f64 },
    #[error("field integrates to {integral}, cannot normalize")]
    DegenerateNormalization { integral: f64 },
    #[error("hbar must be positive, got {0}")]
    NonPositiveHbar(f64),
    #[error("grid dimension {grid} does not match observable dimension {expr}")]
    DimensionMismatch { grid: usize, expr: usize },
    #[error("mass leak {leak:.3e} above threshold {threshold:.3e} on truncated grid")]
    MassLeak { leak: f64, threshold: f64 },
    #[error("invariant {index} is not conserved by the generator (bracket is nonzero)")]
    InvariantNotConserved { index: usize },
    #[error("generator is outside the supported family for stationary actions")]
    UnsupportedGenerator,
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One grid axis: `count` points at `min + j·Δ`, `Δ = (max − min)/count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / self.count as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        self.min + j as f64 * self.spacing()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    Truncated,
}

/// Uniform rectangular lattice over phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    dof: usize,
    axes: Vec<Axis>,
    boundary: Boundary,
}

impl PhaseGrid {
    /// Axes in `q1..qn, p1..pn` order.
    pub fn new(axes: Vec<Axis>, boundary: Boundary) -> Result<Self, FieldError> {
        Self::with_cap(axes, boundary, DEFAULT_POINT_CAP)
    }

    pub fn with_cap(axes: Vec<Axis>, boundary: Boundary, cap: usize) -> Result<Self, FieldError> {
        if axes.len() % 2 != 0 || axes.is_empty() {
            return Err(FieldError::OddAxisCount(axes.len()));
        }
        let mut total: usize = 1;
        for (i, a) in axes.iter().enumerate() {
            if a.count < 4 {
                return Err(FieldError::TooFewPoints { axis: i, count: a.count });
            }
            if !(a.min.is_finite() && a.max.is_finite() && a.max > a.min) {
                return Err(FieldError::InvalidBounds { axis: i, min: a.min, max: a.max });
            }
            total = total.saturating_mul(a.count);
        }
        if total > cap {
            return Err(FieldError::TooManyPoints { total, cap });
        }
        Ok(Self { dof: axes.len() / 2, axes, boundary })
    }

    /// Square grid for one degree of freedom: `count²` points over
    /// `[lo, hi)²` in `(q1, p1)`.
    pub fn square(lo: f64, hi: f64, count: usize, boundary: Boundary) -> Result<Self, FieldError> {
        Self::new(
            vec![Axis::new(lo, hi, count), Axis::new(lo, hi, count)],
            boundary,
        )
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).product()
    }

    /// Stride of axis `d` in the flat row-major layout (last axis fastest).
    pub fn stride(&self, d: usize) -> usize {
        self.axes[d + 1..].iter().map(|a| a.count).product()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (d, &i) in multi.iter().enumerate() {
            idx = idx * self.axes[d].count + i;
        }
        idx
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.axes.len()];
        for d in (0..self.axes.len()).rev() {
            out[d] = flat % self.axes[d].count;
            flat /= self.axes[d].count;
        }
        out
    }

    /// Coordinates of the flat index `idx`, written into `z` as
    /// `[q1..qn, p1..pn]`.
    pub fn coords_into(&self, idx: usize, z: &mut [f64]) {
        let mut rem = idx;
        for d in (0..self.axes.len()).rev() {
            let i = rem % self.axes[d].count;
            rem /= self.axes[d].count;
            z[d] = self.axes[d].point(i);
        }
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut z = vec![0.0; self.axes.len()];
        self.coords_into(idx, &mut z);
        z
    }
}

/// What a field's values represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Density,
    Action,
    ClassicalState,
    WaveFunction,
    Wigner,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValues {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl FieldValues {
    fn len(&self) -> usize {
        match self {
            FieldValues::Real(v) => v.len(),
            FieldValues::Complex(v) => v.len(),
        }
    }
}

/// Real- or complex-valued samples on a [`PhaseGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: PhaseGrid,
    kind: FieldKind,
    values: FieldValues,
}

impl GridField {
    pub fn new(grid: PhaseGrid, kind: FieldKind, values: FieldValues) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::ValueCount { values: values.len(), grid: grid.len() });
        }
        Ok(Self { grid, kind, values })
    }

    /// Sample a real-valued function of the phase point.
    pub fn sample_real<F>(grid: PhaseGrid, kind: FieldKind, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64,
    {
        let n = grid.dof();
        let mut values = vec![0.0; grid.len()];
        let mut z = vec![0.0; 2 * n];
        for (idx, out) in values.iter_mut().enumerate() {
            grid.coords_into(idx, &mut z);
            *out = f(&z[..n], &z[n..]);
        }
        Self { grid, kind, values: FieldValues::Real(values) }
    }

    /// Sample an observable expression on the grid.
    pub fn sample_expr(
        grid: PhaseGrid,
        kind: FieldKind,
        expr: &ObservableExpr,
        params: &Params,
    ) -> Result<Self, FieldError> {
        if expr.dim() != grid.dof() {
            return Err(FieldError::DimensionMismatch { grid: grid.dof(), expr: expr.dim() });
        }
        let compiled = expr.bind(params).compile()?;
        let n = grid.dof();
        let mut values = vec![0.0; grid.len()];
        let mut z = vec![0.0; 2 * n];
        let mut stack = Vec::new();
        for (idx, out) in values.iter_mut().enumerate() {
            grid.coords_into(idx, &mut z);
            *out = compiled.eval_with(&z[..n], &z[n..], &mut stack)?;
        }
        Ok(Self { grid, kind, values: FieldValues::Real(values) })
    }

    /// Sample a nonnegative function and normalize it into a probability
    /// density.
    pub fn density_from_fn<F>(grid: PhaseGrid, f: F) -> Result<Self, FieldError>
    where
        F: Fn(&[f64], &[f64]) -> f64,
    {
        Self::sample_real(grid, FieldKind::Density, f).into_normalized_density()
    }

    /// Normalize a real field into a density (rejects negative values).
    pub fn into_normalized_density(mut self) -> Result<Self, FieldError> {
        let dv = self.grid.cell_volume();
        let values = self.values_real_mut()?;
        let mut min = f64::INFINITY;
        for v in values.iter() {
            min = min.min(*v);
        }
        if min < -1e-12 {
            return Err(FieldError::NegativeDensity { min });
        }
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let mass: f64 = crate::util::pairwise_sum(values) * dv;
        if !(mass.is_finite() && mass > 0.0) {
            return Err(FieldError::DegenerateNormalization { integral: mass });
        }
        for v in values.iter_mut() {
            *v /= mass;
        }
        self.kind = FieldKind::Density;
        Ok(self)
    }

    pub fn zeros(grid: PhaseGrid, kind: FieldKind) -> Self {
        let n = grid.len();
        Self { grid, kind, values: FieldValues::Real(vec![0.0; n]) }
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn is_complex(&self) -> bool {
        matches!(self.values, FieldValues::Complex(_))
    }

    pub fn values(&self) -> &FieldValues {
        &self.values
    }

    pub fn values_real(&self) -> Result<&[f64], FieldError> {
        match &self.values {
            FieldValues::Real(v) => Ok(v),
            FieldValues::Complex(_) => Err(FieldError::ExpectedReal),
        }
    }

    pub fn values_real_mut(&mut self) -> Result<&mut Vec<f64>, FieldError> {
        match &mut self.values {
            FieldValues::Real(v) => Ok(v),
            FieldValues::Complex(_) => Err(FieldError::ExpectedReal),
        }
    }

    pub fn values_complex(&self) -> Result<&[Complex64], FieldError> {
        match &self.values {
            FieldValues::Complex(v) => Ok(v),
            FieldValues::Real(_) => Err(FieldError::ExpectedComplex),
        }
    }

    /// Lattice quadrature `Σ f · ΔV` of a real field.
    pub fn integral(&self) -> Result<f64, FieldError> {
        Ok(crate::util::pairwise_sum(self.values_real()?) * self.grid.cell_volume())
    }

    /// Lattice quadrature of `|f|²`.
    pub fn norm_squared(&self) -> f64 {
        let dv = self.grid.cell_volume();
        match &self.values {
            FieldValues::Real(v) => {
                crate::util::pairwise_sum_by(v.len(), |i| v[i] * v[i]) * dv
            }
            FieldValues::Complex(v) => {
                crate::util::pairwise_sum_by(v.len(), |i| v[i].norm_sqr()) * dv
            }
        }
    }

    /// Max-norm difference of two real fields on the same grid.
    pub fn linf_diff(&self, other: &GridField) -> Result<f64, FieldError> {
        if self.grid != other.grid {
            return Err(FieldError::GridMismatch);
        }
        let a = self.values_real()?;
        let b = other.values_real()?;
        Ok(a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max))
    }

    /// L¹ distance `∫ |f − g| dω` of two real fields on the same grid.
    pub fn l1_diff(&self, other: &GridField) -> Result<f64, FieldError> {
        if self.grid != other.grid {
            return Err(FieldError::GridMismatch);
        }
        let a = self.values_real()?;
        let b = other.values_real()?;
        Ok(crate::util::pairwise_sum_by(a.len(), |i| (a[i] - b[i]).abs())
            * self.grid.cell_volume())
    }
}

/// Combine a density and an action into the complex classical state
/// `φ = √ρ · exp(i S / ħ)`.
pub fn assemble_classical_state(
    rho: &GridField,
    action: &GridField,
    hbar: f64,
) -> Result<GridField, FieldError> {
    if hbar <= 0.0 {
        return Err(FieldError::NonPositiveHbar(hbar));
    }
    if rho.grid != action.grid {
        return Err(FieldError::GridMismatch);
    }
    if rho.kind != FieldKind::Density {
        return Err(FieldError::KindMismatch { expected: FieldKind::Density, found: rho.kind });
    }
    if action.kind != FieldKind::Action {
        return Err(FieldError::KindMismatch { expected: FieldKind::Action, found: action.kind });
    }
    let r = rho.values_real()?;
    let s = action.values_real()?;
    let values: Vec<Complex64> = r
        .iter()
        .zip(s)
        .map(|(rho_i, s_i)| Complex64::from_polar(rho_i.max(0.0).sqrt(), s_i / hbar))
        .collect();
    Ok(GridField {
        grid: rho.grid.clone(),
        kind: FieldKind::ClassicalState,
        values: FieldValues::Complex(values),
    })
}

/// Split a complex state back into `(|φ|², ħ·arg φ)`. The phase comes back
/// wrapped to `(−πħ, πħ]`.
pub fn decompose_classical_state(
    phi: &GridField,
    hbar: f64,
) -> Result<(GridField, GridField), FieldError> {
    if hbar <= 0.0 {
        return Err(FieldError::NonPositiveHbar(hbar));
    }
    let v = phi.values_complex()?;
    let rho: Vec<f64> = v.iter().map(|c| c.norm_sqr()).collect();
    let action: Vec<f64> = v.iter().map(|c| c.arg() * hbar).collect();
    Ok((
        GridField {
            grid: phi.grid.clone(),
            kind: FieldKind::Density,
            values: FieldValues::Real(rho),
        },
        GridField {
            grid: phi.grid.clone(),
            kind: FieldKind::Action,
            values: FieldValues::Real(action),
        },
    ))
}

#[cfg(test)]
mod tests;
