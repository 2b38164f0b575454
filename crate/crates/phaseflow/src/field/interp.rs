//! Tensor-product cubic interpolation on the grid.

use super::{Boundary, GridField};

/// Result of an off-grid field evaluation.
#[derive(Debug, Clone, Copy)]
pub struct InterpValue {
    pub value: f64,
    /// True when the query point left a truncated grid (value is then zero).
    pub out_of_domain: bool,
}

// Catmull-Rom weights at fractional offset t in [0, 1).
fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ]
}

impl GridField {
    /// Cubic interpolation of a real field at the phase point `z`
    /// (`[q1..qn, p1..pn]`). With `nonnegative` the result is floored at
    /// zero, which is how transported densities stay densities.
    pub fn interpolate(&self, z: &[f64], nonnegative: bool) -> InterpValue {
        let grid = &self.grid;
        let values = match self.values_real() {
            Ok(v) => v,
            Err(_) => unreachable!("interpolation is only called on real fields"),
        };
        let d = grid.axes().len();
        debug_assert_eq!(z.len(), d);

        // per-axis stencil indices and weights
        let mut stencil: Vec<[usize; 4]> = Vec::with_capacity(d);
        let mut weights: Vec<[f64; 4]> = Vec::with_capacity(d);
        for (dim, axis) in grid.axes().iter().enumerate() {
            let u = (z[dim] - axis.min) / axis.spacing();
            let base = u.floor();
            let t = u - base;
            let base = base as i64;
            let n = axis.count as i64;
            let mut idx = [0usize; 4];
            match grid.boundary() {
                Boundary::Periodic => {
                    for (k, slot) in idx.iter_mut().enumerate() {
                        let j = base - 1 + k as i64;
                        *slot = j.rem_euclid(n) as usize;
                    }
                }
                Boundary::Truncated => {
                    if u < 0.0 || u > (axis.count - 1) as f64 {
                        return InterpValue { value: 0.0, out_of_domain: true };
                    }
                    for (k, slot) in idx.iter_mut().enumerate() {
                        let j = (base - 1 + k as i64).clamp(0, n - 1);
                        *slot = j as usize;
                    }
                }
            }
            stencil.push(idx);
            weights.push(cubic_weights(t));
        }

        let mut value = gather(grid, values, &stencil, &weights, 0, 0);
        if nonnegative && value < 0.0 {
            value = 0.0;
        }
        InterpValue { value, out_of_domain: false }
    }
}

fn gather(
    grid: &super::PhaseGrid,
    values: &[f64],
    stencil: &[[usize; 4]],
    weights: &[[f64; 4]],
    dim: usize,
    offset: usize,
) -> f64 {
    let stride = grid.stride(dim);
    let last = dim + 1 == stencil.len();
    let mut acc = 0.0;
    for k in 0..4 {
        let w = weights[dim][k];
        if w == 0.0 {
            continue;
        }
        let off = offset + stencil[dim][k] * stride;
        let sub = if last {
            values[off]
        } else {
            gather(grid, values, stencil, weights, dim + 1, off)
        };
        acc += w * sub;
    }
    acc
}
