//! Hermitian eigensolves of phase-space operators.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{inner_product, OperatorError, OperatorPart, PhaseOperator};
use crate::field::{FieldKind, FieldValues, GridField, PhaseGrid};

/// Eigensolver configuration.
#[derive(Debug, Clone)]
pub struct EigenConfig {
    /// Largest matrix dimension handled by the dense solver; above it a
    /// Lanczos iteration with full reorthogonalization is used.
    pub dense_cap: usize,
    /// Krylov subspace size for the iterative path.
    pub max_krylov: usize,
    /// Relative eigenpair residual accepted as converged.
    pub residual_tol: f64,
    /// Eigenvalues closer than this are treated as one degenerate cluster.
    pub cluster_gap: f64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            dense_cap: 4096,
            max_krylov: 400,
            residual_tol: 1e-8,
            cluster_gap: 1e-9,
        }
    }
}

/// Eigenvalues and orthonormal eigenfields of a Hermitian grid operator.
pub struct Spectrum {
    grid: PhaseGrid,
    hbar: f64,
    eigenvalues: Vec<f64>,
    /// Orthonormal under the grid inner product, same order as eigenvalues.
    eigenvectors: Vec<Vec<Complex64>>,
    /// True when every eigenpair of the matrix is present.
    complete: bool,
    /// Worst relative eigenpair residual `‖L̂φ − aφ‖/‖φ‖`.
    pub max_residual: f64,
}

impl Spectrum {
    pub(crate) fn from_parts(
        grid: PhaseGrid,
        hbar: f64,
        eigenvalues: Vec<f64>,
        eigenvectors: Vec<Vec<Complex64>>,
        complete: bool,
        max_residual: f64,
    ) -> Self {
        Self { grid, hbar, eigenvalues, eigenvectors, complete, max_residual }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, k: usize) -> &[Complex64] {
        &self.eigenvectors[k]
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Eigenvector `k` as a grid field.
    pub fn eigenfield(&self, k: usize) -> GridField {
        GridField::new(
            self.grid.clone(),
            FieldKind::ClassicalState,
            FieldValues::Complex(self.eigenvectors[k].clone()),
        )
        .expect("eigenvector length matches its grid")
    }

    /// Worst Gram-matrix deviation `|⟨φ_j, φ_k⟩ − δ_jk|`.
    pub fn gram_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.len() {
            for k in j..self.len() {
                let g = inner_product(&self.grid, &self.eigenvectors[j], &self.eigenvectors[k]);
                let expect = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((g - expect).norm());
            }
        }
        worst
    }
}

/// Solve for the `k` eigenpairs of smallest `|a|` (all of them when
/// `k ≥ dim`). Eigenvalues come back ascending.
pub fn eigensolve(
    op: &PhaseOperator,
    k: usize,
    cfg: &EigenConfig,
) -> Result<Spectrum, OperatorError> {
    assert_eq!(
        op.part(),
        OperatorPart::SelfAdjoint,
        "eigensolve needs the Hermitian operator"
    );
    let dim = op.dim();
    let k = k.min(dim);
    let (mut pairs, complete) = if dim <= cfg.dense_cap {
        (dense_eigen(op, cfg)?, true)
    } else {
        (lanczos_eigen(op, k, cfg)?, false)
    };

    // keep the k smallest in magnitude, then restore ascending order
    pairs.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    pairs.truncate(k);
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let dv = op.grid().cell_volume();
    let scale = 1.0 / dv.sqrt();
    let mut eigenvalues = Vec::with_capacity(pairs.len());
    let mut eigenvectors = Vec::with_capacity(pairs.len());
    for (a, mut v) in pairs {
        v.iter_mut().for_each(|x| *x *= scale);
        eigenvalues.push(a);
        eigenvectors.push(v);
    }

    let mut spectrum = Spectrum {
        grid: op.grid().clone(),
        hbar: op.hbar(),
        eigenvalues,
        eigenvectors,
        complete: complete && k == dim,
        max_residual: 0.0,
    };
    reorthonormalize_clusters(&mut spectrum, cfg.cluster_gap);
    spectrum.max_residual = residual_check(op, &spectrum);
    if spectrum.max_residual > cfg.residual_tol {
        return Err(OperatorError::NonConvergence(format!(
            "worst eigenpair residual {:.3e} above tolerance {:.3e}",
            spectrum.max_residual, cfg.residual_tol
        )));
    }
    Ok(spectrum)
}

type Pair = (f64, Vec<Complex64>);

fn dense_eigen(op: &PhaseOperator, cfg: &EigenConfig) -> Result<Vec<Pair>, OperatorError> {
    let m = op.dense(cfg.dense_cap)?;
    let dim = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut pairs: Vec<Pair> = (0..dim)
        .map(|j| {
            let v: Vec<Complex64> = eig.eigenvectors.column(j).iter().copied().collect();
            (eig.eigenvalues[j], v)
        })
        .collect();
    refine_degenerate_pairs(&m, &mut pairs, cfg);
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs)
}

/// On strongly degenerate spectra the tridiagonal QL iteration can hand back
/// vectors that mix adjacent eigenvalue clusters (the basis stays
/// orthonormal, the pairing is wrong). A Rayleigh-Ritz rediagonalization on
/// the subspace spanned by the offending vectors restores exact pairs.
fn refine_degenerate_pairs(m: &DMatrix<Complex64>, pairs: &mut [Pair], cfg: &EigenConfig) {
    let dim = m.nrows();
    for _ in 0..3 {
        let mut bad: Vec<usize> = Vec::new();
        for (j, (lam, v)) in pairs.iter().enumerate() {
            let vv = nalgebra::DVector::from_column_slice(v);
            let r = (m * &vv) - &vv * Complex64::new(*lam, 0.0);
            if r.norm() > 0.1 * cfg.residual_tol {
                bad.push(j);
            }
        }
        if bad.is_empty() {
            return;
        }
        let b = bad.len();
        let mut v_bad = DMatrix::<Complex64>::zeros(dim, b);
        for (col, &j) in bad.iter().enumerate() {
            for (row, x) in pairs[j].1.iter().enumerate() {
                v_bad[(row, col)] = *x;
            }
        }
        let w = m * &v_bad;
        let mut h = v_bad.adjoint() * w;
        for i in 0..b {
            for j in (i + 1)..b {
                let avg = 0.5 * (h[(i, j)] + h[(j, i)].conj());
                h[(i, j)] = avg;
                h[(j, i)] = avg.conj();
            }
            h[(i, i)] = Complex64::new(h[(i, i)].re, 0.0);
        }
        let sub = h.symmetric_eigen();
        let rotated = v_bad * &sub.eigenvectors;
        for (col, &j) in bad.iter().enumerate() {
            pairs[j].0 = sub.eigenvalues[col];
            pairs[j].1 = rotated.column(col).iter().copied().collect();
        }
    }
}

/// Lanczos with full reorthogonalization. Converges to well-separated
/// extremal eigenpairs; interior pairs of large problems may be missed, which
/// the completeness flag of the returned spectrum reports.
fn lanczos_eigen(
    op: &PhaseOperator,
    k: usize,
    cfg: &EigenConfig,
) -> Result<Vec<Pair>, OperatorError> {
    let dim = op.dim();
    let m = cfg.max_krylov.min(dim).max(2 * k);

    // deterministic pseudo-random start vector
    let mut v0: Vec<Complex64> = (0..dim)
        .map(|i| {
            let x = ((i as f64 + 1.0) * 0.754877666).fract() - 0.5;
            let y = ((i as f64 + 1.0) * 0.569840291).fract() - 0.5;
            Complex64::new(x, y)
        })
        .collect();
    normalize(&mut v0);

    let mut basis: Vec<Vec<Complex64>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    for j in 0..m {
        let mut w = op.apply(&basis[j]);
        let alpha = dot(&basis[j], &w).re;
        alphas.push(alpha);
        for (x, v) in w.iter_mut().zip(&basis[j]) {
            *x -= alpha * v;
        }
        if j > 0 {
            let beta_prev = betas[j - 1];
            for (x, v) in w.iter_mut().zip(&basis[j - 1]) {
                *x -= beta_prev * v;
            }
        }
        // full reorthogonalization
        for b in &basis {
            let c = dot(b, &w);
            for (x, v) in w.iter_mut().zip(b) {
                *x -= c * v;
            }
        }
        let beta = norm(&w);
        if beta < 1e-13 || j + 1 == m {
            break;
        }
        betas.push(beta);
        w.iter_mut().for_each(|x| *x /= beta);
        basis.push(w);
    }

    // tridiagonal Ritz problem
    let steps = alphas.len();
    let mut t = DMatrix::<f64>::zeros(steps, steps);
    for i in 0..steps {
        t[(i, i)] = alphas[i];
        if i + 1 < steps {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut pairs: Vec<Pair> = Vec::new();
    for j in 0..steps {
        let mut v = vec![Complex64::ZERO; dim];
        for (i, b) in basis.iter().enumerate() {
            let w = eig.eigenvectors[(i, j)];
            for (x, y) in v.iter_mut().zip(b) {
                *x += w * y;
            }
        }
        normalize(&mut v);
        // converged Ritz pairs only
        let av = op.apply(&v);
        let lam = eig.eigenvalues[j];
        let res: f64 = av
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lam * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if res <= cfg.residual_tol {
            pairs.push((lam, v));
        }
    }
    if pairs.len() < k {
        return Err(OperatorError::NonConvergence(format!(
            "only {} of {} requested eigenpairs converged in {} Lanczos steps",
            pairs.len(),
            k,
            steps
        )));
    }
    Ok(pairs)
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(a: &mut [Complex64]) {
    let n = norm(a);
    if n > 0.0 {
        a.iter_mut().for_each(|x| *x /= n);
    }
}

/// Modified Gram-Schmidt within clusters of (numerically) equal eigenvalues.
fn reorthonormalize_clusters(spectrum: &mut Spectrum, gap: f64) {
    let dv = spectrum.grid.cell_volume();
    let n = spectrum.eigenvalues.len();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && spectrum.eigenvalues[end] - spectrum.eigenvalues[end - 1] <= gap {
            end += 1;
        }
        for j in start..end {
            let (head, tail) = spectrum.eigenvectors.split_at_mut(j);
            let v = &mut tail[0];
            for u in &head[start..] {
                let c = dot(u, v) * dv;
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= c * y;
                }
            }
            let nv = norm(v) * dv.sqrt();
            if nv > 1e-12 {
                v.iter_mut().for_each(|x| *x /= nv);
            }
        }
        start = end;
    }
}

fn residual_check(op: &PhaseOperator, spectrum: &Spectrum) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, v) in spectrum.eigenvalues.iter().zip(&spectrum.eigenvectors) {
        let av = op.apply(v);
        let num: f64 = av
            .iter()
            .zip(v)
            .map(|(x, y)| (x - a * y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let den = norm(v);
        worst = worst.max(num / den);
    }
    worst
}
