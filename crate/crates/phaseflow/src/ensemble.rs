//! Monte-Carlo phase-space ensembles.
//!
//! A [`SampleCloud`] is a uniformly weighted set of phase points drawn from a
//! [`DensitySpec`], realizing a probability density by sampling. Clouds are
//! pushed forward under the flow of a generator and expectation values are
//! taken either in Lagrangian form (observable evaluated on the flowed
//! points, average over initial labels) or Eulerian form (average over the
//! flowed cloud); on the same sample the two are the same sum and agree
//! bitwise.
//!
//! Reproducibility contract: sampling uses a ChaCha12 generator seeded from
//! the cloud seed and draws axis by axis, point by point, so a given
//! `(spec, n, seed)` triple always yields the same cloud. Flow advancement
//! parallelizes over points with order-preserving collection and all
//! reductions are deterministic pairwise sums, so downstream numbers are
//! reproducible as well.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{ObservableExpr, Params};
use crate::flow::{self, CanonicalSystem, FlowConfig, FlowError, PhaseState};
use crate::util::pairwise_sum;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("sample count must be positive")]
    EmptySample,
    #[error("axis {axis}: standard deviation must be positive, got {value}")]
    NonPositiveSpread { axis: usize, value: f64 },
    #[error("axis {axis}: empty interval [{lo}, {hi}]")]
    EmptyInterval { axis: usize, lo: f64, hi: f64 },
    #[error("density spec has {spec} axes but dimension {dim} needs {want}")]
    AxisCount { spec: usize, dim: usize, want: usize },
    #[error("cloud dimension {cloud} does not match observable dimension {expr}")]
    DimensionMismatch { cloud: usize, expr: usize },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Eval(#[from] crate::expr::EvalError),
    #[error("csv io: {0}")]
    Io(#[from] std::io::Error),
}

/// Marginal distribution along one phase-space axis.
#[derive(Debug, Clone, PartialEq)]
pub enum AxisDensity {
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// Product density over the axes `q1..qn, p1..pn`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpec {
    axes: Vec<AxisDensity>,
}

impl DensitySpec {
    /// One marginal per axis in `q1..qn, p1..pn` order (`2n` entries).
    pub fn product(axes: Vec<AxisDensity>) -> Result<Self, EnsembleError> {
        for (i, a) in axes.iter().enumerate() {
            match a {
                AxisDensity::Normal { std, .. } if *std <= 0.0 => {
                    return Err(EnsembleError::NonPositiveSpread { axis: i, value: *std })
                }
                AxisDensity::Uniform { lo, hi } if hi <= lo => {
                    return Err(EnsembleError::EmptyInterval { axis: i, lo: *lo, hi: *hi })
                }
                _ => {}
            }
        }
        Ok(Self { axes })
    }

    /// Isotropic Gaussian over all `2n` axes.
    pub fn gaussian_isotropic(dim: usize, mean: f64, std: f64) -> Result<Self, EnsembleError> {
        Self::product(vec![AxisDensity::Normal { mean, std }; 2 * dim])
    }

    /// Uniform box over all `2n` axes.
    pub fn uniform_box(dim: usize, lo: f64, hi: f64) -> Result<Self, EnsembleError> {
        Self::product(vec![AxisDensity::Uniform { lo, hi }; 2 * dim])
    }

    pub fn dim(&self) -> usize {
        self.axes.len() / 2
    }

    fn check(&self) -> Result<(), EnsembleError> {
        if self.axes.len() % 2 != 0 || self.axes.is_empty() {
            return Err(EnsembleError::AxisCount {
                spec: self.axes.len(),
                dim: self.axes.len() / 2,
                want: self.axes.len() / 2 * 2,
            });
        }
        Ok(())
    }
}

/// Uniformly weighted sample of phase points.
#[derive(Debug, Clone)]
pub struct SampleCloud {
    points: Vec<PhaseState>,
    seed: u64,
    source: String,
}

impl SampleCloud {
    pub fn points(&self) -> &[PhaseState] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Human-readable tag of the density the cloud was drawn from.
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Write the cloud as CSV with columns `q1..qn,p1..pn`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<(), EnsembleError> {
        let n = self.dim();
        let mut header = String::new();
        for k in 1..=n {
            header.push_str(&format!("q{k},"));
        }
        for k in 1..=n {
            header.push_str(&format!("p{k}"));
            if k < n {
                header.push(',');
            }
        }
        writeln!(w, "{header}")?;
        for pt in &self.points {
            let row: Vec<String> = pt
                .q()
                .iter()
                .chain(pt.p())
                .map(|x| x.to_string())
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Draw `n` i.i.d. points from `density`. Deterministic for a fixed seed.
pub fn sample(density: &DensitySpec, n: usize, seed: u64) -> Result<SampleCloud, EnsembleError> {
    if n == 0 {
        return Err(EnsembleError::EmptySample);
    }
    density.check()?;
    let dim = density.dim();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let mut z = Vec::with_capacity(2 * dim);
        for axis in &density.axes {
            let x = match axis {
                AxisDensity::Normal { mean, std } => {
                    // Box-Muller from two uniform draws
                    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    mean + std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                }
                AxisDensity::Uniform { lo, hi } => rng.gen_range(*lo..*hi),
            };
            z.push(x);
        }
        points.push(PhaseState::from_flat(&z)?);
    }
    Ok(SampleCloud {
        points,
        seed,
        source: format!("{density:?}"),
    })
}

/// Push every point of the cloud forward under the flow of `gen` to
/// parameter `alpha`.
pub fn advect(
    cloud: &SampleCloud,
    gen: &ObservableExpr,
    alpha: f64,
    cfg: &FlowConfig,
) -> Result<SampleCloud, EnsembleError> {
    if cloud.dim() != gen.dim() {
        return Err(EnsembleError::DimensionMismatch { cloud: cloud.dim(), expr: gen.dim() });
    }
    let system = CanonicalSystem::new(gen)?;
    let points: Result<Vec<PhaseState>, FlowError> = cloud
        .points
        .par_iter()
        .map(|pt| flow::advance_system(&system, pt, alpha, cfg))
        .collect();
    Ok(SampleCloud {
        points: points?,
        seed: cloud.seed,
        source: cloud.source.clone(),
    })
}

/// Lagrangian expectation: the observable is evaluated on the flowed points
/// while the (uniform) weights stay attached to the initial labels,
/// `Ā(α) = (1/N) Σ_i A(Φ_α(ω_i))`.
pub fn expectation_lagrangian(
    cloud: &SampleCloud,
    observable: &ObservableExpr,
    gen: &ObservableExpr,
    alpha: f64,
    cfg: &FlowConfig,
    params: &Params,
) -> Result<f64, EnsembleError> {
    let flowed = advect(cloud, gen, alpha, cfg)?;
    expectation_eulerian(&flowed, observable, params)
}

/// Eulerian expectation over an already-flowed cloud,
/// `Ā = (1/N) Σ_i A(ω_i)`. On the same sample this is the identical sum as
/// [`expectation_lagrangian`], so the two agree bitwise.
pub fn expectation_eulerian(
    cloud_flowed: &SampleCloud,
    observable: &ObservableExpr,
    params: &Params,
) -> Result<f64, EnsembleError> {
    if cloud_flowed.dim() != observable.dim() {
        return Err(EnsembleError::DimensionMismatch {
            cloud: cloud_flowed.dim(),
            expr: observable.dim(),
        });
    }
    let values: Result<Vec<f64>, crate::expr::EvalError> = cloud_flowed
        .points
        .iter()
        .map(|pt| observable.evaluate(pt, params))
        .collect();
    let values = values?;
    Ok(pairwise_sum(&values) / values.len() as f64)
}

/// Estimate the measure of the event `E0` at the initial time and of its
/// image `Φ_α(E0)` under the flowed density, on the same sample. Membership
/// in the image set is decided by pulling flowed points back through the
/// inverse flow, so up to round-trip integration error the two counts are
/// identical.
pub fn measure_invariance_check<F>(
    density: &DensitySpec,
    event: F,
    gen: &ObservableExpr,
    alpha: f64,
    n: usize,
    seed: u64,
    cfg: &FlowConfig,
) -> Result<(f64, f64), EnsembleError>
where
    F: Fn(&PhaseState) -> bool + Sync,
{
    let cloud = sample(density, n, seed)?;
    let initial = cloud.points.iter().filter(|pt| event(pt)).count();
    let flowed = advect(&cloud, gen, alpha, cfg)?;
    let system = CanonicalSystem::new(gen)?;
    let pulled: Result<Vec<PhaseState>, FlowError> = flowed
        .points
        .par_iter()
        .map(|pt| flow::advance_system(&system, pt, -alpha, cfg))
        .collect();
    let moved = pulled?.iter().filter(|pt| event(pt)).count();
    Ok((
        initial as f64 / n as f64,
        moved as f64 / n as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, dim: usize) -> ObservableExpr {
        ObservableExpr::parse(text, dim).unwrap()
    }

    #[test]
    fn gaussian_sample_mean_obeys_lln() {
        let density = DensitySpec::gaussian_isotropic(1, 0.0, 1.0).unwrap();
        let n = 10_000;
        let cloud = sample(&density, n, 11).unwrap();
        let mean = pairwise_sum(&cloud.points.iter().map(|pt| pt.q()[0]).collect::<Vec<_>>())
            / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn uniform_box_sample_mean() {
        let density = DensitySpec::uniform_box(1, 0.0, 1.0).unwrap();
        let cloud = sample(&density, 10_000, 12).unwrap();
        let mean = pairwise_sum(&cloud.points.iter().map(|pt| pt.q()[0]).collect::<Vec<_>>())
            / cloud.len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn empty_sample_is_rejected() {
        let density = DensitySpec::gaussian_isotropic(1, 0.0, 1.0).unwrap();
        assert!(matches!(sample(&density, 0, 1), Err(EnsembleError::EmptySample)));
    }

    #[test]
    fn invalid_spreads_are_rejected() {
        assert!(DensitySpec::gaussian_isotropic(1, 0.0, 0.0).is_err());
        assert!(DensitySpec::product(vec![AxisDensity::Uniform { lo: 1.0, hi: 1.0 }; 2]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let density = DensitySpec::gaussian_isotropic(2, 0.5, 2.0).unwrap();
        let a = sample(&density, 100, 7).unwrap();
        let b = sample(&density, 100, 7).unwrap();
        let c = sample(&density, 100, 8).unwrap();
        assert_eq!(a.points(), b.points());
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn symmetric_cloud_has_vanishing_first_moment_under_rotation() {
        let density = DensitySpec::gaussian_isotropic(3, 0.0, 1.0).unwrap();
        let cloud = sample(&density, 20_000, 21).unwrap();
        let l3 = parse("q1*p2 - q2*p1", 3);
        let a = parse("q1", 3);
        let cfg = FlowConfig::with_step(1e-2);
        let v = expectation_lagrangian(&cloud, &a, &l3, 0.8, &cfg, &Params::new()).unwrap();
        assert!(v.abs() < 4.0 / (cloud.len() as f64).sqrt(), "got {v}");
    }

    #[test]
    fn energy_expectation_is_constant_along_own_flow() {
        let density = DensitySpec::gaussian_isotropic(1, 0.3, 0.7).unwrap();
        let cloud = sample(&density, 2_000, 22).unwrap();
        let h = parse("(p1^2 + q1^2)/2", 1);
        let cfg = FlowConfig::with_step(1e-2);
        let params = Params::new();
        let e0 = expectation_eulerian(&cloud, &h, &params).unwrap();
        for alpha in [0.5, 1.5, 3.0] {
            let e = expectation_lagrangian(&cloud, &h, &h, alpha, &cfg, &params).unwrap();
            assert!((e - e0).abs() < 1e-8, "alpha={alpha}: {e} vs {e0}");
        }
    }

    #[test]
    fn single_point_cloud_is_a_pure_state() {
        let density = DensitySpec::product(vec![
            AxisDensity::Uniform { lo: 1.0 - 1e-12, hi: 1.0 + 1e-12 },
            AxisDensity::Uniform { lo: 0.5 - 1e-12, hi: 0.5 + 1e-12 },
        ])
        .unwrap();
        let cloud = sample(&density, 1, 3).unwrap();
        let gen = parse("p1", 1);
        let a = parse("q1", 1);
        let cfg = FlowConfig::default();
        let v = expectation_lagrangian(&cloud, &a, &gen, 2.0, &cfg, &Params::new()).unwrap();
        let expect = flow::advance(&gen, &cloud.points()[0], 2.0, &cfg).unwrap();
        assert_eq!(v, expect.q()[0]);
    }

    #[test]
    fn lagrangian_equals_eulerian_bitwise() {
        let density = DensitySpec::gaussian_isotropic(1, 0.0, 1.0).unwrap();
        let cloud = sample(&density, 500, 17).unwrap();
        let gen = parse("(p1^2 + q1^2)/2", 1);
        let a = parse("q1^2 - p1", 1);
        let cfg = FlowConfig::with_step(1e-2);
        let params = Params::new();
        let lag = expectation_lagrangian(&cloud, &a, &gen, 1.1, &cfg, &params).unwrap();
        let flowed = advect(&cloud, &gen, 1.1, &cfg).unwrap();
        let eul = expectation_eulerian(&flowed, &a, &params).unwrap();
        assert_eq!(lag, eul);
    }

    #[test]
    fn unit_observable_normalizes_exactly() {
        let density = DensitySpec::uniform_box(1, -1.0, 1.0).unwrap();
        let cloud = sample(&density, 777, 5).unwrap();
        let one = parse("1", 1);
        assert_eq!(expectation_eulerian(&cloud, &one, &Params::new()).unwrap(), 1.0);
    }

    #[test]
    fn indicator_expectation_is_a_measure() {
        // P(q1 > 0) for a symmetric density, via the characteristic function
        let density = DensitySpec::gaussian_isotropic(1, 0.0, 1.0).unwrap();
        let cloud = sample(&density, 10_000, 23).unwrap();
        let frac = cloud.points().iter().filter(|pt| pt.q()[0] > 0.0).count() as f64
            / cloud.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "got {frac}");
    }

    #[test]
    fn translated_halfplane_measure_is_invariant() {
        let density = DensitySpec::gaussian_isotropic(1, 0.0, 1.0).unwrap();
        let gen = parse("p1", 1);
        let cfg = FlowConfig::default();
        let (before, after) = measure_invariance_check(
            &density,
            |pt| pt.q()[0] > 0.0,
            &gen,
            1.0,
            10_000,
            31,
            &cfg,
        )
        .unwrap();
        assert!((before - 0.5).abs() < 0.02);
        assert_eq!(before, after, "pushforward must preserve the count");
    }

    #[test]
    fn total_and_empty_events_are_exact() {
        let density = DensitySpec::gaussian_isotropic(1, 0.0, 1.0).unwrap();
        let gen = parse("(p1^2 + q1^2)/2", 1);
        let cfg = FlowConfig::with_step(1e-2);
        let (b, a) =
            measure_invariance_check(&density, |_| true, &gen, 0.7, 500, 1, &cfg).unwrap();
        assert_eq!((b, a), (1.0, 1.0));
        let (b, a) =
            measure_invariance_check(&density, |_| false, &gen, 0.7, 500, 1, &cfg).unwrap();
        assert_eq!((b, a), (0.0, 0.0));
    }

    #[test]
    fn csv_export_round_trips_columns() {
        let density = DensitySpec::uniform_box(2, -1.0, 1.0).unwrap();
        let cloud = sample(&density, 3, 9).unwrap();
        let mut buf = Vec::new();
        cloud.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "q1,q2,p1,p2");
        assert_eq!(lines.count(), 3);
    }
}
