use proptest::prelude::*;

use super::*;
use crate::expr::Params;

fn parse(text: &str, dim: usize) -> ObservableExpr {
    ObservableExpr::parse(text, dim).unwrap()
}

fn square_grid(extent: f64, count: usize) -> PhaseGrid {
    PhaseGrid::square(-extent, extent, count, Boundary::Periodic).unwrap()
}

fn gaussian_density(grid: &PhaseGrid, center: &[f64], sigma: f64) -> GridField {
    let c = center.to_vec();
    GridField::density_from_fn(grid.clone(), move |q, p| {
        let mut r2 = 0.0;
        for (i, x) in q.iter().chain(p).enumerate() {
            r2 += (x - c[i]) * (x - c[i]);
        }
        (-r2 / (2.0 * sigma * sigma)).exp()
    })
    .unwrap()
}

#[test]
fn grid_validation_rejects_bad_axes() {
    assert!(matches!(
        PhaseGrid::new(vec![Axis::new(0.0, 1.0, 3), Axis::new(0.0, 1.0, 8)], Boundary::Periodic),
        Err(FieldError::TooFewPoints { .. })
    ));
    assert!(matches!(
        PhaseGrid::new(vec![Axis::new(0.0, 1.0, 8)], Boundary::Periodic),
        Err(FieldError::OddAxisCount(1))
    ));
    assert!(matches!(
        PhaseGrid::new(vec![Axis::new(1.0, 0.0, 8), Axis::new(0.0, 1.0, 8)], Boundary::Periodic),
        Err(FieldError::InvalidBounds { .. })
    ));
    assert!(matches!(
        PhaseGrid::with_cap(
            vec![Axis::new(0.0, 1.0, 64), Axis::new(0.0, 1.0, 64)],
            Boundary::Periodic,
            1000
        ),
        Err(FieldError::TooManyPoints { .. })
    ));
}

#[test]
fn indexing_round_trips() {
    let grid = PhaseGrid::new(
        vec![
            Axis::new(-1.0, 1.0, 4),
            Axis::new(0.0, 2.0, 5),
            Axis::new(-3.0, 3.0, 6),
            Axis::new(-2.0, 2.0, 7),
        ],
        Boundary::Periodic,
    )
    .unwrap();
    for idx in [0, 1, 17, grid.len() - 1] {
        let multi = grid.multi_index(idx);
        assert_eq!(grid.flat_index(&multi), idx);
    }
    assert_eq!(grid.len(), 4 * 5 * 6 * 7);
    assert_eq!(grid.stride(3), 1);
    assert_eq!(grid.stride(2), 7);
}

#[test]
fn density_normalizes_to_unit_mass() {
    let grid = square_grid(8.0, 32);
    let rho = gaussian_density(&grid, &[0.0, 0.0], 1.5);
    assert!((rho.integral().unwrap() - 1.0).abs() < 1e-12);
    assert!(rho.values_real().unwrap().iter().all(|v| *v >= 0.0));
}

#[test]
fn negative_density_is_rejected() {
    let grid = square_grid(4.0, 8);
    let raw = GridField::sample_real(grid, FieldKind::Density, |q, _| q[0]);
    assert!(matches!(
        raw.into_normalized_density(),
        Err(FieldError::NegativeDensity { .. })
    ));
}

#[test]
fn transport_with_zero_alpha_is_identity() {
    let grid = square_grid(6.0, 24);
    let rho = gaussian_density(&grid, &[1.0, 0.0], 1.0);
    let gen = parse("(p1^2 + q1^2)/2", 1);
    let (out, report) = transport_density(&rho, &gen, 0.0, &TransportConfig::default()).unwrap();
    assert!(out.linf_diff(&rho).unwrap() < 1e-12);
    assert!(report.mass_drift.abs() < 1e-12);
}

#[test]
fn rotation_invariant_density_is_stationary_under_harmonic_flow() {
    // ρ0 = f(q² + p²) is built from the flow invariant, so transport returns
    // it up to interpolation error
    let grid = square_grid(8.0, 64);
    let rho = gaussian_density(&grid, &[0.0, 0.0], 1.2);
    let gen = parse("(p1^2 + q1^2)/2", 1);
    let (out, report) = transport_density(&rho, &gen, 1.0, &TransportConfig::default()).unwrap();
    let err = out.linf_diff(&rho).unwrap();
    assert!(err < 1e-4, "L∞ drift {err}");
    assert!(report.mass_drift.abs() < 1e-4, "mass drift {}", report.mass_drift);
}

#[test]
fn offset_gaussian_rotates_with_the_flow() {
    let grid = square_grid(8.0, 48);
    let rho = gaussian_density(&grid, &[1.0, 0.5], 1.0);
    let gen = parse("(p1^2 + q1^2)/2", 1);
    let alpha = std::f64::consts::PI;
    let (out, _) = transport_density(&rho, &gen, alpha, &TransportConfig::default()).unwrap();
    // after half a period the center is negated
    let expect = gaussian_density(&grid, &[-1.0, -0.5], 1.0);
    let err = out.linf_diff(&expect).unwrap();
    assert!(err < 1e-3, "L∞ {err}");
}

#[test]
fn planar_angular_momentum_preserves_invariant_density() {
    // n = 2: ρ0 built from q1²+q2² and p1²+p2², both invariants of the flow
    let grid = PhaseGrid::new(
        vec![Axis::new(-4.0, 4.0, 12); 4],
        Boundary::Periodic,
    )
    .unwrap();
    let rho = GridField::density_from_fn(grid, |q, p| {
        let rq = q[0] * q[0] + q[1] * q[1];
        let rp = p[0] * p[0] + p[1] * p[1];
        (-(rq + rp) / 2.0).exp()
    })
    .unwrap();
    let gen = parse("q1*p2 - q2*p1", 2);
    let (out, _) = transport_density(&rho, &gen, 0.7, &TransportConfig::default()).unwrap();
    let err = out.linf_diff(&rho).unwrap();
    assert!(err < 5e-3, "L∞ drift {err}");
}

#[test]
fn transport_composes_along_the_flow_parameter() {
    let grid = square_grid(8.0, 48);
    let rho = gaussian_density(&grid, &[1.2, 0.0], 1.0);
    let gen = parse("(p1^2 + q1^2)/2", 1);
    let cfg = TransportConfig::default();
    let (one, _) = transport_density(&rho, &gen, 0.4, &cfg).unwrap();
    let (two, _) = transport_density(&one, &gen, 0.3, &cfg).unwrap();
    let (direct, _) = transport_density(&rho, &gen, 0.7, &cfg).unwrap();
    let err = two.linf_diff(&direct).unwrap();
    assert!(err < 1e-3, "composition error {err}");
}

#[test]
fn free_particle_action_grows_quadratically_in_momentum() {
    // A = p²/2, S0 = 0: S(q, p, t) = p²t/2
    let grid = square_grid(6.0, 24);
    let s0 = GridField::zeros(grid.clone(), FieldKind::Action);
    let gen = parse("p1^2/2", 1);
    let t = 0.8;
    let (s, _) = transport_action(&s0, &gen, t, &TransportConfig::default()).unwrap();
    let expect = GridField::sample_real(grid, FieldKind::Action, |_, p| 0.5 * p[0] * p[0] * t);
    let err = s.linf_diff(&expect).unwrap();
    assert!(err < 1e-8, "action error {err}");
}

#[test]
fn coordinate_generator_action_is_linear() {
    // A = q1: L̄ = −q1, q1 constant along the flow, so S = −q1·α
    let grid = square_grid(6.0, 24);
    let s0 = GridField::zeros(grid.clone(), FieldKind::Action);
    let gen = parse("q1", 1);
    let alpha = 1.3;
    let (s, _) = transport_action(&s0, &gen, alpha, &TransportConfig::default()).unwrap();
    let expect = GridField::sample_real(grid, FieldKind::Action, |q, _| -q[0] * alpha);
    let err = s.linf_diff(&expect).unwrap();
    assert!(err < 1e-9, "action error {err}");
}

#[test]
fn action_transport_at_zero_alpha_is_identity() {
    let grid = square_grid(6.0, 16);
    let s0 = GridField::sample_real(grid, FieldKind::Action, |q, p| q[0] * p[0]);
    let gen = parse("(p1^2 + q1^2)/2", 1);
    let (s, _) = transport_action(&s0, &gen, 0.0, &TransportConfig::default()).unwrap();
    assert!(s.linf_diff(&s0).unwrap() < 1e-12);
}

#[test]
fn classical_state_assembly_and_decomposition() {
    let grid = square_grid(6.0, 24);
    let rho = gaussian_density(&grid, &[0.0, 0.0], 1.2);
    let s = GridField::sample_real(grid.clone(), FieldKind::Action, |q, p| 0.3 * q[0] - p[0]);
    let hbar = 0.7;
    let phi = assemble_classical_state(&rho, &s, hbar).unwrap();
    assert_eq!(phi.kind(), FieldKind::ClassicalState);
    // |φ|² = ρ to machine precision
    let (rho_back, s_back) = decompose_classical_state(&phi, hbar).unwrap();
    assert!(rho_back.linf_diff(&rho).unwrap() < 1e-14);
    // phase recovered modulo 2πħ
    let tau = std::f64::consts::TAU * hbar;
    let s_raw = s.values_real().unwrap();
    let s_rec = s_back.values_real().unwrap();
    for (a, b) in s_raw.iter().zip(s_rec) {
        let d = (a - b).rem_euclid(tau);
        let d = d.min(tau - d);
        assert!(d < 1e-12, "phase mismatch {a} vs {b}");
    }
    // norm: ∫|φ|² = 1
    assert!((phi.norm_squared() - 1.0).abs() < 1e-12);
}

#[test]
fn zero_action_gives_a_real_state() {
    let grid = square_grid(5.0, 16);
    let rho = gaussian_density(&grid, &[0.0, 0.0], 1.0);
    let s = GridField::zeros(grid, FieldKind::Action);
    let phi = assemble_classical_state(&rho, &s, 1.0).unwrap();
    for (c, r) in phi.values_complex().unwrap().iter().zip(rho.values_real().unwrap()) {
        assert_eq!(c.im, 0.0);
        assert!((c.re - r.sqrt()).abs() < 1e-15);
        assert!(c.re >= 0.0);
    }
}

#[test]
fn assembly_rejects_mismatched_inputs() {
    let grid = square_grid(5.0, 16);
    let other = square_grid(5.0, 20);
    let rho = gaussian_density(&grid, &[0.0, 0.0], 1.0);
    let s = GridField::zeros(other, FieldKind::Action);
    assert!(matches!(
        assemble_classical_state(&rho, &s, 1.0),
        Err(FieldError::GridMismatch)
    ));
    let s_ok = GridField::zeros(grid, FieldKind::Action);
    assert!(matches!(
        assemble_classical_state(&rho, &s_ok, 0.0),
        Err(FieldError::NonPositiveHbar(_))
    ));
}

#[test]
fn stationary_density_from_momentum_invariant() {
    let grid = square_grid(6.0, 32);
    let gen = parse("p1", 1);
    let invariants = [parse("p1", 1)];
    // profile over the invariant slot: Gaussian in p1
    let profile = parse("exp(-q1^2/2)", 1);
    let (rho, residual) =
        stationary_density(&gen, &grid, &invariants, &profile, &Params::new()).unwrap();
    assert!((rho.integral().unwrap() - 1.0).abs() < 1e-12);
    assert!(residual < 1e-12, "residual {residual}");
}

#[test]
fn stationary_density_rejects_non_invariant() {
    let grid = square_grid(6.0, 16);
    let gen = parse("p1", 1);
    let invariants = [parse("q1", 1)]; // {q1, p1} = 1 ≠ 0
    let profile = parse("exp(-q1^2)", 1);
    let err = stationary_density(&gen, &grid, &invariants, &profile, &Params::new()).unwrap_err();
    assert!(matches!(err, FieldError::InvariantNotConserved { index: 0 }));
}

#[test]
fn stationary_density_for_planar_rotation() {
    let grid = PhaseGrid::new(vec![Axis::new(-4.0, 4.0, 12); 4], Boundary::Periodic).unwrap();
    let gen = parse("q1*p2 - q2*p1", 2);
    let invariants = [parse("q1^2 + q2^2", 2), parse("p1^2 + p2^2", 2)];
    let profile = parse("exp(-(q1 + q2)/2)", 2);
    let (rho, residual) =
        stationary_density(&gen, &grid, &invariants, &profile, &Params::new()).unwrap();
    assert!((rho.integral().unwrap() - 1.0).abs() < 1e-12);
    // central differences of a smooth invariant profile: residual at grid
    // truncation level
    assert!(residual < 5e-3, "residual {residual}");
}

#[test]
fn stationary_action_for_momentum_generator() {
    let grid = square_grid(6.0, 32);
    let gen = parse("p1", 1);
    let a = 0.75;
    let (s, report) = stationary_action(&gen, &grid, a).unwrap();
    let expect = GridField::sample_real(grid, FieldKind::Action, |q, _| a * q[0]);
    assert!(s.linf_diff(&expect).unwrap() < 1e-12);
    // the equation for this family is linear; central differences are exact
    assert!(report.max_residual < 1e-10, "residual {}", report.max_residual);
}

#[test]
fn stationary_action_for_coordinate_generator() {
    let grid = square_grid(6.0, 32);
    let gen = parse("q1", 1);
    let a = -0.4;
    let (s, report) = stationary_action(&gen, &grid, a).unwrap();
    let expect = GridField::sample_real(grid, FieldKind::Action, |q, p| (q[0] - a) * p[0]);
    assert!(s.linf_diff(&expect).unwrap() < 1e-12);
    assert!(report.max_residual < 1e-10, "residual {}", report.max_residual);
}

#[test]
fn stationary_action_for_harmonic_generator() {
    let grid = square_grid(6.0, 48);
    let gen = parse("(q1^2 + p1^2)/2", 1);
    let (_, report) = stationary_action(&gen, &grid, 1.0).unwrap();
    assert!(
        report.max_residual < 0.05,
        "residual {}",
        report.max_residual
    );
    assert!(report.masked_fraction < 0.25, "masked {}", report.masked_fraction);
}

#[test]
fn stationary_action_zero_parameter_zero_lagrangian() {
    // a = 0 and L̄ = 0: S̄ ≡ 0 solves the equation with zero residual
    let grid = square_grid(6.0, 16);
    let gen = parse("p1", 1);
    let (s, report) = stationary_action(&gen, &grid, 0.0).unwrap();
    assert!(s.values_real().unwrap().iter().all(|v| *v == 0.0));
    assert!(report.max_residual < 1e-14);
}

#[test]
fn stationary_action_rejects_unsupported_generators() {
    let grid = square_grid(6.0, 16);
    let gen = parse("q1^3 + p1^2", 1);
    assert!(matches!(
        stationary_action(&gen, &grid, 1.0),
        Err(FieldError::UnsupportedGenerator)
    ));
}

#[test]
fn generator_family_classification() {
    assert_eq!(
        classify_generator(&parse("p2", 3)),
        Some(StationaryFamily::Momentum(2))
    );
    assert_eq!(
        classify_generator(&parse("q1", 1)),
        Some(StationaryFamily::Coordinate(1))
    );
    assert_eq!(
        classify_generator(&parse("0.5*q1^2 + 0.5*p1^2", 1)),
        Some(StationaryFamily::Harmonic(1))
    );
    assert_eq!(
        classify_generator(&parse("q1*p2 - q2*p1", 2)),
        Some(StationaryFamily::AngularMomentum)
    );
    assert_eq!(classify_generator(&parse("q1*p1", 1)), None);
}

#[test]
fn binary_round_trip_is_exact() {
    let grid = square_grid(5.0, 16);
    let rho = gaussian_density(&grid, &[0.4, -0.2], 1.1);
    let mut buf = Vec::new();
    rho.write_binary(&mut buf).unwrap();
    let back = GridField::read_binary(buf.as_slice()).unwrap();
    assert_eq!(back, rho);

    let s = GridField::sample_real(grid.clone(), FieldKind::Action, |q, p| q[0] - p[0]);
    let phi = assemble_classical_state(&rho, &s, 1.0).unwrap();
    let mut buf = Vec::new();
    phi.write_binary(&mut buf).unwrap();
    let back = GridField::read_binary(buf.as_slice()).unwrap();
    assert_eq!(back, phi);
}

#[test]
fn binary_reader_rejects_garbage() {
    assert!(matches!(
        GridField::read_binary(&b"NOPE"[..]),
        Err(FieldIoError::Io(_) | FieldIoError::BadMagic)
    ));
    let mut buf = Vec::new();
    gaussian_density(&square_grid(4.0, 8), &[0.0, 0.0], 1.0)
        .write_binary(&mut buf)
        .unwrap();
    buf[4] = 99; // version
    assert!(matches!(
        GridField::read_binary(buf.as_slice()),
        Err(FieldIoError::BadVersion(_))
    ));
}

#[test]
fn csv_export_has_coordinates_and_values() {
    let grid = square_grid(1.0, 4);
    let rho = gaussian_density(&grid, &[0.0, 0.0], 1.0);
    let mut buf = Vec::new();
    rho.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("q1,p1,value\n"));
    assert_eq!(text.lines().count(), 1 + 16);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn binary_round_trip_random_fields(
        seed in 0u64..1000,
        count in 4usize..10,
        complex in proptest::bool::ANY,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let grid = PhaseGrid::new(
            vec![Axis::new(-2.0, 2.0, count), Axis::new(-1.0, 3.0, count + 1)],
            if seed % 2 == 0 { Boundary::Periodic } else { Boundary::Truncated },
        ).unwrap();
        let n = grid.len();
        let values = if complex {
            FieldValues::Complex(
                (0..n).map(|_| num_complex::Complex64::new(rng.gen(), rng.gen())).collect(),
            )
        } else {
            FieldValues::Real((0..n).map(|_| rng.gen()).collect())
        };
        let field = GridField::new(grid, FieldKind::Action, values).unwrap();
        let mut buf = Vec::new();
        field.write_binary(&mut buf).unwrap();
        let back = GridField::read_binary(buf.as_slice()).unwrap();
        prop_assert_eq!(back, field);
    }
}
