use bosemix::grid::{inner_product, l2_norm, laplacian_apply, normalize, Grid, GridSpec, SpectralField};
use bosemix::meanfield::*;
use bosemix::models;
use bosemix::Error;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PI: f64 = std::f64::consts::PI;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn zero_mf(grid: &Grid) -> ModelSpec {
    let z = SpectralField::zeros(grid);
    ModelSpec::mean_field([z.clone(), z.clone()], [z.clone(), z.clone(), z], 0.5).unwrap()
}

fn box_constant(grid: &Grid) -> SpectralField {
    normalize(&SpectralField::constant(grid, c(1.0))).unwrap()
}

fn gaussian(grid: &Grid, s: f64) -> SpectralField {
    let d = grid.dim() as i32;
    SpectralField::from_real_fn(grid, |x| {
        let r2: f64 = x.iter().map(|a| a * a).sum();
        (PI * s * s).powf(-(d as f64) / 4.0) * (-r2 / (2.0 * s * s)).exp()
    })
}

fn random_field(grid: &Grid, rng: &mut ChaCha8Rng) -> SpectralField {
    let v = (0..grid.len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    SpectralField::new(grid, v).unwrap()
}

fn gp_spec(_grid: &Grid, traps: [SpectralField; 2], a: [f64; 3], c1: f64) -> ModelSpec {
    ModelSpec::gross_pitaevskii(
        traps,
        ScatteringLengths {
            a1: a[0],
            a2: a[1],
            a12: a[2],
            provenance: Provenance::Supplied,
        },
        c1,
    )
    .unwrap()
    .with_assumption_checks(false)
}

#[test]
fn gp_energy_vanishes_without_traps_and_interactions() {
    let grid = Grid::new(3, 8, 3.0).unwrap();
    let z = SpectralField::zeros(&grid);
    let spec = gp_spec(&grid, [z.clone(), z], [0.0; 3], 0.4);
    let u = box_constant(&grid);
    let pair = OrbitalPair::new(u.clone(), u).unwrap();
    assert!(gp_energy(&pair, &spec).unwrap().abs() < 1e-14);
}

#[test]
fn gp_energy_of_box_constants() {
    let grid = Grid::new(3, 8, 3.0).unwrap();
    let z = SpectralField::zeros(&grid);
    let (a1, a2, a12, c1) = (0.3, 0.7, 0.2, 0.35);
    let c2 = 1.0 - c1;
    let spec = gp_spec(&grid, [z.clone(), z], [a1, a2, a12], c1);
    let u = box_constant(&grid);
    let pair = OrbitalPair::new(u.clone(), u).unwrap();
    let expected = (4.0 * PI * a1 * c1 * c1 + 4.0 * PI * a2 * c2 * c2 + 8.0 * PI * a12 * c1 * c2) / grid.volume();
    assert!((gp_energy(&pair, &spec).unwrap() - expected).abs() < 1e-13);
}

#[test]
fn gp_energy_of_gaussians_matches_closed_form_terms() {
    // Normalised Gaussians of widths s: kinetic d/(2s²), ⟨x²⟩ = d s²/2,
    // ∫|u|⁴ = (2πs²)^{-d/2}, ∫|u|²|v|² = (π(s₁²+s₂²))^{-d/2}.
    for (dim, n, l) in [(1usize, 128usize, 20.0), (3, 32, 14.0)] {
        let grid = Grid::new(dim, n, l).unwrap();
        let d = dim as f64;
        let (s1, s2) = (0.9, 1.2);
        let (k1, k2) = (1.0, 0.6);
        let (a1, a2, a12, c1) = (0.05, 0.08, 0.03, 0.45);
        let c2 = 1.0 - c1;
        let traps = [
            TrapSpec::Harmonic { coefficient: k1, centre: [0.0; 3] }.sample(&grid),
            TrapSpec::Harmonic { coefficient: k2, centre: [0.0; 3] }.sample(&grid),
        ];
        let spec = gp_spec(&grid, traps, [a1, a2, a12], c1);
        let pair = OrbitalPair::new(gaussian(&grid, s1), gaussian(&grid, s2)).unwrap();
        let kinetic = |s: f64| d / (2.0 * s * s);
        let trap = |k: f64, s: f64| k * d * s * s / 2.0;
        let quartic = |s: f64| (2.0 * PI * s * s).powf(-d / 2.0);
        let cross = (PI * (s1 * s1 + s2 * s2)).powf(-d / 2.0);
        let expected = c1 * kinetic(s1)
            + c1 * trap(k1, s1)
            + 4.0 * PI * a1 * c1 * c1 * quartic(s1)
            + c2 * kinetic(s2)
            + c2 * trap(k2, s2)
            + 4.0 * PI * a2 * c2 * c2 * quartic(s2)
            + 8.0 * PI * a12 * c1 * c2 * cross;
        let e = gp_energy(&pair, &spec).unwrap();
        assert!((e - expected).abs() < 1e-8, "dim {dim}: {e} vs {expected}");
    }
}

#[test]
fn hartree_without_interactions_is_one_body() {
    let grid = Grid::new(1, 64, 12.0).unwrap();
    let trap = TrapSpec::Harmonic { coefficient: 1.3, centre: [0.0; 3] }.sample(&grid);
    let z = SpectralField::zeros(&grid);
    let spec = ModelSpec::mean_field([trap.clone(), z.clone()], [z.clone(), z.clone(), z], 0.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pair = OrbitalPair::normalized(random_field(&grid, &mut rng), random_field(&grid, &mut rng)).unwrap();
    let one_body = |f: &SpectralField, t: &SpectralField| {
        inner_product(f, &laplacian_apply(f)).re + inner_product(&f.density(), t).re
    };
    let expected = 0.3 * one_body(&pair.u, &trap) + 0.7 * one_body(&pair.v, &SpectralField::zeros(&grid));
    assert!((hartree_energy(&pair, &spec).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn hartree_cross_term_of_box_constants() {
    let grid = Grid::new(3, 8, 4.0).unwrap();
    let z = SpectralField::zeros(&grid);
    let v12 = InteractionSpec::Gaussian { strength: 1.7, width: 0.6 }.sample(&grid);
    let c1 = 0.4;
    let spec = ModelSpec::mean_field([z.clone(), z.clone()], [z.clone(), z, v12.clone()], c1).unwrap();
    let u = box_constant(&grid);
    let pair = OrbitalPair::new(u.clone(), u).unwrap();
    let expected = c1 * (1.0 - c1) * v12.integral().re / grid.volume();
    assert!((hartree_energy(&pair, &spec).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn hartree_matches_direct_double_sum() {
    let grid = Grid::new(1, 16, 5.0).unwrap();
    let n = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let vs: Vec<SpectralField> = (0..3)
        .map(|_| {
            // Even on the lattice: V(x_j) = V(-x_j) about index n/2.
            let half: Vec<f64> = (0..=n / 2).map(|_| rng.random_range(0.0..2.0)).collect();
            let vals: Vec<f64> = (0..n).map(|j| half[(j as i64 - n as i64 / 2).unsigned_abs() as usize]).collect();
            SpectralField::from_real(&grid, &vals).unwrap()
        })
        .collect();
    let z = SpectralField::zeros(&grid);
    let c1 = 0.6;
    let c2 = 1.0 - c1;
    let spec = ModelSpec::mean_field([z.clone(), z], [vs[0].clone(), vs[1].clone(), vs[2].clone()], c1).unwrap();
    let pair = OrbitalPair::normalized(random_field(&grid, &mut rng), random_field(&grid, &mut rng)).unwrap();
    let h = grid.spacing();
    let ru = pair.u.density().real_parts();
    let rv = pair.v.density().real_parts();
    // V(x_i - x_j) sits at index i - j + n/2 (mod n).
    let double = |v: &SpectralField, a: &[f64], b: &[f64]| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += v.values()[(i + n + n / 2 - j) % n].re * a[i] * b[j];
            }
        }
        s * h * h
    };
    let kinetic = |f: &SpectralField| inner_product(f, &laplacian_apply(f)).re;
    let expected = c1 * kinetic(&pair.u)
        + c2 * kinetic(&pair.v)
        + 0.5 * c1 * c1 * double(&vs[0], &ru, &ru)
        + 0.5 * c2 * c2 * double(&vs[1], &rv, &rv)
        + c1 * c2 * double(&vs[2], &ru, &rv);
    assert!((hartree_energy(&pair, &spec).unwrap() - expected).abs() < 1e-10);
}

#[test]
fn energy_rejects_bad_inputs() {
    let grid = Grid::new(1, 16, 5.0).unwrap();
    let spec = zero_mf(&grid);
    let u = box_constant(&grid);
    let pair = OrbitalPair::new(u.scaled(c(1.1)), u.clone()).unwrap();
    assert!(matches!(hartree_energy(&pair, &spec), Err(Error::NotNormalized { .. })));
    let pair = OrbitalPair::new(u.clone(), u).unwrap();
    assert!(matches!(gp_energy(&pair, &spec), Err(Error::WrongRegime(_))));
    let z = SpectralField::zeros(&grid);
    for c1 in [0.0, 1.0, -0.2] {
        assert!(ModelSpec::mean_field([z.clone(), z.clone()], [z.clone(), z.clone(), z.clone()], c1).is_err());
    }
}

#[test]
fn phase_invariance_and_scale_covariance() {
    let spec = models::random_miscible_1d(4).build().unwrap();
    let grid = spec.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pair = OrbitalPair::normalized(random_field(&grid, &mut rng), random_field(&grid, &mut rng)).unwrap();
    let e = hartree_energy(&pair, &spec).unwrap();
    let rotated = OrbitalPair::new(
        pair.u.scaled(Complex64::from_polar(1.0, 0.7)),
        pair.v.scaled(Complex64::from_polar(1.0, -2.1)),
    )
    .unwrap();
    assert!((hartree_energy(&rotated, &spec).unwrap() - e).abs() < 1e-12 * e.abs().max(1.0));

    let kinetic = |f: &SpectralField| inner_product(f, &laplacian_apply(f)).re;
    let kin = spec.c1() * kinetic(&pair.u) + spec.c2() * kinetic(&pair.v);
    for lambda in [0.5, 2.0] {
        let scaled = spec.scaled(lambda).unwrap();
        let es = hartree_energy(&pair, &scaled).unwrap();
        assert!(((es - kin) - lambda * (e - kin)).abs() < 1e-10 * e.abs().max(1.0));
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for regime in 0..2 {
        let spec = if regime == 0 {
            models::random_miscible_1d(12).build().unwrap()
        } else {
            let grid = Grid::new(1, 64, 16.0).unwrap();
            let trap = TrapSpec::Harmonic { coefficient: 1.0, centre: [0.0; 3] }.sample(&grid);
            gp_spec(&grid, [trap.clone(), trap], [0.1, 0.2, 0.05], 0.4)
        };
        let grid = spec.grid().clone();
        for _ in 0..10 {
            let pair = random_initial_pair(&grid, rng.random()).unwrap();
            let du = random_field(&grid, &mut rng);
            let dv = random_field(&grid, &mut rng);
            let (gu, gv) = functional_gradient(&pair.u, &pair.v, &spec);
            let analytic = inner_product(&gu, &du).re + inner_product(&gv, &dv).re;
            let eps = 1e-5;
            let at = |t: f64| functional(&pair.u.axpy(c(t), &du), &pair.v.axpy(c(t), &dv), &spec);
            let fd = (at(eps) - at(-eps)) / (2.0 * eps);
            assert!((fd - analytic).abs() < 1e-6 * analytic.abs().max(1.0), "{fd} vs {analytic}");
        }
    }
}

#[test]
fn chemical_potentials_examples() {
    let grid = Grid::new(1, 64, 12.0).unwrap();
    let trap = TrapSpec::Harmonic { coefficient: 0.8, centre: [0.0; 3] }.sample(&grid);
    let z = SpectralField::zeros(&grid);
    let spec = ModelSpec::mean_field([trap.clone(), trap.clone()], [z.clone(), z.clone(), z.clone()], 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pair = OrbitalPair::normalized(random_field(&grid, &mut rng), random_field(&grid, &mut rng)).unwrap();
    let (mu1, _) = chemical_potentials(&pair, &spec);
    let direct = inner_product(&pair.u, &laplacian_apply(&pair.u)).re + inner_product(&pair.u.density(), &trap).re;
    assert!((mu1 - direct).abs() < 1e-10);

    let grid = Grid::new(3, 8, 4.0).unwrap();
    let z = SpectralField::zeros(&grid);
    let v1 = InteractionSpec::Gaussian { strength: 1.1, width: 0.5 }.sample(&grid);
    let v12 = InteractionSpec::Gaussian { strength: 0.4, width: 0.8 }.sample(&grid);
    let c1 = 0.3;
    let spec = ModelSpec::mean_field([z.clone(), z.clone()], [v1.clone(), z, v12.clone()], c1).unwrap();
    let u = box_constant(&grid);
    let (mu1, _) = chemical_potentials(&OrbitalPair::new(u.clone(), u).unwrap(), &spec);
    let expected = (c1 * v1.integral().re + (1.0 - c1) * v12.integral().re) / grid.volume();
    assert!((mu1 - expected).abs() < 1e-12);
}

#[test]
fn minimiser_of_interacting_model() {
    let spec = models::random_miscible_1d(7).build().unwrap();
    let report = minimize(&spec, 1, &MinimizeOptions::default()).unwrap();
    let pair = &report.orbitals;
    assert!(report.residual < 1e-8);
    assert!(meanfield_residual(pair, &spec) < 1e-8);
    assert!((l2_norm(&pair.u) - 1.0).abs() < 1e-10 && (l2_norm(&pair.v) - 1.0).abs() < 1e-10);
    assert!(pair.u.integral().re > 0.0 && pair.v.integral().re > 0.0);
    assert!(pair.u.integral().im.abs() < 1e-12 && pair.v.integral().im.abs() < 1e-12);

    // Energy trace never increases beyond floating-point noise.
    for w in report.energy_trace.windows(2) {
        assert!(w[1] <= w[0] + energy_rounding_floor(w[0]));
    }
    // Residual: the running minimum reaches the tolerance and the final value is it.
    let last = *report.residual_trace.last().unwrap();
    let min = report.residual_trace.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(last, min);

    // Lagrange multiplier of the stationarity condition equals μ.
    let (gu, gv) = functional_gradient(&pair.u, &pair.v, &spec);
    let lam_u = inner_product(&pair.u, &gu).re / (2.0 * spec.c1());
    let lam_v = inner_product(&pair.v, &gv).re / (2.0 * spec.c2());
    let (mu1, mu2) = chemical_potentials(pair, &spec);
    assert!((lam_u - mu1).abs() < 1e-8 && (lam_v - mu2).abs() < 1e-8);
    let stationarity = gu.axpy(c(-2.0 * spec.c1() * mu1), &pair.u);
    assert!(l2_norm(&stationarity) < 2.0 * 1e-8);

    // A random pair is not stationary.
    let random = random_initial_pair(spec.grid(), 99).unwrap();
    assert!(meanfield_residual(&random, &spec) > 1e-3);
}

#[test]
fn harmonic_minimum_in_three_dimensions() {
    let spec = models::harmonic_noninteracting(3, 32, 14.0).build().unwrap();
    let report = minimize(&spec, 5, &MinimizeOptions::default()).unwrap();
    assert!((report.energy - 3.0).abs() < 1e-5);
    let g = gaussian(spec.grid(), 1.0);
    assert!(l2_norm(&report.orbitals.u.axpy(c(-1.0), &g)) < 1e-6);
    assert!(bosemix::grid::boundary_ratio(&report.orbitals.u) < 1e-8);
}

#[test]
fn symmetric_model_gives_equal_orbitals() {
    let grid = GridSpec { dim: 1, points_per_axis: 64, box_length: 16.0 };
    let spec = models::gaussian_mean_field(grid, [1.0, 1.0], [1.5, 1.5, 1.5], 0.8, 0.5).build().unwrap();
    let report = minimize(&spec, 3, &MinimizeOptions::default()).unwrap();
    let d = report.orbitals.u.axpy(c(-1.0), &report.orbitals.v).max_abs();
    assert!(d < 1e-6, "{d}");
}

#[test]
fn multistart_agrees() {
    let spec = models::random_miscible_1d(21).build().unwrap();
    let reports: Vec<_> = (0..5)
        .map(|seed| minimize(&spec, 100 + seed, &MinimizeOptions::default()).unwrap())
        .collect();
    let abs = |f: &SpectralField| f.map(|z| c(z.norm()));
    for r in &reports[1..] {
        for alpha in 0..2 {
            let a = abs(r.orbitals.component(alpha));
            let b = abs(reports[0].orbitals.component(alpha));
            assert!(a.axpy(c(-1.0), &b).max_abs() < 1e-6);
        }
    }
}

#[test]
fn iteration_cap_returns_best_report() {
    let spec = models::random_miscible_1d(1).build().unwrap();
    let opts = MinimizeOptions { max_iterations: 3, ..Default::default() };
    match minimize(&spec, 1, &opts) {
        Err(Error::IterationCap(report)) => {
            assert_eq!(report.iterations, 3);
            assert_eq!(report.energy_trace.len(), 4);
            assert!(report.energy < report.energy_trace[0]);
        }
        other => panic!("expected iteration cap, got {other:?}"),
    }
}

#[test]
fn assumption_checks_reject_flat_traps() {
    let mut desc = models::random_miscible_1d(1);
    desc.traps = [TrapSpec::Zero {}, TrapSpec::Zero {}];
    let spec = desc.build().unwrap();
    assert!(matches!(minimize(&spec, 1, &MinimizeOptions::default()), Err(Error::Hypothesis(_))));
}

#[test]
fn miscibility_examples() {
    assert!(miscibility_gp(1.0, 1.0, 0.5));
    assert!(!miscibility_gp(1.0, 1.0, 2.0));
    assert!(miscibility_gp(4.0, 1.0, 2.0));

    let grid = GridSpec { dim: 1, points_per_axis: 64, box_length: 16.0 };
    // Common width: V̂¹² = sqrt(V̂¹ V̂²) exactly, the boundary case.
    let (g1, g2) = (2.0, 0.5);
    let boundary = models::gaussian_mean_field(grid, [1.0, 1.0], [g1, g2, (g1 * g2).sqrt()], 0.7, 0.5);
    assert!(miscibility_mf(&boundary.build().unwrap()).holds);
    let strong = models::gaussian_mean_field(grid, [1.0, 1.0], [g1, g2, 1.2 * (g1 * g2).sqrt()], 0.7, 0.5);
    let report = miscibility_mf(&strong.build().unwrap());
    assert!(!report.holds);
    assert!(report.violations.iter().any(|v| v.kind == ViolationKind::Miscibility && v.index == 0));
    // A wider cross potential violates the inequality at large k only.
    let mut wide = boundary.clone();
    wide.interactions[2] = InteractionSpec::Gaussian { strength: 0.7, width: 0.9 };
    let report = miscibility_mf(&wide.build().unwrap());
    assert!(report.holds);
    let mut narrow = boundary;
    narrow.interactions[2] = InteractionSpec::Gaussian { strength: 0.9, width: 0.5 };
    let report = miscibility_mf(&narrow.build().unwrap());
    assert!(!report.holds && report.violations.iter().all(|v| v.index != 0));
}

fn smooth_density(grid: &Grid, rng: &mut ChaCha8Rng) -> SpectralField {
    let centre = rng.random_range(-1.0..1.0);
    let width = rng.random_range(0.7..1.5);
    let a = rng.random_range(-0.5..0.5);
    let k = rng.random_range(0.5..2.0);
    let f = SpectralField::from_real_fn(grid, |x| {
        let y = x[0] - centre;
        (1.0 + a * (k * y).cos()).powi(2) * (-y * y / (width * width)).exp()
    });
    f.scaled(c(1.0 / f.integral().re))
}

#[test]
fn convexity_gap_examples() {
    let spec = models::random_miscible_1d(5).build().unwrap();
    let grid = spec.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = smooth_density(&grid, &mut rng);
    let g = smooth_density(&grid, &mut rng);
    let gap = convexity_gap(&f, &g, &f, &g, &spec).unwrap();
    assert!(gap.total.abs() < 1e-13);
    let neg = f.scaled(c(-1.0));
    assert!(convexity_gap(&neg, &g, &f, &g, &spec).is_err());
}

#[test]
fn gp_interaction_gap_matches_fourier_identity() {
    let grid = Grid::new(1, 64, 16.0).unwrap();
    let z = SpectralField::zeros(&grid);
    let (a1, a2, a12, c1) = (0.3, 0.5, 0.2, 0.45);
    let c2 = 1.0 - c1;
    let spec = gp_spec(&grid, [z.clone(), z], [a1, a2, a12], c1);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d: Vec<SpectralField> = (0..4).map(|_| smooth_density(&grid, &mut rng)).collect();
    let gap = convexity_gap(&d[0], &d[1], &d[2], &d[3], &spec).unwrap();
    // ‖ĥ‖² with the unitary normalisation of the quadrature: spacing/len Σ|DFT|².
    let half_diff = |a: &SpectralField, b: &SpectralField| a.axpy(c(-1.0), b).scaled(c(0.5)).fourier();
    let p = half_diff(&d[0], &d[2]);
    let q = half_diff(&d[1], &d[3]);
    let w = grid.cell_volume() / grid.len() as f64;
    let pp: f64 = p.iter().map(|z| z.norm_sqr()).sum::<f64>() * w;
    let qq: f64 = q.iter().map(|z| z.norm_sqr()).sum::<f64>() * w;
    let pq: f64 = p.iter().zip(&q).map(|(a, b)| (a.conj() * b).re).sum::<f64>() * w;
    let expected = 4.0 * PI * a1 * c1 * c1 * pp + 4.0 * PI * a2 * c2 * c2 * qq + 8.0 * PI * a12 * c1 * c2 * pq;
    assert!((gap.interaction - expected).abs() < 1e-10, "{} vs {expected}", gap.interaction);
    assert!(gap.trap.abs() < 1e-14);
}

#[test]
fn convexity_gap_nonnegative_for_random_miscible_quadruples() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..100 {
        let spec = models::random_miscible_1d(1000 + i).build().unwrap();
        let grid = spec.grid().clone();
        let d: Vec<SpectralField> = (0..4).map(|_| smooth_density(&grid, &mut rng)).collect();
        let gap = convexity_gap(&d[0], &d[1], &d[2], &d[3], &spec).unwrap();
        assert!(gap.total >= -1e-10, "{gap:?}");
    }
}
