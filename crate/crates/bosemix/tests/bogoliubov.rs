use bosemix::bogoliubov::*;
use bosemix::fock::{self, ExcitationCap, FockBasis};
use bosemix::grid::{inner_product, GridSpec, SpectralField};
use bosemix::linalg;
use bosemix::meanfield::*;
use bosemix::models;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn solve(spec: &ModelSpec) -> OrbitalPair {
    minimize(spec, 1, &MinimizeOptions::default()).unwrap().orbitals
}

fn harmonic_1d(n: usize) -> ModelSpec {
    models::harmonic_noninteracting(1, n, 16.0).build().unwrap()
}

#[test]
fn oscillator_modes() {
    let spec = harmonic_1d(128);
    let pair = solve(&spec);
    let basis = build_mode_basis(&pair, &spec, 3, 2).unwrap();
    assert_eq!(basis.counts(), [3, 2]);
    assert!(basis.gram_error() < 1e-10);
    // Levels of -Δ + x² are 1, 3, 5, 7; h subtracts μ = 1.
    for (k, e) in basis.energies(0).iter().enumerate() {
        assert!((e - 2.0 * (k + 1) as f64).abs() < 1e-8, "{e}");
    }
    for m in 1..=3 {
        assert!(inner_product(basis.mode(0, 0), basis.mode(0, m)).norm() < 1e-10);
    }
}

#[test]
fn mode_energies_match_dense_projection() {
    let spec = models::random_miscible_1d(3);
    let spec = ModelDescription {
        grid: GridSpec { dim: 1, points_per_axis: 32, box_length: 12.0 },
        ..spec
    }
    .build()
    .unwrap();
    let pair = solve(&spec);
    let basis = build_mode_basis(&pair, &spec, 4, 4).unwrap();
    for species in 0..2 {
        let dense = projected_mean_field_matrix(&pair, &spec, species).unwrap();
        let (vals, _) = linalg::sorted_eigen(&dense);
        // The projected matrix has a zero eigenvalue on the condensate; the
        // condensate is the ground state so it sits at the bottom.
        let excited: Vec<f64> = vals.iter().cloned().filter(|v| v.abs() > 1e-9).take(4).collect();
        for (a, b) in basis.energies(species).iter().zip(&excited) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn minimiser_precondition() {
    let spec = models::random_miscible_1d(4).build().unwrap();
    let random = random_initial_pair(spec.grid(), 1).unwrap();
    assert!(matches!(build_mode_basis(&random, &spec, 2, 2), Err(bosemix::Error::Precondition(_))));
    let pair = solve(&spec);
    let basis = build_mode_basis(&pair, &spec, 2, 2).unwrap();
    assert!(matches!(assemble_hessian(&random, &spec, &basis), Err(bosemix::Error::Precondition(_))));
}

#[test]
fn tensor_vanishes_without_interaction() {
    let spec = harmonic_1d(64);
    let pair = solve(&spec);
    let basis = build_mode_basis(&pair, &spec, 2, 2).unwrap();
    let t = interaction_tensor(&basis, &spec).unwrap();
    assert_eq!(t.v1.max_abs() + t.v2.max_abs() + t.v12.max_abs(), 0.0);
}

/// `Σ_{x,y} u_m(x) u_p(x) V(x - y) u_n(y) u_q(y) dx²` with the periodic
/// difference taken on the lattice.
fn double_sum(v: &SpectralField, modes_a: &[SpectralField], modes_b: &[SpectralField], idx: [usize; 4]) -> f64 {
    let grid = v.grid();
    let n = grid.points_per_axis();
    let dx = grid.spacing();
    let [m, nn, p, q] = idx;
    let val = |f: &SpectralField, i: usize| f.values()[i].re;
    let mut s = 0.0;
    for x in 0..n {
        for y in 0..n {
            // Kernel value at x - y, with index n/2 the origin.
            let k = (x + n - y + n / 2) % n;
            s += val(&modes_a[m], x) * val(&modes_a[p], x) * v.values()[k].re * val(&modes_b[nn], y) * val(&modes_b[q], y);
        }
    }
    s * dx * dx
}

#[test]
fn tensor_matches_direct_double_sum() {
    let grid = GridSpec { dim: 1, points_per_axis: 16, box_length: 8.0 };
    let desc = models::gaussian_mean_field(grid, [1.0, 1.5], [1.0, 0.8, 0.5], 0.9, 0.4);
    let spec = desc.build().unwrap();
    let pair = solve(&spec);
    let basis = build_mode_basis(&pair, &spec, 2, 3).unwrap();
    let t = interaction_tensor(&basis, &spec).unwrap();
    let (u, v) = (basis.modes(0), basis.modes(1));
    for m in 0..3 {
        for n in 0..3 {
            for p in 0..3 {
                for q in 0..3 {
                    let d = double_sum(spec.interaction(0), u, u, [m, n, p, q]);
                    assert!((t.v1.get(m, n, p, q) - d).abs() < 1e-10);
                }
            }
        }
    }
    for m in 0..3 {
        for n in 0..4 {
            for p in 0..3 {
                for q in 0..4 {
                    let d = double_sum(spec.interaction(2), u, v, [m, n, p, q]);
                    assert!((t.v12.get(m, n, p, q) - d).abs() < 1e-10);
                }
            }
        }
    }
    assert!(t.v1.hermiticity_error() < 1e-12);
    assert!(t.v2.hermiticity_error() < 1e-12);
    assert!(t.v12.cross_hermiticity_error() < 1e-12);
}

#[test]
fn tensor_converges_under_refinement() {
    let build = |n: usize| {
        let grid = GridSpec { dim: 1, points_per_axis: n, box_length: 16.0 };
        models::gaussian_mean_field(grid, [1.0, 1.2], [1.0, 0.8, 0.4], 0.8, 0.5).build().unwrap()
    };
    let coarse = build(64);
    let fine = build(128);
    let t_coarse = interaction_tensor(&build_mode_basis(&solve(&coarse), &coarse, 2, 2).unwrap(), &coarse).unwrap();
    let t_fine = interaction_tensor(&build_mode_basis(&solve(&fine), &fine, 2, 2).unwrap(), &fine).unwrap();
    // Modes are fixed up to sign, which the sign convention pins down.
    for (a, b) in t_coarse.v1.data.iter().zip(&t_fine.v1.data) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

fn miscible_setup(seed: u64, m: usize) -> (ModelSpec, OrbitalPair, ModeBasis) {
    let spec = models::random_miscible_1d(seed).build().unwrap();
    let pair = solve(&spec);
    let basis = build_mode_basis(&pair, &spec, m, m).unwrap();
    (spec, pair, basis)
}

#[test]
fn hessian_without_interaction_is_block_diagonal() {
    let spec = harmonic_1d(64);
    let pair = solve(&spec);
    let basis = build_mode_basis(&pair, &spec, 3, 3).unwrap();
    let hess = assemble_hessian(&pair, &spec, &basis).unwrap();
    let mut expected = DMatrix::zeros(12, 12);
    for k in 0..3 {
        for block in 0..4 {
            expected[(3 * block + k, 3 * block + k)] = basis.energies(block % 2)[k];
        }
    }
    assert!(linalg::max_abs_difference(&hess, &expected) < 1e-8);
    assert!((hessian_bottom(&hess) - 2.0).abs() < 1e-8);
    let blocks = assemble_bogoliubov(&pair, &spec, &basis).unwrap();
    assert!(blocks.b2.amax() == 0.0 && blocks.constant == 0.0);
    assert!(linalg::max_abs_difference(&blocks.b1, &expected.view((0, 0), (6, 6)).into_owned()) < 1e-8);
}

#[test]
fn hessian_matches_finite_differences() {
    let (spec, pair, basis) = miscible_setup(5, 3);
    let hess = assemble_hessian(&pair, &spec, &basis).unwrap();
    assert!(linalg::asymmetry(&hess) < 1e-12);
    let [c1, c2] = spec.ratios();
    let e0 = functional(&pair.u, &pair.v, &spec);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let combo = |species: usize, coeffs: &[f64]| {
            coeffs.iter().enumerate().fold(SpectralField::zeros(spec.grid()), |acc, (k, &w)| {
                acc.axpy(c(w), basis.mode(species, k + 1))
            })
        };
        let g1 = combo(0, &x[..3]);
        let g2 = combo(1, &x[3..]);
        let eps = 1e-3;
        let energy = |s: f64| {
            let u = bosemix::grid::normalize(&pair.u.axpy(c(s / c1.sqrt()), &g1)).unwrap();
            let v = bosemix::grid::normalize(&pair.v.axpy(c(s / c2.sqrt()), &g2)).unwrap();
            functional(&u, &v, &spec)
        };
        let fd = (energy(eps) + energy(-eps) - 2.0 * e0) / (eps * eps);
        let xx = DVector::from_iterator(12, x.iter().chain(x.iter()).cloned());
        let form = xx.dot(&(&hess * &xx));
        assert!((fd - form).abs() < 1e-4 * form.abs(), "{fd} vs {form}");
    }
}

#[test]
fn hessian_positive_and_interaction_block_nonnegative() {
    for seed in 0..5 {
        let (spec, pair, basis) = miscible_setup(10 + seed, 3);
        let hess = assemble_hessian(&pair, &spec, &basis).unwrap();
        assert!(hessian_bottom(&hess) > 0.0);
        let blocks = assemble_bogoliubov(&pair, &spec, &basis).unwrap();
        assert!(linalg::min_eigenvalue(&blocks.interaction_part()) >= -1e-10);
        // Hessian and Bogoliubov blocks come from independent quadratures.
        assert!(linalg::max_abs_difference(&hess, &blocks.hessian()) < 1e-12);
        let spectrum = diagonalize_quadratic(&blocks).unwrap();
        assert!(spectrum.xi.iter().all(|&x| x > 0.0));
    }
}

#[test]
fn single_mode_bogoliubov_matches_direct_quadrature() {
    let (spec, pair, basis) = miscible_setup(6, 1);
    let blocks = assemble_bogoliubov(&pair, &spec, &basis).unwrap();
    let [c1, c2] = spec.ratios();
    let grid = spec.grid();
    let dx = grid.spacing();
    let re = |f: &SpectralField| f.real_parts();
    let (u0, u1, v0, v1) = (re(basis.mode(0, 0)), re(basis.mode(0, 1)), re(basis.mode(1, 0)), re(basis.mode(1, 1)));
    let n = grid.points_per_axis();
    let pot = |which: usize| spec.interaction(which).real_parts();
    let dsum = |w: &[f64], a: &[f64], b: &[f64], cc: &[f64], d: &[f64]| {
        let mut s = 0.0;
        for x in 0..n {
            for y in 0..n {
                s += a[x] * b[x] * w[(x + n - y + n / 2) % n] * cc[y] * d[y];
            }
        }
        s * dx * dx
    };
    // B₂ entries: c₁V¹_{1100}, c₂V²_{1100}, √(c₁c₂)V¹²_{1100}.
    let b2_11 = c1 * dsum(&pot(0), &u1, &u0, &u1, &u0);
    let b2_22 = c2 * dsum(&pot(1), &v1, &v0, &v1, &v0);
    let b2_12 = (c1 * c2).sqrt() * dsum(&pot(2), &u1, &u0, &v1, &v0);
    assert!((blocks.b2[(0, 0)] - b2_11).abs() < 1e-10);
    assert!((blocks.b2[(1, 1)] - b2_22).abs() < 1e-10);
    assert!((blocks.b2[(0, 1)] - b2_12).abs() < 1e-10);
    let constant = -0.5 * c1 * dsum(&pot(0), &u0, &u0, &u0, &u0) - 0.5 * c2 * dsum(&pot(1), &v0, &v0, &v0, &v0);
    assert!((blocks.constant - constant).abs() < 1e-10);
}

#[test]
fn diagonalisation_closed_forms() {
    let b1 = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
    let blocks = QuadraticBlocks::new(b1.clone(), DMatrix::zeros(2, 2), b1.clone(), 0.7, [1, 1]).unwrap();
    let s = diagonalize_quadratic(&blocks).unwrap();
    let (vals, _) = linalg::sorted_eigen(&b1);
    assert!((s.xi[0] - vals[0]).abs() < 1e-12 && (s.xi[1] - vals[1]).abs() < 1e-12);
    assert!((s.ground_energy - 0.7).abs() < 1e-12);

    let (a, b) = (1.7, 0.9);
    let one = |m: f64| DMatrix::from_element(1, 1, m);
    let blocks = QuadraticBlocks::new(one(a), one(b), one(a), 0.25, [1, 0]).unwrap();
    let s = diagonalize_quadratic(&blocks).unwrap();
    let w = (a * a - b * b).sqrt();
    assert!((s.xi[0] - w).abs() < 1e-12);
    assert!((s.ground_energy - (0.5 * (w - a) + 0.25)).abs() < 1e-12);

    let bad = QuadraticBlocks::new(one(1.0), one(1.2), one(1.0), 0.0, [1, 0]).unwrap();
    match diagonalize_quadratic(&bad) {
        Err(bosemix::Error::Hypothesis(msg)) => assert!(msg.contains("pairing")),
        other => panic!("{other:?}"),
    }
    let neg = QuadraticBlocks::new(one(-1.0), one(0.0), one(-1.0), 0.0, [1, 0]).unwrap();
    match diagonalize_quadratic(&neg) {
        Err(bosemix::Error::Hypothesis(msg)) => assert!(msg.contains("B1")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn diagonalisation_matches_fock_truncation() {
    for seed in 0..3 {
        let blocks = models::random_quadratic_blocks([2, 2], seed).unwrap();
        let s = diagonalize_quadratic(&blocks).unwrap();
        let levels = s.excitation_levels(3);
        let mut errors = Vec::new();
        for q in [10, 12, 14] {
            let basis = FockBasis::excitations([2, 2], ExcitationCap::Total(q)).unwrap();
            let h = fock::quadratic_hamiltonian(&blocks, &basis).unwrap();
            let pairs = fock::lowest_eigenpairs(&h, 4).unwrap();
            let e0 = pairs[0].value;
            errors.push((e0 - s.ground_energy).abs());
            if q == 14 {
                assert!((e0 - s.ground_energy).abs() < 1e-4);
                for k in 0..3 {
                    assert!((pairs[k + 1].value - e0 - levels[k]).abs() < 1e-3);
                }
            }
        }
        assert!(errors[1] <= errors[0] && errors[2] <= errors[1], "{errors:?}");
    }
}

#[test]
fn sandwich_bounds() {
    let spec = harmonic_1d(64);
    let pair = solve(&spec);
    let basis = build_mode_basis(&pair, &spec, 2, 2).unwrap();
    let blocks = assemble_bogoliubov(&pair, &spec, &basis).unwrap();
    let s = diagonalize_quadratic(&blocks).unwrap();
    let top = blocks.b1.diagonal().max();
    assert!(sandwich_bounds_check(&blocks, &s, 1.0 + top, 6).unwrap());
    assert!(!sandwich_bounds_check(&blocks, &s, 0.0, 6).unwrap());

    let model = models::random_toy_model([3, 3], 4, 4, 1.0, 2).unwrap();
    let (frame, _) = model.condensate_frame().unwrap();
    let blocks = frame.quadratic_blocks().unwrap();
    let s = diagonalize_quadratic(&blocks).unwrap();
    let constant = find_sandwich_constant(&blocks, &s, 10).unwrap().expect("finite constant");
    assert!(constant >= 1.0 && sandwich_bounds_check(&blocks, &s, constant, 10).unwrap());
    assert!(!sandwich_bounds_check(&blocks, &s, 0.0, 10).unwrap());
}

#[test]
fn spectrum_invariant_under_mode_mixing() {
    let (spec, pair, basis) = miscible_setup(8, 3);
    let s = diagonalize_quadratic(&assemble_bogoliubov(&pair, &spec, &basis).unwrap()).unwrap();
    let rotation = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        a.qr().q()
    };
    let mixed = basis.remixed(&rotation(1), &rotation(2)).unwrap();
    assert!(mixed.gram_error() < 1e-10);
    let t = diagonalize_quadratic(&assemble_bogoliubov(&pair, &spec, &mixed).unwrap()).unwrap();
    for (a, b) in s.xi.iter().zip(&t.xi) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!((s.ground_energy - t.ground_energy).abs() < 1e-10);
}

#[test]
fn ground_energy_decreases_with_more_modes() {
    let spec = models::random_miscible_1d(9).build().unwrap();
    let pair = solve(&spec);
    let mut last = f64::INFINITY;
    for m in [1, 2, 4, 6] {
        let basis = build_mode_basis(&pair, &spec, m, m).unwrap();
        let s = diagonalize_quadratic(&assemble_bogoliubov(&pair, &spec, &basis).unwrap()).unwrap();
        assert!(s.ground_energy <= last + 1e-12);
        last = s.ground_energy;
    }
}

#[test]
fn fock_gap_above_smallest_excitation() {
    let blocks = models::random_quadratic_blocks([2, 1], 4).unwrap();
    let s = diagonalize_quadratic(&blocks).unwrap();
    let basis = FockBasis::excitations([2, 1], ExcitationCap::Total(16)).unwrap();
    let h = fock::quadratic_hamiltonian(&blocks, &basis).unwrap();
    let pairs = fock::lowest_eigenpairs(&h, 2).unwrap();
    let gap = pairs[1].value - pairs[0].value;
    assert!(gap > 0.0);
    assert!(gap >= s.xi[0] - 1e-6, "{gap} vs {}", s.xi[0]);
}

#[test]
fn projected_toy_model_reproduces_blocks() {
    let grid = GridSpec { dim: 1, points_per_axis: 64, box_length: 16.0 };
    let spec = models::gaussian_mean_field(grid, [1.0, 1.4], [1.2, 0.9, 0.6], 0.8, 0.4).build().unwrap();
    let pair = solve(&spec);
    let basis = build_mode_basis(&pair, &spec, 2, 2).unwrap();
    let blocks = assemble_bogoliubov(&pair, &spec, &basis).unwrap();
    let toy = project_toy_model(&spec, &basis, 40, 60).unwrap();
    // Mode 0 solves the projected Hartree equations up to the minimiser residual.
    assert!(toy.stationarity_residual() < 1e-7);
    let toy_blocks = toy.quadratic_blocks().unwrap();
    assert!(linalg::max_abs_difference(&toy_blocks.b1, &blocks.b1) < 1e-7);
    assert!(linalg::max_abs_difference(&toy_blocks.b2, &blocks.b2) < 1e-12);
    assert!((toy_blocks.constant - blocks.constant).abs() < 1e-12);
}
