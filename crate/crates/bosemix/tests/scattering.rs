use bosemix::scattering::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sum of a few smooth bumps `c (1 - (r/ρ)²)³` with ρ ≤ 1, vanishing at r = 1.
fn random_potential(rng: &mut ChaCha8Rng, len: usize) -> RadialPotential {
    let bumps: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.random_range(0.0..20.0), rng.random_range(0.3..1.0)))
        .collect();
    RadialPotential::from_fn(1.0, len, move |r| {
        bumps
            .iter()
            .map(|&(c, rho)| if r < rho { c * (1.0 - (r / rho).powi(2)).powi(3) } else { 0.0 })
            .sum()
    })
    .unwrap()
}

fn bump(height: f64) -> RadialPotential {
    RadialPotential::from_fn(1.0, 401, |r| height * (1.0 - r * r).powi(3)).unwrap()
}

#[test]
fn born_limit_of_weak_potential() {
    let v = bump(5.0);
    let born = born_approximation(&v);
    let lambda = 1e-3;
    let a = scattering_length(&v.scaled(lambda).unwrap()).unwrap().a;
    assert!((a / (lambda * born) - 1.0).abs() < 0.01);
}

#[test]
fn scattering_length_below_born_and_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let v = random_potential(&mut rng, 801);
        let res = scattering_length(&v).unwrap();
        assert!(res.a >= 0.0 && res.a <= v.support_radius());
        assert!(res.a <= born_approximation(&v), "{} > {}", res.a, born_approximation(&v));
        assert!(res.residual < 1e-6 * res.a.max(1e-9));
    }
}

#[test]
fn monotone_under_domination() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let big = random_potential(&mut rng, 801);
        let damp: Vec<f64> = big
            .samples()
            .iter()
            .map(|&s| s * rng.random_range(0.0..1.0))
            .collect();
        let small = RadialPotential::new(damp, 1.0).unwrap();
        assert!(small.dominated_by(&big));
        let a_small = scattering_length(&small).unwrap().a;
        let a_big = scattering_length(&big).unwrap().a;
        assert!(a_small <= a_big + 1e-12, "{a_small} > {a_big}");
    }
}

#[test]
fn contraction_divides_scattering_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let v = random_potential(&mut rng, 801);
    let a = scattering_length(&v).unwrap().a;
    for n in [2.0, 4.0, 8.0] {
        let an = scattering_length(&v.contracted(n).unwrap()).unwrap().a;
        assert!((an * n / a - 1.0).abs() < 1e-4, "N = {n}: {an} vs {}", a / n);
    }
}

#[test]
fn hard_sphere_limit() {
    // a(H) = 1 - tanh(κ)/κ with κ = sqrt(H/2); the leading correction is
    // 1/κ, so 2a(4H) - a(H) removes it.
    let a = |h: f64, len: usize| {
        scattering_length(&RadialPotential::square_barrier(h, 1.0, len).unwrap())
            .unwrap()
            .a
    };
    let h = 1e6;
    let a1 = a(h, 40001);
    let a4 = a(4.0 * h, 80001);
    let kappa = (h / 2.0f64).sqrt();
    assert!((a1 - (1.0 - kappa.tanh() / kappa)).abs() < 1e-6);
    assert!((2.0 * a4 - a1 - 1.0).abs() < 1e-3);
}

#[test]
fn neumann_eigenvalue_nonincreasing_in_radius() {
    let v = bump(5.0);
    let n = 200.0;
    let lambdas: Vec<f64> = [0.05, 0.1, 0.2, 0.4]
        .iter()
        .map(|&ell| neumann_ground(&v, n, ell).unwrap().lambda)
        .collect();
    assert!(lambdas.iter().all(|&l| l > 0.0));
    for w in lambdas.windows(2) {
        assert!(w[1] <= w[0], "{lambdas:?}");
    }
}

#[test]
fn neumann_eigenvalue_law_and_decay() {
    let v = bump(5.0);
    let a = scattering_length(&v).unwrap().a;
    let ell = 0.1;
    let mut deviations = Vec::new();
    let mut constants = Vec::new();
    for n in [1e2, 1e3, 1e4] {
        let g = neumann_ground(&v, n, ell).unwrap();
        let ratio = g.lambda * n * ell.powi(3) / (3.0 * a);
        deviations.push((ratio - 1.0).abs());
        assert!(g.profile.f.iter().all(|&f| (0.0..=1.0 + 1e-12).contains(&f)));
        constants.push(g.decay_constant(n));
    }
    assert!(deviations[2] < 0.05);
    // Deviation shrinks roughly like 1/N.
    assert!(deviations[1] < 0.2 * deviations[0] && deviations[2] < 0.2 * deviations[1]);
    let (lo, hi) = constants
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), &c| (l.min(c), h.max(c)));
    assert!(lo > 0.0 && hi / lo < 1.25, "{constants:?}");
}
