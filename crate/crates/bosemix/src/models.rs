//! Ready-made model families used by the examples, the command-line tool and
//! the test suites.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bogoliubov::{QuadraticBlocks, Tensor4};
use crate::error::Result;
use crate::fock::ToyModel;
use crate::grid::GridSpec;
use crate::linalg;
use crate::meanfield::{InteractionSpec, ModelDescription, Regime, TrapSpec};

/// Both species in `U = |x|²` without interactions; the minimum is `dim`.
pub fn harmonic_noninteracting(dim: usize, points_per_axis: usize, box_length: f64) -> ModelDescription {
    let trap = TrapSpec::Harmonic {
        coefficient: 1.0,
        centre: [0.0; 3],
    };
    ModelDescription {
        grid: GridSpec {
            dim,
            points_per_axis,
            box_length,
        },
        regime: Regime::MeanField,
        c1: 0.5,
        traps: [trap, trap],
        interactions: [InteractionSpec::Zero {}, InteractionSpec::Zero {}, InteractionSpec::Zero {}],
        scattering_lengths: None,
        check_assumptions: true,
    }
}

/// Harmonic traps with Gaussian interactions `g_α exp(-x²/(2w²))` of a common
/// width. Miscible whenever `g12² ≤ g1 g2`.
pub fn gaussian_mean_field(
    grid: GridSpec,
    trap_coefficients: [f64; 2],
    strengths: [f64; 3],
    width: f64,
    c1: f64,
) -> ModelDescription {
    let trap = |coefficient| TrapSpec::Harmonic {
        coefficient,
        centre: [0.0; 3],
    };
    let gauss = |strength| {
        if strength == 0.0 {
            InteractionSpec::Zero {}
        } else {
            InteractionSpec::Gaussian { strength, width }
        }
    };
    ModelDescription {
        grid,
        regime: Regime::MeanField,
        c1,
        traps: [trap(trap_coefficients[0]), trap(trap_coefficients[1])],
        interactions: [gauss(strengths[0]), gauss(strengths[1]), gauss(strengths[2])],
        scattering_lengths: None,
        check_assumptions: true,
    }
}

/// Random miscible one-dimensional mean-field model on 64 points of `[-8, 8)`.
pub fn random_miscible_1d(seed: u64) -> ModelDescription {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let traps = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
    let g1 = rng.random_range(0.5..3.0);
    let g2 = rng.random_range(0.5..3.0);
    let rho: f64 = rng.random_range(0.0..0.95);
    let width = rng.random_range(0.5..1.5);
    let c1 = rng.random_range(0.3..0.7);
    gaussian_mean_field(
        GridSpec {
            dim: 1,
            points_per_axis: 64,
            box_length: 16.0,
        },
        traps,
        [g1, g2, rho * (g1 * g2).sqrt()],
        width,
        c1,
    )
}

fn random_symmetric(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

/// Random few-mode model with `d₁`, `d₂` modes per species.
///
/// One-body matrices have diagonal `0, 1, 2, …` plus a symmetric perturbation
/// of size 0.3. The interactions are sums of products of symmetric matrices,
/// `V¹_{mnpq} = g Σ_k α_k F_k[m,p] F_k[n,q]`, `V² = g Σ β_k G_k ⊗ G_k` and
/// `V¹² = g Σ γ_k F_k ⊗ G_k` with `γ_k² ≤ α_k β_k`, which is the finite-mode
/// analogue of a miscible, positive-definite interaction.
pub fn random_toy_model(modes: [usize; 2], n1: usize, n2: usize, strength: f64, seed: u64) -> Result<ToyModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [d1, d2] = modes;
    let one_body = |d: usize, rng: &mut ChaCha8Rng| {
        let mut t = random_symmetric(rng, d) * 0.3;
        for i in 0..d {
            t[(i, i)] += i as f64;
        }
        t
    };
    let t1 = one_body(d1, &mut rng);
    let t2 = one_body(d2, &mut rng);
    let terms = 3;
    let mut f = Vec::new();
    let mut g = Vec::new();
    let mut weights = Vec::new();
    for k in 0..terms {
        // The first term is a positive definite density-density coupling.
        let (fk, gk) = if k == 0 {
            (
                DMatrix::identity(d1, d1) + random_symmetric(&mut rng, d1) * 0.2,
                DMatrix::identity(d2, d2) + random_symmetric(&mut rng, d2) * 0.2,
            )
        } else {
            (random_symmetric(&mut rng, d1), random_symmetric(&mut rng, d2))
        };
        let alpha: f64 = rng.random_range(0.5..1.5);
        let beta: f64 = rng.random_range(0.5..1.5);
        let rho: f64 = rng.random_range(-0.8..0.8);
        weights.push((alpha, beta, rho * (alpha * beta).sqrt()));
        f.push(fk);
        g.push(gk);
    }
    let build = |dims: [usize; 4], left: &[DMatrix<f64>], right: &[DMatrix<f64>], w: &dyn Fn(usize) -> f64| {
        Tensor4::from_fn(dims, |m, n, p, q| {
            (0..terms)
                .map(|k| strength * w(k) * left[k][(m, p)] * right[k][(n, q)])
                .sum()
        })
    };
    let v1 = build([d1; 4], &f, &f, &|k| weights[k].0);
    let v2 = build([d2; 4], &g, &g, &|k| weights[k].1);
    let v12 = build([d1, d2, d1, d2], &f, &g, &|k| weights[k].2);
    ToyModel::new(t1, t2, v1, v2, v12, n1, n2)
}

/// Random quadratic blocks over `modes` excited modes: `B₁` positive with
/// spectrum in `[1, 3]` and a pairing block with
/// `‖B₁^{-1/2} B₂ B₁^{-1/2}‖` drawn from `[0.3, 0.6]`. The one-body block is
/// `B₁` and the constant is zero.
pub fn random_quadratic_blocks(modes: [usize; 2], seed: u64) -> Result<QuadraticBlocks> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = modes[0] + modes[1];
    let (_, q) = linalg::sorted_eigen(&random_symmetric(&mut rng, k));
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(k, |_, _| rng.random_range(1.0..3.0)));
    let b1 = &q * lambda * q.transpose();
    let b1 = (&b1 + b1.transpose()) * 0.5;
    let r = random_symmetric(&mut rng, k);
    let root = linalg::symmetric_function(&b1, f64::sqrt);
    let inner = &root * r * &root;
    let inner = (&inner + inner.transpose()) * 0.5;
    let root_inv = linalg::symmetric_function(&b1, |x| 1.0 / x.sqrt());
    let ratio_now = {
        let m = &root_inv * &inner * &root_inv;
        let (v, _) = linalg::sorted_eigen(&m);
        v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    };
    let target: f64 = rng.random_range(0.3..0.6);
    let b2 = inner * (target / ratio_now);
    let b2 = (&b2 + b2.transpose()) * 0.5;
    QuadraticBlocks::new(b1.clone(), b2, b1, 0.0, modes)
}
