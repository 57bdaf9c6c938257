//! Small dense helpers and a restarted Lanczos eigensolver for real symmetric
//! operators.
//!
//! The eigensolver finds the lowest eigenpairs one at a time. Each converged
//! vector is locked and projected out of later searches, so degenerate levels
//! are found as separate pairs. Constraint vectors are projected out from the
//! start, which restricts the operator to their orthogonal complement.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    /// Largest search space before a thick restart.
    pub krylov_dim: usize,
    /// Ritz vectors kept across a restart.
    pub keep: usize,
    /// Convergence when `‖Ax - θx‖ ≤ tol · max(1, |θ|)`.
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            krylov_dim: 80,
            keep: 8,
            tol: 1e-10,
            max_restarts: 500,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Two passes of Gram-Schmidt against every vector in `against`.
fn orthogonalize<'a>(v: &mut [f64], against: impl Iterator<Item = &'a Vec<f64>> + Clone) {
    for _ in 0..2 {
        for q in against.clone() {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }
}

/// Lowest `count` eigenpairs of the symmetric operator `apply` (writes `A x`
/// into its second argument) on the orthogonal complement of `constraints`.
///
/// Constraint vectors need not be normalised but must be linearly independent.
pub fn lowest_eigenpairs(
    dim: usize,
    count: usize,
    apply: &dyn Fn(&[f64], &mut [f64]),
    constraints: &[Vec<f64>],
    options: &LanczosOptions,
) -> Result<Vec<EigenPair>> {
    let mut locked: Vec<Vec<f64>> = Vec::new();
    for c in constraints {
        let mut v = c.clone();
        orthogonalize(&mut v, locked.iter());
        let n = norm(&v);
        if n < 1e-14 {
            return Err(Error::InvalidInput("constraint vectors are linearly dependent".into()));
        }
        v.iter_mut().for_each(|x| *x /= n);
        locked.push(v);
    }
    let n_constraints = locked.len();
    if count + n_constraints > dim {
        return Err(Error::InvalidInput(format!(
            "asked for {count} eigenpairs in a space of dimension {}",
            dim - n_constraints
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut found = Vec::with_capacity(count);
    for _ in 0..count {
        let pair = lowest_one(dim, apply, &locked, options, &mut rng)?;
        locked.push(pair.vector.clone());
        found.push(pair);
    }
    Ok(found)
}

fn random_start(dim: usize, locked: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    for _ in 0..10 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, locked.iter());
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            return Ok(v);
        }
    }
    Err(Error::NoConvergence("could not draw a start vector outside the locked space".into()))
}

fn lowest_one(
    dim: usize,
    apply: &dyn Fn(&[f64], &mut [f64]),
    locked: &[Vec<f64>],
    options: &LanczosOptions,
    rng: &mut ChaCha8Rng,
) -> Result<EigenPair> {
    let free = dim - locked.len();
    let m_max = options.krylov_dim.min(free).max(1);
    let keep = options.keep.min(m_max.saturating_sub(1)).max(1);
    let mut basis: Vec<Vec<f64>> = vec![random_start(dim, locked, rng)?];
    let mut images: Vec<Vec<f64>> = Vec::new();
    let mut best_residual = f64::INFINITY;
    for _ in 0..=options.max_restarts {
        // Expand the search space one Krylov vector at a time.
        let mut exhausted = false;
        while basis.len() < m_max || images.len() < basis.len() {
            if images.len() < basis.len() {
                let q = &basis[images.len()];
                let mut w = vec![0.0; dim];
                apply(q, &mut w);
                images.push(w);
                continue;
            }
            let mut w = images.last().unwrap().clone();
            orthogonalize(&mut w, locked.iter().chain(basis.iter()));
            let n = norm(&w);
            if n < 1e-10 * norm(images.last().unwrap()).max(1e-300) || n < 1e-300 {
                exhausted = true;
                break;
            }
            w.iter_mut().for_each(|x| *x /= n);
            basis.push(w);
        }
        let k = basis.len();
        let mut h = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let ritz = |col: usize| -> (Vec<f64>, Vec<f64>) {
            let mut x = vec![0.0; dim];
            let mut ax = vec![0.0; dim];
            for i in 0..k {
                let c = eig.eigenvectors[(i, col)];
                axpy(c, &basis[i], &mut x);
                axpy(c, &images[i], &mut ax);
            }
            (x, ax)
        };
        let theta = eig.eigenvalues[order[0]];
        let (mut x, _) = ritz(order[0]);
        // Re-apply for an honest residual and to shed accumulated drift.
        orthogonalize(&mut x, locked.iter());
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let mut ax = vec![0.0; dim];
        apply(&x, &mut ax);
        let theta = {
            let t = dot(&x, &ax);
            if t.is_finite() { t } else { theta }
        };
        let mut r = ax.clone();
        axpy(-theta, &x, &mut r);
        orthogonalize(&mut r, locked.iter());
        let residual = norm(&r);
        best_residual = best_residual.min(residual);
        if residual <= options.tol * theta.abs().max(1.0) {
            return Ok(EigenPair {
                value: theta,
                vector: x,
                residual,
            });
        }
        // Thick restart: keep the lowest Ritz vectors, then continue the
        // Krylov recursion from the current residual direction.
        let mut new_basis: Vec<Vec<f64>> = Vec::with_capacity(m_max);
        let mut new_images: Vec<Vec<f64>> = Vec::with_capacity(m_max);
        new_basis.push(x);
        new_images.push(ax);
        for &col in order.iter().skip(1).take(keep - 1) {
            let (mut v, mut av) = ritz(col);
            for (q, aq) in new_basis.iter().zip(&new_images) {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
                axpy(-c, aq, &mut av);
            }
            let n = norm(&v);
            if n < 1e-8 {
                continue;
            }
            v.iter_mut().for_each(|t| *t /= n);
            av.iter_mut().for_each(|t| *t /= n);
            new_basis.push(v);
            new_images.push(av);
        }
        let mut next = if exhausted { random_start(dim, locked, rng)? } else { r };
        orthogonalize(&mut next, locked.iter().chain(new_basis.iter()));
        let n = norm(&next);
        if n > 1e-12 {
            next.iter_mut().for_each(|t| *t /= n);
            new_basis.push(next);
        }
        basis = new_basis;
        images = new_images;
    }
    Err(Error::NoConvergence(format!(
        "Lanczos did not converge after {} restarts (best residual {best_residual:.3e})",
        options.max_restarts
    )))
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    sorted_eigen(m).0[0]
}

/// `f(M)` for symmetric `M` through its eigendecomposition.
pub fn symmetric_function(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(m);
    let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| vectors[(i, j)] * f(values[j]));
    &scaled * vectors.transpose()
}

pub fn max_abs_difference(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    max_abs_difference(m, &m.transpose())
}
