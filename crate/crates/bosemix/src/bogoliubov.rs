//! Quadratic fluctuations around a Hartree minimiser.
//!
//! Excited modes are real eigenfunctions of the mean-field operators
//! `h^α = -Δ + w_α - μ^α` restricted to the complement of the condensate. In
//! this real convention the conjugation `J` is a transpose, the pairing block
//! is real symmetric and the Hessian of the Hartree functional becomes
//!
//! ```text
//! Hess = [ h + A   A     ]      A = [ c₁K¹          √(c₁c₂)K¹² ]
//!        [ A       h + A ]          [ √(c₁c₂)K¹²ᵀ   c₂K²       ]
//! ```
//!
//! with `K^α_{mn} = V^α_{m00n}`. The Bogoliubov blocks are `B₁ = h + A` and
//! `B₂ = A`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, ExcitationCap, FockBasis, SparseOperator, ToyModel};
use crate::grid::{laplacian_apply, SpectralField};
use crate::linalg::{self, LanczosOptions};
use crate::meanfield::{effective_potentials, meanfield_residual, ModelSpec, OrbitalPair, Regime};

/// Residual above which a pair is not treated as a minimiser.
pub const MINIMISER_RESIDUAL: f64 = 1e-6;

/// Dense real four-index array `V[m][n][p][q]`, last index fastest.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Tensor4 {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: [usize; 4], f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dims);
        for m in 0..dims[0] {
            for n in 0..dims[1] {
                for p in 0..dims[2] {
                    for q in 0..dims[3] {
                        let i = t.offset(m, n, p, q);
                        t.data[i] = f(m, n, p, q);
                    }
                }
            }
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.dims.iter().product::<usize>() {
            return Err(Error::InvalidInput(format!(
                "tensor of shape {:?} carries {} entries",
                self.dims,
                self.data.len()
            )));
        }
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("tensor has non-finite entries".into()));
        }
        Ok(())
    }

    #[inline]
    fn offset(&self, m: usize, n: usize, p: usize, q: usize) -> usize {
        ((m * self.dims[1] + n) * self.dims[2] + p) * self.dims[3] + q
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize, p: usize, q: usize) -> f64 {
        self.data[self.offset(m, n, p, q)]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    /// Entries in a new basis `e'_a = Σ_m Q[m][a] e_m` per slot.
    pub fn rotated(&self, q: [&DMatrix<f64>; 4]) -> Tensor4 {
        let mut cur = self.clone();
        for slot in 0..4 {
            let qm = q[slot];
            assert_eq!(qm.nrows(), cur.dims[slot]);
            let mut dims = cur.dims;
            dims[slot] = qm.ncols();
            let next = Tensor4::from_fn(dims, |a, b, c, d| {
                let idx = [a, b, c, d];
                let mut s = 0.0;
                for k in 0..cur.dims[slot] {
                    let mut j = idx;
                    j[slot] = k;
                    s += qm[(k, idx[slot])] * cur.get(j[0], j[1], j[2], j[3]);
                }
                s
            });
            cur = next;
        }
        cur
    }

    /// `max |V_{mnpq} - V_{qpnm}|` for a single-species tensor.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dims;
        let mut e = 0.0f64;
        for m in 0..d[0] {
            for n in 0..d[1] {
                for p in 0..d[2] {
                    for q in 0..d[3] {
                        if q < d[0] && p < d[1] && n < d[2] && m < d[3] {
                            e = e.max((self.get(m, n, p, q) - self.get(q, p, n, m)).abs());
                        }
                    }
                }
            }
        }
        e
    }

    /// `max |V_{mnpq} - V_{pqmn}|` for an inter-species tensor, whose first and
    /// third slots belong to species 1.
    pub fn cross_hermiticity_error(&self) -> f64 {
        let d = self.dims;
        let mut e = 0.0f64;
        for m in 0..d[0] {
            for n in 0..d[1] {
                for p in 0..d[2] {
                    for q in 0..d[3] {
                        e = e.max((self.get(m, n, p, q) - self.get(p, q, m, n)).abs());
                    }
                }
            }
        }
        e
    }

    /// `max |V_{mnpq} - V_{nmqp}|`, exchange of the two particles.
    pub fn exchange_error(&self) -> f64 {
        let d = self.dims;
        let mut e = 0.0f64;
        for m in 0..d[0] {
            for n in 0..d[1] {
                for p in 0..d[2] {
                    for q in 0..d[3] {
                        if n < d[0] && m < d[1] && q < d[2] && p < d[3] {
                            e = e.max((self.get(m, n, p, q) - self.get(n, m, q, p)).abs());
                        }
                    }
                }
            }
        }
        e
    }
}

/// Condensate pair and real excited modes of both species.
#[derive(Clone, Debug)]
pub struct ModeBasis {
    /// `modes[α][0]` is the condensate orbital of species `α`.
    modes: [Vec<SpectralField>; 2],
    /// Eigenvalues of `h^α` belonging to the excited modes.
    energies: [Vec<f64>; 2],
}

impl ModeBasis {
    /// Excited modes per species.
    pub fn counts(&self) -> [usize; 2] {
        [self.modes[0].len() - 1, self.modes[1].len() - 1]
    }

    /// Mode `index` of `species`, index 0 being the condensate.
    pub fn mode(&self, species: usize, index: usize) -> &SpectralField {
        &self.modes[species][index]
    }

    pub fn modes(&self, species: usize) -> &[SpectralField] {
        &self.modes[species]
    }

    pub fn energies(&self, species: usize) -> &[f64] {
        &self.energies[species]
    }

    /// Largest deviation of the Gram matrices from the identity.
    pub fn gram_error(&self) -> f64 {
        let mut e = 0.0f64;
        for modes in &self.modes {
            for (i, a) in modes.iter().enumerate() {
                for (j, b) in modes.iter().enumerate() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    e = e.max((real_inner(a, b) - target).abs());
                }
            }
        }
        e
    }

    /// Mixes the excited modes of each species by orthogonal matrices; the
    /// condensate is left alone.
    pub fn remixed(&self, q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> Result<ModeBasis> {
        let counts = self.counts();
        let mut modes = self.modes.clone();
        for (species, q) in [q1, q2].into_iter().enumerate() {
            if q.shape() != (counts[species], counts[species]) {
                return Err(Error::InvalidInput("mixing matrix has the wrong size".into()));
            }
            if linalg::max_abs_difference(&(q.transpose() * q), &DMatrix::identity(q.nrows(), q.nrows())) > 1e-10 {
                return Err(Error::InvalidInput("mixing matrix is not orthogonal".into()));
            }
            for a in 0..counts[species] {
                let mut f = SpectralField::zeros(self.modes[species][0].grid());
                for m in 0..counts[species] {
                    f = f.axpy(Complex64::new(q[(m, a)], 0.0), &self.modes[species][m + 1]);
                }
                modes[species][a + 1] = f;
            }
        }
        Ok(ModeBasis {
            modes,
            energies: self.energies.clone(),
        })
    }
}

fn real_inner(a: &SpectralField, b: &SpectralField) -> f64 {
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x.re * y.re + x.im * y.im).sum();
    s * a.grid().cell_volume()
}

fn check_minimiser(minimizer: &OrbitalPair, spec: &ModelSpec) -> Result<()> {
    if spec.regime() != Regime::MeanField {
        return Err(Error::WrongRegime(
            "the fluctuation analysis is defined for mean-field models".into(),
        ));
    }
    if minimizer.u.grid() != spec.grid() {
        return Err(Error::GridMismatch);
    }
    minimizer.check_normalized()?;
    let r = meanfield_residual(minimizer, spec);
    if !(r < MINIMISER_RESIDUAL) {
        return Err(Error::Precondition(format!(
            "orbitals are not a minimiser: mean-field residual {r:.3e} exceeds {MINIMISER_RESIDUAL:.0e}"
        )));
    }
    let imag = minimizer
        .u
        .values()
        .iter()
        .chain(minimizer.v.values())
        .fold(0.0f64, |m, z| m.max(z.im.abs()));
    let scale = minimizer.u.max_abs().max(minimizer.v.max_abs());
    if imag > 1e-8 * scale {
        return Err(Error::Precondition(
            "minimiser is not real; fix the phases first".into(),
        ));
    }
    Ok(())
}

fn real_field(f: &SpectralField) -> SpectralField {
    f.map(|z| Complex64::new(z.re, 0.0))
}

/// The operators `h¹, h²` of a minimiser.
struct MeanFieldOperators<'a> {
    pots: crate::meanfield::EffectivePotentials,
    mu: [f64; 2],
    grid: &'a crate::grid::Grid,
}

impl<'a> MeanFieldOperators<'a> {
    fn new(minimizer: &OrbitalPair, spec: &'a ModelSpec) -> Self {
        let pots = effective_potentials(&minimizer.u, &minimizer.v, spec);
        let (mu1, mu2) = crate::meanfield::chemical_potentials(minimizer, spec);
        MeanFieldOperators {
            pots,
            mu: [mu1, mu2],
            grid: spec.grid(),
        }
    }

    fn apply(&self, species: usize, f: &SpectralField) -> SpectralField {
        self.pots
            .apply(species, f)
            .axpy(Complex64::new(-self.mu[species], 0.0), f)
    }

    /// `h^α` on real vectors scaled by `sqrt(cell volume)`.
    fn apply_scaled(&self, species: usize, x: &[f64], y: &mut [f64]) {
        let s = self.grid.cell_volume().sqrt();
        let vals: Vec<f64> = x.iter().map(|v| v / s).collect();
        let f = SpectralField::from_real(self.grid, &vals).expect("length matches the grid");
        let hf = self.apply(species, &f);
        for (yi, z) in y.iter_mut().zip(hf.values()) {
            *yi = z.re * s;
        }
    }
}

/// Lowest `m1`, `m2` eigenmodes of `h¹`, `h²` orthogonal to the condensate.
pub fn build_mode_basis(minimizer: &OrbitalPair, spec: &ModelSpec, m1: usize, m2: usize) -> Result<ModeBasis> {
    check_minimiser(minimizer, spec)?;
    let ops = MeanFieldOperators::new(minimizer, spec);
    let grid = spec.grid();
    let s = grid.cell_volume().sqrt();
    let mut modes: [Vec<SpectralField>; 2] = [Vec::new(), Vec::new()];
    let mut energies: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (species, count) in [m1, m2].into_iter().enumerate() {
        let cond = real_field(minimizer.component(species));
        let scaled: Vec<f64> = cond.values().iter().map(|z| z.re * s).collect();
        let apply = |x: &[f64], y: &mut [f64]| ops.apply_scaled(species, x, y);
        let pairs = if count == 0 {
            Vec::new()
        } else {
            linalg::lowest_eigenpairs(grid.len(), count, &apply, &[scaled], &LanczosOptions::default())?
        };
        modes[species].push(cond);
        for p in pairs {
            // Deterministic sign: first entry of largest magnitude positive.
            let pivot = p
                .vector
                .iter()
                .cloned()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() + 1e-12 { v } else { m });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            let vals: Vec<f64> = p.vector.iter().map(|v| sign * v / s).collect();
            modes[species].push(SpectralField::from_real(grid, &vals)?);
            energies[species].push(p.value);
        }
    }
    Ok(ModeBasis { modes, energies })
}

/// Dense matrix of `h^α` projected onto the complement of the condensate, in
/// grid coordinates scaled to the Euclidean inner product. Intended for small
/// grids.
pub fn projected_mean_field_matrix(minimizer: &OrbitalPair, spec: &ModelSpec, species: usize) -> Result<DMatrix<f64>> {
    check_minimiser(minimizer, spec)?;
    let ops = MeanFieldOperators::new(minimizer, spec);
    let n = spec.grid().len();
    let s = spec.grid().cell_volume().sqrt();
    let u0 = DVector::from_iterator(n, minimizer.component(species).values().iter().map(|z| z.re * s));
    let u0 = &u0 / u0.norm();
    let mut h = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[j] = 1.0;
        ops.apply_scaled(species, &e, &mut col);
        h.set_column(j, &DVector::from_column_slice(&col));
    }
    let p = DMatrix::identity(n, n) - &u0 * u0.transpose();
    let ph = &p * h * &p;
    Ok((&ph + ph.transpose()) * 0.5)
}

/// Two-body matrix elements `V_{mnpq} = ⟨u_m, [V*(u_n u_q)] u_p⟩` over the
/// modes including the condensate. For `v12` the first and third slots refer
/// to species 1, the second and fourth to species 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionTensor {
    pub v1: Tensor4,
    pub v2: Tensor4,
    pub v12: Tensor4,
}

fn real_values(f: &SpectralField) -> Vec<f64> {
    f.values().iter().map(|z| z.re).collect()
}

fn tensor_for(
    spec: &ModelSpec,
    which: usize,
    outer: &[SpectralField],
    inner: &[SpectralField],
) -> Tensor4 {
    let grid = spec.grid();
    let w = grid.cell_volume();
    let a = outer.len();
    let b = inner.len();
    let outer_re: Vec<Vec<f64>> = outer.iter().map(real_values).collect();
    // Potential fields C_{nq} = V * (u_n u_q) for n ≤ q.
    let pairs: Vec<(usize, usize)> = (0..b).flat_map(|n| (n..b).map(move |q| (n, q))).collect();
    let convolved: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(n, q)| {
            let prod = real_field(&inner[n].pointwise(&inner[q]));
            real_values(&spec.interact(which, &prod))
        })
        .collect();
    let lookup = |n: usize, q: usize| {
        let (lo, hi) = if n <= q { (n, q) } else { (q, n) };
        // Index of (lo, hi) in the triangular enumeration.
        lo * b - lo * (lo + 1) / 2 + hi
    };
    let entries: Vec<f64> = (0..a * b * a * b)
        .into_par_iter()
        .map(|flat| {
            let q = flat % b;
            let p = (flat / b) % a;
            let n = (flat / (a * b)) % b;
            let m = flat / (a * b * b);
            let c = &convolved[lookup(n, q)];
            let (um, up) = (&outer_re[m], &outer_re[p]);
            let mut s = 0.0;
            for i in 0..c.len() {
                s += um[i] * up[i] * c[i];
            }
            s * w
        })
        .collect();
    Tensor4 {
        dims: [a, b, a, b],
        data: entries,
    }
}

/// Interaction tensors over the mode basis, condensate included.
pub fn interaction_tensor(basis: &ModeBasis, spec: &ModelSpec) -> Result<InteractionTensor> {
    if basis.mode(0, 0).grid() != spec.grid() {
        return Err(Error::GridMismatch);
    }
    let (u, v) = (basis.modes(0), basis.modes(1));
    Ok(InteractionTensor {
        v1: tensor_for(spec, 0, u, u),
        v2: tensor_for(spec, 1, v, v),
        v12: tensor_for(spec, 2, u, v),
    })
}

/// `⟨f_m, op f_n⟩` over the excited modes (indices 1..).
fn one_body_block(modes: &[SpectralField], op: impl Fn(&SpectralField) -> SpectralField + Sync) -> DMatrix<f64> {
    let k = modes.len() - 1;
    let images: Vec<SpectralField> = modes[1..].par_iter().map(|f| op(f)).collect();
    let mut m = DMatrix::from_fn(k, k, |i, j| real_inner(&modes[i + 1], &images[j]));
    m = (&m + m.transpose()) * 0.5;
    m
}

/// `h¹ ⊕ h²` on the excited modes by grid quadrature.
fn mean_field_block(minimizer: &OrbitalPair, spec: &ModelSpec, basis: &ModeBasis) -> DMatrix<f64> {
    let ops = MeanFieldOperators::new(minimizer, spec);
    let [k1, k2] = basis.counts();
    let h1 = one_body_block(basis.modes(0), |f| ops.apply(0, f));
    let h2 = one_body_block(basis.modes(1), |f| ops.apply(1, f));
    let mut h = DMatrix::zeros(k1 + k2, k1 + k2);
    h.view_mut((0, 0), (k1, k1)).copy_from(&h1);
    h.view_mut((k1, k1), (k2, k2)).copy_from(&h2);
    h
}

/// `2(M₁+M₂)`-dimensional Hessian of the Hartree functional in the mode
/// basis, ordered as (species-1 modes, species-2 modes, conjugate copies).
pub fn assemble_hessian(minimizer: &OrbitalPair, spec: &ModelSpec, basis: &ModeBasis) -> Result<DMatrix<f64>> {
    check_minimiser(minimizer, spec)?;
    let [k1, k2] = basis.counts();
    let [c1, c2] = spec.ratios();
    let h = mean_field_block(minimizer, spec, basis);
    let u0 = real_field(basis.mode(0, 0));
    let v0 = real_field(basis.mode(1, 0));
    // Kernel images: (K¹f)(x) = u₀(x)[V¹*(u₀f)](x), (K¹²g)(x) = u₀(x)[V¹²*(v₀g)](x).
    let k_apply = |which: usize, left: &SpectralField, right: &SpectralField, f: &SpectralField| {
        left.pointwise(&spec.interact(which, &right.pointwise(f)))
    };
    let k1m = one_body_block(basis.modes(0), |f| k_apply(0, &u0, &u0, f));
    let k2m = one_body_block(basis.modes(1), |f| k_apply(1, &v0, &v0, f));
    let k12_images: Vec<SpectralField> = basis.modes(1)[1..]
        .par_iter()
        .map(|g| k_apply(2, &u0, &v0, g))
        .collect();
    let k12 = DMatrix::from_fn(k1, k2, |m, n| real_inner(basis.mode(0, m + 1), &k12_images[n]));
    let mut a = DMatrix::zeros(k1 + k2, k1 + k2);
    let cc = (c1 * c2).sqrt();
    a.view_mut((0, 0), (k1, k1)).copy_from(&(k1m * c1));
    a.view_mut((k1, k1), (k2, k2)).copy_from(&(k2m * c2));
    a.view_mut((0, k1), (k1, k2)).copy_from(&(&k12 * cc));
    a.view_mut((k1, 0), (k2, k1)).copy_from(&(k12.transpose() * cc));
    Ok(arrange_hessian(&(&h + &a), &a))
}

/// `[[B₁, B₂], [B₂, B₁]]`.
pub fn arrange_hessian(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> DMatrix<f64> {
    let k = b1.nrows();
    let mut m = DMatrix::zeros(2 * k, 2 * k);
    m.view_mut((0, 0), (k, k)).copy_from(b1);
    m.view_mut((k, k), (k, k)).copy_from(b1);
    m.view_mut((0, k), (k, k)).copy_from(b2);
    m.view_mut((k, 0), (k, k)).copy_from(b2);
    m
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn hessian_bottom(hessian: &DMatrix<f64>) -> f64 {
    linalg::min_eigenvalue(hessian)
}

/// One-body block `B₁`, pairing block `B₂` and scalar of the quadratic
/// Hamiltonian
///
/// ```text
/// ℍ = Σ B₁_{ij} c_i* c_j + ½ Σ B₂_{ij} (c_i* c_j* + c_i c_j) + constant
/// ```
///
/// over the excited modes `c = (a₁, …, a_{M₁}, b₁, …, b_{M₂})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticBlocks {
    pub modes: [usize; 2],
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    /// `h¹ ⊕ h²` on the excited modes.
    pub h_block: DMatrix<f64>,
    pub constant: f64,
}

impl QuadraticBlocks {
    pub fn new(b1: DMatrix<f64>, b2: DMatrix<f64>, h_block: DMatrix<f64>, constant: f64, modes: [usize; 2]) -> Result<Self> {
        let k = modes[0] + modes[1];
        for (name, m) in [("B1", &b1), ("B2", &b2), ("h", &h_block)] {
            if m.shape() != (k, k) {
                return Err(Error::InvalidInput(format!(
                    "{name} has shape {:?}, expected {k}x{k}",
                    m.shape()
                )));
            }
            let scale = m.iter().fold(1.0f64, |a, x| a.max(x.abs()));
            if linalg::asymmetry(m) > 1e-12 * scale {
                return Err(Error::InvalidInput(format!("{name} is not symmetric")));
            }
        }
        Ok(QuadraticBlocks {
            modes,
            b1,
            b2,
            h_block,
            constant,
        })
    }

    pub fn len(&self) -> usize {
        self.b1.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[[A, A], [A, A]]` with `A = B₂`: the interaction part of the Hessian.
    pub fn interaction_part(&self) -> DMatrix<f64> {
        arrange_hessian(&self.b2, &self.b2)
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        arrange_hessian(&self.b1, &self.b2)
    }

    /// `‖B₁^{-1/2} B₂ B₁^{-1/2}‖`, infinite when `B₁` is not positive.
    pub fn pairing_ratio(&self) -> f64 {
        if linalg::min_eigenvalue(&self.b1) <= 0.0 {
            return f64::INFINITY;
        }
        let r = linalg::symmetric_function(&self.b1, |x| 1.0 / x.sqrt());
        let m = &r * &self.b2 * &r;
        let (vals, _) = linalg::sorted_eigen(&m);
        vals.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }
}

/// Blocks from one-body matrix `h` and the tensors with mode 0 as condensate.
pub(crate) fn blocks_from_parts(
    h: DMatrix<f64>,
    tensor: &InteractionTensor,
    c: [f64; 2],
) -> Result<QuadraticBlocks> {
    let k1 = tensor.v1.dims[0] - 1;
    let k2 = tensor.v2.dims[0] - 1;
    let [c1, c2] = c;
    let cc = (c1 * c2).sqrt();
    let (v1, v2, v12) = (&tensor.v1, &tensor.v2, &tensor.v12);
    let mut b1 = h.clone();
    let mut b2 = DMatrix::zeros(k1 + k2, k1 + k2);
    for m in 0..k1 {
        for n in 0..k1 {
            b1[(m, n)] += c1 * v1.get(m + 1, 0, 0, n + 1);
            b2[(m, n)] = c1 * v1.get(m + 1, n + 1, 0, 0);
        }
    }
    for m in 0..k2 {
        for n in 0..k2 {
            b1[(k1 + m, k1 + n)] += c2 * v2.get(m + 1, 0, 0, n + 1);
            b2[(k1 + m, k1 + n)] = c2 * v2.get(m + 1, n + 1, 0, 0);
        }
    }
    for m in 0..k1 {
        for n in 0..k2 {
            // a_m* b_n couples through V¹²_{m00n}; b_n* a_m through V¹²_{0nm0}.
            b1[(m, k1 + n)] = cc * v12.get(m + 1, 0, 0, n + 1);
            b1[(k1 + n, m)] = cc * v12.get(0, n + 1, m + 1, 0);
            let pair = cc * v12.get(m + 1, n + 1, 0, 0);
            b2[(m, k1 + n)] = pair;
            b2[(k1 + n, m)] = pair;
        }
    }
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    let constant = -0.5 * c1 * v1.get(0, 0, 0, 0) - 0.5 * c2 * v2.get(0, 0, 0, 0);
    QuadraticBlocks::new(sym(b1), sym(b2), h, constant, [k1, k2])
}

/// Bogoliubov blocks of a mean-field minimiser over a mode basis.
pub fn assemble_bogoliubov(minimizer: &OrbitalPair, spec: &ModelSpec, basis: &ModeBasis) -> Result<QuadraticBlocks> {
    check_minimiser(minimizer, spec)?;
    let h = mean_field_block(minimizer, spec, basis);
    let tensor = interaction_tensor(basis, spec)?;
    blocks_from_parts(h, &tensor, spec.ratios())
}

/// Few-mode model obtained by projecting the many-body Hamiltonian onto the
/// mode basis: `T^α_{mn} = ⟨f_m, (-Δ + U^α) f_n⟩` and the interaction tensors.
pub fn project_toy_model(spec: &ModelSpec, basis: &ModeBasis, n1: usize, n2: usize) -> Result<ToyModel> {
    let tensor = interaction_tensor(basis, spec)?;
    let t = |species: usize| {
        let modes = basis.modes(species);
        let trap = spec.trap(species);
        let images: Vec<SpectralField> = modes
            .par_iter()
            .map(|f| laplacian_apply(f).axpy(Complex64::new(1.0, 0.0), &trap.pointwise(f)))
            .collect();
        let m = DMatrix::from_fn(modes.len(), modes.len(), |i, j| real_inner(&modes[i], &images[j]));
        (&m + m.transpose()) * 0.5
    };
    ToyModel::new(t(0), t(1), tensor.v1, tensor.v2, tensor.v12, n1, n2)
}

/// Excitation energies and ground-state energy of a quadratic Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BogoliubovSpectrum {
    /// Ascending.
    pub xi: Vec<f64>,
    /// `inf σ(ℍ)`.
    pub ground_energy: f64,
}

impl BogoliubovSpectrum {
    /// Lowest `count` excitation energies above the ground state, each being a
    /// sum `Σ n_i ξ_i` with at least one quantum.
    pub fn excitation_levels(&self, count: usize) -> Vec<f64> {
        // The lowest `count` levels use at most `count` quanta.
        fn fill(xi: &[f64], quanta: usize, base: f64, out: &mut Vec<f64>) {
            match xi.split_first() {
                None => out.push(base),
                Some((&x, rest)) => {
                    for k in 0..=quanta {
                        fill(rest, quanta - k, base + k as f64 * x, out);
                    }
                }
            }
        }
        let mut levels = Vec::new();
        fill(&self.xi, count, 0.0, &mut levels);
        levels.sort_by(f64::total_cmp);
        levels.into_iter().skip(1).take(count).collect()
    }
}

/// Symplectic diagonalisation: `ξ` are the square roots of the eigenvalues of
/// `(B₁-B₂)^{1/2} (B₁+B₂) (B₁-B₂)^{1/2}` and
/// `inf σ(ℍ) = ½(Σξ - tr B₁) + constant`.
pub fn diagonalize_quadratic(blocks: &QuadraticBlocks) -> Result<BogoliubovSpectrum> {
    if blocks.is_empty() {
        return Ok(BogoliubovSpectrum {
            xi: Vec::new(),
            ground_energy: blocks.constant,
        });
    }
    let b1_min = linalg::min_eigenvalue(&blocks.b1);
    if !(b1_min > 0.0) {
        return Err(Error::Hypothesis(format!(
            "B1 is not positive definite (smallest eigenvalue {b1_min:.3e})"
        )));
    }
    let ratio = blocks.pairing_ratio();
    if !(ratio < 1.0) {
        return Err(Error::Hypothesis(format!(
            "pairing bound fails: ‖B1^(-1/2) B2 B1^(-1/2)‖ = {ratio:.6} is not below 1"
        )));
    }
    let minus = &blocks.b1 - &blocks.b2;
    let plus = &blocks.b1 + &blocks.b2;
    let root = linalg::symmetric_function(&minus, |x| x.max(0.0).sqrt());
    let m = &root * plus * &root;
    let (vals, _) = linalg::sorted_eigen(&m);
    let xi: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    let ground_energy = 0.5 * (xi.iter().sum::<f64>() - blocks.b1.trace()) + blocks.constant;
    Ok(BogoliubovSpectrum { xi, ground_energy })
}

/// Checks `(1/C)(dΓ(h) + 𝒩) - C ≤ ℍ ≤ dΓ(h) + C𝒩 + C` on the excitation space
/// with at most `quanta` quanta. Returns false for `C ≤ 0`.
pub fn sandwich_bounds_check(blocks: &QuadraticBlocks, spectrum: &BogoliubovSpectrum, c: f64, quanta: usize) -> Result<bool> {
    if !(c > 0.0) {
        return Ok(false);
    }
    if spectrum.xi.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Precondition("spectrum has negative excitation energies".into()));
    }
    let basis = FockBasis::excitations(blocks.modes, ExcitationCap::Total(quanta))?;
    let hb = fock::quadratic_hamiltonian(blocks, &basis)?;
    let dgamma = fock::one_body_operator(&blocks.h_block, &basis)?;
    let number = fock::one_body_operator(&DMatrix::identity(blocks.len(), blocks.len()), &basis)?;
    let lower = SparseOperator::combine(&[(1.0, &hb), (-1.0 / c, &dgamma), (-1.0 / c, &number)], c)?;
    let upper = SparseOperator::combine(&[(1.0, &dgamma), (c, &number), (-1.0, &hb)], c)?;
    let scale = 1.0 + c + blocks.b1.iter().fold(0.0f64, |a, x| a.max(x.abs())) * quanta as f64;
    let tol = 1e-9 * scale;
    Ok(fock::lowest_eigenvalue(&lower)? >= -tol && fock::lowest_eigenvalue(&upper)? >= -tol)
}

/// Smallest power of two `C ≥ 1` passing [`sandwich_bounds_check`], if any
/// below `2^30`.
pub fn find_sandwich_constant(blocks: &QuadraticBlocks, spectrum: &BogoliubovSpectrum, quanta: usize) -> Result<Option<f64>> {
    let mut c = 1.0;
    for _ in 0..=30 {
        if sandwich_bounds_check(blocks, spectrum, c, quanta)? {
            return Ok(Some(c));
        }
        c *= 2.0;
    }
    Ok(None)
}
