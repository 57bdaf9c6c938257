//! Exact diagonalisation on truncated two-species Fock spaces.
//!
//! Two kinds of basis are used. A *sector* basis holds every occupation
//! pattern with exactly `N₁` particles in the `d₁` species-1 modes and `N₂` in
//! the `d₂` species-2 modes, mode 0 of each species being the condensate. An
//! *excitation* basis holds occupations of the excited modes only, truncated
//! either per species or by total number of quanta.
//!
//! Sector states are enumerated with species-1 occupations in the outer loop
//! and species-2 in the inner loop, each in descending lexicographic order of
//! the occupation vector, so index 0 is the pure condensate. Excitation
//! states are ordered by total quanta, then by species-1 quanta descending,
//! then lexicographically descending.
//!
//! All coefficients are real.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::{self, diagonalize_quadratic, QuadraticBlocks, Tensor4};
use crate::error::{Error, Result};
use crate::linalg::{self, EigenPair, LanczosOptions};

/// Largest number of modes (both species together) a basis may carry.
pub const MAX_MODES: usize = 16;
/// Dimension up to which eigenproblems are solved densely.
pub const DENSE_LIMIT: usize = 2000;
/// Default cap on the dimension of assembled operators.
pub const DEFAULT_DIMENSION_CAP: usize = 250_000;

type Occupation = [u8; MAX_MODES];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExcitationCap {
    /// At most `N₁` species-1 and `N₂` species-2 quanta.
    PerSpecies(usize, usize),
    /// At most `Q` quanta in total.
    Total(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    Sector { n1: usize, n2: usize },
    Excitations(ExcitationCap),
}

/// Occupation-number basis with index maps both ways.
#[derive(Clone, Debug)]
pub struct FockBasis {
    modes: [usize; 2],
    kind: BasisKind,
    states: Vec<Occupation>,
    index: HashMap<Occupation, usize>,
}

impl PartialEq for FockBasis {
    fn eq(&self, other: &Self) -> bool {
        self.modes == other.modes && self.kind == other.kind
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Vectors of `parts` nonnegative entries summing to `total`, descending
/// lexicographic.
fn compositions(parts: usize, total: usize) -> Vec<Vec<u8>> {
    if parts == 0 {
        return if total == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for rest in compositions(parts - 1, total - first) {
            let mut v = Vec::with_capacity(parts);
            v.push(first as u8);
            v.extend(rest);
            out.push(v);
        }
    }
    out
}

impl FockBasis {
    /// Number of states in the `(N₁, N₂)` sector.
    pub fn sector_dimension(d1: usize, d2: usize, n1: usize, n2: usize) -> u128 {
        binomial(n1 + d1 - 1, d1 - 1) * binomial(n2 + d2 - 1, d2 - 1)
    }

    pub fn sector(d1: usize, d2: usize, n1: usize, n2: usize) -> Result<Self> {
        Self::sector_capped(d1, d2, n1, n2, DEFAULT_DIMENSION_CAP)
    }

    pub fn sector_capped(d1: usize, d2: usize, n1: usize, n2: usize, cap: usize) -> Result<Self> {
        if d1 == 0 || d2 == 0 || d1 + d2 > MAX_MODES {
            return Err(Error::InvalidInput(format!(
                "mode counts ({d1}, {d2}) must be positive with sum at most {MAX_MODES}"
            )));
        }
        if n1 > 255 || n2 > 255 {
            return Err(Error::InvalidInput("particle numbers above 255 are not supported".into()));
        }
        let dim = Self::sector_dimension(d1, d2, n1, n2);
        if dim > cap as u128 {
            return Err(Error::DimensionCap {
                dim: dim.min(usize::MAX as u128) as usize,
                cap,
            });
        }
        let first = compositions(d1, n1);
        let second = compositions(d2, n2);
        let mut states = Vec::with_capacity(dim as usize);
        for a in &first {
            for b in &second {
                let mut occ = [0u8; MAX_MODES];
                occ[..d1].copy_from_slice(a);
                occ[d1..d1 + d2].copy_from_slice(b);
                states.push(occ);
            }
        }
        Ok(Self::from_states([d1, d2], BasisKind::Sector { n1, n2 }, states))
    }

    /// Excitation basis over `modes = [M₁, M₂]` excited modes.
    pub fn excitations(modes: [usize; 2], cap: ExcitationCap) -> Result<Self> {
        Self::excitations_capped(modes, cap, DEFAULT_DIMENSION_CAP)
    }

    pub fn excitations_capped(modes: [usize; 2], cap: ExcitationCap, dim_cap: usize) -> Result<Self> {
        let [k1, k2] = modes;
        if k1 + k2 > MAX_MODES {
            return Err(Error::InvalidInput(format!("at most {MAX_MODES} modes are supported")));
        }
        let (max1, max2, max_total) = match cap {
            ExcitationCap::PerSpecies(a, b) => (a, b, a + b),
            ExcitationCap::Total(q) => (q, q, q),
        };
        if max1 > 255 || max2 > 255 {
            return Err(Error::InvalidInput("occupations above 255 are not supported".into()));
        }
        let count = |k: usize, j: usize| if k == 0 { u128::from(j == 0) } else { binomial(j + k - 1, k - 1) };
        let mut dim: u128 = 0;
        for total in 0..=max_total {
            for j in (0..=total).rev() {
                if j <= max1 && total - j <= max2 {
                    dim += count(k1, j) * count(k2, total - j);
                }
            }
        }
        if dim > dim_cap as u128 {
            return Err(Error::DimensionCap {
                dim: dim.min(usize::MAX as u128) as usize,
                cap: dim_cap,
            });
        }
        let mut states = Vec::with_capacity(dim as usize);
        for total in 0..=max_total {
            for j in (0..=total).rev() {
                if j > max1 || total - j > max2 {
                    continue;
                }
                for a in compositions(k1, j) {
                    for b in compositions(k2, total - j) {
                        let mut occ = [0u8; MAX_MODES];
                        occ[..k1].copy_from_slice(&a);
                        occ[k1..k1 + k2].copy_from_slice(&b);
                        states.push(occ);
                    }
                }
            }
        }
        Ok(Self::from_states(modes, BasisKind::Excitations(cap), states))
    }

    fn from_states(modes: [usize; 2], kind: BasisKind, states: Vec<Occupation>) -> Self {
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        FockBasis {
            modes,
            kind,
            states,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Modes per species.
    pub fn modes(&self) -> [usize; 2] {
        self.modes
    }

    pub fn total_modes(&self) -> usize {
        self.modes[0] + self.modes[1]
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// Occupations of state `i`, species-1 modes first.
    pub fn state(&self, i: usize) -> &[u8] {
        &self.states[i][..self.total_modes()]
    }

    pub fn index_of(&self, occupations: &[u8]) -> Option<usize> {
        if occupations.len() != self.total_modes() {
            return None;
        }
        let mut key = [0u8; MAX_MODES];
        key[..occupations.len()].copy_from_slice(occupations);
        self.index.get(&key).copied()
    }

    /// Particles of each species in state `i`.
    pub fn numbers(&self, i: usize) -> [usize; 2] {
        numbers_of(&self.states[i], self.modes)
    }

    /// Flat mode index of mode `m` of `species`.
    pub fn mode_index(&self, species: usize, m: usize) -> usize {
        assert!(m < self.modes[species]);
        species * self.modes[0] + m
    }
}

fn numbers_of(occ: &Occupation, modes: [usize; 2]) -> [usize; 2] {
    let a = occ[..modes[0]].iter().map(|&x| x as usize).sum();
    let b = occ[modes[0]..modes[0] + modes[1]].iter().map(|&x| x as usize).sum();
    [a, b]
}

/// Real state vector over a basis.
#[derive(Clone, Debug)]
pub struct ManyBodyVector {
    basis: Arc<FockBasis>,
    coefficients: Vec<f64>,
}

impl ManyBodyVector {
    pub fn new(basis: Arc<FockBasis>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != basis.len() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for a basis of dimension {}",
                coefficients.len(),
                basis.len()
            )));
        }
        Ok(ManyBodyVector { basis, coefficients })
    }

    pub fn zeros(basis: Arc<FockBasis>) -> Self {
        let n = basis.len();
        ManyBodyVector {
            basis,
            coefficients: vec![0.0; n],
        }
    }

    pub fn basis_state(basis: Arc<FockBasis>, index: usize) -> Self {
        let mut v = Self::zeros(basis);
        v.coefficients[index] = 1.0;
        v
    }

    /// Normalised vector with independent uniform entries.
    pub fn random(basis: Arc<FockBasis>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = ManyBodyVector { basis, coefficients: c };
        v.normalized().expect("random vector is nonzero")
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.coefficients)
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if !(n > 0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(ManyBodyVector {
            basis: self.basis.clone(),
            coefficients: self.coefficients.iter().map(|c| c / n).collect(),
        })
    }

    pub fn inner(&self, other: &ManyBodyVector) -> Result<f64> {
        if *self.basis != *other.basis {
            return Err(Error::InvalidInput("vectors live on different bases".into()));
        }
        Ok(linalg::dot(&self.coefficients, &other.coefficients))
    }
}

/// One factor of an operator monomial.
#[derive(Clone)]
pub enum Factor {
    Create(usize),
    Annihilate(usize),
    /// Function of the particle numbers `(𝒩₁, 𝒩₂)` counted over the basis
    /// modes; arguments are passed as floats.
    Diag(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Factor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Factor::Create(i) => write!(f, "c*{i}"),
            Factor::Annihilate(i) => write!(f, "c{i}"),
            Factor::Diag(_) => write!(f, "f(N)"),
        }
    }
}

/// `coefficient · F₁ F₂ ⋯ F_k`, the rightmost factor acting first.
#[derive(Clone, Debug)]
pub struct Term {
    pub coefficient: f64,
    pub factors: Vec<Factor>,
}

impl Term {
    pub fn new(coefficient: f64, factors: Vec<Factor>) -> Self {
        Term { coefficient, factors }
    }
}

pub fn diag(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Factor {
    Factor::Diag(Arc::new(f))
}

/// Applies a monomial to an occupation pattern. Results with a negative
/// occupation or exceeding 255 vanish.
fn apply_factors(occ: &Occupation, modes: [usize; 2], factors: &[Factor]) -> Option<(Occupation, f64)> {
    let mut state = *occ;
    let mut amp = 1.0;
    for factor in factors.iter().rev() {
        match factor {
            Factor::Annihilate(i) => {
                let n = state[*i];
                if n == 0 {
                    return None;
                }
                amp *= (n as f64).sqrt();
                state[*i] = n - 1;
            }
            Factor::Create(i) => {
                let n = state[*i];
                if n == u8::MAX {
                    return None;
                }
                amp *= (n as f64 + 1.0).sqrt();
                state[*i] = n + 1;
            }
            Factor::Diag(f) => {
                let [a, b] = numbers_of(&state, modes);
                amp *= f(a as f64, b as f64);
            }
        }
        if amp == 0.0 {
            return None;
        }
    }
    Some((state, amp))
}

/// Real sparse matrix in compressed-row form over a basis.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    basis: Arc<FockBasis>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    hermitian: bool,
}

impl SparseOperator {
    /// `Σ terms` restricted to the basis; contributions leaving the basis are
    /// dropped.
    pub fn assemble(basis: Arc<FockBasis>, terms: &[Term]) -> Self {
        let modes = basis.modes();
        let terms: Vec<&Term> = terms.iter().filter(|t| t.coefficient != 0.0).collect();
        let columns: Vec<Vec<(usize, f64)>> = (0..basis.len())
            .into_par_iter()
            .map(|j| {
                let mut col: Vec<(usize, f64)> = Vec::new();
                for t in &terms {
                    if let Some((occ, amp)) = apply_factors(&basis.states[j], modes, &t.factors) {
                        if let Some(&i) = basis.index.get(&occ) {
                            col.push((i, t.coefficient * amp));
                        }
                    }
                }
                merge_entries(col)
            })
            .collect();
        Self::from_columns(basis, &columns)
    }

    fn from_columns(basis: Arc<FockBasis>, columns: &[Vec<(usize, f64)>]) -> Self {
        let n = basis.len();
        let mut counts = vec![0usize; n + 1];
        for col in columns {
            for &(i, _) in col {
                counts[i + 1] += 1;
            }
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let nnz = row_ptr[n];
        let mut cols = vec![0usize; nnz];
        let mut vals = vec![0.0f64; nnz];
        for (j, col) in columns.iter().enumerate() {
            for &(i, v) in col {
                cols[next[i]] = j;
                vals[next[i]] = v;
                next[i] += 1;
            }
        }
        let mut op = SparseOperator {
            basis,
            row_ptr,
            cols,
            vals,
            hermitian: false,
        };
        let scale = op.vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        op.hermitian = op.symmetry_error() <= 1e-12 * scale;
        op
    }

    /// Operator with the given diagonal.
    pub fn diagonal_from(basis: Arc<FockBasis>, diagonal: &[f64]) -> Self {
        let columns: Vec<Vec<(usize, f64)>> = diagonal
            .iter()
            .enumerate()
            .map(|(i, &v)| if v != 0.0 { vec![(i, v)] } else { Vec::new() })
            .collect();
        Self::from_columns(basis, &columns)
    }

    pub fn identity(basis: Arc<FockBasis>) -> Self {
        let d = vec![1.0; basis.len()];
        Self::diagonal_from(basis, &d)
    }

    /// `Σ w_k A_k + shift·1` over operators on the same basis.
    pub fn combine(parts: &[(f64, &SparseOperator)], shift: f64) -> Result<Self> {
        let basis = match parts.first() {
            Some((_, op)) => op.basis.clone(),
            None => return Err(Error::InvalidInput("nothing to combine".into())),
        };
        if parts.iter().any(|(_, op)| *op.basis != *basis) {
            return Err(Error::InvalidInput("operators live on different bases".into()));
        }
        let n = basis.len();
        let columns: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|r| {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for (w, op) in parts {
                    for k in op.row_ptr[r]..op.row_ptr[r + 1] {
                        row.push((op.cols[k], w * op.vals[k]));
                    }
                }
                if shift != 0.0 {
                    row.push((r, shift));
                }
                merge_entries(row)
            })
            .collect();
        // Rows assembled as columns of the transpose.
        Ok(Self::from_columns(basis, &columns).transpose())
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim();
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for r in 0..n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                columns[r].push((self.cols[k], self.vals[k]));
            }
        }
        Self::from_columns(self.basis.clone(), &columns)
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Whether the entries are symmetric to `1e-12` relative.
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    /// Nonzero entries of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    /// `max |A_ij - A_ji|`.
    pub fn symmetry_error(&self) -> f64 {
        (0..self.dim())
            .into_par_iter()
            .map(|i| {
                self.row(i)
                    .map(|(j, v)| (v - self.get(j, i)).abs())
                    .fold(0.0f64, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// `y = A x`, rows in parallel.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        });
    }

    pub fn apply_vector(&self, v: &ManyBodyVector) -> Result<ManyBodyVector> {
        if *v.basis != *self.basis {
            return Err(Error::InvalidInput("vector lives on a different basis".into()));
        }
        let mut y = vec![0.0; self.dim()];
        self.apply(&v.coefficients, &mut y);
        ManyBodyVector::new(self.basis.clone(), y)
    }

    pub fn expectation(&self, v: &ManyBodyVector) -> Result<f64> {
        let av = self.apply_vector(v)?;
        v.inner(&av)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `max |A_ij - B_ij|` over the union of both patterns.
    pub fn max_difference(&self, other: &SparseOperator) -> Result<f64> {
        Ok(Self::combine(&[(1.0, self), (-1.0, other)], 0.0)?
            .vals
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs())))
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// True when every nonzero entry connects states with equal particle
    /// numbers of each species.
    pub fn conserves_numbers(&self) -> bool {
        (0..self.dim()).all(|i| {
            let ni = self.basis.numbers(i);
            self.row(i).all(|(j, _)| self.basis.numbers(j) == ni)
        })
    }
}

fn merge_entries(mut entries: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (i, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => out.push((i, v)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

/// Lowest `count` eigenpairs of a symmetric operator: dense up to
/// [`DENSE_LIMIT`], restarted Lanczos above.
pub fn lowest_eigenpairs(op: &SparseOperator, count: usize) -> Result<Vec<EigenPair>> {
    if !op.is_hermitian() {
        return Err(Error::InvalidInput("operator is not hermitian".into()));
    }
    let n = op.dim();
    let count = count.min(n);
    if n <= DENSE_LIMIT {
        let (vals, vecs) = linalg::sorted_eigen(&op.to_dense());
        return Ok((0..count)
            .map(|k| {
                let vector: Vec<f64> = vecs.column(k).iter().cloned().collect();
                let mut r = vec![0.0; n];
                op.apply(&vector, &mut r);
                r.iter_mut().zip(&vector).for_each(|(ri, xi)| *ri -= vals[k] * xi);
                EigenPair {
                    value: vals[k],
                    residual: linalg::norm(&r),
                    vector,
                }
            })
            .collect());
    }
    let opts = LanczosOptions {
        tol: 1e-11,
        ..LanczosOptions::default()
    };
    linalg::lowest_eigenpairs(n, count, &|x, y| op.apply(x, y), &[], &opts)
}

pub fn lowest_eigenvalue(op: &SparseOperator) -> Result<f64> {
    Ok(lowest_eigenpairs(op, 1)?[0].value)
}

/// Residual bound demanded of ground states.
pub const GROUND_STATE_RESIDUAL: f64 = 1e-8;

/// Lowest eigenvalue and eigenvector, with the sign fixed so the entry of
/// largest magnitude is positive.
pub fn ground_state(op: &SparseOperator) -> Result<(f64, ManyBodyVector)> {
    let pair = lowest_eigenpairs(op, 1)?.remove(0);
    if !(pair.residual < GROUND_STATE_RESIDUAL) {
        return Err(Error::NoConvergence(format!(
            "ground-state residual {:.3e} above {GROUND_STATE_RESIDUAL:.0e}",
            pair.residual
        )));
    }
    let mut v = pair.vector;
    let pivot = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() * (1.0 + 1e-12) { x } else { m });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok((pair.value, ManyBodyVector::new(op.basis.clone(), v)?))
}

/// Few-mode two-species model: one-body matrices and interaction tensors
/// over mode indices, with particle numbers.
///
/// The Hamiltonian is
/// `Σ T¹_{mn} a*_m a_n + Σ T²_{mn} b*_m b_n + (1/N)[½ Σ V¹_{mnpq} a*_m a*_n a_q a_p
/// + ½ Σ V²_{mnpq} b*_m b*_n b_q b_p + Σ V¹²_{mnpq} a*_m b*_n b_q a_p]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub t1: DMatrix<f64>,
    pub t2: DMatrix<f64>,
    pub v1: Tensor4,
    pub v2: Tensor4,
    /// First and third slots species 1, second and fourth species 2.
    pub v12: Tensor4,
    pub n1: usize,
    pub n2: usize,
}

/// Hartree minimiser of a toy model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyHartree {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub energy: f64,
    pub chemical_potentials: [f64; 2],
    pub residual: f64,
    pub iterations: usize,
}

fn pair_symmetry_error(t: &Tensor4) -> f64 {
    // V_{mnpq} = V_{pnmq} = V_{mqpn}: each particle's pair of slots is symmetric.
    let d = t.dims;
    let mut e = 0.0f64;
    for m in 0..d[0] {
        for n in 0..d[1] {
            for p in 0..d[2] {
                for q in 0..d[3] {
                    let v = t.get(m, n, p, q);
                    e = e.max((v - t.get(p, n, m, q)).abs()).max((v - t.get(m, q, p, n)).abs());
                }
            }
        }
    }
    e
}

impl ToyModel {
    pub fn new(
        t1: DMatrix<f64>,
        t2: DMatrix<f64>,
        v1: Tensor4,
        v2: Tensor4,
        v12: Tensor4,
        n1: usize,
        n2: usize,
    ) -> Result<Self> {
        let m = ToyModel {
            t1,
            t2,
            v1,
            v2,
            v12,
            n1,
            n2,
        };
        m.validate()?;
        Ok(m)
    }

    /// Shapes, symmetry of `T`, real-mode symmetries of the tensors and
    /// positive particle numbers.
    pub fn validate(&self) -> Result<()> {
        let (d1, d2) = (self.t1.nrows(), self.t2.nrows());
        if d1 == 0 || d2 == 0 || !self.t1.is_square() || !self.t2.is_square() {
            return Err(Error::InvalidInput("one-body matrices must be square and nonempty".into()));
        }
        for (name, t, dims) in [
            ("V1", &self.v1, [d1; 4]),
            ("V2", &self.v2, [d2; 4]),
            ("V12", &self.v12, [d1, d2, d1, d2]),
        ] {
            t.validate()?;
            if t.dims != dims {
                return Err(Error::InvalidInput(format!(
                    "{name} has shape {:?}, expected {dims:?}",
                    t.dims
                )));
            }
            let tol = 1e-10 * t.max_abs().max(1.0);
            if pair_symmetry_error(t) > tol {
                return Err(Error::InvalidInput(format!(
                    "{name} lacks the symmetries of a real two-body kernel"
                )));
            }
        }
        for (name, t) in [("V1", &self.v1), ("V2", &self.v2)] {
            if t.exchange_error() > 1e-10 * t.max_abs().max(1.0) {
                return Err(Error::InvalidInput(format!("{name} is not exchange symmetric")));
            }
        }
        for (name, t) in [("T1", &self.t1), ("T2", &self.t2)] {
            let scale = t.iter().fold(1.0f64, |a, x| a.max(x.abs()));
            if t.iter().any(|x| !x.is_finite()) || linalg::asymmetry(t) > 1e-12 * scale {
                return Err(Error::InvalidInput(format!("{name} is not real symmetric")));
            }
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::InvalidInput("both particle numbers must be positive".into()));
        }
        Ok(())
    }

    pub fn modes(&self) -> [usize; 2] {
        [self.t1.nrows(), self.t2.nrows()]
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    /// `(c₁, c₂) = (N₁/N, N₂/N)`.
    pub fn ratios(&self) -> [f64; 2] {
        let n = self.n() as f64;
        [self.n1 as f64 / n, self.n2 as f64 / n]
    }

    pub fn with_particles(&self, n1: usize, n2: usize) -> Result<Self> {
        let mut m = self.clone();
        m.n1 = n1;
        m.n2 = n2;
        m.validate()?;
        Ok(m)
    }

    /// Mean-field matrices `T^α + Σ_β c_β W^{αβ}(x, y)` without the chemical
    /// potentials.
    pub fn mean_field_matrices(&self, x: &[f64], y: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let [d1, d2] = self.modes();
        let [c1, c2] = self.ratios();
        let mut h1 = self.t1.clone();
        let mut h2 = self.t2.clone();
        for m in 0..d1 {
            for p in 0..d1 {
                let mut s = 0.0;
                for n in 0..d1 {
                    for q in 0..d1 {
                        s += c1 * self.v1.get(m, n, p, q) * x[n] * x[q];
                    }
                }
                for n in 0..d2 {
                    for q in 0..d2 {
                        s += c2 * self.v12.get(m, n, p, q) * y[n] * y[q];
                    }
                }
                h1[(m, p)] += s;
            }
        }
        for m in 0..d2 {
            for p in 0..d2 {
                let mut s = 0.0;
                for n in 0..d2 {
                    for q in 0..d2 {
                        s += c2 * self.v2.get(m, n, p, q) * y[n] * y[q];
                    }
                }
                for n in 0..d1 {
                    for q in 0..d1 {
                        s += c1 * self.v12.get(n, m, q, p) * x[n] * x[q];
                    }
                }
                h2[(m, p)] += s;
            }
        }
        (h1, h2)
    }

    /// `c₁⟨x,T¹x⟩ + c₂⟨y,T²y⟩ + ½c₁²V¹[xxxx] + ½c₂²V²[yyyy] + c₁c₂V¹²[xyxy]`.
    pub fn hartree_energy(&self, x: &[f64], y: &[f64]) -> f64 {
        let [d1, d2] = self.modes();
        let [c1, c2] = self.ratios();
        let quad = |t: &DMatrix<f64>, z: &[f64]| {
            let v = DVector::from_column_slice(z);
            v.dot(&(t * &v))
        };
        let quartic = |t: &Tensor4, a: &[f64], b: &[f64], da: usize, db: usize| {
            let mut s = 0.0;
            for m in 0..da {
                for n in 0..db {
                    for p in 0..da {
                        for q in 0..db {
                            s += t.get(m, n, p, q) * a[m] * b[n] * a[p] * b[q];
                        }
                    }
                }
            }
            s
        };
        c1 * quad(&self.t1, x)
            + c2 * quad(&self.t2, y)
            + 0.5 * c1 * c1 * quartic(&self.v1, x, x, d1, d1)
            + 0.5 * c2 * c2 * quartic(&self.v2, y, y, d2, d2)
            + c1 * c2 * quartic(&self.v12, x, y, d1, d2)
    }

    fn hartree_residual(&self, x: &[f64], y: &[f64]) -> (f64, [f64; 2]) {
        let (h1, h2) = self.mean_field_matrices(x, y);
        let mut r = 0.0f64;
        let mut mu = [0.0; 2];
        for (k, (h, z)) in [(&h1, x), (&h2, y)].into_iter().enumerate() {
            let v = DVector::from_column_slice(z);
            let hv = h * &v;
            mu[k] = v.dot(&hv);
            r = r.max((hv - &v * mu[k]).norm());
        }
        (r, mu)
    }

    /// Minimises the toy Hartree functional over pairs of real unit vectors,
    /// starting from the lowest eigenvectors of `T`: projected gradient
    /// descent followed by Newton steps on the Lagrange equations.
    pub fn hartree_minimizer(&self) -> Result<ToyHartree> {
        let [d1, d2] = self.modes();
        let lowest = |h: &DMatrix<f64>| -> Vec<f64> {
            let (_, vecs) = linalg::sorted_eigen(h);
            let v: Vec<f64> = vecs.column(0).iter().cloned().collect();
            let pivot = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() + 1e-12 { x } else { m });
            if pivot < 0.0 { v.iter().map(|t| -t).collect() } else { v }
        };
        let unit = |v: Vec<f64>| {
            let n = linalg::norm(&v);
            v.into_iter().map(|t| t / n).collect::<Vec<f64>>()
        };
        let scale = 1.0 + self.t1.amax() + self.t2.amax() + self.v1.max_abs() + self.v2.max_abs() + self.v12.max_abs();
        let tol = 1e-13 * scale;
        let mut x = lowest(&self.t1);
        let mut y = lowest(&self.t2);
        let mut energy = self.hartree_energy(&x, &y);
        let mut iterations = 0;
        // Projected gradient descent with backtracking down to a moderate
        // residual, then Newton on the Lagrange system.
        let mut tau = 0.5 / scale;
        while iterations < 200_000 {
            let (residual, mu) = self.hartree_residual(&x, &y);
            if residual < 1e-6 * scale {
                break;
            }
            iterations += 1;
            let (h1, h2) = self.mean_field_matrices(&x, &y);
            let gx = &h1 * DVector::from_column_slice(&x) - DVector::from_column_slice(&x) * mu[0];
            let gy = &h2 * DVector::from_column_slice(&y) - DVector::from_column_slice(&y) * mu[1];
            loop {
                let xt = unit(x.iter().zip(gx.iter()).map(|(a, g)| a - tau * g).collect());
                let yt = unit(y.iter().zip(gy.iter()).map(|(a, g)| a - tau * g).collect());
                let et = self.hartree_energy(&xt, &yt);
                if et <= energy || tau < 1e-12 {
                    x = xt;
                    y = yt;
                    energy = et;
                    tau *= 1.3;
                    break;
                }
                tau *= 0.5;
            }
        }
        let pack = |x: &[f64], y: &[f64], mu: [f64; 2]| {
            let mut z = x.to_vec();
            z.extend_from_slice(y);
            z.push(mu[0]);
            z.push(mu[1]);
            DVector::from_vec(z)
        };
        let lagrange = |z: &DVector<f64>| -> DVector<f64> {
            let (x, y) = (&z.as_slice()[..d1], &z.as_slice()[d1..d1 + d2]);
            let (h1, h2) = self.mean_field_matrices(x, y);
            let xv = DVector::from_column_slice(x);
            let yv = DVector::from_column_slice(y);
            let f1 = &h1 * &xv - &xv * z[d1 + d2];
            let f2 = &h2 * &yv - &yv * z[d1 + d2 + 1];
            let mut f = f1.as_slice().to_vec();
            f.extend_from_slice(f2.as_slice());
            f.push(0.5 * (1.0 - xv.norm_squared()));
            f.push(0.5 * (1.0 - yv.norm_squared()));
            DVector::from_vec(f)
        };
        let (_, mu) = self.hartree_residual(&x, &y);
        let mut z = pack(&x, &y, mu);
        let dim = d1 + d2 + 2;
        for _ in 0..60 {
            let xs = &z.as_slice()[..d1];
            let ys = &z.as_slice()[d1..d1 + d2];
            let (residual, mu) = self.hartree_residual(xs, ys);
            if residual < tol {
                let x = unit(xs.to_vec());
                let y = unit(ys.to_vec());
                let energy = self.hartree_energy(&x, &y);
                let (residual, _) = self.hartree_residual(&x, &y);
                return Ok(ToyHartree {
                    x,
                    y,
                    energy,
                    chemical_potentials: mu,
                    residual,
                    iterations,
                });
            }
            iterations += 1;
            let f = lagrange(&z);
            let h = 1e-6;
            let mut jac = DMatrix::zeros(dim, dim);
            for j in 0..dim {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[j] += h;
                zm[j] -= h;
                jac.set_column(j, &((lagrange(&zp) - lagrange(&zm)) / (2.0 * h)));
            }
            let Some(step) = jac.lu().solve(&f) else {
                break;
            };
            z -= step;
        }
        let (residual, _) = self.hartree_residual(&z.as_slice()[..d1], &z.as_slice()[d1..d1 + d2]);
        Err(Error::NoConvergence(format!(
            "toy Hartree iteration stalled at residual {residual:.3e}"
        )))
    }

    /// Rotates each species so `x`, `y` become mode 0 and the excited modes
    /// diagonalise the projected mean-field matrices. Returns the rotated
    /// model and the orthogonal matrices (columns are new modes in old
    /// coordinates).
    pub fn rotated_to(&self, x: &[f64], y: &[f64]) -> Result<(ToyModel, [DMatrix<f64>; 2])> {
        let (h1, h2) = self.mean_field_matrices(x, y);
        let frame = |z: &[f64], h: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            let d = z.len();
            let z = DVector::from_column_slice(z);
            let nz = z.norm();
            if !(nz > 0.0) {
                return Err(Error::ZeroNorm);
            }
            let z = z / nz;
            let p = DMatrix::identity(d, d) - &z * z.transpose();
            let ph = &p * h * &p;
            let (vals, vecs) = linalg::sorted_eigen(&ph);
            // Eigenvectors of P h P with the condensate direction removed.
            let mut cols: Vec<DVector<f64>> = vec![z.clone()];
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| {
                let wa = vecs.column(a).dot(&z).abs();
                let wb = vecs.column(b).dot(&z).abs();
                wb.total_cmp(&wa)
            });
            let drop = order[0];
            let mut rest: Vec<usize> = (0..d).filter(|&k| k != drop).collect();
            rest.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            for k in rest {
                let mut v: DVector<f64> = vecs.column(k).into_owned();
                for c in &cols {
                    let proj = c.dot(&v);
                    v -= c * proj;
                }
                let pivot = v.iter().cloned().fold(0.0f64, |m, t| if t.abs() > m.abs() + 1e-12 { t } else { m });
                let v = v.normalize() * if pivot < 0.0 { -1.0 } else { 1.0 };
                cols.push(v);
            }
            Ok(DMatrix::from_columns(&cols))
        };
        let q1 = frame(x, &h1)?;
        let q2 = frame(y, &h2)?;
        let rot = |t: &DMatrix<f64>, q: &DMatrix<f64>| {
            let m = q.transpose() * t * q;
            (&m + m.transpose()) * 0.5
        };
        let model = ToyModel {
            t1: rot(&self.t1, &q1),
            t2: rot(&self.t2, &q2),
            v1: self.v1.rotated([&q1, &q1, &q1, &q1]),
            v2: self.v2.rotated([&q2, &q2, &q2, &q2]),
            v12: self.v12.rotated([&q1, &q2, &q1, &q2]),
            n1: self.n1,
            n2: self.n2,
        };
        Ok((model, [q1, q2]))
    }

    /// Minimises the toy Hartree functional and rotates the minimiser into
    /// mode 0 of each species.
    pub fn condensate_frame(&self) -> Result<(ToyModel, ToyHartree)> {
        let hartree = self.hartree_minimizer()?;
        let (model, _) = self.rotated_to(&hartree.x, &hartree.y)?;
        Ok((model, hartree))
    }

    /// `μ₁ = T¹₀₀ + c₁V¹₀₀₀₀ + c₂V¹²₀₀₀₀` and its species-2 analogue, the
    /// chemical potentials when mode 0 is the condensate.
    pub fn chemical_potentials(&self) -> [f64; 2] {
        let [c1, c2] = self.ratios();
        [
            self.t1[(0, 0)] + c1 * self.v1.get(0, 0, 0, 0) + c2 * self.v12.get(0, 0, 0, 0),
            self.t2[(0, 0)] + c2 * self.v2.get(0, 0, 0, 0) + c1 * self.v12.get(0, 0, 0, 0),
        ]
    }

    /// `max_m |T¹_{m0} + c₁V¹_{m000} + c₂V¹²_{m000}|` together with the
    /// species-2 analogue: vanishes when mode 0 solves the Hartree equations.
    pub fn stationarity_residual(&self) -> f64 {
        let [d1, d2] = self.modes();
        let [c1, c2] = self.ratios();
        let mut r = 0.0f64;
        for m in 1..d1 {
            r = r.max((self.t1[(m, 0)] + c1 * self.v1.get(m, 0, 0, 0) + c2 * self.v12.get(m, 0, 0, 0)).abs());
        }
        for m in 1..d2 {
            r = r.max((self.t2[(m, 0)] + c2 * self.v2.get(m, 0, 0, 0) + c1 * self.v12.get(0, m, 0, 0)).abs());
        }
        r
    }

    /// Hartree energy of the condensate in mode 0.
    pub fn condensate_energy(&self) -> f64 {
        let [d1, d2] = self.modes();
        let mut x = vec![0.0; d1];
        let mut y = vec![0.0; d2];
        x[0] = 1.0;
        y[0] = 1.0;
        self.hartree_energy(&x, &y)
    }

    /// Bogoliubov blocks with mode 0 as the condensate:
    /// `h¹_{mn} = T¹_{mn} + c₁V¹_{m0n0} + c₂V¹²_{m0n0} - μ₁δ_{mn}` and its
    /// species-2 analogue on the excited modes.
    pub fn quadratic_blocks(&self) -> Result<QuadraticBlocks> {
        let [d1, d2] = self.modes();
        let [c1, c2] = self.ratios();
        let mu = self.chemical_potentials();
        let (k1, k2) = (d1 - 1, d2 - 1);
        let mut h = DMatrix::zeros(k1 + k2, k1 + k2);
        for m in 0..k1 {
            for n in 0..k1 {
                h[(m, n)] = self.t1[(m + 1, n + 1)]
                    + c1 * self.v1.get(m + 1, 0, n + 1, 0)
                    + c2 * self.v12.get(m + 1, 0, n + 1, 0)
                    - if m == n { mu[0] } else { 0.0 };
            }
        }
        for m in 0..k2 {
            for n in 0..k2 {
                h[(k1 + m, k1 + n)] = self.t2[(m + 1, n + 1)]
                    + c2 * self.v2.get(m + 1, 0, n + 1, 0)
                    + c1 * self.v12.get(0, m + 1, 0, n + 1)
                    - if m == n { mu[1] } else { 0.0 };
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let tensor = bogoliubov::InteractionTensor {
            v1: self.v1.clone(),
            v2: self.v2.clone(),
            v12: self.v12.clone(),
        };
        bogoliubov::blocks_from_parts(h, &tensor, [c1, c2])
    }
}

fn a_index(m: usize) -> usize {
    m
}

/// Many-body Hamiltonian of a toy model on its `(N₁, N₂)` sector.
pub fn build_hamiltonian(model: &ToyModel) -> Result<SparseOperator> {
    build_hamiltonian_capped(model, DEFAULT_DIMENSION_CAP)
}

pub fn build_hamiltonian_capped(model: &ToyModel, cap: usize) -> Result<SparseOperator> {
    model.validate()?;
    let [d1, d2] = model.modes();
    let basis = Arc::new(FockBasis::sector_capped(d1, d2, model.n1, model.n2, cap)?);
    Ok(SparseOperator::assemble(basis, &hamiltonian_terms(model)))
}

fn hamiltonian_terms(model: &ToyModel) -> Vec<Term> {
    use Factor::{Annihilate as A, Create as C};
    let [d1, d2] = model.modes();
    let inv_n = 1.0 / model.n() as f64;
    let a = a_index;
    let b = |m: usize| d1 + m;
    let mut terms = Vec::new();
    for m in 0..d1 {
        for n in 0..d1 {
            terms.push(Term::new(model.t1[(m, n)], vec![C(a(m)), A(a(n))]));
        }
    }
    for m in 0..d2 {
        for n in 0..d2 {
            terms.push(Term::new(model.t2[(m, n)], vec![C(b(m)), A(b(n))]));
        }
    }
    for m in 0..d1 {
        for n in 0..d1 {
            for p in 0..d1 {
                for q in 0..d1 {
                    terms.push(Term::new(
                        0.5 * inv_n * model.v1.get(m, n, p, q),
                        vec![C(a(m)), C(a(n)), A(a(q)), A(a(p))],
                    ));
                }
            }
        }
    }
    for m in 0..d2 {
        for n in 0..d2 {
            for p in 0..d2 {
                for q in 0..d2 {
                    terms.push(Term::new(
                        0.5 * inv_n * model.v2.get(m, n, p, q),
                        vec![C(b(m)), C(b(n)), A(b(q)), A(b(p))],
                    ));
                }
            }
        }
    }
    for m in 0..d1 {
        for n in 0..d2 {
            for p in 0..d1 {
                for q in 0..d2 {
                    terms.push(Term::new(
                        inv_n * model.v12.get(m, n, p, q),
                        vec![C(a(m)), C(b(n)), A(b(q)), A(a(p))],
                    ));
                }
            }
        }
    }
    terms
}

/// `⟨ψ, F ψ⟩` for a monomial `F`.
fn monomial_expectation(psi: &ManyBodyVector, factors: &[Factor]) -> f64 {
    let basis = &psi.basis;
    let c = &psi.coefficients;
    (0..basis.len())
        .filter(|&j| c[j] != 0.0)
        .map(|j| match apply_factors(&basis.states[j], basis.modes, factors) {
            Some((occ, amp)) => basis.index.get(&occ).map_or(0.0, |&i| c[i] * amp * c[j]),
            None => 0.0,
        })
        .sum()
}

/// Reduced density matrix `γ^{(k,ℓ)}` of a sector state, normalised to trace
/// one. Supported: `(1,0)`, `(0,1)`, `(1,1)`, `(2,0)`, `(0,2)`.
///
/// `γ^{(1,0)}_{mn} = ⟨a*_n a_m⟩/N₁`; two-particle matrices are indexed by
/// pairs `(m₁, m₂) ↦ m₁·d + m₂` with `γ^{(2,0)}_{(m₁m₂),(n₁n₂)} =
/// ⟨a*_{n₁} a*_{n₂} a_{m₂} a_{m₁}⟩/(N₁(N₁-1))` and
/// `γ^{(1,1)}_{(m m'),(n n')} = ⟨a*_n b*_{n'} b_{m'} a_m⟩/(N₁N₂)`.
pub fn reduced_density(psi: &ManyBodyVector, k: usize, l: usize) -> Result<DMatrix<f64>> {
    use Factor::{Annihilate as A, Create as C};
    let (n1, n2) = match psi.basis.kind {
        BasisKind::Sector { n1, n2 } => (n1, n2),
        _ => return Err(Error::InvalidInput("reduced densities need a sector basis".into())),
    };
    if k > n1 || l > n2 {
        return Err(Error::InvalidInput(format!(
            "cannot trace down to ({k}, {l}) particles from ({n1}, {n2})"
        )));
    }
    let [d1, d2] = psi.basis.modes;
    let b = |m: usize| d1 + m;
    let norm2 = linalg::dot(&psi.coefficients, &psi.coefficients);
    if !(norm2 > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let one = |d: usize, sp: &dyn Fn(usize) -> usize, count: usize| {
        DMatrix::from_fn(d, d, |m, n| {
            monomial_expectation(psi, &[C(sp(n)), A(sp(m))]) / (count as f64 * norm2)
        })
    };
    let two = |d: usize, sp: &dyn Fn(usize) -> usize, count: usize| {
        let norm = (count * (count - 1)) as f64 * norm2;
        DMatrix::from_fn(d * d, d * d, |r, c| {
            let (m1, m2) = (r / d, r % d);
            let (k1, k2) = (c / d, c % d);
            monomial_expectation(psi, &[C(sp(k1)), C(sp(k2)), A(sp(m2)), A(sp(m1))]) / norm
        })
    };
    let g = match (k, l) {
        (1, 0) => one(d1, &a_index, n1),
        (0, 1) => one(d2, &b, n2),
        (2, 0) => two(d1, &a_index, n1),
        (0, 2) => two(d2, &b, n2),
        (1, 1) => {
            let norm = (n1 * n2) as f64 * norm2;
            DMatrix::from_fn(d1 * d2, d1 * d2, |r, c| {
                let (m, mp) = (r / d2, r % d2);
                let (n, np) = (c / d2, c % d2);
                monomial_expectation(psi, &[C(n), C(b(np)), A(b(mp)), A(m)]) / norm
            })
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "reduced density ({k}, {l}) is not supported"
            )))
        }
    };
    Ok((&g + g.transpose()) * 0.5)
}

/// Largest eigenvalues of `γ^{(1,0)}` and `γ^{(0,1)}`.
pub fn condensation_fraction(psi: &ManyBodyVector) -> Result<(f64, f64)> {
    let top = |g: DMatrix<f64>| {
        let (v, _) = linalg::sorted_eigen(&g);
        v[v.len() - 1]
    };
    Ok((top(reduced_density(psi, 1, 0)?), top(reduced_density(psi, 0, 1)?)))
}

fn sqrt_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).sqrt()).product()
}

fn sector_numbers(basis: &FockBasis) -> Result<(usize, usize)> {
    match basis.kind {
        BasisKind::Sector { n1, n2 } => Ok((n1, n2)),
        _ => Err(Error::InvalidInput("expected a sector basis".into())),
    }
}

/// Excitation basis `𝓕₊^{≤N}` matching a sector basis: excited modes only,
/// at most `N₁` and `N₂` quanta.
pub fn excitation_basis_for(sector: &FockBasis) -> Result<FockBasis> {
    let (n1, n2) = sector_numbers(sector)?;
    let [d1, d2] = sector.modes;
    FockBasis::excitations([d1 - 1, d2 - 1], ExcitationCap::PerSpecies(n1, n2))
}

/// Image of a sector basis state under the excitation map: applies
/// `a₀^{N₁-j} b₀^{N₂-k}/√((N₁-j)!(N₂-k)!)` and keeps the component without
/// condensate particles.
fn forward_state(sector: &FockBasis, i: usize) -> (Vec<u8>, f64) {
    let [d1, d2] = sector.modes;
    let occ = &sector.states[i];
    let (c1, c2) = (occ[0] as usize, occ[d1] as usize);
    let mut factors = Vec::with_capacity(c1 + c2);
    factors.extend(std::iter::repeat_n(Factor::Annihilate(0), c1));
    factors.extend(std::iter::repeat_n(Factor::Annihilate(d1), c2));
    let (out, amp) = apply_factors(occ, sector.modes, &factors).expect("condensate occupations are removable");
    let amp = amp / (sqrt_factorial(c1) * sqrt_factorial(c2));
    let mut ex = Vec::with_capacity(d1 + d2 - 2);
    ex.extend_from_slice(&out[1..d1]);
    ex.extend_from_slice(&out[d1 + 1..d1 + d2]);
    (ex, amp)
}

/// Preimage under the adjoint map `Σ_{jk} (a₀*)^{N₁-j}(b₀*)^{N₂-k}/√(…)` of an
/// excitation basis state; `None` when it carries more than `N₁` or `N₂`
/// quanta.
fn adjoint_state(ex: &FockBasis, sector: &FockBasis, i: usize) -> Option<(usize, f64)> {
    let (n1, n2) = sector_numbers(sector).ok()?;
    let [k1, k2] = ex.modes;
    let [j, k] = ex.numbers(i);
    if j > n1 || k > n2 {
        return None;
    }
    let mut occ = [0u8; MAX_MODES];
    occ[1..1 + k1].copy_from_slice(&ex.states[i][..k1]);
    occ[k1 + 2..k1 + 2 + k2].copy_from_slice(&ex.states[i][k1..k1 + k2]);
    let mut factors = Vec::with_capacity(n1 + n2 - j - k);
    factors.extend(std::iter::repeat_n(Factor::Create(0), n1 - j));
    factors.extend(std::iter::repeat_n(Factor::Create(k1 + 1), n2 - k));
    let (out, amp) = apply_factors(&occ, sector.modes, &factors)?;
    let amp = amp / (sqrt_factorial(n1 - j) * sqrt_factorial(n2 - k));
    sector.index.get(&out).map(|&s| (s, amp))
}

fn check_modes(ex: &FockBasis, sector: &FockBasis) -> Result<()> {
    let [d1, d2] = sector.modes;
    if ex.modes != [d1 - 1, d2 - 1] || !matches!(ex.kind, BasisKind::Excitations(_)) {
        return Err(Error::InvalidInput("excitation basis does not match the sector".into()));
    }
    Ok(())
}

/// `U_N ψ` on the given excitation basis.
pub fn excitation_map_into(psi: &ManyBodyVector, ex: Arc<FockBasis>) -> Result<ManyBodyVector> {
    check_modes(&ex, &psi.basis)?;
    let mut out = vec![0.0; ex.len()];
    for (i, &c) in psi.coefficients.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let (state, amp) = forward_state(&psi.basis, i);
        let idx = ex
            .index_of(&state)
            .ok_or_else(|| Error::InvalidInput("excitation basis is too small for the sector".into()))?;
        out[idx] += amp * c;
    }
    ManyBodyVector::new(ex, out)
}

/// `U_N ψ` on `𝓕₊^{≤N}`.
pub fn excitation_map(psi: &ManyBodyVector) -> Result<ManyBodyVector> {
    let ex = Arc::new(excitation_basis_for(&psi.basis)?);
    excitation_map_into(psi, ex)
}

/// `U_N^* Φ` onto a sector basis.
pub fn excitation_adjoint(phi: &ManyBodyVector, sector: Arc<FockBasis>) -> Result<ManyBodyVector> {
    check_modes(&phi.basis, &sector)?;
    let mut out = vec![0.0; sector.len()];
    for (i, &c) in phi.coefficients.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        if let Some((s, amp)) = adjoint_state(&phi.basis, &sector, i) {
            out[s] += amp * c;
        }
    }
    ManyBodyVector::new(sector, out)
}

/// `‖χ_{jk}‖²` indexed by species-1 quanta `j` (rows) and species-2 quanta
/// `k` (columns).
pub fn excitation_sector_norms(chi: &ManyBodyVector) -> DMatrix<f64> {
    let basis = &chi.basis;
    let (mut j_max, mut k_max) = (0, 0);
    for i in 0..basis.len() {
        let [j, k] = basis.numbers(i);
        j_max = j_max.max(j);
        k_max = k_max.max(k);
    }
    let mut m = DMatrix::zeros(j_max + 1, k_max + 1);
    for (i, c) in chi.coefficients.iter().enumerate() {
        let [j, k] = basis.numbers(i);
        m[(j, k)] += c * c;
    }
    m
}

/// `U_N A U_N^*` on an excitation basis, for an operator on the sector.
pub fn conjugate_by_excitation(op: &SparseOperator, ex: Arc<FockBasis>) -> Result<SparseOperator> {
    let sector = op.basis.clone();
    check_modes(&ex, &sector)?;
    let cols_of = op.transpose();
    let columns: Vec<Vec<(usize, f64)>> = (0..ex.len())
        .into_par_iter()
        .map(|i| {
            let Some((s, amp)) = adjoint_state(&ex, &sector, i) else {
                return Vec::new();
            };
            let mut col = Vec::new();
            for (r, v) in cols_of.row(s) {
                let (state, a) = forward_state(&sector, r);
                if let Some(t) = ex.index_of(&state) {
                    col.push((t, a * v * amp));
                }
            }
            merge_entries(col)
        })
        .collect();
    Ok(SparseOperator::from_columns(ex, &columns))
}

/// `Σ h_{ij} c_i* c_j` over the modes of an excitation basis.
pub fn one_body_operator(h: &DMatrix<f64>, basis: &FockBasis) -> Result<SparseOperator> {
    let k = basis.total_modes();
    if h.shape() != (k, k) {
        return Err(Error::InvalidInput("one-body matrix does not match the basis modes".into()));
    }
    let mut terms = Vec::new();
    for i in 0..k {
        for j in 0..k {
            terms.push(Term::new(h[(i, j)], vec![Factor::Create(i), Factor::Annihilate(j)]));
        }
    }
    Ok(SparseOperator::assemble(Arc::new(basis.clone()), &terms))
}

/// Quadratic Hamiltonian
/// `Σ B₁_{ij} c_i* c_j + ½ Σ B₂_{ij}(c_i* c_j* + c_i c_j) + constant` on an
/// excitation basis.
pub fn quadratic_hamiltonian(blocks: &QuadraticBlocks, basis: &FockBasis) -> Result<SparseOperator> {
    quadratic_hamiltonian_on(blocks, Arc::new(basis.clone()))
}

pub fn quadratic_hamiltonian_on(blocks: &QuadraticBlocks, basis: Arc<FockBasis>) -> Result<SparseOperator> {
    use Factor::{Annihilate as A, Create as C};
    if basis.modes != blocks.modes || !matches!(basis.kind, BasisKind::Excitations(_)) {
        return Err(Error::InvalidInput("blocks do not match the excitation basis".into()));
    }
    let k = blocks.len();
    let mut terms = Vec::new();
    for i in 0..k {
        for j in 0..k {
            terms.push(Term::new(blocks.b1[(i, j)], vec![C(i), A(j)]));
            terms.push(Term::new(0.5 * blocks.b2[(i, j)], vec![C(i), C(j)]));
            terms.push(Term::new(0.5 * blocks.b2[(i, j)], vec![A(i), A(j)]));
        }
    }
    terms.push(Term::new(blocks.constant, Vec::new()));
    Ok(SparseOperator::assemble(basis, &terms))
}

/// Maximum deviations of the conjugation identities for the excitation map.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelationsReport {
    /// One entry per identity family, maximised over the excited modes.
    pub deviations: Vec<(String, f64)>,
    pub max_deviation: f64,
    /// `‖U*U - 1‖_max` on the sector.
    pub unitarity_error: f64,
    /// `‖UU* - P‖_max` on excitations with at most `N₁+N₂` quanta, `P`
    /// projecting onto `𝓕₊^{≤N}`.
    pub projector_error: f64,
    /// `|tr(U a₀*a₀ U*) - tr(N₁ - 𝒩₁)|`.
    pub trace_error: f64,
}

/// Builds both sides of the identities
/// `U a₀*a₀ U* = N₁ - 𝒩₁`, `U a₀*a_m U* = √(N₁-𝒩₁) a_m`,
/// `U a_m*a₀ U* = a_m* √(N₁-𝒩₁)`, `U a_m*a_n U* = a_m*a_n` and their species-2
/// analogues as sparse matrices and compares them entrywise.
pub fn verify_relations(d1: usize, d2: usize, n1: usize, n2: usize) -> Result<RelationsReport> {
    use Factor::{Annihilate as A, Create as C};
    if d1 < 1 || d2 < 1 {
        return Err(Error::InvalidInput("each species needs at least one mode".into()));
    }
    let sector = Arc::new(FockBasis::sector_capped(d1, d2, n1, n2, 10_000)?);
    let ex = Arc::new(excitation_basis_for(&sector)?);
    let (k1, k2) = (d1 - 1, d2 - 1);
    let lhs = |factors: Vec<Factor>| -> Result<SparseOperator> {
        let op = SparseOperator::assemble(sector.clone(), &[Term::new(1.0, factors)]);
        conjugate_by_excitation(&op, ex.clone())
    };
    let rhs = |factors: Vec<Factor>| SparseOperator::assemble(ex.clone(), &[Term::new(1.0, factors)]);
    let (f1, f2) = (n1 as f64, n2 as f64);
    let mut deviations = Vec::new();
    for species in 0..2 {
        let (cond, k, off_sector, off_ex, nn) = if species == 0 {
            (0, k1, 1, 0, f1)
        } else {
            (d1, k2, d1 + 1, k1, f2)
        };
        let name = if species == 0 { "a" } else { "b" };
        let left = move |x: f64, y: f64| if species == 0 { x } else { y };
        let root = move |x: f64, y: f64| (nn - left(x, y)).max(0.0).sqrt();
        let mut dev = [0.0f64; 4];
        dev[0] = lhs(vec![C(cond), A(cond)])?.max_difference(&rhs(vec![diag(move |x, y| nn - left(x, y))]))?;
        for m in 0..k {
            dev[1] = dev[1].max(
                lhs(vec![C(cond), A(off_sector + m)])?.max_difference(&rhs(vec![diag(root), A(off_ex + m)]))?,
            );
            dev[2] = dev[2].max(
                lhs(vec![C(off_sector + m), A(cond)])?.max_difference(&rhs(vec![C(off_ex + m), diag(root)]))?,
            );
            for n in 0..k {
                dev[3] = dev[3].max(
                    lhs(vec![C(off_sector + m), A(off_sector + n)])?
                        .max_difference(&rhs(vec![C(off_ex + m), A(off_ex + n)]))?,
                );
            }
        }
        deviations.push((format!("{name}0* {name}0 = N - number"), dev[0]));
        deviations.push((format!("{name}0* {name}m = sqrt(N - number) {name}m"), dev[1]));
        deviations.push((format!("{name}m* {name}0 = {name}m* sqrt(N - number)"), dev[2]));
        deviations.push((format!("{name}m* {name}n = {name}m* {name}n"), dev[3]));
    }
    let max_deviation = deviations.iter().fold(0.0f64, |m, d| m.max(d.1));

    // U*U on the sector.
    let mut unitarity_error = 0.0f64;
    for i in 0..sector.len() {
        let e = ManyBodyVector::basis_state(sector.clone(), i);
        let back = excitation_adjoint(&excitation_map_into(&e, ex.clone())?, sector.clone())?;
        for (j, c) in back.coefficients.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            unitarity_error = unitarity_error.max((c - target).abs());
        }
    }
    // UU* on a larger excitation space.
    let big = Arc::new(FockBasis::excitations([k1, k2], ExcitationCap::Total(n1 + n2))?);
    let mut projector_error = 0.0f64;
    for i in 0..big.len() {
        let e = ManyBodyVector::basis_state(big.clone(), i);
        let there = excitation_adjoint(&e, sector.clone())?;
        let back = excitation_map_into(&there, big.clone())?;
        let [j, k] = big.numbers(i);
        let inside = j <= n1 && k <= n2;
        for (t, c) in back.coefficients.iter().enumerate() {
            let target = if t == i && inside { 1.0 } else { 0.0 };
            projector_error = projector_error.max((c - target).abs());
        }
    }
    let number_lhs = lhs(vec![C(0), A(0)])?;
    let number_rhs = rhs(vec![diag(move |x, _| f1 - x)]);
    let trace_error = (number_lhs.diagonal().iter().sum::<f64>() - number_rhs.diagonal().iter().sum::<f64>()).abs();
    Ok(RelationsReport {
        deviations,
        max_deviation,
        unitarity_error,
        projector_error,
        trace_error,
    })
}

/// Result of conjugating a toy Hamiltonian by the excitation map and
/// splitting it by powers of excitation operators.
#[derive(Clone, Debug)]
pub struct SplitReport {
    /// `M₀, …, M₄` on `𝓕₊^{≤N}`.
    pub m: Vec<SparseOperator>,
    /// `‖U H U* - Σ M_j‖_max`.
    pub residual: f64,
    /// `‖M₀ - N e_H - P(𝒩₁, 𝒩₂)‖_max` with the quadratic number polynomial.
    pub isolation_error: f64,
    /// Stationarity residual of mode 0 for the toy Hartree equations.
    pub stationarity: f64,
    /// `‖M₁ - M₁^{cubic}‖_max`, where `M₁^{cubic}` is the form `M₁` takes
    /// once the Hartree equations remove the linear terms; `None` when mode 0
    /// is not stationary.
    pub cancellation_error: Option<f64>,
    pub warnings: Vec<String>,
    /// Hartree energy of the mode-0 condensate.
    pub hartree_energy: f64,
}

/// Threshold on [`ToyModel::stationarity_residual`] for the cancellation
/// check.
pub const STATIONARITY_TOL: f64 = 1e-10;

fn m_terms(model: &ToyModel) -> [Vec<Term>; 5] {
    use Factor::{Annihilate as A, Create as C};
    let [d1, d2] = model.modes();
    let (k1, k2) = (d1 - 1, d2 - 1);
    let nf = model.n() as f64;
    let (f1, f2) = (model.n1 as f64, model.n2 as f64);
    let [c1, c2] = model.ratios();
    let mu = model.chemical_potentials();
    let (t1, t2, v1, v2, v12) = (&model.t1, &model.t2, &model.v1, &model.v2, &model.v12);
    // Excited mode m ≥ 1 of each species in excitation-basis indices.
    let a = |m: usize| m - 1;
    let b = |m: usize| k1 + m - 1;
    let s1 = move |x: f64, _y: f64| (f1 - x).max(0.0).sqrt();
    let s2 = move |_x: f64, y: f64| (f2 - y).max(0.0).sqrt();
    let s1m = move |x: f64, _y: f64| (f1 - x - 1.0).max(0.0).sqrt();
    let s2m = move |_x: f64, y: f64| (f2 - y - 1.0).max(0.0).sqrt();
    let range1 = 1..=k1;
    let range2 = 1..=k2;

    let mut m0 = Vec::new();
    {
        let (t100, t200) = (t1[(0, 0)], t2[(0, 0)]);
        let (v1_0, v2_0, v12_0) = (v1.get(0, 0, 0, 0), v2.get(0, 0, 0, 0), v12.get(0, 0, 0, 0));
        let [mu1, mu2] = mu;
        m0.push(Term::new(
            1.0,
            vec![diag(move |x, y| {
                t100 * (f1 - x)
                    + t200 * (f2 - y)
                    + v1_0 / (2.0 * nf) * (f1 - x) * (f1 - x - 1.0)
                    + v2_0 / (2.0 * nf) * (f2 - y) * (f2 - y - 1.0)
                    + v12_0 / nf * (f1 - x) * (f2 - y)
                    + mu1 * x
                    + mu2 * y
                    + c1 / 2.0 * v1_0
                    + c2 / 2.0 * v2_0
            })],
        ));
    }

    let mut m1 = Vec::new();
    for m in range1.clone() {
        let (t, v, w) = (t1[(m, 0)], v1.get(m, 0, 0, 0), v12.get(m, 0, 0, 0));
        m1.push(Term::new(
            1.0,
            vec![C(a(m)), diag(s1), diag(move |x, y| t + v * (f1 - x - 1.0) / nf + w * (f2 - y) / nf)],
        ));
        let (t, v, w) = (t1[(0, m)], v1.get(0, 0, m, 0), v12.get(0, 0, m, 0));
        m1.push(Term::new(
            1.0,
            vec![diag(move |x, y| t + v * (f1 - x - 1.0) / nf + w * (f2 - y) / nf), diag(s1), A(a(m))],
        ));
    }
    for m in range2.clone() {
        let (t, v, w) = (t2[(m, 0)], v2.get(m, 0, 0, 0), v12.get(0, m, 0, 0));
        m1.push(Term::new(
            1.0,
            vec![C(b(m)), diag(s2), diag(move |x, y| t + v * (f2 - y - 1.0) / nf + w * (f1 - x) / nf)],
        ));
        let (t, v, w) = (t2[(0, m)], v2.get(0, 0, m, 0), v12.get(0, 0, 0, m));
        m1.push(Term::new(
            1.0,
            vec![diag(move |x, y| t + v * (f2 - y - 1.0) / nf + w * (f1 - x) / nf), diag(s2), A(b(m))],
        ));
    }

    let mut m2 = Vec::new();
    {
        let [mu1, mu2] = mu;
        let (v1_0, v2_0) = (v1.get(0, 0, 0, 0), v2.get(0, 0, 0, 0));
        m2.push(Term::new(
            1.0,
            vec![diag(move |x, y| -mu1 * x - mu2 * y - c1 / 2.0 * v1_0 - c2 / 2.0 * v2_0)],
        ));
    }
    for m in range1.clone() {
        for n in range1.clone() {
            m2.push(Term::new(t1[(m, n)], vec![C(a(m)), A(a(n))]));
            m2.push(Term::new(v1.get(m, n, 0, 0) / (2.0 * nf), vec![C(a(m)), C(a(n)), diag(s1m), diag(s1)]));
            m2.push(Term::new(v1.get(0, 0, m, n) / (2.0 * nf), vec![diag(s1m), diag(s1), A(a(m)), A(a(n))]));
            m2.push(Term::new(
                (v1.get(m, 0, n, 0) + v1.get(m, 0, 0, n)) / nf,
                vec![C(a(m)), A(a(n)), diag(move |x, _| f1 - x)],
            ));
            m2.push(Term::new(v12.get(m, 0, n, 0) / nf, vec![C(a(m)), A(a(n)), diag(move |_, y| f2 - y)]));
        }
    }
    for m in range2.clone() {
        for n in range2.clone() {
            m2.push(Term::new(t2[(m, n)], vec![C(b(m)), A(b(n))]));
            m2.push(Term::new(v2.get(m, n, 0, 0) / (2.0 * nf), vec![C(b(m)), C(b(n)), diag(s2m), diag(s2)]));
            m2.push(Term::new(v2.get(0, 0, m, n) / (2.0 * nf), vec![diag(s2m), diag(s2), A(b(m)), A(b(n))]));
            m2.push(Term::new(
                (v2.get(m, 0, n, 0) + v2.get(m, 0, 0, n)) / nf,
                vec![C(b(m)), A(b(n)), diag(move |_, y| f2 - y)],
            ));
            m2.push(Term::new(v12.get(0, m, 0, n) / nf, vec![C(b(m)), A(b(n)), diag(move |x, _| f1 - x)]));
        }
    }
    for m in range1.clone() {
        for n in range2.clone() {
            m2.push(Term::new(v12.get(m, n, 0, 0) / nf, vec![C(a(m)), C(b(n)), diag(s1), diag(s2)]));
            m2.push(Term::new(v12.get(0, 0, m, n) / nf, vec![diag(s1), diag(s2), A(a(m)), A(b(n))]));
            m2.push(Term::new(v12.get(m, 0, 0, n) / nf, vec![C(a(m)), diag(s1), diag(s2), A(b(n))]));
            m2.push(Term::new(v12.get(0, n, m, 0) / nf, vec![diag(s1), A(a(m)), C(b(n)), diag(s2)]));
        }
    }

    let mut m3 = Vec::new();
    for m in range1.clone() {
        for n in range1.clone() {
            for p in range1.clone() {
                m3.push(Term::new(v1.get(m, n, p, 0) / nf, vec![C(a(m)), C(a(n)), A(a(p)), diag(s1)]));
                m3.push(Term::new(v1.get(p, 0, m, n) / nf, vec![diag(s1), C(a(p)), A(a(m)), A(a(n))]));
            }
        }
    }
    for m in range2.clone() {
        for n in range2.clone() {
            for p in range2.clone() {
                m3.push(Term::new(v2.get(m, n, p, 0) / nf, vec![C(b(m)), C(b(n)), A(b(p)), diag(s2)]));
                m3.push(Term::new(v2.get(p, 0, m, n) / nf, vec![diag(s2), C(b(p)), A(b(m)), A(b(n))]));
            }
        }
    }
    for m in range1.clone() {
        for p in range1.clone() {
            for n in range2.clone() {
                // One species-2 excitation created or destroyed from the condensate.
                m3.push(Term::new(v12.get(m, n, p, 0) / nf, vec![C(a(m)), A(a(p)), C(b(n)), diag(s2)]));
                m3.push(Term::new(v12.get(p, 0, m, n) / nf, vec![diag(s2), C(a(p)), A(a(m)), A(b(n))]));
            }
        }
    }
    for m in range1.clone() {
        for n in range2.clone() {
            for p in range2.clone() {
                m3.push(Term::new(v12.get(m, n, 0, p) / nf, vec![C(a(m)), diag(s1), C(b(n)), A(b(p))]));
                m3.push(Term::new(v12.get(0, p, m, n) / nf, vec![diag(s1), A(a(m)), C(b(p)), A(b(n))]));
            }
        }
    }

    let mut m4 = Vec::new();
    for m in range1.clone() {
        for n in range1.clone() {
            for p in range1.clone() {
                for q in range1.clone() {
                    m4.push(Term::new(v1.get(m, n, p, q) / (2.0 * nf), vec![C(a(m)), C(a(n)), A(a(p)), A(a(q))]));
                }
            }
        }
    }
    for m in range2.clone() {
        for n in range2.clone() {
            for p in range2.clone() {
                for q in range2.clone() {
                    m4.push(Term::new(v2.get(m, n, p, q) / (2.0 * nf), vec![C(b(m)), C(b(n)), A(b(p)), A(b(q))]));
                }
            }
        }
    }
    for m in range1.clone() {
        for n in range2.clone() {
            for p in range1.clone() {
                for q in range2.clone() {
                    m4.push(Term::new(v12.get(m, n, p, q) / nf, vec![C(a(m)), A(a(p)), C(b(n)), A(b(q))]));
                }
            }
        }
    }
    [m0, m1, m2, m3, m4]
}

/// `M₁` once the Hartree equations hold for mode 0:
/// `-(1/N) Σ_m [V¹_{m000} a_m* √(N₁-𝒩₁)(𝒩₁+1) + V¹²_{m000} a_m* √(N₁-𝒩₁) 𝒩₂ + h.c.]`
/// and its species-2 analogue.
fn cancellation_terms(model: &ToyModel) -> Vec<Term> {
    use Factor::{Annihilate as A, Create as C};
    let [d1, d2] = model.modes();
    let k1 = d1 - 1;
    let nf = model.n() as f64;
    let (f1, f2) = (model.n1 as f64, model.n2 as f64);
    let (v1, v2, v12) = (&model.v1, &model.v2, &model.v12);
    let s1 = move |x: f64, _y: f64| (f1 - x).max(0.0).sqrt();
    let s2 = move |_x: f64, y: f64| (f2 - y).max(0.0).sqrt();
    let mut terms = Vec::new();
    for m in 1..d1 {
        let (v, w) = (v1.get(m, 0, 0, 0), v12.get(m, 0, 0, 0));
        terms.push(Term::new(
            -1.0 / nf,
            vec![C(m - 1), diag(s1), diag(move |x, y| v * (x + 1.0) + w * y)],
        ));
        let (v, w) = (v1.get(0, 0, m, 0), v12.get(0, 0, m, 0));
        terms.push(Term::new(
            -1.0 / nf,
            vec![diag(move |x, y| v * (x + 1.0) + w * y), diag(s1), A(m - 1)],
        ));
    }
    for m in 1..d2 {
        let (v, w) = (v2.get(m, 0, 0, 0), v12.get(0, m, 0, 0));
        terms.push(Term::new(
            -1.0 / nf,
            vec![C(k1 + m - 1), diag(s2), diag(move |x, y| v * (y + 1.0) + w * x)],
        ));
        let (v, w) = (v2.get(0, 0, m, 0), v12.get(0, 0, 0, m));
        terms.push(Term::new(
            -1.0 / nf,
            vec![diag(move |x, y| v * (y + 1.0) + w * x), diag(s2), A(k1 + m - 1)],
        ));
    }
    terms
}

/// Splits `U_N H U_N^*` into `M₀ … M₄` for a toy model whose mode 0 of each
/// species is the condensate, and checks the isolation of the leading energy
/// and the cancellation of the linear terms.
pub fn split_m(model: &ToyModel) -> Result<SplitReport> {
    model.validate()?;
    let h = build_hamiltonian_capped(model, 10_000)?;
    let sector = h.basis().clone();
    let ex = Arc::new(excitation_basis_for(&sector)?);
    let conj = conjugate_by_excitation(&h, ex.clone())?;
    let m: Vec<SparseOperator> = m_terms(model)
        .iter()
        .map(|t| SparseOperator::assemble(ex.clone(), t))
        .collect();
    let refs: Vec<(f64, &SparseOperator)> = m.iter().map(|op| (1.0, op)).collect();
    let sum = SparseOperator::combine(&refs, 0.0)?;
    let residual = conj.max_difference(&sum)?;

    let e_h = model.condensate_energy();
    let nf = model.n() as f64;
    let (v1_0, v2_0, v12_0) = (model.v1.get(0, 0, 0, 0), model.v2.get(0, 0, 0, 0), model.v12.get(0, 0, 0, 0));
    let poly = SparseOperator::assemble(
        ex.clone(),
        &[Term::new(
            1.0,
            vec![diag(move |x, y| {
                nf * e_h
                    + v1_0 / (2.0 * nf) * x * (x + 1.0)
                    + v2_0 / (2.0 * nf) * y * (y + 1.0)
                    + v12_0 / nf * x * y
            })],
        )],
    );
    let isolation_error = m[0].max_difference(&poly)?;

    let stationarity = model.stationarity_residual();
    let mut warnings = Vec::new();
    let cancellation_error = if stationarity < STATIONARITY_TOL {
        let c = SparseOperator::assemble(ex.clone(), &cancellation_terms(model));
        Some(m[1].max_difference(&c)?)
    } else {
        warnings.push(format!(
            "mode 0 is not a Hartree stationary point (residual {stationarity:.3e}); linear-term cancellation not checked"
        ));
        None
    };
    Ok(SplitReport {
        m,
        residual,
        isolation_error,
        stationarity,
        cancellation_error,
        warnings,
        hartree_energy: e_h,
    })
}

/// One particle number of a convergence sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub dim: usize,
    pub energy: f64,
    /// `E_N/N - e_H`.
    pub first_order_error: f64,
    /// `E_N - N e_H - inf σ(ℍ)`.
    pub second_order_error: f64,
    /// `|⟨U_N ψ_N, Φ⟩|²` with `Φ` the ground state of `ℍ` on `𝓕₊^{≤N}`.
    pub overlap: f64,
    pub condensation: [f64; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub hartree_energy: f64,
    pub bogoliubov_energy: f64,
    pub xi: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
    /// Particle numbers skipped, with the reason.
    pub skipped: Vec<(usize, String)>,
}

/// Exact ground states of a toy model for total particle numbers `sizes` at
/// the fixed ratio `c₁ = N₁/N` of `model`, compared with the Hartree energy
/// and the Bogoliubov correction.
pub fn bogoliubov_convergence_study(model: &ToyModel, sizes: &[usize], cap: usize) -> Result<ConvergenceStudy> {
    model.validate()?;
    let [c1, _] = model.ratios();
    let (frame, hartree) = model.condensate_frame()?;
    let blocks = frame.quadratic_blocks()?;
    let spectrum = diagonalize_quadratic(&blocks)?;
    let e_h = hartree.energy;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &n in sizes {
        let n1f = c1 * n as f64;
        let n1 = n1f.round() as usize;
        if (n1f - n1 as f64).abs() > 1e-9 || n1 == 0 || n1 >= n {
            skipped.push((n, format!("N = {n} is incompatible with the ratio c1 = {c1}")));
            continue;
        }
        let m = frame.with_particles(n1, n - n1)?;
        let h = match build_hamiltonian_capped(&m, cap) {
            Ok(h) => h,
            Err(Error::DimensionCap { dim, cap }) => {
                skipped.push((n, format!("basis dimension {dim} exceeds the cap {cap}")));
                continue;
            }
            Err(e) => return Err(e),
        };
        let (energy, psi) = ground_state(&h)?;
        let chi = excitation_map(&psi)?;
        let hq = quadratic_hamiltonian_on(&blocks, chi.basis().clone())?;
        let (_, phi) = ground_state(&hq)?;
        let overlap = chi.inner(&phi)?.powi(2);
        let (g1, g2) = condensation_fraction(&psi)?;
        let nf = n as f64;
        rows.push(ConvergenceRow {
            n,
            n1,
            n2: n - n1,
            dim: h.dim(),
            energy,
            first_order_error: energy / nf - e_h,
            second_order_error: energy - nf * e_h - spectrum.ground_energy,
            overlap,
            condensation: [g1, g2],
        });
    }
    Ok(ConvergenceStudy {
        hartree_energy: e_h,
        bogoliubov_energy: spectrum.ground_energy,
        xi: spectrum.xi,
        rows,
        skipped,
    })
}
