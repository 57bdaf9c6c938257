//! Periodic spectral discretisation.
//!
//! Continuum quantities live on a uniform periodic box `[-L/2, L/2)^dim` with
//! `n` points per axis. Derivatives are Fourier multipliers and convolutions are
//! computed exactly (for the periodic problem) through the FFT. Quadrature uses
//! uniform trapezoid weights `spacing^dim`, which is spectrally accurate for
//! smooth periodic integrands.
//!
//! All transforms run line-by-line in parallel; every line is independent, so
//! the result does not depend on the number of worker threads.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plain description of a grid, used for configuration and serialisation.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub points_per_axis: usize,
    pub box_length: f64,
}

/// A periodic box with cached FFT plans and the `|k|^2` multiplier.
#[derive(Clone)]
pub struct Grid {
    spec: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k_squared: Arc<Vec<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl Grid {
    /// Builds a grid. `dim` must be 1 or 3 and `points_per_axis` a power of two
    /// no smaller than 8.
    pub fn new(dim: usize, points_per_axis: usize, box_length: f64) -> Result<Self> {
        Self::from_spec(GridSpec {
            dim,
            points_per_axis,
            box_length,
        })
    }

    pub fn from_spec(spec: GridSpec) -> Result<Self> {
        if spec.dim != 1 && spec.dim != 3 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 3, got {}",
                spec.dim
            )));
        }
        let n = spec.points_per_axis;
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points_per_axis must be a power of two >= 8, got {n}"
            )));
        }
        if !(spec.box_length.is_finite() && spec.box_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "box_length must be positive, got {}",
                spec.box_length
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let axis_k: Vec<f64> = (0..n)
            .map(|j| wavenumber_index(j, n) as f64 * 2.0 * std::f64::consts::PI / spec.box_length)
            .collect();
        let total = n.pow(spec.dim as u32);
        let k_squared = (0..total)
            .map(|flat| {
                let idx = unflatten(flat, n, spec.dim);
                idx[..spec.dim].iter().map(|&j| axis_k[j] * axis_k[j]).sum()
            })
            .collect();
        Ok(Self {
            spec,
            forward,
            inverse,
            k_squared: Arc::new(k_squared),
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.spec.points_per_axis
    }

    pub fn box_length(&self) -> f64 {
        self.spec.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.spec.box_length / self.spec.points_per_axis as f64
    }

    /// Quadrature weight of a single grid cell, `spacing^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.spec.dim as i32)
    }

    /// Volume of the periodic box, `box_length^dim`.
    pub fn volume(&self) -> f64 {
        self.spec.box_length.powi(self.spec.dim as i32)
    }

    /// Total number of grid points, `points_per_axis^dim`.
    pub fn len(&self) -> usize {
        self.spec.points_per_axis.pow(self.spec.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Axis indices of a flat (row-major, last axis fastest) index. Unused
    /// trailing entries are zero.
    pub fn indices(&self, flat: usize) -> [usize; 3] {
        unflatten(flat, self.spec.points_per_axis, self.spec.dim)
    }

    /// Position of a grid point; the box is `[-L/2, L/2)` along each axis, so the
    /// origin sits at index `n/2`.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.indices(flat);
        let h = self.spacing();
        let half = self.spec.box_length / 2.0;
        let mut x = [0.0; 3];
        for a in 0..self.spec.dim {
            x[a] = -half + idx[a] as f64 * h;
        }
        x
    }

    /// `|x|^2` of a grid point.
    pub fn radius_squared(&self, flat: usize) -> f64 {
        self.position(flat).iter().map(|c| c * c).sum()
    }

    /// Flat index of the grid point at the origin.
    pub fn origin_index(&self) -> usize {
        let n = self.spec.points_per_axis;
        let mut flat = 0;
        for _ in 0..self.spec.dim {
            flat = flat * n + n / 2;
        }
        flat
    }

    /// Wave vector of a flat Fourier index.
    pub fn wave_vector(&self, flat: usize) -> [f64; 3] {
        let n = self.spec.points_per_axis;
        let idx = self.indices(flat);
        let mut k = [0.0; 3];
        for a in 0..self.spec.dim {
            k[a] = wavenumber_index(idx[a], n) as f64 * 2.0 * std::f64::consts::PI
                / self.spec.box_length;
        }
        k
    }

    /// `|k|^2` for every flat Fourier index.
    pub fn k_squared(&self) -> &[f64] {
        &self.k_squared
    }

    /// Unnormalised forward DFT along every axis, in place.
    pub fn fft_forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse DFT including the `1/len` normalisation, in place.
    pub fn fft_inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        data.par_iter_mut().for_each(|z| *z *= scale);
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len(), "buffer does not match the grid");
        let n = self.spec.points_per_axis;
        match self.spec.dim {
            1 => fft.process(data),
            3 => {
                // Each axis is made contiguous by a transpose and transformed in
                // batches of whole lines.
                data.par_chunks_mut(n * n).for_each(|plane| fft.process(plane));
                data.par_chunks_mut(n * n).for_each(|plane| {
                    let mut t = vec![Complex64::new(0.0, 0.0); n * n];
                    transpose(plane, &mut t, n, n);
                    fft.process(&mut t);
                    transpose(&t, plane, n, n);
                });
                let plane = n * n;
                let mut columns = vec![Complex64::new(0.0, 0.0); data.len()];
                transpose(data, &mut columns, n, plane);
                columns.par_chunks_mut(plane).for_each(|c| fft.process(c));
                transpose(&columns, data, plane, n);
            }
            _ => unreachable!("grid dimension validated at construction"),
        }
    }
}

/// Writes the transpose of the row-major `rows × cols` matrix `src` into `dst`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const BLOCK: usize = 16;
    dst.par_chunks_mut(rows * BLOCK).enumerate().for_each(|(cb, out)| {
        let c0 = cb * BLOCK;
        let width = out.len() / rows;
        for r0 in (0..rows).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                let row = &src[r * cols + c0..r * cols + c0 + width];
                for (k, &z) in row.iter().enumerate() {
                    out[k * rows + r] = z;
                }
            }
        }
    });
}

fn wavenumber_index(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

fn unflatten(flat: usize, n: usize, dim: usize) -> [usize; 3] {
    let mut idx = [0usize; 3];
    let mut rest = flat;
    for a in (0..dim).rev() {
        idx[a] = rest % n;
        rest /= n;
    }
    idx
}

/// Complex field sampled on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values but the grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn constant(grid: &Grid, value: Complex64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f` at every grid position.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64; 3]) -> Complex64 + Sync) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| f(&grid.position(i)))
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_real_fn(grid: &Grid, f: impl Fn(&[f64; 3]) -> f64 + Sync) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn from_real(grid: &Grid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Builds a field from its (unnormalised) DFT coefficients.
    pub fn from_fourier(grid: &Grid, mut coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() != grid.len() {
            return Err(Error::InvalidInput("coefficient count mismatch".into()));
        }
        grid.fft_inverse(&mut coefficients);
        Self::new(grid, coefficients)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Real parts of the samples.
    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    /// Unnormalised DFT coefficients.
    pub fn fourier(&self) -> Vec<Complex64> {
        let mut c = self.values.clone();
        self.grid.fft_forward(&mut c);
        c
    }

    /// Pointwise `|f|^2` as a real field.
    pub fn density(&self) -> SpectralField {
        self.map(|z| Complex64::new(z.norm_sqr(), 0.0))
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64 + Sync) -> SpectralField {
        SpectralField {
            grid: self.grid.clone(),
            values: self.values.par_iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scaled(&self, factor: Complex64) -> SpectralField {
        self.map(|z| z * factor)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: Complex64, other: &SpectralField) -> SpectralField {
        self.check_same_grid(other);
        SpectralField {
            grid: self.grid.clone(),
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| a + alpha * b)
                .collect(),
        }
    }

    /// Pointwise product.
    pub fn pointwise(&self, other: &SpectralField) -> SpectralField {
        self.check_same_grid(other);
        SpectralField {
            grid: self.grid.clone(),
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| a * b)
                .collect(),
        }
    }

    /// Quadrature of the field, `sum f * spacing^dim`.
    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.grid.cell_volume()
    }

    /// Largest modulus among the samples.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn same_grid(&self, other: &SpectralField) -> bool {
        self.grid == other.grid
    }

    fn check_same_grid(&self, other: &SpectralField) {
        assert!(self.same_grid(other), "fields live on different grids");
    }
}

/// `-Δf` through the Fourier multiplier `|k|^2`.
pub fn laplacian_apply(f: &SpectralField) -> SpectralField {
    let grid = f.grid();
    let mut c = f.fourier();
    c.par_iter_mut()
        .zip(grid.k_squared().par_iter())
        .for_each(|(z, &k2)| *z *= k2);
    grid.fft_inverse(&mut c);
    SpectralField {
        grid: grid.clone(),
        values: c,
    }
}

/// Periodic convolution `(f*g)(x) = Σ_y f(x-y) g(y) spacing^dim`.
///
/// Both arguments are sampled at box positions, so a kernel centred at the
/// origin is simply a field peaked at [`Grid::origin_index`].
pub fn periodic_convolve(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch);
    }
    let grid = f.grid();
    let fh = f.fourier();
    let gh = g.fourier();
    Ok(convolve_fourier(grid, &fh, &gh))
}

/// Convolution from precomputed DFT coefficients of both factors.
pub(crate) fn convolve_fourier(grid: &Grid, fh: &[Complex64], gh: &[Complex64]) -> SpectralField {
    let w = grid.cell_volume();
    let n = grid.points_per_axis();
    let dim = grid.dim();
    // Positions start at -L/2, so the circular result is shifted by n/2 along
    // each axis; in Fourier space that is the sign (-1)^(j_1 + ... + j_dim).
    let mut c: Vec<Complex64> = fh
        .par_iter()
        .zip(gh.par_iter())
        .enumerate()
        .map(|(flat, (&a, &b))| {
            let idx = unflatten(flat, n, dim);
            let parity: usize = idx[..dim].iter().sum();
            let sign = if parity % 2 == 0 { w } else { -w };
            a * b * sign
        })
        .collect();
    grid.fft_inverse(&mut c);
    SpectralField {
        grid: grid.clone(),
        values: c,
    }
}

/// Quadrature inner product `Σ conj(f) g spacing^dim`.
pub fn inner_product(f: &SpectralField, g: &SpectralField) -> Complex64 {
    f.check_same_grid(g);
    let s: Complex64 = f
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| a.conj() * b)
        .sum();
    s * f.grid.cell_volume()
}

pub fn l2_norm(f: &SpectralField) -> f64 {
    let s: f64 = f.values.iter().map(|z| z.norm_sqr()).sum();
    (s * f.grid.cell_volume()).sqrt()
}

/// `‖∇f‖_{L²}` computed spectrally.
pub fn gradient_norm(f: &SpectralField) -> f64 {
    let c = f.fourier();
    let s: f64 = c
        .iter()
        .zip(f.grid.k_squared())
        .map(|(z, &k2)| z.norm_sqr() * k2)
        .sum();
    (s * f.grid.cell_volume() / f.grid.len() as f64).sqrt()
}

/// `(‖f‖² + ‖∇f‖²)^{1/2}`.
pub fn h1_norm(f: &SpectralField) -> f64 {
    let a = l2_norm(f);
    let b = gradient_norm(f);
    (a * a + b * b).sqrt()
}

/// Rescales to unit L² norm.
pub fn normalize(f: &SpectralField) -> Result<SpectralField> {
    let n = l2_norm(f);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(f.scaled(Complex64::new(1.0 / n, 0.0)))
}

/// Ratio of the largest amplitude on the outer faces of the box to the peak
/// amplitude. Used to check that a box is large enough for a localised field.
pub fn boundary_ratio(f: &SpectralField) -> f64 {
    let grid = f.grid();
    let peak = f.max_abs();
    if peak == 0.0 {
        return 0.0;
    }
    let mut edge: f64 = 0.0;
    for (i, z) in f.values().iter().enumerate() {
        let idx = grid.indices(i);
        if idx[..grid.dim()].iter().any(|&j| j == 0) {
            edge = edge.max(z.norm());
        }
    }
    edge / peak
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_field(grid: &Grid, rng: &mut ChaCha8Rng) -> SpectralField {
        let values = (0..grid.len())
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        SpectralField::new(grid, values).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(2, 16, 1.0).is_err());
        assert!(Grid::new(1, 12, 1.0).is_err());
        assert!(Grid::new(1, 4, 1.0).is_err());
        assert!(Grid::new(1, 16, 0.0).is_err());
        let g = Grid::new(3, 8, 2.0).unwrap();
        assert_eq!(g.len(), 512);
        assert!((g.spacing() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = Grid::new(3, 8, 5.0).unwrap();
        let f = SpectralField::constant(&g, c(2.5));
        assert!(laplacian_apply(&f).max_abs() < 1e-12);
    }

    #[test]
    fn plane_wave_is_an_eigenfunction() {
        for dim in [1, 3] {
            let l = 3.0;
            let g = Grid::new(dim, 16, l).unwrap();
            let k = 2.0 * std::f64::consts::PI / l;
            let f = SpectralField::from_fn(&g, |x| Complex64::new(0.0, k * x[0]).exp());
            let lf = laplacian_apply(&f);
            let expected = f.scaled(c(k * k));
            let diff = lf.axpy(c(-1.0), &expected).max_abs();
            assert!(diff < 1e-11, "dim {dim}: {diff}");
        }
    }

    #[test]
    fn laplacian_matches_refined_finite_differences() {
        // Band-limited field on a 16-point grid; the quadratic form is checked
        // against a sixth-order finite-difference Laplacian of the same trig
        // polynomial evaluated on a 64x finer grid.
        let l = 2.0 * std::f64::consts::PI;
        let g = Grid::new(1, 16, l).unwrap();
        let modes = [(1.0, 0.3, 1), (0.5, -0.7, 2), (0.25, 0.1, 5)];
        let eval = |x: f64| -> Complex64 {
            modes
                .iter()
                .map(|&(re, im, k)| Complex64::new(re, im) * Complex64::new(0.0, k as f64 * x).exp())
                .sum()
        };
        let f = SpectralField::from_fn(&g, |x| eval(x[0]));
        let spectral = inner_product(&f, &laplacian_apply(&f)).re;

        let fine = 16 * 64;
        let h = l / fine as f64;
        let coeffs = [1.0 / 90.0, -3.0 / 20.0, 3.0 / 2.0, -49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];
        let mut quad = 0.0;
        for i in 0..fine {
            let x = -l / 2.0 + i as f64 * h;
            let mut lap = Complex64::new(0.0, 0.0);
            for (j, w) in coeffs.iter().enumerate() {
                lap += eval(x + (j as f64 - 3.0) * h) * *w;
            }
            lap /= h * h;
            quad += (eval(x).conj() * (-lap)).re * h;
        }
        assert!(spectral > 0.0);
        assert!(((spectral - quad) / quad).abs() < 1e-6, "{spectral} vs {quad}");
    }

    #[test]
    fn convolution_identity_and_constant() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_field(&g, &mut rng);
        let mut delta = SpectralField::zeros(&g);
        delta.values_mut()[g.origin_index()] = c(1.0 / g.cell_volume());
        let conv = periodic_convolve(&delta, &h).unwrap();
        assert!(conv.axpy(c(-1.0), &h).max_abs() < 1e-12);

        let one = SpectralField::constant(&g, c(1.0));
        let conv = periodic_convolve(&one, &h).unwrap();
        let total = h.integral();
        assert!(conv.values().iter().all(|z| (z - total).norm() < 1e-12));
    }

    #[test]
    fn convolution_matches_direct_summation() {
        let g = Grid::new(1, 16, 3.0).unwrap();
        let n = 16usize;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let f = random_field(&g, &mut rng);
            let h = random_field(&g, &mut rng);
            let conv = periodic_convolve(&f, &h).unwrap();
            // x_i - x_j = (i - j) * dx corresponds to index i - j + n/2.
            for i in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    let k = (i + n + n / 2 - j) % n;
                    s += f.values()[k] * h.values()[j];
                }
                s *= g.cell_volume();
                assert!((s - conv.values()[i]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn convolution_rejects_grid_mismatch() {
        let a = SpectralField::zeros(&Grid::new(1, 16, 3.0).unwrap());
        let b = SpectralField::zeros(&Grid::new(1, 16, 4.0).unwrap());
        assert!(matches!(periodic_convolve(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn norms_and_normalisation() {
        let g = Grid::new(3, 8, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_field(&g, &mut rng);
        let n = l2_norm(&f);
        assert!((inner_product(&f, &f).re - n * n).abs() < 1e-10);
        assert!(inner_product(&f, &f).im.abs() < 1e-12);
        let a = normalize(&f).unwrap();
        let b = normalize(&f.scaled(c(2.0))).unwrap();
        assert!(a.axpy(c(-1.0), &b).max_abs() < 1e-14);
        assert!((l2_norm(&a) - 1.0).abs() < 1e-12);
        assert!(h1_norm(&a) >= 1.0);
        assert!(matches!(normalize(&SpectralField::zeros(&g)), Err(Error::ZeroNorm)));
    }

    #[test]
    fn parseval_against_direct_dft() {
        let g = Grid::new(1, 16, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_field(&g, &mut rng);
        let n = 16usize;
        let mut s = 0.0;
        for k in 0..n {
            let mut coef = Complex64::new(0.0, 0.0);
            for j in 0..n {
                let phase = -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                coef += f.values()[j] * Complex64::new(0.0, phase).exp();
            }
            s += coef.norm_sqr();
        }
        let fourier_norm = (s * g.cell_volume() / n as f64).sqrt();
        assert!((fourier_norm - l2_norm(&f)).abs() < 1e-12);
    }

    #[test]
    fn boundary_ratio_of_gaussian() {
        let g = Grid::new(1, 64, 14.0).unwrap();
        let f = SpectralField::from_real_fn(&g, |x| (-x[0] * x[0] / 2.0).exp());
        assert!(boundary_ratio(&f) < 1e-8);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field_strategy(len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
            proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(50))]

            #[test]
            fn convolution_commutes(a in field_strategy(32), b in field_strategy(32)) {
                let g = Grid::new(1, 32, 5.0).unwrap();
                let f = SpectralField::new(&g, a.iter().map(|&(x, y)| Complex64::new(x, y)).collect()).unwrap();
                let h = SpectralField::new(&g, b.iter().map(|&(x, y)| Complex64::new(x, y)).collect()).unwrap();
                let fg = periodic_convolve(&f, &h).unwrap();
                let gf = periodic_convolve(&h, &f).unwrap();
                prop_assert!(fg.axpy(c(-1.0), &gf).max_abs() < 1e-12);
            }

            #[test]
            fn kinetic_form_is_real_and_nonnegative(a in field_strategy(64)) {
                let g = Grid::new(1, 64, 7.0).unwrap();
                let f = SpectralField::new(&g, a.iter().map(|&(x, y)| Complex64::new(x, y)).collect()).unwrap();
                let q = inner_product(&f, &laplacian_apply(&f));
                prop_assert!(q.re >= 0.0);
                prop_assert!(q.im.abs() < 1e-10 * (1.0 + q.re));
            }

            #[test]
            fn fourier_round_trip(a in field_strategy(512)) {
                let g = Grid::new(3, 8, 2.0).unwrap();
                let f = SpectralField::new(&g, a.iter().map(|&(x, y)| Complex64::new(x, y)).collect()).unwrap();
                let back = SpectralField::from_fourier(&g, f.fourier()).unwrap();
                prop_assert!(back.axpy(c(-1.0), &f).max_abs() < 1e-12);
            }
        }
    }
}
