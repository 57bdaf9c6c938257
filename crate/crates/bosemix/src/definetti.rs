//! Finite-dimensional de Finetti experiments.
//!
//! The Husimi measure of a state `ψ` in the `(N₁, N₂)` sector is the
//! probability measure on pairs of unit vectors
//! `dμ(u, v) = D₁D₂ |⟨u^{⊗N₁} ⊗ v^{⊗N₂}, ψ⟩|² du dv`, where `du`, `dv` are the
//! uniform (Haar) measures on the complex unit spheres and `D_α` is the
//! dimension of the symmetric sector of species `α`. With this choice the
//! Schur identity `D ∫ |u^{⊗N}⟩⟨u^{⊗N}| du = 1` makes `μ` a probability
//! measure, and its moments approximate the reduced density matrices of `ψ`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{reduced_density, BasisKind, FockBasis, ManyBodyVector};
use crate::linalg;

/// Samples drawn from one RNG stream.
const CHUNK: usize = 4096;
/// Fewest samples accepted by the samplers.
pub const MIN_SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HusimiSample {
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HusimiEnsemble {
    pub modes: [usize; 2],
    pub particles: [usize; 2],
    pub seed: u64,
    pub samples: Vec<HusimiSample>,
}

impl HusimiEnsemble {
    /// Monte Carlo estimate of the total mass.
    pub fn mass(&self) -> f64 {
        self.samples.iter().map(|s| s.weight).sum::<f64>() / self.samples.len() as f64
    }

    /// Standard error of [`Self::mass`].
    pub fn standard_error(&self) -> f64 {
        let n = self.samples.len() as f64;
        let mean = self.mass();
        let var = self.samples.iter().map(|s| (s.weight - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }
}

/// Uniform point on the unit sphere of `C^d`.
fn haar_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<Complex64> {
    let mut z: Vec<Complex64> = (0..d)
        .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect();
    let n = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    z.iter_mut().for_each(|c| *c /= n);
    z
}

/// `Π_m u_m^{n_m} · sqrt(N!/Π n_m!)`, the component of `u^{⊗N}` along the
/// normalised occupation state `n`.
fn coherent_component(u: &[Complex64], occupations: &[u8]) -> Complex64 {
    let mut amp = Complex64::new(1.0, 0.0);
    let mut total = 0usize;
    for (&z, &n) in u.iter().zip(occupations) {
        amp *= z.powu(n as u32);
        // Divide by sqrt(n!) while multiplying the sqrt((total + k)) factors.
        for k in 1..=n as usize {
            amp *= ((total + k) as f64 / k as f64).sqrt();
        }
        total += n as usize;
    }
    amp
}

/// Runs `f` over `count` draws split in fixed chunks, chunk `i` on RNG stream
/// `i` of `seed`; results come back in draw order.
fn chunked<T: Send>(count: usize, seed: u64, f: impl Fn(&mut ChaCha8Rng, usize) -> T + Sync) -> Vec<Vec<T>> {
    let chunks = count.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(count - c * CHUNK);
            (0..len).map(|k| f(&mut rng, c * CHUNK + k)).collect()
        })
        .collect()
}

fn sector_of(psi: &ManyBodyVector) -> Result<(usize, usize)> {
    match psi.basis().kind() {
        BasisKind::Sector { n1, n2 } => Ok((n1, n2)),
        _ => Err(Error::InvalidInput("the Husimi measure needs a sector state".into())),
    }
}

/// Draws `count` Haar pairs `(u, v)` and weights them by the Husimi density of
/// `ψ`. Deterministic for a given seed.
pub fn husimi_sample(psi: &ManyBodyVector, count: usize, seed: u64) -> Result<HusimiEnsemble> {
    if count < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "{count} samples requested; at least {MIN_SAMPLES} are needed"
        )));
    }
    let (n1, n2) = sector_of(psi)?;
    let basis = psi.basis().clone();
    let [d1, d2] = basis.modes();
    let dims = FockBasis::sector_dimension(d1, 1, n1, 0) as f64 * FockBasis::sector_dimension(d2, 1, n2, 0) as f64;
    let coeffs = psi.coefficients();
    let samples = chunked(count, seed, |rng, _| {
        let u = haar_vector(rng, d1);
        let v = haar_vector(rng, d2);
        let mut amp = Complex64::new(0.0, 0.0);
        for (i, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let occ = basis.state(i);
            let a = coherent_component(&u, &occ[..d1]) * coherent_component(&v, &occ[d1..]);
            amp += a.conj() * c;
        }
        HusimiSample {
            u,
            v,
            weight: dims * amp.norm_sqr(),
        }
    });
    Ok(HusimiEnsemble {
        modes: [d1, d2],
        particles: [n1, n2],
        seed,
        samples: samples.into_iter().flatten().collect(),
    })
}

/// Occupation patterns of `N` particles in `d` modes, descending
/// lexicographic.
fn symmetric_states(d: usize, n: usize) -> Result<Vec<Vec<u8>>> {
    let basis = FockBasis::sector_capped(d, 1, n, 0, 10_000)?;
    Ok((0..basis.len()).map(|i| basis.state(i)[..d].to_vec()).collect())
}

/// Largest entry of `|D·mean(|u^{⊗N}⟩⟨u^{⊗N}|) - 1|` over `count` Haar
/// samples, on the symmetric sector of dimension `D ≤ 10⁴`.
pub fn schur_check(d: usize, n: usize, count: usize, seed: u64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidInput("need at least one mode".into()));
    }
    if count < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "{count} samples requested; at least {MIN_SAMPLES} are needed"
        )));
    }
    let states = symmetric_states(d, n)?;
    let dim = states.len();
    let chunks = count.div_ceil(CHUNK);
    let sums: Vec<Vec<Complex64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(count - c * CHUNK);
            let mut acc = vec![Complex64::new(0.0, 0.0); dim * dim];
            let mut amp = vec![Complex64::new(0.0, 0.0); dim];
            for _ in 0..len {
                let u = haar_vector(&mut rng, d);
                for (a, s) in amp.iter_mut().zip(&states) {
                    *a = coherent_component(&u, s);
                }
                for i in 0..dim {
                    for j in 0..dim {
                        acc[i * dim + j] += amp[i] * amp[j].conj();
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Complex64::new(0.0, 0.0); dim * dim];
    for s in &sums {
        for (t, x) in total.iter_mut().zip(s) {
            *t += x;
        }
    }
    let scale = dim as f64 / count as f64;
    let mut dev = 0.0f64;
    for i in 0..dim {
        for j in 0..dim {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((total[i * dim + j] * scale - target).norm());
        }
    }
    Ok(dev)
}

/// `E|u₁|^{2a}|u₂|^{2b} = a! b! (d-1)! / (a+b+d-1)!` for Haar `u` in `C^d`.
pub fn sphere_moment(d: usize, a: usize, b: usize) -> f64 {
    let ln_fact = |k: usize| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    (ln_fact(a) + ln_fact(b) + ln_fact(d - 1) - ln_fact(a + b + d - 1)).exp()
}

/// Trace norm of a Hermitian matrix `A + iB` given by its real and
/// imaginary parts.
fn hermitian_trace_norm(re: &DMatrix<f64>, im: &DMatrix<f64>) -> f64 {
    let n = re.nrows();
    // [[A, -B], [B, A]] carries every eigenvalue of A + iB twice.
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(re);
    big.view_mut((n, n), (n, n)).copy_from(re);
    big.view_mut((0, n), (n, n)).copy_from(&(-im));
    big.view_mut((n, 0), (n, n)).copy_from(im);
    let (vals, _) = linalg::sorted_eigen(&big);
    0.5 * vals.iter().map(|v| v.abs()).sum::<f64>()
}

/// Weighted average of `|u^{⊗k} ⊗ v^{⊗ℓ}⟩⟨·|` normalised by the total
/// weight, as real and imaginary parts indexed like [`reduced_density`].
pub fn definetti_approximant(ensemble: &HusimiEnsemble, k: usize, l: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let [d1, d2] = ensemble.modes;
    let vector = |s: &HusimiSample| -> Result<Vec<Complex64>> {
        Ok(match (k, l) {
            (0, 0) => vec![Complex64::new(1.0, 0.0)],
            (1, 0) => s.u.clone(),
            (0, 1) => s.v.clone(),
            (2, 0) => (0..d1 * d1).map(|r| s.u[r / d1] * s.u[r % d1]).collect(),
            (0, 2) => (0..d2 * d2).map(|r| s.v[r / d2] * s.v[r % d2]).collect(),
            (1, 1) => (0..d1 * d2).map(|r| s.u[r / d2] * s.v[r % d2]).collect(),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "reduced density ({k}, {l}) is not supported"
                )))
            }
        })
    };
    let dim = vector(&ensemble.samples[0])?.len();
    let mut re = DMatrix::zeros(dim, dim);
    let mut im = DMatrix::zeros(dim, dim);
    let mut mass = 0.0;
    for s in &ensemble.samples {
        let w = vector(s)?;
        for i in 0..dim {
            for j in 0..dim {
                let z = w[i] * w[j].conj() * s.weight;
                re[(i, j)] += z.re;
                im[(i, j)] += z.im;
            }
        }
        mass += s.weight;
    }
    if !(mass > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok((re / mass, im / mass))
}

/// `‖γ_ψ^{(k,ℓ)} - Σ w |u^{⊗k}⊗v^{⊗ℓ}⟩⟨·| / Σ w‖₁`.
pub fn definetti_error(psi: &ManyBodyVector, k: usize, l: usize, ensemble: &HusimiEnsemble) -> Result<f64> {
    let (n1, n2) = sector_of(psi)?;
    if ensemble.particles != [n1, n2] || ensemble.modes != psi.basis().modes() {
        return Err(Error::InvalidInput("ensemble does not match the state".into()));
    }
    if (k, l) == (0, 0) {
        return Ok(0.0);
    }
    let gamma = reduced_density(psi, k, l)?;
    let (re, im) = definetti_approximant(ensemble, k, l)?;
    Ok(hermitian_trace_norm(&(gamma - re), &(-im)))
}

/// Exact error for the pure condensate `e₀^{⊗N}` at `k = 1`:
/// `2(d-1)/(N+d)`.
pub fn pure_condensate_error(d: usize, n: usize) -> f64 {
    2.0 * (d as f64 - 1.0) / (n + d) as f64
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
