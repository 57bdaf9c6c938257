//! Zero-energy s-wave scattering.
//!
//! For a nonnegative radial potential `V` the scattering length is
//!
//! ```text
//! 4πa = inf { ∫ |∇f|² + ½ V f² : f → 1 at infinity }.
//! ```
//!
//! Writing `f = w/r` the minimiser solves `w'' = ½ V w` with `w(0) = 0`, and
//! outside the support `w ∝ r - a`. The ODE is integrated with a fixed-step
//! fourth-order Runge–Kutta scheme aligned to the sample grid, and the result
//! is Richardson-extrapolated from step sizes `h` and `h/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonnegative radial potential sampled on the uniform grid
/// `r_i = i * support_radius / (len - 1)`, linearly interpolated in between and
/// zero beyond `support_radius`.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialPotential {
    samples: Vec<f64>,
    support_radius: f64,
}

impl RadialPotential {
    pub fn new(samples: Vec<f64>, support_radius: f64) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::InvalidInput(
                "a radial potential needs at least 3 samples".into(),
            ));
        }
        if !(support_radius.is_finite() && support_radius > 0.0) {
            return Err(Error::InvalidInput(format!(
                "support radius must be positive, got {support_radius}"
            )));
        }
        if let Some((i, v)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "potential sample {i} is {v}; samples must be finite and nonnegative"
            )));
        }
        if *samples.last().unwrap() != 0.0 {
            return Err(Error::InvalidInput(
                "the potential must vanish at the support radius".into(),
            ));
        }
        Ok(Self {
            samples,
            support_radius,
        })
    }

    /// Samples `f` on `len` uniform nodes of `[0, support_radius]`; the last
    /// node is forced to zero.
    pub fn from_fn(support_radius: f64, len: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dr = support_radius / (len.max(2) - 1) as f64;
        let mut samples: Vec<f64> = (0..len).map(|i| f(i as f64 * dr)).collect();
        if let Some(last) = samples.last_mut() {
            *last = 0.0;
        }
        Self::new(samples, support_radius)
    }

    /// The zero potential (trivially supported on `[0, 1]`).
    pub fn zero() -> Self {
        Self {
            samples: vec![0.0; 3],
            support_radius: 1.0,
        }
    }

    /// Barrier of the given height on `r < radius`. The drop to zero is a single
    /// linear ramp centred at `radius`, so the integral `∫ V r² dr` is
    /// `height * radius³ / 3` up to `O(dr²)`.
    pub fn square_barrier(height: f64, radius: f64, len: usize) -> Result<Self> {
        if len < 3 {
            return Err(Error::InvalidInput("barrier needs at least 3 samples".into()));
        }
        let dr = radius / (len as f64 - 1.5);
        let mut samples = vec![height; len];
        samples[len - 1] = 0.0;
        Self::new(samples, dr * (len - 1) as f64)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Radial spacing of the samples.
    pub fn spacing(&self) -> f64 {
        self.support_radius / (self.samples.len() - 1) as f64
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|&v| v == 0.0)
    }

    /// Linear interpolation of the samples; zero outside the support.
    pub fn value_at(&self, r: f64) -> f64 {
        let r = r.abs();
        if r >= self.support_radius {
            return 0.0;
        }
        let t = r / self.spacing();
        let i = (t.floor() as usize).min(self.samples.len() - 2);
        let frac = t - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }

    /// `λ V`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|v| v * factor).collect(),
            self.support_radius,
        )
    }

    /// `N² V(N ·)`, supported on `[0, R₀/N]`.
    pub fn contracted(&self, n: f64) -> Result<Self> {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidInput(format!("scale must be positive, got {n}")));
        }
        Self::new(
            self.samples.iter().map(|v| v * n * n).collect(),
            self.support_radius / n,
        )
    }

    /// Pointwise domination `self ≤ other` (same sample grid required).
    pub fn dominated_by(&self, other: &RadialPotential) -> bool {
        self.samples.len() == other.samples.len()
            && self.support_radius == other.support_radius
            && self.samples.iter().zip(&other.samples).all(|(a, b)| a <= b)
    }
}

/// Radial profile `f(r)` sampled on increasing nodes, with a closed-form tail
/// beyond the last node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub r: Vec<f64>,
    pub f: Vec<f64>,
    tail: Tail,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
enum Tail {
    /// `1 - a/r`
    Scattering { a: f64 },
    /// `1`
    One,
}

impl RadialProfile {
    pub fn value_at(&self, r: f64) -> f64 {
        let r = r.abs();
        let last = *self.r.last().unwrap();
        if r >= last {
            return match self.tail {
                Tail::Scattering { a } => 1.0 - a / r,
                Tail::One => 1.0,
            };
        }
        let j = self.r.partition_point(|&x| x <= r).max(1);
        let (r0, r1) = (self.r[j - 1], self.r[j]);
        let t = (r - r0) / (r1 - r0);
        self.f[j - 1] * (1.0 - t) + self.f[j] * t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringResult {
    pub a: f64,
    pub profile: RadialProfile,
    /// `|E/(4π) - a|` where `E` is the variational energy of the returned profile.
    pub residual: f64,
    /// `|a_h - a_{h/2}|`, the Richardson correction.
    pub step_error: f64,
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScatteringOptions {
    /// RK4 steps per sample interval at the coarse level (rounded up to even).
    pub substeps: usize,
    /// Relative tolerance on the step error and the energy residual.
    pub tolerance: f64,
}

impl Default for ScatteringOptions {
    fn default() -> Self {
        Self {
            substeps: 8,
            tolerance: 1e-6,
        }
    }
}

/// Node values of `w`, `w'` and the accumulated energy integral
/// `∫ (w' - w/r)² + (½V - e) w² dr`, all carrying one common positive rescaling.
struct Integration {
    w: Vec<f64>,
    dw: Vec<f64>,
    energy: f64,
}

/// Integrates `w'' = (½V(s) - e) w` with `w(0) = 0`, `w'(0) = 1` across `nodes`
/// sample intervals of `v` (continuing with `V = 0` past the support). The
/// energy integral is accumulated over the first `energy_nodes` intervals by
/// Simpson's rule on the RK4 points; `substeps` must be even.
fn integrate(
    v: &RadialPotential,
    e: f64,
    nodes: usize,
    energy_nodes: usize,
    substeps: usize,
) -> Integration {
    debug_assert!(substeps % 2 == 0);
    let dr = v.spacing();
    let h = dr / substeps as f64;
    let samples = v.samples();
    let q = |i: usize, t: f64| -> f64 {
        let half_v = if i + 1 < samples.len() {
            0.5 * (samples[i] * (1.0 - t) + samples[i + 1] * t)
        } else {
            0.0
        };
        half_v - e
    };
    let density = |r: f64, y: f64, z: f64, q: f64| -> f64 {
        let kin = if r == 0.0 { 0.0 } else { z - y / r };
        kin * kin + q * y * y
    };
    let mut w = Vec::with_capacity(nodes + 1);
    let mut dw = Vec::with_capacity(nodes + 1);
    let (mut y, mut z) = (0.0f64, 1.0f64);
    w.push(y);
    dw.push(z);
    let mut energy = 0.0;
    let mut values = vec![0.0; substeps + 1];
    for i in 0..nodes {
        let r0 = i as f64 * dr;
        let track = i < energy_nodes;
        if track {
            values[0] = density(r0, y, z, q(i, 0.0));
        }
        for s in 0..substeps {
            let t0 = s as f64 / substeps as f64;
            let tm = (s as f64 + 0.5) / substeps as f64;
            let t1 = (s + 1) as f64 / substeps as f64;
            let (q0, qm, q1) = (q(i, t0), q(i, tm), q(i, t1));
            let k1 = (z, q0 * y);
            let k2 = (z + 0.5 * h * k1.1, qm * (y + 0.5 * h * k1.0));
            let k3 = (z + 0.5 * h * k2.1, qm * (y + 0.5 * h * k2.0));
            let k4 = (z + h * k3.1, q1 * (y + h * k3.0));
            y += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            z += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            if track {
                values[s + 1] = density(r0 + (s + 1) as f64 * h, y, z, q1);
            }
        }
        if track {
            let mut panel = values[0] + values[substeps];
            for (s, val) in values.iter().enumerate().take(substeps).skip(1) {
                panel += if s % 2 == 1 { 4.0 * val } else { 2.0 * val };
            }
            energy += panel * h / 3.0;
        }
        w.push(y);
        dw.push(z);
        let scale = y.abs().max(z.abs());
        if scale > 1e100 {
            y /= scale;
            z /= scale;
            energy /= scale * scale;
            for x in w.iter_mut().chain(dw.iter_mut()) {
                *x /= scale;
            }
        }
    }
    Integration { w, dw, energy }
}

struct Extraction {
    a: f64,
    slope: f64,
    energy_over_4pi: f64,
    sol: Integration,
}

fn extract(v: &RadialPotential, substeps: usize) -> Extraction {
    let m = v.samples().len() - 1;
    let dr = v.spacing();
    let sol = integrate(v, 0.0, 2 * m, m, substeps);
    // Least-squares line through the nodes on [R₀, 2R₀].
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    let count = (m + 1) as f64;
    for j in m..=2 * m {
        let x = j as f64 * dr;
        let y = sol.w[j];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    let intercept = (sy - slope * sx) / count;
    let a = -intercept / slope;
    // f = w/(slope r): the integral up to R₀ plus the exact tail ∫ a²/r² dr.
    let energy_over_4pi = sol.energy / (slope * slope) + a * a / v.support_radius();
    Extraction {
        a,
        slope,
        energy_over_4pi,
        sol,
    }
}

/// Scattering length of `v` together with the minimising profile.
pub fn scattering_length(v: &RadialPotential) -> Result<ScatteringResult> {
    scattering_length_with(v, &ScatteringOptions::default())
}

pub fn scattering_length_with(
    v: &RadialPotential,
    options: &ScatteringOptions,
) -> Result<ScatteringResult> {
    let r0 = v.support_radius();
    let m = v.samples().len() - 1;
    if v.is_zero() {
        return Ok(ScatteringResult {
            a: 0.0,
            profile: RadialProfile {
                r: vec![0.0, r0],
                f: vec![1.0, 1.0],
                tail: Tail::Scattering { a: 0.0 },
            },
            residual: 0.0,
            step_error: 0.0,
        });
    }
    let substeps = options.substeps.max(2).div_ceil(2) * 2;
    let coarse = extract(v, substeps);
    let fine = extract(v, 2 * substeps);
    let a = (16.0 * fine.a - coarse.a) / 15.0;
    let step_error = (fine.a - coarse.a).abs();
    let allowed = options.tolerance * a.abs().max(1e-9 * r0);
    if !step_error.is_finite() || step_error > allowed {
        return Err(Error::NoConvergence(format!(
            "scattering length not resolved: a(h) = {:.10e}, a(h/2) = {:.10e}, \
             step error {step_error:.3e} exceeds {allowed:.3e}; refine the radial grid \
             or raise substeps",
            coarse.a, fine.a
        )));
    }
    let residual = (fine.energy_over_4pi - fine.a).abs();
    if !residual.is_finite() || residual > allowed {
        return Err(Error::NoConvergence(format!(
            "energy residual {residual:.3e} exceeds {allowed:.3e} (a = {:.10e})",
            fine.a
        )));
    }
    let dr = v.spacing();
    let r: Vec<f64> = (0..=m).map(|i| i as f64 * dr).collect();
    let f = r
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if i == 0 {
                fine.sol.dw[0] / fine.slope
            } else {
                fine.sol.w[i] / (fine.slope * x)
            }
        })
        .collect();
    Ok(ScatteringResult {
        a,
        profile: RadialProfile {
            r,
            f,
            tail: Tail::Scattering { a },
        },
        residual,
        step_error,
    })
}

/// `(8π)⁻¹ ∫_{ℝ³} V = ½ ∫₀^{R₀} V(r) r² dr`, integrated exactly for the
/// piecewise-linear interpolant.
pub fn born_approximation(v: &RadialPotential) -> f64 {
    let dr = v.spacing();
    let s = v.samples();
    let mut total = 0.0;
    for i in 0..s.len() - 1 {
        let (r0, r1) = (i as f64 * dr, (i + 1) as f64 * dr);
        let slope = (s[i + 1] - s[i]) / dr;
        let offset = s[i] - slope * r0;
        total += offset * (r1.powi(3) - r0.powi(3)) / 3.0 + slope * (r1.powi(4) - r0.powi(4)) / 4.0;
    }
    0.5 * total
}

/// Ground state of the Neumann problem `-Δf + ½ N² V(N·) f = λ f` on the ball
/// of radius `ell`, normalised by `f(ell) = 1` and extended by 1 outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeumannGround {
    pub lambda: f64,
    pub profile: RadialProfile,
    /// Scattering length of the unscaled potential.
    pub a: f64,
}

impl NeumannGround {
    /// `max (1 - f(r)) N r` over the sampled profile.
    pub fn decay_constant(&self, n: f64) -> f64 {
        self.profile
            .r
            .iter()
            .zip(&self.profile.f)
            .map(|(&r, &f)| (1.0 - f) * n * r)
            .fold(0.0, f64::max)
    }
}

/// Sample count used for the free part of the Neumann profile.
const FREE_NODES: usize = 2000;

/// State at `r₁ = R₀/N` in the physical variable: `(w, dw/dr)`.
fn inner_state(v: &RadialPotential, n: f64, lambda: f64, substeps: usize) -> Integration {
    let m = v.samples().len() - 1;
    // In s = N r the equation reads w'' = (½V(s) - λ/N²) w.
    integrate(v, lambda / (n * n), m, 0, substeps)
}

/// Free solution of `-w'' = λ w` started from `(w1, dw1)` after distance `d`.
fn free_propagate(w1: f64, dw1: f64, lambda: f64, d: f64) -> (f64, f64) {
    if lambda == 0.0 {
        return (w1 + dw1 * d, dw1);
    }
    let k = lambda.sqrt();
    let (s, c) = (k * d).sin_cos();
    (w1 * c + dw1 * s / k, -w1 * k * s + dw1 * c)
}

pub fn neumann_ground(v: &RadialPotential, n: f64, ell: f64) -> Result<NeumannGround> {
    if !(ell.is_finite() && ell > 0.0) {
        return Err(Error::InvalidInput(format!("ell must be positive, got {ell}")));
    }
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::InvalidInput(format!("N must be positive, got {n}")));
    }
    let r1 = v.support_radius() / n;
    if r1 >= ell {
        return Err(Error::Precondition(format!(
            "support of N²V(N·) must lie inside the ball: R₀/N = {r1} is not below ell = {ell}"
        )));
    }
    if v.is_zero() {
        let r: Vec<f64> = (0..=FREE_NODES)
            .map(|i| ell * i as f64 / FREE_NODES as f64)
            .collect();
        let f = vec![1.0; r.len()];
        return Ok(NeumannGround {
            lambda: 0.0,
            profile: RadialProfile {
                r,
                f,
                tail: Tail::One,
            },
            a: 0.0,
        });
    }
    let a = scattering_length(v)?.a;
    let substeps = ScatteringOptions::default().substeps;
    let d = ell - r1;
    let mismatch = |lambda: f64| -> f64 {
        let sol = inner_state(v, n, lambda, substeps);
        let w1 = *sol.w.last().unwrap();
        let dw1 = n * *sol.dw.last().unwrap();
        let (wl, dwl) = free_propagate(w1, dw1, lambda, d);
        // Neumann condition on f = w/r: ell w'(ell) - w(ell) = 0.
        (ell * dwl - wl) / dw1.abs().max(w1.abs() / r1)
    };
    let mut lo = 0.0;
    let mut hi = 10.0 * 3.0 * a / (n * ell.powi(3));
    let g_lo = mismatch(lo);
    if !(g_lo > 0.0) {
        return Err(Error::NoConvergence(format!(
            "Neumann mismatch at zero energy is {g_lo:.3e}, expected positive"
        )));
    }
    let mut expansions = 0;
    while mismatch(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::NoConvergence(
                "could not bracket the Neumann eigenvalue".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mismatch(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);

    let sol = inner_state(v, n, lambda, substeps);
    let w1 = *sol.w.last().unwrap();
    let dw1 = n * *sol.dw.last().unwrap();
    let (wl, _) = free_propagate(w1, dw1, lambda, d);
    let norm = wl / ell;
    let ds = v.spacing();
    let mut r = Vec::with_capacity(sol.w.len() + FREE_NODES);
    let mut f = Vec::with_capacity(sol.w.len() + FREE_NODES);
    for (i, (&wi, &dwi)) in sol.w.iter().zip(&sol.dw).enumerate() {
        let ri = i as f64 * ds / n;
        r.push(ri);
        f.push(if i == 0 { n * dwi / norm } else { wi / (ri * norm) });
    }
    for j in 1..=FREE_NODES {
        let rj = r1 + d * j as f64 / FREE_NODES as f64;
        let (wj, _) = free_propagate(w1, dw1, lambda, rj - r1);
        r.push(rj);
        f.push(wj / (rj * norm));
    }
    if let Some(last) = f.last_mut() {
        *last = 1.0;
    }
    Ok(NeumannGround {
        lambda,
        profile: RadialProfile {
            r,
            f,
            tail: Tail::One,
        },
        a,
    })
}
