//! Two-component Hartree and Gross–Pitaevskii functionals.
//!
//! Both functionals share the form
//!
//! ```text
//! E[u,v] = c₁⟨u,(-Δ+U¹)u⟩ + c₂⟨v,(-Δ+U²)v⟩
//!        + c₁²/2 ⟨ρ_u, W¹ρ_u⟩ + c₂²/2 ⟨ρ_v, W²ρ_v⟩ + c₁c₂ ⟨ρ_u, W¹²ρ_v⟩
//! ```
//!
//! with `ρ = |·|²`. In the mean-field regime `Wρ = V*ρ`; in the
//! Gross–Pitaevskii regime `Wρ = 8πa ρ` with the scattering length `a`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    convolve_fourier, inner_product, l2_norm, laplacian_apply, normalize, Grid, GridSpec,
    SpectralField,
};
use crate::scattering::{scattering_length, RadialPotential};

const PI: f64 = std::f64::consts::PI;

/// Tolerance on `‖u‖ = 1` accepted by the energy functions.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-8;

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Hartree functional with convolution interactions.
    MeanField,
    /// Gross–Pitaevskii functional with contact interactions.
    GrossPitaevskii,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Supplied,
    /// Computed from radial potentials by the scattering solver.
    Computed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringLengths {
    pub a1: f64,
    pub a2: f64,
    pub a12: f64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
struct Interaction {
    field: SpectralField,
    hat: Arc<Vec<Complex64>>,
    is_zero: bool,
}

impl Interaction {
    fn new(field: SpectralField) -> Self {
        let hat = Arc::new(field.fourier());
        let is_zero = field.values().iter().all(|z| *z == Complex64::new(0.0, 0.0));
        Self { field, hat, is_zero }
    }
}

/// All ingredients of a two-component model on a fixed grid.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    grid: Grid,
    traps: [SpectralField; 2],
    interactions: [Interaction; 3],
    c: [f64; 2],
    regime: Regime,
    scattering: Option<ScatteringLengths>,
    check_assumptions: bool,
}

fn check_real(name: &str, f: &SpectralField, grid: &Grid) -> Result<()> {
    if f.grid() != grid {
        return Err(Error::GridMismatch);
    }
    if f.values().iter().any(|z| !z.re.is_finite() || z.im != 0.0) {
        return Err(Error::InvalidInput(format!("{name} must be real and finite")));
    }
    Ok(())
}

fn check_ratio(c1: f64) -> Result<()> {
    if !(c1 > 0.0 && c1 < 1.0) {
        return Err(Error::InvalidInput(format!(
            "population ratio c1 must lie strictly between 0 and 1, got {c1}"
        )));
    }
    Ok(())
}

impl ModelSpec {
    /// Hartree model. `interactions` are `[V¹, V², V¹²]` sampled on the grid
    /// with the origin at [`Grid::origin_index`].
    pub fn mean_field(
        traps: [SpectralField; 2],
        interactions: [SpectralField; 3],
        c1: f64,
    ) -> Result<Self> {
        check_ratio(c1)?;
        let grid = traps[0].grid().clone();
        check_real("trap 1", &traps[0], &grid)?;
        check_real("trap 2", &traps[1], &grid)?;
        for (name, v) in ["V1", "V2", "V12"].iter().zip(&interactions) {
            check_real(name, v, &grid)?;
        }
        let [v1, v2, v12] = interactions;
        Ok(Self {
            grid,
            traps,
            interactions: [Interaction::new(v1), Interaction::new(v2), Interaction::new(v12)],
            c: [c1, 1.0 - c1],
            regime: Regime::MeanField,
            scattering: None,
            check_assumptions: false,
        })
    }

    /// Gross–Pitaevskii model with the given scattering lengths.
    pub fn gross_pitaevskii(
        traps: [SpectralField; 2],
        lengths: ScatteringLengths,
        c1: f64,
    ) -> Result<Self> {
        check_ratio(c1)?;
        let grid = traps[0].grid().clone();
        check_real("trap 1", &traps[0], &grid)?;
        check_real("trap 2", &traps[1], &grid)?;
        if ![lengths.a1, lengths.a2, lengths.a12]
            .iter()
            .all(|a| a.is_finite() && *a >= 0.0)
        {
            return Err(Error::InvalidInput(
                "scattering lengths must be finite and nonnegative".into(),
            ));
        }
        let zero = Interaction::new(SpectralField::zeros(&grid));
        Ok(Self {
            grid,
            traps,
            interactions: [zero.clone(), zero.clone(), zero],
            c: [c1, 1.0 - c1],
            regime: Regime::GrossPitaevskii,
            scattering: Some(lengths),
            check_assumptions: false,
        })
    }

    /// Enables the trap-confinement and Fourier-positivity checks in
    /// [`minimize`].
    pub fn with_assumption_checks(mut self, on: bool) -> Self {
        self.check_assumptions = on;
        self
    }

    pub fn checks_assumptions(&self) -> bool {
        self.check_assumptions
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn c1(&self) -> f64 {
        self.c[0]
    }

    pub fn c2(&self) -> f64 {
        self.c[1]
    }

    pub fn ratios(&self) -> [f64; 2] {
        self.c
    }

    pub fn trap(&self, species: usize) -> &SpectralField {
        &self.traps[species]
    }

    /// `0 → V¹`, `1 → V²`, `2 → V¹²`.
    pub fn interaction(&self, which: usize) -> &SpectralField {
        &self.interactions[which].field
    }

    pub(crate) fn interaction_hat(&self, which: usize) -> &[Complex64] {
        &self.interactions[which].hat
    }

    pub fn scattering_lengths(&self) -> Option<ScatteringLengths> {
        self.scattering
    }

    pub fn interactions_vanish(&self) -> bool {
        match self.regime {
            Regime::MeanField => self.interactions.iter().all(|i| i.is_zero),
            Regime::GrossPitaevskii => self
                .scattering
                .is_some_and(|s| s.a1 == 0.0 && s.a2 == 0.0 && s.a12 == 0.0),
        }
    }

    /// Multiplies traps and interactions (or scattering lengths) by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let s = Complex64::new(factor, 0.0);
        let traps = [self.traps[0].scaled(s), self.traps[1].scaled(s)];
        let mut out = match self.regime {
            Regime::MeanField => Self::mean_field(
                traps,
                [
                    self.interactions[0].field.scaled(s),
                    self.interactions[1].field.scaled(s),
                    self.interactions[2].field.scaled(s),
                ],
                self.c[0],
            )?,
            Regime::GrossPitaevskii => {
                let l = self.scattering.expect("GP model carries scattering lengths");
                Self::gross_pitaevskii(
                    traps,
                    ScatteringLengths {
                        a1: l.a1 * factor,
                        a2: l.a2 * factor,
                        a12: l.a12 * factor,
                        provenance: l.provenance,
                    },
                    self.c[0],
                )?
            }
        };
        out.check_assumptions = self.check_assumptions;
        Ok(out)
    }

    /// `W * f` for an arbitrary field, transforming it as needed.
    pub(crate) fn interact(&self, which: usize, f: &SpectralField) -> SpectralField {
        let hat = if self.regime == Regime::MeanField && !self.interactions[which].is_zero {
            f.fourier()
        } else {
            Vec::new()
        };
        self.apply_w(which, &hat, f)
    }

    /// Applies the interaction operator `W` of the active regime to a density.
    pub(crate) fn apply_w(&self, which: usize, density_hat: &[Complex64], density: &SpectralField) -> SpectralField {
        match self.regime {
            Regime::MeanField if self.interactions[which].is_zero => SpectralField::zeros(&self.grid),
            Regime::MeanField => convolve_fourier(&self.grid, &self.interactions[which].hat, density_hat),
            Regime::GrossPitaevskii => {
                let l = self.scattering.expect("GP model carries scattering lengths");
                let a = [l.a1, l.a2, l.a12][which];
                density.scaled(Complex64::new(8.0 * PI * a, 0.0))
            }
        }
    }

    /// Checks confinement of both traps and, in the mean-field regime, Fourier
    /// positivity of `V¹` and `V²`.
    pub fn validate_assumptions(&self, trap_margin: f64) -> Result<()> {
        for (alpha, trap) in self.traps.iter().enumerate() {
            let (shell, centre) = trap_shell_and_centre(trap);
            if !(shell > centre + trap_margin) {
                return Err(Error::Hypothesis(format!(
                    "trap {} is not confining: minimum on the outer shell {shell:.4} does not \
                     exceed the central minimum {centre:.4} by {trap_margin}",
                    alpha + 1
                )));
            }
        }
        if self.regime == Regime::MeanField {
            let report = miscibility_mf(self);
            if let Some(v) = report
                .violations
                .iter()
                .find(|v| v.kind != ViolationKind::Miscibility)
            {
                return Err(Error::Hypothesis(format!(
                    "interaction Fourier transform negative at k = {:?} ({:?}, value {:.3e})",
                    v.wave_vector, v.kind, v.value
                )));
            }
        }
        Ok(())
    }
}

fn trap_shell_and_centre(trap: &SpectralField) -> (f64, f64) {
    let grid = trap.grid();
    let half = grid.box_length() / 2.0;
    let mut shell = f64::INFINITY;
    let mut centre = f64::INFINITY;
    for (i, z) in trap.values().iter().enumerate() {
        let x = grid.position(i);
        let extent = x[..grid.dim()].iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if extent >= 0.9 * half {
            shell = shell.min(z.re);
        } else if extent <= 0.2 * half {
            centre = centre.min(z.re);
        }
    }
    (shell, centre)
}

/// Configuration-level description of a trap.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrapSpec {
    Zero {},
    /// `U(x) = coefficient * |x - centre|²`, centre defaults to the origin.
    Harmonic {
        coefficient: f64,
        #[serde(default)]
        centre: [f64; 3],
    },
}

impl TrapSpec {
    pub fn sample(&self, grid: &Grid) -> SpectralField {
        match *self {
            TrapSpec::Zero {} => SpectralField::zeros(grid),
            TrapSpec::Harmonic {
                coefficient,
                centre,
            } => SpectralField::from_real_fn(grid, |x| {
                coefficient
                    * x.iter()
                        .zip(&centre)
                        .take(grid.dim())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
            }),
        }
    }
}

/// Configuration-level description of a radial interaction potential.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionSpec {
    Zero {},
    /// `strength * exp(-|x|²/(2 width²))`, periodised over the box.
    Gaussian { strength: f64, width: f64 },
    Radial { potential: RadialPotential },
}

impl InteractionSpec {
    pub fn sample(&self, grid: &Grid) -> SpectralField {
        match self {
            InteractionSpec::Zero {} => SpectralField::zeros(grid),
            &InteractionSpec::Gaussian { strength, width } => {
                // Summed over periodic images so the lattice transform stays positive.
                let l = grid.box_length();
                let images = (6.0 * width / l).ceil() as i32 + 1;
                let periodic = |c: f64| -> f64 {
                    (-images..=images)
                        .map(|m| {
                            let y = c + m as f64 * l;
                            (-y * y / (2.0 * width * width)).exp()
                        })
                        .sum()
                };
                SpectralField::from_real_fn(grid, |x| {
                    strength * x[..grid.dim()].iter().map(|&c| periodic(c)).product::<f64>()
                })
            }
            InteractionSpec::Radial { potential } => SpectralField::from_real_fn(grid, |x| {
                potential.value_at(x.iter().map(|c| c * c).sum::<f64>().sqrt())
            }),
        }
    }

    fn radial(&self) -> Option<&RadialPotential> {
        match self {
            InteractionSpec::Radial { potential } => Some(potential),
            _ => None,
        }
    }
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuppliedLengths {
    pub a1: f64,
    pub a2: f64,
    pub a12: f64,
}

/// Serializable model description; [`ModelDescription::build`] samples it on
/// its grid.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescription {
    pub grid: GridSpec,
    pub regime: Regime,
    pub c1: f64,
    pub traps: [TrapSpec; 2],
    /// `[V¹, V², V¹²]`
    pub interactions: [InteractionSpec; 3],
    /// Gross–Pitaevskii only; when absent the lengths are computed from radial
    /// interactions.
    #[serde(default)]
    pub scattering_lengths: Option<SuppliedLengths>,
    #[serde(default)]
    pub check_assumptions: bool,
}

impl ModelDescription {
    pub fn build(&self) -> Result<ModelSpec> {
        // Deserialisation bypasses the sample checks of RadialPotential::new.
        for spec in &self.interactions {
            if let Some(p) = spec.radial() {
                RadialPotential::new(p.samples().to_vec(), p.support_radius())?;
            }
        }
        let grid = Grid::from_spec(self.grid)?;
        let traps = [self.traps[0].sample(&grid), self.traps[1].sample(&grid)];
        let spec = match self.regime {
            Regime::MeanField => ModelSpec::mean_field(
                traps,
                [
                    self.interactions[0].sample(&grid),
                    self.interactions[1].sample(&grid),
                    self.interactions[2].sample(&grid),
                ],
                self.c1,
            )?,
            Regime::GrossPitaevskii => {
                let lengths = match self.scattering_lengths {
                    Some(s) => ScatteringLengths {
                        a1: s.a1,
                        a2: s.a2,
                        a12: s.a12,
                        provenance: Provenance::Supplied,
                    },
                    None => {
                        let mut a = [0.0; 3];
                        for (slot, spec) in a.iter_mut().zip(&self.interactions) {
                            *slot = match spec {
                                InteractionSpec::Zero {} => 0.0,
                                _ => {
                                    let pot = spec.radial().ok_or_else(|| {
                                        Error::InvalidInput(
                                            "Gross-Pitaevskii models need radial interactions or \
                                             supplied scattering lengths"
                                                .into(),
                                        )
                                    })?;
                                    scattering_length(pot)?.a
                                }
                            };
                        }
                        ScatteringLengths {
                            a1: a[0],
                            a2: a[1],
                            a12: a[2],
                            provenance: Provenance::Computed,
                        }
                    }
                };
                ModelSpec::gross_pitaevskii(traps, lengths, self.c1)?
            }
        };
        Ok(spec.with_assumption_checks(self.check_assumptions))
    }
}

/// A pair of orbitals `(u, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitalPair {
    pub u: SpectralField,
    pub v: SpectralField,
}

impl OrbitalPair {
    pub fn new(u: SpectralField, v: SpectralField) -> Result<Self> {
        if !u.same_grid(&v) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { u, v })
    }

    /// Normalises both components.
    pub fn normalized(u: SpectralField, v: SpectralField) -> Result<Self> {
        Self::new(normalize(&u)?, normalize(&v)?)
    }

    pub fn check_normalized(&self) -> Result<()> {
        for f in [&self.u, &self.v] {
            let norm = l2_norm(f);
            if (norm - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::NotNormalized { norm });
            }
        }
        Ok(())
    }

    /// Multiplies each component by a unit phase so that `∫u > 0` and `∫v > 0`.
    pub fn phase_fixed(&self) -> Self {
        let fix = |f: &SpectralField| {
            let s = f.integral();
            if s.norm() == 0.0 {
                f.clone()
            } else {
                f.scaled(s.conj() / s.norm())
            }
        };
        Self {
            u: fix(&self.u),
            v: fix(&self.v),
        }
    }

    pub fn component(&self, species: usize) -> &SpectralField {
        if species == 0 {
            &self.u
        } else {
            &self.v
        }
    }
}

/// Real effective potentials `U¹ + c₁W¹ρ_u + c₂W¹²ρ_v` and
/// `U² + c₂W²ρ_v + c₁W¹²ρ_u` of the mean-field operators.
#[derive(Clone, Debug)]
pub struct EffectivePotentials {
    pub w: [SpectralField; 2],
    /// `[c₁W¹ρ_u, c₂W¹²ρ_v, c₂W²ρ_v, c₁W¹²ρ_u]` kept for the energy; `None`
    /// where the interaction vanishes.
    parts: [Option<SpectralField>; 4],
}

impl EffectivePotentials {
    /// Mean-field operator `H_α f = -Δf + w_α f`.
    pub fn apply(&self, species: usize, f: &SpectralField) -> SpectralField {
        laplacian_apply(f).axpy(Complex64::new(1.0, 0.0), &self.w[species].pointwise(f))
    }

    /// `⟨ρ, part⟩`, zero for a vanishing interaction.
    fn pair_energy(&self, rho: &SpectralField, part: usize) -> f64 {
        self.parts[part].as_ref().map_or(0.0, |p| inner_product(rho, p).re)
    }
}

fn real_part(f: SpectralField) -> SpectralField {
    f.map(|z| Complex64::new(z.re, 0.0))
}

pub fn effective_potentials(u: &SpectralField, v: &SpectralField, spec: &ModelSpec) -> EffectivePotentials {
    let [c1, c2] = spec.c;
    let ru = u.density();
    let rv = v.density();
    let (ru_hat, rv_hat) = if spec.regime == Regime::MeanField && !spec.interactions_vanish() {
        (ru.fourier(), rv.fourier())
    } else {
        (Vec::new(), Vec::new())
    };
    let one = |x: f64| Complex64::new(x, 0.0);
    let part = |which: usize, hat: &[Complex64], rho: &SpectralField, c: f64| {
        if spec.regime == Regime::MeanField && spec.interactions[which].is_zero {
            None
        } else {
            Some(real_part(spec.apply_w(which, hat, rho)).scaled(one(c)))
        }
    };
    let parts = [
        part(0, &ru_hat, &ru, c1),
        part(2, &rv_hat, &rv, c2),
        part(1, &rv_hat, &rv, c2),
        part(2, &ru_hat, &ru, c1),
    ];
    let add = |trap: &SpectralField, a: &Option<SpectralField>, b: &Option<SpectralField>| {
        [a, b].into_iter().flatten().fold(trap.clone(), |w, p| w.axpy(one(1.0), p))
    };
    EffectivePotentials {
        w: [add(&spec.traps[0], &parts[0], &parts[1]), add(&spec.traps[1], &parts[2], &parts[3])],
        parts,
    }
}

/// Value of the functional of the active regime for arbitrary (not
/// necessarily normalised) fields.
pub fn functional(u: &SpectralField, v: &SpectralField, spec: &ModelSpec) -> f64 {
    let [c1, c2] = spec.c;
    let pots = effective_potentials(u, v, spec);
    let ru = u.density();
    let rv = v.density();
    let quad = |f: &SpectralField, g: &SpectralField| inner_product(f, g).re;
    let kin_u = quad(u, &laplacian_apply(u));
    let kin_v = quad(v, &laplacian_apply(v));
    let trap_u = quad(&ru, &spec.traps[0]);
    let trap_v = quad(&rv, &spec.traps[1]);
    // parts[0] = c₁W¹ρ_u, parts[1] = c₂W¹²ρ_v, parts[2] = c₂W²ρ_v.
    let int_11 = 0.5 * c1 * pots.pair_energy(&ru, 0);
    let int_22 = 0.5 * c2 * pots.pair_energy(&rv, 2);
    let int_12 = c1 * pots.pair_energy(&ru, 1);
    c1 * (kin_u + trap_u) + c2 * (kin_v + trap_v) + int_11 + int_22 + int_12
}

fn require(spec: &ModelSpec, regime: Regime) -> Result<()> {
    if spec.regime != regime {
        return Err(Error::WrongRegime(format!(
            "operation needs a {regime:?} model, got {:?}",
            spec.regime
        )));
    }
    Ok(())
}

/// Gross–Pitaevskii energy of a normalised pair.
pub fn gp_energy(orbitals: &OrbitalPair, spec: &ModelSpec) -> Result<f64> {
    require(spec, Regime::GrossPitaevskii)?;
    orbitals.check_normalized()?;
    Ok(functional(&orbitals.u, &orbitals.v, spec))
}

/// Hartree energy of a normalised pair.
pub fn hartree_energy(orbitals: &OrbitalPair, spec: &ModelSpec) -> Result<f64> {
    require(spec, Regime::MeanField)?;
    orbitals.check_normalized()?;
    Ok(functional(&orbitals.u, &orbitals.v, spec))
}

/// Energy of the active regime.
pub fn energy(orbitals: &OrbitalPair, spec: &ModelSpec) -> Result<f64> {
    orbitals.check_normalized()?;
    Ok(functional(&orbitals.u, &orbitals.v, spec))
}

/// Derivative of [`functional`] with respect to the real inner product
/// `Re⟨·,·⟩`: `(2c₁H_u u, 2c₂H_v v)`.
pub fn functional_gradient(
    u: &SpectralField,
    v: &SpectralField,
    spec: &ModelSpec,
) -> (SpectralField, SpectralField) {
    let pots = effective_potentials(u, v, spec);
    let [c1, c2] = spec.c;
    (
        pots.apply(0, u).scaled(Complex64::new(2.0 * c1, 0.0)),
        pots.apply(1, v).scaled(Complex64::new(2.0 * c2, 0.0)),
    )
}

/// `(μ¹, μ²) = (⟨u, H_u u⟩, ⟨v, H_v v⟩)`.
pub fn chemical_potentials(orbitals: &OrbitalPair, spec: &ModelSpec) -> (f64, f64) {
    let pots = effective_potentials(&orbitals.u, &orbitals.v, spec);
    (
        inner_product(&orbitals.u, &pots.apply(0, &orbitals.u)).re,
        inner_product(&orbitals.v, &pots.apply(1, &orbitals.v)).re,
    )
}

/// `‖h¹u‖ + ‖h²v‖` with `h^α = H_α - μ^α`.
pub fn meanfield_residual(orbitals: &OrbitalPair, spec: &ModelSpec) -> f64 {
    let pots = effective_potentials(&orbitals.u, &orbitals.v, spec);
    residual_from(&pots, orbitals).0
}

fn residual_from(pots: &EffectivePotentials, orbitals: &OrbitalPair) -> (f64, [f64; 2], [SpectralField; 2]) {
    let hu = pots.apply(0, &orbitals.u);
    let hv = pots.apply(1, &orbitals.v);
    let mu1 = inner_product(&orbitals.u, &hu).re;
    let mu2 = inner_product(&orbitals.v, &hv).re;
    let r1 = l2_norm(&hu.axpy(Complex64::new(-mu1, 0.0), &orbitals.u));
    let r2 = l2_norm(&hv.axpy(Complex64::new(-mu2, 0.0), &orbitals.v));
    (r1 + r2, [mu1, mu2], [hu, hv])
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizeOptions {
    /// Target for `‖h¹u‖ + ‖h²v‖`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Required margin of the trap confinement check.
    pub trap_margin: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 100_000,
            trap_margin: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizationReport {
    pub orbitals: OrbitalPair,
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub chemical_potentials: (f64, f64),
    /// Energy after every accepted step, starting with the initial guess.
    pub energy_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
    pub scattering_lengths: Option<ScatteringLengths>,
}

/// Largest energy increase accepted as floating-point noise in a step.
pub fn energy_rounding_floor(energy: f64) -> f64 {
    1e-14 * energy.abs().max(1.0)
}

/// Smooth random starting pair: a Gaussian envelope of random width and
/// centre modulated by a few random complex low-frequency modes.
pub fn random_initial_pair(grid: &Grid, seed: u64) -> Result<OrbitalPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let make = |rng: &mut ChaCha8Rng| -> Result<SpectralField> {
        let l = grid.box_length();
        let width = l / 10.0 * rng.random_range(0.7..1.3);
        let mut shift = [0.0; 3];
        for s in shift.iter_mut().take(grid.dim()) {
            *s = rng.random_range(-0.05..0.05) * l;
        }
        let mut modes = Vec::new();
        for _ in 0..4 {
            let mut k = [0.0; 3];
            for c in k.iter_mut().take(grid.dim()) {
                *c = rng.random_range(-2i32..=2) as f64 * 2.0 * PI / l;
            }
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            modes.push((k, Complex64::new(re, im) * 0.3));
        }
        let phase = Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));
        let f = SpectralField::from_fn(grid, |x| {
            let r2: f64 = x.iter().zip(&shift).map(|(a, b)| (a - b) * (a - b)).sum();
            let mut m = Complex64::new(1.0, 0.0);
            for (k, c) in &modes {
                let kx: f64 = k.iter().zip(x).map(|(a, b)| a * b).sum();
                m += c * kx.cos();
            }
            phase * m * (-r2 / (2.0 * width * width)).exp()
        });
        normalize(&f)
    };
    let u = make(&mut rng)?;
    let v = make(&mut rng)?;
    OrbitalPair::new(u, v)
}

/// Minimises the energy of the active regime on the product of unit spheres.
///
/// The iteration is a preconditioned nonlinear conjugate gradient method
/// (Polak–Ribière+) with preconditioner `(σ - Δ)⁻¹`, tangent projection and
/// retraction by renormalisation. The line search brackets a zero of the
/// directional derivative and only accepts steps that do not increase the
/// energy beyond [`energy_rounding_floor`].
pub fn minimize(spec: &ModelSpec, seed: u64, options: &MinimizeOptions) -> Result<MinimizationReport> {
    if spec.check_assumptions {
        spec.validate_assumptions(options.trap_margin)?;
    }
    let start = random_initial_pair(&spec.grid, seed)?;
    minimize_from(spec, start, options)
}

struct State {
    pair: OrbitalPair,
    energy: f64,
    /// Riemannian gradients (tangent projections of `2c H ψ`).
    grad: [SpectralField; 2],
    residual: f64,
    mu: [f64; 2],
}

fn evaluate(spec: &ModelSpec, pair: OrbitalPair) -> State {
    let pots = effective_potentials(&pair.u, &pair.v, spec);
    let (residual, mu, hpsi) = residual_from(&pots, &pair);
    let [c1, c2] = spec.c;
    let mut grad = Vec::with_capacity(2);
    for (alpha, (h, c)) in hpsi.iter().zip([c1, c2]).enumerate() {
        let psi = pair.component(alpha);
        grad.push(
            h.axpy(Complex64::new(-mu[alpha], 0.0), psi)
                .scaled(Complex64::new(2.0 * c, 0.0)),
        );
    }
    let energy = energy_from(spec, &pair, &pots, &hpsi);
    let [g0, g1]: [SpectralField; 2] = grad.try_into().unwrap();
    State {
        pair,
        energy,
        grad: [g0, g1],
        residual,
        mu,
    }
}

/// Energy assembled from the mean-field pieces already computed.
fn energy_from(
    spec: &ModelSpec,
    pair: &OrbitalPair,
    pots: &EffectivePotentials,
    hpsi: &[SpectralField; 2],
) -> f64 {
    let [c1, c2] = spec.c;
    // ⟨u, H_u u⟩ contains the self term fully and the cross term once, and so
    // does ⟨v, H_v v⟩; the functional has half of each self term and the cross
    // term once overall.
    let hu = inner_product(&pair.u, &hpsi[0]).re;
    let hv = inner_product(&pair.v, &hpsi[1]).re;
    if pots.parts.iter().all(Option::is_none) {
        return c1 * hu + c2 * hv;
    }
    let ru = pair.u.density();
    let rv = pair.v.density();
    let self_u = pots.pair_energy(&ru, 0);
    let self_v = pots.pair_energy(&rv, 2);
    let cross = pots.pair_energy(&ru, 1);
    c1 * hu + c2 * hv - 0.5 * c1 * self_u - 0.5 * c2 * self_v - c1 * cross
}

fn precondition(f: &SpectralField, sigma: f64) -> SpectralField {
    let grid = f.grid();
    let mut c = f.fourier();
    for (z, &k2) in c.iter_mut().zip(grid.k_squared()) {
        *z /= sigma + k2;
    }
    SpectralField::from_fourier(grid, c).expect("coefficient count matches grid")
}

/// Projects `d` onto the tangent space `{Re⟨ψ, d⟩ = 0}` of the unit sphere.
fn tangent(psi: &SpectralField, d: &SpectralField) -> SpectralField {
    let s = inner_product(psi, d).re;
    d.axpy(Complex64::new(-s, 0.0), psi)
}

fn real_dot(a: &[SpectralField; 2], b: &[SpectralField; 2]) -> f64 {
    inner_product(&a[0], &b[0]).re + inner_product(&a[1], &b[1]).re
}

fn retract(pair: &OrbitalPair, d: &[SpectralField; 2], t: f64) -> Result<OrbitalPair> {
    let step = Complex64::new(t, 0.0);
    OrbitalPair::normalized(pair.u.axpy(step, &d[0]), pair.v.axpy(step, &d[1]))
}

/// Directional derivative `d/dt E(R(ψ + t d))` at the retracted point.
fn slope_at(state: &State, base: &OrbitalPair, d: &[SpectralField; 2], t: f64) -> f64 {
    let mut s = 0.0;
    for alpha in 0..2 {
        let moved = base
            .component(alpha)
            .axpy(Complex64::new(t, 0.0), &d[alpha]);
        let norm = l2_norm(&moved);
        let psi = state.pair.component(alpha);
        let velocity = tangent(psi, &d[alpha]).scaled(Complex64::new(1.0 / norm, 0.0));
        s += inner_product(&state.grad[alpha], &velocity).re;
    }
    s
}

pub fn minimize_from(
    spec: &ModelSpec,
    start: OrbitalPair,
    options: &MinimizeOptions,
) -> Result<MinimizationReport> {
    start.check_normalized()?;
    let mut state = evaluate(spec, start);
    let mut energy_trace = vec![state.energy];
    let mut residual_trace = vec![state.residual];
    let sigma_of = |s: &State| [1.0 + s.mu[0].abs(), 1.0 + s.mu[1].abs()];
    let sigma = sigma_of(&state);
    let mut pgrad = [
        tangent(&state.pair.u, &precondition(&state.grad[0], sigma[0])),
        tangent(&state.pair.v, &precondition(&state.grad[1], sigma[1])),
    ];
    let mut dir = [pgrad[0].scaled(Complex64::new(-1.0, 0.0)), pgrad[1].scaled(Complex64::new(-1.0, 0.0))];
    let mut t_guess = 0.5 / spec.c[0].min(spec.c[1]);
    let mut iterations = 0;
    let mut restarted = true;

    let finish = |state: &State, iterations, energy_trace, residual_trace| {
        let orbitals = state.pair.phase_fixed();
        MinimizationReport {
            orbitals,
            energy: state.energy,
            residual: state.residual,
            iterations,
            chemical_potentials: (state.mu[0], state.mu[1]),
            energy_trace,
            residual_trace,
            scattering_lengths: spec.scattering,
        }
    };

    while state.residual >= options.tol {
        if iterations >= options.max_iterations {
            return Err(Error::IterationCap(Box::new(finish(
                &state,
                iterations,
                energy_trace,
                residual_trace,
            ))));
        }
        iterations += 1;
        let mut slope0 = real_dot(&state.grad, &dir);
        if !(slope0 < 0.0) {
            dir = [pgrad[0].scaled(Complex64::new(-1.0, 0.0)), pgrad[1].scaled(Complex64::new(-1.0, 0.0))];
            slope0 = real_dot(&state.grad, &dir);
            restarted = true;
            if !(slope0 < 0.0) {
                break;
            }
        }
        match line_search(spec, &state, &dir, slope0, t_guess)? {
            Some((next, t)) => {
                t_guess = t;
                let new_sigma = sigma_of(&next);
                let new_pgrad = [
                    tangent(&next.pair.u, &precondition(&next.grad[0], new_sigma[0])),
                    tangent(&next.pair.v, &precondition(&next.grad[1], new_sigma[1])),
                ];
                // Polak–Ribière+ with the preconditioned metric; the old gradient
                // is transported by projection onto the new tangent space.
                let old_pg = [
                    tangent(&next.pair.u, &pgrad[0]),
                    tangent(&next.pair.v, &pgrad[1]),
                ];
                let num = real_dot(&next.grad, &new_pgrad) - real_dot(&next.grad, &old_pg);
                let den = real_dot(&state.grad, &pgrad);
                let beta = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
                let moved_dir = [
                    tangent(&next.pair.u, &dir[0]),
                    tangent(&next.pair.v, &dir[1]),
                ];
                dir = [
                    moved_dir[0].scaled(Complex64::new(beta, 0.0)).axpy(Complex64::new(-1.0, 0.0), &new_pgrad[0]),
                    moved_dir[1].scaled(Complex64::new(beta, 0.0)).axpy(Complex64::new(-1.0, 0.0), &new_pgrad[1]),
                ];
                pgrad = new_pgrad;
                state = next;
                energy_trace.push(state.energy);
                residual_trace.push(state.residual);
                restarted = false;
            }
            None => {
                if restarted {
                    // Even steepest descent cannot make progress: the iterate sits
                    // at the floating-point floor of the energy.
                    break;
                }
                dir = [pgrad[0].scaled(Complex64::new(-1.0, 0.0)), pgrad[1].scaled(Complex64::new(-1.0, 0.0))];
                restarted = true;
            }
        }
    }
    let report = finish(&state, iterations, energy_trace, residual_trace);
    if report.residual >= options.tol {
        return Err(Error::IterationCap(Box::new(report)));
    }
    Ok(report)
}

/// Searches along the retraction curve for a zero of the directional
/// derivative by safeguarded secant steps. Returns `None` when no acceptable
/// step exists.
fn line_search(
    spec: &ModelSpec,
    state: &State,
    dir: &[SpectralField; 2],
    slope0: f64,
    t_guess: f64,
) -> Result<Option<(State, f64)>> {
    let floor = energy_rounding_floor(state.energy);
    // Once the predicted decrease is within a few hundred rounding floors the
    // energy cannot rank trial points, so the derivative does.
    let noisy = slope0.abs() * t_guess < 100.0 * floor;
    // Armijo decrease, relaxed by the rounding floor once energy differences
    // reach machine precision.
    let acceptable = |s: &State, t: f64| {
        let margin = if noisy { 10.0 * floor } else { floor };
        s.energy.is_finite()
            && s.residual.is_finite()
            && (s.energy <= state.energy + 1e-4 * t * slope0 || s.energy <= state.energy + margin)
    };
    let mut best: Option<(State, f64, f64)> = None;
    let consider = |cand: State, t: f64, slope: f64, best: &mut Option<(State, f64, f64)>| {
        let better = match best {
            None => true,
            Some((b, _, bs)) if noisy => slope.abs() < bs.abs() || (slope == *bs && cand.energy < b.energy),
            Some((b, _, _)) => cand.energy < b.energy,
        };
        if better {
            *best = Some((cand, t, slope));
        }
    };
    // Bracket [lo, hi] of the derivative sign change.
    let (mut lo, mut slope_lo) = (0.0f64, slope0);
    let mut hi: Option<(f64, f64)> = None;
    let mut t = t_guess.max(1e-12);
    for _ in 0..12 {
        let cand = evaluate(spec, retract(&state.pair, dir, t)?);
        let s = slope_at(&cand, &state.pair, dir, t);
        let ok = acceptable(&cand, t);
        let curvature_ok = s.abs() <= 0.1 * slope0.abs();
        if ok {
            consider(cand, t, s, &mut best);
            if curvature_ok {
                break;
            }
        }
        let (prev_lo, prev_slope) = (lo, slope_lo);
        if !ok || s > 0.0 {
            hi = Some((t, s));
        } else {
            lo = t;
            slope_lo = s;
        }
        t = match hi {
            // secant extrapolation of the derivative, capped at a fourfold step
            None if slope_lo > prev_slope => {
                let ts = lo - slope_lo * (lo - prev_lo) / (slope_lo - prev_slope);
                ts.clamp(1.2 * lo, 4.0 * lo)
            }
            None => 4.0 * t,
            Some((th, sh)) if sh.is_finite() && sh > 0.0 && ok => {
                // secant on the derivative, kept inside the bracket
                let ts = lo - slope_lo * (th - lo) / (sh - slope_lo);
                ts.clamp(lo + 0.1 * (th - lo), th - 0.1 * (th - lo))
            }
            Some((th, _)) => 0.5 * (lo + th),
        };
        if let Some((th, _)) = hi {
            if th - lo <= 1e-14 * th {
                break;
            }
        }
    }
    if best.is_none() {
        // plain backtracking from the smallest trial
        let mut t = t.min(t_guess);
        while t > 1e-20 {
            t *= 0.25;
            let cand = evaluate(spec, retract(&state.pair, dir, t)?);
            if acceptable(&cand, t) {
                best = Some((cand, t, 0.0));
                break;
            }
        }
    }
    Ok(best.map(|(state, t, _)| (state, t)))
}

/// Which inequality failed at a lattice frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `V̂¹(k) < 0`
    NegativeV1,
    /// `V̂²(k) < 0`
    NegativeV2,
    /// `V̂¹V̂² < (V̂¹²)²`
    Miscibility,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub wave_vector: [f64; 3],
    pub kind: ViolationKind,
    /// The offending value (`V̂` or `V̂¹V̂² - (V̂¹²)²`).
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiscibilityReport {
    pub holds: bool,
    pub violations: Vec<Violation>,
}

/// `a₁a₂ ≥ a₁₂²`.
pub fn miscibility_gp(a1: f64, a2: f64, a12: f64) -> bool {
    a1 * a2 >= a12 * a12
}

/// Relative slack granted to the lattice inequalities; equality is admitted.
const FOURIER_SLACK: f64 = 1e-10;

/// `V̂¹, V̂² ≥ 0` and `V̂¹V̂² ≥ (V̂¹²)²` at every lattice frequency, with
/// `V̂(k) = Σ_x V(x) e^{-ikx} spacing^dim`.
pub fn miscibility_mf(spec: &ModelSpec) -> MiscibilityReport {
    let grid = spec.grid();
    let transform = |which: usize| -> Vec<f64> {
        let hat = spec.interaction_hat(which);
        let w = grid.cell_volume();
        hat.iter()
            .enumerate()
            .map(|(flat, z)| {
                let idx = grid.indices(flat);
                let parity: usize = idx[..grid.dim()].iter().sum();
                let sign = if parity % 2 == 0 { 1.0 } else { -1.0 };
                z.re * sign * w
            })
            .collect()
    };
    let v1 = transform(0);
    let v2 = transform(1);
    let v12 = transform(2);
    let scale = v1
        .iter()
        .chain(&v2)
        .chain(&v12)
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let mut violations = Vec::new();
    for k in 0..v1.len() {
        let wave_vector = grid.wave_vector(k);
        for (val, kind) in [(v1[k], ViolationKind::NegativeV1), (v2[k], ViolationKind::NegativeV2)] {
            if val < -FOURIER_SLACK * scale {
                violations.push(Violation {
                    index: k,
                    wave_vector,
                    kind,
                    value: val,
                });
            }
        }
        let gap = v1[k] * v2[k] - v12[k] * v12[k];
        if gap < -FOURIER_SLACK * scale * scale {
            violations.push(Violation {
                index: k,
                wave_vector,
                kind: ViolationKind::Miscibility,
                value: gap,
            });
        }
    }
    MiscibilityReport {
        holds: violations.is_empty(),
        violations,
    }
}

/// Contributions to the convexity gap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityGap {
    pub kinetic: f64,
    pub trap: f64,
    pub interaction: f64,
    pub total: f64,
}

fn check_density(name: &str, f: &SpectralField) -> Result<()> {
    if let Some(z) = f.values().iter().find(|z| z.re < 0.0 || z.im != 0.0 || !z.re.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "density {name} must be real and nonnegative, found {z}"
        )));
    }
    let mass = f.integral().re;
    if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidInput(format!(
            "density {name} must integrate to 1, got {mass}"
        )));
    }
    Ok(())
}

/// Splits `E[√f, √g]` into kinetic, trap and interaction parts.
fn density_energy_parts(f: &SpectralField, g: &SpectralField, spec: &ModelSpec) -> [f64; 3] {
    let [c1, c2] = spec.c;
    let sf = f.map(|z| Complex64::new(z.re.sqrt(), 0.0));
    let sg = g.map(|z| Complex64::new(z.re.sqrt(), 0.0));
    let kinetic = c1 * inner_product(&sf, &laplacian_apply(&sf)).re
        + c2 * inner_product(&sg, &laplacian_apply(&sg)).re;
    let trap = c1 * inner_product(f, &spec.traps[0]).re + c2 * inner_product(g, &spec.traps[1]).re;
    let total = functional(&sf, &sg, spec);
    [kinetic, trap, total - kinetic - trap]
}

/// `(𝓓[f,g] + 𝓓[r,s])/2 - 𝓓[(f+r)/2, (g+s)/2]` with `𝓓[f,g] = E[√f, √g]`.
pub fn convexity_gap(
    f: &SpectralField,
    g: &SpectralField,
    r: &SpectralField,
    s: &SpectralField,
    spec: &ModelSpec,
) -> Result<ConvexityGap> {
    for (name, d) in [("f", f), ("g", g), ("r", r), ("s", s)] {
        if d.grid() != spec.grid() {
            return Err(Error::GridMismatch);
        }
        check_density(name, d)?;
    }
    let half = Complex64::new(0.5, 0.0);
    let fm = f.axpy(Complex64::new(1.0, 0.0), r).scaled(half);
    let gm = g.axpy(Complex64::new(1.0, 0.0), s).scaled(half);
    let a = density_energy_parts(f, g, spec);
    let b = density_energy_parts(r, s, spec);
    let m = density_energy_parts(&fm, &gm, spec);
    let part = |i: usize| 0.5 * (a[i] + b[i]) - m[i];
    let (kinetic, trap, interaction) = (part(0), part(1), part(2));
    Ok(ConvexityGap {
        kinetic,
        trap,
        interaction,
        total: kinetic + trap + interaction,
    })
}
