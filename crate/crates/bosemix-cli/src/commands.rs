use std::sync::Arc;

use bosemix::bogoliubov::{
    assemble_bogoliubov, build_mode_basis, diagonalize_quadratic, hessian_bottom, interaction_tensor,
    BogoliubovSpectrum, QuadraticBlocks,
};
use bosemix::definetti::{definetti_error, husimi_sample, log_log_slope};
use bosemix::fock::{
    bogoliubov_convergence_study, build_hamiltonian_capped, condensation_fraction, ground_state,
    lowest_eigenpairs, lowest_eigenvalue, quadratic_hamiltonian, reduced_density, split_m, verify_relations, ExcitationCap, FockBasis, ManyBodyVector, ToyModel,
};
use bosemix::grid::SpectralField;
use bosemix::io;
use bosemix::linalg;
use bosemix::meanfield::{
    convexity_gap, minimize, miscibility_gp, miscibility_mf, random_initial_pair, MinimizationReport, ModelSpec,
    Regime, ViolationKind,
};
use bosemix::scattering::{born_approximation, neumann_ground, scattering_length};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, DefinettiState, Format, Resolved};
use crate::error::{CliError, Context};
use crate::output::{num, Output};

/// Runs the configured command, writes its files and returns the main
/// result document.
pub fn run(r: &Resolved, out: &mut Output) -> Result<Value, CliError> {
    let result = match r.config.command {
        Command::Scatter => scatter(r, out)?,
        Command::Minimize => minimize_cmd(r, out)?,
        Command::Bogoliubov => bogoliubov(r, out)?,
        Command::Exactdiag => exactdiag(r, out)?,
        Command::Convergence => convergence(r, out)?,
        Command::Definetti => definetti(r, out)?,
        Command::Check => check(r, out)?,
    };
    let name = format!("{}.json", r.config.command.name());
    if r.wants(Format::Json) {
        out.json(&name, &result)?;
    }
    Ok(out.document(&result))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix_table(m: &DMatrix<f64>) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            rows.push(vec![i.to_string(), j.to_string(), num(m[(i, j)])]);
        }
    }
    rows
}

fn scatter(r: &Resolved, out: &mut Output) -> Result<Value, CliError> {
    let v = r.potential.as_ref().expect("resolved");
    let n = &r.config.numerics;
    let res = scattering_length(v).context("scattering length")?;
    let born = born_approximation(v);
    let mut doc = json!({
        "a": res.a,
        "residual": res.residual,
        "step_error": res.step_error,
        "born": born,
    });
    if let Some(lambda) = n.born_lambda {
        let scaled = v.scaled(lambda).context("scaling the potential")?;
        let a = scattering_length(&scaled).context("scattering length of the scaled potential")?.a;
        doc["born_limit"] = json!({
            "lambda": lambda,
            "a": a,
            "ratio": if born > 0.0 { a / (lambda * born) } else { f64::NAN },
        });
    }
    if let Some(cfg) = &n.neumann {
        let mut rows = Vec::new();
        let mut table = Vec::new();
        for &big_n in &cfg.n {
            let g = neumann_ground(v, big_n, cfg.ell).context("Neumann ground state")?;
            let ratio = g.lambda * big_n * cfg.ell.powi(3) / (3.0 * g.a);
            table.push(vec![num(big_n), num(cfg.ell), num(g.lambda), num(ratio), num(g.decay_constant(big_n))]);
            rows.push(json!({
                "n": big_n,
                "ell": cfg.ell,
                "lambda_N": g.lambda,
                "ratio": ratio,
                "decay_constant": g.decay_constant(big_n),
            }));
        }
        if r.wants(Format::Csv) {
            out.csv("neumann.csv", &["n", "ell", "lambda_N", "ratio", "decay_constant"], &table)?;
        }
        doc["lambda_N"] = Value::Array(rows);
    }
    if r.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = res
            .profile
            .r
            .iter()
            .zip(&res.profile.f)
            .map(|(&x, &f)| vec![num(x), num(f)])
            .collect();
        out.csv("scattering_profile.csv", &["r", "f"], &rows)?;
    }
    Ok(doc)
}

fn run_starts(spec: &ModelSpec, r: &Resolved) -> Result<Vec<MinimizationReport>, CliError> {
    let n = &r.config.numerics;
    (0..n.starts as u64)
        .into_par_iter()
        .map(|s| minimize(spec, n.seed.wrapping_add(s), &n.minimize).context("minimisation"))
        .collect()
}

fn moduli(f: &SpectralField) -> Vec<f64> {
    f.values().iter().map(|z| z.norm()).collect()
}

fn minimize_cmd(r: &Resolved, out: &mut Output) -> Result<Value, CliError> {
    let (desc, spec) = r.continuum()?;
    let reports = run_starts(spec, r)?;
    let best = reports
        .iter()
        .min_by(|a, b| a.energy.total_cmp(&b.energy))
        .expect("at least one start");
    let (mu, mv) = (moduli(&best.orbitals.u), moduli(&best.orbitals.v));
    let spread = reports
        .iter()
        .map(|rep| {
            let du = moduli(&rep.orbitals.u).iter().zip(&mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let dv = moduli(&rep.orbitals.v).iter().zip(&mv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            du.max(dv)
        })
        .fold(0.0, f64::max);
    let seed = r.config.numerics.seed;
    let starts: Vec<Value> = reports
        .iter()
        .enumerate()
        .map(|(i, rep)| {
            json!({
                "seed": seed.wrapping_add(i as u64),
                "energy": rep.energy,
                "residual": rep.residual,
                "iterations": rep.iterations,
            })
        })
        .collect();
    if r.wants(Format::Csv) {
        let trace: Vec<Vec<String>> = best
            .energy_trace
            .iter()
            .zip(&best.residual_trace)
            .enumerate()
            .map(|(i, (e, res))| vec![i.to_string(), num(*e), num(*res)])
            .collect();
        out.csv("energy_trace.csv", &["iteration", "energy", "residual"], &trace)?;
        let grid = spec.grid();
        let dim = grid.dim();
        let names = ["x", "y", "z"];
        let mut header: Vec<&str> = names[..dim].to_vec();
        header.extend(["u_abs", "v_abs"]);
        let rows: Vec<Vec<String>> = (0..grid.len())
            .map(|i| {
                let x = grid.position(i);
                let mut row: Vec<String> = x[..dim].iter().map(|&c| num(c)).collect();
                row.push(num(mu[i]));
                row.push(num(mv[i]));
                row
            })
            .collect();
        out.csv("orbitals.csv", &header, &rows)?;
    }
    Ok(json!({
        "regime": desc.regime,
        "energy": best.energy,
        "residual": best.residual,
        "iterations": best.iterations,
        "chemical_potentials": [best.chemical_potentials.0, best.chemical_potentials.1],
        "scattering_lengths": best.scattering_lengths,
        "starts": starts,
        "modulus_spread": spread,
    }))
}

fn spectrum_json(s: &BogoliubovSpectrum, blocks: &QuadraticBlocks, r: &Resolved) -> Result<Value, CliError> {
    let n = &r.config.numerics;
    let basis = FockBasis::excitations_capped(blocks.modes, ExcitationCap::Total(n.quanta), n.dimension_cap)
        .context("Fock oracle basis")?;
    let fock = lowest_eigenvalue(&quadratic_hamiltonian(blocks, &basis).context("Fock oracle")?).context("Fock oracle")?;
    Ok(json!({
        "modes": blocks.modes,
        "xi": s.xi,
        "ground_energy": s.ground_energy,
        "hessian_bottom": hessian_bottom(&blocks.hessian()),
        "pairing_ratio": blocks.pairing_ratio(),
        "fock_oracle": {
            "quanta": n.quanta,
            "dimension": basis.len(),
            "ground_energy": fock,
            "difference": fock - s.ground_energy,
        },
    }))
}

fn write_spectrum(out: &mut Output, r: &Resolved, s: &BogoliubovSpectrum, blocks: &QuadraticBlocks) -> Result<(), CliError> {
    if r.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = s.xi.iter().enumerate().map(|(i, x)| vec![i.to_string(), num(*x)]).collect();
        out.csv("spectrum.csv", &["index", "xi"], &rows)?;
    }
    if r.wants(Format::Json) {
        out.json("blocks.json", blocks)?;
    }
    Ok(())
}

fn bogoliubov(r: &Resolved, out: &mut Output) -> Result<Value, CliError> {
    let n = &r.config.numerics;
    if let Some((_, spec)) = &r.continuum {
        let start = minimize(spec, n.seed, &n.minimize).context("minimisation")?;
        let solve = |m: [usize; 2]| -> Result<(QuadraticBlocks, BogoliubovSpectrum, _), CliError> {
            let basis = build_mode_basis(&start.orbitals, spec, m[0], m[1]).context("mode basis")?;
            let blocks = assemble_bogoliubov(&start.orbitals, spec, &basis).context("Bogoliubov blocks")?;
            let s = diagonalize_quadratic(&blocks).context("quadratic diagonalisation")?;
            Ok((blocks, s, basis))
        };
        let (blocks, s, basis) = solve(n.modes)?;
        let half = [n.modes[0] / 2, n.modes[1] / 2];
        let (_, s_half, _) = solve(half)?;
        let change = (s.ground_energy - s_half.ground_energy).abs();
        write_spectrum(out, r, &s, &blocks)?;
        if r.wants(Format::Binary) {
            let tensor = interaction_tensor(&basis, spec).context("interaction tensor")?;
            out.binary("interaction.bin", &tensor, |t, m, w| io::write_interaction(t, m, w))?;
        }
        let mut doc = spectrum_json(&s, &blocks, r)?;
        doc["hartree_energy"] = json!(start.energy);
        doc["mode_convergence"] = json!({
            "modes": n.modes,
            "half_modes": half,
            "ground_energy_half": s_half.ground_energy,
            "difference": change,
            "tolerance": n.mode_tolerance,
            "converged": change <= n.mode_tolerance,
        });
        if change > n.mode_tolerance {
            eprintln!(
                "warning: ground energy changed by {change:.3e} between {half:?} and {:?} modes (tolerance {:.1e})",
                n.modes, n.mode_tolerance
            );
        }
        return Ok(doc);
    }
    let toy = r.toy()?;
    let (frame, hartree) = toy.condensate_frame().context("toy Hartree minimiser")?;
    let blocks = frame.quadratic_blocks().context("Bogoliubov blocks")?;
    let s = diagonalize_quadratic(&blocks).context("quadratic diagonalisation")?;
    write_spectrum(out, r, &s, &blocks)?;
    let mut doc = spectrum_json(&s, &blocks, r)?;
    doc["hartree_energy"] = json!(hartree.energy);
    Ok(doc)
}

fn exactdiag(r: &Resolved, out: &mut Output) -> Result<Value, CliError> {
    let n = &r.config.numerics;
    let toy = r.toy()?;
    let h = build_hamiltonian_capped(toy, n.dimension_cap).context("Hamiltonian")?;
    let levels: Vec<f64> = lowest_eigenpairs(&h, n.levels.max(1))
        .context("eigensolver")?
        .iter()
        .map(|p| p.value)
        .collect();
    let (energy, psi) = ground_state(&h).context("ground state")?;
    let g10 = reduced_density(&psi, 1, 0).context("reduced density")?;
    let g01 = reduced_density(&psi, 0, 1).context("reduced density")?;
    let (c1, c2) = condensation_fraction(&psi).context("condensation")?;
    let hartree = toy.hartree_minimizer().context("toy Hartree minimiser")?;
    if r.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = levels.iter().enumerate().map(|(i, e)| vec![i.to_string(), num(*e)]).collect();
        out.csv("levels.csv", &["index", "energy"], &rows)?;
        out.csv("density_10.csv", &["m", "n", "value"], &matrix_table(&g10))?;
        out.csv("density_01.csv", &["m", "n", "value"], &matrix_table(&g01))?;
    }
    if r.wants(Format::Binary) {
        out.binary("state.bin", &psi, |t, m, w| io::write_state(t, m, w))?;
    }
    Ok(json!({
        "n1": toy.n1,
        "n2": toy.n2,
        "dimension": h.dim(),
        "ground_energy": energy,
        "energy_per_particle": energy / toy.n() as f64,
        "hartree_energy": hartree.energy,
        "levels": levels,
        "condensation": [c1, c2],
        "density_10": matrix_rows(&g10),
        "density_01": matrix_rows(&g01),
    }))
}

fn convergence(r: &Resolved, out: &mut Output) -> Result<Value, CliError> {
    let n = &r.config.numerics;
    let study = bogoliubov_convergence_study(r.toy()?, &n.sizes, n.dimension_cap).context("convergence study")?;
    for (size, why) in &study.skipped {
        eprintln!("warning: skipped N = {size}: {why}");
    }
    if r.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = study
            .rows
            .iter()
            .map(|row| {
                vec![
                    row.n.to_string(),
                    row.n1.to_string(),
                    row.n2.to_string(),
                    row.dim.to_string(),
                    num(row.energy),
                    num(row.first_order_error),
                    num(row.second_order_error),
                    num(row.overlap),
                    num(row.condensation[0]),
                    num(row.condensation[1]),
                ]
            })
            .collect();
        out.csv(
            "convergence.csv",
            &[
                "n",
                "n1",
                "n2",
                "dimension",
                "energy",
                "first_order_error",
                "second_order_error",
                "overlap",
                "condensation_1",
                "condensation_2",
            ],
            &rows,
        )?;
    }
    Ok(serde_json::to_value(&study).expect("study serialises"))
}

#[derive(Serialize)]
struct DefinettiRow {
    n: usize,
    n1: usize,
    n2: usize,
    k: usize,
    l: usize,
    error: f64,
    mass: f64,
    standard_error: f64,
}

fn split_particles(toy: &ToyModel, n: usize) -> Option<(usize, usize)> {
    let c1 = toy.ratios()[0];
    let n1f = c1 * n as f64;
    let n1 = n1f.round() as usize;
    ((n1f - n1 as f64).abs() < 1e-9 && n1 <= n).then_some((n1, n - n1))
}

fn definetti(r: &Resolved, out: &mut Output) -> Result<Value, CliError> {
    let n = &r.config.numerics;
    let toy = r.toy()?;
    let [d1, d2] = toy.modes();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &size in &n.sizes {
        let Some((n1, n2)) = split_particles(toy, size) else {
            skipped.push(size);
            eprintln!("warning: skipped N = {size}: incompatible with the ratio of the toy model");
            continue;
        };
        let psi = match n.definetti_state {
            DefinettiState::Condensate => {
                let basis = FockBasis::sector_capped(d1, d2, n1, n2, n.dimension_cap).context("Fock basis")?;
                ManyBodyVector::basis_state(Arc::new(basis), 0)
            }
            DefinettiState::Ground => {
                let m = toy.with_particles(n1, n2).context("toy model")?;
                let h = build_hamiltonian_capped(&m, n.dimension_cap).context("Hamiltonian")?;
                ground_state(&h).context("ground state")?.1
            }
        };
        let ens = husimi_sample(&psi, n.samples, n.seed).context("Husimi sampling")?;
        for &[k, l] in &n.orders {
            let error = definetti_error(&psi, k, l, &ens).context("de Finetti error")?;
            rows.push(DefinettiRow {
                n: size,
                n1,
                n2,
                k,
                l,
                error,
                mass: ens.mass(),
                standard_error: ens.standard_error(),
            });
        }
        if r.wants(Format::Binary) {
            out.binary(&format!("ensemble_n{size}.bin"), &ens, |t, m, w| io::write_ensemble(t, m, w))?;
        }
    }
    let slopes: Vec<Value> = n
        .orders
        .iter()
        .filter_map(|&[k, l]| {
            let pts: Vec<&DefinettiRow> = rows.iter().filter(|row| row.k == k && row.l == l).collect();
            (pts.len() >= 2 && pts.iter().all(|p| p.error > 0.0)).then(|| {
                let x: Vec<f64> = pts.iter().map(|p| 1.0 / p.n as f64).collect();
                let y: Vec<f64> = pts.iter().map(|p| p.error).collect();
                json!({ "k": k, "l": l, "slope": log_log_slope(&x, &y) })
            })
        })
        .collect();
    if r.wants(Format::Csv) {
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|row| {
                vec![
                    row.n.to_string(),
                    row.n1.to_string(),
                    row.n2.to_string(),
                    row.k.to_string(),
                    row.l.to_string(),
                    num(row.error),
                    num(row.mass),
                    num(row.standard_error),
                ]
            })
            .collect();
        out.csv(
            "definetti.csv",
            &["n", "n1", "n2", "k", "l", "error", "mass", "standard_error"],
            &table,
        )?;
    }
    Ok(json!({ "state": n.definetti_state, "samples": n.samples, "rows": rows, "slopes": slopes, "skipped": skipped }))
}

#[derive(Serialize)]
struct CheckLine {
    name: String,
    status: &'static str,
    value: f64,
    threshold: f64,
    detail: String,
}

fn line(name: &str, pass: bool, value: f64, threshold: f64, detail: String) -> CheckLine {
    CheckLine {
        name: name.into(),
        status: if pass { "pass" } else { "fail" },
        value,
        threshold,
        detail,
    }
}

/// Density `|f|²` of a random smooth orbital.
fn random_density(spec: &ModelSpec, seed: u64) -> Result<[SpectralField; 2], CliError> {
    let pair = random_initial_pair(spec.grid(), seed).context("random orbitals")?;
    let d = |f: &SpectralField| f.map(|z| Complex64::new(z.norm_sqr(), 0.0));
    Ok([d(&pair.u), d(&pair.v)])
}

fn check_continuum(r: &Resolved, spec: &ModelSpec, lines: &mut Vec<CheckLine>) -> Result<(), CliError> {
    let n = &r.config.numerics;
    let margin = n.minimize.trap_margin;
    match spec.validate_assumptions(margin) {
        Ok(()) => lines.push(line("trap_confinement", true, margin, margin, String::new())),
        Err(e @ bosemix::Error::Hypothesis(_)) if e.to_string().contains("trap") => {
            lines.push(line("trap_confinement", false, margin, margin, e.to_string()))
        }
        Err(_) => lines.push(line("trap_confinement", true, margin, margin, String::new())),
    }
    match spec.regime() {
        Regime::MeanField => {
            let report = miscibility_mf(spec);
            let count = |pred: &dyn Fn(ViolationKind) -> bool| report.violations.iter().filter(|v| pred(v.kind)).count();
            let positivity = count(&|k| k != ViolationKind::Miscibility);
            let mixing = count(&|k| k == ViolationKind::Miscibility);
            lines.push(line(
                "fourier_positivity",
                positivity == 0,
                positivity as f64,
                0.0,
                "lattice frequencies with a negative V1 or V2 transform".into(),
            ));
            lines.push(line(
                "miscibility",
                mixing == 0,
                mixing as f64,
                0.0,
                "lattice frequencies with V1·V2 < V12²".into(),
            ));
        }
        Regime::GrossPitaevskii => {
            let a = spec.scattering_lengths().expect("GP models carry scattering lengths");
            let gap = a.a1 * a.a2 - a.a12 * a.a12;
            lines.push(line("miscibility", miscibility_gp(a.a1, a.a2, a.a12), gap, 0.0, "a1·a2 - a12²".into()));
        }
    }
    let mut worst = f64::INFINITY;
    for i in 0..n.convexity_samples as u64 {
        let base = n.seed.wrapping_add(2 * i);
        let [f, g] = random_density(spec, base)?;
        let [p, q] = random_density(spec, base.wrapping_add(1))?;
        let gap = convexity_gap(&f, &g, &p, &q, spec).context("convexity gap")?;
        worst = worst.min(gap.total);
    }
    if n.convexity_samples > 0 {
        lines.push(line(
            "convexity",
            worst >= -1e-10,
            worst,
            -1e-10,
            format!("smallest gap over {} random quadruples", n.convexity_samples),
        ));
    }
    Ok(())
}

fn check_toy(toy: &ToyModel, lines: &mut Vec<CheckLine>) -> Result<(), CliError> {
    let [d1, d2] = toy.modes();
    let rel = verify_relations(d1, d2, toy.n1, toy.n2).context("excitation-map relations")?;
    let worst = rel
        .max_deviation
        .max(rel.unitarity_error)
        .max(rel.projector_error)
        .max(rel.trace_error);
    lines.push(line("relations", worst < 1e-10, worst, 1e-10, "largest deviation of the conjugation identities".into()));
    let (frame, _) = toy.condensate_frame().context("toy Hartree minimiser")?;
    let split = split_m(&frame).context("splitting")?;
    lines.push(line("split_residual", split.residual < 1e-10, split.residual, 1e-10, String::new()));
    lines.push(line("split_isolation", split.isolation_error < 1e-10, split.isolation_error, 1e-10, String::new()));
    match split.cancellation_error {
        Some(c) => lines.push(line("split_cancellation", c < 1e-10, c, 1e-10, String::new())),
        None => lines.push(line(
            "split_cancellation",
            false,
            split.stationarity,
            1e-10,
            "condensate mode is not stationary".into(),
        )),
    }
    let blocks = frame.quadratic_blocks().context("Bogoliubov blocks")?;
    let bottom = hessian_bottom(&blocks.hessian());
    lines.push(line("hessian_positive", bottom > 0.0, bottom, 0.0, "smallest Hessian eigenvalue".into()));
    let k_block = linalg::min_eigenvalue(&blocks.interaction_part());
    lines.push(line("interaction_block", k_block >= -1e-10, k_block, -1e-10, String::new()));
    Ok(())
}

fn check(r: &Resolved, out: &mut Output) -> Result<Value, CliError> {
    let mut lines = Vec::new();
    if let Some((_, spec)) = &r.continuum {
        check_continuum(r, spec, &mut lines)?;
    }
    if let Some(toy) = &r.toy {
        check_toy(toy, &mut lines)?;
    }
    for l in &lines {
        eprintln!("{:<20} {} ({:.3e})", l.name, l.status, l.value);
    }
    if r.wants(Format::Csv) {
        let rows: Vec<Vec<String>> = lines
            .iter()
            .map(|l| vec![l.name.clone(), l.status.into(), num(l.value), num(l.threshold)])
            .collect();
        out.csv("check.csv", &["name", "status", "value", "threshold"], &rows)?;
    }
    let all = lines.iter().all(|l| l.status == "pass");
    Ok(json!({ "all_pass": all, "checks": lines }))
}
