use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use dirac_bvp::bvp::{constant_c2, constant_c3, solve_model, solve_perturbed, ModelProblem};
use dirac_bvp::fredholm::{assemble_with, kernel_and_cokernel, solvability_check, splitting_check, BoundaryRows, KernelBasis};
use dirac_bvp::io::{cylinder_field_json, torus_field_json, write_field_csv, ProblemSpec, TorusSpec};
use dirac_bvp::poincare::{
    hardy_rayleigh_min, mckean_rayleigh_min, weight_floor, EndCondition, RayleighKind, RayleighProblem,
};
use dirac_bvp::spectral::{extension_constant, trace_constant, CylinderField, ModeClass, SpectralPartition};
use dirac_bvp::torus::{invert_constant, solve_variable, ConstantSolution};
use dirac_bvp::verify::Check;
use dirac_bvp::{Error, Grid};
use serde_json::{json, Value};

use crate::report::{emit, Report};

/// Boundary defects are compared against this multiple of `max(1, ||sigma||)`.
const BC_TOL: f64 = 1e-12;
/// Slack on observed contraction ratios over the predicted factor.
const RATIO_SLACK: f64 = 0.05;
/// Relative oracle gap accepted for the Rayleigh minima.
const RAYLEIGH_GAP: f64 = 0.01;
const FLOOR_TOL: f64 = 1e-8;
const SPLIT_TOL: f64 = 1e-10;
const SYMBOL_TOL: f64 = 1e-9;
/// Relative least-squares residual below which data counts as solvable.
const LSQ_TOL: f64 = 1e-8;

/// Optional field exports shared by the cylinder solvers.
pub struct FieldOutputs<'a> {
    pub csv: Option<&'a Path>,
    pub field: Option<&'a Path>,
}

impl FieldOutputs<'_> {
    fn write(&self, u: &CylinderField, partition: &SpectralPartition) -> Result<()> {
        if let Some(p) = self.csv {
            let file = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            write_field_csv(BufWriter::new(file), u, partition)?;
        }
        if let Some(p) = self.field {
            emit(&cylinder_field_json(u, partition), Some(p)).with_context(|| format!("cannot write {}", p.display()))?;
        }
        Ok(())
    }
}

fn class_name(c: ModeClass) -> &'static str {
    match c {
        ModeClass::Plus => "plus",
        ModeClass::Minus => "minus",
        ModeClass::Zero => "zero",
    }
}

fn sigma_scale(spec: &ProblemSpec) -> f64 {
    spec.bc.sigma().l2_norm().max(1.0)
}

pub fn spectrum(spec: &ProblemSpec) -> Result<Report> {
    let partition = spec.partition();
    let n = partition.len();
    let modes: Vec<Value> = (0..n)
        .map(|i| {
            json!({
                "index": partition.modes()[i].index,
                "lambda": partition.lambda(i),
                "class": class_name(partition.class(i)),
                "in_p": partition.in_p(i),
            })
        })
        .collect();
    let count = |c: ModeClass| (0..n).filter(|&i| partition.class(i) == c).count();
    let k = spec.bc.k_bound();
    let (ell, theta0) = (partition.ell(), partition.theta0());

    let mut report = Report::new("spectrum");
    let p: Vec<bool> = (0..n).map(|i| partition.in_p(i)).collect();
    let split = splitting_check(&p, &spec.bc.k_full())?;
    report.check(Check::le("splitting defect of ker Q1 (+) ker Q2", split.worst(), SPLIT_TOL));
    if let Some(c) = &spec.chiral {
        report.check(Check::le("chiral isotropy <psi, A psi>", c.isotropy_defect(), SPLIT_TOL));
        report.check(Check::le("chiral to graph subspace distance", c.conversion_distance(), SPLIT_TOL));
    }
    report.result = json!({
        "kappa": partition.kappa(),
        "delta": partition.delta(),
        "theta0": theta0,
        "ell": ell,
        "counts": {
            "plus": count(ModeClass::Plus),
            "minus": count(ModeClass::Minus),
            "zero": count(ModeClass::Zero),
            "lambda_hat": partition.lambda_hat_labels().len(),
            "p": p.iter().filter(|&&b| b).count(),
        },
        "lambda_hat": partition.lambda_hat_labels(),
        "modes": modes,
        "constants": {
            "trace": trace_constant(ell),
            "extension": extension_constant(),
            "c2": constant_c2(ell, theta0),
            "c3": constant_c3(ell, theta0),
            "k_bound": k,
            "c4": partition.c4(k),
        },
    });
    Ok(report)
}

pub fn solve(spec: &ProblemSpec, out: &FieldOutputs) -> Result<Report> {
    let problem = ModelProblem::new(spec.f.clone(), spec.bc.clone())?;
    let r = solve_model(&problem)?;
    let mut report = Report::new("solve");
    report.check(Check::le(
        "||u||^2_H1 <= c4^2 (||f||^2 + ||sigma||^2_1/2)",
        r.h1_norm_sq,
        r.c4 * r.c4 * r.data_norm_sq,
    ));
    report.check(Check::le(
        "boundary condition defect",
        r.bc_residuals.left.max(r.bc_residuals.right),
        BC_TOL * sigma_scale(spec),
    ));
    report.result = json!({
        "h1_norm_sq": r.h1_norm_sq,
        "data_norm_sq": r.data_norm_sq,
        "c4": r.c4,
        "k_bound": r.k_bound,
        "estimate_margin": r.estimate_margin(),
        "bc_residuals": r.bc_residuals,
        "p0_norm": r.p0_norm,
    });
    out.write(&r.u, spec.partition())?;
    Ok(report)
}

pub fn perturbed(spec: &ProblemSpec, tol: f64, max_iter: usize, out: &FieldOutputs) -> Result<Report> {
    let Some(b) = &spec.perturbation else {
        return Err(Error::config("perturbation", "required by the perturbed command").into());
    };
    let problem = ModelProblem::new(spec.f.clone(), spec.bc.clone())?;
    let r = solve_perturbed(&problem, b, tol, max_iter)?;
    let factor = r.contraction_factor();
    let data = spec.f.l2_norm_sq().sqrt() + spec.bc.sigma().l2_norm();

    let mut report = Report::new("perturbed");
    report.check(Check::le("c4 ||B||", factor, 1.0));
    if r.contraction_ratios.len() > 1 {
        let worst = r.contraction_ratios[1..].iter().copied().fold(0.0, f64::max);
        report.check(Check::le("contraction ratio <= c4 ||B|| + 0.05", worst, factor + RATIO_SLACK));
    }
    report.check(Check::le("residual <= 10 tol max(1, data)", r.residual, 10.0 * tol * data.max(1.0)));
    report.check(Check::le("||u||_H1 <= a priori bound", r.h1_norm, r.bound * (1.0 + 1e-9)));
    report.check(Check::le(
        "boundary condition defect",
        r.bc_residuals.left.max(r.bc_residuals.right),
        BC_TOL * sigma_scale(spec),
    ));
    report.result = json!({
        "iterations": r.iterations,
        "converged": r.converged,
        "step_norms": r.step_norms,
        "contraction_ratios": r.contraction_ratios,
        "op_norm": r.op_norm,
        "adjoint_op_norm": r.adjoint_op_norm,
        "adjoint_contracts": r.adjoint_contracts(),
        "c4": r.c4,
        "contraction_factor": factor,
        "residual": r.residual,
        "h1_norm": r.h1_norm,
        "bound": r.bound,
        "bc_residuals": r.bc_residuals,
        "tol": tol,
    });
    out.write(&r.u, spec.partition())?;
    Ok(report)
}

pub fn torus(spec: &TorusSpec, field: Option<&Path>) -> Result<Report> {
    let opts = &spec.options;
    let constant = invert_constant(&spec.f, &spec.op0)?;
    let worst_symbol = constant
        .certificates
        .iter()
        .map(|c| c.sigma_min - c.lower_bound)
        .fold(f64::INFINITY, f64::min);
    let sol = solve_variable(&spec.f, &spec.coeffs, &spec.op0, opts)?;
    let gain = ConstantSolution::estimate_constant(spec.op0.eta);
    let estimate = sol.b0_norm + sol.b1_norm;

    let mut report = Report::new("torus");
    report.check(Check::ge("min_k sigma_min - pi eta (2|k| - 1)", worst_symbol, -SYMBOL_TOL));
    report.check(Check::le("||B0|| + ||B1|| <= (1 - slack) eta / 3", estimate, sol.limit));
    if !sol.contraction_ratios.is_empty() {
        let worst = sol.contraction_ratios.iter().copied().fold(0.0, f64::max);
        report.check(Check::le(
            "contraction ratio <= sqrt(5)/eta (||B0|| + ||B1||) + 0.05",
            worst,
            gain * estimate + RATIO_SLACK,
        ));
    }
    report.check(Check::le(
        "residual <= 10 tol max(1, ||f||)",
        sol.residual,
        10.0 * opts.tol * spec.f.l2_norm().max(1.0),
    ));
    report.check(Check::le("||u||_H1 <= a priori bound", sol.h1_norm, sol.a_priori_bound * (1.0 + 1e-9)));
    report.result = json!({
        "eta": spec.op0.eta,
        "dims": spec.f.dims(),
        "cutoff": spec.f.cutoff(),
        "components": spec.f.components(),
        "options": opts,
        "iterations": sol.iterations,
        "step_norms": sol.step_norms,
        "contraction_ratios": sol.contraction_ratios,
        "b0_norm": sol.b0_norm,
        "b0_adjoint_norm": sol.b0_adjoint_norm,
        "b1_norm": sol.b1_norm,
        "limit": sol.limit,
        "residual": sol.residual,
        "h1_norm": sol.h1_norm,
        "a_priori_bound": sol.a_priori_bound,
    });
    if let Some(p) = field {
        emit(&torus_field_json(&sol.u), Some(p)).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(report)
}

fn basis_json(k: &KernelBasis) -> Value {
    json!({
        "dim": k.dim(),
        "sigma_max": k.sigma_max,
        "last_kept": k.last_kept,
        "first_dropped": k.first_dropped,
        "tail": k.tail,
    })
}

pub fn fredholm(spec: &ProblemSpec, refine: &[usize], rows: BoundaryRows) -> Result<Report> {
    let levels: Vec<usize> = if refine.is_empty() { vec![spec.grid.cells()] } else { refine.to_vec() };
    let mut report = Report::new("fredholm");
    let mut entries = Vec::new();
    let mut first_index = None;
    for &cells in &levels {
        let grid = Grid::new(spec.grid.delta(), cells).map_err(|e| Error::config("refine", e.to_string()))?;
        let f = if grid == spec.grid { spec.f.clone() } else { spec.f.resample(grid) };
        let b = spec.perturbation.as_ref().map(|b| b.resample(grid));
        let sys = assemble_with(&spec.bc, b.as_ref(), cells, rows)?;
        let (ker, coker) = kernel_and_cokernel(&sys);
        let index = ker.dim() as i64 - coker.dim() as i64;
        let rhs = sys.rhs(&f, spec.bc.sigma())?;
        let s = solvability_check(&sys, &coker, &rhs);
        let lsq_solvable = s.least_squares_residual <= LSQ_TOL * s.data_norm.max(f64::MIN_POSITIVE);
        let agree = s.solvable == lsq_solvable;
        report.check(Check::le(
            format!("M = {cells}: cokernel and least-squares verdicts disagree"),
            if agree { 0.0 } else { 1.0 },
            0.0,
        ));
        let base = *first_index.get_or_insert(index);
        report.check(Check::le(
            format!("M = {cells}: |index - index at M = {}|", levels[0]),
            (index - base).abs() as f64,
            0.0,
        ));
        entries.push(json!({
            "cells": cells,
            "rows": sys.matrix.nrows(),
            "unknowns": sys.matrix.ncols(),
            "kernel": basis_json(&ker),
            "cokernel": basis_json(&coker),
            "index": index,
            "solvability": s,
            "least_squares_verdict": lsq_solvable,
        }));
    }
    report.result = json!({
        "boundary_rows": rows,
        "perturbed": spec.perturbation.is_some(),
        "levels": entries,
    });
    Ok(report)
}

pub fn poincare(kind: RayleighKind, n: u32, log_ratio: f64, grid: usize, outer: Option<EndCondition>) -> Result<Report> {
    let mut p = match kind {
        RayleighKind::Hardy => RayleighProblem::hardy(n, log_ratio, grid),
        RayleighKind::Mckean => RayleighProblem::mckean(n, log_ratio, grid),
    };
    if let Some(bc) = outer {
        p.outer_bc = bc;
    }
    let r = match kind {
        RayleighKind::Hardy => hardy_rayleigh_min(&p)?,
        RayleighKind::Mckean => mckean_rayleigh_min(&p)?,
    };
    let mut report = Report::new("poincare");
    report.check(Check::ge("minimum >= sharp constant - 1e-8", r.minimum, r.floor - FLOOR_TOL));
    report.check(Check::le("|minimum - oracle| / oracle", r.relative_gap(), RAYLEIGH_GAP));
    report.result = json!({
        "problem": p,
        "log_length": p.log_length(),
        "minimum": r.minimum,
        "oracle": r.oracle,
        "floor": r.floor,
        "gap": r.minimum - r.oracle,
        "relative_gap": r.relative_gap(),
        "bisection_steps": r.bisection_steps,
        "weight_floor": weight_floor(kind, n),
    });
    Ok(report)
}

/// Parses a log ratio such as `3.5`, `pi`, `2pi`, `pi/2` or `1.5pi/4`.
pub fn parse_ratio(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim().to_ascii_lowercase();
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim().parse::<f64>().map_err(|_| format!("bad denominator in `{s}`"))?),
        None => (t.as_str(), 1.0),
    };
    let value = match num.strip_suffix("pi") {
        Some("") => std::f64::consts::PI,
        Some(c) => c.trim_end_matches('*').parse::<f64>().map_err(|_| format!("bad coefficient in `{s}`"))? * std::f64::consts::PI,
        None => num.parse::<f64>().map_err(|_| format!("`{s}` is not a number or multiple of pi"))?,
    };
    let v = value / den;
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("log ratio `{s}` must be positive and finite"));
    }
    Ok(v)
}
