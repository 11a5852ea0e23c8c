//! JSON problem files, field dumps and CSV export.
//!
//! Every loader walks the parsed document by hand so that a schema violation
//! is reported as [`Error::Config`] with the dotted path of the offending key.
//! Arrays indexed by mode (`sigma`, rows and columns of `K`, perturbation
//! matrices) are in position order, i.e. ascending eigenvalue.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use crate::bvp::{aps_condition, chiral_condition, ChiralCondition, ChiralSign, GraphBoundaryCondition, Perturbation};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::spectral::{
    build_partition, circle_dirac_modes, eigendecompose_symmetric, BoundaryField, CylinderField, EigenMode,
    LambdaHatRule, SpectralPartition,
};
use crate::torus::{ConstantOperator, FourierTerm, MatrixField, TorusField, VariableCoefficients, VariableOptions, C64};

pub const SCHEMA_VERSION: u64 = 1;

const MAX_MODES: usize = 4096;
const MAX_CELLS: usize = 1 << 20;
const MAX_TORUS_CUTOFF: usize = 64;
const MAX_COMPONENTS: usize = 64;

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn index(path: &str, i: usize) -> String {
    format!("{path}[{i}]")
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::config(path, "expected an object"))
}

fn required<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::config(join(path, key), "missing key"))
}

fn optional<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    obj.get(key).filter(|v| !v.is_null())
}

fn number(v: &Value, path: &str) -> Result<f64> {
    let x = v.as_f64().ok_or_else(|| Error::config(path, "expected a number"))?;
    if !x.is_finite() {
        return Err(Error::config(path, "expected a finite number"));
    }
    Ok(x)
}

fn positive(v: &Value, path: &str) -> Result<f64> {
    let x = number(v, path)?;
    if x <= 0.0 {
        return Err(Error::config(path, format!("expected a positive number, got {x}")));
    }
    Ok(x)
}

fn count(v: &Value, path: &str, max: usize) -> Result<usize> {
    let n = v.as_u64().ok_or_else(|| Error::config(path, "expected a non-negative integer"))?;
    if n > max as u64 {
        return Err(Error::config(path, format!("value {n} exceeds the limit {max}")));
    }
    Ok(n as usize)
}

fn array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::config(path, "expected an array"))
}

fn numbers(v: &Value, path: &str) -> Result<Vec<f64>> {
    array(v, path)?.iter().enumerate().map(|(i, x)| number(x, &index(path, i))).collect()
}

fn numbers_of_len(v: &Value, path: &str, len: usize) -> Result<Vec<f64>> {
    let xs = numbers(v, path)?;
    if xs.len() != len {
        return Err(Error::config(path, format!("expected {len} entries, got {}", xs.len())));
    }
    Ok(xs)
}

/// Row-major matrix; `shape` is checked when given.
fn matrix(v: &Value, path: &str, shape: Option<(usize, usize)>) -> Result<DMatrix<f64>> {
    let rows = array(v, path)?;
    let mut data = Vec::new();
    let mut cols = None;
    for (i, row) in rows.iter().enumerate() {
        let p = index(path, i);
        let r = numbers(row, &p)?;
        match cols {
            None => cols = Some(r.len()),
            Some(c) if c != r.len() => {
                return Err(Error::config(p, format!("expected {c} columns, got {}", r.len())));
            }
            _ => {}
        }
        data.extend(r);
    }
    let m = DMatrix::from_row_slice(rows.len(), cols.unwrap_or(0), &data);
    if let Some((r, c)) = shape {
        if m.shape() != (r, c) && !(r * c == 0 && m.is_empty()) {
            return Err(Error::config(
                path,
                format!("expected a {r}x{c} matrix, got {}x{}", m.nrows(), m.ncols()),
            ));
        }
        if m.is_empty() {
            return Ok(DMatrix::zeros(r, c));
        }
    }
    Ok(m)
}

fn square(v: &Value, path: &str, max: usize) -> Result<DMatrix<f64>> {
    let m = matrix(v, path, None)?;
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::config(path, format!("expected a non-empty square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    if m.nrows() > max {
        return Err(Error::config(path, format!("size {} exceeds the limit {max}", m.nrows())));
    }
    Ok(m)
}

fn check_version(obj: &Map<String, Value>) -> Result<()> {
    let v = required(obj, "", "schema_version")?;
    match v.as_u64() {
        Some(SCHEMA_VERSION) => Ok(()),
        _ => Err(Error::config("schema_version", format!("unsupported version {v}, expected {SCHEMA_VERSION}"))),
    }
}

fn wrap(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    }
}

fn parse_document(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::config("", format!("malformed JSON: {e}")))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::config("", format!("cannot read {}: {e}", path.display())))
}

/// A cylinder problem: source, boundary condition and optional perturbation.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub grid: Grid,
    pub f: CylinderField,
    pub bc: GraphBoundaryCondition,
    pub chiral: Option<ChiralCondition>,
    pub perturbation: Option<Perturbation>,
}

impl ProblemSpec {
    pub fn partition(&self) -> &SpectralPartition {
        self.bc.partition()
    }
}

fn parse_modes(obj: &Map<String, Value>) -> Result<Vec<EigenMode>> {
    let present: Vec<&str> = ["modes", "operator", "circle"].into_iter().filter(|k| optional(obj, k).is_some()).collect();
    if present.len() != 1 {
        return Err(Error::config(
            "modes",
            "exactly one of `modes`, `operator` or `circle` must be given",
        ));
    }
    match present[0] {
        "modes" => {
            let list = array(&obj["modes"], "modes")?;
            if list.is_empty() || list.len() > MAX_MODES {
                return Err(Error::config("modes", format!("need 1 to {MAX_MODES} modes")));
            }
            list.iter()
                .enumerate()
                .map(|(i, m)| {
                    let p = index("modes", i);
                    let o = object(m, &p)?;
                    Ok(EigenMode {
                        index: count(required(o, &p, "index")?, &join(&p, "index"), usize::MAX)?,
                        lambda: number(required(o, &p, "lambda")?, &join(&p, "lambda"))?,
                    })
                })
                .collect()
        }
        "operator" => {
            let a = square(&obj["operator"], "operator", MAX_MODES.min(1024))?;
            Ok(eigendecompose_symmetric(&a).map_err(wrap("operator"))?.modes)
        }
        _ => {
            let c = object(&obj["circle"], "circle")?;
            let n_max = count(required(c, "circle", "n_max")?, "circle.n_max", MAX_MODES / 4)?;
            let anti = match optional(c, "antiperiodic") {
                None => false,
                Some(v) => v.as_bool().ok_or_else(|| Error::config("circle.antiperiodic", "expected a boolean"))?,
            };
            Ok(circle_dirac_modes(n_max, anti))
        }
    }
}

fn parse_hat(obj: &Map<String, Value>) -> Result<LambdaHatRule> {
    match optional(obj, "lambda_hat") {
        None => Ok(LambdaHatRule::NonNegative),
        Some(v) => {
            let labels = array(v, "lambda_hat")?
                .iter()
                .enumerate()
                .map(|(i, x)| count(x, &index("lambda_hat", i), usize::MAX))
                .collect::<Result<Vec<_>>>()?;
            Ok(LambdaHatRule::Labels(labels))
        }
    }
}

fn parse_source(v: Option<&Value>, partition: &SpectralPartition, grid: Grid) -> Result<CylinderField> {
    let mut f = CylinderField::zeros(grid, partition.len());
    f.derivs = None;
    let Some(v) = v else { return Ok(f) };
    let o = object(v, "source")?;
    if let Some(g) = optional(o, "grid") {
        let xs = numbers_of_len(g, "source.grid", grid.nodes())?;
        let tol = 1e-12 * grid.delta().max(1.0);
        if let Some(i) = (0..xs.len()).find(|&i| (xs[i] - grid.node(i)).abs() > tol) {
            return Err(Error::config(index("source.grid", i), "grid must be uniform on [0, delta]"));
        }
    }
    let Some(coeffs) = optional(o, "coeffs") else { return Ok(f) };
    for (key, values) in object(coeffs, "source.coeffs")? {
        let p = join("source.coeffs", key);
        let pos = key
            .parse::<usize>()
            .ok()
            .and_then(|label| partition.position(label))
            .ok_or_else(|| Error::config(&p, "not a mode label"))?;
        f.values[pos] = if values.is_number() {
            vec![number(values, &p)?; grid.nodes()]
        } else {
            numbers_of_len(values, &p, grid.nodes())?
        };
    }
    Ok(f)
}

fn parse_sigma(o: &Map<String, Value>, n: usize) -> Result<BoundaryField> {
    match optional(o, "sigma") {
        None => Ok(BoundaryField::zeros(n)),
        Some(v) => Ok(BoundaryField::new(numbers_of_len(v, "bc.sigma", n)?)),
    }
}

fn parse_perturbation_value(v: &Value, path: &str, grid: Grid, modes: usize) -> Result<Perturbation> {
    let o = object(v, path)?;
    if let Some(nodes) = optional(o, "nodes") {
        let p = join(path, "nodes");
        let xs = numbers_of_len(nodes, &p, grid.nodes())?;
        let tol = 1e-12 * grid.delta().max(1.0);
        if let Some(i) = (0..xs.len()).find(|&i| (xs[i] - grid.node(i)).abs() > tol) {
            return Err(Error::config(index(&p, i), "nodes must match the problem grid"));
        }
    }
    let p = join(path, "matrices");
    let list = array(required(o, path, "matrices")?, &p)?;
    if list.len() != grid.nodes() {
        return Err(Error::config(&p, format!("expected {} matrices, got {}", grid.nodes(), list.len())));
    }
    let matrices = list
        .iter()
        .enumerate()
        .map(|(i, m)| matrix(m, &index(&p, i), Some((modes, modes))))
        .collect::<Result<Vec<_>>>()?;
    Perturbation::new(grid, matrices).map_err(wrap(path))
}

pub fn parse_problem(text: &str) -> Result<ProblemSpec> {
    let doc = parse_document(text)?;
    let obj = object(&doc, "")?;
    check_version(obj)?;
    let kappa = positive(required(obj, "", "kappa")?, "kappa")?;
    let delta = positive(required(obj, "", "delta")?, "delta")?;
    let cells = count(required(obj, "", "grid_size")?, "grid_size", MAX_CELLS)?;
    let grid = Grid::new(delta, cells).map_err(wrap("grid_size"))?;

    let bc_obj = object(required(obj, "", "bc")?, "bc")?;
    let kind = required(bc_obj, "bc", "type")?
        .as_str()
        .ok_or_else(|| Error::config("bc.type", "expected a string"))?;

    let (bc, chiral) = match kind {
        "chiral" => {
            let a = square(required(bc_obj, "bc", "operator")?, "bc.operator", 1024)?;
            let eps = square(required(bc_obj, "bc", "epsilon")?, "bc.epsilon", 1024)?;
            let sign = match required(bc_obj, "bc", "sign")?.as_str() {
                Some("+") => ChiralSign::Plus,
                Some("-") => ChiralSign::Minus,
                _ => return Err(Error::config("bc.sign", "expected \"+\" or \"-\"")),
            };
            if ["modes", "operator", "circle", "lambda_hat"].iter().any(|k| optional(obj, k).is_some()) {
                return Err(Error::config("bc", "a chiral problem takes its modes from bc.operator"));
            }
            let c = chiral_condition(&a, &eps, sign, kappa, delta).map_err(wrap("bc"))?;
            let sigma = parse_sigma(bc_obj, a.nrows())?;
            let bc = c.bc.with_sigma(sigma).map_err(wrap("bc.sigma"))?;
            (bc, Some(c))
        }
        "aps" | "graph" => {
            let modes = parse_modes(obj)?;
            let partition = build_partition(&modes, kappa, delta, &parse_hat(obj)?).map_err(wrap("modes"))?;
            let sigma = parse_sigma(bc_obj, partition.len())?;
            let bc = if kind == "aps" {
                aps_condition(&partition, sigma).map_err(wrap("bc.sigma"))?
            } else {
                let rows = partition.positions(crate::spectral::Projection::P).len();
                let cols = partition.len() - rows;
                let k = matrix(required(bc_obj, "bc", "K")?, "bc.K", Some((rows, cols)))?;
                GraphBoundaryCondition::new(partition, k, sigma).map_err(wrap("bc"))?
            };
            (bc, None)
        }
        other => return Err(Error::config("bc.type", format!("unknown type `{other}`, expected aps, graph or chiral"))),
    };
    let f = parse_source(optional(obj, "source"), bc.partition(), grid)?;
    let perturbation = optional(obj, "perturbation")
        .map(|v| parse_perturbation_value(v, "perturbation", grid, bc.partition().len()))
        .transpose()?;
    Ok(ProblemSpec {
        grid,
        f,
        bc,
        chiral,
        perturbation,
    })
}

pub fn load_problem(path: &Path) -> Result<ProblemSpec> {
    parse_problem(&read_text(path)?)
}

/// Parses a stand-alone perturbation `{"nodes": [...], "matrices": [[[...]]]}`
/// against the problem grid.
pub fn parse_perturbation(text: &str, grid: Grid, modes: usize) -> Result<Perturbation> {
    parse_perturbation_value(&parse_document(text)?, "", grid, modes)
}

/// `{"grid": [...], "coeffs": {"<label>": [...]}}`
pub fn cylinder_field_json(u: &CylinderField, partition: &SpectralPartition) -> Value {
    let coeffs: BTreeMap<String, &Vec<f64>> = partition
        .modes()
        .iter()
        .zip(&u.values)
        .map(|(m, v)| (m.index.to_string(), v))
        .collect();
    json!({ "grid": u.grid.points(), "coeffs": coeffs })
}

/// Inverse of [`cylinder_field_json`]; the grid must be uniform.
pub fn parse_cylinder_field(text: &str, partition: &SpectralPartition) -> Result<CylinderField> {
    let doc = parse_document(text)?;
    let obj = object(&doc, "")?;
    let xs = numbers(required(obj, "", "grid")?, "grid")?;
    if xs.len() < 2 || xs.len() > MAX_CELLS + 1 {
        return Err(Error::config("grid", "need between 2 and 2^20 + 1 nodes"));
    }
    if xs[0] != 0.0 {
        return Err(Error::config("grid[0]", "grid must start at 0"));
    }
    let grid = Grid::new(xs[xs.len() - 1], xs.len() - 1).map_err(wrap("grid"))?;
    let mut wrapper = Map::new();
    wrapper.insert("grid".into(), obj["grid"].clone());
    wrapper.insert("coeffs".into(), required(obj, "", "coeffs")?.clone());
    let f = parse_source(Some(&Value::Object(wrapper)), partition, grid).map_err(|e| match e {
        Error::Config { path, message } => Error::Config {
            path: path.trim_start_matches("source.").to_string(),
            message,
        },
        other => other,
    })?;
    Ok(f)
}

/// CSV with one row per grid node: `x`, then one column per mode label.
pub fn write_field_csv<W: Write>(out: W, u: &CylinderField, partition: &SpectralPartition) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidInput(format!("CSV write failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x".to_string()];
    header.extend(partition.modes().iter().map(|m| format!("mode_{}", m.index)));
    w.write_record(&header).map_err(io)?;
    for i in 0..u.grid.nodes() {
        let mut row = vec![u.grid.node(i).to_string()];
        row.extend(u.values.iter().map(|v| v[i].to_string()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("CSV write failed: {e}")))?;
    Ok(())
}

/// `{"dims", "cutoff", "coeffs_re", "coeffs_im"}`, one row per lattice point.
pub fn torus_field_json(u: &TorusField) -> Value {
    let re: Vec<Vec<f64>> = u.coeffs.iter().map(|c| c.iter().map(|z| z.re).collect()).collect();
    let im: Vec<Vec<f64>> = u.coeffs.iter().map(|c| c.iter().map(|z| z.im).collect()).collect();
    json!({ "dims": u.dims(), "cutoff": u.cutoff(), "coeffs_re": re, "coeffs_im": im })
}

fn parse_torus_field_value(v: &Value, path: &str) -> Result<TorusField> {
    let o = object(v, path)?;
    let dims = count(required(o, path, "dims")?, &join(path, "dims"), 2)?;
    let cutoff = count(required(o, path, "cutoff")?, &join(path, "cutoff"), MAX_TORUS_CUTOFF)?;
    if dims == 0 {
        return Err(Error::config(join(path, "dims"), "torus dimension must be 1 or 2"));
    }
    let points = (2 * cutoff + 1).pow(dims as u32);
    let re = matrix(required(o, path, "coeffs_re")?, &join(path, "coeffs_re"), None)?;
    let im = matrix(required(o, path, "coeffs_im")?, &join(path, "coeffs_im"), Some(re.shape()))?;
    if re.nrows() != points {
        return Err(Error::config(
            join(path, "coeffs_re"),
            format!("expected {points} lattice points, got {}", re.nrows()),
        ));
    }
    if re.ncols() == 0 || re.ncols() > MAX_COMPONENTS {
        return Err(Error::config(join(path, "coeffs_re"), format!("need 1 to {MAX_COMPONENTS} components")));
    }
    let coeffs = (0..points)
        .map(|i| DVector::from_iterator(re.ncols(), (0..re.ncols()).map(|j| C64::new(re[(i, j)], im[(i, j)]))))
        .collect();
    TorusField::from_coeffs(dims, cutoff, coeffs).map_err(wrap(path))
}

pub fn parse_torus_field(text: &str) -> Result<TorusField> {
    parse_torus_field_value(&parse_document(text)?, "")
}

/// A variable-coefficient torus problem.
#[derive(Debug, Clone)]
pub struct TorusSpec {
    pub op0: ConstantOperator,
    pub coeffs: VariableCoefficients,
    pub f: TorusField,
    pub options: VariableOptions,
}

fn parse_matrix_field(v: &Value, path: &str, n: usize, dims: usize) -> Result<MatrixField> {
    let o = object(v, path)?;
    let constant = match optional(o, "constant") {
        Some(c) => matrix(c, &join(path, "constant"), Some((n, n)))?,
        None => DMatrix::zeros(n, n),
    };
    let mut terms = Vec::new();
    if let Some(t) = optional(o, "terms") {
        let tp = join(path, "terms");
        for (i, term) in array(t, &tp)?.iter().enumerate() {
            let p = index(&tp, i);
            let to = object(term, &p)?;
            let kp = join(&p, "k");
            let k = array(required(to, &p, "k")?, &kp)?
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    x.as_i64()
                        .filter(|v| v.unsigned_abs() <= MAX_TORUS_CUTOFF as u64)
                        .ok_or_else(|| Error::config(index(&kp, j), "expected a small integer frequency"))
                })
                .collect::<Result<Vec<_>>>()?;
            if k.len() != dims {
                return Err(Error::config(kp, format!("expected {dims} components")));
            }
            let zero = DMatrix::zeros(n, n);
            let cos = optional(to, "cos").map(|c| matrix(c, &join(&p, "cos"), Some((n, n)))).transpose()?;
            let sin = optional(to, "sin").map(|c| matrix(c, &join(&p, "sin"), Some((n, n)))).transpose()?;
            terms.push(FourierTerm {
                k,
                cos: cos.unwrap_or_else(|| zero.clone()),
                sin: sin.unwrap_or(zero),
            });
        }
    }
    Ok(MatrixField { constant, terms })
}

/// Parses a torus problem:
/// `{"schema_version": 1, "a0": [..], "a": [..], "b": {..}, "source": {..}, "options": {..}}`.
/// `a` defaults to the constant `a0` and `b` to zero.
pub fn parse_torus(text: &str) -> Result<TorusSpec> {
    let doc = parse_document(text)?;
    let obj = object(&doc, "")?;
    check_version(obj)?;
    let a0_list = array(required(obj, "", "a0")?, "a0")?;
    if a0_list.is_empty() || a0_list.len() > 2 {
        return Err(Error::config("a0", "need one matrix per torus dimension (1 or 2)"));
    }
    let first = square(&a0_list[0], "a0[0]", MAX_COMPONENTS)?;
    let n = first.nrows();
    let mut a0 = vec![first];
    for (i, m) in a0_list.iter().enumerate().skip(1) {
        a0.push(matrix(m, &index("a0", i), Some((n, n)))?);
    }
    let dims = a0.len();
    let op0 = ConstantOperator::new(a0.clone()).map_err(wrap("a0"))?;

    let f = parse_torus_field_value(required(obj, "", "source")?, "source")?;
    if f.dims() != dims || f.components() != n {
        return Err(Error::config(
            "source",
            format!("source must have dims {dims} and {n} components"),
        ));
    }
    let a = match optional(obj, "a") {
        None => a0.iter().cloned().map(MatrixField::constant).collect(),
        Some(v) => {
            let list = array(v, "a")?;
            if list.len() != dims {
                return Err(Error::config("a", format!("expected {dims} coefficient fields")));
            }
            list.iter()
                .enumerate()
                .map(|(i, m)| parse_matrix_field(m, &index("a", i), n, dims))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let b = match optional(obj, "b") {
        None => MatrixField::zeros(n),
        Some(v) => parse_matrix_field(v, "b", n, dims)?,
    };
    let mut options = VariableOptions::default();
    if let Some(v) = optional(obj, "options") {
        let o = object(v, "options")?;
        if let Some(x) = optional(o, "tol") {
            options.tol = positive(x, "options.tol")?;
        }
        if let Some(x) = optional(o, "max_iter") {
            options.max_iter = count(x, "options.max_iter", 100_000)?;
        }
        if let Some(x) = optional(o, "b0_fraction") {
            options.b0_fraction = number(x, "options.b0_fraction")?;
            if !(0.0..=1.0).contains(&options.b0_fraction) {
                return Err(Error::config("options.b0_fraction", "must lie in [0, 1]"));
            }
        }
        if let Some(x) = optional(o, "eta_slack") {
            options.eta_slack = number(x, "options.eta_slack")?;
            if !(0.0..1.0).contains(&options.eta_slack) {
                return Err(Error::config("options.eta_slack", "must lie in [0, 1)"));
            }
        }
    }
    Ok(TorusSpec {
        op0,
        coeffs: VariableCoefficients { a, b },
        f,
        options,
    })
}

pub fn load_torus(path: &Path) -> Result<TorusSpec> {
    parse_torus(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const APS: &str = r#"{
        "schema_version": 1, "kappa": 0.5, "delta": 1.0, "grid_size": 16,
        "modes": [{"index": 0, "lambda": -1.0}, {"index": 1, "lambda": 1.0}],
        "bc": {"type": "aps", "sigma": [0.0, 1.0]}
    }"#;

    fn path_of(e: Error) -> String {
        match e {
            Error::Config { path, .. } => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn aps_round_trip() {
        let p = parse_problem(APS).unwrap();
        assert_eq!(p.bc.sigma().coeffs, vec![0.0, 1.0]);
        assert_eq!(p.grid.cells(), 16);
        let dumped = cylinder_field_json(&p.f, p.partition()).to_string();
        let back = parse_cylinder_field(&dumped, p.partition()).unwrap();
        assert_eq!(back.values, p.f.values);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(path_of(parse_problem(&APS.replace("\"kappa\": 0.5", "\"kappa\": \"x\"")).unwrap_err()), "kappa");
        assert_eq!(path_of(parse_problem(&APS.replace("\"lambda\": 1.0", "\"lambda\": null")).unwrap_err()), "modes[1].lambda");
        assert_eq!(path_of(parse_problem(&APS.replace("[0.0, 1.0]", "[1.0, 0.0]")).unwrap_err()), "bc.sigma");
        assert_eq!(path_of(parse_problem(&APS.replace("\"aps\"", "\"apz\"")).unwrap_err()), "bc.type");
        assert_eq!(path_of(parse_problem(&APS.replace("\"schema_version\": 1", "\"schema_version\": 2")).unwrap_err()), "schema_version");
        assert_eq!(path_of(parse_problem("{").unwrap_err()), "");
    }

    #[test]
    fn chiral_problem_loads() {
        let text = r#"{
            "schema_version": 1, "kappa": 0.5, "delta": 1.0, "grid_size": 8,
            "bc": {"type": "chiral", "operator": [[0, 1], [1, 0]], "epsilon": [[1, 0], [0, -1]], "sign": "+"}
        }"#;
        let p = parse_problem(text).unwrap();
        assert!(p.chiral.unwrap().conversion_distance() < 1e-10);
    }

    #[test]
    fn torus_dump_round_trip() {
        let mut f = TorusField::zeros(2, 1, 2).unwrap();
        f.coeffs[3][1] = C64::new(0.5, -0.25);
        let back = parse_torus_field(&torus_field_json(&f).to_string()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let p = parse_problem(APS).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &p.f, p.partition()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 18);
        assert!(text.starts_with("x,mode_0,mode_1"));
    }
}
