//! Spectral data of the boundary operator `A`: eigenmodes, the partition of
//! the spectrum at a cutoff `kappa`, projections, the weighted `H^s_*` norms
//! and the trace/extension maps between `Y` and the cylinder `Y x [0, delta]`.
//!
//! Everything here works on coefficient vectors in the eigenbasis of `A`.
//! Coefficients are stored by *position* in the ascending mode list; mode
//! labels (`EigenMode::index`) only appear at the serialization boundary.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// An eigenvalue of the boundary operator together with its label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenMode {
    pub index: usize,
    #[serde(rename = "lambda")]
    pub lambda: f64,
}

/// Output of [`eigendecompose_symmetric`].
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending eigenvalues; `modes[j].index == j`.
    pub modes: Vec<EigenMode>,
    /// Orthonormal eigenvectors, column `j` belongs to `modes[j]`.
    pub vectors: DMatrix<f64>,
    /// `||A - Q diag(lambda) Q^T||_F`.
    pub residual: f64,
}

impl SymmetricEigen {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Full eigendecomposition of a dense symmetric matrix.
pub fn eigendecompose_symmetric(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(Error::InvalidInput(format!(
            "operator must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("operator has non-finite entries".into()));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(SymmetricEigen {
            modes: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
            residual: 0.0,
        });
    }
    let scale = max_abs(a);
    let asymmetry = max_abs(&(a - a.transpose()));
    let tolerance = 1e-12 * scale;
    if asymmetry > tolerance {
        return Err(Error::NotSymmetric { asymmetry, tolerance });
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));

    let mut vectors = DMatrix::zeros(n, n);
    let mut modes = Vec::with_capacity(n);
    for (pos, &src) in order.iter().enumerate() {
        vectors.set_column(pos, &eig.eigenvectors.column(src));
        modes.push(EigenMode {
            index: pos,
            lambda: eig.eigenvalues[src],
        });
    }
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        modes.iter().map(|m| m.lambda),
    ));
    let residual = (&sym - &vectors * diag * vectors.transpose()).norm();
    Ok(SymmetricEigen {
        modes,
        vectors,
        residual,
    })
}

/// Exact spectrum of the Dirac operator `J d/dtheta` on a circle of length
/// `2 pi`, truncated to `|n| <= n_max`. Antiperiodic spinors shift the
/// spectrum by one half. Each eigenvalue has multiplicity two.
pub fn circle_dirac_modes(n_max: usize, antiperiodic: bool) -> Vec<EigenMode> {
    let n = n_max as i64;
    let mut values = Vec::new();
    if antiperiodic {
        for k in -n - 1..=n {
            let lambda = k as f64 + 0.5;
            values.push(lambda);
            values.push(lambda);
        }
    } else {
        for k in -n..=n {
            values.push(k as f64);
            values.push(k as f64);
        }
    }
    values
        .into_iter()
        .enumerate()
        .map(|(index, lambda)| EigenMode { index, lambda })
        .collect()
}

/// Dense central-difference discretization of `J d/dtheta` on two-component
/// fields over a periodic grid of `points` nodes on a circle of length `2 pi`.
/// `J` is rotation by `pi/2`. The matrix is symmetric.
pub fn circle_dirac_matrix(points: usize) -> DMatrix<f64> {
    let h = 2.0 * std::f64::consts::PI / points as f64;
    let n = 2 * points;
    let mut a = DMatrix::zeros(n, n);
    // Component layout: (u1_0, u2_0, u1_1, u2_1, ...). J = [[0,-1],[1,0]].
    for i in 0..points {
        let next = (i + 1) % points;
        let prev = (i + points - 1) % points;
        let c = 1.0 / (2.0 * h);
        // row for (J D u)_1 = -(D u2)
        a[(2 * i, 2 * next + 1)] += -c;
        a[(2 * i, 2 * prev + 1)] += c;
        // row for (J D u)_2 = D u1
        a[(2 * i + 1, 2 * next)] += c;
        a[(2 * i + 1, 2 * prev)] += -c;
    }
    a
}

/// The self-adjoint block operator `[[0, A^T], [A, 0]]` built from a
/// (possibly rectangular) operator `A`, and its eigendecomposition.
pub fn block_operator(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, SymmetricEigen)> {
    let (m, n) = a.shape();
    let mut big = DMatrix::zeros(m + n, m + n);
    big.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    big.view_mut((n, 0), (m, n)).copy_from(a);
    let eig = eigendecompose_symmetric(&big)?;
    Ok((big, eig))
}

/// Which part of the spectrum a mode belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeClass {
    /// `lambda >= kappa`
    Plus,
    /// `lambda <= -kappa`
    Minus,
    /// `|lambda| < kappa`
    Zero,
}

/// Rule selecting the subset `Lambda-hat` of small modes assigned to `P`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum LambdaHatRule {
    /// `{alpha in Lambda^0 : lambda_alpha >= 0}`
    #[default]
    NonNegative,
    /// Explicit mode labels; each must lie in `Lambda^0`.
    Labels(Vec<usize>),
}

/// Partition of the spectrum into `Lambda^+`, `Lambda^-`, `Lambda^0` at the
/// cutoff `kappa`, with the derived scales `theta0` and `ell = kappa delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPartition {
    modes: Vec<EigenMode>,
    kappa: f64,
    delta: f64,
    class: Vec<ModeClass>,
    hat: Vec<bool>,
    theta0: f64,
}

/// Width of the exclusion band around `|lambda| = kappa`.
pub const CUTOFF_BAND: f64 = 1e-12;

/// Builds the spectral partition. Modes are sorted ascending by eigenvalue,
/// ties broken by label.
pub fn build_partition(
    modes: &[EigenMode],
    kappa: f64,
    delta: f64,
    rule: &LambdaHatRule,
) -> Result<SpectralPartition> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::InvalidInput(format!("kappa must be positive, got {kappa}")));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let mut modes = modes.to_vec();
    if let Some(m) = modes.iter().find(|m| !m.lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("mode {} has non-finite eigenvalue", m.index)));
    }
    modes.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.index.cmp(&b.index)));
    let mut labels: Vec<usize> = modes.iter().map(|m| m.index).collect();
    labels.sort_unstable();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput(format!("duplicate mode label {}", w[0])));
    }

    let mut class = Vec::with_capacity(modes.len());
    for m in &modes {
        let a = m.lambda.abs();
        if a > kappa - CUTOFF_BAND && a < kappa + CUTOFF_BAND {
            return Err(Error::CutoffOnEigenvalue {
                kappa,
                lambda: m.lambda,
                index: m.index,
            });
        }
        class.push(if m.lambda >= kappa {
            ModeClass::Plus
        } else if m.lambda <= -kappa {
            ModeClass::Minus
        } else {
            ModeClass::Zero
        });
    }

    let hat = match rule {
        LambdaHatRule::NonNegative => modes
            .iter()
            .zip(&class)
            .map(|(m, c)| *c == ModeClass::Zero && m.lambda >= 0.0)
            .collect(),
        LambdaHatRule::Labels(labels) => {
            let mut hat = vec![false; modes.len()];
            for &label in labels {
                let pos = modes
                    .iter()
                    .position(|m| m.index == label)
                    .ok_or_else(|| Error::InvalidInput(format!("lambda_hat label {label} is not a mode")))?;
                if class[pos] != ModeClass::Zero {
                    return Err(Error::InvalidInput(format!(
                        "lambda_hat label {label} is not a small mode (|lambda| >= kappa)"
                    )));
                }
                hat[pos] = true;
            }
            hat
        }
    };

    let theta0 = modes
        .iter()
        .zip(&class)
        .filter(|(_, c)| **c == ModeClass::Zero)
        .map(|(m, _)| m.lambda.abs())
        .fold(0.0_f64, f64::max)
        / kappa;

    Ok(SpectralPartition {
        modes,
        kappa,
        delta,
        class,
        hat,
        theta0,
    })
}

/// Index sets a projection can select.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Plus,
    Minus,
    Zero,
    /// `P' = P_+ + P_-`
    Prime,
    /// `P = P_+ + P_hat`
    P,
    /// `1 - P`
    OneMinusP,
}

impl SpectralPartition {
    pub fn modes(&self) -> &[EigenMode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn ell(&self) -> f64 {
        self.kappa * self.delta
    }

    pub fn lambda(&self, pos: usize) -> f64 {
        self.modes[pos].lambda
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    pub fn class(&self, pos: usize) -> ModeClass {
        self.class[pos]
    }

    pub fn in_hat(&self, pos: usize) -> bool {
        self.hat[pos]
    }

    /// Position of the mode with the given label.
    pub fn position(&self, label: usize) -> Option<usize> {
        self.modes.iter().position(|m| m.index == label)
    }

    pub fn selects(&self, which: Projection, pos: usize) -> bool {
        let c = self.class[pos];
        match which {
            Projection::Plus => c == ModeClass::Plus,
            Projection::Minus => c == ModeClass::Minus,
            Projection::Zero => c == ModeClass::Zero,
            Projection::Prime => c != ModeClass::Zero,
            Projection::P => c == ModeClass::Plus || self.hat[pos],
            Projection::OneMinusP => !(c == ModeClass::Plus || self.hat[pos]),
        }
    }

    pub fn in_p(&self, pos: usize) -> bool {
        self.selects(Projection::P, pos)
    }

    /// Positions selected by a projection, ascending.
    pub fn positions(&self, which: Projection) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.selects(which, p)).collect()
    }

    /// Spectral scale of a mode: `|lambda|` on `Lambda'`, `kappa` on `Lambda^0`.
    pub fn scale(&self, pos: usize) -> f64 {
        match self.class[pos] {
            ModeClass::Zero => self.kappa,
            _ => self.modes[pos].lambda.abs(),
        }
    }

    /// Labels of `Lambda-hat`, ascending by position.
    pub fn lambda_hat_labels(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&p| self.hat[p])
            .map(|p| self.modes[p].index)
            .collect()
    }

    /// The explicit constant `c4(ell, theta0, k)` for this partition.
    ///
    /// The `theta0 = 0` shortcut `c4^2 = 2 max(1, k^2)` is only used when
    /// `Lambda^0` is empty: zero eigenvalues also give `theta0 = 0` but their
    /// modes need the general formula.
    pub fn c4(&self, k: f64) -> f64 {
        let has_small = self.class.contains(&ModeClass::Zero);
        if has_small {
            crate::bvp::constants::c4_general(self.ell(), self.theta0, k)
        } else {
            crate::bvp::constants::constant_c4(self.ell(), 0.0, k)
        }
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.len() {
            return Err(Error::PartitionMismatch(format!(
                "{what} has {len} modes, partition has {}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Coefficients `u_alpha` of a field on `Y`, by mode position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryField {
    pub coeffs: Vec<f64>,
}

impl BoundaryField {
    pub fn new(coeffs: Vec<f64>) -> Self {
        BoundaryField { coeffs }
    }

    pub fn zeros(n: usize) -> Self {
        BoundaryField { coeffs: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Zeroes the coefficients outside the selected index set.
pub fn project(field: &BoundaryField, partition: &SpectralPartition, which: Projection) -> Result<BoundaryField> {
    partition.check_len(field.len(), "field")?;
    Ok(BoundaryField {
        coeffs: field
            .coeffs
            .iter()
            .enumerate()
            .map(|(p, &c)| if partition.selects(which, p) { c } else { 0.0 })
            .collect(),
    })
}

/// Squared `H^s_*` norm: `sum_{Lambda'} |lambda|^{2s} u^2 + kappa^{2s} sum_{Lambda^0} u^2`.
pub fn hs_norm_sq(field: &BoundaryField, partition: &SpectralPartition, s: f64) -> Result<f64> {
    partition.check_len(field.len(), "field")?;
    if !(s >= 0.0) {
        return Err(Error::InvalidInput(format!("Sobolev index must be >= 0, got {s}")));
    }
    Ok(field
        .coeffs
        .iter()
        .enumerate()
        .map(|(p, &c)| partition.scale(p).powf(2.0 * s) * c * c)
        .sum())
}

pub fn hs_norm(field: &BoundaryField, partition: &SpectralPartition, s: f64) -> Result<f64> {
    hs_norm_sq(field, partition, s).map(f64::sqrt)
}

/// Mode coefficients sampled on a uniform grid over `[0, delta]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderField {
    pub grid: Grid,
    /// `values[alpha][i] = u_alpha(x_i)`
    pub values: Vec<Vec<f64>>,
    /// Exact derivative samples when the producer knows them.
    pub derivs: Option<Vec<Vec<f64>>>,
}

impl CylinderField {
    pub fn zeros(grid: Grid, modes: usize) -> Self {
        CylinderField {
            grid,
            values: vec![vec![0.0; grid.nodes()]; modes],
            derivs: Some(vec![vec![0.0; grid.nodes()]; modes]),
        }
    }

    pub fn modes(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.nodes();
        let bad = |v: &Vec<Vec<f64>>| v.iter().any(|row| row.len() != n);
        if bad(&self.values) || self.derivs.as_ref().is_some_and(bad) {
            return Err(Error::InvalidInput("mode arrays must match the grid".into()));
        }
        if let Some(d) = &self.derivs {
            if d.len() != self.values.len() {
                return Err(Error::InvalidInput("derivative arrays must match mode count".into()));
            }
        }
        Ok(())
    }

    /// Derivative samples: exact ones if present, otherwise finite differences.
    pub fn derivative(&self, mode: usize) -> std::borrow::Cow<'_, [f64]> {
        match &self.derivs {
            Some(d) => std::borrow::Cow::Borrowed(&d[mode]),
            None => std::borrow::Cow::Owned(self.grid.differentiate(&self.values[mode])),
        }
    }

    /// Piecewise-linear resampling onto another grid over the same interval.
    /// Derivative samples are dropped.
    pub fn resample(&self, grid: Grid) -> CylinderField {
        CylinderField {
            grid,
            values: self.values.iter().map(|v| self.grid.interpolate(v, &grid)).collect(),
            derivs: None,
        }
    }

    /// `||u||^2_{L^2(Y x I)}` by the trapezoid rule.
    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| self.grid.trapezoid_map(v, |x| x * x)).sum()
    }

    /// Pointwise difference `self - other` (values and derivatives).
    pub fn difference(&self, other: &CylinderField) -> CylinderField {
        let sub = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
                .collect()
        };
        let derivs = match (&self.derivs, &other.derivs) {
            (Some(a), Some(b)) => Some(sub(a, b)),
            _ => None,
        };
        CylinderField {
            grid: self.grid,
            values: sub(&self.values, &other.values),
            derivs,
        }
    }
}

/// Squared `H^1_*(Y x I)` norm, trapezoid rule over the grid.
pub fn h1_star_norm_sq(u: &CylinderField, partition: &SpectralPartition) -> Result<f64> {
    partition.check_len(u.modes(), "cylinder field")?;
    u.validate()?;
    let grid = &u.grid;
    let mut total = 0.0;
    for p in 0..u.modes() {
        let w = partition.scale(p);
        let d = u.derivative(p);
        total += grid.trapezoid_map(&d, |v| v * v) + w * w * grid.trapezoid_map(&u.values[p], |v| v * v);
    }
    Ok(total)
}

pub fn h1_star_norm(u: &CylinderField, partition: &SpectralPartition) -> Result<f64> {
    h1_star_norm_sq(u, partition).map(f64::sqrt)
}

/// Restriction `u(x, .)` at a grid node.
pub fn trace_at(u: &CylinderField, x: f64) -> Result<BoundaryField> {
    let i = u.grid.locate(x).ok_or(Error::OffGrid { x })?;
    Ok(BoundaryField {
        coeffs: u.values.iter().map(|v| v[i]).collect(),
    })
}

/// Trace constant `c1(ell) = (1 + sqrt(1 + ell^2)) / ell`.
pub fn trace_constant(ell: f64) -> f64 {
    (1.0 + (1.0 + ell * ell).sqrt()) / ell
}

/// Constant of the extension bound `||e_Y sigma||^2 <= (2/sqrt 3) ||sigma||^2_{1/2}`.
pub fn extension_constant() -> f64 {
    2.0 / 3.0_f64.sqrt()
}

fn extension_width(partition: &SpectralPartition, pos: usize) -> f64 {
    3.0_f64.sqrt() / partition.scale(pos)
}

/// Extension `sigma_alpha chi(x / eta_alpha)` with `chi(t) = max(0, 1 - t)`
/// and `eta_alpha = sqrt(3) / scale_alpha`, sampled on a grid of `cells` cells.
///
/// Derivative samples are the one-sided values from the left; at the kink
/// `x = eta_alpha` the left derivative is stored.
pub fn extend_boundary(sigma: &BoundaryField, partition: &SpectralPartition, cells: usize) -> Result<CylinderField> {
    partition.check_len(sigma.len(), "boundary field")?;
    let grid = Grid::new(partition.delta(), cells)?;
    let xs = grid.points();
    let mut values = Vec::with_capacity(sigma.len());
    let mut derivs = Vec::with_capacity(sigma.len());
    for (p, &s) in sigma.coeffs.iter().enumerate() {
        let eta = extension_width(partition, p);
        values.push(xs.iter().map(|&x| s * (1.0 - x / eta).max(0.0)).collect());
        derivs.push(
            xs.iter()
                .map(|&x| if x > 0.0 && x > eta { 0.0 } else { -s / eta })
                .collect(),
        );
    }
    Ok(CylinderField {
        grid,
        values,
        derivs: Some(derivs),
    })
}

/// Exact `||e_Y sigma||^2_{H^1_*}` of the extension profile, integrated in
/// closed form over `[0, min(eta_alpha, delta)]` for each mode.
pub fn extension_h1_star_norm_sq(sigma: &BoundaryField, partition: &SpectralPartition) -> Result<f64> {
    partition.check_len(sigma.len(), "boundary field")?;
    let delta = partition.delta();
    Ok(sigma
        .coeffs
        .iter()
        .enumerate()
        .map(|(p, &s)| {
            let w = partition.scale(p);
            let eta = extension_width(partition, p);
            let t = eta.min(delta);
            let slope = t / (eta * eta);
            let r = 1.0 - t / eta;
            let mass = eta / 3.0 * (1.0 - r * r * r);
            s * s * (slope + w * w * mass)
        })
        .sum())
}
