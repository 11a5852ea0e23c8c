//! First-order systems `a^j d_j u + b u + lambda u = f` on the flat torus
//! `T^n = R^n / Z^n`, `n in {1, 2}`, in Fourier coefficients.
//!
//! Constant-coefficient operators are Fourier multipliers and are inverted
//! exactly. Variable coefficients enter through pseudo-spectral products on a
//! zero-padded grid (3/2 rule) and are handled by a contraction iteration
//! around a constant-coefficient operator `a0`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Fourier coefficients `u_k`, `k` in `[-K, K]^n`, each in `C^N`.
///
/// Lattice points are stored row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    dims: usize,
    cutoff: usize,
    components: usize,
    pub coeffs: Vec<DVector<C64>>,
}

impl TorusField {
    pub fn zeros(dims: usize, cutoff: usize, components: usize) -> Result<Self> {
        if !(dims == 1 || dims == 2) {
            return Err(Error::InvalidInput(format!("torus dimension must be 1 or 2, got {dims}")));
        }
        if components == 0 {
            return Err(Error::InvalidInput("torus fields need at least one component".into()));
        }
        let side = 2 * cutoff + 1;
        Ok(TorusField {
            dims,
            cutoff,
            components,
            coeffs: vec![DVector::zeros(components); side.pow(dims as u32)],
        })
    }

    pub fn from_coeffs(dims: usize, cutoff: usize, coeffs: Vec<DVector<C64>>) -> Result<Self> {
        let components = coeffs.first().map_or(0, |c| c.len());
        let mut field = Self::zeros(dims, cutoff, components.max(1))?;
        if coeffs.len() != field.coeffs.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} lattice points, got {}",
                field.coeffs.len(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| c.len() != components) {
            return Err(Error::InvalidInput("all lattice points need the same component count".into()));
        }
        if coeffs.iter().flatten().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::InvalidInput("coefficients must be finite".into()));
        }
        field.coeffs = coeffs;
        Ok(field)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn lattice(&self) -> Vec<Vec<i64>> {
        lattice(self.dims, self.cutoff)
    }

    /// Storage index of lattice point `k`, if inside the cutoff.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let c = self.cutoff as i64;
        if k.len() != self.dims || k.iter().any(|&v| v.abs() > c) {
            return None;
        }
        let side = 2 * c + 1;
        Some(k.iter().fold(0, |acc, &v| acc * side + (v + c)) as usize)
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt()
    }

    /// `(sum (1 + 4 pi^2 |k|^2) |u_k|^2)^{1/2}`
    pub fn h1_norm(&self) -> f64 {
        self.lattice()
            .iter()
            .zip(&self.coeffs)
            .map(|(k, c)| (1.0 + 4.0 * PI * PI * k_sq(k)) * c.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// `max |u_{-k} - conj(u_k)|`; zero for the spectrum of a real field.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let lat = self.lattice();
        let mut worst = 0.0_f64;
        for (k, c) in lat.iter().zip(&self.coeffs) {
            let neg: Vec<i64> = k.iter().map(|v| -v).collect();
            let j = self.index_of(&neg).expect("lattice is symmetric");
            worst = worst.max((&self.coeffs[j] - c.map(|z| z.conj())).camax());
        }
        worst
    }

    pub fn sub(&self, other: &TorusField) -> TorusField {
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a -= b;
        }
        out
    }

    fn same_shape(&self, other: &TorusField) -> bool {
        self.dims == other.dims && self.cutoff == other.cutoff && self.components == other.components
    }
}

fn k_sq(k: &[i64]) -> f64 {
    k.iter().map(|&v| (v * v) as f64).sum()
}

fn lattice(dims: usize, cutoff: usize) -> Vec<Vec<i64>> {
    let c = cutoff as i64;
    match dims {
        1 => (-c..=c).map(|k| vec![k]).collect(),
        _ => (-c..=c).flat_map(|a| (-c..=c).map(move |b| vec![a, b])).collect(),
    }
}

/// `eta` such that `eta^2 |xi|^2 |V|^2 <= |xi_j a^j V|^2 <= eta^{-2} |xi|^2 |V|^2`.
///
/// For `n = 2` the unit circle is sampled at 512 equally spaced angles and
/// the worst sample is refined by golden-section search.
pub fn ellipticity_constant(a: &[DMatrix<f64>]) -> Result<f64> {
    let n = a.first().map_or(0, |m| m.nrows());
    if a.is_empty() || a.len() > 2 {
        return Err(Error::InvalidInput(format!("need 1 or 2 coefficient matrices, got {}", a.len())));
    }
    if n == 0 || a.iter().any(|m| m.shape() != (n, n)) {
        return Err(Error::InvalidInput("coefficient matrices must be square and of equal size".into()));
    }
    if a.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("coefficient matrices must be finite".into()));
    }
    let at = |theta: f64| -> f64 {
        let m = if a.len() == 1 {
            a[0].clone()
        } else {
            &a[0] * theta.cos() + &a[1] * theta.sin()
        };
        let sv = m.singular_values();
        let smin = sv.min();
        let smax = sv.max();
        if smax == 0.0 {
            0.0
        } else {
            smin.min(1.0 / smax)
        }
    };
    let eta = if a.len() == 1 {
        // xi = -1 gives the same singular values as xi = 1
        at(0.0)
    } else {
        const SAMPLES: usize = 512;
        let step = 2.0 * PI / SAMPLES as f64;
        let (best, value) = (0..SAMPLES)
            .map(|j| (j, at(j as f64 * step)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("non-empty");
        let (mut lo, mut hi) = ((best as f64 - 1.0) * step, (best as f64 + 1.0) * step);
        let g = 0.5 * (5.0_f64.sqrt() - 1.0);
        for _ in 0..60 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if at(m1) < at(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        value.min(at(0.5 * (lo + hi)))
    };
    if eta <= 1e-12 {
        return Err(Error::Degenerate { eta });
    }
    Ok(eta)
}

/// Constant coefficients `a0^j` with their ellipticity constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantOperator {
    pub a0: Vec<DMatrix<f64>>,
    pub eta: f64,
}

impl ConstantOperator {
    pub fn new(a0: Vec<DMatrix<f64>>) -> Result<Self> {
        let eta = ellipticity_constant(&a0)?;
        Ok(ConstantOperator { a0, eta })
    }

    pub fn dims(&self) -> usize {
        self.a0.len()
    }

    pub fn components(&self) -> usize {
        self.a0[0].nrows()
    }

    /// The shift `lambda = pi eta`.
    pub fn shift(&self) -> f64 {
        PI * self.eta
    }

    /// `2 pi i k_j a0^j + pi eta`.
    pub fn symbol(&self, k: &[i64]) -> DMatrix<C64> {
        let n = self.components();
        let mut s = DMatrix::from_diagonal_element(n, n, C64::new(self.shift(), 0.0));
        for (kj, aj) in k.iter().zip(&self.a0) {
            let scale = 2.0 * PI * *kj as f64;
            s += aj.map(|v| C64::new(0.0, scale * v));
        }
        s
    }

    /// Applies `L0 + pi eta` to a field.
    pub fn apply(&self, u: &TorusField) -> TorusField {
        let mut out = u.clone();
        for (k, c) in u.lattice().iter().zip(out.coeffs.iter_mut()) {
            *c = self.symbol(k) * &*c;
        }
        out
    }

    fn check(&self, f: &TorusField) -> Result<()> {
        if f.dims() != self.dims() || f.components() != self.components() {
            return Err(Error::InvalidInput(format!(
                "field is {}-dimensional with {} components, operator expects {} and {}",
                f.dims(),
                f.components(),
                self.dims(),
                self.components()
            )));
        }
        Ok(())
    }
}

/// Per-lattice-point data from [`invert_constant`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolCertificate {
    pub k: Vec<i64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `pi eta |2|k| - 1|`
    pub lower_bound: f64,
}

impl SymbolCertificate {
    pub fn condition(&self) -> f64 {
        self.sigma_max / self.sigma_min
    }
}

#[derive(Debug, Clone)]
pub struct ConstantSolution {
    pub u: TorusField,
    pub certificates: Vec<SymbolCertificate>,
}

impl ConstantSolution {
    /// `sqrt(5) / eta`
    pub fn estimate_constant(eta: f64) -> f64 {
        5.0_f64.sqrt() / eta
    }
}

/// Solves `(L0 + pi eta) u = f` lattice point by lattice point.
pub fn invert_constant(f: &TorusField, op: &ConstantOperator) -> Result<ConstantSolution> {
    op.check(f)?;
    let lat = f.lattice();
    let results: Vec<(DVector<C64>, SymbolCertificate)> = lat
        .par_iter()
        .zip(f.coeffs.par_iter())
        .map(|(k, fk)| {
            let s = op.symbol(k);
            let sv = s.clone().singular_values();
            let (sigma_min, sigma_max) = (sv.min(), sv.max());
            if !(sigma_min > 1e-14 * sigma_max.max(1.0)) {
                return Err(Error::SingularSymbol { k: k.clone() });
            }
            let u = s.lu().solve(fk).ok_or_else(|| Error::SingularSymbol { k: k.clone() })?;
            let kk = k_sq(k).sqrt();
            Ok((
                u,
                SymbolCertificate {
                    k: k.clone(),
                    sigma_min,
                    sigma_max,
                    lower_bound: op.shift() * (2.0 * kk - 1.0).abs(),
                },
            ))
        })
        .collect::<Result<_>>()?;
    let (coeffs, certificates): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut u = f.clone();
    u.coeffs = coeffs;
    Ok(ConstantSolution { u, certificates })
}

/// One real Fourier term `cos(2 pi k.x) c + sin(2 pi k.x) s` of a matrix field.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTerm {
    pub k: Vec<i64>,
    pub cos: DMatrix<f64>,
    pub sin: DMatrix<f64>,
}

/// A real matrix-valued function on the torus given by finitely many Fourier terms.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField {
    pub constant: DMatrix<f64>,
    pub terms: Vec<FourierTerm>,
}

impl MatrixField {
    pub fn constant(m: DMatrix<f64>) -> Self {
        MatrixField {
            constant: m,
            terms: Vec::new(),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(DMatrix::zeros(n, n))
    }

    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for t in &self.terms {
            let phase = 2.0 * PI * t.k.iter().zip(x).map(|(k, x)| *k as f64 * x).sum::<f64>();
            m += &t.cos * phase.cos() + &t.sin * phase.sin();
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        self.constant.iter().all(|&v| v == 0.0)
            && self.terms.iter().all(|t| t.cos.iter().chain(t.sin.iter()).all(|&v| v == 0.0))
    }

    pub fn scaled(&self, c: f64) -> Self {
        MatrixField {
            constant: &self.constant * c,
            terms: self
                .terms
                .iter()
                .map(|t| FourierTerm {
                    k: t.k.clone(),
                    cos: &t.cos * c,
                    sin: &t.sin * c,
                })
                .collect(),
        }
    }

    /// `self - m` with `m` constant.
    pub fn minus_constant(&self, m: &DMatrix<f64>) -> Self {
        let mut out = self.clone();
        out.constant -= m;
        out
    }

    fn validate(&self, n: usize, dims: usize) -> Result<()> {
        let ok = |m: &DMatrix<f64>| m.shape() == (n, n) && m.iter().all(|v| v.is_finite());
        if !ok(&self.constant) || self.terms.iter().any(|t| !ok(&t.cos) || !ok(&t.sin) || t.k.len() != dims) {
            return Err(Error::InvalidInput(format!(
                "coefficient field terms must be finite {n}x{n} matrices on a {dims}-torus"
            )));
        }
        Ok(())
    }

    fn max_frequency(&self) -> usize {
        self.terms
            .iter()
            .flat_map(|t| t.k.iter())
            .map(|k| k.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }
}

/// Variable coefficients `a^j(x)` and `b(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableCoefficients {
    pub a: Vec<MatrixField>,
    pub b: MatrixField,
}

/// Zero-padded physical grid with `side` points per axis and cached FFT plans.
struct Spectral {
    dims: usize,
    side: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Spectral {
    fn new(dims: usize, cutoff: usize) -> Self {
        // products of two cutoff-K fields alias only beyond 3K + 1
        let side = (3 * cutoff + 2).max(4);
        let mut planner = FftPlanner::new();
        Spectral {
            dims,
            side,
            forward: planner.plan_fft_forward(side),
            inverse: planner.plan_fft_inverse(side),
        }
    }

    fn points(&self) -> usize {
        self.side.pow(self.dims as u32)
    }

    fn grid_point(&self, idx: usize) -> Vec<f64> {
        let h = 1.0 / self.side as f64;
        if self.dims == 1 {
            vec![idx as f64 * h]
        } else {
            vec![(idx / self.side) as f64 * h, (idx % self.side) as f64 * h]
        }
    }

    fn wrap(&self, k: i64) -> usize {
        k.rem_euclid(self.side as i64) as usize
    }

    fn slot(&self, k: &[i64]) -> usize {
        k.iter().fold(0, |acc, &v| acc * self.side + self.wrap(v))
    }

    fn transform(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let s = self.side;
        if self.dims == 1 {
            plan.process(data);
            return;
        }
        for row in data.chunks_mut(s) {
            plan.process(row);
        }
        let mut col = vec![C64::new(0.0, 0.0); s];
        for j in 0..s {
            for i in 0..s {
                col[i] = data[i * s + j];
            }
            plan.process(&mut col);
            for i in 0..s {
                data[i * s + j] = col[i];
            }
        }
    }

    /// Coefficients to unitary-scaled grid values `u(x_j) / sqrt(points)`.
    fn to_grid(&self, lat: &[Vec<i64>], coeffs: &[DVector<C64>], comps: usize) -> Vec<Vec<C64>> {
        let scale = 1.0 / (self.points() as f64).sqrt();
        (0..comps)
            .map(|c| {
                let mut data = vec![C64::new(0.0, 0.0); self.points()];
                for (k, v) in lat.iter().zip(coeffs) {
                    data[self.slot(k)] = v[c] * scale;
                }
                self.transform(&mut data, &self.inverse);
                data
            })
            .collect()
    }

    /// Adjoint of [`Spectral::to_grid`]: forward transform and truncation.
    fn from_grid(&self, lat: &[Vec<i64>], grid: &[Vec<C64>]) -> Vec<DVector<C64>> {
        let scale = 1.0 / (self.points() as f64).sqrt();
        let transformed: Vec<Vec<C64>> = grid
            .iter()
            .map(|g| {
                let mut data = g.clone();
                self.transform(&mut data, &self.forward);
                data
            })
            .collect();
        lat.iter()
            .map(|k| {
                let s = self.slot(k);
                DVector::from_iterator(transformed.len(), transformed.iter().map(|d| d[s] * scale))
            })
            .collect()
    }
}

/// Pseudo-spectral operator `B u = sum_j m_j(x) d_j u + m_b(x) u`.
struct PseudoOperator {
    spectral: Spectral,
    lattice: Vec<Vec<i64>>,
    comps: usize,
    /// Sampled `m_j` at every padded grid point; empty when `m_j = 0`.
    derivative_fields: Vec<Vec<DMatrix<f64>>>,
    zero_field: Option<Vec<DMatrix<f64>>>,
}

impl PseudoOperator {
    fn new(dims: usize, cutoff: usize, comps: usize, derivative: &[MatrixField], zero: &MatrixField) -> Self {
        let spectral = Spectral::new(dims, cutoff);
        let sample = |m: &MatrixField| -> Vec<DMatrix<f64>> {
            (0..spectral.points()).map(|i| m.eval(&spectral.grid_point(i))).collect()
        };
        let derivative_fields = derivative
            .iter()
            .map(|m| if m.is_zero() { Vec::new() } else { sample(m) })
            .collect();
        let zero_field = (!zero.is_zero()).then(|| sample(zero));
        PseudoOperator {
            lattice: lattice(dims, cutoff),
            spectral,
            comps,
            derivative_fields,
            zero_field,
        }
    }

    fn is_zero(&self) -> bool {
        self.zero_field.is_none() && self.derivative_fields.iter().all(|f| f.is_empty())
    }

    fn multiply(&self, field: &[DMatrix<f64>], grid: &[Vec<C64>], transpose: bool, acc: &mut [Vec<C64>]) {
        for (i, m) in field.iter().enumerate() {
            for r in 0..self.comps {
                let mut s = C64::new(0.0, 0.0);
                for c in 0..self.comps {
                    let w = if transpose { m[(c, r)] } else { m[(r, c)] };
                    s += grid[c][i] * w;
                }
                acc[r][i] += s;
            }
        }
    }

    fn derivative(&self, coeffs: &[DVector<C64>], axis: usize, sign: f64) -> Vec<DVector<C64>> {
        self.lattice
            .iter()
            .zip(coeffs)
            .map(|(k, v)| v * C64::new(0.0, sign * 2.0 * PI * k[axis] as f64))
            .collect()
    }

    fn apply(&self, u: &[DVector<C64>]) -> Vec<DVector<C64>> {
        let n = self.spectral.points();
        let mut acc = vec![vec![C64::new(0.0, 0.0); n]; self.comps];
        for (axis, field) in self.derivative_fields.iter().enumerate() {
            if field.is_empty() {
                continue;
            }
            let du = self.derivative(u, axis, 1.0);
            let grid = self.spectral.to_grid(&self.lattice, &du, self.comps);
            self.multiply(field, &grid, false, &mut acc);
        }
        if let Some(field) = &self.zero_field {
            let grid = self.spectral.to_grid(&self.lattice, u, self.comps);
            self.multiply(field, &grid, false, &mut acc);
        }
        self.spectral.from_grid(&self.lattice, &acc)
    }

    fn apply_adjoint(&self, v: &[DVector<C64>]) -> Vec<DVector<C64>> {
        let n = self.spectral.points();
        let grid = self.spectral.to_grid(&self.lattice, v, self.comps);
        let mut out = vec![DVector::zeros(self.comps); self.lattice.len()];
        for (axis, field) in self.derivative_fields.iter().enumerate() {
            if field.is_empty() {
                continue;
            }
            let mut acc = vec![vec![C64::new(0.0, 0.0); n]; self.comps];
            self.multiply(field, &grid, true, &mut acc);
            let back = self.spectral.from_grid(&self.lattice, &acc);
            for (o, d) in out.iter_mut().zip(self.derivative(&back, axis, -1.0)) {
                *o += d;
            }
        }
        if let Some(field) = &self.zero_field {
            let mut acc = vec![vec![C64::new(0.0, 0.0); n]; self.comps];
            self.multiply(field, &grid, true, &mut acc);
            for (o, d) in out.iter_mut().zip(self.spectral.from_grid(&self.lattice, &acc)) {
                *o += d;
            }
        }
        out
    }

    /// Power-iteration estimate of `||B||` from the weighted space with
    /// weights `w_k` (`||u||^2 = sum w_k |u_k|^2`) to `L^2`.
    fn norm(&self, weights: &[f64], adjoint: bool, seed: u64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let fwd = |x: &[DVector<C64>]| if adjoint { self.apply_adjoint(x) } else { self.apply(x) };
        let bwd = |x: &[DVector<C64>]| if adjoint { self.apply(x) } else { self.apply_adjoint(x) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<DVector<C64>> = (0..self.lattice.len())
            .map(|_| DVector::from_fn(self.comps, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
            .collect();
        let norm = |x: &[DVector<C64>]| x.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        let mut previous = f64::NAN;
        let mut estimate = 0.0;
        for _ in 0..500 {
            let nx = norm(&x);
            for v in x.iter_mut() {
                *v /= C64::new(nx, 0.0);
            }
            // T = B W^{-1/2}, iterate T^* T
            let scaled: Vec<DVector<C64>> = x.iter().zip(weights).map(|(v, w)| v / C64::new(w.sqrt(), 0.0)).collect();
            let tx = fwd(&scaled);
            estimate = norm(&tx);
            if estimate == 0.0 || (estimate - previous).abs() <= 1e-7 * estimate {
                break;
            }
            previous = estimate;
            x = bwd(&tx)
                .into_iter()
                .zip(weights)
                .map(|(v, w)| v / C64::new(w.sqrt(), 0.0))
                .collect();
        }
        estimate * OP_NORM_SAFETY
    }
}

/// Safety factor on power-iteration norm estimates.
pub const OP_NORM_SAFETY: f64 = 1.01;

/// Controls for [`solve_variable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of `b` placed in `B0`; the rest forms the bounded part `B1`.
    pub b0_fraction: f64,
    /// The guard requires `||B0|| + ||B1|| <= (1 - eta_slack) eta / 3`.
    pub eta_slack: f64,
}

impl Default for VariableOptions {
    fn default() -> Self {
        VariableOptions {
            tol: 1e-10,
            max_iter: 200,
            b0_fraction: 0.0,
            eta_slack: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariableSolution {
    pub u: TorusField,
    pub iterations: usize,
    pub step_norms: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    /// Estimated `||B0||_{H^1 -> L^2}`.
    pub b0_norm: f64,
    /// Estimated `||B0^T||_{H^1 -> L^2}`, reported only.
    pub b0_adjoint_norm: f64,
    /// Estimated `||B1||_{L^2 -> L^2}`.
    pub b1_norm: f64,
    pub limit: f64,
    /// `||(L + pi eta) u - f||_{L^2}` of the discrete system.
    pub residual: f64,
    pub h1_norm: f64,
    /// `(sqrt5/eta) ||f|| / (1 - (sqrt5/eta)(||B0|| + ||B1||))`
    pub a_priori_bound: f64,
}

/// Full discrete operator `u -> (L + pi eta) u` with `L = a^j d_j + b`.
pub fn apply_variable(u: &TorusField, coeffs: &VariableCoefficients, op0: &ConstantOperator) -> Result<TorusField> {
    let pert = perturbation(u, coeffs, op0, 1.0)?;
    let mut out = op0.apply(u);
    for (o, p) in out.coeffs.iter_mut().zip(pert.0.apply(&u.coeffs)) {
        *o += p;
    }
    Ok(out)
}

fn perturbation(
    f: &TorusField,
    coeffs: &VariableCoefficients,
    op0: &ConstantOperator,
    b0_fraction: f64,
) -> Result<(PseudoOperator, PseudoOperator)> {
    op0.check(f)?;
    let n = op0.components();
    if coeffs.a.len() != op0.dims() {
        return Err(Error::InvalidInput(format!(
            "need {} principal coefficient fields, got {}",
            op0.dims(),
            coeffs.a.len()
        )));
    }
    for m in coeffs.a.iter().chain(std::iter::once(&coeffs.b)) {
        m.validate(n, op0.dims())?;
    }
    let freq = coeffs.a.iter().chain(std::iter::once(&coeffs.b)).map(|m| m.max_frequency()).max().unwrap_or(0);
    if freq > f.cutoff() {
        return Err(Error::InvalidInput(format!(
            "coefficient frequency {freq} exceeds the field cutoff {}",
            f.cutoff()
        )));
    }
    let diff: Vec<MatrixField> = coeffs.a.iter().zip(&op0.a0).map(|(a, a0)| a.minus_constant(a0)).collect();
    let b0 = PseudoOperator::new(f.dims(), f.cutoff(), n, &diff, &coeffs.b.scaled(b0_fraction));
    let none = vec![MatrixField::zeros(n); op0.dims()];
    let b1 = PseudoOperator::new(f.dims(), f.cutoff(), n, &none, &coeffs.b.scaled(1.0 - b0_fraction));
    Ok((b0, b1))
}

/// Power-iteration estimates (with the safety factor) of the pieces of the perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationNorms {
    /// `||B0||_{H^1 -> L^2}`
    pub b0: f64,
    /// `||B0^T||_{H^1 -> L^2}`
    pub b0_adjoint: f64,
    /// `||B1||_{L^2 -> L^2}`
    pub b1: f64,
}

fn norms(b0: &PseudoOperator, b1: &PseudoOperator, lat: &[Vec<i64>]) -> PerturbationNorms {
    let h1_weights: Vec<f64> = lat.iter().map(|k| 1.0 + 4.0 * PI * PI * k_sq(k)).collect();
    let ones = vec![1.0; lat.len()];
    PerturbationNorms {
        b0: b0.norm(&h1_weights, false, 11),
        b0_adjoint: b0.norm(&h1_weights, true, 12),
        b1: b1.norm(&ones, false, 13),
    }
}

/// Norms of `B0` and `B1` on fields shaped like `f`.
pub fn perturbation_norms(
    f: &TorusField,
    coeffs: &VariableCoefficients,
    op0: &ConstantOperator,
    b0_fraction: f64,
) -> Result<PerturbationNorms> {
    let (b0, b1) = perturbation(f, coeffs, op0, b0_fraction)?;
    Ok(norms(&b0, &b1, &f.lattice()))
}

/// Solves `(a^j d_j + b + pi eta) u = f` by iterating
/// `(L0 + pi eta) u^{k+1} = f - (B0 + B1) u^k`, starting from the
/// constant-coefficient solution.
pub fn solve_variable(
    f: &TorusField,
    coeffs: &VariableCoefficients,
    op0: &ConstantOperator,
    options: &VariableOptions,
) -> Result<VariableSolution> {
    if !(options.tol > 0.0) || !(0.0..=1.0).contains(&options.b0_fraction) || !(0.0..1.0).contains(&options.eta_slack)
    {
        return Err(Error::InvalidInput(
            "need tol > 0, b0_fraction in [0, 1] and eta_slack in [0, 1)".into(),
        ));
    }
    let (b0, b1) = perturbation(f, coeffs, op0, options.b0_fraction)?;
    let lat = f.lattice();
    let PerturbationNorms {
        b0: b0_norm,
        b0_adjoint: b0_adjoint_norm,
        b1: b1_norm,
    } = norms(&b0, &b1, &lat);
    let limit = (1.0 - options.eta_slack) * op0.eta / 3.0;
    let estimate = b0_norm + b1_norm;
    if estimate > limit {
        return Err(Error::PerturbationTooLarge { estimate, limit });
    }
    let gain = ConstantSolution::estimate_constant(op0.eta);
    let a_priori_bound = gain * f.l2_norm() / (1.0 - gain * estimate);

    let apply_b = |u: &[DVector<C64>]| -> Vec<DVector<C64>> {
        let mut out = if b0.is_zero() { vec![DVector::zeros(f.components()); lat.len()] } else { b0.apply(u) };
        if !b1.is_zero() {
            for (o, p) in out.iter_mut().zip(b1.apply(u)) {
                *o += p;
            }
        }
        out
    };
    let zero_b = b0.is_zero() && b1.is_zero();

    let mut u = invert_constant(f, op0)?.u;
    let mut step_norms = vec![u.h1_norm()];
    let mut iterations = 1;
    let mut converged = zero_b;
    while !converged {
        if iterations >= options.max_iter {
            return Err(Error::MaxIterations {
                iterations,
                last_step: *step_norms.last().expect("non-empty"),
            });
        }
        let bu = apply_b(&u.coeffs);
        let mut rhs = f.clone();
        for (r, p) in rhs.coeffs.iter_mut().zip(bu) {
            *r -= p;
        }
        let next = invert_constant(&rhs, op0)?.u;
        let step = next.sub(&u).h1_norm();
        step_norms.push(step);
        iterations += 1;
        u = next;
        converged = step < options.tol;
    }

    let mut lhs = op0.apply(&u);
    if !zero_b {
        for (l, p) in lhs.coeffs.iter_mut().zip(apply_b(&u.coeffs)) {
            *l += p;
        }
    }
    let residual = lhs.sub(f).l2_norm();
    let contraction_ratios = step_norms.windows(2).skip(1).map(|w| w[1] / w[0]).collect();
    Ok(VariableSolution {
        h1_norm: u.h1_norm(),
        u,
        iterations,
        step_norms,
        contraction_ratios,
        b0_norm,
        b0_adjoint_norm,
        b1_norm,
        limit,
        residual,
        a_priori_bound,
    })
}

/// Adjoint consistency `<B u, v> - <u, B^* v>` of the pseudo-spectral
/// perturbation for the given coefficients; used by tests.
pub fn perturbation_adjoint_defect(
    u: &TorusField,
    v: &TorusField,
    coeffs: &VariableCoefficients,
    op0: &ConstantOperator,
) -> Result<f64> {
    if !u.same_shape(v) {
        return Err(Error::InvalidInput("fields differ in shape".into()));
    }
    let (b0, _) = perturbation(u, coeffs, op0, 1.0)?;
    let bu = b0.apply(&u.coeffs);
    let bv = b0.apply_adjoint(&v.coeffs);
    let inner = |x: &[DVector<C64>], y: &[DVector<C64>]| -> C64 { x.iter().zip(y).map(|(a, b)| b.dotc(a)).sum() };
    Ok((inner(&bu, &v.coeffs) - inner(&u.coeffs, &bv)).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn ellipticity_examples() {
        assert!((ellipticity_constant(&[DMatrix::identity(2, 2)]).unwrap() - 1.0).abs() < 1e-15);
        assert!((ellipticity_constant(&[DMatrix::identity(2, 2) * 2.0]).unwrap() - 0.5).abs() < 1e-15);
        let a1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let a2 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((ellipticity_constant(&[a1, a2]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            ellipticity_constant(&[DMatrix::zeros(1, 1)]),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn degenerate_pair_is_detected() {
        // xi.a = diag(xi1, xi2) is singular on the axes
        let a1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let a2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(ellipticity_constant(&[a1, a2]), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn scalar_inverse() {
        let op = ConstantOperator::new(vec![scalar(1.0)]).unwrap();
        let mut f = TorusField::zeros(1, 3, 1).unwrap();
        let i1 = f.index_of(&[1]).unwrap();
        f.coeffs[i1][0] = C64::new(1.0, 0.0);
        let i0 = f.index_of(&[0]).unwrap();
        f.coeffs[i0][0] = C64::new(2.0, 0.0);
        let sol = invert_constant(&f, &op).unwrap();
        let u1 = sol.u.coeffs[i1][0];
        assert!((u1.norm() - 1.0 / (PI * 5.0_f64.sqrt())).abs() < 1e-15);
        assert!((sol.u.coeffs[i0][0] - C64::new(2.0 / PI, 0.0)).norm() < 1e-15);
        let mut g = f.clone();
        g.coeffs[i0][0] = C64::new(0.0, 0.0);
        let u = invert_constant(&g, &op).unwrap().u;
        assert!((u.h1_norm() - (1.0 + 4.0 * PI * PI).sqrt() / (PI * 5.0_f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn pseudo_spectral_adjoint_is_exact() {
        let m = |v: [f64; 4]| DMatrix::from_row_slice(2, 2, &v);
        let op = ConstantOperator::new(vec![m([0.0, 1.0, 1.0, 0.0]), m([1.0, 0.0, 0.0, -1.0])]).unwrap();
        let term = |k: Vec<i64>, c: [f64; 4], s: [f64; 4]| FourierTerm { k, cos: m(c), sin: m(s) };
        let coeffs = VariableCoefficients {
            a: vec![
                MatrixField {
                    constant: m([0.0, 1.0, 1.0, 0.0]),
                    terms: vec![term(vec![1, 0], [0.1, 0.0, 0.0, 0.1], [0.0, 0.05, 0.05, 0.0])],
                },
                MatrixField {
                    constant: m([1.0, 0.0, 0.0, -1.0]),
                    terms: vec![term(vec![0, 2], [0.0; 4], [0.02, 0.0, 0.0, -0.02])],
                },
            ],
            b: MatrixField {
                constant: m([0.3, 0.1, -0.1, 0.3]),
                terms: vec![term(vec![1, 1], [0.2, 0.0, 0.1, 0.0], [0.0; 4])],
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut random = || {
            let mut f = TorusField::zeros(2, 4, 2).unwrap();
            for c in f.coeffs.iter_mut() {
                for z in c.iter_mut() {
                    *z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                }
            }
            f
        };
        let (u, v) = (random(), random());
        assert!(perturbation_adjoint_defect(&u, &v, &coeffs, &op).unwrap() < 1e-12);
    }
}
