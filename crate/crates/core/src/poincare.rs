//! Sharp constants of the weighted Poincare inequalities, computed as the
//! smallest eigenvalue of one-dimensional Rayleigh quotients.
//!
//! * Hardy: `inf int v'^2 r^{n-1} dr / int v^2 r^{n-3} dr` on `[r0, R]`,
//!   with floor `(n-2)^2 / 4`.
//! * McKean: `inf int (x f')^2 x^{-n} dx / int f^2 x^{-n} dx` on `[eps, x0]`,
//!   with floor `(n-1)^2 / 4`.
//!
//! Both are discretized with piecewise-linear elements on a log-spaced grid;
//! the smallest eigenvalue of the tridiagonal pencil is found by bisection on
//! its Sylvester inertia.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::tridiagonal_pencil_count_below;

pub const MIN_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayleighKind {
    Hardy,
    Mckean,
}

/// Boundary treatment at one end of the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndCondition {
    Dirichlet,
    /// No constraint; the natural condition of the quadratic form.
    Natural,
    /// McKean outer end only: the natural condition of the form with the
    /// boundary term `-c x0^{1-n} f(x0)^2`, `c = (n-1)/2`, added. After the
    /// substitution `f = x^c phi(ln x)` this is `phi' = 0`.
    LogNeumann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighProblem {
    pub kind: RayleighKind,
    pub n: u32,
    pub inner: f64,
    pub outer: f64,
    /// Number of grid cells.
    pub points: usize,
    pub inner_bc: EndCondition,
    pub outer_bc: EndCondition,
}

impl RayleighProblem {
    /// Hardy problem on `[1, e^L]`, Dirichlet at both ends.
    pub fn hardy(n: u32, log_ratio: f64, points: usize) -> Self {
        RayleighProblem {
            kind: RayleighKind::Hardy,
            n,
            inner: 1.0,
            outer: log_ratio.exp(),
            points,
            inner_bc: EndCondition::Dirichlet,
            outer_bc: EndCondition::Dirichlet,
        }
    }

    /// McKean problem on `[e^{-L}, 1]`, Dirichlet inside, log-Neumann outside.
    pub fn mckean(n: u32, log_ratio: f64, points: usize) -> Self {
        RayleighProblem {
            kind: RayleighKind::Mckean,
            n,
            inner: (-log_ratio).exp(),
            outer: 1.0,
            points,
            inner_bc: EndCondition::Dirichlet,
            outer_bc: EndCondition::LogNeumann,
        }
    }

    pub fn log_length(&self) -> f64 {
        (self.outer / self.inner).ln()
    }

    fn validate(&self) -> Result<()> {
        if !(self.inner.is_finite() && self.inner > 0.0 && self.outer.is_finite() && self.outer > self.inner) {
            return Err(Error::InvalidInput(format!(
                "need 0 < inner < outer, got [{}, {}]",
                self.inner, self.outer
            )));
        }
        if self.points < MIN_POINTS {
            return Err(Error::GridTooCoarse {
                points: self.points,
                minimum: MIN_POINTS,
            });
        }
        match self.kind {
            RayleighKind::Hardy => {
                if self.n < 3 {
                    return Err(Error::InvalidInput(format!("Hardy problem needs n >= 3, got {}", self.n)));
                }
                if self.inner_bc != EndCondition::Dirichlet || self.outer_bc != EndCondition::Dirichlet {
                    return Err(Error::InvalidInput("Hardy problem needs Dirichlet conditions at both ends".into()));
                }
            }
            RayleighKind::Mckean => {
                if self.n < 2 {
                    return Err(Error::InvalidInput(format!("McKean problem needs n >= 2, got {}", self.n)));
                }
                if self.inner_bc != EndCondition::Dirichlet {
                    return Err(Error::InvalidInput("McKean problem needs f = 0 at the inner end".into()));
                }
            }
        }
        Ok(())
    }

    fn weights(&self, r: f64) -> (f64, f64) {
        let n = self.n as i32;
        match self.kind {
            RayleighKind::Hardy => (r.powi(n - 1), r.powi(n - 3)),
            RayleighKind::Mckean => (r.powi(2 - n), r.powi(-n)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayleighResult {
    pub minimum: f64,
    /// The sharp constant the minimum approaches on long domains.
    pub floor: f64,
    /// Continuum minimum on this domain.
    pub oracle: f64,
    pub bisection_steps: usize,
}

impl RayleighResult {
    pub fn relative_gap(&self) -> f64 {
        (self.minimum - self.oracle).abs() / self.oracle
    }
}

const GAUSS_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Stiffness and mass tridiagonals `(k_diag, k_off, m_diag, m_off)` on the free nodes.
type Pencil = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

fn assemble(p: &RayleighProblem) -> Pencil {
    let m = p.points;
    let step = p.log_length() / m as f64;
    let nodes: Vec<f64> = (0..=m)
        .map(|i| if i == m { p.outer } else { p.inner * (i as f64 * step).exp() })
        .collect();
    let mut kd = vec![0.0; m + 1];
    let mut ko = vec![0.0; m];
    let mut md = vec![0.0; m + 1];
    let mut mo = vec![0.0; m];
    for e in 0..m {
        let (a, b) = (nodes[e], nodes[e + 1]);
        let len = b - a;
        let (mut sk, mut m00, mut m01, mut m11) = (0.0, 0.0, 0.0, 0.0);
        for (t, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
            let r = a + 0.5 * len * (1.0 + t);
            let jac = 0.5 * len * w;
            let (wk, wm) = p.weights(r);
            let right = (r - a) / len;
            let left = 1.0 - right;
            sk += wk * jac;
            m00 += wm * left * left * jac;
            m01 += wm * left * right * jac;
            m11 += wm * right * right * jac;
        }
        let s = sk / (len * len);
        kd[e] += s;
        kd[e + 1] += s;
        ko[e] -= s;
        md[e] += m00;
        md[e + 1] += m11;
        mo[e] += m01;
    }
    if p.outer_bc == EndCondition::LogNeumann {
        let c = 0.5 * (p.n as f64 - 1.0);
        kd[m] -= c * p.outer.powi(1 - p.n as i32);
    }
    let lo = usize::from(p.inner_bc == EndCondition::Dirichlet);
    let hi = if p.outer_bc == EndCondition::Dirichlet { m } else { m + 1 };
    (
        kd[lo..hi].to_vec(),
        ko[lo..hi - 1].to_vec(),
        md[lo..hi].to_vec(),
        mo[lo..hi - 1].to_vec(),
    )
}

fn smallest_eigenvalue(pencil: &Pencil) -> (f64, usize) {
    let (kd, ko, md, mo) = pencil;
    let count = |s: f64| tridiagonal_pencil_count_below(kd, ko, md, mo, s);
    let mut lo = 0.0;
    let mut width = 1.0;
    while count(lo) > 0 {
        lo -= width;
        width *= 2.0;
    }
    let mut hi = 1.0_f64.max(lo + 1.0);
    while count(hi) == 0 {
        hi = hi * 2.0 + 1.0;
    }
    let mut steps = 0;
    while hi - lo > 1e-13 * hi.abs().max(1e-300) && steps < 200 {
        let mid = 0.5 * (lo + hi);
        if count(mid) > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
        steps += 1;
    }
    (0.5 * (lo + hi), steps)
}

/// Continuum minimum of the problem on its domain.
pub fn rayleigh_oracle(p: &RayleighProblem) -> f64 {
    let l = p.log_length();
    match p.kind {
        RayleighKind::Hardy => {
            let c = 0.5 * (p.n as f64 - 2.0);
            c * c + (std::f64::consts::PI / l).powi(2)
        }
        RayleighKind::Mckean => {
            let c = 0.5 * (p.n as f64 - 1.0);
            let s = match p.outer_bc {
                EndCondition::Dirichlet => std::f64::consts::PI / l,
                EndCondition::LogNeumann => std::f64::consts::PI / (2.0 * l),
                EndCondition::Natural => robin_root(c, l),
            };
            c * c + s * s
        }
    }
}

/// Smallest `s > 0` with `s cos(s L) + c sin(s L) = 0`, i.e. `tan(sL) = -s/c`.
fn robin_root(c: f64, l: f64) -> f64 {
    let g = |s: f64| s * (s * l).cos() + c * (s * l).sin();
    let half = std::f64::consts::PI / (2.0 * l);
    let (mut lo, mut hi) = (half, 2.0 * half);
    if c == 0.0 {
        return half;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(lo).signum() == g(mid).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn rayleigh_min(p: &RayleighProblem, kind: RayleighKind) -> Result<RayleighResult> {
    if p.kind != kind {
        return Err(Error::InvalidInput(format!("expected a {kind:?} problem, got {:?}", p.kind)));
    }
    p.validate()?;
    let (minimum, bisection_steps) = smallest_eigenvalue(&assemble(p));
    Ok(RayleighResult {
        minimum,
        floor: weight_floor(p.kind, p.n).coefficient,
        oracle: rayleigh_oracle(p),
        bisection_steps,
    })
}

pub fn hardy_rayleigh_min(p: &RayleighProblem) -> Result<RayleighResult> {
    rayleigh_min(p, RayleighKind::Hardy)
}

pub fn mckean_rayleigh_min(p: &RayleighProblem) -> Result<RayleighResult> {
    rayleigh_min(p, RayleighKind::Mckean)
}

/// The weight `coefficient * r^power` of the inequality `int w u^2 <= int |grad u|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightFloor {
    pub coefficient: f64,
    pub power: i32,
}

impl WeightFloor {
    pub fn eval(&self, r: f64) -> f64 {
        self.coefficient * r.powi(self.power)
    }
}

pub fn weight_floor(kind: RayleighKind, n: u32) -> WeightFloor {
    let n = n as f64;
    match kind {
        RayleighKind::Hardy => WeightFloor {
            coefficient: (n - 2.0).powi(2) / 4.0,
            power: -2,
        },
        RayleighKind::Mckean => WeightFloor {
            coefficient: (n - 1.0).powi(2) / 4.0,
            power: 0,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn floors() {
        assert_eq!(weight_floor(RayleighKind::Mckean, 3).coefficient, 1.0);
        assert_eq!(weight_floor(RayleighKind::Mckean, 2).coefficient, 0.25);
        assert_eq!(weight_floor(RayleighKind::Hardy, 3).coefficient, 0.25);
        assert_eq!(weight_floor(RayleighKind::Hardy, 3).eval(2.0), 0.0625);
    }

    #[test]
    fn hardy_small_grid_is_close() {
        let r = hardy_rayleigh_min(&RayleighProblem::hardy(3, 2.0 * PI, 512)).unwrap();
        assert!((r.oracle - 0.5).abs() < 1e-15);
        assert!(r.minimum > 0.25);
        assert!(r.relative_gap() < 0.01, "{r:?}");
    }

    #[test]
    fn natural_end_matches_robin_root() {
        let mut p = RayleighProblem::mckean(3, PI, 1024);
        p.outer_bc = EndCondition::Natural;
        let r = mckean_rayleigh_min(&p).unwrap();
        assert!(r.oracle > 1.25);
        assert!(r.relative_gap() < 1e-3, "{r:?}");
    }

    #[test]
    fn coarse_grid_and_bad_flags_are_rejected() {
        assert!(matches!(
            hardy_rayleigh_min(&RayleighProblem::hardy(3, 1.0, 8)),
            Err(Error::GridTooCoarse { .. })
        ));
        let mut p = RayleighProblem::mckean(3, PI, 64);
        p.inner_bc = EndCondition::Natural;
        assert!(mckean_rayleigh_min(&p).is_err());
        assert!(hardy_rayleigh_min(&RayleighProblem::hardy(2, 1.0, 64)).is_err());
    }

    #[test]
    fn bisection_matches_dense_solver() {
        let p = RayleighProblem::hardy(4, 1.5, 24);
        let (kd, ko, md, mo) = assemble(&p);
        let n = kd.len();
        let mut k = nalgebra::DMatrix::zeros(n, n);
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = kd[i];
            m[(i, i)] = md[i];
            if i + 1 < n {
                k[(i, i + 1)] = ko[i];
                k[(i + 1, i)] = ko[i];
                m[(i, i + 1)] = mo[i];
                m[(i + 1, i)] = mo[i];
            }
        }
        let l = m.cholesky().unwrap().l();
        let li = l.try_inverse().unwrap();
        let s = &li * k * li.transpose();
        let dense = ((&s + s.transpose()) * 0.5).symmetric_eigen().eigenvalues.min();
        let (bisect, _) = smallest_eigenvalue(&assemble(&p));
        assert!((dense - bisect).abs() < 1e-10 * dense);
    }
}
