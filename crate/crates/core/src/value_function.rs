//! The regularized discretized value function
//!
//! ```text
//! V~(x) = min_{p in simplex} sum_i p_i g(x, y(i)) + (lambda / 2) |p|^2
//! ```
//!
//! whose minimizer is the simplex projection of `-g(x, y(.)) / lambda`, and
//! a brute-force oracle for the true value function `V(x) = min_y g(x, y)`.

use serde::Serialize;

use crate::covering::Covering;
use crate::geometry::{project_simplex, SimplexPoint};
use crate::grid::Lattice;
use crate::linalg::{all_finite, axpy, dot};
use crate::problem::{ProblemSpec, SmoothnessConstants};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueFunctionEval {
    pub x: Vec<f64>,
    /// `g(x, y(i))` for every covering point.
    pub g_values: Vec<f64>,
    pub p_star: SimplexPoint,
    pub v_tilde: f64,
    pub grad: Vec<f64>,
    pub lambda: f64,
}

impl ValueFunctionEval {
    /// `min_i g(x, y(i))`, the unregularized discrete value.
    pub fn v_hat(&self) -> f64 {
        self.g_values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and > 0, got {lambda}")));
    }
    Ok(())
}

pub(crate) fn check_in_x(p: &ProblemSpec, x: &[f64]) -> Result<()> {
    p.x_domain.check_dim(x)?;
    if !all_finite(x) {
        return Err(Error::NonFinite(format!("x = {x:?}")));
    }
    if !p.x_domain.contains(x) {
        return Err(Error::OutsideDomain(format!("x = {x:?} not in the upper-level box")));
    }
    Ok(())
}

pub(crate) fn check_covering(p: &ProblemSpec, c: &Covering) -> Result<()> {
    if c.k() == 0 {
        return Err(Error::InvalidArgument("covering is empty".into()));
    }
    if c.dim() != p.m() {
        return Err(Error::DimensionMismatch {
            expected: p.m(),
            got: c.dim(),
        });
    }
    Ok(())
}

/// Evaluates `V~(x)`, its minimizer `p*` and its gradient
/// `sum_i p*_i grad_x g(x, y(i))`.
pub fn eval_value_function(p: &ProblemSpec, c: &Covering, lambda: f64, x: &[f64]) -> Result<ValueFunctionEval> {
    check_lambda(lambda)?;
    check_in_x(p, x)?;
    check_covering(p, c)?;

    let g_values: Vec<f64> = c.points.iter().map(|y| p.g(x, y)).collect();
    if !all_finite(&g_values) {
        return Err(Error::NonFinite(format!("lower objective over the covering at x = {x:?}")));
    }
    let p_hat: Vec<f64> = g_values.iter().map(|g| -g / lambda).collect();
    let p_star = project_simplex(&p_hat)?;
    let w = p_star.weights();
    let v_tilde = dot(w, &g_values) + 0.5 * lambda * dot(w, w);

    let mut grad = vec![0.0; p.n()];
    for i in p_star.support() {
        grad = axpy(&grad, w[i], &p.lower.grad_x(x, &c.points[i]));
    }
    Ok(ValueFunctionEval {
        x: x.to_vec(),
        g_values,
        p_star,
        v_tilde,
        grad,
        lambda,
    })
}

/// `2 L_g D sqrt(m) / k^(1/m) + lambda / 2`, the covering-count form of the
/// bound on `|V(x) - V~(x)|`.
pub fn approximation_error_bound(constants: &SmoothnessConstants, m: usize, k: usize, lambda: f64) -> f64 {
    let m_f = m as f64;
    2.0 * constants.l_g * constants.d * m_f.sqrt() / (k as f64).powf(1.0 / m_f) + 0.5 * lambda
}

/// `L_g r + lambda / 2`, the same bound expressed with the achieved
/// covering radius `r`.
pub fn approximation_error_bound_from_radius(constants: &SmoothnessConstants, radius: f64, lambda: f64) -> f64 {
    constants.l_g * radius + 0.5 * lambda
}

/// Largest lower-level dimension the grid oracles accept.
pub const ORACLE_MAX_DIM: usize = 3;
/// Smallest grid resolution the value-function oracle accepts.
pub const ORACLE_MIN_GRID: usize = 101;
/// Projected-gradient polish steps applied to each oracle start.
pub const POLISH_STEPS: usize = 20;
/// Number of grid local minima polished by the oracle.
pub const POLISH_STARTS: usize = 8;

/// Grid scan of `g(x, .)` over `Y` with polished local minima.
#[derive(Debug, Clone)]
pub struct LowerLevelScan {
    pub grid_values: Vec<f64>,
    /// Polished local minimizers and their values, ascending by value.
    pub minimizers: Vec<(Vec<f64>, f64)>,
}

impl LowerLevelScan {
    pub fn value(&self) -> f64 {
        self.minimizers[0].1
    }
}

/// Fixed-step projected gradient descent on `g(x, .)` over `Y`, step
/// `1 / lbar_g`. Returns the best point seen.
pub(crate) fn polish_lower(p: &ProblemSpec, x: &[f64], y0: &[f64], steps: usize) -> (Vec<f64>, f64) {
    let step = 1.0 / p.constants.lbar_g;
    let mut y = y0.to_vec();
    let mut best = (y.clone(), p.g(x, &y));
    for _ in 0..steps {
        let grad = p.lower.grad_y(x, &y);
        y = p.y_domain.project(&axpy(&y, -step, &grad)).expect("dimension checked");
        let v = p.g(x, &y);
        if v < best.1 {
            best = (y.clone(), v);
        }
    }
    best
}

pub(crate) fn check_oracle_dims(p: &ProblemSpec, grid_per_dim: usize) -> Result<()> {
    if p.m() > ORACLE_MAX_DIM {
        return Err(Error::OracleDimension {
            dim: p.m(),
            limit: ORACLE_MAX_DIM,
        });
    }
    if grid_per_dim < ORACLE_MIN_GRID {
        return Err(Error::InvalidArgument(format!(
            "oracle grid must have >= {ORACLE_MIN_GRID} points per dimension, got {grid_per_dim}"
        )));
    }
    Ok(())
}

/// Scans `g(x, .)` on `lattice` and polishes the lowest
/// [`POLISH_STARTS`] grid local minima.
pub fn scan_lower_level(p: &ProblemSpec, x: &[f64], lattice: &Lattice) -> Result<LowerLevelScan> {
    let grid_values: Vec<f64> = (0..lattice.len()).map(|i| p.g(x, &lattice.point(i))).collect();
    if !all_finite(&grid_values) {
        return Err(Error::NonFinite(format!("lower objective on the oracle grid at x = {x:?}")));
    }
    let mut local_minima: Vec<usize> = (0..lattice.len())
        .filter(|&i| {
            lattice
                .neighbours(i)
                .iter()
                .all(|&j| grid_values[i] <= grid_values[j])
        })
        .collect();
    local_minima.sort_by(|&a, &b| grid_values[a].total_cmp(&grid_values[b]).then(a.cmp(&b)));
    local_minima.truncate(POLISH_STARTS);

    let mut minimizers: Vec<(Vec<f64>, f64)> = local_minima
        .iter()
        .map(|&i| polish_lower(p, x, &lattice.point(i), POLISH_STEPS))
        .collect();
    minimizers.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(LowerLevelScan {
        grid_values,
        minimizers,
    })
}

/// Brute-force `V(x) = min_{y in Y} g(x, y)`: uniform grid minimum refined
/// by [`POLISH_STEPS`] projected-gradient steps. Verification oracle for
/// `m <= 3`.
pub fn oracle_true_value(p: &ProblemSpec, x: &[f64], grid_per_dim: usize) -> Result<f64> {
    check_oracle_dims(p, grid_per_dim)?;
    p.x_domain.check_dim(x)?;
    let lattice = p.y_domain.lattice(grid_per_dim);
    Ok(scan_lower_level(p, x, &lattice)?.value())
}
