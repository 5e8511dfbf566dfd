//! Reference bilevel methods that work directly on `(x, y)`.
//!
//! - TTSA: two-timescale projected steps, `y` along `-grad_y g` with
//!   `eta1 / t^(3/5)` and `x` along an implicit hypergradient with
//!   `eta2 / t^(2/5)`. Full gradients, no sampling noise.
//! - V-PBGD: penalty `f + gamma (g(x, y) - g(x, theta))`, where `theta` tracks
//!   the lower-level minimizer by a warm-started inner projected gradient
//!   loop with step `eta2`; the outer step on `(x, y)` uses `eta1`.
//!
//! Both are local methods: on a non-convex lower level they can settle in a
//! non-global lower-level minimum.

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{all_finite, axpy, dot, solve_dense, sub};
use crate::problem::ProblemSpec;
use crate::solver::{uniform_in_box, IterationTrace, TerminalStatus, TraceRow};
use crate::value_function::check_in_x;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineAlgorithm {
    Ttsa,
    Vpbgd,
}

impl fmt::Display for BaselineAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineAlgorithm::Ttsa => "ttsa",
            BaselineAlgorithm::Vpbgd => "vpbgd",
        })
    }
}

fn default_inner_iters() -> usize {
    10
}

fn default_max_iters() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub algorithm: BaselineAlgorithm,
    /// TTSA: `y` step scale. V-PBGD: outer step on `(x, y)`.
    pub eta1: f64,
    /// TTSA: `x` step scale. V-PBGD: inner step on `theta`.
    pub eta2: f64,
    /// Penalty (V-PBGD only).
    #[serde(default)]
    pub gamma: f64,
    /// Inner steps per outer iteration (V-PBGD only).
    #[serde(default = "default_inner_iters")]
    pub inner_iters: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record_wallclock: bool,
}

impl BaselineConfig {
    pub fn ttsa(eta1: f64, eta2: f64) -> Self {
        Self {
            algorithm: BaselineAlgorithm::Ttsa,
            eta1,
            eta2,
            gamma: 0.0,
            inner_iters: default_inner_iters(),
            max_iters: default_max_iters(),
            seed: 0,
            record_wallclock: false,
        }
    }

    pub fn vpbgd(gamma: f64, outer_step: f64, inner_step: f64) -> Self {
        Self {
            algorithm: BaselineAlgorithm::Vpbgd,
            gamma,
            eta1: outer_step,
            eta2: inner_step,
            ..Self::ttsa(outer_step, inner_step)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if self.inner_iters == 0 {
            return Err(Error::InvalidArgument("inner_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// TTSA step sizes at iteration `t >= 1`: `(eta1 / t^(3/5), eta2 / t^(2/5))`
/// for the `y` and `x` updates.
pub fn ttsa_schedules(eta1: f64, eta2: f64, t: usize) -> (f64, f64) {
    let t = t as f64;
    (eta1 / t.powf(0.6), eta2 / t.powf(0.4))
}

/// Seeded initialization: `x0` and `y0` uniform over their boxes.
pub fn baseline_initial_point(p: &ProblemSpec, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = uniform_in_box(&mut rng, p.x_domain.lower(), p.x_domain.upper());
    let y0 = uniform_in_box(&mut rng, p.y_domain.lower(), p.y_domain.upper());
    (x0, y0)
}

/// Step of the central differences used for second derivatives of `g`.
const HESSIAN_STEP: f64 = 1e-5;
/// Pivots of `grad_yy g` at or below this magnitude drop the implicit
/// correction.
pub const CURVATURE_GUARD: f64 = 1e-6;

/// Implicit hypergradient
/// `grad_x f - grad_xy g [grad_yy g]^{-1} grad_y f`, with both second
/// derivatives of `g` from central differences of its analytic gradients.
/// The correction is dropped when `grad_yy g` is numerically singular.
pub fn hypergradient(p: &ProblemSpec, x: &[f64], y: &[f64]) -> Vec<f64> {
    let (n, m) = (p.n(), p.m());
    let fx = p.upper.grad_x(x, y);
    let fy = p.upper.grad_y(x, y);

    // cross[i][j] = d^2 g / dx_i dy_j
    let mut cross = vec![vec![0.0; m]; n];
    let mut xs = x.to_vec();
    for i in 0..n {
        xs[i] = x[i] + HESSIAN_STEP;
        let plus = p.lower.grad_y(&xs, y);
        xs[i] = x[i] - HESSIAN_STEP;
        let minus = p.lower.grad_y(&xs, y);
        xs[i] = x[i];
        for j in 0..m {
            cross[i][j] = (plus[j] - minus[j]) / (2.0 * HESSIAN_STEP);
        }
    }
    if cross.iter().flatten().all(|v| *v == 0.0) {
        return fx;
    }

    let mut hess = vec![vec![0.0; m]; m];
    let mut ys = y.to_vec();
    for i in 0..m {
        ys[i] = y[i] + HESSIAN_STEP;
        let plus = p.lower.grad_y(x, &ys);
        ys[i] = y[i] - HESSIAN_STEP;
        let minus = p.lower.grad_y(x, &ys);
        ys[i] = y[i];
        for j in 0..m {
            hess[i][j] = (plus[j] - minus[j]) / (2.0 * HESSIAN_STEP);
        }
    }
    // symmetrize
    for i in 0..m {
        for j in 0..i {
            let s = 0.5 * (hess[i][j] + hess[j][i]);
            hess[i][j] = s;
            hess[j][i] = s;
        }
    }
    match solve_dense(hess, fy, CURVATURE_GUARD) {
        Some(v) => fx
            .iter()
            .zip(&cross)
            .map(|(fxi, row)| fxi - dot(row, &v))
            .collect(),
        None => fx,
    }
}

fn check_start(p: &ProblemSpec, x0: &[f64], y0: &[f64]) -> Result<()> {
    check_in_x(p, x0)?;
    p.y_domain.check_dim(y0)?;
    if !all_finite(y0) || !p.y_domain.contains(y0) {
        return Err(Error::OutsideDomain(format!("y0 = {y0:?} not in the lower-level box")));
    }
    Ok(())
}

fn check_iterate(algorithm: BaselineAlgorithm, t: usize, x: &[f64], y: &[f64], f: f64) -> Result<()> {
    if !all_finite(x) || !all_finite(y) || !f.is_finite() {
        return Err(Error::NonFinite(format!(
            "{algorithm} iterate at t = {t}: x = {x:?}, y = {y:?}, f = {f}"
        )));
    }
    Ok(())
}

fn displacement(dx: &[f64], sx: f64, dy: &[f64], sy: f64) -> f64 {
    (dot(dx, dx) / (sx * sx) + dot(dy, dy) / (sy * sy)).sqrt()
}

/// Runs TTSA for `max_iters` iterations. Row `t` holds the iterate before
/// update `t + 1`; `grad_map_norm` is the step-scaled displacement.
pub fn run_ttsa(p: &ProblemSpec, cfg: &BaselineConfig, x0: &[f64], y0: &[f64]) -> Result<IterationTrace> {
    cfg.validate()?;
    check_start(p, x0, y0)?;
    let clock = Instant::now();
    let (mut x, mut y) = (x0.to_vec(), y0.to_vec());
    let mut rows = Vec::with_capacity(cfg.max_iters);
    let mut last_x_step = cfg.eta2;
    for t in 0..cfg.max_iters {
        let (y_step, x_step) = ttsa_schedules(cfg.eta1, cfg.eta2, t + 1);
        last_x_step = x_step;
        let f_val = p.f(&x, &y);
        check_iterate(BaselineAlgorithm::Ttsa, t, &x, &y, f_val)?;

        let y_next = p.y_domain.project(&axpy(&y, -y_step, &p.lower.grad_y(&x, &y)))?;
        let h = hypergradient(p, &x, &y_next);
        let x_next = p.x_domain.project(&axpy(&x, -x_step, &h))?;

        rows.push(TraceRow {
            t,
            f_gamma: f_val,
            grad_map_norm: displacement(&sub(&x_next, &x), x_step, &sub(&y_next, &y), y_step),
            feasibility_gap: None,
            x: x.clone(),
            y: y.clone(),
            wallclock_ms: cfg
                .record_wallclock
                .then(|| clock.elapsed().as_secs_f64() * 1e3),
        });
        x = x_next;
        y = y_next;
    }
    check_iterate(BaselineAlgorithm::Ttsa, cfg.max_iters, &x, &y, p.f(&x, &y))?;
    Ok(IterationTrace {
        rows,
        status: TerminalStatus::MaxIters,
        final_x: x,
        final_y: y,
        terminal: None,
        step_size: last_x_step,
        warnings: Vec::new(),
    })
}

/// Runs V-PBGD for `max_iters` outer iterations.
///
/// Each outer iteration first advances the lower-level surrogate `theta`
/// (warm-started from its previous value, initially `y0`) by `inner_iters`
/// projected gradient steps on `g(x, .)`, then takes one projected gradient
/// step on `f(x, y) + gamma (g(x, y) - g(x, theta))` over `(x, y)`.
pub fn run_vpbgd(p: &ProblemSpec, cfg: &BaselineConfig, x0: &[f64], y0: &[f64]) -> Result<IterationTrace> {
    cfg.validate()?;
    check_start(p, x0, y0)?;
    let clock = Instant::now();
    let (outer, inner) = (cfg.eta1, cfg.eta2);
    let (mut x, mut y) = (x0.to_vec(), y0.to_vec());
    let mut theta = y0.to_vec();
    let mut rows = Vec::with_capacity(cfg.max_iters);
    for t in 0..cfg.max_iters {
        let f_val = p.f(&x, &y);
        check_iterate(BaselineAlgorithm::Vpbgd, t, &x, &y, f_val)?;

        for _ in 0..cfg.inner_iters {
            theta = p.y_domain.project(&axpy(&theta, -inner, &p.lower.grad_y(&x, &theta)))?;
        }
        let gx_penalty = sub(&p.lower.grad_x(&x, &y), &p.lower.grad_x(&x, &theta));
        let grad_x = axpy(&p.upper.grad_x(&x, &y), cfg.gamma, &gx_penalty);
        let grad_y = axpy(&p.upper.grad_y(&x, &y), cfg.gamma, &p.lower.grad_y(&x, &y));
        let x_next = p.x_domain.project(&axpy(&x, -outer, &grad_x))?;
        let y_next = p.y_domain.project(&axpy(&y, -outer, &grad_y))?;

        rows.push(TraceRow {
            t,
            f_gamma: f_val,
            grad_map_norm: displacement(&sub(&x_next, &x), outer, &sub(&y_next, &y), outer),
            feasibility_gap: None,
            x: x.clone(),
            y: y.clone(),
            wallclock_ms: cfg
                .record_wallclock
                .then(|| clock.elapsed().as_secs_f64() * 1e3),
        });
        x = x_next;
        y = y_next;
    }
    check_iterate(BaselineAlgorithm::Vpbgd, cfg.max_iters, &x, &y, p.f(&x, &y))?;
    Ok(IterationTrace {
        rows,
        status: TerminalStatus::MaxIters,
        final_x: x,
        final_y: y,
        terminal: None,
        step_size: outer,
        warnings: Vec::new(),
    })
}

pub fn run_baseline(p: &ProblemSpec, cfg: &BaselineConfig, x0: &[f64], y0: &[f64]) -> Result<IterationTrace> {
    match cfg.algorithm {
        BaselineAlgorithm::Ttsa => run_ttsa(p, cfg, x0, y0),
        BaselineAlgorithm::Vpbgd => run_vpbgd(p, cfg, x0, y0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_coupled_1d, make_sanity_quadratic, make_synthetic_1d};
    use crate::value_function::oracle_true_value;

    #[test]
    fn schedule_at_first_iteration() {
        assert_eq!(ttsa_schedules(0.1, 0.05, 1), (0.1, 0.05));
        let (a, b) = ttsa_schedules(1.0, 1.0, 32);
        assert!((a - 0.125).abs() < 1e-12);
        assert!((b - 0.25).abs() < 1e-12);
    }

    #[test]
    fn hypergradient_uncoupled_lower_level() {
        let p = make_synthetic_1d();
        let h = hypergradient(&p, &[1.0], &[0.3]);
        assert_eq!(h, p.upper.grad_x(&[1.0], &[0.3]));
    }

    #[test]
    fn hypergradient_sanity_instance() {
        // g = (y - x)^2: g_xy = -2, g_yy = 2, so h = 2x + 2y.
        let p = make_sanity_quadratic();
        let h = hypergradient(&p, &[0.5], &[-0.25]);
        assert!((h[0] - 0.5).abs() < 1e-6, "{h:?}");
    }

    #[test]
    fn hypergradient_guard_drops_correction() {
        // g = sin(10y + x) + 2(y - 0.3x)^2 has g_yy = -100 sin(10y + x) + 4,
        // which vanishes where sin(10y + x) = 0.04.
        let p = make_coupled_1d();
        let x = 0.0;
        let y = 0.04f64.asin() / 10.0;
        let h = hypergradient(&p, &[x], &[y]);
        assert_eq!(h, p.upper.grad_x(&[x], &[y]));
    }

    #[test]
    fn sanity_instance_converges() {
        let p = make_sanity_quadratic();
        let mut ttsa = BaselineConfig::ttsa(0.2, 0.2);
        ttsa.max_iters = 3000;
        let mut vpbgd = BaselineConfig::vpbgd(1.0, 0.1, 0.2);
        vpbgd.max_iters = 3000;
        for seed in 0..5 {
            let (x0, y0) = baseline_initial_point(&p, seed);
            for cfg in [&ttsa, &vpbgd] {
                let trace = run_baseline(&p, cfg, &x0, &y0).unwrap();
                let v = oracle_true_value(&p, &trace.final_x, 201).unwrap();
                let violation = p.g(&trace.final_x, &trace.final_y) - v;
                assert!(violation <= 1e-4, "{} seed {seed}: {violation}", cfg.algorithm);
            }
        }
    }

    #[test]
    fn vpbgd_without_penalty_descends_on_f() {
        let p = make_sanity_quadratic();
        let mut cfg = BaselineConfig::vpbgd(0.0, 0.1, 0.01);
        cfg.max_iters = 200;
        let trace = run_vpbgd(&p, &cfg, &[1.5], &[-1.0]).unwrap();
        for w in trace.rows.windows(2) {
            assert!(w[1].f_gamma <= w[0].f_gamma);
        }
        assert!(trace.final_x[0].abs() < 1e-6 && trace.final_y[0].abs() < 1e-6);
    }

    #[test]
    fn iterates_stay_feasible_and_deterministic() {
        let p = make_synthetic_1d();
        for cfg in [BaselineConfig::ttsa(0.1, 0.1), BaselineConfig::vpbgd(80.0, 0.05, 0.005)] {
            let (x0, y0) = baseline_initial_point(&p, 11);
            let a = run_baseline(&p, &cfg, &x0, &y0).unwrap();
            let b = run_baseline(&p, &cfg, &x0, &y0).unwrap();
            assert_eq!(a, b);
            for r in &a.rows {
                assert!(p.x_domain.contains(&r.x) && p.y_domain.contains(&r.y));
            }
            assert_eq!(a.rows.len(), cfg.max_iters);
        }
    }

    #[test]
    fn rejects_bad_config_and_start() {
        let p = make_synthetic_1d();
        let mut cfg = BaselineConfig::vpbgd(1.0, 0.1, 0.1);
        cfg.inner_iters = 0;
        assert!(run_vpbgd(&p, &cfg, &[0.0], &[0.0]).is_err());
        let cfg = BaselineConfig::ttsa(0.1, 0.1);
        assert!(run_ttsa(&p, &cfg, &[0.0], &[9.0]).is_err());
        assert!(run_ttsa(&p, &BaselineConfig::ttsa(-1.0, 0.1), &[0.0], &[0.0]).is_err());
    }
}
