//! DIVIDE-BLO: projected gradient descent on the penalty objective
//!
//! ```text
//! F(x, p) = f(x, sum_i p_i y(i)) + gamma (sum_i p_i g(x, y(i)) - V~(x))
//! ```
//!
//! over `X x simplex`, together with its step-size rule and the certificates
//! checked on finished runs.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::covering::Covering;
use crate::geometry::{project_product, project_simplex, SimplexPoint};
use crate::linalg::{all_finite, axpy, dot, sub};
use crate::problem::{ProblemSpec, SmoothnessConstants};
use crate::value_function::{check_covering, check_in_x, check_lambda, eval_value_function, ValueFunctionEval};
use crate::{Error, Result};

/// Step size: a fixed value or `"auto"` for `1 / L_gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StepSize {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for StepSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepSize::Auto => s.serialize_str("auto"),
            StepSize::Fixed(a) => s.serialize_f64(*a),
        }
    }
}

impl<'de> Deserialize<'de> for StepSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(a) => Ok(StepSize::Fixed(a)),
            Repr::Str(s) if s == "auto" => Ok(StepSize::Auto),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "step size must be a number or \"auto\", got \"{s}\""
            ))),
        }
    }
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Auto => f.write_str("auto"),
            StepSize::Fixed(a) => write!(f, "{a}"),
        }
    }
}

fn default_eps_stop() -> f64 {
    1e-6
}

fn default_max_iters() -> usize {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub gamma: f64,
    pub lambda: f64,
    #[serde(default)]
    pub alpha: StepSize,
    #[serde(default = "default_eps_stop")]
    pub eps_stop: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fill the `wallclock_ms` trace column. Off by default so traces are
    /// byte-reproducible.
    #[serde(default)]
    pub record_wallclock: bool,
}

impl SolverConfig {
    pub fn new(gamma: f64, lambda: f64, alpha: StepSize) -> Self {
        Self {
            gamma,
            lambda,
            alpha,
            eps_stop: default_eps_stop(),
            max_iters: default_max_iters(),
            seed: 0,
            record_wallclock: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        check_lambda(self.lambda)?;
        if let StepSize::Fixed(a) = self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidArgument(format!("alpha must be finite and > 0, got {a}")));
            }
        }
        if !(self.eps_stop > 0.0) {
            return Err(Error::InvalidArgument(format!("eps_stop must be > 0, got {}", self.eps_stop)));
        }
        Ok(())
    }

    /// The step size actually used: `1 / L_gamma` for [`StepSize::Auto`].
    pub fn effective_alpha(&self, constants: &SmoothnessConstants, k: usize) -> f64 {
        match self.alpha {
            StepSize::Auto => 1.0 / lipschitz_constant(constants, k, self.gamma, self.lambda),
            StepSize::Fixed(a) => a,
        }
    }
}

/// Gradient-Lipschitz constant of the penalty objective over `X x simplex`:
///
/// ```text
/// L = Lbar_f max(1, sqrt(k) D^2)
///     + gamma [ sqrt((Lbar_g + L_g)^2 + k L_g^2) + L_g^2 k / lambda + Lbar_g ]
/// ```
pub fn lipschitz_constant(constants: &SmoothnessConstants, k: usize, gamma: f64, lambda: f64) -> f64 {
    let SmoothnessConstants {
        l_g, lbar_f, lbar_g, d, ..
    } = *constants;
    let k = k as f64;
    let upper = lbar_f * 1f64.max(k.sqrt() * d * d);
    let penalty = ((lbar_g + l_g).powi(2) + k * l_g * l_g).sqrt() + l_g * l_g * k / lambda + lbar_g;
    upper + gamma * penalty
}

/// Penalty objective, its gradient and the value-function evaluation at one
/// point.
#[derive(Debug, Clone)]
pub struct PenaltyGradient {
    pub grad_x: Vec<f64>,
    pub grad_p: Vec<f64>,
    pub aux: ValueFunctionEval,
    /// `F_gamma(x, p)`.
    pub f_gamma: f64,
    /// `sum_i p_i g(x, y(i)) - V~(x)`.
    pub feasibility_gap: f64,
    /// `sum_i p_i y(i)`.
    pub y_induced: Vec<f64>,
}

/// `sum_i p_i y(i)`
pub fn induced_y(c: &Covering, p: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; c.dim()];
    for (w, point) in p.iter().zip(&c.points) {
        if *w != 0.0 {
            y = axpy(&y, *w, point);
        }
    }
    y
}

/// Gradient of the penalty objective with respect to `(x, p)`:
///
/// ```text
/// grad_x = grad_x f(x, y) + gamma (sum_i p_i grad_x g(x, y(i)) - sum_i p*_i grad_x g(x, y(i)))
/// grad_p = (grad_y f(x, y) . y(i) + gamma g(x, y(i)))_i
/// ```
///
/// with `y = sum_i p_i y(i)` and `p*` the value-function minimizer.
pub fn penalty_gradient(
    p: &ProblemSpec,
    c: &Covering,
    cfg: &SolverConfig,
    x: &[f64],
    pt: &SimplexPoint,
) -> Result<PenaltyGradient> {
    check_covering(p, c)?;
    if pt.len() != c.k() {
        return Err(Error::DimensionMismatch {
            expected: c.k(),
            got: pt.len(),
        });
    }
    let aux = eval_value_function(p, c, cfg.lambda, x)?;
    let w = pt.weights();
    let y = induced_y(c, w);

    let f_val = p.f(x, &y);
    let fy = p.upper.grad_y(x, &y);
    let g_tilde = dot(w, &aux.g_values);
    let feasibility_gap = g_tilde - aux.v_tilde;

    let mut grad_gtilde = vec![0.0; p.n()];
    for (i, wi) in w.iter().enumerate() {
        if *wi != 0.0 {
            grad_gtilde = axpy(&grad_gtilde, *wi, &p.lower.grad_x(x, &c.points[i]));
        }
    }
    let grad_x = axpy(&p.upper.grad_x(x, &y), cfg.gamma, &sub(&grad_gtilde, &aux.grad));
    let grad_p = c
        .points
        .iter()
        .zip(&aux.g_values)
        .map(|(yi, gi)| dot(&fy, yi) + cfg.gamma * gi)
        .collect();

    Ok(PenaltyGradient {
        grad_x,
        grad_p,
        f_gamma: f_val + cfg.gamma * feasibility_gap,
        feasibility_gap,
        y_induced: y,
        aux,
    })
}

/// `F_gamma(x, p)` without the gradient. `w` may lie off the simplex; the
/// objective extends naturally to all of `R^k`.
pub fn penalty_objective(p: &ProblemSpec, c: &Covering, cfg: &SolverConfig, x: &[f64], w: &[f64]) -> Result<f64> {
    if w.len() != c.k() {
        return Err(Error::DimensionMismatch {
            expected: c.k(),
            got: w.len(),
        });
    }
    let aux = eval_value_function(p, c, cfg.lambda, x)?;
    let y = induced_y(c, w);
    Ok(p.f(x, &y) + cfg.gamma * (dot(w, &aux.g_values) - aux.v_tilde))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub p: SimplexPoint,
    pub t: usize,
    pub f_gamma: f64,
    pub grad_map_norm: f64,
    pub feasibility_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: usize,
    /// `F_gamma` for DIVIDE-BLO, `f(x, y)` for the baselines.
    pub f_gamma: f64,
    pub grad_map_norm: f64,
    /// `None` for the baselines.
    pub feasibility_gap: Option<f64>,
    pub x: Vec<f64>,
    /// Induced `sum_i p_i y(i)` for DIVIDE-BLO, the raw iterate for the
    /// baselines.
    pub y: Vec<f64>,
    pub wallclock_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Converged,
    MaxIters,
}

impl fmt::Display for TerminalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminalStatus::Converged => "converged",
            TerminalStatus::MaxIters => "max_iters",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    /// One row per iterate `z_0, ..., z_{T-1}`, each with the step it took.
    pub rows: Vec<TraceRow>,
    pub status: TerminalStatus,
    /// The last iterate `z_T`.
    pub final_x: Vec<f64>,
    pub final_y: Vec<f64>,
    /// Full state at `z_T` (DIVIDE-BLO only).
    pub terminal: Option<SolverState>,
    /// Step size used (the `x` step for the baselines).
    pub step_size: f64,
    pub warnings: Vec<String>,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    /// Largest `F(z_{t+1}) - F(z_t)` over consecutive iterates, including the
    /// step into the terminal state. Non-positive on a monotone run.
    pub fn largest_increase(&self) -> f64 {
        let mut values: Vec<f64> = self.rows.iter().map(|r| r.f_gamma).collect();
        if let Some(s) = &self.terminal {
            values.push(s.f_gamma);
        }
        values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Seeded initialization: `x0` uniform over `X`, `p0` the simplex projection
/// of i.i.d. standard normals.
pub fn initial_point(p: &ProblemSpec, c: &Covering, seed: u64) -> Result<(Vec<f64>, SimplexPoint)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = uniform_in_box(&mut rng, p.x_domain.lower(), p.x_domain.upper());
    let normals: Vec<f64> = (0..c.k()).map(|_| rng.sample(StandardNormal)).collect();
    Ok((x0, project_simplex(&normals)?))
}

pub(crate) fn uniform_in_box<R: Rng>(rng: &mut R, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    lower
        .iter()
        .zip(upper)
        .map(|(&lo, &hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
        .collect()
}

struct Step {
    grad: PenaltyGradient,
    next_x: Vec<f64>,
    next_p: SimplexPoint,
    grad_map_norm: f64,
}

fn projected_step(
    p: &ProblemSpec,
    c: &Covering,
    cfg: &SolverConfig,
    alpha: f64,
    x: &[f64],
    pt: &SimplexPoint,
    t: usize,
) -> Result<Step> {
    let grad = penalty_gradient(p, c, cfg, x, pt)?;
    if !grad.f_gamma.is_finite() || !all_finite(&grad.grad_x) || !all_finite(&grad.grad_p) {
        return Err(Error::NonFinite(format!(
            "penalty objective or gradient at iteration {t} (x = {x:?}, F = {})",
            grad.f_gamma
        )));
    }
    let (next_x, next_p) = project_product(
        &p.x_domain,
        &axpy(x, -alpha, &grad.grad_x),
        &axpy(pt.weights(), -alpha, &grad.grad_p),
    )?;
    let dx = sub(&next_x, x);
    let dp = sub(next_p.weights(), pt.weights());
    let grad_map_norm = (dot(&dx, &dx) + dot(&dp, &dp)).sqrt() / alpha;
    Ok(Step {
        grad,
        next_x,
        next_p,
        grad_map_norm,
    })
}

/// Runs DIVIDE-BLO from `(x0, p0)`.
///
/// Each iteration evaluates `V~` at `x_t`, takes one projected gradient step
/// on `F_gamma` over `X x simplex` and stops once
/// `|z_t - z_{t+1}| / alpha <= eps_stop` or after `max_iters` steps.
pub fn solve(
    p: &ProblemSpec,
    c: &Covering,
    cfg: &SolverConfig,
    x0: &[f64],
    p0: &SimplexPoint,
) -> Result<IterationTrace> {
    cfg.validate()?;
    check_in_x(p, x0)?;
    check_covering(p, c)?;
    if p0.len() != c.k() {
        return Err(Error::DimensionMismatch {
            expected: c.k(),
            got: p0.len(),
        });
    }

    let k = c.k();
    let lipschitz = lipschitz_constant(&p.constants, k, cfg.gamma, cfg.lambda);
    let alpha = cfg.effective_alpha(&p.constants, k);
    let mut warnings = Vec::new();
    let lambda_cap = p.constants.l_f * p.constants.d / cfg.gamma;
    if cfg.lambda > lambda_cap {
        warnings.push(format!(
            "lambda = {} exceeds L_f D / gamma = {lambda_cap}; the feasibility bound does not apply",
            cfg.lambda
        ));
    }
    if alpha * lipschitz > 1.0 {
        warnings.push(format!(
            "alpha = {alpha} exceeds 1 / L_gamma = {}; monotone descent is not guaranteed",
            1.0 / lipschitz
        ));
    }

    let clock = Instant::now();
    let mut x = x0.to_vec();
    let mut pt = p0.clone();
    let mut rows = Vec::new();
    let mut status = TerminalStatus::MaxIters;
    for t in 0..cfg.max_iters {
        let step = projected_step(p, c, cfg, alpha, &x, &pt, t)?;
        rows.push(TraceRow {
            t,
            f_gamma: step.grad.f_gamma,
            grad_map_norm: step.grad_map_norm,
            feasibility_gap: Some(step.grad.feasibility_gap),
            x: x.clone(),
            y: step.grad.y_induced.clone(),
            wallclock_ms: cfg
                .record_wallclock
                .then(|| clock.elapsed().as_secs_f64() * 1e3),
        });
        x = step.next_x;
        pt = step.next_p;
        if step.grad_map_norm <= cfg.eps_stop {
            status = TerminalStatus::Converged;
            break;
        }
    }

    let last = projected_step(p, c, cfg, alpha, &x, &pt, rows.len())?;
    let terminal = SolverState {
        x: x.clone(),
        p: pt,
        t: rows.len(),
        f_gamma: last.grad.f_gamma,
        grad_map_norm: last.grad_map_norm,
        feasibility_gap: last.grad.feasibility_gap,
    };
    Ok(IterationTrace {
        rows,
        status,
        final_y: last.grad.y_induced,
        final_x: x,
        terminal: Some(terminal),
        step_size: alpha,
        warnings,
    })
}

/// `max_{z in X x simplex} <grad F(z*), z* - z>`. Zero exactly at
/// stationary points of the penalty problem; computed in closed form since
/// a linear function attains its minimum over a box at a corner and over
/// the simplex at a vertex.
pub fn stationarity_gap(p: &ProblemSpec, c: &Covering, cfg: &SolverConfig, x: &[f64], pt: &SimplexPoint) -> Result<f64> {
    let grad = penalty_gradient(p, c, cfg, x, pt)?;
    let at_point = dot(&grad.grad_x, x) + dot(&grad.grad_p, pt.weights());
    let box_min: f64 = grad
        .grad_x
        .iter()
        .zip(p.x_domain.lower().iter().zip(p.x_domain.upper()))
        .map(|(g, (lo, hi))| (g * lo).min(g * hi))
        .sum();
    let simplex_min = grad.grad_p.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(at_point - box_min - simplex_min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

/// Both sides of an inequality `value <= bound` and its verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub value: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

impl BoundCheck {
    fn compare(value: f64, bound: f64) -> Self {
        let verdict = if value <= bound { Verdict::Pass } else { Verdict::Fail };
        Self { value, bound, verdict }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Checks `(1/T) sum_{t<T} |G_t|^2 <= 2 (F(z_0) - C_f + lambda/2) / (alpha T)`
/// on the first `horizon` rows of a trace.
pub fn rate_certificate_prefix(trace: &IterationTrace, lambda: f64, c_f: f64, horizon: usize) -> Result<BoundCheck> {
    if trace.rows.is_empty() {
        return Err(Error::InvalidArgument("rate certificate needs a non-empty trace".into()));
    }
    if horizon == 0 || horizon > trace.rows.len() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be in 1..={}, got {horizon}",
            trace.rows.len()
        )));
    }
    let t = horizon as f64;
    let mean_sq = trace.rows[..horizon]
        .iter()
        .map(|r| r.grad_map_norm * r.grad_map_norm)
        .sum::<f64>()
        / t;
    let bound = 2.0 * (trace.rows[0].f_gamma - c_f + 0.5 * lambda) / (trace.step_size * t);
    Ok(BoundCheck::compare(mean_sq, bound))
}

/// [`rate_certificate_prefix`] over the whole trace.
pub fn rate_certificate(trace: &IterationTrace, cfg: &SolverConfig, c_f: f64) -> Result<BoundCheck> {
    rate_certificate_prefix(trace, cfg.lambda, c_f, trace.rows.len())
}

/// Checks `sum_i p_i g(x, y(i)) - V~(x) <= 5 L_f D / (2 gamma)` at a
/// converged state. Not applicable when `lambda > L_f D / gamma`.
pub fn kkt_feasibility_check(state: &SolverState, constants: &SmoothnessConstants, cfg: &SolverConfig) -> BoundCheck {
    let bound = 5.0 * constants.l_f * constants.d / (2.0 * cfg.gamma);
    if cfg.lambda > constants.l_f * constants.d / cfg.gamma {
        return BoundCheck {
            value: state.feasibility_gap,
            bound,
            verdict: Verdict::NotApplicable,
        };
    }
    BoundCheck::compare(state.feasibility_gap, bound)
}

/// Euclidean norm of the joint `(x, p)` gradient.
pub fn gradient_norm(g: &PenaltyGradient) -> f64 {
    (dot(&g.grad_x, &g.grad_x) + dot(&g.grad_p, &g.grad_p)).sqrt()
}
