//! Brute-force oracles for the quantities reported on finished runs:
//! `V(x_T)`, the lower-level violation, the relaxed bilevel optimum `f*`,
//! the total gap and the lower bound `C_f` of the upper objective.

use rayon::prelude::*;
use serde::Serialize;

use crate::grid::Lattice;
use crate::linalg::{axpy, dist};
use crate::problem::{BoxSet, ProblemSpec};
use crate::solver::IterationTrace;
use crate::value_function::{scan_lower_level, ORACLE_MAX_DIM, ORACLE_MIN_GRID};
use crate::{Error, Result};

/// Slack on the lower-level level set `{y : g(x, y) <= V(x) + slack}` over
/// which `f` is minimized when computing `f*`.
pub const LEVEL_SET_SLACK: f64 = 1e-6;
/// Cap on `|X grid| * |Y grid|` for the nested `f*` search and on the joint
/// grid for `C_f`.
pub const NESTED_MAX_POINTS: usize = 20_000_000;
/// Cap on `|Y grid|` for single value-function evaluations.
pub const VALUE_MAX_POINTS: usize = 4_000_000;
/// Halvings of the pattern-search step used to polish the `f*` minimizer.
const PATTERN_HALVINGS: usize = 40;
/// Projected-gradient steps used to polish the `C_f` minimizer.
const C_F_POLISH_STEPS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    /// `V(x_T) = min_y g(x_T, y)`.
    pub v_of_x: f64,
    /// `g(x_T, y_T) - V(x_T)`.
    pub violation: f64,
    pub f_star: f64,
    /// `f(x_T, y_T) - f* + violation`.
    pub total_gap: f64,
    pub c_f: f64,
}

/// Largest `s <= want` with `s^dims <= cap`, at least 2.
fn capped_side(want: usize, dims: usize, cap: usize) -> usize {
    let mut s = want;
    while s > 2 && (s as f64).powi(dims as i32) > cap as f64 {
        s -= 1;
    }
    s
}

/// `(min f, y)` over the lower-level level set at one `x`.
type Restricted = (f64, Vec<f64>);

/// Precomputed `f*` and `C_f` for one problem, plus the lattice used for
/// `V(x)` on individual points.
#[derive(Debug, Clone)]
pub struct BilevelOracle {
    problem: ProblemSpec,
    value_lattice: Lattice,
    pub grid_per_dim: usize,
    pub f_star: f64,
    /// Minimizer of the relaxed bilevel problem found by the search.
    pub argmin: (Vec<f64>, Vec<f64>),
    pub c_f: f64,
}

impl BilevelOracle {
    /// Runs the nested grid search for `f*` and the joint grid search for
    /// `C_f` at `grid_per_dim` points per dimension, reduced where the grids
    /// would exceed [`NESTED_MAX_POINTS`].
    pub fn new(problem: &ProblemSpec, grid_per_dim: usize) -> Result<Self> {
        let (n, m) = (problem.n(), problem.m());
        if m > ORACLE_MAX_DIM {
            return Err(Error::OracleDimension {
                dim: m,
                limit: ORACLE_MAX_DIM,
            });
        }
        if grid_per_dim < ORACLE_MIN_GRID {
            return Err(Error::InvalidArgument(format!(
                "oracle grid must have >= {ORACLE_MIN_GRID} points per dimension, got {grid_per_dim}"
            )));
        }
        let value_lattice = problem.y_domain.lattice(capped_side(grid_per_dim, m, VALUE_MAX_POINTS));
        let nested_side = capped_side(grid_per_dim, n + m, NESTED_MAX_POINTS);
        let x_lattice = problem.x_domain.lattice(nested_side);
        let y_lattice = problem.y_domain.lattice(nested_side);

        let oracle = Self {
            problem: problem.clone(),
            value_lattice,
            grid_per_dim,
            f_star: f64::NAN,
            argmin: (Vec::new(), Vec::new()),
            c_f: f64::NAN,
        };

        let phis: Vec<Restricted> = (0..x_lattice.len())
            .into_par_iter()
            .map(|i| oracle.restricted_min(&x_lattice.point(i), &y_lattice))
            .collect::<Result<_>>()?;
        let best = (0..phis.len())
            .min_by(|&a, &b| phis[a].0.total_cmp(&phis[b].0).then(a.cmp(&b)))
            .expect("lattice is non-empty");
        let spacing: Vec<f64> = problem
            .x_domain
            .widths()
            .iter()
            .map(|w| w / (nested_side - 1) as f64)
            .collect();
        let (x_star, (f_star, y_star)) =
            oracle.pattern_search(x_lattice.point(best), phis[best].clone(), spacing, &y_lattice)?;

        let c_f = lower_bound_f(problem, nested_side)?;
        Ok(Self {
            f_star,
            argmin: (x_star, y_star),
            c_f: c_f.min(f_star),
            ..oracle
        })
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    /// `min f(x, y)` over the candidate set `{y : g(x, y) <= V(x) + slack}`
    /// formed by polished lower-level minimizers and grid points.
    fn restricted_min(&self, x: &[f64], y_lattice: &Lattice) -> Result<Restricted> {
        let p = &self.problem;
        let scan = scan_lower_level(p, x, y_lattice)?;
        let level = scan.value() + LEVEL_SET_SLACK;
        let mut best = (f64::INFINITY, Vec::new());
        let mut consider = |y: Vec<f64>| {
            let fv = p.f(x, &y);
            if fv < best.0 {
                best = (fv, y);
            }
        };
        for (y, gv) in &scan.minimizers {
            if *gv <= level {
                consider(y.clone());
            }
        }
        for (i, gv) in scan.grid_values.iter().enumerate() {
            if *gv <= level {
                consider(y_lattice.point(i));
            }
        }
        Ok(best)
    }

    /// Compass search on `x -> restricted_min(x)` starting from a grid
    /// point, halving the step whenever no neighbour improves.
    fn pattern_search(
        &self,
        mut x: Vec<f64>,
        mut best: Restricted,
        mut step: Vec<f64>,
        y_lattice: &Lattice,
    ) -> Result<(Vec<f64>, Restricted)> {
        let b = &self.problem.x_domain;
        for _ in 0..PATTERN_HALVINGS {
            loop {
                let mut improved = false;
                for i in 0..x.len() {
                    for dir in [-1.0, 1.0] {
                        let mut cand = x.clone();
                        cand[i] += dir * step[i];
                        let cand = b.project(&cand)?;
                        if cand == x {
                            continue;
                        }
                        let val = self.restricted_min(&cand, y_lattice)?;
                        if val.0 < best.0 {
                            x = cand;
                            best = val;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
        Ok((x, best))
    }

    /// `V(x)` on the value lattice with polished minima.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.problem.x_domain.check_dim(x)?;
        Ok(scan_lower_level(&self.problem, x, &self.value_lattice)?.value())
    }

    /// Metrics at one point `(x, y)`.
    pub fn report_at(&self, x: &[f64], y: &[f64]) -> Result<OracleReport> {
        self.problem.y_domain.check_dim(y)?;
        let v_of_x = self.value(x)?;
        let violation = self.problem.g(x, y) - v_of_x;
        let total_gap = self.problem.f(x, y) - self.f_star + violation;
        Ok(OracleReport {
            v_of_x,
            violation,
            f_star: self.f_star,
            total_gap,
            c_f: self.c_f,
        })
    }

    /// Metrics at the last iterate of a trace.
    pub fn report(&self, trace: &IterationTrace) -> Result<OracleReport> {
        self.report_at(&trace.final_x, &trace.final_y)
    }

    /// Total gap at rows `0, stride, 2 stride, ...` and at the last iterate,
    /// as `(t, gap)` pairs.
    pub fn gap_series(&self, trace: &IterationTrace, stride: usize) -> Result<Vec<(usize, f64)>> {
        if stride == 0 {
            return Err(Error::InvalidArgument("gap series stride must be >= 1".into()));
        }
        let mut out = Vec::new();
        for row in trace.rows.iter().step_by(stride) {
            out.push((row.t, self.report_at(&row.x, &row.y)?.total_gap));
        }
        out.push((trace.rows.len(), self.report(trace)?.total_gap));
        Ok(out)
    }
}

/// Grid minimum of `f` over `X x Y`, refined by projected gradient descent
/// from the best grid point.
fn lower_bound_f(p: &ProblemSpec, side: usize) -> Result<f64> {
    let n = p.n();
    let joint: BoxSet = p.x_domain.product(&p.y_domain);
    let lattice = joint.lattice(side);
    let values: Vec<f64> = (0..lattice.len())
        .into_par_iter()
        .map(|i| {
            let z = lattice.point(i);
            p.f(&z[..n], &z[n..])
        })
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("upper objective on the C_f grid".into()));
    }
    let best = (0..values.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)))
        .expect("lattice is non-empty");
    let mut z = lattice.point(best);
    let mut best_val = values[best];
    let step = 1.0 / p.constants.lbar_f;
    for _ in 0..C_F_POLISH_STEPS {
        let (x, y) = z.split_at(n);
        let mut g = p.upper.grad_x(x, y);
        g.extend(p.upper.grad_y(x, y));
        let next = joint.project(&axpy(&z, -step, &g))?;
        let v = p.f(&next[..n], &next[n..]);
        if dist(&next, &z) == 0.0 {
            break;
        }
        z = next;
        best_val = best_val.min(v);
    }
    Ok(best_val)
}

/// [`BilevelOracle::new`] followed by [`BilevelOracle::report`].
pub fn compute_metrics(p: &ProblemSpec, trace: &IterationTrace, grid_per_dim: usize) -> Result<OracleReport> {
    BilevelOracle::new(p, grid_per_dim)?.report(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_coupled_2d, make_sanity_quadratic, make_synthetic_1d};
    use crate::solver::{TerminalStatus, TraceRow};

    fn trace_ending_at(x: Vec<f64>, y: Vec<f64>) -> IterationTrace {
        IterationTrace {
            rows: vec![TraceRow {
                t: 0,
                f_gamma: 0.0,
                grad_map_norm: 0.0,
                feasibility_gap: None,
                x: x.clone(),
                y: y.clone(),
                wallclock_ms: None,
            }],
            status: TerminalStatus::Converged,
            final_x: x,
            final_y: y,
            terminal: None,
            step_size: 1.0,
            warnings: vec![],
        }
    }

    #[test]
    fn sanity_quadratic_optimum() {
        // y*(x) = x, so f* = min 2x^2 = 0 at the origin; C_f = 0 too.
        let p = make_sanity_quadratic();
        let o = BilevelOracle::new(&p, 201).unwrap();
        assert!(o.f_star.abs() < 1e-8, "{}", o.f_star);
        assert!(o.c_f.abs() < 1e-8);
        let r = o.report(&trace_ending_at(vec![0.5], vec![0.5])).unwrap();
        assert!(r.violation.abs() < 1e-12);
        assert!((r.total_gap - 0.5).abs() < 1e-8);
        let r = o.report(&trace_ending_at(vec![0.5], vec![-0.5])).unwrap();
        assert!((r.violation - 1.0).abs() < 1e-9);
    }

    #[test]
    fn synthetic_argmin_has_zero_gap() {
        let p = make_synthetic_1d();
        let o = BilevelOracle::new(&p, 1001).unwrap();
        let (x, y) = o.argmin.clone();
        let r = o.report(&trace_ending_at(x, y)).unwrap();
        assert!(r.violation.abs() <= 1e-6, "{r:?}");
        assert!(r.total_gap.abs() <= 1e-6, "{r:?}");
        assert!(o.c_f <= o.f_star);
    }

    #[test]
    fn gap_series_includes_terminal() {
        let p = make_sanity_quadratic();
        let o = BilevelOracle::new(&p, 101).unwrap();
        let trace = trace_ending_at(vec![0.0], vec![0.0]);
        let s = o.gap_series(&trace, 10).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].0, 1);
        assert!(o.gap_series(&trace, 0).is_err());
    }

    #[test]
    fn oracle_limits() {
        let p = make_sanity_quadratic();
        assert!(BilevelOracle::new(&p, 50).is_err());
        assert_eq!(capped_side(1001, 4, 20_000_000), 66);
        assert_eq!(capped_side(1001, 2, 20_000_000), 1001);
    }

    #[test]
    fn two_dimensional_problem_is_supported() {
        let p = make_coupled_2d();
        let o = BilevelOracle::new(&p, 101).unwrap();
        assert!(o.f_star.is_finite() && o.c_f <= o.f_star);
        let r = o.report(&trace_ending_at(o.argmin.0.clone(), o.argmin.1.clone())).unwrap();
        assert!(r.violation.abs() <= 1e-4, "{r:?}");
    }
}
