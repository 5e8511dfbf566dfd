//! Bilevel problem instances.
//!
//! A [`ProblemSpec`] pairs an upper objective `f(x, y)` and a lower objective
//! `g(x, y)`, both with analytic gradients, with box domains for `x` and `y`
//! and the smoothness constants the solver's step-size rule needs.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::{linspace, Lattice};
use crate::linalg::{dot, norm};
use crate::{Error, Result};

/// Axis-aligned box `{v : lower <= v <= upper}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxSetRepr", into = "BoxSetRepr")]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxSetRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<BoxSetRepr> for BoxSet {
    type Error = Error;
    fn try_from(r: BoxSetRepr) -> Result<Self> {
        BoxSet::new(r.lower, r.upper)
    }
}

impl From<BoxSet> for BoxSetRepr {
    fn from(b: BoxSet) -> Self {
        BoxSetRepr {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidArgument("box must have dimension >= 1".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite(format!("box bound in coordinate {i}")));
            }
            if lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "box coordinate {i}: lower {lo} exceeds upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `[lo, hi]` in every one of `dim` coordinates.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim()
            && v
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    /// Largest Euclidean norm attained on the box, i.e. the max over corners.
    pub fn max_norm(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Componentwise clamp onto the box; the Euclidean projection.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v)?;
        Ok(v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| x.clamp(*l, *u))
            .collect())
    }

    /// Uniform tensor grid with `per_dim` points per coordinate.
    pub fn lattice(&self, per_dim: usize) -> Lattice {
        Lattice::new(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| linspace(*l, *u, per_dim))
                .collect(),
        )
    }

    /// Cartesian product `self x other`.
    pub fn product(&self, other: &BoxSet) -> BoxSet {
        BoxSet {
            lower: [self.lower.as_slice(), other.lower.as_slice()].concat(),
            upper: [self.upper.as_slice(), other.upper.as_slice()].concat(),
        }
    }
}

pub fn project_box(b: &BoxSet, v: &[f64]) -> Result<Vec<f64>> {
    b.project(v)
}

/// A continuously differentiable function of `(x, y)` with analytic partial
/// gradients.
pub trait SmoothFunction: fmt::Debug + Send + Sync {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64;
    fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64>;
    fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64>;
}

/// `amplitude * sin(freq_x . x + freq_y . y + phase)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave {
    pub amplitude: f64,
    #[serde(default)]
    pub freq_x: Vec<f64>,
    #[serde(default)]
    pub freq_y: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

/// Quadratic plus a sum of sine waves:
///
/// ```text
/// h(x, y) = 1/2 x'Axx x + x'Axy y + 1/2 y'Ayy y + bx'x + by'y + c
///           + sum_j a_j sin(wx_j'x + wy_j'y + phi_j)
/// ```
///
/// Omitted matrices and vectors are zero. `Axx` and `Ayy` need not be
/// symmetric; gradients use their symmetric parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadTrig {
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub xx: Vec<Vec<f64>>,
    #[serde(default)]
    pub xy: Vec<Vec<f64>>,
    #[serde(default)]
    pub yy: Vec<Vec<f64>>,
    #[serde(default)]
    pub lin_x: Vec<f64>,
    #[serde(default)]
    pub lin_y: Vec<f64>,
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub waves: Vec<Wave>,
}

impl QuadTrig {
    pub fn zero(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            xx: vec![],
            xy: vec![],
            yy: vec![],
            lin_x: vec![],
            lin_y: vec![],
            constant: 0.0,
            waves: vec![],
        }
    }

    /// Fills omitted blocks with zeros and checks every shape.
    pub fn normalized(mut self) -> Result<Self> {
        let (n, m) = (self.n, self.m);
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("n and m must be >= 1".into()));
        }
        fn fill_matrix(mat: &mut Vec<Vec<f64>>, rows: usize, cols: usize, name: &str) -> Result<()> {
            if mat.is_empty() {
                *mat = vec![vec![0.0; cols]; rows];
            }
            if mat.len() != rows || mat.iter().any(|r| r.len() != cols) {
                return Err(Error::InvalidArgument(format!(
                    "matrix `{name}` must be {rows}x{cols}"
                )));
            }
            Ok(())
        }
        fn fill_vector(v: &mut Vec<f64>, len: usize, name: &str) -> Result<()> {
            if v.is_empty() {
                *v = vec![0.0; len];
            }
            if v.len() != len {
                return Err(Error::InvalidArgument(format!("vector `{name}` must have length {len}")));
            }
            Ok(())
        }
        fill_matrix(&mut self.xx, n, n, "xx")?;
        fill_matrix(&mut self.xy, n, m, "xy")?;
        fill_matrix(&mut self.yy, m, m, "yy")?;
        fill_vector(&mut self.lin_x, n, "lin_x")?;
        fill_vector(&mut self.lin_y, m, "lin_y")?;
        for w in &mut self.waves {
            fill_vector(&mut w.freq_x, n, "freq_x")?;
            fill_vector(&mut w.freq_y, m, "freq_y")?;
        }
        let finite = self
            .xx
            .iter()
            .chain(&self.xy)
            .chain(&self.yy)
            .flatten()
            .chain(&self.lin_x)
            .chain(&self.lin_y)
            .chain(std::iter::once(&self.constant))
            .chain(self.waves.iter().flat_map(|w| {
                w.freq_x
                    .iter()
                    .chain(&w.freq_y)
                    .chain([&w.amplitude, &w.phase])
            }))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("quad-trig coefficient".into()));
        }
        Ok(self)
    }

    fn wave_arg(w: &Wave, x: &[f64], y: &[f64]) -> f64 {
        dot(&w.freq_x, x) + dot(&w.freq_y, y) + w.phase
    }
}

fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, v)).collect()
}

fn mat_t_vec(a: &[Vec<f64>], v: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (row, vi) in a.iter().zip(v) {
        for (o, aij) in out.iter_mut().zip(row) {
            *o += aij * vi;
        }
    }
    out
}

/// Gradient of `1/2 v'Av`, i.e. `1/2 (A + A') v`.
fn sym_grad(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let av = mat_vec(a, v);
    let atv = mat_t_vec(a, v, v.len());
    av.iter().zip(&atv).map(|(p, q)| 0.5 * (p + q)).collect()
}

impl SmoothFunction for QuadTrig {
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let quad = 0.5 * dot(x, &mat_vec(&self.xx, x))
            + dot(x, &mat_vec(&self.xy, y))
            + 0.5 * dot(y, &mat_vec(&self.yy, y));
        let lin = dot(&self.lin_x, x) + dot(&self.lin_y, y) + self.constant;
        let trig: f64 = self
            .waves
            .iter()
            .map(|w| w.amplitude * Self::wave_arg(w, x, y).sin())
            .sum();
        quad + lin + trig
    }

    fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut g = sym_grad(&self.xx, x);
        for ((gi, bi), ci) in g.iter_mut().zip(mat_vec(&self.xy, y)).zip(&self.lin_x) {
            *gi += bi + ci;
        }
        for w in &self.waves {
            let c = w.amplitude * Self::wave_arg(w, x, y).cos();
            for (gi, fi) in g.iter_mut().zip(&w.freq_x) {
                *gi += c * fi;
            }
        }
        g
    }

    fn grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut g = sym_grad(&self.yy, y);
        for ((gi, bi), ci) in g
            .iter_mut()
            .zip(mat_t_vec(&self.xy, x, self.m))
            .zip(&self.lin_y)
        {
            *gi += bi + ci;
        }
        for w in &self.waves {
            let c = w.amplitude * Self::wave_arg(w, x, y).cos();
            for (gi, fi) in g.iter_mut().zip(&w.freq_y) {
                *gi += c * fi;
            }
        }
        g
    }
}

/// Gradient bounds, gradient-Lipschitz constants and the lower-level domain
/// radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessConstants {
    /// Bound on the gradient norm of `f`.
    pub l_f: f64,
    /// Bound on the gradient norm of `g`.
    pub l_g: f64,
    /// Lipschitz constant of the gradient of `f`.
    pub lbar_f: f64,
    /// Lipschitz constant of the gradient of `g`.
    pub lbar_g: f64,
    /// Radius of the lower-level domain, `||y|| <= d`.
    pub d: f64,
}

impl SmoothnessConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("l_f", self.l_f),
            ("l_g", self.l_g),
            ("lbar_f", self.lbar_f),
            ("lbar_g", self.lbar_g),
            ("d", self.d),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "smoothness constant {name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Safety factor applied to numerically derived constants.
pub const CONSTANT_SAFETY_FACTOR: f64 = 1.1;
/// Floor for numerically derived constants.
pub const CONSTANT_FLOOR: f64 = 1e-12;

/// A bilevel problem `min_x f(x, y*)` s.t. `y* in argmin_{y in Y} g(x, y)`,
/// `x in X`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub upper: Arc<dyn SmoothFunction>,
    pub lower: Arc<dyn SmoothFunction>,
    pub x_domain: BoxSet,
    pub y_domain: BoxSet,
    pub constants: SmoothnessConstants,
}

impl ProblemSpec {
    /// Builds a problem and checks that the gradients' lengths agree with
    /// the domain dimensions at the domain centers.
    pub fn new(
        name: impl Into<String>,
        upper: Arc<dyn SmoothFunction>,
        lower: Arc<dyn SmoothFunction>,
        x_domain: BoxSet,
        y_domain: BoxSet,
        constants: SmoothnessConstants,
    ) -> Result<Self> {
        constants.validate()?;
        let (xc, yc) = (x_domain.center(), y_domain.center());
        for func in [&upper, &lower] {
            let gx = func.grad_x(&xc, &yc);
            let gy = func.grad_y(&xc, &yc);
            if gx.len() != x_domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: x_domain.dim(),
                    got: gx.len(),
                });
            }
            if gy.len() != y_domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: y_domain.dim(),
                    got: gy.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            upper,
            lower,
            x_domain,
            y_domain,
            constants,
        })
    }

    /// Builds a problem whose constants come from
    /// [`derive_constants_numerically`].
    pub fn with_derived_constants(
        name: impl Into<String>,
        upper: Arc<dyn SmoothFunction>,
        lower: Arc<dyn SmoothFunction>,
        x_domain: BoxSet,
        y_domain: BoxSet,
        grid_per_dim: usize,
    ) -> Result<Self> {
        let placeholder = SmoothnessConstants {
            l_f: 1.0,
            l_g: 1.0,
            lbar_f: 1.0,
            lbar_g: 1.0,
            d: 1.0,
        };
        let mut spec = Self::new(name, upper, lower, x_domain, y_domain, placeholder)?;
        spec.constants = derive_constants_numerically(&spec, grid_per_dim)?;
        Ok(spec)
    }

    /// Upper-level dimension `n`.
    pub fn n(&self) -> usize {
        self.x_domain.dim()
    }

    /// Lower-level dimension `m`.
    pub fn m(&self) -> usize {
        self.y_domain.dim()
    }

    pub fn f(&self, x: &[f64], y: &[f64]) -> f64 {
        self.upper.eval(x, y)
    }

    pub fn g(&self, x: &[f64], y: &[f64]) -> f64 {
        self.lower.eval(x, y)
    }
}

/// Grid resolution used for the built-in problems' constants.
const BUILTIN_CONSTANTS_GRID: usize = 201;

fn quad_trig_problem(
    name: &str,
    upper: QuadTrig,
    lower: QuadTrig,
    x_domain: BoxSet,
    y_domain: BoxSet,
) -> Result<ProblemSpec> {
    ProblemSpec::with_derived_constants(
        name,
        Arc::new(upper.normalized()?),
        Arc::new(lower.normalized()?),
        x_domain,
        y_domain,
        BUILTIN_CONSTANTS_GRID,
    )
}

/// `f(x, y) = 3x^2 + 7xy + 5y^2 + x - y + 5` on `x in [-10, 10]`,
/// `g(x, y) = sin(10y) + 2y^2` on `y in [-5, 5]`.
pub fn synthetic_upper() -> QuadTrig {
    QuadTrig {
        xx: vec![vec![6.0]],
        xy: vec![vec![7.0]],
        yy: vec![vec![10.0]],
        lin_x: vec![1.0],
        lin_y: vec![-1.0],
        constant: 5.0,
        ..QuadTrig::zero(1, 1)
    }
}

pub fn synthetic_lower() -> QuadTrig {
    QuadTrig {
        yy: vec![vec![4.0]],
        waves: vec![Wave {
            amplitude: 1.0,
            freq_x: vec![0.0],
            freq_y: vec![10.0],
            phase: 0.0,
        }],
        ..QuadTrig::zero(1, 1)
    }
}

pub fn make_synthetic_1d() -> ProblemSpec {
    quad_trig_problem(
        "synthetic-1d",
        synthetic_upper(),
        synthetic_lower(),
        BoxSet::cube(-10.0, 10.0, 1).expect("valid box"),
        BoxSet::cube(-5.0, 5.0, 1).expect("valid box"),
    )
    .expect("synthetic-1d is well formed")
}

/// Synthetic upper level with an `x`-coupled lower level,
/// `g(x, y) = sin(10y + x) + 2(y - 0.3x)^2`, on `x in [-3, 3]`, `y in [-2, 2]`.
pub fn make_coupled_1d() -> ProblemSpec {
    let lower = QuadTrig {
        xx: vec![vec![0.36]],
        xy: vec![vec![-1.2]],
        yy: vec![vec![4.0]],
        waves: vec![Wave {
            amplitude: 1.0,
            freq_x: vec![1.0],
            freq_y: vec![10.0],
            phase: 0.0,
        }],
        ..QuadTrig::zero(1, 1)
    };
    quad_trig_problem(
        "coupled-1d",
        synthetic_upper(),
        lower,
        BoxSet::cube(-3.0, 3.0, 1).expect("valid box"),
        BoxSet::cube(-2.0, 2.0, 1).expect("valid box"),
    )
    .expect("coupled-1d is well formed")
}

/// Two-dimensional coupled instance on `x in [-2, 2]^2`, `y in [-1, 1]^2`:
/// `f = |x|^2 + x.y + |y - 0.5|^2`,
/// `g = sin(6 y1 + x1) + sin(5 y2 - x2) + |y|^2 - 0.5 x1 y2`.
pub fn make_coupled_2d() -> ProblemSpec {
    let upper = QuadTrig {
        xx: vec![vec![2.0, 0.0], vec![0.0, 2.0]],
        xy: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        yy: vec![vec![2.0, 0.0], vec![0.0, 2.0]],
        lin_y: vec![-1.0, -1.0],
        constant: 0.5,
        ..QuadTrig::zero(2, 2)
    };
    let lower = QuadTrig {
        xy: vec![vec![0.0, -0.5], vec![0.0, 0.0]],
        yy: vec![vec![2.0, 0.0], vec![0.0, 2.0]],
        waves: vec![
            Wave {
                amplitude: 1.0,
                freq_x: vec![1.0, 0.0],
                freq_y: vec![6.0, 0.0],
                phase: 0.0,
            },
            Wave {
                amplitude: 1.0,
                freq_x: vec![0.0, -1.0],
                freq_y: vec![0.0, 5.0],
                phase: 0.0,
            },
        ],
        ..QuadTrig::zero(2, 2)
    };
    quad_trig_problem(
        "coupled-2d",
        upper,
        lower,
        BoxSet::cube(-2.0, 2.0, 2).expect("valid box"),
        BoxSet::cube(-1.0, 1.0, 2).expect("valid box"),
    )
    .expect("coupled-2d is well formed")
}

/// Strongly convex sanity instance: `f = x^2 + y^2`, `g = (y - x)^2`,
/// both variables in `[-2, 2]`.
pub fn make_sanity_quadratic() -> ProblemSpec {
    let upper = QuadTrig {
        xx: vec![vec![2.0]],
        yy: vec![vec![2.0]],
        ..QuadTrig::zero(1, 1)
    };
    let lower = QuadTrig {
        xx: vec![vec![2.0]],
        xy: vec![vec![-2.0]],
        yy: vec![vec![2.0]],
        ..QuadTrig::zero(1, 1)
    };
    quad_trig_problem(
        "sanity-quadratic",
        upper,
        lower,
        BoxSet::cube(-2.0, 2.0, 1).expect("valid box"),
        BoxSet::cube(-2.0, 2.0, 1).expect("valid box"),
    )
    .expect("sanity-quadratic is well formed")
}

pub const BUILTIN_PROBLEMS: &[&str] = &["synthetic-1d", "coupled-1d", "coupled-2d", "sanity-quadratic"];

/// Looks up a built-in problem by registry name.
pub fn builtin(name: &str) -> Result<ProblemSpec> {
    match name {
        "synthetic-1d" => Ok(make_synthetic_1d()),
        "coupled-1d" => Ok(make_coupled_1d()),
        "coupled-2d" => Ok(make_coupled_2d()),
        "sanity-quadratic" => Ok(make_sanity_quadratic()),
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

fn joint_grad(func: &dyn SmoothFunction, x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut g = func.grad_x(x, y);
    g.extend(func.grad_y(x, y));
    g
}

/// Frobenius norm of the central-difference Hessian built from analytic
/// gradients. Upper-bounds the spectral norm.
fn hessian_frobenius(func: &dyn SmoothFunction, z: &[f64], n: usize, scale: &[f64]) -> f64 {
    let d = z.len();
    let mut h = vec![vec![0.0; d]; d];
    let mut zp = z.to_vec();
    let mut zm = z.to_vec();
    for i in 0..d {
        let step = 1e-5 * scale[i].max(1.0);
        zp[i] = z[i] + step;
        zm[i] = z[i] - step;
        let gp = joint_grad(func, &zp[..n], &zp[n..]);
        let gm = joint_grad(func, &zm[..n], &zm[n..]);
        for j in 0..d {
            h[i][j] = (gp[j] - gm[j]) / (2.0 * step);
        }
        zp[i] = z[i];
        zm[i] = z[i];
    }
    let mut sum = 0.0;
    for i in 0..d {
        for j in 0..d {
            let s = 0.5 * (h[i][j] + h[j][i]);
            sum += s * s;
        }
    }
    sum.sqrt()
}

/// Cap on the joint grid size used by [`derive_constants_numerically`].
pub const CONSTANT_GRID_MAX_POINTS: usize = 250_000;

/// Grid suprema of `||grad f||`, `||grad g||` and of finite-difference
/// Hessian norms over `X x Y`, inflated by [`CONSTANT_SAFETY_FACTOR`] and
/// floored at [`CONSTANT_FLOOR`]. `d` is the largest corner norm of `Y`.
///
/// The per-dimension resolution is lowered if needed so the joint grid
/// stays within [`CONSTANT_GRID_MAX_POINTS`] points.
pub fn derive_constants_numerically(p: &ProblemSpec, grid_per_dim: usize) -> Result<SmoothnessConstants> {
    if grid_per_dim < 2 {
        return Err(Error::InvalidArgument("grid_per_dim must be >= 2".into()));
    }
    let n = p.n();
    let joint = p.x_domain.product(&p.y_domain);
    let scale = joint.widths();
    let dims = joint.dim() as i32;
    let mut per_dim = grid_per_dim;
    while per_dim > 2 && (per_dim as f64).powi(dims) > CONSTANT_GRID_MAX_POINTS as f64 {
        per_dim -= 1;
    }
    let lattice = joint.lattice(per_dim);
    let (mut lf, mut lg, mut hf, mut hg) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for z in lattice.points() {
        let (x, y) = z.split_at(n);
        let gf = norm(&joint_grad(p.upper.as_ref(), x, y));
        let gg = norm(&joint_grad(p.lower.as_ref(), x, y));
        let hff = hessian_frobenius(p.upper.as_ref(), &z, n, &scale);
        let hgg = hessian_frobenius(p.lower.as_ref(), &z, n, &scale);
        let fv = p.f(x, y);
        let gv = p.g(x, y);
        if ![gf, gg, hff, hgg, fv, gv].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("derivative evaluation at {z:?}")));
        }
        lf = lf.max(gf);
        lg = lg.max(gg);
        hf = hf.max(hff);
        hg = hg.max(hgg);
    }
    let inflate = |v: f64| (v * CONSTANT_SAFETY_FACTOR).max(CONSTANT_FLOOR);
    Ok(SmoothnessConstants {
        l_f: inflate(lf),
        l_g: inflate(lg),
        lbar_f: inflate(hf),
        lbar_g: inflate(hg),
        d: p.y_domain.max_norm().max(CONSTANT_FLOOR),
    })
}
