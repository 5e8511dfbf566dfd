//! JSON run and sweep configuration.
//!
//! ```json
//! {
//!   "problem": {"builtin": "synthetic-1d"},
//!   "covering": {"method": "grid", "points_per_dim": 201},
//!   "solver": {"gamma": 20, "lambda": 0.01, "alpha": 0.1},
//!   "sweep": {"seeds": 50, "divide_blo": {"gamma": [20, 40], "alpha": [0.1], "lambda": [0.01], "k": [201]}}
//! }
//! ```
//!
//! Every object rejects unknown keys.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineAlgorithm, BaselineConfig};
use crate::covering::{grid_covering, random_covering, Covering, CoveringMethod};
use crate::problem::{builtin, BoxSet, ProblemSpec, QuadTrig, SmoothnessConstants};
use crate::solver::{SolverConfig, StepSize};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub covering: Option<CoveringConfig>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub baseline: Option<BaselineConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Builtin(String),
    QuadTrig(Box<CustomProblem>),
}

fn default_constants_grid() -> usize {
    201
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomProblem {
    #[serde(default = "default_custom_name")]
    pub name: String,
    pub upper: QuadTrig,
    pub lower: QuadTrig,
    pub x_domain: BoxSet,
    pub y_domain: BoxSet,
    /// Explicit constants; derived on a grid when omitted.
    #[serde(default)]
    pub constants: Option<SmoothnessConstants>,
    #[serde(default = "default_constants_grid")]
    pub constants_grid: usize,
}

fn default_custom_name() -> String {
    "custom".into()
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec> {
        match self {
            ProblemConfig::Builtin(name) => builtin(name),
            ProblemConfig::QuadTrig(c) => {
                let upper = Arc::new(c.upper.clone().normalized()?);
                let lower = Arc::new(c.lower.clone().normalized()?);
                for q in [&upper, &lower] {
                    if q.n != c.x_domain.dim() || q.m != c.y_domain.dim() {
                        return Err(Error::Config(format!(
                            "objective dimensions ({}, {}) do not match the domains ({}, {})",
                            q.n,
                            q.m,
                            c.x_domain.dim(),
                            c.y_domain.dim()
                        )));
                    }
                }
                match c.constants {
                    Some(k) => ProblemSpec::new(&c.name, upper, lower, c.x_domain.clone(), c.y_domain.clone(), k),
                    None => ProblemSpec::with_derived_constants(
                        &c.name,
                        upper,
                        lower,
                        c.x_domain.clone(),
                        c.y_domain.clone(),
                        c.constants_grid,
                    ),
                }
            }
        }
    }
}

/// One count for every dimension, or one per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerDim {
    Uniform(usize),
    Each(Vec<usize>),
}

impl PerDim {
    pub fn expand(&self, m: usize) -> Vec<usize> {
        match self {
            PerDim::Uniform(n) => vec![*n; m],
            PerDim::Each(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringConfig {
    pub method: CoveringMethod,
    #[serde(default)]
    pub points_per_dim: Option<PerDim>,
    /// Total size: the sample count for random coverings, or a perfect
    /// `m`-th power for grids.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl CoveringConfig {
    pub fn grid(points_per_dim: usize) -> Self {
        Self {
            method: CoveringMethod::Grid,
            points_per_dim: Some(PerDim::Uniform(points_per_dim)),
            k: None,
            seed: 0,
        }
    }

    /// Builds the covering, with `k_override` replacing the configured size.
    pub fn build(&self, y_domain: &BoxSet, k_override: Option<usize>) -> Result<Covering> {
        let m = y_domain.dim();
        match self.method {
            CoveringMethod::Grid => {
                let per_dim = match (k_override.or(self.k), &self.points_per_dim) {
                    (Some(k), _) => vec![grid_side(k, m)?; m],
                    (None, Some(p)) => p.expand(m),
                    (None, None) => {
                        return Err(Error::Config("grid covering needs `points_per_dim` or `k`".into()))
                    }
                };
                grid_covering(y_domain, &per_dim)
            }
            CoveringMethod::Random => {
                let k = k_override
                    .or(self.k)
                    .ok_or_else(|| Error::Config("random covering needs `k`".into()))?;
                random_covering(y_domain, k, self.seed)
            }
        }
    }
}

/// Side length `s` with `s^m = k`.
fn grid_side(k: usize, m: usize) -> Result<usize> {
    let s = (k as f64).powf(1.0 / m as f64).round() as usize;
    if s.checked_pow(m as u32) != Some(k) {
        return Err(Error::Config(format!(
            "grid covering size k = {k} is not a perfect power of the dimension {m}"
        )));
    }
    Ok(s)
}

fn default_grid_per_dim() -> usize {
    1001
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Resolution of the brute-force oracles.
    #[serde(default = "default_grid_per_dim")]
    pub grid_per_dim: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            grid_per_dim: default_grid_per_dim(),
        }
    }
}

fn default_seeds() -> usize {
    50
}

fn default_gap_stride() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; the CLI flag takes precedence.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Iteration spacing of the total-gap series written for the best cells.
    #[serde(default = "default_gap_stride")]
    pub gap_stride: usize,
    #[serde(default)]
    pub divide_blo: Option<DivideBloGrid>,
    #[serde(default)]
    pub ttsa: Option<TtsaGrid>,
    #[serde(default)]
    pub vpbgd: Option<VpbgdGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivideBloGrid {
    pub gamma: Vec<f64>,
    pub alpha: Vec<StepSize>,
    pub lambda: Vec<f64>,
    /// Covering sizes; the covering section's size when omitted.
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default)]
    pub eps_stop: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TtsaGrid {
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VpbgdGrid {
    pub gamma: Vec<f64>,
    /// Outer step on `(x, y)`.
    pub eta1: Vec<f64>,
    /// Inner step on the lower-level surrogate.
    pub eta2: Vec<f64>,
    #[serde(default)]
    pub inner_iters: Option<usize>,
    #[serde(default)]
    pub max_iters: Option<usize>,
}

/// One algorithm configuration: the unit a sweep repeats over seeds.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    DivideBlo { solver: SolverConfig, k: Option<usize> },
    Baseline(BaselineConfig),
}

impl Cell {
    pub fn algorithm(&self) -> &'static str {
        match self {
            Cell::DivideBlo { .. } => "divide-blo",
            Cell::Baseline(b) => match b.algorithm {
                BaselineAlgorithm::Ttsa => "ttsa",
                BaselineAlgorithm::Vpbgd => "vpbgd",
            },
        }
    }

    /// Short filesystem-safe label, unique within a sweep.
    pub fn label(&self) -> String {
        match self {
            Cell::DivideBlo { solver, k } => {
                let mut s = format!("divide-blo_gamma-{}_alpha-{}_lambda-{}", solver.gamma, solver.alpha, solver.lambda);
                if let Some(k) = k {
                    s.push_str(&format!("_k-{k}"));
                }
                s
            }
            Cell::Baseline(b) => match b.algorithm {
                BaselineAlgorithm::Ttsa => format!("ttsa_eta1-{}_eta2-{}", b.eta1, b.eta2),
                BaselineAlgorithm::Vpbgd => format!("vpbgd_gamma-{}_eta1-{}_eta2-{}", b.gamma, b.eta1, b.eta2),
            },
        }
    }

    pub fn with_seed(&self, seed: u64) -> Cell {
        let mut c = self.clone();
        match &mut c {
            Cell::DivideBlo { solver, .. } => solver.seed = seed,
            Cell::Baseline(b) => b.seed = seed,
        }
        c
    }

    pub fn seed(&self) -> u64 {
        match self {
            Cell::DivideBlo { solver, .. } => solver.seed,
            Cell::Baseline(b) => b.seed,
        }
    }
}

fn non_empty<T>(v: &[T], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("sweep grid `{what}` must be non-empty")));
    }
    Ok(())
}

impl SweepConfig {
    /// All cells in a fixed order: DIVIDE-BLO, then TTSA, then V-PBGD, each
    /// with its grid expanded in the order the keys are declared.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        if self.seeds == 0 {
            return Err(Error::Config("sweep needs seeds >= 1".into()));
        }
        if self.gap_stride == 0 {
            return Err(Error::Config("gap_stride must be >= 1".into()));
        }
        let mut cells = Vec::new();
        if let Some(d) = &self.divide_blo {
            non_empty(&d.gamma, "divide_blo.gamma")?;
            non_empty(&d.alpha, "divide_blo.alpha")?;
            non_empty(&d.lambda, "divide_blo.lambda")?;
            let ks: Vec<Option<usize>> = if d.k.is_empty() {
                vec![None]
            } else {
                d.k.iter().copied().map(Some).collect()
            };
            for &gamma in &d.gamma {
                for &alpha in &d.alpha {
                    for &lambda in &d.lambda {
                        for &k in &ks {
                            let mut solver = SolverConfig::new(gamma, lambda, alpha);
                            if let Some(e) = d.eps_stop {
                                solver.eps_stop = e;
                            }
                            if let Some(t) = d.max_iters {
                                solver.max_iters = t;
                            }
                            solver.validate()?;
                            cells.push(Cell::DivideBlo { solver, k });
                        }
                    }
                }
            }
        }
        if let Some(t) = &self.ttsa {
            non_empty(&t.eta1, "ttsa.eta1")?;
            non_empty(&t.eta2, "ttsa.eta2")?;
            for &eta1 in &t.eta1 {
                for &eta2 in &t.eta2 {
                    let mut b = BaselineConfig::ttsa(eta1, eta2);
                    if let Some(n) = t.max_iters {
                        b.max_iters = n;
                    }
                    b.validate()?;
                    cells.push(Cell::Baseline(b));
                }
            }
        }
        if let Some(v) = &self.vpbgd {
            non_empty(&v.gamma, "vpbgd.gamma")?;
            non_empty(&v.eta1, "vpbgd.eta1")?;
            non_empty(&v.eta2, "vpbgd.eta2")?;
            for &gamma in &v.gamma {
                for &eta1 in &v.eta1 {
                    for &eta2 in &v.eta2 {
                        let mut b = BaselineConfig::vpbgd(gamma, eta1, eta2);
                        if let Some(n) = v.inner_iters {
                            b.inner_iters = n;
                        }
                        if let Some(n) = v.max_iters {
                            b.max_iters = n;
                        }
                        b.validate()?;
                        cells.push(Cell::Baseline(b));
                    }
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::Config(
                "sweep needs at least one of `divide_blo`, `ttsa`, `vpbgd`".into(),
            ));
        }
        Ok(cells)
    }

    /// `base_seed, base_seed + 1, ...`
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.base_seed + i).collect()
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The single run described by the `solver` or `baseline` section.
    pub fn single_cell(&self) -> Result<Cell> {
        match (&self.solver, &self.baseline) {
            (Some(s), None) => {
                s.validate()?;
                Ok(Cell::DivideBlo {
                    solver: s.clone(),
                    k: None,
                })
            }
            (None, Some(b)) => {
                b.validate()?;
                Ok(Cell::Baseline(b.clone()))
            }
            (Some(_), Some(_)) => Err(Error::Config("give either `solver` or `baseline`, not both".into())),
            (None, None) => Err(Error::Config("config needs a `solver` or `baseline` section".into())),
        }
    }

    pub fn covering_config(&self) -> Result<&CoveringConfig> {
        self.covering
            .as_ref()
            .ok_or_else(|| Error::Config("DIVIDE-BLO runs need a `covering` section".into()))
    }
}
