//! Discretizations `{y(1), ..., y(k)}` of the lower-level box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{linspace, Lattice};
use crate::linalg::dist;
use crate::problem::BoxSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoveringMethod {
    Grid,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covering {
    pub points: Vec<Vec<f64>>,
    /// Covering radius: exact for grids, a probe-grid estimate for random
    /// samples.
    pub radius: f64,
    pub method: CoveringMethod,
    pub seed: Option<u64>,
    /// Per-dimension grid spacing (grid coverings only).
    pub spacing: Option<Vec<f64>>,
}

impl Covering {
    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

/// Tensor grid including both endpoints of every coordinate. The reported
/// radius is half the diagonal of one grid cell.
pub fn grid_covering(y_domain: &BoxSet, points_per_dim: &[usize]) -> Result<Covering> {
    if points_per_dim.len() != y_domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: y_domain.dim(),
            got: points_per_dim.len(),
        });
    }
    let mut axes = Vec::with_capacity(y_domain.dim());
    let mut spacing = Vec::with_capacity(y_domain.dim());
    for (i, &count) in points_per_dim.iter().enumerate() {
        let (lo, hi) = (y_domain.lower()[i], y_domain.upper()[i]);
        if lo == hi {
            axes.push(vec![lo]);
            spacing.push(0.0);
            continue;
        }
        if count < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid covering needs >= 2 points in dimension {i}, got {count}"
            )));
        }
        spacing.push((hi - lo) / (count - 1) as f64);
        axes.push(linspace(lo, hi, count));
    }
    let radius = 0.5 * spacing.iter().map(|s| s * s).sum::<f64>().sqrt();
    let points = Lattice::new(axes).points().collect();
    Ok(Covering {
        points,
        radius,
        method: CoveringMethod::Grid,
        seed: None,
        spacing: Some(spacing),
    })
}

/// Total number of probe points used to estimate a random covering's radius.
pub const PROBE_POINTS: usize = 10_000;

/// Probe grid with about [`PROBE_POINTS`] points spread over the box.
fn probe_lattice(y_domain: &BoxSet) -> Lattice {
    let m = y_domain.dim() as f64;
    let per_dim = (PROBE_POINTS as f64).powf(1.0 / m).ceil() as usize;
    y_domain.lattice(per_dim.max(2))
}

/// Largest distance from a probe-grid point to its nearest covering point.
pub fn empirical_radius(y_domain: &BoxSet, points: &[Vec<f64>]) -> f64 {
    probe_lattice(y_domain)
        .points()
        .map(|q| {
            points
                .iter()
                .map(|p| dist(p, &q))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// `k` i.i.d. uniform samples from the box, reproducible from `seed`.
pub fn random_covering(y_domain: &BoxSet, k: usize, seed: u64) -> Result<Covering> {
    if k == 0 {
        return Err(Error::InvalidArgument("random covering needs k >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            y_domain
                .lower()
                .iter()
                .zip(y_domain.upper())
                .map(|(&lo, &hi)| if lo == hi { lo } else { rng.random_range(lo..=hi) })
                .collect()
        })
        .collect();
    let radius = empirical_radius(y_domain, &points);
    Ok(Covering {
        points,
        radius,
        method: CoveringMethod::Random,
        seed: Some(seed),
        spacing: None,
    })
}

/// `ceil((2 D sqrt(m) / r)^m)`, the covering-number bound for a set of
/// radius `d` in `m` dimensions.
///
/// Values within a relative `1e-9` of an integer are rounded to it first so
/// that `10 / 0.05` gives 200 rather than 201.
pub fn covering_size_bound(d: f64, m: usize, r: f64) -> Result<u64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("target radius must be > 0, got {r}")));
    }
    if !(d >= 0.0) || m == 0 {
        return Err(Error::InvalidArgument("need d >= 0 and m >= 1".into()));
    }
    let value = (2.0 * d * (m as f64).sqrt() / r).powi(m as i32);
    let nearest = value.round();
    let ceiled = if (value - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        value.ceil()
    };
    if !ceiled.is_finite() || ceiled > u64::MAX as f64 {
        return Err(Error::InvalidArgument(format!("covering size bound overflows: {value}")));
    }
    Ok(ceiled as u64)
}
