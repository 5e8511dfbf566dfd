//! Euclidean projections onto the unit simplex and onto `X x simplex`.

use serde::{Deserialize, Serialize};

use crate::linalg::dist;
use crate::problem::BoxSet;
use crate::{Error, Result};

/// Tolerance on negative weights accepted by [`SimplexPoint::new`].
pub const NONNEG_TOL: f64 = 1e-12;
/// Tolerance on the weight sum accepted by [`SimplexPoint::new`].
pub const SUM_TOL: f64 = 1e-10;

/// A point of the unit simplex `{p >= 0, sum p = 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("simplex point must be non-empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("simplex weight".into()));
        }
        if let Some(w) = weights.iter().find(|w| **w < -NONNEG_TOL) {
            return Err(Error::OutsideDomain(format!("negative simplex weight {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::OutsideDomain(format!("simplex weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    /// The vertex `e_i` of the `k`-simplex.
    pub fn vertex(k: usize, i: usize) -> Result<Self> {
        if i >= k {
            return Err(Error::InvalidArgument(format!("vertex {i} out of range for k = {k}")));
        }
        let mut w = vec![0.0; k];
        w[i] = 1.0;
        Ok(Self(w))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("simplex point must be non-empty".into()));
        }
        Ok(Self(vec![1.0 / k as f64; k]))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Indices with strictly positive weight.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.0
    }
}

fn check_input(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("projection input".into()));
    }
    Ok(())
}

/// Euclidean projection onto the unit simplex by sort-then-threshold.
///
/// Sort descending (ties by original index), find the largest `j` with
/// `u_j - (sum_{i<=j} u_i - 1) / j > 0`, set `tau = (sum_{i<=j} u_i - 1) / j`
/// and return `max(v - tau, 0)`.
pub fn project_simplex(v: &[f64]) -> Result<SimplexPoint> {
    check_input(v)?;
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));

    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &i) in order.iter().enumerate() {
        cumsum += v[i];
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if v[i] - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    Ok(SimplexPoint(v.iter().map(|x| (x - tau).max(0.0)).collect()))
}

/// Projection onto `X x simplex`, which splits blockwise.
pub fn project_product(x_domain: &BoxSet, v_x: &[f64], v_p: &[f64]) -> Result<(Vec<f64>, SimplexPoint)> {
    Ok((x_domain.project(v_x)?, project_simplex(v_p)?))
}

/// Largest dimension accepted by [`simplex_oracle_qp`].
pub const ORACLE_MAX_DIM: usize = 6;

/// Reference projection onto the simplex by enumerating all `2^k - 1`
/// supports. Each support `S` gives the candidate `p_S = v_S - tau`,
/// `tau = (sum v_S - 1) / |S|`; the nearest nonnegative candidate wins.
///
/// Verification oracle only; `k` is limited to [`ORACLE_MAX_DIM`].
pub fn simplex_oracle_qp(v: &[f64]) -> Result<SimplexPoint> {
    check_input(v)?;
    let k = v.len();
    if k > ORACLE_MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "support enumeration limited to k <= {ORACLE_MAX_DIM}, got {k}"
        )));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let members: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let sum: f64 = members.iter().map(|&i| v[i]).sum();
        let tau = (sum - 1.0) / members.len() as f64;
        let mut cand = vec![0.0; k];
        let mut feasible = true;
        for &i in &members {
            cand[i] = v[i] - tau;
            if cand[i] < 0.0 {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        let d = dist(&cand, v);
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, cand));
        }
    }
    let (_, p) = best.expect("the support containing the largest entry is always feasible");
    Ok(SimplexPoint(p))
}
