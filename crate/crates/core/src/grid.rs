//! Uniform tensor grids over boxes.

/// `n` evenly spaced values from `lo` to `hi` inclusive. A degenerate
/// interval (`lo == hi`) or `n <= 1` yields the single value `lo`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

/// Cartesian product of per-axis coordinate lists, enumerated with the last
/// axis varying fastest.
#[derive(Debug, Clone)]
pub struct Lattice {
    axes: Vec<Vec<f64>>,
}

impl Lattice {
    pub fn new(axes: Vec<Vec<f64>>) -> Self {
        Self { axes }
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of the flat position `flat`.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (d, axis) in self.axes.iter().enumerate().rev() {
            idx[d] = flat % axis.len();
            flat /= axis.len();
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, axis)| acc * axis.len() + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, axis)| axis[i])
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Flat indices of the axis-aligned neighbours of `flat`.
    pub fn neighbours(&self, flat: usize) -> Vec<usize> {
        let idx = self.unravel(flat);
        let mut out = Vec::with_capacity(2 * idx.len());
        for d in 0..idx.len() {
            if idx[d] > 0 {
                let mut j = idx.clone();
                j[d] -= 1;
                out.push(self.ravel(&j));
            }
            if idx[d] + 1 < self.axes[d].len() {
                let mut j = idx.clone();
                j[d] += 1;
                out.push(self.ravel(&j));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_includes_endpoints() {
        let v = linspace(-5.0, 5.0, 201);
        assert_eq!(v.len(), 201);
        assert_eq!(v[0], -5.0);
        assert_eq!(v[200], 5.0);
        assert!((v[1] - v[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn degenerate_interval_is_single_point() {
        assert_eq!(linspace(0.0, 0.0, 7), vec![0.0]);
    }

    #[test]
    fn lattice_ravel_roundtrip() {
        let l = Lattice::new(vec![linspace(0.0, 1.0, 3), linspace(0.0, 1.0, 4)]);
        assert_eq!(l.len(), 12);
        for flat in 0..l.len() {
            assert_eq!(l.ravel(&l.unravel(flat)), flat);
        }
        assert_eq!(l.point(5), vec![0.5, 1.0 / 3.0]);
        assert_eq!(l.neighbours(0).len(), 2);
        assert_eq!(l.neighbours(5).len(), 4);
    }
}
