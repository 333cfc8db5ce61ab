//! Rectangular sampling grids.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An axis-aligned box sampled on a uniform lattice, endpoints included.
///
/// `steps[d]` is the number of samples along axis `d` (at least 1; a single
/// sample sits at `lo[d]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub steps: Vec<usize>,
}

impl BoxGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, steps: Vec<usize>) -> Result<Self> {
        let grid = BoxGrid { lo, hi, steps };
        grid.validate()?;
        Ok(grid)
    }

    /// Square grid over `[lo, hi]^2` with `steps` samples per axis.
    pub fn square(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        Self::new(vec![lo, lo], vec![hi, hi], vec![steps, steps])
    }

    /// Grid with a fixed spacing `step` along every axis of `[lo, hi]^dim`.
    pub fn with_spacing(lo: f64, hi: f64, step: f64, dim: usize) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::invalid("grid spacing must be positive"));
        }
        let n = ((hi - lo) / step).round() as usize + 1;
        Self::new(vec![lo; dim], vec![hi; dim], vec![n; dim])
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lo.len();
        if d == 0 || self.hi.len() != d || self.steps.len() != d {
            return Err(Error::invalid("grid lo/hi/steps must have equal nonzero length"));
        }
        for k in 0..d {
            if !(self.lo[k].is_finite() && self.hi[k].is_finite()) || self.hi[k] < self.lo[k] {
                return Err(Error::invalid(format!("grid axis {k} has an invalid range")));
            }
            if self.steps[k] == 0 {
                return Err(Error::invalid(format!("grid axis {k} has zero samples")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.steps.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis_value(&self, axis: usize, idx: usize) -> f64 {
        let n = self.steps[axis];
        if n == 1 {
            return self.lo[axis];
        }
        if idx + 1 == n {
            return self.hi[axis];
        }
        self.lo[axis] + (self.hi[axis] - self.lo[axis]) * idx as f64 / (n - 1) as f64
    }

    /// Writes the `flat`-th lattice point (last axis fastest) into `out`.
    pub fn point_into(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for axis in (0..self.dim()).rev() {
            let n = self.steps[axis];
            out[axis] = self.axis_value(axis, rem % n);
            rem /= n;
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point_into(flat, &mut p);
        p
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        let g = BoxGrid::square(-60.0, -0.1, 200).unwrap();
        assert_eq!(g.len(), 40_000);
        assert_eq!(g.point(0), vec![-60.0, -60.0]);
        assert_eq!(g.point(g.len() - 1), vec![-0.1, -0.1]);
        assert_eq!(g.point(1), vec![-60.0, g.axis_value(1, 1)]);
    }

    #[test]
    fn spacing_grid_hits_zero() {
        let g = BoxGrid::with_spacing(-60.0, 60.0, 0.25, 2).unwrap();
        assert_eq!(g.steps, vec![481, 481]);
        assert!(g.points().any(|p| p == vec![0.0, 0.0]));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(BoxGrid::new(vec![0.0], vec![-1.0], vec![3]).is_err());
        assert!(BoxGrid::new(vec![0.0], vec![1.0], vec![0]).is_err());
        assert!(BoxGrid::new(vec![0.0, 0.0], vec![1.0], vec![2]).is_err());
    }
}
