//! Dyadic observation lattices.
//!
//! Fields are observed on the points of 2^(-level) Z^d that fall in the
//! closed window [0, window]^d, ordered lexicographically by coordinate.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    dimension: usize,
    level: u32,
    window: f64,
}

impl LatticeSpec {
    pub fn new(dimension: usize, level: u32, window: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter(
                "lattice dimension must be at least 1".into(),
            ));
        }
        if !(window.is_finite() && window > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lattice window must be finite and positive, got {window}"
            )));
        }
        if level > 26 {
            return Err(Error::InvalidParameter(format!(
                "refinement level {level} exceeds the supported maximum of 26"
            )));
        }
        Ok(LatticeSpec {
            dimension,
            level,
            window,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    /// Grid spacing 2^(-level); exact as a binary float.
    pub fn spacing(&self) -> f64 {
        2f64.powi(-(self.level as i32))
    }

    /// Number of lattice points per axis: floor(window * 2^level) + 1.
    pub fn points_per_axis(&self) -> usize {
        (self.window * 2f64.powi(self.level as i32)).floor() as usize + 1
    }

    /// Total number of lattice points, if it fits in a usize.
    pub fn point_count(&self) -> Result<usize> {
        let per_axis = self.points_per_axis();
        per_axis
            .checked_pow(self.dimension as u32)
            .ok_or_else(|| {
                Error::Resource(format!(
                    "lattice of {per_axis}^{} points overflows the address space",
                    self.dimension
                ))
            })
    }

    /// Coordinates along one axis, ascending from zero.
    pub fn axis_coords(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points_per_axis()).map(|i| i as f64 * h).collect()
    }

    /// Decode a lexicographic point index into per-axis indices.
    pub fn decode(&self, mut index: usize, out: &mut [usize]) {
        let per_axis = self.points_per_axis();
        for slot in out.iter_mut().rev() {
            *slot = index % per_axis;
            index /= per_axis;
        }
    }
}

/// Enumerate all lattice points in lexicographic order.
///
/// Fails with a resource error naming the point count when it would exceed
/// `max_points`.
pub fn lattice_points(spec: &LatticeSpec, max_points: usize) -> Result<Vec<Vec<f64>>> {
    let count = spec.point_count()?;
    if count > max_points {
        return Err(Error::Resource(format!(
            "lattice would hold {count} points, over the budget of {max_points}"
        )));
    }
    let axis = spec.axis_coords();
    let d = spec.dimension();
    let mut points = Vec::with_capacity(count);
    let mut idx = vec![0usize; d];
    loop {
        points.push(idx.iter().map(|&i| axis[i]).collect());
        // odometer increment, last axis fastest
        let mut k = d;
        loop {
            if k == 0 {
                return Ok(points);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axis.len() {
                break;
            }
            idx[k] = 0;
        }
    }
}
