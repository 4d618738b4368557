//! Midpoint quadrature over axis-aligned boxes.
//!
//! The grid pitch is 1/resolution.  Box endpoints are snapped outward to
//! multiples of the pitch before subdividing, which makes the rule exact for
//! indicators of intervals whose endpoints are themselves on the snapped
//! grid, and in particular for unit-length indicator kernels on any
//! resolution: a length-one interval always contains exactly `resolution`
//! midpoints.

use crate::error::{Error, Result};

pub const DEFAULT_RESOLUTION: u32 = 16;
pub const DEFAULT_CELL_BUDGET: usize = 40_000_000;

/// One subdivided axis: snapped origin, cell count and pitch.
#[derive(Debug, Clone, Copy)]
pub struct AxisGrid {
    pub origin: f64,
    pub cells: usize,
    pub pitch: f64,
}

impl AxisGrid {
    pub fn new(lo: f64, hi: f64, resolution: u32) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "quadrature axis [{lo}, {hi}] must be a finite interval"
            )));
        }
        if resolution == 0 {
            return Err(Error::InvalidParameter(
                "quadrature resolution must be at least 1".into(),
            ));
        }
        let r = resolution as f64;
        let snapped_lo = (lo * r).floor() / r;
        let snapped_hi = (hi * r).ceil() / r;
        let cells = ((snapped_hi - snapped_lo) * r).round() as usize;
        Ok(AxisGrid {
            origin: snapped_lo,
            cells: cells.max(1),
            pitch: 1.0 / r,
        })
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        self.origin + (i as f64 + 0.5) * self.pitch
    }
}

/// Midpoint rule over a product of axes.  The integrand receives each cell
/// midpoint; the result is the sum of values times the cell volume.
///
/// Fails with a resource error naming the cell count when the grid exceeds
/// `cell_budget`.
pub fn integrate_box(
    axes: &[(f64, f64)],
    resolution: u32,
    cell_budget: usize,
    mut integrand: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    let grids: Vec<AxisGrid> = axes
        .iter()
        .map(|&(lo, hi)| AxisGrid::new(lo, hi, resolution))
        .collect::<Result<_>>()?;
    let mut total_cells: usize = 1;
    for g in &grids {
        total_cells = total_cells.checked_mul(g.cells).ok_or_else(|| {
            Error::Resource("quadrature grid size overflows the address space".into())
        })?;
    }
    if total_cells > cell_budget {
        return Err(Error::Resource(format!(
            "quadrature grid holds {total_cells} cells, over the budget of {cell_budget}"
        )));
    }
    let volume: f64 = grids.iter().map(|g| g.pitch).product();
    let d = grids.len();
    let mut idx = vec![0usize; d];
    let mut mid = vec![0.0f64; d];
    for (k, m) in mid.iter_mut().enumerate() {
        *m = grids[k].midpoint(0);
    }
    let mut sum = 0.0;
    loop {
        sum += integrand(&mid);
        let mut k = d;
        loop {
            if k == 0 {
                return Ok(sum * volume);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < grids[k].cells {
                mid[k] = grids[k].midpoint(idx[k]);
                break;
            }
            idx[k] = 0;
            mid[k] = grids[k].midpoint(0);
        }
    }
}

/// Standard normal density, used to weight Gaussian factors.
pub fn normal_density(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
