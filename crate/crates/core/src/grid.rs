//! Uniform periodic grids in two or three dimensions.
//!
//! A grid fixes the collocation points `x_j = i * L_j / n_j` and the discrete
//! Fourier modes used everywhere else. Mode indices follow the usual FFT
//! ordering: index `i` along an axis of length `n` carries the integer mode
//! `i` for `i <= n/2` and `i - n` above. Wavenumbers are scaled by `2*pi/L`.
//!
//! Two wavenumber conventions coexist on purpose:
//! * `wavenumber`: used by first-order operators (gradient, divergence,
//!   Leray projection). The Nyquist mode is mapped to zero so odd-order
//!   derivatives of real fields stay real.
//! * `wavenumber_magnitude`: used by even-order symbols (`|k|^2`, `|k|^4`),
//!   where the Nyquist mode keeps its full magnitude `n/2 * 2*pi/L`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    resolution: Vec<usize>,
    box_length: Vec<f64>,
}

impl Grid {
    pub fn new(resolution: &[usize], box_length: &[f64]) -> Result<Grid> {
        let d = resolution.len();
        if d != 2 && d != 3 {
            return Err(Error::Grid(format!("dimension must be 2 or 3, got {d}")));
        }
        if box_length.len() != d {
            return Err(Error::Grid(format!(
                "box_length has {} entries but resolution has {d}",
                box_length.len()
            )));
        }
        for (axis, &n) in resolution.iter().enumerate() {
            if n < MIN_RESOLUTION {
                return Err(Error::Grid(format!(
                    "resolution[{axis}] = {n} is below the minimum of {MIN_RESOLUTION}"
                )));
            }
        }
        for (axis, &l) in box_length.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Grid(format!(
                    "box_length[{axis}] = {l} must be finite and positive"
                )));
            }
        }
        Ok(Grid {
            resolution: resolution.to_vec(),
            box_length: box_length.to_vec(),
        })
    }

    /// Square / cubic grid on the unit box.
    pub fn unit(dimension: usize, n: usize) -> Result<Grid> {
        Grid::new(&vec![n; dimension], &vec![1.0; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.resolution.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn box_length(&self) -> &[f64] {
        &self.box_length
    }

    /// Total number of collocation points.
    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of the periodic box.
    pub fn volume(&self) -> f64 {
        self.box_length.iter().product()
    }

    /// Quadrature weight of a single collocation point (equal-weight rule).
    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    /// Signed integer mode for FFT index `i` along `axis`; Nyquist keeps `+n/2`.
    pub fn mode(&self, axis: usize, i: usize) -> i64 {
        let n = self.resolution[axis] as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Wavenumber for first-order derivative symbols; Nyquist mapped to zero.
    pub fn wavenumber(&self, axis: usize, i: usize) -> f64 {
        let n = self.resolution[axis];
        if n % 2 == 0 && i == n / 2 {
            return 0.0;
        }
        self.mode(axis, i) as f64 * 2.0 * std::f64::consts::PI / self.box_length[axis]
    }

    /// |k| along one axis for even-order symbols; Nyquist keeps full magnitude.
    pub fn wavenumber_magnitude(&self, axis: usize, i: usize) -> f64 {
        (self.mode(axis, i) as f64).abs() * 2.0 * std::f64::consts::PI / self.box_length[axis]
    }

    /// Largest integer mode kept by the 2/3-rule along `axis`.
    pub fn dealias_cutoff(&self, axis: usize) -> i64 {
        (self.resolution[axis] / 3) as i64
    }

    /// Physical coordinates of the collocation point with flat index `idx`.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension()];
        let mut rem = idx;
        for axis in (0..self.dimension()).rev() {
            let n = self.resolution[axis];
            let i = rem % n;
            rem /= n;
            out[axis] = i as f64 * self.box_length[axis] / n as f64;
        }
        out
    }

    /// Flat index of the point with per-axis indices `ix` (row-major, axis 0 slowest).
    pub fn flat_index(&self, ix: &[usize]) -> usize {
        let mut idx = 0;
        for (axis, &i) in ix.iter().enumerate() {
            idx = idx * self.resolution[axis] + i;
        }
        idx
    }

    /// Iterate per-axis index vectors in flat order.
    pub fn indices(&self) -> IndexIter {
        IndexIter {
            resolution: self.resolution.clone(),
            next: Some(vec![0; self.dimension()]),
        }
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self == other
    }

    pub fn check_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {:?} x {:?} vs {:?} x {:?}",
                self.resolution, self.box_length, other.resolution, other.box_length
            )))
        }
    }
}

pub struct IndexIter {
    resolution: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for IndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for axis in (0..succ.len()).rev() {
            succ[axis] += 1;
            if succ[axis] < self.resolution[axis] {
                self.next = Some(succ);
                return Some(current);
            }
            succ[axis] = 0;
        }
        // wrapped past the end
        Some(current)
    }
}
