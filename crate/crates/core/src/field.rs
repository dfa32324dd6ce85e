//! Field containers: real scalar fields, velocity-like vector fields, and
//! complex Fourier coefficient arrays. Storage is flat row-major with axis 0
//! slowest, matching `Grid::flat_index`.

use crate::error::{Error, Result};
use crate::grid::Grid;
use rustfft::num_complex::Complex;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    /// Build from raw samples; every entry must be finite.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "field has {} samples but grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        check_finite(&values, "scalar field")?;
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid) -> ScalarField {
        let n = grid.len();
        ScalarField {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Constructor for transform output. Skips the finite check so that the
    /// divergence guard in the steppers can observe an overflowed state
    /// instead of panicking mid-synthesis.
    pub(crate) fn from_raw_unchecked(grid: Grid, values: Vec<f64>) -> ScalarField {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Result<ScalarField> {
        let n = grid.len();
        if !c.is_finite() {
            return Err(Error::NonFinite {
                context: "constant field",
                index: 0,
                value: c,
            });
        }
        Ok(ScalarField {
            grid,
            values: vec![c; n],
        })
    }

    /// Sample a function of the physical coordinates at every grid point.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Result<ScalarField> {
        let mut values = Vec::with_capacity(grid.len());
        for ix in grid.indices() {
            let x: Vec<f64> = ix
                .iter()
                .enumerate()
                .map(|(a, &i)| i as f64 * grid.box_length()[a] / grid.resolution()[a] as f64)
                .collect();
            values.push(f(&x));
        }
        ScalarField::from_values(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Pointwise map into a new field (caller guarantees finiteness).
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.grid.check_same(&other.grid, "pointwise combination")?;
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip(other, |a, b| a - b)
    }

    /// a*self + b*other, used all over the steppers.
    pub fn axpy(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField> {
        self.zip(other, |x, y| a * x + b * y)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Velocity-style field: one scalar component per spatial axis, all on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn from_components(components: Vec<ScalarField>) -> Result<VectorField> {
        if components.is_empty() {
            return Err(Error::Grid("vector field needs at least one component".into()));
        }
        let d = components[0].grid().dimension();
        if components.len() != d {
            return Err(Error::Grid(format!(
                "vector field has {} components on a {d}-dimensional grid",
                components.len()
            )));
        }
        for c in &components[1..] {
            components[0]
                .grid()
                .check_same(c.grid(), "vector field components")?;
        }
        Ok(VectorField { components })
    }

    pub fn zeros(grid: Grid) -> VectorField {
        let d = grid.dimension();
        VectorField {
            components: (0..d).map(|_| ScalarField::zeros(grid.clone())).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, j: usize) -> &ScalarField {
        &self.components[j]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [ScalarField] {
        &mut self.components
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.components
    }

    pub fn map_components(&self, f: impl Fn(&ScalarField) -> ScalarField) -> VectorField {
        VectorField {
            components: self.components.iter().map(f).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .fold(0.0f64, |m, c| m.max(c.max_abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }
}

/// Fourier coefficients of a real field, stored as a full complex array with
/// the conjugate symmetry `c(-k) = conj(c(k))` maintained explicitly.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex<f64>>,
}

impl SpectralField {
    pub(crate) fn from_raw(grid: Grid, coeffs: Vec<Complex<f64>>) -> SpectralField {
        debug_assert_eq!(coeffs.len(), grid.len());
        SpectralField { grid, coeffs }
    }

    pub fn zeros(grid: Grid) -> SpectralField {
        let n = grid.len();
        SpectralField {
            grid,
            coeffs: vec![Complex::new(0.0, 0.0); n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex<f64>] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex<f64>] {
        &mut self.coeffs
    }

    /// Coefficient of the zero mode, i.e. the mean value of the field.
    pub fn zero_mode(&self) -> Complex<f64> {
        self.coeffs[0]
    }

    /// Average the coefficient pairs (k, -k) so the array is exactly
    /// conjugate-symmetric; self-paired modes are forced real.
    pub fn enforce_conjugate_symmetry(&mut self) {
        let shape: Vec<usize> = self.grid.resolution().to_vec();
        let d = shape.len();
        let n = self.coeffs.len();
        let mut ix = vec![0usize; d];
        for idx in 0..n {
            // partner index with every axis negated mod n
            let mut partner = 0usize;
            for (axis, &i) in ix.iter().enumerate() {
                let m = shape[axis];
                let neg = if i == 0 { 0 } else { m - i };
                partner = partner * m + neg;
            }
            if partner > idx {
                let avg = 0.5 * (self.coeffs[idx] + self.coeffs[partner].conj());
                self.coeffs[idx] = avg;
                self.coeffs[partner] = avg.conj();
            } else if partner == idx {
                self.coeffs[idx] = Complex::new(self.coeffs[idx].re, 0.0);
            }
            // advance mixed-radix counter
            for axis in (0..d).rev() {
                ix[axis] += 1;
                if ix[axis] < shape[axis] {
                    break;
                }
                ix[axis] = 0;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }

    pub fn add_scaled(&mut self, other: &SpectralField, s: f64) {
        debug_assert!(self.grid.same_as(&other.grid));
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }
}

pub(crate) fn check_finite(values: &[f64], context: &'static str) -> Result<()> {
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context,
                index,
                value,
            });
        }
    }
    Ok(())
}
