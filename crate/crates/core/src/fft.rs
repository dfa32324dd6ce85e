//! Discrete Fourier transforms on grid fields, built on rustfft.
//!
//! Normalization: the forward transform divides by the total number of
//! points, so the zero mode equals the field mean and the discrete Parseval
//! identity reads  mean(|f|^2) = sum_k |c_k|^2.  The inverse transform is
//! then the plain unnormalized synthesis sum.
//!
//! Plans are cached in a process-wide planner guarded by a mutex; transforms
//! themselves run lock-free, so concurrent transforms of distinct fields are
//! safe.

use crate::error::{Error, Result};
use crate::field::{ScalarField, SpectralField, VectorField};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::sync::{Arc, Mutex, OnceLock};

static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    let mut planner = PLANNER
        .get_or_init(|| Mutex::new(FftPlanner::new()))
        .lock()
        .expect("fft planner lock poisoned");
    planner.plan_fft(len, direction)
}

/// Run an already-planned 1-d FFT along `axis` of the row-major array.
fn transform_axis(data: &mut [Complex<f64>], shape: &[usize], axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut line = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for o in 0..outer {
        let block = o * n * stride;
        for s in 0..stride {
            let base = block + s;
            for (j, slot) in line.iter_mut().enumerate() {
                *slot = data[base + j * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (j, value) in line.iter().enumerate() {
                data[base + j * stride] = *value;
            }
        }
    }
}

fn transform_all_axes(data: &mut [Complex<f64>], shape: &[usize], direction: FftDirection) {
    for axis in 0..shape.len() {
        let fft = plan(shape[axis], direction);
        transform_axis(data, shape, axis, &fft);
    }
}

/// Physical samples -> normalized Fourier coefficients.
///
/// Rejects non-finite input, naming the first offending flat index. The
/// result is symmetrized so that `c(-k) = conj(c(k))` holds exactly.
pub fn forward_transform(field: &ScalarField) -> Result<SpectralField> {
    for (index, &value) in field.values().iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "forward transform input",
                index,
                value,
            });
        }
    }
    let grid = field.grid().clone();
    let mut data: Vec<Complex<f64>> = field
        .values()
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    transform_all_axes(&mut data, grid.resolution(), FftDirection::Forward);
    let scale = 1.0 / grid.len() as f64;
    for c in &mut data {
        *c *= scale;
    }
    let mut out = SpectralField::from_raw(grid, data);
    out.enforce_conjugate_symmetry();
    Ok(out)
}

/// Fourier coefficients -> physical samples (real part after synthesis).
pub fn inverse_transform(field: &SpectralField) -> ScalarField {
    let grid = field.grid().clone();
    let mut data = field.coeffs().to_vec();
    transform_all_axes(&mut data, grid.resolution(), FftDirection::Inverse);
    let values: Vec<f64> = data.iter().map(|c| c.re).collect();
    ScalarField::from_raw_unchecked(grid, values)
}


pub fn forward_vector(field: &VectorField) -> Result<Vec<SpectralField>> {
    field.components().iter().map(forward_transform).collect()
}

pub fn inverse_vector(spectra: &[SpectralField]) -> Result<VectorField> {
    VectorField::from_components(spectra.iter().map(inverse_transform).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn wave(grid: &Grid, counts: &[f64], phase: f64) -> ScalarField {
        ScalarField::from_fn(grid.clone(), |x| {
            let arg: f64 = x
                .iter()
                .zip(counts)
                .zip(grid.box_length())
                .map(|((xi, c), l)| 2.0 * std::f64::consts::PI * c * xi / l)
                .sum();
            (arg + phase).cos()
        })
        .unwrap()
    }

    #[test]
    fn constant_field_has_only_zero_mode() {
        let g = Grid::unit(2, 16).unwrap();
        let f = ScalarField::constant(g, 3.25).unwrap();
        let s = forward_transform(&f).unwrap();
        assert!((s.zero_mode().re - 3.25).abs() < 1e-13);
        assert!(s.zero_mode().im.abs() < 1e-13);
        let tail: f64 = s.coeffs()[1..].iter().map(|c| c.norm()).sum();
        assert!(tail < 1e-12, "residual tail {tail}");
    }

    #[test]
    fn cosine_splits_into_two_conjugate_modes() {
        let g = Grid::unit(2, 16).unwrap();
        let f = wave(&g, &[1.0, 0.0], 0.0);
        let s = forward_transform(&f).unwrap();
        let plus = g.flat_index(&[1, 0]);
        let minus = g.flat_index(&[15, 0]);
        assert!((s.coeffs()[plus].re - 0.5).abs() < 1e-13);
        assert!(s.coeffs()[plus].im.abs() < 1e-13);
        assert_eq!(s.coeffs()[plus], s.coeffs()[minus].conj());
        let rest: f64 = s
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != plus && *i != minus)
            .map(|(_, c)| c.norm())
            .sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn round_trip_is_identity() {
        let g = Grid::new(&[16, 12], &[1.0, 2.0]).unwrap();
        let f = ScalarField::from_fn(g, |x| {
            (2.0 * std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).cos()
                + 0.3 * (4.0 * std::f64::consts::PI * (x[0] + x[1] / 2.0)).cos()
        })
        .unwrap();
        let back = inverse_transform(&forward_transform(&f).unwrap());
        let scale = f.max_abs();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn parseval_holds() {
        let g = Grid::new(&[16, 8, 12], &[1.0, 0.5, 2.0]).unwrap();
        let f = ScalarField::from_fn(g, |x| {
            (2.0 * std::f64::consts::PI * (x[0] + 2.0 * x[1])).sin()
                + 0.5 * (std::f64::consts::PI * x[2]).cos()
                + 0.25
        })
        .unwrap();
        let s = forward_transform(&f).unwrap();
        let phys: f64 =
            f.values().iter().map(|v| v * v).sum::<f64>() / f.grid().len() as f64;
        let spec: f64 = s.coeffs().iter().map(|c| c.norm_sqr()).sum();
        assert!((phys - spec).abs() <= 1e-12 * phys.max(1.0));
    }

    #[test]
    fn rejects_non_finite_input_with_index() {
        let g = Grid::unit(2, 8).unwrap();
        let mut f = ScalarField::zeros(g);
        f.values_mut()[5] = 1.0;
        // poke a NaN in after construction via values_mut
        f.values_mut()[9] = f64::INFINITY;
        let err = forward_transform(&f).unwrap_err();
        match err {
            Error::NonFinite { index, .. } => assert_eq!(index, 9),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
