//! Differential and projection operators, all diagonal in Fourier space.
//!
//! Derivative operators use the Nyquist-zeroed wavenumbers from `Grid` so
//! that odd-order derivatives of real fields are real; the Laplacian and
//! bilaplacian use the full squared magnitudes. The 2/3-rule filter zeroes
//! every coefficient whose integer mode exceeds `floor(n/3)` on any axis.

use crate::error::Result;
use crate::fft::{forward_transform, forward_vector, inverse_transform, inverse_vector};
use crate::field::{ScalarField, SpectralField, VectorField};
use crate::grid::Grid;
use rustfft::num_complex::Complex;

/// Precomputed per-axis symbol tables for one grid.
struct Symbols {
    /// Derivative wavenumber per axis per index (Nyquist zeroed).
    k_deriv: Vec<Vec<f64>>,
    /// Squared wavenumber magnitude per axis per index (Nyquist kept).
    k_sq: Vec<Vec<f64>>,
    /// Dealias keep-mask per axis per index.
    keep: Vec<Vec<bool>>,
}

impl Symbols {
    fn new(grid: &Grid) -> Symbols {
        let d = grid.dimension();
        let mut k_deriv = Vec::with_capacity(d);
        let mut k_sq = Vec::with_capacity(d);
        let mut keep = Vec::with_capacity(d);
        for axis in 0..d {
            let n = grid.resolution()[axis];
            let cutoff = grid.dealias_cutoff(axis);
            k_deriv.push((0..n).map(|i| grid.wavenumber(axis, i)).collect());
            k_sq.push(
                (0..n)
                    .map(|i| {
                        let k = grid.wavenumber_magnitude(axis, i);
                        k * k
                    })
                    .collect(),
            );
            keep.push((0..n).map(|i| grid.mode(axis, i).abs() <= cutoff).collect());
        }
        Symbols { k_deriv, k_sq, keep }
    }
}

/// Visit every coefficient together with its per-axis indices.
fn for_each_mode(grid: &Grid, mut f: impl FnMut(usize, &[usize])) {
    let shape = grid.resolution();
    let d = shape.len();
    let mut ix = vec![0usize; d];
    let n = grid.len();
    for idx in 0..n {
        f(idx, &ix);
        for axis in (0..d).rev() {
            ix[axis] += 1;
            if ix[axis] < shape[axis] {
                break;
            }
            ix[axis] = 0;
        }
    }
}

/// Visit every coefficient index together with its squared wavenumber
/// magnitude |k|^2 (full Nyquist magnitude); used by the diagonal solves.
pub fn for_each_ksq(grid: &Grid, mut f: impl FnMut(usize, f64)) {
    let sym = Symbols::new(grid);
    let d = grid.dimension();
    for_each_mode(grid, |idx, ix| {
        let ksq: f64 = (0..d).map(|a| sym.k_sq[a][ix[a]]).sum();
        f(idx, ksq);
    });
}

/// d/dx_axis in place on the coefficients.
pub fn derivative_spectral(s: &SpectralField, axis: usize) -> SpectralField {
    let grid = s.grid().clone();
    let sym = Symbols::new(&grid);
    let mut out = s.clone();
    for_each_mode(&grid, |idx, ix| {
        let k = sym.k_deriv[axis][ix[axis]];
        out.coeffs_mut()[idx] = s.coeffs()[idx] * Complex::new(0.0, k);
    });
    out
}

/// Multiply by -|k|^2 in place.
pub fn laplacian_spectral(s: &mut SpectralField) {
    let grid = s.grid().clone();
    let sym = Symbols::new(&grid);
    for_each_mode(&grid, |idx, ix| {
        let ksq: f64 = (0..grid.dimension()).map(|a| sym.k_sq[a][ix[a]]).sum();
        s.coeffs_mut()[idx] *= -ksq;
    });
}

/// Zero every mode outside the 2/3 band, in place.
pub fn dealias_spectral(s: &mut SpectralField) {
    let grid = s.grid().clone();
    let sym = Symbols::new(&grid);
    for_each_mode(&grid, |idx, ix| {
        let keep = (0..grid.dimension()).all(|a| sym.keep[a][ix[a]]);
        if !keep {
            s.coeffs_mut()[idx] = Complex::new(0.0, 0.0);
        }
    });
}

/// Remove the discretely divergent part of the coefficient vector, leaving
/// the zero mode of every component untouched.
pub fn leray_spectral(spectra: &mut [SpectralField]) {
    let grid = spectra[0].grid().clone();
    let d = grid.dimension();
    debug_assert_eq!(spectra.len(), d);
    let sym = Symbols::new(&grid);
    for_each_mode(&grid, |idx, ix| {
        let k: Vec<f64> = (0..d).map(|a| sym.k_deriv[a][ix[a]]).collect();
        let ksq: f64 = k.iter().map(|x| x * x).sum();
        if ksq == 0.0 {
            return;
        }
        let mut dot = Complex::new(0.0, 0.0);
        for a in 0..d {
            dot += spectra[a].coeffs()[idx] * k[a];
        }
        let factor = dot / ksq;
        for a in 0..d {
            let c = spectra[a].coeffs()[idx] - factor * k[a];
            spectra[a].coeffs_mut()[idx] = c;
        }
    });
    for s in spectra.iter_mut() {
        s.enforce_conjugate_symmetry();
    }
}

/// Spectral gradient of a physical field.
pub fn gradient(f: &ScalarField) -> Result<VectorField> {
    let s = forward_transform(f)?;
    let comps: Vec<ScalarField> = (0..f.grid().dimension())
        .map(|axis| inverse_transform(&derivative_spectral(&s, axis)))
        .collect();
    VectorField::from_components(comps)
}

pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    let mut s = forward_transform(f)?;
    laplacian_spectral(&mut s);
    Ok(inverse_transform(&s))
}

/// Fourth-order operator, the square of the Laplacian symbol.
pub fn bilaplacian(f: &ScalarField) -> Result<ScalarField> {
    let mut s = forward_transform(f)?;
    laplacian_spectral(&mut s);
    laplacian_spectral(&mut s);
    Ok(inverse_transform(&s))
}

pub fn divergence(v: &VectorField) -> Result<ScalarField> {
    let spectra = forward_vector(v)?;
    let grid = v.grid().clone();
    let mut acc = SpectralField::zeros(grid.clone());
    for (axis, s) in spectra.iter().enumerate() {
        let ds = derivative_spectral(s, axis);
        acc.add_scaled(&ds, 1.0);
    }
    acc.enforce_conjugate_symmetry();
    Ok(inverse_transform(&acc))
}

/// Project a vector field onto its divergence-free part. Idempotent; the
/// mean (zero mode) of every component is preserved exactly.
pub fn leray_project(v: &VectorField) -> Result<VectorField> {
    let mut spectra = forward_vector(v)?;
    leray_spectral(&mut spectra);
    inverse_vector(&spectra)
}

/// Apply the 2/3-rule filter to a physical field.
pub fn dealias(f: &ScalarField) -> Result<ScalarField> {
    let mut s = forward_transform(f)?;
    dealias_spectral(&mut s);
    Ok(inverse_transform(&s))
}

/// Pointwise product of two fields followed by the 2/3-rule filter — the
/// canonical way every nonlinear term is formed.
pub fn dealiased_product(a: &ScalarField, b: &ScalarField) -> Result<ScalarField> {
    let raw = a.zip(b, |x, y| x * y)?;
    dealias(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const EXACT: f64 = 1e-10;

    fn trig(grid: &Grid, m: &[i64]) -> ScalarField {
        ScalarField::from_fn(grid.clone(), |x| {
            let arg: f64 = x
                .iter()
                .zip(m)
                .zip(grid.box_length())
                .map(|((xi, &c), l)| 2.0 * PI * c as f64 * xi / l)
                .sum();
            arg.sin()
        })
        .unwrap()
    }

    #[test]
    fn gradient_of_single_harmonic_is_exact() {
        let g = Grid::new(&[32, 24], &[1.0, 2.0]).unwrap();
        let f = trig(&g, &[3, -2]);
        let grad = gradient(&f).unwrap();
        let kx = 2.0 * PI * 3.0;
        let ky = 2.0 * PI * -2.0 / 2.0;
        let expect_x = ScalarField::from_fn(g.clone(), |x| {
            kx * (kx * x[0] + ky * x[1]).cos()
        })
        .unwrap();
        let expect_y =
            ScalarField::from_fn(g, |x| ky * (kx * x[0] + ky * x[1]).cos()).unwrap();
        let scale = kx.abs().max(1.0);
        for (a, b) in grad.component(0).values().iter().zip(expect_x.values()) {
            assert!((a - b).abs() < EXACT * scale);
        }
        for (a, b) in grad.component(1).values().iter().zip(expect_y.values()) {
            assert!((a - b).abs() < EXACT * scale);
        }
    }

    #[test]
    fn laplacian_and_bilaplacian_match_symbols() {
        let g = Grid::unit(2, 32).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| {
            (2.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).cos()
        })
        .unwrap();
        let ksq = (2.0 * PI).powi(2) + (4.0 * PI).powi(2);
        let lap = laplacian(&f).unwrap();
        let bilap = bilaplacian(&f).unwrap();
        for ((l, b), v) in lap.values().iter().zip(bilap.values()).zip(f.values()) {
            assert!((l + ksq * v).abs() < EXACT * ksq);
            assert!((b - ksq * ksq * v).abs() < EXACT * ksq * ksq);
        }
    }

    #[test]
    fn bilaplacian_equals_iterated_laplacian() {
        let g = Grid::unit(3, 16).unwrap();
        let f = ScalarField::from_fn(g, |x| {
            (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos() + (4.0 * PI * x[2]).sin()
        })
        .unwrap();
        let twice = laplacian(&laplacian(&f).unwrap()).unwrap();
        let direct = bilaplacian(&f).unwrap();
        let scale = direct.max_abs().max(1.0);
        for (a, b) in twice.values().iter().zip(direct.values()) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn divergence_of_gradient_matches_laplacian() {
        let g = Grid::new(&[24, 16], &[1.5, 1.0]).unwrap();
        let f = ScalarField::from_fn(g, |x| {
            (2.0 * PI * x[0] / 1.5).cos() + (2.0 * PI * (x[0] / 1.5 + x[1])).sin()
        })
        .unwrap();
        let div_grad = divergence(&gradient(&f).unwrap()).unwrap();
        let lap = laplacian(&f).unwrap();
        let scale = lap.max_abs().max(1.0);
        for (a, b) in div_grad.values().iter().zip(lap.values()) {
            assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn dealias_zeroes_exactly_the_high_band() {
        let g = Grid::unit(2, 24).unwrap(); // cutoff floor(24/3) = 8
        let keep = trig(&g, &[8, 0]);
        let kill = trig(&g, &[9, 0]);
        let f = keep.add(&kill).unwrap();
        let filtered = dealias(&f).unwrap();
        let scale = keep.max_abs().max(1.0);
        for (a, b) in filtered.values().iter().zip(keep.values()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn leray_annihilates_gradients_and_fixes_divergence_free_fields() {
        let g = Grid::unit(2, 32).unwrap();
        // divergence-free: rotated harmonic
        let stream = trig(&g, &[2, 1]);
        let grad = gradient(&stream).unwrap();
        let div_free = VectorField::from_components(vec![
            grad.component(1).clone(),
            grad.component(0).scale(-1.0),
        ])
        .unwrap();
        let projected = leray_project(&div_free).unwrap();
        let scale = div_free.max_abs().max(1.0);
        for (c, p) in div_free.components().iter().zip(projected.components()) {
            for (a, b) in c.values().iter().zip(p.values()) {
                assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
        // pure gradient maps to zero
        let pure_grad = gradient(&trig(&g, &[1, 3])).unwrap();
        let killed = leray_project(&pure_grad).unwrap();
        assert!(killed.max_abs() <= 1e-10 * pure_grad.max_abs().max(1.0));
    }

    #[test]
    fn shear_flow_is_untouched_in_3d() {
        let g = Grid::unit(3, 16).unwrap();
        let u = VectorField::from_components(vec![
            trig(&g, &[0, 1, 0]),
            ScalarField::zeros(g.clone()),
            ScalarField::zeros(g),
        ])
        .unwrap();
        let p = leray_project(&u).unwrap();
        for (c, q) in u.components().iter().zip(p.components()) {
            for (a, b) in c.values().iter().zip(q.values()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn derivative_commutes_with_lattice_translation() {
        let g = Grid::unit(2, 32).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x| {
            (2.0 * PI * x[0]).sin() + 0.5 * (2.0 * PI * (2.0 * x[0] + 3.0 * x[1])).cos()
        })
        .unwrap();
        // shift by 5 cells along axis 0
        let shift = |field: &ScalarField| {
            let mut v = vec![0.0; field.grid().len()];
            let n0 = field.grid().resolution()[0];
            let n1 = field.grid().resolution()[1];
            for i in 0..n0 {
                for j in 0..n1 {
                    v[((i + 5) % n0) * n1 + j] = field.values()[i * n1 + j];
                }
            }
            ScalarField::from_values(field.grid().clone(), v).unwrap()
        };
        let a = shift(&laplacian(&f).unwrap());
        let b = laplacian(&shift(&f)).unwrap();
        let scale = a.max_abs().max(1.0);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12 * scale);
        }
    }
}
