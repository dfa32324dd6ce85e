//! Initial-condition constructors: interface profiles, classic vortex
//! velocities, and seeded band-limited random fields.
//!
//! The random constructors are fully deterministic in their seed: modes are
//! filled in a fixed traversal order from a counter-based RNG, so the same
//! seed gives bit-identical fields on every run and platform.

use crate::error::Result;
use crate::fft::{forward_vector, inverse_transform, inverse_vector};
use crate::field::{ScalarField, SpectralField, VectorField};
use crate::grid::Grid;
use crate::norms::norm_l2_vector;
use crate::ops::{dealias_spectral, leray_spectral};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;

/// Minimal-image displacement from `center`, component-wise.
fn wrapped_delta(x: &[f64], center: &[f64], box_length: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(center)
        .zip(box_length)
        .map(|((&xi, &ci), &l)| {
            let mut d = (xi - ci) % l;
            if d > 0.5 * l {
                d -= l;
            } else if d < -0.5 * l {
                d += l;
            }
            d
        })
        .collect()
}

/// Diffuse circular (spherical) interface:
/// phi = tanh((r0 - |x - x0|) / (sqrt(2) eps)), +1 inside, -1 outside.
pub fn tanh_disk(grid: &Grid, center: &[f64], radius: f64, epsilon: f64) -> Result<ScalarField> {
    let bl = grid.box_length().to_vec();
    let c = center.to_vec();
    let w = std::f64::consts::SQRT_2 * epsilon;
    ScalarField::from_fn(grid.clone(), move |x| {
        let d = wrapped_delta(x, &c, &bl);
        let r: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        ((radius - r) / w).tanh()
    })
}

/// Diffuse elliptical interface with semi-axes `axes`; the profile width is
/// set by the smallest semi-axis so the transition layer stays near
/// sqrt(2) eps everywhere.
pub fn tanh_ellipse(
    grid: &Grid,
    center: &[f64],
    axes: &[f64],
    epsilon: f64,
) -> Result<ScalarField> {
    let bl = grid.box_length().to_vec();
    let c = center.to_vec();
    let a = axes.to_vec();
    let scale = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let w = std::f64::consts::SQRT_2 * epsilon;
    ScalarField::from_fn(grid.clone(), move |x| {
        let d = wrapped_delta(x, &c, &bl);
        let rho: f64 = d
            .iter()
            .zip(&a)
            .map(|(v, ax)| (v / ax) * (v / ax))
            .sum::<f64>()
            .sqrt();
        (scale * (1.0 - rho) / w).tanh()
    })
}

/// Random real field whose spectrum is confined to integer modes with
/// |m_j| <= band on every axis, rescaled to the requested max amplitude.
pub fn random_band_limited(
    grid: &Grid,
    seed: u64,
    band: i64,
    amplitude: f64,
) -> Result<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SpectralField::zeros(grid.clone());
    let shape = grid.resolution().to_vec();
    let d = shape.len();
    let mut ix = vec![0usize; d];
    for idx in 0..grid.len() {
        let inside = (0..d).all(|a| grid.mode(a, ix[a]).abs() <= band);
        if inside {
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = rng.gen_range(-1.0..1.0);
            s.coeffs_mut()[idx] = Complex::new(re, im);
        }
        for axis in (0..d).rev() {
            ix[axis] += 1;
            if ix[axis] < shape[axis] {
                break;
            }
            ix[axis] = 0;
        }
    }
    s.enforce_conjugate_symmetry();
    let raw = inverse_transform(&s);
    let peak = raw.max_abs();
    let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
    Ok(raw.scale(scale))
}

/// Divergence-free random velocity with spectrum confined to |m_j| <= band,
/// zero mean, rescaled to the requested L2 norm.
pub fn random_solenoidal(
    grid: &Grid,
    seed: u64,
    band: i64,
    l2_amplitude: f64,
) -> Result<VectorField> {
    let comps: Result<Vec<ScalarField>> = (0..grid.dimension())
        .map(|axis| random_band_limited(grid, seed.wrapping_add(axis as u64 + 1), band, 1.0))
        .collect();
    let v = VectorField::from_components(comps?)?;
    let mut spectra = forward_vector(&v)?;
    for s in &mut spectra {
        s.coeffs_mut()[0] = Complex::new(0.0, 0.0);
        dealias_spectral(s);
    }
    leray_spectral(&mut spectra);
    let projected = inverse_vector(&spectra)?;
    let n = norm_l2_vector(&projected);
    let scale = if n > 0.0 { l2_amplitude / n } else { 0.0 };
    Ok(projected.map_components(|c| c.scale(scale)))
}

/// Classic cellular vortex, divergence-free and mean-free on any box.
pub fn taylor_green(grid: &Grid, amplitude: f64) -> Result<VectorField> {
    let l = grid.box_length().to_vec();
    let two_pi = 2.0 * std::f64::consts::PI;
    let d = grid.dimension();
    let mut comps = Vec::with_capacity(d);
    if d == 2 {
        let (l0, l1) = (l[0], l[1]);
        comps.push(ScalarField::from_fn(grid.clone(), move |x| {
            amplitude * (two_pi * x[0] / l0).sin() * (two_pi * x[1] / l1).cos()
        })?);
        let (l0, l1) = (l[0], l[1]);
        comps.push(ScalarField::from_fn(grid.clone(), move |x| {
            -amplitude * (l1 / l0) * (two_pi * x[0] / l0).cos() * (two_pi * x[1] / l1).sin()
        })?);
    } else {
        let (l0, l1, l2) = (l[0], l[1], l[2]);
        comps.push(ScalarField::from_fn(grid.clone(), move |x| {
            amplitude
                * (two_pi * x[0] / l0).sin()
                * (two_pi * x[1] / l1).cos()
                * (two_pi * x[2] / l2).cos()
        })?);
        let (l0, l1, l2) = (l[0], l[1], l[2]);
        comps.push(ScalarField::from_fn(grid.clone(), move |x| {
            -amplitude
                * (l1 / l0)
                * (two_pi * x[0] / l0).cos()
                * (two_pi * x[1] / l1).sin()
                * (two_pi * x[2] / l2).cos()
        })?);
        comps.push(ScalarField::zeros(grid.clone()));
    }
    VectorField::from_components(comps)
}
