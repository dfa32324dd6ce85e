//! Norms, means, and inner products over the periodic box.
//!
//! All physical-space quadrature is the equal-weight rule
//! `integral ~ cell_volume * sum(samples)`, which is spectrally accurate for
//! periodic smooth integrands. The higher-order norms follow the equivalent
//! forms valid for periodic fields:
//!
//!   H1 seminorm  = ||grad f||_L2
//!   H2 norm      = ||lap f||_L2        + |mean f|
//!   H3 norm      = ||grad(lap f)||_L2  + |mean f|

use crate::error::{Error, Result};
use crate::fft::forward_transform;
use crate::field::{ScalarField, VectorField};
use crate::ops::{gradient, laplacian};

/// Integral of `f` over the box.
pub fn integral(f: &ScalarField) -> f64 {
    f.values().iter().sum::<f64>() * f.grid().cell_volume()
}

/// Average value of `f` over the box.
pub fn mean(f: &ScalarField) -> f64 {
    f.values().iter().sum::<f64>() / f.grid().len() as f64
}

/// L2 inner product of two fields on the same grid.
pub fn inner_product(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.grid().check_same(g.grid(), "inner product")?;
    let dot: f64 = f.values().iter().zip(g.values()).map(|(a, b)| a * b).sum();
    Ok(dot * f.grid().cell_volume())
}

pub fn norm_l2(f: &ScalarField) -> f64 {
    let sq: f64 = f.values().iter().map(|v| v * v).sum();
    (sq * f.grid().cell_volume()).sqrt()
}

/// L2 norm evaluated from Fourier coefficients; used as a cross-check on the
/// quadrature route (the two agree by the discrete Parseval identity).
pub fn norm_l2_spectral(f: &ScalarField) -> Result<f64> {
    let s = forward_transform(f)?;
    let sum: f64 = s.coeffs().iter().map(|c| c.norm_sqr()).sum();
    Ok((sum * f.grid().volume()).sqrt())
}

/// Lp norm for 1 <= p <= infinity; `p < 1` is not a norm and is rejected.
pub fn norm_lp(f: &ScalarField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidParameter {
            name: "p".into(),
            constraint: format!("Lp norms require p >= 1, got {p}"),
        });
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let sum: f64 = f.values().iter().map(|v| v.abs().powf(p)).sum();
    Ok((sum * f.grid().cell_volume()).powf(1.0 / p))
}

/// L2 norm of a vector field (root sum of squared component norms).
pub fn norm_l2_vector(v: &VectorField) -> f64 {
    v.components()
        .iter()
        .map(|c| {
            let n = norm_l2(c);
            n * n
        })
        .sum::<f64>()
        .sqrt()
}

/// Lp norm of the pointwise Euclidean magnitude of a vector field.
pub fn norm_lp_vector(v: &VectorField, p: f64) -> Result<f64> {
    let mag = pointwise_magnitude(v);
    norm_lp(&mag, p)
}

/// Pointwise Euclidean magnitude |v|(x) as a scalar field.
pub fn pointwise_magnitude(v: &VectorField) -> ScalarField {
    let grid = v.grid().clone();
    let n = grid.len();
    let mut out = vec![0.0; n];
    for c in v.components() {
        for (slot, &x) in out.iter_mut().zip(c.values()) {
            *slot += x * x;
        }
    }
    for slot in &mut out {
        *slot = slot.sqrt();
    }
    ScalarField::from_raw_unchecked(grid, out)
}

pub fn seminorm_h1(f: &ScalarField) -> Result<f64> {
    Ok(norm_l2_vector(&gradient(f)?))
}

pub fn norm_h2(f: &ScalarField) -> Result<f64> {
    Ok(norm_l2(&laplacian(f)?) + mean(f).abs())
}

pub fn norm_h3(f: &ScalarField) -> Result<f64> {
    let lap = laplacian(f)?;
    Ok(norm_l2_vector(&gradient(&lap)?) + mean(f).abs())
}

pub fn norm_h4(f: &ScalarField) -> Result<f64> {
    let lap = laplacian(f)?;
    Ok(norm_l2(&laplacian(&lap)?) + mean(f).abs())
}

/// Frobenius L2 norm of the velocity gradient, ||grad u||_L2.
pub fn grad_norm_l2(v: &VectorField) -> Result<f64> {
    let mut sq = 0.0;
    for c in v.components() {
        let g = gradient(c)?;
        for gc in g.components() {
            let n = norm_l2(gc);
            sq += n * n;
        }
    }
    Ok(sq.sqrt())
}

/// Pointwise Frobenius magnitude |grad u|(x) of the velocity gradient tensor.
pub fn grad_magnitude(v: &VectorField) -> Result<ScalarField> {
    let grid = v.grid().clone();
    let mut acc = vec![0.0; grid.len()];
    for c in v.components() {
        let g = gradient(c)?;
        for gc in g.components() {
            for (slot, &x) in acc.iter_mut().zip(gc.values()) {
                *slot += x * x;
            }
        }
    }
    for slot in &mut acc {
        *slot = slot.sqrt();
    }
    Ok(ScalarField::from_raw_unchecked(grid, acc))
}
