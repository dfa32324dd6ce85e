//! Bending energy of the phase field and its variational derivative.
//!
//! With `f(phi) = -eps * lap phi + (phi^2 - 1) phi / eps` the energy is
//!
//!   E(phi) = k/(2 eps) * int |f(phi)|^2
//!          + M1/2 * (A(phi) - alpha)^2
//!          + M2/2 * (B(phi) - beta)^2
//!
//! where A is the enclosed-volume functional `int phi` and B the interfacial
//! area functional `int eps/2 |grad phi|^2 + (phi^2-1)^2/(4 eps)`.
//!
//! The variational derivative is computed compositionally,
//!
//!   dE/dphi = k * [ -lap f + (3 phi^2 - 1) f / eps^2 ]
//!           + M1 (A - alpha) + M2 (B - beta) f,
//!
//! and, as an independent cross-check, in expanded form
//!
//!   dE/dphi = k eps lap^2 phi
//!           - 6k/eps phi |grad phi|^2 - 2k/eps (3 phi^2 - 1) lap phi
//!           + k/eps^3 (3 phi^2 - 1)(phi^3 - phi)
//!           + M1 (A - alpha) + M2 (B - beta) f.
//!
//! The two routes agree up to rounding; keeping both guards against algebra
//! slips in either. Every nonlinear product is formed pointwise in physical
//! space and passed once through the 2/3-rule filter.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::norms::{inner_product, integral, norm_l2};
use crate::ops::{bilaplacian, dealias, gradient, laplacian};
use serde::{Deserialize, Serialize};

/// Physical and penalty parameters of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Interface width parameter (> 0).
    pub epsilon: f64,
    /// Bending rigidity k (> 0).
    pub bending_rigidity: f64,
    /// Phase-field relaxation mobility gamma (> 0).
    pub mobility: f64,
    /// Kinematic viscosity mu (> 0).
    pub viscosity: f64,
    /// Volume penalty strength M1 (>= 0).
    pub volume_penalty: f64,
    /// Area penalty strength M2 (>= 0).
    pub area_penalty: f64,
    /// Volume target alpha.
    pub volume_target: f64,
    /// Area target beta.
    pub area_target: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            epsilon: 0.05,
            bending_rigidity: 1.0,
            mobility: 0.01,
            viscosity: 1.0,
            volume_penalty: 100.0,
            area_penalty: 100.0,
            volume_target: 0.0,
            area_target: 0.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("bending_rigidity", self.bending_rigidity),
            ("mobility", self.mobility),
            ("viscosity", self.viscosity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name: name.into(),
                    constraint: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        let nonneg = [
            ("volume_penalty", self.volume_penalty),
            ("area_penalty", self.area_penalty),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: name.into(),
                    constraint: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        for (name, v) in [
            ("volume_target", self.volume_target),
            ("area_target", self.area_target),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name: name.into(),
                    constraint: format!("must be finite, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Fill in the volume / area targets from a concrete initial phase field.
    pub fn with_targets_from(mut self, phi: &ScalarField) -> Result<ModelParams> {
        self.volume_target = volume_functional(phi);
        self.area_target = area_functional(phi, &self)?;
        Ok(self)
    }
}

/// Itemized energy; `total` is the exact sum of the three parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub bending: f64,
    pub volume_penalty: f64,
    pub area_penalty: f64,
    pub total: f64,
    /// Value of the volume functional A(phi).
    pub a_value: f64,
    /// Value of the area functional B(phi).
    pub b_value: f64,
}

/// `f(phi) = -eps lap phi + (phi^2 - 1) phi / eps`, 2/3-filtered.
pub fn chemical_potential(phi: &ScalarField, p: &ModelParams) -> Result<ScalarField> {
    let lap = laplacian(phi)?;
    let raw = phi.zip(&lap, |v, l| {
        -p.epsilon * l + (v * v - 1.0) * v / p.epsilon
    })?;
    dealias(&raw)
}

/// Enclosed-volume functional A(phi) = int phi.
pub fn volume_functional(phi: &ScalarField) -> f64 {
    integral(phi)
}

/// Interfacial-area functional
/// B(phi) = int eps/2 |grad phi|^2 + (phi^2 - 1)^2 / (4 eps).
pub fn area_functional(phi: &ScalarField, p: &ModelParams) -> Result<f64> {
    let grad = gradient(phi)?;
    let mut acc = 0.0;
    for c in grad.components() {
        acc += c.values().iter().map(|g| g * g).sum::<f64>();
    }
    let grad_part = 0.5 * p.epsilon * acc;
    let well_part: f64 = phi
        .values()
        .iter()
        .map(|&v| {
            let w = v * v - 1.0;
            w * w
        })
        .sum::<f64>()
        / (4.0 * p.epsilon);
    Ok((grad_part + well_part) * phi.grid().cell_volume())
}

/// Full energy with its breakdown.
pub fn total_energy(phi: &ScalarField, p: &ModelParams) -> Result<EnergyBreakdown> {
    let f = chemical_potential(phi, p)?;
    let nf = norm_l2(&f);
    let bending = p.bending_rigidity / (2.0 * p.epsilon) * nf * nf;
    let a_value = volume_functional(phi);
    let b_value = area_functional(phi, p)?;
    let da = a_value - p.volume_target;
    let db = b_value - p.area_target;
    let volume_penalty = 0.5 * p.volume_penalty * da * da;
    let area_penalty = 0.5 * p.area_penalty * db * db;
    Ok(EnergyBreakdown {
        bending,
        volume_penalty,
        area_penalty,
        total: bending + volume_penalty + area_penalty,
        a_value,
        b_value,
    })
}

/// dE/dphi via the composition route (see module docs).
pub fn variational_derivative(phi: &ScalarField, p: &ModelParams) -> Result<ScalarField> {
    let f = chemical_potential(phi, p)?;
    let lap_f = laplacian(&f)?;
    let weighted = dealias(&phi.zip(&f, |v, fv| (3.0 * v * v - 1.0) * fv)?)?;
    let a = volume_functional(phi);
    let b = area_functional(phi, p)?;
    let k = p.bending_rigidity;
    let m1_term = p.volume_penalty * (a - p.volume_target);
    let m2_coef = p.area_penalty * (b - p.area_target);
    let eps2 = p.epsilon * p.epsilon;
    let mut out = Vec::with_capacity(phi.grid().len());
    for i in 0..phi.grid().len() {
        let g = -lap_f.values()[i] + weighted.values()[i] / eps2;
        out.push(k * g + m1_term + m2_coef * f.values()[i]);
    }
    ScalarField::from_values(phi.grid().clone(), out)
}

/// dE/dphi via the expanded route; numerically interchangeable with
/// `variational_derivative` and kept as an independent consistency check.
pub fn variational_derivative_expanded(
    phi: &ScalarField,
    p: &ModelParams,
) -> Result<ScalarField> {
    let eps = p.epsilon;
    let k = p.bending_rigidity;
    let bilap = bilaplacian(phi)?;
    let lap = laplacian(phi)?;
    let grad = gradient(phi)?;
    let grid = phi.grid().clone();

    // |grad phi|^2 pointwise
    let mut grad_sq = vec![0.0; grid.len()];
    for c in grad.components() {
        for (slot, &g) in grad_sq.iter_mut().zip(c.values()) {
            *slot += g * g;
        }
    }
    let grad_sq = ScalarField::from_values(grid.clone(), grad_sq)?;

    let term_grad = dealias(&phi.zip(&grad_sq, |v, gs| v * gs)?)?;
    let term_lap = dealias(&phi.zip(&lap, |v, l| (3.0 * v * v - 1.0) * l)?)?;
    let term_poly = dealias(&phi.map(|v| (3.0 * v * v - 1.0) * (v * v * v - v)))?;

    let f = chemical_potential(phi, p)?;
    let a = volume_functional(phi);
    let b = area_functional(phi, p)?;
    let m1_term = p.volume_penalty * (a - p.volume_target);
    let m2_coef = p.area_penalty * (b - p.area_target);

    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let v = k * eps * bilap.values()[i] - 6.0 * k / eps * term_grad.values()[i]
            - 2.0 * k / eps * term_lap.values()[i]
            + k / (eps * eps * eps) * term_poly.values()[i]
            + m1_term
            + m2_coef * f.values()[i];
        out.push(v);
    }
    ScalarField::from_values(grid, out)
}

/// Elastic body force dE/dphi * grad phi, one 2/3-filtered component per axis.
pub fn elastic_force(phi: &ScalarField, p: &ModelParams) -> Result<VectorField> {
    let vd = variational_derivative(phi, p)?;
    elastic_force_from(&vd, phi)
}

/// Same force reusing an already-computed variational derivative.
pub fn elastic_force_from(vd: &ScalarField, phi: &ScalarField) -> Result<VectorField> {
    let grad = gradient(phi)?;
    let comps: Result<Vec<ScalarField>> = grad
        .components()
        .iter()
        .map(|g| dealias(&vd.zip(g, |a, b| a * b)?))
        .collect();
    VectorField::from_components(comps?)
}

/// Directional (Gateaux) derivative of the energy by central differences,
/// used by gradient-consistency tests: (E(phi + h psi) - E(phi - h psi)) / 2h.
pub fn directional_derivative_fd(
    phi: &ScalarField,
    psi: &ScalarField,
    p: &ModelParams,
    h: f64,
) -> Result<f64> {
    let plus = total_energy(&phi.axpy(1.0, psi, h)?, p)?.total;
    let minus = total_energy(&phi.axpy(1.0, psi, -h)?, p)?.total;
    Ok((plus - minus) / (2.0 * h))
}

/// Inner product <dE/dphi, psi>, the exact directional derivative.
pub fn directional_derivative(
    phi: &ScalarField,
    psi: &ScalarField,
    p: &ModelParams,
) -> Result<f64> {
    inner_product(&variational_derivative(phi, p)?, psi)
}
