//! Structural diagnostics: per-step records, the discrete energy-law
//! residual, the higher-order functional, regularity-criterion integrals,
//! and the energy-decay exponent fit.
//!
//! The discrete energy law residual on a uniformly sampled history is
//!
//!   r_n = (Etot_{n+1} - Etot_{n-1}) / (2 dt)
//!       + mu ||grad u||^2_n + gamma ||dE/dphi||^2_n
//!
//! with Etot = kinetic + free energy. For an exact trajectory r vanishes;
//! for the IMEX schemes it shrinks at the scheme's order, which is what the
//! refinement experiments measure.

use crate::dynamics::{run, FlowMode, SimState, StepConfig};
use crate::energy::{total_energy, variational_derivative, EnergyBreakdown, ModelParams};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::norms::{
    grad_magnitude, grad_norm_l2, mean, norm_h2, norm_h3, norm_l2, norm_l2_vector, norm_lp,
    pointwise_magnitude,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Everything the harness wants to know about one instant of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// Kinetic energy (1/2) ||u||^2.
    pub kinetic: f64,
    pub energy: EnergyBreakdown,
    /// mu ||grad u||^2.
    pub visc_dissipation: f64,
    /// gamma ||dE/dphi||^2.
    pub phase_dissipation: f64,
    pub grad_u_l2: f64,
    pub var_deriv_l2: f64,
    /// Volume functional A(phi) (duplicated from the breakdown for plotting).
    pub a_functional_value: f64,
    /// Mean of each velocity component; conserved by the dynamics.
    pub mean_u: Vec<f64>,
    /// ||phi||_H3, input to the running bound K.
    pub phi_h3: f64,
    /// ||grad phi||_Linf, the other input to K.
    pub grad_phi_linf: f64,
    /// Criterion id -> instantaneous integrand value.
    pub criterion_integrands: BTreeMap<String, f64>,
}

impl DiagnosticsRecord {
    /// Total (kinetic + free) energy, the quantity the energy law controls.
    pub fn total_energy(&self) -> f64 {
        self.kinetic + self.energy.total
    }

    /// Monitored norm bound entering `default_eta`.
    pub fn k_monitor(&self) -> f64 {
        self.phi_h3 + self.grad_phi_linf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    SerrinGradient,
    SerrinVelocity,
    LogGradient,
    LogVelocity,
}

impl CriterionKind {
    pub fn name(&self) -> &'static str {
        match self {
            CriterionKind::SerrinGradient => "serrin_gradient",
            CriterionKind::SerrinVelocity => "serrin_velocity",
            CriterionKind::LogGradient => "log_gradient",
            CriterionKind::LogVelocity => "log_velocity",
        }
    }

    pub fn parse(s: &str) -> Option<CriterionKind> {
        match s {
            "serrin_gradient" => Some(CriterionKind::SerrinGradient),
            "serrin_velocity" => Some(CriterionKind::SerrinVelocity),
            "log_gradient" => Some(CriterionKind::LogGradient),
            "log_velocity" => Some(CriterionKind::LogVelocity),
            _ => None,
        }
    }
}

/// An integrability criterion: which norm, which Lebesgue exponent `p` in
/// space, which power `s` in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionSpec {
    pub kind: CriterionKind,
    pub p: f64,
    pub s: f64,
}

fn fmt_exp(x: f64) -> String {
    if x.is_infinite() {
        "inf".to_string()
    } else {
        format!("{x}")
    }
}

impl CriterionSpec {
    pub fn new(kind: CriterionKind, p: f64, s: f64) -> Result<CriterionSpec> {
        let spec = CriterionSpec { kind, p, s };
        spec.validate()?;
        Ok(spec)
    }

    /// Stable identifier used as map key and CSV column suffix.
    pub fn id(&self) -> String {
        format!("{}_p{}_s{}", self.kind.name(), fmt_exp(self.p), fmt_exp(self.s))
    }

    /// Check the exponent pair against the admissible range of its kind,
    /// naming the violated inequality.
    pub fn validate(&self) -> Result<()> {
        let fail = |violated: &str| -> Result<()> {
            Err(Error::InvalidCriterion {
                kind: self.kind.name().into(),
                p: self.p,
                s: self.s,
                violated: violated.into(),
            })
        };
        if self.p.is_nan() || self.p < 1.0 {
            return fail("p >= 1");
        }
        if !(self.s.is_finite() && self.s > 0.0) {
            return fail("0 < s < inf");
        }
        let scaling = 3.0 / self.p + 2.0 / self.s; // 3/p treated as 0 at p = inf
        let tol = 1e-12;
        match self.kind {
            CriterionKind::SerrinGradient => {
                if !(self.p > 1.5) {
                    return fail("3/2 < p <= inf");
                }
                if scaling > 2.0 + tol {
                    return fail("3/p + 2/s <= 2");
                }
            }
            CriterionKind::SerrinVelocity | CriterionKind::LogVelocity => {
                if !(self.p > 3.0) {
                    return fail("3 < p <= inf");
                }
                if scaling > 1.0 + tol {
                    return fail("3/p + 2/s <= 1");
                }
            }
            CriterionKind::LogGradient => {
                if !(1.5 <= self.p && self.p <= 6.0) {
                    return fail("3/2 <= p <= 6");
                }
                if scaling > 2.0 + tol {
                    return fail("3/p + 2/s <= 2");
                }
            }
        }
        Ok(())
    }

    /// Instantaneous integrand evaluated on a velocity field.
    pub fn integrand(&self, u: &VectorField) -> Result<f64> {
        self.validate()?;
        let value = match self.kind {
            CriterionKind::SerrinGradient => {
                let g = norm_lp(&grad_magnitude(u)?, self.p)?;
                g.powf(self.s)
            }
            CriterionKind::SerrinVelocity => {
                let v = norm_lp(&pointwise_magnitude(u), self.p)?;
                v.powf(self.s)
            }
            CriterionKind::LogGradient => {
                let g = norm_lp(&grad_magnitude(u)?, self.p)?;
                g.powf(self.s) / (1.0 + (std::f64::consts::E + g).ln())
            }
            CriterionKind::LogVelocity => {
                let v = norm_lp(&pointwise_magnitude(u), self.p)?;
                let sup = norm_lp(&pointwise_magnitude(u), f64::INFINITY)?;
                v.powf(self.s) / (1.0 + (std::f64::consts::E + sup).ln())
            }
        };
        Ok(value)
    }
}

/// Full diagnostics for one state.
pub fn compute_record(
    state: &SimState,
    p: &ModelParams,
    criteria: &[CriterionSpec],
) -> Result<DiagnosticsRecord> {
    let vd = variational_derivative(&state.phi, p)?;
    let energy = total_energy(&state.phi, p)?;
    let u_l2 = norm_l2_vector(&state.u);
    let grad_u = grad_norm_l2(&state.u)?;
    let vd_l2 = norm_l2(&vd);
    let mut criterion_integrands = BTreeMap::new();
    for spec in criteria {
        criterion_integrands.insert(spec.id(), spec.integrand(&state.u)?);
    }
    Ok(DiagnosticsRecord {
        t: state.t,
        kinetic: 0.5 * u_l2 * u_l2,
        energy,
        visc_dissipation: p.viscosity * grad_u * grad_u,
        phase_dissipation: p.mobility * vd_l2 * vd_l2,
        grad_u_l2: grad_u,
        var_deriv_l2: vd_l2,
        a_functional_value: energy.a_value,
        mean_u: state.u.components().iter().map(mean).collect(),
        phi_h3: norm_h3(&state.phi)?,
        grad_phi_linf: norm_lp(&pointwise_magnitude(&crate::ops::gradient(&state.phi)?), f64::INFINITY)?,
        criterion_integrands,
    })
}

/// Integrate and collect a record at the configured cadence.
pub fn run_recording(
    s0: SimState,
    p: &ModelParams,
    cfg: &StepConfig,
    t_end: f64,
    record_every: usize,
    mode: FlowMode,
    criteria: &[CriterionSpec],
) -> Result<(SimState, Vec<DiagnosticsRecord>)> {
    let mut records = Vec::new();
    let final_state = run(s0, p, cfg, t_end, record_every, mode, |state, _| {
        records.push(compute_record(state, p, criteria)?);
        Ok(())
    })?;
    Ok((final_state, records))
}

fn check_uniform_dt(history: &[DiagnosticsRecord]) -> Result<f64> {
    if history.len() < 3 {
        return Err(Error::History(format!(
            "energy-law residual needs at least 3 records, got {}",
            history.len()
        )));
    }
    let dt = history[1].t - history[0].t;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::History(format!("non-increasing timestamps (dt = {dt})")));
    }
    for (i, w) in history.windows(2).enumerate() {
        let step = w[1].t - w[0].t;
        if (step - dt).abs() > 1e-9 * dt.max(1e-300) {
            return Err(Error::History(format!(
                "non-uniform sampling at record {}: step {step} vs {dt}",
                i + 1
            )));
        }
    }
    Ok(dt)
}

/// Centered-difference residual of the energy law on a uniform history;
/// returns one signed value per interior record.
pub fn energy_law_residual(history: &[DiagnosticsRecord]) -> Result<Vec<f64>> {
    let dt = check_uniform_dt(history)?;
    let mut out = Vec::with_capacity(history.len() - 2);
    for n in 1..history.len() - 1 {
        let de = (history[n + 1].total_energy() - history[n - 1].total_energy()) / (2.0 * dt);
        out.push(de + history[n].visc_dissipation + history[n].phase_dissipation);
    }
    Ok(out)
}

/// Weight for the relaxation term in the higher-order functional, derived
/// from the running norm bound K: eta = mu gamma / (16 k eps K^2).
pub fn default_eta(p: &ModelParams, k_bound: f64) -> Result<f64> {
    if !(k_bound.is_finite() && k_bound > 0.0) {
        return Err(Error::InvalidParameter {
            name: "k_bound".into(),
            constraint: format!("must be finite and > 0, got {k_bound}"),
        });
    }
    Ok(p.viscosity * p.mobility
        / (16.0 * p.bending_rigidity * p.epsilon * k_bound * k_bound))
}

/// The higher-order functional  ||grad u||^2 + eta ||dE/dphi||^2.
pub fn higher_order_functional(state: &SimState, p: &ModelParams, eta: f64) -> Result<f64> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "eta".into(),
            constraint: format!("must be finite and >= 0, got {eta}"),
        });
    }
    let g = grad_norm_l2(&state.u)?;
    let r = norm_l2(&variational_derivative(&state.phi, p)?);
    Ok(g * g + eta * r * r)
}

/// Same functional evaluated from an already-computed record.
pub fn higher_order_from_record(rec: &DiagnosticsRecord, eta: f64) -> f64 {
    rec.grad_u_l2 * rec.grad_u_l2 + eta * rec.var_deriv_l2 * rec.var_deriv_l2
}

/// Trapezoid integral of a stored criterion integrand over the history.
pub fn criterion_integral(history: &[DiagnosticsRecord], spec: &CriterionSpec) -> Result<f64> {
    spec.validate()?;
    if history.len() < 2 {
        return Err(Error::History(
            "criterion integral needs at least 2 records".into(),
        ));
    }
    let id = spec.id();
    let mut acc = 0.0;
    for w in history.windows(2) {
        let a = *w[0].criterion_integrands.get(&id).ok_or_else(|| {
            Error::History(format!("history does not carry integrand '{id}'"))
        })?;
        let b = *w[1].criterion_integrands.get(&id).ok_or_else(|| {
            Error::History(format!("history does not carry integrand '{id}'"))
        })?;
        let dt = w[1].t - w[0].t;
        if dt <= 0.0 {
            return Err(Error::History(format!(
                "timestamps must increase, got step {dt}"
            )));
        }
        acc += 0.5 * (a + b) * dt;
    }
    Ok(acc)
}

/// H2 distance between two phase fields on the same grid.
pub fn h2_distance(phi: &ScalarField, psi: &ScalarField) -> Result<f64> {
    phi.grid().check_same(psi.grid(), "h2 distance")?;
    norm_h2(&phi.sub(psi)?)
}

/// Result of fitting log(E - E_inf) against log(1 + t).
#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    /// Fitted decay exponent rho in (E - E_inf) ~ (1+t)^(-rho).
    pub rate_exponent: f64,
    /// Implied relaxation exponent theta = rho / (1 + 2 rho), in (0, 1/2).
    pub theta: f64,
    /// RMS residual of the log-log fit.
    pub fit_rms: f64,
    /// Index range of the fit window within the input series.
    pub window: (usize, usize),
    /// Set when the decay steepens with time, i.e. the tail falls faster
    /// than any fixed power law (typical of exponential convergence).
    pub faster_than_polynomial: bool,
}

fn fit_slope(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|(x, _)| x).sum();
    let sy: f64 = points.iter().map(|(_, y)| y).sum();
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let rms = (points
        .iter()
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

/// Fit the polynomial decay rate of an energy series toward its limit.
///
/// The window is the last half of the samples still meaningfully above the
/// limit (E - E_inf > 1e3 * machine epsilon * E(0)); the series must be
/// positive and non-increasing there.
pub fn ls_exponent_fit(series: &[(f64, f64)], e_inf: f64) -> Result<LsFit> {
    if series.len() < 8 {
        return Err(Error::History(format!(
            "exponent fit needs at least 8 samples, got {}",
            series.len()
        )));
    }
    let e0 = series[0].1;
    let floor = 1e3 * f64::EPSILON * e0.abs().max(f64::MIN_POSITIVE);
    let mut qualifying = 0usize;
    for (i, &(_, e)) in series.iter().enumerate() {
        let d = e - e_inf;
        if d > floor {
            if i != qualifying {
                return Err(Error::History(format!(
                    "energy difference rises back above the floor at sample {i}"
                )));
            }
            qualifying = i + 1;
        }
    }
    if qualifying < 8 {
        return Err(Error::History(format!(
            "only {qualifying} samples lie above the resolution floor"
        )));
    }
    let start = qualifying / 2;
    let window = &series[start..qualifying];
    for (off, w) in window.windows(2).enumerate() {
        let (d0, d1) = (w[0].1 - e_inf, w[1].1 - e_inf);
        if d1 <= 0.0 {
            return Err(Error::History(format!(
                "non-positive energy difference at sample {}",
                start + off + 1
            )));
        }
        if d1 > d0 * (1.0 + 1e-12) + floor {
            return Err(Error::History(format!(
                "energy difference increases at sample {}",
                start + off + 1
            )));
        }
    }
    let points: Vec<(f64, f64)> = window
        .iter()
        .map(|&(t, e)| ((1.0 + t).ln(), (e - e_inf).ln()))
        .collect();
    let (slope, _, fit_rms) = fit_slope(&points);
    let rate = -slope;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::History(format!(
            "fitted exponent {rate} is not a decay rate"
        )));
    }
    // Compare half-window slopes to spot super-polynomial decay: a power
    // law keeps a constant log-log slope (ratio 1), while an exponential
    // steepens towards ratio ~1.4 under this windowing, so 1.2 separates
    // the two.
    let half = points.len() / 2;
    let (s1, _, _) = fit_slope(&points[..half]);
    let (s2, _, _) = fit_slope(&points[half..]);
    let faster = s2 < 1.2 * s1 - 1e-9 && s1 < 0.0;
    Ok(LsFit {
        rate_exponent: rate,
        theta: rate / (1.0 + 2.0 * rate),
        fit_rms,
        window: (start, qualifying),
        faster_than_polynomial: faster,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::initial::{tanh_disk, taylor_green};

    fn synthetic_record(t: f64, etot: f64, dissipation: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            kinetic: 0.0,
            energy: EnergyBreakdown {
                bending: etot,
                volume_penalty: 0.0,
                area_penalty: 0.0,
                total: etot,
                a_value: 0.0,
                b_value: 0.0,
            },
            visc_dissipation: dissipation,
            phase_dissipation: 0.0,
            grad_u_l2: 0.0,
            var_deriv_l2: 0.0,
            a_functional_value: 0.0,
            mean_u: vec![0.0, 0.0],
            phi_h3: 0.0,
            grad_phi_linf: 0.0,
            criterion_integrands: BTreeMap::new(),
        }
    }

    #[test]
    fn residual_vanishes_on_an_exactly_dissipative_history() {
        let d = 0.75;
        let hist: Vec<_> = (0..10)
            .map(|i| {
                let t = i as f64 * 0.1;
                synthetic_record(t, 10.0 - d * t, d)
            })
            .collect();
        let r = energy_law_residual(&hist).unwrap();
        assert_eq!(r.len(), 8);
        for v in r {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn residual_rejects_non_uniform_sampling() {
        let mut hist: Vec<_> = (0..5)
            .map(|i| synthetic_record(i as f64 * 0.1, 1.0, 0.0))
            .collect();
        hist[3].t += 0.01;
        assert!(matches!(
            energy_law_residual(&hist),
            Err(Error::History(_))
        ));
    }

    #[test]
    fn eta_default_matches_reference_value() {
        let p = ModelParams {
            epsilon: 1.0,
            bending_rigidity: 1.0,
            mobility: 1.0,
            viscosity: 1.0,
            ..ModelParams::default()
        };
        assert!((default_eta(&p, 1.0).unwrap() - 1.0 / 16.0).abs() < 1e-15);
        assert!(default_eta(&p, 0.0).is_err());
    }

    #[test]
    fn functional_reduces_to_grad_norm_when_eta_is_zero() {
        let g = Grid::unit(2, 32).unwrap();
        let u = taylor_green(&g, 0.5).unwrap();
        let phi = tanh_disk(&g, &[0.5, 0.5], 0.25, 0.05).unwrap();
        let p = ModelParams::default().with_targets_from(&phi).unwrap();
        let s = SimState::new(u, phi, 0.0).unwrap();
        let a0 = higher_order_functional(&s, &p, 0.0).unwrap();
        let g2 = grad_norm_l2(&s.u).unwrap();
        assert!((a0 - g2 * g2).abs() <= 1e-10 * a0.max(1.0));
        assert!(higher_order_functional(&s, &p, -1.0).is_err());
    }

    #[test]
    fn criterion_validation_names_the_violated_inequality() {
        let bad = CriterionSpec {
            kind: CriterionKind::SerrinVelocity,
            p: 4.0,
            s: 4.0, // 3/4 + 1/2 = 1.25 > 1
        };
        match bad.validate() {
            Err(Error::InvalidCriterion { violated, .. }) => {
                assert!(violated.contains("3/p + 2/s <= 1"), "got {violated}");
            }
            other => panic!("expected rejection, got {other:?}"),
        }
        let bad_p = CriterionSpec {
            kind: CriterionKind::SerrinGradient,
            p: 1.2,
            s: 100.0,
        };
        match bad_p.validate() {
            Err(Error::InvalidCriterion { violated, .. }) => {
                assert!(violated.contains("3/2 < p"), "got {violated}");
            }
            other => panic!("expected rejection, got {other:?}"),
        }
        // boundary pairs are admissible
        CriterionSpec::new(CriterionKind::SerrinGradient, 4.0, 8.0 / 5.0).unwrap();
        CriterionSpec::new(CriterionKind::SerrinVelocity, f64::INFINITY, 2.0).unwrap();
        CriterionSpec::new(CriterionKind::LogGradient, 6.0, 4.0 / 3.0).unwrap();
    }

    #[test]
    fn criterion_integral_of_constant_history_is_closed_form() {
        let spec = CriterionSpec::new(CriterionKind::SerrinGradient, 4.0, 2.0).unwrap();
        let c: f64 = 3.0;
        let t_end = 2.5;
        let n = 2000usize;
        let hist: Vec<_> = (0..=n)
            .map(|i| {
                let t = t_end * i as f64 / n as f64;
                let mut rec = synthetic_record(t, 1.0, 0.0);
                rec.criterion_integrands
                    .insert(spec.id(), c.powf(spec.s));
                rec
            })
            .collect();
        let integral = criterion_integral(&hist, &spec).unwrap();
        let exact = c.powf(spec.s) * t_end;
        assert!((integral - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn h2_distance_of_a_mean_shift_is_the_shift() {
        let g = Grid::unit(2, 32).unwrap();
        let phi = tanh_disk(&g, &[0.5, 0.5], 0.2, 0.05).unwrap();
        let psi = phi.map(|v| v + 0.3);
        let d = h2_distance(&phi, &psi).unwrap();
        assert!((d - 0.3).abs() < 1e-10);
    }

    #[test]
    fn exponent_fit_recovers_a_pure_power_law() {
        let series: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.5;
                (t, 2.0 + (1.0 + t).powi(-1))
            })
            .collect();
        let fit = ls_exponent_fit(&series, 2.0).unwrap();
        assert!((fit.rate_exponent - 1.0).abs() < 1e-6);
        assert!((fit.theta - 1.0 / 3.0).abs() < 1e-6);
        assert!(!fit.faster_than_polynomial);
    }

    #[test]
    fn exponent_fit_flags_exponential_decay() {
        let series: Vec<(f64, f64)> = (0..400)
            .map(|i| {
                let t = i as f64 * 0.05;
                (t, (-1.5 * t).exp())
            })
            .collect();
        let fit = ls_exponent_fit(&series, 0.0).unwrap();
        assert!(fit.faster_than_polynomial);
        assert!(fit.theta > 0.0 && fit.theta < 0.5);
    }

    #[test]
    fn exponent_fit_rejects_non_monotone_series() {
        let mut series: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let t = i as f64;
                (t, (1.0 + t).powi(-1))
            })
            .collect();
        series[30].1 = series[20].1; // bump back up
        assert!(ls_exponent_fit(&series, 0.0).is_err());
    }
}
