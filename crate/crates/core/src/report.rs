//! Post-run reporting: a plain-text summary of a diagnostics history
//! (energy bookkeeping, conservation drift, the higher-order functional,
//! criterion integrals) and a plot-ready CSV with the derived series.

use crate::csvio::write_table;
use crate::diagnostics::{default_eta, higher_order_from_record, DiagnosticsRecord};
use crate::energy::ModelParams;
use crate::error::{Error, Result};
use std::path::Path;

/// Trapezoid integral of a stored criterion integrand, looked up by column
/// id (used when the history comes from a CSV and only ids are known).
pub fn integral_by_id(history: &[DiagnosticsRecord], id: &str) -> Result<f64> {
    if history.len() < 2 {
        return Err(Error::History(
            "criterion integral needs at least 2 records".into(),
        ));
    }
    let mut acc = 0.0;
    for w in history.windows(2) {
        let a = *w[0]
            .criterion_integrands
            .get(id)
            .ok_or_else(|| Error::History(format!("history does not carry integrand '{id}'")))?;
        let b = *w[1]
            .criterion_integrands
            .get(id)
            .ok_or_else(|| Error::History(format!("history does not carry integrand '{id}'")))?;
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

/// Everything the text summary reports, exposed for tests.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub samples: usize,
    pub t_span: (f64, f64),
    pub energy_initial: f64,
    pub energy_final: f64,
    pub monotonicity_violations: usize,
    pub worst_energy_rise: f64,
    pub sup_mean_velocity: f64,
    pub k_bound: f64,
    pub eta: f64,
    pub sup_higher_order: f64,
    pub criterion_integrals: Vec<(String, f64)>,
}

/// Digest a recorded history; `p` supplies the constants entering eta.
pub fn summarize(records: &[DiagnosticsRecord], p: &ModelParams) -> Result<RunSummary> {
    if records.is_empty() {
        return Err(Error::History("cannot summarize an empty history".into()));
    }
    let e0 = records[0].total_energy();
    let tol = 1e-8 * e0.abs();
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    for w in records.windows(2) {
        let rise = w[1].total_energy() - w[0].total_energy();
        worst = worst.max(rise);
        if rise > tol {
            violations += 1;
        }
    }
    let sup_mean = records
        .iter()
        .flat_map(|r| r.mean_u.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()));
    let k_bound = records
        .iter()
        .map(DiagnosticsRecord::k_monitor)
        .fold(f64::MIN_POSITIVE, f64::max);
    let eta = default_eta(p, k_bound)?;
    let sup_a = records
        .iter()
        .map(|r| higher_order_from_record(r, eta))
        .fold(0.0f64, f64::max);
    let mut criterion_integrals = Vec::new();
    if records.len() >= 2 {
        for id in records[0].criterion_integrands.keys() {
            criterion_integrals.push((id.clone(), integral_by_id(records, id)?));
        }
    }
    Ok(RunSummary {
        samples: records.len(),
        t_span: (records[0].t, records.last().expect("non-empty").t),
        energy_initial: e0,
        energy_final: records.last().expect("non-empty").total_energy(),
        monotonicity_violations: violations,
        worst_energy_rise: worst,
        sup_mean_velocity: sup_mean,
        k_bound,
        eta,
        sup_higher_order: sup_a,
        criterion_integrals,
    })
}

impl RunSummary {
    /// Render as the text block the CLI prints and writes to summary.txt.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("samples: {}\n", self.samples));
        s.push_str(&format!("t: [{:.6e}, {:.6e}]\n", self.t_span.0, self.t_span.1));
        s.push_str(&format!(
            "total energy: {:.16e} -> {:.16e} (change {:.6e})\n",
            self.energy_initial,
            self.energy_final,
            self.energy_final - self.energy_initial
        ));
        s.push_str(&format!(
            "energy monotone: {} (violations {}, worst rise {:.6e})\n",
            if self.monotonicity_violations == 0 {
                "yes"
            } else {
                "no"
            },
            self.monotonicity_violations,
            self.worst_energy_rise
        ));
        s.push_str(&format!(
            "sup |mean velocity|: {:.6e}\n",
            self.sup_mean_velocity
        ));
        s.push_str(&format!("running norm bound K: {:.6e}\n", self.k_bound));
        s.push_str(&format!("eta = mu*gamma/(16 k eps K^2): {:.6e}\n", self.eta));
        s.push_str(&format!(
            "sup higher-order functional: {:.6e}\n",
            self.sup_higher_order
        ));
        for (id, v) in &self.criterion_integrals {
            s.push_str(&format!("criterion integral {id}: {:.16e}\n", v));
        }
        s
    }
}

/// Plot-ready CSV: time, the energy pieces, dissipations, the higher-order
/// functional at the summary's eta, and every criterion integrand.
pub fn write_plot_csv(path: &Path, records: &[DiagnosticsRecord], eta: f64) -> Result<()> {
    if records.is_empty() {
        return Err(Error::History("cannot plot an empty history".into()));
    }
    let ts: Vec<f64> = records.iter().map(|r| r.t).collect();
    let total: Vec<f64> = records.iter().map(|r| r.total_energy()).collect();
    let kin: Vec<f64> = records.iter().map(|r| r.kinetic).collect();
    let free: Vec<f64> = records.iter().map(|r| r.energy.total).collect();
    let visc: Vec<f64> = records.iter().map(|r| r.visc_dissipation).collect();
    let phase: Vec<f64> = records.iter().map(|r| r.phase_dissipation).collect();
    let a: Vec<f64> = records
        .iter()
        .map(|r| higher_order_from_record(r, eta))
        .collect();
    let mut columns: Vec<(String, Vec<f64>)> = vec![
        ("t".into(), ts),
        ("total_energy".into(), total),
        ("kinetic".into(), kin),
        ("free_energy".into(), free),
        ("visc_dissipation".into(), visc),
        ("phase_dissipation".into(), phase),
        ("higher_order".into(), a),
    ];
    for id in records[0].criterion_integrands.keys() {
        let col: Result<Vec<f64>> = records
            .iter()
            .map(|r| {
                r.criterion_integrands.get(id).copied().ok_or_else(|| {
                    Error::History(format!("history does not carry integrand '{id}'"))
                })
            })
            .collect();
        columns.push((format!("crit_{id}"), col?));
    }
    let borrowed: Vec<(&str, &[f64])> = columns
        .iter()
        .map(|(n, c)| (n.as_str(), c.as_slice()))
        .collect();
    write_table(path, &borrowed)
}
