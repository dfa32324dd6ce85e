//! CSV emission and parsing for diagnostics histories and generic numeric
//! tables. Values are written with 17 significant digits so a written file
//! reproduces every f64 bit-exactly on read-back; lines starting with `#`
//! are comments and are skipped by the readers.

use crate::diagnostics::DiagnosticsRecord;
use crate::energy::EnergyBreakdown;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// One f64 at full round-trip precision.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a generic table of equally long numeric columns.
pub fn write_table(path: &Path, columns: &[(&str, &[f64])]) -> Result<()> {
    if columns.is_empty() {
        return Err(Error::Csv("table needs at least one column".into()));
    }
    let rows = columns[0].1.len();
    for (name, col) in columns {
        if col.len() != rows {
            return Err(Error::Csv(format!(
                "column {name} has {} rows, expected {rows}",
                col.len()
            )));
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# vesiflow table v1")?;
    let header: Vec<&str> = columns.iter().map(|(n, _)| *n).collect();
    writeln!(out, "{}", header.join(","))?;
    for r in 0..rows {
        let row: Vec<String> = columns.iter().map(|(_, c)| format_value(c[r])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Fixed leading column order of a diagnostics CSV; per-run columns
/// (velocity means, criterion integrands) follow these.
const DIAG_COLUMNS: [&str; 15] = [
    "t",
    "kinetic",
    "bending",
    "volume_penalty",
    "area_penalty",
    "free_energy",
    "total_energy",
    "visc_dissipation",
    "phase_dissipation",
    "grad_u_l2",
    "var_deriv_l2",
    "phi_h3",
    "grad_phi_linf",
    "a_value",
    "b_value",
];

/// Write a diagnostics history. Column layout: the fixed block above, then
/// `mean_u_<axis>` per velocity component, then `crit_<id>` per criterion
/// (ids taken from the first record).
pub fn write_diagnostics(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let first = records
        .first()
        .ok_or_else(|| Error::Csv("cannot write an empty diagnostics history".into()))?;
    let dim = first.mean_u.len();
    let crit_ids: Vec<String> = first.criterion_integrands.keys().cloned().collect();
    for (i, r) in records.iter().enumerate() {
        if r.mean_u.len() != dim {
            return Err(Error::Csv(format!(
                "record {i} has {} velocity means, expected {dim}",
                r.mean_u.len()
            )));
        }
        let ids: Vec<&String> = r.criterion_integrands.keys().collect();
        if ids.len() != crit_ids.len() || ids.iter().zip(&crit_ids).any(|(a, b)| *a != b) {
            return Err(Error::Csv(format!(
                "record {i} has a different criterion set from record 0"
            )));
        }
    }

    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# vesiflow diagnostics v1")?;
    let mut header: Vec<String> = DIAG_COLUMNS.iter().map(|s| s.to_string()).collect();
    for a in 0..dim {
        header.push(format!("mean_u_{a}"));
    }
    for id in &crit_ids {
        header.push(format!("crit_{id}"));
    }
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        let mut row: Vec<String> = vec![
            r.t,
            r.kinetic,
            r.energy.bending,
            r.energy.volume_penalty,
            r.energy.area_penalty,
            r.energy.total,
            r.total_energy(),
            r.visc_dissipation,
            r.phase_dissipation,
            r.grad_u_l2,
            r.var_deriv_l2,
            r.phi_h3,
            r.grad_phi_linf,
            r.energy.a_value,
            r.energy.b_value,
        ]
        .into_iter()
        .map(format_value)
        .collect();
        row.extend(r.mean_u.iter().copied().map(format_value));
        row.extend(
            r.criterion_integrands
                .values()
                .copied()
                .map(format_value),
        );
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn parse_cell(cell: &str, line: usize, col: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|e| {
        Error::Csv(format!("line {line}, column {col}: cannot parse {cell:?}: {e}"))
    })
}

/// Read back a diagnostics CSV written by `write_diagnostics`.
pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::Csv("file has no header row".into()))?;
    let header: Vec<&str> = header_line.split(',').map(str::trim).collect();

    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Csv(format!("missing column {name}")))
    };
    let fixed: Vec<usize> = DIAG_COLUMNS
        .iter()
        .map(|n| col(n))
        .collect::<Result<_>>()?;
    let mut mean_cols = Vec::new();
    for a in 0.. {
        match header.iter().position(|h| *h == format!("mean_u_{a}")) {
            Some(i) => mean_cols.push(i),
            None => break,
        }
    }
    if mean_cols.is_empty() {
        return Err(Error::Csv("missing column mean_u_0".into()));
    }
    let crit_cols: Vec<(String, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("crit_").map(|id| (id.to_string(), i)))
        .collect();

    let mut records = Vec::new();
    for (line_no, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::Csv(format!(
                "line {}: {} cells, header has {}",
                line_no + 1,
                cells.len(),
                header.len()
            )));
        }
        let get = |slot: usize, name: &str| parse_cell(cells[slot], line_no + 1, name);
        let fixed_vals: Vec<f64> = DIAG_COLUMNS
            .iter()
            .zip(&fixed)
            .map(|(n, &i)| get(i, n))
            .collect::<Result<_>>()?;
        let mean_u: Vec<f64> = mean_cols
            .iter()
            .map(|&i| get(i, "mean_u"))
            .collect::<Result<_>>()?;
        let mut criterion_integrands = BTreeMap::new();
        for (id, i) in &crit_cols {
            criterion_integrands.insert(id.clone(), get(*i, id)?);
        }
        records.push(DiagnosticsRecord {
            t: fixed_vals[0],
            kinetic: fixed_vals[1],
            energy: EnergyBreakdown {
                bending: fixed_vals[2],
                volume_penalty: fixed_vals[3],
                area_penalty: fixed_vals[4],
                total: fixed_vals[5],
                a_value: fixed_vals[13],
                b_value: fixed_vals[14],
            },
            visc_dissipation: fixed_vals[7],
            phase_dissipation: fixed_vals[8],
            grad_u_l2: fixed_vals[9],
            var_deriv_l2: fixed_vals[10],
            a_functional_value: fixed_vals[13],
            mean_u,
            phi_h3: fixed_vals[11],
            grad_phi_linf: fixed_vals[12],
            criterion_integrands,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record(t: f64, seed: f64) -> DiagnosticsRecord {
        let mut criterion_integrands = BTreeMap::new();
        criterion_integrands.insert("serrin_gradient_p4_s4".to_string(), seed * 1.1);
        DiagnosticsRecord {
            t,
            kinetic: seed * 0.5,
            energy: EnergyBreakdown {
                bending: seed * 0.25,
                volume_penalty: seed * 0.125,
                area_penalty: seed * 0.0625,
                total: seed * 0.4375,
                a_value: seed * 2.0,
                b_value: seed * 3.0,
            },
            visc_dissipation: seed * 0.75,
            phase_dissipation: seed * 0.875,
            grad_u_l2: seed * 1.25,
            var_deriv_l2: seed * 1.375,
            a_functional_value: seed * 2.0,
            mean_u: vec![seed * 1e-12, -seed * 1e-12],
            phi_h3: seed * 4.0,
            grad_phi_linf: seed * 5.0,
            criterion_integrands,
        }
    }

    #[test]
    fn diagnostics_round_trip_is_bit_exact() {
        // values with non-terminating binary-decimal conversions
        let records = vec![
            sample_record(0.1, 1.0 / 3.0),
            sample_record(0.2, std::f64::consts::PI),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diag.csv");
        write_diagnostics(&path, &records).unwrap();
        let back = read_diagnostics(&path).unwrap();
        assert_eq!(records, back);
    }

    #[test]
    fn table_rejects_ragged_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let err = write_table(&path, &[("a", &[1.0, 2.0]), ("b", &[1.0])]).unwrap_err();
        assert!(matches!(err, Error::Csv(_)));
    }

    #[test]
    fn reader_names_the_bad_cell() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diag.csv");
        write_diagnostics(&path, &[sample_record(0.0, 1.0)]).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replace(&format_value(0.5), "oops");
        std::fs::write(&path, text).unwrap();
        let err = read_diagnostics(&path).unwrap_err();
        match err {
            Error::Csv(msg) => assert!(msg.contains("oops"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn values_survive_the_17_digit_format() {
        for v in [1.0 / 3.0, std::f64::consts::PI, 1e-300, -2.5e17, 0.0] {
            let s = format_value(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
