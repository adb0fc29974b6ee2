//! File formats: wavefunctions as CSV with a JSON grid header, operator
//! matrices as nonzero `(row, col, Re, Im)` triplets with a JSON metadata
//! sidecar, and weight samples as two-column CSV.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::discretization::{Grid, WaveFunction};
use crate::error::{Error, Result};
use crate::operators::OperatorMatrix;

#[derive(Debug, Serialize, Deserialize)]
struct WaveFunctionHeader {
    half_width: f64,
    nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support_radius: Option<f64>,
}

/// Serialize as `# {json header}` followed by `E,re,im` rows. Numbers use
/// the shortest representation that round-trips, so export/import is
/// lossless.
pub fn wavefunction_to_csv(psi: &WaveFunction) -> String {
    let header = WaveFunctionHeader {
        half_width: psi.grid().half_width(),
        nodes: psi.grid().len(),
        label: psi.label().map(str::to_string),
        support_radius: psi.support_radius(),
    };
    let mut out = String::new();
    writeln!(
        out,
        "# {}",
        serde_json::to_string(&header).expect("header serializes")
    )
    .unwrap();
    writeln!(out, "E,re,im").unwrap();
    for i in 0..psi.len() {
        let v = psi.value(i);
        writeln!(out, "{},{},{}", psi.grid().node(i), v.re, v.im).unwrap();
    }
    out
}

pub fn wavefunction_from_csv(text: &str) -> Result<WaveFunction> {
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::CsvFormat("empty file".into()))?;
    let header_json = header_line
        .strip_prefix('#')
        .ok_or_else(|| Error::CsvFormat("missing '# {json}' header line".into()))?
        .trim();
    let header: WaveFunctionHeader = serde_json::from_str(header_json)
        .map_err(|e| Error::CsvFormat(format!("bad header: {e}")))?;
    let grid = Grid::new(header.half_width, header.nodes)?;

    let columns = lines
        .next()
        .ok_or_else(|| Error::CsvFormat("missing column header".into()))?;
    if columns.trim() != "E,re,im" {
        return Err(Error::CsvFormat(format!(
            "expected column header 'E,re,im', got '{columns}'"
        )));
    }

    let mut values = Vec::with_capacity(grid.len());
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut next = |what: &str| -> Result<f64> {
            parts
                .next()
                .ok_or_else(|| Error::CsvFormat(format!("row {row}: missing {what}")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::CsvFormat(format!("row {row}: bad {what}: {e}")))
        };
        let e = next("E")?;
        let re = next("re")?;
        let im = next("im")?;
        if values.len() >= grid.len() {
            return Err(Error::CsvFormat("more rows than grid nodes".into()));
        }
        let expected = grid.node(values.len());
        if (e - expected).abs() > 1e-9 * grid.half_width().max(1.0) {
            return Err(Error::CsvFormat(format!(
                "row {row}: node {e} does not match grid node {expected}"
            )));
        }
        values.push(Complex64::new(re, im));
    }
    if values.len() != grid.len() {
        return Err(Error::CsvFormat(format!(
            "expected {} rows, got {}",
            grid.len(),
            values.len()
        )));
    }
    let mut psi = WaveFunction::new(grid, values)?;
    if let Some(label) = header.label {
        psi = psi.with_label(label);
    }
    if let Some(radius) = header.support_radius {
        psi = psi.declare_support(radius, f64::INFINITY)?;
    }
    Ok(psi)
}

/// Nonzero entries, row-major: `row,col,re,im` lines under a column header.
pub fn matrix_to_csv(matrix: &OperatorMatrix) -> String {
    let mut out = String::from("row,col,re,im\n");
    for (i, j, v) in matrix.nonzero_entries() {
        writeln!(out, "{i},{j},{},{}", v.re, v.im).unwrap();
    }
    out
}

/// JSON sidecar describing how the exported matrix was built.
pub fn matrix_metadata(matrix: &OperatorMatrix) -> serde_json::Value {
    json!({
        "weight": matrix.weight_id(),
        "grid": {
            "half_width": matrix.grid().half_width(),
            "nodes": matrix.grid().len(),
            "spacing": matrix.grid().spacing(),
        },
        "hbar": matrix.hbar(),
        "order": matrix.stencil_order().value(),
        "construction": matrix.construction(),
        "dim": matrix.dim(),
        "metric": "diag(q_i w(E_i)) stored with the matrix, not exported",
    })
}

/// Two-column `E,w` CSV for sampled weights; `#` lines are comments.
pub fn weight_samples_from_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut samples = Vec::new();
    for (row, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("e,w") {
            continue;
        }
        let mut parts = line.split(',');
        let mut next = |what: &str| -> Result<f64> {
            parts
                .next()
                .ok_or_else(|| Error::CsvFormat(format!("row {row}: missing {what}")))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::CsvFormat(format!("row {row}: bad {what}: {e}")))
        };
        samples.push((next("E")?, next("w")?));
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::TestFunction;
    use crate::operators::{build_tw_matrix, Construction, PhysicalConstants, StencilOrder};
    use crate::weights::Weight;
    use std::collections::BTreeMap;

    #[test]
    fn wavefunction_csv_round_trip() {
        let grid = Grid::new(20.0, 257).unwrap();
        let psi = TestFunction::SmoothBump { radius: 5.0 }
            .sample(&grid)
            .unwrap();
        let text = wavefunction_to_csv(&psi);
        let back = wavefunction_from_csv(&text).unwrap();
        assert_eq!(back.grid(), psi.grid());
        assert_eq!(back.values(), psi.values());
        assert_eq!(back.support_radius(), psi.support_radius());
        assert_eq!(back.label(), psi.label());
    }

    #[test]
    fn wavefunction_csv_rejects_malformed_input() {
        assert!(wavefunction_from_csv("").is_err());
        assert!(wavefunction_from_csv("no header\nE,re,im\n").is_err());
        let bad_rows = "# {\"half_width\":1.0,\"nodes\":3}\nE,re,im\n-1,0,0\n";
        assert!(wavefunction_from_csv(bad_rows).is_err());
        let wrong_node = "# {\"half_width\":1.0,\"nodes\":3}\nE,re,im\n-1,0,0\n0.5,0,0\n1,0,0\n";
        assert!(wavefunction_from_csv(wrong_node).is_err());
    }

    #[test]
    fn matrix_csv_has_banded_structure() {
        let grid = Grid::new(10.0, 9).unwrap();
        let w = Weight::builtin("flat", &BTreeMap::new()).unwrap();
        let m = build_tw_matrix(
            &w,
            &grid,
            &PhysicalConstants::default(),
            StencilOrder::Two,
            Construction::Direct,
        )
        .unwrap();
        let text = matrix_to_csv(&m);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "row,col,re,im");
        // 2 nonzeros per interior row, 3 per one-sided boundary row
        assert_eq!(lines.len() - 1, 7 * 2 + 2 * 3);
        let meta = matrix_metadata(&m);
        assert_eq!(meta["order"], 2);
        assert_eq!(meta["weight"], "flat");
    }

    #[test]
    fn weight_samples_parse() {
        let text = "# comment\nE,w\n-1.0,2.0\n0.0,2.5\n1.0,3.0\n";
        let samples = weight_samples_from_csv(text).unwrap();
        assert_eq!(samples, vec![(-1.0, 2.0), (0.0, 2.5), (1.0, 3.0)]);
    }
}
