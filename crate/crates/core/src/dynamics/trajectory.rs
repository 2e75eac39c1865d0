use std::io::Write;

use crate::csvout::{fmt_f64, write_row, Provenance};
use crate::error::Result;

use super::RelaxTrace;

/// One row per iteration: `k, delta_norm, energy, stress_norm_layer_1..L`.
pub fn write_trajectory_csv<W: Write>(
    w: &mut W,
    trace: &RelaxTrace,
    provenance: &Provenance,
) -> Result<()> {
    provenance.write_preamble(w)?;
    let layers = trace.records.first().map(|r| r.stress_norms.len()).unwrap_or(0);
    let mut header = vec!["k".to_string(), "delta_norm".into(), "energy".into()];
    header.extend((1..=layers).map(|l| format!("stress_norm_layer_{l}")));
    write_row(w, &header)?;
    for r in &trace.records {
        let mut row = vec![r.k.to_string(), fmt_f64(r.delta), fmt_f64(r.energy)];
        row.extend(r.stress_norms.iter().map(|&v| fmt_f64(v)));
        write_row(w, &row)?;
    }
    Ok(())
}
