//! Plain CSV emission with a provenance preamble.

use std::io::Write;

use sha2::{Digest, Sha256};

use crate::error::Result;

/// Comment lines written before the header of every CSV artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(seed: u64, config_text: &str) -> Self {
        Self {
            seed,
            config_hash: config_hash(config_text),
        }
    }

    pub fn write_preamble<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "# config_hash={}", self.config_hash)?;
        Ok(())
    }
}

/// First 16 hex digits of the SHA-256 of the canonical config text.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}

pub fn write_row<W: Write>(w: &mut W, fields: &[String]) -> Result<()> {
    writeln!(w, "{}", fields.join(","))?;
    Ok(())
}

/// Shortest round-trip formatting; infinities as `inf`/`-inf`, NaN as `nan`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// `NA` marks a metric that is undefined for this row.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_else(|| "NA".into())
}
