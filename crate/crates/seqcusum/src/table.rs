//! Persistence for calibrated quantile tables.
//!
//! Tables are CSV files with the header
//! `kind,eta,gamma,alpha,quantile,stderr,provenance`, one row per
//! `(kind, eta, gamma, alpha)` cell, keys unique, values written with 17
//! significant digits so that store/load round-trips are bit-identical.
//!
//! [`QuantileTable::shipped`] returns the table distributed with the
//! crate: full-scale calibrated cells for `R`, `S`, `T` at `eta = 0.001`
//! and the two recommended `gamma` choices per detector, plus
//! unit-interval Brownian cells for `E` and `Q` at `gamma = 0`.

use crate::calibrate::{Provenance, QuantileEntry};
use crate::detector::DetectorKind;
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

const HEADER: &str = "kind,eta,gamma,alpha,quantile,stderr,provenance";
const SHIPPED_CSV: &str = include_str!("../data/quantiles.csv");

/// An in-memory quantile table with unique `(kind, eta, gamma, alpha)`
/// keys.
#[derive(Clone, Debug)]
pub struct QuantileTable {
    entries: Vec<QuantileEntry>,
}

/// `E` and `Q` thresholds do not involve `eta`; their cells are keyed
/// with `eta = 0`.
pub fn canonical_eta(kind: DetectorKind, eta: f64) -> f64 {
    match kind {
        DetectorKind::E | DetectorKind::Q => 0.0,
        _ => eta,
    }
}

fn key_of(e: &QuantileEntry) -> (DetectorKind, u64, u64, u64) {
    // Normalize -0.0 so it cannot split a key.
    let bits = |x: f64| if x == 0.0 { 0u64 } else { x.to_bits() };
    (e.kind, bits(e.eta), bits(e.gamma), bits(e.alpha))
}

impl QuantileTable {
    /// Build a table, rejecting duplicate keys.
    pub fn new(entries: Vec<QuantileEntry>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for e in &entries {
            if !(e.quantile > 0.0) {
                return Err(Error::Config(format!(
                    "quantile must be positive in cell (kind={}, eta={}, gamma={}, alpha={})",
                    e.kind, e.eta, e.gamma, e.alpha
                )));
            }
            if !seen.insert(key_of(e)) {
                return Err(Error::Config(format!(
                    "duplicate quantile cell (kind={}, eta={}, gamma={}, alpha={})",
                    e.kind, e.eta, e.gamma, e.alpha
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[QuantileEntry] {
        &self.entries
    }

    /// The table distributed with the crate.
    pub fn shipped() -> Self {
        Self::from_str(SHIPPED_CSV).expect("shipped table is well-formed")
    }

    /// Exact-match lookup. On a miss the error lists the nearest available
    /// `(eta, gamma)` cells for the same detector and level; there is no
    /// silent interpolation between calibrated cells.
    pub fn lookup(
        &self,
        kind: DetectorKind,
        eta: f64,
        gamma: f64,
        alpha: f64,
    ) -> Result<&QuantileEntry> {
        let eta = canonical_eta(kind, eta);
        if let Some(hit) = self.entries.iter().find(|e| {
            e.kind == kind && e.eta == eta && e.gamma == gamma && e.alpha == alpha
        }) {
            return Ok(hit);
        }
        let mut near: Vec<&QuantileEntry> = self
            .entries
            .iter()
            .filter(|e| e.kind == kind && e.alpha == alpha)
            .collect();
        near.sort_by(|a, b| {
            let da = (a.eta - eta).abs() + (a.gamma - gamma).abs();
            let db = (b.eta - eta).abs() + (b.gamma - gamma).abs();
            da.total_cmp(&db)
        });
        let suggestions = if near.is_empty() {
            "no cells for this detector and level; calibrate one first".to_string()
        } else {
            let cells: Vec<String> = near
                .iter()
                .take(4)
                .map(|e| format!("(eta={}, gamma={})", e.eta, e.gamma))
                .collect();
            format!("nearest available cells: {}", cells.join(", "))
        };
        Err(Error::MissingQuantile(format!(
            "(kind={kind}, eta={eta}, gamma={gamma}, alpha={alpha}); {suggestions}"
        )))
    }

    /// Serialize with 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for e in &self.entries {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                e.kind,
                e.eta,
                e.gamma,
                e.alpha,
                e.quantile,
                e.stderr,
                e.provenance.as_str()
            )
            .expect("writing to a string cannot fail");
        }
        out
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim() == HEADER => {}
            Some((_, first)) => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {HEADER:?}, found {first:?}"),
                })
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty quantile table".to_string(),
                })
            }
        }
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 7 fields, found {}", fields.len()),
                });
            }
            let kind = DetectorKind::parse(fields[0]).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let num = |i: usize, name: &str| -> Result<f64> {
                fields[i].trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad {name} value {:?}", fields[i]),
                })
            };
            let entry = QuantileEntry {
                kind,
                eta: num(1, "eta")?,
                gamma: num(2, "gamma")?,
                alpha: num(3, "alpha")?,
                quantile: num(4, "quantile")?,
                stderr: num(5, "stderr")?,
                provenance: Provenance::parse(fields[6].trim()).map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?,
            };
            if !(entry.quantile > 0.0) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("quantile must be positive, got {}", entry.quantile),
                });
            }
            if !(entry.stderr >= 0.0) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("stderr must be nonnegative, got {}", entry.stderr),
                });
            }
            entries.push(entry);
        }
        let mut seen = std::collections::HashMap::new();
        for e in &entries {
            if let Some(prev) = seen.insert(key_of(e), (e.kind, e.eta, e.gamma, e.alpha)) {
                return Err(Error::Config(format!(
                    "duplicate quantile cell (kind={}, eta={}, gamma={}, alpha={})",
                    prev.0, prev.1, prev.2, prev.3
                )));
            }
        }
        Self::new(entries)
    }

    pub fn store(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }
}
