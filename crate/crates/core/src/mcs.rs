//! MCS index table (modulation order, code rate, nominal spectral efficiency).
//!
//! The default table is 5G NR PDSCH MCS table 1 (QPSK up to 64QAM), shipped as a
//! plain text file with rows `index,mod_order,rate_numerator` and a fixed rate
//! denominator of 1024. Any other table in the same format can be loaded with
//! [`McsTable::from_file`].

use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Denominator of the code rate in the table file.
pub const RATE_DENOMINATOR: f64 = 1024.0;

/// Number of entries in the default table.
pub const NUM_MCS: usize = 29;

/// Highest MCS index of the default table.
pub const MAX_MCS: usize = NUM_MCS - 1;

const TABLE1: &str = include_str!("../data/mcs_table1.csv");

/// One row of the MCS table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsEntry {
    pub index: usize,
    /// Bits per modulation symbol.
    pub mod_order: u32,
    /// Code rate as a fraction in (0, 1).
    pub code_rate: f64,
    /// Nominal spectral efficiency, `mod_order * code_rate` (bits/s/Hz).
    pub se_nom: f64,
}

/// An immutable MCS table.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl McsTable {
    /// Parses table text. Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| Error::McsTable {
                line: lineno + 1,
                reason,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let index: usize = fields[0]
                .parse()
                .map_err(|_| bad(format!("bad index {:?}", fields[0])))?;
            let mod_order: u32 = fields[1]
                .parse()
                .map_err(|_| bad(format!("bad modulation order {:?}", fields[1])))?;
            let numerator: u32 = fields[2]
                .parse()
                .map_err(|_| bad(format!("bad rate numerator {:?}", fields[2])))?;
            if index != entries.len() {
                return Err(bad(format!(
                    "indices must be contiguous from 0, expected {} found {index}",
                    entries.len()
                )));
            }
            if !matches!(mod_order, 2 | 4 | 6 | 8) {
                return Err(bad(format!("modulation order {mod_order} not in {{2,4,6,8}}")));
            }
            let code_rate = f64::from(numerator) / RATE_DENOMINATOR;
            if !(code_rate > 0.0 && code_rate < 1.0) {
                return Err(bad(format!("code rate {numerator}/1024 outside (0,1)")));
            }
            entries.push(McsEntry {
                index,
                mod_order,
                code_rate,
                se_nom: f64::from(mod_order) * code_rate,
            });
        }
        if entries.is_empty() {
            return Err(Error::McsTable {
                line: 0,
                reason: "table is empty".into(),
            });
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The bundled 29-entry table, parsed once.
    pub fn table1() -> &'static McsTable {
        static TABLE: OnceLock<McsTable> = OnceLock::new();
        TABLE.get_or_init(|| McsTable::parse(TABLE1).expect("bundled MCS table is valid"))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn lookup(&self, index: usize) -> Result<&McsEntry> {
        self.entries
            .get(index)
            .ok_or(Error::McsOutOfRange(index, self.entries.len()))
    }

    pub fn se_nom(&self, index: usize) -> Result<f64> {
        self.lookup(index).map(|e| e.se_nom)
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    /// Nominal spectral efficiencies of all entries, in index order.
    pub fn se_values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.se_nom).collect()
    }
}

/// Looks up an entry of the bundled table.
pub fn lookup(index: usize) -> Result<McsEntry> {
    McsTable::table1().lookup(index).copied()
}

/// Nominal spectral efficiency of an entry of the bundled table.
pub fn se_nom(index: usize) -> Result<f64> {
    McsTable::table1().se_nom(index)
}
