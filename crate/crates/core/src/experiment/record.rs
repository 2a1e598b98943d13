//! Per-arrival run records and their CSV form.

use std::io::{Read, Write};

use super::ExperimentError;

/// Column names, in file order.
pub const CSV_HEADER: [&str; 16] = [
    "k",
    "ts_ticks",
    "arrival_ticks",
    "idt",
    "iat",
    "tilde_ts",
    "tilde_tr",
    "delay",
    "r_cr",
    "r_ls",
    "r_ir",
    "f_pll",
    "err_ppm_cr",
    "err_ppm_ls",
    "err_ppm_ir",
    "err_ppm_pll",
];

/// One received packet. `None` fields are written as empty cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    /// Departure sequence number.
    pub k: u64,
    pub ts_ticks: u64,
    pub arrival_ticks: u64,
    pub idt: Option<i64>,
    pub iat: Option<i64>,
    pub tilde_ts: i64,
    pub tilde_tr: i64,
    /// Ground-truth network delay in seconds.
    pub delay: f64,
    pub r_cr: Option<f64>,
    pub r_ls: Option<f64>,
    pub r_ir: Option<f64>,
    pub f_pll: Option<f64>,
    pub err_ppm_cr: Option<f64>,
    pub err_ppm_ls: Option<f64>,
    pub err_ppm_ir: Option<f64>,
    pub err_ppm_pll: Option<f64>,
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunRecord {
    pub fn fields(&self) -> [String; 16] {
        [
            self.k.to_string(),
            self.ts_ticks.to_string(),
            self.arrival_ticks.to_string(),
            cell(self.idt),
            cell(self.iat),
            self.tilde_ts.to_string(),
            self.tilde_tr.to_string(),
            self.delay.to_string(),
            cell(self.r_cr),
            cell(self.r_ls),
            cell(self.r_ir),
            cell(self.f_pll),
            cell(self.err_ppm_cr),
            cell(self.err_ppm_ls),
            cell(self.err_ppm_ir),
            cell(self.err_ppm_pll),
        ]
    }

    /// Error column by estimator name (`cr`, `ls`, `ir`, `pll`).
    pub fn error_ppm(&self, estimator: &str) -> Option<f64> {
        match estimator {
            "cr" => self.err_ppm_cr,
            "ls" | "rls" => self.err_ppm_ls,
            "ir" => self.err_ppm_ir,
            "pll" => self.err_ppm_pll,
            _ => None,
        }
    }
}

/// Writes the header and all records with `\n` line endings.
pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<(), ExperimentError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush().map_err(|e| ExperimentError::Io {
        path: "<csv output>".into(),
        source: e,
    })?;
    Ok(())
}

pub fn records_to_csv(records: &[RunRecord]) -> Result<String, ExperimentError> {
    let mut buf = Vec::new();
    write_records(&mut buf, records)?;
    Ok(String::from_utf8(buf).expect("csv output is ASCII"))
}

/// Reads records written by [`write_records`]; the header must match.
pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>, ExperimentError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(ExperimentError::BadCsv {
            line: 1,
            message: format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |col: usize, msg: String| ExperimentError::BadCsv {
            line,
            message: format!("{}: {msg}", CSV_HEADER[col]),
        };
        let req = |col: usize| -> Result<&str, ExperimentError> {
            match row.get(col) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(bad(col, "missing value".into())),
            }
        };
        macro_rules! required {
            ($col:expr) => {
                req($col)?.parse().map_err(|e| bad($col, format!("{e}")))?
            };
        }
        macro_rules! optional {
            ($col:expr) => {
                match row.get($col).unwrap_or("") {
                    "" => None,
                    s => Some(s.parse().map_err(|e| bad($col, format!("{e}")))?),
                }
            };
        }
        out.push(RunRecord {
            k: required!(0),
            ts_ticks: required!(1),
            arrival_ticks: required!(2),
            idt: optional!(3),
            iat: optional!(4),
            tilde_ts: required!(5),
            tilde_tr: required!(6),
            delay: required!(7),
            r_cr: optional!(8),
            r_ls: optional!(9),
            r_ir: optional!(10),
            f_pll: optional!(11),
            err_ppm_cr: optional!(12),
            err_ppm_ls: optional!(13),
            err_ppm_ir: optional!(14),
            err_ppm_pll: optional!(15),
        });
    }
    Ok(out)
}
