//! Result rows and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
}

pub const COLUMNS: &[&str] = &[
    "manifold",
    "n",
    "k",
    "lambda",
    "delta",
    "norm_p1",
    "norm_p2",
    "norm_p4",
    "tube_R",
    "tube_l2",
    "tube_min_abs",
    "defect",
    "window_margin",
    "separation_margin",
    "err_estimate",
    "wall_ms",
    "off_diagonal",
    "status",
];

/// One sweep point at one tube multiplier. Measured columns are empty when
/// the row failed or the quantity does not apply (window margin on sphere
/// quotients, for instance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub manifold: String,
    pub n: usize,
    pub k: u64,
    pub lambda: f64,
    pub delta: f64,
    pub norm_p1: Option<f64>,
    pub norm_p2: Option<f64>,
    pub norm_p4: Option<f64>,
    #[serde(rename = "tube_R")]
    pub tube_r: f64,
    pub tube_l2: Option<f64>,
    pub tube_min_abs: Option<f64>,
    pub defect: Option<f64>,
    pub window_margin: Option<f64>,
    pub separation_margin: Option<f64>,
    pub err_estimate: Option<f64>,
    pub wall_ms: f64,
    /// Envelope bound on the deck terms `i ≥ 2` over the Knapp tube.
    pub off_diagonal: Option<f64>,
    /// `ok`, or `error:<kind>: <message>`.
    pub status: String,
}

impl Row {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn is_flat(&self) -> bool {
        self.window_margin.is_some() || self.delta > 0.0
    }

    /// The row with `wall_ms` cleared, for determinism comparisons.
    pub fn without_timing(&self) -> Row {
        Row { wall_ms: 0.0, ..self.clone() }
    }
}

pub fn write_rows<W: Write>(out: W, rows: &[Row]) -> Result<(), TableError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<Row>, TableError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let found: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if found != COLUMNS {
        return Err(TableError::Header { expected: COLUMNS.iter().map(|s| s.to_string()).collect(), found });
    }
    let mut rows = Vec::new();
    for r in rd.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Row {
        Row {
            manifold: "klein_bottle".into(),
            n: 2,
            k: 120,
            lambda: 120.0,
            delta: 1.0 / 120f64.ln(),
            norm_p1: Some(0.1 + 0.2),
            norm_p2: Some(0.7071067811865476),
            norm_p4: None,
            tube_r: 1.0,
            tube_l2: Some(1e-300),
            tube_min_abs: Some(3.5),
            defect: Some(0.0),
            window_margin: Some(0.012),
            separation_margin: Some(f64::INFINITY),
            err_estimate: Some(1e-12),
            wall_ms: 12.5,
            off_diagonal: None,
            status: "error:Quadrature: p = 1, \"quoted\"".into(),
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let rows = vec![sample(), Row { k: 7, status: "ok".into(), ..sample() }];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let back = read_rows(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        assert_eq!(back[0].norm_p1.unwrap().to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn header_checked() {
        assert!(matches!(read_rows("a,b\n1,2\n".as_bytes()), Err(TableError::Header { .. })));
        let mut buf = Vec::new();
        write_rows(&mut buf, &[]).unwrap();
        assert!(read_rows(buf.as_slice()).unwrap().is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn opt() -> impl Strategy<Value = Option<f64>> {
            proptest::option::of(any::<f64>().prop_filter("finite or infinite, not NaN", |v| !v.is_nan()))
        }

        proptest! {
            #[test]
            fn rows_round_trip_bitwise(
                k in any::<u64>(),
                lambda in any::<f64>().prop_filter("not NaN", |v| !v.is_nan()),
                vals in proptest::collection::vec(opt(), 8),
                status in "[ -~]{0,24}",
            ) {
                let row = Row {
                    k,
                    lambda,
                    norm_p1: vals[0],
                    norm_p2: vals[1],
                    norm_p4: vals[2],
                    tube_l2: vals[3],
                    defect: vals[4],
                    window_margin: vals[5],
                    separation_margin: vals[6],
                    off_diagonal: vals[7],
                    status,
                    ..sample()
                };
                let mut buf = Vec::new();
                write_rows(&mut buf, std::slice::from_ref(&row)).unwrap();
                let back = read_rows(buf.as_slice()).unwrap();
                prop_assert_eq!(back.len(), 1);
                prop_assert_eq!(back[0].lambda.to_bits(), row.lambda.to_bits());
                prop_assert_eq!(&back[0], &row);
            }

            #[test]
            fn reader_never_panics(text in "\\PC{0,200}") {
                let _ = read_rows(text.as_bytes());
            }
        }
    }
}
