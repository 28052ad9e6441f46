//! CSV input and output for data matrices.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::DataMatrix;

/// Parse CSV text. A first line that does not parse as numbers is taken as a
/// header and skipped. Line numbers in errors are 1-based.
pub fn parse_observations<R: Read>(input: R) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if idx == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    msg: format!("{e}: {:?}", record.iter().collect::<Vec<_>>()),
                })
            }
        };
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {w} fields, found {}", values.len()),
                })
            }
            _ => {}
        }
        if let Some(col) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: rows.len(),
                col,
            });
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no data rows".into(),
        });
    }
    DataMatrix::from_rows(&rows)
}

pub fn load_observations(path: &Path) -> Result<DataMatrix> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_observations(file)
}

/// Scientific notation with 17 significant digits; parses back to the same
/// `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_matrix<W: Write>(out: W, data: &DataMatrix, header: Option<&[String]>) -> Result<()> {
    let mut out = BufWriter::new(out);
    if let Some(h) = header {
        writeln!(out, "{}", h.join(","))?;
    }
    for row in data.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_matrix(path: &Path, data: &DataMatrix, header: Option<&[String]>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_matrix(file, data, header)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_column() {
        let d = parse_observations("1.0\n2.0\n3.0".as_bytes()).unwrap();
        assert_eq!((d.rows(), d.cols()), (3, 1));
        assert_eq!(d.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn header_is_skipped() {
        let d = parse_observations("y1,y2\n0,1\n".as_bytes()).unwrap();
        assert_eq!((d.rows(), d.cols()), (1, 2));
        assert_eq!(d.values(), &[0.0, 1.0]);
    }

    #[test]
    fn nan_is_rejected() {
        let err = parse_observations("1.0\nnan\n".as_bytes()).unwrap_err();
        assert_eq!(err, Error::NonFiniteValue { row: 1, col: 0 });
    }

    #[test]
    fn bad_field_reports_line() {
        let err = parse_observations("a\n1\n2\nx\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");
        let err = parse_observations("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(values in proptest::collection::vec(-1e300f64..1e300, 2..40)) {
            let n = values.len() / 2;
            let d = DataMatrix::new(n, 2, values[..2 * n].to_vec()).unwrap();
            let mut buf = Vec::new();
            write_matrix(&mut buf, &d, Some(&["a".into(), "b".into()])).unwrap();
            let back = parse_observations(buf.as_slice()).unwrap();
            prop_assert_eq!(back, d);
        }

        #[test]
        fn tiny_magnitudes_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let d = DataMatrix::column(&[v]).unwrap();
            let mut buf = Vec::new();
            write_matrix(&mut buf, &d, None).unwrap();
            prop_assert_eq!(parse_observations(buf.as_slice()).unwrap(), d);
        }
    }
}
