//! Numeric CSV tables: rows are observations, columns are variables.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A matrix read from CSV, with its header when the file had one.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub values: DMatrix<f64>,
}

/// Reads a rectangular numeric CSV. The first record is treated as a header
/// when any of its fields is not a number. Row and column numbers in errors
/// are 1-based and count the header line.
pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_table(file)
}

pub fn parse_table<R: std::io::Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut header = None;
    let mut width = None;
    let mut values = Vec::new();
    let mut n_rows = 0;
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if idx == 0 && record.iter().any(|f| f.parse::<f64>().is_err()) {
            header = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                row: line,
                column: record.len().min(w) + 1,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let x: f64 = field.parse().map_err(|_| Error::Parse {
                row: line,
                column: c + 1,
                message: format!("`{field}` is not a number"),
            })?;
            if !x.is_finite() {
                return Err(Error::Data(format!("non-finite value `{field}` at row {line}, column {}", c + 1)));
            }
            values.push(x);
        }
        n_rows += 1;
    }
    let d = width.unwrap_or(0);
    if n_rows == 0 || d == 0 {
        return Err(Error::Data("table has no numeric rows".into()));
    }
    Ok(Table {
        header,
        values: DMatrix::from_row_slice(n_rows, d, &values),
    })
}

/// Writes a matrix, with an optional header line.
pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>, header: Option<&[String]>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    if let Some(h) = header {
        w.write_record(h)?;
    }
    let mut row = Vec::with_capacity(m.ncols());
    for i in 0..m.nrows() {
        row.clear();
        row.extend((0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a square 0/1 adjacency matrix.
pub fn read_adjacency(path: impl AsRef<Path>) -> Result<DMatrix<bool>> {
    let t = read_table(path)?.values;
    if !t.is_square() {
        return Err(Error::Dimension(format!("adjacency is {}×{}", t.nrows(), t.ncols())));
    }
    if t.iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(Error::Data("adjacency entries must be 0 or 1".into()));
    }
    Ok(t.map(|x| x == 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_detected() {
        let t = parse_table("a,b\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(t.header.unwrap(), vec!["a", "b"]);
        assert_eq!(t.values, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn headerless_file() {
        let t = parse_table("1, 2\n3,4e-1\n".as_bytes()).unwrap();
        assert!(t.header.is_none());
        assert_eq!(t.values[(1, 1)], 0.4);
    }

    #[test]
    fn bad_cell_reports_position() {
        let err = parse_table("x,y\n1,2\n3,oops\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (3, 2)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn ragged_row_is_rejected() {
        let err = parse_table("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }));
    }

    #[test]
    fn non_finite_is_a_data_error() {
        assert!(matches!(parse_table("1,2\nNaN,4\n".as_bytes()), Err(Error::Data(_))));
        assert!(matches!(parse_table("1,inf\n".as_bytes()), Err(Error::Data(_))));
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.5, 1e-300, 3.0, 0.0, 1.0 / 3.0]);
        write_matrix(&path, &m, None).unwrap();
        assert_eq!(read_table(&path).unwrap().values, m);
    }
}
