//! Plain CSV grids: one row per line, comma-separated, no header.

use std::path::Path;

use super::Heatmap;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Reads a rectangular numeric grid as `(rows, cols, row-major values)`.
pub fn read_csv_grid(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut cols = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(Error::Format(format!(
                "{}: row {} has {} values, expected {}",
                path.display(),
                r + 1,
                record.len(),
                cols.unwrap_or(0)
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!("{}: row {} column {}: '{field}' is not a number", path.display(), r + 1, c + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Format(format!(
                    "{}: row {} column {}: non-finite value",
                    path.display(),
                    r + 1,
                    c + 1
                )));
            }
            values.push(v);
        }
        rows += 1;
    }
    match cols {
        Some(c) if c > 0 => Ok((rows, c, values)),
        _ => Err(Error::Format(format!("{}: empty grid", path.display()))),
    }
}

pub fn read_csv_slice<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let (h, w, v) = read_csv_grid(path)?;
    Tensor::new(vec![h, w], v.into_iter().map(T::of).collect())
}

fn write_rows<T: Scalar>(path: &Path, cols: usize, data: &[T]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for row in data.chunks(cols) {
        wtr.write_record(row.iter().map(|v| format!("{v}")))
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv_slice<T: Scalar>(slice: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    slice.expect_rank(2, "heatmap slice")?;
    write_rows(path.as_ref(), slice.shape()[1], slice.data())
}

/// Writes joints stacked vertically: `K * H` rows of `W` values.
pub fn write_csv_heatmap<T: Scalar>(hm: &Heatmap<T>, path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), hm.hw().1, hm.values().data())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = Tensor::new(vec![2, 3], vec![0.1, 0.25, 1.0, 0.0, 1e-7, 0.5]).unwrap();
        write_csv_slice(&s, &p).unwrap();
        assert_eq!(read_csv_slice::<f64>(&p).unwrap(), s);
    }

    #[test]
    fn ragged_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(read_csv_grid(&p), Err(Error::Format(_))));
        std::fs::write(&p, "1,x\n").unwrap();
        let msg = read_csv_grid(&p).unwrap_err().to_string();
        assert!(msg.contains("column 2"), "{msg}");
    }
}
