//! CSV and JSON files.
//!
//! Point clouds are one row per point, `x_1,...,x_dim,weight`, with no
//! header; `#` starts a comment line. A distance matrix is a square CSV with
//! its weights in a one-column sidecar. Label sidecars hold `e,etilde` flags
//! (0 or 1) per point.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric::{MetricMeasureSpace, PointSet};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Rows of numbers, each with its 1-based line number.
fn read_rows(path: &Path) -> Result<Vec<(u64, Vec<f64>)>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut values = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("column {}: {field:?} is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("column {}: value {v} is not finite", col + 1)));
            }
            values.push(v);
        }
        rows.push((line, values));
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(rows)
}

pub fn read_points(path: &Path) -> Result<MetricMeasureSpace> {
    let rows = read_rows(path)?;
    let width = rows[0].1.len();
    if width < 2 {
        return Err(parse_err(path, rows[0].0, "a row needs at least one coordinate and a weight"));
    }
    let mut coords = Vec::with_capacity(rows.len() * (width - 1));
    let mut weights = Vec::with_capacity(rows.len());
    for (line, row) in &rows {
        if row.len() != width {
            return Err(parse_err(
                path,
                *line,
                format!("expected {width} columns, found {}", row.len()),
            ));
        }
        let w = row[width - 1];
        if !(w > 0.0) {
            return Err(parse_err(path, *line, format!("weight {w} must be positive")));
        }
        coords.extend_from_slice(&row[..width - 1]);
        weights.push(w);
    }
    MetricMeasureSpace::euclidean(width - 1, coords, weights).map_err(|e| match e {
        Error::InvalidInput(m) | Error::Degenerate(m) => parse_err(path, 0, m),
        other => other,
    })
}

pub fn write_points(path: &Path, space: &MetricMeasureSpace) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for i in 0..space.len() {
        let coords = space
            .coords(i)
            .ok_or_else(|| Error::invalid("only euclidean spaces can be written as point clouds"))?;
        let mut row: Vec<String> = coords.iter().map(|c| format!("{c:?}")).collect();
        row.push(format!("{:?}", space.weight(i)));
        writeln!(out, "{}", row.join(",")).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_matrix(path: &Path, weights_path: &Path) -> Result<MetricMeasureSpace> {
    let rows = read_rows(path)?;
    let n = rows.len();
    let mut entries = Vec::with_capacity(n * n);
    for (line, row) in &rows {
        if row.len() != n {
            return Err(parse_err(
                path,
                *line,
                format!("matrix with {n} rows needs {n} columns, found {}", row.len()),
            ));
        }
        entries.extend_from_slice(row);
    }
    let weight_rows = read_rows(weights_path)?;
    if weight_rows.len() != n {
        return Err(parse_err(
            weights_path,
            weight_rows.last().map_or(0, |r| r.0),
            format!("{} weights for {n} matrix rows", weight_rows.len()),
        ));
    }
    let mut weights = Vec::with_capacity(n);
    for (line, row) in &weight_rows {
        match row.as_slice() {
            [w] if *w > 0.0 => weights.push(*w),
            _ => return Err(parse_err(weights_path, *line, "expected one positive weight")),
        }
    }
    MetricMeasureSpace::from_matrix(entries, weights).map_err(|e| match e {
        Error::InvalidInput(m) | Error::NotAMetric(m) | Error::Degenerate(m) => parse_err(path, 0, m),
        other => other,
    })
}

/// `seg.csv` becomes `seg.labels.csv`.
pub fn labels_path(points: &Path) -> PathBuf {
    points.with_extension("labels.csv")
}

pub fn write_labels(path: &Path, e: &PointSet, etilde: &PointSet) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(out, "# e,etilde").map_err(io_err(path))?;
    for i in 0..e.universe_len() {
        writeln!(out, "{},{}", e.contains(i) as u8, etilde.contains(i) as u8).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_labels(path: &Path, n: usize) -> Result<(PointSet, PointSet)> {
    let rows = read_rows(path)?;
    if rows.len() != n {
        return Err(parse_err(
            path,
            rows.last().map_or(0, |r| r.0),
            format!("{} label rows for {n} points", rows.len()),
        ));
    }
    let mut e = PointSet::empty(n);
    let mut etilde = PointSet::empty(n);
    for (i, (line, row)) in rows.iter().enumerate() {
        let flag = |v: f64| match v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            _ => Err(parse_err(path, *line, format!("label {v} is not 0 or 1"))),
        };
        match row.as_slice() {
            [a, b] => {
                if flag(*a)? {
                    e.insert(i);
                }
                if flag(*b)? {
                    etilde.insert(i);
                }
            }
            _ => return Err(parse_err(path, *line, "expected two columns e,etilde")),
        }
    }
    Ok((e, etilde))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))
}

/// Writes rows under a header line.
pub fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let csv_err = |e: csv::Error| parse_err(path, 0, e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn points_round_trip() {
        let s = crate::generators::gen_circle(12).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_points(f.path(), &s).unwrap();
        let back = read_points(f.path()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let f = file("# x,y,w\n0,0,1\n\n3, 4, 2\n");
        let s = read_points(f.path()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.distance(0, 1).unwrap(), 5.0);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let f = file("0,0,1\n1,x,1\n");
        match read_points(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let f = file("0,0,1\n1,1\n");
        assert!(matches!(read_points(f.path()), Err(Error::Parse { line: 2, .. })));
        let f = file("0,0,-1\n1,1,1\n");
        assert!(matches!(read_points(f.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn matrix_with_sidecar() {
        let m = file("0,1,2\n1,0,1\n2,1,0\n");
        let w = file("1\n1\n2\n");
        let s = read_matrix(m.path(), w.path()).unwrap();
        assert_eq!(s.distance(0, 2).unwrap(), 2.0);
        assert_eq!(s.weight(2), 2.0);
        let bad = file("0,1,5\n1,0,1\n5,1,0\n");
        assert!(read_matrix(bad.path(), w.path()).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let e = PointSet::full(4);
        let t = PointSet::from_indices(4, [1, 3]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_labels(f.path(), &e, &t).unwrap();
        assert_eq!(read_labels(f.path(), 4).unwrap(), (e, t));
        assert_eq!(labels_path(Path::new("out/seg.csv")), PathBuf::from("out/seg.labels.csv"));
    }
}
