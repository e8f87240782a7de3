//! Single-column CSV files for series and regime paths, and trace tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ObservationSeries, StatePath};

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

// Reads a one-column file with the given header; returns (line, field) pairs.
fn read_column(path: &Path, header: &str) -> Result<Vec<(u64, String)>> {
    let mut rdr = open_reader(path)?;
    let mut out = Vec::new();
    let mut saw_header = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 1 {
            return Err(parse_error(path, line, format!("expected 1 column, found {}", rec.len())));
        }
        if !saw_header {
            if &rec[0] != header {
                return Err(parse_error(
                    path,
                    line,
                    format!("expected header {header:?}, found {:?}", &rec[0]),
                ));
            }
            saw_header = true;
            continue;
        }
        out.push((line, rec[0].to_string()));
    }
    if !saw_header {
        return Err(parse_error(path, 1, "file is empty"));
    }
    if out.is_empty() {
        return Err(parse_error(path, 2, "no data rows after the header"));
    }
    Ok(out)
}

/// Reads returns from a CSV with header `y`.
pub fn read_series(path: &Path) -> Result<ObservationSeries> {
    let rows = read_column(path, "y")?;
    let mut values = Vec::with_capacity(rows.len());
    for (line, field) in rows {
        let v: f64 = field
            .parse()
            .map_err(|_| parse_error(path, line, format!("not a number: {field:?}")))?;
        if !v.is_finite() {
            return Err(parse_error(path, line, format!("non-finite value {field:?}")));
        }
        values.push(v);
    }
    ObservationSeries::new(values)
}

pub fn write_series(path: &Path, y: &ObservationSeries) -> Result<()> {
    write_lines(path, "y", y.values().iter().map(|v| format!("{v:?}")))
}

/// Reads a regime path with header `regime` and labels `1..=m`.
pub fn read_path(path: &Path, m: usize) -> Result<StatePath> {
    let rows = read_column(path, "regime")?;
    let mut states = Vec::with_capacity(rows.len());
    for (line, field) in rows {
        let v: usize = field
            .parse()
            .map_err(|_| parse_error(path, line, format!("not a regime label: {field:?}")))?;
        if v == 0 || v > m {
            return Err(parse_error(path, line, format!("regime {v} outside 1..={m}")));
        }
        states.push(v - 1);
    }
    StatePath::new(states, m)
}

pub fn write_path(path: &Path, states: &StatePath) -> Result<()> {
    write_lines(path, "regime", states.as_slice().iter().map(|s| (s + 1).to_string()))
}

fn write_lines(path: &Path, header: &str, lines: impl Iterator<Item = String>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for l in lines {
        writeln!(w, "{l}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes a table with a header row; floats use the shortest round-trip form.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:?}")))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes rows of already formatted cells.
pub fn write_records(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a numeric table written by [`write_table`].
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(parse_error(path, 1, "file is empty"));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_error(path, line, format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_error(path, line, format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.csv");
        let y = ObservationSeries::new(vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0]).unwrap();
        write_series(&p, &y).unwrap();
        assert_eq!(read_series(&p).unwrap(), y);
    }

    #[test]
    fn bad_row_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.csv");
        let mut s = String::from("y\n");
        for i in 2..17 {
            s.push_str(&format!("{i}.0\n"));
        }
        s.push_str("abc\n1.0\n");
        std::fs::write(&p, s).unwrap();
        match read_series(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 17),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.csv");
        std::fs::write(&p, "").unwrap();
        assert!(matches!(read_series(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn path_roundtrip_is_one_based() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = StatePath::new(vec![0, 1, 1, 0], 2).unwrap();
        write_path(&p, &s).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "regime\n1\n2\n2\n1\n");
        assert_eq!(read_path(&p, 2).unwrap(), s);
        std::fs::write(&p, "regime\n1\n3\n").unwrap();
        assert!(matches!(read_path(&p, 2), Err(Error::Parse { line: 3, .. })));
    }
}
