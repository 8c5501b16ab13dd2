//! CSV files: `,` delimiter, `.` decimals, mandatory header row.

use std::path::Path;

use fexp_core::diffcore::Tensor;
use fexp_core::expander::IterateRecord;

use crate::error::{AppError, AppResult};

fn csv_err(path: &Path, e: impl std::fmt::Display) -> AppError {
    AppError::Csv { path: path.to_path_buf(), detail: e.to_string() }
}

/// A header plus string cells, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Parses one column as floats; empty cells become NaN.
    pub fn floats(&self, path: &Path, name: &str) -> AppResult<Vec<f64>> {
        let col = self.column(name).ok_or_else(|| csv_err(path, format!("no column `{name}`")))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r[col].trim();
                if cell.is_empty() {
                    return Ok(f64::NAN);
                }
                cell.parse().map_err(|_| csv_err(path, format!("row {}: `{cell}` in `{name}` is not a number", i + 2)))
            })
            .collect()
    }
}

pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn read_table(path: &Path) -> AppResult<Table> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(AppError::Usage(format!("{}: empty CSV (no header row)", path.display())));
    }
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, _>>()
        .map_err(|e| csv_err(path, e))?;
    Ok(Table { header, rows })
}

/// Points with header `x1,...,xd[,label]`.
pub fn write_points(path: &Path, points: &Tensor, labels: Option<&[usize]>) -> AppResult<()> {
    let d = points.cols();
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..points.rows()).map(|i| {
        let mut row: Vec<String> = points.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            row.push(l[i].to_string());
        }
        row
    });
    write_table(path, &header_refs, rows)
}

/// Reads a points CSV; the `label` column, if present, is returned separately.
pub fn read_points(path: &Path) -> AppResult<(Tensor, Option<Vec<usize>>)> {
    let table = read_table(path)?;
    let label_col = table.column("label");
    let coords: Vec<usize> = (0..table.header.len()).filter(|&c| Some(c) != label_col).collect();
    for (j, &c) in coords.iter().enumerate() {
        if table.header[c] != format!("x{}", j + 1) {
            return Err(csv_err(path, format!("expected column `x{}`, found `{}`", j + 1, table.header[c])));
        }
    }
    if coords.is_empty() {
        return Err(AppError::Usage(format!("{}: no coordinate columns", path.display())));
    }
    if table.rows.is_empty() {
        return Err(AppError::Usage(format!("{}: CSV has a header but no points", path.display())));
    }
    let mut data = Vec::with_capacity(table.rows.len() * coords.len());
    for (i, row) in table.rows.iter().enumerate() {
        for &c in &coords {
            let v: f64 = row[c]
                .parse()
                .map_err(|_| csv_err(path, format!("row {}: `{}` is not a number", i + 2, row[c])))?;
            data.push(v);
        }
    }
    let labels = match label_col {
        None => None,
        Some(c) => Some(
            table
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| r[c].parse().map_err(|_| csv_err(path, format!("row {}: bad label `{}`", i + 2, r[c]))))
                .collect::<AppResult<Vec<usize>>>()?,
        ),
    };
    let points = Tensor::matrix(table.rows.len(), coords.len(), data)?;
    Ok((points, labels))
}

pub const METRICS_HEADER: [&str; 6] = ["k", "phase", "entropy", "validity", "vendi", "wall_seconds"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics(path: &Path, records: &[IterateRecord]) -> AppResult<()> {
    let rows = records.iter().map(|r| {
        let snap = r.snapshot.as_ref();
        vec![
            r.k.to_string(),
            r.phase.name().to_string(),
            opt(snap.map(|s| s.entropy)),
            opt(snap.map(|s| s.validity)),
            opt(snap.and_then(|s| s.vendi)),
            opt(r.wall_seconds),
        ]
    });
    write_table(path, &METRICS_HEADER, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_round_trip_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let pts = Tensor::from_rows(&[&[0.1, -2.5], &[1e-300, 3.0]]).unwrap();
        write_points(&path, &pts, Some(&[0, 2])).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x1,x2,label\n"));
        let (back, labels) = read_points(&path).unwrap();
        assert_eq!(back, pts);
        assert_eq!(labels, Some(vec![0, 2]));
    }

    #[test]
    fn empty_and_malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(matches!(read_points(&empty), Err(AppError::Usage(_))));
        let header_only = dir.path().join("h.csv");
        std::fs::write(&header_only, "x1,x2\n").unwrap();
        assert!(matches!(read_points(&header_only), Err(AppError::Usage(_))));
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "x1,y\n1,2\n").unwrap();
        assert!(matches!(read_points(&bad), Err(AppError::Csv { .. })));
        let nan = dir.path().join("nan.csv");
        std::fs::write(&nan, "x1\nabc\n").unwrap();
        assert!(matches!(read_points(&nan), Err(AppError::Csv { .. })));
    }
}
