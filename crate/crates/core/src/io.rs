//! Points files: CSV, one point per row, optional header row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{GeoError, Result};
use crate::geometry::PointSet;

fn io_err(path: &Path, message: impl ToString) -> GeoError {
    GeoError::Io {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Parse points from CSV text. The dimension comes from the first data row;
/// a first row that does not parse as numbers is treated as a header.
pub fn parse_points<R: Read>(reader: R) -> std::result::Result<PointSet, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if first.len() != row.len() {
                        return Err(format!(
                            "row {}: expected {} columns, found {}",
                            line + 1,
                            first.len(),
                            row.len()
                        ));
                    }
                }
                rows.push(row);
            }
            Err(_) if line == 0 => continue,
            Err(e) => return Err(format!("row {}: {e}", line + 1)),
        }
    }
    if rows.is_empty() {
        return Err("no points in input".into());
    }
    PointSet::from_rows(rows).map_err(|e| e.to_string())
}

pub fn read_points(path: impl AsRef<Path>) -> Result<PointSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    parse_points(file).map_err(|e| io_err(path, e))
}

pub fn write_points_to<W: Write>(writer: W, points: &PointSet) -> std::result::Result<(), String> {
    let mut wtr = csv::WriterBuilder::new().from_writer(writer);
    for p in points {
        wtr.write_record(p.coords().iter().map(|c| c.to_string()))
            .map_err(|e| e.to_string())?;
    }
    wtr.flush().map_err(|e| e.to_string())
}

pub fn write_points(path: impl AsRef<Path>, points: &PointSet) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    write_points_to(file, points).map_err(|e| io_err(path, e))
}
