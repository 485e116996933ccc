use std::path::Path;

use crate::error::{Error, Result};
use crate::integrator::Trace;

fn csv_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Formats with 17 significant digits, enough to round-trip every `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(trace: &Trace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(&trace.columns).map_err(|e| csv_err(path, e))?;
    for row in &trace.rows {
        w.write_record(row.iter().map(|v| format_value(*v)))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Trace> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let columns: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    if columns.first().map(String::as_str) != Some("t") {
        return Err(csv_err(path, "first column must be `t`"));
    }
    let mut trace = Trace::new(columns);
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| csv_err(path, format!("record {}: {e}", line + 1)))?;
        trace.rows.push(row);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_csv(&Trace::new(vec!["t".into(), "delta".into()]), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "t,delta\n");
        let back = read_csv(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.columns, ["t", "delta"]);
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut trace = Trace::new(vec!["t".into(), "a".into(), "b".into()]);
        trace.rows.push(vec![0.0, 1.0 / 3.0, f64::NAN]);
        trace.rows.push(vec![0.1, -2.5e-300, 1e300]);
        write_csv(&trace, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.rows[1], trace.rows[1]);
        assert_eq!(back.rows[0][1], 1.0 / 3.0);
        assert!(back.rows[0][2].is_nan());
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_csv(Path::new("/nonexistent/trace.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/trace.csv"));
    }
}
