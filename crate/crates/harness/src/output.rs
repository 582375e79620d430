//! CSV output with stable formatting and atomic replacement.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{HarnessError, Result};

/// Shortest representation that parses back to the same value. NaN becomes
/// an empty cell.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes `rows` under `header` to a temporary file next to `path`, then
/// renames it into place, so readers never see a partial file.
pub fn write_csv_atomic(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(dir, e))?;
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(tmp.as_file());
        let csv_err = |e: csv::Error| HarnessError::Csv { path: path.to_path_buf(), message: e.to_string() };
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            debug_assert_eq!(r.len(), header.len());
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
    }
    tmp.as_file().flush().map_err(|e| HarnessError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_cells_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-12, 1e300, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::NAN), "");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn atomic_write_replaces_and_uses_lf() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("t.csv");
        write_csv_atomic(&path, &["a", "b"], &[vec!["1".into(), "x,y".into()]]).unwrap();
        write_csv_atomic(&path, &["a", "b"], &[vec!["2".into(), "z".into()]]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a,b\n2,z\n");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
