use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a CSV with a header row; cells are quoted only when needed.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => std::io::Error::other(format!("{other:?}")).into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical graph text, when the run has a graph.
    pub graph_digest: Option<String>,
    pub options: serde_json::Value,
    pub version: String,
}

impl RunManifest {
    pub fn new<T: Serialize>(command: &str, graph_text: Option<&str>, options: &T) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_owned(),
            graph_digest: graph_text.map(|t| hex::encode(Sha256::digest(t.as_bytes()))),
            options: serde_json::to_value(options)?,
            version: env!("CARGO_PKG_VERSION").to_owned(),
        })
    }
}

/// Output directory filled under a temporary name and moved into place on
/// success; a failed run leaves nothing behind.
pub struct OutputDir {
    target: PathBuf,
    partial: PathBuf,
}

impl OutputDir {
    pub fn create(target: &Path) -> Result<Self> {
        let name = target
            .file_name()
            .map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
        let partial = target.with_file_name(format!(".{name}.partial"));
        if partial.exists() {
            fs::remove_dir_all(&partial)?;
        }
        fs::create_dir_all(&partial)?;
        Ok(OutputDir {
            target: target.to_path_buf(),
            partial,
        })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.partial.join(file)
    }

    /// Write `manifest.json` and move the directory to its final name.
    pub fn commit(self, manifest: &RunManifest) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(manifest)?;
        fs::write(self.partial.join("manifest.json"), text + "\n")?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target)?;
        }
        fs::rename(&self.partial, &self.target)?;
        Ok(self.target.clone())
    }

    /// Run `body` and commit, or remove the partial directory on error.
    pub fn run<F>(target: &Path, manifest: &RunManifest, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&OutputDir) -> Result<()>,
    {
        let dir = OutputDir::create(target)?;
        match body(&dir) {
            Ok(()) => dir.commit(manifest),
            Err(e) => {
                let _ = fs::remove_dir_all(&dir.partial);
                Err(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_17_digits() {
        for x in [0.1, 1.0 / 3.0, 7.2f64.cbrt(), -1e-300, 12345.678] {
            let s = fmt_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }

    #[test]
    fn cells_with_commas_are_quoted() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("a.csv");
        write_csv(&path, &["id", "x"], &[vec!["e,1".into(), "2".into()]]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "id,x\n\"e,1\",2\n");
    }

    #[test]
    fn failed_run_leaves_no_output() {
        let tmp = tempfile::tempdir().unwrap();
        let target = tmp.path().join("out");
        let m = RunManifest::new("test", None, &()).unwrap();
        let res = OutputDir::run(&target, &m, |d| {
            write_csv(&d.path("a.csv"), &["x"], &[vec!["1".into()]])?;
            Err(crate::Error::OutOfRange("boom".into()))
        });
        assert!(res.is_err());
        assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 0);
        OutputDir::run(&target, &m, |d| write_csv(&d.path("a.csv"), &["x"], &[])).unwrap();
        assert!(target.join("manifest.json").exists());
        assert!(target.join("a.csv").exists());
    }
}
