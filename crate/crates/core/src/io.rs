//! CSV state files and atomically published output directories.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, StatePair};

/// Largest boundary value accepted when reading a state file.
const BOUNDARY_TOLERANCE: f64 = 1e-12;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Renders a state as `xi,N,V` rows with 17 significant digits.
pub fn state_csv(mesh: &Mesh, state: &StatePair) -> String {
    let mut out = String::from("xi,N,V\n");
    for (i, x) in mesh.nodes().into_iter().enumerate() {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e}\n",
            x, state.elevation[i], state.velocity[i]
        ));
    }
    out
}

/// Renders one field as `xi,<name>` rows.
pub fn field_csv(mesh: &Mesh, name: &str, values: &[f64]) -> String {
    let mut out = format!("xi,{name}\n");
    for (x, v) in mesh.nodes().into_iter().zip(values) {
        out.push_str(&format!("{x:.16e},{v:.16e}\n"));
    }
    out
}

/// Reads an `xi,N,V` file written for `mesh`. Node coordinates must match
/// and the boundary values must vanish.
pub fn read_state_csv(path: &Path, mesh: &Mesh) -> Result<StatePair> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e.to_string()))?;
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names != ["xi", "N", "V"] {
        return Err(csv_err(
            path,
            format!("expected header xi,N,V, got {}", names.join(",")),
        ));
    }
    let nodes = mesh.nodes();
    let tol = 1e-9 * mesh.length();
    let (mut n, mut v) = (Vec::new(), Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e.to_string()))?;
        let parse = |k: usize| -> Result<f64> {
            rec.get(k)
                .ok_or_else(|| csv_err(path, format!("row {}: missing column", row + 2)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| csv_err(path, format!("row {}: {e}", row + 2)))
        };
        let x = parse(0)?;
        if row >= nodes.len() || (x - nodes[row]).abs() > tol {
            return Err(csv_err(
                path,
                format!(
                    "row {}: coordinate {x} does not match the configured mesh",
                    row + 2
                ),
            ));
        }
        n.push(parse(1)?);
        v.push(parse(2)?);
    }
    if n.len() != nodes.len() {
        return Err(csv_err(
            path,
            format!("expected {} rows, found {}", nodes.len(), n.len()),
        ));
    }
    let last = n.len() - 1;
    for (name, f) in [("N", &n), ("V", &v)] {
        if f[0].abs() > BOUNDARY_TOLERANCE || f[last].abs() > BOUNDARY_TOLERANCE {
            return Err(csv_err(
                path,
                format!("{name} does not vanish at the boundary"),
            ));
        }
    }
    if n.iter().chain(&v).any(|x| !x.is_finite()) {
        return Err(csv_err(path, "non-finite value"));
    }
    StatePair::new(n, v)
}

/// Serializes records with a header row derived from their fields.
pub fn records_csv<T: Serialize>(records: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| Error::Csv {
            path: "<memory>".into(),
            message: e.to_string(),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv {
        path: "<memory>".into(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Normalized configuration.
    pub config: serde_json::Value,
    /// Wall-clock seconds per phase, in execution order.
    pub timings: Vec<(String, f64)>,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
    pub files: Vec<FileEntry>,
}

/// An output directory assembled under a temporary sibling name and renamed
/// into place by [`Staging::publish`]. Dropping an unpublished staging area
/// deletes it.
#[derive(Debug)]
pub struct Staging {
    target: PathBuf,
    staging: PathBuf,
    files: Vec<FileEntry>,
    timings: Vec<(String, f64)>,
    warnings: Vec<String>,
    published: bool,
}

impl Staging {
    /// Prepares `target`. An existing target is replaced only if `overwrite`.
    pub fn begin(target: &Path, overwrite: bool) -> Result<Self> {
        if target.exists() && !overwrite {
            return Err(Error::Config(format!(
                "output directory {} already exists",
                target.display()
            )));
        }
        let name = target
            .file_name()
            .ok_or_else(|| Error::Config(format!("invalid output directory {}", target.display())))?
            .to_string_lossy()
            .into_owned();
        let parent = target
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(io_err(parent))?;
        let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(io_err(&staging))?;
        }
        fs::create_dir_all(&staging).map_err(io_err(&staging))?;
        Ok(Self {
            target: target.to_path_buf(),
            staging,
            files: Vec::new(),
            timings: Vec::new(),
            warnings: Vec::new(),
            published: false,
        })
    }

    pub fn target(&self) -> &Path {
        &self.target
    }

    /// Writes `contents` to `relative` inside the staging area.
    pub fn write(&mut self, relative: &str, contents: &[u8]) -> Result<()> {
        let path = self.staging.join(relative);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        f.write_all(contents).map_err(io_err(&path))?;
        self.files.push(FileEntry {
            path: relative.to_string(),
            bytes: contents.len() as u64,
            sha256: Sha256::digest(contents)
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, relative: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("serializable value");
        self.write(relative, text.as_bytes())
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings
            .push((phase.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{message}");
        self.warnings.push(message);
    }

    /// Writes `manifest.json` and moves the directory into place.
    pub fn publish(
        mut self,
        command: &str,
        config: serde_json::Value,
        summary: serde_json::Value,
    ) -> Result<Manifest> {
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            timings: std::mem::take(&mut self.timings),
            warnings: std::mem::take(&mut self.warnings),
            summary,
            files: std::mem::take(&mut self.files),
        };
        let path = self.staging.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
        fs::write(&path, text).map_err(io_err(&path))?;
        if self.target.exists() {
            fs::remove_dir_all(&self.target).map_err(io_err(&self.target))?;
        }
        fs::rename(&self.staging, &self.target).map_err(io_err(&self.target))?;
        self.published = true;
        Ok(manifest)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.published {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("bsq-io-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn state_csv_round_trips_bit_for_bit() {
        let dir = temp_dir("roundtrip");
        let mesh = Mesh::new(-20.0, 40.0, 57).unwrap();
        let s = StatePair::from_fn(
            &mesh,
            |x| (x * 0.37).sin() / 3.0,
            |x| (-(x - 18.0f64).powi(2)).exp(),
        );
        let path = dir.join("s.csv");
        fs::write(&path, state_csv(&mesh, &s)).unwrap();
        assert_eq!(read_state_csv(&path, &mesh).unwrap(), s);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn reader_rejects_mismatched_files() {
        let dir = temp_dir("reject");
        let mesh = Mesh::new(0.0, 1.0, 5).unwrap();
        let path = dir.join("s.csv");
        fs::write(&path, "xi,N,V\n0,0,0\n0.25,1,1\n").unwrap();
        assert!(read_state_csv(&path, &mesh).is_err());
        fs::write(&path, "x,N,V\n").unwrap();
        assert!(read_state_csv(&path, &mesh).is_err());
        let bad = "xi,N,V\n0,1,0\n0.25,0,0\n0.5,0,0\n0.75,0,0\n1,0,0\n";
        fs::write(&path, bad).unwrap();
        assert!(read_state_csv(&path, &mesh).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unpublished_staging_leaves_nothing_behind() {
        let dir = temp_dir("staging");
        let target = dir.join("run");
        {
            let mut st = Staging::begin(&target, false).unwrap();
            st.write("a.csv", b"x\n").unwrap();
        }
        assert!(!target.exists());
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 0);
        let mut st = Staging::begin(&target, false).unwrap();
        st.write("sub/a.csv", b"x\n").unwrap();
        let m = st
            .publish("test", serde_json::Value::Null, serde_json::Value::Null)
            .unwrap();
        assert_eq!(m.files.len(), 1);
        assert!(target.join("sub/a.csv").is_file() && target.join("manifest.json").is_file());
        assert!(Staging::begin(&target, false).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }
}
