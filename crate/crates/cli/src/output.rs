//! Bundle assembly: CSV tables, JSON documents and the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Format};
use crate::error::{CliError, Result};

/// Files produced by one run, held in memory until [`Bundle::write`].
#[derive(Debug)]
pub struct Bundle {
    pub command: String,
    pub dir: PathBuf,
    formats: Vec<Format>,
    files: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Serialize)]
struct FileEntry<'a> {
    name: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a ExperimentConfig,
    files: Vec<FileEntry<'a>>,
}

pub const MANIFEST: &str = "manifest.json";

impl Bundle {
    pub fn new(command: &str, dir: PathBuf, cfg: &ExperimentConfig) -> Self {
        Self { command: command.to_string(), dir, formats: cfg.output.formats.clone(), files: Vec::new() }
    }

    pub fn add_csv(&mut self, name: &str, table: Table) {
        if self.formats.contains(&Format::Csv) {
            self.files.push((name.to_string(), table.into_bytes()));
        }
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        if self.formats.contains(&Format::Json) {
            self.files.push((name.to_string(), json_bytes(value)));
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file plus `manifest.json` and returns the written paths.
    pub fn write(mut self, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        self.files.sort_by(|a, b| a.0.cmp(&b.0));
        fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let manifest = Manifest {
            command: &self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config_sha256: config_hash(cfg),
            config: cfg,
            files: self
                .files
                .iter()
                .map(|(name, bytes)| FileEntry { name, bytes: bytes.len(), sha256: hex(&Sha256::digest(bytes)) })
                .collect(),
        };
        let manifest = json_bytes(&manifest);
        let mut written = Vec::with_capacity(self.files.len() + 1);
        for (name, bytes) in self.files.iter().map(|(n, b)| (n.as_str(), b)).chain([(MANIFEST, &manifest)]) {
            let path = self.dir.join(name);
            fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// SHA-256 of the compact JSON serialization of the config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    hex(&Sha256::digest(text.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("value serializes");
    out.push(b'\n');
    out
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

/// A CSV table with a header row and LF line endings.
pub struct Table {
    buf: Vec<u8>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut t = Self { buf: Vec::new() };
        t.row(header.iter().map(|h| h.as_ref()));
        t
    }

    /// Header `prefix..., x_1..x_dim`.
    pub fn with_coords(prefix: &[&str], dim: usize) -> Self {
        let mut header: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
        header.extend((1..=dim).map(|k| format!("x_{k}")));
        Self::new(&header)
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, fields: impl IntoIterator<Item = S>) {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut self.buf);
        w.write_record(fields).expect("in-memory write");
        w.flush().expect("in-memory write");
    }

    /// Appends pre-rendered rows (as produced by [`path_rows`]).
    pub fn raw(&mut self, text: &str) {
        self.buf.extend_from_slice(text.as_bytes());
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

/// Rows `path_id,step,t,x_1..x_d` of one path.
pub fn path_rows(path_id: u64, times: &[f64], states: &[f64], dim: usize) -> String {
    let mut out = String::new();
    for (k, t) in times.iter().enumerate() {
        out.push_str(&format!("{path_id},{k},{}", fmt_f64(*t)));
        for v in &states[k * dim..(k + 1) * dim] {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn path_table(dim: usize) -> Table {
    Table::with_coords(&["path_id", "step", "t"], dim)
}

/// Resolves `--out` for commands with a single primary file: its directory
/// holds the bundle and its file name replaces the default one.
pub fn split_out(out: &Path) -> (PathBuf, String) {
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).map(Path::to_path_buf).unwrap_or_else(|| ".".into());
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    (dir, name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 5e-324, f64::MAX] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn tables_use_lf_endings() {
        let mut t = Table::new(&["a", "b"]);
        t.row(["1", "2"]);
        t.raw(&path_rows(0, &[0.0, 1.0], &[0.5, 0.25], 1));
        let text = String::from_utf8(t.into_bytes()).unwrap();
        assert_eq!(text, "a,b\n1,2\n0,0,0,0.5\n0,1,1,0.25\n");
    }

    #[test]
    fn formats_filter_files() {
        let mut cfg = ExperimentConfig::from_json(r#"{"model": {"kind": "bm", "eta": 0.1, "dim": 1}}"#).unwrap();
        cfg.output.formats = vec![Format::Json];
        let mut b = Bundle::new("x", "unused".into(), &cfg);
        b.add_csv("a.csv", Table::new(&["a"]));
        b.add_json("a.json", &1);
        assert_eq!(b.names().collect::<Vec<_>>(), ["a.json"]);
    }

    #[test]
    fn split_out_handles_bare_names() {
        assert_eq!(split_out(Path::new("r.json")), (PathBuf::from("."), "r.json".to_string()));
        assert_eq!(split_out(Path::new("a/b/r.json")), (PathBuf::from("a/b"), "r.json".to_string()));
    }
}
