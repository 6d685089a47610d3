//! Run directories and their manifests.

use serde::Serialize;
use std::fs::{self, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Environment variable consulted for the output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "FDEMULTI_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutDirSource {
    Flag,
    Env,
    Default,
}

pub fn resolve_out_dir(flag: Option<PathBuf>) -> (PathBuf, OutDirSource) {
    if let Some(p) = flag {
        return (p, OutDirSource::Flag);
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => (PathBuf::from(v), OutDirSource::Env),
        _ => (PathBuf::from(DEFAULT_OUT_DIR), OutDirSource::Default),
    }
}

/// A freshly created `runs/<run-id>/` directory. Files are created with
/// `create_new`, so nothing in an existing run is ever replaced.
pub struct RunDir {
    pub id: String,
    pub path: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    /// The id is `<UTC timestamp>-<command>-seed<seed>`, suffixed `-2`, `-3`, …
    /// if a directory of that name already exists.
    pub fn create(base: &Path, command: &str, seed: u64) -> io::Result<Self> {
        fs::create_dir_all(base)?;
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
        let stem = format!("{stamp}-{command}-seed{seed}");
        for attempt in 1.. {
            let id = if attempt == 1 {
                stem.clone()
            } else {
                format!("{stem}-{attempt}")
            };
            let path = base.join(&id);
            match fs::create_dir(&path) {
                Ok(()) => {
                    return Ok(Self {
                        id,
                        path,
                        files: Vec::new(),
                    })
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e),
            }
        }
        unreachable!("unbounded attempt counter")
    }

    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut dyn Write) -> io::Result<()>,
    ) -> io::Result<PathBuf> {
        let path = self.path.join(name);
        let file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)?;
        let mut out = BufWriter::new(file);
        f(&mut out)?;
        out.flush()?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_str(&mut self, name: &str, contents: &str) -> io::Result<PathBuf> {
        self.write_with(name, |w| w.write_all(contents.as_bytes()))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        self.write_str(name, &(text + "\n"))
    }
}

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub run_id: &'a str,
    pub command: &'a str,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub created: String,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub config_path: String,
    /// The config file verbatim, so the run can be replayed from the manifest alone.
    pub config: &'a str,
    pub out_dir: String,
    pub out_dir_source: OutDirSource,
    pub files: Vec<String>,
    pub exit_code: u8,
    pub status: &'a str,
    pub summary: serde_json::Value,
}

impl RunDir {
    pub fn finish(mut self, mut manifest: Manifest<'_>) -> io::Result<PathBuf> {
        manifest.files = self.files.clone();
        manifest.created = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        self.write_json(MANIFEST_NAME, &manifest)
    }
}
