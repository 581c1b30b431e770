//! Output files, run manifests and exit codes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

/// Bad input detected by the CLI itself.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// 2 for bad input anywhere in the chain, 3 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return EXIT_VALIDATION;
        }
        if let Some(e) = cause.downcast_ref::<dnsite_core::Error>() {
            return match e {
                dnsite_core::Error::Io(_) => EXIT_RUNTIME,
                _ => EXIT_VALIDATION,
            };
        }
    }
    EXIT_RUNTIME
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads an input file; a missing or unreadable file is bad input.
pub fn read_input(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| Invalid(format!("cannot read {}: {e}", path.display())).into())
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub scenario: String,
    /// SHA-256 of the canonical text of everything that determines the run.
    pub scenario_digest: String,
    pub seed: u64,
    /// Relative to the manifest's directory.
    pub outputs: Vec<String>,
    pub wall_clock_secs: f64,
}

/// A directory being filled with outputs, finished by a manifest.
pub struct RunDir {
    pub dir: PathBuf,
    outputs: Vec<String>,
    started: Instant,
}

impl RunDir {
    pub fn create(dir: PathBuf) -> anyhow::Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(RunDir { dir, outputs: Vec::new(), started: Instant::now() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Lists a file written by other means.
    pub fn add_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn write(&mut self, name: &str, contents: &str) -> anyhow::Result<()> {
        let p = self.path(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Streams into `name` through a buffered writer.
    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> anyhow::Result<()> {
        let p = self.path(name);
        let mut w = BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?);
        f(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", p.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn finish(self, command: &'static str, scenario: &str, canonical: &str, seed: u64) -> anyhow::Result<RunManifest> {
        let mut m = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            scenario: scenario.to_string(),
            scenario_digest: sha256_hex(canonical.as_bytes()),
            seed,
            outputs: self.outputs,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        m.outputs.push("manifest.json".into());
        let p = self.dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&m)?;
        fs::write(&p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
        Ok(m)
    }
}

/// Window length as used in file names: `0.1`, `10`.
pub fn window_label(w: f64) -> String {
    format!("{w}")
}

/// `None` prints as an empty field.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Invalid("x".into()).into()), EXIT_VALIDATION);
        let e: anyhow::Error = dnsite_core::Error::MissingAttribution("x".into()).into();
        assert_eq!(exit_code(&e.context("replaying")), EXIT_VALIDATION);
        let io: anyhow::Error = dnsite_core::Error::Io(std::io::Error::other("disk")).into();
        assert_eq!(exit_code(&io), EXIT_RUNTIME);
        assert_eq!(exit_code(&anyhow::anyhow!("bind")), EXIT_RUNTIME);
    }

    #[test]
    fn manifest_lists_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        let mut d = RunDir::create(tmp.path().join("a")).unwrap();
        d.write("x.csv", "h\n").unwrap();
        let m = d.finish("simulate", "a", "text", 3).unwrap();
        assert_eq!(m.outputs, vec!["x.csv", "manifest.json"]);
        assert_eq!(m.scenario_digest, sha256_hex(b"text"));
        let back: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(tmp.path().join("a/manifest.json")).unwrap()).unwrap();
        assert_eq!(back["seed"], 3);
    }

    #[test]
    fn labels() {
        assert_eq!(window_label(0.1), "0.1");
        assert_eq!(window_label(10.0), "10");
        assert_eq!(opt(None), "");
    }
}
