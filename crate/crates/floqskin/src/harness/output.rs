use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST: &str = "manifest.json";

/// Formats a number with 12 significant digits.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = x.abs();
    if (1e-5..1e12).contains(&a) {
        let digits = (11 - a.log10().floor() as i32).max(0) as usize;
        let s = format!("{x:.digits$}");
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{x:.11e}")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub config_hash: String,
    pub wall_clock_seconds: f64,
    /// Every file written by the run except the manifest itself.
    pub files: Vec<FileEntry>,
    pub convergence: Value,
}

/// Single writer for one run directory. Files are recorded as they are
/// written; the manifest goes last.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    /// Creates the directory and removes a manifest left by an earlier run,
    /// so an interrupted run never looks complete.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let stale = root.join(MANIFEST);
        if stale.exists() {
            fs::remove_file(stale)?;
        }
        Ok(OutputDir { root, files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_path(self.root.join(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        self.record(name);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.text(name, &text)
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<()> {
        fs::write(self.root.join(name), body)?;
        self.record(name);
        Ok(())
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<RunManifest> {
        let mut names = self.files.clone();
        names.sort();
        manifest.files = names
            .into_iter()
            .map(|name| {
                let bytes = fs::read(self.root.join(&name))?;
                let sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
                Ok(FileEntry { name, bytes: bytes.len() as u64, sha256 })
            })
            .collect::<Result<_>>()?;
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.root.join(MANIFEST), text)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(1.0), "1");
        assert_eq!(num(-0.043108), "-0.043108");
        assert_eq!(num(1.0 / 3.0), "0.333333333333");
        assert_eq!(num(123456.789), "123456.789");
        assert_eq!(num(2.0 / 3.0 * 1e-7), "6.66666666667e-8");
        assert_eq!(num(-1e-300), "-1.00000000000e-300");
        for x in [1.0 / 7.0, -2.5e-3, 98765.4321, 3.3e-9, 7e15] {
            let y: f64 = num(x).parse().unwrap();
            assert!(((y - x) / x).abs() < 1e-11, "{x} -> {}", num(x));
        }
    }
}
