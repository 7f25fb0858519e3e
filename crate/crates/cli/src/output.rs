//! CSV/JSON output with a reproducibility header on every file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub struct OutputDir {
    dir: PathBuf,
    header: Vec<(String, String)>,
}

impl OutputDir {
    pub fn new(dir: impl Into<PathBuf>, header: Vec<(String, String)>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, header })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn header_block(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(out, "# {k}: {v}");
        }
        out
    }

    /// Writes a CSV with the header comment block, a column line and rows.
    pub fn write_csv(
        &self,
        name: &str,
        columns: &[&str],
        rows: &[Vec<String>],
    ) -> std::io::Result<PathBuf> {
        let mut out = self.header_block();
        let _ = writeln!(out, "{}", columns.join(","));
        for row in rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        let path = self.path(name);
        std::fs::write(&path, out)?;
        Ok(path)
    }

    pub fn write_json<T: serde::Serialize>(
        &self,
        name: &str,
        value: &T,
    ) -> std::io::Result<PathBuf> {
        let meta: serde_json::Map<String, serde_json::Value> = self
            .header
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        let doc = serde_json::json!({
            "meta": meta,
            "data": value,
        });
        let path = self.path(name);
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&doc).unwrap_or_default(),
        )?;
        Ok(path)
    }
}

pub fn fmt_f(v: f64) -> String {
    format!("{v:.12e}")
}

pub fn announce(path: &Path) {
    println!("wrote {}", path.display());
}
