use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

/// Record of one invocation, written to `manifest.json` in the output directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub master_seed: u64,
    pub threads: Option<usize>,
    pub tool_version: &'static str,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub outputs: Vec<String>,
    pub status: String,
    pub error: Option<String>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(subcommand: &str, config: Option<&Path>, out_dir: &Path, seed: u64, threads: Option<usize>) -> Self {
        Self {
            subcommand: subcommand.into(),
            config: config.map(Path::to_path_buf),
            out_dir: out_dir.to_path_buf(),
            master_seed: seed,
            threads,
            tool_version: env!("CARGO_PKG_VERSION"),
            started_unix: unix_now(),
            finished_unix: None,
            outputs: Vec::new(),
            status: "running".into(),
            error: None,
        }
    }

    /// Creates `name` in the output directory, hands a writer to `f` and
    /// records the file once it is complete.
    pub fn output<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.out_dir.join(name);
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush()?;
        self.outputs.push(name.into());
        Ok(())
    }

    pub fn finish(&mut self, error: Option<String>) -> Result<()> {
        self.finished_unix = Some(unix_now());
        self.status = if error.is_some() { "error" } else { "ok" }.into();
        self.error = error;
        let path = self.out_dir.join("manifest.json");
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}
