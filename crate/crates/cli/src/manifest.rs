use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use tabhash::Result;

/// Everything needed to reproduce a report. Thread count is deliberately absent.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub params: serde_json::Value,
    pub master_seed: u64,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    manifest: &'a RunManifest,
    report: &'a R,
}

pub struct Output {
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub extra: Vec<PathBuf>,
    pub timing: bool,
    pub started: Instant,
}

impl Output {
    pub fn manifest<P: Serialize>(
        &self,
        subcommand: &'static str,
        params: &P,
        seed: u64,
    ) -> Result<RunManifest> {
        let outputs = self
            .out
            .iter()
            .chain(&self.csv)
            .chain(&self.extra)
            .map(|p| p.display().to_string())
            .collect();
        Ok(RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            params: serde_json::to_value(params)?,
            master_seed: seed,
            outputs,
            wall_clock_seconds: self.timing.then(|| self.started.elapsed().as_secs_f64()),
        })
    }

    /// Writes the report to `--out`, or to stdout when no path was given.
    /// The summary goes to stdout, or stderr if stdout carries the report.
    pub fn emit<R: Serialize>(
        &self,
        manifest: &RunManifest,
        report: &R,
        summary: &str,
    ) -> Result<()> {
        let mut json = serde_json::to_string_pretty(&Envelope { manifest, report })?;
        json.push('\n');
        match &self.out {
            Some(path) => {
                write_file(path, json.as_bytes())?;
                println!("{summary}");
            }
            None => {
                print!("{json}");
                eprintln!("{summary}");
            }
        }
        Ok(())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn create_file(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::File::create(path)?)
}
