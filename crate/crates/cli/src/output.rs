use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use fracheat::lattice::fmt_num;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::Failure;

/// Output directory of one run.
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: String,
    seed: u64,
    versions: Versions,
    artifacts: &'a [String],
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Versions {
    fracheat: &'static str,
    cli: &'static str,
}

/// SHA-256 of the canonical JSON form of the config, after `--seed`.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serialises");
    Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    pub fn writer(&mut self, name: &str) -> Result<BufWriter<File>, Failure> {
        let p = self.path(name);
        let f = File::create(&p).map_err(|e| Failure::Io(format!("cannot create {}: {e}", p.display())))?;
        Ok(BufWriter::new(f))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut w = self.writer(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Io(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// CSV with a header row; numbers use the fixed 17-digit format.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<(), Failure> {
        let mut w = self.writer(name)?;
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            let line: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Manifest last, so it lists every artifact; wall time goes to a
    /// separate file to keep the manifest reproducible.
    pub fn finish(mut self, command: &str, config: &ExperimentConfig, wall: Duration) -> Result<(), Failure> {
        fs::write(self.dir.join("timing.txt"), format!("{:.3}\n", wall.as_secs_f64()))?;
        self.written.sort();
        let manifest = Manifest {
            command,
            config_sha256: config_hash(config),
            seed: config.seed,
            versions: Versions {
                fracheat: fracheat_version(),
                cli: env!("CARGO_PKG_VERSION"),
            },
            artifacts: &self.written,
            config,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Io(e.to_string()))?;
        fs::write(self.dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

fn fracheat_version() -> &'static str {
    // both crates share the workspace version
    env!("CARGO_PKG_VERSION")
}

pub enum Cell {
    Num(f64),
    Int(usize),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_num(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
        }
    }
}
