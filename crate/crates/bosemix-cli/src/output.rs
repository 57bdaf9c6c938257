//! Output files. JSON documents carry a `provenance` object, CSV tables a
//! leading `#` comment line and binary files the same provenance JSON in
//! their metadata string.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub seed: u64,
}

/// SHA-256 of the effective configuration with the output directory blanked,
/// so the same run written to different places hashes the same.
pub fn config_hash(config: &RunConfig) -> String {
    let mut c = config.clone();
    c.output.directory = PathBuf::new();
    let bytes = serde_json::to_vec(&c).expect("config serialises");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Output {
    dir: PathBuf,
    pub provenance: Provenance,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path, provenance: Provenance) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            provenance,
            written: Vec::new(),
        })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn document(&self, result: &impl Serialize) -> serde_json::Value {
        serde_json::json!({ "provenance": self.provenance, "result": result })
    }

    pub fn json(&mut self, name: &str, result: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(&self.document(result)).expect("result serialises");
        text.push('\n');
        let path = self.path(name);
        fs::write(path, text)?;
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let p = &self.provenance;
        let mut buf = format!(
            "# {} {} command={} config_sha256={} seed={}\n",
            p.artifact, p.version, p.command, p.config_sha256, p.seed
        )
        .into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header).map_err(std::io::Error::from)?;
            for row in rows {
                w.write_record(row).map_err(std::io::Error::from)?;
            }
            w.flush()?;
        }
        let path = self.path(name);
        fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn binary<T: ?Sized>(
        &mut self,
        name: &str,
        value: &T,
        write: impl FnOnce(&T, &str, &mut std::io::BufWriter<fs::File>) -> bosemix::Result<()>,
    ) -> Result<(), CliError> {
        let meta = serde_json::to_string(&self.provenance).expect("provenance serialises");
        let path = self.path(name);
        bosemix::io::save(&path, value, &meta, write).map_err(|e| match e {
            bosemix::Error::Io(io) => CliError::Output(io),
            other => CliError::Numerical {
                context: format!("writing {name}"),
                source: other,
            },
        })
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
