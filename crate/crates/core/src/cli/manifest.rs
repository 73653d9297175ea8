use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::io::write_json;

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub subcommand: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let k = reader.read(&mut buf)?;
        if k == 0 {
            break;
        }
        hasher.update(&buf[..k]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl Manifest {
    pub fn start<P: Serialize>(subcommand: &str, params: &P, seed: Option<u64>, inputs: &[&Path]) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Manifest {
            subcommand: subcommand.into(),
            params: serde_json::to_value(params)?,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            started_at: now(),
            finished_at: String::new(),
            inputs,
            outputs: Vec::new(),
        })
    }

    pub fn finish(mut self, out_dir: &Path, outputs: &[&str]) -> Result<()> {
        self.finished_at = now();
        self.outputs = outputs.iter().map(|s| s.to_string()).collect();
        write_json(&out_dir.join("manifest.json"), &self)
    }
}
