//! Episode dataset file.
//!
//! JSON lines. Line 1 is a header with the format version, the rules (map
//! text included), the episode count and the SHA-256 of every following
//! byte. Each further line is one [`Episode`] holding raw positions, so the
//! normalizer can be refitted from the file alone.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::Episode;
use crate::rules::{MapError, Rules, RulesSpec};

pub const DATASET_VERSION: u32 = 1;
const FORMAT: &str = "riskgcn-episodes";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("not an episode dataset")]
    Format,
    #[error("dataset version {0} is not supported")]
    Version(u32),
    #[error("dataset body does not match its checksum")]
    Checksum,
    #[error("header promises {expected} episodes, found {found}")]
    Count { expected: usize, found: usize },
    #[error("map: {0}")]
    Map(#[from] MapError),
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    rules: RulesSpec,
    episodes: usize,
    sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rules: RulesSpec,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    pub fn new(rules: &Rules, episodes: Vec<Episode>) -> Dataset {
        Dataset {
            rules: RulesSpec::from_rules(rules),
            episodes,
        }
    }

    pub fn turn_states(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Refuses to overwrite: dataset files are write-once.
pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<(), DatasetError> {
    let mut body = Vec::new();
    for (i, ep) in data.episodes.iter().enumerate() {
        serde_json::to_writer(&mut body, ep).map_err(|e| DatasetError::Json { line: i + 2, source: e })?;
        body.push(b'\n');
    }
    let header = Header {
        format: FORMAT.into(),
        version: DATASET_VERSION,
        rules: data.rules.clone(),
        episodes: data.episodes.len(),
        sha256: hex(&Sha256::digest(&body)),
    };
    let mut f = fs::OpenOptions::new().write(true).create_new(true).open(path)?;
    serde_json::to_writer(&mut f, &header).map_err(|e| DatasetError::Json { line: 1, source: e })?;
    f.write_all(b"\n")?;
    f.write_all(&body)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    let bytes = fs::read(path)?;
    let split = bytes.iter().position(|&b| b == b'\n').ok_or(DatasetError::Format)?;
    let header: Header =
        serde_json::from_slice(&bytes[..split]).map_err(|e| DatasetError::Json { line: 1, source: e })?;
    if header.format != FORMAT {
        return Err(DatasetError::Format);
    }
    if header.version != DATASET_VERSION {
        return Err(DatasetError::Version(header.version));
    }
    let body = &bytes[split + 1..];
    if hex(&Sha256::digest(body)) != header.sha256 {
        return Err(DatasetError::Checksum);
    }
    header.rules.to_rules()?;
    let mut episodes = Vec::with_capacity(header.episodes);
    for (i, line) in body.split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        episodes.push(serde_json::from_slice(line).map_err(|e| DatasetError::Json { line: i + 2, source: e })?);
    }
    if episodes.len() != header.episodes {
        return Err(DatasetError::Count {
            expected: header.episodes,
            found: episodes.len(),
        });
    }
    Ok(Dataset {
        rules: header.rules,
        episodes,
    })
}
