use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{MisbehaviorScript, ScenarioConfig};
use crate::runtime::Record;

/// Parameters of the run that produced a trace; the trace file's first line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceHeader {
    pub seed: u64,
    pub horizon: f64,
    pub config: ScenarioConfig,
    pub script: MisbehaviorScript,
}

/// Everything that happened in a run, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<Record>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    rec: String,
    #[serde(flatten)]
    header: TraceHeader,
}

impl Trace {
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        let head = HeaderLine { rec: "run".into(), header: self.header.clone() };
        serde_json::to_writer(&mut w, &head)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(f))
    }

    pub fn read_jsonl(r: impl BufRead) -> anyhow::Result<Trace> {
        let mut lines = r.lines();
        let first = lines.next().ok_or_else(|| anyhow::anyhow!("empty trace"))??;
        let head: HeaderLine = serde_json::from_str(&first)?;
        anyhow::ensure!(head.rec == "run", "trace does not start with a run header");
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| anyhow::anyhow!("line {}: {e}", i + 2))?);
        }
        Ok(Trace { header: head.header, records })
    }

    pub fn load(path: &Path) -> anyhow::Result<Trace> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// SHA-256 of the serialized trace, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl()))
    }
}
