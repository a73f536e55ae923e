//! Append-only audit trail, stored as JSON lines.
//!
//! Each line is one record with exactly the fields `t`, `actor`, `kind` and
//! `detail`:
//!
//! ```text
//! {"t":12,"actor":["mgr","store7","M"],"kind":"managerMsg","detail":["examine",["buyer","store7","B"],["budget"]]}
//! ```

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AuditKind {
    ManagerMsg,
    Violation,
    Rejection,
    DeadLetter,
    FilterEvent,
}

impl AuditKind {
    pub fn parse(s: &str) -> Option<AuditKind> {
        Some(match s {
            "managerMsg" => AuditKind::ManagerMsg,
            "violation" => AuditKind::Violation,
            "rejection" => AuditKind::Rejection,
            "deadLetter" => AuditKind::DeadLetter,
            "filterEvent" => AuditKind::FilterEvent,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AuditKind::ManagerMsg => "managerMsg",
            AuditKind::Violation => "violation",
            AuditKind::Rejection => "rejection",
            AuditKind::DeadLetter => "deadLetter",
            AuditKind::FilterEvent => "filterEvent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub t: f64,
    pub actor: Option<AgentId>,
    pub kind: AuditKind,
    pub detail: serde_json::Value,
}

impl AuditRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("audit records serialize")
    }
}

/// Receives audit records as they are produced.
pub trait AuditSink: Send {
    fn append(&mut self, record: &AuditRecord) -> io::Result<()>;
}

/// In-memory trail; keeps every record.
#[derive(Debug, Default, Clone)]
pub struct MemoryAudit {
    pub records: Vec<AuditRecord>,
}

impl AuditSink for MemoryAudit {
    fn append(&mut self, record: &AuditRecord) -> io::Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Appends one JSON line per record to a file, flushing after each record.
pub struct JsonlAuditWriter {
    out: BufWriter<File>,
}

impl JsonlAuditWriter {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(JsonlAuditWriter { out: BufWriter::new(file) })
    }
}

impl AuditSink for JsonlAuditWriter {
    fn append(&mut self, record: &AuditRecord) -> io::Result<()> {
        writeln!(self.out, "{}", record.to_line())?;
        self.out.flush()
    }
}

pub fn read_jsonl(path: &Path) -> io::Result<Vec<AuditRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Follows an audit file from `offset`, returning complete new lines and the
/// offset just past them. A partially written final line is left for the
/// next call.
pub fn read_new_lines(path: &Path, offset: u64) -> io::Result<(Vec<String>, u64)> {
    let mut file = File::open(path)?;
    let len = file.metadata()?.len();
    if len < offset {
        // truncated or rotated: start over
        return read_new_lines(path, 0);
    }
    file.seek(SeekFrom::Start(offset))?;
    let mut reader = BufReader::new(file);
    let mut lines = Vec::new();
    let mut consumed = offset;
    loop {
        let mut buf = String::new();
        let n = reader.read_line(&mut buf)?;
        if n == 0 || !buf.ends_with('\n') {
            break;
        }
        consumed += n as u64;
        lines.push(buf.trim_end().to_string());
    }
    Ok((lines, consumed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Layer;

    fn rec(t: f64, kind: AuditKind) -> AuditRecord {
        AuditRecord { t, actor: Some(AgentId::new("mgr", "store7", Layer::M)), kind, detail: serde_json::json!(["examine", "budget"]) }
    }

    #[test]
    fn line_has_exactly_four_fields() {
        let line = rec(12.0, AuditKind::ManagerMsg).to_line();
        assert_eq!(line, r#"{"t":12.0,"actor":["mgr","store7","M"],"kind":"managerMsg","detail":["examine","budget"]}"#);
    }

    #[test]
    fn file_roundtrip_and_follow() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let mut w = JsonlAuditWriter::open(&path).unwrap();
        w.append(&rec(1.0, AuditKind::Violation)).unwrap();
        let (lines, off) = read_new_lines(&path, 0).unwrap();
        assert_eq!(lines.len(), 1);
        w.append(&rec(2.0, AuditKind::Rejection)).unwrap();
        let (lines, _) = read_new_lines(&path, off).unwrap();
        assert_eq!(lines.len(), 1);
        assert!(lines[0].contains("rejection"));
        let all = read_jsonl(&path).unwrap();
        assert_eq!(all.iter().map(|r| r.kind).collect::<Vec<_>>(), [AuditKind::Violation, AuditKind::Rejection]);
    }
}
