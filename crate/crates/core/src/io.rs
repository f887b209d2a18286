//! File formats: NDJSON logs with a schema header, and plain JSON documents.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::local_map::LocalMapSnapshot;

pub const SNAPSHOT_SCHEMA: &str = "conemap.snapshots";
pub const PLANNER_SCHEMA: &str = "conemap.planner";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub version: u32,
}

/// One line of the snapshot log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub snapshot: LocalMapSnapshot,
    /// Simulator ground truth, for evaluation only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_pose: Option<Pose2>,
}

/// Writes a header line followed by one compact JSON value per line.
pub struct NdjsonWriter<W: Write> {
    out: W,
}

impl<W: Write> NdjsonWriter<W> {
    pub fn new(mut out: W, schema: &str) -> Result<Self> {
        let header = LogHeader {
            schema: schema.to_string(),
            version: LOG_VERSION,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        Ok(NdjsonWriter { out })
    }

    pub fn write<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, value)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Records read from a log, and where reading stopped early if it did.
#[derive(Debug, Clone, PartialEq)]
pub struct LogContents<T> {
    pub records: Vec<T>,
    /// 1-based line number of the first unreadable record.
    pub truncated_at: Option<usize>,
}

pub fn read_ndjson<T: DeserializeOwned, R: BufRead>(reader: R, schema: &str) -> Result<LogContents<T>> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::SchemaMismatch("empty log".into())),
    };
    let header: LogHeader =
        serde_json::from_str(&header).map_err(|e| Error::SchemaMismatch(format!("bad header: {e}")))?;
    if header.schema != schema || header.version != LOG_VERSION {
        return Err(Error::SchemaMismatch(format!(
            "expected {schema} v{LOG_VERSION}, found {} v{}",
            header.schema, header.version
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let parsed = line
            .map_err(Error::from)
            .and_then(|l| serde_json::from_str(&l).map_err(Error::from));
        match parsed {
            Ok(r) => records.push(r),
            Err(_) => {
                return Ok(LogContents {
                    records,
                    truncated_at: Some(i + 2),
                })
            }
        }
    }
    Ok(LogContents {
        records,
        truncated_at: None,
    })
}

pub fn read_ndjson_file<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<LogContents<T>> {
    read_ndjson(BufReader::new(File::open(path)?), schema)
}

pub fn write_ndjson_file<T: Serialize>(path: &Path, schema: &str, records: &[T]) -> Result<()> {
    let mut w = NdjsonWriter::new(BufWriter::new(File::create(path)?), schema)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
