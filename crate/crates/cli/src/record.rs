//! JSON-lines result records.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{Params, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

/// One self-describing line of `records.jsonl`. Every field except
/// `timings` is a deterministic function of the parameter echo.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub command: String,
    /// Sub-run within the command, such as `summary` or `cell`.
    pub stage: String,
    pub status: Status,
    pub tool_version: String,
    pub config_hash: String,
    pub params: Params,
    pub outputs: Map<String, Value>,
    /// Output files, relative to the output directory.
    pub files: BTreeMap<String, String>,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl ResultRecord {
    pub fn new(cfg: &RunConfig, stage: &str) -> Self {
        Self {
            command: cfg.command.name().to_string(),
            stage: stage.to_string(),
            status: Status::Ok,
            tool_version: cfg.tool_version.clone(),
            config_hash: cfg.config_hash.clone(),
            params: cfg.params.clone(),
            outputs: Map::new(),
            files: BTreeMap::new(),
            converged: true,
            warnings: Vec::new(),
            error: None,
            timings: BTreeMap::new(),
        }
    }

    pub fn put(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).expect("output serializes");
        self.outputs.insert(key.to_string(), v);
        self
    }

    pub fn fail(&mut self, error: impl ToString) -> &mut Self {
        self.status = Status::Failed;
        self.error = Some(error.to_string());
        self
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Appends records to `records.jsonl` in the output directory. It is the
/// only writer of that file.
pub struct RecordWriter {
    path: PathBuf,
    file: BufWriter<File>,
}

impl RecordWriter {
    pub fn open(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("records.jsonl");
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, record: &ResultRecord) -> std::io::Result<()> {
        writeln!(self.file, "{}", record.to_line())?;
        self.file.flush()
    }
}
