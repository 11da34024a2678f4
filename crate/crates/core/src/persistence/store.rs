use std::fs::{File, OpenOptions};
use std::io::{ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use super::{parse_log, render_log, AuditEvent, PersistenceError};

/// Durable home of the audit log. A batch is appended whole or not at all.
pub trait LogStore {
    fn load(&self) -> Result<Vec<AuditEvent>, PersistenceError>;
    fn append(&mut self, events: &[AuditEvent]) -> Result<(), PersistenceError>;
}

/// Keeps the rendered log text in memory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryStore {
    text: String,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_text(text: impl Into<String>) -> Self {
        MemoryStore { text: text.into() }
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

impl LogStore for MemoryStore {
    fn load(&self) -> Result<Vec<AuditEvent>, PersistenceError> {
        parse_log(&self.text)
    }

    fn append(&mut self, events: &[AuditEvent]) -> Result<(), PersistenceError> {
        self.text.push_str(&render_log(events));
        Ok(())
    }
}

/// Newline-delimited log file, synced after every batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileStore {
    path: PathBuf,
}

fn storage(e: std::io::Error) -> PersistenceError {
    PersistenceError::StorageFailure(e.to_string())
}

impl FileStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl LogStore for FileStore {
    fn load(&self) -> Result<Vec<AuditEvent>, PersistenceError> {
        let mut text = String::new();
        match File::open(&self.path) {
            Ok(mut file) => {
                file.read_to_string(&mut text).map_err(storage)?;
            }
            Err(e) if e.kind() == ErrorKind::NotFound => {}
            Err(e) => return Err(storage(e)),
        }
        parse_log(&text)
    }

    fn append(&mut self, events: &[AuditEvent]) -> Result<(), PersistenceError> {
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path).map_err(storage)?;
        let before = file.metadata().map_err(storage)?.len();
        let written = file.write_all(render_log(events).as_bytes()).and_then(|()| file.sync_data());
        if let Err(e) = written {
            // best effort: cut the partial batch off again
            let _ = file.set_len(before);
            return Err(storage(e));
        }
        Ok(())
    }
}
