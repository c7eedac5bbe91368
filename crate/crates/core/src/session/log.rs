//! JSON-lines persistence for event logs.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::session::event::Event;

#[derive(Debug, Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<(), LogError> {
    let mut out = BufWriter::new(File::create(path)?);
    for e in events {
        writeln!(out, "{}", e.to_json_line())?;
    }
    out.flush()?;
    Ok(())
}

/// Append events to an existing log, creating it if needed.
pub fn append_events(path: &Path, events: &[Event]) -> Result<(), LogError> {
    let mut out = BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?);
    for e in events {
        writeln!(out, "{}", e.to_json_line())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, LogError> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?);
    }
    Ok(events)
}

pub fn events_to_string(events: &[Event]) -> String {
    events.iter().map(|e| e.to_json_line() + "\n").collect()
}
