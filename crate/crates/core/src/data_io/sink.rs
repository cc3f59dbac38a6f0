//! Anomaly sinks.
//!
//! File sinks open in append mode and emit each record as one `write` of a
//! complete line while holding a process-wide per-path lock, so concurrent
//! writers never interleave partial lines.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock};

use parking_lot::Mutex;

use super::{AnomalyRecord, Bus, BusMessage, DataError, SinkSpec};

pub const ANOMALY_CSV_HEADER: &str = "ts_ms,detector_id,kpi,analysis,observed,threshold,score";

static PATH_LOCKS: LazyLock<Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>> =
    LazyLock::new(Default::default);

fn path_lock(path: &Path) -> Arc<Mutex<()>> {
    let key = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
    PATH_LOCKS.lock().entry(key).or_default().clone()
}

pub trait AnomalySink: Send {
    fn write(&mut self, rec: &AnomalyRecord) -> Result<(), DataError>;
    fn flush(&mut self) -> Result<(), DataError> {
        Ok(())
    }
}

pub struct JsonLinesSink {
    path: PathBuf,
    file: File,
    lock: Arc<Mutex<()>>,
}

impl JsonLinesSink {
    /// Open for appending, creating the file if needed.
    pub fn open(path: &Path) -> Result<Self, DataError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| DataError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
            lock: path_lock(path),
        })
    }
}

impl AnomalySink for JsonLinesSink {
    fn write(&mut self, rec: &AnomalyRecord) -> Result<(), DataError> {
        let mut line = rec.to_json_line().into_bytes();
        line.push(b'\n');
        let _g = self.lock.lock();
        self.file
            .write_all(&line)
            .map_err(|e| DataError::io(&self.path, e))
    }

    fn flush(&mut self) -> Result<(), DataError> {
        self.file.flush().map_err(|e| DataError::io(&self.path, e))
    }
}

pub struct CsvSink {
    path: PathBuf,
    file: File,
    lock: Arc<Mutex<()>>,
}

impl CsvSink {
    pub fn open(path: &Path) -> Result<Self, DataError> {
        let lock = path_lock(path);
        let _g = lock.lock();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| DataError::io(path, e))?;
        let empty = file.metadata().map_err(|e| DataError::io(path, e))?.len() == 0;
        if empty {
            file.write_all(format!("{ANOMALY_CSV_HEADER}\n").as_bytes())
                .map_err(|e| DataError::io(path, e))?;
        }
        drop(_g);
        Ok(Self {
            path: path.to_path_buf(),
            file,
            lock,
        })
    }
}

fn csv_line(rec: &AnomalyRecord) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        rec.timestamp_ms.to_string(),
        rec.detector_id.clone(),
        rec.kpi.clone(),
        rec.analysis.clone(),
        rec.observed.to_string(),
        rec.threshold.to_string(),
        rec.score.to_string(),
    ])
    .expect("writing to memory");
    w.into_inner().expect("writing to memory")
}

impl AnomalySink for CsvSink {
    fn write(&mut self, rec: &AnomalyRecord) -> Result<(), DataError> {
        let line = csv_line(rec);
        let _g = self.lock.lock();
        self.file
            .write_all(&line)
            .map_err(|e| DataError::io(&self.path, e))
    }

    fn flush(&mut self) -> Result<(), DataError> {
        self.file.flush().map_err(|e| DataError::io(&self.path, e))
    }
}

pub struct BusSink {
    bus: Arc<Bus>,
    topic: String,
}

impl AnomalySink for BusSink {
    fn write(&mut self, rec: &AnomalyRecord) -> Result<(), DataError> {
        self.bus.publish(&self.topic, BusMessage::Anomaly(rec.clone()));
        Ok(())
    }
}

pub fn open_sink(spec: &SinkSpec, bus: &Arc<Bus>) -> Result<Box<dyn AnomalySink>, DataError> {
    Ok(match spec {
        SinkSpec::CsvFile { path } => Box::new(CsvSink::open(path)?),
        SinkSpec::JsonLinesFile { path } => Box::new(JsonLinesSink::open(path)?),
        SinkSpec::Bus { topic } => Box::new(BusSink {
            bus: bus.clone(),
            topic: topic.clone(),
        }),
    })
}

/// Validate and append one record.
pub fn write_anomaly(sink: &mut dyn AnomalySink, rec: &AnomalyRecord) -> Result<(), DataError> {
    rec.validate()?;
    sink.write(rec)
}
