//! Offline replay: run a detector over a whole CSV file in one pass.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::control::DetectorSpec;
use crate::data_io::{read_csv_samples, AnomalyRecord, DataError, SinkSpec, SourceSpec};
use crate::detector::{detect_batch, AnalysisParams, DetectorError, Sample};
use crate::registry::{typed_params, RegistryError};

#[derive(Debug, Error)]
pub enum OfflineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("offline runs need a CSV source and a JSON-lines sink")]
    UnsupportedSpec,
}

/// The anomaly records `detect_batch` produces for `samples`, as a worker would write them.
pub fn batch_records(
    detector_id: &str,
    params: &AnalysisParams,
    samples: &[Sample],
) -> Result<Vec<AnomalyRecord>, DetectorError> {
    Ok(detect_batch(params, samples)?
        .into_iter()
        .map(|(i, v)| AnomalyRecord {
            timestamp_ms: samples[i].timestamp_ms,
            detector_id: detector_id.to_owned(),
            kpi: samples[i].kpi.clone(),
            analysis: params.analysis_name().to_owned(),
            observed: v.observed,
            threshold: v.threshold_used,
            score: v.score,
        })
        .collect())
}

/// Write records as JSON lines, replacing the file. An empty list yields an empty file.
pub fn write_json_lines(path: &Path, records: &[AnomalyRecord]) -> Result<(), DataError> {
    let file = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        r.validate()?;
        writeln!(w, "{}", r.to_json_line()).map_err(|e| DataError::io(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

/// Replay the CSV source of `spec` through its detector into its JSON-lines sink.
pub fn run_offline(spec: &DetectorSpec) -> Result<Vec<AnomalyRecord>, OfflineError> {
    let (SourceSpec::CsvFile { path: input }, SinkSpec::JsonLinesFile { path: output }) =
        (&spec.source, &spec.sink)
    else {
        return Err(OfflineError::UnsupportedSpec);
    };
    let params = typed_params(&spec.analysis_name, &spec.params)?;
    let samples = read_csv_samples(input, Some(&spec.kpi))?;
    let records = batch_records(&spec.detector_id, &params, &samples)?;
    write_json_lines(output, &records)?;
    Ok(records)
}
