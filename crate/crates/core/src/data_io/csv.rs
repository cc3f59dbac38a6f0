//! Canonical sample CSV: header `timestamp_ms,kpi,value`, LF line endings.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::DataError;
use crate::detector::Sample;

pub const SAMPLE_CSV_HEADER: &str = "timestamp_ms,kpi,value";

/// Streaming reader over a canonical sample CSV, optionally filtered to one KPI.
///
/// Samples come out in file order. Timestamps must be strictly increasing per KPI.
pub struct CsvSampleReader {
    records: csv::StringRecordsIntoIter<BufReader<File>>,
    kpi: Option<String>,
    last_ts: HashMap<String, i64>,
    done: bool,
}

impl CsvSampleReader {
    pub fn open(path: &Path, kpi: Option<&str>) -> Result<Self, DataError> {
        let file = File::open(path).map_err(|e| DataError::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::None)
            .from_reader(BufReader::new(file));
        let headers = reader.headers().map_err(|e| DataError::Malformed {
            line: 1,
            reason: e.to_string(),
        })?;
        let found = headers.iter().collect::<Vec<_>>().join(",");
        if found != SAMPLE_CSV_HEADER {
            return Err(DataError::BadHeader {
                expected: SAMPLE_CSV_HEADER.into(),
                found,
            });
        }
        Ok(Self {
            records: reader.into_records(),
            kpi: kpi.map(str::to_owned),
            last_ts: HashMap::new(),
            done: false,
        })
    }

    fn parse(&mut self, rec: csv::StringRecord) -> Result<Option<Sample>, DataError> {
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let malformed = |reason: String| DataError::Malformed { line, reason };
        if rec.len() != 3 {
            return Err(malformed(format!("expected 3 fields, found {}", rec.len())));
        }
        let kpi = &rec[1];
        if let Some(want) = &self.kpi {
            if want != kpi {
                return Ok(None);
            }
        }
        let ts: i64 = rec[0]
            .parse()
            .map_err(|_| malformed(format!("bad timestamp `{}`", &rec[0])))?;
        let value: f64 = rec[2]
            .parse()
            .map_err(|_| malformed(format!("bad value `{}`", &rec[2])))?;
        if !value.is_finite() {
            return Err(malformed(format!("non-finite value `{}`", &rec[2])));
        }
        if let Some(&prev) = self.last_ts.get(kpi) {
            if ts <= prev {
                return Err(DataError::NonMonotonic {
                    line,
                    kpi: kpi.to_owned(),
                    previous: prev,
                    current: ts,
                });
            }
        }
        self.last_ts.insert(kpi.to_owned(), ts);
        Ok(Some(Sample::new(ts, kpi, value)))
    }
}

impl Iterator for CsvSampleReader {
    type Item = Result<Sample, DataError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            let rec = match self.records.next()? {
                Ok(r) => r,
                Err(e) => {
                    self.done = true;
                    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                    return Some(Err(DataError::Malformed {
                        line,
                        reason: e.to_string(),
                    }));
                }
            };
            match self.parse(rec) {
                Ok(Some(s)) => return Some(Ok(s)),
                Ok(None) => continue,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

/// Read all samples of `kpi` (or every KPI when `None`) from a canonical CSV.
pub fn read_csv_samples(path: &Path, kpi: Option<&str>) -> Result<Vec<Sample>, DataError> {
    CsvSampleReader::open(path, kpi)?.collect()
}

/// Write samples in canonical form, in the given order.
pub fn write_csv_samples<'a, I>(path: &Path, samples: I) -> Result<(), DataError>
where
    I: IntoIterator<Item = &'a Sample>,
{
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| DataError::io(path, e);
    writeln!(w, "{SAMPLE_CSV_HEADER}").map_err(io)?;
    for s in samples {
        writeln!(w, "{},{},{}", s.timestamp_ms, s.kpi, s.value).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("in.csv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn filters_by_kpi_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "timestamp_ms,kpi,value\n1000,cpu,0.5\n1500,mem,3\n2000,cpu,0.7\n");
        let cpu = read_csv_samples(&p, Some("cpu")).unwrap();
        assert_eq!(
            cpu,
            vec![Sample::new(1000, "cpu", 0.5), Sample::new(2000, "cpu", 0.7)]
        );
        assert!(read_csv_samples(&p, Some("disk")).unwrap().is_empty());
        assert_eq!(read_csv_samples(&p, None).unwrap().len(), 3);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "timestamp_ms,kpi,value\n1000,cpu,abc\n");
        match read_csv_samples(&p, Some("cpu")) {
            Err(DataError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_and_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_csv_samples(&dir.path().join("nope.csv"), None),
            Err(DataError::NotFound(_))
        ));
        let p = write(&dir, "ts,kpi,value\n");
        assert!(matches!(
            read_csv_samples(&p, None),
            Err(DataError::BadHeader { .. })
        ));
    }

    #[test]
    fn non_monotonic_within_kpi() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "timestamp_ms,kpi,value\n1000,cpu,1\n1000,mem,1\n900,cpu,2\n",
        );
        match read_csv_samples(&p, None) {
            Err(DataError::NonMonotonic { line, kpi, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(kpi, "cpu");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn csv_round_trip(values in proptest::collection::vec(-1e9f64..1e9, 0..50)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("s.csv");
            let samples: Vec<Sample> = values.iter().enumerate()
                .map(|(i, &v)| Sample::new(i as i64 * 60_000, "k", v)).collect();
            write_csv_samples(&p, &samples).unwrap();
            prop_assert_eq!(read_csv_samples(&p, Some("k")).unwrap(), samples);
        }
    }
}
