//! Telemetry records, log I/O and reference-window MinMax scaling.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One telemetry point reported by the QKD device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Milliseconds since the Unix epoch.
    #[serde(rename = "ts")]
    pub timestamp: i64,
    /// Quantum bit error rate as a fraction.
    pub qber: f64,
    /// Secure key rate in bits per second.
    pub skr: f64,
}

impl SampleRecord {
    pub fn new(timestamp: i64, qber: f64, skr: f64) -> Self {
        SampleRecord {
            timestamp,
            qber,
            skr,
        }
    }

    /// Checks the physical ranges of the two channels.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.qber.is_finite() || !(0.0..=1.0).contains(&self.qber) {
            return Err(format!("qber out of range: {}", self.qber));
        }
        if !self.skr.is_finite() || self.skr < 0.0 {
            return Err(format!("skr out of range: {}", self.skr));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    #[default]
    Jsonl,
    Csv,
}

impl std::str::FromStr for LogFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(LogFormat::Jsonl),
            "csv" => Ok(LogFormat::Csv),
            other => Err(Error::Config(format!("unknown log format '{other}'"))),
        }
    }
}

/// Reads a telemetry log from disk.
pub fn read_log(path: impl AsRef<Path>, format: LogFormat) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_log(BufReader::new(file), format)
}

/// Parses a telemetry log from any buffered reader.
///
/// Blank lines are ignored. Every record is range-checked and timestamps
/// must strictly increase; errors carry the 1-based line number.
pub fn parse_log<R: BufRead>(reader: R, format: LogFormat) -> Result<Vec<SampleRecord>> {
    LogReader::new(reader, format)?.collect()
}

#[derive(Deserialize)]
struct CsvRow {
    timestamp: i64,
    qber: f64,
    skr: f64,
}

const CSV_HEADER: [&str; 3] = ["timestamp", "qber", "skr"];

enum Source<R: BufRead> {
    Jsonl(std::io::Lines<R>),
    Csv(csv::DeserializeRecordsIntoIter<R, CsvRow>),
}

/// Incremental log parser applying the same checks as [`parse_log`].
/// Stops after the first error.
pub struct LogReader<R: BufRead> {
    source: Source<R>,
    line: usize,
    prev: Option<i64>,
    failed: bool,
}

impl<R: BufRead> LogReader<R> {
    /// For CSV the header is read and checked here.
    pub fn new(reader: R, format: LogFormat) -> Result<Self> {
        let source = match format {
            LogFormat::Jsonl => Source::Jsonl(reader.lines()),
            LogFormat::Csv => {
                let mut rdr = csv::ReaderBuilder::new()
                    .trim(csv::Trim::All)
                    .from_reader(reader);
                let headers = rdr.headers().map_err(|e| Error::Parse {
                    line: 1,
                    message: e.to_string(),
                })?;
                if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
                    return Err(Error::Parse {
                        line: 1,
                        message: format!("expected header '{}'", CSV_HEADER.join(",")),
                    });
                }
                Source::Csv(rdr.into_deserialize())
            }
        };
        let line = match format {
            LogFormat::Jsonl => 0,
            LogFormat::Csv => 1,
        };
        Ok(LogReader {
            source,
            line,
            prev: None,
            failed: false,
        })
    }

    fn next_raw(&mut self) -> Option<Result<SampleRecord>> {
        match &mut self.source {
            Source::Jsonl(lines) => loop {
                let line = lines.next()?;
                self.line += 1;
                let parse_err = |message: String, line| Error::Parse { line, message };
                let text = match line {
                    Ok(t) => t,
                    Err(e) => return Some(Err(parse_err(e.to_string(), self.line))),
                };
                if text.trim().is_empty() {
                    continue;
                }
                return Some(
                    serde_json::from_str(&text).map_err(|e| parse_err(e.to_string(), self.line)),
                );
            },
            Source::Csv(rows) => {
                let row = rows.next()?;
                self.line += 1;
                Some(
                    row.map(|r| SampleRecord::new(r.timestamp, r.qber, r.skr))
                        .map_err(|e| Error::Parse {
                            line: e.position().map(|p| p.line() as usize).unwrap_or(self.line),
                            message: e.to_string(),
                        }),
                )
            }
        }
    }
}

impl<R: BufRead> Iterator for LogReader<R> {
    type Item = Result<SampleRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let checked = self.next_raw()?.and_then(|record| {
            record.validate().map_err(|message| Error::Parse {
                line: self.line,
                message,
            })?;
            if let Some(p) = self.prev {
                if record.timestamp <= p {
                    return Err(Error::Ordering {
                        line: self.line,
                        ts: record.timestamp,
                        prev: p,
                    });
                }
            }
            self.prev = Some(record.timestamp);
            Ok(record)
        });
        self.failed = checked.is_err();
        Some(checked)
    }
}

/// Writes records in the given format.
pub fn write_log<W: Write>(writer: W, records: &[SampleRecord], format: LogFormat) -> Result<()> {
    match format {
        LogFormat::Jsonl => {
            let mut w = BufWriter::new(writer);
            for r in records {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n").map_err(|e| Error::io("<log>", e))?;
            }
            w.flush().map_err(|e| Error::io("<log>", e))?;
        }
        LogFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            w.write_record(CSV_HEADER)?;
            for r in records {
                w.serialize((r.timestamp, r.qber, r.skr))?;
            }
            w.flush().map_err(|e| Error::io("<log>", e))?;
        }
    }
    Ok(())
}

/// Writes records to a file, creating or truncating it.
pub fn write_log_file(
    path: impl AsRef<Path>,
    records: &[SampleRecord],
    format: LogFormat,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_log(file, records, format)
}

/// N consecutive samples, the unit of feature extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    samples: Vec<SampleRecord>,
    pub label: Option<u8>,
}

impl Window {
    /// Builds a window, checking its length against `size`.
    pub fn new(samples: Vec<SampleRecord>, size: usize) -> Result<Self> {
        if samples.len() != size {
            return Err(Error::WindowSize {
                expected: size,
                actual: samples.len(),
            });
        }
        if let Some(w) = samples.windows(2).find(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::Domain(format!(
                "window timestamps not increasing ({} then {})",
                w[0].timestamp, w[1].timestamp
            )));
        }
        Ok(Window {
            samples,
            label: None,
        })
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first_timestamp(&self) -> i64 {
        self.samples[0].timestamp
    }

    pub fn last_timestamp(&self) -> i64 {
        self.samples[self.samples.len() - 1].timestamp
    }
}

/// MinMax parameters captured from the reference window.
///
/// Medians are kept for diagnostics; the transform only uses min and max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub qber_min: f64,
    pub qber_max: f64,
    pub skr_min: f64,
    pub skr_max: f64,
    pub reference_median_qber: f64,
    pub reference_median_skr: f64,
}

impl ScalerParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.qber_min,
            self.qber_max,
            self.skr_min,
            self.skr_max,
            self.reference_median_qber,
            self.reference_median_skr,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("scaler parameters must be finite".into()));
        }
        if self.qber_min > self.qber_max || self.skr_min > self.skr_max {
            return Err(Error::Config("scaler min exceeds max".into()));
        }
        Ok(())
    }

    /// Normalizes one sample. Out-of-range inputs are not clipped.
    pub fn transform(&self, sample: &SampleRecord) -> (f64, f64) {
        (
            scale(sample.qber, self.qber_min, self.qber_max),
            scale(sample.skr, self.skr_min, self.skr_max),
        )
    }

    /// Normalizes a whole window into its two channels.
    pub fn transform_window(&self, window: &Window) -> (Vec<f64>, Vec<f64>) {
        window.samples().iter().map(|s| self.transform(s)).unzip()
    }
}

fn scale(x: f64, min: f64, max: f64) -> f64 {
    if max > min {
        (x - min) / (max - min)
    } else {
        0.5
    }
}

/// Captures per-channel min, max and median from the reference window.
pub fn fit_scaler(reference: &Window) -> ScalerParams {
    let qber: Vec<f64> = reference.samples().iter().map(|s| s.qber).collect();
    let skr: Vec<f64> = reference.samples().iter().map(|s| s.skr).collect();
    let (qber_min, qber_max) = min_max(&qber);
    let (skr_min, skr_max) = min_max(&skr);
    ScalerParams {
        qber_min,
        qber_max,
        skr_min,
        skr_max,
        reference_median_qber: median(&qber),
        reference_median_skr: median(&skr),
    }
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
