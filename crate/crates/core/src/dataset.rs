//! Tweet-record datasets: CSV / JSONL ingestion and export.
//!
//! Both encodings carry the keys `created_at`, `user_id` and
//! `followers_count`. `created_at` is either ISO-8601 UTC or integer epoch
//! seconds; one file must use a single form.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::TweetRecord;

pub const COLUMNS: [&str; 3] = ["created_at", "user_id", "followers_count"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// `.jsonl`, `.ndjson` and `.json` map to JSONL; everything else to CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson" | "json") => Format::Jsonl,
            _ => Format::Csv,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            other => Err(Error::InvalidParameter(format!("unknown format {other:?}"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// A rejected input row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostic {
    pub line: u64,
    pub message: String,
}

/// Time-sorted records with timestamps relative to `epoch`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<TweetRecord>,
    pub source_path: String,
    /// Absolute time (Unix seconds) of t = 0.
    pub epoch: f64,
    pub rejected: Vec<RowDiagnostic>,
}

impl Dataset {
    /// Sorts the records and shifts them so the first one sits at t = 0.
    /// Record timestamps must be absolute Unix seconds.
    pub fn from_absolute(mut records: Vec<TweetRecord>, source_path: impl Into<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("dataset has no valid records".into()));
        }
        records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let epoch = records[0].timestamp;
        for r in &mut records {
            r.timestamp -= epoch;
        }
        Ok(Self {
            records,
            source_path: source_path.into(),
            epoch,
            rejected: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Same events, ignoring where they were read from.
    pub fn same_events(&self, other: &Dataset) -> bool {
        self.records == other.records && self.epoch == other.epoch
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TimeForm {
    Epoch,
    Iso,
}

impl TimeForm {
    fn name(self) -> &'static str {
        match self {
            TimeForm::Epoch => "integer epoch seconds",
            TimeForm::Iso => "ISO-8601",
        }
    }
}

fn parse_created_at(raw: &str) -> std::result::Result<(TimeForm, f64), String> {
    let s = raw.trim();
    if s.is_empty() {
        return Err("created_at is empty".into());
    }
    let digits = s.strip_prefix('-').unwrap_or(s);
    if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        return s
            .parse::<i64>()
            .map(|v| (TimeForm::Epoch, v as f64))
            .map_err(|e| format!("created_at {s:?}: {e}"));
    }
    let parsed = DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f").map(|n| n.and_utc()))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f").map(|n| n.and_utc()))
        .map_err(|_| format!("created_at {s:?} is neither ISO-8601 nor integer epoch seconds"))?;
    let secs = parsed.timestamp() as f64 + f64::from(parsed.timestamp_subsec_nanos()) * 1e-9;
    Ok((TimeForm::Iso, secs))
}

fn parse_followers(raw: &str) -> std::result::Result<u64, String> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<i64>() {
        Ok(v) if v < 0 => Err(format!("negative followers_count {v}")),
        _ => Err(format!("followers_count {s:?} is not a non-negative integer")),
    }
}

/// Accumulates rows while enforcing a single timestamp form per file.
struct RowSink {
    form: Option<TimeForm>,
    records: Vec<TweetRecord>,
    rejected: Vec<RowDiagnostic>,
}

impl RowSink {
    fn new() -> Self {
        Self {
            form: None,
            records: Vec::new(),
            rejected: Vec::new(),
        }
    }

    fn reject(&mut self, line: u64, message: String) {
        self.rejected.push(RowDiagnostic { line, message });
    }

    fn push(&mut self, line: u64, created_at: &str, user_id: &str, followers: &str) -> Result<()> {
        let parsed = parse_created_at(created_at).and_then(|(form, t)| {
            let user = user_id.trim();
            if user.is_empty() {
                return Err("user_id is empty".to_string());
            }
            let f = parse_followers(followers)?;
            Ok((form, t, user.to_string(), f))
        });
        match parsed {
            Ok((form, t, user, f)) => {
                match self.form {
                    None => self.form = Some(form),
                    Some(seen) if seen != form => {
                        return Err(Error::Schema(format!(
                            "line {line}: created_at uses {} but earlier rows use {}",
                            form.name(),
                            seen.name()
                        )))
                    }
                    Some(_) => {}
                }
                self.records.push(TweetRecord {
                    timestamp: t,
                    user_id: user,
                    follower_count: f,
                });
            }
            Err(msg) => self.reject(line, msg),
        }
        Ok(())
    }

    fn finish(self, source: &str) -> Result<Dataset> {
        for d in &self.rejected {
            log::warn!("{source}:{}: rejected row: {}", d.line, d.message);
        }
        let mut ds = Dataset::from_absolute(self.records, source)
            .map_err(|e| e.context(format!("{source}: {} rows rejected", self.rejected.len())))?;
        ds.rejected = self.rejected;
        Ok(ds)
    }
}

pub fn read_csv<R: Read>(mut reader: R, source: &str) -> Result<Dataset> {
    // Line numbers come from byte offsets; the csv reader's own counter
    // drifts on CRLF input.
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let line_of = |pos: Option<&csv::Position>| {
        pos.map_or(0, |p| {
            let mut end = (p.byte() as usize).min(bytes.len());
            while end < bytes.len() && matches!(bytes[end], b'\r' | b'\n') {
                end += 1;
            }
            bytes[..end].iter().filter(|&&b| b == b'\n').count() as u64 + 1
        })
    };
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 3];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| Error::Schema(format!("{source}: missing required column {name:?}")))?;
    }
    let mut sink = RowSink::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = line_of(e.position());
                sink.reject(line, e.to_string());
                continue;
            }
        };
        let line = line_of(row.position());
        let field = |i: usize| row.get(i);
        match (field(idx[0]), field(idx[1]), field(idx[2])) {
            (Some(t), Some(u), Some(f)) => sink.push(line, t, u, f)?,
            _ => sink.reject(line, format!("expected at least {} fields", idx.iter().max().unwrap() + 1)),
        }
    }
    sink.finish(source)
}

fn json_field(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

pub fn read_jsonl<R: Read>(reader: R, source: &str) -> Result<Dataset> {
    let mut sink = RowSink::new();
    let mut seen = [false; 3];
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let obj = match serde_json::from_str::<Value>(text) {
            Ok(Value::Object(map)) => map,
            Ok(_) => {
                sink.reject(line_no, "line is not a JSON object".into());
                continue;
            }
            Err(e) => {
                sink.reject(line_no, format!("invalid JSON: {e}"));
                continue;
            }
        };
        let mut fields: [Option<String>; 3] = Default::default();
        for (k, key) in COLUMNS.iter().enumerate() {
            if let Some(v) = obj.get(*key) {
                seen[k] = true;
                fields[k] = json_field(v);
            }
        }
        match fields {
            [Some(t), Some(u), Some(f)] => sink.push(line_no, &t, &u, &f)?,
            _ => sink.reject(line_no, "missing or non-scalar required key".into()),
        }
    }
    if sink.records.is_empty() {
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::Schema(format!(
                "{source}: no line carries the required key {:?}",
                COLUMNS[k]
            )));
        }
    }
    sink.finish(source)
}

/// Loads and normalizes a dataset; rows that fail validation are skipped and
/// reported in [`Dataset::rejected`].
pub fn load_dataset(path: &Path, format: Format) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
    let source = path.display().to_string();
    match format {
        Format::Csv => read_csv(file, &source),
        Format::Jsonl => read_jsonl(file, &source),
    }
}

fn split_seconds(abs: f64) -> (i64, u32) {
    let mut secs = abs.floor();
    let mut nanos = ((abs - secs) * 1e9).round();
    if nanos >= 1e9 {
        secs += 1.0;
        nanos = 0.0;
    }
    (secs as i64, nanos as u32)
}

fn format_created_at(abs: f64, integral: bool) -> Result<String> {
    if integral {
        return Ok(format!("{}", abs as i64));
    }
    let (secs, nanos) = split_seconds(abs);
    let dt = DateTime::<Utc>::from_timestamp(secs, nanos)
        .ok_or_else(|| Error::Numeric(format!("timestamp {abs} is out of range")))?;
    Ok(dt.to_rfc3339_opts(SecondsFormat::Nanos, true))
}

#[derive(Serialize)]
struct JsonRow<'a> {
    created_at: &'a str,
    user_id: &'a str,
    followers_count: u64,
}

/// Serializes a dataset. Integral absolute times are written as epoch
/// seconds, anything else as ISO-8601 with nanoseconds.
pub fn write_dataset<W: Write>(ds: &Dataset, format: Format, out: W) -> Result<()> {
    let absolute: Vec<f64> = ds.records.iter().map(|r| ds.epoch + r.timestamp).collect();
    let integral = absolute
        .iter()
        .all(|t| t.fract() == 0.0 && t.abs() < 9.0e15);
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
            w.write_record(COLUMNS)?;
            for (r, &abs) in ds.records.iter().zip(&absolute) {
                let created = format_created_at(abs, integral)?;
                let followers = r.follower_count.to_string();
                w.write_record([created.as_str(), r.user_id.as_str(), followers.as_str()])?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut out = out;
            for (r, &abs) in ds.records.iter().zip(&absolute) {
                let created = format_created_at(abs, integral)?;
                let row = JsonRow {
                    created_at: &created,
                    user_id: &r.user_id,
                    followers_count: r.follower_count,
                };
                serde_json::to_writer(&mut out, &row)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

pub fn dataset_bytes(ds: &Dataset, format: Format) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_dataset(ds, format, &mut buf)?;
    Ok(buf)
}
