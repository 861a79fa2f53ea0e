use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use indexmap::IndexMap;

use super::frame::{TimeSeriesFrame, TIMESTAMP_FORMAT};
use crate::error::{Error, Result};

/// Declared column layout of an input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub timestamp: String,
    pub columns: Vec<String>,
}

impl Schema {
    pub fn new(timestamp: &str, columns: &[&str]) -> Self {
        Self {
            timestamp: timestamp.to_string(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Hourly station export: pollutants, weather and the PM2.5 target.
    pub fn air_quality() -> Self {
        Self::new(
            "timestamp",
            &[
                "NO2",
                "SO2",
                "CO",
                "O3",
                "wind_direction",
                "temperature",
                "wind_speed",
                "PM10",
                "PM2.5",
            ],
        )
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    let (date, hour) = s.split_once(' ')?;
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").ok()?;
    let hour = hour.trim();
    let hour = hour.split_once(':').map_or(hour, |(h, _)| h);
    if hour.len() != 2 {
        return None;
    }
    let h: u32 = hour.parse().ok()?;
    date.and_hms_opt(h, 0, 0)
}

/// Parses a cell: blank (or NaN/NA) is missing, decimal comma accepted.
pub fn parse_value(s: &str) -> std::result::Result<Option<f64>, String> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    let normalized = s.replace(',', ".");
    normalized
        .parse::<f64>()
        .map(|v| if v.is_finite() { Some(v) } else { None })
        .map_err(|_| format!("invalid number `{s}`"))
}

/// Reads a `;`-separated hourly file into a frame.
///
/// Values may use decimal commas; blank cells are missing. Rows are sorted
/// by timestamp and absent hours are inserted as all-missing rows.
pub fn parse_dataset(path: &Path, schema: &Schema) -> Result<TimeSeriesFrame> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(file, schema)
}

pub fn parse_reader<R: Read>(reader: R, schema: &Schema) -> Result<TimeSeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b';')
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let ts_idx = header
        .iter()
        .position(|h| h == &schema.timestamp)
        .ok_or_else(|| Error::MissingColumn(schema.timestamp.clone()))?;
    let mut positions = Vec::with_capacity(schema.columns.len());
    for (i, h) in header.iter().enumerate() {
        if i != ts_idx && !schema.columns.contains(h) {
            return Err(Error::UnknownColumn(h.clone()));
        }
    }
    for c in &schema.columns {
        let p = header
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| Error::MissingColumn(c.clone()))?;
        positions.push(p);
    }

    let mut rows: BTreeMap<NaiveDateTime, Vec<Option<f64>>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        // Line number in the file: header is line 1.
        let row = i + 2;
        let rec = rec?;
        let ts_raw = rec.get(ts_idx).unwrap_or("");
        let ts = parse_timestamp(ts_raw).ok_or_else(|| Error::Parse {
            row,
            message: format!("malformed timestamp `{ts_raw}` (expected yyyy-mm-dd hh)"),
        })?;
        let mut values = Vec::with_capacity(positions.len());
        for &p in &positions {
            let v = parse_value(rec.get(p).unwrap_or("")).map_err(|message| Error::Parse { row, message })?;
            values.push(v);
        }
        if rows.insert(ts, values).is_some() {
            return Err(Error::DuplicateTimestamp(ts.format(TIMESTAMP_FORMAT).to_string()));
        }
    }

    let (Some(&first), Some(&last)) = (rows.keys().next(), rows.keys().next_back()) else {
        return Err(Error::InsufficientData("file has no data rows".into()));
    };
    let n = ((last - first).num_hours() + 1) as usize;
    let mut timestamps = Vec::with_capacity(n);
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(n); schema.columns.len()];
    for h in 0..n {
        let t = first + Duration::hours(h as i64);
        timestamps.push(t);
        match rows.get(&t) {
            Some(vals) => {
                for (c, v) in cols.iter_mut().zip(vals) {
                    c.push(*v);
                }
            }
            None => cols.iter_mut().for_each(|c| c.push(None)),
        }
    }
    let columns: IndexMap<String, Vec<Option<f64>>> = schema.columns.iter().cloned().zip(cols).collect();
    TimeSeriesFrame::new(timestamps, columns)
}

/// Writes a frame as `;`-separated text with decimal dots.
///
/// With `allow_missing == false` any missing cell is an error (the cleaned
/// output contract); otherwise missing cells are written blank.
pub fn write_frame<W: Write>(frame: &TimeSeriesFrame, out: W, timestamp: &str, allow_missing: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b';').from_writer(out);
    let mut header = vec![timestamp.to_string()];
    header.extend(frame.column_names().map(str::to_string));
    w.write_record(&header)?;
    let cols: Vec<&Vec<Option<f64>>> = frame.columns().values().collect();
    for (i, ts) in frame.timestamps().iter().enumerate() {
        let mut rec = Vec::with_capacity(cols.len() + 1);
        rec.push(ts.format(TIMESTAMP_FORMAT).to_string());
        for (name, c) in frame.column_names().zip(&cols) {
            match c[i] {
                Some(v) => rec.push(format!("{v}")),
                None if allow_missing => rec.push(String::new()),
                None => {
                    return Err(Error::InsufficientData(format!(
                        "missing value in column `{name}` at row {i}; cleaned output forbids gaps"
                    )))
                }
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_frame_file(frame: &TimeSeriesFrame, path: &Path, timestamp: &str, allow_missing: bool) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_frame(frame, std::io::BufWriter::new(file), timestamp, allow_missing)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new("timestamp", &["PM2.5", "temperature"])
    }

    #[test]
    fn decimal_comma_is_converted() {
        let text = "timestamp;PM2.5;temperature\n2019-08-01 00;\"12,5\";3.5\n";
        let f = parse_reader(text.as_bytes(), &schema()).unwrap();
        assert_eq!(f.column("PM2.5").unwrap()[0], Some(12.5));
        assert_eq!(f.column("temperature").unwrap()[0], Some(3.5));
    }

    #[test]
    fn gaps_become_missing_rows() {
        let text = "timestamp;PM2.5;temperature\n2019-08-01 02;3;1\n2019-08-01 00;1;1\n";
        let f = parse_reader(text.as_bytes(), &schema()).unwrap();
        assert_eq!(f.n_rows(), 3);
        assert_eq!(f.column("PM2.5").unwrap(), &[Some(1.0), None, Some(3.0)]);
        assert_eq!(f.column("temperature").unwrap()[1], None);
    }

    #[test]
    fn blank_cells_are_missing() {
        let text = "timestamp;PM2.5;temperature\n2019-08-01 00;;1\n";
        let f = parse_reader(text.as_bytes(), &schema()).unwrap();
        assert_eq!(f.column("PM2.5").unwrap()[0], None);
    }

    #[test]
    fn malformed_timestamp_reports_row() {
        let text = "timestamp;PM2.5;temperature\n2019-08-01 00;1;1\n2019/08/01 01;1;1\n";
        match parse_reader(text.as_bytes(), &schema()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let text = "timestamp;PM2.5;temperature\n2019-08-01 00;1;1\n2019-08-01 00;2;1\n";
        assert!(matches!(
            parse_reader(text.as_bytes(), &schema()),
            Err(Error::DuplicateTimestamp(_))
        ));
    }

    #[test]
    fn unknown_column_rejected() {
        let text = "timestamp;PM2.5;temperature;humidity\n2019-08-01 00;1;1;50\n";
        assert!(matches!(
            parse_reader(text.as_bytes(), &schema()),
            Err(Error::UnknownColumn(c)) if c == "humidity"
        ));
    }

    #[test]
    fn cleaned_output_forbids_missing() {
        let text = "timestamp;PM2.5;temperature\n2019-08-01 00;;1\n";
        let f = parse_reader(text.as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        assert!(write_frame(&f, &mut buf, "timestamp", false).is_err());
        let mut buf = Vec::new();
        write_frame(&f, &mut buf, "timestamp", true).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "timestamp;PM2.5;temperature\n2019-08-01 00;;1\n");
    }
}
