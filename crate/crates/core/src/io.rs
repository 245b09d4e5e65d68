//! Stream files and event logs.
//!
//! A stream file is CSV with one row per time step and one column per
//! coordinate, optionally preceded by a header row and optionally led by a
//! timestamp column. Every cell must hold a finite real; missing values are
//! an error. Row numbers in errors are 1-based file lines.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::detector::DetectionEvent;
use crate::error::{GsrError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CsvOptions {
    /// `None` detects a header from a non-numeric cell in the first row.
    pub has_header: Option<bool>,
    /// `None` detects a timestamp column when the first cell of the first
    /// data row is non-numeric and the others are numeric. Integer indices
    /// need `Some(true)`.
    pub time_column: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StreamFile {
    pub header: Option<Vec<String>>,
    pub times: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

fn parses(cell: &str) -> bool {
    cell.trim().parse::<f64>().is_ok()
}

fn parse_cell(cell: &str, row: usize, column: usize) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Err(GsrError::MalformedRow { row, reason: format!("missing value in column {}", column + 1) });
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(GsrError::MalformedRow {
            row,
            reason: format!("column {}: `{cell}` is not a finite number", column + 1),
        }),
    }
}

impl StreamFile {
    pub fn dimension(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn read(path: impl AsRef<Path>, options: CsvOptions) -> Result<Self> {
        Self::parse(std::fs::File::open(path)?, options)
    }

    pub fn parse<R: Read>(reader: R, options: CsvOptions) -> Result<Self> {
        let mut csv =
            csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
        let mut records = Vec::new();
        for record in csv.records() {
            let record = record?;
            let line = record.position().map_or(records.len() + 1, |p| p.line() as usize);
            if record.len() == 1 && record[0].is_empty() {
                continue;
            }
            records.push((line, record));
        }
        let Some((_, first)) = records.first() else {
            return Ok(StreamFile::default());
        };
        let has_header = options
            .has_header
            .unwrap_or_else(|| first.iter().skip(1).any(|c| !parses(c)) || (first.len() == 1 && !parses(&first[0])));
        let header = has_header.then(|| first.iter().map(str::to_owned).collect::<Vec<_>>());
        let data = &records[usize::from(has_header)..];
        let time_column = options.time_column.unwrap_or_else(|| {
            data.first().is_some_and(|(_, r)| r.len() > 1 && !parses(&r[0]) && r.iter().skip(1).all(parses))
        });
        let skip = usize::from(time_column);
        let mut times = time_column.then(Vec::new);
        let mut rows = Vec::with_capacity(data.len());
        let mut width = None;
        for (line, record) in data {
            let (line, len) = (*line, record.len());
            if len <= skip {
                return Err(GsrError::MalformedRow { row: line, reason: "no data columns".into() });
            }
            let w = *width.get_or_insert(len);
            if len != w {
                return Err(GsrError::MalformedRow { row: line, reason: format!("{len} columns, expected {w}") });
            }
            if let Some(times) = times.as_mut() {
                times.push(record[0].to_owned());
            }
            let values = record
                .iter()
                .enumerate()
                .skip(skip)
                .map(|(j, cell)| parse_cell(cell, line, j))
                .collect::<Result<Vec<_>>>()?;
            rows.push(values);
        }
        Ok(StreamFile { header, times, rows })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if let Some(header) = &self.header {
            w.write_record(header)?;
        }
        for (i, row) in self.rows.iter().enumerate() {
            let mut record: Vec<String> = Vec::with_capacity(row.len() + 1);
            if let Some(times) = &self.times {
                record.push(times[i].clone());
            }
            record.extend(row.iter().map(f64::to_string));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `r_t = ln(p_t / p_{t−1})` per column. The first time stamp is dropped.
    pub fn log_returns(&self) -> Result<StreamFile> {
        if let Some((i, j)) =
            self.rows.iter().enumerate().find_map(|(i, r)| r.iter().position(|p| *p <= 0.0).map(|j| (i, j)))
        {
            return Err(GsrError::invalid(
                "prices",
                format!("non-positive price {} at row {}, column {}", self.rows[i][j], i + 1, j + 1),
            ));
        }
        let rows = self.rows.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(p, q)| (p / q).ln()).collect()).collect();
        Ok(StreamFile {
            header: self.header.clone(),
            times: self.times.as_ref().map(|t| t.iter().skip(1).cloned().collect()),
            rows,
        })
    }
}

/// One JSON object per line.
pub fn write_events_jsonl<W: Write>(mut writer: W, events: &[DetectionEvent]) -> Result<()> {
    for event in events {
        serde_json::to_writer(&mut writer, event)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_events_jsonl<R: BufRead>(reader: R) -> Result<Vec<DetectionEvent>> {
    let mut events = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            events.push(serde_json::from_str(&line)?);
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::EventKind;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<StreamFile> {
        StreamFile::parse(text.as_bytes(), CsvOptions::default())
    }

    #[test]
    fn plain_numeric_rows() {
        let f = parse("1,2\n3,4.5\n-1e-3,0\n").unwrap();
        assert_eq!(f.header, None);
        assert_eq!(f.times, None);
        assert_eq!(f.rows, vec![vec![1.0, 2.0], vec![3.0, 4.5], vec![-1e-3, 0.0]]);
        assert_eq!(f.dimension(), 2);
    }

    #[test]
    fn header_and_iso_dates() {
        let f = parse("date,AAPL,MSFT\n2015-01-02,0.01,-0.02\n2015-01-05T00:00:00Z,0.00,0.03\n").unwrap();
        assert_eq!(f.header.as_deref().unwrap()[1], "AAPL");
        assert_eq!(f.times.as_deref().unwrap(), ["2015-01-02", "2015-01-05T00:00:00Z"]);
        assert_eq!(f.rows[1], vec![0.0, 0.03]);
    }

    #[test]
    fn integer_time_index_needs_flag() {
        let opts = CsvOptions { time_column: Some(true), ..CsvOptions::default() };
        let f = StreamFile::parse("0,5,6\n1,7,8\n".as_bytes(), opts).unwrap();
        assert_eq!(f.times.as_deref().unwrap(), ["0", "1"]);
        assert_eq!(f.dimension(), 2);
        assert_eq!(parse("0,5,6\n1,7,8\n").unwrap().dimension(), 3);
    }

    #[test]
    fn malformed_rows_report_line() {
        let err = parse("a,b\n1,2\n3,\n").unwrap_err();
        assert!(matches!(err, GsrError::MalformedRow { row: 3, .. }), "{err}");
        let err = parse("1,2\n3,4\n5,x\n").unwrap_err();
        assert!(matches!(err, GsrError::MalformedRow { row: 3, .. }), "{err}");
        let err = parse("1,2\n3,4,5\n").unwrap_err();
        assert!(matches!(err, GsrError::MalformedRow { row: 2, .. }), "{err}");
        assert!(parse("1,2\nNaN,1\n").is_err());
        assert!(parse("1,2\ninf,1\n").is_err());
    }

    #[test]
    fn empty_input() {
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn log_returns_of_prices() {
        let f = parse("t,p\nd0,100\nd1,110\nd2,99\n").unwrap();
        let r = f.log_returns().unwrap();
        assert_eq!(r.times.as_deref().unwrap(), ["d1", "d2"]);
        assert!((r.rows[0][0] - 1.1f64.ln()).abs() < 1e-15);
        assert!((r.rows[1][0] - 0.9f64.ln()).abs() < 1e-15);
        assert!(parse("1\n0\n").unwrap().log_returns().is_err());
    }

    #[test]
    fn events_round_trip() {
        let events = vec![
            DetectionEvent {
                detected_at: 81,
                change_at: 50,
                kind: EventKind::VarianceIncrease,
                window: 32,
                statistic: 2.125,
                threshold: 1.9,
            },
            DetectionEvent {
                detected_at: 90,
                change_at: 71,
                kind: EventKind::MeanChange,
                window: 20,
                statistic: 0.1 + 0.2,
                threshold: 2.0,
            },
        ];
        let mut buf = Vec::new();
        write_events_jsonl(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            r#"{"detected_at":81,"change_at":50,"kind":"VarianceIncrease","window":32,"statistic":2.125,"threshold":1.9}"#
        ));
        assert_eq!(read_events_jsonl(buf.as_slice()).unwrap(), events);
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e12f64..1e12, 3), 1..30), header in any::<bool>()) {
            let file = StreamFile {
                header: header.then(|| vec!["a".into(), "b".into(), "c".into()]),
                times: None,
                rows,
            };
            let mut buf = Vec::new();
            file.write_csv(&mut buf).unwrap();
            let opts = CsvOptions { has_header: Some(header), time_column: Some(false) };
            let back = StreamFile::parse(buf.as_slice(), opts).unwrap();
            prop_assert_eq!(back, file);
        }
    }
}
