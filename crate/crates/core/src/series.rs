//! Calendar-indexed daily series with explicit missing days.

use std::io::{Read, Write};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a [`DailySeries`] measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Mobility,
    Cases,
    RtMean,
}

/// One value per calendar day for one spatial unit.
///
/// Days without data are `None` rather than zero, so a gap in the input can
/// never be mistaken for a collapse in mobility or incidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub unit_id: String,
    pub start_date: NaiveDate,
    pub values: Vec<Option<f64>>,
    pub kind: SeriesKind,
}

impl DailySeries {
    pub fn new(
        unit_id: impl Into<String>,
        start_date: NaiveDate,
        values: Vec<Option<f64>>,
        kind: SeriesKind,
    ) -> Result<Self> {
        let s = DailySeries {
            unit_id: unit_id.into(),
            start_date,
            values,
            kind,
        };
        s.validate()?;
        Ok(s)
    }

    /// Builds a series with no missing days.
    pub fn dense(
        unit_id: impl Into<String>,
        start_date: NaiveDate,
        values: impl IntoIterator<Item = f64>,
        kind: SeriesKind,
    ) -> Result<Self> {
        Self::new(unit_id, start_date, values.into_iter().map(Some).collect(), kind)
    }

    fn validate(&self) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "{}: non-finite value on {}",
                        self.unit_id,
                        self.date_at(i)
                    )));
                }
                if *v < 0.0 && self.kind != SeriesKind::RtMean {
                    return Err(Error::InvalidParameter(format!(
                        "{}: negative {:?} value {v} on {}",
                        self.unit_id,
                        self.kind,
                        self.date_at(i)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start_date + Duration::days(index as i64)
    }

    /// Last covered day. Panics on an empty series.
    pub fn end_date(&self) -> NaiveDate {
        assert!(!self.is_empty(), "empty series has no end date");
        self.date_at(self.len() - 1)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start_date).num_days();
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.index_of(date).and_then(|i| self.values[i])
    }

    pub fn missing_dates(&self) -> Vec<NaiveDate> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(i, _)| self.date_at(i))
            .collect()
    }

    /// All values, or a `MissingDays` error naming the gaps.
    pub fn require_dense(&self) -> Result<Vec<f64>> {
        let missing = self.missing_dates();
        if !missing.is_empty() {
            return Err(Error::MissingDays {
                unit: self.unit_id.clone(),
                dates: missing,
            });
        }
        Ok(self.values.iter().map(|v| v.unwrap()).collect())
    }

    /// Centered moving average; windows are truncated at the edges and skip
    /// missing days. A window with no observed values stays missing.
    pub fn moving_average(&self, window: usize) -> Result<DailySeries> {
        if window == 0 || window % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "moving-average window must be odd and >= 1, got {window}"
            )));
        }
        let values = centered_mean(&self.values, window / 2);
        Ok(DailySeries {
            values,
            ..self.clone()
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            let value = v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([self.date_at(i).to_string(), value])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `date,value` CSV. Empty values are missing days; dates must be
    /// consecutive.
    pub fn read_csv<R: Read>(
        reader: R,
        unit_id: impl Into<String>,
        kind: SeriesKind,
    ) -> Result<DailySeries> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let date_col = column(&headers, "date")?;
        let value_col = headers
            .iter()
            .position(|h| h == "value" || h == "count")
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "missing `value` column".into(),
            })?;
        let mut start = None;
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let date = parse_date(rec.get(date_col).unwrap_or(""), line)?;
            let start_date = *start.get_or_insert(date);
            let expected = start_date + Duration::days(values.len() as i64);
            if date != expected {
                return Err(Error::Parse {
                    line,
                    message: format!("expected date {expected}, found {date}"),
                });
            }
            let raw = rec.get(value_col).unwrap_or("");
            let value = if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                None
            } else {
                Some(raw.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("bad value `{raw}`: {e}"),
                })?)
            };
            values.push(value);
        }
        let start_date = start.ok_or(Error::Parse {
            line: 1,
            message: "series has no rows".into(),
        })?;
        DailySeries::new(unit_id, start_date, values, kind)
    }
}

pub(crate) fn centered_mean(values: &[Option<f64>], half_width: usize) -> Vec<Option<f64>> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half_width);
            let hi = (i + half_width).min(n.saturating_sub(1));
            let (sum, count) = values[lo..=hi]
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
            (count > 0).then(|| sum / count as f64)
        })
        .collect()
}

pub(crate) fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("missing `{name}` column"),
    })
}

pub(crate) fn parse_date(raw: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|e| Error::Parse {
        line,
        message: format!("bad date `{raw}`: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn csv_round_trip_keeps_missing_days() {
        let s = DailySeries::new(
            "A",
            d("2020-02-01"),
            vec![Some(1.5), None, Some(0.1 + 0.2)],
            SeriesKind::Mobility,
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("2020-02-02,\n"));
        let back = DailySeries::read_csv(&buf[..], "A", SeriesKind::Mobility).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn gap_in_dates_is_a_parse_error() {
        let text = "date,value\n2020-02-01,1\n2020-02-03,2\n";
        let err = DailySeries::read_csv(text.as_bytes(), "A", SeriesKind::Cases).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn negative_mobility_rejected() {
        assert!(DailySeries::dense("A", d("2020-01-01"), [1.0, -1.0], SeriesKind::Mobility).is_err());
        assert!(DailySeries::dense("A", d("2020-01-01"), [1.0, -1.0], SeriesKind::RtMean).is_ok());
    }

    #[test]
    fn moving_average_truncates_at_edges() {
        let s = DailySeries::dense("A", d("2020-01-01"), [1.0, 2.0, 3.0, 4.0], SeriesKind::Cases).unwrap();
        let ma = s.moving_average(3).unwrap().require_dense().unwrap();
        assert_eq!(ma, vec![1.5, 2.0, 3.0, 3.5]);
        assert!(s.moving_average(2).is_err());
    }
}
