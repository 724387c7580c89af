//! Benchmark result rows and their CSV form.

use std::cmp::Ordering;
use std::path::Path;

use crate::data::OutcomeKind;
use crate::error::{Error, Result};
use crate::metrics::MetricName;
use crate::sim::{Correlation, Relationship, Strength};

pub const RECORD_COLUMNS: [&str; 14] = [
    "n",
    "p",
    "relationship",
    "strength",
    "correlation",
    "outcome",
    "estimator",
    "screen_set",
    "rep",
    "seed",
    "metric",
    "value",
    "seconds",
    "error",
];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub n: usize,
    pub p: usize,
    pub relationship: Relationship,
    pub strength: Strength,
    pub correlation: Correlation,
    pub outcome: OutcomeKind,
    pub estimator: String,
    pub screen_set: String,
    pub rep: usize,
    pub seed: u64,
    pub metric: MetricName,
    pub value: f64,
    pub seconds: f64,
    pub error: String,
}

impl BenchRecord {
    /// Sort order of the output file: scenario, estimator, screen set, replicate.
    pub fn cmp_key(&self, other: &BenchRecord) -> Ordering {
        (
            self.outcome,
            self.relationship,
            self.strength,
            self.correlation,
            self.p,
            self.n,
            &self.estimator,
            &self.screen_set,
            self.rep,
        )
            .cmp(&(
                other.outcome,
                other.relationship,
                other.strength,
                other.correlation,
                other.p,
                other.n,
                &other.estimator,
                &other.screen_set,
                other.rep,
            ))
    }

    fn fields(&self) -> [String; 14] {
        [
            self.n.to_string(),
            self.p.to_string(),
            self.relationship.to_string(),
            self.strength.to_string(),
            self.correlation.to_string(),
            self.outcome.to_string(),
            self.estimator.clone(),
            self.screen_set.clone(),
            self.rep.to_string(),
            self.seed.to_string(),
            self.metric.to_string(),
            self.value.to_string(),
            format!("{:.3}", self.seconds),
            self.error.clone(),
        ]
    }
}

pub fn sort_records(records: &mut [BenchRecord]) {
    records.sort_by(BenchRecord::cmp_key);
}

pub fn write_records(path: impl AsRef<Path>, records: &[BenchRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records_to(file, records)
}

pub fn write_records_to<W: std::io::Write>(sink: W, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(RECORD_COLUMNS)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush().map_err(|e| Error::io("<records>", e))?;
    Ok(())
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, idx: usize, line: usize) -> Result<T> {
    let raw = row.get(idx).unwrap_or("");
    raw.parse().map_err(|_| Error::Cell {
        row: line,
        column: RECORD_COLUMNS[idx].to_string(),
        message: format!("cannot parse `{raw}`"),
    })
}

fn enum_field<T: std::str::FromStr<Err = Error>>(row: &csv::StringRecord, idx: usize, line: usize) -> Result<T> {
    row.get(idx).unwrap_or("").parse().map_err(|e: Error| Error::Cell {
        row: line,
        column: RECORD_COLUMNS[idx].to_string(),
        message: e.to_string(),
    })
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<BenchRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    for (i, name) in RECORD_COLUMNS.iter().enumerate() {
        if header.get(i) != Some(name) {
            return Err(Error::MissingColumn(name.to_string()));
        }
    }
    let mut out = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let row = row?;
        let line = k + 1;
        out.push(BenchRecord {
            n: field(&row, 0, line)?,
            p: field(&row, 1, line)?,
            relationship: enum_field(&row, 2, line)?,
            strength: enum_field(&row, 3, line)?,
            correlation: enum_field(&row, 4, line)?,
            outcome: enum_field(&row, 5, line)?,
            estimator: row.get(6).unwrap_or("").to_string(),
            screen_set: row.get(7).unwrap_or("").to_string(),
            rep: field(&row, 8, line)?,
            seed: field(&row, 9, line)?,
            metric: enum_field(&row, 10, line)?,
            value: field(&row, 11, line)?,
            seconds: field(&row, 12, line)?,
            error: row.get(13).unwrap_or("").to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(rep: usize, value: f64) -> BenchRecord {
        BenchRecord {
            n: 200,
            p: 10,
            relationship: Relationship::Linear,
            strength: Strength::Strong,
            correlation: Correlation::Uncorrelated,
            outcome: OutcomeKind::Continuous,
            estimator: "sl".into(),
            screen_set: "all".into(),
            rep,
            seed: 12345678901234567890,
            metric: MetricName::RSquared,
            value,
            seconds: 1.25,
            error: String::new(),
        }
    }

    #[test]
    fn round_trip_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut rows = vec![record(2, 0.5), record(0, f64::NAN), record(1, 0.123456789012345)];
        rows[1].error = "fit failed, badly".into();
        sort_records(&mut rows);
        assert_eq!(rows.iter().map(|r| r.rep).collect::<Vec<_>>(), vec![0, 1, 2]);
        write_records(&path, &rows).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert!(back[0].value.is_nan());
        assert_eq!(back[0].error, "fit failed, badly");
        assert_eq!(back[1..], rows[1..]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("n,p,relationship,strength,correlation,outcome,estimator,screen_set,rep,seed,metric,value,seconds,error\n"));
    }
}
