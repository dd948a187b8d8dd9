//! Dataset records and CSV I/O.
//!
//! CSV wire format: header `id,smiles,target`, UTF-8, decimal-point targets.

use std::io::{Read, Write};
use std::path::Path;

use crate::task::Task;

use super::SamplingError;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub smiles: String,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub task: Task,
    pub name: String,
}

impl Dataset {
    /// Validates id uniqueness, finite targets, and {0,1} labels for
    /// classification datasets.
    pub fn new(records: Vec<Record>, task: Task, name: &str) -> Result<Self, SamplingError> {
        let mut seen = std::collections::BTreeSet::new();
        for rec in &records {
            if !seen.insert(rec.id.clone()) {
                return Err(SamplingError::DuplicateId { id: rec.id.clone() });
            }
            if !rec.target.is_finite() {
                return Err(SamplingError::NonFiniteTarget { id: rec.id.clone() });
            }
            if task == Task::BinaryClassification && rec.target != 0.0 && rec.target != 1.0 {
                return Err(SamplingError::BadLabel {
                    id: rec.id.clone(),
                    value: rec.target,
                });
            }
        }
        Ok(Dataset {
            records,
            task,
            name: name.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.target).collect()
    }

    /// Records whose ids are in `ids`, preserving dataset order.
    pub fn subset<'a, I: IntoIterator<Item = &'a str>>(&self, ids: I, name: &str) -> Dataset {
        let wanted: std::collections::BTreeSet<&str> = ids.into_iter().collect();
        Dataset {
            records: self
                .records
                .iter()
                .filter(|r| wanted.contains(r.id.as_str()))
                .cloned()
                .collect(),
            task: self.task,
            name: name.to_string(),
        }
    }

    pub fn read_csv<R: Read>(reader: R, task: Task, name: &str) -> Result<Self, SamplingError> {
        let mut csv_reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        {
            let headers = csv_reader.headers()?;
            let expected = ["id", "smiles", "target"];
            if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
                return Err(SamplingError::BadHeader {
                    found: headers.iter().collect::<Vec<_>>().join(","),
                });
            }
        }
        let mut records = Vec::new();
        for row in csv_reader.records() {
            let row = row?;
            let id = row.get(0).unwrap_or_default().to_string();
            let smiles = row.get(1).unwrap_or_default().to_string();
            let target: f64 = row
                .get(2)
                .unwrap_or_default()
                .parse()
                .map_err(|_| SamplingError::BadTargetValue {
                    id: id.clone(),
                    raw: row.get(2).unwrap_or_default().to_string(),
                })?;
            records.push(Record { id, smiles, target });
        }
        Dataset::new(records, task, name)
    }

    pub fn from_csv_path(path: &Path, task: Task, name: &str) -> Result<Self, SamplingError> {
        let file = std::fs::File::open(path)
            .map_err(|e| SamplingError::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(file, task, name)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SamplingError> {
        let mut csv_writer = csv::Writer::from_writer(writer);
        csv_writer.write_record(["id", "smiles", "target"])?;
        for rec in &self.records {
            csv_writer.write_record([
                rec.id.as_str(),
                rec.smiles.as_str(),
                &format_target(rec.target),
            ])?;
        }
        csv_writer.flush().map_err(|e| SamplingError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_path(&self, path: &Path) -> Result<(), SamplingError> {
        let file = std::fs::File::create(path)
            .map_err(|e| SamplingError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(file)
    }
}

/// Shortest decimal text that round-trips the value.
fn format_target(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset::new(
            vec![
                Record {
                    id: "a".into(),
                    smiles: "CCO".into(),
                    target: 1.25,
                },
                Record {
                    id: "b".into(),
                    smiles: "c1ccccc1".into(),
                    target: -0.5,
                },
            ],
            Task::Regression,
            "sample",
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let ds = sample();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,smiles,target\n"));
        let back = Dataset::read_csv(buf.as_slice(), Task::Regression, "sample").unwrap();
        assert_eq!(back.records, ds.records);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let res = Dataset::new(
            vec![
                Record {
                    id: "a".into(),
                    smiles: "C".into(),
                    target: 0.0,
                },
                Record {
                    id: "a".into(),
                    smiles: "CC".into(),
                    target: 1.0,
                },
            ],
            Task::Regression,
            "dup",
        );
        assert!(matches!(res, Err(SamplingError::DuplicateId { .. })));
    }

    #[test]
    fn classification_labels_validated() {
        let res = Dataset::new(
            vec![Record {
                id: "a".into(),
                smiles: "C".into(),
                target: 0.5,
            }],
            Task::BinaryClassification,
            "bad",
        );
        assert!(matches!(res, Err(SamplingError::BadLabel { .. })));
    }

    #[test]
    fn header_mismatch_rejected() {
        let res = Dataset::read_csv(
            "id,structure,value\na,C,1.0\n".as_bytes(),
            Task::Regression,
            "x",
        );
        assert!(matches!(res, Err(SamplingError::BadHeader { .. })));
    }

    #[test]
    fn non_numeric_target_rejected() {
        let res = Dataset::read_csv(
            "id,smiles,target\na,C,abc\n".as_bytes(),
            Task::Regression,
            "x",
        );
        assert!(matches!(res, Err(SamplingError::BadTargetValue { .. })));
    }
}
