//! Newline-delimited JSON dataset files.
//!
//! One trajectory per line:
//!
//! ```text
//! {"id":7,"t":[0.0,0.0055],"pos":[[0.1,0.0,1.0],[0.13,0.0,1.01]],"valid":[1,1],"split":"train"}
//! ```
//!
//! `valid` may be omitted (all frames valid). Simulated data additionally carries
//! `truth`, the noise-free positions at the same timestamps.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Point3, Trajectory};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub traj: Trajectory,
    pub split: Split,
    /// Noise-free positions aligned with `traj.times()`, when known.
    pub truth: Option<Vec<Point3>>,
}

impl Record {
    pub fn new(traj: Trajectory, split: Split) -> Self {
        Record {
            traj,
            split,
            truth: None,
        }
    }

    /// Ground truth if present, otherwise the measured positions.
    pub fn reference(&self) -> &[Point3] {
        self.truth.as_deref().unwrap_or(self.traj.positions())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.traj.id()) {
                return Err(Error::DuplicateId(r.traj.id()));
            }
            if let Some(truth) = &r.truth {
                if truth.len() != r.traj.len() {
                    return Err(Error::InvalidTrajectory(format!(
                        "trajectory {}: {} truth samples for {} timestamps",
                        r.traj.id(),
                        truth.len(),
                        r.traj.len()
                    )));
                }
            }
        }
        Ok(Dataset { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Record> + '_ {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let raw: RawRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let id = raw.id;
            let record = raw.into_record().map_err(|e| parse_err(e.to_string()))?;
            if !seen.insert(id) {
                return Err(parse_err(Error::DuplicateId(id).to_string()));
            }
            records.push(record);
        }
        Ok(Dataset { records })
    }

    pub fn to_writer<W: Write>(&self, mut writer: W) -> Result<()> {
        for r in &self.records {
            let raw = RawRecord::from_record(r);
            serde_json::to_writer(&mut writer, &raw).map_err(std::io::Error::from)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::from_reader(File::open(path)?)
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    ds.to_writer(BufWriter::new(File::create(path)?))
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    id: u64,
    t: Vec<f64>,
    pos: Vec<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    valid: Option<Vec<u8>>,
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<Vec<Point3>>,
}

impl RawRecord {
    fn into_record(self) -> Result<Record> {
        let valid = match self.valid {
            None => vec![true; self.t.len()],
            Some(v) => v
                .into_iter()
                .map(|b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::InvalidTrajectory(format!("valid flag {other} is not 0/1"))),
                })
                .collect::<Result<_>>()?,
        };
        let traj = Trajectory::new(self.id, self.t, self.pos, valid)?;
        if let Some(truth) = &self.truth {
            if truth.len() != traj.len() {
                return Err(Error::InvalidTrajectory(format!(
                    "{} truth samples for {} timestamps",
                    truth.len(),
                    traj.len()
                )));
            }
        }
        Ok(Record {
            traj,
            split: self.split,
            truth: self.truth,
        })
    }

    fn from_record(r: &Record) -> Self {
        RawRecord {
            id: r.traj.id(),
            t: r.traj.times().to_vec(),
            pos: r.traj.positions().to_vec(),
            valid: Some(r.traj.valid().iter().map(|&b| b as u8).collect()),
            split: r.split,
            truth: r.truth.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = concat!(
        r#"{"id":1,"t":[0.0,0.005555555555555556,0.011111111111111112],"pos":[[0.1,-0.2,1.0],[0.13,-0.19,1.02],[0.16000000000000003,-0.18,1.035]],"valid":[1,0,1],"split":"train"}"#,
        "\n",
        r#"{"id":2,"t":[0.0,0.1],"pos":[[1e-7,2.5,3.0],[1.0,2.0,3.0]],"valid":[1,1],"split":"test","truth":[[0.0,2.5,3.0],[1.0,2.0,3.0]]}"#,
        "\n"
    );

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let ds = Dataset::from_reader(CANONICAL.as_bytes()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.records()[0].traj.valid(), &[true, false, true]);
        let mut out = Vec::new();
        ds.to_writer(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), CANONICAL);
    }

    #[test]
    fn valid_defaults_to_all_ones() {
        let line = r#"{"id":4,"t":[0.0,0.1],"pos":[[0,0,0],[1,1,1]],"split":"val"}"#;
        let ds = Dataset::from_reader(line.as_bytes()).unwrap();
        assert_eq!(ds.records()[0].traj.valid(), &[true, true]);
        assert_eq!(ds.count(Split::Val), 1);
    }

    #[test]
    fn missing_position_reports_line() {
        let text = format!(
            "{}\n{}\n",
            r#"{"id":1,"t":[0.0,0.1],"pos":[[0,0,0],[1,1,1]],"split":"train"}"#,
            r#"{"id":2,"t":[0.0,0.1],"split":"train"}"#
        );
        match Dataset::from_reader(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("pos"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let line = r#"{"id":1,"t":[0.0,0.1],"pos":[[0,0,0],[1,1,1]],"split":"train"}"#;
        let text = format!("{line}\n{line}\n");
        match Dataset::from_reader(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("duplicate"));
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
        let r = Dataset::from_reader(line.as_bytes()).unwrap().into_records().remove(0);
        assert!(matches!(
            Dataset::new(vec![r.clone(), r]),
            Err(Error::DuplicateId(1))
        ));
    }

    #[test]
    fn unordered_times_rejected_with_line() {
        let text = r#"{"id":1,"t":[0.1,0.0],"pos":[[0,0,0],[1,1,1]],"split":"train"}"#;
        assert!(matches!(
            Dataset::from_reader(text.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn loads_614_records_with_split_sizes() {
        let mut text = String::new();
        for id in 0..649u64 {
            let split = if id < 614 { "train" } else { "test" };
            text.push_str(&format!(
                r#"{{"id":{id},"t":[0.0,0.005],"pos":[[0,0,1],[0.01,0,1]],"split":"{split}"}}"#
            ));
            text.push('\n');
        }
        let ds = Dataset::from_reader(text.as_bytes()).unwrap();
        assert_eq!(ds.count(Split::Train), 614);
        assert_eq!(ds.count(Split::Test), 35);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        let ds = Dataset::from_reader(CANONICAL.as_bytes()).unwrap();
        write_dataset(&path, &ds).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ds);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), CANONICAL);
    }
}
