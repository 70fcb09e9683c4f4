//! CSV ingestion and export of observation tables, driven by a JSON schema
//! sidecar mapping column names to roles.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::table::{FeatureSpec, Observation, ObservationTable, TargetSpec, Timestamp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum ColumnRole {
    Subject,
    Timestamp,
    Feature {
        #[serde(default)]
        indicator: bool,
    },
    Target {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<u8>,
    },
}

/// Column-name to role map. CSV columns absent from the schema are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: BTreeMap<String, ColumnRole>,
}

impl TableSchema {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    /// Schema describing an existing table.
    pub fn of(table: &ObservationTable) -> Self {
        let mut columns = BTreeMap::new();
        columns.insert(table.subject_column().to_string(), ColumnRole::Subject);
        columns.insert(table.timestamp_column().to_string(), ColumnRole::Timestamp);
        for f in table.features() {
            columns.insert(
                f.name.clone(),
                ColumnRole::Feature {
                    indicator: f.indicator,
                },
            );
        }
        for t in table.targets() {
            columns.insert(
                t.name.clone(),
                ColumnRole::Target {
                    classes: Some(t.classes),
                },
            );
        }
        Self { columns }
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::DataNotFound(path.to_path_buf()));
    }
    Ok(std::fs::read_to_string(path)?)
}

/// Reads a CSV file into a validated table.
pub fn ingest_csv(path: &Path, schema: &TableSchema) -> Result<ObservationTable> {
    if !path.exists() {
        return Err(Error::DataNotFound(path.to_path_buf()));
    }
    let file = std::fs::File::open(path)?;
    read_table(file, schema)
}

/// Reads CSV from any reader into a validated table.
pub fn read_table<R: Read>(reader: R, schema: &TableSchema) -> Result<ObservationTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let mut subject = None;
    let mut timestamp = None;
    for (name, role) in &schema.columns {
        match role {
            ColumnRole::Subject => {
                if subject.replace(name.clone()).is_some() {
                    return Err(Error::InvalidSpec("schema declares two subject columns".into()));
                }
            }
            ColumnRole::Timestamp => {
                if timestamp.replace(name.clone()).is_some() {
                    return Err(Error::InvalidSpec("schema declares two timestamp columns".into()));
                }
            }
            _ => {}
        }
        position(name)?;
    }
    let subject = subject.ok_or_else(|| Error::InvalidSpec("schema lacks a subject column".into()))?;
    let timestamp =
        timestamp.ok_or_else(|| Error::InvalidSpec("schema lacks a timestamp column".into()))?;

    // Feature and target order follows the CSV header.
    let mut features = Vec::new();
    let mut feature_cols = Vec::new();
    let mut targets = Vec::new();
    let mut target_cols = Vec::new();
    let mut out_header = Vec::new();
    for (i, h) in header.iter().enumerate() {
        match schema.columns.get(h) {
            None => continue,
            Some(ColumnRole::Feature { indicator }) => {
                features.push(FeatureSpec {
                    name: h.clone(),
                    indicator: *indicator,
                });
                feature_cols.push(i);
            }
            Some(ColumnRole::Target { classes }) => {
                targets.push(TargetSpec {
                    name: h.clone(),
                    classes: classes.unwrap_or_else(|| TargetSpec::default_classes(h)),
                });
                target_cols.push(i);
            }
            Some(_) => {}
        }
        out_header.push(h.clone());
    }
    let subject_col = position(&subject)?;
    let timestamp_col = position(&timestamp)?;

    let mut rows = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = line + 1;
        let cell = |i: usize| record.get(i).unwrap_or("");
        let unparseable = |i: usize| Error::UnparseableValue {
            column: header[i].clone(),
            row: row_no,
            value: cell(i).to_string(),
        };
        let ts: Timestamp = cell(timestamp_col).parse().map_err(|_| unparseable(timestamp_col))?;
        let mut fv = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let v: f64 = cell(c).parse().map_err(|_| unparseable(c))?;
            if !v.is_finite() {
                return Err(unparseable(c));
            }
            fv.push(v);
        }
        let mut tv = Vec::with_capacity(target_cols.len());
        for (k, &c) in target_cols.iter().enumerate() {
            let raw = cell(c);
            if raw.is_empty() {
                tv.push(None);
                continue;
            }
            let label: i64 = raw
                .parse::<i64>()
                .or_else(|_| match raw.parse::<f64>() {
                    Ok(f) if f.fract() == 0.0 => Ok(f as i64),
                    _ => Err(()),
                })
                .map_err(|_| unparseable(c))?;
            let classes = targets[k].classes;
            if label < 0 || label >= i64::from(classes) {
                return Err(Error::TargetOutOfRange {
                    target: targets[k].name.clone(),
                    label,
                    classes,
                });
            }
            tv.push(Some(label as u8));
        }
        rows.push(Observation {
            subject: cell(subject_col).to_string(),
            timestamp: ts,
            features: fv,
            targets: tv,
        });
    }
    ObservationTable::with_header(&subject, &timestamp, features, targets, out_header, rows)
}

/// Writes the table as CSV using its header order.
pub fn write_table<W: Write>(table: &ObservationTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(table.header())?;
    enum Slot {
        Subject,
        Timestamp,
        Feature(usize),
        Target(usize),
    }
    let slots: Vec<Slot> = table
        .header()
        .iter()
        .map(|h| {
            if h == table.subject_column() {
                Slot::Subject
            } else if h == table.timestamp_column() {
                Slot::Timestamp
            } else if let Ok(j) = table.feature_index(h) {
                Slot::Feature(j)
            } else {
                Slot::Target(table.target_index(h).expect("header names a known column"))
            }
        })
        .collect();
    for r in table.rows() {
        let record: Vec<String> = slots
            .iter()
            .map(|s| match s {
                Slot::Subject => r.subject.clone(),
                Slot::Timestamp => r.timestamp.to_string(),
                Slot::Feature(j) => format!("{}", r.features[*j]),
                Slot::Target(k) => r.targets[*k].map(|l| l.to_string()).unwrap_or_default(),
            })
            .collect();
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_file(table: &ObservationTable, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_table(table, std::io::BufWriter::new(f))
}
