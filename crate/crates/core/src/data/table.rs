use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation time: a calendar date or integer epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Timestamp {
    Date(NaiveDate),
    Epoch(i64),
}

impl Timestamp {
    /// Seconds since the Unix epoch; dates map to midnight UTC.
    pub fn epoch_seconds(&self) -> i64 {
        match self {
            Timestamp::Date(d) => d
                .and_hms_opt(0, 0, 0)
                .map(|dt| dt.and_utc().timestamp())
                .unwrap_or_default(),
            Timestamp::Epoch(s) => *s,
        }
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.epoch_seconds().cmp(&other.epoch_seconds())
    }
}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timestamp::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Timestamp::Epoch(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for Timestamp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(v) = s.parse::<i64>() {
            return Ok(Timestamp::Epoch(v));
        }
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Ok(Timestamp::Date(d));
        }
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S") {
            return Ok(Timestamp::Epoch(dt.and_utc().timestamp()));
        }
        if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
            return Ok(Timestamp::Epoch(dt.timestamp()));
        }
        Err(Error::UnparseableTimestamp(s.to_string()))
    }
}

/// Orders strings treating embedded digit runs as numbers, so that
/// `id2 < id10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut ai, mut bi) = (a.char_indices().peekable(), b.char_indices().peekable());
    loop {
        match (ai.peek().copied(), bi.peek().copied()) {
            (None, None) => return a.cmp(b),
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some((_, ca)), Some((_, cb))) => {
                if ca.is_ascii_digit() && cb.is_ascii_digit() {
                    let mut na = String::new();
                    while let Some((_, c)) = ai.peek().copied().filter(|(_, c)| c.is_ascii_digit()) {
                        na.push(c);
                        ai.next();
                    }
                    let mut nb = String::new();
                    while let Some((_, c)) = bi.peek().copied().filter(|(_, c)| c.is_ascii_digit()) {
                        nb.push(c);
                        bi.next();
                    }
                    let ta = na.trim_start_matches('0');
                    let tb = nb.trim_start_matches('0');
                    let ord = ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb));
                    if ord != Ordering::Equal {
                        return ord;
                    }
                } else {
                    if ca != cb {
                        return ca.cmp(&cb);
                    }
                    ai.next();
                    bi.next();
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    /// Indicator columns (one-hots, flags) are never standardized.
    #[serde(default)]
    pub indicator: bool,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            indicator: false,
        }
    }

    pub fn indicator(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            indicator: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    /// Labels range over `0..classes`.
    pub classes: u8,
}

impl TargetSpec {
    pub fn new(name: impl Into<String>, classes: u8) -> Self {
        Self {
            name: name.into(),
            classes,
        }
    }

    /// Class count for the known lifelog targets: `S1` is ternary, the
    /// rest binary.
    pub fn default_classes(name: &str) -> u8 {
        if name.eq_ignore_ascii_case("S1") {
            3
        } else {
            2
        }
    }
}

/// Key identifying one observation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub subject: String,
    pub timestamp: Timestamp,
}

impl Ord for RowKey {
    fn cmp(&self, other: &Self) -> Ordering {
        natural_cmp(&self.subject, &other.subject).then(self.timestamp.cmp(&other.timestamp))
    }
}

impl PartialOrd for RowKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub subject: String,
    pub timestamp: Timestamp,
    pub features: Vec<f64>,
    /// `None` marks an unlabeled (test) row for that target.
    pub targets: Vec<Option<u8>>,
}

impl Observation {
    pub fn key(&self) -> RowKey {
        RowKey {
            subject: self.subject.clone(),
            timestamp: self.timestamp,
        }
    }
}

/// Per-subject, per-time rows of features and ordinal targets, sorted by
/// `(subject, timestamp)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationTable {
    subject_column: String,
    timestamp_column: String,
    features: Vec<FeatureSpec>,
    targets: Vec<TargetSpec>,
    /// Output column order.
    header: Vec<String>,
    rows: Vec<Observation>,
}

impl ObservationTable {
    /// Validates and sorts. The header is subject, timestamp, features, then
    /// targets.
    pub fn new(
        features: Vec<FeatureSpec>,
        targets: Vec<TargetSpec>,
        rows: Vec<Observation>,
    ) -> Result<Self> {
        let mut header = vec!["subject".to_string(), "timestamp".to_string()];
        header.extend(features.iter().map(|f| f.name.clone()));
        header.extend(targets.iter().map(|t| t.name.clone()));
        Self::with_header("subject", "timestamp", features, targets, header, rows)
    }

    pub(crate) fn with_header(
        subject_column: &str,
        timestamp_column: &str,
        features: Vec<FeatureSpec>,
        targets: Vec<TargetSpec>,
        header: Vec<String>,
        mut rows: Vec<Observation>,
    ) -> Result<Self> {
        let mut names = HashSet::new();
        for name in [subject_column, timestamp_column]
            .into_iter()
            .chain(features.iter().map(|f| f.name.as_str()))
            .chain(targets.iter().map(|t| t.name.as_str()))
        {
            if !names.insert(name) {
                return Err(Error::InvalidSpec(format!("duplicate column name `{name}`")));
            }
        }
        for t in &targets {
            if t.classes < 2 {
                return Err(Error::InvalidSpec(format!(
                    "target `{}` needs at least two classes",
                    t.name
                )));
            }
        }
        for r in &rows {
            if r.features.len() != features.len() {
                return Err(Error::DimensionMismatch {
                    expected: features.len(),
                    found: r.features.len(),
                });
            }
            if r.targets.len() != targets.len() {
                return Err(Error::DimensionMismatch {
                    expected: targets.len(),
                    found: r.targets.len(),
                });
            }
            for (spec, label) in targets.iter().zip(&r.targets) {
                if let Some(l) = label {
                    if *l >= spec.classes {
                        return Err(Error::TargetOutOfRange {
                            target: spec.name.clone(),
                            label: i64::from(*l),
                            classes: spec.classes,
                        });
                    }
                }
            }
        }
        rows.sort_by(|a, b| {
            natural_cmp(&a.subject, &b.subject).then(a.timestamp.cmp(&b.timestamp))
        });
        for w in rows.windows(2) {
            if w[0].subject == w[1].subject && w[0].timestamp == w[1].timestamp {
                return Err(Error::DuplicateKey {
                    subject: w[0].subject.clone(),
                    timestamp: w[0].timestamp.to_string(),
                });
            }
        }
        Ok(Self {
            subject_column: subject_column.to_string(),
            timestamp_column: timestamp_column.to_string(),
            features,
            targets,
            header,
            rows,
        })
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn targets(&self) -> &[TargetSpec] {
        &self.targets
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn subject_column(&self) -> &str {
        &self.subject_column
    }

    pub fn timestamp_column(&self) -> &str {
        &self.timestamp_column
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn target_index(&self, name: &str) -> Result<usize> {
        self.targets
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::UnknownTarget(name.to_string()))
    }

    pub fn target(&self, name: &str) -> Result<&TargetSpec> {
        Ok(&self.targets[self.target_index(name)?])
    }

    /// Distinct subjects in table order.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&r.subject) {
                out.push(r.subject.clone());
            }
        }
        out
    }

    pub fn row_keys(&self) -> Vec<RowKey> {
        self.rows.iter().map(Observation::key).collect()
    }

    pub fn feature_column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.features[j]).collect()
    }

    pub fn labels(&self, target: usize) -> Vec<Option<u8>> {
        self.rows.iter().map(|r| r.targets[target]).collect()
    }

    /// Indices of rows labeled for `target`.
    pub fn labeled_rows(&self, target: usize) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| self.rows[i].targets[target].is_some())
            .collect()
    }

    /// Rows grouped per subject (row indices in time order).
    pub fn rows_by_subject(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            match out.last_mut() {
                Some((s, v)) if *s == r.subject => v.push(i),
                _ => out.push((r.subject.clone(), vec![i])),
            }
        }
        out
    }

    /// Table restricted to the given rows (kept in sorted order).
    pub fn subset(&self, rows: &[usize]) -> ObservationTable {
        let mut idx = rows.to_vec();
        idx.sort_unstable();
        idx.dedup();
        ObservationTable {
            subject_column: self.subject_column.clone(),
            timestamp_column: self.timestamp_column.clone(),
            features: self.features.clone(),
            targets: self.targets.clone(),
            header: self.header.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Replaces feature values row by row, keeping specs and ordering.
    pub(crate) fn map_features(&self, f: impl Fn(usize, &[f64]) -> Vec<f64>) -> ObservationTable {
        let mut out = self.clone();
        for (i, r) in out.rows.iter_mut().enumerate() {
            r.features = f(i, &self.rows[i].features);
        }
        out
    }

    /// Appends feature columns; `values[i]` holds the new values for row `i`.
    pub fn append_features(&self, specs: Vec<FeatureSpec>, values: Vec<Vec<f64>>) -> Result<ObservationTable> {
        if values.len() != self.rows.len() {
            return Err(Error::LengthMismatch(values.len(), self.rows.len()));
        }
        let mut features = self.features.clone();
        let mut header = self.header.clone();
        for s in &specs {
            header.push(s.name.clone());
        }
        features.extend(specs);
        let rows = self
            .rows
            .iter()
            .zip(values)
            .map(|(r, extra)| {
                let mut r = r.clone();
                r.features.extend(extra);
                r
            })
            .collect();
        Self::with_header(
            &self.subject_column,
            &self.timestamp_column,
            features,
            self.targets.clone(),
            header,
            rows,
        )
    }

    /// Adds or replaces target columns from a keyed label map.
    pub fn with_target(&self, spec: TargetSpec, labels: &BTreeMap<RowKey, u8>) -> Result<ObservationTable> {
        let mut targets = self.targets.clone();
        let mut header = self.header.clone();
        let slot = match targets.iter().position(|t| t.name == spec.name) {
            Some(i) => {
                targets[i] = spec;
                i
            }
            None => {
                header.push(spec.name.clone());
                targets.push(spec);
                targets.len() - 1
            }
        };
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                let label = labels.get(&r.key()).copied();
                if slot < r.targets.len() {
                    r.targets[slot] = label;
                } else {
                    r.targets.push(label);
                }
                r
            })
            .collect();
        Self::with_header(
            &self.subject_column,
            &self.timestamp_column,
            self.features.clone(),
            targets,
            header,
            rows,
        )
    }
}
