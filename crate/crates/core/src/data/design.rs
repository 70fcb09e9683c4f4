//! Interaction-expanded design matrices.
//!
//! The full design has an intercept, one global column per feature, one
//! indicator per subject and one `subject x feature` interaction per pair,
//! so each subject effectively gets a private intercept and slope on top of
//! the shared ones.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::table::{ObservationTable, RowKey};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// What a design column represents.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnProvenance {
    Intercept,
    GlobalFeature { feature: String },
    SubjectIndicator { subject: String },
    Interaction { feature: String, subject: String },
}

impl ColumnProvenance {
    pub fn feature_name(&self) -> Option<&str> {
        match self {
            ColumnProvenance::GlobalFeature { feature }
            | ColumnProvenance::Interaction { feature, .. } => Some(feature),
            _ => None,
        }
    }

    pub fn subject_id(&self) -> Option<&str> {
        match self {
            ColumnProvenance::SubjectIndicator { subject }
            | ColumnProvenance::Interaction { subject, .. } => Some(subject),
            _ => None,
        }
    }

    /// True for columns carrying a subject-specific adjustment.
    pub fn is_subject_specific(&self) -> bool {
        self.subject_id().is_some()
    }
}

impl fmt::Display for ColumnProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnProvenance::Intercept => f.write_str("intercept"),
            ColumnProvenance::GlobalFeature { feature } => f.write_str(feature),
            ColumnProvenance::SubjectIndicator { subject } => f.write_str(subject),
            ColumnProvenance::Interaction { feature, subject } => write!(f, "{subject}×{feature}"),
        }
    }
}

/// An ordered list of design columns, independent of any particular rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignLayout {
    pub columns: Vec<ColumnProvenance>,
}

impl DesignLayout {
    /// Full layout: intercept, globals, subject indicators, interactions
    /// (grouped by subject).
    pub fn full(subjects: &[String], features: &[String]) -> Self {
        let mut columns = vec![ColumnProvenance::Intercept];
        columns.extend(features.iter().map(|f| ColumnProvenance::GlobalFeature { feature: f.clone() }));
        columns.extend(subjects.iter().map(|s| ColumnProvenance::SubjectIndicator { subject: s.clone() }));
        for s in subjects {
            for f in features {
                columns.push(ColumnProvenance::Interaction {
                    feature: f.clone(),
                    subject: s.clone(),
                });
            }
        }
        Self { columns }
    }

    /// Evaluates the layout on every row of `table`. Rows of subjects the
    /// layout does not know get zeros in all subject-specific columns.
    pub fn materialize(&self, table: &ObservationTable) -> Result<DesignMatrix> {
        let feature_slot = |name: &str| table.feature_index(name);
        let slots: Vec<Slot> = self
            .columns
            .iter()
            .map(|c| {
                Ok(match c {
                    ColumnProvenance::Intercept => Slot::One,
                    ColumnProvenance::GlobalFeature { feature } => Slot::Feature(feature_slot(feature)?),
                    ColumnProvenance::SubjectIndicator { subject } => Slot::Indicator(subject.as_str()),
                    ColumnProvenance::Interaction { feature, subject } => {
                        Slot::Interaction(feature_slot(feature)?, subject.as_str())
                    }
                })
            })
            .collect::<Result<_>>()?;
        let p = slots.len();
        let mut values = Matrix::zeros(table.n_rows(), p);
        for (i, r) in table.rows().iter().enumerate() {
            for (j, s) in slots.iter().enumerate() {
                let v = match s {
                    Slot::One => 1.0,
                    Slot::Feature(k) => r.features[*k],
                    Slot::Indicator(sub) => {
                        if r.subject == *sub {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Slot::Interaction(k, sub) => {
                        if r.subject == *sub {
                            r.features[*k]
                        } else {
                            0.0
                        }
                    }
                };
                values.set(i, j, v);
            }
        }
        Ok(DesignMatrix {
            values,
            columns: self.columns.clone(),
            row_keys: table.row_keys(),
        })
    }
}

enum Slot<'a> {
    One,
    Feature(usize),
    Indicator(&'a str),
    Interaction(usize, &'a str),
}

/// Column-annotated `N x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: Matrix,
    pub columns: Vec<ColumnProvenance>,
    pub row_keys: Vec<RowKey>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    pub fn layout(&self) -> DesignLayout {
        DesignLayout {
            columns: self.columns.clone(),
        }
    }

    pub fn column_index(&self, col: &ColumnProvenance) -> Option<usize> {
        self.columns.iter().position(|c| c == col)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(ToString::to_string).collect()
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix {
            values: self.values.select_columns(idx),
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            row_keys: self.row_keys.clone(),
        }
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> DesignMatrix {
        DesignMatrix {
            values: self.values.select_rows(idx),
            columns: self.columns.clone(),
            row_keys: idx.iter().map(|&i| self.row_keys[i].clone()).collect(),
        }
    }

    /// Drops column `j`.
    pub fn without(&self, j: usize) -> DesignMatrix {
        let keep: Vec<usize> = (0..self.n_cols()).filter(|&c| c != j).collect();
        self.select_columns(&keep)
    }

    /// Restricts to the columns of `layout`, in its order.
    pub fn restrict(&self, layout: &DesignLayout) -> Result<DesignMatrix> {
        let idx: Vec<usize> = layout
            .columns
            .iter()
            .map(|c| self.column_index(c).ok_or(Error::ColumnMismatch))
            .collect::<Result<_>>()?;
        Ok(self.select_columns(&idx))
    }
}

/// Builds the full interaction-expanded design for `table`.
pub fn expand_design(table: &ObservationTable) -> Result<DesignMatrix> {
    let subjects = table.subjects();
    if subjects.len() < 2 {
        return Err(Error::FewerThanTwoSubjects(subjects.len()));
    }
    if table.features().is_empty() {
        return Err(Error::NoFeatures);
    }
    DesignLayout::full(&subjects, &table.feature_names()).materialize(table)
}
