//! Observation tables, standardization, design expansion and chronological
//! folds.

mod csvio;
mod design;
mod split;
mod standardize;
mod table;

pub use csvio::{ingest_csv, read_table, write_table, write_table_file, ColumnRole, TableSchema};
pub(crate) use csvio::read_to_string;
pub use design::{expand_design, ColumnProvenance, DesignLayout, DesignMatrix};
pub use split::{chrono_split, FoldSplit};
pub use standardize::{standardize, FeatureStat, StandardizationStats};
pub use table::{
    natural_cmp, FeatureSpec, Observation, ObservationTable, RowKey, TargetSpec, Timestamp,
};
