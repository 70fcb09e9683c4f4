//! Minute-level sensor data to daily aggregates, archetype features and the
//! boosted-tree ensemble for the sleep-efficiency target.

mod aggregate;
mod archetype;
mod minute;
mod run;

pub use aggregate::{
    aggregate_daily, AggregateRule, AggregateSpec, ClockWindow, Comparison, ImputationPolicy, RuleKind, Statistic,
};
pub use archetype::build_archetype_features;
pub use minute::{
    analysis_day, kst, parse_instant, read_minute_csv, reindex_analysis_days, write_minute_csv, AnalysisDays, DayKey,
    MinuteRecord, DEFAULT_BOUNDARY_HOUR,
};
pub use run::{run_s2, S2Config, S2Output, S2Prediction};
