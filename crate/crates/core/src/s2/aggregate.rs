use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::minute::{AnalysisDays, DayKey, MinuteRecord};
use crate::data::{read_to_string, FeatureSpec, Observation, ObservationTable, Timestamp};
use crate::error::{Error, Result};
use crate::stats::mean_std;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Mean,
    Std,
    Min,
    Max,
    Sum,
    /// Number of samples strictly above the threshold.
    CountAbove { threshold: f64 },
}

impl Statistic {
    /// `None` when the statistic is undefined on an empty sample.
    pub fn apply(&self, values: &[f64]) -> Option<f64> {
        match self {
            Statistic::Sum => return Some(values.iter().sum()),
            Statistic::CountAbove { threshold } => {
                return Some(values.iter().filter(|&&v| v > *threshold).count() as f64)
            }
            _ if values.is_empty() => return None,
            _ => {}
        }
        Some(match self {
            Statistic::Mean => mean_std(values).0,
            Statistic::Std => mean_std(values).1,
            Statistic::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            Statistic::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Statistic::Sum | Statistic::CountAbove { .. } => unreachable!(),
        })
    }

    fn label(&self) -> String {
        match self {
            Statistic::Mean => "mean".into(),
            Statistic::Std => "std".into(),
            Statistic::Min => "min".into(),
            Statistic::Max => "max".into(),
            Statistic::Sum => "sum".into(),
            Statistic::CountAbove { threshold } => format!("count_above_{threshold}"),
        }
    }
}

/// Local clock interval `[start, end)`, e.g. `"00:00"` to `"06:00"`. An
/// interval with `start > end` wraps past midnight; `start == end` is the
/// whole day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockWindow {
    pub start: String,
    pub end: String,
}

fn parse_clock(s: &str) -> Result<u32> {
    let bad = || Error::InvalidSpec(format!("clock time `{s}` is not HH:MM"));
    let (h, m) = s.split_once(':').ok_or_else(bad)?;
    let (h, m): (u32, u32) = (h.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?);
    if h > 23 || m > 59 {
        return Err(bad());
    }
    Ok(h * 60 + m)
}

impl ClockWindow {
    fn bounds(&self) -> Result<(u32, u32)> {
        Ok((parse_clock(&self.start)?, parse_clock(&self.end)?))
    }

    fn label(&self) -> String {
        format!("{}_{}", self.start.replace(':', ""), self.end.replace(':', ""))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Gt,
    Ge,
    Lt,
    Le,
}

impl Comparison {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Comparison::Gt => a > b,
            Comparison::Ge => a >= b,
            Comparison::Lt => a < b,
            Comparison::Le => a <= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleKind {
    Plain,
    /// Statistic of the per-minute product `channel × with`.
    Interaction { with: String },
    /// Today's statistic minus its mean over the subject's earlier days.
    BaselineDeviation,
    /// 1 when the statistic satisfies `op value`, else 0.
    EventFlag { op: Comparison, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub channel: String,
    pub statistic: Statistic,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<ClockWindow>,
    #[serde(flatten)]
    pub kind: RuleKind,
}

impl AggregateRule {
    pub fn feature_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let mut base = match &self.kind {
            RuleKind::Interaction { with } => format!("{}×{}_{}", self.channel, with, self.statistic.label()),
            _ => format!("{}_{}", self.channel, self.statistic.label()),
        };
        if let Some(w) = &self.window {
            base = format!("{base}_{}", w.label());
        }
        match &self.kind {
            RuleKind::BaselineDeviation => format!("{base}_dev"),
            RuleKind::EventFlag { op, value } => format!("{base}_{op:?}_{value}").to_lowercase(),
            _ => base,
        }
    }

    fn channels(&self) -> Vec<&str> {
        match &self.kind {
            RuleKind::Interaction { with } => vec![&self.channel, with],
            _ => vec![&self.channel],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateSpec {
    pub rules: Vec<AggregateRule>,
}

impl AggregateSpec {
    pub fn from_path(path: &Path) -> Result<Self> {
        let spec: Self = serde_json::from_str(&read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::InvalidSpec("aggregate spec has no rules".into()));
        }
        let mut names = HashSet::new();
        for r in &self.rules {
            let name = r.feature_name();
            if !names.insert(name.clone()) {
                return Err(Error::InvalidSpec(format!("duplicate aggregate name `{name}`")));
            }
            if let Some(w) = &r.window {
                w.bounds()?;
            }
            let finite = match (&r.statistic, &r.kind) {
                (Statistic::CountAbove { threshold }, _) if !threshold.is_finite() => false,
                (_, RuleKind::EventFlag { value, .. }) => value.is_finite(),
                _ => true,
            };
            if !finite {
                return Err(Error::InvalidSpec(format!("non-finite constant in `{name}`")));
            }
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.rules.iter().map(AggregateRule::feature_name).collect()
    }

    fn channels(&self) -> BTreeSet<&str> {
        self.rules.iter().flat_map(AggregateRule::channels).collect()
    }
}

/// Handling of gaps in minute data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationPolicy {
    /// Interior minute gaps of a channel within one analysis day carry the
    /// last observed value.
    #[default]
    ForwardFill,
    /// No minute filling; statistics without samples become 0.
    ZeroFill,
    /// Days lacking any referenced channel are dropped.
    DropDay,
}

type Series = BTreeMap<i64, f64>;

fn channel_series(records: &[MinuteRecord], policy: ImputationPolicy) -> BTreeMap<&str, Series> {
    let mut out: BTreeMap<&str, Series> = BTreeMap::new();
    for r in records {
        out.entry(r.channel.as_str())
            .or_default()
            .insert(r.timestamp.div_euclid(60), r.value);
    }
    if policy == ImputationPolicy::ForwardFill {
        for s in out.values_mut() {
            let (Some(&first), Some(&last)) = (s.keys().next(), s.keys().next_back()) else {
                continue;
            };
            let mut current = s[&first];
            for m in first..=last {
                match s.get(&m) {
                    Some(&v) => current = v,
                    None => {
                        s.insert(m, current);
                    }
                }
            }
        }
    }
    out
}

fn in_window(minute: u32, bounds: Option<(u32, u32)>) -> bool {
    match bounds {
        None => true,
        Some((s, e)) if s == e => true,
        Some((s, e)) if s < e => minute >= s && minute < e,
        Some((s, e)) => minute >= s || minute < e,
    }
}

/// Daily aggregate table with one row per surviving `(subject, analysis day)`
/// and one feature per rule. Statistics undefined on an empty sample are 0.
pub fn aggregate_daily(days: &AnalysisDays, spec: &AggregateSpec, policy: ImputationPolicy) -> Result<ObservationTable> {
    spec.validate()?;
    let wanted = spec.channels();
    if policy == ImputationPolicy::DropDay {
        let present: HashSet<&str> = days
            .groups
            .values()
            .flat_map(|rs| rs.iter().map(|r| r.channel.as_str()))
            .collect();
        if let Some(missing) = wanted.iter().find(|c| !present.contains(**c)) {
            return Err(Error::MissingChannel(missing.to_string()));
        }
    }
    let windows: Vec<Option<(u32, u32)>> = spec
        .rules
        .iter()
        .map(|r| r.window.as_ref().map(ClockWindow::bounds).transpose())
        .collect::<Result<_>>()?;

    let groups: Vec<(&DayKey, &Vec<MinuteRecord>)> = days.groups.iter().collect();
    let base: Vec<Option<Vec<f64>>> = groups
        .par_iter()
        .map(|(_, records)| {
            let series = channel_series(records, policy);
            if policy == ImputationPolicy::DropDay && wanted.iter().any(|c| !series.contains_key(c)) {
                return None;
            }
            let empty = Series::new();
            let get = |c: &str| series.get(c).unwrap_or(&empty);
            let values = spec
                .rules
                .iter()
                .zip(&windows)
                .map(|(rule, &bounds)| {
                    let keep = |m: i64| in_window(days.local_minute(m * 60), bounds);
                    let sample: Vec<f64> = match &rule.kind {
                        RuleKind::Interaction { with } => {
                            let other = get(with);
                            get(&rule.channel)
                                .iter()
                                .filter(|(m, _)| keep(**m))
                                .filter_map(|(m, a)| other.get(m).map(|b| a * b))
                                .collect()
                        }
                        _ => get(&rule.channel)
                            .iter()
                            .filter(|(m, _)| keep(**m))
                            .map(|(_, v)| *v)
                            .collect(),
                    };
                    rule.statistic.apply(&sample).unwrap_or(0.0)
                })
                .collect();
            Some(values)
        })
        .collect();

    // baselines run over each subject's surviving days in date order
    let mut history: BTreeMap<&str, Vec<(f64, usize)>> = BTreeMap::new();
    let mut rows = Vec::new();
    for ((key, _), values) in groups.iter().zip(base) {
        let Some(values) = values else { continue };
        let hist = history
            .entry(key.subject.as_str())
            .or_insert_with(|| vec![(0.0, 0); spec.rules.len()]);
        let features = spec
            .rules
            .iter()
            .enumerate()
            .map(|(j, rule)| match &rule.kind {
                RuleKind::Plain | RuleKind::Interaction { .. } => values[j],
                RuleKind::BaselineDeviation => {
                    let (sum, n) = hist[j];
                    if n == 0 {
                        0.0
                    } else {
                        values[j] - sum / n as f64
                    }
                }
                RuleKind::EventFlag { op, value } => f64::from(u8::from(op.holds(values[j], *value))),
            })
            .collect();
        for (h, v) in hist.iter_mut().zip(&values) {
            h.0 += v;
            h.1 += 1;
        }
        rows.push(Observation {
            subject: key.subject.clone(),
            timestamp: Timestamp::Date(key.day),
            features,
            targets: vec![],
        });
    }
    let specs = spec
        .rules
        .iter()
        .map(|r| match r.kind {
            RuleKind::EventFlag { .. } => FeatureSpec::indicator(r.feature_name()),
            _ => FeatureSpec::continuous(r.feature_name()),
        })
        .collect();
    ObservationTable::new(specs, vec![], rows)
}

#[cfg(test)]
mod tests {
    use super::super::minute::{kst, parse_instant, reindex_analysis_days};
    use super::*;

    fn rec(channel: &str, at: &str, value: f64) -> MinuteRecord {
        MinuteRecord {
            subject: "id1".into(),
            timestamp: parse_instant(at, kst()).unwrap(),
            channel: channel.into(),
            value,
        }
    }

    fn rule(json: &str) -> AggregateRule {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn constant_channel_and_annihilating_interaction() {
        let mut recs = Vec::new();
        for m in 0..30 {
            let at = format!("2024-01-01 20:{m:02}");
            recs.push(rec("heart_rate", &at, 60.0));
            recs.push(rec("steps", &at, 0.0));
        }
        let days = reindex_analysis_days(&recs, 16, kst()).unwrap();
        let spec = AggregateSpec {
            rules: vec![
                rule(r#"{"channel":"heart_rate","statistic":"mean","kind":"plain"}"#),
                rule(r#"{"channel":"heart_rate","statistic":"std","kind":"plain"}"#),
                rule(r#"{"channel":"heart_rate","statistic":"mean","kind":"interaction","with":"steps"}"#),
            ],
        };
        let t = aggregate_daily(&days, &spec, ImputationPolicy::ForwardFill).unwrap();
        assert_eq!(t.n_rows(), 1);
        assert_eq!(t.rows()[0].features, vec![60.0, 0.0, 0.0]);
        assert_eq!(
            t.feature_names(),
            vec!["heart_rate_mean", "heart_rate_std", "heart_rate×steps_mean"]
        );
    }

    #[test]
    fn night_window_and_flag() {
        let recs = vec![
            rec("light", "2024-01-01 22:00", 5.0),
            rec("light", "2024-01-02 02:00", 300.0),
            rec("light", "2024-01-02 10:00", 900.0),
        ];
        let days = reindex_analysis_days(&recs, 16, kst()).unwrap();
        let spec = AggregateSpec {
            rules: vec![rule(
                r#"{"name":"night_bright","channel":"light","statistic":"max","window":{"start":"00:00","end":"06:00"},"kind":"event_flag","op":"gt","value":100}"#,
            )],
        };
        let t = aggregate_daily(&days, &spec, ImputationPolicy::ZeroFill).unwrap();
        assert_eq!(t.rows()[0].features, vec![1.0]);
        assert!(t.features()[0].indicator);
    }

    #[test]
    fn forward_fill_fills_interior_gaps_only() {
        let recs = vec![rec("hr", "2024-01-01 20:00", 1.0), rec("hr", "2024-01-01 20:03", 4.0)];
        let days = reindex_analysis_days(&recs, 16, kst()).unwrap();
        let spec = AggregateSpec {
            rules: vec![rule(r#"{"channel":"hr","statistic":"sum","kind":"plain"}"#)],
        };
        let ff = aggregate_daily(&days, &spec, ImputationPolicy::ForwardFill).unwrap();
        assert_eq!(ff.rows()[0].features, vec![1.0 + 1.0 + 1.0 + 4.0]);
        let zf = aggregate_daily(&days, &spec, ImputationPolicy::ZeroFill).unwrap();
        assert_eq!(zf.rows()[0].features, vec![5.0]);
    }

    #[test]
    fn drop_policy() {
        let recs = vec![
            rec("hr", "2024-01-01 20:00", 1.0),
            rec("steps", "2024-01-01 20:00", 1.0),
            rec("hr", "2024-01-02 20:00", 1.0),
        ];
        let days = reindex_analysis_days(&recs, 16, kst()).unwrap();
        let both = AggregateSpec {
            rules: vec![
                rule(r#"{"channel":"hr","statistic":"mean","kind":"plain"}"#),
                rule(r#"{"channel":"steps","statistic":"sum","kind":"plain"}"#),
            ],
        };
        assert_eq!(aggregate_daily(&days, &both, ImputationPolicy::DropDay).unwrap().n_rows(), 1);
        assert_eq!(aggregate_daily(&days, &both, ImputationPolicy::ZeroFill).unwrap().n_rows(), 2);
        let missing = AggregateSpec {
            rules: vec![rule(r#"{"channel":"light","statistic":"mean","kind":"plain"}"#)],
        };
        assert!(matches!(
            aggregate_daily(&days, &missing, ImputationPolicy::DropDay),
            Err(Error::MissingChannel(c)) if c == "light"
        ));
    }

    #[test]
    fn baseline_is_zero_without_history() {
        let recs: Vec<_> = (1..=3)
            .map(|d| rec("hr", &format!("2024-01-0{d} 20:00"), f64::from(d * 10)))
            .collect();
        let days = reindex_analysis_days(&recs, 16, kst()).unwrap();
        let spec = AggregateSpec {
            rules: vec![rule(r#"{"channel":"hr","statistic":"mean","kind":"baseline_deviation"}"#)],
        };
        let t = aggregate_daily(&days, &spec, ImputationPolicy::ZeroFill).unwrap();
        let got: Vec<f64> = t.rows().iter().map(|r| r.features[0]).collect();
        assert_eq!(got, vec![0.0, 10.0, 15.0]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let r = rule(r#"{"channel":"hr","statistic":"mean","kind":"plain"}"#);
        let spec = AggregateSpec {
            rules: vec![r.clone(), r],
        };
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
    }
}
