//! Seeded generators for multi-subject tables with a known linear
//! structure.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureSpec, Observation, ObservationTable, TargetSpec, Timestamp};
use crate::error::{Error, Result};
use crate::s2::{kst, AggregateSpec, MinuteRecord, DEFAULT_BOUNDARY_HOUR};

pub const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// Additional intercept and slopes for one subject.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubjectEffect {
    pub intercept: f64,
    pub coefficients: BTreeMap<String, f64>,
}

/// Latent linear model and discretizer of one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetModel {
    pub name: String,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    /// Keyed by subject id (`id1`, `id2`, ...).
    #[serde(default)]
    pub subject_effects: BTreeMap<String, SubjectEffect>,
    pub noise_sd: f64,
    /// Strictly increasing; the label is the number of thresholds strictly
    /// below the latent value.
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub subjects: usize,
    pub rows_per_subject: usize,
    pub features: Vec<String>,
    /// Features are drawn uniformly from this range.
    #[serde(default = "default_range")]
    pub feature_range: [f64; 2],
    /// Adds weekday one-hots and a `dow` index derived from the dates.
    #[serde(default)]
    pub calendar_features: bool,
    pub targets: Vec<TargetModel>,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
}

fn default_range() -> [f64; 2] {
    [-2.0, 2.0]
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date")
}

/// Exact structure behind a generated table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Latent values per target, aligned with the table rows.
    pub latent: BTreeMap<String, Vec<f64>>,
    /// Design columns with a nonzero coefficient, by display name. The
    /// intercept is always listed.
    pub support: BTreeMap<String, Vec<String>>,
    pub coefficients: BTreeMap<String, Vec<(String, f64)>>,
    pub thresholds: BTreeMap<String, Vec<f64>>,
}

impl SyntheticSpec {
    /// Four subjects sharing an intercept and slope on `x`, with one extra
    /// slope for subject `id3`.
    pub fn fig1(rng_seed: u64) -> Self {
        Self {
            subjects: 4,
            rows_per_subject: 200,
            features: vec!["x".into()],
            feature_range: default_range(),
            calendar_features: false,
            targets: vec![TargetModel {
                name: "y".into(),
                intercept: 1.0,
                coefficients: BTreeMap::from([("x".into(), 0.8)]),
                subject_effects: BTreeMap::from([(
                    "id3".into(),
                    SubjectEffect {
                        intercept: 0.0,
                        coefficients: BTreeMap::from([("x".into(), 1.2)]),
                    },
                )]),
                noise_sd: 0.5,
                thresholds: vec![1.0],
            }],
            rng_seed,
            start_date: default_start(),
        }
    }

    /// Ten subjects with five daily features, calendar columns and six
    /// ordinal targets with sparse subject-specific effects.
    pub fn lifelike(rng_seed: u64) -> Self {
        let features: Vec<String> = ["screen_on", "calories", "charging", "walking", "stationary"]
            .into_iter()
            .map(String::from)
            .collect();
        let coefs = |pairs: &[(&str, f64)]| -> BTreeMap<String, f64> {
            pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
        };
        let effect = |intercept: f64, pairs: &[(&str, f64)]| SubjectEffect {
            intercept,
            coefficients: coefs(pairs),
        };
        let binary = |name: &str, base: &[(&str, f64)], subj: Vec<(&str, SubjectEffect)>| TargetModel {
            name: name.into(),
            intercept: 0.5,
            coefficients: coefs(base),
            subject_effects: subj.into_iter().map(|(s, e)| (s.to_string(), e)).collect(),
            noise_sd: 0.3,
            thresholds: vec![0.5],
        };
        Self {
            subjects: 10,
            rows_per_subject: 60,
            features,
            feature_range: default_range(),
            calendar_features: true,
            targets: vec![
                binary(
                    "Q1",
                    &[("screen_on", -0.15), ("walking", 0.1)],
                    vec![("id2", effect(0.2, &[("calories", 0.2)]))],
                ),
                binary(
                    "Q2",
                    &[("charging", 0.12)],
                    vec![("id5", effect(0.0, &[("screen_on", -0.25)]))],
                ),
                binary(
                    "Q3",
                    &[("stationary", -0.1), ("calories", 0.08)],
                    vec![("id7", effect(-0.15, &[]))],
                ),
                TargetModel {
                    name: "S1".into(),
                    intercept: 1.0,
                    coefficients: coefs(&[("walking", 0.3), ("screen_on", -0.2)]),
                    subject_effects: BTreeMap::from([("id4".to_string(), effect(0.0, &[("charging", 0.35)]))]),
                    noise_sd: 0.35,
                    thresholds: vec![0.75, 1.25],
                },
                binary(
                    "S2",
                    &[("charging", 0.15), ("screen_on", -0.1)],
                    vec![("id9", effect(0.0, &[("walking", 0.2)]))],
                ),
                binary(
                    "S3",
                    &[("calories", -0.12)],
                    vec![("id1", effect(0.15, &[])), ("id6", effect(0.0, &[("stationary", 0.2)]))],
                ),
            ],
            rng_seed,
            start_date: default_start(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidSpec(m));
        if self.subjects == 0 || self.rows_per_subject == 0 {
            return invalid("need at least one subject and one row per subject".into());
        }
        if self.features.is_empty() {
            return invalid("need at least one feature".into());
        }
        let [lo, hi] = self.feature_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return invalid(format!("bad feature range [{lo}, {hi}]"));
        }
        for t in &self.targets {
            if !(t.noise_sd >= 0.0) || !t.noise_sd.is_finite() {
                return invalid(format!("target {}: noise sd must be non-negative", t.name));
            }
            if t.thresholds.is_empty() || t.thresholds.len() > 254 {
                return invalid(format!("target {}: need at least one threshold", t.name));
            }
            if t.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
                return invalid(format!("target {}: thresholds must be strictly increasing", t.name));
            }
            let known = |f: &String| self.features.contains(f);
            if let Some(f) = t.coefficients.keys().find(|f| !known(f)) {
                return invalid(format!("target {}: unknown feature {f}", t.name));
            }
            for (s, e) in &t.subject_effects {
                if !self.subject_ids().contains(s) {
                    return invalid(format!("target {}: unknown subject {s}", t.name));
                }
                if let Some(f) = e.coefficients.keys().find(|f| !known(f)) {
                    return invalid(format!("target {}: unknown feature {f}", t.name));
                }
            }
        }
        Ok(())
    }

    pub fn subject_ids(&self) -> Vec<String> {
        (1..=self.subjects).map(|i| format!("id{i}")).collect()
    }
}

/// Draws a table from `spec` together with its ground truth.
pub fn generate(spec: &SyntheticSpec) -> Result<(ObservationTable, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let [lo, hi] = spec.feature_range;

    let mut feature_specs: Vec<FeatureSpec> = spec.features.iter().map(FeatureSpec::continuous).collect();
    if spec.calendar_features {
        feature_specs.extend(WEEKDAYS.iter().map(|d| FeatureSpec::indicator(*d)));
        feature_specs.push(FeatureSpec::continuous("dow"));
    }
    let target_specs: Vec<TargetSpec> = spec
        .targets
        .iter()
        .map(|t| TargetSpec::new(t.name.clone(), (t.thresholds.len() + 1) as u8))
        .collect();
    let noise: Vec<Normal<f64>> = spec
        .targets
        .iter()
        .map(|t| Normal::new(0.0, t.noise_sd).expect("validated sd"))
        .collect();

    let mut rows = Vec::with_capacity(spec.subjects * spec.rows_per_subject);
    let mut latent: Vec<Vec<f64>> = vec![Vec::new(); spec.targets.len()];
    for subject in spec.subject_ids() {
        for day in 0..spec.rows_per_subject {
            let date = spec.start_date + Duration::days(day as i64);
            let x: Vec<f64> = (0..spec.features.len()).map(|_| rng.random_range(lo..hi)).collect();
            let mut features = x.clone();
            if spec.calendar_features {
                let dow = date.weekday().num_days_from_monday() as usize;
                features.extend((0..7).map(|d| if d == dow { 1.0 } else { 0.0 }));
                features.push(dow as f64);
            }
            let mut targets = Vec::with_capacity(spec.targets.len());
            for (k, t) in spec.targets.iter().enumerate() {
                let mut z = t.intercept;
                for (j, f) in spec.features.iter().enumerate() {
                    z += t.coefficients.get(f).copied().unwrap_or(0.0) * x[j];
                }
                if let Some(e) = t.subject_effects.get(&subject) {
                    z += e.intercept;
                    for (j, f) in spec.features.iter().enumerate() {
                        z += e.coefficients.get(f).copied().unwrap_or(0.0) * x[j];
                    }
                }
                z += noise[k].sample(&mut rng);
                latent[k].push(z);
                targets.push(Some(t.thresholds.iter().filter(|&&tau| z > tau).count() as u8));
            }
            rows.push(Observation {
                subject: subject.clone(),
                timestamp: Timestamp::Date(date),
                features,
                targets,
            });
        }
    }
    // Rows are generated in (subject, date) order, which is the table order.
    let table = ObservationTable::new(feature_specs, target_specs, rows)?;

    let mut truth = GroundTruth {
        latent: BTreeMap::new(),
        support: BTreeMap::new(),
        coefficients: BTreeMap::new(),
        thresholds: BTreeMap::new(),
    };
    for (k, t) in spec.targets.iter().enumerate() {
        let mut coefs = vec![("intercept".to_string(), t.intercept)];
        for f in &spec.features {
            coefs.push((f.clone(), t.coefficients.get(f).copied().unwrap_or(0.0)));
        }
        for (s, e) in &t.subject_effects {
            coefs.push((s.clone(), e.intercept));
            for f in &spec.features {
                coefs.push((format!("{s}×{f}"), e.coefficients.get(f).copied().unwrap_or(0.0)));
            }
        }
        let support = coefs
            .iter()
            .filter(|(name, v)| name == "intercept" || *v != 0.0)
            .map(|(name, _)| name.clone())
            .collect();
        truth.latent.insert(t.name.clone(), std::mem::take(&mut latent[k]));
        truth.support.insert(t.name.clone(), support);
        truth.coefficients.insert(t.name.clone(), coefs);
        truth.thresholds.insert(t.name.clone(), t.thresholds.clone());
    }
    Ok((table, truth))
}

/// Minute-level channels for every row of a table holding `screen_on`,
/// `walking` and `charging` features, sampled every `step_minutes` over the
/// row's analysis day (16:00 local on the row date to 16:00 the next day).
/// About 5% of samples are dropped at random.
///
/// Channels: `heart_rate`, `steps`, `light`, `screen_state` and `charging`.
/// Night-time screen use rises with `screen_on`, night-time charging with
/// `charging`, and daytime steps with `walking`.
pub fn minute_trace(table: &ObservationTable, step_minutes: u32, seed: u64) -> Result<Vec<MinuteRecord>> {
    if step_minutes == 0 || 1440 % step_minutes != 0 {
        return Err(Error::InvalidSpec(format!("step of {step_minutes} minutes does not divide a day")));
    }
    let screen = table.feature_index("screen_on")?;
    let walking = table.feature_index("walking")?;
    let charging = table.feature_index("charging")?;
    let tz = kst();
    let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::new();
    for row in table.rows() {
        let Timestamp::Date(date) = row.timestamp else {
            return Err(Error::InvalidSpec("minute traces need date-stamped rows".into()));
        };
        let start = date
            .and_hms_opt(DEFAULT_BOUNDARY_HOUR, 0, 0)
            .and_then(|t| t.and_local_timezone(tz).single())
            .ok_or_else(|| Error::UnparseableTimestamp(date.to_string()))?
            .timestamp();
        let (s, w, c) = (row.features[screen], row.features[walking], row.features[charging]);
        for k in 0..(1440 / step_minutes) {
            let minute = (DEFAULT_BOUNDARY_HOUR * 60 + k * step_minutes) % 1440;
            let night = minute < 6 * 60;
            let awake = (8 * 60..22 * 60).contains(&minute);
            let steps = if awake { (40.0 + 20.0 * w + 10.0 * jitter.sample(&mut rng)).max(0.0) } else { 0.0 };
            let screen_on = if night { rng.random_bool(sigmoid(s - 1.0)) } else { rng.random_bool(0.5) };
            let plugged = night && rng.random_bool(sigmoid(2.0 * c));
            let light = if night {
                (5.0 + if screen_on { 120.0 } else { 0.0 } + 5.0 * jitter.sample(&mut rng)).max(0.0)
            } else {
                300.0 + 30.0 * jitter.sample(&mut rng)
            };
            let hr = 62.0 + if awake { 8.0 } else { 0.0 } + 0.05 * steps + 2.0 * jitter.sample(&mut rng);
            let timestamp = start + i64::from(k * step_minutes) * 60;
            for (channel, value) in [
                ("heart_rate", hr),
                ("steps", steps),
                ("light", light),
                ("screen_state", f64::from(u8::from(screen_on))),
                ("charging", f64::from(u8::from(plugged))),
            ] {
                if rng.random_bool(0.05) {
                    continue;
                }
                out.push(MinuteRecord {
                    subject: row.subject.clone(),
                    timestamp,
                    channel: channel.into(),
                    value,
                });
            }
        }
    }
    Ok(out)
}

/// Daily aggregates matching the channels of [`minute_trace`].
pub fn minute_aggregate_spec() -> AggregateSpec {
    let rules = serde_json::json!([
        {"channel": "heart_rate", "statistic": "mean", "kind": "plain"},
        {"channel": "heart_rate", "statistic": "std", "kind": "plain"},
        {"channel": "steps", "statistic": "sum", "kind": "plain"},
        {"channel": "heart_rate", "statistic": "mean", "kind": "interaction", "with": "steps"},
        {"name": "night_bright", "channel": "light", "statistic": "max",
         "window": {"start": "00:00", "end": "06:00"}, "kind": "event_flag", "op": "gt", "value": 100.0},
        {"name": "night_screen", "channel": "screen_state", "statistic": "mean",
         "window": {"start": "00:00", "end": "06:00"}, "kind": "plain"},
        {"name": "night_charging", "channel": "charging", "statistic": "mean",
         "window": {"start": "00:00", "end": "06:00"}, "kind": "plain"},
        {"channel": "screen_state", "statistic": "sum", "kind": "baseline_deviation"},
        {"channel": "steps", "statistic": "sum", "kind": "baseline_deviation"},
        {"channel": "light", "statistic": {"count_above": {"threshold": 50.0}}, "kind": "plain"}
    ]);
    AggregateSpec {
        rules: serde_json::from_value(rules).expect("static aggregate rules"),
    }
}
