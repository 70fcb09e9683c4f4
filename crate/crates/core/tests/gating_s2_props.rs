use chrono::NaiveDate;
use proptest::prelude::*;
use sasl_core::data::{FeatureSpec, Observation, ObservationTable, TargetSpec, Timestamp};
use sasl_core::gating::{gate_predictions, z_profile};
use sasl_core::s2::{aggregate_daily, analysis_day, kst, reindex_analysis_days, ImputationPolicy, MinuteRecord};
use sasl_core::synthetic::minute_aggregate_spec;

const CHANNELS: [&str; 5] = ["heart_rate", "steps", "light", "screen_state", "charging"];
/// 2024-01-01T00:00:00Z
const T0: i64 = 1_704_067_200;

fn records() -> impl Strategy<Value = Vec<MinuteRecord>> {
    proptest::collection::vec((0usize..3, 0i64..6 * 1440, 0usize..5, 0.0f64..200.0), 1..300).prop_map(|raw| {
        raw.into_iter()
            .map(|(s, m, c, v)| MinuteRecord {
                subject: format!("id{}", s + 1),
                timestamp: T0 + 60 * m,
                channel: CHANNELS[c].to_string(),
                value: v.round(),
            })
            .collect()
    })
}

fn gate_case() -> impl Strategy<Value = (Vec<u8>, Vec<u8>, Vec<f64>)> {
    (1usize..120).prop_flat_map(|n| {
        (
            proptest::collection::vec(0u8..3, n),
            proptest::collection::vec(0u8..3, n),
            proptest::collection::vec(0.5f64..=1.0, n),
        )
    })
}

fn day_of(row: &Observation) -> NaiveDate {
    match row.timestamp {
        Timestamp::Date(d) => d,
        Timestamp::Epoch(_) => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gate_touches_only_confident_disagreements((p, s, c) in gate_case(), tau in 0.5f64..=1.0) {
        let out = gate_predictions(&p, &s, &c, tau).unwrap();
        let disagreements: Vec<usize> = (0..p.len()).filter(|&i| p[i] != s[i]).collect();
        prop_assert_eq!(out.decisions.iter().map(|d| d.row).collect::<Vec<_>>(), disagreements);
        for i in 0..p.len() {
            let want = if p[i] != s[i] && c[i] >= tau { s[i] } else { p[i] };
            prop_assert_eq!(out.labels[i], want);
        }
        prop_assert_eq!(out.overrides, out.decisions.iter().filter(|d| d.final_label != d.primary).count());
        let mut buf = Vec::new();
        out.write_jsonl(&mut buf).unwrap();
        prop_assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), out.decisions.len());
    }

    #[test]
    fn overrides_shrink_as_tau_grows((p, s, c) in gate_case(), a in 0.5f64..=1.0, b in 0.5f64..=1.0) {
        let (lo, hi) = (a.min(b), a.max(b));
        let loose = gate_predictions(&p, &s, &c, lo).unwrap();
        let strict = gate_predictions(&p, &s, &c, hi).unwrap();
        prop_assert!(strict.overrides <= loose.overrides);
    }

    #[test]
    fn every_record_lands_in_one_day(recs in records(), hour in 0u32..24) {
        let tz = kst();
        let days = reindex_analysis_days(&recs, hour, tz).unwrap();
        prop_assert_eq!(days.groups.values().map(Vec::len).sum::<usize>(), recs.len());
        for (key, group) in &days.groups {
            for r in group {
                prop_assert_eq!(&r.subject, &key.subject);
                prop_assert_eq!(analysis_day(r.timestamp, hour, tz).unwrap(), key.day);
            }
        }
    }

    #[test]
    fn one_row_per_day(recs in records(), ffill in any::<bool>()) {
        let days = reindex_analysis_days(&recs, 16, kst()).unwrap();
        let policy = if ffill { ImputationPolicy::ForwardFill } else { ImputationPolicy::ZeroFill };
        let table = aggregate_daily(&days, &minute_aggregate_spec(), policy).unwrap();
        prop_assert_eq!(table.n_rows(), days.groups.len());
        prop_assert!(table.rows().iter().all(|r| r.features.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn later_records_never_move_earlier_days(recs in records(), cut in 0i64..6, bump in 1.0f64..50.0) {
        let tz = kst();
        let cutoff = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Duration::days(cut);
        let moved: Vec<MinuteRecord> = recs
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if analysis_day(r.timestamp, 16, tz).unwrap() > cutoff {
                    r.value += bump;
                }
                r
            })
            .collect();
        let agg = |rs: &[MinuteRecord]| {
            aggregate_daily(&reindex_analysis_days(rs, 16, tz).unwrap(), &minute_aggregate_spec(), ImputationPolicy::ForwardFill)
                .unwrap()
        };
        let (a, b) = (agg(&recs), agg(&moved));
        for (x, y) in a.rows().iter().zip(b.rows()) {
            prop_assert_eq!(x.key(), y.key());
            if day_of(x) <= cutoff {
                prop_assert_eq!(&x.features, &y.features);
            }
        }
    }

    #[test]
    fn whole_table_has_zero_profile(values in proptest::collection::vec(-10.0f64..10.0, 3..40)) {
        prop_assume!(values.iter().any(|v| *v != values[0]));
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Observation {
                subject: "id1".into(),
                timestamp: Timestamp::Date(start + chrono::Duration::days(i as i64)),
                features: vec![v],
                targets: vec![Some(0)],
            })
            .collect();
        let table = ObservationTable::new(vec![FeatureSpec::continuous("f")], vec![TargetSpec::new("t", 2)], rows).unwrap();
        let all: Vec<usize> = (0..values.len()).collect();
        let z = z_profile(&table, &all, &all, &["f".to_string()]).unwrap();
        prop_assert!(z.entries[0].z.abs() < 1e-12);
        prop_assert_eq!(z.group_size, values.len());
    }
}
