use serde::{Deserialize, Serialize};

use super::table::ObservationTable;
use crate::error::{Error, Result};

/// One chronological fold over the rows of a table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_id: u8,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

/// Splits every subject's timeline at its median timestamp. Rows at or
/// before the median form the early segment. Fold 1 trains on early rows
/// and validates on late rows; fold 2 swaps the roles.
pub fn chrono_split(table: &ObservationTable) -> Result<(FoldSplit, FoldSplit)> {
    let mut early = Vec::new();
    let mut late = Vec::new();
    for (subject, rows) in table.rows_by_subject() {
        if rows.len() < 2 {
            return Err(Error::SubjectTooShort(subject));
        }
        // Twice the median in seconds keeps the even-count case integral.
        let ts: Vec<i128> = rows
            .iter()
            .map(|&i| i128::from(table.rows()[i].timestamp.epoch_seconds()))
            .collect();
        let n = ts.len();
        let doubled_median = if n % 2 == 1 {
            2 * ts[n / 2]
        } else {
            ts[n / 2 - 1] + ts[n / 2]
        };
        for (&i, &t) in rows.iter().zip(&ts) {
            if 2 * t <= doubled_median {
                early.push(i);
            } else {
                late.push(i);
            }
        }
    }
    early.sort_unstable();
    late.sort_unstable();
    Ok((
        FoldSplit {
            fold_id: 1,
            train: early.clone(),
            valid: late.clone(),
        },
        FoldSplit {
            fold_id: 2,
            train: late,
            valid: early,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, Observation, TargetSpec, Timestamp};

    fn table(spec: &[(&str, &[i64])]) -> ObservationTable {
        let mut rows = Vec::new();
        for (s, ts) in spec {
            for &t in *ts {
                rows.push(Observation {
                    subject: s.to_string(),
                    timestamp: Timestamp::Epoch(t),
                    features: vec![0.0],
                    targets: vec![],
                });
            }
        }
        ObservationTable::new(vec![FeatureSpec::continuous("x")], Vec::<TargetSpec>::new(), rows).unwrap()
    }

    fn stamps(t: &ObservationTable, idx: &[usize]) -> Vec<i64> {
        idx.iter().map(|&i| t.rows()[i].timestamp.epoch_seconds()).collect()
    }

    #[test]
    fn even_count() {
        let t = table(&[("A", &[1, 2, 3, 4])]);
        let (f1, f2) = chrono_split(&t).unwrap();
        assert_eq!(stamps(&t, &f1.train), vec![1, 2]);
        assert_eq!(stamps(&t, &f1.valid), vec![3, 4]);
        assert_eq!(f2.train, f1.valid);
        assert_eq!(f2.valid, f1.train);
    }

    #[test]
    fn odd_count_median_goes_early() {
        let t = table(&[("A", &[1, 2, 3, 4, 5])]);
        let (f1, _) = chrono_split(&t).unwrap();
        // direct enumeration of the "<= median" rule
        let median = 3;
        let expected: Vec<i64> = [1, 2, 3, 4, 5].into_iter().filter(|&x| x <= median).collect();
        assert_eq!(stamps(&t, &f1.train), expected);
        assert_eq!(stamps(&t, &f1.valid), vec![4, 5]);
    }

    #[test]
    fn both_subjects_in_each_fold() {
        let t = table(&[("A", &[1, 2, 3]), ("B", &[10, 20])]);
        let (f1, f2) = chrono_split(&t).unwrap();
        for f in [&f1, &f2] {
            let subjects: std::collections::BTreeSet<_> =
                f.train.iter().map(|&i| t.rows()[i].subject.clone()).collect();
            assert_eq!(subjects.len(), 2);
            assert_eq!(f.train.len() + f.valid.len(), t.n_rows());
        }
    }

    #[test]
    fn short_subject() {
        let t = table(&[("A", &[1, 2]), ("B", &[5])]);
        assert!(matches!(chrono_split(&t), Err(Error::SubjectTooShort(s)) if s == "B"));
    }
}
