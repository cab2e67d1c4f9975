//! Evaluation: binary classification metrics over {Buyer, Seller},
//! vote-split regression on the 17-vote scale, per-bucket breakdowns,
//! and the two run-stability tests (Cochran's Q, paired t).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::case::{VerdictLabel, JURY_SIZE};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no prediction records")]
    Empty,
    #[error("unknown breakdown axis {0:?}")]
    UnknownAxis(String),
    #[error("predicted split {buyer}:{seller} is inconsistent with label {label}")]
    InconsistentSplit {
        buyer: u32,
        seller: u32,
        label: VerdictLabel,
    },
    #[error("paired samples differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least {min} {what}")]
    TooFew { what: &'static str, min: usize },
}

/// One evaluated case: prediction vs ground truth plus the grouping keys
/// the breakdowns use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub case_id: String,
    pub predicted: VerdictLabel,
    /// (buyer, seller) on whatever jury size the run used.
    pub predicted_split: (u32, u32),
    pub actual: VerdictLabel,
    /// (buyer, seller) on the fixed 17-vote scale.
    pub actual_split: (u32, u32),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub difficulty: u32,
    pub rounds_used: usize,
    pub tokens_used: u64,
}

fn majority(split: (u32, u32)) -> VerdictLabel {
    // Seller needs a strict majority; ties go to the buyer.
    if split.1 > split.0 {
        VerdictLabel::Seller
    } else {
        VerdictLabel::Buyer
    }
}

impl PredictionRecord {
    /// Checks both splits agree with their labels under the strict-majority rule.
    pub fn validate(&self) -> Result<(), MetricsError> {
        for (split, label) in [
            (self.predicted_split, self.predicted),
            (self.actual_split, self.actual),
        ] {
            if majority(split) != label {
                return Err(MetricsError::InconsistentSplit {
                    buyer: split.0,
                    seller: split.1,
                    label,
                });
            }
        }
        Ok(())
    }
}

/// The headline numbers of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    pub macro_recall: f64,
    pub macro_precision: f64,
    pub mae: f64,
    pub rmse: f64,
    pub token_total: u64,
    pub cases: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct ClassCounts {
    tp: usize,
    fp: usize,
    fn_: usize,
    support: usize,
}

impl ClassCounts {
    fn precision(&self) -> f64 {
        divide_or_zero(self.tp as f64, (self.tp + self.fp) as f64)
    }
    fn recall(&self) -> f64 {
        divide_or_zero(self.tp as f64, (self.tp + self.fn_) as f64)
    }
    fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        divide_or_zero(2.0 * p * r, p + r)
    }
}

/// Per-class ratios with the zero-denominator convention: 0/0 is 0.
fn divide_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Accuracy plus macro/weighted precision, recall and F1 over the two
/// classes. Weighted F1 weights per-class F1 by actual-class support.
pub fn classification_metrics(
    records: &[PredictionRecord],
) -> Result<(f64, f64, f64, f64, f64), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut counts: BTreeMap<VerdictLabel, ClassCounts> = BTreeMap::new();
    counts.insert(VerdictLabel::Buyer, ClassCounts::default());
    counts.insert(VerdictLabel::Seller, ClassCounts::default());
    let mut correct = 0usize;
    for record in records {
        if record.predicted == record.actual {
            correct += 1;
            counts
                .get_mut(&record.actual)
                .expect("both classes present")
                .tp += 1;
        } else {
            counts.get_mut(&record.predicted).expect("present").fp += 1;
            counts.get_mut(&record.actual).expect("present").fn_ += 1;
        }
        counts.get_mut(&record.actual).expect("present").support += 1;
    }
    let accuracy = correct as f64 / records.len() as f64;
    let classes: Vec<&ClassCounts> = counts.values().collect();
    let macro_f1 = classes.iter().map(|c| c.f1()).sum::<f64>() / classes.len() as f64;
    let macro_recall = classes.iter().map(|c| c.recall()).sum::<f64>() / classes.len() as f64;
    let macro_precision = classes.iter().map(|c| c.precision()).sum::<f64>() / classes.len() as f64;
    let weighted_f1 = classes
        .iter()
        .map(|c| c.f1() * c.support as f64)
        .sum::<f64>()
        / records.len() as f64;
    Ok((
        accuracy,
        weighted_f1,
        macro_f1,
        macro_recall,
        macro_precision,
    ))
}

/// Seller-count error on the 17-vote scale: the predicted seller count is
/// rescaled by 17/N when the simulated jury size differs. The buyer count
/// is complementary, so measuring one side loses nothing.
pub fn vote_regression(records: &[PredictionRecord]) -> Result<(f64, f64), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for record in records {
        let n = (record.predicted_split.0 + record.predicted_split.1) as f64;
        let scale = if n == 0.0 {
            0.0
        } else {
            f64::from(JURY_SIZE) / n
        };
        let predicted_seller = f64::from(record.predicted_split.1) * scale;
        let error = predicted_seller - f64::from(record.actual_split.1);
        abs_sum += error.abs();
        sq_sum += error * error;
    }
    let count = records.len() as f64;
    Ok((abs_sum / count, (sq_sum / count).sqrt()))
}

/// Compute the full report in one pass.
pub fn metrics_report(records: &[PredictionRecord]) -> Result<MetricsReport, MetricsError> {
    let (accuracy, weighted_f1, macro_f1, macro_recall, macro_precision) =
        classification_metrics(records)?;
    let (mae, rmse) = vote_regression(records)?;
    Ok(MetricsReport {
        accuracy,
        weighted_f1,
        macro_f1,
        macro_recall,
        macro_precision,
        mae,
        rmse,
        token_total: records.iter().map(|r| r.tokens_used).sum(),
        cases: records.len(),
    })
}

/// Grouping axes for accuracy breakdowns. Margin axes merge symmetric
/// splits (b:s with s:b) by taking the absolute difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownAxis {
    Category,
    Difficulty,
    PredictedMargin,
    GroundMargin,
}

impl BreakdownAxis {
    pub fn parse(s: &str) -> Result<Self, MetricsError> {
        match s {
            "category" => Ok(BreakdownAxis::Category),
            "difficulty" => Ok(BreakdownAxis::Difficulty),
            "predicted_margin" => Ok(BreakdownAxis::PredictedMargin),
            "ground_margin" => Ok(BreakdownAxis::GroundMargin),
            other => Err(MetricsError::UnknownAxis(other.to_string())),
        }
    }

    pub const ALL: [BreakdownAxis; 4] = [
        BreakdownAxis::Category,
        BreakdownAxis::Difficulty,
        BreakdownAxis::PredictedMargin,
        BreakdownAxis::GroundMargin,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BreakdownAxis::Category => "category",
            BreakdownAxis::Difficulty => "difficulty",
            BreakdownAxis::PredictedMargin => "predicted_margin",
            BreakdownAxis::GroundMargin => "ground_margin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub bucket: String,
    pub cases: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Per-bucket accuracy along one axis. Buckets with zero cases simply do
/// not appear.
pub fn breakdown(records: &[PredictionRecord], axis: BreakdownAxis) -> Vec<BreakdownRow> {
    let mut buckets: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for record in records {
        let key = match axis {
            BreakdownAxis::Category => record
                .category
                .clone()
                .unwrap_or_else(|| "(unlabeled)".to_string()),
            BreakdownAxis::Difficulty => format!("{:02}", record.difficulty),
            BreakdownAxis::PredictedMargin => {
                format!(
                    "{:02}",
                    record.predicted_split.0.abs_diff(record.predicted_split.1)
                )
            }
            BreakdownAxis::GroundMargin => {
                format!(
                    "{:02}",
                    record.actual_split.0.abs_diff(record.actual_split.1)
                )
            }
        };
        let entry = buckets.entry(key).or_insert((0, 0));
        entry.0 += 1;
        if record.predicted == record.actual {
            entry.1 += 1;
        }
    }
    buckets
        .into_iter()
        .map(|(bucket, (cases, correct))| BreakdownRow {
            bucket,
            cases,
            correct,
            accuracy: correct as f64 / cases as f64,
        })
        .collect()
}

/// Cochran's Q over a cases x runs binary-correctness matrix. Returns the
/// Q statistic and its chi-square p-value with (runs - 1) degrees of
/// freedom. Fully degenerate matrices (every case constant across runs)
/// yield Q = 0, p = 1.
pub fn cochran_q(outcomes: &[Vec<bool>]) -> Result<(f64, f64), MetricsError> {
    if outcomes.len() < 2 {
        return Err(MetricsError::TooFew {
            what: "cases",
            min: 2,
        });
    }
    let runs = outcomes[0].len();
    if runs < 2 {
        return Err(MetricsError::TooFew {
            what: "runs",
            min: 2,
        });
    }
    if outcomes.iter().any(|row| row.len() != runs) {
        return Err(MetricsError::LengthMismatch {
            a: runs,
            b: outcomes
                .iter()
                .map(Vec::len)
                .find(|l| *l != runs)
                .unwrap_or(runs),
        });
    }

    let k = runs as f64;
    let column_totals: Vec<f64> = (0..runs)
        .map(|j| outcomes.iter().filter(|row| row[j]).count() as f64)
        .collect();
    let grand_total: f64 = column_totals.iter().sum();
    let row_sq_sum: f64 = outcomes
        .iter()
        .map(|row| {
            let r = row.iter().filter(|x| **x).count() as f64;
            r * r
        })
        .sum();
    let numerator = (k - 1.0)
        * (k * column_totals.iter().map(|c| c * c).sum::<f64>() - grand_total * grand_total);
    let denominator = k * grand_total - row_sq_sum;
    if denominator == 0.0 {
        return Ok((0.0, 1.0));
    }
    let q = numerator / denominator;
    let chi = ChiSquared::new(k - 1.0).expect("positive degrees of freedom");
    let p = 1.0 - chi.cdf(q);
    Ok((q, p))
}

/// Paired t-test outcome. A zero-variance difference vector cannot produce
/// a finite statistic and is flagged instead of returning infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PairedTResult {
    Statistic { t: f64, p: f64 },
    ZeroVariance { mean_diff: f64 },
}

/// Two-sided paired t-test with n-1 degrees of freedom.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<PairedTResult, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(MetricsError::TooFew {
            what: "paired samples",
            min: 2,
        });
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let variance = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if variance == 0.0 {
        return Ok(PairedTResult::ZeroVariance { mean_diff: mean });
    }
    let t = mean / (variance.sqrt() / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive degrees of freedom");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(PairedTResult::Statistic { t, p })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(
        id: &str,
        predicted: VerdictLabel,
        pred_seller: u32,
        actual: VerdictLabel,
        actual_seller: u32,
    ) -> PredictionRecord {
        PredictionRecord {
            case_id: id.to_string(),
            predicted,
            predicted_split: (17 - pred_seller, pred_seller),
            actual,
            actual_split: (17 - actual_seller, actual_seller),
            category: None,
            difficulty: (17 - actual_seller).abs_diff(actual_seller),
            rounds_used: 1,
            tokens_used: 100,
        }
    }

    use VerdictLabel::{Buyer, Seller};

    #[test]
    fn all_correct_is_all_ones() {
        let records = vec![
            rec("a", Seller, 12, Seller, 12),
            rec("b", Buyer, 5, Buyer, 5),
        ];
        let (acc, wf1, mf1, mr, mp) = classification_metrics(&records).unwrap();
        assert_eq!((acc, wf1, mf1, mr, mp), (1.0, 1.0, 1.0, 1.0, 1.0));
    }

    /// Confusion fixture TP_s=3, FN_s=1, FP_s=1, TN_s=3 over 8 cases.
    fn confusion_fixture() -> Vec<PredictionRecord> {
        let mut records = Vec::new();
        for i in 0..3 {
            records.push(rec(&format!("tp{i}"), Seller, 12, Seller, 12));
        }
        records.push(rec("fn0", Buyer, 5, Seller, 12));
        records.push(rec("fp0", Seller, 12, Buyer, 5));
        for i in 0..3 {
            records.push(rec(&format!("tn{i}"), Buyer, 5, Buyer, 5));
        }
        records
    }

    #[test]
    fn confusion_fixture_gives_075_accuracy_and_macro_f1() {
        let (acc, wf1, mf1, mr, mp) = classification_metrics(&confusion_fixture()).unwrap();
        assert!((acc - 0.75).abs() < 1e-12);
        assert!((mf1 - 0.75).abs() < 1e-12);
        assert!(
            (wf1 - 0.75).abs() < 1e-12,
            "equal supports make weighted = macro"
        );
        assert!((mr - 0.75).abs() < 1e-12);
        assert!((mp - 0.75).abs() < 1e-12);
    }

    #[test]
    fn all_predicted_seller_zeroes_buyer_f1() {
        let records = vec![
            rec("a", Seller, 12, Seller, 12),
            rec("b", Seller, 12, Seller, 12),
            rec("c", Seller, 12, Buyer, 5),
            rec("d", Seller, 12, Buyer, 5),
        ];
        let (acc, _, mf1, _, _) = classification_metrics(&records).unwrap();
        assert!((acc - 0.5).abs() < 1e-12);
        // Buyer F1 is 0 by the zero-denominator rule; seller F1 = 2/3.
        assert!((mf1 - (0.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_splits_give_zero_errors() {
        let records = vec![
            rec("a", Seller, 12, Seller, 12),
            rec("b", Buyer, 5, Buyer, 5),
        ];
        let (mae, rmse) = vote_regression(&records).unwrap();
        assert_eq!((mae, rmse), (0.0, 0.0));
    }

    #[test]
    fn seller_count_errors_2_8_3_8() {
        // Actual seller counts all 9; predictions off by 2, 8, 3, 8.
        let records = vec![
            rec("a", Seller, 11, Seller, 9),
            rec("b", Seller, 17, Seller, 9),
            rec("c", Seller, 12, Seller, 9),
            rec("d", Seller, 17, Seller, 9),
        ];
        let (mae, rmse) = vote_regression(&records).unwrap();
        assert!((mae - 5.25).abs() < 1e-12);
        // Oracle: sqrt((4 + 64 + 9 + 64) / 4) = sqrt(35.25)
        assert!((rmse - 35.25f64.sqrt()).abs() < 1e-12);
        assert!(rmse >= mae);
    }

    #[test]
    fn single_case_mae_equals_rmse() {
        let records = vec![rec("a", Seller, 12, Seller, 9)];
        let (mae, rmse) = vote_regression(&records).unwrap();
        assert!((mae - 3.0).abs() < 1e-12);
        assert!((rmse - 3.0).abs() < 1e-12);
    }

    #[test]
    fn non_17_jury_is_rescaled() {
        // 5-juror run predicting 4 seller of 5 -> 13.6 on the 17 scale.
        let record = PredictionRecord {
            case_id: "a".into(),
            predicted: Seller,
            predicted_split: (1, 4),
            actual: Seller,
            actual_split: (8, 9),
            category: None,
            difficulty: 1,
            rounds_used: 1,
            tokens_used: 0,
        };
        let (mae, _) = vote_regression(&[record]).unwrap();
        assert!((mae - (4.0 * 17.0 / 5.0 - 9.0)).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_order_invariant() {
        let mut records = confusion_fixture();
        let forward = metrics_report(&records).unwrap();
        records.reverse();
        let backward = metrics_report(&records).unwrap();
        assert_eq!(forward, backward);
    }

    #[test]
    fn split_label_consistency_is_checked() {
        let good = rec("a", Seller, 12, Seller, 12);
        good.validate().unwrap();
        let bad = PredictionRecord {
            predicted: Buyer,
            ..good
        };
        assert!(matches!(
            bad.validate(),
            Err(MetricsError::InconsistentSplit { .. })
        ));
    }

    #[test]
    fn single_bucket_breakdown_equals_overall_accuracy() {
        let records = confusion_fixture();
        let rows = breakdown(&records, BreakdownAxis::Category);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bucket, "(unlabeled)");
        assert!((rows[0].accuracy - 0.75).abs() < 1e-12);
    }

    #[test]
    fn difficulty_buckets_split_correctness() {
        let records = vec![
            rec("a", Seller, 12, Seller, 12), // margin 7, correct
            rec("b", Seller, 12, Seller, 12), // margin 7, correct
            rec("c", Buyer, 5, Seller, 9),    // margin 1, wrong
        ];
        let rows = breakdown(&records, BreakdownAxis::Difficulty);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].bucket, "01");
        assert_eq!(rows[0].accuracy, 0.0);
        assert_eq!(rows[1].bucket, "07");
        assert_eq!(rows[1].accuracy, 1.0);
    }

    #[test]
    fn margin_buckets_merge_symmetric_splits() {
        let records = vec![
            rec("a", Seller, 12, Seller, 12), // actual 5:12, margin 7
            rec("b", Buyer, 5, Buyer, 5),     // actual 12:5, margin 7
        ];
        let rows = breakdown(&records, BreakdownAxis::GroundMargin);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bucket, "07");
        assert_eq!(rows[0].cases, 2);
    }

    #[test]
    fn unknown_axis_is_rejected() {
        assert!(matches!(
            BreakdownAxis::parse("vibe"),
            Err(MetricsError::UnknownAxis(a)) if a == "vibe"
        ));
        assert_eq!(
            BreakdownAxis::parse("ground_margin").unwrap(),
            BreakdownAxis::GroundMargin
        );
    }

    #[test]
    fn cochran_q_identical_runs_is_degenerate() {
        let outcomes: Vec<Vec<bool>> = (0..6).map(|i| vec![i % 2 == 0; 3]).collect();
        let (q, p) = cochran_q(&outcomes).unwrap();
        assert_eq!(q, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn cochran_q_matches_direct_formula_on_fixture() {
        // 6 cases x 3 runs with mixed outcomes.
        let m = [
            [true, true, false],
            [true, false, false],
            [true, true, true],
            [false, false, false],
            [true, true, false],
            [false, true, false],
        ];
        let outcomes: Vec<Vec<bool>> = m.iter().map(|r| r.to_vec()).collect();
        let (q, p) = cochran_q(&outcomes).unwrap();

        // Oracle: the variance form Q = k(k-1) sum_j (C_j - N/k)^2 / (k N - sum R_i^2).
        let k = 3.0;
        let c: Vec<f64> = (0..3)
            .map(|j| outcomes.iter().filter(|r| r[j]).count() as f64)
            .collect();
        let n: f64 = c.iter().sum();
        let r_sq: f64 = outcomes
            .iter()
            .map(|r| (r.iter().filter(|x| **x).count() as f64).powi(2))
            .sum();
        let expected =
            k * (k - 1.0) * c.iter().map(|cj| (cj - n / k).powi(2)).sum::<f64>() / (k * n - r_sq);
        assert!((q - expected).abs() < 1e-9, "q={q} expected={expected}");
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn five_identical_runs_of_mixed_correctness_give_p_one() {
        let outcomes: Vec<Vec<bool>> = (0..10).map(|i| vec![i < 4; 5]).collect();
        let (q, p) = cochran_q(&outcomes).unwrap();
        assert_eq!(q, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn paired_t_flags_zero_variance() {
        let a = [0.6, 0.7, 0.65, 0.72, 0.69];
        assert_eq!(
            paired_t(&a, &a).unwrap(),
            PairedTResult::ZeroVariance { mean_diff: 0.0 }
        );
        let b: Vec<f64> = a.iter().map(|x| x - 1.0).collect();
        match paired_t(&a, &b).unwrap() {
            PairedTResult::ZeroVariance { mean_diff } => assert!((mean_diff - 1.0).abs() < 1e-12),
            other => panic!("expected zero-variance flag, got {other:?}"),
        }
    }

    #[test]
    fn paired_t_matches_direct_formula_on_fixture() {
        let a = [0.70, 0.72, 0.68, 0.75, 0.71];
        let b = [0.65, 0.70, 0.66, 0.69, 0.68];
        let result = paired_t(&a, &b).unwrap();

        // Oracle: direct evaluation of t = dbar / (s_d / sqrt(n)).
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected_t = mean / (sd / n.sqrt());

        match result {
            PairedTResult::Statistic { t, p } => {
                assert!((t - expected_t).abs() < 1e-9);
                assert!(p > 0.0 && p < 1.0);
            }
            other => panic!("expected a statistic, got {other:?}"),
        }
    }

    #[test]
    fn paired_t_rejects_mismatched_lengths() {
        assert!(matches!(
            paired_t(&[1.0, 2.0], &[1.0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }
}
