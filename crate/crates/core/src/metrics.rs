//! Confusion matrices, per-class and averaged F1, replicate summaries.

use serde::{Deserialize, Serialize};

use crate::data::LabelSet;
use crate::error::{Error, Result};

/// Rows are gold labels, columns predictions, both in label-set order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: &LabelSet) -> Self {
        let k = labels.len();
        Self {
            labels: labels.labels().to_vec(),
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_ids(golds: &[usize], preds: &[usize], labels: &LabelSet) -> Result<Self> {
        if golds.len() != preds.len() {
            return Err(Error::Shape {
                expected: golds.len(),
                got: preds.len(),
            });
        }
        let mut m = Self::zeros(labels);
        let k = labels.len();
        for (&g, &p) in golds.iter().zip(preds) {
            if g >= k || p >= k {
                return Err(Error::Shape {
                    expected: k,
                    got: g.max(p) + 1,
                });
            }
            m.counts[g][p] += 1;
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion<S: AsRef<str>>(golds: &[S], preds: &[S], labels: &LabelSet) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::Shape {
            expected: golds.len(),
            got: preds.len(),
        });
    }
    let g: Vec<usize> = golds
        .iter()
        .map(|l| labels.index_of(l.as_ref()))
        .collect::<Result<_>>()?;
    let p: Vec<usize> = preds
        .iter()
        .map(|l| labels.index_of(l.as_ref()))
        .collect::<Result<_>>()?;
    ConfusionMatrix::from_ids(&g, &p, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: u64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Metrics from a confusion matrix. Any 0/0 precision, recall or F1 is 0.
pub fn report(matrix: &ConfusionMatrix) -> Result<EvalReport> {
    let n = matrix.total();
    if n == 0 {
        return Err(Error::EmptyEval);
    }
    let k = matrix.counts.len();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = matrix.counts[c][c];
            let support: u64 = matrix.counts[c].iter().sum();
            let predicted: u64 = (0..k).map(|r| matrix.counts[r][c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                label: matrix.labels[c].clone(),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / k as f64;
    let weighted_f1 = per_class.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / n as f64;
    Ok(EvalReport {
        n,
        accuracy: ratio(matrix.trace(), n),
        macro_f1,
        weighted_f1,
        per_class,
        confusion: matrix.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    MacroF1,
    WeightedF1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Accuracy, Metric::MacroF1, Metric::WeightedF1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::MacroF1 => "macro_f1",
            Metric::WeightedF1 => "weighted_f1",
        }
    }

    pub fn of(self, r: &EvalReport) -> f64 {
        match self {
            Metric::Accuracy => r.accuracy,
            Metric::MacroF1 => r.macro_f1,
            Metric::WeightedF1 => r.weighted_f1,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric `{s}` (expected accuracy, macro_f1 or weighted_f1)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation (n - 1); zero for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }

    /// Percent with one decimal, `90.7±1.4`.
    pub fn percent(&self) -> String {
        format!("{:.1}±{:.1}", self.mean * 100.0, self.std * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub replicates: usize,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    pub weighted_f1: MeanStd,
    /// Always `"sample"`: the n - 1 denominator.
    pub std_kind: String,
}

impl ReplicateSummary {
    pub fn get(&self, metric: Metric) -> MeanStd {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::MacroF1 => self.macro_f1,
            Metric::WeightedF1 => self.weighted_f1,
        }
    }
}

pub fn aggregate_replicates(reports: &[EvalReport]) -> Result<ReplicateSummary> {
    let first = reports.first().ok_or(Error::EmptyEval)?;
    if let Some(bad) = reports.iter().find(|r| r.confusion.labels != first.confusion.labels) {
        return Err(Error::LabelSet(format!(
            "replicate label sets differ: {:?} vs {:?}",
            first.confusion.labels, bad.confusion.labels
        )));
    }
    let col = |m: Metric| MeanStd::of(&reports.iter().map(|r| m.of(r)).collect::<Vec<_>>());
    Ok(ReplicateSummary {
        replicates: reports.len(),
        accuracy: col(Metric::Accuracy),
        macro_f1: col(Metric::MacroF1),
        weighted_f1: col(Metric::WeightedF1),
        std_kind: "sample".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> LabelSet {
        LabelSet::new("t", ["A", "B"]).unwrap()
    }

    #[test]
    fn hand_counted_confusion_and_report() {
        let m = confusion(&["A", "A", "A", "B"], &["A", "A", "B", "B"], &ab()).unwrap();
        assert_eq!(m.counts, vec![vec![2, 1], vec![0, 1]]);
        let r = report(&m).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert!((r.per_class[0].f1 - 0.8).abs() < 1e-12);
        assert!((r.per_class[1].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.macro_f1 - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((r.weighted_f1 - (0.75 * 0.8 + 0.25 * 2.0 / 3.0)).abs() < 1e-12);
        assert!((r.macro_f1 - 0.7333).abs() < 1e-4);
        assert!((r.weighted_f1 - 0.7667).abs() < 1e-4);
    }

    #[test]
    fn diagonal_on_perfect_predictions() {
        let m = confusion(&["A", "B", "B"], &["A", "B", "B"], &ab()).unwrap();
        assert_eq!(m.counts, vec![vec![1, 0], vec![0, 2]]);
        let r = report(&m).unwrap();
        assert_eq!((r.accuracy, r.macro_f1, r.weighted_f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_wrong_is_zero() {
        let r = report(&confusion(&["A", "B"], &["B", "A"], &ab()).unwrap()).unwrap();
        assert_eq!((r.accuracy, r.macro_f1, r.weighted_f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_inputs() {
        let m = confusion::<&str>(&[], &[], &ab()).unwrap();
        assert_eq!(m.total(), 0);
        assert!(matches!(report(&m), Err(Error::EmptyEval)));
    }

    #[test]
    fn input_errors() {
        assert!(confusion(&["A"], &["A", "B"], &ab()).is_err());
        assert!(confusion(&["A"], &["C"], &ab()).is_err());
    }

    fn with_accuracy(acc: f64) -> EvalReport {
        let mut r = report(&confusion(&["A"], &["A"], &ab()).unwrap()).unwrap();
        r.accuracy = acc;
        r
    }

    #[test]
    fn replicate_mean_and_sample_std() {
        let s = aggregate_replicates(&[with_accuracy(0.8), with_accuracy(0.9), with_accuracy(1.0)]).unwrap();
        assert!((s.accuracy.mean - 0.9).abs() < 1e-12);
        assert!((s.accuracy.std - 0.1).abs() < 1e-12);
        let one = aggregate_replicates(&[with_accuracy(0.7)]).unwrap();
        assert_eq!(one.accuracy, MeanStd { mean: 0.7, std: 0.0 });
        assert!(aggregate_replicates(&[]).is_err());
    }

    #[test]
    fn replicate_label_mismatch() {
        let other = LabelSet::new("t", ["A", "C"]).unwrap();
        let r2 = report(&confusion(&["A"], &["A"], &other).unwrap()).unwrap();
        assert!(aggregate_replicates(&[with_accuracy(0.5), r2]).is_err());
    }

    #[test]
    fn percent_format() {
        assert_eq!(
            MeanStd {
                mean: 0.9066,
                std: 0.0138
            }
            .percent(),
            "90.7±1.4"
        );
    }

    #[test]
    fn metric_names_parse() {
        assert_eq!("macro_f1".parse::<Metric>().unwrap(), Metric::MacroF1);
        assert!("mcc".parse::<Metric>().is_err());
    }
}
