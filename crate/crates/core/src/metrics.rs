//! Confusion-matrix rates, ROC/AUC and cross-entropy loss.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::corpus::Label;
use crate::{Error, Result, Scalar};

/// Counts with spam as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same counts seen with ham as the positive class.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }

    pub fn from_labels(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                found: predicted.len(),
            });
        }
        let mut m = ConfusionMatrix::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (Label::Spam, Label::Spam) => m.tp += 1,
                (Label::Ham, Label::Spam) => m.fp += 1,
                (Label::Ham, Label::Ham) => m.tn += 1,
                (Label::Spam, Label::Ham) => m.fn_ += 1,
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub accuracy: T,
    /// Set when any ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio<T: Scalar>(num: usize, den: usize, degenerate: &mut bool) -> T {
    if den == 0 {
        *degenerate = true;
        T::zero()
    } else {
        T::from_count(num) / T::from_count(den)
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score<T: Scalar>(precision: T, recall: T) -> T {
    let s = precision + recall;
    if s == T::zero() {
        T::zero()
    } else {
        (T::one() + T::one()) * precision * recall / s
    }
}

pub fn compute_metrics<T: Scalar>(m: &ConfusionMatrix) -> Result<Metrics<T>> {
    if m.total() == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let mut degenerate = false;
    let precision = ratio(m.tp, m.tp + m.fp, &mut degenerate);
    let recall = ratio(m.tp, m.tp + m.fn_, &mut degenerate);
    if precision + recall == T::zero() {
        degenerate = true;
    }
    Ok(Metrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
        accuracy: T::from_count(m.tp + m.tn) / T::from_count(m.total()),
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve<T> {
    pub auc: T,
    /// `(fpr, tpr)` points from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(T, T)>,
}

/// ROC over spam scores. Equal scores form a single threshold step.
pub fn roc_auc<T: Scalar>(scores: &[(T, Label)]) -> Result<RocCurve<T>> {
    if scores.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let pos = scores.iter().filter(|(_, l)| *l == Label::Spam).count();
    let neg = scores.len() - pos;
    if pos == 0 {
        return Err(Error::SingleClass("ham"));
    }
    if neg == 0 {
        return Err(Error::SingleClass("spam"));
    }
    let mut sorted: Vec<(T, Label)> = scores.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("NaN rejected above"));

    let (p, n) = (T::from_count(pos), T::from_count(neg));
    let mut points = vec![(T::zero(), T::zero())];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = T::zero();
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            match sorted[i].1 {
                Label::Spam => tp += 1,
                Label::Ham => fp += 1,
            }
            i += 1;
        }
        let (x0, y0) = *points.last().expect("starts non-empty");
        let (x1, y1) = (T::from_count(fp) / n, T::from_count(tp) / p);
        auc = auc + (x1 - x0) * (y0 + y1) / (T::one() + T::one());
        points.push((x1, y1));
    }
    Ok(RocCurve { auc, points })
}

/// Clamp applied before the logarithm; widened for `f32`, where `1 - 1e-15 == 1`.
pub fn log_loss_clamp<T: Scalar>() -> T {
    T::from_f64_lossy(1e-15).max(T::epsilon())
}

/// Mean binary cross-entropy of `(true label, p_spam)` pairs.
pub fn log_loss<T: Scalar>(pairs: &[(Label, T)]) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::Empty("log-loss pairs"));
    }
    let eps = log_loss_clamp::<T>();
    let mut total = T::zero();
    for &(y, p) in pairs {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        let p = p.max(eps).min(T::one() - eps);
        total = total
            - match y {
                Label::Spam => p.ln(),
                Label::Ham => (T::one() - p).ln(),
            };
    }
    Ok(total / T::from_count(pairs.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<T> {
    pub ham: ClassMetrics<T>,
    pub spam: ClassMetrics<T>,
    pub accuracy: T,
    pub auc: T,
    pub log_loss: T,
    pub confusion: ConfusionMatrix,
}

pub const REPORT_FORMAT: &str = "dcf-eval-report/1";

impl<T: Scalar> EvalReport<T> {
    /// `p_spam[i]` scores message `i`; `predicted` holds the hard decisions.
    pub fn from_predictions(truth: &[Label], predicted: &[Label], p_spam: &[T]) -> Result<Self> {
        if truth.len() != p_spam.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                found: p_spam.len(),
            });
        }
        let confusion = ConfusionMatrix::from_labels(truth, predicted)?;
        let spam = compute_metrics::<T>(&confusion)?;
        let ham = compute_metrics::<T>(&confusion.swapped())?;
        let scores: Vec<(T, Label)> = p_spam.iter().copied().zip(truth.iter().copied()).collect();
        let pairs: Vec<(Label, T)> = truth.iter().copied().zip(p_spam.iter().copied()).collect();
        let per_class = |m: Metrics<T>| ClassMetrics {
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            degenerate: m.degenerate,
        };
        Ok(EvalReport {
            ham: per_class(ham),
            spam: per_class(spam),
            accuracy: spam.accuracy,
            auc: roc_auc(&scores)?.auc,
            log_loss: log_loss(&pairs)?,
            confusion,
        })
    }

    pub fn class(&self, label: Label) -> &ClassMetrics<T> {
        match label {
            Label::Ham => &self.ham,
            Label::Spam => &self.spam,
        }
    }

    /// Human-readable table: one row per class, then overall figures.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let f = |v: T| format!("{:.4}", v.to_f64_lossless());
        let _ = writeln!(s, "{:<8}{:>11}{:>9}{:>9}", "class", "precision", "recall", "f1");
        for label in [Label::Ham, Label::Spam] {
            let c = self.class(label);
            let flag = if c.degenerate { "  (degenerate)" } else { "" };
            let _ = writeln!(
                s,
                "{:<8}{:>11}{:>9}{:>9}{flag}",
                label.as_str(),
                f(c.precision),
                f(c.recall),
                f(c.f1)
            );
        }
        let _ = writeln!(s, "accuracy  {:.2}%", self.accuracy.to_f64_lossless() * 100.0);
        let _ = writeln!(s, "auc       {}", f(self.auc));
        let _ = writeln!(s, "log-loss  {}", f(self.log_loss));
        let m = &self.confusion;
        let _ = writeln!(s, "confusion matrix (rows: actual, columns: predicted)");
        let _ = writeln!(s, "{:<14}{:>10}{:>11}", "", "pred ham", "pred spam");
        let _ = writeln!(s, "{:<14}{:>10}{:>11}", "actual ham", m.tn, m.fp);
        let _ = writeln!(s, "{:<14}{:>10}{:>11}", "actual spam", m.fn_, m.tp);
        s
    }

    /// `key=value` lines; see `docs/report-format.md`.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format={REPORT_FORMAT}");
        let m = &self.confusion;
        for (k, v) in [("tp", m.tp), ("fp", m.fp), ("tn", m.tn), ("fn", m.fn_)] {
            let _ = writeln!(s, "confusion.{k}={v}");
        }
        let _ = writeln!(s, "accuracy={}", self.accuracy.to_f64_lossless());
        let _ = writeln!(s, "auc={}", self.auc.to_f64_lossless());
        let _ = writeln!(s, "log_loss={}", self.log_loss.to_f64_lossless());
        for label in [Label::Ham, Label::Spam] {
            let c = self.class(label);
            let name = label.as_str();
            let _ = writeln!(s, "{name}.precision={}", c.precision.to_f64_lossless());
            let _ = writeln!(s, "{name}.recall={}", c.recall.to_f64_lossless());
            let _ = writeln!(s, "{name}.f1={}", c.f1.to_f64_lossless());
            let _ = writeln!(s, "{name}.degenerate={}", c.degenerate);
        }
        s
    }
}

impl EvalReport<f64> {
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("report line without '=': {line:?}")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .ok_or_else(|| Error::invalid(format!("report is missing {k}")))
        };
        if get("format")? != REPORT_FORMAT {
            return Err(Error::invalid(format!("unknown report format {:?}", get("format")?)));
        }
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::invalid(format!("report value {k} is not a number")))
        };
        let count = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::invalid(format!("report value {k} is not a count")))
        };
        let class = |name: &str| -> Result<ClassMetrics<f64>> {
            Ok(ClassMetrics {
                precision: num(&format!("{name}.precision"))?,
                recall: num(&format!("{name}.recall"))?,
                f1: num(&format!("{name}.f1"))?,
                degenerate: get(&format!("{name}.degenerate"))? == "true",
            })
        };
        Ok(EvalReport {
            ham: class("ham")?,
            spam: class("spam")?,
            accuracy: num("accuracy")?,
            auc: num("auc")?,
            log_loss: num("log_loss")?,
            confusion: ConfusionMatrix {
                tp: count("confusion.tp")?,
                fp: count("confusion.fp")?,
                tn: count("confusion.tn")?,
                fn_: count("confusion.fn")?,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn pair_oracle(scores: &[(f64, Label)]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for &(sp, lp) in scores {
            if lp != Label::Spam {
                continue;
            }
            for &(sn, ln) in scores {
                if ln != Label::Ham {
                    continue;
                }
                pairs += 1.0;
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn hand_built_matrix() {
        let m = ConfusionMatrix { tp: 2, fp: 1, tn: 7, fn_: 0 };
        let r = compute_metrics::<f64>(&m).unwrap();
        assert_eq!(r.precision, 2.0 / 3.0);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.accuracy, 0.9);
        assert!(!r.degenerate);
        assert!((r.f1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_denominator_is_flagged() {
        let m = ConfusionMatrix { tp: 0, fp: 0, tn: 5, fn_: 3 };
        let r = compute_metrics::<f64>(&m).unwrap();
        assert_eq!(r.precision, 0.0);
        assert_eq!(r.f1, 0.0);
        assert!(r.degenerate);
        assert!(compute_metrics::<f64>(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn published_spam_row_is_consistent() {
        let f1 = f1_score(0.9880_f64, 0.9111);
        assert!((f1 - 0.9480).abs() < 5e-4, "{f1}");
    }

    #[test]
    fn swapping_gives_ham_row() {
        let m = ConfusionMatrix { tp: 2, fp: 1, tn: 7, fn_: 0 };
        let ham = compute_metrics::<f64>(&m.swapped()).unwrap();
        assert_eq!(ham.precision, 1.0);
        assert_eq!(ham.recall, 7.0 / 8.0);
        assert_eq!(ham.accuracy, 0.9);
    }

    #[test]
    fn auc_edge_cases() {
        let perfect = [(0.9, Label::Spam), (0.8, Label::Spam), (0.2, Label::Ham), (0.1, Label::Ham)];
        assert_eq!(roc_auc(&perfect).unwrap().auc, 1.0);
        let flat = [(0.5, Label::Spam), (0.5, Label::Ham), (0.5, Label::Ham)];
        let r = roc_auc(&flat).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(roc_auc(&[(0.3, Label::Ham)]).is_err());
    }

    #[test]
    fn auc_matches_pair_counting_on_random_sets() {
        let mut rng = crate::seed::rng(5);
        for _ in 0..200 {
            let n = rng.gen_range(2..30);
            let mut scores: Vec<(f64, Label)> = (0..n)
                .map(|_| {
                    let s = (rng.gen_range(0..8) as f64) / 8.0 + rng.gen_range(0.0..0.01) * rng.gen_range(0..2) as f64;
                    let l = if rng.gen_bool(0.4) { Label::Spam } else { Label::Ham };
                    (s, l)
                })
                .collect();
            scores[0].1 = Label::Spam;
            scores[1].1 = Label::Ham;
            let auc = roc_auc(&scores).unwrap().auc;
            assert!((auc - pair_oracle(&scores)).abs() <= 1e-12);
        }
    }

    #[test]
    fn log_loss_cases() {
        assert!(log_loss(&[(Label::Spam, 1.0_f64)]).unwrap() < 1e-12);
        let half = log_loss(&[(Label::Spam, 0.5_f64)]).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        let worst = log_loss(&[(Label::Spam, 0.0_f64)]).unwrap();
        assert!(worst.is_finite() && worst > 30.0);
        let worst32 = log_loss(&[(Label::Spam, 0.0_f32), (Label::Ham, 1.0)]).unwrap();
        assert!(worst32.is_finite());
        assert!(log_loss::<f64>(&[]).is_err());
        assert!(log_loss(&[(Label::Ham, 1.5_f64)]).is_err());
    }

    #[test]
    fn report_round_trips_through_kv() {
        let truth = [Label::Spam, Label::Ham, Label::Ham, Label::Spam, Label::Ham];
        let pred = [Label::Spam, Label::Ham, Label::Spam, Label::Ham, Label::Ham];
        let p = [0.9, 0.1, 0.7, 0.4, 0.2];
        let r = EvalReport::from_predictions(&truth, &pred, &p).unwrap();
        assert_eq!(r.confusion, ConfusionMatrix { tp: 1, fp: 1, tn: 2, fn_: 1 });
        let back = EvalReport::from_kv(&r.to_kv()).unwrap();
        assert_eq!(back, r);
        let table = r.to_table();
        assert!(table.contains("accuracy  60.00%"));
        assert!(table.contains("actual spam"));
        assert_eq!(table.lines().filter(|l| l.starts_with("ham") || l.starts_with("spam")).count(), 2);
    }

    proptest! {
        #[test]
        fn auc_invariant_under_cubing(raw in proptest::collection::vec((-1.0f64..1.0, any::<bool>()), 2..40)) {
            let mut scores: Vec<(f64, Label)> = raw.iter().map(|&(s, b)| (s, if b { Label::Spam } else { Label::Ham })).collect();
            scores[0].1 = Label::Spam;
            scores[1].1 = Label::Ham;
            let cubed: Vec<(f64, Label)> = scores.iter().map(|&(s, l)| (s * s * s, l)).collect();
            let a = roc_auc(&scores).unwrap();
            let b = roc_auc(&cubed).unwrap();
            prop_assert!((a.auc - b.auc).abs() <= 1e-12);
            prop_assert_eq!(a.points.first().copied(), Some((0.0, 0.0)));
            prop_assert_eq!(a.points.last().copied(), Some((1.0, 1.0)));
            for w in a.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }

        #[test]
        fn metrics_are_consistent(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
            let m = ConfusionMatrix { tp, fp, tn, fn_ };
            prop_assume!(m.total() > 0);
            let r = compute_metrics::<f64>(&m).unwrap();
            prop_assert_eq!(r.accuracy, (tp + tn) as f64 / m.total() as f64);
            prop_assert_eq!(r.f1, f1_score(r.precision, r.recall));
            for v in [r.precision, r.recall, r.f1, r.accuracy] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
