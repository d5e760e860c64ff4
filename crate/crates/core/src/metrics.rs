//! Claim-level evaluation measures.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::CREDIBLE_THRESHOLD;

/// Area under the ROC curve, or the marker for label sets with a single
/// class where it is undefined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Auc {
    Value(f64),
    Undefined,
}

impl Auc {
    pub fn value(self) -> Option<f64> {
        match self {
            Auc::Value(v) => Some(v),
            Auc::Undefined => None,
        }
    }
}

impl fmt::Display for Auc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Auc::Value(v) => write!(f, "{v}"),
            Auc::Undefined => f.write_str("undefined"),
        }
    }
}

/// Per-class counts and rates.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassStats {
    pub name: String,
    /// Number of instances whose label is this class.
    pub support: usize,
    /// Number of instances predicted as this class.
    pub predicted: usize,
    /// Fraction of this class's instances classified correctly; `None` with
    /// zero support.
    pub accuracy: Option<f64>,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReportKind {
    Classification,
    Regression,
}

/// Evaluation summary. Only the fields relevant to `kind` are populated.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub kind: ReportKind,
    pub count: usize,
    pub classes: Vec<ClassStats>,
    pub accuracy: Option<f64>,
    /// Unweighted mean of per-class accuracies.
    pub macro_accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    pub auc: Option<Auc>,
    pub mse: Option<f64>,
    /// For multiclass reports: RMSE of the confidence against correctness.
    pub rmse: Option<f64>,
}

impl MetricReport {
    fn empty(kind: ReportKind, count: usize) -> Self {
        MetricReport {
            kind,
            count,
            classes: Vec::new(),
            accuracy: None,
            macro_accuracy: None,
            macro_f1: None,
            auc: None,
            mse: None,
            rmse: None,
        }
    }

    /// Flat `key=value` pairs in a stable order.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            (
                "kind".to_string(),
                match self.kind {
                    ReportKind::Classification => "classification",
                    ReportKind::Regression => "regression",
                }
                .to_string(),
            ),
            ("count".into(), self.count.to_string()),
        ];
        for c in &self.classes {
            kv.push((format!("class.{}.support", c.name), c.support.to_string()));
            kv.push((format!("class.{}.predicted", c.name), c.predicted.to_string()));
            kv.push((
                format!("class.{}.accuracy", c.name),
                c.accuracy.map_or("undefined".into(), |a| a.to_string()),
            ));
            kv.push((format!("class.{}.f1", c.name), c.f1.to_string()));
        }
        let optional = [
            ("accuracy", self.accuracy.map(|v| v.to_string())),
            ("macro_accuracy", self.macro_accuracy.map(|v| v.to_string())),
            ("macro_f1", self.macro_f1.map(|v| v.to_string())),
            ("auc", self.auc.map(|v| v.to_string())),
            ("mse", self.mse.map(|v| v.to_string())),
            ("rmse", self.rmse.map(|v| v.to_string())),
        ];
        kv.extend(optional.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        kv
    }

    pub fn to_key_value_text(&self) -> String {
        self.key_values()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:.2}%", 100.0 * x));
        writeln!(f, "claims evaluated: {}", self.count)?;
        for c in &self.classes {
            writeln!(
                f,
                "  {:<12} support {:>6}  accuracy {:>8}  f1 {:.4}",
                c.name,
                c.support,
                pct(c.accuracy),
                c.f1
            )?;
        }
        if let Some(v) = self.accuracy {
            writeln!(f, "accuracy:       {:.4}", v)?;
        }
        if let Some(v) = self.macro_accuracy {
            writeln!(f, "macro accuracy: {:.4}", v)?;
        }
        if let Some(v) = self.macro_f1 {
            writeln!(f, "macro F1:       {:.4}", v)?;
        }
        if let Some(auc) = self.auc {
            match auc {
                Auc::Value(v) => writeln!(f, "AUC:            {:.4}", v)?,
                Auc::Undefined => writeln!(f, "AUC:            undefined (single class)")?,
            }
        }
        if let Some(v) = self.mse {
            writeln!(f, "MSE:            {:.4}", v)?;
        }
        if let Some(v) = self.rmse {
            writeln!(f, "RMSE:           {:.4}", v)?;
        }
        Ok(())
    }
}

/// Rank-based (Mann-Whitney) AUC with tied scores counted half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<Auc> {
    if scores.len() != labels.len() {
        return Err(Error::shape("roc_auc", (scores.len(), 1), (labels.len(), 1)));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(Auc::Undefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // average 1-based ranks over tie groups
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += avg_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok(Auc::Value((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n)))
}

fn f1(tp: usize, predicted: usize, actual: usize) -> f64 {
    let denom = (predicted + actual) as f64;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * tp as f64 / denom
    }
}

fn class_table(predicted: &[usize], labels: &[usize], names: &[String]) -> Vec<ClassStats> {
    names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let support = labels.iter().filter(|&&l| l == c).count();
            let pred = predicted.iter().filter(|&&p| p == c).count();
            let tp = predicted
                .iter()
                .zip(labels)
                .filter(|(&p, &l)| p == c && l == c)
                .count();
            ClassStats {
                name: name.clone(),
                support,
                predicted: pred,
                accuracy: (support > 0).then(|| tp as f64 / support as f64),
                f1: f1(tp, pred, support),
            }
        })
        .collect()
}

fn fill_class_summary(report: &mut MetricReport, predicted: &[usize], labels: &[usize]) {
    let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    report.accuracy = Some(correct as f64 / labels.len() as f64);
    let accs: Vec<f64> = report.classes.iter().filter_map(|c| c.accuracy).collect();
    report.macro_accuracy = (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64);
    report.macro_f1 =
        Some(report.classes.iter().map(|c| c.f1).sum::<f64>() / report.classes.len() as f64);
}

/// Binary report on claim-level credibilities. A claim is predicted
/// credible when its score is at least 0.5. Classes are listed as
/// `true` then `false`.
pub fn classification_report(scores: &[f64], labels: &[bool]) -> Result<MetricReport> {
    if scores.len() != labels.len() {
        return Err(Error::shape("classification_report", (scores.len(), 1), (labels.len(), 1)));
    }
    if scores.is_empty() {
        return Err(Error::Degenerate("classification report over zero claims".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Contract(format!("score {bad} outside [0, 1]")));
    }
    // class 0 = true (credible), class 1 = false
    let to_class = |b: bool| if b { 0 } else { 1 };
    let predicted: Vec<usize> = scores.iter().map(|&s| to_class(s >= CREDIBLE_THRESHOLD)).collect();
    let actual: Vec<usize> = labels.iter().map(|&l| to_class(l)).collect();
    let names = ["true".to_string(), "false".to_string()];
    let mut report = MetricReport::empty(ReportKind::Classification, scores.len());
    report.classes = class_table(&predicted, &actual, &names);
    fill_class_summary(&mut report, &predicted, &actual);
    report.auc = Some(roc_auc(scores, labels)?);
    Ok(report)
}

/// K-class report on aggregated class distributions; the predicted class is
/// the arg-max and its probability is the confidence.
pub fn multiclass_report(
    distributions: &[Vec<f64>],
    labels: &[usize],
    classes: &[String],
) -> Result<MetricReport> {
    if distributions.len() != labels.len() {
        return Err(Error::shape("multiclass_report", (distributions.len(), 1), (labels.len(), 1)));
    }
    if distributions.is_empty() {
        return Err(Error::Degenerate("classification report over zero claims".into()));
    }
    let mut predicted = Vec::with_capacity(labels.len());
    let mut sq = 0.0;
    for (dist, &label) in distributions.iter().zip(labels) {
        if dist.len() != classes.len() || label >= classes.len() {
            return Err(Error::Contract("class distribution does not match class list".into()));
        }
        let (arg, conf) = dist
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, p)| if p > b.1 { (i, p) } else { b });
        let correct = if arg == label { 1.0 } else { 0.0 };
        sq += (conf - correct) * (conf - correct);
        predicted.push(arg);
    }
    let mut report = MetricReport::empty(ReportKind::Classification, labels.len());
    report.classes = class_table(&predicted, labels, classes);
    fill_class_summary(&mut report, &predicted, labels);
    report.rmse = Some((sq / labels.len() as f64).sqrt());
    Ok(report)
}

/// Mean squared error and its root.
pub fn regression_report(predictions: &[f64], targets: &[f64]) -> Result<MetricReport> {
    if predictions.len() != targets.len() {
        return Err(Error::shape("regression_report", (predictions.len(), 1), (targets.len(), 1)));
    }
    if predictions.is_empty() {
        return Err(Error::Degenerate("regression report over zero claims".into()));
    }
    let mse = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predictions.len() as f64;
    let mut report = MetricReport::empty(ReportKind::Regression, predictions.len());
    report.mse = Some(mse);
    report.rmse = Some(mse.sqrt());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let r = classification_report(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, Some(Auc::Value(1.0)));
        assert_eq!(r.macro_f1, Some(1.0));
        assert_eq!(r.classes[0].accuracy, Some(1.0));
        assert_eq!(r.classes[1].accuracy, Some(1.0));
    }

    #[test]
    fn all_ties_give_half_auc() {
        let r = classification_report(&[0.5; 4], &[true, false, true, false]).unwrap();
        assert_eq!(r.auc, Some(Auc::Value(0.5)));
    }

    #[test]
    fn single_class_auc_is_undefined() {
        let r = classification_report(&[0.2, 0.7], &[true, true]).unwrap();
        assert_eq!(r.auc, Some(Auc::Undefined));
        assert!(r.key_values().contains(&("auc".into(), "undefined".into())));
    }

    #[test]
    fn f1_for_absent_class_is_zero() {
        // nothing predicted false and nothing labelled false
        let r = classification_report(&[0.9, 0.6], &[true, true]).unwrap();
        assert_eq!(r.classes[1].f1, 0.0);
        assert_eq!(r.classes[1].accuracy, None);
        assert_eq!(r.macro_f1, Some(0.5));
    }

    #[test]
    fn mse_hand_arithmetic() {
        let r = regression_report(&[1.0, 3.0], &[2.0, 2.0]).unwrap();
        assert_eq!(r.mse, Some(1.0));
        assert_eq!(r.rmse, Some(1.0));
        assert_eq!(regression_report(&[2.5], &[2.5]).unwrap().mse, Some(0.0));
    }

    #[test]
    fn multiclass_confidence_rmse() {
        let classes: Vec<String> = ["true", "false", "unverified"].iter().map(|s| s.to_string()).collect();
        let d = vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]];
        let r = multiclass_report(&d, &[0, 1], &classes).unwrap();
        assert_eq!(r.accuracy, Some(0.5));
        let expected = (((0.7f64 - 1.0).powi(2) + 0.6f64.powi(2)) / 2.0).sqrt();
        assert!((r.rmse.unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(classification_report(&[0.1], &[true, false]).is_err());
        assert!(regression_report(&[0.1], &[]).is_err());
    }
}
