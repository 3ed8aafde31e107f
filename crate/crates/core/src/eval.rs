//! Confusion counts, accuracy / F1 / FPR, and the report table.
//!
//! The positive class is 1 (sidewalk).

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(preds: &[u8], truth: &[u8]) -> Result<Confusion> {
    if preds.len() != truth.len() {
        return Err(Error::param(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::param("no predictions to score"));
    }
    let mut c = Confusion::default();
    for (&p, &t) in preds.iter().zip(truth) {
        match (p == 1, t == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Metrics whose denominator was zero; they are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Degenerate {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub fpr: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub degenerate: Degenerate,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metrics(c: &Confusion) -> Result<Metrics> {
    let n = c.total();
    if n == 0 {
        return Err(Error::param("metrics need at least one example"));
    }
    let (precision, dp) = ratio(c.tp, c.tp + c.fp);
    let (recall, dr) = ratio(c.tp, c.tp + c.fn_);
    let (fpr, dfpr) = ratio(c.fp, c.fp + c.tn);
    let df = dp || dr || precision + recall == 0.0;
    // 2PR/(P+R) in count form: one rounding instead of four
    let f1 = if df {
        0.0
    } else {
        (2 * c.tp) as f64 / (2 * c.tp + c.fp + c.fn_) as f64
    };
    Ok(Metrics {
        accuracy: (c.tp + c.tn) as f64 / n as f64,
        precision,
        recall,
        f1,
        fpr,
        degenerate: Degenerate {
            precision: dp,
            recall: dr,
            f1: df,
            fpr: dfpr,
        },
    })
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub window_seconds: usize,
    pub counts: Confusion,
    pub metrics: Metrics,
}

impl MetricsReport {
    pub fn new(model: impl Into<String>, window_seconds: usize, counts: Confusion) -> Result<Self> {
        Ok(Self {
            model: model.into(),
            window_seconds,
            metrics: metrics(&counts)?,
            counts,
        })
    }
}

/// Scores every window of `val`.
pub fn evaluate(model: &Classifier, val: &Dataset) -> Result<MetricsReport> {
    if val.is_empty() {
        return Err(Error::param("validation set is empty"));
    }
    if val.window_seconds() != model.window_seconds {
        return Err(Error::shape(format!(
            "validation windows are {} s, model expects {} s",
            val.window_seconds(),
            model.window_seconds
        )));
    }
    let windows: Vec<&[f64]> = val.examples.iter().map(|e| e.x.as_slice()).collect();
    let preds: Vec<u8> = model.predict_batch(&windows)?.iter().map(|p| p.label).collect();
    let counts = confusion(&preds, &val.labels())?;
    MetricsReport::new(model.arch.tag(), model.window_seconds, counts)
}

/// Plain-text table with columns Model, Window, Accuracy, F1, FPR.
pub fn format_table(reports: &[MetricsReport]) -> String {
    let name = |r: &MetricsReport| {
        r.model
            .parse::<crate::model::ModelArch>()
            .map_or_else(|_| r.model.clone(), |a| a.display_name().to_string())
    };
    let width = reports.iter().map(|r| name(r).len()).max().unwrap_or(0).max(5);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>6}  {:>8}  {:>6}  {:>6}", "Model", "Window", "Accuracy", "F1", "FPR");
    for r in reports {
        let flag = |v: f64, d: bool| if d { format!("{v:.2}*") } else { format!("{v:.2}") };
        let _ = writeln!(
            s,
            "{:<width$}  {:>6}  {:>8}  {:>6}  {:>6}",
            name(r),
            format!("{} s", r.window_seconds),
            format!("{:.2}", r.metrics.accuracy),
            flag(r.metrics.f1, r.metrics.degenerate.f1),
            flag(r.metrics.fpr, r.metrics.degenerate.fpr),
        );
    }
    if reports.iter().any(|r| r.metrics.degenerate.f1 || r.metrics.degenerate.fpr) {
        s.push_str("* zero denominator, reported as 0\n");
    }
    s
}

pub const METRICS_CSV_HEADER: &str = "model,window_seconds,tp,tn,fp,fn,accuracy,f1,fpr";

pub fn write_metrics_csv<W: Write>(reports: &[MetricsReport], mut out: W) -> Result<()> {
    writeln!(out, "{METRICS_CSV_HEADER}")?;
    for r in reports {
        let c = r.counts;
        let m = r.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.model, r.window_seconds, c.tp, c.tn, c.fp, c.fn_, m.accuracy, m.f1, m.fpr
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_counted_example() {
        let preds = [1, 1, 1, 1, 1, 1, 0, 0, 0, 0];
        let truth = [1, 1, 1, 1, 0, 0, 0, 0, 0, 1];
        let c = confusion(&preds, &truth).unwrap();
        assert_eq!(c, Confusion { tp: 4, tn: 3, fp: 2, fn_: 1 });
        let m = metrics(&c).unwrap();
        assert_eq!(m.accuracy, 0.7);
        assert_eq!(m.f1, 8.0 / 11.0);
        assert_eq!(m.fpr, 0.4);
        assert_eq!(m.degenerate, Degenerate::default());
    }

    #[test]
    fn perfect_and_inverted() {
        let truth = [1, 0, 1, 1, 0];
        let c = confusion(&truth, &truth).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let m = metrics(&c).unwrap();
        assert_eq!((m.accuracy, m.f1, m.fpr), (1.0, 1.0, 0.0));
        let inv: Vec<u8> = truth.iter().map(|y| 1 - y).collect();
        let c = confusion(&inv, &truth).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
    }

    #[test]
    fn degenerate_denominators() {
        let m = metrics(&Confusion { tp: 0, tn: 5, fp: 0, fn_: 2 }).unwrap();
        assert!(m.degenerate.precision && m.degenerate.f1 && !m.degenerate.fpr);
        assert_eq!((m.precision, m.f1), (0.0, 0.0));
        let m = metrics(&Confusion { tp: 3, tn: 0, fp: 0, fn_: 0 }).unwrap();
        assert!(m.degenerate.fpr && m.fpr == 0.0 && m.f1 == 1.0);
        assert!(metrics(&Confusion::default()).is_err());
    }

    #[test]
    fn constant_positive_on_balanced_labels() {
        let truth = [0, 1, 0, 1, 0, 1];
        let m = metrics(&confusion(&[1; 6], &truth).unwrap()).unwrap();
        assert_eq!((m.accuracy, m.fpr), (0.5, 1.0));
    }

    #[test]
    fn input_errors() {
        assert!(matches!(confusion(&[1, 0], &[1]), Err(Error::Param(_))));
        assert!(matches!(confusion(&[], &[]), Err(Error::Param(_))));
    }

    #[test]
    fn table_and_csv() {
        let r = MetricsReport::new("lstm-cnn", 3, Confusion { tp: 4, tn: 3, fp: 2, fn_: 1 }).unwrap();
        let t = format_table(std::slice::from_ref(&r));
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "Model     Window  Accuracy      F1     FPR");
        assert_eq!(lines[1], "LSTM-CNN     3 s      0.70    0.73    0.40");
        let mut buf = Vec::new();
        write_metrics_csv(&[r], &mut buf).unwrap();
        let csv = String::from_utf8(buf).unwrap();
        assert_eq!(csv, format!("{METRICS_CSV_HEADER}\nlstm-cnn,3,4,3,2,1,0.7,{},0.4\n", 8.0 / 11.0));
    }

    fn labels() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        (1usize..60).prop_flat_map(|n| (prop::collection::vec(0u8..2, n), prop::collection::vec(0u8..2, n)))
    }

    proptest! {
        #[test]
        fn counts_sum_and_label_swap((p, t) in labels()) {
            let c = confusion(&p, &t).unwrap();
            prop_assert_eq!(c.total(), p.len());
            let flipped: Vec<u8> = p.iter().map(|v| 1 - v).collect();
            let s = confusion(&flipped, &t).unwrap();
            prop_assert_eq!((s.tp, s.tn, s.fp, s.fn_), (c.fn_, c.fp, c.tn, c.tp));
        }

        #[test]
        fn permutation_invariant((p, t) in labels(), rot in 0usize..60) {
            let k = rot % p.len();
            let mut p2 = p.clone();
            let mut t2 = t.clone();
            p2.rotate_left(k);
            t2.rotate_left(k);
            prop_assert_eq!(confusion(&p, &t).unwrap(), confusion(&p2, &t2).unwrap());
        }

        #[test]
        fn accuracy_one_iff_f1_one_and_fpr_zero((p, t) in labels()) {
            prop_assume!(t.contains(&0) && t.contains(&1));
            let m = metrics(&confusion(&p, &t).unwrap()).unwrap();
            prop_assert_eq!(m.accuracy == 1.0, m.f1 == 1.0 && m.fpr == 0.0);
        }
    }
}
