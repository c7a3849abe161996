//! Plain CSV writers for run artifacts. Floats use Rust's shortest
//! round-trip formatting, so identical values give identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::ZScore;
use crate::error::{Error, Result};
use crate::probe::{AlphaRecord, CorrelationReport};
use crate::train::{BucketAccuracy, CvReport, MetricsReport};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{},{l}", i + 1);
    }
    s
}

fn metrics_row(s: &mut String, label: &str, m: &MetricsReport) {
    let _ = writeln!(
        s,
        "{label},{},{},{},{},{},{},{},{},{}",
        m.total(),
        m.tp,
        m.fp,
        m.tn,
        m.fn_,
        m.accuracy,
        opt(m.precision),
        opt(m.sensitivity),
        opt(m.auc)
    );
}

const METRICS_HEADER: &str = "set,n,tp,fp,tn,fn,accuracy,precision,sensitivity,auc\n";

pub fn metrics_csv(m: &MetricsReport) -> String {
    let mut s = String::from(METRICS_HEADER);
    metrics_row(&mut s, "test", m);
    s
}

/// One row per fold, then the pooled out-of-fold metrics and the unweighted
/// fold mean (counts left empty).
pub fn cv_metrics_csv(report: &CvReport) -> String {
    let mut s = String::from(METRICS_HEADER);
    for f in &report.folds {
        metrics_row(&mut s, &format!("fold{}", f.fold + 1), &f.metrics);
    }
    metrics_row(&mut s, "pooled", &report.pooled);
    let a = &report.averaged;
    let _ = writeln!(
        s,
        "mean,,,,,,{},{},{},{}",
        a.accuracy,
        opt(a.precision),
        opt(a.sensitivity),
        opt(a.auc)
    );
    s
}

pub fn scores_csv(scores: &[f64], labels: &[crate::data::Label]) -> String {
    let mut s = String::from("index,label,score\n");
    for (i, (sc, l)) in scores.iter().zip(labels).enumerate() {
        let _ = writeln!(s, "{i},{},{sc}", l.as_u8());
    }
    s
}

pub fn roc_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("fpr,tpr\n");
    for (f, t) in points {
        let _ = writeln!(s, "{f},{t}");
    }
    s
}

pub fn alphas_csv(records: &[AlphaRecord]) -> String {
    let mut s = String::from("sample,layer,alpha,area\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{}", r.sample, r.layer, r.alpha, r.area);
    }
    s
}

pub fn correlation_csv(report: &CorrelationReport) -> String {
    let mut s = String::from("layer,r,n\n");
    for (l, r) in &report.layers {
        let r = r.map_or_else(|| "nan".to_string(), |r| r.to_string());
        let _ = writeln!(s, "{l},{r},{}", report.samples);
    }
    s
}

pub fn buckets_csv(buckets: &[BucketAccuracy]) -> String {
    let mut s = String::from("bucket,n,accuracy\n");
    for b in buckets {
        let _ = writeln!(s, "{},{},{}", b.name, b.count, b.accuracy);
    }
    s
}

pub fn norm_csv(z: &ZScore) -> String {
    format!("mean,std\n{},{}\n", z.mean, z.std)
}

pub fn parse_norm(text: &str) -> Result<ZScore> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("mean,std") {
        return Err(Error::Malformed("normalization file lacks the mean,std header".into()));
    }
    let row = lines
        .next()
        .ok_or_else(|| Error::Malformed("normalization file has no values".into()))?;
    let vals: Vec<f64> = row
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Malformed(format!("normalization value: {e}")))?;
    match vals[..] {
        [mean, std] if mean.is_finite() && std.is_finite() && std > 0.0 => Ok(ZScore { mean, std }),
        _ => Err(Error::Malformed(format!("bad normalization row {row:?}"))),
    }
}

pub fn load_norm(path: &Path) -> Result<ZScore> {
    parse_norm(&std::fs::read_to_string(path)?)
}
