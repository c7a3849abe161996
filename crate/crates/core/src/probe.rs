//! Attention-signal probing: per-layer α against object area, accuracy by
//! object size, and ROC curve points.

use std::cmp::Ordering;

use crate::data::{object_area, Label, Sample, ZScore};
use crate::error::{Error, Result};
use crate::network::GdNetParams;
use crate::parallel::Exec;
use crate::train::{predict_positive, require_both_classes, BucketAccuracy, DECISION_THRESHOLD};

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaRecord {
    pub sample: usize,
    /// 1-based layer index.
    pub layer: usize,
    pub alpha: f64,
    pub area: f64,
}

/// Forward each clean sample once (dropout off) and record the attention
/// scalar of every layer together with the object area. Images are
/// normalized with `zscore` when given.
pub fn record_alphas(
    params: &GdNetParams<f32>,
    samples: &[Sample],
    zscore: Option<&ZScore>,
    exec: Exec,
) -> Result<Vec<AlphaRecord>> {
    let areas = samples.iter().map(object_area).collect::<Result<Vec<_>>>()?;
    let per_sample = exec.map_collect(samples.len(), |i| -> Result<Vec<f32>> {
        let img = match zscore {
            Some(z) => z.apply(&samples[i].image),
            None => samples[i].image.clone(),
        };
        let shape = img.shape().to_vec();
        let mut batch_shape = vec![1];
        batch_shape.extend_from_slice(&shape);
        let batch = img.reshape(&batch_shape)?;
        Ok(params
            .forward_with(Exec::Sequential, &batch, false, 0)?
            .alphas
            .into_data())
    });
    let mut out = Vec::with_capacity(samples.len() * params.layers.len());
    for (i, alphas) in per_sample.into_iter().enumerate() {
        for (l, a) in alphas?.into_iter().enumerate() {
            out.push(AlphaRecord {
                sample: i,
                layer: l + 1,
                alpha: a as f64,
                area: areas[i],
            });
        }
    }
    Ok(out)
}

/// Pearson correlation coefficient with 64-bit accumulation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidShape(format!("{} x values, {} y values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance(
            if sxx == 0.0 { "x is constant" } else { "y is constant" }.into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationReport {
    /// `(layer, r)` in layer order; `None` when the layer's α is the same
    /// for every sample (a saturated gate), where r is undefined.
    pub layers: Vec<(usize, Option<f64>)>,
    pub samples: usize,
}

/// Pearson correlation between area and α for every layer present.
pub fn correlation_report(records: &[AlphaRecord]) -> Result<CorrelationReport> {
    let mut layers: Vec<usize> = records.iter().map(|r| r.layer).collect();
    layers.sort_unstable();
    layers.dedup();
    if layers.is_empty() {
        return Err(Error::InvalidArgument("no alpha records".into()));
    }
    let mut out = Vec::with_capacity(layers.len());
    let mut samples = 0;
    for layer in layers {
        let (area, alpha): (Vec<f64>, Vec<f64>) = records
            .iter()
            .filter(|r| r.layer == layer)
            .map(|r| (r.area, r.alpha))
            .unzip();
        samples = area.len();
        let r = match pearson(&area, &alpha) {
            Ok(r) => Some(r),
            Err(Error::ZeroVariance(_)) if area.len() >= 2 => None,
            Err(e) => return Err(e),
        };
        out.push((layer, r));
    }
    Ok(CorrelationReport {
        layers: out,
        samples,
    })
}

/// Half-open diameter buckets `[lo, hi)`; the last bucket is closed.
pub const SIZE_BUCKETS: [(&str, f64, f64); 3] =
    [("small", 3.0, 5.0), ("medium", 5.0, 13.0), ("large", 13.0, 25.0)];

pub fn size_bucket(diameter: f64) -> Option<&'static str> {
    SIZE_BUCKETS.iter().enumerate().find_map(|(i, &(name, lo, hi))| {
        let last = i + 1 == SIZE_BUCKETS.len();
        (diameter >= lo && (diameter < hi || (last && diameter <= hi))).then_some(name)
    })
}

/// Threshold accuracy within each size bucket. Buckets without samples are
/// omitted.
pub fn accuracy_by_size(scores: &[f64], samples: &[Sample]) -> Result<Vec<BucketAccuracy>> {
    if scores.len() != samples.len() {
        return Err(Error::InvalidShape(format!(
            "{} scores for {} samples",
            scores.len(),
            samples.len()
        )));
    }
    let mut out = Vec::new();
    for &(name, _, _) in &SIZE_BUCKETS {
        let (mut n, mut correct) = (0usize, 0usize);
        for (&s, sample) in scores.iter().zip(samples) {
            if size_bucket(sample.diameter_px as f64) == Some(name) {
                n += 1;
                let positive = predict_positive(s, DECISION_THRESHOLD);
                if positive == (sample.label == Label::Malignant) {
                    correct += 1;
                }
            }
        }
        if n > 0 {
            out.push(BucketAccuracy {
                name,
                count: n,
                accuracy: correct as f64 / n as f64,
            });
        }
    }
    Ok(out)
}

/// ROC curve from `(0, 0)` to `(1, 1)` with one point per distinct score.
pub fn roc_points(scores: &[f64], labels: &[Label]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = require_both_classes(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match labels[order[i]] {
                Label::Malignant => tp += 1,
                Label::Benign => fp += 1,
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a polyline of `(fpr, tpr)` points.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}
