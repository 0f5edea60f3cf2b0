use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel {
    pub score: f64,
    pub label: bool,
}

impl ScoredLabel {
    pub fn new(score: f64, label: bool) -> Self {
        ScoredLabel { score, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// One point per distinct score, in descending threshold order.
    pub points: Vec<PrPoint>,
    pub average_precision: f64,
    pub positives: usize,
    pub total: usize,
}

impl PrCurve {
    pub fn prevalence(&self) -> f64 {
        self.positives as f64 / self.total as f64
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["threshold", "recall", "precision"])?;
        for p in &self.points {
            w.write_record([p.threshold.to_string(), p.recall.to_string(), p.precision.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Precision and recall at every distinct score threshold, with average precision
/// `Σ (R_i − R_{i−1})·P_i`. Tied scores enter together.
pub fn precision_recall(scored: &[ScoredLabel]) -> Result<PrCurve> {
    if scored.iter().any(|s| !s.score.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let positives = scored.iter().filter(|s| s.label).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<&ScoredLabel> = scored.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = order[i].score;
        while i < order.len() && order[i].score == threshold {
            tp += usize::from(order[i].label);
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push(PrPoint { threshold, recall, precision });
    }
    Ok(PrCurve { points, average_precision: ap, positives, total: scored.len() })
}

/// `1 − Σ(f−y)² / Σ(y−ȳ)²`.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || truth.len() < 2 {
        return Err(Error::invalid(format!("r² needs equal series of length ≥ 2, got {} and {}", pred.len(), truth.len())));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ConstantTruth);
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(f, y)| (f - y).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
