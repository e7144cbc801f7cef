//! Order-fixed reductions and per-point summaries.

use serde::{Deserialize, Serialize};

/// Pairwise (cascade) summation; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

/// One Monte Carlo (or per-block analytic) value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub placement: u64,
    pub block: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub sweep_value: f64,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    pub count: usize,
    pub label: String,
}

/// Mean over placements of the per-placement means; variance and standard
/// error over all samples. Samples must be grouped by placement.
pub fn summarize(label: &str, sweep_value: f64, samples: &[Sample]) -> StatSummary {
    let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
    let mut per_placement = Vec::new();
    let mut start = 0;
    while start < samples.len() {
        let p = samples[start].placement;
        let end = start + samples[start..].iter().take_while(|s| s.placement == p).count();
        per_placement.push(mean(&values[start..end]));
        start = end;
    }
    let var = variance(&values);
    StatSummary {
        sweep_value,
        mean: mean(&per_placement),
        variance: var,
        stderr: if values.is_empty() { f64::NAN } else { (var / values.len() as f64).sqrt() },
        count: values.len(),
        label: label.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub summary: StatSummary,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn new(label: &str) -> Curve {
        Curve { label: label.to_string(), points: Vec::new() }
    }

    pub fn push(&mut self, sweep_value: f64, samples: Vec<Sample>) {
        let summary = summarize(&self.label, sweep_value, &samples);
        self.points.push(CurvePoint { summary, samples });
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.summary.mean).collect()
    }

    pub fn at(&self, sweep_value: f64) -> Option<&StatSummary> {
        self.points.iter().map(|p| &p.summary).find(|s| s.sweep_value == sweep_value)
    }
}
