//! Element quality: the smallest scaled Jacobian over the four corners.

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;

/// `min_k sin(angle at corner k)`, clamped at 0. One for rectangles, zero
/// for degenerate or inverted quads.
pub fn element_quality(q: [Vec2; 4]) -> f64 {
    let mut worst = f64::INFINITY;
    for k in 0..4 {
        let e1 = q[(k + 1) % 4] - q[k];
        let e2 = q[(k + 3) % 4] - q[k];
        let (l1, l2) = (e1.norm(), e2.norm());
        if l1 == 0.0 || l2 == 0.0 {
            return 0.0;
        }
        worst = worst.min(e1.cross(e2) / (l1 * l2));
    }
    worst.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub elements: usize,
    /// Mean element quality.
    pub mean: f64,
    /// Worst element quality.
    pub worst: f64,
    /// Percentage of elements with quality above 0.9.
    pub above_09: f64,
}

impl QualityReport {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { elements: 0, mean: 0.0, worst: 0.0, above_09: 0.0 };
        }
        let n = values.len() as f64;
        Self {
            elements: values.len(),
            mean: values.iter().sum::<f64>() / n,
            worst: values.iter().copied().fold(f64::INFINITY, f64::min),
            above_09: 100.0 * values.iter().filter(|&&v| v > 0.9).count() as f64 / n,
        }
    }

    /// Plain-text table with one header row.
    pub fn table(&self) -> String {
        format!(
            "{:>10} {:>8} {:>8} {:>8}\n{:>10} {:>8.4} {:>8.4} {:>8.2}\n",
            "elements", "mean", "worst", "tau%", self.elements, self.mean, self.worst, self.above_09
        )
    }
}
