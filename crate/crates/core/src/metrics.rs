//! Position errors against a truth trajectory in a local East-North-Up frame
//! anchored at the first truth point.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::LocalFrame;
use crate::obs_model::TruthRow;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub h_rmse_m: f64,
    pub v_rmse_m: f64,
    pub max_up_m: f64,
    pub n_epochs: usize,
}

pub type MetricsReport = BTreeMap<String, MethodMetrics>;

/// Truth series sorted by time with its ENU frame.
#[derive(Debug, Clone)]
pub struct TruthSeries {
    rows: Vec<TruthRow>,
    frame: LocalFrame,
}

impl TruthSeries {
    pub fn new(mut rows: Vec<TruthRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("empty truth series".into()));
        }
        rows.sort_by(|a, b| a.t.total_cmp(&b.t));
        let frame = LocalFrame::new(rows[0].pos());
        Ok(Self { rows, frame })
    }

    pub fn frame(&self) -> &LocalFrame {
        &self.frame
    }

    pub fn rows(&self) -> &[TruthRow] {
        &self.rows
    }

    /// Truth row nearest to `t`, if within `max_gap`.
    pub fn nearest(&self, t: f64, max_gap: f64) -> Option<&TruthRow> {
        let i = self.rows.partition_point(|r| r.t < t);
        let before = i.checked_sub(1).map(|j| &self.rows[j]);
        let after = self.rows.get(i);
        let best = match (before, after) {
            (Some(b), Some(a)) => {
                if (t - b.t).abs() <= (a.t - t).abs() {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => return None,
        };
        ((best.t - t).abs() <= max_gap).then_some(best)
    }

    /// ENU error of each `(t, position)` that has a truth epoch within `max_gap`,
    /// in time order.
    pub fn enu_errors(&self, solution: &[(f64, Vector3<f64>)], max_gap: f64) -> Vec<(f64, Vector3<f64>)> {
        let mut sorted: Vec<(f64, Vector3<f64>)> = solution.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        sorted
            .into_iter()
            .filter_map(|(t, p)| {
                let truth = self.nearest(t, max_gap)?;
                Some((t, self.frame.delta_to_enu(&(p - truth.pos()))))
            })
            .collect()
    }
}

/// Horizontal and vertical RMSE and the largest absolute up error.
pub fn summarize(errors: &[Vector3<f64>]) -> Result<MethodMetrics> {
    if errors.is_empty() {
        return Err(Error::Validation("no solution epoch overlaps the truth".into()));
    }
    let n = errors.len() as f64;
    let h = errors.iter().map(|e| e.x * e.x + e.y * e.y).sum::<f64>() / n;
    let v = errors.iter().map(|e| e.z * e.z).sum::<f64>() / n;
    let max_up = errors.iter().map(|e| e.z.abs()).fold(0.0, f64::max);
    Ok(MethodMetrics {
        h_rmse_m: h.sqrt(),
        v_rmse_m: v.sqrt(),
        max_up_m: max_up,
        n_epochs: errors.len(),
    })
}

/// Metrics of one solution series; epochs are matched within half a sampling interval.
pub fn method_metrics(
    truth: &TruthSeries,
    solution: &[(f64, Vector3<f64>)],
    interval: f64,
) -> Result<MethodMetrics> {
    let errors: Vec<Vector3<f64>> = truth
        .enu_errors(solution, 0.5 * interval)
        .into_iter()
        .map(|(_, e)| e)
        .collect();
    summarize(&errors)
}

/// RMS of consecutive differences, `None` for fewer than two values.
pub fn first_difference_rms(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let s: f64 = values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Some((s / (values.len() - 1) as f64).sqrt())
}

/// RMS of up-error first differences taken within each run of consecutive
/// flagged epochs, pooled over all runs. `None` if no run has two epochs.
pub fn stretch_roughness(up: &[f64], flagged: &[bool]) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 1..up.len().min(flagged.len()) {
        if flagged[i] && flagged[i - 1] {
            sum += (up[i] - up[i - 1]).powi(2);
            count += 1;
        }
    }
    (count > 0).then(|| (sum / count as f64).sqrt())
}

pub fn write_metrics(path: impl AsRef<Path>, report: &MetricsReport) -> Result<()> {
    let path = path.as_ref();
    let mut s = serde_json::to_string_pretty(report).expect("metrics serialize");
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
