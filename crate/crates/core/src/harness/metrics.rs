//! Per-epoch metrics, their CSV form, and the summary table rows.

use std::io::{self, Write};

use super::config::{rate_label, row_label, RunConfig};

/// One row of `metrics.csv`. Epoch 0 holds the untrained network.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Percent of training samples misclassified by their free-phase fixed point.
    pub train_err: f64,
    pub val_err: f64,
    pub free_iters_mean: f64,
    /// Free relaxations that hit their budget or diverged during training.
    pub nonconv: usize,
    /// Fraction of active units per layer `1..=P` on the validation split.
    pub sparsity: Vec<f64>,
    pub seconds: f64,
}

pub fn csv_header(depth: usize) -> String {
    let mut h = String::from("epoch,train_err,val_err,free_iters_mean,nonconv");
    for p in 1..=depth {
        h.push_str(&format!(",sparsity_l{p}"));
    }
    h.push_str(",seconds");
    h
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{}",
            self.epoch, self.train_err, self.val_err, self.free_iters_mean, self.nonconv
        );
        for f in &self.sparsity {
            s.push_str(&format!(",{f}"));
        }
        s.push_str(&format!(",{}", self.seconds));
        s
    }
}

pub fn write_metrics_csv<W: Write>(mut out: W, depth: usize, rows: &[EpochMetrics]) -> io::Result<()> {
    writeln!(out, "{}", csv_header(depth))?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Mean and standard error of the mean of the last `window` validation errors
/// (epoch 0 excluded unless nothing else exists).
pub fn final_validation(rows: &[EpochMetrics], window: usize) -> (f64, f64) {
    let trained: Vec<f64> = rows.iter().filter(|r| r.epoch > 0).map(|r| r.val_err).collect();
    let vals = if trained.is_empty() {
        rows.iter().map(|r| r.val_err).collect()
    } else {
        trained
    };
    let tail = &vals[vals.len().saturating_sub(window.max(1))..];
    let n = tail.len() as f64;
    if tail.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = tail.iter().sum::<f64>() / n;
    let sem = if tail.len() > 1 {
        let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    (mean, sem)
}

pub const TABLE_HEADER: &str =
    "Algorithm | Learning Rate | Training Error (%) | Validation Error (%) | No. epochs";

/// Summary row in the layout of [`TABLE_HEADER`]. With a window above one the
/// validation column reads `mean ± sem`.
pub fn table_row(cfg: &RunConfig, rows: &[EpochMetrics]) -> String {
    let last = rows.last();
    let train = last.map_or(f64::NAN, |r| r.train_err);
    let epochs = last.map_or(0, |r| r.epoch);
    let (mean, sem) = final_validation(rows, cfg.final_window);
    let val = if cfg.final_window > 1 {
        format!("{mean:.2} ± {sem:.2}")
    } else {
        format!("{mean:.2}")
    };
    format!("{} | {} | {train:.2} | {val} | {epochs}", row_label(cfg), rate_label(cfg))
}

/// Epochs after the third whose 5-epoch trailing mean training error rose.
pub fn moving_average_rises(rows: &[EpochMetrics]) -> Vec<usize> {
    let errs: Vec<(usize, f64)> = rows.iter().map(|r| (r.epoch, r.train_err)).collect();
    let avg: Vec<(usize, f64)> = errs
        .windows(5)
        .map(|w| (w[4].0, w.iter().map(|x| x.1).sum::<f64>() / 5.0))
        .collect();
    avg.windows(2)
        .filter(|w| w[1].0 > 3 && w[1].1 > w[0].1)
        .map(|w| w[1].0)
        .collect()
}
