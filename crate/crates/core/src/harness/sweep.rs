//! β and γ sweeps: repeated training runs reported as mean, min and max
//! final validation error per value.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use log::{info, warn};

use super::config::RunConfig;
use super::metrics::final_validation;
use super::train::Trainer;
use crate::data::Dataset;
use crate::error::{CsmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Beta,
    Gamma,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::Beta => "beta",
            SweepParam::Gamma => "gamma",
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            SweepParam::Beta => "β",
            SweepParam::Gamma => "γ",
        }
    }

    fn set(&self, cfg: &mut RunConfig, v: f64) {
        match self {
            SweepParam::Beta => cfg.beta = v,
            SweepParam::Gamma => cfg.gamma = v,
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = CsmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "beta" | "β" => Ok(SweepParam::Beta),
            "gamma" | "γ" => Ok(SweepParam::Gamma),
            other => Err(CsmError::Config(format!("cannot sweep {other:?}; use beta or gamma"))),
        }
    }
}

/// Final validation errors of every trial at one value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub errors: Vec<f64>,
}

impl SweepRow {
    pub fn mean(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.errors.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.errors.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Trains `trials` runs per value with seeds `seed, seed + 1, ...`. A run
/// aborted by divergence contributes the validation error it last logged.
pub fn sweep(
    template: &RunConfig,
    ds: &Dataset,
    param: SweepParam,
    values: &[f64],
    trials: usize,
) -> Result<Vec<SweepRow>> {
    if trials == 0 {
        return Err(CsmError::Config("sweep needs at least one trial".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let mut errors = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut cfg = template.clone();
            param.set(&mut cfg, v);
            cfg.seed = template.seed + t as u64;
            cfg.out_dir = template
                .out_dir
                .as_ref()
                .map(|d| d.join(format!("{}-{v}-trial{t}", param.name())));
            cfg.validate()?;
            let mut trainer = Trainer::new(cfg, ds)?;
            match trainer.run(ds) {
                Ok(()) => {}
                Err(CsmError::Aborted(msg)) => warn!("{}={v} trial {t}: {msg}", param.name()),
                Err(e) => return Err(e),
            }
            let (err, _) = final_validation(&trainer.metrics, trainer.config.final_window);
            info!("{}={v} trial {t}: validation {err:.2}%", param.name());
            errors.push(err);
        }
        rows.push(SweepRow { value: v, errors });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(out, "value,mean,min,max")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.value, r.mean(), r.min(), r.max())?;
    }
    Ok(())
}

/// Text table with one `value | mean | min | max` line per row.
pub fn format_sweep_table(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{} value | Mean Validation Error (%) | Minimum Validation Error (%) | Maximum Validation Error (%)\n",
        param.symbol()
    );
    for r in rows {
        s.push_str(&format!("{} | {:.2} | {:.2} | {:.2}\n", r.value, r.mean(), r.min(), r.max()));
    }
    s
}
