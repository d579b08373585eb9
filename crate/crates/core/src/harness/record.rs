//! Run records: per-step metric rows plus a summary, with deterministic CSV
//! and JSON renderings.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub optimizer: String,
    pub problem: String,
    pub schedule: String,
    pub total_steps: u64,
    pub seed: u64,
    pub peak_lr: f64,
    pub final_lr: f64,
    pub warmup_frac: f64,
    pub decay_frac: f64,
    pub log_every: u64,
    pub n_params: usize,
    /// Canonical config text the run was built from.
    pub config_text: String,
}

/// Per-parameter metrics at a logged step. Absent metrics stay `None` and
/// render as empty CSV fields.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamLog {
    pub update_rms: f64,
    pub gamma: Option<f64>,
    pub cond_l: Option<f64>,
    pub cond_r: Option<f64>,
    pub rms_l: Option<f64>,
    pub rms_r: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    /// Noise-free loss at the current parameters (full dataset for the MLP).
    pub eval_loss: f64,
    pub params: Vec<ParamLog>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_eval_loss: f64,
    pub final_train_loss: f64,
    pub steps_completed: u64,
    pub diverged: bool,
}

/// Wall-clock measurements. Not serialized: records must be byte-identical
/// across reruns of the same config.
#[derive(Clone, Copy, Debug, Default)]
pub struct Timing {
    pub wall: Duration,
    pub mean_step: Duration,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub rows: Vec<LogRow>,
    pub summary: RunSummary,
    #[serde(skip, default)]
    pub timing: Timing,
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

impl RunRecord {
    /// CSV with the fixed column order
    /// `step,lr,train_loss,eval_loss` then per-parameter blocks
    /// `P<i>_update_rms,P<i>_gamma,P<i>_condL,P<i>_condR,P<i>_rmsL,P<i>_rmsR`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("step,lr,train_loss,eval_loss");
        for i in 0..self.meta.n_params {
            for col in ["update_rms", "gamma", "condL", "condR", "rmsL", "rmsR"] {
                out.push_str(&format!(",P{i}_{col}"));
            }
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                row.step,
                fmt(row.lr),
                fmt(row.train_loss),
                fmt(row.eval_loss)
            ));
            for p in &row.params {
                out.push_str(&format!(
                    ",{},{},{},{},{},{}",
                    fmt(p.update_rms),
                    fmt_opt(p.gamma),
                    fmt_opt(p.cond_l),
                    fmt_opt(p.cond_r),
                    fmt_opt(p.rms_l),
                    fmt_opt(p.rms_r)
                ));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("record serialization failed: {e}")))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse record {}: {e}", path.display())))
    }

    /// Eval-loss series as `(step, loss)` pairs.
    pub fn eval_series(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.rows.iter().map(|r| (r.step, r.eval_loss))
    }
}
