//! Diagnostics computed from run records: excessive loss and
//! steps-to-threshold.

use crate::error::{Error, Result};
use crate::harness::record::RunRecord;

/// Fraction of the stable phase averaged for the excessive-loss baseline.
pub const STABLE_WINDOW_FRAC: f64 = 0.05;

/// Excessive loss of a WSD run: mean eval loss over the last
/// [`STABLE_WINDOW_FRAC`] of the stable phase, minus the final eval loss.
pub fn excessive_loss(record: &RunRecord) -> Result<f64> {
    excessive_loss_with_window(record, STABLE_WINDOW_FRAC)
}

pub fn excessive_loss_with_window(record: &RunRecord, window_frac: f64) -> Result<f64> {
    if record.meta.schedule != "wsd" {
        return Err(Error::Config(format!(
            "excessive loss needs a wsd record, got schedule '{}'",
            record.meta.schedule
        )));
    }
    if !(0.0..=1.0).contains(&window_frac) || window_frac == 0.0 {
        return Err(Error::Parameter("window_frac must lie in (0, 1]".into()));
    }
    let total = record.meta.total_steps as f64;
    let warmup_end = (record.meta.warmup_frac * total).round();
    let decay_start = total - (record.meta.decay_frac * total).round();
    let window_start = decay_start - window_frac * (decay_start - warmup_end);

    let window: Vec<f64> = record
        .rows
        .iter()
        .filter(|r| (r.step as f64) >= window_start && (r.step as f64) < decay_start)
        .map(|r| r.eval_loss)
        .collect();
    if window.is_empty() {
        return Err(Error::Config(
            "no logged rows fall in the stable-phase window; lower log_every".into(),
        ));
    }
    let stable = window.iter().sum::<f64>() / window.len() as f64;
    Ok(stable - record.summary.final_eval_loss)
}

/// First logged step whose eval loss reaches `threshold`, if any.
pub fn steps_to_threshold(record: &RunRecord, threshold: f64) -> Option<u64> {
    record
        .rows
        .iter()
        .find(|r| r.eval_loss <= threshold)
        .map(|r| r.step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::record::{LogRow, RunMeta, RunSummary, Timing};

    fn record(schedule: &str, rows: Vec<(u64, f64)>, final_loss: f64) -> RunRecord {
        RunRecord {
            meta: RunMeta {
                optimizer: "muon".into(),
                problem: "kron".into(),
                schedule: schedule.into(),
                total_steps: 1000,
                seed: 0,
                peak_lr: 0.1,
                final_lr: 0.0,
                warmup_frac: 0.1,
                decay_frac: 0.1,
                log_every: 10,
                n_params: 0,
                config_text: String::new(),
            },
            rows: rows
                .into_iter()
                .map(|(step, eval_loss)| LogRow {
                    step,
                    lr: 0.1,
                    train_loss: eval_loss,
                    eval_loss,
                    params: vec![],
                })
                .collect(),
            summary: RunSummary {
                final_eval_loss: final_loss,
                final_train_loss: final_loss,
                steps_completed: 1000,
                diverged: false,
            },
            timing: Timing::default(),
        }
    }

    #[test]
    fn excessive_loss_means_the_stable_tail() {
        // Stable phase spans [100, 900); 5% window is [860, 900).
        let rows = vec![(850, 9.0), (860, 2.0), (880, 4.0), (890, 3.0), (900, 1.0)];
        let rec = record("wsd", rows, 1.0);
        let dl = excessive_loss(&rec).unwrap();
        assert!((dl - 2.0).abs() < 1e-12);
    }

    #[test]
    fn excessive_loss_rejects_non_wsd() {
        let rec = record("cosine", vec![(900, 1.0)], 1.0);
        assert!(matches!(excessive_loss(&rec), Err(Error::Config(_))));
    }

    #[test]
    fn steps_to_threshold_takes_first_crossing() {
        let rec = record("wsd", vec![(10, 5.0), (20, 2.0), (30, 1.0), (40, 2.5)], 1.0);
        assert_eq!(steps_to_threshold(&rec, 2.0), Some(20));
        assert_eq!(steps_to_threshold(&rec, 0.5), None);
    }
}
