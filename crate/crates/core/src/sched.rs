//! Learning-rate schedules: warmup + cosine decay, warmup-stable-decay, and
//! constant-after-warmup.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Cosine,
    Wsd,
    Constant,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::Wsd => "wsd",
            ScheduleKind::Constant => "constant",
        }
    }
}

/// Shape of the WSD decay leg.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayShape {
    Linear,
    Cosine,
}

/// A learning-rate trajectory over `total_steps` steps.
///
/// Warmup ramps linearly so that `lr_at(1) = peak / warmup_steps` and the peak
/// is reached exactly at the end of warmup. Decaying kinds end exactly at
/// `final_lr`.
#[derive(Clone, Copy, Debug)]
pub struct ScheduleSpec<T> {
    pub kind: ScheduleKind,
    pub total_steps: u64,
    pub warmup_frac: T,
    /// Fraction of steps spent decaying; WSD only.
    pub decay_frac: T,
    pub peak_lr: T,
    pub final_lr: T,
    pub wsd_decay_shape: DecayShape,
}

impl<T: Scalar> ScheduleSpec<T> {
    pub fn cosine(total_steps: u64, warmup_frac: T, peak_lr: T, final_lr: T) -> Result<Self> {
        Self {
            kind: ScheduleKind::Cosine,
            total_steps,
            warmup_frac,
            decay_frac: T::zero(),
            peak_lr,
            final_lr,
            wsd_decay_shape: DecayShape::Linear,
        }
        .validated()
    }

    pub fn wsd(
        total_steps: u64,
        warmup_frac: T,
        decay_frac: T,
        peak_lr: T,
        final_lr: T,
    ) -> Result<Self> {
        Self {
            kind: ScheduleKind::Wsd,
            total_steps,
            warmup_frac,
            decay_frac,
            peak_lr,
            final_lr,
            wsd_decay_shape: DecayShape::Linear,
        }
        .validated()
    }

    /// Constant at `peak_lr` after warmup; `final_lr` is pinned to the peak.
    /// A zero rate is allowed here (no-op training runs).
    pub fn constant(total_steps: u64, warmup_frac: T, peak_lr: T) -> Result<Self> {
        Self {
            kind: ScheduleKind::Constant,
            total_steps,
            warmup_frac,
            decay_frac: T::zero(),
            peak_lr,
            final_lr: peak_lr,
            wsd_decay_shape: DecayShape::Linear,
        }
        .validated()
    }

    pub fn with_decay_shape(mut self, shape: DecayShape) -> Self {
        self.wsd_decay_shape = shape;
        self
    }

    pub fn validated(self) -> Result<Self> {
        if self.total_steps == 0 {
            return Err(Error::Parameter("total_steps must be positive".into()));
        }
        let peak_ok = if self.kind == ScheduleKind::Constant {
            self.peak_lr >= T::zero()
        } else {
            self.peak_lr > T::zero()
        };
        if !peak_ok {
            return Err(Error::Parameter("peak_lr must be positive".into()));
        }
        if self.warmup_frac < T::zero() || self.warmup_frac >= T::one() {
            return Err(Error::Parameter("warmup_frac must lie in [0, 1)".into()));
        }
        match self.kind {
            ScheduleKind::Cosine => {
                if self.final_lr < T::zero() || self.final_lr >= self.peak_lr {
                    return Err(Error::Parameter(
                        "cosine schedule needs peak_lr > final_lr >= 0".into(),
                    ));
                }
            }
            ScheduleKind::Wsd => {
                if self.final_lr < T::zero() || self.final_lr >= self.peak_lr {
                    return Err(Error::Parameter(
                        "wsd schedule needs peak_lr > final_lr >= 0".into(),
                    ));
                }
                if self.decay_frac <= T::zero() || self.decay_frac > T::one() {
                    return Err(Error::Parameter("decay_frac must lie in (0, 1]".into()));
                }
                if self.warmup_frac + self.decay_frac > T::one() {
                    return Err(Error::Parameter(
                        "warmup_frac + decay_frac must not exceed 1".into(),
                    ));
                }
            }
            ScheduleKind::Constant => {}
        }
        Ok(self)
    }

    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_frac.as_f64() * self.total_steps as f64).round() as u64
    }

    /// First step of the WSD decay leg.
    pub fn decay_start(&self) -> u64 {
        self.total_steps - (self.decay_frac.as_f64() * self.total_steps as f64).round() as u64
    }

    /// Learning rate at `step in [0, total_steps]`.
    pub fn lr_at(&self, step: u64) -> Result<T> {
        if step > self.total_steps {
            return Err(Error::Parameter(format!(
                "step {step} out of range [0, {}]",
                self.total_steps
            )));
        }
        let warmup = self.warmup_steps();
        if step <= warmup && warmup > 0 {
            return Ok(self.peak_lr * T::from_f64(step as f64 / warmup as f64));
        }
        if step == self.total_steps {
            return Ok(self.final_lr);
        }
        match self.kind {
            ScheduleKind::Constant => Ok(self.peak_lr),
            ScheduleKind::Cosine => {
                let span = (self.total_steps - warmup) as f64;
                let tau = (step - warmup) as f64 / span;
                let floor = self.final_lr / self.peak_lr;
                let cos_term =
                    T::from_f64(0.5 * (1.0 + (std::f64::consts::PI * tau).cos()));
                Ok(self.peak_lr * (floor + (T::one() - floor) * cos_term))
            }
            ScheduleKind::Wsd => {
                let decay_start = self.decay_start();
                if step < decay_start {
                    return Ok(self.peak_lr);
                }
                let span = (self.total_steps - decay_start) as f64;
                let tau = (step - decay_start) as f64 / span;
                let mix = match self.wsd_decay_shape {
                    DecayShape::Linear => T::from_f64(1.0 - tau),
                    DecayShape::Cosine => {
                        T::from_f64(0.5 * (1.0 + (std::f64::consts::PI * tau).cos()))
                    }
                };
                Ok(self.final_lr + (self.peak_lr - self.final_lr) * mix)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_hits_peak_at_warmup_end_and_zero_at_final() {
        let s = ScheduleSpec::cosine(10_000, 0.1, 3e-2, 0.0).unwrap();
        assert_eq!(s.lr_at(1000).unwrap(), 3e-2);
        assert_eq!(s.lr_at(10_000).unwrap(), 0.0);
        assert_eq!(s.lr_at(0).unwrap(), 0.0);
        // First optimizer step gets a nonzero rate.
        assert!(s.lr_at(1).unwrap() > 0.0);
    }

    #[test]
    fn wsd_plateau_is_flat_at_peak() {
        let s = ScheduleSpec::wsd(10_000, 0.1, 0.1, 1e-2, 0.0).unwrap();
        assert_eq!(s.lr_at(5000).unwrap(), 1e-2);
        assert_eq!(s.lr_at(1000).unwrap(), 1e-2);
        assert_eq!(s.lr_at(8999).unwrap(), 1e-2);
        assert!(s.lr_at(9500).unwrap() < 1e-2);
        assert_eq!(s.lr_at(10_000).unwrap(), 0.0);
    }

    #[test]
    fn constant_after_warmup() {
        let s = ScheduleSpec::constant(100, 0.1, 0.5).unwrap();
        assert_eq!(s.lr_at(5).unwrap(), 0.25);
        assert_eq!(s.lr_at(50).unwrap(), 0.5);
        assert_eq!(s.lr_at(100).unwrap(), 0.5);
    }

    #[test]
    fn constant_allows_zero_rate() {
        let s = ScheduleSpec::constant(10, 0.0, 0.0).unwrap();
        for step in 0..=10 {
            assert_eq!(s.lr_at(step).unwrap(), 0.0);
        }
        assert!(ScheduleSpec::cosine(10, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn out_of_range_step_errors() {
        let s = ScheduleSpec::constant(10, 0.0, 1.0).unwrap();
        assert!(matches!(s.lr_at(11), Err(Error::Parameter(_))));
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(ScheduleSpec::cosine(100, 0.1, 0.0, 0.0).is_err());
        assert!(ScheduleSpec::cosine(100, 1.0, 1.0, 0.0).is_err());
        assert!(ScheduleSpec::wsd(100, 0.6, 0.5, 1.0, 0.0).is_err());
        assert!(ScheduleSpec::wsd(100, 0.1, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn continuity_and_monotone_decay() {
        let s = ScheduleSpec::<f64>::cosine(1000, 0.1, 1.0, 0.0).unwrap();
        let warmup = s.warmup_steps() as f64;
        let decay = (1000 - s.warmup_steps()) as f64;
        let bound = 1.0 * (2.0 / warmup + std::f64::consts::PI / decay);
        let mut prev = s.lr_at(0).unwrap();
        for step in 1..=1000 {
            let lr = s.lr_at(step).unwrap();
            assert!(lr >= 0.0);
            assert!((lr - prev).abs() <= bound, "jump at step {step}");
            if step > s.warmup_steps() {
                assert!(lr <= prev + 1e-15, "not monotone at step {step}");
            }
            prev = lr;
        }
    }
}
