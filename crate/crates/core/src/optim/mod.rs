//! Uniform stepper interface over seven optimizers: mousse, muon, shampoo,
//! soap, adamw, lion, and the elementwise-whitened variant.
//!
//! Every stepper consumes `(param, grad, ctx)` and returns the new parameter
//! plus an [`UpdateReport`]. Weight decay is decoupled: parameters shrink by
//! `1 - lr * wd` before the update is subtracted, for every optimizer.

mod adamw;
mod elementwise;
mod lion;
mod mousse;
mod muon;
mod shampoo;
mod soap;

pub use adamw::{AdamConfig, AdamState};
pub use elementwise::{ElementwiseConfig, ElementwiseState};
pub use lion::{LionConfig, LionState};
pub use mousse::{MousseConfig, MousseState};
pub use muon::{MuonConfig, MuonState};
pub use shampoo::{ShampooConfig, ShampooState};
pub use soap::{SoapConfig, SoapState};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::precond::KroneckerStats;
use crate::scalar::Scalar;

/// Per-step inputs shared by all steppers.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<T> {
    pub lr: T,
    pub weight_decay: T,
    /// 1-based, strictly increasing per optimizer instance.
    pub step_index: u64,
}

/// What a step did: the update matrix `u` (the parameter moved by `-lr * u`),
/// its RMS, and the grafted norm when grafting is on.
#[derive(Clone, Debug)]
pub struct UpdateReport<T> {
    pub update: Matrix<T>,
    /// `||update||_F / sqrt(rows * cols)`.
    pub rms: T,
    pub graft_gamma: Option<T>,
}

/// Validates the context and enforces strictly increasing step indices.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct StepGuard {
    last: u64,
}

impl StepGuard {
    pub fn admit<T: Scalar>(&mut self, ctx: &StepContext<T>) -> Result<()> {
        if ctx.lr < T::zero() || !ctx.lr.is_finite() {
            return Err(Error::Parameter(format!(
                "learning rate must be finite and >= 0, got {}",
                ctx.lr
            )));
        }
        if ctx.weight_decay < T::zero() || !ctx.weight_decay.is_finite() {
            return Err(Error::Parameter(format!(
                "weight decay must be finite and >= 0, got {}",
                ctx.weight_decay
            )));
        }
        if ctx.step_index == 0 || ctx.step_index <= self.last {
            return Err(Error::Parameter(format!(
                "step_index must be positive and strictly increasing, got {} after {}",
                ctx.step_index, self.last
            )));
        }
        self.last = ctx.step_index;
        Ok(())
    }

    pub fn last(&self) -> u64 {
        self.last
    }

    pub fn restore(last: u64) -> Self {
        Self { last }
    }
}

pub(crate) fn check_step_inputs<T: Scalar>(
    param: &Matrix<T>,
    grad: &Matrix<T>,
    expect: (usize, usize),
) -> Result<()> {
    if param.shape() != expect || grad.shape() != expect {
        return Err(Error::Dimension(format!(
            "param {:?} / grad {:?} do not match optimizer shape {:?}",
            param.shape(),
            grad.shape(),
            expect
        )));
    }
    if !grad.is_finite() {
        return Err(Error::Numeric("gradient has non-finite entries".into()));
    }
    Ok(())
}

/// Decoupled weight decay followed by the update: `p * (1 - lr*wd) - lr * u`.
pub(crate) fn apply_update<T: Scalar>(
    param: &Matrix<T>,
    update: &Matrix<T>,
    ctx: &StepContext<T>,
) -> Result<(Matrix<T>, UpdateReport<T>)> {
    if !update.is_finite() {
        return Err(Error::Numeric("update has non-finite entries".into()));
    }
    let decay = T::one() - ctx.lr * ctx.weight_decay;
    let new_param = param.zip_map(update, |p, u| p * decay - ctx.lr * u);
    let rms = update.rms();
    Ok((
        new_param,
        UpdateReport {
            update: update.clone(),
            rms,
            graft_gamma: None,
        },
    ))
}

/// Tagged union over the per-algorithm states, with a uniform step contract.
#[derive(Clone, Debug)]
pub enum OptimizerState<T> {
    Mousse(MousseState<T>),
    Muon(MuonState<T>),
    Shampoo(ShampooState<T>),
    Soap(SoapState<T>),
    AdamW(AdamState<T>),
    Lion(LionState<T>),
    Elementwise(ElementwiseState<T>),
}

impl<T: Scalar> OptimizerState<T> {
    pub fn step(
        &mut self,
        param: &Matrix<T>,
        grad: &Matrix<T>,
        ctx: &StepContext<T>,
    ) -> Result<(Matrix<T>, UpdateReport<T>)> {
        match self {
            OptimizerState::Mousse(s) => s.step(param, grad, ctx),
            OptimizerState::Muon(s) => s.step(param, grad, ctx),
            OptimizerState::Shampoo(s) => s.step(param, grad, ctx),
            OptimizerState::Soap(s) => s.step(param, grad, ctx),
            OptimizerState::AdamW(s) => s.step(param, grad, ctx),
            OptimizerState::Lion(s) => s.step(param, grad, ctx),
            OptimizerState::Elementwise(s) => s.step(param, grad, ctx),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerState::Mousse(_) => "mousse",
            OptimizerState::Muon(_) => "muon",
            OptimizerState::Shampoo(_) => "shampoo",
            OptimizerState::Soap(_) => "soap",
            OptimizerState::AdamW(_) => "adamw",
            OptimizerState::Lion(_) => "lion",
            OptimizerState::Elementwise(_) => "elementwise",
        }
    }

    /// Kronecker statistics, for optimizers that maintain them.
    pub fn stats(&self) -> Option<&KroneckerStats<T>> {
        match self {
            OptimizerState::Mousse(s) => Some(s.stats()),
            OptimizerState::Shampoo(s) => Some(s.stats()),
            OptimizerState::Soap(s) => Some(s.stats()),
            _ => None,
        }
    }
}

/// Entrywise sign with `sign(0) = 0`.
pub(crate) fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rand_matrix, RandKind};
    use crate::spectral::NsConfig;

    fn ctx(lr: f64, wd: f64, step: u64) -> StepContext<f64> {
        StepContext {
            lr,
            weight_decay: wd,
            step_index: step,
        }
    }

    fn all_states(rows: usize, cols: usize) -> Vec<OptimizerState<f64>> {
        vec![
            OptimizerState::Mousse(
                MousseState::new(rows, cols, MousseConfig::default()).unwrap(),
            ),
            OptimizerState::Muon(MuonState::new(rows, cols, MuonConfig::default()).unwrap()),
            OptimizerState::Shampoo(
                ShampooState::new(rows, cols, ShampooConfig::default()).unwrap(),
            ),
            OptimizerState::Soap(SoapState::new(rows, cols, SoapConfig::default()).unwrap()),
            OptimizerState::AdamW(AdamState::new(rows, cols, AdamConfig::default()).unwrap()),
            OptimizerState::Lion(LionState::new(rows, cols, LionConfig::default()).unwrap()),
            OptimizerState::Elementwise(
                ElementwiseState::new(rows, cols, ElementwiseConfig::default()).unwrap(),
            ),
        ]
    }

    #[test]
    fn step_index_must_increase() {
        let mut s = OptimizerState::Muon(MuonState::new(2, 2, MuonConfig::default()).unwrap());
        let p = Matrix::<f64>::zeros(2, 2);
        let g = Matrix::<f64>::identity(2);
        s.step(&p, &g, &ctx(0.1, 0.0, 1)).unwrap();
        assert!(s.step(&p, &g, &ctx(0.1, 0.0, 1)).is_err());
        assert!(s.step(&p, &g, &ctx(0.1, 0.0, 2)).is_ok());
    }

    #[test]
    fn weight_decay_is_decoupled_for_every_stepper() {
        // With lr = 0 the parameter changes by exactly the decay factor
        // (here 1) while the update is still computed and reported.
        let p: Matrix<f64> = rand_matrix(3, 4, 1, RandKind::Gaussian).unwrap();
        let g: Matrix<f64> = rand_matrix(3, 4, 2, RandKind::Gaussian).unwrap();
        for mut s in all_states(3, 4) {
            let (new_p, report) = s.step(&p, &g, &ctx(0.0, 0.5, 1)).unwrap();
            assert_eq!(new_p, p, "{} moved params at lr=0", s.name());
            assert!(report.update.frobenius_norm() > 0.0, "{}", s.name());
            assert!((report.rms - report.update.rms()).abs() < 1e-15);
        }
    }

    #[test]
    fn replaying_a_stream_is_bit_exact() {
        let grads: Vec<Matrix<f64>> = (0..20)
            .map(|t| rand_matrix(4, 3, 50 + t, RandKind::Gaussian).unwrap())
            .collect();
        for (a, b) in all_states(4, 3).into_iter().zip(all_states(4, 3)) {
            let run = |mut s: OptimizerState<f64>| {
                let mut p: Matrix<f64> = rand_matrix(4, 3, 9, RandKind::Gaussian).unwrap();
                for (t, g) in grads.iter().enumerate() {
                    let (np, _) = s.step(&p, g, &ctx(0.05, 0.01, t as u64 + 1)).unwrap();
                    p = np;
                }
                p
            };
            let pa = run(a);
            let pb = run(b);
            assert!(pa
                .data()
                .iter()
                .zip(pb.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let mut s = OptimizerState::AdamW(AdamState::new(2, 2, AdamConfig::default()).unwrap());
        let p = Matrix::<f64>::zeros(2, 2);
        let g = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(
            s.step(&p, &g, &ctx(0.1, 0.0, 1)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mousse_with_alpha_zero_matches_muon() {
        let mut mousse = MousseState::new(
            6,
            4,
            MousseConfig {
                grafting: false,
                ..MousseConfig::default()
            }
            .with_alpha(0.0),
        )
        .unwrap();
        let mut muon = MuonState::new(
            6,
            4,
            MuonConfig {
                beta: 0.95,
                ns: NsConfig::ns5(),
                nesterov: false,
            },
        )
        .unwrap();
        let mut pa: Matrix<f64> = rand_matrix(6, 4, 3, RandKind::Gaussian).unwrap();
        let mut pb = pa.clone();
        for t in 1..=50u64 {
            let g: Matrix<f64> = rand_matrix(6, 4, 700 + t, RandKind::Gaussian).unwrap();
            let c = ctx(0.05, 0.01, t);
            pa = mousse.step(&pa, &g, &c).unwrap().0;
            pb = muon.step(&pb, &g, &c).unwrap().0;
        }
        let rel = (&pa - &pb).frobenius_norm() / pb.frobenius_norm();
        assert!(rel < 1e-9, "alpha=0 reduction defect {rel}");
    }
}
