//! Sign-momentum optimizer; handles the vector-shaped parameters the
//! matrix-wise optimizers do not cover.

use crate::error::Result;
use crate::linalg::Matrix;
use crate::optim::{
    apply_update, check_step_inputs, sign, StepContext, StepGuard, UpdateReport,
};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct LionConfig<T> {
    pub beta1: T,
    pub beta2: T,
}

impl<T: Scalar> Default for LionConfig<T> {
    fn default() -> Self {
        // Conventional defaults; tune per problem.
        Self {
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.99),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LionState<T> {
    pub(crate) m: Matrix<T>,
    pub(crate) beta1: T,
    pub(crate) beta2: T,
    pub(crate) guard: StepGuard,
}

impl<T: Scalar> LionState<T> {
    pub fn new(rows: usize, cols: usize, cfg: LionConfig<T>) -> Result<Self> {
        Ok(Self {
            m: Matrix::zeros(rows, cols),
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            guard: StepGuard::default(),
        })
    }

    pub fn step(
        &mut self,
        param: &Matrix<T>,
        grad: &Matrix<T>,
        ctx: &StepContext<T>,
    ) -> Result<(Matrix<T>, UpdateReport<T>)> {
        check_step_inputs(param, grad, self.m.shape())?;
        self.guard.admit(ctx)?;
        let beta1 = self.beta1;
        let update = self
            .m
            .zip_map(grad, |m, g| sign(beta1 * m + (T::one() - beta1) * g));
        self.m.ema_update(grad, self.beta2);
        apply_update(param, &update, ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rand_matrix, RandKind};

    fn ctx(step: u64) -> StepContext<f64> {
        StepContext {
            lr: 1e-3,
            weight_decay: 0.0,
            step_index: step,
        }
    }

    #[test]
    fn first_step_is_sign_of_gradient() {
        let mut s = LionState::new(2, 2, LionConfig::default()).unwrap();
        let p = Matrix::<f64>::zeros(2, 2);
        let g = Matrix::new(2, 2, vec![0.3, -4.0, 0.0, 2.0]).unwrap();
        let (_, report) = s.step(&p, &g, &ctx(1)).unwrap();
        let expect = Matrix::new(2, 2, vec![1.0, -1.0, 0.0, 1.0]).unwrap();
        assert_eq!(report.update, expect);
    }

    #[test]
    fn updates_live_in_sign_codomain() {
        let mut s = LionState::new(4, 3, LionConfig::default()).unwrap();
        let mut p = Matrix::<f64>::zeros(4, 3);
        for t in 1..=50u64 {
            let g: Matrix<f64> = rand_matrix(4, 3, 70 + t, RandKind::Gaussian).unwrap();
            let (np, report) = s.step(&p, &g, &ctx(t)).unwrap();
            p = np;
            let nnz = report
                .update
                .data()
                .iter()
                .filter(|&&x| x != 0.0)
                .count();
            assert!(report
                .update
                .data()
                .iter()
                .all(|&x| x == 0.0 || x == 1.0 || x == -1.0));
            let expect_norm = (nnz as f64).sqrt();
            assert!((report.update.frobenius_norm() - expect_norm).abs() < 1e-12);
        }
    }
}
