//! Kronecker-factored preconditioning without a sign step: the momentum gets
//! one fractional-power sandwich per side.

use crate::error::Result;
use crate::linalg::Matrix;
use crate::optim::{apply_update, check_step_inputs, StepContext, StepGuard, UpdateReport};
use crate::precond::{KroneckerStats, PrecondConfig};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct ShampooConfig<T> {
    pub beta: T,
    /// Defaults to `alpha = 0.25`: one quarter power per side.
    pub precond: PrecondConfig<T>,
}

impl<T: Scalar> Default for ShampooConfig<T> {
    fn default() -> Self {
        Self {
            beta: T::from_f64(0.95),
            precond: PrecondConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ShampooState<T> {
    pub(crate) m: Matrix<T>,
    pub(crate) beta: T,
    pub(crate) stats: KroneckerStats<T>,
    pub(crate) guard: StepGuard,
}

impl<T: Scalar> ShampooState<T> {
    pub fn new(rows: usize, cols: usize, cfg: ShampooConfig<T>) -> Result<Self> {
        Ok(Self {
            m: Matrix::zeros(rows, cols),
            beta: cfg.beta,
            stats: KroneckerStats::new(rows, cols, cfg.precond)?,
            guard: StepGuard::default(),
        })
    }

    pub fn stats(&self) -> &KroneckerStats<T> {
        &self.stats
    }

    pub fn step(
        &mut self,
        param: &Matrix<T>,
        grad: &Matrix<T>,
        ctx: &StepContext<T>,
    ) -> Result<(Matrix<T>, UpdateReport<T>)> {
        check_step_inputs(param, grad, self.m.shape())?;
        self.guard.admit(ctx)?;
        self.m.momentum_update(grad, self.beta);
        self.stats.stats_update(grad)?;
        if self.stats.due_for_refresh() {
            self.stats.refresh()?;
        }
        let update = self.stats.precondition(&self.m)?;
        apply_update(param, &update, ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rand_matrix, RandKind};
    use crate::precond::PrecondMode;

    fn ctx(step: u64) -> StepContext<f64> {
        StepContext {
            lr: 0.1,
            weight_decay: 0.0,
            step_index: step,
        }
    }

    #[test]
    fn identity_statistics_give_identity_preconditioner() {
        let cfg = ShampooConfig::<f64> {
            beta: 0.0,
            ..ShampooConfig::default()
        };
        let mut s = ShampooState::new(3, 3, cfg).unwrap();
        s.stats = KroneckerStats::from_factors(
            3,
            3,
            *s.stats.config(),
            Some(Matrix::identity(3)),
            Some(Matrix::identity(3)),
            1,
            true,
        )
        .unwrap();
        let p = Matrix::<f64>::zeros(3, 3);
        let g: Matrix<f64> = rand_matrix(3, 3, 5, RandKind::Gaussian).unwrap();
        let (_, report) = s.step(&p, &g, &ctx(1)).unwrap();
        // With beta=0 the momentum is the gradient; identity stats damp to a
        // scaler within O(alpha * eps) of one.
        let rel = (&report.update - &g).frobenius_norm() / g.frobenius_norm();
        assert!(rel < 1e-4, "identity preconditioner defect {rel}");
    }

    #[test]
    fn diagonal_factors_apply_quarter_powers_entrywise() {
        let l_diag = [4.0, 1.0];
        let r_diag = [9.0, 1.0, 0.25];
        let cfg = PrecondConfig::<f64> {
            eps: 1e-12,
            ..PrecondConfig::default()
        };
        let mut s = ShampooState::new(2, 3, ShampooConfig { beta: 0.0, precond: cfg }).unwrap();
        s.stats = KroneckerStats::from_factors(
            2,
            3,
            cfg,
            Some(Matrix::from_diag(&l_diag)),
            Some(Matrix::from_diag(&r_diag)),
            1,
            true,
        )
        .unwrap();
        let p = Matrix::<f64>::zeros(2, 3);
        let g: Matrix<f64> = rand_matrix(2, 3, 6, RandKind::Gaussian).unwrap();
        let (_, report) = s.step(&p, &g, &ctx(1)).unwrap();

        let ltr: f64 = l_diag.iter().sum();
        let rtr: f64 = r_diag.iter().sum();
        for i in 0..2 {
            for j in 0..3 {
                let lhat = 2.0 * l_diag[i] / ltr;
                let rhat = 3.0 * r_diag[j] / rtr;
                let expect = lhat.powf(-0.25) * g[(i, j)] * rhat.powf(-0.25);
                let got = report.update[(i, j)];
                assert!(
                    (got - expect).abs() < 1e-6 * expect.abs().max(1.0),
                    "({i},{j}): got {got}, expect {expect}"
                );
            }
        }
    }

    #[test]
    fn alpha_zero_reduces_to_plain_momentum() {
        let cfg = ShampooConfig::<f64> {
            beta: 0.9,
            precond: PrecondConfig {
                alpha: 0.0,
                ..PrecondConfig::default()
            },
        };
        let mut s = ShampooState::new(4, 4, cfg).unwrap();
        let p = Matrix::<f64>::zeros(4, 4);
        let mut m_ref = Matrix::<f64>::zeros(4, 4);
        for t in 1..=12u64 {
            let g: Matrix<f64> = rand_matrix(4, 4, 80 + t, RandKind::Gaussian).unwrap();
            m_ref.momentum_update(&g, 0.9);
            let (_, report) = s.step(&p, &g, &ctx(t)).unwrap();
            assert!(report.update.max_abs_diff(&m_ref) < 1e-12);
        }
    }

    #[test]
    fn single_sided_modes_run() {
        for mode in [PrecondMode::LeftOnly, PrecondMode::RightOnly] {
            let cfg = ShampooConfig::<f64> {
                beta: 0.95,
                precond: PrecondConfig {
                    mode,
                    ..PrecondConfig::default()
                },
            };
            let mut s = ShampooState::new(3, 5, cfg).unwrap();
            let mut p: Matrix<f64> = rand_matrix(3, 5, 7, RandKind::Gaussian).unwrap();
            for t in 1..=15u64 {
                let g: Matrix<f64> = rand_matrix(3, 5, 90 + t, RandKind::Gaussian).unwrap();
                p = s.step(&p, &g, &ctx(t)).unwrap().0;
            }
            assert!(p.is_finite());
        }
    }
}
