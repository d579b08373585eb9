//! Decoupled-weight-decay Adam with bias correction.

use crate::error::Result;
use crate::linalg::Matrix;
use crate::optim::{apply_update, check_step_inputs, StepContext, StepGuard, UpdateReport};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        Self {
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.95),
            eps: T::from_f64(1e-8),
        }
    }
}

/// First/second moment buffers with the bias-corrected update rule. Used
/// directly by adamw and inside soap's rotated frame.
#[derive(Clone, Debug)]
pub(crate) struct AdamMoments<T> {
    pub m: Matrix<T>,
    pub v: Matrix<T>,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub t: u64,
}

impl<T: Scalar> AdamMoments<T> {
    pub fn new(rows: usize, cols: usize, cfg: AdamConfig<T>) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            t: 0,
        }
    }

    /// Advances the moments on `g` and returns `m_hat / (sqrt(v_hat) + eps)`.
    pub fn update(&mut self, g: &Matrix<T>) -> Matrix<T> {
        self.t += 1;
        self.m.ema_update(g, self.beta1);
        let beta2 = self.beta2;
        let one_minus = T::one() - beta2;
        for (v, &gv) in self.v.data_mut().iter_mut().zip(g.data()) {
            *v = beta2 * *v + one_minus * gv * gv;
        }
        let c1 = T::one() - self.beta1.powi(self.t as i32);
        let c2 = T::one() - self.beta2.powi(self.t as i32);
        let eps = self.eps;
        self.m
            .zip_map(&self.v, |m, v| (m / c1) / ((v / c2).sqrt() + eps))
    }
}

#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub(crate) moments: AdamMoments<T>,
    pub(crate) guard: StepGuard,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(rows: usize, cols: usize, cfg: AdamConfig<T>) -> Result<Self> {
        Ok(Self {
            moments: AdamMoments::new(rows, cols, cfg),
            guard: StepGuard::default(),
        })
    }

    pub fn step(
        &mut self,
        param: &Matrix<T>,
        grad: &Matrix<T>,
        ctx: &StepContext<T>,
    ) -> Result<(Matrix<T>, UpdateReport<T>)> {
        check_step_inputs(param, grad, self.moments.m.shape())?;
        self.guard.admit(ctx)?;
        let update = self.moments.update(grad);
        apply_update(param, &update, ctx)
    }
}
