//! Orthogonalized momentum: heavy-ball accumulation followed by a
//! Newton-Schulz matrix sign of the momentum.

use crate::error::Result;
use crate::linalg::Matrix;
use crate::optim::{apply_update, check_step_inputs, StepContext, StepGuard, UpdateReport};
use crate::scalar::Scalar;
use crate::spectral::{msign_ns, NsConfig};

#[derive(Clone, Debug)]
pub struct MuonConfig<T> {
    pub beta: T,
    pub ns: NsConfig<T>,
    pub nesterov: bool,
}

impl<T: Scalar> Default for MuonConfig<T> {
    fn default() -> Self {
        Self {
            beta: T::from_f64(0.95),
            ns: NsConfig::ns5(),
            nesterov: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MuonState<T> {
    pub(crate) m: Matrix<T>,
    pub(crate) beta: T,
    pub(crate) ns: NsConfig<T>,
    pub(crate) nesterov: bool,
    pub(crate) guard: StepGuard,
}

impl<T: Scalar> MuonState<T> {
    pub fn new(rows: usize, cols: usize, cfg: MuonConfig<T>) -> Result<Self> {
        Ok(Self {
            m: Matrix::zeros(rows, cols),
            beta: cfg.beta,
            ns: cfg.ns,
            nesterov: cfg.nesterov,
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
        self.m.momentum_update(grad, self.beta);
        let basis = if self.nesterov {
            &self.m.scale(self.beta) + grad
        } else {
            self.m.clone()
        };
        let update = msign_ns(&basis, &self.ns)?;
        apply_update(param, &update, ctx)
    }
}
