//! Spectral steepest descent in the Kronecker-whitened basis: heavy-ball
//! momentum, amortized curvature refresh, whiten -> matrix sign -> unwhiten,
//! and norm grafting.

use crate::error::Result;
use crate::linalg::Matrix;
use crate::optim::{apply_update, check_step_inputs, StepContext, StepGuard, UpdateReport};
use crate::precond::{KroneckerStats, PrecondConfig, PrecondMode};
use crate::scalar::Scalar;
use crate::spectral::{msign_exact, msign_ns, NsConfig};

#[derive(Clone, Debug)]
pub struct MousseConfig<T> {
    /// Heavy-ball momentum coefficient (`M <- beta*M + G`, no dampening).
    pub beta: T,
    pub ns: NsConfig<T>,
    /// Transplant the whitened-space sign norm onto the unwhitened direction.
    pub grafting: bool,
    pub precond: PrecondConfig<T>,
    pub nesterov: bool,
    /// Use the exact SVD-based sign instead of Newton-Schulz (oracle runs).
    pub exact_sign: bool,
}

impl<T: Scalar> Default for MousseConfig<T> {
    fn default() -> Self {
        Self {
            beta: T::from_f64(0.95),
            ns: NsConfig::ns5(),
            grafting: true,
            precond: PrecondConfig::default(),
            nesterov: false,
            exact_sign: false,
        }
    }
}

impl<T: Scalar> MousseConfig<T> {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.precond.alpha = T::from_f64(alpha);
        self
    }

    pub fn with_mode(mut self, mode: PrecondMode) -> Self {
        self.precond.mode = mode;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.precond.eps = T::from_f64(eps);
        self
    }

    pub fn with_refresh_interval(mut self, t: u64) -> Self {
        self.precond.refresh_interval = t;
        self
    }
}

#[derive(Clone, Debug)]
pub struct MousseState<T> {
    pub(crate) m: Matrix<T>,
    pub(crate) stats: KroneckerStats<T>,
    pub(crate) beta: T,
    pub(crate) ns: NsConfig<T>,
    pub(crate) grafting: bool,
    pub(crate) nesterov: bool,
    pub(crate) exact_sign: bool,
    pub(crate) guard: StepGuard,
}

impl<T: Scalar> MousseState<T> {
    pub fn new(rows: usize, cols: usize, cfg: MousseConfig<T>) -> Result<Self> {
        Ok(Self {
            m: Matrix::zeros(rows, cols),
            stats: KroneckerStats::new(rows, cols, cfg.precond)?,
            beta: cfg.beta,
            ns: cfg.ns,
            grafting: cfg.grafting,
            nesterov: cfg.nesterov,
            exact_sign: cfg.exact_sign,
            guard: StepGuard::default(),
        })
    }

    pub fn stats(&self) -> &KroneckerStats<T> {
        &self.stats
    }

    pub fn momentum(&self) -> &Matrix<T> {
        &self.m
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

        // Curvature statistics always accumulate the raw gradient, not the
        // momentum; the whitening applies to the momentum.
        self.stats.stats_update(grad)?;
        if self.stats.due_for_refresh() {
            self.stats.refresh()?;
        }

        let whitened = self.stats.whiten(&basis)?;
        let signed = if self.exact_sign {
            msign_exact(&whitened)?
        } else {
            msign_ns(&whitened, &self.ns)?
        };
        let gamma = signed.frobenius_norm();
        let mut update = self.stats.unwhiten(&signed)?;
        if self.grafting {
            let norm = update.frobenius_norm();
            update = update.scale(gamma / (norm + T::from_f64(1e-12)));
        }

        let (new_param, mut report) = apply_update(param, &update, ctx)?;
        if self.grafting {
            report.graft_gamma = Some(gamma);
        }
        Ok((new_param, report))
    }
}
