//! Matrix sign in Adam's diagonal geometry: the raw gradient is whitened
//! entrywise by `sqrt(v)`, signed, then unwhitened by the same factor.
//!
//! The second moment accumulates the raw gradient, never the orthogonalized
//! update.

use crate::error::Result;
use crate::linalg::Matrix;
use crate::optim::{apply_update, check_step_inputs, StepContext, StepGuard, UpdateReport};
use crate::scalar::Scalar;
use crate::spectral::{msign_ns, NsConfig};

#[derive(Clone, Debug)]
pub struct ElementwiseConfig<T> {
    pub beta2: T,
    pub eps: T,
    pub ns: NsConfig<T>,
}

impl<T: Scalar> Default for ElementwiseConfig<T> {
    fn default() -> Self {
        Self {
            beta2: T::from_f64(0.95),
            eps: T::from_f64(1e-8),
            ns: NsConfig::ns5(),
        }
    }
}

/// Second-moment slice of the Adam state plus the sign-iteration config.
#[derive(Clone, Debug)]
pub struct ElementwiseState<T> {
    pub(crate) v: Matrix<T>,
    pub(crate) beta2: T,
    pub(crate) eps: T,
    pub(crate) ns: NsConfig<T>,
    pub(crate) guard: StepGuard,
}

impl<T: Scalar> ElementwiseState<T> {
    pub fn new(rows: usize, cols: usize, cfg: ElementwiseConfig<T>) -> Result<Self> {
        Ok(Self {
            v: Matrix::zeros(rows, cols),
            beta2: cfg.beta2,
            eps: cfg.eps,
            ns: cfg.ns,
            guard: StepGuard::default(),
        })
    }

    pub fn step(
        &mut self,
        param: &Matrix<T>,
        grad: &Matrix<T>,
        ctx: &StepContext<T>,
    ) -> Result<(Matrix<T>, UpdateReport<T>)> {
        check_step_inputs(param, grad, self.v.shape())?;
        self.guard.admit(ctx)?;
        let beta2 = self.beta2;
        let one_minus = T::one() - beta2;
        for (v, &g) in self.v.data_mut().iter_mut().zip(grad.data()) {
            *v = beta2 * *v + one_minus * g * g;
        }
        let eps = self.eps;
        let denom = self.v.map(|v| v.sqrt() + eps);
        let whitened = grad.zip_map(&denom, |g, d| g / d);
        let signed = msign_ns(&whitened, &self.ns)?;
        let update = signed.zip_map(&denom, |s, d| s / d);
        apply_update(param, &update, ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rand_matrix, RandKind};
    use crate::optim::{MuonConfig, MuonState};

    fn ctx(step: u64) -> StepContext<f64> {
        StepContext {
            lr: 0.1,
            weight_decay: 0.0,
            step_index: step,
        }
    }

    #[test]
    fn uniform_second_moment_rescales_the_sign() {
        // v = c everywhere: u = msign(g) / sqrt(c) by scale invariance.
        let c = 4.0;
        let mut s = ElementwiseState::new(3, 3, ElementwiseConfig {
            eps: 0.0,
            ..ElementwiseConfig::default()
        })
        .unwrap();
        s.v = Matrix::from_fn(3, 3, |_, _| c);
        s.beta2 = 1.0; // freeze v for the check
        let p = Matrix::<f64>::zeros(3, 3);
        let g: Matrix<f64> = rand_matrix(3, 3, 12, RandKind::Gaussian).unwrap();
        let (_, report) = s.step(&p, &g, &ctx(1)).unwrap();
        let expect = msign_ns(&g, &NsConfig::ns5()).unwrap().scale(1.0 / c.sqrt());
        assert!(report.update.max_abs_diff(&expect) < 1e-9);
    }

    #[test]
    fn unit_second_moment_reduces_to_muon_without_momentum() {
        let mut s = ElementwiseState::new(4, 4, ElementwiseConfig {
            eps: 0.0,
            ..ElementwiseConfig::default()
        })
        .unwrap();
        s.v = Matrix::from_fn(4, 4, |_, _| 1.0);
        s.beta2 = 1.0;
        let mut muon = MuonState::new(4, 4, MuonConfig {
            beta: 0.0,
            ns: NsConfig::ns5(),
            nesterov: false,
        })
        .unwrap();
        let p = Matrix::<f64>::zeros(4, 4);
        let g: Matrix<f64> = rand_matrix(4, 4, 13, RandKind::Gaussian).unwrap();
        let (_, r1) = s.step(&p, &g, &ctx(1)).unwrap();
        let (_, r2) = muon.step(&p, &g, &ctx(1)).unwrap();
        assert!(r1.update.max_abs_diff(&r2.update) < 1e-9);
    }

    #[test]
    fn diagonal_case_matches_direct_evaluation() {
        // Diagonal gradient with frozen diagonal-consistent v: each entry is
        // sign(g) scaled by 1/sqrt(v).
        let mut s = ElementwiseState::new(2, 2, ElementwiseConfig {
            eps: 0.0,
            ns: NsConfig::convergent(),
            ..ElementwiseConfig::default()
        })
        .unwrap();
        s.v = Matrix::new(2, 2, vec![4.0, 1.0, 1.0, 9.0]).unwrap();
        s.beta2 = 1.0;
        let p = Matrix::<f64>::zeros(2, 2);
        let g = Matrix::from_diag(&[3.0, -5.0]);
        let (_, report) = s.step(&p, &g, &ctx(1)).unwrap();
        // whitened = diag(3/2, -5/3); msign = diag(1, -1); update = diag(1/2, -1/3).
        assert!((report.update[(0, 0)] - 0.5).abs() < 1e-4);
        assert!((report.update[(1, 1)] + 1.0 / 3.0).abs() < 1e-4);
        assert!(report.update[(0, 1)].abs() < 1e-6);
    }
}
