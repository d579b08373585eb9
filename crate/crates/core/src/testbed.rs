//! Desk-scale differentiable problems with exact gradients and a
//! finite-difference oracle: a Kronecker-structured quadratic whose Hessian is
//! exactly `r_h (x) l_h`, and a two-layer squared-ReLU MLP on teacher-student
//! regression data.

use crate::error::{Error, Result};
use crate::linalg::{mix_seed, rand_matrix, rng::NormalSource, sym_eig, Matrix, RandKind};
use crate::scalar::Scalar;

/// Quadratic `loss(w) = 0.5 * Tr((w - w*)^T l_h (w - w*) r_h)` with optional
/// per-step Gaussian gradient noise. In vec coordinates the Hessian is exactly
/// the Kronecker product `r_h (x) l_h`.
#[derive(Clone, Debug)]
pub struct KronQuadratic<T> {
    pub l_h: Matrix<T>,
    pub r_h: Matrix<T>,
    pub w_star: Matrix<T>,
    pub noise_sigma: T,
    pub seed: u64,
}

impl<T: Scalar> KronQuadratic<T> {
    pub fn new(
        l_h: Matrix<T>,
        r_h: Matrix<T>,
        w_star: Matrix<T>,
        noise_sigma: T,
        seed: u64,
    ) -> Result<Self> {
        if !l_h.is_square() || !r_h.is_square() {
            return Err(Error::Dimension("curvature factors must be square".into()));
        }
        if w_star.shape() != (l_h.rows(), r_h.rows()) {
            return Err(Error::Dimension(format!(
                "w_star shape {:?} does not match factors {}x{}",
                w_star.shape(),
                l_h.rows(),
                r_h.rows()
            )));
        }
        if noise_sigma < T::zero() {
            return Err(Error::Parameter("noise_sigma must be non-negative".into()));
        }
        for (name, f) in [("l_h", &l_h), ("r_h", &r_h)] {
            let eig = sym_eig(f)?;
            if *eig.values.last().unwrap() <= T::zero() {
                return Err(Error::Parameter(format!(
                    "{name} must be positive definite"
                )));
            }
        }
        Ok(Self {
            l_h,
            r_h,
            w_star,
            noise_sigma,
            seed,
        })
    }

    /// Instance with both curvature factors built as `Q^T diag(sigma) Q` from
    /// seeded orthogonal bases, singular values log-spaced down to `1/kappa`.
    ///
    /// The target `w*` is drawn with the error energy of the origin equalized
    /// across Hessian eigendirections (`w* = s * l_h^(-1/2) N r_h^(-1/2)`),
    /// the canonical hard instance for an ill-conditioned quadratic: every
    /// curvature tier carries comparable initial loss, so flat valley
    /// directions matter as much as stiff ones.
    pub fn conditioned(
        rows: usize,
        cols: usize,
        kappa: f64,
        noise_sigma: T,
        seed: u64,
    ) -> Result<Self> {
        Self::conditioned_scaled(rows, cols, kappa, 10.0, noise_sigma, seed)
    }

    /// [`Self::conditioned`] with an explicit scale on the initial error
    /// energy per eigendirection.
    pub fn conditioned_scaled(
        rows: usize,
        cols: usize,
        kappa: f64,
        w_scale: f64,
        noise_sigma: T,
        seed: u64,
    ) -> Result<Self> {
        let (l_h, l_inv_sqrt) = spd_factor(rows, kappa, mix_seed(seed, 0xA))?;
        let (r_h, r_inv_sqrt) = spd_factor(cols, kappa, mix_seed(seed, 0xB))?;
        let n: Matrix<T> = rand_matrix(rows, cols, mix_seed(seed, 0xC), RandKind::Gaussian)?;
        let w_star = l_inv_sqrt
            .matmul(&n)
            .matmul(&r_inv_sqrt)
            .scale(T::from_f64(w_scale));
        Self::new(l_h, r_h, w_star, noise_sigma, seed)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.w_star.shape()
    }

    /// Loss and gradient at `w`; gradient noise is deterministic per
    /// `step_seed`.
    pub fn eval(&self, w: &Matrix<T>, step_seed: u64) -> Result<(T, Matrix<T>)> {
        let (loss, mut grad) = self.eval_noiseless(w)?;
        if self.noise_sigma > T::zero() {
            let mut src = NormalSource::new(mix_seed(self.seed, step_seed));
            for x in grad.data_mut() {
                *x += self.noise_sigma * T::from_f64(src.next_normal());
            }
        }
        Ok((loss, grad))
    }

    /// Loss and exact gradient with the noise turned off.
    pub fn eval_noiseless(&self, w: &Matrix<T>) -> Result<(T, Matrix<T>)> {
        if w.shape() != self.w_star.shape() {
            return Err(Error::Dimension(format!(
                "parameter shape {:?} does not match problem shape {:?}",
                w.shape(),
                self.w_star.shape()
            )));
        }
        let delta = w - &self.w_star;
        let grad = self.l_h.matmul(&delta).matmul(&self.r_h);
        let loss = grad.dot(&delta) * T::from_f64(0.5);
        Ok((loss, grad))
    }
}

/// SPD matrix `Q^T diag(sigma) Q` with log-spaced spectrum, plus its inverse
/// square root.
fn spd_factor<T: Scalar>(n: usize, kappa: f64, seed: u64) -> Result<(Matrix<T>, Matrix<T>)> {
    let q: Matrix<T> = rand_matrix(n, n, seed, RandKind::Orthogonal)?;
    let sigma = crate::linalg::rng::log_spaced_singular_values::<T>(n, kappa);
    let inv_sqrt: Vec<T> = sigma.iter().map(|&s| s.sqrt().recip()).collect();
    let qt = q.transpose();
    Ok((
        qt.scale_cols(&sigma).matmul(&q),
        qt.scale_cols(&inv_sqrt).matmul(&q),
    ))
}

/// Two-layer MLP `y = f(x w1) w2 (+ b)` with `f(z) = max(z, 0)^2`, trained
/// against a hidden teacher of the same architecture.
#[derive(Clone, Debug)]
pub struct MlpProblem<T> {
    w1_init: Matrix<T>,
    w2_init: Matrix<T>,
    /// Optional vector-shaped output bias (1 x k); stands in for the
    /// embedding-like parameters that spectral optimizers hand to Lion.
    bias_init: Option<Matrix<T>>,
    xs: Matrix<T>,
    ys: Matrix<T>,
    batch_size: usize,
    pub seed: u64,
}

/// Construction parameters for [`MlpProblem`].
#[derive(Clone, Copy, Debug)]
pub struct MlpSpec {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub n_samples: usize,
    pub batch_size: usize,
    /// Observation noise added to the teacher's targets.
    pub obs_noise: f64,
    pub with_bias: bool,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self {
            d_in: 8,
            d_hidden: 16,
            d_out: 4,
            n_samples: 256,
            batch_size: 32,
            obs_noise: 1e-3,
            with_bias: false,
        }
    }
}

impl<T: Scalar> MlpProblem<T> {
    pub fn teacher_student(spec: MlpSpec, seed: u64) -> Result<Self> {
        if spec.batch_size == 0 || spec.n_samples < spec.batch_size {
            return Err(Error::Parameter(
                "need n_samples >= batch_size >= 1".into(),
            ));
        }
        let teacher_w1: Matrix<T> =
            spectral_init(spec.d_in, spec.d_hidden, mix_seed(seed, 0x71))?;
        let teacher_w2: Matrix<T> =
            spectral_init(spec.d_hidden, spec.d_out, mix_seed(seed, 0x72))?;
        let xs: Matrix<T> = rand_matrix(
            spec.n_samples,
            spec.d_in,
            mix_seed(seed, 0x73),
            RandKind::Gaussian,
        )?;
        let mut ys = squared_relu(&xs.matmul(&teacher_w1)).matmul(&teacher_w2);
        if spec.obs_noise > 0.0 {
            let mut src = NormalSource::new(mix_seed(seed, 0x74));
            let sigma = T::from_f64(spec.obs_noise);
            for y in ys.data_mut() {
                *y += sigma * T::from_f64(src.next_normal());
            }
        }
        Ok(Self {
            w1_init: spectral_init(spec.d_in, spec.d_hidden, mix_seed(seed, 0x75))?,
            w2_init: spectral_init(spec.d_hidden, spec.d_out, mix_seed(seed, 0x76))?,
            bias_init: spec.with_bias.then(|| Matrix::zeros(1, spec.d_out)),
            xs,
            ys,
            batch_size: spec.batch_size,
            seed,
        })
    }

    /// Initial parameter list: `[w1, w2]` plus the bias when configured.
    pub fn initial_params(&self) -> Vec<Matrix<T>> {
        let mut params = vec![self.w1_init.clone(), self.w2_init.clone()];
        if let Some(b) = &self.bias_init {
            params.push(b.clone());
        }
        params
    }

    pub fn n_batches(&self) -> usize {
        self.xs.rows() / self.batch_size
    }

    pub fn has_bias(&self) -> bool {
        self.bias_init.is_some()
    }

    /// Loss and gradients on one batch, by hand-derived backprop.
    pub fn eval(&self, params: &[Matrix<T>], batch_index: usize) -> Result<(T, Vec<Matrix<T>>)> {
        if batch_index >= self.n_batches() {
            return Err(Error::Parameter(format!(
                "batch_index {batch_index} out of range [0, {})",
                self.n_batches()
            )));
        }
        let lo = batch_index * self.batch_size;
        let x = Matrix::from_fn(self.batch_size, self.xs.cols(), |i, j| self.xs[(lo + i, j)]);
        let y = Matrix::from_fn(self.batch_size, self.ys.cols(), |i, j| self.ys[(lo + i, j)]);
        self.eval_on(params, &x, &y)
    }

    /// Loss over the full dataset (no gradients); the evaluation metric.
    pub fn full_loss(&self, params: &[Matrix<T>]) -> Result<T> {
        let (loss, _) = self.eval_on(params, &self.xs, &self.ys)?;
        Ok(loss)
    }

    fn eval_on(
        &self,
        params: &[Matrix<T>],
        x: &Matrix<T>,
        y: &Matrix<T>,
    ) -> Result<(T, Vec<Matrix<T>>)> {
        let expected = 2 + usize::from(self.bias_init.is_some());
        if params.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} parameter matrices, got {}",
                params.len()
            )));
        }
        let (w1, w2) = (&params[0], &params[1]);
        if w1.shape() != self.w1_init.shape() || w2.shape() != self.w2_init.shape() {
            return Err(Error::Dimension("parameter shape mismatch".into()));
        }
        let batch = x.rows();
        let z = x.matmul(w1);
        let h = squared_relu(&z);
        let mut y_hat = h.matmul(w2);
        if let Some(b) = params.get(2) {
            y_hat = Matrix::from_fn(y_hat.rows(), y_hat.cols(), |i, j| {
                y_hat[(i, j)] + b[(0, j)]
            });
        }
        let resid = &y_hat - y;
        let loss = resid.dot(&resid) / T::from_usize(batch);

        // d loss / d y_hat = 2 * resid / batch
        let dy = resid.scale(T::from_f64(2.0) / T::from_usize(batch));
        let g_w2 = h.transpose().matmul(&dy);
        let dh = dy.matmul(&w2.transpose());
        // f'(z) = 2 * max(z, 0)
        let dz = dh.zip_map(&z, |d, zv| d * T::from_f64(2.0) * zv.max(T::zero()));
        let g_w1 = x.transpose().matmul(&dz);

        let mut grads = vec![g_w1, g_w2];
        if self.bias_init.is_some() {
            let g_b = Matrix::from_fn(1, dy.cols(), |_, j| {
                (0..dy.rows()).fold(T::zero(), |acc, i| acc + dy[(i, j)])
            });
            grads.push(g_b);
        }
        Ok((loss, grads))
    }
}

fn squared_relu<T: Scalar>(z: &Matrix<T>) -> Matrix<T> {
    z.map(|v| {
        let r = v.max(T::zero());
        r * r
    })
}

/// Gaussian init with `sigma = (1 / sqrt(fan_in)) * min(1, sqrt(fan_out / fan_in))`,
/// shaped `fan_in x fan_out` (input-by-output convention).
pub fn spectral_init<T: Scalar>(fan_in: usize, fan_out: usize, seed: u64) -> Result<Matrix<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Parameter("fan dimensions must be >= 1".into()));
    }
    let sigma = spectral_init_sigma(fan_in, fan_out);
    let g: Matrix<T> = rand_matrix(fan_in, fan_out, seed, RandKind::Gaussian)?;
    Ok(g.scale(T::from_f64(sigma)))
}

/// The standard deviation used by [`spectral_init`].
pub fn spectral_init_sigma(fan_in: usize, fan_out: usize) -> f64 {
    let ratio = (fan_out as f64 / fan_in as f64).sqrt();
    (1.0 / (fan_in as f64).sqrt()) * ratio.min(1.0)
}

/// Central-difference gradient of a scalar function of a matrix.
pub fn finite_diff_grad<T: Scalar>(
    f: impl Fn(&Matrix<T>) -> T,
    w: &Matrix<T>,
    h: T,
) -> Matrix<T> {
    assert!(h > T::zero(), "finite difference step must be positive");
    let mut grad = Matrix::zeros(w.rows(), w.cols());
    let mut probe = w.clone();
    for i in 0..w.rows() {
        for j in 0..w.cols() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + h;
            let up = f(&probe);
            probe[(i, j)] = orig - h;
            let down = f(&probe);
            probe[(i, j)] = orig;
            grad[(i, j)] = (up - down) / (T::from_f64(2.0) * h);
        }
    }
    grad
}
