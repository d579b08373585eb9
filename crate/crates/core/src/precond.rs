//! Kronecker-factored curvature state: EMA accumulation of `L = E[G G^T]` and
//! `R = E[G^T G]`, amortized refresh (trace normalize, damped eigh, tempered
//! scalers), and the whiten/unwhiten sandwich transforms.

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, EigDecomp, Matrix};
use crate::scalar::Scalar;
use crate::spectral::trace_normalize;

/// Which covariance factors are maintained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondMode {
    DoubleSided,
    LeftOnly,
    RightOnly,
}

impl PrecondMode {
    pub fn uses_left(self) -> bool {
        matches!(self, PrecondMode::DoubleSided | PrecondMode::LeftOnly)
    }

    pub fn uses_right(self) -> bool {
        matches!(self, PrecondMode::DoubleSided | PrecondMode::RightOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            PrecondMode::DoubleSided => "double_sided",
            PrecondMode::LeftOnly => "left_only",
            PrecondMode::RightOnly => "right_only",
        }
    }
}

/// Hyperparameters of the preconditioner state.
#[derive(Clone, Copy, Debug)]
pub struct PrecondConfig<T> {
    pub mode: PrecondMode,
    /// EMA coefficient for the covariance factors.
    pub beta_pc: T,
    /// Curvature exponent used in the tempered scalers.
    pub alpha: T,
    /// Damping, entering both the trace denominator and the eigh shift.
    pub eps: T,
    /// Refresh every this many steps.
    pub refresh_interval: u64,
    /// Accumulate the bias-corrected EMA form instead of the plain one.
    pub bias_correction: bool,
}

impl<T: Scalar> Default for PrecondConfig<T> {
    fn default() -> Self {
        Self {
            mode: PrecondMode::DoubleSided,
            beta_pc: T::from_f64(0.95),
            alpha: T::from_f64(0.25),
            eps: T::from_f64(1e-5),
            refresh_interval: 10,
            bias_correction: false,
        }
    }
}

impl<T: Scalar> PrecondConfig<T> {
    fn validate(&self) -> Result<()> {
        if self.beta_pc <= T::zero() || self.beta_pc >= T::one() {
            return Err(Error::Parameter(format!(
                "beta_pc must lie in (0, 1), got {}",
                self.beta_pc
            )));
        }
        if self.alpha < T::zero() || self.alpha > T::from_f64(0.5) {
            return Err(Error::Parameter(format!(
                "alpha must lie in [0, 0.5], got {}",
                self.alpha
            )));
        }
        if self.eps <= T::zero() {
            return Err(Error::Parameter(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.refresh_interval == 0 {
            return Err(Error::Parameter("refresh_interval must be positive".into()));
        }
        Ok(())
    }
}

/// One side's refreshed caches.
#[derive(Clone, Debug)]
struct SideCache<T> {
    eig: EigDecomp<T>,
    scalers: Vec<T>,
}

/// Raw contents of a [`KroneckerStats`] instance, used by the checkpoint
/// format. Round-trips bit-exactly: caches are carried as-is rather than
/// recomputed, since they belong to the factors at the last refresh step.
#[derive(Clone, Debug)]
pub struct StatsSnapshot<T> {
    pub l: Option<Matrix<T>>,
    pub r: Option<Matrix<T>>,
    pub eig_l: Option<EigDecomp<T>>,
    pub eig_r: Option<EigDecomp<T>>,
    pub scalers_l: Option<Vec<T>>,
    pub scalers_r: Option<Vec<T>>,
    pub step: u64,
}

/// EMA covariance factors plus the eigenbases and tempered scalers from the
/// most recent refresh.
#[derive(Clone, Debug)]
pub struct KroneckerStats<T> {
    rows: usize,
    cols: usize,
    config: PrecondConfig<T>,
    l: Option<Matrix<T>>,
    r: Option<Matrix<T>>,
    cache_l: Option<SideCache<T>>,
    cache_r: Option<SideCache<T>>,
    step: u64,
}

impl<T: Scalar> KroneckerStats<T> {
    /// Fresh state for gradients of shape `rows x cols`.
    pub fn new(rows: usize, cols: usize, config: PrecondConfig<T>) -> Result<Self> {
        config.validate()?;
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "gradient shape must be positive, got {rows}x{cols}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            config,
            l: config.mode.uses_left().then(|| Matrix::zeros(rows, rows)),
            r: config.mode.uses_right().then(|| Matrix::zeros(cols, cols)),
            cache_l: None,
            cache_r: None,
            step: 0,
        })
    }

    /// Reconstructs a state from raw factors, e.g. from a checkpoint. Caches
    /// are rebuilt with an immediate refresh when `refreshed` is set.
    pub fn from_factors(
        rows: usize,
        cols: usize,
        config: PrecondConfig<T>,
        l: Option<Matrix<T>>,
        r: Option<Matrix<T>>,
        step: u64,
        refreshed: bool,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(l) = &l {
            if l.shape() != (rows, rows) {
                return Err(Error::Dimension("left factor shape mismatch".into()));
            }
        }
        if let Some(r) = &r {
            if r.shape() != (cols, cols) {
                return Err(Error::Dimension("right factor shape mismatch".into()));
            }
        }
        if config.mode.uses_left() != l.is_some() || config.mode.uses_right() != r.is_some() {
            return Err(Error::State(
                "factor presence does not match the preconditioner mode".into(),
            ));
        }
        let mut stats = Self {
            rows,
            cols,
            config,
            l,
            r,
            cache_l: None,
            cache_r: None,
            step,
        };
        if refreshed {
            stats.refresh()?;
        }
        Ok(stats)
    }

    pub fn mode(&self) -> PrecondMode {
        self.config.mode
    }

    pub fn config(&self) -> &PrecondConfig<T> {
        &self.config
    }

    pub fn snapshot(&self) -> StatsSnapshot<T> {
        StatsSnapshot {
            l: self.l.clone(),
            r: self.r.clone(),
            eig_l: self.cache_l.as_ref().map(|c| c.eig.clone()),
            eig_r: self.cache_r.as_ref().map(|c| c.eig.clone()),
            scalers_l: self.cache_l.as_ref().map(|c| c.scalers.clone()),
            scalers_r: self.cache_r.as_ref().map(|c| c.scalers.clone()),
            step: self.step,
        }
    }

    pub fn from_snapshot(
        rows: usize,
        cols: usize,
        config: PrecondConfig<T>,
        snap: StatsSnapshot<T>,
    ) -> Result<Self> {
        let rebuild = |eig: Option<EigDecomp<T>>, scalers: Option<Vec<T>>, dim: usize| {
            match (eig, scalers) {
                (Some(eig), Some(scalers)) => {
                    if eig.vectors.shape() != (dim, dim)
                        || eig.values.len() != dim
                        || scalers.len() != dim
                    {
                        return Err(Error::Dimension("cache shape mismatch in snapshot".into()));
                    }
                    Ok(Some(SideCache { eig, scalers }))
                }
                (None, None) => Ok(None),
                _ => Err(Error::State(
                    "snapshot carries a partial side cache".into(),
                )),
            }
        };
        let cache_l = rebuild(snap.eig_l, snap.scalers_l, rows)?;
        let cache_r = rebuild(snap.eig_r, snap.scalers_r, cols)?;
        let mut stats =
            Self::from_factors(rows, cols, config, snap.l, snap.r, snap.step, false)?;
        stats.cache_l = cache_l;
        stats.cache_r = cache_r;
        Ok(stats)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn refresh_interval(&self) -> u64 {
        self.config.refresh_interval
    }

    pub fn left_factor(&self) -> Option<&Matrix<T>> {
        self.l.as_ref()
    }

    pub fn right_factor(&self) -> Option<&Matrix<T>> {
        self.r.as_ref()
    }

    pub fn has_caches(&self) -> bool {
        (!self.config.mode.uses_left() || self.cache_l.is_some())
            && (!self.config.mode.uses_right() || self.cache_r.is_some())
    }

    /// True when the caller should refresh after the stats update at `step`:
    /// the first accumulation step, then every `refresh_interval` steps.
    pub fn due_for_refresh(&self) -> bool {
        self.step == 1 || (self.step > 0 && self.step.is_multiple_of(self.config.refresh_interval))
    }

    /// Accumulates one gradient into the EMA factors.
    ///
    /// Plain form (`bias_correction = false`): `L <- b*L + (1-b)*G G^T`.
    /// Any global scalar on the factors cancels in trace normalization (up to
    /// the eps offset in the denominator), so the corrected form changes
    /// nothing downstream; it exists for byte-level ablation.
    pub fn stats_update(&mut self, g: &Matrix<T>) -> Result<()> {
        if g.shape() != (self.rows, self.cols) {
            return Err(Error::Dimension(format!(
                "gradient shape {}x{} does not match state shape {}x{}",
                g.rows(),
                g.cols(),
                self.rows,
                self.cols
            )));
        }
        let beta = self.config.beta_pc;
        let t = self.step + 1;
        if self.config.bias_correction {
            // Stored factors remain the bias-corrected estimate:
            // L_t = [b*(1-b^(t-1))*L_{t-1} + (1-b)*G G^T] / (1-b^t).
            let b_t = T::one() - beta.powi(t as i32);
            let b_prev = T::one() - beta.powi((t - 1) as i32);
            if let Some(l) = &mut self.l {
                let gram = g.gram_rows();
                let scale_old = beta * b_prev / b_t;
                let scale_new = (T::one() - beta) / b_t;
                *l = &l.scale(scale_old) + &gram.scale(scale_new);
            }
            if let Some(r) = &mut self.r {
                let gram = g.gram_cols();
                let scale_old = beta * b_prev / b_t;
                let scale_new = (T::one() - beta) / b_t;
                *r = &r.scale(scale_old) + &gram.scale(scale_new);
            }
        } else {
            if let Some(l) = &mut self.l {
                l.ema_update(&g.gram_rows(), beta);
            }
            if let Some(r) = &mut self.r {
                r.ema_update(&g.gram_cols(), beta);
            }
        }
        self.step = t;
        Ok(())
    }

    /// Recomputes eigenbases and scalers from the current factors:
    /// trace normalize, shift by `eps*I`, eigh, then `lambda^(-alpha)` on the
    /// damped eigenvalues. Caches are swapped in only if every side succeeds.
    pub fn refresh(&mut self) -> Result<()> {
        let new_l = match &self.l {
            Some(l) => Some(self.refresh_side(l)?),
            None => None,
        };
        let new_r = match &self.r {
            Some(r) => Some(self.refresh_side(r)?),
            None => None,
        };
        self.cache_l = new_l;
        self.cache_r = new_r;
        Ok(())
    }

    fn refresh_side(&self, factor: &Matrix<T>) -> Result<SideCache<T>> {
        let eps = self.config.eps;
        let alpha = self.config.alpha;
        let normalized = trace_normalize(factor, eps)?;
        let mut shifted = normalized;
        for i in 0..shifted.rows() {
            shifted[(i, i)] += eps;
        }
        let mut eig = sym_eig(&shifted)?;
        // The factor is PSD up to roundoff, so post-shift eigenvalues floor at
        // eps; clamping keeps the damping bound exact.
        for v in &mut eig.values {
            *v = v.max(eps);
        }
        let scalers = if alpha == T::zero() {
            vec![T::one(); eig.values.len()]
        } else {
            eig.values.iter().map(|&l| l.powf(-alpha)).collect()
        };
        Ok(SideCache { eig, scalers })
    }

    fn caches(&self) -> Result<(Option<&SideCache<T>>, Option<&SideCache<T>>)> {
        if !self.has_caches() {
            return Err(Error::State(
                "refresh never executed; whitening caches are absent".into(),
            ));
        }
        Ok((self.cache_l.as_ref(), self.cache_r.as_ref()))
    }

    fn check_shape(&self, m: &Matrix<T>) -> Result<()> {
        if m.shape() != (self.rows, self.cols) {
            return Err(Error::Dimension(format!(
                "matrix shape {}x{} does not match state shape {}x{}",
                m.rows(),
                m.cols(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }

    /// Whitening transform `S_L Q_L^T m Q_R S_R`; an inactive side is the
    /// identity.
    pub fn whiten(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_shape(m)?;
        let (cl, cr) = self.caches()?;
        let mut out = match cl {
            Some(c) => c.eig.vectors.transpose().matmul(m),
            None => m.clone(),
        };
        if let Some(c) = cr {
            out = out.matmul(&c.eig.vectors);
        }
        if let Some(c) = cl {
            out = out.scale_rows(&c.scalers);
        }
        if let Some(c) = cr {
            out = out.scale_cols(&c.scalers);
        }
        Ok(out)
    }

    /// Unwhitening transform `Q_L S_L m S_R Q_R^T`. The scalers are applied
    /// again, not inverted: together with [`Self::whiten`] this realizes
    /// `L^(-a) msign(L^(-a) G R^(-a)) R^(-a)` around a matrix-sign step.
    pub fn unwhiten(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_shape(m)?;
        let (cl, cr) = self.caches()?;
        let mut out = m.clone();
        if let Some(c) = cl {
            out = out.scale_rows(&c.scalers);
        }
        if let Some(c) = cr {
            out = out.scale_cols(&c.scalers);
        }
        if let Some(c) = cl {
            out = c.eig.vectors.matmul(&out);
        }
        if let Some(c) = cr {
            out = out.matmul(&c.eig.vectors.transpose());
        }
        Ok(out)
    }

    /// Single application of the fractional preconditioner,
    /// `Q_L S_L Q_L^T m Q_R S_R Q_R^T` — the Shampoo-style sandwich with no
    /// sign step in between.
    pub fn precondition(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_shape(m)?;
        let (cl, cr) = self.caches()?;
        let mut out = m.clone();
        if let Some(c) = cl {
            out = c
                .eig
                .vectors
                .matmul(&c.eig.vectors.transpose().matmul(&out).scale_rows(&c.scalers));
        }
        if let Some(c) = cr {
            out = out
                .matmul(&c.eig.vectors)
                .scale_cols(&c.scalers)
                .matmul(&c.eig.vectors.transpose());
        }
        Ok(out)
    }

    /// Rotation into the cached eigenbasis, `Q_L^T m Q_R`, without scalers.
    pub fn rotate(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_shape(m)?;
        let (cl, cr) = self.caches()?;
        let mut out = match cl {
            Some(c) => c.eig.vectors.transpose().matmul(m),
            None => m.clone(),
        };
        if let Some(c) = cr {
            out = out.matmul(&c.eig.vectors);
        }
        Ok(out)
    }

    /// Inverse of [`Self::rotate`]: `Q_L m Q_R^T`.
    pub fn rotate_back(&self, m: &Matrix<T>) -> Result<Matrix<T>> {
        let (cl, cr) = self.caches()?;
        let mut out = match cl {
            Some(c) => c.eig.vectors.matmul(m),
            None => m.clone(),
        };
        if let Some(c) = cr {
            out = out.matmul(&c.eig.vectors.transpose());
        }
        Ok(out)
    }

    /// Condition numbers of the damped, trace-normalized factors from the most
    /// recent refresh: `lambda_max / lambda_min` per active side.
    pub fn condition_numbers(&self) -> (Option<T>, Option<T>) {
        let cond = |c: &SideCache<T>| {
            let hi = c.eig.values.first().copied().unwrap_or(T::one());
            let lo = c.eig.values.last().copied().unwrap_or(T::one());
            hi / lo
        };
        (
            self.cache_l.as_ref().map(cond),
            self.cache_r.as_ref().map(cond),
        )
    }

    /// RMS (Frobenius norm over sqrt of element count) of the raw factors.
    pub fn factor_rms(&self) -> (Option<T>, Option<T>) {
        (
            self.l.as_ref().map(|m| m.rms()),
            self.r.as_ref().map(|m| m.rms()),
        )
    }

    /// Damped trace-normalized factor raised to `-alpha`, reconstructed from
    /// the cached decomposition. Test and oracle helper.
    pub fn damped_factor_power(&self, left: bool) -> Option<Matrix<T>> {
        let c = if left {
            self.cache_l.as_ref()?
        } else {
            self.cache_r.as_ref()?
        };
        Some(
            c.eig
                .vectors
                .scale_cols(&c.scalers)
                .matmul(&c.eig.vectors.transpose()),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rand_matrix, RandKind};

    fn default_stats(rows: usize, cols: usize) -> KroneckerStats<f64> {
        KroneckerStats::new(rows, cols, PrecondConfig::default()).unwrap()
    }

    #[test]
    fn first_ema_step_scales_by_one_minus_beta() {
        let mut stats = default_stats(3, 2);
        let g = Matrix::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, -1.0]).unwrap();
        stats.stats_update(&g).unwrap();
        let expect = g.gram_rows().scale(0.05);
        assert!(stats.left_factor().unwrap().max_abs_diff(&expect) < 1e-15);
        assert_eq!(stats.step(), 1);
    }

    #[test]
    fn constant_stream_converges_to_gram() {
        let mut stats = default_stats(2, 2);
        let g = Matrix::new(2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        for _ in 0..1000 {
            stats.stats_update(&g).unwrap();
        }
        let gram = g.gram_rows();
        let rel = stats.left_factor().unwrap().max_abs_diff(&gram) / gram.max_abs();
        assert!(rel < 1e-6, "EMA limit defect {rel}");
    }

    #[test]
    fn bias_corrected_form_equals_corrected_plain_form() {
        let cfg = PrecondConfig {
            bias_correction: true,
            ..PrecondConfig::default()
        };
        let mut corrected = KroneckerStats::new(2, 2, cfg).unwrap();
        let mut plain = default_stats(2, 2);
        let beta: f64 = 0.95;
        for t in 1..=20u64 {
            let g: Matrix<f64> = rand_matrix(2, 2, t, RandKind::Gaussian).unwrap();
            corrected.stats_update(&g).unwrap();
            plain.stats_update(&g).unwrap();
            let scale = 1.0 / (1.0 - beta.powi(t as i32));
            let diff = corrected
                .left_factor()
                .unwrap()
                .max_abs_diff(&plain.left_factor().unwrap().scale(scale));
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn stats_update_rejects_wrong_shape() {
        let mut stats = default_stats(3, 2);
        let g = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(stats.stats_update(&g), Err(Error::Dimension(_))));
    }

    #[test]
    fn whiten_before_refresh_is_a_state_error() {
        let stats = default_stats(2, 2);
        let m = Matrix::<f64>::identity(2);
        assert!(matches!(stats.whiten(&m), Err(Error::State(_))));
    }

    #[test]
    fn isotropic_factor_gives_near_identity_whitening() {
        let mut stats = default_stats(3, 3);
        // Feed an identity gradient stream: L = R = EMA of I.
        let g = Matrix::<f64>::identity(3);
        for _ in 0..50 {
            stats.stats_update(&g).unwrap();
        }
        stats.refresh().unwrap();
        let (cond_l, cond_r) = stats.condition_numbers();
        assert!((cond_l.unwrap() - 1.0).abs() < 1e-10);
        assert!((cond_r.unwrap() - 1.0).abs() < 1e-10);
        let m: Matrix<f64> = rand_matrix(3, 3, 1, RandKind::Gaussian).unwrap();
        let w = stats.whiten(&m).unwrap();
        // Scalers are (1 + eps)^(-alpha) ~ 1 up to the damping.
        assert!(w.max_abs_diff(&m) < 1e-4);
    }

    #[test]
    fn refresh_scalers_match_inverse_sqrt_of_spectrum() {
        // Factor with trace-normalized eigenvalues (1.9, 0.1), alpha = 0.5.
        let cfg = PrecondConfig {
            mode: PrecondMode::LeftOnly,
            alpha: 0.5,
            eps: 1e-12,
            ..PrecondConfig::default()
        };
        let l = Matrix::from_diag(&[1.9, 0.1]);
        let mut stats =
            KroneckerStats::from_factors(2, 4, cfg, Some(l), None, 1, false).unwrap();
        stats.refresh().unwrap();
        let p = stats.damped_factor_power(true).unwrap();
        // Diagonal factor: the reconstructed power is diagonal with
        // lambda^(-1/2) at each original position.
        assert!((p[(0, 0)] - 1.9f64.powf(-0.5)).abs() < 1e-6);
        assert!((p[(1, 1)] - 0.1f64.powf(-0.5)).abs() < 1e-6);
        assert!(p[(0, 1)].abs() < 1e-9);
    }

    #[test]
    fn alpha_zero_scalers_are_exactly_one() {
        let cfg = PrecondConfig {
            alpha: 0.0,
            ..PrecondConfig::default()
        };
        let mut stats = KroneckerStats::new(3, 3, cfg).unwrap();
        let g: Matrix<f64> = rand_matrix(3, 3, 4, RandKind::Gaussian).unwrap();
        stats.stats_update(&g).unwrap();
        stats.refresh().unwrap();
        // Whiten is then a pure rotation: Frobenius norm is preserved and the
        // round-trip is the identity.
        let m: Matrix<f64> = rand_matrix(3, 3, 5, RandKind::Gaussian).unwrap();
        let w = stats.whiten(&m).unwrap();
        assert!((w.frobenius_norm() - m.frobenius_norm()).abs() < 1e-12);
        let back = stats.unwhiten(&w).unwrap();
        assert!(back.max_abs_diff(&m) < 1e-10);
    }

    #[test]
    fn diagonal_factors_whiten_entrywise() {
        let cfg = PrecondConfig {
            alpha: 0.25,
            eps: 1e-12,
            ..PrecondConfig::default()
        };
        // Descending diagonals make the eigenbasis the identity permutation,
        // so the whitening identity can be checked entrywise.
        let l_diag = [2.0, 0.5];
        let r_diag = [3.0, 1.0, 0.25];
        let l = Matrix::from_diag(&l_diag);
        let r = Matrix::from_diag(&r_diag);
        let mut stats =
            KroneckerStats::from_factors(2, 3, cfg, Some(l.clone()), Some(r.clone()), 1, false)
                .unwrap();
        stats.refresh().unwrap();
        let m: Matrix<f64> = rand_matrix(2, 3, 8, RandKind::Gaussian).unwrap();
        let w = stats.whiten(&m).unwrap();
        // Fold in the trace normalization scalars, then compare entrywise.
        let ltr: f64 = l_diag.iter().sum();
        let rtr: f64 = r_diag.iter().sum();
        for i in 0..2 {
            for j in 0..3 {
                let lhat = 2.0 * l_diag[i] / ltr;
                let rhat = 3.0 * r_diag[j] / rtr;
                let expect = lhat.powf(-0.25) * m[(i, j)] * rhat.powf(-0.25);
                assert!(
                    (w[(i, j)] - expect).abs() < 1e-6 * expect.abs().max(1.0),
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn unwhiten_whiten_roundtrip_applies_squared_scalers() {
        let mut stats = default_stats(4, 4);
        for t in 0..20u64 {
            let g: Matrix<f64> = rand_matrix(4, 4, 100 + t, RandKind::Gaussian).unwrap();
            stats.stats_update(&g).unwrap();
        }
        stats.refresh().unwrap();
        let m: Matrix<f64> = rand_matrix(4, 4, 200, RandKind::Gaussian).unwrap();
        let round = stats.unwhiten(&stats.whiten(&m).unwrap()).unwrap();
        // Equivalent to the double-power sandwich in the eigenbasis.
        let pl = stats.damped_factor_power(true).unwrap();
        let pr = stats.damped_factor_power(false).unwrap();
        let expect = pl.matmul(&pl).matmul(&m).matmul(&pr.matmul(&pr));
        assert!(round.max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn left_only_matches_double_sided_with_identity_right_stats() {
        let m: Matrix<f64> = rand_matrix(3, 4, 77, RandKind::Gaussian).unwrap();
        let l: Matrix<f64> = {
            let g: Matrix<f64> = rand_matrix(3, 4, 78, RandKind::Gaussian).unwrap();
            g.gram_rows()
        };
        let left_cfg = PrecondConfig {
            mode: PrecondMode::LeftOnly,
            ..PrecondConfig::default()
        };
        let mut left =
            KroneckerStats::from_factors(3, 4, left_cfg, Some(l.clone()), None, 1, false).unwrap();
        left.refresh().unwrap();

        let both_cfg = PrecondConfig::default();
        let mut both = KroneckerStats::from_factors(
            3,
            4,
            both_cfg,
            Some(l),
            Some(Matrix::identity(4)),
            1,
            false,
        )
        .unwrap();
        both.refresh().unwrap();

        let wl = left.whiten(&m).unwrap();
        let wb = both.whiten(&m).unwrap();
        // Identity statistics damp to scalers within O(alpha * eps) of one.
        let rel = (&wl - &wb).frobenius_norm() / wl.frobenius_norm();
        assert!(rel < 1e-4, "single- vs double-sided mismatch {rel}");
    }

    #[test]
    fn psd_preserved_over_long_accumulation() {
        let mut stats = default_stats(4, 3);
        for t in 0..2000u64 {
            let g: Matrix<f64> = rand_matrix(4, 3, 5000 + t, RandKind::Gaussian).unwrap();
            stats.stats_update(&g).unwrap();
        }
        for (factor, n) in [(stats.left_factor().unwrap(), 4), (stats.right_factor().unwrap(), 3)]
        {
            assert_eq!(factor.shape(), (n, n));
            let eig = sym_eig(factor).unwrap();
            let max = eig.values[0];
            let min = *eig.values.last().unwrap();
            assert!(min >= -1e-8 * max, "factor lost PSD: min {min}, max {max}");
        }
    }

    #[test]
    fn condition_number_bounded_by_damping() {
        let mut stats = default_stats(8, 8);
        for t in 0..30u64 {
            let g: Matrix<f64> =
                rand_matrix(8, 8, 900 + t, RandKind::Conditioned { kappa: 1e6 }).unwrap();
            stats.stats_update(&g).unwrap();
        }
        stats.refresh().unwrap();
        let bound = (8.0 + 1e-5) / 1e-5;
        let (cl, cr) = stats.condition_numbers();
        assert!(cl.unwrap() <= bound * (1.0 + 1e-12));
        assert!(cr.unwrap() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn geometry_invariant_to_gradient_scale() {
        // Trace normalization cancels a global c^2 on the factors; with eps
        // tiny relative to the traces the refresh outputs coincide.
        let cfg = PrecondConfig {
            eps: 1e-14,
            ..PrecondConfig::default()
        };
        for &c in &[1e3f64, 1e-3] {
            let mut base = KroneckerStats::new(6, 4, cfg).unwrap();
            let mut scaled = KroneckerStats::new(6, 4, cfg).unwrap();
            for t in 0..25u64 {
                let g: Matrix<f64> = rand_matrix(6, 4, 300 + t, RandKind::Gaussian).unwrap();
                base.stats_update(&g).unwrap();
                scaled.stats_update(&g.scale(c)).unwrap();
            }
            base.refresh().unwrap();
            scaled.refresh().unwrap();
            let m: Matrix<f64> = rand_matrix(6, 4, 999, RandKind::Gaussian).unwrap();
            let wb = base.whiten(&m).unwrap();
            let ws = scaled.whiten(&m).unwrap();
            let rel = (&wb - &ws).frobenius_norm() / wb.frobenius_norm();
            assert!(rel < 1e-8, "scale c={c} moved the geometry by {rel}");
        }
    }
}
