//! The experiment engine: builds a problem, parameters, and per-parameter
//! optimizer states from a [`RunConfig`], then drives the step loop with
//! divergence detection, metric logging, and checkpoint/resume.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::harness::checkpoint::{load_optimizer, save_optimizer, Checkpoint, Section};
use crate::harness::config::{OptName, OptimizerSpec, ProblemSpec, RunConfig};
use crate::harness::record::{LogRow, ParamLog, RunMeta, RunRecord, RunSummary, Timing};
use crate::optim::{
    AdamConfig, AdamState, ElementwiseConfig, ElementwiseState, LionConfig, LionState,
    MousseConfig, MousseState, MuonConfig, MuonState, OptimizerState, ShampooConfig,
    ShampooState, SoapConfig, SoapState, StepContext, UpdateReport,
};
use crate::precond::PrecondConfig;
use crate::testbed::{KronQuadratic, MlpProblem, MlpSpec};
use crate::Matrix;

/// Train loss above `1e6 * initial` (or non-finite) marks the run diverged.
const DIVERGENCE_FACTOR: f64 = 1e6;

enum ProblemInstance {
    Kron(KronQuadratic<f64>),
    Mlp(MlpProblem<f64>),
}

impl ProblemInstance {
    fn build(spec: &ProblemSpec, seed: u64) -> Result<Self> {
        match *spec {
            ProblemSpec::Kron {
                rows,
                cols,
                kappa,
                w_scale,
                noise_sigma,
            } => Ok(ProblemInstance::Kron(KronQuadratic::conditioned_scaled(
                rows,
                cols,
                kappa,
                w_scale,
                noise_sigma,
                seed,
            )?)),
            ProblemSpec::Mlp {
                d_in,
                d_hidden,
                d_out,
                n_samples,
                batch_size,
                obs_noise,
                with_bias,
            } => Ok(ProblemInstance::Mlp(MlpProblem::teacher_student(
                MlpSpec {
                    d_in,
                    d_hidden,
                    d_out,
                    n_samples,
                    batch_size,
                    obs_noise,
                    with_bias,
                },
                seed,
            )?)),
        }
    }

    fn initial_params(&self) -> Vec<Matrix> {
        match self {
            ProblemInstance::Kron(p) => vec![Matrix::zeros(p.shape().0, p.shape().1)],
            ProblemInstance::Mlp(p) => p.initial_params(),
        }
    }

    fn eval(&self, params: &[Matrix], step: u64) -> Result<(f64, Vec<Matrix>)> {
        match self {
            ProblemInstance::Kron(p) => {
                let (loss, grad) = p.eval(&params[0], step)?;
                Ok((loss, vec![grad]))
            }
            ProblemInstance::Mlp(p) => {
                let batch = ((step - 1) % p.n_batches() as u64) as usize;
                p.eval(params, batch)
            }
        }
    }

    /// Noise-free loss at the current parameters.
    fn eval_loss(&self, params: &[Matrix]) -> Result<f64> {
        match self {
            ProblemInstance::Kron(p) => Ok(p.eval_noiseless(&params[0])?.0),
            ProblemInstance::Mlp(p) => p.full_loss(params),
        }
    }
}

fn build_state(spec: &OptimizerSpec, rows: usize, cols: usize) -> Result<OptimizerState<f64>> {
    // Matrix-wise optimizers hand vector-shaped parameters to lion.
    if spec.name.is_matrix_wise() && (rows == 1 || cols == 1) {
        return Ok(OptimizerState::Lion(LionState::new(
            rows,
            cols,
            LionConfig {
                beta1: spec.lion_beta1,
                beta2: spec.lion_beta2,
            },
        )?));
    }
    let precond = PrecondConfig {
        mode: spec.mode,
        beta_pc: spec.beta_pc,
        alpha: spec.alpha,
        eps: spec.eps,
        refresh_interval: spec.refresh_interval,
        bias_correction: spec.bias_correction,
    };
    let adam = AdamConfig {
        beta1: spec.beta1,
        beta2: spec.beta2,
        eps: spec.eps_adam,
    };
    Ok(match spec.name {
        OptName::Mousse => OptimizerState::Mousse(MousseState::new(
            rows,
            cols,
            MousseConfig {
                beta: spec.beta,
                ns: spec.ns.build(),
                grafting: spec.grafting,
                precond,
                nesterov: spec.nesterov,
                exact_sign: spec.exact_sign,
            },
        )?),
        OptName::Muon => OptimizerState::Muon(MuonState::new(
            rows,
            cols,
            MuonConfig {
                beta: spec.beta,
                ns: spec.ns.build(),
                nesterov: spec.nesterov,
            },
        )?),
        OptName::Shampoo => OptimizerState::Shampoo(ShampooState::new(
            rows,
            cols,
            ShampooConfig {
                beta: spec.beta,
                precond,
            },
        )?),
        OptName::Soap => OptimizerState::Soap(SoapState::new(
            rows,
            cols,
            SoapConfig { adam, precond },
        )?),
        OptName::AdamW => OptimizerState::AdamW(AdamState::new(rows, cols, adam)?),
        OptName::Lion => OptimizerState::Lion(LionState::new(
            rows,
            cols,
            LionConfig {
                beta1: spec.beta1,
                beta2: spec.beta2,
            },
        )?),
        OptName::Elementwise => OptimizerState::Elementwise(ElementwiseState::new(
            rows,
            cols,
            ElementwiseConfig {
                beta2: spec.beta2,
                eps: spec.eps_adam,
                ns: spec.ns.build(),
            },
        )?),
    })
}

/// A run in progress. `run_to` advances it; `finish` emits the record.
pub struct Experiment {
    cfg: RunConfig,
    problem: ProblemInstance,
    params: Vec<Matrix>,
    states: Vec<OptimizerState<f64>>,
    step: u64,
    rows: Vec<LogRow>,
    initial_train_loss: Option<f64>,
    last_train_loss: f64,
    diverged: bool,
    wall: Duration,
}

impl Experiment {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let problem = ProblemInstance::build(&cfg.problem, cfg.seed)?;
        let params = problem.initial_params();
        let states = params
            .iter()
            .map(|p| build_state(&cfg.optimizer, p.rows(), p.cols()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            problem,
            params,
            states,
            step: 0,
            rows: Vec::new(),
            initial_train_loss: None,
            last_train_loss: f64::NAN,
            diverged: false,
            wall: Duration::ZERO,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    /// Advances the run through step `target` (inclusive), logging every
    /// `log_every` steps and at the final step. Stops early on divergence.
    pub fn run_to(&mut self, target: u64) -> Result<()> {
        let target = target.min(self.cfg.total_steps);
        let started = Instant::now();
        while self.step < target && !self.diverged {
            let t = self.step + 1;
            let lr = self.cfg.schedule.lr_at(t)?;
            let (train_loss, grads) = self.problem.eval(&self.params, t)?;
            let initial = *self.initial_train_loss.get_or_insert(train_loss);
            if !train_loss.is_finite()
                || train_loss > DIVERGENCE_FACTOR * initial.abs().max(1e-12)
            {
                self.last_train_loss = train_loss;
                self.diverged = true;
                break;
            }
            self.last_train_loss = train_loss;

            let mut reports: Vec<UpdateReport<f64>> = Vec::with_capacity(self.params.len());
            let ctx = StepContext {
                lr,
                weight_decay: self.cfg.optimizer.weight_decay,
                step_index: t,
            };
            let mut numeric_failure = false;
            for (param, state) in self.params.iter_mut().zip(&mut self.states) {
                match state.step(param, &grads[reports.len()], &ctx) {
                    Ok((new_param, report)) => {
                        *param = new_param;
                        reports.push(report);
                    }
                    Err(Error::Numeric(_)) => {
                        // A numeric blow-up inside a stepper is divergence.
                        numeric_failure = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if numeric_failure {
                self.diverged = true;
                break;
            }
            self.step = t;

            if t.is_multiple_of(self.cfg.log_every) || t == self.cfg.total_steps {
                let eval_loss = self.problem.eval_loss(&self.params)?;
                let params = reports
                    .iter()
                    .zip(&self.states)
                    .map(|(report, state)| {
                        let (cond_l, cond_r) = state
                            .stats()
                            .map(|s| s.condition_numbers())
                            .unwrap_or((None, None));
                        let (rms_l, rms_r) = state
                            .stats()
                            .map(|s| s.factor_rms())
                            .unwrap_or((None, None));
                        ParamLog {
                            update_rms: report.rms,
                            gamma: report.graft_gamma,
                            cond_l,
                            cond_r,
                            rms_l,
                            rms_r,
                        }
                    })
                    .collect();
                self.rows.push(LogRow {
                    step: t,
                    lr,
                    train_loss,
                    eval_loss,
                    params,
                });
            }
        }
        self.wall += started.elapsed();
        Ok(())
    }

    pub fn finish(self) -> Result<RunRecord> {
        let final_eval_loss = self.problem.eval_loss(&self.params)?;
        let steps = self.step.max(1);
        Ok(RunRecord {
            meta: RunMeta {
                optimizer: self.cfg.optimizer.name.name().to_string(),
                problem: self.cfg.problem.name().to_string(),
                schedule: self.cfg.schedule.kind.name().to_string(),
                total_steps: self.cfg.total_steps,
                seed: self.cfg.seed,
                peak_lr: self.cfg.schedule.peak_lr,
                final_lr: self.cfg.schedule.final_lr,
                warmup_frac: self.cfg.schedule.warmup_frac,
                decay_frac: self.cfg.schedule.decay_frac,
                log_every: self.cfg.log_every,
                n_params: self.params.len(),
                config_text: self.cfg.to_canonical_string(),
            },
            rows: self.rows,
            summary: RunSummary {
                final_eval_loss,
                final_train_loss: self.last_train_loss,
                steps_completed: self.step,
                diverged: self.diverged,
            },
            timing: Timing {
                wall: self.wall,
                mean_step: self.wall / steps as u32,
            },
        })
    }

    /// Full mutable state as a checkpoint: parameters, optimizer states, the
    /// step counter, and a config fingerprint.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        ckpt.push("config", Section::Text(self.cfg.to_canonical_string()));
        ckpt.push("step", Section::U64(self.step));
        ckpt.push("n_params", Section::U64(self.params.len() as u64));
        ckpt.push(
            "initial_train_loss",
            Section::F64(self.initial_train_loss.unwrap_or(f64::NAN)),
        );
        for (i, param) in self.params.iter().enumerate() {
            ckpt.push(format!("param{i}"), Section::Mat(param.clone()));
        }
        for (i, state) in self.states.iter().enumerate() {
            save_optimizer(&mut ckpt, &format!("opt{i}"), state);
        }
        ckpt
    }

    /// Rebuilds a run from a checkpoint taken with the same config.
    pub fn resume(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<Self> {
        let stored = ckpt.text("config")?;
        let expected = cfg.to_canonical_string();
        if stored != expected {
            return Err(Error::State(
                "checkpoint was produced by a different config".into(),
            ));
        }
        let mut exp = Self::new(cfg)?;
        exp.step = ckpt.u64("step")?;
        let n = ckpt.u64("n_params")? as usize;
        if n != exp.params.len() {
            return Err(Error::State("checkpoint parameter count mismatch".into()));
        }
        for i in 0..n {
            let stored = ckpt.matrix(&format!("param{i}"))?;
            if stored.shape() != exp.params[i].shape() {
                return Err(Error::State("checkpoint parameter shape mismatch".into()));
            }
            exp.params[i] = stored.clone();
            load_optimizer(ckpt, &format!("opt{i}"), &mut exp.states[i])?;
        }
        let init = match ckpt.find("initial_train_loss") {
            Some(Section::F64(v)) if v.is_finite() => Some(*v),
            _ => None,
        };
        exp.initial_train_loss = init;
        Ok(exp)
    }
}

/// Runs a config start to finish.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunRecord> {
    let mut exp = Experiment::new(cfg)?;
    exp.run_to(cfg.total_steps)?;
    exp.finish()
}

#[derive(Debug)]
pub struct GridPoint {
    pub lr: f64,
    pub record: RunRecord,
}

#[derive(Debug)]
pub struct GridOutcome {
    /// One entry per grid learning rate, in grid order.
    pub runs: Vec<GridPoint>,
    /// Index of the best run: lowest final eval loss among runs that
    /// completed, ties broken toward the smaller learning rate. `None` when
    /// every run diverged.
    pub best: Option<usize>,
}

impl GridOutcome {
    pub fn best_record(&self) -> Option<&GridPoint> {
        self.best.map(|i| &self.runs[i])
    }
}

/// Runs every learning rate in `cfg.lr_grid` with identical seeds, on up to
/// `threads` worker threads.
pub fn grid_search(cfg: &RunConfig, threads: usize) -> Result<GridOutcome> {
    let grid = cfg
        .lr_grid
        .clone()
        .ok_or_else(|| Error::Config("grid search needs an lr_grid key".into()))?;
    let results: Mutex<Vec<Option<Result<RunRecord>>>> =
        Mutex::new((0..grid.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = threads.max(1).min(grid.len());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= grid.len() {
                    break;
                }
                let run = cfg
                    .with_peak_lr(grid[i])
                    .and_then(|c| run_experiment(&c));
                results.lock().unwrap()[i] = Some(run);
            });
        }
    });

    let mut runs = Vec::with_capacity(grid.len());
    for (lr, slot) in grid.iter().zip(results.into_inner().unwrap()) {
        let record = slot.expect("grid slot not filled")?;
        runs.push(GridPoint { lr: *lr, record });
    }

    let mut best: Option<usize> = None;
    for (i, point) in runs.iter().enumerate() {
        if point.record.summary.diverged || !point.record.summary.final_eval_loss.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some(j) => {
                let (bi, bj) = (
                    point.record.summary.final_eval_loss,
                    runs[j].record.summary.final_eval_loss,
                );
                bi < bj || (bi == bj && point.lr < runs[j].lr)
            }
        };
        if better {
            best = Some(i);
        }
    }
    Ok(GridOutcome { runs, best })
}
