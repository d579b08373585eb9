//! Flat key-value run configs.
//!
//! The format is UTF-8 text, one `key = value` pair per line, `#` starts a
//! comment. Unknown keys are rejected. See the crate README for the schema.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;

use crate::error::{Error, Result};
use crate::precond::PrecondMode;
use crate::sched::{DecayShape, ScheduleKind, ScheduleSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptName {
    Mousse,
    Muon,
    Shampoo,
    Soap,
    AdamW,
    Lion,
    Elementwise,
}

impl OptName {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "mousse" => OptName::Mousse,
            "muon" => OptName::Muon,
            "shampoo" => OptName::Shampoo,
            "soap" => OptName::Soap,
            "adamw" => OptName::AdamW,
            "lion" => OptName::Lion,
            "elementwise" => OptName::Elementwise,
            other => {
                return Err(Error::Config(format!(
                    "unknown optimizer '{other}' (expected mousse|muon|shampoo|soap|adamw|lion|elementwise)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            OptName::Mousse => "mousse",
            OptName::Muon => "muon",
            OptName::Shampoo => "shampoo",
            OptName::Soap => "soap",
            OptName::AdamW => "adamw",
            OptName::Lion => "lion",
            OptName::Elementwise => "elementwise",
        }
    }

    /// Optimizers that act on whole matrices and hand vector-shaped
    /// parameters to lion.
    pub fn is_matrix_wise(self) -> bool {
        !matches!(self, OptName::AdamW | OptName::Lion)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NsPreset {
    Ns5,
    Ns5Classic,
    Convergent,
}

impl NsPreset {
    pub fn name(self) -> &'static str {
        match self {
            NsPreset::Ns5 => "ns5",
            NsPreset::Ns5Classic => "ns5_classic",
            NsPreset::Convergent => "convergent",
        }
    }

    pub fn build(self) -> crate::NsConfig {
        match self {
            NsPreset::Ns5 => crate::NsConfig::ns5(),
            NsPreset::Ns5Classic => crate::NsConfig::ns5_classic(),
            NsPreset::Convergent => crate::NsConfig::convergent(),
        }
    }
}

/// The problem half of a run config.
#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    Kron {
        rows: usize,
        cols: usize,
        kappa: f64,
        /// Scale of the initial error energy per Hessian eigendirection.
        w_scale: f64,
        noise_sigma: f64,
    },
    Mlp {
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        n_samples: usize,
        batch_size: usize,
        obs_noise: f64,
        with_bias: bool,
    },
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Kron { .. } => "kron",
            ProblemSpec::Mlp { .. } => "mlp",
        }
    }
}

/// Full hyperparameter bag for one optimizer instance. Fields that do not
/// apply to the chosen optimizer are ignored by the builder.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSpec {
    pub name: OptName,
    pub weight_decay: f64,
    pub beta: f64,
    pub beta_pc: f64,
    pub refresh_interval: u64,
    pub alpha: f64,
    pub eps: f64,
    pub grafting: bool,
    pub mode: PrecondMode,
    pub ns: NsPreset,
    pub nesterov: bool,
    pub bias_correction: bool,
    pub exact_sign: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Lion coefficients for the vector-parameter fallback path.
    pub lion_beta1: f64,
    pub lion_beta2: f64,
}

impl OptimizerSpec {
    /// Documented defaults, per optimizer.
    pub fn defaults(name: OptName) -> Self {
        let (beta1, beta2) = match name {
            OptName::Soap => (0.95, 0.95),
            OptName::Lion => (0.9, 0.99),
            _ => (0.9, 0.95),
        };
        Self {
            name,
            weight_decay: 0.01,
            beta: 0.95,
            beta_pc: 0.95,
            refresh_interval: 10,
            alpha: 0.25,
            eps: 1e-5,
            grafting: true,
            mode: PrecondMode::DoubleSided,
            ns: NsPreset::Ns5,
            nesterov: false,
            bias_correction: false,
            exact_sign: false,
            beta1,
            beta2,
            eps_adam: 1e-8,
            lion_beta1: 0.9,
            lion_beta2: 0.99,
        }
    }

    fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..1.0).contains(&v);
        if !in_unit(self.beta) || !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::Config("momentum coefficients must lie in [0, 1)".into()));
        }
        if !(self.beta_pc > 0.0 && self.beta_pc < 1.0) {
            return Err(Error::Config("beta_pc must lie in (0, 1)".into()));
        }
        if !(0.0..=0.5).contains(&self.alpha) {
            return Err(Error::Config("alpha must lie in [0, 0.5]".into()));
        }
        if self.eps <= 0.0 || self.eps_adam <= 0.0 {
            return Err(Error::Config("eps and eps_adam must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.refresh_interval == 0 {
            return Err(Error::Config("refresh_interval must be positive".into()));
        }
        if !in_unit(self.lion_beta1) || !in_unit(self.lion_beta2) {
            return Err(Error::Config("lion coefficients must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    pub schedule: ScheduleSpec<f64>,
    pub total_steps: u64,
    pub seed: u64,
    pub log_every: u64,
    pub lr_grid: Option<Vec<f64>>,
}

struct KvMap {
    entries: BTreeMap<String, String>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl KvMap {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!("line {}: empty key or value", lineno + 1)));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate key '{key}'")));
            }
        }
        Ok(Self {
            entries,
            used: Default::default(),
        })
    }

    fn get(&self, key: &str) -> Option<&str> {
        let v = self.entries.get(key).map(String::as_str);
        if v.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        v
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not a number"))),
        }
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key '{key}': '{v}' is not an integer"))),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.u64_or(key, default as u64)? as usize)
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::Config(format!(
                "key '{key}': '{v}' is not a bool (true|false)"
            ))),
        }
    }

    fn reject_unknown(&self) -> Result<()> {
        let used = self.used.borrow();
        for key in self.entries.keys() {
            if !used.contains(key) {
                return Err(Error::Config(format!("unknown key '{key}'")));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;

        let problem = match kv.required("problem")? {
            "kron" => ProblemSpec::Kron {
                rows: kv.usize_or("rows", 32)?,
                cols: kv.usize_or("cols", 32)?,
                kappa: kv.f64_or("kappa", 1e3)?,
                w_scale: kv.f64_or("w_scale", 10.0)?,
                noise_sigma: kv.f64_or("noise_sigma", 1e-3)?,
            },
            "mlp" => ProblemSpec::Mlp {
                d_in: kv.usize_or("d_in", 8)?,
                d_hidden: kv.usize_or("d_hidden", 16)?,
                d_out: kv.usize_or("d_out", 4)?,
                n_samples: kv.usize_or("n_samples", 256)?,
                batch_size: kv.usize_or("batch_size", 32)?,
                obs_noise: kv.f64_or("obs_noise", 1e-3)?,
                with_bias: kv.bool_or("with_bias", false)?,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown problem '{other}' (expected kron|mlp)"
                )))
            }
        };

        let name = OptName::parse(kv.required("optimizer")?)?;
        let d = OptimizerSpec::defaults(name);
        let optimizer = OptimizerSpec {
            name,
            weight_decay: kv.f64_or("weight_decay", d.weight_decay)?,
            beta: kv.f64_or("beta", d.beta)?,
            beta_pc: kv.f64_or("beta_pc", d.beta_pc)?,
            refresh_interval: kv.u64_or("refresh_interval", d.refresh_interval)?,
            alpha: kv.f64_or("alpha", d.alpha)?,
            eps: kv.f64_or("eps", d.eps)?,
            grafting: kv.bool_or("grafting", d.grafting)?,
            mode: match kv.get("mode").unwrap_or("double") {
                "double" => PrecondMode::DoubleSided,
                "left" => PrecondMode::LeftOnly,
                "right" => PrecondMode::RightOnly,
                other => {
                    return Err(Error::Config(format!(
                        "unknown mode '{other}' (expected double|left|right)"
                    )))
                }
            },
            ns: match kv.get("ns").unwrap_or("ns5") {
                "ns5" => NsPreset::Ns5,
                "ns5_classic" => NsPreset::Ns5Classic,
                "convergent" => NsPreset::Convergent,
                other => {
                    return Err(Error::Config(format!(
                        "unknown ns preset '{other}' (expected ns5|ns5_classic|convergent)"
                    )))
                }
            },
            nesterov: kv.bool_or("nesterov", d.nesterov)?,
            bias_correction: kv.bool_or("bias_correction", d.bias_correction)?,
            exact_sign: kv.bool_or("exact_sign", d.exact_sign)?,
            beta1: kv.f64_or("beta1", d.beta1)?,
            beta2: kv.f64_or("beta2", d.beta2)?,
            eps_adam: kv.f64_or("eps_adam", d.eps_adam)?,
            lion_beta1: kv.f64_or("lion_beta1", d.lion_beta1)?,
            lion_beta2: kv.f64_or("lion_beta2", d.lion_beta2)?,
        };
        optimizer.validate()?;

        let total_steps = kv
            .required("total_steps")?
            .parse::<u64>()
            .map_err(|_| Error::Config("total_steps must be an integer".into()))?;
        let peak_lr = kv
            .required("peak_lr")?
            .parse::<f64>()
            .map_err(|_| Error::Config("peak_lr must be a number".into()))?;
        let warmup_frac = kv.f64_or("warmup_frac", 0.1)?;
        let decay_frac = kv.f64_or("decay_frac", 0.1)?;
        let final_lr = kv.f64_or("final_lr", 0.0)?;
        let decay_shape = match kv.get("wsd_decay_shape").unwrap_or("linear") {
            "linear" => DecayShape::Linear,
            "cosine" => DecayShape::Cosine,
            other => {
                return Err(Error::Config(format!(
                    "unknown wsd_decay_shape '{other}' (expected linear|cosine)"
                )))
            }
        };
        let schedule = match kv.get("schedule").unwrap_or("cosine") {
            "cosine" => ScheduleSpec::cosine(total_steps, warmup_frac, peak_lr, final_lr),
            "wsd" => ScheduleSpec::wsd(total_steps, warmup_frac, decay_frac, peak_lr, final_lr)
                .map(|s| s.with_decay_shape(decay_shape)),
            "constant" => ScheduleSpec::constant(total_steps, warmup_frac, peak_lr),
            other => {
                return Err(Error::Config(format!(
                    "unknown schedule '{other}' (expected cosine|wsd|constant)"
                )))
            }
        }
        .map_err(|e| Error::Config(format!("invalid schedule: {e}")))?;

        let lr_grid = match kv.get("lr_grid") {
            None => None,
            Some(v) => {
                let grid: Result<Vec<f64>> = v
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("lr_grid entry '{s}' is not a number")))
                    })
                    .collect();
                let grid = grid?;
                if grid.is_empty() {
                    return Err(Error::Config("lr_grid must be non-empty".into()));
                }
                Some(grid)
            }
        };

        let cfg = Self {
            problem,
            optimizer,
            schedule,
            total_steps,
            seed: kv.u64_or("seed", 0)?,
            log_every: kv.u64_or("log_every", 10)?,
            lr_grid,
        };
        if cfg.log_every == 0 {
            return Err(Error::Config("log_every must be positive".into()));
        }
        kv.reject_unknown()?;
        Ok(cfg)
    }

    /// Same run with a different peak learning rate (grid search points).
    pub fn with_peak_lr(&self, peak_lr: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.schedule.peak_lr = peak_lr;
        if cfg.schedule.kind == ScheduleKind::Constant {
            cfg.schedule.final_lr = peak_lr;
        }
        cfg.schedule = cfg.schedule.validated()?;
        Ok(cfg)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg
    }

    /// Canonical key-value rendering: every effective key in fixed order.
    /// Parsing it back yields an equivalent config.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        match &self.problem {
            ProblemSpec::Kron {
                rows,
                cols,
                kappa,
                w_scale,
                noise_sigma,
            } => {
                out.push_str("problem = kron\n");
                out.push_str(&format!("rows = {rows}\n"));
                out.push_str(&format!("cols = {cols}\n"));
                out.push_str(&format!("kappa = {kappa:e}\n"));
                out.push_str(&format!("w_scale = {w_scale:e}\n"));
                out.push_str(&format!("noise_sigma = {noise_sigma:e}\n"));
            }
            ProblemSpec::Mlp {
                d_in,
                d_hidden,
                d_out,
                n_samples,
                batch_size,
                obs_noise,
                with_bias,
            } => {
                out.push_str("problem = mlp\n");
                out.push_str(&format!("d_in = {d_in}\n"));
                out.push_str(&format!("d_hidden = {d_hidden}\n"));
                out.push_str(&format!("d_out = {d_out}\n"));
                out.push_str(&format!("n_samples = {n_samples}\n"));
                out.push_str(&format!("batch_size = {batch_size}\n"));
                out.push_str(&format!("obs_noise = {obs_noise:e}\n"));
                out.push_str(&format!("with_bias = {with_bias}\n"));
            }
        }
        let o = &self.optimizer;
        out.push_str(&format!("optimizer = {}\n", o.name.name()));
        out.push_str(&format!("weight_decay = {:e}\n", o.weight_decay));
        out.push_str(&format!("beta = {:e}\n", o.beta));
        out.push_str(&format!("beta_pc = {:e}\n", o.beta_pc));
        out.push_str(&format!("refresh_interval = {}\n", o.refresh_interval));
        out.push_str(&format!("alpha = {:e}\n", o.alpha));
        out.push_str(&format!("eps = {:e}\n", o.eps));
        out.push_str(&format!("grafting = {}\n", o.grafting));
        let mode = match o.mode {
            PrecondMode::DoubleSided => "double",
            PrecondMode::LeftOnly => "left",
            PrecondMode::RightOnly => "right",
        };
        out.push_str(&format!("mode = {mode}\n"));
        out.push_str(&format!("ns = {}\n", o.ns.name()));
        out.push_str(&format!("nesterov = {}\n", o.nesterov));
        out.push_str(&format!("bias_correction = {}\n", o.bias_correction));
        out.push_str(&format!("exact_sign = {}\n", o.exact_sign));
        out.push_str(&format!("beta1 = {:e}\n", o.beta1));
        out.push_str(&format!("beta2 = {:e}\n", o.beta2));
        out.push_str(&format!("eps_adam = {:e}\n", o.eps_adam));
        out.push_str(&format!("lion_beta1 = {:e}\n", o.lion_beta1));
        out.push_str(&format!("lion_beta2 = {:e}\n", o.lion_beta2));
        let s = &self.schedule;
        out.push_str(&format!("schedule = {}\n", s.kind.name()));
        out.push_str(&format!("total_steps = {}\n", self.total_steps));
        out.push_str(&format!("peak_lr = {:e}\n", s.peak_lr));
        out.push_str(&format!("final_lr = {:e}\n", s.final_lr));
        out.push_str(&format!("warmup_frac = {:e}\n", s.warmup_frac));
        if s.kind == ScheduleKind::Wsd {
            out.push_str(&format!("decay_frac = {:e}\n", s.decay_frac));
            let shape = match s.wsd_decay_shape {
                DecayShape::Linear => "linear",
                DecayShape::Cosine => "cosine",
            };
            out.push_str(&format!("wsd_decay_shape = {shape}\n"));
        }
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("log_every = {}\n", self.log_every));
        if let Some(grid) = &self.lr_grid {
            let items: Vec<String> = grid.iter().map(|x| format!("{x:e}")).collect();
            out.push_str(&format!("lr_grid = {}\n", items.join(",")));
        }
        out
    }

    /// JSON rendering of the canonical key-value pairs.
    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        for line in self.to_canonical_string().lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                let value = if let Ok(n) = v.parse::<f64>() {
                    json!(n)
                } else if v == "true" || v == "false" {
                    json!(v == "true")
                } else {
                    json!(v)
                };
                map.insert(k.to_string(), value);
            }
        }
        serde_json::to_string_pretty(&serde_json::Value::Object(map)).unwrap()
    }
}
