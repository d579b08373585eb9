//! Binary checkpoints: a versioned header followed by named sections holding
//! little-endian 64-bit float arrays and scalar metadata. Round-trips are
//! bit-exact.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::EigDecomp;
use crate::optim::OptimizerState;
use crate::precond::{KroneckerStats, PrecondConfig, StatsSnapshot};
use crate::Matrix;

const MAGIC: &[u8; 8] = b"MOUSSEC1";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Section {
    Mat(Matrix),
    VecF64(Vec<f64>),
    U64(u64),
    F64(f64),
    Text(String),
}

/// An ordered list of named sections.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    sections: Vec<(String, Section)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, section: Section) {
        self.sections.push((name.into(), section));
    }

    pub fn find(&self, name: &str) -> Option<&Section> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix> {
        match self.find(name) {
            Some(Section::Mat(m)) => Ok(m),
            _ => Err(Error::State(format!("checkpoint missing matrix '{name}'"))),
        }
    }

    pub fn vec_f64(&self, name: &str) -> Result<&Vec<f64>> {
        match self.find(name) {
            Some(Section::VecF64(v)) => Ok(v),
            _ => Err(Error::State(format!("checkpoint missing array '{name}'"))),
        }
    }

    pub fn u64(&self, name: &str) -> Result<u64> {
        match self.find(name) {
            Some(Section::U64(v)) => Ok(*v),
            _ => Err(Error::State(format!("checkpoint missing integer '{name}'"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.find(name) {
            Some(Section::Text(s)) => Ok(s),
            _ => Err(Error::State(format!("checkpoint missing text '{name}'"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, section) in &self.sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match section {
                Section::Mat(m) => {
                    out.push(0);
                    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
                    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
                    for x in m.data() {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Section::VecF64(v) => {
                    out.push(1);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Section::U64(v) => {
                    out.push(2);
                    out.extend_from_slice(&v.to_le_bytes());
                }
                Section::F64(v) => {
                    out.push(3);
                    out.extend_from_slice(&v.to_le_bytes());
                }
                Section::Text(s) => {
                    out.push(4);
                    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                    out.extend_from_slice(s.as_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(Error::State("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::State(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let count = r.u32()? as usize;
        let mut sections = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::State("checkpoint section name is not utf-8".into()))?;
            let tag = r.take(1)?[0];
            let section = match tag {
                0 => {
                    let rows = r.u64()? as usize;
                    let cols = r.u64()? as usize;
                    let data = r.f64s(rows.checked_mul(cols).ok_or_else(|| {
                        Error::State("checkpoint matrix dims overflow".into())
                    })?)?;
                    // Matrices are stored raw; finiteness was the writer's
                    // concern and reload must be bit-exact.
                    Section::Mat(Matrix::from_raw(rows, cols, data))
                }
                1 => {
                    let len = r.u64()? as usize;
                    Section::VecF64(r.f64s(len)?)
                }
                2 => Section::U64(r.u64()?),
                3 => Section::F64(f64::from_le_bytes(r.take(8)?.try_into().unwrap())),
                4 => {
                    let len = r.u32()? as usize;
                    Section::Text(
                        String::from_utf8(r.take(len)?.to_vec())
                            .map_err(|_| Error::State("checkpoint text is not utf-8".into()))?,
                    )
                }
                other => {
                    return Err(Error::State(format!(
                        "unknown checkpoint section tag {other}"
                    )))
                }
            };
            sections.push((name, section));
        }
        Ok(Self { sections })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::State("checkpoint truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn save_stats(ckpt: &mut Checkpoint, prefix: &str, stats: &KroneckerStats<f64>) {
    let snap = stats.snapshot();
    ckpt.push(format!("{prefix}/step"), Section::U64(snap.step));
    let mut side = |tag: &str, m: Option<Matrix>, eig: Option<EigDecomp<f64>>, s: Option<Vec<f64>>| {
        if let Some(m) = m {
            ckpt.push(format!("{prefix}/{tag}"), Section::Mat(m));
        }
        if let Some(eig) = eig {
            ckpt.push(format!("{prefix}/eig_{tag}_vectors"), Section::Mat(eig.vectors));
            ckpt.push(format!("{prefix}/eig_{tag}_values"), Section::VecF64(eig.values));
        }
        if let Some(s) = s {
            ckpt.push(format!("{prefix}/scalers_{tag}"), Section::VecF64(s));
        }
    };
    side("l", snap.l, snap.eig_l, snap.scalers_l);
    side("r", snap.r, snap.eig_r, snap.scalers_r);
}

fn load_stats(
    ckpt: &Checkpoint,
    prefix: &str,
    rows: usize,
    cols: usize,
    config: PrecondConfig<f64>,
) -> Result<KroneckerStats<f64>> {
    let side = |tag: &str| -> Result<(Option<Matrix>, Option<EigDecomp<f64>>, Option<Vec<f64>>)> {
        let m = match ckpt.find(&format!("{prefix}/{tag}")) {
            Some(Section::Mat(m)) => Some(m.clone()),
            _ => None,
        };
        let eig = match (
            ckpt.find(&format!("{prefix}/eig_{tag}_vectors")),
            ckpt.find(&format!("{prefix}/eig_{tag}_values")),
        ) {
            (Some(Section::Mat(v)), Some(Section::VecF64(vals))) => Some(EigDecomp {
                vectors: v.clone(),
                values: vals.clone(),
            }),
            _ => None,
        };
        let scalers = match ckpt.find(&format!("{prefix}/scalers_{tag}")) {
            Some(Section::VecF64(s)) => Some(s.clone()),
            _ => None,
        };
        Ok((m, eig, scalers))
    };
    let (l, eig_l, scalers_l) = side("l")?;
    let (r, eig_r, scalers_r) = side("r")?;
    KroneckerStats::from_snapshot(
        rows,
        cols,
        config,
        StatsSnapshot {
            l,
            r,
            eig_l,
            eig_r,
            scalers_l,
            scalers_r,
            step: ckpt.u64(&format!("{prefix}/step"))?,
        },
    )
}

/// Serializes the mutable fields of an optimizer state under `prefix`.
/// Hyperparameters are not stored; restoring rebuilds them from the config.
pub(crate) fn save_optimizer(ckpt: &mut Checkpoint, prefix: &str, state: &OptimizerState<f64>) {
    match state {
        OptimizerState::Mousse(s) => {
            ckpt.push(format!("{prefix}/m"), Section::Mat(s.m.clone()));
            ckpt.push(format!("{prefix}/guard"), Section::U64(s.guard.last()));
            save_stats(ckpt, &format!("{prefix}/stats"), &s.stats);
        }
        OptimizerState::Muon(s) => {
            ckpt.push(format!("{prefix}/m"), Section::Mat(s.m.clone()));
            ckpt.push(format!("{prefix}/guard"), Section::U64(s.guard.last()));
        }
        OptimizerState::Shampoo(s) => {
            ckpt.push(format!("{prefix}/m"), Section::Mat(s.m.clone()));
            ckpt.push(format!("{prefix}/guard"), Section::U64(s.guard.last()));
            save_stats(ckpt, &format!("{prefix}/stats"), &s.stats);
        }
        OptimizerState::Soap(s) => {
            ckpt.push(format!("{prefix}/adam_m"), Section::Mat(s.adam.m.clone()));
            ckpt.push(format!("{prefix}/adam_v"), Section::Mat(s.adam.v.clone()));
            ckpt.push(format!("{prefix}/adam_t"), Section::U64(s.adam.t));
            ckpt.push(format!("{prefix}/guard"), Section::U64(s.guard.last()));
            save_stats(ckpt, &format!("{prefix}/stats"), &s.stats);
        }
        OptimizerState::AdamW(s) => {
            ckpt.push(format!("{prefix}/adam_m"), Section::Mat(s.moments.m.clone()));
            ckpt.push(format!("{prefix}/adam_v"), Section::Mat(s.moments.v.clone()));
            ckpt.push(format!("{prefix}/adam_t"), Section::U64(s.moments.t));
            ckpt.push(format!("{prefix}/guard"), Section::U64(s.guard.last()));
        }
        OptimizerState::Lion(s) => {
            ckpt.push(format!("{prefix}/m"), Section::Mat(s.m.clone()));
            ckpt.push(format!("{prefix}/guard"), Section::U64(s.guard.last()));
        }
        OptimizerState::Elementwise(s) => {
            ckpt.push(format!("{prefix}/v"), Section::Mat(s.v.clone()));
            ckpt.push(format!("{prefix}/guard"), Section::U64(s.guard.last()));
        }
    }
}

/// Restores the mutable fields saved by [`save_optimizer`] into a freshly
/// built state of the same kind and shape.
pub(crate) fn load_optimizer(
    ckpt: &Checkpoint,
    prefix: &str,
    state: &mut OptimizerState<f64>,
) -> Result<()> {
    use crate::optim::StepGuard;
    let guard = StepGuard::restore(ckpt.u64(&format!("{prefix}/guard"))?);
    match state {
        OptimizerState::Mousse(s) => {
            s.m = ckpt.matrix(&format!("{prefix}/m"))?.clone();
            s.guard = guard;
            let (rows, cols) = s.m.shape();
            s.stats = load_stats(ckpt, &format!("{prefix}/stats"), rows, cols, *s.stats.config())?;
        }
        OptimizerState::Muon(s) => {
            s.m = ckpt.matrix(&format!("{prefix}/m"))?.clone();
            s.guard = guard;
        }
        OptimizerState::Shampoo(s) => {
            s.m = ckpt.matrix(&format!("{prefix}/m"))?.clone();
            s.guard = guard;
            let (rows, cols) = s.m.shape();
            s.stats = load_stats(ckpt, &format!("{prefix}/stats"), rows, cols, *s.stats.config())?;
        }
        OptimizerState::Soap(s) => {
            s.adam.m = ckpt.matrix(&format!("{prefix}/adam_m"))?.clone();
            s.adam.v = ckpt.matrix(&format!("{prefix}/adam_v"))?.clone();
            s.adam.t = ckpt.u64(&format!("{prefix}/adam_t"))?;
            s.guard = guard;
            let (rows, cols) = s.adam.m.shape();
            s.stats = load_stats(ckpt, &format!("{prefix}/stats"), rows, cols, *s.stats.config())?;
        }
        OptimizerState::AdamW(s) => {
            s.moments.m = ckpt.matrix(&format!("{prefix}/adam_m"))?.clone();
            s.moments.v = ckpt.matrix(&format!("{prefix}/adam_v"))?.clone();
            s.moments.t = ckpt.u64(&format!("{prefix}/adam_t"))?;
            s.guard = guard;
        }
        OptimizerState::Lion(s) => {
            s.m = ckpt.matrix(&format!("{prefix}/m"))?.clone();
            s.guard = guard;
        }
        OptimizerState::Elementwise(s) => {
            s.v = ckpt.matrix(&format!("{prefix}/v"))?.clone();
            s.guard = guard;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rand_matrix, RandKind};

    #[test]
    fn bytes_roundtrip_bit_exact() {
        let mut ckpt = Checkpoint::new();
        let m: Matrix = rand_matrix(3, 5, 1, RandKind::Gaussian).unwrap();
        ckpt.push("w", Section::Mat(m.clone()));
        ckpt.push("vals", Section::VecF64(vec![1.5e-300, -0.0, 2.0]));
        ckpt.push("step", Section::U64(42));
        ckpt.push("lr", Section::F64(3.25e-4));
        ckpt.push("config", Section::Text("problem = kron\n".into()));

        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        let m2 = back.matrix("w").unwrap();
        assert!(m
            .data()
            .iter()
            .zip(m2.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.u64("step").unwrap(), 42);
        assert_eq!(back.text("config").unwrap(), "problem = kron\n");
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(Checkpoint::from_bytes(b"not a checkpoint").is_err());
        let mut ckpt = Checkpoint::new();
        ckpt.push("x", Section::U64(1));
        let mut bytes = ckpt.to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
