//! Binary checkpoints.
//!
//! Layout (little endian):
//!
//! ```text
//! magic "BCIPMCKP" | version u32 | d u32 | K u32 | l u32 | M u64 | N u64
//! config hash [32] | config text (u32 length + UTF-8)
//! epoch u64 | adam step u64 | rng seed [32] | rng stream u64 | rng word pos u128
//! tensors (u64 length + f64 values): base, W1..W3, b1..b3, then the same
//! order for the first and second Adam moments
//! SHA-256 of everything above [32]
//! ```

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::bipn::{BipnGrads, BipnParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fusion::ModelState;
use crate::matrix::Matrix;
use crate::training::{Adam, ThetaGrads, TrainConfig, Trainer};

const MAGIC: &[u8; 8] = b"BCIPMCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub num_users: usize,
    pub num_items: usize,
    pub num_behaviors: usize,
    pub epoch: usize,
    pub base: Matrix,
    pub bipn: BipnParams,
    pub adam_step: u64,
    pub adam_m: ThetaGrads,
    pub adam_v: ThetaGrads,
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn capture(trainer: &Trainer<'_>) -> Self {
        let train = trainer.train_set();
        Self {
            config: trainer.cfg.clone(),
            num_users: train.num_users(),
            num_items: train.num_items(),
            num_behaviors: train.num_behaviors(),
            epoch: trainer.epoch,
            base: trainer.state.base.clone(),
            bipn: trainer.state.bipn.clone(),
            adam_step: trainer.opt.step,
            adam_m: trainer.opt.m.clone(),
            adam_v: trainer.opt.v.clone(),
            rng: trainer.rng.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        w.extend_from_slice(&(self.config.dim as u32).to_le_bytes());
        w.extend_from_slice(&(self.num_behaviors as u32).to_le_bytes());
        w.extend_from_slice(&(self.bipn.code_len() as u32).to_le_bytes());
        w.extend_from_slice(&(self.num_users as u64).to_le_bytes());
        w.extend_from_slice(&(self.num_items as u64).to_le_bytes());
        w.extend_from_slice(&self.config.hash());
        let text = self.config.to_text();
        w.extend_from_slice(&(text.len() as u32).to_le_bytes());
        w.extend_from_slice(text.as_bytes());
        w.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        w.extend_from_slice(&self.adam_step.to_le_bytes());
        w.extend_from_slice(&self.rng.get_seed());
        w.extend_from_slice(&self.rng.get_stream().to_le_bytes());
        w.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());

        put_tensor(&mut w, self.base.as_slice());
        for m in &self.bipn.weights {
            put_tensor(&mut w, m.as_slice());
        }
        for b in &self.bipn.biases {
            put_tensor(&mut w, b);
        }
        for g in [&self.adam_m, &self.adam_v] {
            put_grads(&mut w, g);
        }
        let digest = Sha256::digest(&w);
        w.extend_from_slice(&digest);
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 32 {
            return Err(corrupt("file too short"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let dim = r.u32()? as usize;
        let num_behaviors = r.u32()? as usize;
        let code_len = r.u32()? as usize;
        let num_users = r.u64()? as usize;
        let num_items = r.u64()? as usize;
        let hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let text_len = r.u32()? as usize;
        let text =
            std::str::from_utf8(r.take(text_len)?).map_err(|_| corrupt("config is not UTF-8"))?;
        let config = TrainConfig::from_text(text)?;
        if config.hash() != hash {
            return Err(Error::Checkpoint(
                "stored configuration hash does not match its text".into(),
            ));
        }
        if config.dim != dim || code_len != num_behaviors {
            return Err(corrupt("header disagrees with configuration"));
        }
        let epoch = r.u64()? as usize;
        let adam_step = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);

        let rows = num_users + num_items;
        let cols = 2 * dim + num_behaviors;
        let base = Matrix::from_vec(rows, dim, r.tensor(rows * dim)?)?;
        let mut bipn = BipnParams::zeros(dim, num_behaviors);
        for k in 0..3 {
            bipn.weights[k] = Matrix::from_vec(dim, cols, r.tensor(dim * cols)?)?;
        }
        for k in 0..3 {
            bipn.biases[k] = r.tensor(dim)?;
        }
        let mut grads = || -> Result<ThetaGrads> {
            let base = Matrix::from_vec(rows, dim, r.tensor(rows * dim)?)?;
            let mut g = BipnGrads::zeros_like(&bipn);
            for k in 0..3 {
                g.weights[k] = Matrix::from_vec(dim, cols, r.tensor(dim * cols)?)?;
            }
            for k in 0..3 {
                g.biases[k] = r.tensor(dim)?;
            }
            Ok(ThetaGrads { base, bipn: g })
        };
        let adam_m = grads()?;
        let adam_v = grads()?;
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(Self {
            config,
            num_users,
            num_items,
            num_behaviors,
            epoch,
            base,
            bipn,
            adam_step,
            adam_m,
            adam_v,
            rng,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Rebuilds a trainer over `train`. With `expected`, the stored
    /// configuration hash must match it and `expected` becomes the active
    /// configuration (so the epoch budget may differ).
    pub fn restore<'a>(
        self,
        train: &'a Dataset,
        expected: Option<&TrainConfig>,
    ) -> Result<Trainer<'a>> {
        if let Some(cfg) = expected {
            if cfg.dim != self.config.dim {
                return Err(Error::Checkpoint(format!(
                    "checkpoint has d = {}, configuration asks for {}",
                    self.config.dim, cfg.dim
                )));
            }
            if cfg.hash() != self.config.hash() {
                return Err(Error::Checkpoint("configuration hash mismatch".into()));
            }
        }
        if train.num_users() != self.num_users
            || train.num_items() != self.num_items
            || train.num_behaviors() != self.num_behaviors
        {
            return Err(Error::Checkpoint(format!(
                "checkpoint is for M={}, N={}, K={}; data has M={}, N={}, K={}",
                self.num_users,
                self.num_items,
                self.num_behaviors,
                train.num_users(),
                train.num_items(),
                train.num_behaviors()
            )));
        }
        let cfg = expected.cloned().unwrap_or(self.config);
        let state = ModelState::new(train, cfg.architecture(), self.base, self.bipn)?;
        let mut opt = Adam::new(&state, cfg.lr);
        opt.step = self.adam_step;
        opt.m = self.adam_m;
        opt.v = self.adam_v;
        Ok(Trainer::from_parts(
            train, cfg, state, opt, self.rng, self.epoch,
        ))
    }
}

fn corrupt(what: &str) -> Error {
    Error::Checkpoint(format!("corrupt checkpoint: {what}"))
}

fn put_tensor(w: &mut Vec<u8>, values: &[f64]) {
    w.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        w.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_grads(w: &mut Vec<u8>, g: &ThetaGrads) {
    put_tensor(w, g.base.as_slice());
    for m in &g.bipn.weights {
        put_tensor(w, m.as_slice());
    }
    for b in &g.bipn.biases {
        put_tensor(w, b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of file"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn tensor(&mut self, expected: usize) -> Result<Vec<f64>> {
        let len = self.u64()? as usize;
        if len != expected {
            return Err(corrupt("tensor length mismatch"));
        }
        let bytes = self.take(
            len.checked_mul(8)
                .ok_or_else(|| corrupt("tensor too large"))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

impl Trainer<'_> {
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        Checkpoint::capture(self).save(path)
    }
}
