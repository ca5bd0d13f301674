//! Joint optimisation of the cross-entropy objective over all behaviors
//! and the pairwise ranking objective over the target behavior:
//!
//! ```text
//! L = β · L_bce + (1 − β) · L_bpr + γ · ‖Θ‖²
//! ```
//!
//! with `Θ` = base embeddings plus network weights and biases, negative
//! sampling, Adam updates and the epoch loop.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bipn::{self, BceExample, BipnGrads, BipnParams, FilterLayers};
use crate::dataset::{Dataset, Interaction, ItemId, Split, UserId};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::fusion::{self, Architecture, LambdaPolicy, ModelState, PretrainMode};
use crate::matrix::{axpy, dot, log_sigmoid, sigmoid, EmbeddingMatrix, Matrix};

/// Attempts per negative before giving up on a positive.
pub const RESAMPLE_CAP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PretrainStrategy {
    Agg,
    Sep,
}

impl fmt::Display for PretrainStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PretrainStrategy::Agg => "agg",
            PretrainStrategy::Sep => "sep",
        })
    }
}

impl FromStr for PretrainStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "agg" => Ok(Self::Agg),
            "sep" => Ok(Self::Sep),
            other => Err(Error::Config(format!(
                "pretrain strategy must be agg or sep, got {other:?}"
            ))),
        }
    }
}

/// Training hyperparameters and ablation switches.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub pretrain_layers: usize,
    pub enhance_layers: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub lr: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub seed: u64,
    pub lambda: LambdaPolicy,
    pub no_pretrain: bool,
    pub no_enhancement: bool,
    pub no_bipn: bool,
    pub no_prefilter: bool,
    pub no_postfilter: bool,
    pub pretrain_strategy: PretrainStrategy,
    pub aux_in_pretrain: bool,
    pub aux_in_bipn: bool,
    pub detach_enhancement: bool,
    /// Update every embedding row each step instead of only touched rows.
    pub dense_updates: bool,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            pretrain_layers: 2,
            enhance_layers: 2,
            batch_size: 1024,
            negatives: 4,
            lr: 1e-3,
            beta: 0.5,
            gamma: 1e-4,
            epochs: 100,
            seed: 2024,
            lambda: LambdaPolicy::InverseCount,
            no_pretrain: false,
            no_enhancement: false,
            no_bipn: false,
            no_prefilter: false,
            no_postfilter: false,
            pretrain_strategy: PretrainStrategy::Agg,
            aux_in_pretrain: true,
            aux_in_bipn: true,
            detach_enhancement: false,
            dense_updates: false,
            clip_norm: 10.0,
        }
    }
}

/// Grid values searched for learning rate, β and γ.
pub const LR_GRID: [f64; 4] = [1e-2, 3e-3, 1e-3, 1e-4];
pub const BETA_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const GAMMA_GRID: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Keys that do not change the trained model and are left out of the
/// configuration hash.
const UNHASHED_KEYS: &[&str] = &["epochs"];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dim == 0 || self.batch_size == 0 || self.negatives == 0 || self.epochs == 0 {
            return bad("dim, batch_size, negatives and epochs must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta {} outside [0, 1]", self.beta));
        }
        let non_negative = |x: f64| x >= 0.0 && !x.is_nan();
        if !non_negative(self.gamma)
            || !non_negative(self.lr)
            || !non_negative(self.clip_norm)
            || self.clip_norm == 0.0
        {
            return bad("gamma and lr must be non-negative, clip_norm positive".into());
        }
        self.architecture().validate()
    }

    pub fn architecture(&self) -> Architecture {
        let pretrain = if self.no_pretrain {
            PretrainMode::Disabled
        } else {
            match self.pretrain_strategy {
                PretrainStrategy::Agg => PretrainMode::Aggregated,
                PretrainStrategy::Sep => PretrainMode::Separate,
            }
        };
        Architecture {
            dim: self.dim,
            pretrain,
            pretrain_layers: self.pretrain_layers,
            enhance_layers: self.enhance_layers,
            aux_in_pretrain: self.aux_in_pretrain,
            use_enhancement: !self.no_enhancement,
            use_bipn: !self.no_bipn,
            filters: FilterLayers {
                prefilter: !self.no_prefilter,
                postfilter: !self.no_postfilter,
            },
            detach_enhancement: self.detach_enhancement,
            lambda: self.lambda,
        }
    }

    /// Flat `key = value` view, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dim", self.dim.to_string()),
            ("pretrain_layers", self.pretrain_layers.to_string()),
            ("enhance_layers", self.enhance_layers.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("negatives", self.negatives.to_string()),
            ("lr", fmt_f64(self.lr)),
            ("beta", fmt_f64(self.beta)),
            ("gamma", fmt_f64(self.gamma)),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("lambda", self.lambda.to_string()),
            ("no_pretrain", self.no_pretrain.to_string()),
            ("no_enhancement", self.no_enhancement.to_string()),
            ("no_bipn", self.no_bipn.to_string()),
            ("no_prefilter", self.no_prefilter.to_string()),
            ("no_postfilter", self.no_postfilter.to_string()),
            ("pretrain_strategy", self.pretrain_strategy.to_string()),
            ("aux_in_pretrain", self.aux_in_pretrain.to_string()),
            ("aux_in_bipn", self.aux_in_bipn.to_string()),
            ("detach_enhancement", self.detach_enhancement.to_string()),
            ("dense_updates", self.dense_updates.to_string()),
            ("clip_norm", fmt_f64(self.clip_norm)),
        ]
    }

    /// Sets one key; returns `Ok(false)` if the key is not a training key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
        }
        match key {
            "dim" => self.dim = p(key, value)?,
            "pretrain_layers" => self.pretrain_layers = p(key, value)?,
            "enhance_layers" => self.enhance_layers = p(key, value)?,
            "batch_size" => self.batch_size = p(key, value)?,
            "negatives" => self.negatives = p(key, value)?,
            "lr" => self.lr = p(key, value)?,
            "beta" => self.beta = p(key, value)?,
            "gamma" => self.gamma = p(key, value)?,
            "epochs" => self.epochs = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "lambda" => self.lambda = value.parse()?,
            "no_pretrain" => self.no_pretrain = p(key, value)?,
            "no_enhancement" => self.no_enhancement = p(key, value)?,
            "no_bipn" => self.no_bipn = p(key, value)?,
            "no_prefilter" => self.no_prefilter = p(key, value)?,
            "no_postfilter" => self.no_postfilter = p(key, value)?,
            "pretrain_strategy" => self.pretrain_strategy = value.parse()?,
            "aux_in_pretrain" => self.aux_in_pretrain = p(key, value)?,
            "aux_in_bipn" => self.aux_in_bipn = p(key, value)?,
            "detach_enhancement" => self.detach_enhancement = p(key, value)?,
            "dense_updates" => self.dense_updates = p(key, value)?,
            "clip_norm" => self.clip_norm = p(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key = value, got {line:?}")))?;
            if !cfg.set(k.trim(), v.trim())? {
                return Err(Error::Config(format!("unknown key {:?}", k.trim())));
            }
        }
        Ok(cfg)
    }

    /// SHA-256 over every entry that affects the trained model.
    pub fn hash(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if !UNHASHED_KEYS.contains(&k) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        h.finalize().into()
    }
}

/// Shortest representation that parses back to the same value.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BprTriple {
    pub user: UserId,
    pub pos: ItemId,
    pub neg: ItemId,
}

/// Draws `count` distinct items outside the user's positives for
/// `behavior`. `None` when no such set could be found within the cap.
pub fn sample_negatives<R: Rng + ?Sized>(
    train: &Dataset,
    user: UserId,
    behavior: usize,
    count: usize,
    rng: &mut R,
) -> Option<Vec<ItemId>> {
    let positives = train.items_of(user, behavior);
    let n = train.num_items();
    if n < positives.len() + count {
        return None;
    }
    let mut out: Vec<ItemId> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut found = None;
        for _ in 0..RESAMPLE_CAP {
            let j = rng.random_range(0..n) as ItemId;
            if positives.binary_search(&j).is_err() && !out.contains(&j) {
                found = Some(j);
                break;
            }
        }
        out.push(found?);
    }
    Some(out)
}

/// Positives the cross-entropy branch trains on: every behavior, or only
/// the target behavior when auxiliary data is excluded from the network.
pub fn bce_positives(train: &Dataset, cfg: &TrainConfig) -> Vec<Interaction> {
    if cfg.aux_in_bipn {
        train.all_interactions().copied().collect()
    } else {
        train.interactions(train.target_behavior()).to_vec()
    }
}

/// Each positive followed by `cfg.negatives` labelled negatives from the
/// same behavior. Positives whose negatives cannot be drawn are skipped.
pub fn sample_bce_batch<R: Rng + ?Sized>(
    train: &Dataset,
    positives: &[Interaction],
    rng: &mut R,
    cfg: &TrainConfig,
) -> Vec<BceExample> {
    let mut out = Vec::with_capacity(positives.len() * (1 + cfg.negatives));
    for p in positives {
        let Some(negs) = sample_negatives(train, p.user, p.behavior, cfg.negatives, rng) else {
            log::warn!(
                "skipping positive ({}, {}, {}): no negatives available",
                p.user,
                p.item,
                p.behavior
            );
            continue;
        };
        out.push(BceExample {
            user: p.user,
            item: p.item,
            behavior: p.behavior,
            label: true,
        });
        out.extend(negs.into_iter().map(|j| BceExample {
            user: p.user,
            item: j,
            behavior: p.behavior,
            label: false,
        }));
    }
    out
}

/// One epoch of ranking triples: every target positive once, in shuffled
/// order, each with one sampled negative.
pub fn sample_bpr_triples<R: Rng + ?Sized>(train: &Dataset, rng: &mut R) -> Vec<BprTriple> {
    let target = train.target_behavior();
    let mut positives = train.interactions(target).to_vec();
    positives.shuffle(rng);
    let mut out = Vec::with_capacity(positives.len());
    for p in positives {
        match sample_negatives(train, p.user, target, 1, rng) {
            Some(negs) => out.push(BprTriple {
                user: p.user,
                pos: p.item,
                neg: negs[0],
            }),
            None => log::warn!(
                "skipping ranking positive ({}, {}): no negatives",
                p.user,
                p.item
            ),
        }
    }
    out
}

/// `−Σ ln σ(y_ui − y_uj)`; an empty batch gives 0.
pub fn bpr_loss(scores_pos: &[f64], scores_neg: &[f64]) -> f64 {
    assert_eq!(
        scores_pos.len(),
        scores_neg.len(),
        "score lists differ in length"
    );
    scores_pos
        .iter()
        .zip(scores_neg)
        .map(|(p, n)| -log_sigmoid(p - n))
        .sum()
}

/// `β · bce + (1 − β) · bpr + γ · Σ‖t‖²`.
pub fn total_loss(bce: f64, bpr: f64, theta: &Theta<'_>, beta: f64, gamma: f64) -> f64 {
    beta * bce + (1.0 - beta) * bpr + gamma * theta.squared_norm()
}

/// Borrowed view of every trainable tensor.
#[derive(Debug, Clone, Copy)]
pub struct Theta<'a> {
    pub base: &'a EmbeddingMatrix,
    pub bipn: &'a BipnParams,
}

impl<'a> Theta<'a> {
    pub fn of(state: &'a ModelState) -> Self {
        Self {
            base: &state.base,
            bipn: &state.bipn,
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.base.squared_norm() + self.bipn.squared_norm()
    }
}

/// Gradients for every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrads {
    pub base: EmbeddingMatrix,
    pub bipn: BipnGrads,
}

impl ThetaGrads {
    pub fn squared_norm(&self) -> f64 {
        self.base.squared_norm() + self.bipn.squared_norm()
    }

    /// Adds `2γθ` for every tensor, or only for the listed base rows.
    pub fn add_l2(&mut self, state: &ModelState, gamma: f64, rows: Option<&[bool]>) {
        if gamma == 0.0 {
            return;
        }
        match rows {
            None => self.base.add_scaled(&state.base, 2.0 * gamma),
            Some(mask) => {
                for (r, &touched) in mask.iter().enumerate() {
                    if touched {
                        axpy(2.0 * gamma, state.base.row(r), self.base.row_mut(r));
                    }
                }
            }
        }
        for k in 0..3 {
            self.bipn.weights[k].add_scaled(&state.bipn.weights[k], 2.0 * gamma);
            axpy(2.0 * gamma, &state.bipn.biases[k], &mut self.bipn.biases[k]);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub bce: Vec<BceExample>,
    pub bpr: Vec<BprTriple>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossParts {
    pub bce: f64,
    pub bpr: f64,
    pub reg: f64,
    pub total: f64,
}

/// Total loss of one batch and the gradient of its data terms (the L2
/// gradient is added separately through [`ThetaGrads::add_l2`]).
pub fn batch_objective(
    state: &ModelState,
    train: &Dataset,
    batch: &Batch,
    beta: f64,
    gamma: f64,
) -> Result<(LossParts, ThetaGrads)> {
    let arch = *state.architecture();
    let m = state.num_users();
    let d = arch.dim;
    let e = state.embeddings();
    let enh = state.enhanced();

    let mut grad_e = Matrix::zeros(e.rows(), d);
    let mut grad_enh = enh.map(|x| Matrix::zeros(x.rows(), d));
    let mut grad_bipn = BipnGrads::zeros_like(&state.bipn);

    let mut bce = 0.0;
    if arch.use_bipn && !batch.bce.is_empty() {
        bce = bipn::forward_backward(
            &batch.bce,
            e,
            m,
            &state.bipn,
            arch.filters,
            beta,
            &mut grad_bipn,
            &mut grad_e,
        );
    }

    let mut by_user: BTreeMap<UserId, Vec<&BprTriple>> = BTreeMap::new();
    for t in &batch.bpr {
        by_user.entry(t.user).or_default().push(t);
    }
    let mut bpr = 0.0;
    for (&user, triples) in &by_user {
        let lambda = state.lambda(user, train);
        let needs_agg = arch.use_bipn && lambda < 1.0;
        let (agg, caches) = if needs_agg {
            bipn::aggregate_with_caches(
                user,
                &state.bipn,
                arch.filters,
                train.target_items_of(user),
                e,
                m,
            )
        } else {
            (vec![0.0; d], Vec::new())
        };
        let mut grad_agg = vec![0.0; d];
        for t in triples {
            let y_pos = fusion::score(user, t.pos, &agg, state, lambda);
            let y_neg = fusion::score(user, t.neg, &agg, state, lambda);
            let margin = y_pos - y_neg;
            bpr -= log_sigmoid(margin);
            let g = -(1.0 - beta) * sigmoid(-margin);
            for (item, coef) in [(t.pos, g), (t.neg, -g)] {
                let row = m + item as usize;
                if needs_agg {
                    let c = coef * (1.0 - lambda);
                    axpy(c, e.row(row), &mut grad_agg);
                    axpy(c, &agg, grad_e.row_mut(row));
                }
                if let (Some(enh), Some(ge)) = (enh, grad_enh.as_mut()) {
                    if lambda > 0.0 {
                        let c = coef * lambda;
                        axpy(c, enh.row(row), ge.row_mut(user as usize));
                        axpy(c, enh.row(user as usize), ge.row_mut(row));
                    }
                }
            }
        }
        for (item, cache) in &caches {
            let mut g_eu = vec![0.0; d];
            let mut g_ei = vec![0.0; d];
            bipn::backward(
                cache,
                &state.bipn,
                &grad_agg,
                &mut grad_bipn,
                &mut g_eu,
                &mut g_ei,
            );
            axpy(1.0, &g_eu, grad_e.row_mut(user as usize));
            axpy(1.0, &g_ei, grad_e.row_mut(m + *item as usize));
        }
    }

    let reg = gamma * Theta::of(state).squared_norm();
    let total = beta * bce + (1.0 - beta) * bpr + reg;
    let grad_base = state.backward(&grad_e, grad_enh.as_ref())?;
    Ok((
        LossParts {
            bce,
            bpr,
            reg,
            total,
        },
        ThetaGrads {
            base: grad_base,
            bipn: grad_bipn,
        },
    ))
}

/// Adam moments for every trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: ThetaGrads,
    pub v: ThetaGrads,
}

impl Adam {
    pub fn new(state: &ModelState, lr: f64) -> Self {
        let zeros = ThetaGrads {
            base: Matrix::zeros(state.base.rows(), state.base.cols()),
            bipn: BipnGrads::zeros_like(&state.bipn),
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One Adam step. With `rows`, only the marked base rows (and all
    /// network tensors) are updated and have their moments advanced.
    pub fn step(&mut self, state: &mut ModelState, grads: &ThetaGrads, rows: Option<&[bool]>) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let h = AdamHyper {
            lr: self.lr,
            b1: self.beta1,
            b2: self.beta2,
            eps: self.eps,
            c1,
            c2,
        };
        let d = state.base.cols();
        match rows {
            None => h.apply(
                state.base.as_mut_slice(),
                grads.base.as_slice(),
                self.m.base.as_mut_slice(),
                self.v.base.as_mut_slice(),
            ),
            Some(mask) => {
                for (r, &touched) in mask.iter().enumerate() {
                    if touched {
                        let span = r * d..(r + 1) * d;
                        h.apply(
                            &mut state.base.as_mut_slice()[span.clone()],
                            &grads.base.as_slice()[span.clone()],
                            &mut self.m.base.as_mut_slice()[span.clone()],
                            &mut self.v.base.as_mut_slice()[span],
                        );
                    }
                }
            }
        }
        for k in 0..3 {
            h.apply(
                state.bipn.weights[k].as_mut_slice(),
                grads.bipn.weights[k].as_slice(),
                self.m.bipn.weights[k].as_mut_slice(),
                self.v.bipn.weights[k].as_mut_slice(),
            );
            h.apply(
                &mut state.bipn.biases[k],
                &grads.bipn.biases[k],
                &mut self.m.bipn.biases[k],
                &mut self.v.bipn.biases[k],
            );
        }
    }
}

struct AdamHyper {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    c1: f64,
    c2: f64,
}

impl AdamHyper {
    fn apply(&self, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        for i in 0..p.len() {
            m[i] = self.b1 * m[i] + (1.0 - self.b1) * g[i];
            v[i] = self.b2 * v[i] + (1.0 - self.b2) * g[i] * g[i];
            let m_hat = m[i] / self.c1;
            let v_hat = v[i] / self.c2;
            p[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Per-epoch means over batches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_bce: f64,
    pub loss_bpr: f64,
    pub loss_reg: f64,
    pub grad_norm: f64,
    pub batches: usize,
    pub clipped: usize,
    pub seconds: f64,
}

/// Owns the model, optimizer and random stream of one training run.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    pub cfg: TrainConfig,
    pub state: ModelState,
    pub opt: Adam,
    pub rng: ChaCha8Rng,
    /// Completed epochs.
    pub epoch: usize,
    train: &'a Dataset,
}

impl<'a> Trainer<'a> {
    pub fn new(train: &'a Dataset, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if train.total_interactions() == 0 {
            return Err(Error::Config("training set is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let state = ModelState::init(train, cfg.architecture(), &mut rng)?;
        let opt = Adam::new(&state, cfg.lr);
        Ok(Self {
            cfg,
            state,
            opt,
            rng,
            epoch: 0,
            train,
        })
    }

    /// Rebuilds a trainer from saved parts.
    pub fn from_parts(
        train: &'a Dataset,
        cfg: TrainConfig,
        state: ModelState,
        opt: Adam,
        rng: ChaCha8Rng,
        epoch: usize,
    ) -> Self {
        Self {
            cfg,
            state,
            opt,
            rng,
            epoch,
            train,
        }
    }

    pub fn train_set(&self) -> &Dataset {
        self.train
    }

    fn next_batches(&mut self) -> Vec<Batch> {
        let cfg = &self.cfg;
        let mut triples = sample_bpr_triples(self.train, &mut self.rng);
        if cfg.no_bipn {
            return triples
                .chunks(cfg.batch_size)
                .map(|c| Batch {
                    bce: Vec::new(),
                    bpr: c.to_vec(),
                })
                .collect();
        }
        let mut positives = bce_positives(self.train, cfg);
        positives.shuffle(&mut self.rng);
        let mut cursor = 0;
        let mut batches = Vec::new();
        for chunk in positives.chunks(cfg.batch_size) {
            let bce = sample_bce_batch(self.train, chunk, &mut self.rng, cfg);
            let mut bpr = Vec::with_capacity(chunk.len());
            while bpr.len() < chunk.len() && !triples.is_empty() {
                if cursor == triples.len() {
                    triples.shuffle(&mut self.rng);
                    cursor = 0;
                }
                let take = (chunk.len() - bpr.len()).min(triples.len() - cursor);
                bpr.extend_from_slice(&triples[cursor..cursor + take]);
                cursor += take;
            }
            batches.push(Batch { bce, bpr });
        }
        batches
    }

    /// One shuffled pass over the training positives.
    pub fn train_epoch(&mut self) -> Result<EpochStats> {
        let started = Instant::now();
        let batches = self.next_batches();
        let (beta, gamma) = (self.cfg.beta, self.cfg.gamma);
        let mut sums = LossParts::default();
        let mut grad_norm_sum = 0.0;
        let mut clipped = 0;
        for (b, batch) in batches.iter().enumerate() {
            let (loss, mut grads) = batch_objective(&self.state, self.train, batch, beta, gamma)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite {
                    epoch: self.epoch + 1,
                    batch: b,
                    detail: format!(
                        "bce={} bpr={} reg={}; |base|={:.4e} |net|={:.4e}",
                        loss.bce,
                        loss.bpr,
                        loss.reg,
                        self.state.base.squared_norm().sqrt(),
                        self.state.bipn.squared_norm().sqrt()
                    ),
                });
            }
            let mask = if self.cfg.dense_updates {
                None
            } else {
                Some(touched_rows(&grads.base))
            };
            grads.add_l2(&self.state, gamma, mask.as_deref());
            let norm = grads.squared_norm().sqrt();
            if norm > self.cfg.clip_norm {
                let s = self.cfg.clip_norm / norm;
                grads.base.scale(s);
                grads.bipn.scale(s);
                clipped += 1;
                log::debug!(
                    "epoch {} batch {b}: gradient norm {norm:.3} clipped to {}",
                    self.epoch + 1,
                    self.cfg.clip_norm
                );
            }
            grad_norm_sum += norm;
            self.opt.step(&mut self.state, &grads, mask.as_deref());
            self.state.materialize()?;
            sums.bce += loss.bce;
            sums.bpr += loss.bpr;
            sums.reg += loss.reg;
            sums.total += loss.total;
        }
        self.epoch += 1;
        let n = batches.len().max(1) as f64;
        Ok(EpochStats {
            epoch: self.epoch,
            loss_total: sums.total / n,
            loss_bce: sums.bce / n,
            loss_bpr: sums.bpr / n,
            loss_reg: sums.reg / n,
            grad_norm: grad_norm_sum / n,
            batches: batches.len(),
            clipped,
            seconds: started.elapsed().as_secs_f64(),
        })
    }

    pub fn evaluate(&self, split: &Split, cutoffs: &[usize]) -> Result<EvalReport> {
        eval::evaluate(&self.state, split, cutoffs)
    }
}

/// Rows with any non-zero gradient entry.
pub fn touched_rows(grad: &EmbeddingMatrix) -> Vec<bool> {
    (0..grad.rows())
        .map(|r| grad.row(r).iter().any(|&g| g != 0.0))
        .collect()
}

/// Scores both items of a triple, for tests and diagnostics.
pub fn triple_scores(state: &ModelState, train: &Dataset, t: &BprTriple) -> (f64, f64) {
    let agg = state.aggregate(t.user, train);
    let lambda = state.lambda(t.user, train);
    (
        fusion::score(t.user, t.pos, &agg, state, lambda),
        fusion::score(t.user, t.neg, &agg, state, lambda),
    )
}

/// BCE logit of one example, for tests and diagnostics.
pub fn bce_logit(state: &ModelState, ex: &BceExample) -> f64 {
    let m = state.num_users();
    let e = state.embeddings();
    let c = bipn::forward(
        e.row(ex.user as usize),
        e.row(m + ex.item as usize),
        ex.behavior,
        &state.bipn,
        state.architecture().filters,
    );
    dot(&c.pref, e.row(m + ex.item as usize))
}
