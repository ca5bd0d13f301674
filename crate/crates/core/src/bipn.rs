//! Behavior-contextualized item preference network.
//!
//! For a user embedding `e_u`, item embedding `e_i` and one-hot behavior
//! code `e_b`, with `x = e_u ‖ e_i ‖ e_b`:
//!
//! ```text
//! h1     = σ(W1 x + b1)                      pre-filter gate
//! e_u^b  = h1 ⊙ e_u
//! e_ui^b = tanh(W2 (e_u^b ‖ e_i ‖ e_b) + b2)   item-aware layer
//! h2     = σ(W3 x + b3)                      post-filter gate
//! pref   = h2 ⊙ e_ui^b
//! ```
//!
//! A single parameter set is shared by all behaviors; behavior identity
//! enters only through the fixed one-hot code.

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{ItemId, UserId};
use crate::matrix::{dot, log_sigmoid, sigmoid, EmbeddingMatrix, Matrix};

/// Which gating layers are active. Removing the pre-filter makes
/// `e_u^b = e_u`; removing the post-filter makes `pref = e_ui^b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterLayers {
    pub prefilter: bool,
    pub postfilter: bool,
}

impl Default for FilterLayers {
    fn default() -> Self {
        Self {
            prefilter: true,
            postfilter: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BipnParams {
    dim: usize,
    num_behaviors: usize,
    /// `W1, W2, W3`, each `d × (2d + K)`.
    pub weights: [Matrix; 3],
    /// `b1, b2, b3`, each of length `d`.
    pub biases: [Vec<f64>; 3],
}

impl BipnParams {
    pub fn zeros(dim: usize, num_behaviors: usize) -> Self {
        let cols = 2 * dim + num_behaviors;
        Self {
            dim,
            num_behaviors,
            weights: std::array::from_fn(|_| Matrix::zeros(dim, cols)),
            biases: std::array::from_fn(|_| vec![0.0; dim]),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(dim: usize, num_behaviors: usize, rng: &mut R) -> Self {
        let cols = 2 * dim + num_behaviors;
        Self {
            dim,
            num_behaviors,
            weights: std::array::from_fn(|_| Matrix::xavier(dim, cols, rng)),
            biases: std::array::from_fn(|_| vec![0.0; dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_behaviors(&self) -> usize {
        self.num_behaviors
    }

    /// Length of the behavior code `l`, equal to the behavior count.
    pub fn code_len(&self) -> usize {
        self.num_behaviors
    }

    pub fn concat_dim(&self) -> usize {
        2 * self.dim + self.num_behaviors
    }

    pub fn behavior_code(&self, behavior: usize) -> Vec<f64> {
        let mut code = vec![0.0; self.num_behaviors];
        code[behavior] = 1.0;
        code
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().map(Matrix::squared_norm).sum::<f64>()
            + self
                .biases
                .iter()
                .flat_map(|b| b.iter())
                .map(|x| x * x)
                .sum::<f64>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|x| x.is_finite())
    }

    fn concat(&self, a: &[f64], e_i: &[f64], behavior: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.concat_dim());
        x.extend_from_slice(a);
        x.extend_from_slice(e_i);
        x.extend((0..self.num_behaviors).map(|k| if k == behavior { 1.0 } else { 0.0 }));
        x
    }
}

/// Gradient buffers shaped like [`BipnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct BipnGrads {
    pub weights: [Matrix; 3],
    pub biases: [Vec<f64>; 3],
}

impl BipnGrads {
    pub fn zeros_like(p: &BipnParams) -> Self {
        Self {
            weights: std::array::from_fn(|k| {
                Matrix::zeros(p.weights[k].rows(), p.weights[k].cols())
            }),
            biases: std::array::from_fn(|k| vec![0.0; p.biases[k].len()]),
        }
    }

    pub fn add(&mut self, other: &BipnGrads) {
        for k in 0..3 {
            self.weights[k].add_scaled(&other.weights[k], 1.0);
            for (a, b) in self.biases[k].iter_mut().zip(&other.biases[k]) {
                *a += b;
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().map(Matrix::squared_norm).sum::<f64>()
            + self.biases.iter().flatten().map(|x| x * x).sum::<f64>()
    }

    pub fn scale(&mut self, alpha: f64) {
        for k in 0..3 {
            self.weights[k].scale(alpha);
            self.biases[k].iter_mut().for_each(|x| *x *= alpha);
        }
    }
}

/// Intermediates of one forward pass, enough to replay the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BipnCache {
    pub behavior: usize,
    pub e_u: Vec<f64>,
    pub e_i: Vec<f64>,
    /// `e_u ‖ e_i ‖ e_b`, input to both gates.
    pub x: Vec<f64>,
    /// Pre-filter gate; empty when the layer is removed.
    pub h1: Vec<f64>,
    pub e_ub: Vec<f64>,
    /// `e_u^b ‖ e_i ‖ e_b`, input to the item-aware layer.
    pub x2: Vec<f64>,
    pub e_uib: Vec<f64>,
    /// Post-filter gate; empty when the layer is removed.
    pub h2: Vec<f64>,
    pub pref: Vec<f64>,
}

pub fn forward(
    e_u: &[f64],
    e_i: &[f64],
    behavior: usize,
    params: &BipnParams,
    filters: FilterLayers,
) -> BipnCache {
    let d = params.dim;
    assert_eq!(e_u.len(), d, "user embedding dimension");
    assert_eq!(e_i.len(), d, "item embedding dimension");
    assert!(
        behavior < params.num_behaviors,
        "behavior index out of range"
    );

    let x = params.concat(e_u, e_i, behavior);
    let gate = |k: usize| {
        let mut a = vec![0.0; d];
        params.weights[k].matvec(&x, &mut a);
        a.iter()
            .zip(&params.biases[k])
            .map(|(a, b)| sigmoid(a + b))
            .collect::<Vec<f64>>()
    };

    let (h1, e_ub) = if filters.prefilter {
        let h1 = gate(0);
        let e_ub = h1.iter().zip(e_u).map(|(h, e)| h * e).collect();
        (h1, e_ub)
    } else {
        (Vec::new(), e_u.to_vec())
    };

    let x2 = params.concat(&e_ub, e_i, behavior);
    let mut e_uib = vec![0.0; d];
    params.weights[1].matvec(&x2, &mut e_uib);
    for (v, b) in e_uib.iter_mut().zip(&params.biases[1]) {
        *v = (*v + b).tanh();
    }

    let (h2, pref) = if filters.postfilter {
        let h2 = gate(2);
        let pref = h2.iter().zip(&e_uib).map(|(h, e)| h * e).collect();
        (h2, pref)
    } else {
        (Vec::new(), e_uib.clone())
    };

    BipnCache {
        behavior,
        e_u: e_u.to_vec(),
        e_i: e_i.to_vec(),
        x,
        h1,
        e_ub,
        x2,
        e_uib,
        h2,
        pref,
    }
}

/// Reverse pass for one example. Accumulates parameter gradients into
/// `grads` and input gradients into `grad_eu` / `grad_ei`.
pub fn backward(
    cache: &BipnCache,
    params: &BipnParams,
    grad_pref: &[f64],
    grads: &mut BipnGrads,
    grad_eu: &mut [f64],
    grad_ei: &mut [f64],
) {
    let d = params.dim;
    let mut grad_x = vec![0.0; params.concat_dim()];

    let grad_eui: Vec<f64> = if cache.h2.is_empty() {
        grad_pref.to_vec()
    } else {
        let grad_a3: Vec<f64> = (0..d)
            .map(|k| {
                let h = cache.h2[k];
                grad_pref[k] * cache.e_uib[k] * h * (1.0 - h)
            })
            .collect();
        grads.weights[2].rank1_acc(&grad_a3, &cache.x);
        add_into(&mut grads.biases[2], &grad_a3);
        params.weights[2].matvec_t_acc(&grad_a3, &mut grad_x);
        (0..d).map(|k| grad_pref[k] * cache.h2[k]).collect()
    };

    let grad_a2: Vec<f64> = (0..d)
        .map(|k| grad_eui[k] * (1.0 - cache.e_uib[k] * cache.e_uib[k]))
        .collect();
    grads.weights[1].rank1_acc(&grad_a2, &cache.x2);
    add_into(&mut grads.biases[1], &grad_a2);
    let mut grad_x2 = vec![0.0; params.concat_dim()];
    params.weights[1].matvec_t_acc(&grad_a2, &mut grad_x2);
    add_into(grad_ei, &grad_x2[d..2 * d]);
    let grad_eub = &grad_x2[..d];

    if cache.h1.is_empty() {
        add_into(grad_eu, grad_eub);
    } else {
        let grad_a1: Vec<f64> = (0..d)
            .map(|k| {
                let h = cache.h1[k];
                grad_eub[k] * cache.e_u[k] * h * (1.0 - h)
            })
            .collect();
        grads.weights[0].rank1_acc(&grad_a1, &cache.x);
        add_into(&mut grads.biases[0], &grad_a1);
        params.weights[0].matvec_t_acc(&grad_a1, &mut grad_x);
        for k in 0..d {
            grad_eu[k] += grad_eub[k] * cache.h1[k];
        }
    }

    add_into(grad_eu, &grad_x[..d]);
    add_into(grad_ei, &grad_x[d..2 * d]);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

/// `y' = prefᵀ e_i`.
pub fn score(pref: &[f64], e_i: &[f64]) -> f64 {
    dot(pref, e_i)
}

/// Logistic cross-entropy of one example and its derivative w.r.t. the
/// logit.
pub fn bce_term(logit: f64, label: bool) -> (f64, f64) {
    let y = if label { 1.0 } else { 0.0 };
    let loss = -(y * log_sigmoid(logit) + (1.0 - y) * log_sigmoid(-logit));
    (loss, sigmoid(logit) - y)
}

/// Summed logistic cross-entropy; an empty batch gives 0.
pub fn bce_loss(logits: &[f64], labels: &[bool]) -> f64 {
    assert_eq!(
        logits.len(),
        labels.len(),
        "logits and labels differ in length"
    );
    logits
        .iter()
        .zip(labels)
        .map(|(&l, &y)| bce_term(l, y).0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BceExample {
    pub user: UserId,
    pub item: ItemId,
    pub behavior: usize,
    pub label: bool,
}

/// Sparse row gradients `(row, grad)` produced by a chunk of examples.
type RowGrads = Vec<(usize, Vec<f64>)>;

const CHUNK: usize = 256;

/// BCE loss of a batch over embeddings `emb` (user `u` at row `u`, item
/// `i` at row `num_users + i`). Gradients of `weight · loss` go into
/// `grads` and `grad_emb`. Returns the unweighted loss.
///
/// Work is split into fixed-size chunks whose partial results are merged
/// in chunk order, so the output is independent of the thread count.
#[allow(clippy::too_many_arguments)]
pub fn forward_backward(
    examples: &[BceExample],
    emb: &EmbeddingMatrix,
    num_users: usize,
    params: &BipnParams,
    filters: FilterLayers,
    weight: f64,
    grads: &mut BipnGrads,
    grad_emb: &mut EmbeddingMatrix,
) -> f64 {
    let d = params.dim;
    let partials: Vec<(f64, BipnGrads, RowGrads)> = examples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut g = BipnGrads::zeros_like(params);
            let mut rows = Vec::with_capacity(2 * chunk.len());
            for ex in chunk {
                let ur = ex.user as usize;
                let ir = num_users + ex.item as usize;
                let e_i = emb.row(ir);
                let cache = forward(emb.row(ur), e_i, ex.behavior, params, filters);
                let logit = score(&cache.pref, e_i);
                let (l, dlogit) = bce_term(logit, ex.label);
                loss += l;
                let scale = weight * dlogit;
                let grad_pref: Vec<f64> = e_i.iter().map(|x| scale * x).collect();
                let mut g_eu = vec![0.0; d];
                let mut g_ei: Vec<f64> = cache.pref.iter().map(|p| scale * p).collect();
                backward(&cache, params, &grad_pref, &mut g, &mut g_eu, &mut g_ei);
                rows.push((ur, g_eu));
                rows.push((ir, g_ei));
            }
            (loss, g, rows)
        })
        .collect();

    let mut total = 0.0;
    for (loss, g, rows) in partials {
        total += loss;
        grads.add(&g);
        for (r, gr) in rows {
            add_into(grad_emb.row_mut(r), &gr);
        }
    }
    total
}

/// Target-behavior preference of `user`: the sum of per-item preferences
/// over `target_items`, summed in ascending item order.
pub fn aggregate_target_preferences(
    user: UserId,
    params: &BipnParams,
    filters: FilterLayers,
    target_items: &[ItemId],
    emb: &EmbeddingMatrix,
    num_users: usize,
) -> Vec<f64> {
    aggregate_with_caches(user, params, filters, target_items, emb, num_users).0
}

/// Like [`aggregate_target_preferences`] but also returns each item's
/// forward cache, in summation order.
pub fn aggregate_with_caches(
    user: UserId,
    params: &BipnParams,
    filters: FilterLayers,
    target_items: &[ItemId],
    emb: &EmbeddingMatrix,
    num_users: usize,
) -> (Vec<f64>, Vec<(ItemId, BipnCache)>) {
    let mut items = target_items.to_vec();
    items.sort_unstable();
    let target = params.num_behaviors - 1;
    let e_u = emb.row(user as usize);
    let mut agg = vec![0.0; params.dim];
    let mut caches = Vec::with_capacity(items.len());
    for i in items {
        let cache = forward(
            e_u,
            emb.row(num_users + i as usize),
            target,
            params,
            filters,
        );
        add_into(&mut agg, &cache.pref);
        caches.push((i, cache));
    }
    (agg, caches)
}
