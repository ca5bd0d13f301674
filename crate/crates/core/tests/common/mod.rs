//! Dense, scalar reference implementations used as test oracles. Nothing
//! here calls the library's numeric code; only its data containers.

#![allow(dead_code)]

use std::path::Path;

use bcipm::bipn::BipnParams;
use bcipm::dataset::{BehaviorRegistry, Dataset, ItemId, Split, UserId};
use bcipm::fusion::{Architecture, LambdaPolicy, PretrainMode};
use bcipm::matrix::Matrix;
use bcipm::training::Batch;

pub type Dense = Vec<Vec<f64>>;

pub fn dataset(behaviors: &str, tsv: &str) -> Dataset {
    let reg = BehaviorRegistry::parse(behaviors).unwrap();
    Dataset::parse_tsv(tsv, &reg, Path::new("fixture")).unwrap()
}

/// `D^-1/2 A D^-1/2` as a dense `(M+N) x (M+N)` matrix.
pub fn dense_normalized(m: usize, n: usize, edges: &[(u32, u32)]) -> Dense {
    let size = m + n;
    let mut a = vec![vec![0.0; size]; size];
    for &(u, i) in edges {
        a[u as usize][m + i as usize] = 1.0;
        a[m + i as usize][u as usize] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for r in 0..size {
        for c in 0..size {
            if a[r][c] != 0.0 {
                a[r][c] /= (deg[r] * deg[c]).sqrt();
            }
        }
    }
    a
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|c| row.iter().zip(b).map(|(x, br)| x * br[c]).sum())
                .collect()
        })
        .collect()
}

/// `Σ_{l=0..L} 1/(l+1) · A^l E0` with explicit matrix powers.
pub fn dense_propagate(a: &Dense, e0: &Dense, layers: usize) -> Dense {
    let mut out = e0.clone();
    let mut power = e0.clone();
    for l in 1..=layers {
        power = matmul(a, &power);
        let w = 1.0 / (l as f64 + 1.0);
        for (o, p) in out.iter_mut().zip(&power) {
            for (x, y) in o.iter_mut().zip(p) {
                *x += w * y;
            }
        }
    }
    out
}

pub fn to_dense(m: &Matrix) -> Dense {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn edges_of(train: &Dataset, behaviors: &[usize]) -> Vec<(u32, u32)> {
    behaviors
        .iter()
        .flat_map(|&b| train.interactions(b).iter().map(|x| (x.user, x.item)))
        .collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(w: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|r| b[r] + (0..w.cols()).map(|c| w.get(r, c) * x[c]).sum::<f64>())
        .collect()
}

/// Preference vector of one `(user, item, behavior)` triple.
pub fn ref_pref(
    e_u: &[f64],
    e_i: &[f64],
    behavior: usize,
    p: &BipnParams,
    prefilter: bool,
    postfilter: bool,
) -> Vec<f64> {
    let k = p.num_behaviors();
    let code: Vec<f64> = (0..k)
        .map(|j| if j == behavior { 1.0 } else { 0.0 })
        .collect();
    let cat = |a: &[f64]| -> Vec<f64> { a.iter().chain(e_i).chain(&code).copied().collect() };
    let x = cat(e_u);
    let e_ub: Vec<f64> = if prefilter {
        let h1 = affine(&p.weights[0], &p.biases[0], &x);
        e_u.iter().zip(&h1).map(|(e, h)| e * sig(*h)).collect()
    } else {
        e_u.to_vec()
    };
    let e_uib: Vec<f64> = affine(&p.weights[1], &p.biases[1], &cat(&e_ub))
        .into_iter()
        .map(f64::tanh)
        .collect();
    if postfilter {
        let h2 = affine(&p.weights[2], &p.biases[2], &x);
        e_uib.iter().zip(&h2).map(|(e, h)| e * sig(*h)).collect()
    } else {
        e_uib
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Propagated and enhanced embeddings from the base table.
pub struct RefModel {
    pub m: usize,
    pub e: Dense,
    pub enh: Option<Dense>,
    pub arch: Architecture,
}

impl RefModel {
    pub fn build(train: &Dataset, arch: &Architecture, base: &Matrix) -> Self {
        let (m, n) = (train.num_users(), train.num_items());
        let target = train.target_behavior();
        let e0 = to_dense(base);
        let behaviors: Vec<usize> = if arch.aux_in_pretrain {
            (0..train.num_behaviors()).collect()
        } else {
            vec![target]
        };
        let e = match arch.pretrain {
            PretrainMode::Disabled => e0,
            PretrainMode::Aggregated => {
                let a = dense_normalized(m, n, &edges_of(train, &behaviors));
                dense_propagate(&a, &e0, arch.pretrain_layers)
            }
            PretrainMode::Separate => {
                let mut sum = vec![vec![0.0; arch.dim]; m + n];
                for &b in &behaviors {
                    let a = dense_normalized(m, n, &edges_of(train, &[b]));
                    let p = dense_propagate(&a, &e0, arch.pretrain_layers);
                    for (s, r) in sum.iter_mut().zip(&p) {
                        for (x, y) in s.iter_mut().zip(r) {
                            *x += y;
                        }
                    }
                }
                sum
            }
        };
        let enh = arch.use_enhancement.then(|| {
            let a = dense_normalized(m, n, &edges_of(train, &[target]));
            let mut p = dense_propagate(&a, &e, arch.enhance_layers);
            for (s, r) in p.iter_mut().zip(&e) {
                for (x, y) in s.iter_mut().zip(r) {
                    *x += y;
                }
            }
            p
        });
        Self {
            m,
            e,
            enh,
            arch: *arch,
        }
    }

    pub fn lambda(&self, train: &Dataset, user: UserId) -> f64 {
        if !self.arch.use_bipn {
            return 1.0;
        }
        if !self.arch.use_enhancement {
            return 0.0;
        }
        match self.arch.lambda {
            LambdaPolicy::Fixed(v) => v,
            LambdaPolicy::InverseCount => {
                let n = train.target_items_of(user).len();
                if n == 0 {
                    1.0
                } else {
                    1.0 / n as f64
                }
            }
        }
    }

    pub fn aggregate(&self, train: &Dataset, p: &BipnParams, user: UserId) -> Vec<f64> {
        let mut agg = vec![0.0; self.arch.dim];
        if !self.arch.use_bipn {
            return agg;
        }
        let f = self.arch.filters;
        for &i in train.target_items_of(user) {
            let pref = ref_pref(
                &self.e[user as usize],
                &self.e[self.m + i as usize],
                train.target_behavior(),
                p,
                f.prefilter,
                f.postfilter,
            );
            for (a, x) in agg.iter_mut().zip(&pref) {
                *a += x;
            }
        }
        agg
    }

    pub fn score(&self, train: &Dataset, p: &BipnParams, user: UserId, item: ItemId) -> f64 {
        let lambda = self.lambda(train, user);
        let agg = self.aggregate(train, p, user);
        let mut y = (1.0 - lambda) * dot(&agg, &self.e[self.m + item as usize]);
        if let Some(enh) = &self.enh {
            y += lambda * dot(&enh[user as usize], &enh[self.m + item as usize]);
        }
        y
    }
}

/// `β·BCE + (1-β)·BPR + γ·‖Θ‖²` of a batch, recomputed from scratch.
pub fn ref_loss(
    train: &Dataset,
    arch: &Architecture,
    base: &Matrix,
    p: &BipnParams,
    batch: &Batch,
    beta: f64,
    gamma: f64,
) -> f64 {
    let model = RefModel::build(train, arch, base);
    let m = model.m;
    let mut bce = 0.0;
    if arch.use_bipn {
        for ex in &batch.bce {
            let e_i = &model.e[m + ex.item as usize];
            let pref = ref_pref(
                &model.e[ex.user as usize],
                e_i,
                ex.behavior,
                p,
                arch.filters.prefilter,
                arch.filters.postfilter,
            );
            let prob = sig(dot(&pref, e_i));
            bce -= if ex.label {
                prob.ln()
            } else {
                (1.0 - prob).ln()
            };
        }
    }
    let mut bpr = 0.0;
    for t in &batch.bpr {
        let diff = model.score(train, p, t.user, t.pos) - model.score(train, p, t.user, t.neg);
        bpr -= sig(diff).ln();
    }
    let mut sq = base.as_slice().iter().map(|x| x * x).sum::<f64>();
    for k in 0..3 {
        sq += p.weights[k].as_slice().iter().map(|x| x * x).sum::<f64>();
        sq += p.biases[k].iter().map(|x| x * x).sum::<f64>();
    }
    beta * bce + (1.0 - beta) * bpr + gamma * sq
}

/// Ranks by sorting: candidates are the catalog minus the user's target
/// training items; among equal scores the held-out item is placed last.
pub fn brute_force_rank(scores: &[f64], held: ItemId, excluded: &[ItemId]) -> usize {
    let mut cands: Vec<(f64, bool)> = (0..scores.len() as ItemId)
        .filter(|i| *i == held || !excluded.contains(i))
        .map(|i| (scores[i as usize], i == held))
        .collect();
    cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    cands.iter().position(|c| c.1).unwrap() + 1
}

/// Mean HR@k and NDCG@k over the split's held-out users, scoring with the
/// reference model.
pub fn brute_force_metrics(
    split: &Split,
    arch: &Architecture,
    base: &Matrix,
    p: &BipnParams,
    k: usize,
) -> (Vec<(UserId, usize)>, f64, f64) {
    let train = &split.train;
    let model = RefModel::build(train, arch, base);
    let mut ranks = Vec::new();
    let (mut hr, mut ndcg) = (0.0, 0.0);
    for h in &split.test {
        let scores: Vec<f64> = (0..train.num_items() as ItemId)
            .map(|i| model.score(train, p, h.user, i))
            .collect();
        let r = brute_force_rank(&scores, h.item, train.target_items_of(h.user));
        if r <= k {
            hr += 1.0;
            ndcg += 1.0 / ((r + 1) as f64).log2();
        }
        ranks.push((h.user, r));
    }
    let n = split.test.len() as f64;
    (ranks, hr / n, ndcg / n)
}

/// Random `(u, i)` edge list; every user and item may or may not appear.
pub fn random_edges<R: rand::Rng>(
    m: usize,
    n: usize,
    density: f64,
    rng: &mut R,
) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for u in 0..m {
        for i in 0..n {
            if rng.random::<f64>() < density {
                out.push((u as u32, i as u32));
            }
        }
    }
    out
}

/// Micro instance: 6 users, 8 items, 3 behaviors; user `u5` has no target
/// interactions and `u4` exactly one.
pub const MICRO_TSV: &str = "\
u0\ti0\tview\t1\nu0\ti1\tview\t2\nu0\ti2\tcart\t3\nu0\ti1\tbuy\t4\nu0\ti2\tbuy\t5\n\
u1\ti3\tview\t1\nu1\ti4\tcart\t2\nu1\ti3\tbuy\t3\nu1\ti4\tbuy\t4\nu1\ti5\tbuy\t5\n\
u2\ti5\tview\t1\nu2\ti6\tview\t2\nu2\ti6\tcart\t3\nu2\ti6\tbuy\t4\nu2\ti7\tbuy\t5\n\
u3\ti0\tview\t1\nu3\ti7\tcart\t2\nu3\ti0\tbuy\t3\nu3\ti3\tbuy\t4\n\
u4\ti2\tview\t1\nu4\ti4\tbuy\t2\n\
u5\ti1\tview\t1\nu5\ti5\tcart\t2\n";

pub fn micro() -> Dataset {
    dataset("view,cart,buy", MICRO_TSV)
}

/// Worst finite-difference disagreement over every entry of Θ for one
/// sampled batch. An entry passes when its absolute error is below
/// `floor` or its relative error below the caller's tolerance; the
/// returned value is the largest relative error among entries whose
/// absolute error exceeds `floor`.
pub struct GradCheck {
    pub entries: usize,
    pub worst_rel: f64,
    pub worst_abs: f64,
}

pub fn gradient_check(train: &Dataset, cfg: &bcipm::TrainConfig, h: f64, floor: f64) -> GradCheck {
    use bcipm::fusion::ModelState;
    use bcipm::training::{batch_objective, bce_positives, sample_bce_batch, sample_bpr_triples};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let arch = cfg.architecture();
    let mut state = ModelState::init(train, arch, &mut rng).unwrap();
    // Non-zero biases so every bias gradient is exercised.
    for k in 0..3 {
        for (j, b) in state.bipn.biases[k].iter_mut().enumerate() {
            *b = 0.05 * ((j + k) as f64).sin();
        }
    }
    state.materialize().unwrap();
    let batch = Batch {
        bce: sample_bce_batch(train, &bce_positives(train, cfg), &mut rng, cfg),
        bpr: sample_bpr_triples(train, &mut rng),
    };
    let (_, mut grads) = batch_objective(&state, train, &batch, cfg.beta, cfg.gamma).unwrap();
    grads.add_l2(&state, cfg.gamma, None);

    let base = state.base.clone();
    let net = state.bipn.clone();
    let loss =
        |b: &Matrix, p: &BipnParams| ref_loss(train, &arch, b, p, &batch, cfg.beta, cfg.gamma);
    let mut out = GradCheck {
        entries: 0,
        worst_rel: 0.0,
        worst_abs: 0.0,
    };
    let mut record = |analytic: f64, numeric: f64| {
        let abs = (analytic - numeric).abs();
        out.entries += 1;
        out.worst_abs = out.worst_abs.max(abs);
        if abs > floor {
            let rel = abs / analytic.abs().max(numeric.abs());
            out.worst_rel = out.worst_rel.max(rel);
        }
    };

    for idx in 0..base.as_slice().len() {
        let mut plus = base.clone();
        plus.as_mut_slice()[idx] += h;
        let mut minus = base.clone();
        minus.as_mut_slice()[idx] -= h;
        let numeric = (loss(&plus, &net) - loss(&minus, &net)) / (2.0 * h);
        record(grads.base.as_slice()[idx], numeric);
    }
    for k in 0..3 {
        for idx in 0..net.weights[k].as_slice().len() {
            let mut plus = net.clone();
            plus.weights[k].as_mut_slice()[idx] += h;
            let mut minus = net.clone();
            minus.weights[k].as_mut_slice()[idx] -= h;
            let numeric = (loss(&base, &plus) - loss(&base, &minus)) / (2.0 * h);
            record(grads.bipn.weights[k].as_slice()[idx], numeric);
        }
        for idx in 0..net.biases[k].len() {
            let mut plus = net.clone();
            plus.biases[k][idx] += h;
            let mut minus = net.clone();
            minus.biases[k][idx] -= h;
            let numeric = (loss(&base, &plus) - loss(&base, &minus)) / (2.0 * h);
            record(grads.bipn.biases[k][idx], numeric);
        }
    }
    out
}

/// Configuration of the micro gradient-check instance.
pub fn micro_config() -> bcipm::TrainConfig {
    bcipm::TrainConfig {
        dim: 8,
        pretrain_layers: 1,
        enhance_layers: 1,
        negatives: 2,
        beta: 0.5,
        gamma: 1e-3,
        seed: 11,
        ..bcipm::TrainConfig::default()
    }
}
