//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any criterion fails.
//!
//! ```bash
//! cargo test --release -p bcipm --test acceptance
//! ```

mod common;

use std::path::Path;
use std::time::Instant;

use bcipm::cli::{run_training, run_variant, RunConfig, Variant};
use bcipm::dataset::{leave_one_out_split, BehaviorRegistry, Dataset, ItemId, Split};
use bcipm::eval::{self, popularity_baseline, EvalOptions};
use bcipm::fusion::{Architecture, LambdaPolicy, ModelState, PretrainMode};
use bcipm::graph::{propagate, NormalizedAdjacency};
use bcipm::matrix::{dot, Matrix};
use bcipm::synthetic::{generate, BehaviorSpec, SyntheticConfig};
use bcipm::training::TrainConfig;
use bcipm::Trainer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_correctness() -> Outcome {
    let train = common::micro();
    let base_cfg = common::micro_config();
    let variants: [(&str, TrainConfig); 4] = [
        ("full", base_cfg.clone()),
        (
            "sep",
            TrainConfig {
                pretrain_strategy: bcipm::training::PretrainStrategy::Sep,
                ..base_cfg.clone()
            },
        ),
        (
            "r-al",
            TrainConfig {
                no_prefilter: true,
                no_postfilter: true,
                ..base_cfg.clone()
            },
        ),
        (
            "fixed λ",
            TrainConfig {
                lambda: LambdaPolicy::Fixed(0.3),
                ..base_cfg.clone()
            },
        ),
    ];
    let mut worst = 0.0f64;
    let mut entries = 0;
    for (name, cfg) in &variants {
        let g = common::gradient_check(&train, cfg, 1e-4, 1e-8);
        if g.worst_rel >= 1e-4 {
            return Err(format!(
                "{name}: relative error {:.3e} (abs {:.3e})",
                g.worst_rel, g.worst_abs
            ));
        }
        worst = worst.max(g.worst_rel);
        entries += g.entries;
    }
    Ok(format!(
        "{entries} entries over {} configurations, worst relative error {worst:.2e}",
        variants.len()
    ))
}

fn propagation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let m = rng.random_range(1..=32);
        let n = rng.random_range(1..=64 - m);
        let density = rng.random_range(0.02..0.5);
        let edges = common::random_edges(m, n, density, &mut rng);
        let d = rng.random_range(1..=6);
        let e0 = Matrix::uniform(m + n, d, 1.0, &mut rng);
        let adj = NormalizedAdjacency::from_edges(m, n, &edges);
        let dense = common::dense_normalized(m, n, &edges);
        for layers in 0..=3 {
            let (e, _) = propagate(&adj, &e0, layers).map_err(|e| e.to_string())?;
            let oracle = common::dense_propagate(&dense, &common::to_dense(&e0), layers);
            for (r, row) in oracle.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    worst = worst.max((e.get(r, c) - v).abs());
                }
            }
        }
    }
    check(
        worst < 1e-10,
        format!("50 graphs x L in 0..=3, max abs error {worst:.2e}"),
    )
}

fn random_architecture(rng: &mut ChaCha8Rng, dim: usize) -> Architecture {
    let mut arch = Architecture {
        dim,
        pretrain_layers: rng.random_range(0..=2),
        enhance_layers: rng.random_range(0..=2),
        ..Architecture::default()
    };
    arch.pretrain = [
        PretrainMode::Aggregated,
        PretrainMode::Separate,
        PretrainMode::Disabled,
    ][rng.random_range(0..3)];
    match rng.random_range(0..4) {
        0 => arch.use_bipn = false,
        1 => arch.use_enhancement = false,
        _ => {}
    }
    if rng.random_bool(0.3) {
        arch.lambda = LambdaPolicy::Fixed(rng.random_range(0.0..=1.0));
    }
    arch.filters.prefilter = rng.random_bool(0.8);
    arch.filters.postfilter = rng.random_bool(0.8);
    arch
}

fn tiny_split(rng: &mut ChaCha8Rng) -> Split {
    let items = rng.random_range(8..=100);
    let cfg = SyntheticConfig {
        users: rng.random_range(3..=15),
        items,
        factors: 3,
        behaviors: vec![
            BehaviorSpec::new("view", rng.random_range(1..=6), 0.3),
            BehaviorSpec::new("buy", rng.random_range(1..=5), 0.0),
        ],
        seed: rng.random(),
        ..SyntheticConfig::default()
    };
    leave_one_out_split(&generate(&cfg).expect("synthetic data"))
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cutoffs = [1, 3, 5, 10];
    let mut users = 0;
    let mut models = 0;
    while models < 20 {
        let split = tiny_split(&mut rng);
        if split.test.is_empty() {
            continue;
        }
        models += 1;
        let dim = rng.random_range(2..=6);
        let arch = random_architecture(&mut rng, dim);
        let state = ModelState::init(&split.train, arch, &mut rng).map_err(|e| e.to_string())?;
        let report = eval::evaluate(&state, &split, &cutoffs).map_err(|e| e.to_string())?;
        for &k in &cutoffs {
            let (ranks, hr, ndcg) =
                common::brute_force_metrics(&split, &arch, &state.base, &state.bipn, k);
            for (u, r) in &ranks {
                if report.per_user_rank.get(u) != Some(r) {
                    return Err(format!(
                        "model {models}: user {u} rank {:?} vs oracle {r}",
                        report.per_user_rank.get(u)
                    ));
                }
            }
            let (dh, dn) = (
                (report.hr(k).unwrap() - hr).abs(),
                (report.ndcg(k).unwrap() - ndcg).abs(),
            );
            if dh >= 1e-12 || dn >= 1e-12 {
                return Err(format!(
                    "model {models} @{k}: HR diff {dh:.2e}, NDCG diff {dn:.2e}"
                ));
            }
        }
        users += split.test.len();
    }
    Ok(format!("20 models, {users} ranked users, identical ranks"))
}

fn synthetic_training_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        dim: 32,
        epochs,
        lr: 1e-2,
        batch_size: 128,
        seed: 2024,
        ..TrainConfig::default()
    }
}

fn overfit_sanity() -> Outcome {
    let split =
        leave_one_out_split(&generate(&SyntheticConfig::default()).map_err(|e| e.to_string())?);
    let train = &split.train;
    let all: Vec<usize> = (0..train.num_behaviors()).collect();
    let pop_target = popularity_baseline(&split, &[train.target_behavior()], &[10])
        .unwrap()
        .hr(10)
        .unwrap();
    let pop_all = popularity_baseline(&split, &all, &[10])
        .unwrap()
        .hr(10)
        .unwrap();
    let popularity = pop_target.max(pop_all);

    let mut trainer =
        Trainer::new(train, synthetic_training_config(100)).map_err(|e| e.to_string())?;
    let mut losses = Vec::new();
    while trainer.epoch < 100 {
        losses.push(trainer.train_epoch().map_err(|e| e.to_string())?.loss_total);
    }
    let hr = trainer.evaluate(&split, &[10]).unwrap().hr(10).unwrap();
    let ratio = losses[99] / losses[0];
    check(
        hr >= 1.5 * popularity && ratio < 0.3,
        format!(
            "HR@10 {hr:.3} vs popularity {popularity:.3} ({:.2}x), loss ratio {ratio:.4}",
            hr / popularity
        ),
    )
}

fn ablation_ordering() -> Outcome {
    let synth = SyntheticConfig {
        behaviors: vec![
            BehaviorSpec::new("click", 12, 0.5),
            BehaviorSpec::new("cart", 6, 0.5),
            BehaviorSpec::new("buy", 5, 0.0),
        ],
        ..SyntheticConfig::default()
    };
    let split = leave_one_out_split(&generate(&synth).map_err(|e| e.to_string())?);
    let base = synthetic_training_config(60);
    let opts = EvalOptions::default();
    let mut hr = Vec::new();
    for v in [
        Variant::Full,
        Variant::WithoutEnhancement,
        Variant::WithoutNetwork,
    ] {
        let r = run_variant(&split, &v.configure(&base), &opts).map_err(|e| e.to_string())?;
        hr.push((v, r.hr(10).unwrap()));
    }
    let text: Vec<String> = hr.iter().map(|(v, h)| format!("{v} {h:.3}")).collect();
    check(
        hr[0].1 >= hr[1].1 && hr[0].1 >= hr[2].1,
        format!("HR@10 {}", text.join(", ")),
    )
}

fn lambda_policy() -> Outcome {
    let train = common::micro();
    let arch = Architecture {
        dim: 8,
        pretrain_layers: 1,
        enhance_layers: 1,
        ..Architecture::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut state = ModelState::init(&train, arch, &mut rng).map_err(|e| e.to_string())?;
    let m = train.num_users();
    let zero_users: Vec<u32> = (0..m as u32)
        .filter(|&u| train.target_items_of(u).is_empty())
        .collect();
    if zero_users.is_empty() {
        return Err("fixture has no user without target interactions".into());
    }
    let inverse: Vec<Vec<f64>> = zero_users
        .iter()
        .map(|&u| state.score_all(u, &state.aggregate(u, &train), state.lambda(u, &train)))
        .collect();

    let mut worst = 0.0f64;
    state.set_lambda_policy(LambdaPolicy::Fixed(1.0));
    for (&u, inv) in zero_users.iter().zip(&inverse) {
        let fixed = state.score_all(u, &state.aggregate(u, &train), state.lambda(u, &train));
        for (a, b) in inv.iter().zip(&fixed) {
            worst = worst.max((a - b).abs());
        }
    }
    let enh = state.enhanced().expect("enhancement enabled").clone();
    for u in 0..m as u32 {
        let scores = state.score_all(u, &state.aggregate(u, &train), state.lambda(u, &train));
        for (i, s) in scores.iter().enumerate() {
            worst = worst.max((s - dot(enh.row(u as usize), enh.row(m + i))).abs());
        }
    }
    state.set_lambda_policy(LambdaPolicy::Fixed(0.0));
    let e = state.embeddings().clone();
    for u in 0..m as u32 {
        let agg = state.aggregate(u, &train);
        let scores = state.score_all(u, &agg, state.lambda(u, &train));
        for (i, s) in scores.iter().enumerate() {
            worst = worst.max((s - dot(&agg, e.row(m + i))).abs());
        }
    }
    check(
        worst <= 1e-12,
        format!(
            "{} zero-count users, max deviation {worst:.2e}",
            zero_users.len()
        ),
    )
}

fn determinism_and_resume() -> Outcome {
    let split =
        leave_one_out_split(&generate(&SyntheticConfig::default()).map_err(|e| e.to_string())?);
    let mut cfg = RunConfig {
        train: TrainConfig {
            dim: 16,
            epochs: 6,
            lr: 1e-2,
            batch_size: 256,
            seed: 99,
            ..TrainConfig::default()
        },
        eval_interval: 2,
        cutoffs: vec![5, 10],
        ..RunConfig::default()
    };
    let run = |cfg: &RunConfig, threads: usize, resume: Option<&Path>, last: Option<&Path>| {
        bcipm::cli::with_threads(Some(threads), || {
            run_training(cfg, &split, resume, last, &mut std::io::sink())
        })
        .and_then(|r| r)
        .map_err(|e| e.to_string())
    };
    let a = run(&cfg, 2, None, None)?;
    let b = run(&cfg, 2, None, None)?;
    if a.metrics != b.metrics {
        return Err("metric streams differ between identical runs".into());
    }
    let c = run(&cfg, 5, None, None)?;
    if a.metrics != c.metrics {
        return Err("metric streams differ between 2 and 5 threads".into());
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ckpt = dir.path().join("mid.ckpt");
    let mut half = cfg.clone();
    half.train.epochs = 3;
    run(&half, 2, None, Some(&ckpt))?;
    cfg.train.epochs = 6;
    let resumed = run(&cfg, 2, Some(&ckpt), None)?;
    if resumed.metrics[..] != a.metrics[3..] {
        return Err("resumed metric stream differs from the straight run".into());
    }
    check(
        resumed.last == a.last && a.last.is_some(),
        format!(
            "{} identical metric lines, resumed final report matches",
            a.metrics.len()
        ),
    )
}

fn dedup_and_split() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let reg = BehaviorRegistry::parse("click,buy").unwrap();
    let d =
        Dataset::load(fixtures.join("dedup_timestamps.tsv"), &reg).map_err(|e| e.to_string())?;
    let id = |s: &str| d.users().index_of(s).unwrap();
    let item = |s: &str| d.items().index_of(s).unwrap();
    let orders = |u: &str, b: usize| -> Vec<(ItemId, u64)> {
        d.interactions(b)
            .iter()
            .filter(|x| x.user == id(u))
            .map(|x| (x.item, x.order))
            .collect()
    };
    let mut failures = Vec::new();
    if orders("alice", 0) != vec![(item("apple"), 10), (item("pear"), 26)] {
        failures.push("alice clicks");
    }
    if orders("alice", 1) != vec![(item("plum"), 5), (item("apple"), 20), (item("pear"), 25)] {
        failures.push("alice buys keep earliest occurrence");
    }
    if orders("carol", 1) != vec![(item("pear"), 1)] {
        failures.push("carol duplicate buy");
    }
    let split = leave_one_out_split(&d);
    if split.test.len() != 1 || split.test_item(id("alice")) != Some(item("pear")) {
        failures.push("held-out item is the latest deduplicated target interaction");
    }
    if split
        .train
        .target_items_of(id("alice"))
        .contains(&item("pear"))
    {
        failures.push("held-out item removed from target training data");
    }
    if !split.train.has_interaction(id("alice"), item("pear"), 0) {
        failures.push("held-out item kept in auxiliary behaviors");
    }
    if split.train.target_items_of(id("bob")).len() != 1 || split.test_item(id("bob")).is_some() {
        failures.push("single-interaction users stay in training only");
    }

    let reg2 = BehaviorRegistry::parse("view,buy").unwrap();
    let p =
        Dataset::load(fixtures.join("dedup_positions.tsv"), &reg2).map_err(|e| e.to_string())?;
    let sp = leave_one_out_split(&p);
    let u1 = p.users().index_of("u1").unwrap();
    if p.target_items_of(u1).len() != 2 || sp.test_item(u1) != p.items().index_of("b") {
        failures.push("file order breaks ties without timestamps");
    }
    let snap =
        Split::from_snapshot(&split.to_snapshot(), Path::new("snap")).map_err(|e| e.to_string())?;
    if snap != split {
        failures.push("snapshot round trip");
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            "2 fixtures, 9 contracts".into()
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("gradient correctness", gradient_correctness),
        ("propagation oracle", propagation_oracle),
        ("metric oracle", metric_oracle),
        ("overfit sanity", overfit_sanity),
        ("ablation ordering", ablation_ordering),
        ("lambda policy", lambda_policy),
        ("determinism and resume", determinism_and_resume),
        ("dedup and split contracts", dedup_and_split),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        if filter.as_deref().is_some_and(|s| !name.contains(s)) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {}. {name}: {detail} [{secs:.1}s]", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {}. {name}: {detail} [{secs:.1}s]", n + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
