mod common;

use bcipm::bipn::{self, BipnGrads, BipnParams, FilterLayers};
use bcipm::fusion::LambdaPolicy;
use bcipm::training::{PretrainStrategy, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn assert_check(cfg: &TrainConfig) {
    let g = common::gradient_check(&common::micro(), cfg, 1e-4, 1e-8);
    assert!(g.entries > 0);
    assert!(g.worst_rel < 1e-4, "relative error {:.3e}", g.worst_rel);
}

#[test]
fn full_model() {
    assert_check(&common::micro_config());
}

#[test]
fn deeper_propagation() {
    assert_check(&TrainConfig {
        pretrain_layers: 2,
        enhance_layers: 3,
        ..common::micro_config()
    });
}

#[test]
fn ablations() {
    let base = common::micro_config();
    let configs = [
        TrainConfig {
            no_pretrain: true,
            ..base.clone()
        },
        TrainConfig {
            no_enhancement: true,
            ..base.clone()
        },
        TrainConfig {
            no_bipn: true,
            ..base.clone()
        },
        TrainConfig {
            no_prefilter: true,
            ..base.clone()
        },
        TrainConfig {
            no_postfilter: true,
            ..base.clone()
        },
        TrainConfig {
            aux_in_pretrain: false,
            aux_in_bipn: false,
            ..base.clone()
        },
        TrainConfig {
            pretrain_strategy: PretrainStrategy::Sep,
            ..base.clone()
        },
    ];
    for cfg in &configs {
        assert_check(cfg);
    }
}

#[test]
fn loss_weights_and_lambda() {
    let base = common::micro_config();
    for (beta, gamma) in [(0.0, 0.0), (1.0, 1e-2), (0.2, 1e-4)] {
        assert_check(&TrainConfig {
            beta,
            gamma,
            ..base.clone()
        });
    }
    for v in [0.0, 0.6, 1.0] {
        assert_check(&TrainConfig {
            lambda: LambdaPolicy::Fixed(v),
            ..base.clone()
        });
    }
}

#[test]
fn network_reverse_pass_matches_scalar_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (d, k) = (5, 3);
    let params = BipnParams::init(d, k, &mut rng);
    let e_u = [0.3, -0.2, 0.5, 0.1, -0.4];
    let e_i = [-0.1, 0.4, 0.2, -0.3, 0.25];
    let v = [1.0, -0.5, 0.3, 0.7, -0.2];
    let objective = |p: &BipnParams, eu: &[f64], ei: &[f64]| -> f64 {
        let pref = common::ref_pref(eu, ei, 1, p, true, true);
        pref.iter().zip(&v).map(|(a, b)| a * b).sum()
    };
    let cache = bipn::forward(&e_u, &e_i, 1, &params, FilterLayers::default());
    let mut grads = BipnGrads::zeros_like(&params);
    let (mut g_eu, mut g_ei) = (vec![0.0; d], vec![0.0; d]);
    bipn::backward(&cache, &params, &v, &mut grads, &mut g_eu, &mut g_ei);

    let h = 1e-5;
    for j in 0..d {
        let mut plus = e_u;
        plus[j] += h;
        let mut minus = e_u;
        minus[j] -= h;
        let fd = (objective(&params, &plus, &e_i) - objective(&params, &minus, &e_i)) / (2.0 * h);
        assert!((fd - g_eu[j]).abs() < 1e-8, "e_u[{j}]");
        let mut plus = e_i;
        plus[j] += h;
        let mut minus = e_i;
        minus[j] -= h;
        let fd = (objective(&params, &e_u, &plus) - objective(&params, &e_u, &minus)) / (2.0 * h);
        assert!((fd - g_ei[j]).abs() < 1e-8, "e_i[{j}]");
    }
    for w in 0..3 {
        for idx in 0..params.weights[w].as_slice().len() {
            let mut plus = params.clone();
            plus.weights[w].as_mut_slice()[idx] += h;
            let mut minus = params.clone();
            minus.weights[w].as_mut_slice()[idx] -= h;
            let fd = (objective(&plus, &e_u, &e_i) - objective(&minus, &e_u, &e_i)) / (2.0 * h);
            assert!(
                (fd - grads.weights[w].as_slice()[idx]).abs() < 1e-8,
                "W{w}[{idx}]"
            );
        }
    }
}
