mod common;

use proptest::prelude::*;
use tlgcn::graph::{slot_of, split_indices};
use tlgcn::manifest::RunManifest;
use tlgcn::metrics::{mae, rmse};
use tlgcn::model::{encode, encode_with, init_params, Checkpoint, EncoderConfig, Variant};
use tlgcn::synthetic::{random_instance, InstanceSpec};
use tlgcn::tensor::{
    facewise_product, facewise_product_sparse, facewise_product_sparse_transposed, m_product, m_transform,
    m_transform_adjoint, m_transform_sparse, MVariant, SparseSnapshots, Tensor3, TransformMatrix,
};
use tlgcn::training::{loss_total, smooth_l1, smooth_l1_grad, TrainConfig};

use common::{random_adjacency, random_normalized, random_tensor, rng};

fn dot(a: &Tensor3, b: &Tensor3) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn transform(seed: u64, t: usize) -> TransformMatrix {
    let b = 1 + (seed as usize % t);
    let v = if seed % 2 == 0 { MVariant::M1 } else { MVariant::M2 };
    TransformMatrix::build(v, t, b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn m_transform_is_linear(seed in any::<u64>(), n in 1usize..5, f in 1usize..4, t in 1usize..7,
                             a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let m = transform(seed, t);
        let x = random_tensor(&mut r, [n, f, t]);
        let y = random_tensor(&mut r, [n, f, t]);
        let lhs = m_transform(&x.lincomb(a, &y, b).unwrap(), &m).unwrap();
        let rhs = m_transform(&x, &m).unwrap().lincomb(a, &m_transform(&y, &m).unwrap(), b).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn m_transform_is_causal(seed in any::<u64>(), t in 2usize..8, tp in 0usize..8) {
        let tp = tp % t;
        let mut r = rng(seed);
        let m = transform(seed, t);
        let x = random_tensor(&mut r, [3, 2, t]);
        let mut y = x.clone();
        y.slice_mut(tp).iter_mut().for_each(|v| *v += 1.0);
        let (mx, my) = (m_transform(&x, &m).unwrap(), m_transform(&y, &m).unwrap());
        for s in 0..tp {
            prop_assert_eq!(mx.slice(s), my.slice(s));
        }
    }

    #[test]
    fn adjoint_satisfies_inner_product_identity(seed in any::<u64>(), t in 1usize..7) {
        let mut r = rng(seed);
        let m = transform(seed, t);
        let x = random_tensor(&mut r, [3, 2, t]);
        let y = random_tensor(&mut r, [3, 2, t]);
        let lhs = dot(&m_transform(&x, &m).unwrap(), &y);
        let rhs = dot(&x, &m_transform_adjoint(&y, &m).unwrap());
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn sparse_and_dense_products_agree(seed in any::<u64>(), n in 1usize..7, f in 1usize..4, t in 1usize..5) {
        let mut r = rng(seed);
        let a = random_adjacency(&mut r, n, t, 0.4);
        let h = random_tensor(&mut r, [n, f, t]);
        let dense = a.to_dense();
        let sparse = facewise_product_sparse(&a, &h).unwrap();
        prop_assert_eq!(sparse.clone(), facewise_product(&dense, &h).unwrap());
        let at = Tensor3::from_fn([n, n, t], |i, j, s| dense.get(j, i, s));
        let st = facewise_product_sparse_transposed(&a, &h).unwrap();
        prop_assert!(st.max_abs_diff(&facewise_product(&at, &h).unwrap()).unwrap() < 1e-14);

        let m = transform(seed, t);
        let mixed = m_transform_sparse(&a, &m).unwrap().to_dense();
        prop_assert!(mixed.max_abs_diff(&m_transform(&dense, &m).unwrap()).unwrap() < 1e-14);
    }

    #[test]
    fn facewise_product_is_associative(seed in any::<u64>(), t in 1usize..4) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, [2, 3, t]);
        let y = random_tensor(&mut r, [3, 4, t]);
        let z = random_tensor(&mut r, [4, 2, t]);
        let left = facewise_product(&facewise_product(&x, &y).unwrap(), &z).unwrap();
        let right = facewise_product(&x, &facewise_product(&y, &z).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-12);
        let m = transform(seed, t);
        let left = m_product(&m_product(&x, &y, &m).unwrap(), &z, &m).unwrap();
        let right = m_product(&x, &m_product(&y, &z, &m).unwrap(), &m).unwrap();
        prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-10);
    }

    #[test]
    fn transform_inverse_round_trips(seed in any::<u64>(), t in 1usize..10) {
        let m = transform(seed, t);
        let inv = m.inverse().unwrap();
        for i in 0..t {
            for j in 0..t {
                let v: f64 = (0..t).map(|k| m.entry(i, k) * inv.entry(k, j)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((v - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalized_slices_are_symmetric(seed in any::<u64>(), n in 1usize..9, t in 1usize..4) {
        let mut r = rng(seed);
        let a = random_normalized(&mut r, n, t);
        prop_assert!(a.is_symmetric(0.0));
        for s in a.slices() {
            for i in 0..n {
                prop_assert!(s.get(i, i) > 0.0 && s.get(i, i) <= 1.0);
            }
        }
    }

    #[test]
    fn layers_compose(seed in any::<u64>(), layers in 1usize..4) {
        let mut r = rng(seed);
        let (n, f, t) = (4, 3, 4);
        let a = random_normalized(&mut r, n, t);
        let m = transform(seed, t);
        let deep = EncoderConfig::new(layers, f, m.clone()).unwrap();
        let one = EncoderConfig::new(1, f, m).unwrap();
        let mut p = init_params(n, &deep, Variant::Tlgcn, seed).unwrap();
        let full = encode(&p, &a, &deep).unwrap();
        for _ in 0..layers {
            p.x = encode(&p, &a, &one).unwrap();
        }
        prop_assert_eq!(full, p.x);
    }

    #[test]
    fn lightweight_encoders_are_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        for v in [Variant::Tlgcn, Variant::WithoutStip] {
            let inst = random_instance(&InstanceSpec::default(), v, seed).unwrap();
            let mut r = rng(seed ^ 1);
            let x1 = random_tensor(&mut r, inst.params.x.dims());
            let x2 = random_tensor(&mut r, inst.params.x.dims());
            let enc = |x: Tensor3| {
                let mut p = inst.params.clone();
                p.x = x;
                encode_with(&p, &inst.prop, &inst.cfg).unwrap()
            };
            let lhs = enc(x1.lincomb(a, &x2, b).unwrap());
            let rhs = enc(x1.clone()).lincomb(a, &enc(x2.clone()), b).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
        }
    }

    #[test]
    fn metric_properties(res in prop::collection::vec(-50.0f64..50.0, 1..64), alpha in 0.0f64..10.0,
                         shift in 1usize..64) {
        let zeros = vec![0.0; res.len()];
        let (m, r) = (mae(&zeros, &res).unwrap(), rmse(&zeros, &res).unwrap());
        prop_assert!(r >= m && m >= 0.0);
        let mut rotated = res.clone();
        rotated.rotate_left(shift % res.len());
        prop_assert!((mae(&zeros, &rotated).unwrap() - m).abs() <= 1e-12 * (1.0 + m));
        prop_assert!((rmse(&zeros, &rotated).unwrap() - r).abs() <= 1e-12 * (1.0 + r));
        let scaled: Vec<f64> = res.iter().map(|v| v * alpha).collect();
        prop_assert!((mae(&zeros, &scaled).unwrap() - alpha * m).abs() <= 1e-12 * (1.0 + alpha * m));
        prop_assert!((rmse(&zeros, &scaled).unwrap() - alpha * r).abs() <= 1e-12 * (1.0 + alpha * r));
    }

    #[test]
    fn constant_magnitude_gives_equal_metrics(c in 0.0f64..100.0, signs in prop::collection::vec(any::<bool>(), 1..200)) {
        let res: Vec<f64> = signs.iter().map(|&s| if s { c } else { -c }).collect();
        let zeros = vec![0.0; res.len()];
        prop_assert_eq!(mae(&zeros, &res).unwrap(), rmse(&zeros, &res).unwrap());
    }

    #[test]
    fn smooth_l1_is_c1(beta in 0.01f64..10.0, pred in -20.0f64..20.0, target in -20.0f64..20.0) {
        prop_assert!(smooth_l1(pred, target, beta) >= 0.0);
        let g = smooth_l1_grad(pred, target, beta);
        prop_assert!(g.abs() <= 1.0);
        let eps = 1e-9 * beta;
        let below = smooth_l1_grad(target + beta - eps, target, beta);
        let above = smooth_l1_grad(target + beta + eps, target, beta);
        prop_assert!((below - above).abs() < 1e-8);
    }

    #[test]
    fn loss_is_non_negative(seed in any::<u64>(), l2 in 0.0f64..1.0) {
        let inst = random_instance(&InstanceSpec::default(), Variant::Tlgcn, seed).unwrap();
        let tc = TrainConfig { l2, ..TrainConfig::default() };
        prop_assert!(loss_total(&inst.params, &inst.prop, &inst.cfg, &inst.observations, &tc).unwrap() >= 0.0);
    }

    #[test]
    fn split_is_a_seeded_partition(count in 1usize..500, seed in any::<u64>()) {
        let s = split_indices(count, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..count).collect::<Vec<_>>());
        prop_assert_eq!(s.clone(), split_indices(count, seed).unwrap());
    }

    #[test]
    fn slots_are_in_range_and_monotone(lo in -1e6f64..1e6, span in 0.0f64..1e6, a in 0.0f64..1.0, b in 0.0f64..1.0,
                                       t in 1usize..100) {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let hi = lo + span;
        let sa = slot_of(lo + a * span, lo, hi, t);
        let sb = slot_of(lo + b * span, lo, hi, t);
        prop_assert!(sa <= sb && sb < t);
    }

    #[test]
    fn tensor_dump_round_trips(seed in any::<u64>()) {
        let x = random_tensor(&mut rng(seed), [2, 3, 2]);
        let mut buf = Vec::new();
        x.write_dump(&mut buf).unwrap();
        prop_assert_eq!(Tensor3::read_dump(&buf[..]).unwrap(), x);
    }
}

#[test]
fn checkpoint_round_trips_through_bytes() {
    let inst = random_instance(&InstanceSpec::default(), Variant::WithoutLight, 3).unwrap();
    let manifest = RunManifest {
        command: "train".into(),
        tool_version: "test".into(),
        dataset_sha256: "00".into(),
        variant: "wo-l".into(),
        m_variant: "M1".into(),
        layers: inst.cfg.layers,
        fdim: inst.cfg.fdim,
        t_slots: inst.cfg.t_slots(),
        bandwidth: inst.cfg.bandwidth(),
        lr: 0.05,
        l2: 1e-4,
        beta: 1.0,
        max_epochs: 3,
        patience: 3,
        init_seed: 1,
        split_seed: 2,
        aggregator: "mean".into(),
        split_policy: "8:1:1".into(),
        epoch_semantics: "full-batch".into(),
        extra: vec![("k".into(), "v".into())],
        threads: 1,
        wall_time_secs: 0.0,
    };
    let ck = Checkpoint::new(&inst.cfg, inst.params.clone(), 1, 2, manifest).unwrap();
    let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.encoder_config().unwrap().t_slots(), inst.cfg.t_slots());
}

#[test]
fn identity_adjacency_passes_features_through_w_o_stip() {
    let cfg = EncoderConfig::new(3, 2, TransformMatrix::identity(3).unwrap()).unwrap();
    let p = init_params(4, &cfg, Variant::WithoutStip, 8).unwrap();
    let h = encode(&p, &SparseSnapshots::identity(4, 3), &cfg).unwrap();
    assert_eq!(h, p.x);
}
