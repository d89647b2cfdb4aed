use ndarray::{Array2, Axis};
use ndl::detect::{dedup, Candidate};
use ndl::metrics::{mae_alpha, mae_g, pr_auc, roc_auc};
use ndl::model::{aggregate, channel_importance, compute_alpha, predict_proba, Hyper, NdlParams, NetSpec};
use ndl::signal::{apply_montage, ndlr, segment_stream, standardize_segment, MontageSpec};
use ndl::Recording;
use proptest::prelude::*;

fn matrix(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> impl Strategy<Value = Array2<f64>> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-50.0f64..50.0, r * c).prop_map(move |v| Array2::from_shape_vec((r, c), v).unwrap())
    })
}

fn small_params(seed: u64) -> NdlParams {
    let mut h = Hyper::new(8, 4);
    h.omega = NetSpec::new(&[3], 3, 2);
    h.g = NetSpec::new(&[3], 3, 2);
    NdlParams::init(h, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ndlr_roundtrip(m in matrix(1..5, 1..40), fs in 1.0f64..5000.0) {
        let m = m.mapv(|v| v as f32 as f64);
        let r = Recording::with_default_names(m, fs).unwrap();
        let mut buf = Vec::new();
        ndlr::encode(&r, &mut buf).unwrap();
        prop_assert_eq!(ndlr::decode(&buf).unwrap(), r);
    }

    #[test]
    fn common_average_columns_sum_to_zero(m in matrix(1..8, 1..30)) {
        let r = Recording::with_default_names(m, 100.0).unwrap();
        let out = apply_montage(&r, &MontageSpec::common_average()).unwrap();
        for col in out.samples().columns() {
            prop_assert!(col.sum().abs() < 1e-9);
        }
    }

    #[test]
    fn segment_windows_tile_the_stream(len in 1usize..300, t in 1usize..20, half_p in 0usize..10, stride in 1usize..40) {
        let p = 2 * half_p;
        let m = Array2::from_shape_fn((2, len), |(l, i)| (l * 1000 + i) as f64);
        let r = Recording::with_default_names(m, 10.0).unwrap();
        let windows = segment_stream(&r, t, p, stride).unwrap();
        let w = t + p;
        let expected = if len < w { 0 } else { (len - w) / stride + 1 };
        prop_assert_eq!(windows.len(), expected);
        for (k, win) in windows.iter().enumerate() {
            let start = k * stride;
            prop_assert_eq!(win.center, start + w / 2);
            prop_assert_eq!(win.segment.x[[0, 0]], (start + half_p) as f64);
            prop_assert_eq!(win.segment.x.ncols(), t);
            prop_assert_eq!(win.context.z.ncols(), p);
        }
    }

    #[test]
    fn standardized_rows_are_centered(m in matrix(1..6, 2..30)) {
        let s = standardize_segment(m.view());
        for row in s.rows() {
            prop_assert!(row.mean().unwrap().abs() < 1e-9);
        }
        let sd = s.std(0.0);
        prop_assert!(sd.abs() < 1e-9 || (sd - 1.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_normalized_and_shift_invariant(w in matrix(1..10, 1..6), shift in -100.0f64..100.0) {
        let a = compute_alpha(w.view());
        for col in a.matrix().columns() {
            prop_assert!((col.sum() - 1.0).abs() < 1e-12);
            prop_assert!(col.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        let b = compute_alpha((&w + shift).view());
        for (x, y) in a.matrix().iter().zip(b.matrix()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_permutation_invariance(seed in 0u64..1000, d in 1usize..7, perm_seed in any::<u64>()) {
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let params = small_params(seed);
        let x = Array2::from_shape_simple_fn((d, 8), || rng.gen_range(-2.0..2.0));
        let z = Array2::from_shape_simple_fn((d, 4), || rng.gen_range(-2.0..2.0));
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let xp = x.select(Axis(0), &perm);
        let zp = z.select(Axis(0), &perm);
        let p0 = predict_proba(x.view(), z.view(), &params).unwrap();
        let p1 = predict_proba(xp.view(), zp.view(), &params).unwrap();
        prop_assert!((p0 - p1).abs() < 1e-12);

        let w = Array2::from_shape_simple_fn((d, 4), || rng.gen_range(-2.0..2.0));
        let a = compute_alpha(w.view());
        let ap = compute_alpha(w.select(Axis(0), &perm).view());
        let s0 = aggregate(x.view(), z.view(), &a).unwrap();
        let s1 = aggregate(xp.view(), zp.view(), &ap).unwrap();
        for (u, v) in s0.matrix().iter().zip(s1.matrix()) {
            prop_assert!((u - v).abs() < 1e-9);
        }
        let i0 = channel_importance(&a);
        let i1 = channel_importance(&ap);
        for (k, &l) in perm.iter().enumerate() {
            prop_assert!((i1[k] - i0[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_invariant_under_monotone_maps(
        scores in prop::collection::vec(-5.0f64..5.0, 2..80),
        bits in prop::collection::vec(0u8..2, 80),
    ) {
        let mut labels: Vec<u8> = bits[..scores.len()].to_vec();
        labels[0] = 1;
        labels[1] = 0;
        let a = roc_auc(&scores, &labels).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() + 3.0).collect();
        prop_assert!((roc_auc(&mapped, &labels).unwrap() - a).abs() < 1e-12);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((roc_auc(&flipped, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
        let pr = pr_auc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&pr));
        prop_assert!((pr_auc(&mapped, &labels).unwrap() - pr).abs() < 1e-12);
    }

    #[test]
    fn mae_triangle_inequality(seed in any::<u64>(), n in 1usize..6) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || (0..n).map(|_| Array2::from_shape_simple_fn((3, 2), || rng.gen::<f64>())).collect::<Vec<_>>();
        let (a, b, c) = (draw(), draw(), draw());
        let ab = mae_alpha(&a, &b).unwrap();
        let bc = mae_alpha(&b, &c).unwrap();
        let ac = mae_alpha(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
        let flat = |v: &Vec<Array2<f64>>| v.iter().map(|m| m[[0, 0]]).collect::<Vec<_>>();
        let (fa, fb, fc) = (flat(&a), flat(&b), flat(&c));
        prop_assert!(mae_g(&fa, &fc).unwrap() <= mae_g(&fa, &fb).unwrap() + mae_g(&fb, &fc).unwrap() + 1e-12);
    }

    #[test]
    fn dedup_is_idempotent_and_selects_members(
        centers in prop::collection::btree_set(0usize..2000, 1..40),
        probs in prop::collection::vec(0.5f64..1.0, 40),
        eps in 1usize..100,
    ) {
        let cands: Vec<Candidate> = centers
            .iter()
            .zip(&probs)
            .map(|(&c, &p)| Candidate { center: c, prob: p, importance: vec![1.0] })
            .collect();
        let once = dedup(&cands, eps, 1);
        prop_assert!(once.len() <= cands.len());
        prop_assert!(once.iter().all(|a| cands.contains(a)));
        prop_assert!(once.windows(2).all(|w| w[1].center > w[0].center + eps));
        prop_assert_eq!(dedup(&once, eps, 1), once);
    }
}
