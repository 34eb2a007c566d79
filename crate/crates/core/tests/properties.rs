use std::collections::{HashMap, HashSet};

use cadmr::datasets::{
    build_rating_matrix, fold_counts, k_core_filter, parse_features_csv, parse_interactions, parse_stats,
    split_interactions, Catalog, DelimitedFormat, Fold, InteractionRecord, SplitRatio,
};
use cadmr::encoder::tc_loss;
use cadmr::numerics::softmax_rows;
use cadmr::pipeline::{decode_checkpoint, item_batches, Model, ModelDims, TrainConfig};
use ndarray::Array2;
use proptest::prelude::*;

fn records() -> impl Strategy<Value = Vec<InteractionRecord>> {
    prop::collection::vec((0u8..20, 0u8..15), 0..200).prop_map(|pairs| {
        pairs
            .into_iter()
            .map(|(u, i)| InteractionRecord::new(format!("u{u}"), format!("i{i}")))
            .collect()
    })
}

fn tiny_checkpoint() -> Vec<u8> {
    let mut cfg = TrainConfig::default();
    cfg.encoder.hidden = 3;
    cfg.encoder.text_out = 2;
    cfg.encoder.visual_out = 2;
    cfg.encoder.fused = 2;
    cfg.attention.latent = 2;
    cfg.attention.heads = 1;
    cfg.ae.hidden = 2;
    let dims = ModelDims {
        users: 3,
        items: 2,
        text_dim: 2,
        visual_dim: 2,
    };
    let m = Model::<f64>::new(cfg, dims).unwrap();
    cadmr::pipeline::encode_checkpoint(&m.to_checkpoint())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn k_core_is_a_fixed_point(recs in records(), k in 1usize..6) {
        let out = k_core_filter(&recs, k);
        prop_assert_eq!(k_core_filter(&out, k), out.clone());
        let mut users: HashMap<&str, HashSet<&str>> = HashMap::new();
        let mut items: HashMap<&str, HashSet<&str>> = HashMap::new();
        for r in &out {
            users.entry(&r.user).or_default().insert(&r.item);
            items.entry(&r.item).or_default().insert(&r.user);
        }
        prop_assert!(users.values().all(|s| s.len() >= k));
        prop_assert!(items.values().all(|s| s.len() >= k));
        // Survivors keep their input order.
        let mut it = recs.iter();
        for r in &out {
            prop_assert!(it.any(|x| x == r));
        }
    }

    #[test]
    fn fold_counts_are_within_one(n in 0usize..500, a in 1u32..20, b in 1u32..10, c in 1u32..10) {
        let s = (a + b + c) as f64;
        let ratio = SplitRatio::new(a as f64 / s, b as f64 / s, c as f64 / s).unwrap();
        let counts = fold_counts(n, &ratio);
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        if n > 0 {
            prop_assert!(counts[0] >= 1);
        }
        for (got, share) in counts.iter().zip([ratio.train, ratio.validation, ratio.test]) {
            prop_assert!((*got as f64 - share * n as f64).abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn split_partitions_every_interaction(recs in records(), seed in any::<u64>()) {
        prop_assume!(!recs.is_empty());
        let cat = Catalog::from_records(&recs);
        let m = build_rating_matrix(&recs, &cat).unwrap();
        let s = split_interactions(&m, &SplitRatio::default(), seed).unwrap();
        prop_assert_eq!(s.assignments.len(), m.nnz());
        let mut total = Array2::<u8>::zeros((m.items(), m.users()));
        for fold in Fold::ALL {
            total = total + s.fold_matrix(fold).entries();
        }
        prop_assert_eq!(&total, m.entries());
        prop_assert_eq!(split_interactions(&m, &SplitRatio::default(), seed).unwrap(), s);
    }

    #[test]
    fn tc_loss_is_bounded(rows in 2usize..30, cols in 1usize..6, vals in prop::collection::vec(-5.0f64..5.0, 180)) {
        let h = Array2::from_shape_fn((rows, cols), |(i, j)| vals[(i * cols + j) % vals.len()]);
        let t = tc_loss(&h).unwrap();
        prop_assert!((0.0..=1.0 + 1e-9).contains(&t), "tc {}", t);
    }

    #[test]
    fn softmax_rows_are_distributions(vals in prop::collection::vec(-50.0f64..50.0, 1..60), cols in 1usize..8) {
        let rows = vals.len().div_ceil(cols);
        let x = Array2::from_shape_fn((rows, cols), |(i, j)| vals[(i * cols + j) % vals.len()]);
        let p = softmax_rows(&x);
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn item_batches_partition(items in 1usize..300, size in 1usize..64, seed in any::<u64>(), epoch in 0u64..5) {
        let b = item_batches(items, size, seed, epoch);
        let mut all: Vec<usize> = b.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..items).collect::<Vec<_>>());
        let (lo, hi) = (b.iter().map(Vec::len).min().unwrap(), b.iter().map(Vec::len).max().unwrap());
        prop_assert!(hi - lo <= 1);
        if items >= size {
            prop_assert!(lo >= size);
        }
    }

    #[test]
    fn corrupted_checkpoints_are_rejected(pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let mut bytes = tiny_checkpoint();
        let i = pos.index(bytes.len());
        bytes[i] ^= flip;
        prop_assert!(decode_checkpoint(&bytes).is_err());
    }

    #[test]
    fn truncated_checkpoints_are_rejected(cut in any::<prop::sample::Index>()) {
        let bytes = tiny_checkpoint();
        let n = cut.index(bytes.len());
        prop_assert!(decode_checkpoint(&bytes[..n]).is_err());
    }

    #[test]
    fn text_parsers_do_not_panic(s in "\\PC{0,200}") {
        let _ = parse_interactions(s.as_bytes(), DelimitedFormat::Csv, false, "p");
        let _ = parse_interactions(s.as_bytes(), DelimitedFormat::Tsv, true, "p");
        let _ = parse_stats(s.as_bytes(), "p");
        let _ = parse_features_csv(&s, "p");
        let _ = TrainConfig::from_json(&s);
        let _ = TrainConfig::from_toml(&s);
    }
}
