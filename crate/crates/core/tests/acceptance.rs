//! Acceptance suite. Each criterion runs in isolation, prints one PASS/FAIL
//! line with its runtime, and the process exits nonzero if any failed.
//!
//! Run with `cargo test -p cadmr-core --test acceptance`.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cadmr::autoencoder::{self, AeConfig, AeLoss, KernelizedAe};
use cadmr::datasets::{
    build_rating_matrix, generate_synthetic, k_core_filter, parse_stats, split_interactions, Catalog, Dataset, Fold,
    InteractionRecord, SplitRatio, SyntheticConfig,
};
use cadmr::encoder::tc_loss;
use cadmr::eval::{
    metrics_at, ndcg_at_k, run_arms, thread_cap, ablation_arms, cold_start_arms, heads_arms, RankingContext,
    DEFAULT_KS,
};
use cadmr::numerics::{
    grad_check, stream_rng, AdamState, GradCheckOptions, Graph, ParamStore, Stream, Var,
};
use cadmr::pipeline::{
    encode_checkpoint, load_checkpoint, save_checkpoint, train, Model, ModelDims, TrainConfig, TrainData, Variant,
};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn normal(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || StandardNormal.sample(rng))
}

const SEEDS: [u64; 3] = [0, 1, 2];

/// The planted family used by the ordering criteria: 200 users, 100 items,
/// rank 8, noise 0.1, 10 positives per user.
fn planted(seed: u64) -> Result<Dataset, String> {
    let cfg = SyntheticConfig {
        users: 200,
        items: 100,
        rank: 8,
        noise: 0.1,
        positives_per_user: 10,
        seed,
        ..Default::default()
    };
    Ok(generate_synthetic(&cfg).map_err(err)?.dataset)
}

fn small_synthetic(seed: u64) -> Result<Dataset, String> {
    let cfg = SyntheticConfig {
        users: 48,
        items: 30,
        rank: 4,
        text_dim: 8,
        visual_dim: 12,
        positives_per_user: 8,
        seed,
        ..Default::default()
    };
    Ok(generate_synthetic(&cfg).map_err(err)?.dataset)
}

fn small_config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig::compact();
    c.seed = seed;
    c.encoder.hidden = 16;
    c.encoder.text_out = 8;
    c.encoder.visual_out = 8;
    c.encoder.fused = 8;
    c.attention.latent = 8;
    c.attention.heads = 2;
    c.ae.hidden = 16;
    c.ae.epochs = 20;
    c.pretrain_encoder_epochs = 5;
    c.finetune_epochs = 10;
    c
}

// 1 ------------------------------------------------------------------------

fn gradient_correctness() -> Outcome {
    let mut cfg = TrainConfig::default();
    cfg.seed = 11;
    cfg.encoder.hidden = 8;
    cfg.encoder.text_out = 4;
    cfg.encoder.visual_out = 4;
    cfg.encoder.fused = 8;
    cfg.attention.latent = 8;
    cfg.attention.heads = 2;
    cfg.ae.hidden = 4;
    cfg.ae.kernel_init_std = 0.3;
    let dims = ModelDims {
        users: 8,
        items: 5,
        text_dim: 6,
        visual_dim: 10,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let ratings = Array2::from_shape_simple_fn((5, 8), || if rng.random_bool(0.4) { 1.0 } else { 0.0 });
    let data = TrainData::new(ratings, normal(&mut rng, (5, 6)), normal(&mut rng, (5, 10))).map_err(err)?;

    let model = Model::<f64>::new(cfg.clone(), dims).map_err(err)?;
    let arch = model.arch.clone();
    let mut store = model.store.clone();
    // A zero output projection would hide every attention gradient but its own.
    *store.value_mut(arch.attention.wo) = normal(&mut rng, (8, 8)) * 0.5;
    *store.value_mut(arch.attention.bo) = normal(&mut rng, (1, 8)) * 0.1;

    let ids = arch.trainable(Variant::Base);
    ensure(ids.len() == store.len(), || format!("{} trainable of {} params", ids.len(), store.len()))?;
    let report = grad_check(
        &mut store,
        &ids,
        |g: &mut Graph<f64>, s: &ParamStore<f64>| -> cadmr::Result<Var> {
            let mut r = stream_rng(0, Stream::FinetuneDropout);
            Ok(arch.objective(g, s, &cfg, &data, &mut r, false)?.total)
        },
        GradCheckOptions::default(),
    )
    .map_err(err)?;
    let worst = report.worst.clone().unwrap_or_default();
    ensure(report.passed(), || {
        format!("max relative error {:.3e} at {}[{}]", report.max_rel_error, worst.0, worst.1)
    })?;
    Ok(format!(
        "{} coordinates over {} params, max rel err {:.2e}",
        report.probed,
        report.params.len(),
        report.max_rel_error
    ))
}

// 2 ------------------------------------------------------------------------

/// Rank of each candidate by counting the candidates ahead of it.
fn oracle_user(scores: &Array2<f64>, user: usize, train: &[usize], test: &[usize], k: usize) -> (f64, f64) {
    let masked: HashSet<usize> = train.iter().copied().collect();
    let cands: Vec<usize> = (0..scores.nrows()).filter(|i| !masked.contains(i)).collect();
    let ahead = |i: usize| {
        cands
            .iter()
            .filter(|&&j| {
                let (sj, si) = (scores[[j, user]], scores[[i, user]]);
                sj > si || (sj == si && j < i)
            })
            .count()
    };
    let mut hit_ranks: Vec<usize> = test.iter().map(|&i| ahead(i)).filter(|&r| r < k).collect();
    hit_ranks.sort_unstable();
    let mut dcg = 0.0;
    for &r in &hit_ranks {
        dcg += 1.0 / ((r + 2) as f64).log2();
    }
    let mut idcg = 0.0;
    for p in 0..test.len().min(k) {
        idcg += 1.0 / ((p + 2) as f64).log2();
    }
    (hit_ranks.len() as f64 / test.len() as f64, dcg / idcg)
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut compared = 0usize;
    for inst in 0..100 {
        let users = rng.random_range(1..=50);
        let items = rng.random_range(3..=40);
        // Few distinct levels so ties are common.
        let levels = rng.random_range(2..=6);
        let scores = Array2::from_shape_simple_fn((items, users), || rng.random_range(0..levels) as f64 / levels as f64);
        let mut train = Vec::with_capacity(users);
        let mut test = Vec::with_capacity(users);
        for _ in 0..users {
            let mut order: Vec<usize> = (0..items).collect();
            order.shuffle(&mut rng);
            let n_train = rng.random_range(0..items - 1);
            let n_test = rng.random_range(0..=(items - n_train).min(8));
            train.push(order[..n_train].to_vec());
            test.push(order[n_train..n_train + n_test].to_vec());
        }
        let ctx = RankingContext::new(scores.clone(), train.clone(), test.clone()).map_err(err)?;
        let evaluable: Vec<usize> = (0..users).filter(|&u| !test[u].is_empty()).collect();
        if evaluable.is_empty() {
            continue;
        }
        let ks = [1, 5, 10, 20];
        let got = metrics_at(&ctx, &ks).map_err(err)?;
        for (&k, &(gk, grec, gndcg)) in ks.iter().zip(&got) {
            let (mut r, mut n) = (0.0, 0.0);
            for &u in &evaluable {
                let (a, b) = oracle_user(&scores, u, &train[u], &test[u], k);
                r += a;
                n += b;
            }
            let c = evaluable.len() as f64;
            let (r, n) = (r / c, n / c);
            ensure(gk == k && grec == r && gndcg == n, || {
                format!("instance {inst} K={k}: got ({grec}, {gndcg}), oracle ({r}, {n})")
            })?;
            compared += 1;
        }
    }
    // Relevance [1, 0, 1] at K = 3.
    let scores = Array2::from_shape_vec((3, 1), vec![0.9, 0.5, 0.1]).map_err(err)?;
    let ctx = RankingContext::new(scores, vec![vec![]], vec![vec![0, 2]]).map_err(err)?;
    let ndcg = ndcg_at_k(&ctx, 3).map_err(err)?;
    ensure((ndcg - 0.9197).abs() < 1e-4, || format!("hand case gave {ndcg}"))?;
    Ok(format!("{compared} (instance, K) pairs exact; hand case {ndcg:.4}"))
}

// 3 ------------------------------------------------------------------------

fn identity_refinement() -> Outcome {
    let ds = small_synthetic(3)?;
    let mut cfg = small_config(3);
    cfg.finetune_epochs = 1;
    ensure(cfg.attention.residual, || "residual must be on".into())?;
    let data = TrainData::<f64>::from_dataset(&ds).map_err(err)?;
    let mut model = Model::<f64>::new(cfg, data.dims()).map_err(err)?;
    let wo = model.store.value(model.arch.attention.wo);
    ensure(wo.iter().all(|&w| w == 0.0), || "output projection not initialized to zero".into())?;
    let pre = model.pretrain_all(&data).map_err(err)?;
    let ft = model.finetune(&data).map_err(err)?;
    let diff = (ft[0].mse - pre.ae_final.mse).abs();
    ensure(diff <= 1e-9, || {
        format!("step-0 mse {} vs pretrained {} (|diff| {diff:.3e})", ft[0].mse, pre.ae_final.mse)
    })?;
    Ok(format!("mse {:.6}, |diff| {diff:.1e}", pre.ae_final.mse))
}

// 4 ------------------------------------------------------------------------

struct PlainLayer {
    w: cadmr::numerics::ParamId,
    b: cadmr::numerics::ParamId,
}

fn plain_forward(g: &mut Graph<f64>, s: &ParamStore<f64>, l: &PlainLayer, x: Var) -> cadmr::Result<(Var, Var)> {
    let w = g.param(s, l.w);
    let b = g.param(s, l.b);
    let pre = g.matmul(x, w)?;
    let pre = g.add_row(pre, b)?;
    Ok((g.sigmoid(pre), w))
}

fn plain_train(
    store: &mut ParamStore<f64>,
    enc: &PlainLayer,
    dec: &PlainLayer,
    x: &Array2<f64>,
    cfg: &AeConfig,
    adam: &mut AdamState<f64>,
) -> cadmr::Result<Vec<AeLoss>> {
    let ids = [enc.w, enc.b, dec.w, dec.b];
    let mut trace = Vec::new();
    for _ in 0..cfg.epochs {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let (h, we) = plain_forward(&mut g, store, enc, xv)?;
        let (out, wd) = plain_forward(&mut g, store, dec, h)?;
        let diff = g.sub(out, xv)?;
        let sq = g.mul(diff, diff)?;
        let mse = g.mean(sq);
        let se = g.sum_squares(we)?;
        let sd = g.sum_squares(wd)?;
        let sw = g.add(se, sd)?;
        let l2 = g.scale(sw, cfg.lambda2);
        let total = g.add(mse, l2)?;
        trace.push(AeLoss {
            total: g.scalar(total),
            mse: g.scalar(mse),
            l2_weights: g.scalar(l2),
            l2_kernel: 0.0,
        });
        g.backward(total, store)?;
        adam.step(store, &ids);
    }
    Ok(trace)
}

fn kernel_degeneration() -> Outcome {
    let cfg = AeConfig {
        hidden: 12,
        lambda_s: 0.0,
        lambda2: 1e-3,
        lr: 1e-2,
        epochs: 50,
        ..Default::default()
    };
    let ds = small_synthetic(5)?;
    let x = ds.train_matrix().values::<f64>();
    let mut store = ParamStore::<f64>::new();
    let mut rng = stream_rng(5, Stream::Init);
    let ae = KernelizedAe::new(&mut store, x.ncols(), &cfg, &mut rng);
    for id in ae.embedding_params() {
        store.value_mut(id).fill(0.25);
    }
    let kernel = ae.encoder.kernel(&store).map_err(err)?;
    ensure(kernel.iter().all(|&k| k == 1.0), || "coincident embeddings must give K = 1".into())?;

    let mut plain = ParamStore::<f64>::new();
    let copy = |plain: &mut ParamStore<f64>, name: &str, id| plain.add(name, store.value(id).clone());
    let enc = PlainLayer {
        w: copy(&mut plain, "enc.w", ae.encoder.weight),
        b: copy(&mut plain, "enc.b", ae.encoder.bias),
    };
    let dec = PlainLayer {
        w: copy(&mut plain, "dec.w", ae.decoder.weight),
        b: copy(&mut plain, "dec.b", ae.decoder.bias),
    };

    let base = TrainConfig::default().adam;
    let mut adam_k = autoencoder::pretrain_optimizer::<f64>(&cfg, base);
    let mut adam_p = autoencoder::pretrain_optimizer::<f64>(&cfg, base);
    let tk = autoencoder::pretrain(&ae, &mut store, &x, &cfg, &mut adam_k).map_err(err)?;
    let tp = plain_train(&mut plain, &enc, &dec, &x, &cfg, &mut adam_p).map_err(err)?;

    ensure(tk.len() == 50 && tp.len() == 50, || "expected 50 epochs".into())?;
    for (e, (a, b)) in tk.iter().zip(&tp).enumerate() {
        ensure(a.total.to_bits() == b.total.to_bits() && a.mse.to_bits() == b.mse.to_bits(), || {
            format!("epoch {e}: kernelized {} vs plain {}", a.total, b.total)
        })?;
    }
    for (k_id, p_id) in [
        (ae.encoder.weight, enc.w),
        (ae.encoder.bias, enc.b),
        (ae.decoder.weight, dec.w),
        (ae.decoder.bias, dec.b),
    ] {
        ensure(store.value(k_id) == plain.value(p_id), || format!("{} diverged", store.name(k_id)))?;
    }
    Ok(format!("50 epochs bitwise, loss {:.6} -> {:.6}", tk[0].total, tk[49].total))
}

// 5-7 ----------------------------------------------------------------------

fn ablation_ordering() -> Outcome {
    let mut per_seed = Vec::new();
    for &s in &SEEDS {
        let ds = planted(s)?;
        let cfg = TrainConfig { seed: s, ..TrainConfig::compact() };
        let res = run_arms(&ds, &ablation_arms(&cfg), &DEFAULT_KS, thread_cap()).map_err(err)?;
        per_seed.push([res[0].report.ndcg_at(10), res[1].report.ndcg_at(10), res[2].report.ndcg_at(10)]);
    }
    let mean = |j: usize| per_seed.iter().map(|r| r[j]).sum::<f64>() / per_seed.len() as f64;
    let (base, no_drl, no_ca) = (mean(0), mean(1), mean(2));
    let detail = format!("mean NDCG@10 base {base:.4}, w/o-DRL {no_drl:.4}, w/o-CA {no_ca:.4}");
    ensure(base.is_finite() && base > no_ca, || format!("base not above w/o-CA: {detail}"))?;
    ensure(base >= no_drl - 0.005, || format!("base below w/o-DRL - 0.005: {detail}"))?;
    Ok(detail)
}

fn cold_start_direction() -> Outcome {
    let mut wins = 0;
    let mut rows = Vec::new();
    for &s in &SEEDS {
        let ds = planted(s)?;
        let cfg = TrainConfig { seed: s, ..TrainConfig::compact() };
        let arms = cold_start_arms(&cfg, &[0.8, 0.2]).map_err(err)?;
        let res = run_arms(&ds, &arms, &DEFAULT_KS, thread_cap()).map_err(err)?;
        let (hi, lo) = (res[0].report.ndcg_at(10), res[1].report.ndcg_at(10));
        if hi > lo {
            wins += 1;
        }
        rows.push(format!("seed {s}: {hi:.4} vs {lo:.4}"));
    }
    let detail = format!("0.8 > 0.2 in {wins}/3 ({})", rows.join("; "));
    ensure(wins >= 2, || detail.clone())?;
    Ok(detail)
}

fn heads_sweep() -> Outcome {
    let mut wins = 0;
    let mut rows = Vec::new();
    for &s in &SEEDS {
        let ds = planted(s)?;
        let cfg = TrainConfig { seed: s, ..TrainConfig::compact() };
        let arms = heads_arms(&cfg, &[1, 2, 4, 8]).map_err(err)?;
        let res = run_arms(&ds, &arms, &DEFAULT_KS, thread_cap()).map_err(|e| format!("seed {s}: {e}"))?;
        let nd: Vec<f64> = res.iter().map(|r| r.report.ndcg_at(10)).collect();
        for r in &res {
            let finite = r.finetune.iter().all(|l| l.total.is_finite()) && r.report.metrics.iter().all(|m| m.ndcg.is_finite());
            ensure(finite, || format!("seed {s} {}: non-finite result", r.report.arm))?;
        }
        if nd[2] >= nd[0] - 0.005 {
            wins += 1;
        }
        rows.push(format!("seed {s}: h1 {:.4} h2 {:.4} h4 {:.4} h8 {:.4}", nd[0], nd[1], nd[2], nd[3]));
    }
    let detail = format!("h4 >= h1 - 0.005 in {wins}/3 ({})", rows.join("; "));
    ensure(wins >= 2, || detail.clone())?;
    Ok(detail)
}

// 8 ------------------------------------------------------------------------

fn tc_behavior() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let col = normal(&mut rng, (64, 1));
    let dup = Array2::from_shape_fn((64, 2), |(i, _)| col[[i, 0]]);
    let d = tc_loss(&dup).map_err(err)?;
    ensure((d - 1.0).abs() < 1e-12, || format!("duplicated columns gave {d}"))?;

    let indep = normal(&mut rng, (10_000, 4));
    let i = tc_loss(&indep).map_err(err)?;
    ensure(i < 0.01, || format!("independent columns gave {i}"))?;

    let ds = small_synthetic(8)?;
    let mut cfg = small_config(8);
    cfg.ae.epochs = 0;
    cfg.pretrain_encoder_epochs = 10;
    let data = TrainData::<f64>::from_dataset(&ds).map_err(err)?;
    let mut model = Model::<f64>::new(cfg, data.dims()).map_err(err)?;
    let before = model.encoder_tc(&data).map_err(err)?;
    let trace = model.pretrain_all(&data).map_err(err)?;
    let after = model.encoder_tc(&data).map_err(err)?;
    ensure(trace.encoder_tc.len() == 10, || format!("{} warm-up epochs ran", trace.encoder_tc.len()))?;
    ensure(after < before, || format!("warm-up did not reduce tc: {before} -> {after}"))?;
    Ok(format!("dup {d:.3}, indep {i:.2e}, warm-up {before:.5} -> {after:.5}"))
}

// 9 ------------------------------------------------------------------------

fn determinism() -> Outcome {
    let ds = small_synthetic(9)?;
    let data = TrainData::<f64>::from_dataset(&ds).map_err(err)?;
    for batch in [None, Some(12)] {
        let cfg = TrainConfig { batch_items: batch, ..small_config(9) };
        let a = train::<f64>(&cfg, &data).map_err(err)?;
        let b = train::<f64>(&cfg, &data).map_err(err)?;
        ensure(a.pretrain == b.pretrain, || format!("pretrain traces differ (batch {batch:?})"))?;
        ensure(a.finetune == b.finetune, || format!("finetune traces differ (batch {batch:?})"))?;
        let bytes_a = encode_checkpoint(&a.model.to_checkpoint());
        let bytes_b = encode_checkpoint(&b.model.to_checkpoint());
        ensure(bytes_a == bytes_b, || format!("checkpoint bytes differ (batch {batch:?})"))?;

        let dir = tempfile::tempdir().map_err(err)?;
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&a.model, &path).map_err(err)?;
        ensure(std::fs::read(&path).map_err(err)? == bytes_a, || "saved file differs from encoding".into())?;
        let loaded: Model<f64> = load_checkpoint(&path).map_err(err)?;
        let p0 = a.model.predict(&data).map_err(err)?;
        let p1 = loaded.predict(&data).map_err(err)?;
        ensure(p0.iter().zip(&p1).all(|(x, y)| x.to_bits() == y.to_bits()), || "loaded predict differs".into())?;

        // Resume after pretraining and finish from disk.
        let mut staged = Model::<f64>::new(cfg.clone(), data.dims()).map_err(err)?;
        staged.pretrain_all(&data).map_err(err)?;
        let mid = dir.path().join("pretrained.ckpt");
        save_checkpoint(&staged, &mid).map_err(err)?;
        let mut resumed: Model<f64> = load_checkpoint(&mid).map_err(err)?;
        let ft = resumed.finetune(&data).map_err(err)?;
        ensure(ft == a.finetune, || "resumed finetune trace differs".into())?;
        ensure(encode_checkpoint(&resumed.to_checkpoint()) == bytes_a, || "resumed checkpoint differs".into())?;
    }
    Ok("traces, checkpoints, reload and resume bitwise equal (full batch and item batches)".into())
}

// 10 -----------------------------------------------------------------------

fn protocol_conformance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let ratio = SplitRatio::default();
    let mut survivors = 0usize;
    for set in 0..50 {
        let users = rng.random_range(5..60);
        let items = rng.random_range(5..40);
        let n = rng.random_range(users * items / 5..=users * items * 3 / 5);
        let records: Vec<InteractionRecord> = (0..n)
            .map(|_| {
                let u = rng.random_range(0..users);
                let i = rng.random_range(0..items);
                InteractionRecord::new(format!("u{u}"), format!("i{i}"))
            })
            .collect();
        let core = k_core_filter(&records, 5);
        ensure(k_core_filter(&core, 5) == core, || format!("set {set}: filter is not a fixed point"))?;
        let catalog = Catalog::from_records(&core);
        let m = build_rating_matrix(&core, &catalog).map_err(err)?;
        for u in 0..m.users() {
            ensure(m.user_degree(u) >= 5, || format!("set {set}: user {u} has degree {}", m.user_degree(u)))?;
        }
        for i in 0..m.items() {
            ensure(m.item_degree(i) >= 5, || format!("set {set}: item {i} has degree {}", m.item_degree(i)))?;
        }
        if m.nnz() == 0 {
            continue;
        }
        survivors += 1;
        let split = split_interactions(&m, &ratio, set).map_err(err)?;
        for u in 0..m.users() {
            let deg = m.user_degree(u) as f64;
            for (fold, share) in [(Fold::Train, 0.8), (Fold::Validation, 0.1), (Fold::Test, 0.1)] {
                let c = split.count(u, fold) as f64;
                ensure((c - share * deg).abs() <= 1.0, || {
                    format!("set {set} user {u}: {} has {c} of {deg}", fold.as_str())
                })?;
            }
        }
    }
    ensure(survivors >= 25, || format!("only {survivors} sets had a nonempty 5-core"))?;

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/baby_stats.csv");
    let file = std::fs::File::open(path).map_err(err)?;
    let stats = parse_stats(file, path).map_err(err)?;
    let baby = stats.iter().find(|s| s.name == "Baby").ok_or("no Baby row")?;
    ensure((baby.users, baby.items, baby.interactions) == (19445, 7050, 160_792), || format!("{baby:?}"))?;
    Ok(format!("50 sets ({survivors} nonempty cores); Baby {}/{}/{}", baby.users, baby.items, baby.interactions))
}

// --------------------------------------------------------------------------

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "gradient correctness", budget: Duration::from_secs(10), run: gradient_correctness },
        Criterion { id: 2, name: "metric oracle equivalence", budget: Duration::from_secs(5), run: metric_oracle },
        Criterion { id: 3, name: "identity refinement", budget: Duration::from_secs(30), run: identity_refinement },
        Criterion { id: 4, name: "kernel degeneration", budget: Duration::from_secs(30), run: kernel_degeneration },
        Criterion { id: 5, name: "ablation ordering", budget: Duration::from_secs(600), run: ablation_ordering },
        Criterion { id: 6, name: "cold-start direction", budget: Duration::from_secs(600), run: cold_start_direction },
        Criterion { id: 7, name: "heads sweep", budget: Duration::from_secs(900), run: heads_sweep },
        Criterion { id: 8, name: "tc behavior", budget: Duration::from_secs(20), run: tc_behavior },
        Criterion { id: 9, name: "determinism and persistence", budget: Duration::from_secs(120), run: determinism },
        Criterion { id: 10, name: "protocol conformance", budget: Duration::from_secs(10), run: protocol_conformance },
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.contains(&c.id)) {
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(d) if took > c.budget => Err(format!("{d}; over budget {:?}", c.budget)),
            other => other,
        };
        let secs = took.as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  [{:>2}] {:<28} {:>8.2}s  {detail}", c.id, c.name, secs),
            Err(why) => {
                failed += 1;
                println!("FAIL  [{:>2}] {:<28} {:>8.2}s  {why}", c.id, c.name, secs);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
