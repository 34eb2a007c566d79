//! Experiment harnesses: ablation variants, train-size sweep and head-count
//! sweep. Arms are independent and may run on separate threads; results are
//! returned in arm order.

use std::thread;

use super::metrics::{metrics_at, RankingContext};
use super::report::{EvalReport, MetricAtK};
use crate::datasets::{Dataset, Fold, RatingMatrix};
use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::pipeline::{subsample_train, train, LossBreakdown, Precision, PretrainTrace, TrainConfig, TrainData, Variant};

pub const DEFAULT_KS: [usize; 2] = [10, 20];
pub const DEFAULT_FRACTIONS: [f64; 4] = [0.8, 0.6, 0.4, 0.2];
pub const DEFAULT_HEADS: [usize; 4] = [1, 2, 4, 8];

/// Thread cap from `CADMR_THREADS`, else the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("CADMR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n >= 1)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Everything produced by training and evaluating one arm.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub report: EvalReport,
    pub pretrain: PretrainTrace,
    pub finetune: Vec<LossBreakdown>,
}

/// One arm: a config plus the train matrix it sees.
#[derive(Debug, Clone)]
pub struct Arm {
    pub label: String,
    pub config: TrainConfig,
    pub train_fraction: f64,
}

fn build_context(ds: &Dataset, scores: ndarray::Array2<f64>, excluded: &[usize]) -> Result<RankingContext> {
    let mut ctx = RankingContext::new(scores, ds.split.per_user(Fold::Train), ds.split.per_user(Fold::Test))?;
    ctx.exclude(excluded);
    Ok(ctx)
}

fn run_typed<T: Real>(ds: &Dataset, arm: &Arm, ks: &[usize]) -> Result<ArmResult> {
    let full = ds.train_matrix();
    let (matrix, excluded): (RatingMatrix, Vec<usize>) = if arm.train_fraction < 1.0 {
        subsample_train(&full, arm.train_fraction, arm.config.seed)?
    } else {
        let empty = (0..full.users()).filter(|&u| full.user_degree(u) == 0).collect();
        (full, empty)
    };
    let data = TrainData::<T>::from_matrix(ds, &matrix)?;
    let out = train::<T>(&arm.config, &data)?;
    let scores = out.model.predict(&data)?.mapv(Real::to_f64);
    let ctx = build_context(ds, scores, &excluded)?;
    let metrics = metrics_at(&ctx, ks)?
        .into_iter()
        .map(|(k, recall, ndcg)| MetricAtK { k, recall, ndcg })
        .collect();
    Ok(ArmResult {
        report: EvalReport {
            arm: arm.label.clone(),
            variant: arm.config.variant.to_string(),
            seed: arm.config.seed,
            train_fraction: arm.train_fraction,
            heads: arm.config.attention.heads,
            users: ctx.evaluable_users().len(),
            excluded_users: excluded.len(),
            metrics,
        },
        pretrain: out.pretrain,
        finetune: out.finetune,
    })
}

/// Trains and evaluates one arm at the precision named by its config.
pub fn run_arm(ds: &Dataset, arm: &Arm, ks: &[usize]) -> Result<ArmResult> {
    match arm.config.precision {
        Precision::F64 => run_typed::<f64>(ds, arm, ks),
        Precision::F32 => run_typed::<f32>(ds, arm, ks),
    }
}

/// Runs arms with at most `threads` in flight; output order matches input.
pub fn run_arms(ds: &Dataset, arms: &[Arm], ks: &[usize], threads: usize) -> Result<Vec<ArmResult>> {
    let threads = threads.max(1);
    let mut results = Vec::with_capacity(arms.len());
    for chunk in arms.chunks(threads) {
        let chunk_results: Vec<Result<ArmResult>> = if chunk.len() == 1 {
            vec![run_arm(ds, &chunk[0], ks)]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|a| s.spawn(move || run_arm(ds, a, ks))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Eval("arm thread panicked".into()))))
                    .collect()
            })
        };
        for r in chunk_results {
            results.push(r?);
        }
    }
    Ok(results)
}

pub fn ablation_arms(cfg: &TrainConfig) -> Vec<Arm> {
    Variant::ALL
        .into_iter()
        .map(|v| Arm {
            label: v.to_string(),
            config: TrainConfig { variant: v, ..cfg.clone() },
            train_fraction: 1.0,
        })
        .collect()
}

pub fn cold_start_arms(cfg: &TrainConfig, fractions: &[f64]) -> Result<Vec<Arm>> {
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("train fraction must be in (0,1], got {f}")));
            }
            Ok(Arm {
                label: format!("fraction={f}"),
                config: cfg.clone(),
                train_fraction: f,
            })
        })
        .collect()
}

pub fn heads_arms(cfg: &TrainConfig, heads: &[usize]) -> Result<Vec<Arm>> {
    heads
        .iter()
        .map(|&h| {
            let mut c = cfg.clone();
            c.attention.heads = h;
            c.attention.validate()?;
            Ok(Arm {
                label: format!("heads={h}"),
                config: c,
                train_fraction: 1.0,
            })
        })
        .collect()
}

/// Base model, TC term removed, and attention bypassed; identical seeds and epochs.
pub fn run_ablation(ds: &Dataset, cfg: &TrainConfig) -> Result<Vec<ArmResult>> {
    run_arms(ds, &ablation_arms(cfg), &DEFAULT_KS, thread_cap())
}

/// Retrains on a seeded per-user share of the train fold for each fraction;
/// the test fold and the masked train items stay fixed.
pub fn run_cold_start(ds: &Dataset, cfg: &TrainConfig, fractions: &[f64]) -> Result<Vec<ArmResult>> {
    run_arms(ds, &cold_start_arms(cfg, fractions)?, &DEFAULT_KS, thread_cap())
}

pub fn run_heads_sweep(ds: &Dataset, cfg: &TrainConfig, heads: &[usize]) -> Result<Vec<ArmResult>> {
    run_arms(ds, &heads_arms(cfg, heads)?, &DEFAULT_KS, thread_cap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_synthetic, SyntheticConfig};

    fn tiny() -> (Dataset, TrainConfig) {
        let s = generate_synthetic(&SyntheticConfig {
            users: 24,
            items: 20,
            rank: 3,
            text_dim: 5,
            visual_dim: 6,
            positives_per_user: 10,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let mut c = TrainConfig::default();
        c.encoder.hidden = 6;
        c.encoder.text_out = 4;
        c.encoder.visual_out = 4;
        c.encoder.fused = 4;
        c.attention.latent = 8;
        c.attention.heads = 2;
        c.ae.hidden = 6;
        c.ae.epochs = 5;
        c.pretrain_encoder_epochs = 2;
        c.finetune_epochs = 3;
        (s.dataset, c)
    }

    #[test]
    fn threads_do_not_change_results() {
        let (ds, cfg) = tiny();
        let arms = ablation_arms(&cfg);
        let a = run_arms(&ds, &arms, &DEFAULT_KS, 1).unwrap();
        let b = run_arms(&ds, &arms, &DEFAULT_KS, 3).unwrap();
        let labels: Vec<_> = a.iter().map(|r| r.report.arm.as_str()).collect();
        assert_eq!(labels, ["base", "no-drl", "no-ca"]);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.report, y.report);
            assert_eq!(x.finetune, y.finetune);
        }
    }

    #[test]
    fn full_fraction_equals_baseline() {
        let (ds, cfg) = tiny();
        let base = run_arm(
            &ds,
            &Arm {
                label: "x".into(),
                config: cfg.clone(),
                train_fraction: 1.0,
            },
            &DEFAULT_KS,
        )
        .unwrap();
        let cs = run_arms(&ds, &cold_start_arms(&cfg, &[1.0]).unwrap(), &DEFAULT_KS, 1).unwrap();
        assert_eq!(cs[0].report.metrics, base.report.metrics);
        assert_eq!(cs[0].finetune, base.finetune);
    }

    #[test]
    fn sweep_argument_errors() {
        let (_, mut cfg) = tiny();
        cfg.attention.latent = 64;
        assert!(heads_arms(&cfg, &[1, 3]).is_err());
        assert!(cold_start_arms(&cfg, &[0.0]).is_err());
        assert!(cold_start_arms(&cfg, &[1.5]).is_err());
        let arms = heads_arms(&cfg, &DEFAULT_HEADS).unwrap();
        assert_eq!(arms.iter().map(|a| a.config.attention.heads).collect::<Vec<_>>(), DEFAULT_HEADS);
    }

    #[test]
    fn single_head_arm_matches_direct_run() {
        let (ds, mut cfg) = tiny();
        let arms = heads_arms(&cfg, &[1]).unwrap();
        cfg.attention.heads = 1;
        let direct = run_arm(
            &ds,
            &Arm {
                label: "heads=1".into(),
                config: cfg,
                train_fraction: 1.0,
            },
            &DEFAULT_KS,
        )
        .unwrap();
        assert_eq!(run_arm(&ds, &arms[0], &DEFAULT_KS).unwrap().report, direct.report);
    }
}
