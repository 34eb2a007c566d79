//! Two-phase training: autoencoder pretraining and a TC-only encoder warm-up,
//! then joint fine-tuning of every component on the attention-refined matrix.

pub mod checkpoint;
pub mod config;

use std::fmt;
use std::io::Write;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::CrossAttentionBlock;
use crate::autoencoder::{self, AeLoss, KernelizedAe};
use crate::datasets::{Dataset, RatingMatrix};
use crate::encoder::{tc_loss_graph, FusionLayer, ProjectionNet};
use crate::error::{Error, Result};
use crate::numerics::{
    grad_check, stream_rng, substream_rng, AdamConfig, AdamState, GradCheckOptions, GradCheckReport, Graph, ParamId,
    ParamStore, Real, Stream, Var,
};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, read_header, save_checkpoint, Blob, CheckpointHeader,
    OptimizerHeader, RawCheckpoint, FORMAT_VERSION, MAGIC,
};
pub use config::{Precision, TrainConfig, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Initialized,
    Pretrained,
    Finetuned,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Initialized => "initialized",
            Phase::Pretrained => "pretrained",
            Phase::Finetuned => "finetuned",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub users: usize,
    pub items: usize,
    pub text_dim: usize,
    pub visual_dim: usize,
}

/// Dense training inputs: the train-fold matrix (items × users) and both
/// feature matrices, item-aligned.
#[derive(Debug, Clone)]
pub struct TrainData<T> {
    pub ratings: Array2<T>,
    pub text: Array2<T>,
    pub visual: Array2<T>,
}

impl<T: Real> TrainData<T> {
    pub fn new(ratings: Array2<T>, text: Array2<T>, visual: Array2<T>) -> Result<Self> {
        let items = ratings.nrows();
        if text.nrows() != items {
            return Err(Error::shape("text feature rows", items, text.nrows()));
        }
        if visual.nrows() != items {
            return Err(Error::shape("visual feature rows", items, visual.nrows()));
        }
        if items < 2 || ratings.ncols() == 0 {
            return Err(Error::Config(format!(
                "training needs at least 2 items and 1 user, got {}x{}",
                items,
                ratings.ncols()
            )));
        }
        Ok(Self { ratings, text, visual })
    }

    pub fn from_matrix(ds: &Dataset, train: &RatingMatrix) -> Result<Self> {
        Self::new(
            train.values(),
            ds.text.matrix.mapv(T::from_f64),
            ds.visual.matrix.mapv(T::from_f64),
        )
    }

    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        Self::from_matrix(ds, &ds.train_matrix())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            users: self.ratings.ncols(),
            items: self.ratings.nrows(),
            text_dim: self.text.ncols(),
            visual_dim: self.visual.ncols(),
        }
    }

    fn rows(&self, idx: &[usize]) -> Self {
        Self {
            ratings: self.ratings.select(Axis(0), idx),
            text: self.text.select(Axis(0), idx),
            visual: self.visual.select(Axis(0), idx),
        }
    }
}

/// Keeps `round(fraction · n)` of each user's train items, chosen by a seeded
/// per-user shuffle. Returns the reduced matrix and the users left with no
/// train items.
pub fn subsample_train(train: &RatingMatrix, fraction: f64, seed: u64) -> Result<(RatingMatrix, Vec<usize>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("train fraction must be in (0,1], got {fraction}")));
    }
    let mut out = RatingMatrix::zeros(train.items(), train.users());
    let mut empty = Vec::new();
    for u in 0..train.users() {
        let mut items = train.user_items(u);
        let keep = (fraction * items.len() as f64).round() as usize;
        if keep < items.len() {
            let mut rng = substream_rng(seed, Stream::Subsample, u as u64);
            items.shuffle(&mut rng);
            items.truncate(keep);
        }
        if items.is_empty() {
            empty.push(u);
        }
        for i in items {
            out.set(i, u, true);
        }
    }
    Ok((out, empty))
}

/// Parameter layout of every component. Holds ids only; values live in a
/// [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Architecture {
    pub text: ProjectionNet,
    pub visual: ProjectionNet,
    pub fusion: FusionLayer,
    pub attention: CrossAttentionBlock,
    pub ae: KernelizedAe,
}

/// Graph handles of the fine-tuning objective.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveVars {
    pub total: Var,
    pub mse: Var,
    pub tc: Option<Var>,
    pub l2_weights: Var,
    pub l2_kernel: Var,
    pub reconstruction: Var,
}

impl Architecture {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        cfg: &TrainConfig,
        dims: &ModelDims,
        rng: &mut R,
    ) -> Result<Self> {
        let e = &cfg.encoder;
        let text = ProjectionNet::new(store, "text", dims.text_dim, e.hidden, e.text_out, cfg.dropout, e.layer_norm_eps, rng);
        let visual = ProjectionNet::new(
            store,
            "visual",
            dims.visual_dim,
            e.hidden,
            e.visual_out,
            cfg.dropout,
            e.layer_norm_eps,
            rng,
        );
        let fusion = FusionLayer::new(store, "fusion", e.text_out + e.visual_out, e.fused, e.layer_norm_eps, rng);
        let attention = CrossAttentionBlock::new(store, dims.users, e.fused, &cfg.attention, rng)?;
        let ae = KernelizedAe::new(store, dims.users, &cfg.ae, rng);
        Ok(Self {
            text,
            visual,
            fusion,
            attention,
            ae,
        })
    }

    pub fn encoder_params(&self) -> Vec<ParamId> {
        self.text.params().into_iter().chain(self.visual.params()).collect()
    }

    /// Parameters updated by fine-tuning under `variant`.
    pub fn trainable(&self, variant: Variant) -> Vec<ParamId> {
        let mut ids = Vec::new();
        if variant.uses_attention() {
            ids.extend(self.encoder_params());
            ids.extend(self.fusion.params());
            ids.extend(self.attention.params());
        }
        ids.extend(self.ae.params());
        ids
    }

    /// Returns the ratings, the autoencoder input (the refined matrix, or the
    /// ratings themselves without attention) and the two modality latents.
    fn reconstruct<T: Real, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        variant: Variant,
        data: &TrainData<T>,
        rng: &mut R,
        training: bool,
    ) -> Result<(Var, Var, Option<(Var, Var)>)> {
        let r = g.constant(data.ratings.clone());
        if !variant.uses_attention() {
            return Ok((r, r, None));
        }
        let xt = g.constant(data.text.clone());
        let xv = g.constant(data.visual.clone());
        let ht = self.text.forward(g, store, xt, rng, training)?;
        let ht = g.label(ht, "text.latent");
        let hv = self.visual.forward(g, store, xv, rng, training)?;
        let hv = g.label(hv, "visual.latent");
        let hf = self.fusion.forward(g, store, ht, hv)?;
        let hf = g.label(hf, "fusion.latent");
        let refined = self.attention.refine_graph(g, store, r, hf)?;
        Ok((r, refined, Some((ht, hv))))
    }

    /// `MSE(R̂, R) + λ·(tc(h_t) + tc(h_v)) + λ2·‖W‖² + λ_s·Σ‖emb‖²`.
    pub fn objective<T: Real, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        cfg: &TrainConfig,
        data: &TrainData<T>,
        rng: &mut R,
        training: bool,
    ) -> Result<ObjectiveVars> {
        let (r, input, latents) = self.reconstruct(g, store, cfg.variant, data, rng, training)?;
        let terms = self.ae.loss_terms(g, store, input, r, &cfg.ae)?;
        let mut total = g.add(terms.mse, terms.l2_weights)?;
        total = g.add(total, terms.l2_kernel)?;
        let lambda = cfg.effective_lambda_tc();
        let tc = match latents {
            Some((ht, hv)) => {
                let a = tc_loss_graph(g, ht)?;
                let b = tc_loss_graph(g, hv)?;
                let tc = g.add(a, b)?;
                if lambda > 0.0 {
                    let w = g.scale(tc, T::from_f64(lambda));
                    total = g.add(total, w)?;
                }
                Some(tc)
            }
            None => None,
        };
        let total = g.label(total, "loss.total");
        Ok(ObjectiveVars {
            total,
            mse: terms.mse,
            tc,
            l2_weights: terms.l2_weights,
            l2_kernel: terms.l2_kernel,
            reconstruction: terms.reconstruction,
        })
    }
}

/// Per-step loss terms. `total = mse + λ·tc + l2_weights + l2_kernel`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub tc: f64,
    pub l2_weights: f64,
    pub l2_kernel: f64,
}

impl LossBreakdown {
    fn read<T: Real>(g: &Graph<T>, v: &ObjectiveVars) -> Self {
        Self {
            total: g.scalar(v.total).to_f64(),
            mse: g.scalar(v.mse).to_f64(),
            tc: v.tc.map_or(0.0, |t| g.scalar(t).to_f64()),
            l2_weights: g.scalar(v.l2_weights).to_f64(),
            l2_kernel: g.scalar(v.l2_kernel).to_f64(),
        }
    }

    fn mean(parts: &[LossBreakdown]) -> Self {
        let n = parts.len() as f64;
        let sum = |f: fn(&LossBreakdown) -> f64| parts.iter().map(f).sum::<f64>() / n;
        Self {
            total: sum(|p| p.total),
            mse: sum(|p| p.mse),
            tc: sum(|p| p.tc),
            l2_weights: sum(|p| p.l2_weights),
            l2_kernel: sum(|p| p.l2_kernel),
        }
    }
}

impl From<AeLoss> for LossBreakdown {
    fn from(l: AeLoss) -> Self {
        Self {
            total: l.total,
            mse: l.mse,
            tc: 0.0,
            l2_weights: l.l2_weights,
            l2_kernel: l.l2_kernel,
        }
    }
}

pub const LOSS_TRACE_HEADER: &str = "epoch,total,mse,tc,l2w,l2k";

pub fn write_loss_trace<W: Write>(mut w: W, trace: &[LossBreakdown]) -> std::io::Result<()> {
    writeln!(w, "{LOSS_TRACE_HEADER}")?;
    for (e, l) in trace.iter().enumerate() {
        writeln!(w, "{e},{},{},{},{},{}", l.total, l.mse, l.tc, l.l2_weights, l.l2_kernel)?;
    }
    Ok(())
}

pub fn loss_trace_csv(trace: &[LossBreakdown]) -> String {
    let mut buf = Vec::new();
    write_loss_trace(&mut buf, trace).expect("writing to a Vec");
    String::from_utf8(buf).expect("ascii")
}

/// One Adam state per training phase.
#[derive(Debug, Clone)]
pub struct Optimizers<T> {
    pub ae: AdamState<T>,
    pub encoder: AdamState<T>,
    pub finetune: AdamState<T>,
}

impl<T: Real> Optimizers<T> {
    pub const ROLES: [&'static str; 3] = ["ae-pretrain", "encoder-warmup", "finetune"];

    fn new(cfg: &TrainConfig) -> Self {
        Self {
            ae: AdamState::new(AdamConfig { lr: cfg.ae.lr, ..cfg.adam }),
            encoder: AdamState::new(AdamConfig {
                lr: cfg.pretrain_encoder_lr,
                ..cfg.adam
            }),
            finetune: AdamState::new(AdamConfig { lr: cfg.finetune_lr, ..cfg.adam }),
        }
    }

    pub fn by_role(&self, role: &str) -> Option<&AdamState<T>> {
        match role {
            "ae-pretrain" => Some(&self.ae),
            "encoder-warmup" => Some(&self.encoder),
            "finetune" => Some(&self.finetune),
            _ => None,
        }
    }

    pub fn by_role_mut(&mut self, role: &str) -> Option<&mut AdamState<T>> {
        match role {
            "ae-pretrain" => Some(&mut self.ae),
            "encoder-warmup" => Some(&mut self.encoder),
            "finetune" => Some(&mut self.finetune),
            _ => None,
        }
    }
}

/// All learnable state of one run.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    pub config: TrainConfig,
    pub dims: ModelDims,
    pub arch: Architecture,
    pub store: ParamStore<T>,
    pub optimizers: Optimizers<T>,
    pub phase: Phase,
}

/// Traces of the pretraining phase. `ae` holds the loss before each update,
/// `ae_final` the loss after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainTrace {
    pub ae: Vec<AeLoss>,
    pub ae_final: AeLoss,
    pub encoder_tc: Vec<f64>,
}

impl<T: Real> Model<T> {
    pub fn new(config: TrainConfig, dims: ModelDims) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = stream_rng(config.seed, Stream::Init);
        let arch = Architecture::new(&mut store, &config, &dims, &mut rng)?;
        Ok(Self {
            optimizers: Optimizers::new(&config),
            config,
            dims,
            arch,
            store,
            phase: Phase::Initialized,
        })
    }

    fn require(&self, op: &'static str, allowed: &[Phase], expected: &'static str) -> Result<()> {
        if allowed.contains(&self.phase) {
            Ok(())
        } else {
            Err(Error::Phase {
                op,
                expected,
                actual: self.phase.to_string(),
            })
        }
    }

    fn check_data(&self, data: &TrainData<T>) -> Result<()> {
        let d = data.dims();
        let m = self.dims;
        if d.users != m.users || d.text_dim != m.text_dim || d.visual_dim != m.visual_dim {
            return Err(Error::shape("training data (users, text dim, visual dim)", format!("{:?}", m), format!("{:?}", d)));
        }
        Ok(())
    }

    /// Autoencoder pretraining on the ratings, then the TC-only encoder
    /// warm-up. The warm-up is skipped for variants without the TC term.
    pub fn pretrain_all(&mut self, data: &TrainData<T>) -> Result<PretrainTrace> {
        self.require("pretrain", &[Phase::Initialized], "initialized")?;
        self.check_data(data)?;
        let cfg = self.config.clone();
        let ae = autoencoder::pretrain(&self.arch.ae, &mut self.store, &data.ratings, &cfg.ae, &mut self.optimizers.ae)?;
        let ae_final = autoencoder::ae_loss(&self.arch.ae, &self.store, &data.ratings, &data.ratings, &cfg.ae)?;

        let mut encoder_tc = Vec::new();
        if cfg.variant == Variant::Base && cfg.lambda_tc > 0.0 {
            let ids = self.arch.encoder_params();
            for epoch in 0..cfg.pretrain_encoder_epochs {
                let mut rng = substream_rng(cfg.seed, Stream::WarmupDropout, epoch as u64);
                let mut g = Graph::new();
                let tc = encoder_tc_graph(&self.arch, &mut g, &self.store, data, &mut rng, true)?;
                g.check_finite().map_err(|e| Error::NonFinite {
                    context: format!("encoder warm-up epoch {epoch}: {e}"),
                })?;
                encoder_tc.push(g.scalar(tc).to_f64());
                g.backward(tc, &mut self.store)?;
                self.optimizers.encoder.step(&mut self.store, &ids);
            }
        }
        self.phase = Phase::Pretrained;
        Ok(PretrainTrace { ae, ae_final, encoder_tc })
    }

    /// One optimizer step of the joint objective on `data`.
    pub fn finetune_step<R: Rng + ?Sized>(&mut self, data: &TrainData<T>, rng: &mut R) -> Result<LossBreakdown> {
        self.require("finetune_step", &[Phase::Pretrained, Phase::Finetuned], "pretrained or finetuned")?;
        self.check_data(data)?;
        let mut g = Graph::new();
        let vars = self.arch.objective(&mut g, &self.store, &self.config, data, rng, true)?;
        g.check_finite()?;
        let loss = LossBreakdown::read(&g, &vars);
        g.backward(vars.total, &mut self.store)?;
        let ids = self.arch.trainable(self.config.variant);
        self.optimizers.finetune.step(&mut self.store, &ids);
        Ok(loss)
    }

    /// `finetune_epochs` epochs of [`Model::finetune_step`]. Returns the
    /// per-epoch loss (mean over item batches when batching is on).
    pub fn finetune(&mut self, data: &TrainData<T>) -> Result<Vec<LossBreakdown>> {
        self.require("finetune", &[Phase::Pretrained], "pretrained")?;
        self.check_data(data)?;
        let cfg = self.config.clone();
        let mut trace = Vec::with_capacity(cfg.finetune_epochs);
        for epoch in 0..cfg.finetune_epochs {
            let mut rng = substream_rng(cfg.seed, Stream::FinetuneDropout, epoch as u64);
            let step = match cfg.batch_items {
                Some(b) if b < data.ratings.nrows() => {
                    let batches = item_batches(data.ratings.nrows(), b, cfg.seed, epoch as u64);
                    batches
                        .iter()
                        .map(|idx| self.finetune_step(&data.rows(idx), &mut rng))
                        .collect::<Result<Vec<_>>>()
                        .map(|parts| LossBreakdown::mean(&parts))
                }
                _ => self.finetune_step(data, &mut rng),
            };
            let step = step.map_err(|e| match e {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("fine-tuning epoch {epoch}: {context}"),
                },
                other => other,
            });
            trace.push(step?);
        }
        self.phase = Phase::Finetuned;
        Ok(trace)
    }

    /// Eval-mode scores (items × users), dropout off.
    pub fn predict(&self, data: &TrainData<T>) -> Result<Array2<T>> {
        let allowed: &[Phase] = if self.config.variant.uses_attention() {
            &[Phase::Finetuned]
        } else {
            &[Phase::Pretrained, Phase::Finetuned]
        };
        self.require("predict", allowed, "finetuned")?;
        self.check_data(data)?;
        let mut g = Graph::new();
        let mut rng = stream_rng(self.config.seed, Stream::FinetuneDropout);
        let (_, input, _) = self.arch.reconstruct(&mut g, &self.store, self.config.variant, data, &mut rng, false)?;
        let out = self.arch.ae.forward(&mut g, &self.store, input)?;
        g.check_finite()?;
        Ok(g.value(out).clone())
    }

    /// Finite-difference check of the eval-mode objective over every
    /// parameter trainable under the configured variant. The model is left
    /// unchanged.
    pub fn check_gradients(&self, data: &TrainData<T>, opts: GradCheckOptions) -> Result<GradCheckReport> {
        self.check_data(data)?;
        let mut store = self.store.clone();
        let ids = self.arch.trainable(self.config.variant);
        let seed = self.config.seed;
        grad_check(
            &mut store,
            &ids,
            |g: &mut Graph<T>, s: &ParamStore<T>| -> Result<Var> {
                let mut rng = stream_rng(seed, Stream::GradCheck);
                Ok(self.arch.objective(g, s, &self.config, data, &mut rng, false)?.total)
            },
            opts,
        )
    }

    /// Eval-mode `tc(h_t) + tc(h_v)`.
    pub fn encoder_tc(&self, data: &TrainData<T>) -> Result<f64> {
        let mut g = Graph::new();
        let mut rng = stream_rng(self.config.seed, Stream::WarmupDropout);
        let tc = encoder_tc_graph(&self.arch, &mut g, &self.store, data, &mut rng, false)?;
        Ok(g.scalar(tc).to_f64())
    }
}

fn encoder_tc_graph<T: Real, R: Rng + ?Sized>(
    arch: &Architecture,
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    data: &TrainData<T>,
    rng: &mut R,
    training: bool,
) -> Result<Var> {
    let xt = g.constant(data.text.clone());
    let xv = g.constant(data.visual.clone());
    let ht = arch.text.forward(g, store, xt, rng, training)?;
    let hv = arch.visual.forward(g, store, xv, rng, training)?;
    let a = tc_loss_graph(g, ht)?;
    let b = tc_loss_graph(g, hv)?;
    g.add(a, b)
}

/// Seeded partition of `0..items` into `items / size` batches whose sizes
/// differ by at most one, each at least `size`.
pub fn item_batches(items: usize, size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..items).collect();
    order.shuffle(&mut substream_rng(seed, Stream::ItemBatch, epoch));
    let n = (items / size.max(1)).max(1);
    let (base, extra) = (items / n, items % n);
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for b in 0..n {
        let len = base + usize::from(b < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Result of a complete run from a fresh model.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Real> {
    pub model: Model<T>,
    pub pretrain: PretrainTrace,
    pub finetune: Vec<LossBreakdown>,
}

pub fn train<T: Real>(cfg: &TrainConfig, data: &TrainData<T>) -> Result<TrainOutcome<T>> {
    let mut model = Model::new(cfg.clone(), data.dims())?;
    let pretrain = model.pretrain_all(data)?;
    let finetune = model.finetune(data)?;
    Ok(TrainOutcome {
        model,
        pretrain,
        finetune,
    })
}
