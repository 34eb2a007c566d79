use std::path::PathBuf;

use anyhow::{Context, Result};
use cadmr::pipeline::{Precision, TrainConfig, Variant};
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "cadmr", version, about = "Train and evaluate the cross-attention multimodal recommender")]
pub struct Cli {
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Filter, index and split an interaction file and bind its feature files.
    Prepare(PrepareArgs),
    /// Generate a planted low-rank dataset with modality features.
    Synth(SynthArgs),
    /// Pretrain the autoencoder and warm up the modality encoders.
    Pretrain(PretrainArgs),
    /// Fine-tune every component from a pretrained checkpoint.
    Finetune(FinetuneArgs),
    /// Rank the test fold with a trained checkpoint.
    Evaluate(EvaluateArgs),
    /// Train and evaluate the base model, the model without the TC term and the model without attention.
    Ablate(AblateArgs),
    /// Retrain on shrinking shares of the train fold.
    ColdStart(ColdStartArgs),
    /// Retrain with each attention head count.
    HeadsSweep(HeadsSweepArgs),
    /// Compare analytic and finite-difference gradients of the full objective.
    GradCheck(GradCheckArgs),
}

impl Verb {
    pub fn name(&self) -> &'static str {
        match self {
            Verb::Prepare(_) => "prepare",
            Verb::Synth(_) => "synth",
            Verb::Pretrain(_) => "pretrain",
            Verb::Finetune(_) => "finetune",
            Verb::Evaluate(_) => "evaluate",
            Verb::Ablate(_) => "ablate",
            Verb::ColdStart(_) => "cold-start",
            Verb::HeadsSweep(_) => "heads-sweep",
            Verb::GradCheck(_) => "grad-check",
        }
    }
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Run directory; created if absent.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Dataset directory written by `prepare` or `synth`.
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Declared defaults.
    Full,
    /// Smaller dimensions and a tuned schedule for a few hundred users and items.
    Compact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Base,
    NoDrl,
    NoCa,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Base => Variant::Base,
            VariantArg::NoDrl => Variant::NoDrl,
            VariantArg::NoCa => Variant::NoCa,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

/// Training settings. A `--config` file (JSON or TOML) or `--preset` gives
/// the base; flags typed on the command line override it.
#[derive(Debug, Args)]
pub struct TrainFlags {
    /// JSON or TOML training config.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "full")]
    pub preset: Preset,
    /// Root seed for every random stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "base")]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: PrecisionArg,
    /// Weight of the total-correlation term.
    #[arg(long, default_value_t = 0.5)]
    pub lambda_tc: f64,
    /// Dropout in the projection nets.
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    /// Fine-tuning learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub adam_beta1: f64,
    #[arg(long, default_value_t = 0.99)]
    pub adam_beta2: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub adam_eps: f64,
    /// Autoencoder pretraining epochs.
    #[arg(long, default_value_t = 200)]
    pub epochs_ae: usize,
    /// TC-only encoder warm-up epochs.
    #[arg(long, default_value_t = 10)]
    pub epochs_warmup: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs_finetune: usize,
    /// Autoencoder hidden width.
    #[arg(long, default_value_t = 256)]
    pub ae_hidden: usize,
    /// Attention model width (split across heads).
    #[arg(long, default_value_t = 64)]
    pub latent: usize,
    /// Item rows per fine-tuning step; all items when omitted.
    #[arg(long)]
    pub batch_items: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HeadsFlag {
    /// Attention heads.
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
}

fn typed(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine))
}

impl TrainFlags {
    /// Base config with command-line overrides applied.
    pub fn resolve(&self, m: &ArgMatches, heads: Option<&HeadsFlag>) -> Result<TrainConfig> {
        let mut c = match (&self.config, self.preset) {
            (Some(p), _) => TrainConfig::from_path(p).with_context(|| format!("loading config {}", p.display()))?,
            (None, Preset::Full) => TrainConfig::default(),
            (None, Preset::Compact) => TrainConfig::compact(),
        };
        if typed(m, "seed") {
            c.seed = self.seed;
        }
        if typed(m, "variant") {
            c.variant = self.variant.into();
        }
        if typed(m, "precision") {
            c.precision = self.precision.into();
        }
        if typed(m, "lambda_tc") {
            c.lambda_tc = self.lambda_tc;
        }
        if typed(m, "dropout") {
            c.dropout = self.dropout;
        }
        if typed(m, "lr") {
            c.finetune_lr = self.lr;
        }
        if typed(m, "adam_beta1") {
            c.adam.beta1 = self.adam_beta1;
        }
        if typed(m, "adam_beta2") {
            c.adam.beta2 = self.adam_beta2;
        }
        if typed(m, "adam_eps") {
            c.adam.eps = self.adam_eps;
        }
        if typed(m, "epochs_ae") {
            c.ae.epochs = self.epochs_ae;
        }
        if typed(m, "epochs_warmup") {
            c.pretrain_encoder_epochs = self.epochs_warmup;
        }
        if typed(m, "epochs_finetune") {
            c.finetune_epochs = self.epochs_finetune;
        }
        if typed(m, "ae_hidden") {
            c.ae.hidden = self.ae_hidden;
        }
        if typed(m, "latent") {
            c.attention.latent = self.latent;
        }
        if typed(m, "batch_items") {
            c.batch_items = self.batch_items;
        }
        if let Some(h) = heads {
            if typed(m, "heads") {
                c.attention.heads = h.heads;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// `user,item[,rating]` rows; `.tsv` files are tab separated.
    #[arg(long)]
    pub interactions: PathBuf,
    /// Text features, CSV or binary (`.bin`).
    #[arg(long)]
    pub text_features: PathBuf,
    #[arg(long)]
    pub visual_features: PathBuf,
    /// Item token per text feature row; rows are in catalog order when omitted.
    #[arg(long)]
    pub text_items: Option<PathBuf>,
    #[arg(long)]
    pub visual_items: Option<PathBuf>,
    /// The interaction file starts with a header row.
    #[arg(long)]
    pub header: bool,
    /// Minimum interactions per user and per item.
    #[arg(long, default_value_t = 5)]
    pub k_core: usize,
    /// Train:validation:test shares per user.
    #[arg(long, default_value = "8:1:1")]
    pub ratio: String,
    /// Split seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "dataset")]
    pub name: String,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub users: usize,
    #[arg(long, default_value_t = 100)]
    pub items: usize,
    /// Rank of the planted factors.
    #[arg(long, default_value_t = 8)]
    pub rank: usize,
    #[arg(long, default_value_t = 32)]
    pub text_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub visual_dim: usize,
    /// Std of the feature noise.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Positives kept per user.
    #[arg(long, default_value_t = 10)]
    pub positives: usize,
    #[arg(long, default_value = "8:1:1")]
    pub ratio: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub heads: HeadsFlag,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// Pretrained checkpoint [default: <out>/pretrained.ckpt].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Overrides the epoch count stored in the checkpoint.
    #[arg(long)]
    pub epochs_finetune: Option<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArg,
    /// Trained checkpoint [default: <out>/finetuned.ckpt].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Cutoffs.
    #[arg(long, value_delimiter = ',', default_value = "10,20")]
    pub k: Vec<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub heads: HeadsFlag,
    #[arg(long, value_delimiter = ',', default_value = "10,20")]
    pub k: Vec<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ColdStartArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub heads: HeadsFlag,
    /// Shares of each user's train items kept.
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.6,0.4,0.2")]
    pub fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "10,20")]
    pub k: Vec<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct HeadsSweepArgs {
    #[command(flatten)]
    pub data: DataArg,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Head counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub heads: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10,20")]
    pub k: Vec<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Built-in toy problem: 5 items, 8 users, text dim 6, visual dim 10,
    /// attention width 8 over 2 heads, autoencoder width 4.
    #[arg(long, conflicts_with = "data")]
    pub toy: bool,
    /// Dataset directory to check instead of the toy problem.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub heads: HeadsFlag,
    /// Coordinates probed per parameter; all when omitted.
    #[arg(long)]
    pub probes: Option<usize>,
    /// Maximum accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[command(flatten)]
    pub out: OutArg,
}
