use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionConfig;
use crate::autoencoder::AeConfig;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::numerics::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Full model.
    #[default]
    Base,
    /// Total-correlation term removed; attention kept.
    NoDrl,
    /// Attention bypassed; the autoencoder is fine-tuned on the raw matrix.
    NoCa,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Base, Variant::NoDrl, Variant::NoCa];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::NoDrl => "no-drl",
            Variant::NoCa => "no-ca",
        }
    }

    pub fn uses_attention(self) -> bool {
        self != Variant::NoCa
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::Config(format!("unknown precision {s:?} (expected f32 or f64)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub precision: Precision,
    pub variant: Variant,
    /// Weight of the total-correlation term.
    pub lambda_tc: f64,
    /// Dropout on the projection nets' hidden layer.
    pub dropout: f64,
    pub pretrain_encoder_epochs: usize,
    pub pretrain_encoder_lr: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    /// Item rows per fine-tuning step; `None` trains on all items at once.
    pub batch_items: Option<usize>,
    pub adam: AdamConfig,
    pub encoder: EncoderConfig,
    pub attention: AttentionConfig,
    /// Autoencoder shape, penalties and pretraining schedule.
    pub ae: AeConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F64,
            variant: Variant::Base,
            lambda_tc: 0.5,
            dropout: 0.2,
            pretrain_encoder_epochs: 10,
            pretrain_encoder_lr: 1e-3,
            finetune_epochs: 100,
            finetune_lr: 1e-3,
            batch_items: None,
            adam: AdamConfig::default(),
            encoder: EncoderConfig::default(),
            attention: AttentionConfig::default(),
            ae: AeConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Reduced dimensions and a tuned schedule for desk-size data (a few
    /// hundred users and items). The autoencoder weight penalty is lowered
    /// because it is a sum over all weights and the default dominates the
    /// reconstruction error at this scale.
    pub fn compact() -> Self {
        let mut c = Self::default();
        c.encoder.hidden = 64;
        c.encoder.text_out = 16;
        c.encoder.visual_out = 16;
        c.encoder.fused = 32;
        c.attention.latent = 32;
        c.ae.hidden = 128;
        c.ae.lambda2 = 5e-5;
        c.ae.lr = 1e-2;
        c.ae.epochs = 300;
        c.finetune_lr = 1e-2;
        c.finetune_epochs = 200;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("pretrain_encoder_lr", self.pretrain_encoder_lr),
            ("finetune_lr", self.finetune_lr),
            ("adam.lr", self.adam.lr),
            ("encoder.layer_norm_eps", self.encoder.layer_norm_eps),
            ("ae.lr", self.ae.lr),
            ("ae.kernel_init_std", self.ae.kernel_init_std),
            ("ae.lambda2", self.ae.lambda2),
            ("ae.lambda_s", self.ae.lambda_s),
        ];
        for (name, v) in reals {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        if !(self.adam.lr > 0.0 && self.encoder.layer_norm_eps > 0.0 && self.ae.kernel_init_std >= 0.0) {
            return Err(Error::Config("adam.lr and encoder.layer_norm_eps must be > 0, ae.kernel_init_std >= 0".into()));
        }
        if !(self.lambda_tc >= 0.0 && self.lambda_tc.is_finite()) {
            return Err(Error::Config(format!("lambda_tc must be >= 0, got {}", self.lambda_tc)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        if !(self.pretrain_encoder_lr > 0.0 && self.finetune_lr > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if let Some(b) = self.batch_items {
            if b < 2 {
                return Err(Error::Config(format!("batch_items must be >= 2, got {b}")));
            }
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config("invalid Adam constants".into()));
        }
        let e = &self.encoder;
        if e.hidden == 0 || e.text_out == 0 || e.visual_out == 0 || e.fused == 0 {
            return Err(Error::Config("encoder dims must be >= 1".into()));
        }
        self.attention.validate()?;
        self.ae.validate()
    }

    /// Effective TC weight once the variant is applied.
    pub fn effective_lambda_tc(&self) -> f64 {
        match self.variant {
            Variant::Base => self.lambda_tc,
            Variant::NoDrl | Variant::NoCa => 0.0,
        }
    }

    /// Reads JSON or TOML, chosen by extension (`.toml`, anything else JSON).
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path.extension().and_then(|e| e.to_str()) == Some("toml");
        let cfg = if is_toml {
            Self::from_toml(&text)?
        } else {
            Self::from_json(&text)?
        };
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("config json: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("config toml: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
