//! Planted low-rank interaction data with modality features that are noisy
//! linear views of the item factors.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::{Modality, ModalityFeatures};
use super::matrix::{Catalog, RatingMatrix};
use super::split::{split_interactions, SplitAssignment, SplitRatio};
use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MixingMap {
    /// Entries drawn from `N(0, 1/rank)`.
    #[default]
    Gaussian,
    /// `[I | 0]`: features copy the item factors (truncated when dim < rank).
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub rank: usize,
    pub text_dim: usize,
    pub visual_dim: usize,
    pub noise: f64,
    pub positives_per_user: usize,
    pub seed: u64,
    #[serde(default)]
    pub mixing: MixingMap,
    #[serde(default)]
    pub ratio: SplitRatio,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            users: 200,
            items: 100,
            rank: 8,
            text_dim: 32,
            visual_dim: 64,
            noise: 0.1,
            positives_per_user: 10,
            seed: 0,
            mixing: MixingMap::Gaussian,
            ratio: SplitRatio::default(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("users", self.users),
            ("items", self.items),
            ("rank", self.rank),
            ("text_dim", self.text_dim),
            ("visual_dim", self.visual_dim),
            ("positives_per_user", self.positives_per_user),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::Config(format!("synthetic {name} must be >= 1")));
            }
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("synthetic noise must be >= 0, got {}", self.noise)));
        }
        if self.positives_per_user > self.items {
            return Err(Error::Config(format!(
                "positives_per_user ({}) exceeds item count ({})",
                self.positives_per_user, self.items
            )));
        }
        self.ratio.validate()
    }
}

/// Generated data plus the latent factors it was planted from.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub user_factors: Array2<f64>,
    pub item_factors: Array2<f64>,
}

fn normal_matrix<R: Rng>(rng: &mut R, shape: (usize, usize), scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

/// Indices of the `q` largest entries of `scores`, ties to the lower index.
pub fn top_q(scores: &[f64], q: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(q);
    idx
}

fn mixing<R: Rng>(rng: &mut R, kind: MixingMap, rank: usize, dim: usize) -> Array2<f64> {
    match kind {
        MixingMap::Gaussian => normal_matrix(rng, (rank, dim), 1.0 / (rank as f64).sqrt()),
        MixingMap::Identity => Array2::from_shape_fn((rank, dim), |(j, k)| if j == k { 1.0 } else { 0.0 }),
    }
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, Stream::Synthetic);
    let user_factors = normal_matrix(&mut rng, (cfg.users, cfg.rank), 1.0);
    let item_factors = normal_matrix(&mut rng, (cfg.items, cfg.rank), 1.0);
    let a_text = mixing(&mut rng, cfg.mixing, cfg.rank, cfg.text_dim);
    let a_visual = mixing(&mut rng, cfg.mixing, cfg.rank, cfg.visual_dim);
    let noise_text = normal_matrix(&mut rng, (cfg.items, cfg.text_dim), cfg.noise);
    let noise_visual = normal_matrix(&mut rng, (cfg.items, cfg.visual_dim), cfg.noise);

    let scores = item_factors.dot(&user_factors.t());
    let mut matrix = RatingMatrix::zeros(cfg.items, cfg.users);
    for (u, col) in scores.axis_iter(Axis(1)).enumerate() {
        let col: Vec<f64> = col.to_vec();
        for i in top_q(&col, cfg.positives_per_user) {
            matrix.set(i, u, true);
        }
    }

    let text = ModalityFeatures::new(Modality::Text, item_factors.dot(&a_text) + noise_text)?;
    let visual = ModalityFeatures::new(Modality::Visual, item_factors.dot(&a_visual) + noise_visual)?;
    let split = split_interactions(&matrix, &cfg.ratio, cfg.seed)?;

    let uw = digits(cfg.users);
    let iw = digits(cfg.items);
    let catalog = Catalog::from_tokens(
        (0..cfg.users).map(|u| format!("u{u:0uw$}")),
        (0..cfg.items).map(|i| format!("i{i:0iw$}")),
    );
    Ok(SyntheticData {
        dataset: Dataset {
            name: "synthetic".into(),
            catalog,
            matrix,
            split,
            text,
            visual,
        },
        user_factors,
        item_factors,
    })
}

fn digits(n: usize) -> usize {
    n.saturating_sub(1).to_string().len()
}

/// Same as [`generate_synthetic`], returning the tuple of its parts.
pub fn generate_parts(
    cfg: &SyntheticConfig,
) -> Result<(RatingMatrix, ModalityFeatures, ModalityFeatures, SplitAssignment)> {
    let d = generate_synthetic(cfg)?.dataset;
    Ok((d.matrix, d.text, d.visual, d.split))
}
