//! Interaction ingestion, k-core filtering, rating-matrix assembly, seeded
//! splits, modality features and synthetic data.

mod features;
mod interactions;
mod kcore;
mod matrix;
mod split;
mod stats;
mod synthetic;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use features::{
    align_to_catalog, load_features, load_features_inferred, load_features_with_sidecar, parse_features_binary,
    parse_features_csv, parse_sidecar, FeatureFormat, Modality, ModalityFeatures,
};
pub use interactions::{load_interactions, parse_interactions, DelimitedFormat, InteractionRecord};
pub use kcore::k_core_filter;
pub use matrix::{build_rating_matrix, Catalog, RatingMatrix};
pub use split::{fold_counts, split_interactions, Assignment, Fold, SplitAssignment, SplitRatio};
pub use stats::{parse_stats, DatasetStats, STATS_HEADER};
pub use synthetic::{generate_parts, generate_synthetic, top_q, MixingMap, SyntheticConfig, SyntheticData};

use crate::error::{Error, Result};

/// Everything a training run binds to: catalog, interactions, split and features.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub catalog: Catalog,
    pub matrix: RatingMatrix,
    pub split: SplitAssignment,
    pub text: ModalityFeatures,
    pub visual: ModalityFeatures,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    name: String,
    split_seed: u64,
    users: usize,
    items: usize,
    text_dim: usize,
    visual_dim: usize,
}

pub const USERS_FILE: &str = "users.txt";
pub const ITEMS_FILE: &str = "items.txt";
pub const SPLIT_FILE: &str = "split.csv";
pub const TEXT_FILE: &str = "text.bin";
pub const VISUAL_FILE: &str = "visual.bin";
pub const STATS_FILE: &str = "stats.csv";
pub const META_FILE: &str = "dataset.json";

impl Dataset {
    pub fn stats(&self) -> DatasetStats {
        DatasetStats::from_matrix(self.name.clone(), &self.matrix)
    }

    pub fn train_matrix(&self) -> RatingMatrix {
        self.split.fold_matrix(Fold::Train)
    }

    /// Writes the dataset directory layout read back by [`Dataset::load_dir`].
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| -> Result<()> {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(p, e))
        };
        let lines = |tokens: &[String]| {
            let mut s = tokens.join("\n");
            s.push('\n');
            s
        };
        write(USERS_FILE, lines(self.catalog.user_tokens()).as_bytes())?;
        write(ITEMS_FILE, lines(self.catalog.item_tokens()).as_bytes())?;
        let mut split = Vec::new();
        self.split.write_csv(&mut split, &self.catalog)?;
        write(SPLIT_FILE, &split)?;
        write(TEXT_FILE, &self.text.to_binary())?;
        write(VISUAL_FILE, &self.visual.to_binary())?;
        let stats = format!("{STATS_HEADER}\n{}\n", self.stats().to_csv_row());
        write(STATS_FILE, stats.as_bytes())?;
        let meta = DatasetMeta {
            name: self.name.clone(),
            split_seed: self.split.seed,
            users: self.catalog.num_users(),
            items: self.catalog.num_items(),
            text_dim: self.text.dim(),
            visual_dim: self.visual.dim(),
        };
        write(META_FILE, serde_json::to_string_pretty(&meta).expect("meta serializes").as_bytes())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(p, e))
        };
        let meta: DatasetMeta = serde_json::from_str(&read(META_FILE)?)
            .map_err(|e| Error::Config(format!("{}: {e}", dir.join(META_FILE).display())))?;
        let users = parse_sidecar(&read(USERS_FILE)?);
        let items = parse_sidecar(&read(ITEMS_FILE)?);
        let catalog = Catalog::from_tokens(users.clone(), items.clone());
        if catalog.user_tokens() != users.as_slice() || catalog.item_tokens() != items.as_slice() {
            return Err(Error::Config("catalog token files must be sorted and unique".into()));
        }
        let split_path = dir.join(SPLIT_FILE);
        let split_text = read(SPLIT_FILE)?;
        let split = SplitAssignment::read_csv(
            split_text.as_bytes(),
            &catalog,
            meta.split_seed,
            &split_path.display().to_string(),
        )?;
        let mut matrix = RatingMatrix::zeros(catalog.num_items(), catalog.num_users());
        for a in &split.assignments {
            matrix.set(a.item, a.user, true);
        }
        let text = load_features(&dir.join(TEXT_FILE), Modality::Text, catalog.num_items(), meta.text_dim)?;
        let visual = load_features(&dir.join(VISUAL_FILE), Modality::Visual, catalog.num_items(), meta.visual_dim)?;
        Ok(Self {
            name: meta.name,
            catalog,
            matrix,
            split,
            text,
            visual,
        })
    }
}

/// k-core filter, catalog, binarized matrix and split in one pass.
pub fn prepare_interactions(
    records: &[InteractionRecord],
    k: usize,
    ratio: &SplitRatio,
    seed: u64,
) -> Result<(Catalog, RatingMatrix, SplitAssignment)> {
    let filtered = k_core_filter(records, k);
    if filtered.is_empty() {
        return Err(Error::Config(format!("no interactions survive {k}-core filtering")));
    }
    let catalog = Catalog::from_records(&filtered);
    let matrix = build_rating_matrix(&filtered, &catalog)?;
    let split = split_interactions(&matrix, ratio, seed)?;
    Ok((catalog, matrix, split))
}
