use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::matrix::{Catalog, RatingMatrix};
use crate::error::{Error, Result};
use crate::numerics::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fold {
    Train,
    Validation,
    Test,
}

impl Fold {
    pub const ALL: [Fold; 3] = [Fold::Train, Fold::Validation, Fold::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Fold::Train => "train",
            Fold::Validation => "validation",
            Fold::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Fold> {
        match s {
            "train" => Some(Fold::Train),
            "validation" | "val" => Some(Fold::Validation),
            "test" => Some(Fold::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatio {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let r = Self {
            train,
            validation,
            test,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Config(format!("split ratio parts must be positive: {parts:?}")));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratio must sum to 1, got {total}")));
        }
        Ok(())
    }

    /// Parses `8:1:1` style ratios (normalized) or `0.8,0.1,0.1`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split([':', ','])
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("cannot parse split ratio `{s}`")))?;
        if parts.len() != 3 {
            return Err(Error::Config(format!("split ratio needs three parts, got `{s}`")));
        }
        let total: f64 = parts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Config(format!("split ratio `{s}` is not positive")));
        }
        Self::new(parts[0] / total, parts[1] / total, parts[2] / total)
    }

    fn parts(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }
}

/// Largest-remainder allocation of `n` items over the ratio parts. Ties go to
/// the earlier part (train, then validation). A user with at least one item
/// always keeps one for training.
pub fn fold_counts(n: usize, ratio: &SplitRatio) -> [usize; 3] {
    let quotas = ratio.parts().map(|p| p * n as f64);
    let mut counts = quotas.map(|q| (q + 1e-9).floor() as usize);
    let mut remaining = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    let rem = |j: usize| quotas[j] - counts[j] as f64;
    order.sort_by(|&a, &b| rem(b).partial_cmp(&rem(a)).unwrap().then(a.cmp(&b)));
    for &j in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[j] += 1;
        remaining -= 1;
    }
    if n > 0 && counts[0] == 0 {
        let donor = if counts[2] >= counts[1] { 2 } else { 1 };
        counts[donor] -= 1;
        counts[0] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Assignment {
    pub user: usize,
    pub item: usize,
    pub fold: Fold,
}

/// Fold label for every observed entry, ordered by (user, item).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub seed: u64,
    pub users: usize,
    pub items: usize,
    pub assignments: Vec<Assignment>,
}

impl SplitAssignment {
    pub fn fold_matrix(&self, fold: Fold) -> RatingMatrix {
        let mut m = RatingMatrix::zeros(self.items, self.users);
        for a in self.assignments.iter().filter(|a| a.fold == fold) {
            m.set(a.item, a.user, true);
        }
        m
    }

    /// Per-user ascending item lists for one fold.
    pub fn per_user(&self, fold: Fold) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.users];
        for a in self.assignments.iter().filter(|a| a.fold == fold) {
            out[a.user].push(a.item);
        }
        for v in &mut out {
            v.sort_unstable();
        }
        out
    }

    pub fn count(&self, user: usize, fold: Fold) -> usize {
        self.assignments
            .iter()
            .filter(|a| a.user == user && a.fold == fold)
            .count()
    }

    pub fn write_csv<W: Write>(&self, writer: W, catalog: &Catalog) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Config(format!("writing split: {e}"));
        w.write_record(["user", "item", "fold"]).map_err(io)?;
        for a in &self.assignments {
            w.write_record([
                catalog.user_token(a.user),
                catalog.item_token(a.item),
                a.fold.as_str(),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Config(format!("writing split: {e}")))?;
        Ok(())
    }

    /// Reads a `user,item,fold` file; tokens must be present in `catalog`.
    pub fn read_csv<R: Read>(reader: R, catalog: &Catalog, seed: u64, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut assignments = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let malformed = |reason: String| Error::MalformedRow {
                path: source.to_string(),
                line,
                reason,
            };
            let row = row.map_err(|e| malformed(e.to_string()))?;
            if row.len() != 3 {
                return Err(malformed(format!("expected 3 columns, found {}", row.len())));
            }
            let user = catalog.user(&row[0]).ok_or_else(|| Error::UnknownToken {
                kind: "user",
                token: row[0].to_string(),
            })?;
            let item = catalog.item(&row[1]).ok_or_else(|| Error::UnknownToken {
                kind: "item",
                token: row[1].to_string(),
            })?;
            let fold = Fold::parse(&row[2]).ok_or_else(|| malformed(format!("unknown fold `{}`", &row[2])))?;
            assignments.push(Assignment { user, item, fold });
        }
        assignments.sort();
        let before = assignments.len();
        assignments.dedup_by_key(|a| (a.user, a.item));
        if assignments.len() != before {
            return Err(Error::MalformedRow {
                path: source.to_string(),
                line: 0,
                reason: "an interaction is assigned to more than one fold".into(),
            });
        }
        Ok(Self {
            seed,
            users: catalog.num_users(),
            items: catalog.num_items(),
            assignments,
        })
    }
}

/// Per-user stratified shuffle split of the observed entries.
pub fn split_interactions(matrix: &RatingMatrix, ratio: &SplitRatio, seed: u64) -> Result<SplitAssignment> {
    ratio.validate()?;
    let mut rng = stream_rng(seed, Stream::Split);
    let mut assignments = Vec::with_capacity(matrix.nnz());
    for user in 0..matrix.users() {
        let mut items = matrix.user_items(user);
        items.shuffle(&mut rng);
        let [train, val, _] = fold_counts(items.len(), ratio);
        for (pos, item) in items.into_iter().enumerate() {
            let fold = if pos < train {
                Fold::Train
            } else if pos < train + val {
                Fold::Validation
            } else {
                Fold::Test
            };
            assignments.push(Assignment { user, item, fold });
        }
    }
    assignments.sort();
    Ok(SplitAssignment {
        seed,
        users: matrix.users(),
        items: matrix.items(),
        assignments,
    })
}
