use std::io::Read;

use serde::{Deserialize, Serialize};

use super::matrix::RatingMatrix;
use crate::error::{Error, Result};

/// Summary counts of a prepared dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
}

impl DatasetStats {
    pub fn from_matrix(name: impl Into<String>, m: &RatingMatrix) -> Self {
        Self {
            name: name.into(),
            users: m.users(),
            items: m.items(),
            interactions: m.nnz(),
        }
    }

    pub fn to_csv_row(&self) -> String {
        format!("{},{},{},{}", self.name, self.users, self.items, self.interactions)
    }
}

pub const STATS_HEADER: &str = "dataset,users,items,interactions";

fn parse_count(raw: &str) -> Option<usize> {
    let digits: String = raw.chars().filter(|c| !matches!(c, ',' | '_' | ' ')).collect();
    if digits.is_empty() {
        return None;
    }
    digits.parse().ok()
}

/// Parses a `dataset,users,items,interactions` CSV. Counts may carry
/// thousands separators when quoted (`"160,792"`).
pub fn parse_stats<R: Read>(reader: R, source: &str) -> Result<Vec<DatasetStats>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |reason: String| Error::MalformedRow {
            path: source.to_string(),
            line,
            reason,
        };
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != 4 {
            return Err(bad(format!("expected 4 columns, found {}", row.len())));
        }
        let count = |idx: usize| parse_count(&row[idx]).ok_or_else(|| bad(format!("invalid count `{}`", &row[idx])));
        out.push(DatasetStats {
            name: row[0].to_string(),
            users: count(1)?,
            items: count(2)?,
            interactions: count(3)?,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyFile {
            path: source.to_string(),
        });
    }
    Ok(out)
}
