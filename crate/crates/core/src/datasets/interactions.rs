use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observed user-item event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user: String,
    pub item: String,
    pub weight: f64,
}

impl InteractionRecord {
    pub fn new(user: impl Into<String>, item: impl Into<String>) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelimitedFormat {
    Csv,
    Tsv,
}

impl DelimitedFormat {
    pub fn delimiter(self) -> u8 {
        match self {
            DelimitedFormat::Csv => b',',
            DelimitedFormat::Tsv => b'\t',
        }
    }

    /// `.tsv` selects tab-separated, anything else comma-separated.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("tsv") => DelimitedFormat::Tsv,
            _ => DelimitedFormat::Csv,
        }
    }
}

pub fn load_interactions(
    path: &Path,
    format: DelimitedFormat,
    has_header: bool,
) -> Result<Vec<InteractionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(file, format, has_header, &path.display().to_string())
}

/// Parses `user,item[,weight]` rows. `source` names the input in errors.
pub fn parse_interactions<R: Read>(
    reader: R,
    format: DelimitedFormat,
    has_header: bool,
    source: &str,
) -> Result<Vec<InteractionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let malformed = |line: usize, reason: String| Error::MalformedRow {
        path: source.to_string(),
        line,
        reason,
    };

    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let fallback_line = i + 1 + usize::from(has_header);
        let row = row.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(fallback_line);
            malformed(line, e.to_string())
        })?;
        let line = row
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(fallback_line);
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() < 2 || row.len() > 3 {
            return Err(malformed(
                line,
                format!("expected 2 or 3 columns, found {}", row.len()),
            ));
        }
        let user = &row[0];
        let item = &row[1];
        if user.is_empty() {
            return Err(malformed(line, "empty user token".into()));
        }
        if item.is_empty() {
            return Err(malformed(line, "empty item token".into()));
        }
        let weight = match row.get(2) {
            None | Some("") => 1.0,
            Some(w) => w
                .parse::<f64>()
                .map_err(|_| malformed(line, format!("invalid weight `{w}`")))?,
        };
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(malformed(line, format!("weight must be finite and >= 0, got {weight}")));
        }
        out.push(InteractionRecord {
            user: user.to_string(),
            item: item.to_string(),
            weight,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyFile {
            path: source.to_string(),
        });
    }
    Ok(out)
}
