//! Precomputed per-item modality features.
//!
//! Two on-disk layouts are accepted: headerless CSV (one row per item) and a
//! little-endian binary file with an 8-byte header `(rows: u32, cols: u32)`
//! followed by `rows * cols` `f32` values in row-major order. Neither layout
//! embeds item ids; an optional sidecar file lists one item token per row.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::matrix::Catalog;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Visual,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Visual => "visual",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    Binary,
}

impl FeatureFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("f32") => FeatureFormat::Binary,
            _ => FeatureFormat::Csv,
        }
    }
}

/// Item-aligned feature matrix, one row per catalog item.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityFeatures {
    pub modality: Modality,
    pub matrix: Array2<f64>,
}

impl ModalityFeatures {
    pub fn new(modality: Modality, matrix: Array2<f64>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("{} features", modality.as_str()),
            });
        }
        Ok(Self { modality, matrix })
    }

    pub fn items(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Binary layout; values are narrowed to `f32`.
    pub fn to_binary(&self) -> Vec<u8> {
        let (rows, cols) = self.matrix.dim();
        let mut out = Vec::with_capacity(8 + rows * cols * 4);
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for v in self.matrix.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for row in self.matrix.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

pub fn parse_features_binary(bytes: &[u8], source: &str) -> Result<Array2<f64>> {
    let bad = |reason: String| Error::MalformedRow {
        path: source.to_string(),
        line: 0,
        reason,
    };
    if bytes.len() < 8 {
        return Err(bad(format!("binary feature file shorter than its 8-byte header ({} bytes)", bytes.len())));
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("header dimensions overflow".into()))?;
    let body = &bytes[8..];
    if body.len() != expected {
        return Err(bad(format!(
            "header declares {rows}x{cols} ({expected} bytes) but body has {} bytes",
            body.len()
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

pub fn parse_features_csv(text: &str, source: &str) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| Error::MalformedRow {
            path: source.to_string(),
            line: i + 1,
            reason,
        };
        let mut n = 0;
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("invalid number `{}`", field.trim())))?;
            data.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => return Err(bad(format!("expected {c} columns, found {n}"))),
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::EmptyFile {
        path: source.to_string(),
    })?;
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row widths checked"))
}

fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let source = path.display().to_string();
    match FeatureFormat::from_path(path) {
        FeatureFormat::Binary => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_features_binary(&bytes, &source)
        }
        FeatureFormat::Csv => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_features_csv(&text, &source)
        }
    }
}

fn check_dims(m: &Array2<f64>, expected_items: usize, expected_dim: usize) -> Result<()> {
    if m.nrows() != expected_items {
        return Err(Error::shape("feature rows", expected_items, m.nrows()));
    }
    if m.ncols() != expected_dim {
        return Err(Error::shape("feature dim", expected_dim, m.ncols()));
    }
    Ok(())
}

/// Loads a feature matrix whose rows already follow catalog item order.
pub fn load_features(
    path: &Path,
    modality: Modality,
    expected_items: usize,
    expected_dim: usize,
) -> Result<ModalityFeatures> {
    let m = read_matrix(path)?;
    check_dims(&m, expected_items, expected_dim)?;
    ModalityFeatures::new(modality, m)
}

pub fn parse_sidecar(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Reorders rows listed in a sidecar token file into catalog order. Rows for
/// items absent from the catalog (e.g. removed by k-core filtering) are dropped.
pub fn align_to_catalog(
    matrix: &Array2<f64>,
    sidecar: &[String],
    catalog: &Catalog,
) -> Result<Array2<f64>> {
    if sidecar.len() != matrix.nrows() {
        return Err(Error::shape("feature sidecar rows", matrix.nrows(), sidecar.len()));
    }
    let mut rows: Vec<Option<usize>> = vec![None; catalog.num_items()];
    for (r, token) in sidecar.iter().enumerate() {
        if let Some(i) = catalog.item(token) {
            if rows[i].replace(r).is_some() {
                return Err(Error::Config(format!("item `{token}` appears twice in sidecar")));
            }
        }
    }
    let mut out = Array2::zeros((catalog.num_items(), matrix.ncols()));
    for (i, r) in rows.into_iter().enumerate() {
        let r = r.ok_or_else(|| Error::UnknownToken {
            kind: "feature item",
            token: catalog.item_token(i).to_string(),
        })?;
        out.row_mut(i).assign(&matrix.row(r));
    }
    Ok(out)
}

pub fn load_features_with_sidecar(
    path: &Path,
    sidecar_path: &Path,
    modality: Modality,
    catalog: &Catalog,
    expected_dim: usize,
) -> Result<ModalityFeatures> {
    let m = read_matrix(path)?;
    let text = std::fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let aligned = align_to_catalog(&m, &parse_sidecar(&text), catalog)?;
    check_dims(&aligned, catalog.num_items(), expected_dim)?;
    ModalityFeatures::new(modality, aligned)
}

/// Loads features with the dimension taken from the file. Rows follow the
/// sidecar when one is given, catalog order otherwise.
pub fn load_features_inferred(
    path: &Path,
    sidecar_path: Option<&Path>,
    modality: Modality,
    catalog: &Catalog,
) -> Result<ModalityFeatures> {
    let m = read_matrix(path)?;
    let m = match sidecar_path {
        Some(sp) => {
            let text = std::fs::read_to_string(sp).map_err(|e| Error::io(sp, e))?;
            align_to_catalog(&m, &parse_sidecar(&text), catalog)?
        }
        None => m,
    };
    let dim = m.ncols();
    check_dims(&m, catalog.num_items(), dim)?;
    ModalityFeatures::new(modality, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn toy_csv_echoed() {
        let m = parse_features_csv("1,2,3\n4.5,-5,6e-1\n", "mem").unwrap();
        assert_eq!(m, array![[1.0, 2.0, 3.0], [4.5, -5.0, 0.6]]);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse_features_csv("1,2\n3\n", "m"), Err(Error::MalformedRow { line: 2, .. })));
        assert!(matches!(parse_features_csv("1,x\n", "m"), Err(Error::MalformedRow { .. })));
        assert!(matches!(parse_features_csv("\n", "m"), Err(Error::EmptyFile { .. })));
        let m = parse_features_csv("1,NaN\n", "m").unwrap();
        assert!(ModalityFeatures::new(Modality::Text, m).is_err());
    }

    #[test]
    fn binary_round_trip_and_errors() {
        let f = ModalityFeatures::new(Modality::Visual, array![[0.5, -1.25], [3.0, 8.0]]).unwrap();
        let bytes = f.to_binary();
        assert_eq!(&bytes[0..8], &[2, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(parse_features_binary(&bytes, "m").unwrap(), f.matrix);
        assert!(parse_features_binary(&bytes[..7], "m").is_err());
        assert!(parse_features_binary(&bytes[..bytes.len() - 1], "m").is_err());
        assert!(parse_features_binary(&[255, 255, 255, 255, 255, 255, 255, 255], "m").is_err());
    }

    #[test]
    fn dim_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("visual.bin");
        let f = ModalityFeatures::new(Modality::Visual, Array2::zeros((3, 4095))).unwrap();
        std::fs::write(&path, f.to_binary()).unwrap();
        let err = load_features(&path, Modality::Visual, 3, 4096).unwrap_err();
        assert!(matches!(err, Error::Shape { context: "feature dim", .. }));
        assert!(load_features(&path, Modality::Visual, 3, 4095).is_ok());
    }

    #[test]
    fn sidecar_alignment() {
        let cat = Catalog::from_tokens(vec!["u".to_string()], vec!["a".into(), "b".into()]);
        let m = array![[9.0], [2.0], [1.0]];
        let side = parse_sidecar("b\nz\na\n");
        let aligned = align_to_catalog(&m, &side, &cat).unwrap();
        assert_eq!(aligned, array![[1.0], [9.0]]);
        let missing = parse_sidecar("b\nz\ny\n");
        assert!(align_to_catalog(&m, &missing, &cat).is_err());
    }
}
