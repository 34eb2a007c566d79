use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "arm,K,recall,ndcg,users";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAtK {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
}

/// Metrics of one trained arm of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub arm: String,
    pub variant: String,
    pub seed: u64,
    pub train_fraction: f64,
    pub heads: usize,
    /// Users counted in the means.
    pub users: usize,
    /// Users dropped because subsampling left them without train items.
    pub excluded_users: usize,
    pub metrics: Vec<MetricAtK>,
}

impl EvalReport {
    pub fn at(&self, k: usize) -> Option<&MetricAtK> {
        self.metrics.iter().find(|m| m.k == k)
    }

    pub fn ndcg_at(&self, k: usize) -> f64 {
        self.at(k).map_or(f64::NAN, |m| m.ndcg)
    }
}

/// One row of the report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub arm: String,
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub users: usize,
}

pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER.split(',')).expect("in-memory write");
    for r in reports {
        for m in &r.metrics {
            w.write_record([
                r.arm.clone(),
                m.k.to_string(),
                m.recall.to_string(),
                m.ndcg.to_string(),
                r.users.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn parse_reports_csv<R: Read>(reader: R, source: &str) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::MalformedRow {
            path: source.to_string(),
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if header.iter().collect::<Vec<_>>() != REPORT_HEADER.split(',').collect::<Vec<_>>() {
        return Err(Error::MalformedRow {
            path: source.to_string(),
            line: 1,
            reason: format!("expected header `{REPORT_HEADER}`"),
        });
    }
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let bad = |reason: String| Error::MalformedRow {
            path: source.to_string(),
            line,
            reason,
        };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = rec[i].trim().parse().map_err(|_| bad(format!("bad number `{}`", &rec[i])))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(format!("metric {v} outside [0,1]")));
            }
            Ok(v)
        };
        let int = |i: usize| -> Result<usize> { rec[i].trim().parse().map_err(|_| bad(format!("bad integer `{}`", &rec[i]))) };
        rows.push(ReportRow {
            arm: rec[0].to_string(),
            k: int(1)?,
            recall: num(2)?,
            ndcg: num(3)?,
            users: int(4)?,
        });
    }
    Ok(rows)
}

/// Two-column `key,ndcg@K` table, one row per report.
pub fn sweep_csv(reports: &[EvalReport], key: &str, k: usize, value: impl Fn(&EvalReport) -> String) -> String {
    let mut out = format!("{key},ndcg@{k}\n");
    for r in reports {
        out.push_str(&format!("{},{}\n", value(r), r.ndcg_at(k)));
    }
    out
}

pub fn reports_json(reports: &[EvalReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}
