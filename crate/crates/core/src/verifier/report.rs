use serde::{Deserialize, Serialize};

use super::{ReplicationReport, ReplicationStatus, TfmVerdict};
use crate::error::{Error, Result};

/// Empirical distribution of signed errors: `error` sorted ascending and
/// `cum_fraction[k] = (k + 1) / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    pub error: Vec<f64>,
    pub cum_fraction: Vec<f64>,
}

pub fn emit_cdf(errors: &[f64]) -> Result<CdfTable> {
    if errors.is_empty() {
        return Err(Error::Invalid("no errors to tabulate".to_string()));
    }
    if let Some(i) = errors.iter().position(|e| e.is_nan()) {
        return Err(Error::Invalid(format!("error {i} is NaN")));
    }
    let mut error = errors.to_vec();
    error.sort_by(f64::total_cmp);
    let n = error.len() as f64;
    let cum_fraction = (1..=error.len()).map(|k| k as f64 / n).collect();
    Ok(CdfTable { error, cum_fraction })
}

impl CdfTable {
    pub fn len(&self) -> usize {
        self.error.len()
    }

    pub fn is_empty(&self) -> bool {
        self.error.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(24 * (self.len() + 1));
        out.push_str("error,cum_fraction\n");
        for (e, f) in self.error.iter().zip(&self.cum_fraction) {
            out.push_str(&format!("{e:?},{f:?}\n"));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<CdfTable> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["error", "cum_fraction"] {
            return Err(Error::schema("header", "expected \"error,cum_fraction\""));
        }
        let mut t = CdfTable {
            error: Vec::new(),
            cum_fraction: Vec::new(),
        };
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |c: usize| -> Result<f64> {
                rec[c]
                    .trim()
                    .parse()
                    .map_err(|_| Error::schema(format!("row {}", i + 1), format!("not a number: {:?}", &rec[c])))
            };
            t.error.push(parse(0)?);
            t.cum_fraction.push(parse(1)?);
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub model: Option<String>,
    pub repr: Option<String>,
    pub accumulation: Option<String>,
    /// Where the replication inputs came from; any dataset may be used.
    pub dataset_id: Option<String>,
    /// What stands in for the reference model's predictions.
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub max_abs_eps: f64,
    pub status: ReplicationStatus,
    pub violations: usize,
    pub first_violation: Option<usize>,
    pub eps_max: f64,
}

impl From<&ReplicationReport> for ReplicationSummary {
    fn from(r: &ReplicationReport) -> Self {
        ReplicationSummary {
            max_abs_eps: r.max_abs_eps,
            status: r.status,
            violations: r.violations,
            first_violation: r.first_violation,
            eps_max: r.eps_max,
        }
    }
}

/// JSON document written by the command-line tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub config: ReportConfig,
    pub tfm_verdict: Option<TfmVerdict>,
    pub eps_max: Option<f64>,
    pub replication: Option<ReplicationSummary>,
    pub cdf_csv_path: Option<String>,
}

impl ReportEnvelope {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
