//! Long-format result tables and their CSV forms.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub sweep: f64,
    pub policy: String,
    pub metric: String,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Samples behind the value (seeds, instances or trials).
    pub n: u64,
    pub status: RowStatus,
}

impl Row {
    pub fn new(sweep: f64, policy: &str, metric: &str, (value, ci_low, ci_high): (f64, f64, f64), n: u64) -> Self {
        Self { sweep, policy: policy.into(), metric: metric.into(), value, ci_low, ci_high, n, status: RowStatus::Ok }
    }

    pub fn failed(sweep: f64, policy: &str, metric: &str) -> Self {
        Self {
            sweep,
            policy: policy.into(),
            metric: metric.into(),
            value: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            n: 0,
            status: RowStatus::Failed,
        }
    }

    /// Field-wise equality with NaN equal to itself.
    pub fn same_as(&self, other: &Row) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        eq(self.sweep, other.sweep)
            && self.policy == other.policy
            && self.metric == other.metric
            && eq(self.value, other.value)
            && eq(self.ci_low, other.ci_low)
            && eq(self.ci_high, other.ci_high)
            && self.n == other.n
            && self.status == other.status
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<Row>,
}

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, sweep: f64, policy: &str, metric: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.sweep == sweep && r.policy == policy && r.metric == metric)
    }

    /// `(sweep, value)` pairs of one policy and metric, in table order.
    pub fn series(&self, policy: &str, metric: &str) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.policy == policy && r.metric == metric).map(|r| (r.sweep, r.value)).collect()
    }

    pub fn metrics(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.metric) {
                seen.push(r.metric.clone());
            }
        }
        seen
    }

    pub fn policies_for(&self, metric: &str) -> Vec<String> {
        let mut seen = Vec::new();
        for r in self.rows.iter().filter(|r| r.metric == metric) {
            if !seen.contains(&r.policy) {
                seen.push(r.policy.clone());
            }
        }
        seen
    }

    /// Every `(sweep, policy)` cell of a metric is present or marked failed.
    pub fn is_complete(&self) -> bool {
        self.metrics().iter().all(|m| {
            let sweeps: BTreeSet<u64> =
                self.rows.iter().filter(|r| &r.metric == m).map(|r| r.sweep.to_bits()).collect();
            let policies = self.policies_for(m);
            sweeps.iter().all(|s| {
                policies
                    .iter()
                    .all(|p| self.rows.iter().any(|r| &r.metric == m && &r.policy == p && r.sweep.to_bits() == *s))
            })
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(["sweep", "policy", "metric", "value", "ci_low", "ci_high", "n", "status"])?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<Row>, _>>()?;
        Ok(Self { rows })
    }

    /// One metric as `sweep,<policy>...`, a column per policy.
    pub fn wide_csv(&self, metric: &str) -> String {
        let policies = self.policies_for(metric);
        let mut sweeps: Vec<f64> = Vec::new();
        for r in self.rows.iter().filter(|r| r.metric == metric) {
            if !sweeps.iter().any(|s| s.to_bits() == r.sweep.to_bits()) {
                sweeps.push(r.sweep);
            }
        }
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let mut header = vec!["sweep".to_string()];
            header.extend(policies.iter().cloned());
            w.write_record(&header).expect("writing to memory");
            for s in &sweeps {
                let mut rec = vec![s.to_string()];
                for p in &policies {
                    let v = self
                        .rows
                        .iter()
                        .find(|r| r.metric == metric && &r.policy == p && r.sweep.to_bits() == s.to_bits())
                        .map(|r| r.value);
                    rec.push(v.map(|v| v.to_string()).unwrap_or_default());
                }
                w.write_record(&rec).expect("writing to memory");
            }
        }
        String::from_utf8(buf).expect("csv is utf-8")
    }
}
