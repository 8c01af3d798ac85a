//! Flat, deterministic experiment reports.
//!
//! A report is a list of named sections of rows `(name, value, stderr,
//! bound, margin_sigma, verdict)` plus the configuration and seeds that
//! produced it. JSON nests rows by section; CSV is one long table with the
//! configuration as leading rows. Nothing time-dependent goes in the body.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported only, not asserted.
    Info,
}

impl Verdict {
    pub fn from_check(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub name: String,
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    pub bound: Option<f64>,
    pub margin_sigma: Option<f64>,
    pub verdict: Verdict,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl Row {
    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value: finite(value),
            stderr: None,
            bound: None,
            margin_sigma: None,
            verdict: Verdict::Info,
        }
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = finite(stderr);
        self
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = finite(bound);
        self
    }

    pub fn with_margin(mut self, margin_sigma: f64) -> Self {
        self.margin_sigma = finite(margin_sigma);
        self
    }

    pub fn with_verdict(mut self, verdict: Verdict) -> Self {
        self.verdict = verdict;
        self
    }

    pub fn estimate(name: impl Into<String>, e: &crate::stats::Estimate) -> Self {
        Row::info(name, e.value).with_stderr(e.stderr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Section {
    pub name: String,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub sections: Vec<Section>,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            config: BTreeMap::new(),
            seeds: Vec::new(),
            sections: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn section(&mut self, name: impl Into<String>, rows: Vec<Row>) {
        self.sections.push(Section {
            name: name.into(),
            rows,
        });
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &Row)> {
        self.sections
            .iter()
            .flat_map(|s| s.rows.iter().map(move |r| (s.name.as_str(), r)))
    }

    pub fn find(&self, section: &str, name: &str) -> Option<&Row> {
        self.rows()
            .find(|(s, r)| *s == section && r.name == name)
            .map(|(_, r)| r)
    }

    pub fn failures(&self) -> Vec<(&str, &Row)> {
        self.rows()
            .filter(|(_, r)| r.verdict == Verdict::Fail)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s =
            serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_csv(&self) -> Result<String> {
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "schema_version",
            "section",
            "name",
            "value",
            "stderr",
            "bound",
            "margin_sigma",
            "verdict",
        ])
        .map_err(ser)?;
        let version = self.schema_version.to_string();
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            version.as_str(),
            "config",
            "command",
            &self.command,
            "",
            "",
            "",
            "",
        ])
        .map_err(ser)?;
        for (k, v) in &self.config {
            w.write_record([version.as_str(), "config", k, v, "", "", "", ""])
                .map_err(ser)?;
        }
        for (i, seed) in self.seeds.iter().enumerate() {
            w.write_record([
                version.as_str(),
                "seeds",
                &format!("replica_{i}"),
                &seed.to_string(),
                "",
                "",
                "",
                "",
            ])
            .map_err(ser)?;
        }
        for (section, r) in self.rows() {
            w.write_record([
                version.as_str(),
                section,
                &r.name,
                &opt(r.value),
                &opt(r.stderr),
                &opt(r.bound),
                &opt(r.margin_sigma),
                r.verdict.as_str(),
            ])
            .map_err(ser)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Serialization(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }
}
