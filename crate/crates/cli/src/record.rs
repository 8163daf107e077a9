//! Result records and their aggregation over trials.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Params = IndexMap<String, Value>;
pub type Metrics = IndexMap<String, f64>;

/// One method's aggregated numbers for one parameter point of one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub table: String,
    pub method: String,
    pub params: Params,
    #[serde(with = "metric_map")]
    pub metrics: Metrics,
    pub seed: u64,
    pub trials: u64,
    pub version: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
    /// Only populated with `--timing`; keeps default outputs reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl ResultRecord {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// Parameter rendered as text (strings unquoted).
    pub fn param(&self, key: &str) -> Option<String> {
        self.params.get(key).map(value_text)
    }

    pub fn param_f64(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(Value::as_f64)
    }

    fn matches(&self, table: &str, method: &str, filter: &[(&str, Value)]) -> bool {
        self.table == table
            && self.method == method
            && filter.iter().all(|(k, v)| self.params.get(*k) == Some(v))
    }
}

pub fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub version: String,
    pub config: ExperimentConfig,
    pub records: Vec<ResultRecord>,
    /// Failures that affected a whole trial rather than one method.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl ResultSet {
    pub fn find(&self, table: &str, method: &str, filter: &[(&str, Value)]) -> Option<&ResultRecord> {
        self.records.iter().find(|r| r.matches(table, method, filter))
    }

    pub fn metric(&self, table: &str, method: &str, filter: &[(&str, Value)], metric: &str) -> Option<f64> {
        self.find(table, method, filter).and_then(|r| r.metric(metric))
    }

    pub fn table<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a ResultRecord> + 'a {
        self.records.iter().filter(move |r| r.table == table)
    }

    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty() || self.records.iter().any(|r| !r.errors.is_empty())
    }

    pub fn all_errors(&self) -> Vec<String> {
        let mut out = self.errors.clone();
        for r in &self.records {
            out.extend(r.errors.iter().map(|e| format!("{}/{}: {e}", r.table, r.method)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Agg {
    Mean,
    Max,
    Sum,
}

#[derive(Debug, Clone)]
struct Slot {
    agg: Agg,
    values: Vec<(u64, f64)>,
}

impl Slot {
    fn reduce(&self) -> f64 {
        // sorted by trial so the reduction order never depends on scheduling
        let mut v = self.values.clone();
        v.sort_by_key(|&(t, _)| t);
        match self.agg {
            Agg::Mean => v.iter().map(|&(_, x)| x).sum::<f64>() / v.len() as f64,
            Agg::Max => v.iter().map(|&(_, x)| x).fold(f64::NEG_INFINITY, f64::max),
            Agg::Sum => v.iter().map(|&(_, x)| x).sum(),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    table: String,
    method: String,
    params: Params,
    slots: IndexMap<String, Slot>,
    errors: Vec<String>,
}

/// Accumulates per-trial observations keyed by table, method and params.
/// Output order is the order keys were first seen.
#[derive(Debug, Default)]
pub struct Collector {
    entries: IndexMap<String, Entry>,
    errors: Vec<String>,
}

impl Collector {
    fn entry(&mut self, table: &str, method: &str, params: &Params) -> &mut Entry {
        let key = format!("{table}\u{1f}{method}\u{1f}{}", serde_json::to_string(params).unwrap_or_default());
        self.entries.entry(key).or_insert_with(|| Entry {
            table: table.into(),
            method: method.into(),
            params: params.clone(),
            slots: IndexMap::new(),
            errors: Vec::new(),
        })
    }

    pub fn observe(&mut self, table: &str, method: &str, params: &Params, trial: u64, metrics: &[(&str, Agg, f64)]) {
        let e = self.entry(table, method, params);
        for &(name, agg, v) in metrics {
            e.slots
                .entry(name.to_string())
                .or_insert_with(|| Slot { agg, values: Vec::new() })
                .values
                .push((trial, v));
        }
    }

    pub fn error(&mut self, table: &str, method: &str, params: &Params, trial: u64, msg: impl std::fmt::Display) {
        self.entry(table, method, params).errors.push(format!("trial {trial}: {msg}"));
    }

    pub fn trial_error(&mut self, trial: u64, msg: impl std::fmt::Display) {
        self.errors.push(format!("trial {trial}: {msg}"));
    }

    pub fn finish(self, cfg: &ExperimentConfig) -> ResultSet {
        let records = self
            .entries
            .into_values()
            .map(|e| ResultRecord {
                experiment: cfg.experiment.name().into(),
                table: e.table,
                method: e.method,
                params: e.params,
                metrics: e.slots.iter().map(|(k, s)| (k.clone(), s.reduce())).collect(),
                seed: cfg.seed,
                trials: cfg.trials,
                version: ARTIFACT_VERSION.into(),
                errors: e.errors,
                wall_time_s: None,
            })
            .collect();
        ResultSet {
            version: ARTIFACT_VERSION.into(),
            config: cfg.clone(),
            records,
            errors: self.errors,
        }
    }
}

/// Builds a `Params` map from `(key, value)` pairs.
#[macro_export]
macro_rules! params {
    ($($k:expr => $v:expr),* $(,)?) => {{
        let mut p = $crate::record::Params::new();
        $(p.insert($k.to_string(), serde_json::json!($v));)*
        p
    }};
}

/// Finite metrics as JSON numbers; `inf`, `-inf` and `nan` as strings.
mod metric_map {
    use super::Metrics;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(m: &Metrics, s: S) -> Result<S::Ok, S::Error> {
        let out: indexmap::IndexMap<&str, Repr> = m
            .iter()
            .map(|(k, &v)| {
                let r = if v.is_finite() {
                    Repr::Num(v)
                } else if v.is_nan() {
                    Repr::Text("nan".into())
                } else if v > 0.0 {
                    Repr::Text("inf".into())
                } else {
                    Repr::Text("-inf".into())
                };
                (k.as_str(), r)
            })
            .collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Metrics, D::Error> {
        let raw: indexmap::IndexMap<String, Repr> = indexmap::IndexMap::deserialize(d)?;
        raw.into_iter()
            .map(|(k, r)| {
                let v = match r {
                    Repr::Num(v) => v,
                    Repr::Text(t) => match t.as_str() {
                        "inf" => f64::INFINITY,
                        "-inf" => f64::NEG_INFINITY,
                        "nan" => f64::NAN,
                        other => return Err(D::Error::custom(format!("bad metric value {other:?}"))),
                    },
                };
                Ok((k, v))
            })
            .collect()
    }
}
