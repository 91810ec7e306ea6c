//! Predicting attribute values with a model and measuring how well the
//! predictions match.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log_model::{Domain, EventLog, FrequencyTable, Schema, Value};
use crate::rule_model::compiled::{CompiledModel, CompiledRule, Prediction, UpdateKind};
use crate::rule_model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome {
    Cat(u32),
    Num(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub trace: String,
    pub event: usize,
    pub variable: usize,
    pub actual: Outcome,
    pub predicted: Outcome,
    /// Index of the deciding rule in the model, `None` for the fallback.
    pub rule: Option<usize>,
}

/// Training statistics used to resolve ambiguous predictions and as the
/// fallback when no rule fires.
#[derive(Debug, Clone)]
pub struct Predictor {
    compiled: CompiledModel,
    schema: Schema,
    freq: FrequencyTable,
    majority: Vec<u32>,
    mean: Vec<f64>,
}

impl Predictor {
    /// `train` provides frequencies, majorities and means; predictions are
    /// made for logs sharing (or extending) its schema.
    pub fn new(model: &Model, train: &EventLog, precision: u32) -> Result<Self> {
        let schema = train.schema().clone();
        let freq = FrequencyTable::from_log(train);
        let majority = (0..schema.len())
            .map(|v| {
                let counts = freq.counts(v);
                (0..counts.len()).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap_or(0) as u32
            })
            .collect();
        let mean = (0..schema.len())
            .map(|v| {
                let xs: Vec<f64> = train
                    .events_with_prev()
                    .filter_map(|(_, e)| e.values[v].as_num())
                    .collect();
                if xs.is_empty() {
                    0.0
                } else {
                    xs.iter().sum::<f64>() / xs.len() as f64
                }
            })
            .collect();
        Ok(Self {
            compiled: CompiledModel::new(model, &schema, precision)?,
            schema,
            freq,
            majority,
            mean,
        })
    }

    fn count(&self, v: usize, code: u32) -> u64 {
        self.freq.count(v, code)
    }

    /// Best value of one firing rule and its support score (the largest
    /// training frequency among its predicted codes).
    fn resolve(&self, v: usize, rule: &CompiledRule, p: &Prediction<'_>, prev: Option<f64>) -> (u64, Outcome) {
        let codes = p.codes();
        let best = codes
            .iter()
            .copied()
            .max_by(|&a, &b| self.count(v, a).cmp(&self.count(v, b)).then(b.cmp(&a)))
            .unwrap_or(0);
        let score = self.count(v, best);
        let outcome = match &self.schema[v].domain {
            Domain::Categorical(_) => Outcome::Cat(best),
            Domain::Numerical(h) => {
                let exact = match (&rule.update.kind, prev) {
                    (UpdateKind::RelativePoint(a), Some(x)) => Some(x + a),
                    (UpdateKind::Multiplicative(a), Some(x)) => Some(a * x),
                    _ => None,
                };
                let point = match (&rule.update.kind, codes.as_slice()) {
                    (UpdateKind::Single(_), [b]) => Some(h.representative(*b as usize)),
                    _ => None,
                };
                Outcome::Num(exact.or(point).unwrap_or_else(|| {
                    let mass: u64 = codes.iter().map(|&c| self.count(v, c)).sum();
                    if mass == 0 {
                        codes.iter().map(|&c| h.representative(c as usize)).sum::<f64>() / codes.len() as f64
                    } else {
                        codes
                            .iter()
                            .map(|&c| self.count(v, c) as f64 * h.representative(c as usize))
                            .sum::<f64>()
                            / mass as f64
                    }
                }))
            }
        };
        (score, outcome)
    }

    fn fallback(&self, v: usize) -> Outcome {
        match self.schema[v].domain {
            Domain::Categorical(_) => Outcome::Cat(self.majority[v]),
            Domain::Numerical(_) => Outcome::Num(self.mean[v]),
        }
    }

    /// One record per (event, variable) with an observed value. Conditions
    /// are evaluated on the observed values of `log`.
    pub fn predict(&self, log: &EventLog) -> Result<Vec<PredictionRecord>> {
        self.check_schema(log)?;
        let schema = log.schema();
        let mut out = Vec::new();
        for trace in log.traces() {
            for (i, event) in trace.events.iter().enumerate() {
                let prev = i.checked_sub(1).map(|p| trace.events[p].values.as_slice());
                let cur = event.values.as_slice();
                for v in 0..schema.len() {
                    let actual = match cur[v] {
                        Value::Cat(c) => Outcome::Cat(c),
                        Value::Num(x) => Outcome::Num(x),
                        Value::Missing => continue,
                    };
                    let prev_value = prev.and_then(|p| p[v].as_num());
                    let mut best: Option<(u64, Outcome, usize)> = None;
                    for &r in &self.compiled.by_target[v] {
                        let rule = &self.compiled.rules[r];
                        let Some(p) = rule.apply(schema, prev, cur) else { continue };
                        let (score, outcome) = self.resolve(v, rule, &p, prev_value);
                        if best.is_none_or(|(s, _, _)| score > s) {
                            best = Some((score, outcome, r));
                        }
                    }
                    let (predicted, rule) = match best {
                        Some((_, o, r)) => (o, Some(r)),
                        None => (self.fallback(v), None),
                    };
                    out.push(PredictionRecord {
                        trace: trace.id.clone(),
                        event: i,
                        variable: v,
                        actual,
                        predicted,
                        rule,
                    });
                }
            }
        }
        Ok(out)
    }

    fn check_schema(&self, log: &EventLog) -> Result<()> {
        let ok = log.schema().len() == self.schema.len()
            && log
                .schema()
                .variables()
                .iter()
                .zip(self.schema.variables())
                .all(|(a, b)| a.name == b.name && a.kind() == b.kind());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidLog("log does not match the training schema".into()))
        }
    }
}

/// Predicts `log` with frequencies taken from `train`.
pub fn predict(model: &Model, train: &EventLog, log: &EventLog, precision: u32) -> Result<Vec<PredictionRecord>> {
    Predictor::new(model, train, precision)?.predict(log)
}

/// Macro-averaged F1 over the classes that occur as actual or predicted
/// value. `None` without records.
pub fn macro_f1(pairs: &[(u32, u32)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let classes: BTreeSet<u32> = pairs.iter().flat_map(|&(a, p)| [a, p]).collect();
    let mut sum = 0.0;
    for &c in &classes {
        let tp = pairs.iter().filter(|&&(a, p)| a == c && p == c).count() as f64;
        let fp = pairs.iter().filter(|&&(a, p)| a != c && p == c).count() as f64;
        let fn_ = pairs.iter().filter(|&&(a, p)| a == c && p != c).count() as f64;
        if tp > 0.0 {
            sum += 2.0 * tp / (2.0 * tp + fp + fn_);
        }
    }
    Some(sum / classes.len() as f64)
}

pub fn rmse(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let mse = pairs.iter().map(|(a, p)| (a - p).powi(2)).sum::<f64>() / pairs.len() as f64;
    Some(mse.sqrt())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Macro F1 per categorical variable.
    pub f1: BTreeMap<String, f64>,
    /// RMSE per numerical variable, on raw values.
    pub rmse: BTreeMap<String, f64>,
    pub median_f1: Option<f64>,
    pub median_rmse: Option<f64>,
    pub rule_terms: usize,
    pub runtime_seconds: f64,
}

/// Per-variable metrics of a set of records.
pub fn metrics(records: &[PredictionRecord], schema: &Schema, rule_terms: usize) -> MetricsReport {
    let mut cats: BTreeMap<usize, Vec<(u32, u32)>> = BTreeMap::new();
    let mut nums: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        match (r.actual, r.predicted) {
            (Outcome::Cat(a), Outcome::Cat(p)) => cats.entry(r.variable).or_default().push((a, p)),
            (Outcome::Num(a), Outcome::Num(p)) => nums.entry(r.variable).or_default().push((a, p)),
            _ => {}
        }
    }
    let f1: BTreeMap<String, f64> = cats
        .iter()
        .filter_map(|(&v, pairs)| macro_f1(pairs).map(|f| (schema[v].name.clone(), f)))
        .collect();
    let rmse: BTreeMap<String, f64> = nums
        .iter()
        .filter_map(|(&v, pairs)| rmse(pairs).map(|e| (schema[v].name.clone(), e)))
        .collect();
    MetricsReport {
        median_f1: median(&f1.values().copied().collect::<Vec<_>>()),
        median_rmse: median(&rmse.values().copied().collect::<Vec<_>>()),
        f1,
        rmse,
        rule_terms,
        runtime_seconds: 0.0,
    }
}

/// Predicts `test` and summarizes the predictions.
pub fn evaluate(model: &Model, train: &EventLog, test: &EventLog, precision: u32) -> Result<MetricsReport> {
    let records = predict(model, train, test, precision)?;
    Ok(metrics(&records, test.schema(), model.rule_term_count()))
}

/// Metrics of the empty model: majority class and mean everywhere.
pub fn baseline(train: &EventLog, test: &EventLog) -> Result<MetricsReport> {
    evaluate(&Model::default(), train, test, crate::mdl_codec::DEFAULT_PRECISION)
}

/// Splits whole traces: `fraction` of them (rounded) go to the test side.
pub fn split_by_traces(log: &EventLog, fraction: f64, seed: u64) -> Result<(EventLog, EventLog)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("split fraction {fraction} outside [0, 1]")));
    }
    let n = log.trace_count();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (fraction * n as f64).round() as usize;
    let test: BTreeSet<usize> = idx[..n_test].iter().copied().collect();
    let train = log.select_traces(|i, _| !test.contains(&i));
    let test = log.select_traces(|i, _| test.contains(&i));
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleMetric {
    pub events: usize,
    pub f1: Option<f64>,
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleGeneralization {
    pub rule: String,
    /// `None` when the rule fires nowhere on that split.
    pub train: Option<RuleMetric>,
    pub test: Option<RuleMetric>,
}

/// Accuracy of each rule on its own, restricted to where it fires.
pub fn per_rule_generalization(
    model: &Model,
    train: &EventLog,
    test: &EventLog,
    precision: u32,
) -> Result<Vec<RuleGeneralization>> {
    let mut out = Vec::new();
    for rule in model.rules() {
        let alone = Model::from_rules([rule.clone()])?;
        let predictor = Predictor::new(&alone, train, precision)?;
        let on = |log: &EventLog| -> Result<Option<RuleMetric>> {
            let records: Vec<PredictionRecord> =
                predictor.predict(log)?.into_iter().filter(|r| r.rule.is_some()).collect();
            if records.is_empty() {
                return Ok(None);
            }
            let cats: Vec<(u32, u32)> = records
                .iter()
                .filter_map(|r| match (r.actual, r.predicted) {
                    (Outcome::Cat(a), Outcome::Cat(p)) => Some((a, p)),
                    _ => None,
                })
                .collect();
            let nums: Vec<(f64, f64)> = records
                .iter()
                .filter_map(|r| match (r.actual, r.predicted) {
                    (Outcome::Num(a), Outcome::Num(p)) => Some((a, p)),
                    _ => None,
                })
                .collect();
            Ok(Some(RuleMetric {
                events: records.len(),
                f1: macro_f1(&cats),
                rmse: rmse(&nums),
            }))
        };
        out.push(RuleGeneralization {
            rule: rule.to_string(),
            train: on(train)?,
            test: on(test)?,
        });
    }
    Ok(out)
}
