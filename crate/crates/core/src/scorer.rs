//! Data encoding of a log under a model: the rule selection stream `C_r`,
//! the ✓/✗ model stream `C_m` and the value stream `C_v`.
//!
//! Scoring works on the bin-discretized log, which is exactly what a decoder
//! can reconstruct. Per-variable column summaries are the unit of work; the
//! search re-evaluates only the column of a candidate's target variable and
//! assembles totals through the same [`assemble`] used here, so scores from
//! the search and from [`total_score`] agree to the bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log_model::{code_of, Domain, Event, EventLog, FrequencyTable, Schema, Trace, Value};
use crate::mdl_codec::{code_len, model_length, prequential_length, CodecConfig, CounterMode};
use crate::rule_model::compiled::{CompiledModel, CompiledTest, CompiledUpdate, Prediction};
use crate::rule_model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub l_model: f64,
    pub l_cr: f64,
    pub l_cm: f64,
    pub l_cv: f64,
    pub total: f64,
}

/// One `C_r` entry: how many rules fired and which one (index into the
/// model's canonical rule list) was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleChoice {
    pub fired: usize,
    pub rule: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Allowed {
    /// The whole domain of the variable (fallback coding).
    Domain,
    /// The codes predicted by the chosen rule.
    Predicted(Vec<u32>),
}

/// One `C_v` entry. `value` is a category index or a bin index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueCode {
    pub variable: usize,
    pub allowed: Allowed,
    pub value: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeStreams {
    pub rule_selection: Vec<RuleChoice>,
    pub model_stream: Vec<bool>,
    pub value_stream: Vec<ValueCode>,
}

/// Contribution of one target variable to the data encoding.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ColumnSummary {
    pub l_cr: f64,
    pub l_cv: f64,
    pub n_check: u64,
    pub n_cross: u64,
}

/// Combines a model length and per-variable columns (in schema order) into a
/// breakdown.
pub fn assemble(l_model: f64, columns: &[ColumnSummary], config: &CodecConfig) -> ScoreBreakdown {
    let l_cr: f64 = columns.iter().map(|c| c.l_cr).sum();
    let l_cv: f64 = columns.iter().map(|c| c.l_cv).sum();
    let l_cm = match config.counter {
        CounterMode::Global => {
            let checks = columns.iter().map(|c| c.n_check).sum();
            let crosses = columns.iter().map(|c| c.n_cross).sum();
            prequential_length(checks, crosses, config.epsilon)
        }
        CounterMode::PerVariable => columns
            .iter()
            .map(|c| prequential_length(c.n_check, c.n_cross, config.epsilon))
            .sum(),
    };
    ScoreBreakdown {
        l_model,
        l_cr,
        l_cm,
        l_cv,
        total: l_model + l_cr + l_cm + l_cv,
    }
}

/// A rule as seen by one column: where its condition holds and what it
/// predicts.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ColumnRule<'a> {
    pub firing: &'a [bool],
    pub update: &'a CompiledUpdate,
}

/// A discretized log flattened for repeated scoring.
#[derive(Debug, Clone)]
pub struct PreparedLog {
    log: EventLog,
    rows: Vec<Vec<Value>>,
    prev: Vec<Option<usize>>,
    /// Per variable, the code of each event (`None` for a missing number).
    actual: Vec<Vec<Option<u32>>>,
    freq: FrequencyTable,
    baseline: Vec<ColumnSummary>,
    config: CodecConfig,
}

impl PreparedLog {
    pub fn new(log: &EventLog, config: &CodecConfig) -> Self {
        let log = log.discretized();
        let schema = log.schema();
        let mut rows = Vec::with_capacity(log.event_count());
        let mut prev = Vec::with_capacity(log.event_count());
        for trace in log.traces() {
            for (i, e) in trace.events.iter().enumerate() {
                prev.push((i > 0).then(|| rows.len() - 1));
                rows.push(e.values.clone());
            }
        }
        let actual = (0..schema.len())
            .map(|v| rows.iter().map(|r| code_of(&schema[v], r[v])).collect())
            .collect();
        let freq = FrequencyTable::from_log(&log);
        let mut prepared = Self {
            log,
            rows,
            prev,
            actual,
            freq,
            baseline: Vec::new(),
            config: *config,
        };
        prepared.baseline = (0..prepared.schema().len()).map(|v| prepared.column(v, &[])).collect();
        prepared
    }

    /// The discretized log.
    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn schema(&self) -> &Schema {
        self.log.schema()
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn frequencies(&self) -> &FrequencyTable {
        &self.freq
    }

    pub fn event_count(&self) -> usize {
        self.rows.len()
    }

    pub(crate) fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub(crate) fn prev_index(&self, i: usize) -> Option<usize> {
        self.prev[i]
    }

    pub(crate) fn prev_row(&self, i: usize) -> Option<&[Value]> {
        self.prev[i].map(|p| self.rows[p].as_slice())
    }

    pub(crate) fn actual(&self, var: usize) -> &[Option<u32>] {
        &self.actual[var]
    }

    /// Column summaries of the empty model.
    pub fn baseline(&self) -> &[ColumnSummary] {
        &self.baseline
    }

    pub(crate) fn firing(&self, test: &CompiledTest) -> Vec<bool> {
        (0..self.rows.len()).map(|i| test.fires(self.prev_row(i), &self.rows[i])).collect()
    }

    /// Fallback code length of `code` over the whole domain of `var`.
    pub fn fallback_len(&self, var: usize, code: u32) -> f64 {
        code_len(self.freq.count(var, code), self.freq.total(var))
    }

    /// Encodes one variable with the rules that target it, which must be
    /// given in canonical order.
    pub(crate) fn column(&self, var: usize, rules: &[ColumnRule<'_>]) -> ColumnSummary {
        let schema = self.schema();
        let counts = self.freq.counts(var);
        let total = self.freq.total(var);
        let mut s = ColumnSummary::default();
        for (i, a) in self.actual[var].iter().enumerate() {
            let Some(a) = *a else { continue };
            let prev_value = self.prev[i].and_then(|p| self.rows[p][var].as_num());
            let mut fired = 0usize;
            // mass of the cheapest correct prediction; ties keep the first
            let mut best: Option<u64> = None;
            for r in rules {
                if !r.firing[i] {
                    continue;
                }
                let p = r.update.predict(prev_value, &schema[var]);
                if p.is_empty() {
                    continue;
                }
                fired += 1;
                if p.contains(a) {
                    let mass = p.mass(counts);
                    if best.is_none_or(|m| mass < m) {
                        best = Some(mass);
                    }
                }
            }
            if fired >= 2 {
                s.l_cr += (fired as f64).log2();
            }
            match (fired, best) {
                (0, _) => s.l_cv += code_len(counts[a as usize], total),
                (_, Some(mass)) => {
                    s.n_check += 1;
                    s.l_cv += code_len(counts[a as usize], mass);
                }
                (_, None) => {
                    s.n_cross += 1;
                    s.l_cv += code_len(counts[a as usize], total);
                }
            }
        }
        s
    }

    /// Column summaries and breakdown of a whole model.
    pub fn score(&self, model: &Model) -> Result<ScoreBreakdown> {
        Ok(self.score_columns(model)?.1)
    }

    pub fn score_columns(&self, model: &Model) -> Result<(Vec<ColumnSummary>, ScoreBreakdown)> {
        let schema = self.schema();
        let compiled = CompiledModel::new(model, schema, self.config.precision)?;
        let firing: Vec<Vec<bool>> = compiled.rules.iter().map(|r| self.firing(&r.test)).collect();
        let columns: Vec<ColumnSummary> = (0..schema.len())
            .map(|v| {
                let rules: Vec<ColumnRule<'_>> = compiled.by_target[v]
                    .iter()
                    .map(|&r| ColumnRule {
                        firing: &firing[r],
                        update: &compiled.rules[r].update,
                    })
                    .collect();
                if rules.is_empty() {
                    self.baseline[v]
                } else {
                    self.column(v, &rules)
                }
            })
            .collect();
        let l_model = model_length(model, schema, self.config.precision)?;
        let breakdown = assemble(l_model, &columns, &self.config);
        Ok((columns, breakdown))
    }
}

/// `L(D, M) = L(M) + L(C_r) + L(C_m) + L(C_v)`.
pub fn total_score(log: &EventLog, model: &Model, config: &CodecConfig) -> Result<ScoreBreakdown> {
    PreparedLog::new(log, config).score(model)
}

/// Builds the three code streams and the score breakdown.
pub fn encode(log: &EventLog, model: &Model, config: &CodecConfig) -> Result<(CodeStreams, ScoreBreakdown)> {
    let prepared = PreparedLog::new(log, config);
    let breakdown = prepared.score(model)?;
    let schema = prepared.schema();
    let compiled = CompiledModel::new(model, schema, config.precision)?;
    let mut streams = CodeStreams::default();
    for i in 0..prepared.rows.len() {
        let prev = prepared.prev_row(i);
        let cur = &prepared.rows[i];
        for &v in &compiled.order {
            let Some(a) = prepared.actual[v][i] else { continue };
            let fired: Vec<(usize, Prediction<'_>)> = compiled.by_target[v]
                .iter()
                .filter_map(|&r| compiled.rules[r].apply(schema, prev, cur).map(|p| (r, p)))
                .collect();
            if fired.is_empty() {
                streams.value_stream.push(ValueCode {
                    variable: v,
                    allowed: Allowed::Domain,
                    value: a,
                });
                continue;
            }
            let counts = prepared.freq.counts(v);
            let mut best: Option<(u64, usize, Prediction<'_>)> = None;
            for &(r, p) in &fired {
                if p.contains(a) {
                    let mass = p.mass(counts);
                    if best.is_none_or(|(m, _, _)| mass < m) {
                        best = Some((mass, r, p));
                    }
                }
            }
            let chosen = best.map_or(fired[0].0, |(_, r, _)| r);
            if fired.len() >= 2 {
                streams.rule_selection.push(RuleChoice {
                    fired: fired.len(),
                    rule: chosen,
                });
            }
            streams.model_stream.push(best.is_some());
            match best {
                Some((_, _, p)) if p.len() > 1 => streams.value_stream.push(ValueCode {
                    variable: v,
                    allowed: Allowed::Predicted(p.codes()),
                    value: a,
                }),
                Some(_) => {}
                None => streams.value_stream.push(ValueCode {
                    variable: v,
                    allowed: Allowed::Domain,
                    value: a,
                }),
            }
        }
    }
    Ok((streams, breakdown))
}

struct Reader<'a, T> {
    items: &'a [T],
    at: usize,
    name: &'static str,
}

impl<'a, T> Reader<'a, T> {
    fn new(items: &'a [T], name: &'static str) -> Self {
        Self { items, at: 0, name }
    }

    fn next(&mut self) -> Result<&'a T> {
        let item = self.items.get(self.at).ok_or(Error::StreamUnderrun(self.name))?;
        self.at += 1;
        Ok(item)
    }

    fn finish(&self) -> Result<()> {
        if self.at == self.items.len() {
            Ok(())
        } else {
            Err(Error::StreamOverrun(self.name))
        }
    }
}

/// Reconstructs the discretized log from its code streams. Only the trace
/// structure of `skeleton` and the positions of its missing numerical values
/// are used; all other cells are decoded.
pub fn decode(streams: &CodeStreams, model: &Model, skeleton: &EventLog, config: &CodecConfig) -> Result<EventLog> {
    let schema = skeleton.schema();
    let compiled = CompiledModel::new(model, schema, config.precision)?;
    let mut cr = Reader::new(&streams.rule_selection, "C_r");
    let mut cm = Reader::new(&streams.model_stream, "C_m");
    let mut cv = Reader::new(&streams.value_stream, "C_v");
    let mismatch = |what: String| Error::StreamMismatch(what);

    let mut traces = Vec::with_capacity(skeleton.trace_count());
    for trace in skeleton.traces() {
        let mut events: Vec<Event> = Vec::with_capacity(trace.events.len());
        for shape in &trace.events {
            let mut cur = vec![Value::Missing; schema.len()];
            for &v in &compiled.order {
                let var = &schema[v];
                if matches!(var.domain, Domain::Numerical(_)) && shape.values[v] == Value::Missing {
                    continue;
                }
                let prev = events.last().map(|e| e.values.as_slice());
                let fired: Vec<(usize, Prediction<'_>)> = compiled.by_target[v]
                    .iter()
                    .filter_map(|&r| compiled.rules[r].apply(schema, prev, &cur).map(|p| (r, p)))
                    .collect();
                let mut read_value = |allowed: Allowed| -> Result<u32> {
                    let code = cv.next()?;
                    if code.variable != v || code.allowed != allowed {
                        return Err(mismatch(format!("unexpected value code for `{}`", var.name)));
                    }
                    let ok = match &allowed {
                        Allowed::Domain => (code.value as usize) < var.domain_size(),
                        Allowed::Predicted(p) => p.contains(&code.value),
                    };
                    if !ok {
                        return Err(mismatch(format!("value {} not allowed for `{}`", code.value, var.name)));
                    }
                    Ok(code.value)
                };
                let value = if fired.is_empty() {
                    read_value(Allowed::Domain)?
                } else {
                    let chosen = if fired.len() >= 2 {
                        let choice = cr.next()?;
                        if choice.fired != fired.len() {
                            return Err(mismatch(format!("{} rules fire, stream says {}", fired.len(), choice.fired)));
                        }
                        fired
                            .iter()
                            .find(|(r, _)| *r == choice.rule)
                            .map(|(_, p)| *p)
                            .ok_or_else(|| mismatch(format!("rule {} does not fire", choice.rule)))?
                    } else {
                        fired[0].1
                    };
                    if *cm.next()? {
                        let codes = chosen.codes();
                        match codes.as_slice() {
                            [c] => *c,
                            _ => read_value(Allowed::Predicted(codes))?,
                        }
                    } else {
                        read_value(Allowed::Domain)?
                    }
                };
                cur[v] = match &var.domain {
                    Domain::Categorical(_) => Value::Cat(value),
                    Domain::Numerical(h) => Value::Num(h.representative(value as usize)),
                };
            }
            events.push(Event { values: cur });
        }
        traces.push(Trace {
            id: trace.id.clone(),
            events,
        });
    }
    cr.finish()?;
    cm.finish()?;
    cv.finish()?;
    EventLog::new(schema.clone(), traces)
}

/// Recomputes the stream lengths symbol by symbol, in stream order, with
/// one global prequential counter. Used to cross-check [`ScoreBreakdown`].
pub fn stream_lengths(streams: &CodeStreams, log: &EventLog, config: &CodecConfig) -> (f64, f64, f64) {
    let freq = FrequencyTable::from_log(&log.discretized());
    let l_cr = streams.rule_selection.iter().map(|c| (c.fired as f64).log2()).sum();
    let mut counter = crate::mdl_codec::PrequentialCounter::new(config.epsilon);
    let mut l_cm = 0.0;
    for &s in &streams.model_stream {
        let (bits, next) = counter.code(s);
        l_cm += bits;
        counter = next;
    }
    let l_cv = streams
        .value_stream
        .iter()
        .map(|c| {
            let mass = match &c.allowed {
                Allowed::Domain => freq.total(c.variable),
                Allowed::Predicted(p) => freq.mass(c.variable, p),
            };
            code_len(freq.count(c.variable, c.value), mass)
        })
        .sum();
    (l_cr, l_cm, l_cv)
}
