//! Candidate generation, the optimistic score estimate and the greedy MOODY
//! search.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log_model::{Domain, EventLog, Kind};
use crate::mdl_codec::{code_len, condition_length, model_length, round_sig, update_length, CodecConfig};
use crate::rule_model::compiled::{compile_test, compile_update, CompiledUpdate};
use crate::rule_model::{Condition, Constant, Model, Operator, Rule, Test, Update, UpdateRule, UpdateType};
use crate::scorer::{assemble, ColumnRule, ColumnSummary, PreparedLog, ScoreBreakdown};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Conditions generated per operator.
    pub n_c: usize,
    /// Updates generated per update type and target variable.
    pub n_u: usize,
    /// Cap on the number of outer passes over the variables.
    pub max_iterations: Option<usize>,
    pub seed: u64,
    pub workers: usize,
    /// Evaluate every candidate instead of stopping on the estimate.
    pub exhaustive: bool,
    pub codec: CodecConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_c: 50,
            n_u: 1,
            max_iterations: None,
            seed: 0,
            workers: 1,
            exhaustive: false,
            codec: CodecConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub rule: Rule,
    /// Events at which the condition fires.
    pub support: usize,
    /// Estimated total score if the rule is added to the current model.
    pub estimate: f64,
}

/// One accepted rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub pass: usize,
    pub variable: String,
    pub rule: String,
    /// Candidates whose exact score was computed for this variable.
    pub evaluated: usize,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub model: Model,
    pub score: ScoreBreakdown,
    pub empty_score: f64,
    pub trace: Vec<IterationRecord>,
    pub candidates: usize,
}

/// Optimistic length of the value stream of a rule whose
/// prediction is `predicted`, assuming it covers `support` events.
pub fn estimate_value_stream(predicted: &[u32], counts: &[u64], support: u64) -> f64 {
    let freq = |j: u32| counts.get(j as usize).copied().unwrap_or(0);
    let mut order: Vec<u32> = predicted.to_vec();
    order.sort_by_key(|&j| (freq(j), j));
    let total: u64 = order.iter().map(|&j| freq(j)).sum();
    let mut bits = 0.0;
    let mut b = support;
    for j in order {
        let delta = b.min(freq(j));
        if delta > 0 {
            bits += delta as f64 * code_len(freq(j), total);
        }
        b -= delta;
    }
    bits
}

fn cond_cmp(a: &Condition, b: &Condition) -> Ordering {
    a.variable
        .cmp(&b.variable)
        .then_with(|| a.test.operator().cmp(&b.test.operator()))
        .then_with(|| {
            let (x, y) = (a.test.constants(), b.test.constants());
            x.iter()
                .zip(&y)
                .map(|(p, q)| p.key_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(x.len().cmp(&y.len()))
        })
}

/// Constant for a category or bin code of variable `var`.
fn constant_of(prepared: &PreparedLog, var: usize, code: u32) -> Constant {
    let v = &prepared.schema()[var];
    match &v.domain {
        Domain::Categorical(d) => Constant::Cat(d[code as usize].clone()),
        Domain::Numerical(h) => Constant::Num(round_sig(h.representative(code as usize), prepared.config().precision)),
    }
}

fn top_conditions(mut scored: Vec<(u64, Condition)>, n: usize) -> Vec<Condition> {
    scored.sort_by(|(ca, a), (cb, b)| cb.cmp(ca).then_with(|| cond_cmp(a, b)));
    scored.dedup_by(|x, y| cond_cmp(&x.1, &y.1).is_eq());
    scored.into_iter().take(n).map(|(_, c)| c).collect()
}

pub(crate) fn conditions_for(prepared: &PreparedLog, n_c: usize) -> Vec<Condition> {
    let schema = prepared.schema();
    let freq = prepared.frequencies();
    let p = prepared.config().precision;
    let mut by_op: BTreeMap<Operator, Vec<(u64, Condition)>> = BTreeMap::new();
    let mut push = |op: Operator, count: u64, c: Condition| by_op.entry(op).or_default().push((count, c));

    for (v, var) in schema.variables().iter().enumerate() {
        let counts = freq.counts(v);
        let name = &var.name;
        for (code, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let a = constant_of(prepared, v, code as u32);
            if var.category(code as u32) == Some(crate::MISSING_TOKEN) {
                continue;
            }
            push(Operator::Eq, count, Condition::new(name, Test::Eq(a.clone())));
            push(Operator::Ne, count, Condition::new(name, Test::Ne(a)));
        }
        if let Domain::Numerical(h) = &var.domain {
            let total = freq.total(v);
            let mut below = 0u64;
            for (j, &cut) in h.cuts().iter().enumerate() {
                below += counts[j];
                let tighter = below.min(total - below);
                let t = round_sig(cut, p);
                push(Operator::Le, tighter, Condition::new(name, Test::Le(t)));
                push(Operator::Ge, tighter, Condition::new(name, Test::Ge(t)));
            }
        }
        let mut transitions: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        let actual = prepared.actual(v);
        for i in 0..prepared.event_count() {
            let Some(prev) = prepared.prev_index(i) else { continue };
            if let (Some(a), Some(b)) = (actual[prev], actual[i]) {
                *transitions.entry((a, b)).or_default() += 1;
            }
        }
        for ((a, b), count) in transitions {
            if var.category(a) == Some(crate::MISSING_TOKEN) || var.category(b) == Some(crate::MISSING_TOKEN) {
                continue;
            }
            let test = Test::Transition(constant_of(prepared, v, a), constant_of(prepared, v, b));
            push(Operator::Transition, count, Condition::new(name, test));
        }
    }
    by_op.into_values().flat_map(|scored| top_conditions(scored, n_c)).collect()
}

/// The `n_c` most frequent conditions per operator, in operator order.
pub fn generate_conditions(log: &EventLog, n_c: usize, codec: &CodecConfig) -> Vec<Condition> {
    conditions_for(&PreparedLog::new(log, codec), n_c)
}

/// Local cost of coding `var` on the covered events with `update`: value
/// codes where the prediction holds, fallback codes elsewhere, plus the
/// update's own length.
fn local_cost(prepared: &PreparedLog, var: usize, covered: &[usize], update: &CompiledUpdate, length: f64) -> f64 {
    let counts = prepared.frequencies().counts(var);
    let schema = prepared.schema();
    let mut bits = length;
    for &i in covered {
        let Some(a) = prepared.actual(var)[i] else { continue };
        let prev = prepared.prev_index(i).and_then(|p| prepared.rows()[p][var].as_num());
        let pred = update.predict(prev, &schema[var]);
        bits += if pred.contains(a) {
            code_len(counts[a as usize], pred.mass(counts))
        } else {
            prepared.fallback_len(var, a)
        };
    }
    bits
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let r = ((q / 100.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[r.min(sorted.len() - 1)]
}

/// Most frequent values first; ties by value.
fn by_count<K: Ord + Clone>(counts: BTreeMap<K, u64>) -> Vec<K> {
    let mut v: Vec<(K, u64)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(k, _)| k).collect()
}

/// Totally ordered float key.
#[derive(Debug, Clone, Copy)]
struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

pub(crate) fn updates_for(prepared: &PreparedLog, c: &Condition, firing: &[bool], n_u: usize) -> Vec<UpdateRule> {
    let schema = prepared.schema();
    let p = prepared.config().precision;
    let covered: Vec<usize> = (0..firing.len()).filter(|&i| firing[i]).collect();
    let mut out = Vec::new();
    if covered.is_empty() {
        return out;
    }
    for (v, var) in schema.variables().iter().enumerate() {
        if var.name == c.variable {
            continue;
        }
        let actual = prepared.actual(v);
        let mut value_counts: BTreeMap<u32, u64> = BTreeMap::new();
        for &i in &covered {
            if let Some(a) = actual[i] {
                *value_counts.entry(a).or_default() += 1;
            }
        }
        if value_counts.is_empty() {
            continue;
        }
        let frequent = by_count(value_counts);
        let make = |u: Update| UpdateRule::new(&var.name, u);
        // ranks variants by local cost and keeps the best n_u
        let best_by_cost = |variants: Vec<Update>| -> Vec<UpdateRule> {
            let mut scored: Vec<(OrdF64, UpdateRule)> = variants
                .into_iter()
                .filter_map(|u| {
                    let rule = make(u);
                    let compiled = compile_update(&rule, schema).ok()?;
                    let len = update_length(&rule, schema, p).ok()?;
                    Some((OrdF64(local_cost(prepared, v, &covered, &compiled, len)), rule))
                })
                .collect();
            scored.sort_by_key(|a| a.0);
            scored.dedup_by(|a, b| a.1 == b.1);
            scored.into_iter().take(n_u).map(|(_, r)| r).collect()
        };

        for ty in UpdateType::for_kind(var.kind()) {
            match (ty, var.kind()) {
                (UpdateType::PointAssign, _) => {
                    out.extend(frequent.iter().take(n_u).map(|&a| make(Update::PointAssign(constant_of(prepared, v, a)))));
                }
                (UpdateType::SetMember, Kind::Categorical) => {
                    let variants = (2..=frequent.len().min(8))
                        .map(|k| {
                            Update::SetMember(
                                frequent[..k]
                                    .iter()
                                    .map(|&a| var.category(a).unwrap_or_default().to_string())
                                    .collect(),
                            )
                        })
                        .collect();
                    out.extend(best_by_cost(variants));
                }
                (UpdateType::IntervalAssign, Kind::Numerical) => {
                    let Some(h) = var.histogram() else { continue };
                    let mut xs: Vec<f64> = covered
                        .iter()
                        .filter_map(|&i| actual[i].map(|b| h.representative(b as usize)))
                        .collect();
                    xs.sort_by(f64::total_cmp);
                    let variants = [(0.0, 100.0), (5.0, 95.0)]
                        .iter()
                        .map(|&(lo, hi)| {
                            Update::IntervalAssign(round_sig(percentile(&xs, lo), p), round_sig(percentile(&xs, hi), p))
                        })
                        .filter(|u| matches!(u, Update::IntervalAssign(a, b) if a <= b))
                        .collect();
                    out.extend(best_by_cost(variants));
                }
                (UpdateType::RelativePoint | UpdateType::Multiplicative | UpdateType::RelativeInterval, Kind::Numerical) => {
                    let mut values = Vec::new();
                    for &i in &covered {
                        let Some(prev) = prepared.prev_index(i) else { continue };
                        let (Some(x), Some(px)) = (prepared.rows()[i][v].as_num(), prepared.rows()[prev][v].as_num()) else {
                            continue;
                        };
                        let value = match ty {
                            UpdateType::Multiplicative if px == 0.0 => continue,
                            UpdateType::Multiplicative => x / px,
                            _ => x - px,
                        };
                        values.push(round_sig(value, p));
                    }
                    if values.is_empty() {
                        continue;
                    }
                    if *ty == UpdateType::RelativeInterval {
                        values.sort_by(f64::total_cmp);
                        let variants = [(0.0, 100.0), (5.0, 95.0)]
                            .iter()
                            .map(|&(lo, hi)| Update::RelativeInterval(percentile(&values, lo), percentile(&values, hi)))
                            .collect();
                        out.extend(best_by_cost(variants));
                    } else {
                        let mut counts: BTreeMap<OrdF64, u64> = BTreeMap::new();
                        for x in values {
                            *counts.entry(OrdF64(x)).or_default() += 1;
                        }
                        out.extend(by_count(counts).into_iter().take(n_u).map(|OrdF64(x)| {
                            make(if *ty == UpdateType::Multiplicative {
                                Update::Multiplicative(x)
                            } else {
                                Update::RelativePoint(x)
                            })
                        }));
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// Candidate updates for condition `c`: the `n_u` best per update type and
/// target variable, restricted to the events where `c` fires.
pub fn generate_updates(log: &EventLog, c: &Condition, n_u: usize, codec: &CodecConfig) -> Result<Vec<UpdateRule>> {
    let prepared = PreparedLog::new(log, codec);
    let test = compile_test(c, prepared.schema(), codec.precision)?;
    let firing = prepared.firing(&test);
    if !firing.contains(&true) {
        return Err(Error::InvalidArgument(format!("condition `{c}` never fires")));
    }
    Ok(updates_for(&prepared, c, &firing, n_u))
}

/// Optimistic gain of adding `rule` alone: fallback bits saved on the
/// covered events, minus the estimated value stream and the rule's length.
fn estimated_gain(prepared: &PreparedLog, rule: &Rule, update: &CompiledUpdate, firing: &[bool]) -> Result<f64> {
    let schema = prepared.schema();
    let p = prepared.config().precision;
    let v = update.target;
    let support = firing.iter().filter(|&&f| f).count() as u64;
    let observed = prepared.frequencies().total(v);
    let mean_fallback = if observed == 0 {
        0.0
    } else {
        prepared.baseline()[v].l_cv / observed as f64
    };
    let counts = prepared.frequencies().counts(v);
    let var = &schema[v];
    let l_cv = if rule.update.update.is_relative() {
        // the prediction moves with the previous value: estimate it event by event
        let mut bits = 0.0;
        for i in (0..firing.len()).filter(|&i| firing[i]) {
            let prev = prepared.prev_index(i).and_then(|q| prepared.rows()[q][v].as_num());
            let pred = update.predict(prev, var);
            if !pred.is_empty() {
                bits += estimate_value_stream(&pred.codes(), counts, 1);
            }
        }
        bits
    } else {
        estimate_value_stream(&update.predict(None, var).codes(), counts, support)
    };
    let length = condition_length(&rule.condition, schema, p)? + update_length(&rule.update, schema, p)?;
    Ok(support as f64 * mean_fallback - l_cv - length)
}

/// `Ĺ(D, M ∪ {r}) = L(D, M) − ĝ(r)`.
pub fn estimate_total(log: &EventLog, model: &Model, rule: &Rule, codec: &CodecConfig) -> Result<f64> {
    let prepared = PreparedLog::new(log, codec);
    let current = prepared.score(model)?.total;
    let test = compile_test(&rule.condition, prepared.schema(), codec.precision)?;
    let update = compile_update(&rule.update, prepared.schema())?;
    let firing = prepared.firing(&test);
    Ok(current - estimated_gain(&prepared, rule, &update, &firing)?)
}

struct Entry {
    rule: Rule,
    condition: usize,
    update: CompiledUpdate,
    support: usize,
    gain: f64,
}

struct Search<'a> {
    prepared: &'a PreparedLog,
    firing: Vec<Vec<bool>>,
    entries: Vec<Entry>,
    /// Entry indices per target variable, best estimate first.
    queues: Vec<Vec<usize>>,
}

impl<'a> Search<'a> {
    fn new(prepared: &'a PreparedLog, config: &SearchConfig) -> Result<Self> {
        let schema = prepared.schema();
        let p = config.codec.precision;
        let conditions = conditions_for(prepared, config.n_c);
        let firing: Vec<Vec<bool>> = conditions
            .par_iter()
            .map(|c| compile_test(c, schema, p).map(|t| prepared.firing(&t)))
            .collect::<Result<_>>()?;
        let per_condition: Vec<Vec<Entry>> = conditions
            .par_iter()
            .enumerate()
            .map(|(ci, c)| -> Result<Vec<Entry>> {
                let mut entries = Vec::new();
                for u in updates_for(prepared, c, &firing[ci], config.n_u) {
                    let Ok(rule) = Rule::new(c.clone(), u) else { continue };
                    let update = compile_update(&rule.update, schema)?;
                    let gain = estimated_gain(prepared, &rule, &update, &firing[ci])?;
                    entries.push(Entry {
                        support: firing[ci].iter().filter(|&&f| f).count(),
                        rule,
                        condition: ci,
                        update,
                        gain,
                    });
                }
                Ok(entries)
            })
            .collect::<Result<_>>()?;
        let mut entries: Vec<Entry> = per_condition.into_iter().flatten().collect();
        entries.sort_by(|a, b| a.rule.cmp(&b.rule));
        entries.dedup_by(|a, b| a.rule == b.rule);
        let mut queues = vec![Vec::new(); schema.len()];
        for (i, e) in entries.iter().enumerate() {
            queues[e.update.target].push(i);
        }
        for q in &mut queues {
            q.sort_by(|&a, &b| {
                entries[b].gain.total_cmp(&entries[a].gain).then_with(|| entries[a].rule.cmp(&entries[b].rule))
            });
        }
        Ok(Self {
            prepared,
            firing,
            entries,
            queues,
        })
    }

    /// Exact score of `model_rules ∪ {extra}` where only `var`'s column
    /// changes.
    fn column_with(&self, var: usize, members: &[usize]) -> ColumnSummary {
        let rules: Vec<ColumnRule<'_>> = members
            .iter()
            .map(|&e| ColumnRule {
                firing: &self.firing[self.entries[e].condition],
                update: &self.entries[e].update,
            })
            .collect();
        self.prepared.column(var, &rules)
    }

    fn evaluate(&self, model: &Model, members: &[Vec<usize>], columns: &[ColumnSummary], e: usize) -> Result<f64> {
        let entry = &self.entries[e];
        let var = entry.update.target;
        let mut with: Vec<usize> = members[var].clone();
        with.push(e);
        with.sort_by(|&a, &b| self.entries[a].rule.cmp(&self.entries[b].rule));
        let mut cols = columns.to_vec();
        cols[var] = self.column_with(var, &with);
        let model = model.with(entry.rule.clone())?;
        let l_model = model_length(&model, self.prepared.schema(), self.prepared.config().precision)?;
        Ok(assemble(l_model, &cols, self.prepared.config()).total)
    }
}

/// Greedy search for a model with a short total encoding.
pub fn moody(log: &EventLog, config: &SearchConfig) -> Result<SearchOutcome> {
    if config.n_c == 0 || config.n_u == 0 || config.workers == 0 {
        return Err(Error::InvalidArgument("n_c, n_u and workers must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| run(log, config))
}

fn run(log: &EventLog, config: &SearchConfig) -> Result<SearchOutcome> {
    let prepared = PreparedLog::new(log, &config.codec);
    let schema = prepared.schema();
    let mut model = Model::default();
    let (mut columns, empty) = prepared.score_columns(&model)?;
    let mut current = empty.total;
    let mut trace = Vec::new();
    if log.trace_count() == 0 {
        return Ok(SearchOutcome {
            model,
            score: empty,
            empty_score: empty.total,
            trace,
            candidates: 0,
        });
    }
    let search = Search::new(&prepared, config)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); schema.len()];
    let batch = config.workers.max(1);

    let mut pass = 0;
    loop {
        if config.max_iterations.is_some_and(|cap| pass >= cap) {
            break;
        }
        pass += 1;
        let mut extended = false;
        for v in 0..schema.len() {
            let queue: Vec<usize> = search.queues[v]
                .iter()
                .copied()
                .filter(|&e| {
                    let r = &search.entries[e].rule;
                    !model.contains(r) && !model.would_cycle(r)
                })
                .collect();
            // best: (score, entry); the empty choice scores L(D, M)
            let mut best: Option<(f64, usize)> = None;
            let mut evaluated = 0;
            let mut next = 0;
            'queue: while next < queue.len() {
                let chunk = &queue[next..(next + batch).min(queue.len())];
                let scores: Vec<Result<f64>> = chunk
                    .par_iter()
                    .map(|&e| search.evaluate(&model, &members, &columns, e))
                    .collect();
                for (&e, score) in chunk.iter().zip(scores) {
                    let bound = best.map_or(current, |(s, _)| s);
                    if !config.exhaustive && current - search.entries[e].gain >= bound {
                        break 'queue;
                    }
                    next += 1;
                    evaluated += 1;
                    let score = score?;
                    let better = match best {
                        None => true,
                        Some((s, b)) => {
                            score < s || (score == s && search.entries[e].rule < search.entries[b].rule)
                        }
                    };
                    if better {
                        best = Some((score, e));
                    }
                }
            }
            if let Some((score, e)) = best {
                if score < current {
                    let entry = &search.entries[e];
                    model.insert(entry.rule.clone())?;
                    members[v].push(e);
                    members[v].sort_by(|&a, &b| search.entries[a].rule.cmp(&search.entries[b].rule));
                    columns[v] = search.column_with(v, &members[v]);
                    current = score;
                    extended = true;
                    trace.push(IterationRecord {
                        iteration: trace.len() + 1,
                        pass,
                        variable: schema[v].name.clone(),
                        rule: entry.rule.to_string(),
                        evaluated,
                        total: score,
                    });
                }
            }
        }
        if !extended {
            break;
        }
    }
    let score = prepared.score(&model)?;
    debug_assert_eq!(score.total, current);
    Ok(SearchOutcome {
        model,
        score,
        empty_score: empty.total,
        trace,
        candidates: search.entries.len(),
    })
}

/// Candidates for every variable with their support and estimate against
/// `model`, best estimate first.
pub fn candidates(log: &EventLog, model: &Model, config: &SearchConfig) -> Result<Vec<Candidate>> {
    let prepared = PreparedLog::new(log, &config.codec);
    let current = prepared.score(model)?.total;
    let search = Search::new(&prepared, config)?;
    let mut out: Vec<Candidate> = search
        .entries
        .iter()
        .map(|e| Candidate {
            rule: e.rule.clone(),
            support: e.support,
            estimate: current - e.gain,
        })
        .collect();
    out.sort_by(|a, b| a.estimate.total_cmp(&b.estimate).then_with(|| a.rule.cmp(&b.rule)));
    Ok(out)
}

#[cfg(test)]
mod tests;
