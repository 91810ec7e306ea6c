//! Event-log data model: schema, traces, ingestion and discretization.

mod csv_io;
mod histogram;
mod xes;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::MISSING_TOKEN;

pub use csv_io::{parse_csv, parse_csv_with_schema, serialize_csv, ParseOptions, SchemaSidecar, SidecarVariable};
pub use histogram::{Bin, Histogram, DEFAULT_BINS};
pub use xes::import_xes;

pub const ACTIVITY: &str = "activity";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Categorical,
    Numerical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// Distinct tokens in lexicographic order, `⊥` last when present.
    Categorical(Vec<String>),
    Numerical(Histogram),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableSchema {
    pub name: String,
    pub domain: Domain,
}

impl VariableSchema {
    pub fn kind(&self) -> Kind {
        match self.domain {
            Domain::Categorical(_) => Kind::Categorical,
            Domain::Numerical(_) => Kind::Numerical,
        }
    }

    /// Number of codable values: categories, or histogram bins.
    pub fn domain_size(&self) -> usize {
        match &self.domain {
            Domain::Categorical(values) => values.len(),
            Domain::Numerical(h) => h.len(),
        }
    }

    pub fn category_index(&self, token: &str) -> Option<u32> {
        match &self.domain {
            Domain::Categorical(values) => values.iter().position(|v| v == token).map(|i| i as u32),
            Domain::Numerical(_) => None,
        }
    }

    pub fn category(&self, index: u32) -> Option<&str> {
        match &self.domain {
            Domain::Categorical(values) => values.get(index as usize).map(String::as_str),
            Domain::Numerical(_) => None,
        }
    }

    pub fn histogram(&self) -> Option<&Histogram> {
        match &self.domain {
            Domain::Numerical(h) => Some(h),
            Domain::Categorical(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Schema {
    variables: Vec<VariableSchema>,
}

impl Schema {
    pub fn new(variables: Vec<VariableSchema>) -> Result<Self> {
        let mut seen = HashSet::new();
        for v in &variables {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidLog(format!("duplicate variable `{}`", v.name)));
            }
            if let Domain::Categorical(values) = &v.domain {
                if values.is_empty() {
                    return Err(Error::InvalidLog(format!("empty domain for `{}`", v.name)));
                }
                let distinct: HashSet<_> = values.iter().collect();
                if distinct.len() != values.len() {
                    return Err(Error::InvalidLog(format!("duplicate category in `{}`", v.name)));
                }
            }
        }
        Ok(Self { variables })
    }

    pub fn variables(&self) -> &[VariableSchema] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&VariableSchema> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.name.as_str())
    }
}

impl std::ops::Index<usize> for Schema {
    type Output = VariableSchema;

    fn index(&self, index: usize) -> &VariableSchema {
        &self.variables[index]
    }
}

/// A cell of an event. Categorical values are indices into the variable's
/// domain (a missing categorical value is the `⊥` category); numerical
/// values keep their raw reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Cat(u32),
    Num(f64),
    Missing,
}

impl Value {
    pub fn as_num(self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(x),
            _ => None,
        }
    }

    pub fn as_cat(self) -> Option<u32> {
        match self {
            Value::Cat(c) => Some(c),
            _ => None,
        }
    }
}

/// Values of one event, indexed by schema position.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub values: Vec<Value>,
}

impl Event {
    pub fn get(&self, schema: &Schema, name: &str) -> Option<Value> {
        schema.index_of(name).map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub id: String,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    schema: Schema,
    traces: Vec<Trace>,
}

impl EventLog {
    /// Validates and wraps `traces`. An empty list of traces is allowed.
    pub fn new(schema: Schema, traces: Vec<Trace>) -> Result<Self> {
        let mut ids = HashSet::new();
        for trace in &traces {
            if !ids.insert(trace.id.as_str()) {
                return Err(Error::InvalidLog(format!("duplicate trace id `{}`", trace.id)));
            }
            if trace.events.is_empty() {
                return Err(Error::InvalidLog(format!("trace `{}` is empty", trace.id)));
            }
            for event in &trace.events {
                if event.values.len() != schema.len() {
                    return Err(Error::InvalidLog(format!(
                        "event in `{}` has {} values, schema has {}",
                        trace.id,
                        event.values.len(),
                        schema.len()
                    )));
                }
                for (var, value) in schema.variables().iter().zip(&event.values) {
                    let ok = match (&var.domain, value) {
                        (Domain::Categorical(d), Value::Cat(c)) => (*c as usize) < d.len(),
                        (Domain::Numerical(_), Value::Num(x)) => x.is_finite(),
                        (Domain::Numerical(_), Value::Missing) => true,
                        _ => false,
                    };
                    if !ok {
                        return Err(Error::KindMismatch {
                            variable: var.name.clone(),
                            reason: format!("value {value:?} does not fit the domain"),
                        });
                    }
                }
            }
        }
        Ok(Self { schema, traces })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    /// `|D|`
    pub fn trace_count(&self) -> usize {
        self.traces.len()
    }

    /// `||D||`
    pub fn event_count(&self) -> usize {
        self.traces.iter().map(|t| t.events.len()).sum()
    }

    /// Events in log order with their predecessor in the same trace.
    pub fn events_with_prev(&self) -> impl Iterator<Item = (Option<&Event>, &Event)> {
        self.traces.iter().flat_map(|t| {
            t.events
                .iter()
                .enumerate()
                .map(move |(i, e)| (i.checked_sub(1).map(|p| &t.events[p]), e))
        })
    }

    /// Copy of this log with every numerical value replaced by its bin
    /// representative. The schema is unchanged.
    pub fn discretized(&self) -> EventLog {
        let traces = self
            .traces
            .iter()
            .map(|t| Trace {
                id: t.id.clone(),
                events: t
                    .events
                    .iter()
                    .map(|e| Event {
                        values: e
                            .values
                            .iter()
                            .zip(self.schema.variables())
                            .map(|(&v, var)| match (v, var.histogram()) {
                                (Value::Num(x), Some(h)) => Value::Num(h.representative(h.discretize(x))),
                                _ => v,
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        EventLog {
            schema: self.schema.clone(),
            traces,
        }
    }

    /// Keeps only the traces for which `keep` returns true.
    pub fn select_traces(&self, mut keep: impl FnMut(usize, &Trace) -> bool) -> EventLog {
        EventLog {
            schema: self.schema.clone(),
            traces: self
                .traces
                .iter()
                .enumerate()
                .filter(|(i, t)| keep(*i, t))
                .map(|(_, t)| t.clone())
                .collect(),
        }
    }

    /// Raw value of a cell as a [`RawValue`], resolving categories to tokens.
    pub fn raw(&self, var: usize, value: Value) -> RawValue {
        match value {
            Value::Cat(c) => {
                let token = self.schema[var].category(c).unwrap_or(MISSING_TOKEN);
                if token == MISSING_TOKEN {
                    RawValue::Missing
                } else {
                    RawValue::Text(token.to_string())
                }
            }
            Value::Num(x) => RawValue::Number(x),
            Value::Missing => RawValue::Missing,
        }
    }

    /// Rebuilds the log from its raw values with a fresh schema fit.
    pub fn to_builder(&self) -> LogBuilder {
        let mut b = LogBuilder::new(
            self.schema
                .variables()
                .iter()
                .map(|v| (v.name.clone(), v.kind()))
                .collect(),
        );
        for t in &self.traces {
            let events = t
                .events
                .iter()
                .map(|e| e.values.iter().enumerate().map(|(i, &v)| self.raw(i, v)).collect())
                .collect();
            b.push_trace(t.id.clone(), events);
        }
        b
    }
}

/// Uncoded cell value used while assembling a log.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Text(String),
    Number(f64),
    Missing,
}

impl RawValue {
    fn token(&self) -> Option<String> {
        match self {
            RawValue::Text(s) => Some(s.clone()),
            RawValue::Number(x) => Some(format!("{x}")),
            RawValue::Missing => None,
        }
    }
}

/// Collects raw traces and fits a schema over them.
#[derive(Debug, Clone)]
pub struct LogBuilder {
    columns: Vec<(String, Kind)>,
    traces: Vec<(String, Vec<Vec<RawValue>>)>,
}

impl LogBuilder {
    pub fn new(columns: Vec<(String, Kind)>) -> Self {
        Self {
            columns,
            traces: Vec::new(),
        }
    }

    pub fn columns(&self) -> &[(String, Kind)] {
        &self.columns
    }

    pub fn push_trace(&mut self, id: String, events: Vec<Vec<RawValue>>) {
        self.traces.push((id, events));
    }

    /// Fits categorical domains and `bins`-bin histograms over the collected
    /// values.
    pub fn build(self, bins: usize) -> Result<EventLog> {
        let mut variables = Vec::with_capacity(self.columns.len());
        for (col, (name, kind)) in self.columns.iter().enumerate() {
            let cells = self.traces.iter().flat_map(|(_, evs)| evs.iter().map(move |e| &e[col]));
            let domain = match kind {
                Kind::Categorical => {
                    let mut tokens = BTreeSet::new();
                    let mut missing = false;
                    for cell in cells {
                        match cell.token() {
                            Some(t) if t != MISSING_TOKEN => {
                                tokens.insert(t);
                            }
                            _ => missing = true,
                        }
                    }
                    let mut values: Vec<String> = tokens.into_iter().collect();
                    if missing || values.is_empty() {
                        values.push(MISSING_TOKEN.to_string());
                    }
                    Domain::Categorical(values)
                }
                Kind::Numerical => {
                    let mut nums = Vec::new();
                    for cell in cells {
                        match cell {
                            RawValue::Number(x) => nums.push(*x),
                            RawValue::Missing => {}
                            RawValue::Text(t) => {
                                return Err(Error::KindMismatch {
                                    variable: name.clone(),
                                    reason: format!("non-numeric value {t:?}"),
                                })
                            }
                        }
                    }
                    if nums.is_empty() {
                        return Err(Error::InvalidLog(format!("numerical variable `{name}` has no values")));
                    }
                    Domain::Numerical(Histogram::fit(&nums, bins)?)
                }
            };
            variables.push(VariableSchema {
                name: name.clone(),
                domain,
            });
        }
        let schema = Schema::new(variables)?;
        self.encode(schema)
    }

    /// Codes the collected values against an existing schema (e.g. the
    /// training schema for a test log). Unknown categories extend the
    /// categorical domains; histograms are reused as-is.
    pub fn build_with_schema(self, base: &Schema) -> Result<EventLog> {
        let mut variables = Vec::with_capacity(self.columns.len());
        for (col, (name, kind)) in self.columns.iter().enumerate() {
            let base_var = base.get(name).ok_or_else(|| Error::UnknownVariable(name.clone()))?;
            if base_var.kind() != *kind {
                return Err(Error::KindMismatch {
                    variable: name.clone(),
                    reason: "kind differs from the reference schema".into(),
                });
            }
            let mut var = base_var.clone();
            if let Domain::Categorical(values) = &mut var.domain {
                let known: HashSet<String> = values.iter().cloned().collect();
                let mut extra = BTreeSet::new();
                for (_, evs) in &self.traces {
                    for e in evs {
                        let t = e[col].token().unwrap_or_else(|| MISSING_TOKEN.to_string());
                        if !known.contains(&t) {
                            extra.insert(t);
                        }
                    }
                }
                values.extend(extra);
            }
            variables.push(var);
        }
        let schema = Schema::new(variables)?;
        self.encode(schema)
    }

    fn encode(self, schema: Schema) -> Result<EventLog> {
        let lookup: Vec<HashMap<&str, u32>> = schema
            .variables()
            .iter()
            .map(|v| match &v.domain {
                Domain::Categorical(values) => values.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect(),
                Domain::Numerical(_) => HashMap::new(),
            })
            .collect();
        let mut traces = Vec::with_capacity(self.traces.len());
        for (id, evs) in &self.traces {
            let mut events = Vec::with_capacity(evs.len());
            for raw in evs {
                let mut values = Vec::with_capacity(raw.len());
                for (col, cell) in raw.iter().enumerate() {
                    let var = &schema[col];
                    let v = match (&var.domain, cell) {
                        (Domain::Numerical(_), RawValue::Number(x)) => Value::Num(*x),
                        (Domain::Numerical(_), RawValue::Missing) => Value::Missing,
                        (Domain::Numerical(_), RawValue::Text(t)) => {
                            return Err(Error::KindMismatch {
                                variable: var.name.clone(),
                                reason: format!("non-numeric value {t:?}"),
                            })
                        }
                        (Domain::Categorical(_), cell) => {
                            let t = cell.token().unwrap_or_else(|| MISSING_TOKEN.to_string());
                            Value::Cat(lookup[col][t.as_str()])
                        }
                    };
                    values.push(v);
                }
                events.push(Event { values });
            }
            traces.push(Trace { id: id.clone(), events });
        }
        EventLog::new(schema, traces)
    }
}

/// Per-variable value counts over a log: categories by domain index,
/// numerical values by bin. Missing numerical values are not counted.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    counts: Vec<Vec<u64>>,
    totals: Vec<u64>,
}

impl FrequencyTable {
    pub fn from_log(log: &EventLog) -> Self {
        let schema = log.schema();
        let mut counts: Vec<Vec<u64>> = schema.variables().iter().map(|v| vec![0; v.domain_size()]).collect();
        for (_, event) in log.events_with_prev() {
            for (i, value) in event.values.iter().enumerate() {
                if let Some(code) = code_of(&schema[i], *value) {
                    counts[i][code as usize] += 1;
                }
            }
        }
        let totals = counts.iter().map(|c| c.iter().sum()).collect();
        Self { counts, totals }
    }

    pub fn count(&self, var: usize, code: u32) -> u64 {
        self.counts[var].get(code as usize).copied().unwrap_or(0)
    }

    pub fn counts(&self, var: usize) -> &[u64] {
        &self.counts[var]
    }

    /// Number of non-missing observations of `var`.
    pub fn total(&self, var: usize) -> u64 {
        self.totals[var]
    }

    /// Sum of counts over a set of codes.
    pub fn mass(&self, var: usize, codes: &[u32]) -> u64 {
        codes.iter().map(|&c| self.count(var, c)).sum()
    }
}

/// Frequency code of a cell: category index, bin index, or `None` when a
/// numerical value is missing.
pub fn code_of(var: &VariableSchema, value: Value) -> Option<u32> {
    match (&var.domain, value) {
        (Domain::Categorical(_), Value::Cat(c)) => Some(c),
        (Domain::Numerical(h), Value::Num(x)) => Some(h.discretize(x) as u32),
        _ => None,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn purchase_csv() -> &'static str {
        "trace_id,event_index,activity,product,amount,vendor\n\
         t1,1,buy,bag,20,C\n\
         t1,2,buy,bag,10,C\n\
         t1,3,buy,pants,10,A\n\
         t1,4,buy,pants,20,A\n"
    }

    #[test]
    fn purchase_frequencies() {
        let log = parse_csv(purchase_csv(), &ParseOptions::default()).unwrap();
        let freq = FrequencyTable::from_log(&log);
        let schema = log.schema();
        let vendor = schema.index_of("vendor").unwrap();
        let product = schema.index_of("product").unwrap();
        let c = schema[vendor].category_index("C").unwrap();
        let a = schema[vendor].category_index("A").unwrap();
        assert_eq!((freq.count(vendor, c), freq.count(vendor, a)), (2, 2));
        let bag = schema[product].category_index("bag").unwrap();
        let pants = schema[product].category_index("pants").unwrap();
        assert_eq!((freq.count(product, bag), freq.count(product, pants)), (2, 2));
        for v in 0..schema.len() {
            assert_eq!(freq.total(v), 4);
        }
    }

    #[test]
    fn all_missing_numeric_column_is_empty_entry() {
        let csv = "trace_id,event_index,activity,x,y\nt,0,a,1,\nt,1,a,2,\n";
        let sidecar = SchemaSidecar {
            variables: vec![
                SidecarVariable { name: "x".into(), kind: Kind::Numerical },
                SidecarVariable { name: "y".into(), kind: Kind::Numerical },
            ],
        };
        assert!(parse_csv(csv, &ParseOptions { schema: Some(sidecar), ..Default::default() }).is_err());
        // inferred: y has no numbers, becomes categorical with only ⊥
        let log = parse_csv(csv, &ParseOptions::default()).unwrap();
        let y = log.schema().get("y").unwrap();
        assert_eq!(y.kind(), Kind::Categorical);
        assert_eq!(y.domain_size(), 1);
    }

    #[test]
    fn discretized_keeps_bins() {
        let log = parse_csv(purchase_csv(), &ParseOptions::default()).unwrap();
        let d = log.discretized();
        assert_eq!(FrequencyTable::from_log(&d), FrequencyTable::from_log(&log));
    }

    #[test]
    fn builder_with_schema_extends_categories() {
        let train = parse_csv(purchase_csv(), &ParseOptions::default()).unwrap();
        let test_csv = "trace_id,event_index,activity,product,amount,vendor\nq,0,buy,shirt,15,B\n";
        let b = csv_io::read_builder(test_csv, &ParseOptions::default(), Some(train.schema())).unwrap();
        let test = b.build_with_schema(train.schema()).unwrap();
        let vendor = test.schema().get("vendor").unwrap();
        assert!(vendor.category_index("B").is_some());
        assert_eq!(test.schema().get("amount"), train.schema().get("amount"));
    }
}
