//! Rule language: conditions, update rules, rules and acyclic models.

pub(crate) mod compiled;
mod dag;
mod json;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log_model::{Event, Kind, Schema};

pub use dag::count_dags;
pub use json::{ModelJson, RuleJson};

/// A rule constant: a category token or a real number.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Constant {
    Num(f64),
    Cat(String),
}

impl Constant {
    pub fn key_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Constant::Cat(a), Constant::Cat(b)) => a.cmp(b),
            (Constant::Num(a), Constant::Num(b)) => a.total_cmp(b),
            (Constant::Cat(_), Constant::Num(_)) => Ordering::Less,
            (Constant::Num(_), Constant::Cat(_)) => Ordering::Greater,
        }
    }
}

impl PartialEq for Constant {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Num(x) => write!(f, "{x}"),
            Constant::Cat(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "->")]
    Transition,
}

impl Operator {
    pub const ALL: [Operator; 5] = [Operator::Eq, Operator::Ne, Operator::Le, Operator::Ge, Operator::Transition];

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Eq => "=",
            Operator::Ne => "!=",
            Operator::Le => "<=",
            Operator::Ge => ">=",
            Operator::Transition => "->",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "=" | "==" => Operator::Eq,
            "!=" | "≠" => Operator::Ne,
            "<=" | "≤" => Operator::Le,
            ">=" | "≥" => Operator::Ge,
            "->" | "→" => Operator::Transition,
            _ => return None,
        })
    }
}

/// The test a condition applies to its variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Test {
    Eq(Constant),
    Ne(Constant),
    Le(f64),
    Ge(f64),
    /// Previous event had the first value, current event has the second.
    Transition(Constant, Constant),
}

impl Test {
    pub fn operator(&self) -> Operator {
        match self {
            Test::Eq(_) => Operator::Eq,
            Test::Ne(_) => Operator::Ne,
            Test::Le(_) => Operator::Le,
            Test::Ge(_) => Operator::Ge,
            Test::Transition(..) => Operator::Transition,
        }
    }

    pub fn constants(&self) -> Vec<Constant> {
        match self {
            Test::Eq(c) | Test::Ne(c) => vec![c.clone()],
            Test::Le(x) | Test::Ge(x) => vec![Constant::Num(*x)],
            Test::Transition(a, b) => vec![a.clone(), b.clone()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub variable: String,
    pub test: Test,
}

impl Condition {
    pub fn new(variable: impl Into<String>, test: Test) -> Self {
        Self {
            variable: variable.into(),
            test,
        }
    }

    /// Whether the condition holds at `cur` (with predecessor `prev`).
    ///
    /// Numerical equality compares at `precision` significant digits.
    pub fn fires(&self, schema: &Schema, prev: Option<&Event>, cur: &Event, precision: u32) -> Result<bool> {
        let test = compiled::compile_test(self, schema, precision)?;
        Ok(test.fires(prev.map(|e| e.values.as_slice()), &cur.values))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = &self.variable;
        match &self.test {
            Test::Eq(c) => write!(f, "{v} = {c}"),
            Test::Ne(c) => write!(f, "{v} ≠ {c}"),
            Test::Le(x) => write!(f, "{v} ≤ {x}"),
            Test::Ge(x) => write!(f, "{v} ≥ {x}"),
            Test::Transition(a, b) => write!(f, "{v}: {a} → {b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UpdateType {
    SetMember,
    PointAssign,
    IntervalAssign,
    RelativePoint,
    RelativeInterval,
    Multiplicative,
}

impl UpdateType {
    pub const ALL: [UpdateType; 6] = [
        UpdateType::SetMember,
        UpdateType::PointAssign,
        UpdateType::IntervalAssign,
        UpdateType::RelativePoint,
        UpdateType::RelativeInterval,
        UpdateType::Multiplicative,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            UpdateType::SetMember => "set",
            UpdateType::PointAssign => "point",
            UpdateType::IntervalAssign => "interval",
            UpdateType::RelativePoint => "rel_point",
            UpdateType::RelativeInterval => "rel_interval",
            UpdateType::Multiplicative => "mul",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        UpdateType::ALL.into_iter().find(|t| t.tag() == s)
    }

    /// Update types applicable to a variable of the given kind.
    pub fn for_kind(kind: Kind) -> &'static [UpdateType] {
        match kind {
            Kind::Categorical => &[UpdateType::SetMember, UpdateType::PointAssign],
            Kind::Numerical => &[
                UpdateType::PointAssign,
                UpdateType::IntervalAssign,
                UpdateType::RelativePoint,
                UpdateType::RelativeInterval,
                UpdateType::Multiplicative,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Update {
    /// `v ∈ {α, β, …}`; kept sorted and duplicate-free.
    SetMember(Vec<String>),
    /// `v = α`
    PointAssign(Constant),
    /// `v ∈ [α, β]`
    IntervalAssign(f64, f64),
    /// `v = v + α`
    RelativePoint(f64),
    /// `v = v + [α, β]`
    RelativeInterval(f64, f64),
    /// `v = α · v`
    Multiplicative(f64),
}

impl Update {
    pub fn update_type(&self) -> UpdateType {
        match self {
            Update::SetMember(_) => UpdateType::SetMember,
            Update::PointAssign(_) => UpdateType::PointAssign,
            Update::IntervalAssign(..) => UpdateType::IntervalAssign,
            Update::RelativePoint(_) => UpdateType::RelativePoint,
            Update::RelativeInterval(..) => UpdateType::RelativeInterval,
            Update::Multiplicative(_) => UpdateType::Multiplicative,
        }
    }

    pub fn constants(&self) -> Vec<Constant> {
        match self {
            Update::SetMember(s) => s.iter().cloned().map(Constant::Cat).collect(),
            Update::PointAssign(c) => vec![c.clone()],
            Update::IntervalAssign(a, b) | Update::RelativeInterval(a, b) => vec![Constant::Num(*a), Constant::Num(*b)],
            Update::RelativePoint(a) | Update::Multiplicative(a) => vec![Constant::Num(*a)],
        }
    }

    /// Whether the update reads the target's previous value.
    pub fn is_relative(&self) -> bool {
        matches!(
            self,
            Update::RelativePoint(_) | Update::RelativeInterval(..) | Update::Multiplicative(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRule {
    pub variable: String,
    pub update: Update,
}

impl UpdateRule {
    pub fn new(variable: impl Into<String>, update: Update) -> Self {
        Self {
            variable: variable.into(),
            update,
        }
    }

    /// Concrete codes (categories or bins) the update admits at an event
    /// whose predecessor is `prev`. Empty when a relative update has no
    /// previous value to work from.
    pub fn predicted_values(&self, schema: &Schema, prev: Option<&Event>) -> Result<Vec<u32>> {
        let target = schema.index_of(&self.variable).ok_or_else(|| Error::UnknownVariable(self.variable.clone()))?;
        let update = compiled::compile_update(self, schema)?;
        let prev_value = prev.and_then(|e| e.values[target].as_num());
        Ok(update.predict(prev_value, &schema[target]).codes())
    }
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = &self.variable;
        match &self.update {
            Update::SetMember(s) => write!(f, "{v} ∈ {{{}}}", s.join(", ")),
            Update::PointAssign(c) => write!(f, "{v} = {c}"),
            Update::IntervalAssign(a, b) => write!(f, "{v} ∈ [{a}, {b}]"),
            Update::RelativePoint(a) => write!(f, "{v} = {v} + {a}"),
            Update::RelativeInterval(a, b) => write!(f, "{v} = {v} + [{a}, {b}]"),
            Update::Multiplicative(a) => write!(f, "{v} = {a} · {v}"),
        }
    }
}

/// `IF condition THEN update`.
#[derive(Debug, Clone)]
pub struct Rule {
    pub condition: Condition,
    pub update: UpdateRule,
}

impl Rule {
    /// Builds a rule, normalizing set updates and rejecting self-dependencies,
    /// empty sets and reversed intervals.
    pub fn new(condition: Condition, update: UpdateRule) -> Result<Self> {
        if condition.variable == update.variable {
            return Err(Error::InvalidRule(format!(
                "condition and update both on `{}`",
                condition.variable
            )));
        }
        let mut update = update;
        match &mut update.update {
            Update::SetMember(values) => {
                values.sort();
                values.dedup();
                if values.is_empty() {
                    return Err(Error::InvalidRule("empty value set".into()));
                }
            }
            Update::IntervalAssign(a, b) | Update::RelativeInterval(a, b) if *a > *b => {
                return Err(Error::InvalidRule(format!("interval [{a}, {b}] is reversed")));
            }
            _ => {}
        }
        for c in condition.test.constants().iter().chain(&update.update.constants()) {
            if let Constant::Num(x) = c {
                if !x.is_finite() {
                    return Err(Error::InvalidRule(format!("non-finite constant {x}")));
                }
            }
        }
        Ok(Self { condition, update })
    }

    /// Checks variable names and kinds against a schema.
    pub fn check(&self, schema: &Schema) -> Result<()> {
        compiled::compile_test(&self.condition, schema, crate::mdl_codec::DEFAULT_PRECISION)?;
        compiled::compile_update(&self.update, schema)?;
        Ok(())
    }

    /// Dependency edge `(condition variable, update variable)`.
    pub fn edge(&self) -> (&str, &str) {
        (&self.condition.variable, &self.update.variable)
    }

    /// Number of rule terms: one condition literal and one update literal.
    pub fn terms(&self) -> usize {
        2
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        self.update
            .variable
            .cmp(&other.update.variable)
            .then_with(|| self.condition.variable.cmp(&other.condition.variable))
            .then_with(|| self.condition.test.operator().cmp(&other.condition.test.operator()))
            .then_with(|| self.update.update.update_type().cmp(&other.update.update.update_type()))
            .then_with(|| {
                let a = self.condition.test.constants().into_iter().chain(self.update.update.constants());
                let b = other.condition.test.constants().into_iter().chain(other.update.update.constants());
                cmp_constants(a, b)
            })
    }
}

fn cmp_constants(mut a: impl Iterator<Item = Constant>, mut b: impl Iterator<Item = Constant>) -> Ordering {
    loop {
        match (a.next(), b.next()) {
            (None, None) => return Ordering::Equal,
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(x), Some(y)) => match x.key_cmp(&y) {
                Ordering::Equal => continue,
                o => return o,
            },
        }
    }
}

/// Rules are ordered by the canonical key `(update variable, condition
/// variable, operator, update type, constants)`.
impl Ord for Rule {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

impl PartialOrd for Rule {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Rule {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Rule {}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IF {} THEN {}", self.condition, self.update)
    }
}

/// Unordered, acyclic set of rules, stored in canonical key order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Model {
    rules: Vec<Rule>,
}

impl Model {
    pub fn from_rules(rules: impl IntoIterator<Item = Rule>) -> Result<Self> {
        let mut model = Model::default();
        for r in rules {
            model.insert(r)?;
        }
        Ok(model)
    }

    /// Adds a rule, rejecting exact duplicates and rules whose dependency
    /// edge would close a cycle.
    pub fn insert(&mut self, rule: Rule) -> Result<()> {
        if self.would_cycle(&rule) {
            return Err(Error::Cycle(rule.to_string()));
        }
        match self.rules.binary_search(&rule) {
            Ok(_) => Err(Error::InvalidRule(format!("duplicate rule {rule}"))),
            Err(pos) => {
                self.rules.insert(pos, rule);
                Ok(())
            }
        }
    }

    /// Copy of the model extended by `rule`.
    pub fn with(&self, rule: Rule) -> Result<Self> {
        let mut m = self.clone();
        m.insert(rule)?;
        Ok(m)
    }

    pub fn contains(&self, rule: &Rule) -> bool {
        self.rules.binary_search(rule).is_ok()
    }

    /// Whether adding `rule` would make the dependency graph cyclic, i.e.
    /// whether its update variable already reaches its condition variable.
    pub fn would_cycle(&self, rule: &Rule) -> bool {
        let (from, to) = rule.edge();
        if from == to {
            return true;
        }
        self.dependency_graph().reaches(to, from)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn dependency_graph(&self) -> DependencyGraph {
        DependencyGraph::from_model(self)
    }

    /// Total number of rule terms (two per rule).
    pub fn rule_term_count(&self) -> usize {
        self.rules.iter().map(Rule::terms).sum()
    }

    pub fn check(&self, schema: &Schema) -> Result<()> {
        self.rules.iter().try_for_each(|r| r.check(schema))
    }

    /// One `IF … THEN …` line per rule.
    pub fn pretty(&self) -> String {
        self.rules.iter().map(|r| format!("{r}\n")).collect()
    }
}

/// Variables as nodes, one edge per distinct (condition, update) pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependencyGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
}

impl DependencyGraph {
    pub fn from_model(model: &Model) -> Self {
        let mut g = DependencyGraph::default();
        for r in model.rules() {
            let (a, b) = r.edge();
            g.add_edge(a, b);
        }
        g
    }

    pub fn add_edge(&mut self, from: &str, to: &str) {
        self.nodes.insert(from.to_string());
        self.nodes.insert(to.to_string());
        self.edges.insert((from.to_string(), to.to_string()));
    }

    fn successors<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a str> {
        self.edges
            .range((node.to_string(), String::new())..)
            .take_while(move |(a, _)| a == node)
            .map(|(_, b)| b.as_str())
    }

    /// Whether there is a directed path from `from` to `to`.
    pub fn reaches(&self, from: &str, to: &str) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.successors(n));
            }
        }
        false
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order(|a, b| a.cmp(b)).is_some()
    }

    /// Kahn's algorithm; among ready nodes the smallest by `priority` goes
    /// first. `None` when the graph has a cycle.
    pub fn topological_order(&self, priority: impl Fn(&str, &str) -> Ordering) -> Option<Vec<String>> {
        let mut indeg: std::collections::BTreeMap<&str, usize> = self.nodes.iter().map(|n| (n.as_str(), 0)).collect();
        for (a, b) in &self.edges {
            if a == b {
                return None;
            }
            *indeg.get_mut(b.as_str())? += 1;
        }
        let mut ready: Vec<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while !ready.is_empty() {
            let (pos, _) = ready
                .iter()
                .enumerate()
                .min_by(|a, b| priority(a.1, b.1))
                .expect("non-empty");
            let n = ready.swap_remove(pos);
            order.push(n.to_string());
            for s in self.successors(n) {
                let d = indeg.get_mut(s)?;
                *d -= 1;
                if *d == 0 {
                    ready.push(s);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }
}

/// Variable indices in decode order: a topological order of the model's
/// dependency graph over all schema variables, ties broken by schema order.
pub fn variable_order(schema: &Schema, model: &Model) -> Result<Vec<usize>> {
    let mut g = model.dependency_graph();
    for name in schema.names() {
        g.nodes.insert(name.to_string());
    }
    for n in &g.nodes {
        if schema.index_of(n).is_none() {
            return Err(Error::UnknownVariable(n.clone()));
        }
    }
    let pos = |n: &str| schema.index_of(n).unwrap_or(usize::MAX);
    let order = g
        .topological_order(|a, b| pos(a).cmp(&pos(b)))
        .ok_or_else(|| Error::Cycle("model dependency graph".into()))?;
    Ok(order.iter().map(|n| pos(n)).collect())
}

#[cfg(test)]
mod tests;
