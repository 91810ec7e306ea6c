//! Rules resolved against a schema: variable indices, category codes and
//! histogram bins, evaluated in the scoring hot loops.

use super::{Condition, Constant, Model, Test, Update, UpdateRule};
use crate::error::{Error, Result};
use crate::log_model::{Domain, Schema, Value, VariableSchema};
use crate::mdl_codec::approx_eq_sig;
use crate::MISSING_TOKEN;

#[derive(Debug, Clone)]
pub(crate) enum TestKind {
    CatEq(Option<u32>),
    CatNe(Option<u32>),
    NumEq(f64),
    NumNe(f64),
    Le(f64),
    Ge(f64),
    CatTransition(Option<u32>, Option<u32>),
    NumTransition(f64, f64),
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledTest {
    pub var: usize,
    kind: TestKind,
    missing: Option<u32>,
    precision: u32,
}

impl CompiledTest {
    fn present(&self, v: Value) -> bool {
        match v {
            Value::Missing => false,
            Value::Cat(c) => Some(c) != self.missing,
            Value::Num(_) => true,
        }
    }

    pub fn fires(&self, prev: Option<&[Value]>, cur: &[Value]) -> bool {
        let v = cur[self.var];
        if !self.present(v) {
            return false;
        }
        let p = self.precision;
        match (&self.kind, v) {
            (TestKind::CatEq(c), Value::Cat(x)) => *c == Some(x),
            (TestKind::CatNe(c), Value::Cat(x)) => *c != Some(x),
            (TestKind::NumEq(a), Value::Num(x)) => approx_eq_sig(x, *a, p),
            (TestKind::NumNe(a), Value::Num(x)) => !approx_eq_sig(x, *a, p),
            (TestKind::Le(a), Value::Num(x)) => x <= *a,
            (TestKind::Ge(a), Value::Num(x)) => x >= *a,
            (TestKind::CatTransition(a, b), Value::Cat(x)) => {
                let Some(prev) = prev else { return false };
                let pv = prev[self.var];
                self.present(pv) && *b == Some(x) && pv.as_cat().is_some() && *a == pv.as_cat()
            }
            (TestKind::NumTransition(a, b), Value::Num(x)) => {
                let Some(Value::Num(px)) = prev.map(|p| p[self.var]) else {
                    return false;
                };
                approx_eq_sig(px, *a, p) && approx_eq_sig(x, *b, p)
            }
            _ => false,
        }
    }
}

fn cat_code(var: &VariableSchema, c: &Constant) -> Option<u32> {
    match c {
        Constant::Cat(s) => var.category_index(s),
        Constant::Num(x) => var.category_index(&format!("{x}")),
    }
}

fn num_const(var: &VariableSchema, c: &Constant) -> Result<f64> {
    match c {
        Constant::Num(x) => Ok(*x),
        Constant::Cat(s) => s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::KindMismatch {
            variable: var.name.clone(),
            reason: format!("categorical constant {s:?} on a numerical variable"),
        }),
    }
}

fn lookup<'a>(schema: &'a Schema, name: &str) -> Result<(usize, &'a VariableSchema)> {
    let i = schema.index_of(name).ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
    Ok((i, &schema[i]))
}

fn require_numerical(var: &VariableSchema, what: &str) -> Result<()> {
    match var.domain {
        Domain::Numerical(_) => Ok(()),
        Domain::Categorical(_) => Err(Error::KindMismatch {
            variable: var.name.clone(),
            reason: format!("{what} needs a numerical variable"),
        }),
    }
}

pub(crate) fn compile_test(c: &Condition, schema: &Schema, precision: u32) -> Result<CompiledTest> {
    let (idx, var) = lookup(schema, &c.variable)?;
    let categorical = matches!(var.domain, Domain::Categorical(_));
    let kind = match &c.test {
        Test::Eq(a) if categorical => TestKind::CatEq(cat_code(var, a)),
        Test::Ne(a) if categorical => TestKind::CatNe(cat_code(var, a)),
        Test::Eq(a) => TestKind::NumEq(num_const(var, a)?),
        Test::Ne(a) => TestKind::NumNe(num_const(var, a)?),
        Test::Le(a) => {
            require_numerical(var, "`<=`")?;
            TestKind::Le(*a)
        }
        Test::Ge(a) => {
            require_numerical(var, "`>=`")?;
            TestKind::Ge(*a)
        }
        Test::Transition(a, b) if categorical => TestKind::CatTransition(cat_code(var, a), cat_code(var, b)),
        Test::Transition(a, b) => TestKind::NumTransition(num_const(var, a)?, num_const(var, b)?),
    };
    Ok(CompiledTest {
        var: idx,
        kind,
        missing: var.category_index(MISSING_TOKEN),
        precision,
    })
}

#[derive(Debug, Clone)]
pub(crate) enum UpdateKind {
    Set(Vec<u32>),
    Single(Option<u32>),
    Bins(u32, u32),
    RelativePoint(f64),
    RelativeInterval(f64, f64),
    Multiplicative(f64),
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledUpdate {
    pub target: usize,
    pub kind: UpdateKind,
}

/// Codes admitted by an update at one event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Prediction<'a> {
    Empty,
    Single(u32),
    /// Inclusive range of bins.
    Range(u32, u32),
    Set(&'a [u32]),
}

impl Prediction<'_> {
    pub fn len(&self) -> usize {
        match self {
            Prediction::Empty => 0,
            Prediction::Single(_) => 1,
            Prediction::Range(a, b) => (b - a + 1) as usize,
            Prediction::Set(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, code: u32) -> bool {
        match self {
            Prediction::Empty => false,
            Prediction::Single(c) => *c == code,
            Prediction::Range(a, b) => (*a..=*b).contains(&code),
            Prediction::Set(s) => s.binary_search(&code).is_ok(),
        }
    }

    pub fn codes(&self) -> Vec<u32> {
        match self {
            Prediction::Empty => Vec::new(),
            Prediction::Single(c) => vec![*c],
            Prediction::Range(a, b) => (*a..=*b).collect(),
            Prediction::Set(s) => s.to_vec(),
        }
    }

    /// Sum of training counts over the admitted codes.
    pub fn mass(&self, counts: &[u64]) -> u64 {
        let at = |c: u32| counts.get(c as usize).copied().unwrap_or(0);
        match self {
            Prediction::Empty => 0,
            Prediction::Single(c) => at(*c),
            Prediction::Range(a, b) => (*a..=*b).map(at).sum(),
            Prediction::Set(s) => s.iter().map(|&c| at(c)).sum(),
        }
    }
}

impl CompiledUpdate {
    pub fn predict(&self, prev_value: Option<f64>, var: &VariableSchema) -> Prediction<'_> {
        let bin = |x: f64| var.histogram().map(|h| h.discretize(x) as u32);
        let shifted = |f: &dyn Fn(f64) -> f64| match prev_value {
            Some(p) if f(p).is_finite() => bin(f(p)).map_or(Prediction::Empty, Prediction::Single),
            _ => Prediction::Empty,
        };
        match &self.kind {
            UpdateKind::Set(s) if s.is_empty() => Prediction::Empty,
            UpdateKind::Set(s) => Prediction::Set(s),
            UpdateKind::Single(c) => c.map_or(Prediction::Empty, Prediction::Single),
            UpdateKind::Bins(a, b) => Prediction::Range(*a, *b),
            UpdateKind::RelativePoint(a) => shifted(&|p| p + a),
            UpdateKind::Multiplicative(a) => shifted(&|p| a * p),
            UpdateKind::RelativeInterval(a, b) => match (prev_value, var.histogram()) {
                (Some(p), Some(h)) if (p + a).is_finite() && (p + b).is_finite() => {
                    let r = h.overlapping(p + a, p + b);
                    Prediction::Range(*r.start() as u32, *r.end() as u32)
                }
                _ => Prediction::Empty,
            },
        }
    }
}

pub(crate) fn compile_update(u: &UpdateRule, schema: &Schema) -> Result<CompiledUpdate> {
    let (idx, var) = lookup(schema, &u.variable)?;
    let kind = match (&u.update, &var.domain) {
        (Update::SetMember(values), Domain::Categorical(_)) => {
            let mut codes: Vec<u32> = values.iter().filter_map(|v| var.category_index(v)).collect();
            codes.sort_unstable();
            codes.dedup();
            UpdateKind::Set(codes)
        }
        (Update::SetMember(_), Domain::Numerical(_)) => {
            return Err(Error::KindMismatch {
                variable: var.name.clone(),
                reason: "set updates need a categorical variable".into(),
            })
        }
        (Update::PointAssign(a), Domain::Categorical(_)) => UpdateKind::Single(cat_code(var, a)),
        (Update::PointAssign(a), Domain::Numerical(h)) => UpdateKind::Single(Some(h.discretize(num_const(var, a)?) as u32)),
        (Update::IntervalAssign(a, b), Domain::Numerical(h)) => {
            let r = h.overlapping(*a, *b);
            UpdateKind::Bins(*r.start() as u32, *r.end() as u32)
        }
        (Update::RelativePoint(a), Domain::Numerical(_)) => UpdateKind::RelativePoint(*a),
        (Update::RelativeInterval(a, b), Domain::Numerical(_)) => UpdateKind::RelativeInterval(*a, *b),
        (Update::Multiplicative(a), Domain::Numerical(_)) => UpdateKind::Multiplicative(*a),
        (other, Domain::Categorical(_)) => {
            return Err(Error::KindMismatch {
                variable: var.name.clone(),
                reason: format!("`{}` updates need a numerical variable", other.update_type().tag()),
            })
        }
    };
    Ok(CompiledUpdate { target: idx, kind })
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledRule {
    pub test: CompiledTest,
    pub update: CompiledUpdate,
}

impl CompiledRule {
    pub fn new(rule: &super::Rule, schema: &Schema, precision: u32) -> Result<Self> {
        Ok(Self {
            test: compile_test(&rule.condition, schema, precision)?,
            update: compile_update(&rule.update, schema)?,
        })
    }

    /// Prediction at `cur`, or `None` if the rule does not fire there.
    /// A relative update without a previous target value does not fire.
    pub fn apply<'a>(&'a self, schema: &Schema, prev: Option<&[Value]>, cur: &[Value]) -> Option<Prediction<'a>> {
        if !self.test.fires(prev, cur) {
            return None;
        }
        let t = self.update.target;
        let p = self.update.predict(prev.and_then(|p| p[t].as_num()), &schema[t]);
        (!p.is_empty()).then_some(p)
    }
}

/// A model resolved against a schema.
#[derive(Debug, Clone)]
pub(crate) struct CompiledModel {
    pub rules: Vec<CompiledRule>,
    /// Rule indices (canonical order) targeting each variable.
    pub by_target: Vec<Vec<usize>>,
    /// Variable decode order.
    pub order: Vec<usize>,
}

impl CompiledModel {
    pub fn new(model: &Model, schema: &Schema, precision: u32) -> Result<Self> {
        let order = super::variable_order(schema, model)?;
        let rules = model
            .rules()
            .iter()
            .map(|r| CompiledRule::new(r, schema, precision))
            .collect::<Result<Vec<_>>>()?;
        let mut by_target = vec![Vec::new(); schema.len()];
        for (i, r) in rules.iter().enumerate() {
            by_target[r.update.target].push(i);
        }
        Ok(Self { rules, by_target, order })
    }
}
