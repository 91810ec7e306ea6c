//! Synthetic ground-truth models, event logs generated from them, and swap
//! noise.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log_model::{EventLog, Kind, LogBuilder, RawValue, Trace, ACTIVITY};
use crate::mdl_codec::approx_eq_sig;
use crate::rule_model::{variable_order, Condition, Constant, Model, Operator, Rule, Test, Update, UpdateRule, UpdateType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    CategoricalOnly,
    NumericalOnly,
    #[default]
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_rules: usize,
    /// Categorical variables, counting `activity`.
    pub n_cat: usize,
    pub n_num: usize,
    pub n_events: usize,
    pub condition_ops: Vec<Operator>,
    /// Inclusive range of trace lengths.
    pub trace_len: (usize, usize),
    pub cat_domain_size: usize,
    pub target_kind: TargetKind,
    pub bins: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_rules: 5,
            n_cat: 2,
            n_num: 2,
            n_events: 2000,
            condition_ops: vec![Operator::Eq, Operator::Le, Operator::Ge],
            trace_len: (5, 15),
            cat_domain_size: 5,
            target_kind: TargetKind::Mixed,
            bins: crate::log_model::DEFAULT_BINS,
        }
    }
}

/// Base values of numerical variables are uniform on this range.
const NUM_RANGE: (f64, f64) = (0.0, 100.0);
const MAX_ATTEMPTS: usize = 10_000;

struct Variables {
    names: Vec<String>,
    kinds: Vec<Kind>,
    /// Category tokens per categorical variable.
    tokens: Vec<Vec<String>>,
}

impl Variables {
    fn new(config: &SynthConfig) -> Self {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        let mut tokens = Vec::new();
        for i in 0..config.n_cat {
            let name = if i == 0 { ACTIVITY.to_string() } else { format!("cat{i}") };
            let prefix = if i == 0 { "a".to_string() } else { format!("c{i}_") };
            tokens.push((0..config.cat_domain_size).map(|k| format!("{prefix}{k}")).collect());
            names.push(name);
            kinds.push(Kind::Categorical);
        }
        for i in 1..=config.n_num {
            names.push(format!("num{i}"));
            kinds.push(Kind::Numerical);
            tokens.push(Vec::new());
        }
        Self { names, kinds, tokens }
    }

    fn of_kind(&self, kind: Kind) -> Vec<usize> {
        (0..self.names.len()).filter(|&i| self.kinds[i] == kind).collect()
    }
}

fn validate(config: &SynthConfig) -> Result<()> {
    let bad = |m: &str| Err(Error::Infeasible(m.to_string()));
    if config.n_rules == 0 {
        return bad("at least one rule is required");
    }
    if config.n_cat + config.n_num < 2 {
        return bad("rules need at least two variables");
    }
    if config.n_cat > 0 && config.cat_domain_size < 2 {
        return bad("categorical domains need at least two values");
    }
    if config.trace_len.0 < 2 || config.trace_len.0 > config.trace_len.1 {
        return bad("trace lengths must satisfy 2 <= min <= max");
    }
    if config.condition_ops.is_empty() {
        return bad("no condition operators");
    }
    match config.target_kind {
        TargetKind::NumericalOnly if config.n_num == 0 => bad("numerical targets need a numerical variable"),
        TargetKind::CategoricalOnly if config.n_cat == 0 => bad("categorical targets need a categorical variable"),
        _ => Ok(()),
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn sample_condition(rng: &mut ChaCha8Rng, vars: &Variables, ops: &[Operator]) -> Option<Condition> {
    let v = rng.random_range(0..vars.names.len());
    let op = ops[rng.random_range(0..ops.len())];
    let name = &vars.names[v];
    let pick = |rng: &mut ChaCha8Rng| Constant::Cat(vars.tokens[v][rng.random_range(0..vars.tokens[v].len())].clone());
    // thresholds away from the extremes so conditions have real support
    let threshold = |rng: &mut ChaCha8Rng| round1(rng.random_range(25.0..75.0));
    let test = match (vars.kinds[v], op) {
        (Kind::Categorical, Operator::Eq) => Test::Eq(pick(rng)),
        (Kind::Categorical, Operator::Ne) => Test::Ne(pick(rng)),
        (Kind::Categorical, Operator::Transition) => Test::Transition(pick(rng), pick(rng)),
        (Kind::Numerical, Operator::Le) => Test::Le(threshold(rng)),
        (Kind::Numerical, Operator::Ge) => Test::Ge(threshold(rng)),
        // equality on a continuous variable would almost never fire
        _ => return None,
    };
    Some(Condition::new(name, test))
}

fn sample_update(rng: &mut ChaCha8Rng, vars: &Variables, v: usize) -> Update {
    let types = UpdateType::for_kind(vars.kinds[v]);
    let tokens = &vars.tokens[v];
    match types[rng.random_range(0..types.len())] {
        UpdateType::SetMember => {
            let idx = sample(rng, tokens.len(), 2);
            Update::SetMember(idx.iter().map(|i| tokens[i].clone()).collect())
        }
        UpdateType::PointAssign if vars.kinds[v] == Kind::Categorical => {
            Update::PointAssign(Constant::Cat(tokens[rng.random_range(0..tokens.len())].clone()))
        }
        UpdateType::PointAssign => Update::PointAssign(Constant::Num(round1(rng.random_range(NUM_RANGE.0..NUM_RANGE.1)))),
        UpdateType::IntervalAssign => {
            let lo = round1(rng.random_range(NUM_RANGE.0..NUM_RANGE.1 - 10.0));
            Update::IntervalAssign(lo, round1(lo + rng.random_range(2.0..10.0)))
        }
        UpdateType::RelativePoint => Update::RelativePoint(round1(rng.random_range(-10.0..10.0))),
        UpdateType::RelativeInterval => {
            let lo = round1(rng.random_range(-10.0..5.0));
            Update::RelativeInterval(lo, round1(lo + rng.random_range(1.0..5.0)))
        }
        UpdateType::Multiplicative => Update::Multiplicative(round1(rng.random_range(0.5..1.5))),
    }
}

/// Samples an acyclic model of `n_rules` distinct rules.
pub fn sample_ground_truth(config: &SynthConfig) -> Result<Model> {
    validate(config)?;
    let vars = Variables::new(config);
    let targets = match config.target_kind {
        TargetKind::CategoricalOnly => vars.of_kind(Kind::Categorical),
        TargetKind::NumericalOnly => vars.of_kind(Kind::Numerical),
        TargetKind::Mixed => (0..vars.names.len()).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::default();
    let mut attempts = 0;
    while model.len() < config.n_rules {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::Infeasible(format!(
                "no acyclic model with {} distinct rules found after {MAX_ATTEMPTS} attempts",
                config.n_rules
            )));
        }
        let Some(condition) = sample_condition(&mut rng, &vars, &config.condition_ops) else {
            continue;
        };
        let t = targets[rng.random_range(0..targets.len())];
        if vars.names[t] == condition.variable {
            continue;
        }
        let update = UpdateRule::new(&vars.names[t], sample_update(&mut rng, &vars, t));
        let Ok(rule) = Rule::new(condition, update) else { continue };
        if !model.contains(&rule) && !model.would_cycle(&rule) {
            model.insert(rule)?;
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cell {
    Cat(usize),
    Num(f64),
}

impl Cell {
    fn num(self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(x),
            Cell::Cat(_) => None,
        }
    }
}

struct Gen<'a> {
    vars: &'a Variables,
    weights: Vec<Vec<f64>>,
}

impl Gen<'_> {
    fn index(&self, name: &str) -> usize {
        self.vars.names.iter().position(|n| n == name).expect("rule variables come from the generator")
    }

    fn token(&self, v: usize, c: &Constant) -> Option<usize> {
        match c {
            Constant::Cat(s) => self.vars.tokens[v].iter().position(|t| t == s),
            Constant::Num(_) => None,
        }
    }

    fn fires(&self, c: &Condition, prev: Option<&[Cell]>, cur: &[Cell]) -> bool {
        let v = self.index(&c.variable);
        let eq = |cell: Cell, k: &Constant| match (cell, k) {
            (Cell::Cat(x), _) => Some(x) == self.token(v, k),
            (Cell::Num(x), Constant::Num(a)) => approx_eq_sig(x, *a, crate::mdl_codec::DEFAULT_PRECISION),
            _ => false,
        };
        match &c.test {
            Test::Eq(k) => eq(cur[v], k),
            Test::Ne(k) => !eq(cur[v], k),
            Test::Le(a) => cur[v].num().is_some_and(|x| x <= *a),
            Test::Ge(a) => cur[v].num().is_some_and(|x| x >= *a),
            Test::Transition(a, b) => prev.is_some_and(|p| eq(p[v], a) && eq(cur[v], b)),
        }
    }

    fn apply(&self, rng: &mut ChaCha8Rng, u: &UpdateRule, prev: Option<&[Cell]>) -> Option<Cell> {
        let v = self.index(&u.variable);
        let prev_value = prev.and_then(|p| p[v].num());
        Some(match &u.update {
            Update::SetMember(s) => {
                let pick = &s[rng.random_range(0..s.len())];
                Cell::Cat(self.token(v, &Constant::Cat(pick.clone()))?)
            }
            Update::PointAssign(Constant::Num(a)) => Cell::Num(*a),
            Update::PointAssign(k) => Cell::Cat(self.token(v, k)?),
            Update::IntervalAssign(a, b) => Cell::Num(round1(rng.random_range(*a..=*b))),
            Update::RelativePoint(a) => Cell::Num(round1(prev_value? + a)),
            Update::RelativeInterval(a, b) => Cell::Num(round1(prev_value? + rng.random_range(*a..=*b))),
            Update::Multiplicative(a) => Cell::Num(round1(prev_value? * a)),
        })
    }

    fn base(&self, rng: &mut ChaCha8Rng, v: usize) -> Cell {
        match self.vars.kinds[v] {
            Kind::Numerical => Cell::Num(round1(rng.random_range(NUM_RANGE.0..NUM_RANGE.1))),
            Kind::Categorical => {
                let w = &self.weights[v];
                let mut x = rng.random_range(0.0..w.iter().sum::<f64>());
                for (k, wk) in w.iter().enumerate() {
                    if x < *wk {
                        return Cell::Cat(k);
                    }
                    x -= wk;
                }
                Cell::Cat(w.len() - 1)
            }
        }
    }
}

/// Generates traces from `gt` until at least `n_events` events exist.
pub fn generate_log(gt: &Model, config: &SynthConfig) -> Result<EventLog> {
    validate(config)?;
    let vars = Variables::new(config);
    for r in gt.rules() {
        for name in [&r.condition.variable, &r.update.variable] {
            if !vars.names.contains(name) {
                return Err(Error::UnknownVariable(name.clone()));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x05ee_d106);
    let weights = (0..vars.names.len())
        .map(|v| (0..vars.tokens[v].len()).map(|_| rng.random_range(0.2..1.0)).collect())
        .collect();
    let g = Gen { vars: &vars, weights };

    // decode order over the generator's variables
    let mut probe = LogBuilder::new(vars.names.iter().cloned().zip(vars.kinds.iter().copied()).collect());
    probe.push_trace(
        "probe".into(),
        vec![(0..vars.names.len())
            .map(|v| match vars.kinds[v] {
                Kind::Categorical => RawValue::Text(vars.tokens[v][0].clone()),
                Kind::Numerical => RawValue::Number(0.0),
            })
            .collect()],
    );
    let order = variable_order(probe.build(1)?.schema(), gt)?;

    let mut builder = LogBuilder::new(vars.names.iter().cloned().zip(vars.kinds.iter().copied()).collect());
    let mut total = 0;
    let mut t = 0;
    while total < config.n_events {
        let len = rng.random_range(config.trace_len.0..=config.trace_len.1);
        let mut events: Vec<Vec<Cell>> = Vec::with_capacity(len);
        for _ in 0..len {
            let mut cur = vec![Cell::Cat(0); vars.names.len()];
            for &v in &order {
                let prev = events.last().map(Vec::as_slice);
                let fired = gt
                    .rules()
                    .iter()
                    .filter(|r| r.update.variable == vars.names[v])
                    .find_map(|r| {
                        if g.fires(&r.condition, prev, &cur) {
                            g.apply(&mut rng, &r.update, prev)
                        } else {
                            None
                        }
                    });
                cur[v] = match fired {
                    Some(cell) => cell,
                    None => g.base(&mut rng, v),
                };
            }
            events.push(cur);
        }
        total += len;
        let raw = events
            .into_iter()
            .map(|e| {
                e.into_iter()
                    .enumerate()
                    .map(|(v, c)| match c {
                        Cell::Cat(k) => RawValue::Text(vars.tokens[v][k].clone()),
                        Cell::Num(x) => RawValue::Number(x),
                    })
                    .collect()
            })
            .collect();
        builder.push_trace(format!("t{t:05}"), raw);
        t += 1;
    }
    builder.build(config.bins)
}

/// For every variable, picks `ceil(q * n)` event positions and rotates their
/// values by a random non-zero offset. Value multisets are preserved.
pub fn add_swap_noise(log: &EventLog, q: f64, seed: u64) -> Result<EventLog> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("noise fraction {q} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut traces: Vec<Trace> = log.traces().to_vec();
    let cells: Vec<(usize, usize)> = traces
        .iter()
        .enumerate()
        .flat_map(|(t, tr)| (0..tr.events.len()).map(move |e| (t, e)))
        .collect();
    let n = cells.len();
    let k = (q * n as f64).ceil() as usize;
    for v in 0..log.schema().len() {
        if k < 2 {
            continue;
        }
        let mut picked: Vec<usize> = sample(&mut rng, n, k).into_vec();
        picked.sort_unstable();
        let shift = rng.random_range(1..k);
        let old: Vec<_> = picked.iter().map(|&i| traces[cells[i].0].events[cells[i].1].values[v]).collect();
        for (j, &i) in picked.iter().enumerate() {
            traces[cells[i].0].events[cells[i].1].values[v] = old[(j + shift) % k];
        }
    }
    EventLog::new(log.schema().clone(), traces)
}
