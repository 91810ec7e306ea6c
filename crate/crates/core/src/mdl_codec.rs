//! Code-length primitives. Everything here returns lengths in bits; no
//! actual bit streams are produced.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log_model::{Domain, Schema};
use crate::rule_model::{Condition, Constant, Model, Rule, Update, UpdateRule};

/// Normalizing constant of Rissanen's universal integer code.
pub const LN_CONSTANT: f64 = 2.865064;
pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_PRECISION: u32 = 3;
const CONDITION_OPERATORS: f64 = 5.0;
const UPDATE_TYPES: f64 = 6.0;

/// Whether the ✓/✗ model stream shares one prequential counter across all
/// variables or keeps one per target variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CounterMode {
    #[default]
    Global,
    PerVariable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Additive smoothing of the prequential code.
    pub epsilon: f64,
    /// Significant digits of numerical constants.
    pub precision: u32,
    pub counter: CounterMode,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            precision: DEFAULT_PRECISION,
            counter: CounterMode::Global,
        }
    }
}

/// `L_N(x) = log2(c) + log2 x + log2 log2 x + …`, positive terms only.
pub fn universal_int(x: u64) -> Result<f64> {
    if x < 1 {
        return Err(Error::InvalidArgument(format!("L_N is defined for x >= 1, got {x}")));
    }
    Ok(ln_bits(x))
}

pub(crate) fn ln_bits(x: u64) -> f64 {
    debug_assert!(x >= 1);
    let mut bits = LN_CONSTANT.log2();
    let mut t = (x as f64).log2();
    while t > 0.0 {
        bits += t;
        t = t.log2();
    }
    bits
}

/// Decimal significand and exponent of `alpha` truncated to `precision`
/// significant digits, with trailing zeros moved into the exponent:
/// `0.5 -> (5, -1)`, `120 -> (12, 1)`, `0 -> (0, 0)`.
pub fn scientific(alpha: f64, precision: u32) -> (i64, i32) {
    if alpha == 0.0 || !alpha.is_finite() {
        return (0, 0);
    }
    let repr = format!("{:e}", alpha.abs());
    let (mantissa, exp) = repr.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let mut digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    digits.truncate(precision.max(1) as usize);
    let trimmed = digits.trim_end_matches('0');
    let digits = if trimmed.is_empty() { "0" } else { trimmed };
    let k: i64 = digits.parse().expect("decimal digits");
    let s = exp - (digits.len() as i32 - 1);
    (if alpha < 0.0 { -k } else { k }, s)
}

/// `L_R(α) = 2 + L_N(|s| + 1) + L_N(|k| + 1)` with `α ≈ k · 10^s` at
/// `precision` significant digits. The two leading bits are the signs.
pub fn real_code(alpha: f64, precision: u32) -> Result<f64> {
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("cannot encode non-finite {alpha}")));
    }
    let (k, s) = scientific(alpha, precision);
    Ok(2.0 + ln_bits(s.unsigned_abs() as u64 + 1) + ln_bits(k.unsigned_abs() + 1))
}

/// Rounds to `precision` significant digits.
pub fn round_sig(x: f64, precision: u32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", precision.max(1) as usize - 1, x).parse().unwrap_or(x)
}

/// Whether `x` agrees with `a` at `precision` significant digits of `a`.
pub fn approx_eq_sig(x: f64, a: f64, precision: u32) -> bool {
    if a == 0.0 {
        return x.abs() < 1e-12;
    }
    let unit = 10f64.powi(a.abs().log10().floor() as i32 - precision.max(1) as i32 + 1);
    (x - a).abs() < unit * (0.5 + 1e-9)
}

/// Running ✓/✗ counts of a prequential plug-in code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrequentialCounter {
    pub check_count: u64,
    pub cross_count: u64,
    pub epsilon: f64,
}

impl PrequentialCounter {
    pub fn new(epsilon: f64) -> Self {
        assert!(epsilon > 0.0, "epsilon must be positive");
        Self {
            check_count: 0,
            cross_count: 0,
            epsilon,
        }
    }

    /// Smoothed probability of the next symbol (`true` = ✓).
    pub fn probability(&self, check: bool) -> f64 {
        let used = if check { self.check_count } else { self.cross_count };
        (used as f64 + self.epsilon) / ((self.check_count + self.cross_count) as f64 + 2.0 * self.epsilon)
    }

    /// Code length of `check` and the counter after observing it.
    pub fn code(self, check: bool) -> (f64, Self) {
        let bits = -self.probability(check).log2();
        let mut next = self;
        if check {
            next.check_count += 1;
        } else {
            next.cross_count += 1;
        }
        (bits, next)
    }
}

impl Default for PrequentialCounter {
    fn default() -> Self {
        Self::new(DEFAULT_EPSILON)
    }
}

/// Total prequential length of any sequence with the given symbol counts.
/// The plug-in code length does not depend on symbol order; this sums it in
/// the fixed order ✓…✓✗…✗ so every caller gets bit-identical totals.
pub fn prequential_length(checks: u64, crosses: u64, epsilon: f64) -> f64 {
    let mut bits = 0.0;
    for i in 0..checks {
        bits -= ((i as f64 + epsilon) / (i as f64 + 2.0 * epsilon)).log2();
    }
    for j in 0..crosses {
        bits -= ((j as f64 + epsilon) / ((checks + j) as f64 + 2.0 * epsilon)).log2();
    }
    bits
}

/// `-log2(count / mass)`.
#[inline]
pub fn code_len(count: u64, mass: u64) -> f64 {
    -(count as f64 / mass as f64).log2()
}

/// Empirical code of `value` among `allowed`, normalized by the summed
/// training counts of the allowed values.
pub fn value_code(value: u32, allowed: &[u32], counts: &[u64]) -> Result<f64> {
    if !allowed.contains(&value) {
        return Err(Error::ValueNotAllowed);
    }
    let at = |c: u32| counts.get(c as usize).copied().unwrap_or(0);
    let mass: u64 = allowed.iter().map(|&c| at(c)).sum();
    if mass == 0 || at(value) == 0 {
        return Err(Error::ZeroFrequency);
    }
    Ok(code_len(at(value), mass))
}

fn constant_length(schema: &Schema, variable: &str, c: &Constant, precision: u32) -> Result<f64> {
    let var = schema.get(variable).ok_or_else(|| Error::UnknownVariable(variable.to_string()))?;
    match (&var.domain, c) {
        (Domain::Categorical(values), _) => Ok((values.len() as f64).log2()),
        (Domain::Numerical(_), Constant::Num(x)) => real_code(*x, precision),
        (Domain::Numerical(_), Constant::Cat(s)) => real_code(
            s.parse().map_err(|_| Error::KindMismatch {
                variable: variable.to_string(),
                reason: format!("categorical constant {s:?}"),
            })?,
            precision,
        ),
    }
}

/// `L(c) = log2 5 + log2 |V| + Σ L(α)`.
pub fn condition_length(c: &Condition, schema: &Schema, precision: u32) -> Result<f64> {
    let mut bits = CONDITION_OPERATORS.log2() + (schema.len() as f64).log2();
    for a in c.test.constants() {
        bits += constant_length(schema, &c.variable, &a, precision)?;
    }
    Ok(bits)
}

/// `L(u) = log2 6 + log2 |V| + Σ L(α)`; value sets also pay `L_N(|set|)`
/// so the decoder knows where the set ends.
pub fn update_length(u: &UpdateRule, schema: &Schema, precision: u32) -> Result<f64> {
    let mut bits = UPDATE_TYPES.log2() + (schema.len() as f64).log2();
    if let Update::SetMember(values) = &u.update {
        bits += ln_bits(values.len().max(1) as u64);
    }
    for a in u.update.constants() {
        bits += constant_length(schema, &u.variable, &a, precision)?;
    }
    Ok(bits)
}

pub fn rule_length(r: &Rule, schema: &Schema, precision: u32) -> Result<f64> {
    Ok(condition_length(&r.condition, schema, precision)? + update_length(&r.update, schema, precision)?)
}

/// `L(M) = L_N(|M| + 1) + Σ (L(c) + L(u))`.
pub fn model_length(m: &Model, schema: &Schema, precision: u32) -> Result<f64> {
    let mut bits = ln_bits(m.len() as u64 + 1);
    for r in m.rules() {
        bits += rule_length(r, schema, precision)?;
    }
    Ok(bits)
}
