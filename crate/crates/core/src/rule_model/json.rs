use serde::{Deserialize, Serialize};

use super::{Condition, Constant, Model, Operator, Rule, Test, Update, UpdateRule, UpdateType};
use crate::error::{Error, Result};

/// On-disk model: `{"rules":[{"if":{…},"then":{…}}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub rules: Vec<RuleJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleJson {
    #[serde(rename = "if")]
    pub condition: ConditionJson,
    #[serde(rename = "then")]
    pub update: UpdateJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionJson {
    pub var: String,
    pub op: String,
    pub value: Constant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<Constant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateJson {
    pub var: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub values: Vec<Constant>,
}

fn num(c: &Constant) -> Result<f64> {
    match c {
        Constant::Num(x) => Ok(*x),
        Constant::Cat(s) => s
            .parse()
            .map_err(|_| Error::InvalidRule(format!("expected a number, got {s:?}"))),
    }
}

impl From<&Rule> for RuleJson {
    fn from(r: &Rule) -> Self {
        let c = &r.condition;
        let (op, value, to) = match &c.test {
            Test::Eq(a) => (Operator::Eq, a.clone(), None),
            Test::Ne(a) => (Operator::Ne, a.clone(), None),
            Test::Le(a) => (Operator::Le, Constant::Num(*a), None),
            Test::Ge(a) => (Operator::Ge, Constant::Num(*a), None),
            Test::Transition(a, b) => (Operator::Transition, a.clone(), Some(b.clone())),
        };
        RuleJson {
            condition: ConditionJson {
                var: c.variable.clone(),
                op: op.symbol().to_string(),
                value,
                to,
            },
            update: UpdateJson {
                var: r.update.variable.clone(),
                kind: r.update.update.update_type().tag().to_string(),
                values: r.update.update.constants(),
            },
        }
    }
}

impl TryFrom<&RuleJson> for Rule {
    type Error = Error;

    fn try_from(j: &RuleJson) -> Result<Rule> {
        let c = &j.condition;
        let op = Operator::from_symbol(&c.op).ok_or_else(|| Error::InvalidRule(format!("unknown operator {:?}", c.op)))?;
        let test = match op {
            Operator::Eq => Test::Eq(c.value.clone()),
            Operator::Ne => Test::Ne(c.value.clone()),
            Operator::Le => Test::Le(num(&c.value)?),
            Operator::Ge => Test::Ge(num(&c.value)?),
            Operator::Transition => {
                let to = c.to.clone().ok_or_else(|| Error::InvalidRule("transition without `to`".into()))?;
                Test::Transition(c.value.clone(), to)
            }
        };
        let u = &j.update;
        let kind = UpdateType::from_tag(&u.kind).ok_or_else(|| Error::InvalidRule(format!("unknown update type {:?}", u.kind)))?;
        let arity = |n: usize| {
            if u.values.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidRule(format!("`{}` takes {n} value(s), got {}", u.kind, u.values.len())))
            }
        };
        let update = match kind {
            UpdateType::SetMember => Update::SetMember(u.values.iter().map(|v| v.to_string()).collect()),
            UpdateType::PointAssign => {
                arity(1)?;
                Update::PointAssign(u.values[0].clone())
            }
            UpdateType::IntervalAssign => {
                arity(2)?;
                Update::IntervalAssign(num(&u.values[0])?, num(&u.values[1])?)
            }
            UpdateType::RelativePoint => {
                arity(1)?;
                Update::RelativePoint(num(&u.values[0])?)
            }
            UpdateType::RelativeInterval => {
                arity(2)?;
                Update::RelativeInterval(num(&u.values[0])?, num(&u.values[1])?)
            }
            UpdateType::Multiplicative => {
                arity(1)?;
                Update::Multiplicative(num(&u.values[0])?)
            }
        };
        Rule::new(Condition::new(&c.var, test), UpdateRule::new(&u.var, update))
    }
}

impl Model {
    pub fn to_json(&self) -> ModelJson {
        ModelJson {
            rules: self.rules().iter().map(RuleJson::from).collect(),
        }
    }

    pub fn from_json(json: &ModelJson) -> Result<Model> {
        Model::from_rules(json.rules.iter().map(Rule::try_from).collect::<Result<Vec<_>>>()?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("model serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Model> {
        Model::from_json(&serde_json::from_str(text)?)
    }
}
