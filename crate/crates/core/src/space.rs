//! Categorical search spaces with conditional parameters.
//!
//! A parameter may be gated by rules of the form "active only when `when`
//! takes one of `in`". Inactive parameters are never sampled and never
//! appear in an assignment.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// One categorical choice. Numbers are kept exactly as parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Tag(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Float(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_usize(&self) -> Option<usize> {
        match self {
            ParamValue::Int(v) if *v >= 0 => Some(*v as usize),
            ParamValue::Float(v) if *v >= 0.0 && v.fract() == 0.0 => Some(*v as usize),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ParamValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_tag(&self) -> Option<&str> {
        match self {
            ParamValue::Tag(s) => Some(s),
            _ => None,
        }
    }

    /// Equality used for duplicate detection and rule matching: numbers
    /// compare by value across int/float, everything else structurally.
    pub fn same_choice(&self, other: &ParamValue) -> bool {
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => a == b,
            _ => self == other,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v:?}"),
            ParamValue::Tag(s) => f.write_str(s),
        }
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Float(v)
    }
}

impl From<bool> for ParamValue {
    fn from(v: bool) -> Self {
        ParamValue::Bool(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Tag(v.to_string())
    }
}

/// A parameter and its finite choice set.
///
/// In YAML either `choices: [...]` or an inclusive integer grid
/// `range: [start, stop, step]` may be given; ranges are expanded on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain")]
pub struct ParamDomain {
    pub name: String,
    pub choices: Vec<ParamValue>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    name: String,
    #[serde(default)]
    choices: Option<Vec<ParamValue>>,
    #[serde(default)]
    range: Option<(i64, i64, i64)>,
}

impl TryFrom<RawDomain> for ParamDomain {
    type Error = String;

    fn try_from(raw: RawDomain) -> Result<Self, Self::Error> {
        let choices = match (raw.choices, raw.range) {
            (Some(c), None) => c,
            (None, Some((start, stop, step))) => {
                if step <= 0 || stop < start {
                    return Err(format!(
                        "parameter `{}`: range requires step > 0 and stop >= start",
                        raw.name
                    ));
                }
                (start..=stop).step_by(step as usize).map(ParamValue::Int).collect()
            }
            (Some(_), Some(_)) => {
                return Err(format!("parameter `{}`: give either choices or range, not both", raw.name))
            }
            (None, None) => return Err(format!("parameter `{}`: missing choices", raw.name)),
        };
        Ok(ParamDomain { name: raw.name, choices })
    }
}

impl ParamDomain {
    pub fn new(name: impl Into<String>, choices: Vec<ParamValue>) -> Self {
        Self { name: name.into(), choices }
    }
}

/// `param` is active only when `when` is assigned one of `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionalRule {
    pub param: String,
    pub when: String,
    #[serde(rename = "in")]
    pub values: Vec<ParamValue>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub params: Vec<ParamDomain>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditional: Vec<ConditionalRule>,
}

/// Parameter name → chosen value. Ordered by name for stable output.
pub type ParamAssignment = BTreeMap<String, ParamValue>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("search space has no parameters")]
    Empty,
    #[error("parameter `{0}` has no choices")]
    NoChoices(String),
    #[error("parameter `{0}` is declared more than once")]
    DuplicateName(String),
    #[error("parameter `{name}` lists choice {value} more than once")]
    DuplicateChoice { name: String, value: String },
    #[error("parameter `{0}` has a non-finite choice")]
    NonFinite(String),
    #[error("conditional rule references unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("conditional rule on `{param}` uses value {value} which is not a choice of `{when}`")]
    UnknownRuleValue { param: String, when: String, value: String },
    #[error("conditional rules form a cycle through `{0}`")]
    Cycle(String),
    #[error("active parameter `{0}` is not assigned")]
    Missing(String),
    #[error("parameter `{0}` is assigned but inactive or unknown")]
    Extraneous(String),
    #[error("parameter `{name}` has value {value} outside its choices")]
    NotAChoice { name: String, value: String },
}

impl SearchSpace {
    pub fn new(params: Vec<ParamDomain>) -> Self {
        Self { params, conditional: Vec::new() }
    }

    pub fn with_rule(mut self, param: &str, when: &str, values: Vec<ParamValue>) -> Self {
        self.conditional.push(ConditionalRule {
            param: param.to_string(),
            when: when.to_string(),
            values,
        });
        self
    }

    pub fn domain(&self, name: &str) -> Option<&ParamDomain> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        if self.params.is_empty() {
            return Err(SpaceError::Empty);
        }
        let mut seen = HashSet::new();
        for p in &self.params {
            if !seen.insert(p.name.as_str()) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
            if p.choices.is_empty() {
                return Err(SpaceError::NoChoices(p.name.clone()));
            }
            for (i, c) in p.choices.iter().enumerate() {
                if matches!(c, ParamValue::Float(v) if !v.is_finite()) {
                    return Err(SpaceError::NonFinite(p.name.clone()));
                }
                if p.choices[..i].iter().any(|prev| prev.same_choice(c)) {
                    return Err(SpaceError::DuplicateChoice { name: p.name.clone(), value: c.to_string() });
                }
            }
        }
        for rule in &self.conditional {
            if self.domain(&rule.param).is_none() {
                return Err(SpaceError::UnknownParam(rule.param.clone()));
            }
            let when = self
                .domain(&rule.when)
                .ok_or_else(|| SpaceError::UnknownParam(rule.when.clone()))?;
            for v in &rule.values {
                if !when.choices.iter().any(|c| c.same_choice(v)) {
                    return Err(SpaceError::UnknownRuleValue {
                        param: rule.param.clone(),
                        when: rule.when.clone(),
                        value: v.to_string(),
                    });
                }
            }
        }
        self.activation_order().map(|_| ())
    }

    /// Parameter indices ordered so that every gate precedes the parameters
    /// it controls; declaration order breaks ties.
    pub fn activation_order(&self) -> Result<Vec<usize>, SpaceError> {
        let index: HashMap<&str, usize> =
            self.params.iter().enumerate().map(|(i, p)| (p.name.as_str(), i)).collect();
        let n = self.params.len();
        let mut indegree = vec![0usize; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for rule in &self.conditional {
            let (Some(&p), Some(&w)) = (index.get(rule.param.as_str()), index.get(rule.when.as_str()))
            else {
                return Err(SpaceError::UnknownParam(rule.param.clone()));
            };
            if p == w {
                return Err(SpaceError::Cycle(rule.param.clone()));
            }
            children[w].push(p);
            indegree[p] += 1;
        }
        let mut order = Vec::with_capacity(n);
        let mut done = vec![false; n];
        while order.len() < n {
            let next = (0..n).find(|&i| !done[i] && indegree[i] == 0);
            let Some(i) = next else {
                let stuck = (0..n).find(|&i| !done[i]).unwrap();
                return Err(SpaceError::Cycle(self.params[stuck].name.clone()));
            };
            done[i] = true;
            order.push(i);
            for &c in &children[i] {
                indegree[c] -= 1;
            }
        }
        Ok(order)
    }

    /// Whether `name` is active given the (possibly partial) assignment.
    pub fn is_active(&self, name: &str, assignment: &ParamAssignment) -> bool {
        self.conditional.iter().filter(|r| r.param == name).all(|r| {
            assignment
                .get(&r.when)
                .is_some_and(|v| r.values.iter().any(|x| x.same_choice(v)))
        })
    }

    /// Check that exactly the active parameters are assigned, each to one of
    /// its choices.
    pub fn check_assignment(&self, assignment: &ParamAssignment) -> Result<(), SpaceError> {
        for p in &self.params {
            let active = self.is_active(&p.name, assignment);
            match (active, assignment.get(&p.name)) {
                (true, None) => return Err(SpaceError::Missing(p.name.clone())),
                (false, Some(_)) => return Err(SpaceError::Extraneous(p.name.clone())),
                (true, Some(v)) if !p.choices.iter().any(|c| c.same_choice(v)) => {
                    return Err(SpaceError::NotAChoice { name: p.name.clone(), value: v.to_string() })
                }
                _ => {}
            }
        }
        if let Some(extra) = assignment.keys().find(|k| self.domain(k).is_none()) {
            return Err(SpaceError::Extraneous(extra.clone()));
        }
        Ok(())
    }

    /// Uniform choice for every active parameter.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamAssignment {
        self.complete(ParamAssignment::new(), rng)
    }

    /// Walk parameters in activation order: keep assigned values of active
    /// parameters, sample missing active ones, drop inactive ones.
    pub fn complete<R: Rng + ?Sized>(&self, partial: ParamAssignment, rng: &mut R) -> ParamAssignment {
        let order = self.activation_order().expect("validated search space");
        let mut out = ParamAssignment::new();
        for i in order {
            let p = &self.params[i];
            if !self.is_active(&p.name, &out) {
                continue;
            }
            let value = match partial.get(&p.name) {
                Some(v) => v.clone(),
                None => p.choices[rng.random_range(0..p.choices.len())].clone(),
            };
            out.insert(p.name.clone(), value);
        }
        out
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("space serializes");
        let hash = Sha256::digest(&bytes);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Uniform sample from a validated space.
pub fn sample_uniform<R: Rng + ?Sized>(space: &SearchSpace, rng: &mut R) -> ParamAssignment {
    space.sample_uniform(rng)
}
