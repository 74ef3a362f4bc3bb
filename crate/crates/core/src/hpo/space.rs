//! Declarative search spaces and configurations.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DimensionKind {
    Uniform { low: f64, high: f64 },
    LogUniform { low: f64, high: f64 },
    Int { low: i64, high: i64 },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    #[serde(flatten)]
    pub kind: DimensionKind,
}

impl Dimension {
    pub fn uniform(name: &str, low: f64, high: f64) -> Self {
        Dimension {
            name: name.into(),
            kind: DimensionKind::Uniform { low, high },
        }
    }

    pub fn log_uniform(name: &str, low: f64, high: f64) -> Self {
        Dimension {
            name: name.into(),
            kind: DimensionKind::LogUniform { low, high },
        }
    }

    pub fn int(name: &str, low: i64, high: i64) -> Self {
        Dimension {
            name: name.into(),
            kind: DimensionKind::Int { low, high },
        }
    }

    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Dimension {
            name: name.into(),
            kind: DimensionKind::Categorical {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
        }
    }

    /// Bounds of the continuous internal coordinate: the log for log-uniform
    /// dimensions, half-integer padded for integer ones, the choice index
    /// range for categorical ones.
    pub fn internal_bounds(&self) -> (f64, f64) {
        match &self.kind {
            DimensionKind::Uniform { low, high } => (*low, *high),
            DimensionKind::LogUniform { low, high } => (low.ln(), high.ln()),
            DimensionKind::Int { low, high } => (*low as f64 - 0.5, *high as f64 + 0.5),
            DimensionKind::Categorical { choices } => (0.0, choices.len() as f64),
        }
    }

    pub fn to_internal(&self, v: &ParamValue) -> Option<f64> {
        match (&self.kind, v) {
            (DimensionKind::Uniform { .. }, ParamValue::Real(x)) => Some(*x),
            (DimensionKind::LogUniform { .. }, ParamValue::Real(x)) => Some(x.ln()),
            (DimensionKind::Int { .. }, ParamValue::Int(i)) => Some(*i as f64),
            (DimensionKind::Categorical { choices }, ParamValue::Cat(c)) => {
                choices.iter().position(|x| x == c).map(|i| i as f64)
            }
            _ => None,
        }
    }

    /// Maps an internal coordinate back to a value inside the bounds.
    pub fn from_internal(&self, u: f64) -> ParamValue {
        match &self.kind {
            DimensionKind::Uniform { low, high } => ParamValue::Real(u.clamp(*low, *high)),
            DimensionKind::LogUniform { low, high } => ParamValue::Real(u.exp().clamp(*low, *high)),
            DimensionKind::Int { low, high } => ParamValue::Int((u.round() as i64).clamp(*low, *high)),
            DimensionKind::Categorical { choices } => {
                ParamValue::Cat(choices[(u.floor().max(0.0) as usize).min(choices.len() - 1)].clone())
            }
        }
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match (&self.kind, v) {
            (DimensionKind::Uniform { low, high }, ParamValue::Real(x))
            | (DimensionKind::LogUniform { low, high }, ParamValue::Real(x)) => *x >= *low && *x <= *high,
            (DimensionKind::Int { low, high }, ParamValue::Int(i)) => i >= low && i <= high,
            (DimensionKind::Categorical { choices }, ParamValue::Cat(c)) => choices.contains(c),
            _ => false,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> ParamValue {
        match &self.kind {
            DimensionKind::Uniform { low, high } => ParamValue::Real(rng.random_range(*low..=*high)),
            DimensionKind::LogUniform { low, high } => {
                ParamValue::Real(rng.random_range(low.ln()..=high.ln()).exp().clamp(*low, *high))
            }
            DimensionKind::Int { low, high } => ParamValue::Int(rng.random_range(*low..=*high)),
            DimensionKind::Categorical { choices } => {
                ParamValue::Cat(choices[rng.random_range(0..choices.len())].clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Real(x) => Some(*x),
            ParamValue::Cat(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Cat(s) => Some(s),
            _ => None,
        }
    }
}

pub type Config = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dimension>", into = "Vec<Dimension>")]
pub struct SearchSpace {
    dimensions: Vec<Dimension>,
}

impl TryFrom<Vec<Dimension>> for SearchSpace {
    type Error = Error;

    fn try_from(d: Vec<Dimension>) -> Result<Self> {
        SearchSpace::new(d)
    }
}

impl From<SearchSpace> for Vec<Dimension> {
    fn from(s: SearchSpace) -> Self {
        s.dimensions
    }
}

impl SearchSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for d in &dimensions {
            if !seen.insert(d.name.as_str()) {
                return Err(Error::invalid(format!("duplicate dimension {}", d.name)));
            }
            let ok = match &d.kind {
                DimensionKind::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
                DimensionKind::LogUniform { low, high } => *low > 0.0 && high.is_finite() && low < high,
                DimensionKind::Int { low, high } => low <= high,
                DimensionKind::Categorical { choices } => {
                    !choices.is_empty() && choices.iter().collect::<BTreeSet<_>>().len() == choices.len()
                }
            };
            if !ok {
                return Err(Error::invalid(format!("degenerate bounds for dimension {}", d.name)));
            }
        }
        Ok(SearchSpace { dimensions })
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    pub fn contains(&self, c: &Config) -> bool {
        c.len() == self.dimensions.len()
            && self
                .dimensions
                .iter()
                .all(|d| c.get(&d.name).is_some_and(|v| d.contains(v)))
    }
}
