//! Parameters that scale with the row index n, and index families described by them.

use crate::dist::RandomIndex;
use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// `c · n^p` with `p ∈ {−1, 0, 1}`, written as a number or as "n", "3*n", "1/n", "0.5/n".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamRepr", into = "ParamRepr")]
pub struct Param {
    pub coef: f64,
    pub power: i32,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ParamRepr {
    Number(f64),
    Text(String),
}

impl Param {
    pub fn constant(c: f64) -> Self {
        Self { coef: c, power: 0 }
    }

    pub fn per_n(c: f64) -> Self {
        Self { coef: c, power: -1 }
    }

    pub fn times_n(c: f64) -> Self {
        Self { coef: c, power: 1 }
    }

    pub fn resolve(&self, n: u64) -> f64 {
        self.coef * (n as f64).powi(self.power)
    }
}

impl std::str::FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let number = |c: &str| -> std::result::Result<f64, String> {
            if c.is_empty() {
                return Ok(1.0);
            }
            c.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("cannot parse coefficient {c:?} in {s:?}"))
        };
        if let Ok(v) = t.parse::<f64>() {
            return Ok(Param::constant(v));
        }
        if let Some(c) = t.strip_suffix("/n") {
            return Ok(Param::per_n(number(c)?));
        }
        if let Some(c) = t.strip_suffix('n') {
            return Ok(Param::times_n(number(c.strip_suffix('*').unwrap_or(c))?));
        }
        Err(format!("expected a number, \"n\", \"c*n\", \"1/n\" or \"c/n\", got {s:?}"))
    }
}

impl TryFrom<ParamRepr> for Param {
    type Error = String;

    fn try_from(r: ParamRepr) -> std::result::Result<Self, String> {
        match r {
            ParamRepr::Number(v) => Ok(Param::constant(v)),
            ParamRepr::Text(s) => s.parse(),
        }
    }
}

impl From<Param> for ParamRepr {
    fn from(p: Param) -> Self {
        if p.power == 0 {
            ParamRepr::Number(p.coef)
        } else {
            ParamRepr::Text(p.to_string())
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.power, self.coef == 1.0) {
            (0, _) => write!(f, "{}", self.coef),
            (1, true) => write!(f, "n"),
            (1, false) => write!(f, "{}*n", self.coef),
            (-1, _) => write!(f, "{}/n", self.coef),
            (p, _) => write!(f, "{}*n^{p}", self.coef),
        }
    }
}

/// Index family whose parameters may depend on n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IndexSpec {
    Deterministic { k: Param },
    /// 1 + Poisson(mean − 1).
    #[serde(alias = "poisson-shifted")]
    Poisson { mean: Param },
    Geometric { p: Param },
    /// 1 + NegBin(r, ·) with the given mean.
    NegativeBinomial { r: f64, mean: Param },
    FiniteSupport { support: Vec<u64>, probs: Vec<f64> },
}

impl IndexSpec {
    /// The index law for row n.
    pub fn resolve(&self, n: u64) -> Result<RandomIndex> {
        match self {
            IndexSpec::Deterministic { k } => {
                let v = k.resolve(n).round();
                if !(v >= 1.0 && v <= u64::MAX as f64) {
                    return Err(invalid("k", format!("resolves to {v} at n = {n}; must be ≥ 1")));
                }
                RandomIndex::deterministic(v as u64)
            }
            IndexSpec::Poisson { mean } => RandomIndex::poisson_with_mean(mean.resolve(n)),
            IndexSpec::Geometric { p } => RandomIndex::geometric(p.resolve(n)),
            IndexSpec::NegativeBinomial { r, mean } => RandomIndex::negative_binomial_with_mean(*r, mean.resolve(n)),
            IndexSpec::FiniteSupport { support, probs } => RandomIndex::finite_support(support.clone(), probs.clone()),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            IndexSpec::Deterministic { .. } => "deterministic",
            IndexSpec::Poisson { .. } => "poisson",
            IndexSpec::Geometric { .. } => "geometric",
            IndexSpec::NegativeBinomial { .. } => "negative-binomial",
            IndexSpec::FiniteSupport { .. } => "finite-support",
        }
    }
}
