//! Per-transition timing annotations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::PetriNet;

/// Largest CoV a uniform distribution on a nonnegative support can reach (1/sqrt 3).
pub const UNIFORM_MAX_COV: f64 = 0.577_350_269_189_625_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimingError {
    #[error("transition `{transition}`: {reason}")]
    InvalidParams { transition: String, reason: String },
    #[error("timing refers to unknown transition `{0}`")]
    UnknownTransition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Exponential,
    Uniform,
    Normal,
    Gamma,
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "exp" | "exponential" => Ok(Family::Exponential),
            "unif" | "uniform" => Ok(Family::Uniform),
            "norm" | "normal" => Ok(Family::Normal),
            "gamma" => Ok(Family::Gamma),
            other => Err(format!("unknown distribution family `{other}`")),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Exponential => "exponential",
            Family::Uniform => "uniform",
            Family::Normal => "normal",
            Family::Gamma => "gamma",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Timing {
    Immediate { weight: f64 },
    Deterministic { delay: f64 },
    Stochastic { family: Family, mean: f64, cov: f64 },
}

impl Timing {
    pub fn immediate() -> Self {
        Timing::Immediate { weight: 1.0 }
    }

    pub fn exponential(mean: f64) -> Self {
        Timing::Stochastic {
            family: Family::Exponential,
            mean,
            cov: 1.0,
        }
    }

    /// Builds a timing from a family and CoV; CoV 0 collapses to deterministic.
    pub fn with_cov(family: Family, mean: f64, cov: f64) -> Self {
        if family != Family::Exponential && cov == 0.0 {
            Timing::Deterministic { delay: mean }
        } else {
            Timing::Stochastic { family, mean, cov }
        }
    }

    pub fn is_immediate(&self) -> bool {
        matches!(self, Timing::Immediate { .. })
    }

    /// Mean delay in seconds; zero for immediate transitions.
    pub fn mean(&self) -> f64 {
        match *self {
            Timing::Immediate { .. } => 0.0,
            Timing::Deterministic { delay } => delay,
            Timing::Stochastic { mean, .. } => mean,
        }
    }

    pub fn validate(&self, transition: &str) -> Result<(), TimingError> {
        let bad = |reason: String| {
            Err(TimingError::InvalidParams {
                transition: transition.to_string(),
                reason,
            })
        };
        match *self {
            Timing::Immediate { weight } if !(weight > 0.0 && weight.is_finite()) => {
                bad(format!("immediate weight must be positive, got {weight}"))
            }
            Timing::Deterministic { delay } if !(delay >= 0.0 && delay.is_finite()) => {
                bad(format!("deterministic delay must be >= 0, got {delay}"))
            }
            Timing::Stochastic { family, mean, cov } => {
                if !(mean > 0.0 && mean.is_finite()) {
                    return bad(format!("mean must be positive, got {mean}"));
                }
                if !(cov >= 0.0 && cov.is_finite()) {
                    return bad(format!("cov must be >= 0, got {cov}"));
                }
                match family {
                    Family::Exponential if (cov - 1.0).abs() > 1e-12 => {
                        bad(format!("exponential requires cov = 1, got {cov}"))
                    }
                    Family::Uniform if cov > UNIFORM_MAX_COV + 1e-12 => {
                        bad(format!("uniform cov must be <= 1/sqrt(3), got {cov}"))
                    }
                    Family::Gamma if cov <= 0.0 => bad("gamma requires cov > 0".to_string()),
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }
}

/// Timing keyed by transition name. Missing entries are immediate with weight 1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingSpec {
    #[serde(flatten)]
    entries: BTreeMap<String, Timing>,
}

impl TimingSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, transition: impl Into<String>, timing: Timing) {
        self.entries.insert(transition.into(), timing);
    }

    pub fn remove(&mut self, transition: &str) -> Option<Timing> {
        self.entries.remove(transition)
    }

    pub fn get(&self, transition: &str) -> Timing {
        self.entries
            .get(transition)
            .copied()
            .unwrap_or_else(Timing::immediate)
    }

    pub fn explicit(&self, transition: &str) -> Option<Timing> {
        self.entries.get(transition).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Timing)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Timing resolved per transition index of `net`.
    pub fn resolve(&self, net: &PetriNet) -> Vec<Timing> {
        net.transitions().iter().map(|t| self.get(t)).collect()
    }

    /// Mean delay vector (theta) per transition of `net`.
    pub fn means(&self, net: &PetriNet) -> Vec<f64> {
        self.resolve(net).iter().map(Timing::mean).collect()
    }

    /// Checks every entry refers to a transition of `net` and has valid parameters.
    pub fn validate(&self, net: &PetriNet) -> Result<(), TimingError> {
        for (name, timing) in &self.entries {
            if net.transition_index(name).is_none() {
                return Err(TimingError::UnknownTransition(name.clone()));
            }
            timing.validate(name)?;
        }
        Ok(())
    }

    /// Applies `f` to every explicit entry (used for CoV sweeps and scaling).
    pub fn map(&self, mut f: impl FnMut(&str, Timing) -> Timing) -> TimingSpec {
        TimingSpec {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), f(k, *v)))
                .collect(),
        }
    }

    /// Multiplies every delay by `k`.
    pub fn scaled(&self, k: f64) -> TimingSpec {
        self.map(|_, t| match t {
            Timing::Deterministic { delay } => Timing::Deterministic { delay: delay * k },
            Timing::Stochastic { family, mean, cov } => Timing::Stochastic {
                family,
                mean: mean * k,
                cov,
            },
            imm => imm,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("timing serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_requires_unit_cov() {
        let t = Timing::Stochastic {
            family: Family::Exponential,
            mean: 0.1,
            cov: 0.5,
        };
        assert!(t.validate("t").is_err());
        assert!(Timing::exponential(0.1).validate("t").is_ok());
    }

    #[test]
    fn uniform_cov_limit() {
        let ok = Timing::Stochastic {
            family: Family::Uniform,
            mean: 1.0,
            cov: 0.577,
        };
        let bad = Timing::Stochastic {
            family: Family::Uniform,
            mean: 1.0,
            cov: 0.6,
        };
        assert!(ok.validate("t").is_ok());
        assert!(bad.validate("t").is_err());
    }

    #[test]
    fn gamma_needs_positive_cov() {
        let t = Timing::Stochastic {
            family: Family::Gamma,
            mean: 1.0,
            cov: 0.0,
        };
        assert!(t.validate("t").is_err());
    }

    #[test]
    fn missing_entry_is_immediate() {
        let spec = TimingSpec::new();
        assert_eq!(spec.get("anything"), Timing::Immediate { weight: 1.0 });
    }

    #[test]
    fn json_round_trip() {
        let mut spec = TimingSpec::new();
        spec.set("a", Timing::exponential(0.1));
        spec.set("b", Timing::Deterministic { delay: 2.0 });
        spec.set("c", Timing::Immediate { weight: 3.0 });
        spec.set(
            "d",
            Timing::Stochastic {
                family: Family::Gamma,
                mean: 0.1,
                cov: 1.5,
            },
        );
        let back = TimingSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
    }
}
