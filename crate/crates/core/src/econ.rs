//! Cost estimates for a deployment given its timing parameters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconError {
    #[error("throughput must be positive, got {0}")]
    NonpositiveThroughput(f64),
    #[error("parameter `{0}` must be nonnegative and finite, got {1}")]
    InvalidParameter(&'static str, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// mean service time of the timed operations (s)
    pub alpha: f64,
    /// mean transmission time (s)
    pub beta: f64,
    /// mean injection interval (s)
    pub gamma: f64,
    /// stream length in items
    pub n: f64,
    /// price per CPU-second
    pub p: f64,
    pub cpu_count: u32,
}

impl CostParams {
    pub fn validate(&self) -> Result<(), EconError> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("n", self.n),
            ("p", self.p),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EconError::InvalidParameter(name, v));
            }
        }
        Ok(())
    }
}

/// `max(alpha, beta, gamma) * n * p * cpu_count`.
pub fn cost_functional(params: &CostParams) -> Result<f64, EconError> {
    params.validate()?;
    let slowest = params.alpha.max(params.beta).max(params.gamma);
    Ok(slowest * params.n * params.p * f64::from(params.cpu_count))
}

/// Time dilation factor `bound / measured`.
pub fn dilation(measured_throughput: f64, bound_throughput: f64) -> Result<f64, EconError> {
    for v in [measured_throughput, bound_throughput] {
        if !(v.is_finite() && v > 0.0) {
            return Err(EconError::NonpositiveThroughput(v));
        }
    }
    Ok(bound_throughput / measured_throughput)
}

pub fn cost_operational(functional_cost: f64, measured_throughput: f64, bound_throughput: f64) -> Result<f64, EconError> {
    Ok(dilation(measured_throughput, bound_throughput)? * functional_cost)
}

/// Relative throughput loss against the bound, in percent.
pub fn performance_loss(measured_throughput: f64, bound_throughput: f64) -> Result<f64, EconError> {
    let d = dilation(measured_throughput, bound_throughput)?;
    Ok(100.0 * (1.0 - 1.0 / d))
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub params: CostParams,
    pub functional: f64,
    pub operational: Option<f64>,
    pub multiplier: Option<f64>,
}

pub fn report(params: &CostParams, measured: Option<f64>, bound: Option<f64>) -> Result<CostReport, EconError> {
    let functional = cost_functional(params)?;
    let bound = bound.unwrap_or(1.0 / params.alpha.max(params.beta).max(params.gamma));
    let multiplier = measured.map(|m| dilation(m, bound)).transpose()?;
    Ok(CostReport {
        params: *params,
        functional,
        operational: multiplier.map(|k| k * functional),
        multiplier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> CostParams {
        CostParams {
            alpha: 0.1,
            beta: 0.1,
            gamma: 0.001,
            n: 1000.0,
            p: 0.01,
            cpu_count: 9,
        }
    }

    #[test]
    fn functional_cost() {
        assert!((cost_functional(&params()).unwrap() - 9.0).abs() < 1e-12);
        let small = CostParams { cpu_count: 4, ..params() };
        assert!((cost_functional(&small).unwrap() - 4.0).abs() < 1e-12);
        let empty = CostParams { n: 0.0, ..params() };
        assert_eq!(cost_functional(&empty).unwrap(), 0.0);
    }

    #[test]
    fn operational_cost() {
        assert_eq!(cost_operational(9.0, 9.9, 9.9).unwrap(), 9.0);
        assert!(cost_operational(9.0, 4.0, 9.9).unwrap() > 9.0);
        assert!(matches!(cost_operational(9.0, 0.0, 9.9), Err(EconError::NonpositiveThroughput(_))));
    }

    #[test]
    fn loss() {
        assert!((performance_loss(4.95, 9.9).unwrap() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn negative_parameter_rejected() {
        let bad = CostParams { p: -1.0, ..params() };
        assert!(cost_functional(&bad).is_err());
    }
}
