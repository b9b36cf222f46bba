use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Kernel Perceptron: update on `y f(x) <= 0`, unbounded memory.
    Perceptron,
    /// AVP with a constant rate.
    Avp,
    /// AVP with rate `U / sqrt(U^2 + #{tau <= t : y f(x) <= 0})`.
    AvpAdaptive,
    /// AVP under a budget, with halving and projection.
    Ahpatron,
    /// Ahpatron without projecting the removed half (survivors only).
    AhpatronNoProj,
    /// Perceptron that evicts the oldest term when full.
    BudgetOldest,
    /// Perceptron that evicts a uniformly random term when full.
    BudgetRandom,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Perceptron,
        Algorithm::Avp,
        Algorithm::AvpAdaptive,
        Algorithm::Ahpatron,
        Algorithm::AhpatronNoProj,
        Algorithm::BudgetOldest,
        Algorithm::BudgetRandom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Perceptron => "perceptron",
            Algorithm::Avp => "avp",
            Algorithm::AvpAdaptive => "avp-adaptive",
            Algorithm::Ahpatron => "ahpatron",
            Algorithm::AhpatronNoProj => "ahpatron-noproj",
            Algorithm::BudgetOldest => "budget-oldest",
            Algorithm::BudgetRandom => "budget-random",
        }
    }

    pub fn is_halving(self) -> bool {
        matches!(self, Algorithm::Ahpatron | Algorithm::AhpatronNoProj)
    }

    pub fn is_budgeted(self) -> bool {
        matches!(
            self,
            Algorithm::Ahpatron
                | Algorithm::AhpatronNoProj
                | Algorithm::BudgetOldest
                | Algorithm::BudgetRandom
        )
    }

    /// Uses the `y f(x) < 1 - epsilon` trigger rather than `y f(x) <= 0`.
    pub fn is_aggressive(self) -> bool {
        matches!(
            self,
            Algorithm::Avp | Algorithm::AvpAdaptive | Algorithm::Ahpatron | Algorithm::AhpatronNoProj
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .or(match key.as_str() {
                "avpadaptive" => Some(Algorithm::AvpAdaptive),
                "ahpatronnoproj" | "noproj" => Some(Algorithm::AhpatronNoProj),
                "oldest" | "budgetoldest" => Some(Algorithm::BudgetOldest),
                "random" | "budgetrandom" => Some(Algorithm::BudgetRandom),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

/// Radius of the sphere the surviving half is rescaled onto, as a fraction
/// `c_t` of `U`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CtMode {
    Fixed(f64),
    /// `c_t = |f_t| / U`: the rescaled hypothesis keeps the current norm.
    NormRatio,
}

impl fmt::Display for CtMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CtMode::Fixed(c) => write!(f, "fixed:{c}"),
            CtMode::NormRatio => f.write_str("norm-ratio"),
        }
    }
}

impl FromStr for CtMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("norm-ratio") || s.eq_ignore_ascii_case("normratio") {
            return Ok(CtMode::NormRatio);
        }
        let value = s.strip_prefix("fixed:").unwrap_or(s);
        value
            .parse::<f64>()
            .map(CtMode::Fixed)
            .map_err(|_| Error::InvalidConfig(format!("bad c_t mode '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub kernel: KernelSpec,
    /// Maximum active-set size; `None` for unbudgeted algorithms.
    pub budget: Option<usize>,
    /// Radius `U` of the hypothesis ball; `f64::INFINITY` disables projection.
    pub radius: f64,
    /// Constant rate `lambda`.
    pub rate: f64,
    /// Margin slack: aggressive learners update when `y f(x) < 1 - epsilon`.
    pub epsilon: f64,
    /// Regularizer of the projection solve.
    pub eta: f64,
    pub ct: CtMode,
    pub seed: u64,
}

impl LearnerConfig {
    pub fn perceptron(kernel: KernelSpec) -> Self {
        Self {
            algorithm: Algorithm::Perceptron,
            kernel,
            budget: None,
            radius: f64::INFINITY,
            rate: 1.0,
            epsilon: 0.0,
            eta: 0.0005,
            ct: CtMode::NormRatio,
            seed: 0,
        }
    }

    pub fn avp(kernel: KernelSpec, radius: f64, rate: f64, epsilon: f64) -> Self {
        Self {
            algorithm: Algorithm::Avp,
            radius,
            rate,
            epsilon,
            ..Self::perceptron(kernel)
        }
    }

    pub fn avp_adaptive(kernel: KernelSpec, radius: f64, epsilon: f64) -> Self {
        Self {
            algorithm: Algorithm::AvpAdaptive,
            ..Self::avp(kernel, radius, 1.0, epsilon)
        }
    }

    /// Ahpatron with the experimental defaults: `U = sqrt(B)/2`,
    /// `lambda = U / (2 sqrt(B))`, `eta = 0.0005`, `c_t = |f_t| / U`.
    pub fn ahpatron_default(kernel: KernelSpec, budget: usize, epsilon: f64) -> Self {
        let sqrt_b = (budget as f64).sqrt();
        let radius = sqrt_b / 2.0;
        Self {
            algorithm: Algorithm::Ahpatron,
            kernel,
            budget: Some(budget),
            radius,
            rate: radius / (2.0 * sqrt_b),
            epsilon,
            eta: 0.0005,
            ct: CtMode::NormRatio,
            seed: 0,
        }
    }

    pub fn budget_baseline(kernel: KernelSpec, algorithm: Algorithm, budget: usize, seed: u64) -> Self {
        Self {
            algorithm,
            budget: Some(budget),
            seed,
            ..Self::perceptron(kernel)
        }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        self.kernel.validate()?;
        let algo = self.algorithm;

        if !(self.radius > 0.0) {
            return bad(format!("U must be positive, got {}", self.radius));
        }
        if algo.is_aggressive() && !(0.0..1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1), got {}", self.epsilon));
        }
        if matches!(algo, Algorithm::Avp | Algorithm::Ahpatron | Algorithm::AhpatronNoProj)
            && !(self.rate > 0.0 && self.rate.is_finite())
        {
            return bad(format!("lambda must be positive, got {}", self.rate));
        }
        if algo == Algorithm::AvpAdaptive && self.radius.is_infinite() {
            return bad("the adaptive rate requires a finite U".into());
        }
        match (algo.is_budgeted(), self.budget) {
            (true, None) => return bad(format!("{algo} requires a budget B")),
            (true, Some(0)) => return bad("B must be positive".into()),
            (false, Some(_)) => return bad(format!("{algo} does not take a budget")),
            _ => {}
        }
        if algo.is_halving() {
            let b = self.budget.unwrap_or(0);
            if b < 2 || b % 2 != 0 {
                return bad(format!("{algo} requires an even budget B >= 2, got {b}"));
            }
            if !(self.eta > 0.0 && self.eta.is_finite()) {
                return bad(format!("eta must be positive, got {}", self.eta));
            }
            if self.radius.is_infinite() {
                return bad(format!("{algo} requires a finite U"));
            }
            if let CtMode::Fixed(c) = self.ct {
                if !(c > 0.0 && c <= 1.0) {
                    return bad(format!("c_t must lie in (0, 1], got {c}"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> KernelSpec {
        KernelSpec::gaussian(1.0).unwrap()
    }

    #[test]
    fn parse_names() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("AhpatronNoProj".parse::<Algorithm>().unwrap(), Algorithm::AhpatronNoProj);
        assert!("forgetron".parse::<Algorithm>().is_err());
        assert_eq!("norm-ratio".parse::<CtMode>().unwrap(), CtMode::NormRatio);
        assert_eq!("fixed:0.6".parse::<CtMode>().unwrap(), CtMode::Fixed(0.6));
    }

    #[test]
    fn odd_budget_rejected() {
        let mut c = LearnerConfig::ahpatron_default(k(), 400, 0.5);
        assert!(c.validate().is_ok());
        c.budget = Some(5);
        assert!(c.validate().is_err());
        c.budget = None;
        assert!(c.validate().is_err());
    }

    #[test]
    fn ranges_enforced() {
        let mut c = LearnerConfig::ahpatron_default(k(), 4, 0.5);
        c.epsilon = 1.0;
        assert!(c.validate().is_err());
        c.epsilon = 0.5;
        c.eta = 0.0;
        assert!(c.validate().is_err());
        c.eta = 0.1;
        c.ct = CtMode::Fixed(1.5);
        assert!(c.validate().is_err());
        c.ct = CtMode::NormRatio;
        c.radius = f64::INFINITY;
        assert!(c.validate().is_err());
        assert!(LearnerConfig::avp_adaptive(k(), f64::INFINITY, 0.6).validate().is_err());
        assert!(LearnerConfig::avp(k(), f64::INFINITY, 0.0, 0.6).validate().is_err());
        let mut p = LearnerConfig::perceptron(k());
        p.budget = Some(4);
        assert!(p.validate().is_err());
    }

    #[test]
    fn experimental_defaults() {
        let c = LearnerConfig::ahpatron_default(k(), 400, 0.7);
        assert_eq!(c.radius, 10.0);
        assert_eq!(c.rate, 0.25);
        assert_eq!(c.eta, 0.0005);
    }
}
