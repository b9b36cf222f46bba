//! Mistake-bound suite: each bound is checked on a run configured the way
//! its hypotheses require.

use std::fmt;
use std::str::FromStr;

use okl_core::diagnostics::{
    audited_run, check_ahpatron_bound, check_avp_bound, check_gap, check_removal_count,
    check_perceptron_bound, check_perceptron_sqrt_bound, check_refined_bound, default_comparator,
    AvpBound, BoundReport, InvariantReport, RunTrace,
};
use okl_core::learners::{run, Algorithm, CtMode, LearnerConfig};
use okl_core::{Error, KernelSpec, LabeledExample};
use serde::Serialize;

use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundId {
    Perceptron,
    PerceptronSqrt,
    Avp,
    AvpConstantRate,
    AvpAdaptiveRate,
    Ahpatron,
    Refined,
    RemovalCount,
    Gap,
}

impl BoundId {
    pub const ALL: [BoundId; 9] = [
        BoundId::Perceptron,
        BoundId::PerceptronSqrt,
        BoundId::Avp,
        BoundId::AvpConstantRate,
        BoundId::AvpAdaptiveRate,
        BoundId::Ahpatron,
        BoundId::Refined,
        BoundId::RemovalCount,
        BoundId::Gap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundId::Perceptron => "perceptron",
            BoundId::PerceptronSqrt => "perceptron-sqrt",
            BoundId::Avp => "avp",
            BoundId::AvpConstantRate => "avp-constant-rate",
            BoundId::AvpAdaptiveRate => "avp-adaptive-rate",
            BoundId::Ahpatron => "ahpatron",
            BoundId::Refined => "ahpatron-refined",
            BoundId::RemovalCount => "removal-count",
            BoundId::Gap => "gap",
        }
    }

    /// Algorithms whose runs this bound is checked on.
    fn algorithms(self) -> &'static [Algorithm] {
        match self {
            BoundId::Perceptron | BoundId::PerceptronSqrt => &[Algorithm::Perceptron],
            BoundId::Avp | BoundId::AvpConstantRate => &[Algorithm::Avp],
            BoundId::AvpAdaptiveRate => &[Algorithm::AvpAdaptive],
            BoundId::Ahpatron | BoundId::Refined => &[Algorithm::Ahpatron],
            BoundId::RemovalCount => &[Algorithm::Ahpatron, Algorithm::AhpatronNoProj],
            BoundId::Gap => &[
                Algorithm::Avp,
                Algorithm::AvpAdaptive,
                Algorithm::Ahpatron,
                Algorithm::AhpatronNoProj,
            ],
        }
    }
}

impl fmt::Display for BoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundId {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, BenchError> {
        let key = s.trim().to_ascii_lowercase();
        let alias = match key.as_str() {
            "refined" => Some(BoundId::Refined),
            "lemma1" | "removals" => Some(BoundId::RemovalCount),
            "hinge-gap" => Some(BoundId::Gap),
            _ => None,
        };
        alias
            .or_else(|| BoundId::ALL.into_iter().find(|b| b.name() == key))
            .ok_or_else(|| BenchError::Config(format!("--suite: unknown bound '{s}'")))
    }
}

/// Parses `all` or a comma-separated list of bound names.
pub fn parse_suite(s: &str) -> Result<Vec<BoundId>, BenchError> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(BoundId::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let b: BoundId = part.parse()?;
        if !out.contains(&b) {
            out.push(b);
        }
    }
    if out.is_empty() {
        return Err(BenchError::Config("--suite: empty".into()));
    }
    Ok(out)
}

/// Shared settings; each run derives the settings its bound requires from these.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteParams {
    pub sigma: f64,
    pub budget: usize,
    /// `U` for the finite-radius runs.
    pub radius: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Norm-cache audit interval.
    pub audit_every: usize,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            budget: 64,
            radius: 1.0,
            epsilon: 0.8,
            eta: 0.0005,
            gamma: 0.25,
            seed: 0,
            audit_every: 25,
        }
    }
}

/// The configuration each algorithm is run with inside the suite.
pub fn suite_config(algo: Algorithm, bound: Option<BoundId>, p: &SuiteParams) -> Result<LearnerConfig, BenchError> {
    let kernel = KernelSpec::gaussian(p.sigma).map_err(|e| BenchError::Config(format!("--sigma: {e}")))?;
    let b = p.budget;
    let sb = (b as f64).sqrt();
    let u = p.radius;
    let eps = p.epsilon;
    let cfg = match algo {
        Algorithm::Perceptron => LearnerConfig::perceptron(kernel),
        Algorithm::Avp => LearnerConfig::avp(kernel, f64::INFINITY, 1.0, eps),
        Algorithm::AvpAdaptive => LearnerConfig::avp_adaptive(kernel, u, eps),
        Algorithm::Ahpatron | Algorithm::AhpatronNoProj => {
            let fixed = bound == Some(BoundId::Ahpatron);
            LearnerConfig {
                algorithm: algo,
                kernel,
                budget: Some(b),
                radius: u,
                rate: if fixed { 2f64.sqrt() * u / sb } else { u / (2.0 * sb) },
                epsilon: eps,
                eta: p.eta,
                ct: if fixed { CtMode::Fixed(0.6) } else { CtMode::NormRatio },
                seed: p.seed,
            }
        }
        Algorithm::BudgetOldest | Algorithm::BudgetRandom => {
            LearnerConfig::budget_baseline(kernel, algo, b, p.seed)
        }
    }
    .with_seed(p.seed);
    cfg.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    Ok(cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum BoundStatus {
    Holds(BoundReport),
    Violated(BoundReport),
    Precondition { reason: String },
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteEntry {
    pub bound: BoundId,
    pub algo: String,
    pub dataset: String,
    #[serde(flatten)]
    pub status: BoundStatus,
}

impl SuiteEntry {
    pub fn violated(&self) -> bool {
        matches!(self.status, BoundStatus::Violated(_))
    }

    pub fn status_name(&self) -> &'static str {
        match self.status {
            BoundStatus::Holds(_) => "holds",
            BoundStatus::Violated(_) => "violated",
            BoundStatus::Precondition { .. } => "precondition",
            BoundStatus::Failed { .. } => "failed",
        }
    }

    pub fn report(&self) -> Option<&BoundReport> {
        match &self.status {
            BoundStatus::Holds(r) | BoundStatus::Violated(r) => Some(r),
            _ => None,
        }
    }

    pub fn detail(&self) -> String {
        match &self.status {
            BoundStatus::Holds(r) | BoundStatus::Violated(r) => r
                .components
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" "),
            BoundStatus::Precondition { reason } | BoundStatus::Failed { reason } => reason.clone(),
        }
    }
}

/// Audit of one run made by the suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteRun {
    pub algo: String,
    pub ct_mode: String,
    pub invariants: InvariantReport,
    pub deterministic: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SuiteResult {
    pub entries: Vec<SuiteEntry>,
    pub runs: Vec<SuiteRun>,
}

impl SuiteResult {
    pub fn violations(&self) -> usize {
        self.entries.iter().filter(|e| e.violated()).count()
    }

    pub fn invariant_failures(&self) -> usize {
        self.runs
            .iter()
            .filter(|r| !r.invariants.ok() || !r.deterministic)
            .count()
    }
}

fn classify(res: okl_core::Result<BoundReport>) -> BoundStatus {
    match res {
        Ok(r) if r.holds => BoundStatus::Holds(r),
        Ok(r) => BoundStatus::Violated(r),
        Err(Error::PreconditionViolation(reason)) => BoundStatus::Precondition { reason },
        Err(e) => BoundStatus::Failed { reason: e.to_string() },
    }
}

fn check(
    bound: BoundId,
    trace: &RunTrace,
    stream: &[LabeledExample],
    p: &SuiteParams,
) -> BoundStatus {
    let cfg = &trace.config;
    let comparator = match default_comparator(stream, &cfg.kernel, cfg.radius) {
        Ok(c) => c,
        Err(e) => return BoundStatus::Failed { reason: e.to_string() },
    };
    classify(match bound {
        BoundId::Perceptron => check_perceptron_bound(trace, stream, &comparator),
        BoundId::PerceptronSqrt => check_perceptron_sqrt_bound(trace, stream, &comparator),
        BoundId::Avp => check_avp_bound(trace, stream, &comparator, AvpBound::General),
        BoundId::AvpConstantRate => check_avp_bound(trace, stream, &comparator, AvpBound::ConstantRate),
        BoundId::AvpAdaptiveRate => check_avp_bound(trace, stream, &comparator, AvpBound::AdaptiveRate),
        BoundId::Ahpatron => check_ahpatron_bound(trace, stream, &comparator),
        BoundId::Refined => check_refined_bound(trace, stream, &comparator, p.gamma),
        BoundId::RemovalCount => check_removal_count(trace),
        BoundId::Gap => check_gap(trace),
    })
}

/// Runs every requested bound on `stream`. When `only` is given, bounds are
/// restricted to runs of that algorithm.
pub fn run_suite(
    dataset: &str,
    stream: &[LabeledExample],
    bounds: &[BoundId],
    only: Option<Algorithm>,
    p: &SuiteParams,
) -> Result<SuiteResult, BenchError> {
    // Distinct runs needed, keyed by (algorithm, uses the fixed c_t setting).
    let mut plan: Vec<(Algorithm, bool, Vec<BoundId>)> = Vec::new();
    for &b in bounds {
        for &algo in b.algorithms() {
            if only.is_some_and(|o| o != algo) {
                continue;
            }
            let fixed = b == BoundId::Ahpatron;
            match plan.iter_mut().find(|(a, f, _)| *a == algo && *f == fixed) {
                Some((_, _, v)) => v.push(b),
                None => plan.push((algo, fixed, vec![b])),
            }
        }
    }
    // The removal count and the gap inequality also apply to the fixed-c_t Ahpatron run.
    if let Some(i) = plan.iter().position(|(a, f, _)| *a == Algorithm::Ahpatron && *f) {
        for extra in [BoundId::RemovalCount, BoundId::Gap] {
            if bounds.contains(&extra) && !plan[i].2.contains(&extra) {
                plan[i].2.push(extra);
            }
        }
    }

    let mut result = SuiteResult::default();
    for (algo, fixed, ids) in plan {
        let marker = fixed.then_some(BoundId::Ahpatron);
        let cfg = suite_config(algo, marker, p)?;
        let label = if algo.is_halving() {
            format!("{algo}[{}]", cfg.ct)
        } else {
            algo.name().to_string()
        };
        let (trace, invariants) = match audited_run(&cfg, stream, p.audit_every) {
            Ok(x) => x,
            Err(e) => {
                for b in ids {
                    result.entries.push(SuiteEntry {
                        bound: b,
                        algo: label.clone(),
                        dataset: dataset.into(),
                        status: BoundStatus::Failed { reason: e.to_string() },
                    });
                }
                continue;
            }
        };
        let deterministic = run(&cfg, stream)
            .map(|t| t.outcomes == trace.outcomes && t.final_hypothesis.alphas() == trace.final_hypothesis.alphas())
            .unwrap_or(false);
        result.runs.push(SuiteRun {
            algo: algo.name().into(),
            ct_mode: cfg.ct.to_string(),
            invariants,
            deterministic,
        });
        for b in ids {
            result.entries.push(SuiteEntry {
                bound: b,
                algo: label.clone(),
                dataset: dataset.into(),
                status: check(b, &trace, stream, p),
            });
        }
    }
    Ok(result)
}
