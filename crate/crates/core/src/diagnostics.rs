//! Post-hoc analysis of completed runs.
//!
//! Every checker takes a finished [`RunTrace`], the stream it was run on and
//! a comparator hypothesis, verifies that the run's configuration satisfies
//! the hypotheses of the corresponding mistake bound, and returns a
//! [`BoundReport`] with both sides of the inequality and its ingredients.
//! A checker whose hypotheses are not met returns
//! [`Error::PreconditionViolation`] instead of a report.
//!
//! Notation used in component names: `M` is the set of mistaken rounds,
//! `M'` the rounds with `y f_t(x_t) <= 0`, `N` the updated rounds with a
//! positive margin, `J` the number of halving events and `L` the cumulative
//! hinge loss of the comparator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::Expansion;
use crate::kernel::{KernelSpec, LabeledExample};
use crate::learners::{adaptive_rate, run_with, Algorithm, CtMode, LearnerConfig};

pub use crate::learners::{RoundOutcome, RunTrace};

/// Absolute slack allowed on `lhs <= rhs`.
pub const BOUND_TOLERANCE: f64 = 1e-6;

/// Relative slack when comparing configured values against the settings a bound requires.
const PARAM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rounds: usize,
    pub mistakes: usize,
    pub m_prime: usize,
    pub n_t: usize,
    pub updates: usize,
    pub removals: usize,
    pub amr: f64,
    /// Largest `|f_t - fbar_t| / U` over halving events.
    pub zeta_max: Option<f64>,
    pub zeta_mean: Option<f64>,
    pub final_size: usize,
    pub final_norm: f64,
}

pub fn metrics(trace: &RunTrace) -> Metrics {
    let o = &trace.outcomes;
    let rounds = o.len();
    let mistakes = o.iter().filter(|r| r.mistake).count();
    let radius = trace.config.radius;
    let ratios: Vec<f64> = trace.removal_distances().map(|d| d / radius).collect();
    let zeta_max = ratios.iter().copied().reduce(f64::max);
    let zeta_mean = (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);
    Metrics {
        rounds,
        mistakes,
        m_prime: o.iter().filter(|r| r.in_m_prime()).count(),
        n_t: o.iter().filter(|r| r.in_n()).count(),
        updates: o.iter().filter(|r| r.triggered).count(),
        removals: o.iter().filter(|r| r.removed()).count(),
        amr: if rounds == 0 { 0.0 } else { mistakes as f64 / rounds as f64 },
        zeta_max,
        zeta_mean,
        final_size: trace.final_hypothesis.len(),
        final_norm: trace.final_hypothesis.norm(),
    }
}

/// `max(0, 1 - y u)`.
#[inline]
pub fn hinge(score: f64, y: f64) -> f64 {
    (1.0 - y * score).max(0.0)
}

/// `L_T(f) = sum_t max(0, 1 - y_t f(x_t))`.
pub fn hinge_loss_of(f: &Expansion, stream: &[LabeledExample]) -> f64 {
    stream.iter().map(|e| hinge(f.evaluate(&e.x), e.y.value())).sum()
}

/// `(1/T) sum_t y_t k(x_t, .)`.
pub fn mean_embedding(stream: &[LabeledExample], spec: &KernelSpec) -> Result<Expansion> {
    if stream.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let w = 1.0 / stream.len() as f64;
    Expansion::from_terms(*spec, stream.iter().map(|e| (e.clone(), w * e.y.value())))
}

/// `sum_t k(x_t, x_t) - (1/T) Y' K Y`, computed directly from pairwise
/// kernel values. Quadratic in `T`.
pub fn kernel_alignment(stream: &[LabeledExample], spec: &KernelSpec) -> Result<f64> {
    if stream.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let t = stream.len();
    let mut trace = 0.0;
    let mut quad = 0.0;
    for i in 0..t {
        let yi = stream[i].y.value();
        let kii = spec.self_eval(&stream[i].x);
        trace += kii;
        let mut off = 0.0;
        for j in 0..i {
            off += stream[j].y.value() * spec.eval(&stream[i].x, &stream[j].x);
        }
        quad += kii + 2.0 * yi * off;
    }
    Ok(trace - quad / t as f64)
}

/// The comparator licensed by the analysis: the mean embedding rescaled to
/// norm `min(1, U)`, or the zero hypothesis when the embedding vanishes.
pub fn default_comparator(
    stream: &[LabeledExample],
    spec: &KernelSpec,
    radius: f64,
) -> Result<Expansion> {
    let mut f = mean_embedding(stream, spec)?;
    let n = f.norm();
    if n > 0.0 {
        f.scale(radius.min(1.0) / n);
    } else {
        f.clear();
    }
    Ok(f)
}

/// Largest `k(x, x)` over the stream.
pub fn max_self_kernel(stream: &[LabeledExample], spec: &KernelSpec) -> f64 {
    stream.iter().map(|e| spec.self_eval(&e.x)).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub components: BTreeMap<String, f64>,
}

impl BoundReport {
    fn new(bound: &str, lhs: f64, rhs: f64, components: &[(&str, f64)]) -> Self {
        Self {
            bound: bound.to_string(),
            lhs,
            rhs,
            holds: lhs <= rhs + BOUND_TOLERANCE,
            components: components
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        }
    }
}

fn violation(msg: impl Into<String>) -> Error {
    Error::PreconditionViolation(msg.into())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= PARAM_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

fn require_algorithm(trace: &RunTrace, allowed: &[Algorithm]) -> Result<()> {
    if allowed.contains(&trace.config.algorithm) {
        Ok(())
    } else {
        Err(violation(format!(
            "bound applies to {:?}, trace is from {}",
            allowed, trace.config.algorithm
        )))
    }
}

fn require_stream(trace: &RunTrace, stream: &[LabeledExample]) -> Result<()> {
    if trace.len() != stream.len() {
        return Err(Error::DimensionMismatch(format!(
            "trace has {} rounds but stream has {} examples",
            trace.len(),
            stream.len()
        )));
    }
    Ok(())
}

/// The analysis assumes `k(x, x) <= 1` on every instance.
fn require_normalized(trace: &RunTrace, stream: &[LabeledExample]) -> Result<()> {
    let m = max_self_kernel(stream, &trace.config.kernel);
    if m > 1.0 + 1e-12 {
        return Err(violation(format!(
            "max k(x, x) = {m} exceeds 1 on this stream"
        )));
    }
    Ok(())
}

fn require_in_ball(f: &Expansion, radius: f64) -> Result<()> {
    if radius.is_finite() && f.norm() > radius * (1.0 + PARAM_TOLERANCE) {
        return Err(violation(format!(
            "comparator norm {} exceeds U = {radius}",
            f.norm()
        )));
    }
    Ok(())
}

fn require_comparator_kernel(trace: &RunTrace, f: &Expansion) -> Result<()> {
    if *f.spec() != trace.config.kernel {
        return Err(violation("comparator uses a different kernel than the run"));
    }
    Ok(())
}

struct Counts {
    mistakes: f64,
    m_prime: f64,
    n_t: f64,
    removals: f64,
}

fn counts(trace: &RunTrace) -> Counts {
    let m = metrics(trace);
    Counts {
        mistakes: m.mistakes as f64,
        m_prime: m.m_prime as f64,
        n_t: m.n_t as f64,
        removals: m.removals as f64,
    }
}

fn common_checks(trace: &RunTrace, stream: &[LabeledExample], f: &Expansion) -> Result<f64> {
    require_stream(trace, stream)?;
    require_normalized(trace, stream)?;
    require_comparator_kernel(trace, f)?;
    Ok(hinge_loss_of(f, stream))
}

/// `|M| <= 2 L(f) + |f|^2` for the Perceptron.
pub fn check_perceptron_bound(
    trace: &RunTrace,
    stream: &[LabeledExample],
    comparator: &Expansion,
) -> Result<BoundReport> {
    require_algorithm(trace, &[Algorithm::Perceptron])?;
    let loss = common_checks(trace, stream, comparator)?;
    let c = counts(trace);
    let f2 = comparator.sq_norm();
    Ok(BoundReport::new(
        "perceptron",
        c.mistakes,
        2.0 * loss + f2,
        &[("L", loss), ("f_sq", f2), ("M_prime", c.m_prime)],
    ))
}

/// `|M| <= L(f) + |f| sqrt(L(f)) + |f|^2` for the Perceptron.
pub fn check_perceptron_sqrt_bound(
    trace: &RunTrace,
    stream: &[LabeledExample],
    comparator: &Expansion,
) -> Result<BoundReport> {
    require_algorithm(trace, &[Algorithm::Perceptron])?;
    let loss = common_checks(trace, stream, comparator)?;
    let c = counts(trace);
    let f2 = comparator.sq_norm();
    Ok(BoundReport::new(
        "perceptron-sqrt",
        c.mistakes,
        loss + f2.sqrt() * loss.sqrt() + f2,
        &[("L", loss), ("f_sq", f2)],
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AvpBound {
    /// General AVP bound with a constant rate; the telescoped distance term
    /// is evaluated with the final hypothesis.
    General,
    /// `U = inf`, `lambda = 1`, `eps in (1/2, 1)`.
    ConstantRate,
    /// Adaptive rate with finite `U`.
    AdaptiveRate,
}

impl AvpBound {
    pub fn name(self) -> &'static str {
        match self {
            AvpBound::General => "avp",
            AvpBound::ConstantRate => "avp-constant-rate",
            AvpBound::AdaptiveRate => "avp-adaptive-rate",
        }
    }
}

/// Mistake bounds for AVP.
pub fn check_avp_bound(
    trace: &RunTrace,
    stream: &[LabeledExample],
    comparator: &Expansion,
    variant: AvpBound,
) -> Result<BoundReport> {
    let cfg = &trace.config;
    let eps = cfg.epsilon;
    match variant {
        AvpBound::General => {
            require_algorithm(trace, &[Algorithm::Avp])?;
            let lam = cfg.rate;
            if !(lam < 2.0 && lam / 2.0 < eps && eps < 1.0) {
                return Err(violation(format!(
                    "requires lambda < 2 and lambda/2 < eps < 1 (lambda = {lam}, eps = {eps})"
                )));
            }
            require_in_ball(comparator, cfg.radius)?;
            let loss = common_checks(trace, stream, comparator)?;
            let c = counts(trace);
            let f_final = &trace.final_hypothesis;
            let f2 = comparator.sq_norm();
            let dist_final =
                (f_final.sq_norm() - 2.0 * f_final.inner(comparator) + f2).max(0.0);
            let telescoped = (f2 - dist_final) / (2.0 * lam);
            let rhs = loss + telescoped + c.m_prime * lam / 2.0 + c.n_t * (lam / 2.0 - eps);
            Ok(BoundReport::new(
                variant.name(),
                c.m_prime,
                rhs,
                &[
                    ("L", loss),
                    ("f_sq", f2),
                    ("final_dist_sq", dist_final),
                    ("N", c.n_t),
                    ("M", c.mistakes),
                ],
            ))
        }
        AvpBound::ConstantRate => {
            require_algorithm(trace, &[Algorithm::Avp])?;
            if cfg.radius.is_finite() || !close(cfg.rate, 1.0) || !(eps > 0.5 && eps < 1.0) {
                return Err(violation(format!(
                    "requires U = inf, lambda = 1, eps in (1/2, 1) (U = {}, lambda = {}, eps = {eps})",
                    cfg.radius, cfg.rate
                )));
            }
            let loss = common_checks(trace, stream, comparator)?;
            let c = counts(trace);
            let f2 = comparator.sq_norm();
            Ok(BoundReport::new(
                variant.name(),
                c.mistakes,
                2.0 * loss + f2 + (1.0 - 2.0 * eps) * c.n_t,
                &[("L", loss), ("f_sq", f2), ("N", c.n_t), ("M_prime", c.m_prime)],
            ))
        }
        AvpBound::AdaptiveRate => {
            require_algorithm(trace, &[Algorithm::AvpAdaptive])?;
            let u = cfg.radius;
            if !u.is_finite() || !(eps < 1.0) {
                return Err(violation("requires finite U and eps < 1"));
            }
            // Every round's rate must satisfy lambda_t / 2 < eps.
            let mut count = 0u64;
            let mut max_rate = 0.0f64;
            let mut delta = 0.0;
            for o in &trace.outcomes {
                if o.in_m_prime() {
                    count += 1;
                }
                let rate = adaptive_rate(count, u);
                max_rate = max_rate.max(rate);
                if o.in_n() {
                    delta += rate / 2.0 - eps;
                }
            }
            if !(max_rate / 2.0 < eps) {
                return Err(violation(format!(
                    "requires lambda_t / 2 < eps for all t (max lambda_t = {max_rate}, eps = {eps})"
                )));
            }
            require_in_ball(comparator, u)?;
            let loss = common_checks(trace, stream, comparator)?;
            let c = counts(trace);
            let inner = (loss + 2.0 * u * u + delta).max(0.0);
            let rhs = inner + 9.0 * u * u + 3.0 * u * inner.sqrt();
            Ok(BoundReport::new(
                variant.name(),
                c.mistakes,
                rhs,
                &[("L", loss), ("Delta", delta), ("N", c.n_t), ("M_prime", c.m_prime)],
            ))
        }
    }
}

/// Mistake bound for Ahpatron with `c_t = 0.6` and `lambda = sqrt(2) U / sqrt(B)`.
pub fn check_ahpatron_bound(
    trace: &RunTrace,
    stream: &[LabeledExample],
    comparator: &Expansion,
) -> Result<BoundReport> {
    require_algorithm(trace, &[Algorithm::Ahpatron])?;
    let cfg = &trace.config;
    let b = cfg.budget.unwrap_or(0) as f64;
    let sb = b.sqrt();
    let u = cfg.radius;
    let eps = cfg.epsilon;
    if !matches!(cfg.ct, CtMode::Fixed(c) if close(c, 0.6)) {
        return Err(violation(format!("requires c_t = 0.6, got {}", cfg.ct)));
    }
    if !close(cfg.rate, 2f64.sqrt() * u / sb) {
        return Err(violation(format!(
            "requires lambda = sqrt(2) U / sqrt(B) = {}, got {}",
            2f64.sqrt() * u / sb,
            cfg.rate
        )));
    }
    if b < 50.0 {
        return Err(violation(format!("requires B >= 50, got {b}")));
    }
    if u > sb / 4.0 * (1.0 + PARAM_TOLERANCE) {
        return Err(violation(format!("requires U <= sqrt(B)/4 = {}, got {u}", sb / 4.0)));
    }
    let a = 3.0 * u / sb;
    if !(a < eps && eps < 1.0) {
        return Err(violation(format!("requires 3U/sqrt(B) = {a} < eps < 1, got {eps}")));
    }
    require_in_ball(comparator, u)?;
    let loss = common_checks(trace, stream, comparator)?;
    let c = counts(trace);
    let f2 = comparator.sq_norm();
    let a_low = u / (2.0 * b).sqrt();
    let delta_hi = (a - eps) / (1.0 - a) * c.n_t;
    let delta_lo = (a_low - eps) / (1.0 - a_low) * c.n_t;
    let first = 12.0 * u / sb * loss + delta_hi;
    let second = 0.9 * u / sb * loss + sb / (2.0 * u) * f2 + delta_lo;
    Ok(BoundReport::new(
        "ahpatron",
        c.mistakes,
        loss + first.max(second),
        &[
            ("L", loss),
            ("f_sq", f2),
            ("N", c.n_t),
            ("M_prime", c.m_prime),
            ("Delta_upper", delta_hi),
            ("Delta_lower", delta_lo),
            ("J", c.removals),
        ],
    ))
}

/// Algorithm-dependent bound for Ahpatron with `c_t = |f_t| / U` and
/// `lambda = U / (2 sqrt(B))`. `zeta` is measured from the trace as the
/// largest `|f_t - fbar_t| / U` over halving events (zero when none occur).
pub fn check_refined_bound(
    trace: &RunTrace,
    stream: &[LabeledExample],
    comparator: &Expansion,
    gamma: f64,
) -> Result<BoundReport> {
    require_algorithm(trace, &[Algorithm::Ahpatron])?;
    let cfg = &trace.config;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(violation(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if cfg.ct != CtMode::NormRatio {
        return Err(violation(format!("requires c_t = |f_t|/U, got {}", cfg.ct)));
    }
    let b = cfg.budget.unwrap_or(0) as f64;
    let sb = b.sqrt();
    let u = cfg.radius;
    let eps = cfg.epsilon;
    if !close(cfg.rate, u / (2.0 * sb)) {
        return Err(violation(format!(
            "requires lambda = U / (2 sqrt(B)) = {}, got {}",
            u / (2.0 * sb),
            cfg.rate
        )));
    }
    if b < 16.0 {
        return Err(violation(format!("requires B >= 16, got {b}")));
    }
    let m = metrics(trace);
    let zeta = m.zeta_max.unwrap_or(0.0);
    let coef = 0.25 + 4.5 * zeta;
    let u_max = (1.0 - gamma) * sb / coef;
    if u > u_max * (1.0 + PARAM_TOLERANCE) {
        return Err(violation(format!(
            "requires U <= (1 - gamma) sqrt(B) / (1/4 + 9 zeta / 2) = {u_max} (zeta = {zeta}), got {u}"
        )));
    }
    let a = coef * u / sb;
    if !(a < eps && eps < 1.0) {
        return Err(violation(format!(
            "requires (1/4 + 9 zeta / 2) U / sqrt(B) = {a} < eps < 1 (zeta = {zeta}), got {eps}"
        )));
    }
    require_in_ball(comparator, u)?;
    let loss = common_checks(trace, stream, comparator)?;
    let c = counts(trace);
    let f2 = comparator.sq_norm();
    let delta = c.n_t / (1.0 - a) * (a - eps);
    let rhs = loss + a / gamma * loss + (1.0 - 2.0 * zeta) / gamma * f2 * sb / u + delta;
    Ok(BoundReport::new(
        "ahpatron-refined",
        c.mistakes,
        rhs,
        &[
            ("L", loss),
            ("f_sq", f2),
            ("N", c.n_t),
            ("M_prime", c.m_prime),
            ("zeta", zeta),
            ("zeta_mean", m.zeta_mean.unwrap_or(0.0)),
            ("Delta", delta),
            ("J", c.removals),
            ("gamma", gamma),
        ],
    ))
}

/// `J <= max(2 (|M'| + |N|) / B - 1, 0)` for the halving learners.
pub fn check_removal_count(trace: &RunTrace) -> Result<BoundReport> {
    require_algorithm(trace, &[Algorithm::Ahpatron, Algorithm::AhpatronNoProj])?;
    let b = trace.config.budget.unwrap_or(0) as f64;
    let c = counts(trace);
    let rhs = (2.0 * (c.m_prime + c.n_t) / b - 1.0).max(0.0);
    Ok(BoundReport::new(
        "removal-count",
        c.removals,
        rhs,
        &[("M_prime", c.m_prime), ("N", c.n_t), ("B", b)],
    ))
}

/// `sum_{t in M' u N} hinge(f_t(x_t), y_t) - |M'| >= sum_{t in N} eps`,
/// reported as `lhs = sum_N eps`, `rhs = sum hinge - |M'|`.
pub fn check_gap(trace: &RunTrace) -> Result<BoundReport> {
    if !trace.config.algorithm.is_aggressive() {
        return Err(violation(format!(
            "gap inequality applies to margin-triggered learners, not {}",
            trace.config.algorithm
        )));
    }
    let eps = trace.config.epsilon;
    let mut hinge_sum = 0.0;
    let mut m_prime = 0.0;
    let mut eps_sum = 0.0;
    for o in trace.outcomes.iter().filter(|o| o.triggered) {
        hinge_sum += (1.0 - o.margin).max(0.0);
        if o.in_m_prime() {
            m_prime += 1.0;
        } else {
            eps_sum += eps;
        }
    }
    Ok(BoundReport::new(
        "hinge-gap",
        eps_sum,
        hinge_sum - m_prime,
        &[("hinge_sum", hinge_sum), ("M_prime", m_prime)],
    ))
}

/// Per-run record of the structural invariants every learner must keep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub rounds: usize,
    pub max_active: usize,
    /// Largest `|f_t| / U`; zero for unbounded learners.
    pub max_norm_ratio: f64,
    /// Largest relative gap between the cached and recomputed `|f|^2`.
    pub max_cache_drift: f64,
    pub cache_checks: usize,
    pub removals: usize,
    pub violations: Vec<String>,
}

impl InvariantReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Relative tolerance on the norm cache.
pub const CACHE_DRIFT_TOLERANCE: f64 = 1e-8;
/// Relative tolerance on `|f_t| <= U`.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Runs `config` while checking, after every round: the active-set size
/// against the budget, the post-removal size, `|f| <= U`, and the split
/// ordering of every removal. The norm cache is compared with a fresh
/// quadratic form every `cache_every` rounds, after every removal and at
/// the end. Violations are collected rather than aborting the run.
pub fn audited_run(
    config: &LearnerConfig,
    stream: &[LabeledExample],
    cache_every: usize,
) -> Result<(RunTrace, InvariantReport)> {
    let mut rep = InvariantReport::default();
    let budget = config.budget;
    let radius = config.radius;
    let halving = config.algorithm.is_halving();
    let every = cache_every.max(1);
    let trace = run_with(config, stream, |learner, out| {
        let f = learner.hypothesis();
        let t = out.round;
        rep.rounds += 1;
        rep.max_active = rep.max_active.max(f.len());
        if let Some(b) = budget {
            if f.len() > b {
                rep.violations.push(format!("round {t}: |S| = {} > B = {b}", f.len()));
            }
        }
        if radius.is_finite() {
            let ratio = f.norm() / radius;
            rep.max_norm_ratio = rep.max_norm_ratio.max(ratio);
            if ratio > 1.0 + NORM_TOLERANCE {
                rep.violations.push(format!("round {t}: |f| = {} > U = {radius}", f.norm()));
            }
        }
        if let Some(r) = &out.removal {
            rep.removals += 1;
            let b = budget.unwrap_or(0);
            let expected = if halving { b / 2 + 1 } else { b };
            if !r.degenerate && f.len() != expected {
                rep.violations.push(format!(
                    "round {t}: post-removal size {} != {expected}",
                    f.len()
                ));
            }
            if halving && r.survivor_min_abs < r.removed_max_abs {
                rep.violations.push(format!(
                    "round {t}: survivor |alpha| {} < removed |alpha| {}",
                    r.survivor_min_abs, r.removed_max_abs
                ));
            }
        }
        if out.removal.is_some() || t % every == 0 || t + 1 == stream.len() {
            let fresh = f.recompute_norm()?;
            let fresh_sq = fresh * fresh;
            let cached = f.sq_norm();
            let drift = (cached - fresh_sq).abs() / fresh_sq.max(1.0);
            rep.cache_checks += 1;
            rep.max_cache_drift = rep.max_cache_drift.max(drift);
            if drift > CACHE_DRIFT_TOLERANCE {
                rep.violations.push(format!(
                    "round {t}: cached |f|^2 = {cached} vs recomputed {fresh_sq}"
                ));
            }
        }
        Ok(())
    })?;
    Ok((trace, rep))
}
