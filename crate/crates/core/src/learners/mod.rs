//! Online learners and the predict-then-update loop.
//!
//! Every learner keeps a single [`Expansion`] and, at round `t`, predicts
//! `sign(f_t(x_t))` (with `sign(0) = -1`), then decides whether to update
//! based on the margin `y_t f_t(x_t)`:
//!
//! | algorithm | update when | update |
//! |---|---|---|
//! | Perceptron | `margin <= 0` | `f + y k(x,.)` |
//! | AVP | `margin < 1 - eps` | `Proj_U(f + lambda y k(x,.))` |
//! | Ahpatron | `margin < 1 - eps` | as AVP; halve first when `|S| = B` |
//! | Budget baselines | `margin <= 0` | evict one term when full, then `f + y k(x,.)` |

mod config;
mod halving;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use config::{Algorithm, CtMode, LearnerConfig};
pub use halving::{halve, split_active_set, Halving, Split};

use crate::error::{Error, Result};
use crate::hypothesis::Expansion;
use crate::kernel::{Label, LabeledExample, SparseVector};
use crate::rng::SplitMix64;

/// Substream index for random evictions.
const EVICTION_STREAM: u64 = 3;

/// `U / sqrt(U^2 + count)`, where `count` includes the current round's
/// `y f(x) <= 0` indicator.
pub fn adaptive_rate(mistakes_so_far_inclusive: u64, radius: f64) -> f64 {
    radius / (radius * radius + mistakes_so_far_inclusive as f64).sqrt()
}

/// Details of a removal event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    /// `|f_t - fbar_t|` for halving events; `None` for single evictions.
    pub distance: Option<f64>,
    pub removed: usize,
    pub survivor_min_abs: f64,
    pub removed_max_abs: f64,
    pub eta_used: Option<f64>,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: usize,
    pub prediction: Label,
    pub score: f64,
    /// `y_t f_t(x_t)`.
    pub margin: f64,
    pub mistake: bool,
    pub triggered: bool,
    /// Rate applied to the new term; `0` when no update fired.
    pub rate: f64,
    pub removal: Option<Removal>,
    /// Active-set size after the round.
    pub active_size: usize,
    /// `|f_{t+1}|` after the round.
    pub norm: f64,
}

impl RoundOutcome {
    pub fn removed(&self) -> bool {
        self.removal.is_some()
    }

    pub fn removal_distance(&self) -> Option<f64> {
        self.removal.as_ref().and_then(|r| r.distance)
    }

    /// In `M'_T`: the margin is non-positive.
    pub fn in_m_prime(&self) -> bool {
        self.margin <= 0.0
    }

    /// In `N_T`: an update fired on a positive margin.
    pub fn in_n(&self) -> bool {
        self.triggered && self.margin > 0.0
    }
}

/// A complete run: per-round outcomes, the final hypothesis and timing.
#[derive(Clone, Debug)]
pub struct RunTrace {
    pub config: LearnerConfig,
    pub outcomes: Vec<RoundOutcome>,
    pub final_hypothesis: Expansion,
    pub elapsed: Duration,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn margins(&self) -> impl Iterator<Item = f64> + '_ {
        self.outcomes.iter().map(|o| o.margin)
    }

    pub fn removal_distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.outcomes.iter().filter_map(RoundOutcome::removal_distance)
    }
}

/// Learner state for any [`Algorithm`].
#[derive(Clone, Debug)]
pub struct Learner {
    config: LearnerConfig,
    f: Expansion,
    nonpositive_margins: u64,
    rng: SplitMix64,
}

impl Learner {
    pub fn new(config: LearnerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            f: Expansion::new(config.kernel),
            rng: SplitMix64::substream(config.seed, EVICTION_STREAM),
            nonpositive_margins: 0,
            config,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn hypothesis(&self) -> &Expansion {
        &self.f
    }

    /// `(sign(f(x)), f(x))`.
    pub fn predict(&self, x: &SparseVector) -> (Label, f64) {
        let score = self.f.evaluate(x);
        (Label::from_score(score), score)
    }

    pub fn step(&mut self, round: usize, ex: &LabeledExample) -> Result<RoundOutcome> {
        match self.config.algorithm {
            Algorithm::Perceptron => Ok(self.step_perceptron(round, ex)),
            Algorithm::Avp | Algorithm::AvpAdaptive => Ok(self.step_avp(round, ex)),
            Algorithm::Ahpatron => self.step_ahpatron(round, ex, true),
            Algorithm::AhpatronNoProj => self.step_ahpatron(round, ex, false),
            Algorithm::BudgetOldest | Algorithm::BudgetRandom => {
                self.step_budget_baseline(round, ex)
            }
        }
    }

    fn observe(&mut self, round: usize, ex: &LabeledExample) -> (RoundOutcome, Vec<f64>) {
        let row = self.f.kernel_row(&ex.x);
        let score = self.f.evaluate_row(&row);
        let margin = ex.y.value() * score;
        if margin <= 0.0 {
            self.nonpositive_margins += 1;
        }
        let prediction = Label::from_score(score);
        let outcome = RoundOutcome {
            round,
            prediction,
            score,
            margin,
            mistake: prediction != ex.y,
            triggered: false,
            rate: 0.0,
            removal: None,
            active_size: self.f.len(),
            norm: self.f.norm(),
        };
        (outcome, row)
    }

    fn finish(&self, mut outcome: RoundOutcome) -> RoundOutcome {
        outcome.active_size = self.f.len();
        outcome.norm = self.f.norm();
        outcome
    }

    fn aggressive_trigger(&self, margin: f64) -> bool {
        margin < 1.0 - self.config.epsilon
    }

    /// Update on `y f(x) <= 0` with coefficient `y`.
    pub fn step_perceptron(&mut self, round: usize, ex: &LabeledExample) -> RoundOutcome {
        let (mut out, row) = self.observe(round, ex);
        if out.margin <= 0.0 {
            out.triggered = true;
            out.rate = 1.0;
            self.f
                .insert_with_row(ex.clone(), ex.y.value(), row, out.score)
                .expect("unit coefficient is valid");
        }
        self.finish(out)
    }

    /// Update on `y f(x) < 1 - eps` with `Proj_U(f + lambda_t y k(x,.))`.
    pub fn step_avp(&mut self, round: usize, ex: &LabeledExample) -> RoundOutcome {
        let (mut out, row) = self.observe(round, ex);
        if self.aggressive_trigger(out.margin) {
            let rate = match self.config.algorithm {
                Algorithm::AvpAdaptive => adaptive_rate(self.nonpositive_margins, self.config.radius),
                _ => self.config.rate,
            };
            out.triggered = true;
            out.rate = rate;
            self.f
                .insert_with_row(ex.clone(), rate * ex.y.value(), row, out.score)
                .expect("positive finite rate");
            self.f.project_ball(self.config.radius);
        }
        self.finish(out)
    }

    /// AVP under a budget; when the active set is full the smaller half is
    /// removed (optionally projected onto the survivors) before the update.
    pub fn step_ahpatron(
        &mut self,
        round: usize,
        ex: &LabeledExample,
        project: bool,
    ) -> Result<RoundOutcome> {
        let (mut out, mut row) = self.observe(round, ex);
        if !self.aggressive_trigger(out.margin) {
            return Ok(self.finish(out));
        }
        let budget = self.config.budget.expect("validated");
        let radius = self.config.radius;
        let rate = self.config.rate;
        out.triggered = true;
        out.rate = rate;
        let mut fx = out.score;
        if self.f.len() >= budget {
            let target = match self.config.ct {
                CtMode::Fixed(c) => c * radius,
                CtMode::NormRatio => self.f.norm(),
            };
            let h = halve(&mut self.f, self.config.eta, project, target)?;
            out.removal = Some(Removal {
                distance: Some(h.distance),
                removed: h.split.removed.len(),
                survivor_min_abs: h.survivor_min_abs,
                removed_max_abs: h.removed_max_abs,
                eta_used: project.then_some(h.eta_used),
                degenerate: h.degenerate,
            });
            row = self.f.kernel_row(&ex.x);
            fx = self.f.evaluate_row(&row);
        }
        self.f.insert_with_row(ex.clone(), rate * ex.y.value(), row, fx)?;
        self.f.project_ball(radius);
        Ok(self.finish(out))
    }

    /// Perceptron update; when full, evicts the oldest or a random term first.
    pub fn step_budget_baseline(&mut self, round: usize, ex: &LabeledExample) -> Result<RoundOutcome> {
        let (mut out, mut row) = self.observe(round, ex);
        if out.margin > 0.0 {
            return Ok(self.finish(out));
        }
        out.triggered = true;
        out.rate = 1.0;
        let budget = self.config.budget.expect("validated");
        if self.f.len() >= budget {
            let pos = match self.config.algorithm {
                Algorithm::BudgetRandom => self.rng.below(self.f.len() as u64) as usize,
                _ => 0,
            };
            let term = self.f.remove(pos)?;
            row.remove(pos);
            out.removal = Some(Removal {
                distance: None,
                removed: 1,
                survivor_min_abs: self.f.terms().iter().fold(f64::INFINITY, |m, t| m.min(t.alpha.abs())),
                removed_max_abs: term.alpha.abs(),
                eta_used: None,
                degenerate: false,
            });
        }
        let fx = self.f.evaluate_row(&row);
        self.f.insert_with_row(ex.clone(), ex.y.value(), row, fx)?;
        Ok(self.finish(out))
    }
}

/// Runs `config` over `stream`, predicting then updating at every round.
pub fn run(config: &LearnerConfig, stream: &[LabeledExample]) -> Result<RunTrace> {
    run_with(config, stream, |_, _| Ok(()))
}

/// [`run`] with a hook called after every round with the updated learner.
/// An error from the hook aborts the run.
pub fn run_with<F>(config: &LearnerConfig, stream: &[LabeledExample], mut inspect: F) -> Result<RunTrace>
where
    F: FnMut(&Learner, &RoundOutcome) -> Result<()>,
{
    if stream.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut learner = Learner::new(config.clone())?;
    let start = Instant::now();
    let mut outcomes = Vec::with_capacity(stream.len());
    for (t, ex) in stream.iter().enumerate() {
        let out = learner
            .step(t, ex)
            .and_then(|out| inspect(&learner, &out).map(|_| out))
            .map_err(|e| Error::Round {
                round: t,
                source: Box::new(e),
            })?;
        outcomes.push(out);
    }
    Ok(RunTrace {
        config: config.clone(),
        outcomes,
        final_hypothesis: learner.f,
        elapsed: start.elapsed(),
    })
}
