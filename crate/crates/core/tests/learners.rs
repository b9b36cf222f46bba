use okl_core::data::{permute, synth_noisy, synth_separable};
use okl_core::diagnostics::{audited_run, metrics};
use okl_core::learners::{run, Algorithm, CtMode, Learner, LearnerConfig};
use okl_core::{KernelSpec, LabeledExample};
use proptest::prelude::*;

fn gauss(sigma: f64) -> KernelSpec {
    KernelSpec::gaussian(sigma).unwrap()
}

/// Textbook kernel Perceptron over a plain list of support points.
fn naive_perceptron(spec: &KernelSpec, stream: &[LabeledExample]) -> (Vec<f64>, usize) {
    let mut support: Vec<&LabeledExample> = Vec::new();
    let mut scores = Vec::new();
    let mut mistakes = 0;
    for ex in stream {
        let score: f64 = support.iter().map(|s| s.y.value() * spec.eval(&s.x, &ex.x)).sum();
        let pred = if score > 0.0 { 1.0 } else { -1.0 };
        if pred != ex.y.value() {
            mistakes += 1;
        }
        if ex.y.value() * score <= 0.0 {
            support.push(ex);
        }
        scores.push(score);
    }
    (scores, mistakes)
}

#[test]
fn perceptron_matches_reference_loop() {
    let s = synth_noisy(600, 4, 0.3, 0.15, 11).unwrap();
    let spec = gauss(0.8);
    let trace = run(&LearnerConfig::perceptron(spec), &s.dataset.examples).unwrap();
    let (scores, mistakes) = naive_perceptron(&spec, &s.dataset.examples);
    assert_eq!(metrics(&trace).mistakes, mistakes);
    for (o, r) in trace.outcomes.iter().zip(&scores) {
        assert!((o.score - r).abs() <= 1e-12 * (1.0 + r.abs()));
    }
}

#[test]
fn separable_linear_perceptron_obeys_margin_bound() {
    for seed in 0..5 {
        let s = synth_separable(1500, 6, 0.5, seed).unwrap().into_unit_ball().unwrap();
        let w2 = s.comparator_sq_norm();
        for ex in &s.dataset.examples {
            assert!(ex.y.value() * s.comparator_score(&ex.x) >= 1.0 - 1e-9);
            assert!(ex.x.sq_norm() <= 1.0 + 1e-12);
        }
        let trace = run(&LearnerConfig::perceptron(KernelSpec::Linear), &s.dataset.examples).unwrap();
        let m = metrics(&trace);
        assert!(m.m_prime as f64 <= w2, "seed {seed}: {} updates > |w|^2 = {w2}", m.m_prime);
    }
}

#[test]
fn halving_leaves_half_plus_one() {
    let s = synth_noisy(800, 5, 0.2, 0.2, 3).unwrap();
    for algo in [Algorithm::Ahpatron, Algorithm::AhpatronNoProj] {
        let cfg = LearnerConfig::ahpatron_default(gauss(1.0), 20, 0.6).with_algorithm(algo);
        let mut learner = Learner::new(cfg).unwrap();
        let mut halvings = 0;
        for (t, ex) in s.dataset.examples.iter().enumerate() {
            let o = learner.step(t, ex).unwrap();
            assert!(o.active_size <= 20);
            if let Some(r) = &o.removal {
                halvings += 1;
                assert_eq!(r.removed, 10);
                assert_eq!(o.active_size, 11);
                assert!(r.survivor_min_abs >= r.removed_max_abs);
            }
        }
        assert!(halvings > 3, "{algo}: only {halvings} halvings");
    }
}

#[test]
fn baselines_differ_only_in_eviction() {
    let s = synth_noisy(500, 3, 0.3, 0.2, 8).unwrap();
    let ex = &s.dataset.examples;
    let oldest = run(&LearnerConfig::budget_baseline(gauss(1.0), Algorithm::BudgetOldest, 10, 1), ex).unwrap();
    let random = run(&LearnerConfig::budget_baseline(gauss(1.0), Algorithm::BudgetRandom, 10, 1), ex).unwrap();
    let first_removal = oldest.outcomes.iter().position(|o| o.removed()).unwrap();
    assert_eq!(
        oldest.outcomes[..first_removal].iter().map(|o| o.score).collect::<Vec<_>>(),
        random.outcomes[..first_removal].iter().map(|o| o.score).collect::<Vec<_>>()
    );
    assert!(oldest.outcomes.iter().all(|o| o.active_size <= 10));
    assert!(random.outcomes.iter().all(|o| o.active_size <= 10));
}

#[test]
fn permutation_changes_the_run_but_seed_reproduces_it() {
    let s = synth_noisy(400, 3, 0.3, 0.1, 2).unwrap();
    let cfg = LearnerConfig::ahpatron_default(gauss(1.0), 16, 0.7);
    let a = run(&cfg, &permute(&s.dataset, 1).examples).unwrap();
    let b = run(&cfg, &permute(&s.dataset, 1).examples).unwrap();
    let c = run(&cfg, &permute(&s.dataset, 2).examples).unwrap();
    assert_eq!(a.outcomes, b.outcomes);
    assert_ne!(a.outcomes, c.outcomes);
}

fn any_config() -> impl Strategy<Value = LearnerConfig> {
    let algo = prop::sample::select(Algorithm::ALL.to_vec());
    (algo, 1usize..6, 0.0f64..0.95, 0.3f64..3.0, prop::bool::ANY, any::<u64>(), 0.2f64..2.0).prop_map(
        |(algo, half, eps, u, fixed, seed, sigma)| {
            let b = 2 * half;
            let k = gauss(sigma);
            let mut c = match algo {
                Algorithm::Perceptron => LearnerConfig::perceptron(k),
                Algorithm::Avp => LearnerConfig::avp(k, u, 0.5, eps),
                Algorithm::AvpAdaptive => LearnerConfig::avp_adaptive(k, u, eps),
                Algorithm::Ahpatron | Algorithm::AhpatronNoProj => {
                    let mut c = LearnerConfig::ahpatron_default(k, b, eps).with_algorithm(algo);
                    c.radius = u;
                    c.rate = u / (2.0 * (b as f64).sqrt());
                    if fixed {
                        c.ct = CtMode::Fixed(0.6);
                    }
                    c
                }
                _ => LearnerConfig::budget_baseline(k, algo, b, seed),
            };
            c.seed = seed;
            c
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Budget, norm, cache and split invariants hold on every round, and a
    /// second run with the same seed reproduces the trace exactly.
    #[test]
    fn invariants_hold_on_every_round(cfg in any_config(), data_seed in any::<u64>(), flip in 0.0f64..0.4) {
        let s = synth_noisy(250, 3, 0.3, flip, data_seed).unwrap();
        let stream = &s.dataset.examples;
        let (trace, rep) = audited_run(&cfg, stream, 1).unwrap();
        prop_assert!(rep.ok(), "{:?}", rep.violations);
        prop_assert_eq!(rep.rounds, stream.len());
        if let Some(b) = cfg.budget {
            prop_assert!(rep.max_active <= b);
        }
        let again = run(&cfg, stream).unwrap();
        prop_assert_eq!(&again.outcomes, &trace.outcomes);
        prop_assert_eq!(again.final_hypothesis.alphas(), trace.final_hypothesis.alphas());
    }

    /// Prediction is `sign(f(x))` with `sign(0) = -1`, and a mistake is
    /// recorded exactly when the prediction differs from the label.
    #[test]
    fn outcomes_are_consistent(cfg in any_config(), data_seed in any::<u64>()) {
        let s = synth_noisy(120, 2, 0.3, 0.2, data_seed).unwrap();
        let trace = run(&cfg, &s.dataset.examples).unwrap();
        for (o, ex) in trace.outcomes.iter().zip(&s.dataset.examples) {
            prop_assert_eq!(o.prediction.value(), if o.score > 0.0 { 1.0 } else { -1.0 });
            prop_assert_eq!(o.mistake, o.prediction != ex.y);
            prop_assert_eq!(o.margin, ex.y.value() * o.score);
            if o.mistake {
                prop_assert!(o.in_m_prime());
            }
        }
    }
}
