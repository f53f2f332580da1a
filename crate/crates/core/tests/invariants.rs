//! Property tests over randomly generated models, parameters and traces.

use apl::estimators::{iohmm_em, iohmm_gibbs, metropolis_accept, EmConfig, McmcConfig};
use apl::harness::{read_trace, write_trace};
use apl::likelihood::{ffbs, obs_loglik, smoothed_marginals};
use apl::random::{random_pomdp, random_trace, rng_from_seed};
use apl::{
    belief_update, generate_demo, softmax, solve, tiger_template, Belief, DemoTrace, PolicyConfig, SolverConfig,
    TIGER_TRUE_THETA,
};
use proptest::prelude::*;

fn model_and_trace(seed: u64, max_len: usize) -> (apl::PomdpF64, DemoTrace) {
    let mut rng = rng_from_seed(seed);
    let ns = 1 + (seed % 3) as usize;
    let na = 1 + (seed / 3 % 3) as usize;
    let nz = 1 + (seed / 9 % 3) as usize;
    let model = random_pomdp(ns, na, nz, 0.9, &mut rng);
    let len = (seed / 27) as usize % (max_len + 1);
    let trace = random_trace(&model, len, &mut rng);
    (model, trace)
}

fn tiger_theta() -> impl Strategy<Value = Vec<f64>> {
    (0.01f64..0.99, 0.01f64..0.99, 0.01f64..0.99, -300f64..100.0).prop_map(|(a, b, c, d)| vec![a, b, c, d])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn belief_updates_stay_normalized(seed in any::<u64>()) {
        let (model, trace) = model_and_trace(seed, 12);
        let mut b = model.initial_belief();
        for step in &trace.steps {
            let (next, norm) = belief_update(&model, &b, step.action, step.observation).unwrap();
            prop_assert!(norm > 0.0 && norm <= 1.0 + 1e-12);
            let total: f64 = next.weights().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(next.weights().iter().all(|x| *x >= 0.0));
            b = next;
        }
    }

    #[test]
    fn loglik_is_sum_of_filter_normalizers(seed in any::<u64>()) {
        let (model, trace) = model_and_trace(seed, 15);
        let mut b = model.initial_belief();
        let mut total = 0.0;
        for step in &trace.steps {
            let (next, norm) = belief_update(&model, &b, step.action, step.observation).unwrap();
            total += norm.ln();
            b = next;
        }
        let ll = obs_loglik(&model, &trace);
        prop_assert!((ll - total).abs() <= 1e-10 * (1.0 + total.abs()));
        prop_assert!(ll <= 1e-12);
    }

    #[test]
    fn smoothing_marginals_are_distributions(seed in any::<u64>()) {
        let (model, trace) = model_and_trace(seed, 10);
        let sm = smoothed_marginals(&model, &trace).unwrap();
        prop_assert_eq!(sm.marginals.len(), trace.len() + 1);
        for m in &sm.marginals {
            prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        let ns = model.n_states();
        for (i, pair) in sm.pairwise.iter().enumerate() {
            for s2 in 0..ns {
                let col: f64 = (0..ns).map(|s| pair[s * ns + s2]).sum();
                prop_assert!((col - sm.marginals[i + 1][s2]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ffbs_paths_have_positive_probability(seed in any::<u64>()) {
        let (model, trace) = model_and_trace(seed, 10);
        let mut rng = rng_from_seed(seed ^ 1);
        let path = ffbs(&model, &trace, &mut rng).unwrap();
        prop_assert_eq!(path.states.len(), trace.len() + 1);
        prop_assert!(model.initial()[path.initial()] > 0.0);
        let mut prev = path.initial();
        for (i, step) in trace.steps.iter().enumerate() {
            let s = path.after_step(i);
            prop_assert!(model.transition(prev, step.action, s) > 0.0);
            prop_assert!(model.observation(step.action, s, step.observation) > 0.0);
            prev = s;
        }
    }

    #[test]
    fn softmax_is_a_distribution(q in proptest::collection::vec(-1e3f64..1e3, 1..6), beta in 0f64..50.0) {
        let p = softmax(&q, beta);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let i = q.iter().position(|x| *x == best).unwrap();
        prop_assert!(p.iter().all(|x| *x <= p[i] + 1e-15));
    }

    #[test]
    fn template_rows_sum_to_one(theta in tiger_theta()) {
        let t = tiger_template();
        let m = t.instantiate(&theta).unwrap();
        for a in 0..m.n_actions() {
            for s in 0..m.n_states() {
                prop_assert!((m.transition_row(s, a).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!((m.observation_row(a, s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        prop_assert!((m.initial().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(m.reward(0, 1), theta[3]);
    }

    #[test]
    fn metropolis_rule(cur in -50f64..0.0, new in -50f64..0.0, u in 0f64..1.0) {
        let accepted = metropolis_accept(cur, new, u);
        prop_assert_eq!(accepted, u < (new - cur).exp().min(1.0));
        if new >= cur {
            prop_assert!(accepted);
        }
        prop_assert!(metropolis_accept(f64::NEG_INFINITY, new, u));
        prop_assert!(!metropolis_accept(cur, f64::NEG_INFINITY, u));
    }

    #[test]
    fn trace_files_round_trip(seed in any::<u64>()) {
        let (model, trace) = model_and_trace(seed, 40);
        let text = write_trace(&trace, model.labels());
        prop_assert_eq!(read_trace(&text, model.labels()).unwrap(), trace);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn em_ascends_the_posterior(seed in any::<u64>(), len in 5usize..60) {
        let t = tiger_template();
        let mut rng = rng_from_seed(seed);
        let theta = t.sample_prior(&mut rng);
        let model = t.instantiate(&theta).unwrap();
        let trace = random_trace(&model, len, &mut rng);
        let res = iohmm_em(&t, &trace, &EmConfig { max_iterations: 40, tolerance: 0.0 }).unwrap();
        for w in res.log_posterior_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()), "{:?}", res.log_posterior_trace);
        }
    }

    #[test]
    fn solved_values_are_bounded(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let model = random_pomdp(1 + (seed % 3) as usize, 1 + (seed / 3 % 2) as usize, 2, 0.9, &mut rng);
        let vf = solve(&model, &SolverConfig::default()).unwrap();
        let bound = model.max_abs_reward() / (1.0 - model.discount());
        for b in [model.initial_belief(), Belief::uniform(model.n_states())] {
            prop_assert!(vf.value(&b).abs() <= bound + 1e-9);
        }
    }

    #[test]
    fn gibbs_is_deterministic_under_its_seed(seed in any::<u64>()) {
        let t = tiger_template();
        let model = t.instantiate(&TIGER_TRUE_THETA).unwrap();
        let mut rng = rng_from_seed(seed);
        let trace = random_trace(&model, 20, &mut rng);
        let mcmc = McmcConfig { total_sweeps: 30, burn_in: 10, thin: 5, seed };
        let a = iohmm_gibbs(&t, &trace, &mcmc).unwrap();
        let b = iohmm_gibbs(&t, &trace, &mcmc).unwrap();
        prop_assert_eq!(a.samples, b.samples);
    }
}

#[test]
fn demos_are_deterministic_under_seeds() {
    let t = tiger_template();
    let model = t.instantiate(&TIGER_TRUE_THETA).unwrap();
    let vf = solve(&model, &SolverConfig::default()).unwrap();
    let cfg = PolicyConfig { beta: 0.3 };
    let a = generate_demo(&model, &vf, cfg, 200, 11).unwrap();
    assert_eq!(a, generate_demo(&model, &vf, cfg, 200, 11).unwrap());
    assert_ne!(a, generate_demo(&model, &vf, cfg, 200, 12).unwrap());
    assert_eq!(vf, solve(&model, &SolverConfig::default()).unwrap());
}
