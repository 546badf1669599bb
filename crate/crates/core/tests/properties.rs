mod common;

use minconsensus::bounds;
use minconsensus::delay_core::{self, ExpIssEnvelope};
use minconsensus::graph::{StructuralConstants, WeightedGraph};
use minconsensus::protocol::{self, checks, InitialCondition, NoiseModel, PerturbationModel, Scheduler};
use minconsensus::smallgain::{self, Certification, GainSystem};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_graph(seed: u64, n: usize) -> WeightedGraph {
    common::random_small_graph(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

fn model(seed: u64, max_delay: usize, gap_max: usize, amplitude: f64) -> PerturbationModel {
    PerturbationModel {
        max_delay,
        scheduler: Scheduler::GapUniform { min: 1, max: gap_max },
        noise: if amplitude > 0.0 { NoiseModel::Uniform { amplitude } } else { NoiseModel::None },
        seed,
        ..PerturbationModel::unperturbed()
    }
}

fn matrix(l: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.5f64], l),
        l,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn distances_are_a_bellman_fixed_point(seed in any::<u64>(), n in 2usize..8) {
        let g = small_graph(seed, n);
        let sc = StructuralConstants::compute(&g).unwrap();
        prop_assert_eq!(&sc.distances, &common::path_distances(&g));
        for i in 0..n {
            if g.is_source(i) {
                prop_assert_eq!(sc.distances[i], 0.0);
                prop_assert!(sc.constraining_sets[i].is_empty());
            } else {
                let best = g.neighbors(i).iter().map(|nb| sc.distances[nb.node] + nb.weight).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(sc.distances[i], best);
                prop_assert!(!sc.constraining_sets[i].is_empty());
            }
        }
    }

    #[test]
    fn zeta_and_diameter_are_in_range(seed in any::<u64>(), n in 2usize..8) {
        let g = small_graph(seed, n);
        let sc = StructuralConstants::compute(&g).unwrap();
        prop_assert!(sc.zeta > 0.0 && sc.zeta < 1.0);
        prop_assert!(sc.effective_diameter >= 1 && sc.effective_diameter <= n);
    }

    #[test]
    fn perturbed_runs_satisfy_per_step_invariants(
        seed in any::<u64>(),
        n in 3usize..8,
        max_delay in 0usize..3,
        gap_max in 1usize..4,
        amplitude in prop_oneof![Just(0.0), 0.0..0.5f64],
    ) {
        let g = small_graph(seed, n);
        let sc = StructuralConstants::compute(&g).unwrap();
        let pm = model(seed, max_delay, gap_max, amplitude);
        let trace = protocol::run_perturbed(&g, &sc, &pm, &InitialCondition::UniformHalfdmax, 60).unwrap();
        prop_assert!(checks::check_anchoring(&g, &trace).pass);
        prop_assert!(checks::check_schedule_window(&g, &trace).pass);
        prop_assert!(checks::check_delay_composition(&g, &trace).pass);
        prop_assert!(trace.estimates().iter().flatten().all(|&x| x >= 0.0 && x.is_finite()));
        prop_assert!(trace.input_sup_norm() <= amplitude);
        let lemma1 = checks::check_lemma1(&g, &sc, &trace, trace.input_sup_norm(), 1e-12);
        prop_assert!(lemma1.pass(), "{:?}", lemma1);
        let window = checks::check_lemma3_window(&sc, &trace, trace.input_sup_norm(), 1e-12);
        prop_assert!(window.pass, "{:?}", window);

        let again = protocol::run_perturbed(&g, &sc, &pm, &InitialCondition::UniformHalfdmax, 60).unwrap();
        prop_assert_eq!(trace.estimates(), again.estimates());
    }

    #[test]
    fn synchronous_delay_free_error_never_grows(seed in any::<u64>(), n in 2usize..8) {
        let g = small_graph(seed, n);
        let sc = StructuralConstants::compute(&g).unwrap();
        let pm = PerturbationModel { seed, ..PerturbationModel::unperturbed() };
        let trace = protocol::run_perturbed(&g, &sc, &pm, &InitialCondition::UniformHalfdmax, 4 * n).unwrap();
        let sup = trace.error_sup();
        // estimates minus distances round differently from step to step
        prop_assert!(sup.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let mut x = trace.estimates()[0].clone();
        for k in 1..=trace.horizon() {
            x = protocol::step_nominal(&g, &x);
            prop_assert_eq!(&x, &trace.estimates()[k]);
        }
    }

    #[test]
    fn bound_series_is_non_increasing(
        zeta in 0.05..0.99f64,
        diameter in 1usize..20,
        delta in 1usize..4,
        max_delay in 0usize..3,
        a in 0.0..0.1f64,
        xi in 0.0..100.0f64,
    ) {
        let bp = bounds::BoundParameters::new(zeta, diameter, delta, max_delay, a).unwrap();
        let mut prev = f64::INFINITY;
        for k in bp.first_asserted()..bp.first_asserted() + 500 {
            let b = bp.value(k, xi);
            prop_assert!(b <= prev);
            prop_assert!(b >= bp.input_gain * a);
            prev = b;
        }
    }

    #[test]
    fn envelope_tightest_overshoot_matches_brute_force(
        norms in prop::collection::vec(0.0..10.0f64, 1..60),
        rate in 0.5..0.99f64,
        gain in 0.0..2.0f64,
        u in 0.0..0.5f64,
        from_k in 0usize..5,
    ) {
        let xi = norms.iter().take(from_k + 1).fold(0.0, |m: f64, &x| m.max(x)).max(1.0);
        let env = ExpIssEnvelope { overshoot: 1.0, rate, input_gain: gain };
        let r = delay_core::check_expiss_envelope_values(&norms, xi, u, &env, from_k, 0.0);
        let brute = norms
            .iter()
            .enumerate()
            .skip(from_k)
            .map(|(k, &x)| (x - gain * u) / (rate.powf(k as f64) * xi))
            .fold(1.0, f64::max);
        prop_assert!((r.tightest_overshoot - brute).abs() <= 1e-12 * brute);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn small_gain_agrees_with_cycle_enumeration(slopes in (1usize..6).prop_flat_map(matrix)) {
        let gs = GainSystem::new(slopes.clone(), vec![]).unwrap();
        let oracle = common::max_cycle_product(&slopes);
        match smallgain::certify(&gs).unwrap() {
            Certification::Feasible(c) => {
                prop_assert!(oracle < 1.0);
                prop_assert!(c.kappa < 1.0);
                prop_assert!(c.sigma.iter().all(|&s| s > 0.0 && s.is_finite()));
                prop_assert!(gs.scaled_gain(&c.sigma) <= c.kappa + 1e-9);
            }
            Certification::Infeasible(w) => {
                prop_assert!(oracle >= 1.0 - 1e-12);
                prop_assert!((gs.cycle_product(&w.infeasible_cycle) - w.product).abs() <= 1e-12);
                prop_assert!(w.product >= 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn composite_map_is_k_bounded(seed in any::<u64>(), n in 3usize..8, max_delay in 0usize..3) {
        let g = small_graph(seed, n);
        let sc = StructuralConstants::compute(&g).unwrap();
        let pm = model(seed, max_delay, 3, 0.2);
        let r = protocol::check_k_boundedness(&g, &sc, &pm, 50, seed).unwrap();
        prop_assert!(r.pass(), "{:?}", r.first_violation);
    }
}
