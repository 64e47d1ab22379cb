use proptest::prelude::*;

use rrnet::abc::{transform_data, AbcOperator};
use rrnet::algorithms::{initial_iterate, run, Init, Method, RunConfig, Simulator, ALL_METHODS};
use rrnet::harness::ExperimentConfig;
use rrnet::linalg::{max_rel_deviation, mean_row};
use rrnet::metrics::{parse_csv, to_csv_string};
use rrnet::objective::{make_quadratic, ObjectiveSpec, QuadraticParams};
use rrnet::shuffling::PermutationStream;
use rrnet::stepsize::Schedule;
use rrnet::topology::{lazify, metropolis_weights, Graph, MixingMatrix};

/// Ring backbone plus chords picked by `extra`.
fn connected(n: usize, extra: &[(usize, usize)]) -> MixingMatrix {
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for &(a, b) in extra {
        let (a, b) = (a % n, b % n);
        if a != b && !edges.iter().any(|&(u, v)| (u, v) == (a, b) || (u, v) == (b, a)) {
            edges.push((a, b));
        }
    }
    metropolis_weights(&Graph::from_edges(n, &edges).unwrap())
}

fn quadratic(n: usize, seed: u64) -> ObjectiveSpec {
    make_quadratic(&QuadraticParams::new(n, 4, 3, seed)).unwrap()
}

fn edges() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..12, 0usize..12), 0..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mixing_matrix_is_symmetric_doubly_stochastic(n in 3usize..12, extra in edges(), tau in 0.0f64..0.95) {
        let w = connected(n, &extra);
        let m = w.matrix();
        prop_assert!((m - m.transpose()).amax() < 1e-15);
        for i in 0..n {
            prop_assert!((m.row(i).sum() - 1.0).abs() < 1e-12);
        }
        prop_assert!(w.spectral().lambda < 1.0);
        let lazy = lazify(&w, tau).unwrap();
        let shifted = tau + (1.0 - tau) * w.spectral().lambda_min;
        prop_assert!((lazy.spectral().lambda_min - shifted).abs() < 1e-9);
        if tau >= 0.5 {
            prop_assert!(lazy.is_positive_definite());
        }
    }

    #[test]
    fn native_generic_and_transformed_agree(n in 3usize..9, extra in edges(), seed in 0u64..500) {
        let obj = quadratic(n, seed);
        let alpha = 0.05 / obj.constants().l;
        let ring = connected(n, &extra);
        let lazy = lazify(&ring, 0.5).unwrap();
        for (method, w, op) in [
            (Method::Gtrr, &ring, AbcOperator::gtrr(&ring).unwrap()),
            (Method::Edrr, &lazy, AbcOperator::edrr(&lazy, false).unwrap()),
        ] {
            let stream = PermutationStream::new(seed, method.default_sampling());
            let x0 = initial_iterate(Init::Random, n, obj.dim(), seed);
            let mut native = Simulator::new(method, w, &obj, stream, false, x0.clone()).unwrap();
            let mut generic = op.start(x0.clone());
            let mut transformed = op.start_transformed(x0);
            for t in 0..5 {
                let orders = native.orders(t);
                native.step_epoch(alpha);
                op.abc_epoch(&obj, &mut generic, &orders, alpha);
                op.transformed_epoch(&obj, &mut transformed, &orders, alpha);
                prop_assert!(max_rel_deviation(native.x(), &generic.x) < 1e-9, "{method} generic");
                prop_assert!(max_rel_deviation(native.x(), &transformed.x) < 1e-9, "{method} transformed");
            }
        }
    }

    #[test]
    fn every_method_moves_the_mean_by_the_mean_gradient(idx in 0usize..8, seed in 0u64..500, n in 2usize..8) {
        let method = ALL_METHODS[idx];
        let obj = quadratic(n, seed);
        let w = lazify(&connected(n, &[]), 0.5).unwrap();
        let stream = PermutationStream::new(seed, method.default_sampling());
        let x0 = initial_iterate(Init::Random, n, obj.dim(), seed);
        let mut sim = Simulator::new(method, &w, &obj, stream, false, x0).unwrap();
        let mut worst = 0.0f64;
        for _ in 0..4 {
            sim.step_epoch_observed(0.1 / obj.constants().l, &mut |st| {
                let gbar = mean_row(st.grads);
                let predicted = mean_row(st.x) - &gbar * st.alpha;
                worst = worst.max((mean_row(st.x_next) - predicted).amax());
                if let Some(y) = st.tracker {
                    worst = worst.max((mean_row(y) - &gbar).amax());
                }
            });
        }
        prop_assert!(worst < 1e-10, "{method}: {worst:e}");
    }

    #[test]
    fn gamma_grows_with_laziness(n in 4usize..10, extra in edges()) {
        let w = connected(n, &extra);
        let mut last = (0.0f64, 0.0f64);
        for k in 1..10 {
            let lazy = lazify(&w, k as f64 / 10.0).unwrap();
            let g = transform_data(&AbcOperator::gtrr(&lazy).unwrap()).unwrap().gamma;
            if k >= 5 {
                let e = transform_data(&AbcOperator::edrr(&lazy, false).unwrap()).unwrap().gamma;
                prop_assert!(e >= last.1 - 1e-12);
                last.1 = e;
            }
            prop_assert!(g >= last.0 - 1e-12);
            last.0 = g;
        }
    }

    #[test]
    fn csv_round_trips(seed in 0u64..200, epochs in 0usize..6) {
        let obj = quadratic(4, seed);
        let w = connected(4, &[]);
        let out = run(&RunConfig::new(Method::Gtrr, epochs, Schedule::Constant { alpha: 0.05 }, seed), &w, &obj).unwrap();
        let meta = vec![("config_hash".to_string(), "abc".to_string())];
        let text = to_csv_string(&meta, &out.records);
        let (meta_back, recs) = parse_csv(&text).unwrap();
        prop_assert_eq!(meta_back, meta);
        prop_assert_eq!(recs, out.records);
    }

    #[test]
    fn canonical_config_round_trips(
        agents in 2usize..40,
        epochs in 0usize..1000,
        seeds in prop::collection::vec(0u64..100, 1..5),
        tau in prop::option::of(0.0f64..0.99),
        methods in prop::sample::subsequence(vec!["crr", "dsgd", "drr", "dsgt", "gtrr", "ed", "edrr", "edrr-pd"], 1..4),
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.set("topology.agents", &agents.to_string()).unwrap();
        cfg.set("run.epochs", &epochs.to_string()).unwrap();
        let s: Vec<String> = seeds.iter().map(u64::to_string).collect();
        cfg.set("run.seeds", &s.join(",")).unwrap();
        if let Some(t) = tau {
            cfg.set("topology.tau", &t.to_string()).unwrap();
        }
        cfg.set("run.methods", &methods.join(",")).unwrap();
        let mut back = ExperimentConfig::default();
        back.apply_text(&cfg.canonical()).unwrap();
        back.out = cfg.out.clone();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}
