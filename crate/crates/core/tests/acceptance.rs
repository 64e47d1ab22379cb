//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints a PASS/FAIL line; exits nonzero if any criterion fails.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rrnet::abc::{transform_data, AbcOperator};
use rrnet::algorithms::{initial_iterate, run, Init, Method, RunConfig, Simulator};
use rrnet::harness::verify::{verify, Suite};
use rrnet::harness::{prepare, run_all, run_sweep, ExperimentConfig};
use rrnet::linalg::{mean_row, Mat, Vector};
use rrnet::metrics::{power_law_fit, TrajectoryRecord};
use rrnet::objective::{make_quadratic, ObjectiveSpec, QuadraticParams};
use rrnet::shuffling::{rr_variance_check, PermutationStream};
use rrnet::stepsize::{theory_constants, Schedule, SpectralConstants};
use rrnet::topology::{build_graph, lazify, metropolis_weights, GraphKind, MixingMatrix};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn graph(kind: GraphKind, n: usize) -> MixingMatrix {
    metropolis_weights(&build_graph(&kind, n).unwrap())
}

fn grid_for(n: usize) -> GraphKind {
    match n {
        4 => GraphKind::Grid { rows: 2, cols: 2 },
        8 => GraphKind::Grid { rows: 2, cols: 4 },
        _ => GraphKind::Grid { rows: 4, cols: 4 },
    }
}

fn config(pairs: &[(&str, &str)]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in pairs {
        cfg.set(k, v).unwrap();
    }
    cfg
}

/// Per-epoch mean of `metric` across seeds, one curve per method.
fn seed_means(
    cfg: &ExperimentConfig,
    metric: fn(&TrajectoryRecord) -> f64,
) -> Vec<(Method, Vec<f64>)> {
    let prepared = prepare(cfg).unwrap();
    let runs = run_all(cfg, &prepared, 8).unwrap();
    cfg.methods
        .iter()
        .map(|&method| {
            let curves: Vec<Vec<f64>> = runs
                .iter()
                .filter(|(m, _, out)| *m == method && !out.diverged)
                .map(|(_, _, out)| out.records.iter().map(metric).collect())
                .collect();
            assert_eq!(curves.len(), cfg.seeds.len(), "{method} diverged");
            let len = curves[0].len();
            let mean = (0..len)
                .map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / curves.len() as f64)
                .collect();
            (method, mean)
        })
        .collect()
}

fn ring8_quadratic() -> ObjectiveSpec {
    make_quadratic(&QuadraticParams::new(8, 5, 4, 2024)).unwrap()
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let checks = verify(Suite::Abc, None);
    let elapsed = started.elapsed().as_secs_f64();
    let worst = checks.iter().map(|c| c.measured).fold(0.0, f64::max);
    let all = checks.iter().all(|c| c.passed);
    let names: Vec<&str> = checks.iter().map(|c| c.name.as_str()).collect();
    outcome(
        all && elapsed < 1.0,
        format!("max rel deviation {worst:.2e} (tol 1e-9) over [{}], {elapsed:.3}s", names.join(", ")),
    )
}

/// Worst `|ȳ − mean ∇f_{i,π_ℓ}(x_i)|` and worst mean-iterate residual over
/// `epochs` epochs.
fn identities(method: Method, w: &MixingMatrix, obj: &ObjectiveSpec, epochs: usize, alpha: f64) -> (f64, f64) {
    let stream = PermutationStream::new(11, method.default_sampling());
    let x0 = initial_iterate(Init::Random, obj.n(), obj.dim(), 11);
    let mut sim = Simulator::new(method, w, obj, stream, false, x0).unwrap();
    let (mut tracking, mut mean_step) = (0.0f64, 0.0f64);
    for _ in 0..epochs {
        sim.step_epoch_observed(alpha, &mut |st| {
            // Independent recomputation of the visited gradients.
            let fresh = Mat::from_fn(obj.n(), obj.dim(), |i, q| {
                let xi: Vector = st.x.row(i).transpose();
                obj.component_grad(i, st.comps[i], &xi).unwrap()[q]
            });
            let gbar = mean_row(&fresh);
            if let Some(y) = st.tracker {
                tracking = tracking.max((mean_row(y) - &gbar).amax());
            }
            let predicted = mean_row(st.x) - &gbar * st.alpha;
            mean_step = mean_step.max((mean_row(st.x_next) - predicted).amax());
        });
    }
    (tracking, mean_step)
}

fn criterion_2() -> Outcome {
    let obj = ring8_quadratic();
    let alpha = 0.05 / obj.constants().l;
    let (tracking, _) = identities(Method::Gtrr, &graph(GraphKind::Ring, 8), &obj, 50, alpha);
    outcome(tracking <= 1e-10, format!("max |ybar - mean grad| = {tracking:.2e} over 50 epochs (tol 1e-10)"))
}

fn criterion_3() -> Outcome {
    let obj = ring8_quadratic();
    let alpha = 0.05 / obj.constants().l;
    let ring = graph(GraphKind::Ring, 8);
    let lazy = lazify(&ring, 0.5).unwrap();
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for (method, w) in [(Method::Crr, &ring), (Method::Drr, &ring), (Method::Gtrr, &ring), (Method::Edrr, &lazy)] {
        let (_, mean_step) = identities(method, w, &obj, 50, alpha);
        worst = worst.max(mean_step);
        parts.push(format!("{method} {mean_step:.1e}"));
    }
    outcome(worst <= 1e-10, format!("{} (tol 1e-10)", parts.join(", ")))
}

/// Heap's algorithm.
fn permutations(m: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == 1 {
            out.push(a.clone());
            return;
        }
        heap(k - 1, a, out);
        for i in 0..k - 1 {
            if k % 2 == 0 {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            heap(k - 1, a, out);
        }
    }
    let mut out = Vec::new();
    heap(m, &mut (0..m).collect(), &mut out);
    out
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for m in 2..=6 {
        let xs: Vec<Vector> = (0..m).map(|_| Vector::from_fn(3, |_, _| rng.random_range(-2.0..2.0))).collect();
        let mean = xs.iter().fold(Vector::zeros(3), |acc, x| acc + x) / m as f64;
        let sigma_sq = xs.iter().map(|x| (x - &mean).norm_squared()).sum::<f64>() / m as f64;
        let perms = permutations(m);
        assert_eq!(perms.len(), (1..=m).product::<usize>());
        for l in 1..=m {
            let exact = perms
                .iter()
                .map(|p| {
                    let prefix = p[..l].iter().fold(Vector::zeros(3), |acc, &k| acc + &xs[k]) / l as f64;
                    (prefix - &mean).norm_squared()
                })
                .sum::<f64>()
                / perms.len() as f64;
            let formula = (m - l) as f64 / (l as f64 * (m - 1) as f64) * sigma_sq;
            let (lib_empirical, lib_predicted) = rr_variance_check(&xs, l).unwrap();
            worst = worst
                .max((exact - formula).abs())
                .max((lib_empirical - exact).abs())
                .max((lib_predicted - formula).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e} over m = 2..6, all l (tol 1e-12)"))
}

fn criterion_5() -> Outcome {
    let mut worst_gamma = 0.0f64;
    let (mut worst_v, mut worst_vinv) = (0.0f64, 0.0f64);
    for n in [4, 8, 16] {
        for kind in [GraphKind::Ring, grid_for(n), GraphKind::Complete] {
            let w = graph(kind, n);
            let td = transform_data(&AbcOperator::gtrr(&w).unwrap()).unwrap();
            worst_gamma = worst_gamma.max((td.gamma - w.spectral().lambda).abs());
            worst_v = worst_v.max(td.v_norm * td.v_norm);
            worst_vinv = worst_vinv.max(td.v_inv_norm * td.v_inv_norm);
            let lazy = lazify(&w, 0.5).unwrap();
            let td = transform_data(&AbcOperator::edrr(&lazy, false).unwrap()).unwrap();
            worst_gamma = worst_gamma.max((td.gamma - lazy.spectral().lambda.sqrt()).abs());
        }
    }
    outcome(
        worst_gamma <= 1e-9 && worst_v <= 3.0 && worst_vinv <= 9.0,
        format!("max |gamma - predicted| {worst_gamma:.1e} (tol 1e-9), max |V|^2 {worst_v:.3} (<= 3), max |V^-1|^2 {worst_vinv:.3} (<= 9)"),
    )
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let ring = graph(GraphKind::Ring, 16);
    let lazy = lazify(&ring, 0.5).unwrap();
    let obj = make_quadratic(&QuadraticParams::new(16, 10, 5, 7)).unwrap();
    let (l, mu) = (obj.constants().l, obj.constants().mu.value.unwrap());
    let mut passed = true;
    let mut parts = Vec::new();
    for (method, w) in [(Method::Gtrr, &ring), (Method::Edrr, &lazy)] {
        let op = method.operator(w, false).unwrap().unwrap();
        let sc = SpectralConstants::from(&transform_data(&op).unwrap());
        let tc = theory_constants(&sc, w.spectral(), 10, l, Some(mu), 500).unwrap();
        // The 32/(1−γ²) floor on K.
        let k = tc.k_floor_terms(20.0).unwrap()[0];
        let schedule = Schedule::Decreasing { theta: 20.0, k, mu, m: 10 };
        let mut mean = vec![0.0; 501];
        for seed in 0..10 {
            let out = run(&RunConfig::new(method, 500, schedule.clone(), seed), w, &obj).unwrap();
            for (t, r) in out.records.iter().enumerate() {
                mean[t] += r.fgap_mean.unwrap() / 10.0;
            }
        }
        let ts: Vec<f64> = (50..=500).map(|t| t as f64).collect();
        let shifted: Vec<f64> = ts.iter().map(|t| t + k).collect();
        let ys = &mean[50..=500];
        let (slope, _, r2) = power_law_fit(&ts, ys).unwrap();
        let (slope_k, _, r2_k) = power_law_fit(&shifted, ys).unwrap();
        passed &= slope <= -1.7 && r2 >= 0.95;
        parts.push(format!(
            "{method}: K {k:.0}, slope {slope:.3} r2 {r2:.3} (vs t+K: slope {slope_k:.3} r2 {r2_k:.3})"
        ));
    }
    let elapsed = started.elapsed().as_secs_f64();
    passed &= elapsed < 30.0;
    outcome(passed, format!("{}; need slope <= -1.7, r2 >= 0.95; {elapsed:.1}s", parts.join("; ")))
}

fn criterion_7() -> Outcome {
    let horizons = [64usize, 128, 256, 512];
    let mut finals = Vec::new();
    let mut alphas = Vec::new();
    for t in horizons {
        let epochs = t.to_string();
        let cfg = config(&[
            ("objective.kind", "ncvx-logistic"),
            ("objective.m", "10"),
            ("objective.dim", "10"),
            ("topology.graph", "ring"),
            ("topology.agents", "16"),
            ("run.methods", "gtrr"),
            ("run.epochs", &epochs),
            ("run.seeds", "0..10"),
            ("schedule.stepsize", "auto"),
        ]);
        if let Schedule::Constant { alpha } = prepare(&cfg).unwrap().schedules[0].1 {
            alphas.push(alpha);
        }
        let mean = seed_means(&cfg, |r| r.min_grad_norm_sq.unwrap());
        finals.push(*mean[0].1.last().unwrap());
    }
    let xs: Vec<f64> = horizons.iter().map(|&t| t as f64).collect();
    let (slope, _, _) = power_law_fit(&xs, &finals).unwrap();
    let monotone = finals.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = horizons
        .iter()
        .zip(&finals)
        .zip(&alphas)
        .map(|((t, v), a)| format!("T={t}: {v:.3e} (alpha {a:.2e})"))
        .collect();
    outcome(
        slope <= -0.55 && monotone,
        format!("{}; slope {slope:.3} (need <= -0.55), monotone {monotone}", shown.join(", ")),
    )
}

fn criterion_8() -> Outcome {
    let base = [
        ("objective.kind", "logistic"),
        ("objective.m", "50"),
        ("objective.dim", "10"),
        ("objective.hetero", "1"),
        ("topology.graph", "ring"),
        ("topology.agents", "16"),
        ("run.epochs", "300"),
        ("run.seeds", "0..10"),
        ("schedule.stepsize", "const:0.001"),
    ];
    let mut tracking = config(&base);
    tracking.set("run.methods", "gtrr,dsgt").unwrap();
    // Exact diffusion needs a positive definite W.
    let mut diffusion = config(&base);
    diffusion.set("run.methods", "edrr,ed").unwrap();
    diffusion.set("topology.tau", "0.5").unwrap();
    let last = |cfg: &ExperimentConfig| -> Vec<f64> {
        seed_means(cfg, |r| r.fgap_bar.unwrap())
            .into_iter()
            .map(|(_, c)| *c.last().unwrap())
            .collect()
    };
    let (gt, ed) = (last(&tracking), last(&diffusion));
    let (r_gt, r_ed) = (gt[1] / gt[0], ed[1] / ed[0]);
    outcome(
        r_gt >= 2.0 && r_ed >= 2.0,
        format!(
            "gtrr {:.3e} vs dsgt {:.3e} (x{r_gt:.1}), edrr {:.3e} vs ed {:.3e} (x{r_ed:.1}); need x2",
            gt[0], gt[1], ed[0], ed[1]
        ),
    )
}

fn criterion_9() -> Outcome {
    let at_200 = |g: &str| -> f64 {
        let cfg = config(&[
            ("topology.graph", g),
            ("topology.agents", "16"),
            ("objective.m", "10"),
            ("objective.dim", "5"),
            ("run.methods", "gtrr"),
            ("run.epochs", "200"),
            ("run.seeds", "0..10"),
            ("schedule.stepsize", "const:0.01"),
        ]);
        *seed_means(&cfg, |r| r.consensus_sq.unwrap())[0].1.last().unwrap()
    };
    let (ring, grid) = (at_200("ring"), at_200("grid:4x4"));
    outcome(ring > grid, format!("consensus_sq at T=200: ring {ring:.3e}, grid {grid:.3e}"))
}

fn criterion_10() -> Outcome {
    let ring = graph(GraphKind::Ring, 16);
    let lazy = lazify(&ring, 0.5).unwrap();
    // Heterogeneous across agents, identical components within an agent.
    let mut q = QuadraticParams::new(16, 10, 5, 7);
    q.noise = 0.0;
    q.component_spread = 0.0;
    let obj = make_quadratic(&q).unwrap();
    let l = obj.constants().l;
    let sc = SpectralConstants::from(&transform_data(&AbcOperator::gtrr(&ring).unwrap()).unwrap());
    let alpha = theory_constants(&sc, ring.spectral(), 10, l, obj.constants().mu.value, 500)
        .unwrap()
        .alpha_max_ncvx;
    let worst = |method: Method, w: &MixingMatrix, pick: fn(f64, f64) -> f64, start: f64| {
        (0..3).fold(start, |acc, seed| {
            let mut cfg = RunConfig::new(method, 500, Schedule::Constant { alpha }, seed);
            cfg.init = Init::Random;
            let out = run(&cfg, w, &obj).unwrap();
            pick(acc, out.records.last().unwrap().consensus_sq.unwrap())
        })
    };
    let gtrr = worst(Method::Gtrr, &ring, f64::max, 0.0);
    let edrr = worst(Method::Edrr, &lazy, f64::max, 0.0);
    let dsgd = worst(Method::Dsgd, &ring, f64::min, f64::INFINITY);
    outcome(
        gtrr < 1e-10 && edrr < 1e-10 && dsgd > 1e-6,
        format!(
            "alpha {alpha:.3e}: gtrr {gtrr:.3e} (< 1e-10), edrr {edrr:.3e} (< 1e-10), dsgd {dsgd:.3e} (> 1e-6)"
        ),
    )
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn criterion_11() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (tag, workers) in [("a", 1), ("b", 1), ("c", 4)] {
        let mut cfg = config(&[
            ("topology.agents", "8"),
            ("objective.m", "6"),
            ("run.methods", "gtrr,edrr,dsgd,crr"),
            ("topology.tau", "0.5"),
            ("run.epochs", "40"),
            ("run.seeds", "0..4"),
            ("run.inner_metrics", "true"),
        ]);
        cfg.out = root.path().join(tag);
        run_sweep(&cfg, workers).unwrap();
        outputs.push(read_dir_bytes(&cfg.out));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    outcome(same, format!("{} files identical across 2 runs at 1 worker and 1 at 4", outputs[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("1 abc equivalence", criterion_1),
        ("2 gradient tracking identity", criterion_2),
        ("3 mean-iterate identity", criterion_3),
        ("4 shuffled prefix variance", criterion_4),
        ("5 spectral transform", criterion_5),
        ("6 PL rate", criterion_6),
        ("7 nonconvex rate", criterion_7),
        ("8 method ordering", criterion_8),
        ("9 topology sensitivity", criterion_9),
        ("10 exactness contrast", criterion_10),
        ("11 determinism", criterion_11),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let o = check();
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("{status} criterion {name}: {} [{:.1}s]", o.detail, started.elapsed().as_secs_f64());
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
