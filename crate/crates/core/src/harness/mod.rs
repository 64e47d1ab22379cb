//! Experiment orchestration: building the network and objective from a
//! config, resolving stepsizes, running seeded sweeps and writing CSV.

pub mod config;
pub mod data;
pub mod verify;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::abc::{transform_data, AbcOperator};
use crate::algorithms::{run, Method, RunConfig, RunOutput};
use crate::error::{Error, Result};
use crate::metrics::{to_csv_string, TrajectoryRecord, CSV_HEADER};
use crate::objective::{
    logistic_from_samples, make_logistic, make_quadratic, LogisticParams, ObjectiveSpec, QuadraticParams,
};
use crate::stepsize::{recommend_alpha, theory_constants, Regime, Schedule, ScheduleSpec, SpectralConstants, TheoryConstants};
use crate::topology::{lazify, metropolis_weights, MixingMatrix};

pub use config::{ExperimentConfig, ObjectiveKind};

pub fn build_mixing(cfg: &ExperimentConfig) -> Result<MixingMatrix> {
    let graph = cfg.topology.graph.build(cfg.topology.agents)?;
    let w = metropolis_weights(&graph);
    match cfg.topology.tau {
        Some(tau) => lazify(&w, tau),
        None => Ok(w),
    }
}

pub fn build_objective(cfg: &ExperimentConfig, n: usize) -> Result<ObjectiveSpec> {
    let o = &cfg.objective;
    match o.kind {
        ObjectiveKind::Quadratic => {
            let mut q = QuadraticParams::new(n, o.m, o.dim, o.data_seed);
            q.hetero = o.hetero;
            q.condition = o.condition;
            q.noise = o.noise;
            q.component_spread = o.component_spread;
            make_quadratic(&q)
        }
        ObjectiveKind::Logistic | ObjectiveKind::NcvxLogistic => {
            let mut params = LogisticParams::new(n, o.m, o.dim, o.data_seed);
            params.family = o.family();
            params.heterogeneous = o.hetero > 0.0;
            match &o.cifar10 {
                Some(dir) => {
                    let (features, labels) = data::load_cifar10(dir)?;
                    params.p = 3072;
                    logistic_from_samples(features, labels, &params)
                }
                None => make_logistic(&params),
            }
        }
    }
}

/// Theory constants for `method` on `w`. Methods outside the A/B/C family
/// borrow the gradient-tracking operator's constants.
pub fn method_constants(
    cfg: &ExperimentConfig,
    method: Method,
    w: &MixingMatrix,
    obj: &ObjectiveSpec,
) -> Result<TheoryConstants> {
    let op = match method.operator(w, cfg.strict_alg2) {
        Some(op) => op?,
        None => AbcOperator::gtrr(w)?,
    };
    let sc = if cfg.schedule.worst_case_constants {
        SpectralConstants::worst_case(op.preset, w.spectral())?
    } else {
        SpectralConstants::from(&transform_data(&op)?)
    };
    theory_constants(
        &sc,
        w.spectral(),
        obj.m(),
        obj.constants().l,
        obj.constants().mu.value,
        cfg.epochs.max(1),
    )
}

/// The schedule a run of `method` uses, plus the theory constants when they
/// could be evaluated.
pub fn resolve_schedule(
    cfg: &ExperimentConfig,
    method: Method,
    w: &MixingMatrix,
    obj: &ObjectiveSpec,
) -> Result<(Schedule, Option<TheoryConstants>)> {
    let tc = method_constants(cfg, method, w, obj).ok();
    let schedule = match &cfg.schedule.stepsize {
        ScheduleSpec::Auto => {
            let tc = tc
                .as_ref()
                .ok_or_else(|| Error::Theory(format!("cannot evaluate theory constants for {method}")))?;
            let s = recommend_alpha(tc, cfg.schedule.regime, cfg.schedule.theta)?;
            if let (Regime::Ncvx, Schedule::Constant { alpha }) = (cfg.schedule.regime, &s) {
                if !(*alpha <= tc.alpha_max_ncvx) {
                    return Err(Error::Theory(format!(
                        "prescribed α = {alpha:e} exceeds the admissible {:e}",
                        tc.alpha_max_ncvx
                    )));
                }
            }
            s
        }
        spec => spec.resolve(obj.constants().mu.value, obj.m(), cfg.schedule.patience)?,
    };
    Ok((schedule, tc))
}

/// Everything a sweep needs, validated before any run starts.
pub struct Prepared {
    pub w: MixingMatrix,
    pub obj: ObjectiveSpec,
    pub schedules: Vec<(Method, Schedule, Option<TheoryConstants>)>,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    if cfg.methods.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config("need at least one method and one seed".into()));
    }
    let w = build_mixing(cfg)?;
    let obj = build_objective(cfg, w.n())?;
    let mut schedules = Vec::new();
    for &method in &cfg.methods {
        let mode = cfg.sampling.unwrap_or_else(|| method.default_sampling());
        method.check_sampling(mode)?;
        if method.needs_positive_definite() {
            w.require_positive_definite()?;
        }
        let (s, tc) = resolve_schedule(cfg, method, &w, &obj)?;
        schedules.push((method, s, tc));
    }
    Ok(Prepared { w, obj, schedules })
}

fn schedule_label(s: &Schedule) -> String {
    match s {
        Schedule::Constant { alpha } => format!("const:{alpha:e}"),
        Schedule::Decreasing { theta, k, mu, m } => format!("dec:theta={theta:e},K={k:e},mu={mu:e},m={m}"),
        Schedule::Harmonic { a, b } => format!("harmonic:{a:e},{b:e}"),
        Schedule::Plateau { levels, patience, threshold } => {
            let l: Vec<String> = levels.iter().map(|v| format!("{v:e}")).collect();
            format!("plateau:{};patience={patience};threshold={threshold:e}", l.join(","))
        }
    }
}

fn tagged(v: &crate::objective::Tagged) -> String {
    match v.value {
        Some(x) => format!("{x:e} ({})", v.provenance),
        None => format!("absent ({})", v.provenance),
    }
}

/// `#` metadata of one run's CSV.
pub fn run_metadata(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    method: Method,
    seed: u64,
    out: &RunOutput,
) -> Vec<(String, String)> {
    let (_, schedule, tc) = prepared
        .schedules
        .iter()
        .find(|(m, _, _)| *m == method)
        .expect("method was prepared");
    let c = prepared.obj.constants();
    let sp = prepared.w.spectral();
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    let mut meta: Vec<(String, String)> = vec![
        ("config_hash".into(), cfg.hash()),
        ("method".into(), method.name().into()),
        ("seed".into(), seed.to_string()),
        ("seeds".into(), seeds.join(",")),
        ("data_seed".into(), cfg.objective.data_seed.to_string()),
        ("objective".into(), cfg.objective.kind.to_string()),
        (
            "graph".into(),
            format!("{} n={} lambda={:e} lambda_min={:e}", cfg.topology.graph, prepared.w.n(), sp.lambda, sp.lambda_min),
        ),
        ("sampling".into(), cfg.sampling.unwrap_or_else(|| method.default_sampling()).to_string()),
        ("schedule".into(), schedule_label(schedule)),
        ("L".into(), format!("{:e}", c.l)),
        ("mu".into(), tagged(&c.mu)),
        ("f_star".into(), tagged(&c.f_star)),
    ];
    if let Some(tc) = tc {
        let source = if method.operator(&prepared.w, cfg.strict_alg2).is_some() { method.name() } else { "gtrr" };
        meta.push(("constants_from".into(), format!("{source} operator")));
        meta.push(("gamma".into(), format!("{:e}", tc.gamma)));
        meta.push(("alpha_prescribed_ncvx".into(), format!("{:e}", tc.alpha_ncvx())));
        meta.push(("alpha_max_ncvx".into(), format!("{:e}", tc.alpha_max_ncvx)));
    }
    if prepared.obj.test_set().is_some() {
        meta.push(("accuracy_split".into(), "held-out 20% of the generated or loaded samples".into()));
        meta.push((
            "test_accuracy_final".into(),
            out.accuracy.map(|a| format!("{a:e}")).unwrap_or_default(),
        ));
    }
    meta
}

pub fn inner_csv(out: &RunOutput) -> String {
    let mut s = String::from("t,l,grad_norm_sq,consensus_sq\n");
    for r in &out.inner {
        s.push_str(&format!("{},{},{:e},{:e}\n", r.t, r.l, r.grad_norm_sq, r.consensus_sq));
    }
    s
}

/// Across-seed mean of each field, row by row. A field is absent when no
/// seed has it; `diverged` is set when any seed diverged by that row.
pub fn aggregate(runs: &[&[TrajectoryRecord]]) -> Vec<TrajectoryRecord> {
    let len = runs.iter().map(|r| r.len()).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let rows: Vec<&TrajectoryRecord> = runs.iter().filter_map(|r| r.get(k)).collect();
            let mean = |f: &dyn Fn(&TrajectoryRecord) -> Option<f64>| {
                let vals: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            };
            let walls: Vec<u128> = rows.iter().filter_map(|r| r.wall_ns).collect();
            TrajectoryRecord {
                t: rows[0].t,
                alpha: mean(&|r| Some(r.alpha)).unwrap_or(f64::NAN),
                grad_norm_sq: mean(&|r| r.grad_norm_sq),
                min_grad_norm_sq: mean(&|r| r.min_grad_norm_sq),
                consensus_sq: mean(&|r| r.consensus_sq),
                fgap_mean: mean(&|r| r.fgap_mean),
                fgap_bar: mean(&|r| r.fgap_bar),
                q_t: mean(&|r| r.q_t),
                e_norm_sq: mean(&|r| r.e_norm_sq),
                wall_ns: (!walls.is_empty()).then(|| walls.iter().sum::<u128>() / walls.len() as u128),
                diverged: runs.iter().any(|r| r[..r.len().min(k + 1)].iter().any(|x| x.diverged)),
            }
        })
        .collect()
}

pub struct SweepResult {
    /// `(method, seed, output)` in config order.
    pub runs: Vec<(Method, u64, RunOutput)>,
    pub files: Vec<PathBuf>,
}

impl SweepResult {
    pub fn all_diverged(&self) -> bool {
        !self.runs.is_empty() && self.runs.iter().all(|(_, _, o)| o.diverged)
    }
}

/// Runs every (method, seed) pair without writing anything.
pub fn run_all(cfg: &ExperimentConfig, prepared: &Prepared, workers: usize) -> Result<Vec<(Method, u64, RunOutput)>> {
    let jobs: Vec<(Method, Schedule, u64)> = prepared
        .schedules
        .iter()
        .flat_map(|(m, s, _)| cfg.seeds.iter().map(move |&seed| (*m, s.clone(), seed)))
        .collect();
    let one = |(method, schedule, seed): &(Method, Schedule, u64)| -> Result<(Method, u64, RunOutput)> {
        let rc = RunConfig {
            method: *method,
            epochs: cfg.epochs,
            schedule: schedule.clone(),
            sampling: cfg.sampling,
            seed: *seed,
            init: cfg.init,
            strict_alg2: cfg.strict_alg2,
            inner_metrics: cfg.inner_metrics,
            timing: cfg.timing,
        };
        Ok((*method, *seed, run(&rc, &prepared.w, &prepared.obj)?))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(one).collect())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Runs the sweep and writes one CSV per (method, seed) plus `aggregate.csv`
/// into `cfg.out`.
pub fn run_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<SweepResult> {
    let prepared = prepare(cfg)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(cfg.out.display().to_string(), e))?;
    let runs = run_all(cfg, &prepared, workers)?;
    let mut files = Vec::new();
    for (method, seed, out) in &runs {
        let path = cfg.out.join(format!("{}_seed{}.csv", method.name(), seed));
        let meta = run_metadata(cfg, &prepared, *method, *seed, out);
        write_file(&path, &to_csv_string(&meta, &out.records))?;
        files.push(path);
        if cfg.inner_metrics {
            let path = cfg.out.join(format!("{}_seed{}_inner.csv", method.name(), seed));
            write_file(&path, &inner_csv(out))?;
            files.push(path);
        }
    }
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    let mut agg = format!("# config_hash={}\n# seeds={}\n# aggregate=mean over seeds\nmethod,{CSV_HEADER}\n", cfg.hash(), seeds.join(","));
    for &method in &cfg.methods {
        let recs: Vec<&[TrajectoryRecord]> = runs
            .iter()
            .filter(|(m, _, _)| *m == method)
            .map(|(_, _, o)| o.records.as_slice())
            .collect();
        for r in aggregate(&recs) {
            agg.push_str(method.name());
            agg.push(',');
            agg.push_str(&r.csv_row());
            agg.push('\n');
        }
    }
    let path = cfg.out.join("aggregate.csv");
    write_file(&path, &agg)?;
    files.push(path);
    Ok(SweepResult { runs, files })
}

/// Lines printed by the `constants` subcommand.
pub fn describe_constants(cfg: &ExperimentConfig, method: Method) -> Result<Vec<String>> {
    let w = build_mixing(cfg)?;
    let obj = build_objective(cfg, w.n())?;
    let tc = method_constants(cfg, method, &w, &obj)?;
    let mut out = vec![
        format!("method = {method}"),
        format!("gamma = {:e}", tc.gamma),
        format!("m = {}", tc.m),
        format!("L = {:e}", tc.l),
        format!("mu = {}", tc.mu.map(|v| format!("{v:e}")).unwrap_or_else(|| "absent".into())),
        format!("T = {}", tc.t),
        format!("C1 = {:e}", tc.c1),
        format!("C2 = {:e}", tc.c2),
        format!("C3 = {:e}", tc.c3),
        format!("C4 = {:e}", tc.c4),
        format!("alpha_max_ncvx = {:e}", tc.alpha_max_ncvx),
        format!("alpha_ncvx = {:e}", tc.alpha_ncvx()),
        format!("beta = {:e}", tc.beta),
        format!("beta1 = {:e}", tc.beta1),
        format!("beta2 = {}", tc.beta2.map(|v| format!("{v:e}")).unwrap_or_else(|| "absent".into())),
        format!(
            "alpha_max_pl = {}",
            tc.alpha_max_pl.map(|v| format!("{v:e}")).unwrap_or_else(|| "absent".into())
        ),
    ];
    if tc.mu.is_some() {
        out.push(format!("K_floor(theta={:e}) = {:e}", cfg.schedule.theta, tc.k_floor(cfg.schedule.theta)?));
    }
    if let Some(op) = method.operator(&w, cfg.strict_alg2) {
        let td = transform_data(&op?)?;
        out.push(format!("V_norm_sq = {:e}", td.v_norm * td.v_norm));
        out.push(format!("V_inv_norm_sq = {:e}", td.v_inv_norm * td.v_inv_norm));
        out.push(format!("Lambda_a_norm_sq = {:e}", td.lambda_a_norm * td.lambda_a_norm));
        out.push(format!("Gamma_norm = {:e}", td.gamma_norm));
        out.push(format!("defective_blocks = {}", td.any_defective));
    }
    Ok(out)
}

/// Lines printed by the `spectrum` subcommand.
pub fn describe_spectrum(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let w = build_mixing(cfg)?;
    let sp = w.spectral();
    let eig: Vec<String> = sp.eigenvalues.iter().map(|v| format!("{v:e}")).collect();
    Ok(vec![
        format!("graph = {}", cfg.topology.graph),
        format!("n = {}", w.n()),
        format!("lambda = {:e}", sp.lambda),
        format!("gap = {:e}", sp.gap),
        format!("lambda_min = {:e}", sp.lambda_min),
        format!(
            "lambda_min_pos = {}",
            sp.lambda_min_pos.map(|v| format!("{v:e}")).unwrap_or_else(|| "absent".into())
        ),
        format!("positive_definite = {}", w.is_positive_definite()),
        format!("eigenvalues = {}", eig.join(",")),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.topology.agents = 4;
        cfg.objective.m = 3;
        cfg.objective.dim = 2;
        cfg.epochs = 5;
        cfg.schedule.stepsize = ScheduleSpec::Const(0.05);
        cfg
    }

    #[test]
    fn aggregate_is_plain_mean() {
        let mut cfg = small();
        cfg.seeds = (0..10).collect();
        let prepared = prepare(&cfg).unwrap();
        let runs = run_all(&cfg, &prepared, 3).unwrap();
        let recs: Vec<&[TrajectoryRecord]> = runs.iter().map(|(_, _, o)| o.records.as_slice()).collect();
        let agg = aggregate(&recs);
        for (k, row) in agg.iter().enumerate() {
            let mean = recs.iter().map(|r| r[k].consensus_sq.unwrap()).sum::<f64>() / 10.0;
            assert_eq!(row.consensus_sq.unwrap(), mean);
        }
    }

    #[test]
    fn edrr_without_lazify_fails_before_running() {
        let mut cfg = small();
        cfg.methods = vec![Method::Gtrr, Method::Edrr];
        assert!(matches!(prepare(&cfg), Err(Error::NotPositiveDefinite(_))));
        cfg.topology.tau = Some(0.5);
        assert!(prepare(&cfg).is_ok());
    }

    #[test]
    fn auto_stepsize_is_admissible() {
        let mut cfg = small();
        cfg.schedule.stepsize = ScheduleSpec::Auto;
        let prepared = prepare(&cfg).unwrap();
        let (_, s, tc) = &prepared.schedules[0];
        let Schedule::Constant { alpha } = s else { panic!("constant expected") };
        assert!(*alpha <= tc.as_ref().unwrap().alpha_max_ncvx);
    }

    #[test]
    fn spectrum_of_complete_graph() {
        let mut cfg = small();
        cfg.topology.graph = crate::topology::GraphSpec::Complete;
        let lines = describe_spectrum(&cfg).unwrap();
        let lam = lines.iter().find(|l| l.starts_with("lambda =")).unwrap();
        let v: f64 = lam.trim_start_matches("lambda = ").parse().unwrap();
        assert!(v.abs() < 1e-12);
    }
}
