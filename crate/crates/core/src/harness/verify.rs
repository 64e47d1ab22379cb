//! Self-checks runnable from the command line. Failures are reported, not
//! raised.

use std::fmt;
use std::str::FromStr;

use crate::abc::{transform_data, AbcOperator, AbcSpec};
use crate::algorithms::{initial_iterate, Init, Method, Simulator};
use crate::error::{Error, Result};
use crate::linalg::{max_rel_deviation, Mat, Vector};
use crate::objective::{make_logistic, make_quadratic, Family, LogisticParams, ObjectiveSpec, QuadraticParams};
use crate::shuffling::{rr_variance_check, PermutationStream, SamplingMode};
use crate::topology::{build_graph, lazify, metropolis_weights, GraphKind, MixingMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    fn at_most(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            passed: measured <= tolerance,
            measured,
            tolerance,
        }
    }

    fn failed(name: impl Into<String>, why: &Error) -> Self {
        Check {
            name: format!("{} ({why})", name.into()),
            passed: false,
            measured: f64::NAN,
            tolerance: f64::NAN,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: measured {:.3e}, tolerance {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Abc,
    Shuffle,
    Spectral,
    Gradcheck,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "abc" => Ok(Suite::Abc),
            "shuffle" => Ok(Suite::Shuffle),
            "spectral" => Ok(Suite::Spectral),
            "gradcheck" => Ok(Suite::Gradcheck),
            "all" => Ok(Suite::All),
            other => Err(Error::Config(format!(
                "unknown suite {other:?} (abc | shuffle | spectral | gradcheck | all)"
            ))),
        }
    }
}

pub fn verify(suite: Suite, abc: Option<&AbcSpec>) -> Vec<Check> {
    match suite {
        Suite::Abc => verify_abc(abc),
        Suite::Shuffle => verify_shuffle(),
        Suite::Spectral => verify_spectral(),
        Suite::Gradcheck => verify_gradcheck(),
        Suite::All => {
            let mut all = verify_abc(abc);
            all.extend(verify_shuffle());
            all.extend(verify_spectral());
            all.extend(verify_gradcheck());
            all
        }
    }
}

fn ring(n: usize) -> MixingMatrix {
    metropolis_weights(&build_graph(&GraphKind::Ring, n).expect("ring is valid"))
}

/// Random quadratic on a ring of 8 with `m = 5`, `p = 4`.
fn abc_problem() -> ObjectiveSpec {
    make_quadratic(&QuadraticParams::new(8, 5, 4, 2024)).expect("valid quadratic")
}

const ABC_EPOCHS: usize = 5;
const ABC_TOL: f64 = 1e-9;

/// Largest relative deviation between a native method and both the generic
/// and the transformed recursion of `op` over [`ABC_EPOCHS`] epochs.
fn native_vs_operator(method: Method, w: &MixingMatrix, op: &AbcOperator, obj: &ObjectiveSpec, alpha: f64) -> Result<(f64, f64)> {
    let stream = PermutationStream::new(7, SamplingMode::Reshuffle);
    let x0 = initial_iterate(Init::Random, obj.n(), obj.dim(), 7);
    let mut native = Simulator::new(method, w, obj, stream, false, x0.clone())?;
    let mut generic = op.start(x0.clone());
    let mut transformed = op.start_transformed(x0);
    let (mut dev_generic, mut dev_transformed) = (0.0_f64, 0.0_f64);
    for t in 0..ABC_EPOCHS {
        let orders = native.orders(t);
        native.step_epoch(alpha);
        op.abc_epoch(obj, &mut generic, &orders, alpha);
        op.transformed_epoch(obj, &mut transformed, &orders, alpha);
        dev_generic = dev_generic.max(max_rel_deviation(native.x(), &generic.x));
        dev_transformed = dev_transformed.max(max_rel_deviation(native.x(), &transformed.x));
    }
    Ok((dev_generic, dev_transformed))
}

pub fn verify_abc(spec: Option<&AbcSpec>) -> Vec<Check> {
    let obj = abc_problem();
    let alpha = 0.05 / obj.constants().l;
    let mut out = Vec::new();
    let lazy = lazify(&ring(8), 0.5).expect("τ = 0.5 is valid");
    let presets = matches!(spec, None | Some(AbcSpec::Gtrr) | Some(AbcSpec::Edrr));
    if presets && spec != Some(&AbcSpec::Edrr) {
        let w = ring(8);
        match AbcOperator::gtrr(&w).and_then(|op| native_vs_operator(Method::Gtrr, &w, &op, &obj, alpha)) {
            Ok((g, t)) => {
                out.push(Check::at_most("abc: gtrr native vs generic recursion", g, ABC_TOL));
                out.push(Check::at_most("abc: gtrr native vs transformed recursion", t, ABC_TOL));
            }
            Err(e) => out.push(Check::failed("abc: gtrr", &e)),
        }
    }
    if presets && spec != Some(&AbcSpec::Gtrr) {
        match AbcOperator::edrr(&lazy, false).and_then(|op| native_vs_operator(Method::Edrr, &lazy, &op, &obj, alpha)) {
            Ok((g, t)) => {
                out.push(Check::at_most("abc: edrr native vs generic recursion", g, ABC_TOL));
                out.push(Check::at_most("abc: edrr native vs transformed recursion", t, ABC_TOL));
            }
            Err(e) => out.push(Check::failed("abc: edrr", &e)),
        }
        match edrr_native_vs_primal_dual(&lazy, &obj, alpha) {
            Ok(d) => out.push(Check::at_most("abc: edrr native vs primal-dual form", d, ABC_TOL)),
            Err(e) => out.push(Check::failed("abc: edrr primal-dual", &e)),
        }
    }
    if let Some(custom @ AbcSpec::Custom { .. }) = spec {
        match custom.build(&lazy).and_then(|op| generic_vs_transformed(&op, &obj, alpha)) {
            Ok(d) => out.push(Check::at_most(format!("abc: {custom} generic vs transformed"), d, ABC_TOL)),
            Err(e) => out.push(Check::failed(format!("abc: {custom}"), &e)),
        }
    }
    out
}

fn edrr_native_vs_primal_dual(w: &MixingMatrix, obj: &ObjectiveSpec, alpha: f64) -> Result<f64> {
    let stream = PermutationStream::new(7, SamplingMode::Reshuffle);
    let x0 = initial_iterate(Init::Random, obj.n(), obj.dim(), 7);
    let mut a = Simulator::new(Method::Edrr, w, obj, stream, false, x0.clone())?;
    let mut b = Simulator::new(Method::EdrrPd, w, obj, stream, false, x0)?;
    let mut worst = 0.0_f64;
    for _ in 0..ABC_EPOCHS {
        a.step_epoch(alpha);
        b.step_epoch(alpha);
        worst = worst.max(max_rel_deviation(a.x(), b.x()));
    }
    Ok(worst)
}

fn generic_vs_transformed(op: &AbcOperator, obj: &ObjectiveSpec, alpha: f64) -> Result<f64> {
    let stream = PermutationStream::new(7, SamplingMode::Reshuffle);
    let x0 = initial_iterate(Init::Random, obj.n(), obj.dim(), 7);
    let mut generic = op.start(x0.clone());
    let mut transformed = op.start_transformed(x0);
    let mut worst = 0.0_f64;
    for t in 0..ABC_EPOCHS {
        let orders: Vec<Vec<usize>> = (0..obj.n()).map(|i| stream.order(i, t, obj.m())).collect();
        op.abc_epoch(obj, &mut generic, &orders, alpha);
        op.transformed_epoch(obj, &mut transformed, &orders, alpha);
        worst = worst.max(max_rel_deviation(&generic.x, &transformed.x));
    }
    Ok(worst)
}

pub fn verify_shuffle() -> Vec<Check> {
    let mut out = Vec::new();
    let mut worst = 0.0_f64;
    let mut failure = None;
    for m in 2..=6 {
        let xs: Vec<Vector> = (0..m)
            .map(|j| Vector::from_fn(3, |q, _| ((7 * j + 3 * q + m) as f64).sin() * (1.0 + j as f64)))
            .collect();
        for l in 1..=m {
            match rr_variance_check(&xs, l) {
                Ok((emp, pred)) => worst = worst.max((emp - pred).abs()),
                Err(e) => failure = Some(e),
            }
        }
    }
    match failure {
        Some(e) => out.push(Check::failed("shuffle: prefix-mean variance enumeration", &e)),
        None => out.push(Check::at_most("shuffle: prefix-mean variance enumeration, m = 2..6", worst, 1e-12)),
    }
    let draws = 60_000;
    let mut counts = [0usize; 6];
    let perms: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let stream = PermutationStream::new(99, SamplingMode::Reshuffle);
    for e in 0..draws {
        let o = stream.order(0, e, 3);
        let k = perms.iter().position(|p| p[..] == o[..]).expect("order is a permutation");
        counts[k] += 1;
    }
    let expected = draws as f64 / 6.0;
    let worst_rel = counts.iter().map(|&c| (c as f64 - expected).abs() / expected).fold(0.0, f64::max);
    out.push(Check::at_most("shuffle: permutation frequencies, m = 3", worst_rel, 0.05));
    out
}

fn graph_for(kind: &str, n: usize) -> GraphKind {
    match kind {
        "ring" => GraphKind::Ring,
        "complete" => GraphKind::Complete,
        _ => {
            let rows = (1..=n).rev().find(|r| n % r == 0 && r * r <= n).unwrap_or(1);
            GraphKind::Grid { rows, cols: n / rows }
        }
    }
}

pub fn verify_spectral() -> Vec<Check> {
    let mut out = Vec::new();
    let complete = metropolis_weights(&build_graph(&GraphKind::Complete, 8).expect("valid"));
    out.push(Check::at_most("spectral: complete graph lambda", complete.spectral().lambda.abs(), 1e-12));
    let n = 16;
    let expected = 1.0 / 3.0 + 2.0 / 3.0 * (2.0 * std::f64::consts::PI / n as f64).cos();
    out.push(Check::at_most(
        "spectral: ring n = 16 lambda closed form",
        (ring(n).spectral().lambda - expected).abs(),
        1e-12,
    ));
    for kind in ["ring", "grid", "complete"] {
        for n in [4, 8, 16] {
            let w = metropolis_weights(&build_graph(&graph_for(kind, n), n).expect("valid"));
            let lam = w.spectral().lambda;
            let recon = {
                let sp = w.spectral();
                let d = Mat::from_diagonal(&Vector::from_vec(sp.eigenvalues.clone()));
                (&sp.eigvecs * d * sp.eigvecs.transpose() - w.matrix()).amax()
            };
            out.push(Check::at_most(format!("spectral: {kind} n = {n} eigen-reconstruction"), recon, 1e-12));
            match AbcOperator::gtrr(&w).and_then(|op| transform_data(&op)) {
                Ok(td) => {
                    out.push(Check::at_most(format!("spectral: {kind} n = {n} gtrr gamma = lambda"), (td.gamma - lam).abs(), 1e-9));
                    out.push(Check::at_most(format!("spectral: {kind} n = {n} gtrr |V|^2"), td.v_norm.powi(2), 3.0));
                    out.push(Check::at_most(format!("spectral: {kind} n = {n} gtrr |V^-1|^2"), td.v_inv_norm.powi(2), 9.0));
                }
                Err(e) => out.push(Check::failed(format!("spectral: {kind} n = {n} gtrr"), &e)),
            }
            let lazy = lazify(&w, 0.5).expect("τ = 0.5 is valid");
            let lam = lazy.spectral().lambda;
            match AbcOperator::edrr(&lazy, false).and_then(|op| transform_data(&op)) {
                Ok(td) => out.push(Check::at_most(
                    format!("spectral: {kind} n = {n} edrr gamma = sqrt(lambda)"),
                    (td.gamma - lam.sqrt()).abs(),
                    1e-9,
                )),
                Err(e) => out.push(Check::failed(format!("spectral: {kind} n = {n} edrr"), &e)),
            }
        }
    }
    out
}

/// Largest relative central-difference error over a few components and
/// points.
fn gradcheck(obj: &ObjectiveSpec) -> f64 {
    let h = 1e-6;
    let p = obj.dim();
    let mut worst = 0.0_f64;
    for (i, l) in [(0, 0), (obj.n() - 1, obj.m() - 1), (obj.n() / 2, obj.m() / 2)] {
        for s in 0..3 {
            let x = Vector::from_fn(p, |q, _| ((q * 5 + s * 11 + i) as f64).sin());
            let g = obj.component_grad(i, l, &x).expect("indices in range");
            for q in 0..p {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[q] += h;
                xm[q] -= h;
                let fd = (obj.component_value(i, l, &xp).expect("in range") - obj.component_value(i, l, &xm).expect("in range"))
                    / (2.0 * h);
                worst = worst.max((fd - g[q]).abs() / g[q].abs().max(1.0));
            }
        }
    }
    worst
}

pub fn verify_gradcheck() -> Vec<Check> {
    let mut out = Vec::new();
    let quad = make_quadratic(&QuadraticParams::new(4, 3, 5, 1));
    let mut lp = LogisticParams::new(4, 6, 5, 1);
    let logistic = make_logistic(&lp);
    lp.family = Family::NonconvexLogistic { eta: 0.2 };
    let ncvx = make_logistic(&lp);
    for (name, obj) in [("quadratic", quad), ("logistic", logistic), ("ncvx-logistic", ncvx)] {
        match obj {
            Ok(obj) => out.push(Check::at_most(format!("gradcheck: {name} central differences"), gradcheck(&obj), 1e-6)),
            Err(e) => out.push(Check::failed(format!("gradcheck: {name}"), &e)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        let checks = verify(Suite::All, None);
        assert!(checks.len() > 20);
        for c in &checks {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn custom_operator_suite() {
        let spec: AbcSpec = "custom:0,1/1,-1/1".parse().unwrap();
        let checks = verify(Suite::Abc, Some(&spec));
        assert_eq!(checks.len(), 1);
        assert!(checks[0].passed, "{}", checks[0]);
    }

    #[test]
    fn suite_names() {
        assert_eq!("gradcheck".parse::<Suite>().unwrap(), Suite::Gradcheck);
        assert!("abcd".parse::<Suite>().is_err());
    }
}
