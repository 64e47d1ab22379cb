//! The optimizers as epoch-stepping state machines over a simulated network.
//!
//! Stacked states are `n x p` (row `i` belongs to agent `i`). One call to
//! [`Simulator::step_epoch`] performs `m` inner iterations.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::abc::{transform_data, AbcOperator, TransformData};
use crate::error::{Error, Result};
use crate::linalg::{broadcast_row, consensus_error_sq, frobenius_sq, mean_row, Mat};
use crate::metrics::{diverged_record, record, TrajectoryRecord, TransformView};
use crate::objective::ObjectiveSpec;
use crate::shuffling::{PermutationStream, SamplingMode};
use crate::stepsize::Schedule;
use crate::topology::MixingMatrix;

/// Iterates with a Frobenius norm above this count as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Centralized random reshuffling: one shared iterate.
    Crr,
    Dsgd,
    Drr,
    Dsgt,
    Gtrr,
    Ed,
    /// Exact diffusion with reshuffling, x-only form.
    Edrr,
    /// Exact diffusion with reshuffling, primal-dual form.
    EdrrPd,
}

pub const ALL_METHODS: [Method; 8] = [
    Method::Crr,
    Method::Dsgd,
    Method::Drr,
    Method::Dsgt,
    Method::Gtrr,
    Method::Ed,
    Method::Edrr,
    Method::EdrrPd,
];

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Crr => "crr",
            Method::Dsgd => "dsgd",
            Method::Drr => "drr",
            Method::Dsgt => "dsgt",
            Method::Gtrr => "gtrr",
            Method::Ed => "ed",
            Method::Edrr => "edrr",
            Method::EdrrPd => "edrr-pd",
        }
    }

    /// Whether the method visits components without replacement.
    pub fn is_reshuffled(self) -> bool {
        matches!(self, Method::Crr | Method::Drr | Method::Gtrr | Method::Edrr | Method::EdrrPd)
    }

    pub fn default_sampling(self) -> SamplingMode {
        if self.is_reshuffled() {
            SamplingMode::Reshuffle
        } else {
            SamplingMode::WithReplacement
        }
    }

    pub fn check_sampling(self, mode: SamplingMode) -> Result<()> {
        if self.is_reshuffled() == mode.is_without_replacement() {
            Ok(())
        } else {
            Err(Error::SamplingMismatch {
                method: self.name().into(),
                mode: mode.to_string(),
            })
        }
    }

    /// Exact-diffusion variants need a positive definite `W`.
    pub fn needs_positive_definite(self) -> bool {
        matches!(self, Method::Ed | Method::Edrr | Method::EdrrPd)
    }

    fn is_tracking(self) -> bool {
        matches!(self, Method::Dsgt | Method::Gtrr)
    }

    /// The A/B/C operator the method is an instance of, if any.
    pub fn operator(self, w: &MixingMatrix, strict_alg2: bool) -> Option<Result<AbcOperator>> {
        match self {
            Method::Dsgt | Method::Gtrr => Some(AbcOperator::gtrr(w)),
            Method::Ed | Method::Edrr => Some(AbcOperator::edrr(w, strict_alg2)),
            Method::EdrrPd => Some(AbcOperator::edrr(w, false)),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        ALL_METHODS
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Init {
    /// Every agent starts at the origin.
    #[default]
    Same,
    /// Independent standard normal rows, keyed by the run seed.
    Random,
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "same" => Ok(Init::Same),
            "random" => Ok(Init::Random),
            other => Err(Error::Config(format!("unknown init {other:?} (same | random)"))),
        }
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Init::Same => "same",
            Init::Random => "random",
        })
    }
}

pub fn initial_iterate(init: Init, n: usize, p: usize, seed: u64) -> Mat {
    match init {
        Init::Same => Mat::zeros(n, p),
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::MAX);
            Mat::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
        }
    }
}

/// Stacked iterates plus the method-specific auxiliary state.
#[derive(Debug, Clone)]
pub struct AgentSystem {
    pub x: Mat,
    /// Gradient trackers of the tracking methods, as left by the last step.
    pub y: Option<Mat>,
    /// Dual variable of the primal-dual form.
    pub d: Option<Mat>,
    /// `x − α g` of the previous inner step (exact diffusion, x-only form).
    pub psi_prev: Option<Mat>,
    /// Epochs completed.
    pub epoch: usize,
}

/// What an observer sees at inner step `l` of epoch `epoch`.
pub struct InnerStep<'a> {
    pub epoch: usize,
    pub l: usize,
    pub alpha: f64,
    /// Component visited by each agent.
    pub comps: &'a [usize],
    pub x: &'a Mat,
    pub x_next: &'a Mat,
    /// `∇f_{i, comps[i]}(x_i)` stacked.
    pub grads: &'a Mat,
    /// Tracker used for the step (tracking methods only).
    pub tracker: Option<&'a Mat>,
}

pub struct Simulator<'a> {
    method: Method,
    obj: &'a ObjectiveSpec,
    w: Mat,
    sqrt_lap: Option<Mat>,
    stream: PermutationStream,
    strict_alg2: bool,
    state: AgentSystem,
}

impl<'a> Simulator<'a> {
    pub fn new(
        method: Method,
        w: &MixingMatrix,
        obj: &'a ObjectiveSpec,
        stream: PermutationStream,
        strict_alg2: bool,
        x0: Mat,
    ) -> Result<Self> {
        method.check_sampling(stream.mode())?;
        if w.n() != obj.n() {
            return Err(Error::Config(format!("W is {}x{} but the objective has {} agents", w.n(), w.n(), obj.n())));
        }
        if x0.nrows() != obj.n() || x0.ncols() != obj.dim() {
            return Err(Error::Config(format!(
                "initial iterate is {}x{}, expected {}x{}",
                x0.nrows(),
                x0.ncols(),
                obj.n(),
                obj.dim()
            )));
        }
        if method.needs_positive_definite() {
            w.require_positive_definite()?;
        }
        let x = if method == Method::Crr {
            broadcast_row(&mean_row(&x0), obj.n())
        } else {
            x0
        };
        let sqrt_lap = (method == Method::EdrrPd).then(|| w.sqrt_laplacian());
        let d = (method == Method::EdrrPd).then(|| Mat::zeros(obj.n(), obj.dim()));
        Ok(Simulator {
            method,
            obj,
            w: w.matrix().clone(),
            sqrt_lap,
            stream,
            strict_alg2,
            state: AgentSystem {
                x,
                y: None,
                d,
                psi_prev: None,
                epoch: 0,
            },
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn state(&self) -> &AgentSystem {
        &self.state
    }

    pub fn x(&self) -> &Mat {
        &self.state.x
    }

    /// Component orders of epoch `t`, one per agent. The centralized method
    /// follows agent 0's order everywhere.
    pub fn orders(&self, t: usize) -> Vec<Vec<usize>> {
        let (n, m) = (self.obj.n(), self.obj.m());
        if self.method == Method::Crr {
            vec![self.stream.order(0, t, m); n]
        } else {
            (0..n).map(|i| self.stream.order(i, t, m)).collect()
        }
    }

    pub fn step_epoch(&mut self, alpha: f64) {
        self.step_epoch_observed(alpha, &mut |_| {});
    }

    pub fn step_epoch_observed(&mut self, alpha: f64, observe: &mut dyn FnMut(&InnerStep<'_>)) {
        let t = self.state.epoch;
        let orders = self.orders(t);
        let m = self.obj.m();
        let n = self.obj.n();
        let comps_at = |l: usize| -> Vec<usize> { orders.iter().map(|o| o[l]).collect() };
        let obj = self.obj;

        if self.method.is_tracking() {
            let mut comps = comps_at(0);
            let mut g = obj.stacked_component_grads(&self.state.x, &comps);
            let mut y = g.clone();
            for l in 0..m {
                let x_next = &self.w * (&self.state.x - &y * alpha);
                observe(&InnerStep {
                    epoch: t,
                    l,
                    alpha,
                    comps: &comps,
                    x: &self.state.x,
                    x_next: &x_next,
                    grads: &g,
                    tracker: Some(&y),
                });
                if l + 1 < m {
                    let next_comps = comps_at(l + 1);
                    let g_next = obj.stacked_component_grads(&x_next, &next_comps);
                    y = &self.w * &y + &g_next - &g;
                    g = g_next;
                    comps = next_comps;
                }
                self.state.x = x_next;
            }
            self.state.y = Some(y);
        } else {
            if self.method == Method::Edrr && self.strict_alg2 {
                self.state.psi_prev = None;
            }
            for l in 0..m {
                let comps = comps_at(l);
                let g = obj.stacked_component_grads(&self.state.x, &comps);
                let x_next = match self.method {
                    Method::Crr => {
                        let gbar = mean_row(&g);
                        &self.state.x - broadcast_row(&gbar, n) * alpha
                    }
                    Method::Dsgd | Method::Drr => &self.w * (&self.state.x - &g * alpha),
                    Method::Ed | Method::Edrr => {
                        let psi = &self.state.x - &g * alpha;
                        let half = match &self.state.psi_prev {
                            Some(prev) => &self.state.x + &psi - prev,
                            None => psi.clone(),
                        };
                        self.state.psi_prev = Some(psi);
                        &self.w * half
                    }
                    Method::EdrrPd => {
                        let s = self.sqrt_lap.as_ref().expect("primal-dual form keeps (I − W)^{1/2}");
                        let d = self.state.d.as_mut().expect("primal-dual form keeps d");
                        let x_next = &self.w * (&self.state.x - &g * alpha) - &*s * &*d;
                        *d += s * &x_next;
                        x_next
                    }
                    Method::Dsgt | Method::Gtrr => unreachable!(),
                };
                observe(&InnerStep {
                    epoch: t,
                    l,
                    alpha,
                    comps: &comps,
                    x: &self.state.x,
                    x_next: &x_next,
                    grads: &g,
                    tracker: None,
                });
                self.state.x = x_next;
            }
        }
        self.state.epoch += 1;
    }

    /// `B z_t^0` of the A/B/C form at the current epoch boundary.
    fn bz(&self, op: &AbcOperator) -> Mat {
        let x = &self.state.x;
        match self.method {
            Method::Dsgt | Method::Gtrr => &op.b * op.h(x),
            Method::Ed | Method::Edrr => match (&self.state.psi_prev, self.strict_alg2 && self.method == Method::Edrr) {
                (Some(prev), false) => &self.w * (prev - x),
                _ => Mat::zeros(x.nrows(), x.ncols()),
            },
            Method::EdrrPd => {
                let s = self.sqrt_lap.as_ref().expect("primal-dual form keeps (I − W)^{1/2}");
                s * self.state.d.as_ref().expect("primal-dual form keeps d")
            }
            _ => Mat::zeros(x.nrows(), x.ncols()),
        }
    }

    /// `s_t^0 = B z − B² x + α A ∇F(1 x̄ᵀ)` of the transformed recursion.
    pub fn transformed_s(&self, op: &AbcOperator, alpha: f64) -> Mat {
        let x = &self.state.x;
        self.bz(op) - &op.b2 * x + op.anchor(self.obj, x, alpha)
    }
}

pub fn is_diverged(x: &Mat) -> bool {
    x.iter().any(|v| !v.is_finite()) || frobenius_sq(x).sqrt() > DIVERGENCE_NORM
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub method: Method,
    pub epochs: usize,
    pub schedule: Schedule,
    /// `None` picks the method's natural sampling mode.
    pub sampling: Option<SamplingMode>,
    pub seed: u64,
    pub init: Init,
    pub strict_alg2: bool,
    pub inner_metrics: bool,
    pub timing: bool,
}

impl RunConfig {
    pub fn new(method: Method, epochs: usize, schedule: Schedule, seed: u64) -> Self {
        RunConfig {
            method,
            epochs,
            schedule,
            sampling: None,
            seed,
            init: Init::Same,
            strict_alg2: false,
            inner_metrics: false,
            timing: false,
        }
    }
}

/// Mean-iterate metrics of one inner step, taken before the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerRecord {
    pub t: usize,
    pub l: usize,
    pub grad_norm_sq: f64,
    pub consensus_sq: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TrajectoryRecord>,
    pub inner: Vec<InnerRecord>,
    pub diverged: bool,
    pub final_x: Mat,
    pub accuracy: Option<f64>,
}

/// Runs `cfg.epochs` epochs and records metrics at every epoch boundary.
/// A non-finite or exploding iterate ends the run with a flagged record.
pub fn run(cfg: &RunConfig, w: &MixingMatrix, obj: &ObjectiveSpec) -> Result<RunOutput> {
    let started = Instant::now();
    let mode = cfg.sampling.unwrap_or_else(|| cfg.method.default_sampling());
    let stream = PermutationStream::new(cfg.seed, mode);
    let x0 = initial_iterate(cfg.init, obj.n(), obj.dim(), cfg.seed);
    let mut sim = Simulator::new(cfg.method, w, obj, stream, cfg.strict_alg2, x0)?;
    let transform: Option<(AbcOperator, TransformData)> = match cfg.method.operator(w, cfg.strict_alg2) {
        Some(op) => {
            let op = op?;
            transform_data(&op).ok().map(|td| (op, td))
        }
        None => None,
    };

    let mut records: Vec<TrajectoryRecord> = Vec::with_capacity(cfg.epochs + 1);
    let mut inner = Vec::new();
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut diverged = false;
    for t in 0..=cfg.epochs {
        history.push(obj.value(&mean_row(sim.x())));
        let alpha = cfg.schedule.next_stepsize(t, &history);
        let s = transform.as_ref().map(|(op, _)| sim.transformed_s(op, alpha));
        let view = match (&transform, &s) {
            (Some((_, td)), Some(s)) => Some(TransformView { data: td, s }),
            _ => None,
        };
        let mut rec = record(t, alpha, sim.x(), obj, view, records.last());
        if cfg.timing {
            rec.wall_ns = Some(started.elapsed().as_nanos());
        }
        records.push(rec);
        if t == cfg.epochs {
            break;
        }
        if cfg.inner_metrics {
            sim.step_epoch_observed(alpha, &mut |st| {
                inner.push(InnerRecord {
                    t: st.epoch,
                    l: st.l,
                    grad_norm_sq: obj.full_grad(&mean_row(st.x)).norm_squared(),
                    consensus_sq: consensus_error_sq(st.x),
                })
            });
        } else {
            sim.step_epoch(alpha);
        }
        if is_diverged(sim.x()) {
            let mut rec = diverged_record(t + 1, alpha);
            if cfg.timing {
                rec.wall_ns = Some(started.elapsed().as_nanos());
            }
            records.push(rec);
            diverged = true;
            break;
        }
    }
    let final_x = sim.x().clone();
    let accuracy = if diverged { None } else { obj.accuracy(&mean_row(&final_x)) };
    Ok(RunOutput {
        records,
        inner,
        diverged,
        final_x,
        accuracy,
    })
}
