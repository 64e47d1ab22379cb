//! Finite-sum objectives `f(x) = (1/n) Σ_i f_i(x)`, `f_i = (1/m) Σ_ℓ f_{i,ℓ}`.
//!
//! Three families are supported: least squares (`½‖A x − b‖²` per
//! component), ℓ2-regularized logistic regression and logistic regression
//! with the bounded nonconvex regularizer `(η/2) Σ_q x_q²/(1+x_q²)`.
//! Component `(i, ℓ)` is stored at flat index `i·m + ℓ`.

use std::fmt;

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::harness::data::partition_data;
use crate::linalg::{pairwise_sum, pairwise_sum_vectors, Mat, Vector};

pub const DEFAULT_RHO: f64 = 0.2;
pub const DEFAULT_ETA: f64 = 0.2;
/// Fraction of generated samples held out for accuracy reporting.
pub const TEST_FRACTION: f64 = 0.2;
const FSTAR_GRAD_TOL: f64 = 1e-10;
const FSTAR_MAX_ITERS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Quadratic,
    Logistic { rho: f64 },
    NonconvexLogistic { eta: f64 },
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Quadratic => write!(f, "quadratic"),
            Family::Logistic { rho } => write!(f, "logistic(rho={rho})"),
            Family::NonconvexLogistic { eta } => write!(f, "ncvx-logistic(eta={eta})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Exact,
    Estimated,
    Unavailable,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Exact => "exact",
            Provenance::Estimated => "estimated",
            Provenance::Unavailable => "unavailable",
        })
    }
}

/// A constant together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tagged {
    pub value: Option<f64>,
    pub provenance: Provenance,
}

impl Tagged {
    pub fn exact(v: f64) -> Self {
        Tagged {
            value: Some(v),
            provenance: Provenance::Exact,
        }
    }

    pub fn estimated(v: f64) -> Self {
        Tagged {
            value: Some(v),
            provenance: Provenance::Estimated,
        }
    }

    pub fn unavailable() -> Self {
        Tagged {
            value: None,
            provenance: Provenance::Unavailable,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ObjectiveConstants {
    /// Smoothness constant shared by every component.
    pub l: f64,
    pub mu: Tagged,
    pub f_star: Tagged,
    /// `(1/mn) Σ_i Σ_ℓ inf f_{i,ℓ}`.
    pub f_star_components: Tagged,
    /// `(1/n) Σ_i inf f_i`.
    pub f_star_agents: Tagged,
    /// Minimizer (or best stationary point found) of `f`.
    pub x_star: Option<Vector>,
}

#[derive(Debug, Clone)]
enum Data {
    /// `f = ½ xᵀ H x − cᵀ x + k` per component.
    Quadratic {
        h: Vec<Mat>,
        c: Vec<Vector>,
        k: Vec<f64>,
    },
    Samples {
        u: Vec<Vector>,
        v: Vec<f64>,
    },
}

/// Held-out labelled samples for accuracy reporting.
#[derive(Debug, Clone)]
pub struct TestSet {
    pub features: Vec<Vector>,
    pub labels: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    n: usize,
    m: usize,
    p: usize,
    family: Family,
    data: Data,
    constants: ObjectiveConstants,
    test: Option<TestSet>,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl ObjectiveSpec {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn constants(&self) -> &ObjectiveConstants {
        &self.constants
    }

    pub fn test_set(&self) -> Option<&TestSet> {
        self.test.as_ref()
    }

    fn check_index(&self, i: usize, l: usize) -> Result<()> {
        if i >= self.n || l >= self.m {
            return Err(Error::IndexOutOfRange(format!(
                "component ({i}, {l}) with n = {}, m = {}",
                self.n, self.m
            )));
        }
        Ok(())
    }

    /// Gradient of `f_{i,ℓ}` at `x` (0-based `ℓ`).
    pub fn component_grad(&self, i: usize, l: usize, x: &Vector) -> Result<Vector> {
        self.check_index(i, l)?;
        Ok(self.grad_unchecked(i * self.m + l, x))
    }

    pub fn component_value(&self, i: usize, l: usize, x: &Vector) -> Result<f64> {
        self.check_index(i, l)?;
        Ok(self.value_unchecked(i * self.m + l, x))
    }

    pub(crate) fn grad_unchecked(&self, k: usize, x: &Vector) -> Vector {
        match &self.data {
            Data::Quadratic { h, c, .. } => &h[k] * x - &c[k],
            Data::Samples { u, v } => {
                let margin = v[k] * u[k].dot(x);
                let mut g = &u[k] * (-v[k] * sigmoid(-margin));
                self.add_reg_grad(&mut g, x);
                g
            }
        }
    }

    fn value_unchecked(&self, k: usize, x: &Vector) -> f64 {
        match &self.data {
            Data::Quadratic { h, c, k: kk } => 0.5 * x.dot(&(&h[k] * x)) - c[k].dot(x) + kk[k],
            Data::Samples { u, v } => softplus(-v[k] * u[k].dot(x)) + self.reg_value(x),
        }
    }

    fn add_reg_grad(&self, g: &mut Vector, x: &Vector) {
        match self.family {
            Family::Quadratic => {}
            Family::Logistic { rho } => g.axpy(rho, x, 1.0),
            Family::NonconvexLogistic { eta } => {
                for q in 0..x.len() {
                    let d = 1.0 + x[q] * x[q];
                    g[q] += eta * x[q] / (d * d);
                }
            }
        }
    }

    fn reg_value(&self, x: &Vector) -> f64 {
        match self.family {
            Family::Quadratic => 0.0,
            Family::Logistic { rho } => 0.5 * rho * x.norm_squared(),
            Family::NonconvexLogistic { eta } => {
                let terms: Vec<f64> = x.iter().map(|v| v * v / (1.0 + v * v)).collect();
                0.5 * eta * pairwise_sum(&terms)
            }
        }
    }

    /// `∇f_i(x)`: the pairwise mean of agent `i`'s component gradients.
    pub fn local_grad(&self, i: usize, x: &Vector) -> Vector {
        let base = i * self.m;
        pairwise_sum_vectors(self.m, self.p, &|l| self.grad_unchecked(base + l, x)) / self.m as f64
    }

    pub fn local_value(&self, i: usize, x: &Vector) -> f64 {
        let vals: Vec<f64> = (0..self.m).map(|l| self.value_unchecked(i * self.m + l, x)).collect();
        pairwise_sum(&vals) / self.m as f64
    }

    /// `∇f(x) = (1/n) Σ_i ∇f_i(x)`.
    pub fn full_grad(&self, x: &Vector) -> Vector {
        pairwise_sum_vectors(self.n, self.p, &|i| self.local_grad(i, x)) / self.n as f64
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let vals: Vec<f64> = (0..self.n).map(|i| self.local_value(i, x)).collect();
        pairwise_sum(&vals) / self.n as f64
    }

    /// Rows `∇f_{i, comps[i]}(x_i)` for a stacked state (0-based components).
    pub fn stacked_component_grads(&self, x: &Mat, comps: &[usize]) -> Mat {
        let mut g = Mat::zeros(self.n, self.p);
        for i in 0..self.n {
            let xi = x.row(i).transpose();
            let gi = self.grad_unchecked(i * self.m + comps[i], &xi);
            g.set_row(i, &gi.transpose());
        }
        g
    }

    /// Rows `∇f_i(x_i)`.
    pub fn stacked_local_grads(&self, x: &Mat) -> Mat {
        let mut g = Mat::zeros(self.n, self.p);
        for i in 0..self.n {
            let gi = self.local_grad(i, &x.row(i).transpose());
            g.set_row(i, &gi.transpose());
        }
        g
    }

    /// Fraction of held-out samples classified correctly by `sign(uᵀx)`.
    pub fn accuracy(&self, x: &Vector) -> Option<f64> {
        let t = self.test.as_ref()?;
        if t.labels.is_empty() {
            return None;
        }
        let hits = t
            .features
            .iter()
            .zip(&t.labels)
            .filter(|(u, &v)| u.dot(x) * v > 0.0)
            .count();
        Some(hits as f64 / t.labels.len() as f64)
    }

    /// Exact per-component minima where a closed form or 1-D reduction
    /// exists (least squares, ℓ2-regularized logistic).
    pub fn component_minima(&self) -> Result<Vec<f64>> {
        match (&self.data, self.family) {
            (Data::Quadratic { h, c, k }, _) => Ok((0..h.len())
                .map(|j| quadratic_min_value(&h[j], &c[j], k[j]))
                .collect()),
            (Data::Samples { u, .. }, Family::Logistic { rho }) => {
                Ok(u.iter().map(|uj| logistic_component_min(uj.norm_squared(), rho)).collect())
            }
            _ => Err(Error::Theory(
                "component minima are not computable for the nonconvex regularizer".into(),
            )),
        }
    }

    /// Fills `f_star_components` from [`ObjectiveSpec::component_minima`].
    pub fn refine_component_minima(&mut self) -> Result<()> {
        let mins = self.component_minima()?;
        self.constants.f_star_components = Tagged {
            value: Some(pairwise_sum(&mins) / mins.len() as f64),
            provenance: match self.family {
                Family::Quadratic => Provenance::Exact,
                _ => Provenance::Estimated,
            },
        };
        Ok(())
    }

    fn finish(mut self) -> Result<Self> {
        match &self.data {
            Data::Quadratic { h, c, .. } => {
                let (hbar, cbar) = self.average_quadratic(0..self.n * self.m, h, c);
                let eig = SymmetricEigen::new(hbar.clone());
                let mu = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
                let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
                if !(mu > 1e-12 * scale.max(1.0)) {
                    return Err(Error::Singular(format!(
                        "average Hessian has smallest eigenvalue {mu:.3e}"
                    )));
                }
                let x_star = solve_spd(&hbar, &cbar)?;
                let l = h.iter().map(max_eigenvalue).fold(0.0_f64, f64::max);
                let f_star = self.value(&x_star);
                let mut agent_mins = Vec::with_capacity(self.n);
                let mut agents_exact = true;
                for i in 0..self.n {
                    let (hi, ci) = self.average_quadratic(i * self.m..(i + 1) * self.m, h, c);
                    match solve_spd(&hi, &ci) {
                        Ok(xi) => agent_mins.push(self.local_value(i, &xi)),
                        Err(_) => agents_exact = false,
                    }
                }
                self.constants = ObjectiveConstants {
                    l,
                    mu: Tagged::exact(mu),
                    f_star: Tagged::exact(f_star),
                    f_star_components: Tagged::unavailable(),
                    f_star_agents: if agents_exact {
                        Tagged::exact(pairwise_sum(&agent_mins) / self.n as f64)
                    } else {
                        Tagged::unavailable()
                    },
                    x_star: Some(x_star),
                };
                self.refine_component_minima()?;
            }
            Data::Samples { u, .. } => {
                let max_sq = u.iter().map(|v| v.norm_squared()).fold(0.0_f64, f64::max);
                let (l, mu) = match self.family {
                    Family::Logistic { rho } => (max_sq / 4.0 + rho, Tagged::exact(rho)),
                    Family::NonconvexLogistic { eta } => (max_sq / 4.0 + eta, Tagged::unavailable()),
                    Family::Quadratic => unreachable!("sample data is only used by logistic families"),
                };
                self.constants.l = l;
                self.constants.mu = mu;
                let (x_star, f_star) = self.minimize(&Vector::zeros(self.p), l);
                self.constants.f_star = Tagged::estimated(f_star);
                self.constants.x_star = Some(x_star);
            }
        }
        Ok(self)
    }

    fn average_quadratic(
        &self,
        range: std::ops::Range<usize>,
        h: &[Mat],
        c: &[Vector],
    ) -> (Mat, Vector) {
        let lo = range.start;
        let count = range.len();
        let hs = pairwise_sum_vectors(count, self.p * self.p, &|j| {
            Vector::from_column_slice(h[lo + j].as_slice())
        }) / count as f64;
        let hbar = Mat::from_column_slice(self.p, self.p, hs.as_slice());
        let hbar = (&hbar + hbar.transpose()) * 0.5;
        let cbar = pairwise_sum_vectors(count, self.p, &|j| c[lo + j].clone()) / count as f64;
        (hbar, cbar)
    }

    /// Gradient descent with Armijo backtracking until `‖∇f‖ ≤ 1e-10`.
    fn minimize(&self, x0: &Vector, l: f64) -> (Vector, f64) {
        let mut x = x0.clone();
        let mut fx = self.value(&x);
        let mut step = 1.0 / l;
        for _ in 0..FSTAR_MAX_ITERS {
            let g = self.full_grad(&x);
            let gn2 = g.norm_squared();
            if gn2.sqrt() <= FSTAR_GRAD_TOL {
                break;
            }
            step *= 2.0;
            loop {
                let cand = &x - &g * step;
                let fc = self.value(&cand);
                if fc <= fx - 0.5 * step * gn2 || step < 1e-3 / l {
                    x = cand;
                    fx = fc;
                    break;
                }
                step *= 0.5;
            }
        }
        (x, fx)
    }
}

fn max_eigenvalue(h: &Mat) -> f64 {
    let sym = (h + h.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

fn solve_spd(h: &Mat, c: &Vector) -> Result<Vector> {
    h.clone()
        .cholesky()
        .map(|ch| ch.solve(c))
        .ok_or_else(|| Error::Singular("Hessian is not positive definite".into()))
}

/// `min ½xᵀHx − cᵀx + k` for PSD `H` with `c ∈ range(H)`.
fn quadratic_min_value(h: &Mat, c: &Vector, k: f64) -> f64 {
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let proj = eig.eigenvectors.transpose() * c;
    let mut quad = 0.0;
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 1e-12 * top.max(1.0) {
            quad += proj[j] * proj[j] / lam;
        }
    }
    (k - 0.5 * quad).max(0.0)
}

/// Minimum of `softplus(−v uᵀx) + (ρ/2)‖x‖²` with `a = ‖u‖²`. The minimizer
/// is `x = s v u` where `ρ s = σ(−s a)`, found by bisection on `[0, 1/ρ]`.
fn logistic_component_min(a: f64, rho: f64) -> f64 {
    if a == 0.0 {
        return std::f64::consts::LN_2;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0 / rho);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rho * mid < sigmoid(-mid * a) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    softplus(-s * a) + 0.5 * rho * s * s * a
}

fn gaussian_vec(rng: &mut ChaCha8Rng, p: usize) -> Vector {
    Vector::from_fn(p, |_, _| StandardNormal.sample(rng))
}

fn gaussian_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Least-squares family from explicit `(A_{i,ℓ}, b_{i,ℓ})`, flattened by
/// `i·m + ℓ`.
pub fn quadratic_from_parts(n: usize, m: usize, a: &[Mat], b: &[Vector]) -> Result<ObjectiveSpec> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidObjective("n and m must be positive".into()));
    }
    if a.len() != n * m || b.len() != n * m {
        return Err(Error::InvalidObjective(format!(
            "expected {} components, got {} matrices and {} vectors",
            n * m,
            a.len(),
            b.len()
        )));
    }
    let p = a[0].ncols();
    let mut h = Vec::with_capacity(n * m);
    let mut c = Vec::with_capacity(n * m);
    let mut k = Vec::with_capacity(n * m);
    for (aj, bj) in a.iter().zip(b) {
        if aj.ncols() != p || aj.nrows() != bj.len() {
            return Err(Error::InvalidObjective("inconsistent component shapes".into()));
        }
        let at = aj.transpose();
        h.push(&at * aj);
        c.push(&at * bj);
        k.push(0.5 * bj.norm_squared());
    }
    ObjectiveSpec {
        n,
        m,
        p,
        family: Family::Quadratic,
        data: Data::Quadratic { h, c, k },
        constants: ObjectiveConstants {
            l: 0.0,
            mu: Tagged::unavailable(),
            f_star: Tagged::unavailable(),
            f_star_components: Tagged::unavailable(),
            f_star_agents: Tagged::unavailable(),
            x_star: None,
        },
        test: None,
    }
    .finish()
}

/// Parameters of the synthetic least-squares family.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticParams {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub seed: u64,
    /// Target condition number of the shared diagonal scaling.
    pub condition: f64,
    /// Spread of the per-agent targets (drives heterogeneity across agents).
    pub hetero: f64,
    /// Spread of the per-component targets within an agent.
    pub noise: f64,
    /// Relative perturbation of each agent's design matrix.
    pub agent_spread: f64,
    /// Relative perturbation of each component's design matrix.
    pub component_spread: f64,
}

impl QuadraticParams {
    pub fn new(n: usize, m: usize, p: usize, seed: u64) -> Self {
        QuadraticParams {
            n,
            m,
            p,
            seed,
            condition: 10.0,
            hetero: 1.0,
            noise: 0.5,
            agent_spread: 0.3,
            component_spread: 0.3,
        }
    }
}

/// Random least-squares components `A_{i,ℓ} = (I + E_i + E_{i,ℓ}) D^{1/2}`,
/// `b_{i,ℓ} = A_{i,ℓ}(x̂ + hetero·g_i + noise·g_{i,ℓ})` with `D` log-spaced on
/// `[1/condition, 1]`. Since every `b` lies in the range of its `A`, each
/// component attains zero.
pub fn make_quadratic(params: &QuadraticParams) -> Result<ObjectiveSpec> {
    let QuadraticParams { n, m, p, seed, condition, .. } = *params;
    if !(condition >= 1.0) {
        return Err(Error::InvalidObjective(format!("condition must be >= 1, got {condition}")));
    }
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidObjective("n, m and p must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = Vector::from_fn(p, |q, _| {
        let frac = if p == 1 { 0.0 } else { q as f64 / (p - 1) as f64 };
        condition.powf(-frac).sqrt()
    });
    let root_p = (p as f64).sqrt();
    let x_hat = gaussian_vec(&mut rng, p);
    let mut a = Vec::with_capacity(n * m);
    let mut b = Vec::with_capacity(n * m);
    for _ in 0..n {
        let e_agent = gaussian_mat(&mut rng, p, p) * (params.agent_spread / root_p);
        let target = &x_hat + gaussian_vec(&mut rng, p) * params.hetero;
        for _ in 0..m {
            let e_comp = gaussian_mat(&mut rng, p, p) * (params.component_spread / root_p);
            let mut aj = Mat::identity(p, p) + &e_agent + e_comp;
            for q in 0..p {
                aj.column_mut(q).scale_mut(scale[q]);
            }
            let tj = &target + gaussian_vec(&mut rng, p) * params.noise;
            b.push(&aj * tj);
            a.push(aj);
        }
    }
    quadratic_from_parts(n, m, &a, &b)
}

/// Parameters of the synthetic (and file-backed) logistic families.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticParams {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub seed: u64,
    pub family: Family,
    pub heterogeneous: bool,
    /// Standard deviation of the label noise added to the planted margin.
    pub label_noise: f64,
}

impl LogisticParams {
    pub fn new(n: usize, m: usize, p: usize, seed: u64) -> Self {
        LogisticParams {
            n,
            m,
            p,
            seed,
            family: Family::Logistic { rho: DEFAULT_RHO },
            heterogeneous: true,
            label_noise: 0.5,
        }
    }
}

fn held_out_count(train: usize) -> usize {
    ((train as f64) * TEST_FRACTION / (1.0 - TEST_FRACTION)).round() as usize
}

/// Gaussian features with labels `sign(x̂ᵀu + noise)` for a planted unit
/// separator `x̂`. Draws the training set plus a 20% held-out split.
pub fn make_logistic(params: &LogisticParams) -> Result<ObjectiveSpec> {
    let LogisticParams { n, m, p, seed, .. } = *params;
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidObjective("n, m and p must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sep = gaussian_vec(&mut rng, p);
    let sep = &sep / sep.norm();
    let total = n * m + held_out_count(n * m);
    let mut features = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for _ in 0..total {
        let u = gaussian_vec(&mut rng, p);
        let noise: f64 = StandardNormal.sample(&mut rng);
        labels.push(if sep.dot(&u) + params.label_noise * noise >= 0.0 { 1.0 } else { -1.0 });
        features.push(u);
    }
    logistic_from_samples(features, labels, params)
}

/// Builds a logistic-family objective from labelled samples: the last 20%
/// are held out, the rest are partitioned across agents.
pub fn logistic_from_samples(
    mut features: Vec<Vector>,
    mut labels: Vec<f64>,
    params: &LogisticParams,
) -> Result<ObjectiveSpec> {
    let LogisticParams { n, m, p, .. } = *params;
    if matches!(params.family, Family::Quadratic) {
        return Err(Error::InvalidObjective("sample data needs a logistic family".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::InvalidObjective("features and labels differ in length".into()));
    }
    if let Some(bad) = labels.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidObjective(format!("labels must be +1/-1, got {bad}")));
    }
    if features.iter().any(|u| u.len() != p) {
        return Err(Error::InvalidObjective(format!("every feature vector must have dimension {p}")));
    }
    let needed = n * m;
    let test_len = held_out_count(needed).min(features.len().saturating_sub(needed));
    if features.len() < needed + test_len || features.len() < needed {
        return Err(Error::InsufficientSamples {
            needed: needed + test_len,
            available: features.len(),
        });
    }
    let split = features.len() - test_len;
    let test = TestSet {
        features: features.split_off(split),
        labels: labels.split_off(split),
    };
    let parts = partition_data(&labels, n, m, params.heterogeneous, params.seed)?;
    let mut u = Vec::with_capacity(needed);
    let mut v = Vec::with_capacity(needed);
    for agent in &parts {
        for &j in agent {
            u.push(features[j].clone());
            v.push(labels[j]);
        }
    }
    ObjectiveSpec {
        n,
        m,
        p,
        family: params.family,
        data: Data::Samples { u, v },
        constants: ObjectiveConstants {
            l: 0.0,
            mu: Tagged::unavailable(),
            f_star: Tagged::unavailable(),
            f_star_components: Tagged::unavailable(),
            f_star_agents: Tagged::unavailable(),
            x_star: None,
        },
        test: Some(test),
    }
    .finish()
}
