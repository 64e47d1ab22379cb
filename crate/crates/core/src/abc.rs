//! The polynomial A/B/C operator family.
//!
//! An operator is a triple `(A, B², C)` of polynomials in the mixing matrix
//! `W`. One epoch of the generic method reads
//!
//! ```text
//! x^{ℓ+1} = A (C x^ℓ − α ∇F_{π_ℓ}(x^ℓ)) − B z^ℓ
//! z^{ℓ+1} = z^ℓ + B x^{ℓ+1}
//! ```
//!
//! with `z` initialised from `h(x)` at the epoch start. The same trajectory
//! can be produced by the `(x, s)` recursion of [`AbcOperator::transformed_epoch`],
//! and the consensus part of `(x, s)` decouples into independent 2x2 blocks
//! (one per non-unit eigenvalue of `W`) which [`transform_data`] puts into
//! the form `V Γ V⁻¹`.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::linalg::{broadcast_row, frobenius_sq, mean_row, spectral_function, Mat};
use crate::objective::ObjectiveSpec;
use crate::topology::MixingMatrix;

const ROW_SUM_TOL: f64 = 1e-10;
const COEFF_TOL: f64 = 1e-12;
const DEFECTIVE_TOL: f64 = 1e-12;
/// Added to the reported contraction factor when a block is defective.
pub const DEFECTIVE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Gtrr,
    Edrr,
    Custom,
}

/// Epoch-start value `z = h(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZInit {
    NegW,
    Zero,
}

/// Operator selector as written on the command line:
/// `gtrr | edrr | custom:<a-coeffs>/<b2-coeffs>/<c-coeffs>`.
#[derive(Debug, Clone, PartialEq)]
pub enum AbcSpec {
    Gtrr,
    Edrr,
    Custom { a: Vec<f64>, b2: Vec<f64>, c: Vec<f64> },
}

impl FromStr for AbcSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gtrr" => return Ok(AbcSpec::Gtrr),
            "edrr" => return Ok(AbcSpec::Edrr),
            _ => {}
        }
        let body = s
            .trim()
            .strip_prefix("custom:")
            .ok_or_else(|| Error::Config(format!("unknown operator {s:?} (gtrr | edrr | custom:a/b2/c)")))?;
        let parts: Vec<&str> = body.split('/').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("custom operator needs three coefficient lists, got {body:?}")));
        }
        let coeffs = |p: &str| -> Result<Vec<f64>> {
            p.split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad coefficient {c:?} in {s:?}")))
                })
                .collect()
        };
        Ok(AbcSpec::Custom {
            a: coeffs(parts[0])?,
            b2: coeffs(parts[1])?,
            c: coeffs(parts[2])?,
        })
    }
}

impl fmt::Display for AbcSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match self {
            AbcSpec::Gtrr => write!(f, "gtrr"),
            AbcSpec::Edrr => write!(f, "edrr"),
            AbcSpec::Custom { a, b2, c } => write!(f, "custom:{}/{}/{}", join(a), join(b2), join(c)),
        }
    }
}

impl AbcSpec {
    pub fn build(&self, w: &MixingMatrix) -> Result<AbcOperator> {
        match self {
            AbcSpec::Gtrr => AbcOperator::gtrr(w),
            AbcSpec::Edrr => AbcOperator::edrr(w, false),
            AbcSpec::Custom { a, b2, c } => build_operator(a, b2, c, w, ZInit::Zero, true),
        }
    }
}

fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[derive(Debug, Clone)]
pub struct AbcOperator {
    pub preset: Preset,
    pub poly_a: Vec<f64>,
    pub poly_b2: Vec<f64>,
    pub poly_c: Vec<f64>,
    pub a: Mat,
    pub b: Mat,
    pub b2: Mat,
    pub c: Mat,
    pub z_init: ZInit,
    /// Keep `z` across epochs instead of re-applying `h` at each epoch start.
    pub carry_z: bool,
    w: Mat,
    ac_minus_b2: Mat,
    eigenvalues: Vec<f64>,
    eigvecs: Mat,
    spec_a: Vec<f64>,
    spec_b: Vec<f64>,
    spec_c: Vec<f64>,
}

/// Builds and validates `(A, B², C)` from polynomial coefficients
/// (`coeffs[d]` multiplies `W^d`).
pub fn build_operator(
    poly_a: &[f64],
    poly_b2: &[f64],
    poly_c: &[f64],
    w: &MixingMatrix,
    z_init: ZInit,
    carry_z: bool,
) -> Result<AbcOperator> {
    build_with(poly_a, poly_b2, poly_c, w, z_init, carry_z, Preset::Custom, None)
}

#[allow(clippy::too_many_arguments)]
fn build_with(
    poly_a: &[f64],
    poly_b2: &[f64],
    poly_c: &[f64],
    w: &MixingMatrix,
    z_init: ZInit,
    carry_z: bool,
    preset: Preset,
    b_override: Option<Mat>,
) -> Result<AbcOperator> {
    if poly_a.is_empty() || poly_b2.is_empty() || poly_c.is_empty() {
        return Err(Error::InvalidOperator("coefficient lists must be non-empty".into()));
    }
    let n = w.n();
    let spectral = w.spectral();
    let eigenvalues = spectral.eigenvalues.clone();
    let eigvecs = spectral.eigvecs.clone();
    let a = w.polynomial(poly_a);
    let c = w.polynomial(poly_c);
    let b2 = w.polynomial(poly_b2);

    for (name, m, poly) in [("A", &a, poly_a), ("C", &c, poly_c)] {
        if (eval_poly(poly, 1.0) - 1.0).abs() > COEFF_TOL {
            return Err(Error::InvalidOperator(format!(
                "{name} is not stochastic: coefficients sum to {}",
                eval_poly(poly, 1.0)
            )));
        }
        for i in 0..n {
            let row: f64 = m.row(i).iter().sum();
            if (row - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidOperator(format!("{name} row {i} sums to {row}")));
            }
        }
        if let Some(v) = m.iter().find(|&&v| v < -COEFF_TOL) {
            return Err(Error::InvalidOperator(format!("{name} has a negative entry {v:e}")));
        }
    }
    if eval_poly(poly_b2, 1.0).abs() > COEFF_TOL {
        return Err(Error::InvalidOperator(format!(
            "B² must vanish on consensus vectors, but its polynomial is {} at 1",
            eval_poly(poly_b2, 1.0)
        )));
    }
    let spec_b2: Vec<f64> = eigenvalues.iter().map(|&l| eval_poly(poly_b2, l)).collect();
    if let Some(v) = spec_b2.iter().find(|&&v| v < -COEFF_TOL) {
        return Err(Error::InvalidOperator(format!("B² is not positive semidefinite (eigenvalue {v:e})")));
    }
    if let Some(k) = (1..n).find(|&k| spec_b2[k] <= COEFF_TOL) {
        return Err(Error::InvalidOperator(format!(
            "null space of B is larger than the consensus direction (B² eigenvalue {:e} at λ = {})",
            spec_b2[k], eigenvalues[k]
        )));
    }
    let spec_b: Vec<f64> = spec_b2.iter().map(|&v| v.max(0.0).sqrt()).collect();
    let b = b_override.unwrap_or_else(|| spectral_function(&eigvecs, &eigenvalues, |l| eval_poly(poly_b2, l).max(0.0).sqrt()));
    let spec_a = eigenvalues.iter().map(|&l| eval_poly(poly_a, l)).collect();
    let spec_c = eigenvalues.iter().map(|&l| eval_poly(poly_c, l)).collect();
    let ac_minus_b2 = &a * &c - &b2;
    Ok(AbcOperator {
        preset,
        poly_a: poly_a.to_vec(),
        poly_b2: poly_b2.to_vec(),
        poly_c: poly_c.to_vec(),
        a,
        b,
        b2,
        c,
        z_init,
        carry_z,
        w: w.matrix().clone(),
        ac_minus_b2,
        eigenvalues,
        eigvecs,
        spec_a,
        spec_b,
        spec_c,
    })
}

/// `x^ℓ` and `z^ℓ` of the generic recursion.
#[derive(Debug, Clone)]
pub struct AbcState {
    pub x: Mat,
    pub z: Mat,
    pub epochs_done: usize,
}

/// `x^ℓ` and `s^ℓ` of the transformed recursion.
#[derive(Debug, Clone)]
pub struct TransformedState {
    pub x: Mat,
    pub s: Option<Mat>,
    /// `α_t A ∇F(1 x̄_t^0)` of the epoch in progress.
    pub anchor: Option<Mat>,
    pub epochs_done: usize,
}

impl AbcOperator {
    /// `(W, I − W, W)` with `z = −W x` re-applied at every epoch start.
    pub fn gtrr(w: &MixingMatrix) -> Result<Self> {
        let n = w.n();
        let b = Mat::identity(n, n) - w.matrix();
        build_with(&[0.0, 1.0], &[1.0, -2.0, 1.0], &[0.0, 1.0], w, ZInit::NegW, false, Preset::Gtrr, Some(b))
    }

    /// `(W, (I − W)^{1/2}, I)` with `z` starting at zero. By default `z`
    /// persists across epochs; `reset_each_epoch` zeroes it at every epoch
    /// start instead. Requires a positive definite `W`.
    pub fn edrr(w: &MixingMatrix, reset_each_epoch: bool) -> Result<Self> {
        w.require_positive_definite()?;
        build_with(
            &[0.0, 1.0],
            &[1.0, -1.0],
            &[1.0],
            w,
            ZInit::Zero,
            !reset_each_epoch,
            Preset::Edrr,
            Some(w.sqrt_laplacian()),
        )
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn w(&self) -> &Mat {
        &self.w
    }

    /// `h(x)`.
    pub fn h(&self, x: &Mat) -> Mat {
        match self.z_init {
            ZInit::NegW => -(&self.w * x),
            ZInit::Zero => Mat::zeros(x.nrows(), x.ncols()),
        }
    }

    pub fn start(&self, x0: Mat) -> AbcState {
        let z = self.h(&x0);
        AbcState {
            x: x0,
            z,
            epochs_done: 0,
        }
    }

    pub fn start_transformed(&self, x0: Mat) -> TransformedState {
        TransformedState {
            x: x0,
            s: None,
            anchor: None,
            epochs_done: 0,
        }
    }

    /// `α A ∇F(1 x̄ᵀ)` for the current iterate.
    pub fn anchor(&self, obj: &ObjectiveSpec, x: &Mat, alpha: f64) -> Mat {
        let xbar = mean_row(x);
        let g = obj.stacked_local_grads(&broadcast_row(&xbar, x.nrows()));
        &self.a * g * alpha
    }

    /// `s = B (z − B x) + α A ∇F(1 x̄ᵀ)` with `x̄` the mean of `x_anchor`.
    pub fn s_from_z(&self, obj: &ObjectiveSpec, x: &Mat, z: &Mat, x_anchor: &Mat, alpha: f64) -> Mat {
        &self.b * (z - &self.b * x) + self.anchor(obj, x_anchor, alpha)
    }

    /// One epoch of the generic recursion. `orders[i]` lists agent `i`'s
    /// 0-based components in visiting order.
    pub fn abc_epoch(&self, obj: &ObjectiveSpec, st: &mut AbcState, orders: &[Vec<usize>], alpha: f64) {
        if st.epochs_done > 0 && !self.carry_z {
            st.z = self.h(&st.x);
        }
        let m = orders[0].len();
        let mut comps = vec![0; self.n()];
        for l in 0..m {
            for (i, o) in orders.iter().enumerate() {
                comps[i] = o[l];
            }
            let g = obj.stacked_component_grads(&st.x, &comps);
            let x_next = &self.a * (&self.c * &st.x - g * alpha) - &self.b * &st.z;
            st.z += &self.b * &x_next;
            st.x = x_next;
        }
        st.epochs_done += 1;
    }

    /// `s` at the start of the coming epoch, before any inner step.
    fn epoch_start_s(&self, obj: &ObjectiveSpec, st: &TransformedState, alpha: f64) -> (Mat, Mat) {
        let anchor = self.anchor(obj, &st.x, alpha);
        let s = match (&st.s, &st.anchor) {
            (Some(s), Some(old)) if self.carry_z => s - old + &anchor,
            _ => &self.b * self.h(&st.x) - &self.b2 * &st.x + &anchor,
        };
        (s, anchor)
    }

    /// One epoch of the `(x, s)` recursion:
    /// `x ← (AC − B²) x − α A (∇F_π(x) − ∇F(1 x̄⁰ᵀ)) − s`, `s ← s + B² x`.
    pub fn transformed_epoch(
        &self,
        obj: &ObjectiveSpec,
        st: &mut TransformedState,
        orders: &[Vec<usize>],
        alpha: f64,
    ) {
        self.transformed_epoch_observed(obj, st, orders, alpha, &mut |_, _, _| {});
    }

    /// As [`AbcOperator::transformed_epoch`], calling `observe(x, s, grad_dev)`
    /// before every inner step, where `grad_dev = ∇F_π(x) − ∇F(1 x̄⁰ᵀ)`.
    pub fn transformed_epoch_observed(
        &self,
        obj: &ObjectiveSpec,
        st: &mut TransformedState,
        orders: &[Vec<usize>],
        alpha: f64,
        observe: &mut dyn FnMut(&Mat, &Mat, &Mat),
    ) {
        let (mut s, anchor) = self.epoch_start_s(obj, st, alpha);
        let xbar = mean_row(&st.x);
        let g_anchor = obj.stacked_local_grads(&broadcast_row(&xbar, self.n()));
        let m = orders[0].len();
        let mut comps = vec![0; self.n()];
        for l in 0..m {
            for (i, o) in orders.iter().enumerate() {
                comps[i] = o[l];
            }
            let dev = obj.stacked_component_grads(&st.x, &comps) - &g_anchor;
            observe(&st.x, &s, &dev);
            let x_next = &self.ac_minus_b2 * &st.x - &self.a * &dev * alpha - &s;
            s += &self.b2 * &st.x;
            st.x = x_next;
        }
        st.s = Some(s);
        st.anchor = Some(anchor);
        st.epochs_done += 1;
    }
}

/// One 2x2 block `G_k = [[a c − b², −b], [b, 1]]` and its factorisation.
#[derive(Debug, Clone)]
pub struct Block {
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub g: Matrix2<f64>,
    pub v: Matrix2<f64>,
    pub v_inv: Matrix2<f64>,
    pub gamma: Matrix2<f64>,
    pub radius: f64,
    pub defective: bool,
}

fn norm2(m: &Matrix2<f64>) -> f64 {
    let fro = m.norm_squared();
    let det = m.determinant();
    let disc = (fro * fro - 4.0 * det * det).max(0.0);
    ((fro + disc.sqrt()) / 2.0).sqrt()
}

fn factor_block(lambda: f64, a: f64, b: f64, c: f64) -> Result<Block> {
    let g = Matrix2::new(a * c - b * b, -b, b, 1.0);
    let half = 0.5 * (g[(0, 0)] + g[(1, 1)]);
    let disc = (0.5 * (g[(0, 0)] - g[(1, 1)])).powi(2) + g[(0, 1)] * g[(1, 0)];
    let g12 = g[(0, 1)];
    let (v, radius, defective) = if disc.abs() <= DEFECTIVE_TOL * half.abs().max(1.0).powi(2) {
        // Jordan basis from unit vectors: v2 is the unit axis with the largest
        // image under N = G − rI and v1 = N v2 / ‖N v2‖, so Γ = [[r, ‖N v2‖], [0, r]].
        let r = half;
        let nmat = g - Matrix2::identity() * r;
        let (c0, c1) = (nmat.column(0).norm(), nmat.column(1).norm());
        if c0.max(c1) <= DEFECTIVE_TOL {
            (Matrix2::identity(), r.abs(), false)
        } else {
            let v2 = if c0 >= c1 {
                nalgebra::Vector2::new(1.0, 0.0)
            } else {
                nalgebra::Vector2::new(0.0, 1.0)
            };
            let image = nmat * v2;
            let v1 = image / image.norm();
            (Matrix2::from_columns(&[v1, v2]), r.abs(), true)
        }
    } else if disc < 0.0 {
        let beta = (-disc).sqrt();
        let w_re = (half - g[(0, 0)]) / g12;
        let w_im = beta / g12;
        (Matrix2::new(1.0, 0.0, w_re, w_im), (half * half + beta * beta).sqrt(), false)
    } else {
        let root = disc.sqrt();
        let (r1, r2) = (half + root, half - root);
        let v = Matrix2::new(1.0, 1.0, (r1 - g[(0, 0)]) / g12, (r2 - g[(0, 0)]) / g12);
        (v, r1.abs().max(r2.abs()), false)
    };
    if radius >= 1.0 {
        return Err(Error::NonContractive(radius));
    }
    let v_inv = v
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("block similarity at λ = {lambda} is singular")))?;
    let gamma = v_inv * g * v;
    Ok(Block {
        lambda,
        a,
        b,
        c,
        g,
        v,
        v_inv,
        gamma,
        radius,
        defective,
    })
}

/// Block factorisation of the transformed recursion.
#[derive(Debug, Clone)]
pub struct TransformData {
    pub blocks: Vec<Block>,
    pub u_hat: Mat,
    /// Contraction factor: the largest block spectral radius, plus
    /// [`DEFECTIVE_GUARD`] when some block is defective.
    pub gamma: f64,
    /// `‖Γ‖₂` of the assembled block matrix.
    pub gamma_norm: f64,
    pub v_norm: f64,
    pub v_inv_norm: f64,
    /// `‖Λ̂_a‖`.
    pub lambda_a_norm: f64,
    /// `‖Λ̂_b⁻¹‖`.
    pub lambda_b_inv_norm: f64,
    pub any_defective: bool,
}

pub fn transform_data(op: &AbcOperator) -> Result<TransformData> {
    let n = op.n();
    let mut blocks = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        blocks.push(factor_block(op.eigenvalues[k], op.spec_a[k], op.spec_b[k], op.spec_c[k])?);
    }
    let any_defective = blocks.iter().any(|b| b.defective);
    let radius = blocks.iter().map(|b| b.radius).fold(0.0_f64, f64::max);
    let fold_max = |f: &dyn Fn(&Block) -> f64| blocks.iter().map(f).fold(0.0_f64, f64::max);
    let (v_norm, v_inv_norm) = if blocks.is_empty() {
        (1.0, 1.0)
    } else {
        (fold_max(&|b| norm2(&b.v)), fold_max(&|b| norm2(&b.v_inv)))
    };
    Ok(TransformData {
        gamma: radius + if any_defective { DEFECTIVE_GUARD } else { 0.0 },
        gamma_norm: fold_max(&|b| norm2(&b.gamma)),
        v_norm,
        v_inv_norm,
        lambda_a_norm: fold_max(&|b| b.a.abs()),
        lambda_b_inv_norm: fold_max(&|b| 1.0 / b.b),
        any_defective,
        u_hat: op.eigvecs.columns(1, n - 1).into_owned(),
        blocks,
    })
}

/// `e = V⁻¹ (Ûᵀx; Λ̂_b⁻¹ Ûᵀ s)` stacked as a `2(n−1) x p` matrix.
#[derive(Debug, Clone)]
pub struct EVector {
    pub e: Mat,
    pub norm_sq: f64,
    /// `‖V‖² ‖e‖²`, an upper bound on the consensus error of `x`.
    pub consensus_bound: f64,
}

impl TransformData {
    fn k(&self) -> usize {
        self.blocks.len()
    }

    fn apply_blocks(&self, top: &Mat, bottom: &Mat, pick: impl Fn(&Block) -> Matrix2<f64>) -> Mat {
        let k = self.k();
        let p = top.ncols();
        let mut out = Mat::zeros(2 * k, p);
        for (j, blk) in self.blocks.iter().enumerate() {
            let m = pick(blk);
            for q in 0..p {
                out[(j, q)] = m[(0, 0)] * top[(j, q)] + m[(0, 1)] * bottom[(j, q)];
                out[(k + j, q)] = m[(1, 0)] * top[(j, q)] + m[(1, 1)] * bottom[(j, q)];
            }
        }
        out
    }

    pub fn e_vector(&self, x: &Mat, s: &Mat) -> EVector {
        let xh = self.u_hat.transpose() * x;
        let mut sh = self.u_hat.transpose() * s;
        for (j, blk) in self.blocks.iter().enumerate() {
            sh.row_mut(j).scale_mut(1.0 / blk.b);
        }
        let e = self.apply_blocks(&xh, &sh, |b| b.v_inv);
        let norm_sq = frobenius_sq(&e);
        EVector {
            norm_sq,
            consensus_bound: self.v_norm * self.v_norm * norm_sq,
            e,
        }
    }

    /// `Γ e − α V⁻¹ (Λ̂_a Ûᵀ grad_dev; 0)`: the one-step map of `e`.
    pub fn step_e(&self, e: &Mat, alpha: f64, grad_dev: &Mat) -> Mat {
        let k = self.k();
        let top = e.rows(0, k).into_owned();
        let bottom = e.rows(k, k).into_owned();
        let next = self.apply_blocks(&top, &bottom, |b| b.gamma);
        let mut dh = self.u_hat.transpose() * grad_dev;
        for (j, blk) in self.blocks.iter().enumerate() {
            dh.row_mut(j).scale_mut(blk.a * alpha);
        }
        let zero = Mat::zeros(k, grad_dev.ncols());
        next - self.apply_blocks(&dh, &zero, |b| b.v_inv)
    }

    fn dense(&self, pick: impl Fn(&Block) -> Matrix2<f64>) -> Mat {
        let k = self.k();
        let mut out = Mat::zeros(2 * k, 2 * k);
        for (j, blk) in self.blocks.iter().enumerate() {
            let m = pick(blk);
            out[(j, j)] = m[(0, 0)];
            out[(j, k + j)] = m[(0, 1)];
            out[(k + j, j)] = m[(1, 0)];
            out[(k + j, k + j)] = m[(1, 1)];
        }
        out
    }

    /// `G = [[Λ̂_a Λ̂_c − Λ̂_b², −Λ̂_b], [Λ̂_b, I]]`.
    pub fn g_dense(&self) -> Mat {
        self.dense(|b| b.g)
    }

    pub fn v_dense(&self) -> Mat {
        self.dense(|b| b.v)
    }

    pub fn v_inv_dense(&self) -> Mat {
        self.dense(|b| b.v_inv)
    }

    pub fn gamma_dense(&self) -> Mat {
        self.dense(|b| b.gamma)
    }
}
