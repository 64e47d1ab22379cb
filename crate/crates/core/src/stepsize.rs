//! Stepsize schedules and the constants that bound admissible stepsizes.

use std::fmt;
use std::str::FromStr;

use crate::abc::{Preset, TransformData};
use crate::error::{Error, Result};
use crate::topology::SpectralInfo;

pub const DEFAULT_PATIENCE: usize = 10;
/// Relative improvement the plateau rule asks of the windowed mean.
pub const PLATEAU_THRESHOLD: f64 = 0.01;
pub const DEFAULT_THETA: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant { alpha: f64 },
    /// `α_t = θ / (μ m (t + K))`.
    Decreasing { theta: f64, k: f64, mu: f64, m: usize },
    /// `α_t = 1 / (a t + b)`.
    Harmonic { a: f64, b: f64 },
    /// Walks down `levels` whenever the monitored metric stalls.
    Plateau { levels: Vec<f64>, patience: usize, threshold: f64 },
}

impl Schedule {
    /// `α_t`. `history[j]` is the monitored metric at epoch `j ≤ t`; only the
    /// plateau schedule reads it.
    pub fn next_stepsize(&self, t: usize, history: &[f64]) -> f64 {
        match self {
            Schedule::Constant { alpha } => *alpha,
            Schedule::Decreasing { theta, k, mu, m } => theta / (mu * *m as f64 * (t as f64 + k)),
            Schedule::Harmonic { a, b } => 1.0 / (a * t as f64 + b),
            Schedule::Plateau { levels, patience, threshold } => {
                levels[plateau_level(history, t, *patience, *threshold, levels.len())]
            }
        }
    }
}

/// Replays the demotion rule over `history[..=t]`: after at least two full
/// windows at the current level, demote when the mean of the latest
/// `patience` values is not `threshold` (relative) below the mean of the
/// window before it.
fn plateau_level(history: &[f64], t: usize, patience: usize, threshold: f64, levels: usize) -> usize {
    let p = patience.max(1);
    let mut level = 0;
    let mut since = 0;
    let upto = t.min(history.len().saturating_sub(1));
    if history.is_empty() {
        return 0;
    }
    for now in 0..=upto {
        if level + 1 >= levels {
            break;
        }
        if now + 1 < since + 2 * p {
            continue;
        }
        let mean = |lo: usize| history[lo..lo + p].iter().sum::<f64>() / p as f64;
        let recent = mean(now + 1 - p);
        let before = mean(now + 1 - 2 * p);
        if !(recent < before * (1.0 - threshold)) {
            level += 1;
            since = now + 1;
        }
    }
    level
}

/// Stepsize selector as written on the command line:
/// `const:α | dec:θ,K | harmonic:a,b | plateau:l1,l2,… | auto`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec {
    Const(f64),
    Dec { theta: f64, k: f64 },
    Harmonic { a: f64, b: f64 },
    Plateau(Vec<f64>),
    Auto,
}

fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = if let Some((num, den)) = s.split_once('/') {
        let num: f64 = num.trim().parse().map_err(|_| Error::Config(format!("bad number {s:?}")))?;
        let den: f64 = den.trim().parse().map_err(|_| Error::Config(format!("bad number {s:?}")))?;
        num / den
    } else {
        s.parse().map_err(|_| Error::Config(format!("bad number {s:?}")))?
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("number {s:?} is not finite")))
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_number).collect()
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "auto" {
            return Ok(ScheduleSpec::Auto);
        }
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("stepsize {s:?} must look like kind:args or auto")))?;
        let vals = parse_list(args)?;
        let spec = match (kind, vals.as_slice()) {
            ("const", [a]) => ScheduleSpec::Const(*a),
            ("dec", [theta, k]) => ScheduleSpec::Dec { theta: *theta, k: *k },
            ("harmonic", [a, b]) => ScheduleSpec::Harmonic { a: *a, b: *b },
            ("plateau", levels) if !levels.is_empty() => ScheduleSpec::Plateau(levels.to_vec()),
            _ => return Err(Error::Config(format!("cannot parse stepsize {s:?}"))),
        };
        match &spec {
            ScheduleSpec::Const(a) if *a <= 0.0 => Err(Error::Config("constant stepsize must be positive".into())),
            ScheduleSpec::Dec { theta, k } if *theta <= 0.0 || *k < 0.0 => {
                Err(Error::Config("dec:θ,K needs θ > 0 and K ≥ 0".into()))
            }
            ScheduleSpec::Harmonic { a, b } if *a < 0.0 || *b <= 0.0 => {
                Err(Error::Config("harmonic:a,b needs a ≥ 0 and b > 0".into()))
            }
            ScheduleSpec::Plateau(levels)
                if levels.iter().any(|&l| l <= 0.0) || levels.windows(2).any(|w| w[1] > w[0]) =>
            {
                Err(Error::Config("plateau levels must be positive and non-increasing".into()))
            }
            _ => Ok(spec),
        }
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleSpec::Const(a) => write!(f, "const:{a}"),
            ScheduleSpec::Dec { theta, k } => write!(f, "dec:{theta},{k}"),
            ScheduleSpec::Harmonic { a, b } => write!(f, "harmonic:{a},{b}"),
            ScheduleSpec::Plateau(levels) => {
                let parts: Vec<String> = levels.iter().map(|l| l.to_string()).collect();
                write!(f, "plateau:{}", parts.join(","))
            }
            ScheduleSpec::Auto => write!(f, "auto"),
        }
    }
}

impl ScheduleSpec {
    /// Resolves a non-`auto` selector; the decreasing rule needs `μ`.
    pub fn resolve(&self, mu: Option<f64>, m: usize, patience: usize) -> Result<Schedule> {
        Ok(match self {
            ScheduleSpec::Const(alpha) => Schedule::Constant { alpha: *alpha },
            ScheduleSpec::Dec { theta, k } => Schedule::Decreasing {
                theta: *theta,
                k: *k,
                mu: mu.ok_or_else(|| Error::Theory("the decreasing schedule needs μ".into()))?,
                m,
            },
            ScheduleSpec::Harmonic { a, b } => Schedule::Harmonic { a: *a, b: *b },
            ScheduleSpec::Plateau(levels) => Schedule::Plateau {
                levels: levels.clone(),
                patience,
                threshold: PLATEAU_THRESHOLD,
            },
            ScheduleSpec::Auto => {
                return Err(Error::Config("auto stepsize is resolved from theory constants".into()))
            }
        })
    }
}

/// The operator-dependent inputs of the theory constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConstants {
    pub gamma: f64,
    pub v_norm_sq: f64,
    pub v_inv_norm_sq: f64,
    pub lambda_a_norm_sq: f64,
}

impl From<&TransformData> for SpectralConstants {
    fn from(td: &TransformData) -> Self {
        SpectralConstants {
            gamma: td.gamma,
            v_norm_sq: td.v_norm * td.v_norm,
            v_inv_norm_sq: td.v_inv_norm * td.v_inv_norm,
            lambda_a_norm_sq: td.lambda_a_norm * td.lambda_a_norm,
        }
    }
}

impl SpectralConstants {
    /// Closed-form worst-case values for the two named operators.
    pub fn worst_case(preset: Preset, spectral: &SpectralInfo) -> Result<Self> {
        let lam = spectral.lambda;
        match preset {
            Preset::Gtrr => Ok(SpectralConstants {
                gamma: lam,
                v_norm_sq: 3.0,
                v_inv_norm_sq: 9.0,
                lambda_a_norm_sq: lam * lam,
            }),
            Preset::Edrr => {
                let lmin = spectral.lambda_min;
                if lmin <= 0.0 {
                    return Err(Error::NotPositiveDefinite(lmin));
                }
                Ok(SpectralConstants {
                    gamma: lam.sqrt(),
                    v_norm_sq: 4.0,
                    v_inv_norm_sq: 2.0 / lmin,
                    lambda_a_norm_sq: lam * lam,
                })
            }
            Preset::Custom => Err(Error::Theory("no closed-form bounds for a custom operator".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub gamma: f64,
    pub m: usize,
    pub l: f64,
    pub mu: Option<f64>,
    pub t: usize,
    /// Largest stepsize allowed by the nonconvex five-term condition.
    pub alpha_max_ncvx: f64,
    /// The β lower bound paired with the prescribed nonconvex stepsize.
    pub beta: f64,
    /// GT-RR closed form of β, in terms of the graph's λ.
    pub beta1: f64,
    /// ED-RR closed form of β; needs a positive definite `W`.
    pub beta2: Option<f64>,
    /// Largest constant stepsize allowed under the PL condition.
    pub alpha_max_pl: Option<f64>,
}

/// Evaluates `C₁..C₄`, the stepsize bounds and the β expressions.
pub fn theory_constants(
    sc: &SpectralConstants,
    spectral: &SpectralInfo,
    m: usize,
    l: f64,
    mu: Option<f64>,
    t: usize,
) -> Result<TheoryConstants> {
    let gamma = sc.gamma;
    if !(gamma < 1.0) || gamma.is_nan() {
        return Err(Error::Theory(format!("contraction factor γ = {gamma} is not below 1")));
    }
    if !(l > 0.0) {
        return Err(Error::Theory(format!("smoothness constant must be positive, got {l}")));
    }
    if m == 0 || t == 0 {
        return Err(Error::Theory("m and T must be positive".into()));
    }
    let mf = m as f64;
    let tf = t as f64;
    let g2 = 1.0 - gamma * gamma;
    let c4 = sc.v_inv_norm_sq * sc.v_norm_sq * sc.lambda_a_norm_sq;
    let c1 = (mf + 1.0) * g2 / (3.0 * mf) + 1.5 * c4;
    let c2 = (1.0 - ((1.0 + gamma * gamma) / 2.0).powi(m as i32)) * c4 / g2;
    let c3 = 12.0 * c4 + c1;

    let alpha_max_ncvx = [
        (g2 / (192.0 * mf * mf * l.powi(3) * c1 * tf)).cbrt(),
        1.0 / (4.0 * 2f64.sqrt() * mf * l),
        g2.sqrt() / (6.0 * mf.powf(0.75) * c4.powf(0.25) * l),
        g2 / (2.0 * (mf * l * l * c1).sqrt()),
        g2 / (2.0 * (6.0 * mf * c4).sqrt() * l),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);

    let beta = 2.0 * 2f64.sqrt() * g2
        + 3.0 * (g2 * g2 * c1 / mf).powf(0.25)
        + (c1 / mf).sqrt()
        + (6.0 * c4 / mf).sqrt();

    let lam = spectral.lambda;
    let one_l2 = 1.0 - lam * lam;
    let beta1 = 2.0 * 2f64.sqrt() * one_l2
        + 3.0 * (42.0 * one_l2 * one_l2 / mf).powf(0.25)
        + (42.0 / mf).sqrt()
        + (162.0 / mf).sqrt();
    let lmin = spectral.lambda_min;
    let beta2 = (lmin > 0.0).then(|| {
        let one_l = 1.0 - lam;
        2.0 * 2f64.sqrt() * one_l
            + 3.0 * (38.0 * one_l * one_l / (3.0 * lmin * mf)).powf(0.25)
            + (38.0 / (3.0 * lmin * mf)).sqrt()
            + (48.0 / (lmin * mf)).sqrt()
    });

    let alpha_max_pl = mu.map(|mu| {
        [
            (mu * g2 / (768.0 * mf * l.powi(3) * c1)).sqrt(),
            g2 / (24.0 * mf * l * l * c1).sqrt(),
            g2 / (4.0 * mf * mf * l * l * c1).sqrt(),
            1.0 / (4.0 * 2f64.sqrt() * mf * l),
            g2.sqrt() / (6.0 * mf.powf(0.75) * c1.powf(0.25) * l),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    });

    Ok(TheoryConstants {
        c1,
        c2,
        c3,
        c4,
        gamma,
        m,
        l,
        mu,
        t,
        alpha_max_ncvx,
        beta,
        beta1,
        beta2,
        alpha_max_pl,
    })
}

impl TheoryConstants {
    fn g2(&self) -> f64 {
        1.0 - self.gamma * self.gamma
    }

    /// The nonconvex prescription
    /// `α = 1 / (2mLβ/(1−γ²) + (192 m² L³ C₁ T/(1−γ²))^{1/3})`, capped at
    /// [`TheoryConstants::alpha_max_ncvx`].
    pub fn alpha_ncvx(&self) -> f64 {
        let mf = self.m as f64;
        let g2 = self.g2();
        let denom = 2.0 * mf * self.l * self.beta / g2
            + (192.0 * mf * mf * self.l.powi(3) * self.c1 * self.t as f64 / g2).cbrt();
        (1.0 / denom).min(self.alpha_max_ncvx)
    }

    /// The six lower bounds on `K` for the decreasing schedule, in order.
    pub fn k_floor_terms(&self, theta: f64) -> Result<[f64; 6]> {
        let mu = self
            .mu
            .ok_or_else(|| Error::Theory("the decreasing prescription needs μ".into()))?;
        let kappa = self.l / mu;
        let mf = self.m as f64;
        let g2 = self.g2();
        let c1 = self.c1;
        Ok([
            32.0 / g2,
            (768.0 * theta * theta * c1 * kappa.powi(3) / (mf * g2)).sqrt(),
            (12.0 * theta * theta * kappa * kappa * c1 / (mf * g2 * g2)).sqrt(),
            2.0 * kappa * theta * c1.sqrt() / g2,
            4.0 * 2f64.sqrt() * kappa * theta,
            6.0 * theta * c1.powf(0.25) * kappa / (mf.powf(0.25) * g2.sqrt()),
        ])
    }

    /// `max` of [`TheoryConstants::k_floor_terms`].
    pub fn k_floor(&self, theta: f64) -> Result<f64> {
        Ok(self.k_floor_terms(theta)?.into_iter().fold(0.0, f64::max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Ncvx,
    PlConst,
    PlDecreasing,
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ncvx" => Ok(Regime::Ncvx),
            "pl-const" => Ok(Regime::PlConst),
            "pl-decreasing" => Ok(Regime::PlDecreasing),
            other => Err(Error::Config(format!("unknown regime {other:?} (ncvx | pl-const | pl-decreasing)"))),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Ncvx => "ncvx",
            Regime::PlConst => "pl-const",
            Regime::PlDecreasing => "pl-decreasing",
        })
    }
}

/// The schedule prescribed for `regime`. The decreasing rule requires
/// `θ > 16` and takes `K` at the full floor.
pub fn recommend_alpha(tc: &TheoryConstants, regime: Regime, theta: f64) -> Result<Schedule> {
    match regime {
        Regime::Ncvx => Ok(Schedule::Constant { alpha: tc.alpha_ncvx() }),
        Regime::PlConst => tc
            .alpha_max_pl
            .map(|alpha| Schedule::Constant { alpha })
            .ok_or_else(|| Error::Theory("the PL regime needs μ".into())),
        Regime::PlDecreasing => {
            if !(theta > 16.0) {
                return Err(Error::Theory(format!("θ must exceed 16, got {theta}")));
            }
            let k = tc.k_floor(theta)?;
            Ok(Schedule::Decreasing {
                theta,
                k,
                mu: tc.mu.expect("k_floor checked μ"),
                m: tc.m,
            })
        }
    }
}
