//! Per-epoch trajectory metrics, CSV output and empirical rate fitting.

use std::fmt::Write as _;
use std::io::Write;

use crate::abc::TransformData;
use crate::error::{Error, Result};
use crate::linalg::{consensus_error_sq, mean_row, Mat};
use crate::objective::ObjectiveSpec;

pub const CSV_HEADER: &str =
    "t,alpha,grad_norm_sq,min_grad_norm_sq,consensus_sq,fgap_mean,fgap_bar,q_t,e_norm_sq,wall_ns,diverged";

/// One row of the trajectory, taken at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub alpha: f64,
    pub grad_norm_sq: Option<f64>,
    pub min_grad_norm_sq: Option<f64>,
    pub consensus_sq: Option<f64>,
    pub fgap_mean: Option<f64>,
    pub fgap_bar: Option<f64>,
    pub q_t: Option<f64>,
    pub e_norm_sq: Option<f64>,
    pub wall_ns: Option<u128>,
    pub diverged: bool,
}

/// Transform data plus `s_t^0`, needed for `e_t^0` and `Q_t`.
#[derive(Clone, Copy)]
pub struct TransformView<'a> {
    pub data: &'a TransformData,
    pub s: &'a Mat,
}

/// Metrics of the stacked iterate `x` at epoch `t` run with stepsize `alpha`.
/// `prev` is the previous record, which carries the running minimum.
pub fn record(
    t: usize,
    alpha: f64,
    x: &Mat,
    obj: &ObjectiveSpec,
    transform: Option<TransformView<'_>>,
    prev: Option<&TrajectoryRecord>,
) -> TrajectoryRecord {
    let n = x.nrows();
    let xbar = mean_row(x);
    let grad_norm_sq = obj.full_grad(&xbar).norm_squared();
    let min_grad_norm_sq = match prev.and_then(|p| p.min_grad_norm_sq) {
        Some(m) => m.min(grad_norm_sq),
        None => grad_norm_sq,
    };
    let consensus_sq = if n == 1 { 0.0 } else { consensus_error_sq(x) };
    let f_star = obj.constants().f_star.value;
    let fgap_bar = f_star.map(|fs| obj.value(&xbar) - fs);
    let fgap_mean = f_star.map(|fs| {
        let vals: Vec<f64> = (0..n).map(|i| obj.value(&x.row(i).transpose()) - fs).collect();
        crate::linalg::pairwise_sum(&vals) / n as f64
    });
    let (e_norm_sq, q_t) = match transform {
        Some(tv) => {
            let e = tv.data.e_vector(x, tv.s).norm_sq;
            let g2 = 1.0 - tv.data.gamma * tv.data.gamma;
            let l = obj.constants().l;
            let weight = 8.0 * alpha * l * l * tv.data.v_norm * tv.data.v_norm / (n as f64 * g2);
            (Some(e), fgap_bar.map(|f| f + weight * e))
        }
        None => (None, None),
    };
    TrajectoryRecord {
        t,
        alpha,
        grad_norm_sq: Some(grad_norm_sq),
        min_grad_norm_sq: Some(min_grad_norm_sq),
        consensus_sq: Some(consensus_sq),
        fgap_mean,
        fgap_bar,
        q_t,
        e_norm_sq,
        wall_ns: None,
        diverged: false,
    }
}

/// Row written when the iterate blows up; all metric fields are absent.
pub fn diverged_record(t: usize, alpha: f64) -> TrajectoryRecord {
    TrajectoryRecord {
        t,
        alpha,
        grad_norm_sq: None,
        min_grad_norm_sq: None,
        consensus_sq: None,
        fgap_mean: None,
        fgap_bar: None,
        q_t: None,
        e_norm_sq: None,
        wall_ns: None,
        diverged: true,
    }
}

fn fmt_opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        let _ = write!(out, "{v:e}");
    }
}

impl TrajectoryRecord {
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{},{:e},", self.t, self.alpha);
        for v in [
            self.grad_norm_sq,
            self.min_grad_norm_sq,
            self.consensus_sq,
            self.fgap_mean,
            self.fgap_bar,
            self.q_t,
            self.e_norm_sq,
        ] {
            fmt_opt(&mut s, v);
            s.push(',');
        }
        if let Some(w) = self.wall_ns {
            let _ = write!(s, "{w}");
        }
        let _ = write!(s, ",{}", u8::from(self.diverged));
        s
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::GradNormSq => self.grad_norm_sq,
            Metric::MinGradNormSq => self.min_grad_norm_sq,
            Metric::ConsensusSq => self.consensus_sq,
            Metric::FgapMean => self.fgap_mean,
            Metric::FgapBar => self.fgap_bar,
            Metric::QT => self.q_t,
            Metric::ENormSq => self.e_norm_sq,
        }
    }
}

/// Writes `# key=value` metadata lines, the header and one row per record.
pub fn write_csv<W: Write>(out: &mut W, metadata: &[(String, String)], records: &[TrajectoryRecord]) -> std::io::Result<()> {
    out.write_all(to_csv_string(metadata, records).as_bytes())
}

pub fn to_csv_string(metadata: &[(String, String)], records: &[TrajectoryRecord]) -> String {
    let mut s = String::new();
    for (k, v) in metadata {
        let _ = writeln!(s, "# {k}={v}");
    }
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Parses the output of [`to_csv_string`].
pub fn parse_csv(text: &str) -> Result<(Vec<(String, String)>, Vec<TrajectoryRecord>)> {
    let mut meta = Vec::new();
    let mut records = Vec::new();
    let mut seen_header = false;
    for (lineno, line) in text.lines().enumerate() {
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            let (k, v) = rest.split_once('=').unwrap_or((rest, ""));
            meta.push((k.to_string(), v.to_string()));
            continue;
        }
        if !seen_header {
            if line != CSV_HEADER {
                return Err(Error::Config(format!("line {}: unexpected CSV header {line:?}", lineno + 1)));
            }
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(Error::Config(format!("line {}: expected 11 fields", lineno + 1)));
        }
        let bad = |what: &str| Error::Config(format!("line {}: bad {what}", lineno + 1));
        let opt = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(what))
            }
        };
        records.push(TrajectoryRecord {
            t: f[0].parse().map_err(|_| bad("t"))?,
            alpha: f[1].parse().map_err(|_| bad("alpha"))?,
            grad_norm_sq: opt(f[2], "grad_norm_sq")?,
            min_grad_norm_sq: opt(f[3], "min_grad_norm_sq")?,
            consensus_sq: opt(f[4], "consensus_sq")?,
            fgap_mean: opt(f[5], "fgap_mean")?,
            fgap_bar: opt(f[6], "fgap_bar")?,
            q_t: opt(f[7], "q_t")?,
            e_norm_sq: opt(f[8], "e_norm_sq")?,
            wall_ns: if f[9].is_empty() { None } else { Some(f[9].parse().map_err(|_| bad("wall_ns"))?) },
            diverged: match f[10] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("diverged")),
            },
        });
    }
    if !seen_header {
        return Err(Error::Config("missing CSV header".into()));
    }
    Ok((meta, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    GradNormSq,
    MinGradNormSq,
    ConsensusSq,
    FgapMean,
    FgapBar,
    QT,
    ENormSq,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (usize, usize),
    pub r2: f64,
}

/// Least-squares fit of `log metric` against `log t` over records with
/// `t_lo ≤ t ≤ t_hi`. Absent or non-finite entries are skipped.
pub fn rate_fit(records: &[TrajectoryRecord], metric: Metric, window: (usize, usize)) -> Result<RateFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in records.iter().filter(|r| r.t >= window.0 && r.t <= window.1) {
        let Some(v) = r.get(metric) else { continue };
        if !v.is_finite() {
            continue;
        }
        if v <= 0.0 {
            return Err(Error::RateFit(format!("non-positive value {v:e} at t = {}", r.t)));
        }
        if r.t == 0 {
            return Err(Error::RateFit("log-log fit window must exclude t = 0".into()));
        }
        xs.push((r.t as f64).ln());
        ys.push(v.ln());
    }
    let (slope, intercept, r2) = least_squares(&xs, &ys)?;
    Ok(RateFit { slope, intercept, window, r2 })
}

/// Log-log fit of arbitrary positive pairs.
pub fn power_law_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::RateFit("length mismatch".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(Error::RateFit("power-law fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() < 10 {
        return Err(Error::RateFit(format!("need at least 10 points, have {}", xs.len())));
    }
    fit_line(xs, ys)
}

/// Slope, intercept and r² of the ordinary least-squares line.
fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Err(Error::RateFit("need at least two points".into()));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::RateFit("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, intercept, r2))
}
