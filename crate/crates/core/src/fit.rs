//! Least-squares rate fits on log-log and semi-log axes.

use crate::error::{Error, Result};
use serde::Serialize;

const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return Err(Error::InsufficientData(format!("{n} points")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae equal".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit { slope, intercept: my - slope * mx, r_squared, n })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    /// Slope of log(value) against log(t) (algebraic) or t (exponential).
    pub exponent: f64,
    pub r_squared: f64,
    pub n: usize,
    pub window: (f64, f64),
    /// Slope on the preceding half-window; compared against `exponent` to
    /// detect non-algebraic behaviour.
    pub earlier_exponent: Option<f64>,
}

impl RateFit {
    /// True when the log-log slope keeps steepening as the window moves
    /// later, the signature of faster-than-algebraic decay.
    pub fn non_algebraic(&self) -> bool {
        match self.earlier_exponent {
            Some(e) => self.exponent.abs() > 1.1 * e.abs(),
            None => false,
        }
    }
}

fn window_points(series: &[(f64, f64)], lo: f64, hi: f64, logx: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, v) in series {
        if t >= lo && t <= hi {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InsufficientData(format!("non-positive value {v:e} at t = {t:e}")));
            }
            xs.push(if logx { t.ln() } else { t });
            ys.push(v.ln());
        }
    }
    if xs.len() < MIN_POINTS {
        return Err(Error::InsufficientData(format!("{} points in window [{lo:e}, {hi:e}]", xs.len())));
    }
    Ok((xs, ys))
}

fn last_time(series: &[(f64, f64)]) -> Result<f64> {
    series
        .iter()
        .map(|p| p.0)
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))))
        .ok_or_else(|| Error::InsufficientData("empty series".into()))
}

/// Log-log slope over the trailing `window_decades` decades of the series.
pub fn rate_fit(series: &[(f64, f64)], window_decades: f64) -> Result<RateFit> {
    let t1 = last_time(series)?;
    let t0 = t1 / 10f64.powf(window_decades);
    rate_fit_between(series, t0, t1)
}

/// Log-log slope on [t0, t1].
pub fn rate_fit_between(series: &[(f64, f64)], t0: f64, t1: f64) -> Result<RateFit> {
    if !(t0 > 0.0) {
        return Err(Error::Invalid("algebraic fits need positive times".into()));
    }
    let (x, y) = window_points(series, t0, t1, true)?;
    let f = linear_fit(&x, &y)?;
    let half = (t1 / t0).sqrt();
    let earlier = window_points(series, t0 / half, t1 / half, true)
        .ok()
        .and_then(|(x, y)| linear_fit(&x, &y).ok())
        .map(|f| f.slope);
    Ok(RateFit { exponent: f.slope, r_squared: f.r_squared, n: f.n, window: (t0, t1), earlier_exponent: earlier })
}

/// Semi-log slope (exponential rate) on [t0, t1].
pub fn exp_fit_between(series: &[(f64, f64)], t0: f64, t1: f64) -> Result<RateFit> {
    let (x, y) = window_points(series, t0, t1, false)?;
    let f = linear_fit(&x, &y)?;
    Ok(RateFit { exponent: f.slope, r_squared: f.r_squared, n: f.n, window: (t0, t1), earlier_exponent: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn exact_power_law() {
        let s: Vec<_> = logspace(0.0, 3.0, 61).into_iter().map(|t| (t, t.powi(-2))).collect();
        let f = rate_fit(&s, 1.0).unwrap();
        assert!((f.exponent + 2.0).abs() < 1e-10);
        assert!(!f.non_algebraic());
    }

    #[test]
    fn exponential_decay_is_flagged() {
        let s: Vec<_> = logspace(0.0, 1.5, 80).into_iter().map(|t| (t, (-t).exp())).collect();
        let late = rate_fit(&s, 0.5).unwrap();
        assert!(late.non_algebraic());
        let early = rate_fit_between(&s, 1.0, 10f64.powf(0.5)).unwrap();
        assert!(late.exponent.abs() > early.exponent.abs());
    }

    #[test]
    fn too_few_points_or_nonpositive() {
        let s: Vec<_> = (1..5).map(|k| (k as f64, 1.0)).collect();
        assert!(matches!(rate_fit(&s, 1.0), Err(Error::InsufficientData(_))));
        let z: Vec<_> = (1..50).map(|k| (k as f64, 0.0)).collect();
        assert!(matches!(rate_fit(&z, 2.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn semilog_slope() {
        let s: Vec<_> = (0..40).map(|k| k as f64 * 0.1).map(|t| (t, 3.0 * (-0.7 * t).exp())).collect();
        let f = exp_fit_between(&s, 0.0, 4.0).unwrap();
        assert!((f.exponent + 0.7).abs() < 1e-12 && f.r_squared > 0.999999);
    }
}
