//! Score calibration: balanced-bootstrap logistic fits of label against raw
//! score, and the raw score at which the averaged calibration curve is 0.5.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::scorer::logistic::sigmoid;
use crate::{par, rng, Error, Result};

/// Coefficient bound. The sigmoid is saturated in double precision past it.
pub const BETA_CLIP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub beta0: f64,
    pub beta1: f64,
}

impl LogisticParams {
    pub fn prob(&self, x: f64) -> f64 {
        sigmoid(self.beta0 + self.beta1 * x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticFit {
    pub params: LogisticParams,
    /// A coefficient ended on the clip bound: the sample is separable or
    /// single-class.
    pub separated: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-8,
            max_iter: 50,
        }
    }
}

fn log_lik(points: &[(f64, bool)], b: [f64; 2]) -> f64 {
    points
        .iter()
        .map(|&(x, y)| {
            let z = b[0] + b[1] * x;
            // log sigma(z) = -softplus(-z)
            let sp = |z: f64| if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            if y {
                -sp(-z)
            } else {
                -sp(z)
            }
        })
        .sum()
}

fn clip(b: [f64; 2]) -> [f64; 2] {
    [b[0].clamp(-BETA_CLIP, BETA_CLIP), b[1].clamp(-BETA_CLIP, BETA_CLIP)]
}

/// Maximum-likelihood fit of `label ~ sigmoid(beta0 + beta1 * score)` by
/// damped Newton inside the box `|beta| <= BETA_CLIP`.
pub fn fit_logistic(points: &[(f64, bool)]) -> Result<LogisticFit> {
    fit_logistic_with(points, &NewtonOptions::default())
}

pub fn fit_logistic_with(points: &[(f64, bool)], opts: &NewtonOptions) -> Result<LogisticFit> {
    if points.is_empty() {
        return Err(Error::Empty("calibration points"));
    }
    let mut b = [0.0f64; 2];
    let mut ll = log_lik(points, b);
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y) in points {
            let p = sigmoid(b[0] + b[1] * x);
            let e = if y { 1.0 } else { 0.0 } - p;
            let w = p * (1.0 - p);
            g0 += e;
            g1 += e * x;
            h00 += w;
            h01 += w * x;
            h11 += w * x * x;
        }
        let g = [g0, g1];
        // coordinates pinned at the bound with the gradient pushing outward
        let pinned = [0, 1].map(|i| b[i].abs() >= BETA_CLIP && g[i] * b[i] > 0.0);
        let mut d = [0.0f64; 2];
        match pinned {
            [false, false] => {
                let (a, c, e) = (h00 + 1e-12, h01, h11 + 1e-12);
                let det = a * e - c * c;
                if det > 1e-300 {
                    d = [(e * g0 - c * g1) / det, (a * g1 - c * g0) / det];
                } else {
                    // flat likelihood: follow the gradient
                    d = g;
                }
            }
            [true, false] => d[1] = g1 / (h11 + 1e-12),
            [false, true] => d[0] = g0 / (h00 + 1e-12),
            [true, true] => break,
        }
        if !d.iter().all(|v| v.is_finite()) {
            break;
        }
        // backtrack until the objective improves, then extend while it keeps
        // improving so separable samples reach the bound quickly
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let cand = clip([b[0] + t * d[0], b[1] + t * d[1]]);
            let v = log_lik(points, cand);
            if v >= ll {
                next = Some((cand, v));
                break;
            }
            t *= 0.5;
        }
        let Some((mut cand, mut v)) = next else { break };
        if t == 1.0 {
            for _ in 0..12 {
                t *= 2.0;
                let c2 = clip([b[0] + t * d[0], b[1] + t * d[1]]);
                let v2 = log_lik(points, c2);
                if v2 > v {
                    cand = c2;
                    v = v2;
                } else {
                    break;
                }
            }
        }
        let step = (cand[0] - b[0]).abs().max((cand[1] - b[1]).abs());
        b = cand;
        ll = v;
        if step <= opts.tol {
            break;
        }
    }
    let separated = b.iter().any(|v| v.abs() >= BETA_CLIP);
    Ok(LogisticFit {
        params: LogisticParams {
            beta0: b[0],
            beta1: b[1],
        },
        separated,
        iterations,
    })
}

/// `b` balanced bootstrap fits. Each resample draws `m = min(#pos, #neg)`
/// positives and `m` negatives with replacement.
pub fn bootstrap_fits(points: &[(f64, bool)], b: usize, seed: u64) -> Result<Vec<LogisticFit>> {
    let pos: Vec<f64> = points.iter().filter(|p| p.1).map(|p| p.0).collect();
    let neg: Vec<f64> = points.iter().filter(|p| !p.1).map(|p| p.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass(format!(
            "calibration needs both labels ({} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    let m = pos.len().min(neg.len());
    let fits = par::map_range(b, |i| {
        let mut rng = rng::substream(seed, i as u64);
        let mut sample = Vec::with_capacity(2 * m);
        for _ in 0..m {
            sample.push((pos[rng.random_range(0..pos.len())], true));
        }
        for _ in 0..m {
            sample.push((neg[rng.random_range(0..neg.len())], false));
        }
        fit_logistic(&sample)
    });
    fits.into_iter().collect()
}

pub fn bootstrap_params(points: &[(f64, bool)], b: usize, seed: u64) -> Result<Vec<LogisticParams>> {
    Ok(bootstrap_fits(points, b, seed)?
        .into_iter()
        .map(|f| f.params)
        .collect())
}

/// Mean calibrated probability at raw score `x`.
pub fn mean_sigmoid(params: &[LogisticParams], x: f64) -> f64 {
    params.iter().map(|p| p.prob(x)).sum::<f64>() / params.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub x_star: f64,
    /// `false` when the curve does not cross 0.5 on `[0, 1]`; `x_star` is
    /// then the endpoint closest to 0.5.
    pub bracketed: bool,
    pub params: Vec<LogisticParams>,
}

/// Brent's method on `[a, b]`. `fa` and `fb` must have opposite signs.
fn brent(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, tol: f64) -> f64 {
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() && fb != 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    b
}

/// Raw score in `[0, 1]` where the mean calibrated probability equals 0.5,
/// located to within `tol`.
pub fn calibrated_threshold(params: &[LogisticParams], tol: f64) -> Result<CalibrationResult> {
    if params.is_empty() {
        return Err(Error::Empty("calibration parameters"));
    }
    let f = |x: f64| mean_sigmoid(params, x) - 0.5;
    let (f0, f1) = (f(0.0), f(1.0));
    let (x_star, bracketed) = if f0 == 0.0 {
        (0.0, true)
    } else if f1 == 0.0 {
        (1.0, true)
    } else if f0.signum() != f1.signum() {
        (brent(f, 0.0, 1.0, f0, f1, tol * 1e-3), true)
    } else if f0.abs() <= f1.abs() {
        (0.0, false)
    } else {
        (1.0, false)
    };
    Ok(CalibrationResult {
        x_star,
        bracketed,
        params: params.to_vec(),
    })
}

/// Bootstrap, fit, and locate the threshold in one call.
pub fn calibrate(points: &[(f64, bool)], b: usize, seed: u64, tol: f64) -> Result<CalibrationReport> {
    let fits = bootstrap_fits(points, b, seed)?;
    let params: Vec<LogisticParams> = fits.iter().map(|f| f.params).collect();
    let result = calibrated_threshold(&params, tol)?;
    Ok(CalibrationReport::new(&result, fits.iter().filter(|f| f.separated).count()))
}

/// Quantiles reported for each coefficient.
pub const REPORT_QUANTILES: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q025: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q975: f64,
}

impl Quantiles {
    fn of(mut v: Vec<f64>) -> Self {
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        let [a, b, c, d, e] = REPORT_QUANTILES.map(q);
        Quantiles {
            q025: a,
            q25: b,
            q50: c,
            q75: d,
            q975: e,
        }
    }
}

/// Serializable calibration summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub x_star: f64,
    pub bracketed: bool,
    #[serde(rename = "B")]
    pub b: usize,
    pub separated: usize,
    pub beta0: Quantiles,
    pub beta1: Quantiles,
}

impl CalibrationReport {
    pub fn new(result: &CalibrationResult, separated: usize) -> Self {
        CalibrationReport {
            x_star: result.x_star,
            bracketed: result.bracketed,
            b: result.params.len(),
            separated,
            beta0: Quantiles::of(result.params.iter().map(|p| p.beta0).collect()),
            beta1: Quantiles::of(result.params.iter().map(|p| p.beta1).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(beta0: f64, beta1: f64) -> LogisticParams {
        LogisticParams { beta0, beta1 }
    }

    #[test]
    fn threshold_examples() {
        let r = calibrated_threshold(&[p(-5.0, 10.0)], 1e-9).unwrap();
        assert!(r.bracketed);
        assert!((r.x_star - 0.5).abs() <= 1e-9);
        let r = calibrated_threshold(&[p(-5.0, 10.0), p(-6.0, 10.0)], 1e-9).unwrap();
        assert!((r.x_star - 0.55).abs() <= 1e-9);
    }

    #[test]
    fn threshold_fallback_picks_closer_endpoint() {
        // curve below 0.5 everywhere on [0, 1], closest at x = 1
        let r = calibrated_threshold(&[p(-10.0, 5.0)], 1e-9).unwrap();
        assert!(!r.bracketed);
        assert_eq!(r.x_star, 1.0);
        let r = calibrated_threshold(&[p(10.0, -5.0)], 1e-9).unwrap();
        assert!(!r.bracketed);
        assert_eq!(r.x_star, 1.0);
        let r = calibrated_threshold(&[p(5.0, 1.0)], 1e-9).unwrap();
        assert_eq!(r.x_star, 0.0);
        assert!(calibrated_threshold(&[], 1e-9).is_err());
    }

    #[test]
    fn separated_sample_clips() {
        let pts: Vec<(f64, bool)> = (0..20).map(|i| (i as f64 / 19.0, i >= 10)).collect();
        let fit = fit_logistic(&pts).unwrap();
        assert!(fit.separated);
        assert_eq!(fit.params.beta1, BETA_CLIP);
        let single: Vec<(f64, bool)> = (0..5).map(|i| (i as f64 / 4.0, true)).collect();
        let fit = fit_logistic(&single).unwrap();
        assert!(fit.separated);
        assert!(fit.params.beta0 > 0.0);
    }

    #[test]
    fn no_signal_gives_flat_slope() {
        let pts: Vec<(f64, bool)> = (0..200)
            .map(|i| ((i / 2) as f64 / 99.0, i % 2 == 0))
            .collect();
        let fit = fit_logistic(&pts).unwrap();
        assert!(fit.params.beta1.abs() < 1e-6, "{:?}", fit.params);
        assert!(!fit.separated);
    }

    #[test]
    fn bootstrap_shapes() {
        let pts: Vec<(f64, bool)> = (0..10).map(|i| (i as f64 / 10.0, i % 2 == 0)).collect();
        let a = bootstrap_params(&pts, 10, 7).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a, bootstrap_params(&pts, 10, 7).unwrap());
        let one: Vec<(f64, bool)> = pts.iter().map(|&(x, _)| (x, true)).collect();
        assert!(bootstrap_params(&one, 10, 7).is_err());
    }

    #[test]
    fn report_serializes() {
        let r = calibrated_threshold(&[p(-5.0, 10.0), p(-6.0, 10.0)], 1e-9).unwrap();
        let rep = CalibrationReport::new(&r, 0);
        let v = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["B"], 2);
        assert_eq!(v["beta0"]["q50"], -5.5);
    }
}
