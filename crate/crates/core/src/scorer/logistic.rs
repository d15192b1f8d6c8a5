//! L2-regularized logistic regression over sparse binary features, fitted by
//! iteratively reweighted least squares.
//!
//! Each reweighted least-squares system is solved matrix-free by conjugate
//! gradients, so the cost per step is linear in the number of non-zeros and
//! the 2^18-wide hashed feature space never has to be materialized.

use serde::{Deserialize, Serialize};

use super::features::DIM;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsOptions {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            l2: 1.0,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

/// Sparse logistic model. `weights` is sorted by feature index and holds
/// only non-zero entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub bias: f64,
    pub weights: Vec<(u32, f64)>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Training outcome diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

struct Design {
    rows: Vec<Vec<u32>>,
    labels: Vec<f64>,
    cols: usize,
}

impl Design {
    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| b + r.iter().map(|&c| w[c as usize]).sum::<f64>())
            .collect()
    }

    fn objective(&self, w: &[f64], b: f64, l2: f64) -> f64 {
        let z = self.margins(w, b);
        let ll: f64 = z
            .iter()
            .zip(&self.labels)
            .map(|(&z, &y)| -(y * softplus(-z) + (1.0 - y) * softplus(z)))
            .sum();
        ll - 0.5 * l2 * w.iter().map(|x| x * x).sum::<f64>()
    }

    /// (X^T S X + diag(l2, .., ridge)) v, with the bias as the last column.
    fn hess_vec(&self, s: &[f64], l2: f64, v: &[f64], out: &mut [f64]) {
        let bias = self.cols;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &si) in self.rows.iter().zip(s) {
            let xv = v[bias] + r.iter().map(|&c| v[c as usize]).sum::<f64>();
            let t = si * xv;
            for &c in r {
                out[c as usize] += t;
            }
            out[bias] += t;
        }
        for j in 0..bias {
            out[j] += l2 * v[j];
        }
        out[bias] += 1e-8 * v[bias];
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    max_iter: usize,
    rel_tol: f64,
) -> Vec<f64> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let rhs_norm = dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        return x;
    }
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= rel_tol * rhs_norm {
            break;
        }
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    x
}

impl LogisticModel {
    /// Fit on `(features, label)` rows.
    pub fn fit(rows: &[(&[u32], bool)], opts: &IrlsOptions) -> (Self, FitReport) {
        let mut cols: Vec<u32> = rows.iter().flat_map(|(f, _)| f.iter().copied()).collect();
        cols.sort_unstable();
        cols.dedup();
        let local = |f: u32| cols.binary_search(&f).unwrap() as u32;
        let design = Design {
            rows: rows
                .iter()
                .map(|(f, _)| f.iter().map(|&x| local(x)).collect())
                .collect(),
            labels: rows.iter().map(|&(_, y)| if y { 1.0 } else { 0.0 }).collect(),
            cols: cols.len(),
        };
        let d = design.cols;
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut obj = design.objective(&w, b, opts.l2);
        let mut report = FitReport {
            iterations: 0,
            converged: false,
            objective: obj,
        };
        for it in 0..opts.max_iter {
            report.iterations = it + 1;
            let z = design.margins(&w, b);
            let p: Vec<f64> = z.iter().map(|&z| sigmoid(z)).collect();
            let s: Vec<f64> = p.iter().map(|&p| (p * (1.0 - p)).max(1e-12)).collect();
            let mut grad = vec![0.0; d + 1];
            for ((r, &pi), &yi) in design.rows.iter().zip(&p).zip(&design.labels) {
                let e = yi - pi;
                for &c in r {
                    grad[c as usize] += e;
                }
                grad[d] += e;
            }
            for j in 0..d {
                grad[j] -= opts.l2 * w[j];
            }
            let step = conjugate_gradient(
                |v, out| design.hess_vec(&s, opts.l2, v, out),
                &grad,
                (2 * (d + 1)).clamp(50, 500),
                1e-10,
            );
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let w_new: Vec<f64> = w.iter().zip(&step).map(|(wi, si)| wi + t * si).collect();
                let b_new = b + t * step[d];
                let obj_new = design.objective(&w_new, b_new, opts.l2);
                if obj_new >= obj - 1e-12 * obj.abs() {
                    let change = (obj_new - obj).abs();
                    let max_step = step.iter().fold(0.0f64, |m, s| m.max((t * s).abs()));
                    w = w_new;
                    b = b_new;
                    obj = obj_new;
                    accepted = true;
                    if change <= opts.tol * (1.0 + obj.abs()) || max_step <= opts.tol {
                        report.converged = true;
                    }
                    break;
                }
                t *= 0.5;
            }
            report.objective = obj;
            if !accepted {
                report.converged = true;
            }
            if report.converged {
                break;
            }
        }
        let weights = cols
            .iter()
            .zip(&w)
            .filter(|(_, &x)| x != 0.0)
            .map(|(&c, &x)| (c, x))
            .collect();
        (LogisticModel { bias: b, weights }, report)
    }

    /// Probability for a sorted, deduplicated feature list.
    pub fn predict(&self, features: &[u32]) -> f64 {
        let z = self.bias
            + features
                .iter()
                .filter_map(|f| {
                    self.weights
                        .binary_search_by_key(f, |&(c, _)| c)
                        .ok()
                        .map(|i| self.weights[i].1)
                })
                .sum::<f64>();
        sigmoid(z)
    }

    /// Dense weight vector over the full hashed space, for bulk scoring.
    pub fn dense(&self) -> DenseModel {
        let mut w = vec![0.0; DIM];
        for &(c, x) in &self.weights {
            w[c as usize] = x;
        }
        DenseModel { bias: self.bias, w }
    }
}

#[derive(Debug, Clone)]
pub struct DenseModel {
    bias: f64,
    w: Vec<f64>,
}

impl DenseModel {
    pub fn predict(&self, features: &[u32]) -> f64 {
        sigmoid(self.bias + features.iter().map(|&f| self.w[f as usize]).sum::<f64>())
    }
}
