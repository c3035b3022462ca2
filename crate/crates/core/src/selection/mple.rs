//! Logistic regression by Newton's method with per-row offsets.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpleOptions {
    pub max_iter: usize,
    /// Converged once every gradient component is below this.
    pub grad_tol: f64,
    /// A coefficient beyond this magnitude is treated as divergent.
    pub separation_bound: f64,
}

impl Default for MpleOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            grad_tol: 1e-8,
            separation_bound: 15.0,
        }
    }
}

/// Design in struct-of-arrays form: covariates, response and offset.
pub trait LogisticDesign<const P: usize>: Sync {
    fn len(&self) -> usize;
    fn row(&self, i: usize) -> [f64; P];
    fn response(&self, i: usize) -> bool;
    fn offset(&self, i: usize) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit<const P: usize> {
    pub coefficients: [f64; P],
    pub std_errors: [f64; P],
    pub covariance: [[f64; P]; P],
    pub converged: bool,
    pub iterations: usize,
    pub max_gradient: f64,
    pub log_likelihood: f64,
    pub fitted_sum: f64,
}

struct Pass<const P: usize> {
    ll: f64,
    grad: SVector<f64, P>,
    info: SMatrix<f64, P, P>,
    fitted_sum: f64,
}

/// Neumaier-compensated running sum. Plain accumulation over millions of
/// rows leaves the gradient stuck near 1e-7.
#[derive(Clone, Copy, Default)]
struct Acc {
    sum: f64,
    comp: f64,
}

impl Acc {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

// log(1 + exp(x)) without overflow
fn log1pexp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn eval<const P: usize, D: LogisticDesign<P>>(
    d: &D,
    beta: &SVector<f64, P>,
    with_info: bool,
) -> Pass<P> {
    let mut ll = Acc::default();
    let mut grad = [Acc::default(); P];
    let mut info = SMatrix::<f64, P, P>::zeros();
    let mut fitted_sum = Acc::default();
    for i in 0..d.len() {
        let x = d.row(i);
        let mut eta = d.offset(i);
        for k in 0..P {
            eta += beta[k] * x[k];
        }
        let p = sigmoid(eta);
        let y = d.response(i);
        ll.add(if y { eta } else { 0.0 } - log1pexp(eta));
        fitted_sum.add(p);
        let r = if y { 1.0 - p } else { -p };
        for k in 0..P {
            grad[k].add(r * x[k]);
        }
        if with_info {
            let w = p * (1.0 - p);
            for a in 0..P {
                let wa = w * x[a];
                for b in a..P {
                    info[(a, b)] += wa * x[b];
                }
            }
        }
    }
    if with_info {
        for a in 0..P {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
    }
    Pass {
        ll: ll.value(),
        grad: SVector::<f64, P>::from_fn(|k, _| grad[k].value()),
        info,
        fitted_sum: fitted_sum.value(),
    }
}

fn invert_information<const P: usize>(info: &SMatrix<f64, P, P>) -> Result<SMatrix<f64, P, P>> {
    let chol = info
        .cholesky()
        .ok_or_else(|| Error::Singular("information matrix not positive definite".into()))?;
    // Squared Cholesky pivots relative to the diagonal flag near-collinear
    // columns that rounding left barely positive definite.
    let l = chol.l();
    let ratio = (0..P)
        .map(|k| l[(k, k)] * l[(k, k)] / info[(k, k)])
        .fold(f64::INFINITY, f64::min);
    if !(ratio > 1e-12) {
        return Err(Error::Singular(format!(
            "collinear design (pivot ratio {ratio:.3e})"
        )));
    }
    Ok(chol.inverse())
}

/// Maximizes the logistic log likelihood with step-halving Newton updates.
pub fn fit_logistic<const P: usize, D: LogisticDesign<P>>(
    d: &D,
    opts: &MpleOptions,
) -> Result<LogisticFit<P>> {
    let n = d.len();
    let events = (0..n).filter(|&i| d.response(i)).count();
    if events == 0 || events == n {
        return Err(Error::Separation(format!(
            "{events} of {n} rows formed; need both outcomes"
        )));
    }
    // Start at the base-rate logit for the first column, assumed to be the
    // intercept.
    let mut beta = SVector::<f64, P>::zeros();
    let mean_off = (0..n).map(|i| d.offset(i)).sum::<f64>() / n as f64;
    let rate = events as f64 / n as f64;
    beta[0] = (rate / (1.0 - rate)).ln() - mean_off;

    let mut cur = eval(d, &beta, true);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let gmax = cur.grad.amax();
        if gmax < opts.grad_tol {
            converged = true;
            break;
        }
        let cov = invert_information(&cur.info)?;
        let step = cov * cur.grad;
        iterations += 1;
        let mut scale = 1.0;
        let mut next_beta = beta + step;
        let mut next = eval(d, &next_beta, true);
        let mut halvings = 0;
        while !(next.ll >= cur.ll - 1e-10 * cur.ll.abs().max(1.0)) && halvings < 30 {
            scale *= 0.5;
            next_beta = beta + step * scale;
            next = eval(d, &next_beta, true);
            halvings += 1;
        }
        let moved = (next_beta - beta).amax();
        beta = next_beta;
        cur = next;
        if let Some(k) = (0..P).find(|&k| beta[k].abs() > opts.separation_bound) {
            return Err(Error::Separation(format!(
                "coefficient {k} diverged to {:.3}",
                beta[k]
            )));
        }
        // At the floating-point floor the gradient can stall a little above
        // grad_tol on very large designs.
        if moved < 1e-12 && cur.grad.amax() < 1e-6 {
            converged = true;
            break;
        }
    }
    if !converged && cur.grad.amax() < opts.grad_tol {
        converged = true;
    }
    let cov = invert_information(&cur.info)?;
    let mut coefficients = [0.0; P];
    let mut std_errors = [0.0; P];
    let mut covariance = [[0.0; P]; P];
    for a in 0..P {
        coefficients[a] = beta[a];
        std_errors[a] = cov[(a, a)].sqrt();
        for b in 0..P {
            covariance[a][b] = cov[(a, b)];
        }
    }
    Ok(LogisticFit {
        coefficients,
        std_errors,
        covariance,
        converged,
        iterations,
        max_gradient: cur.grad.amax(),
        log_likelihood: cur.ll,
        fitted_sum: cur.fitted_sum,
    })
}

/// Gradient of the log likelihood at `beta`, for post-fit checks.
pub fn logistic_gradient<const P: usize, D: LogisticDesign<P>>(d: &D, beta: &[f64; P]) -> [f64; P] {
    let b = SVector::<f64, P>::from_column_slice(beta);
    let g = eval(d, &b, false).grad;
    let mut out = [0.0; P];
    out.copy_from_slice(g.as_slice());
    out
}
