//! L2-regularized logistic regression fit by damped Newton iterations.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::linalg::{bce_with_logit, sigmoid, solve_spd};
use crate::{Error, Result};

pub const GRAD_TOL: f64 = 1e-6;
const MAX_NEWTON_ITERS: usize = 100;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Gradient norm at the returned optimum.
    pub grad_norm: f64,
}

impl LogisticModel {
    pub fn decision(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.dot(&self.weights) + self.bias
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.decision(x).mapv(sigmoid)
    }
}

struct Problem<'a> {
    x: ArrayView2<'a, f64>,
    y: Array1<f64>,
    lambda: f64,
}

impl Problem<'_> {
    fn objective(&self, w: &Array1<f64>, b: f64) -> f64 {
        let z = self.x.dot(w) + b;
        let n = self.y.len() as f64;
        let data: f64 = z.iter().zip(&self.y).map(|(&z, &y)| bce_with_logit(z, y)).sum();
        data / n + 0.5 * self.lambda * w.dot(w)
    }

    /// Gradient stacked as `[w; b]` and the matching Hessian.
    fn derivatives(&self, w: &Array1<f64>, b: f64) -> (Array1<f64>, Array2<f64>) {
        let (n, d) = self.x.dim();
        let nf = n as f64;
        let p = (self.x.dot(w) + b).mapv(sigmoid);
        let r = &p - &self.y;
        let s = p.mapv(|p| p * (1.0 - p));

        let mut g = Array1::zeros(d + 1);
        g.slice_mut(s![..d]).assign(&(self.x.t().dot(&r) / nf + w * self.lambda));
        g[d] = r.sum() / nf;

        let xs = &self.x * &s.view().insert_axis(ndarray::Axis(1));
        let mut h = Array2::zeros((d + 1, d + 1));
        h.slice_mut(s![..d, ..d]).assign(&(self.x.t().dot(&xs) / nf));
        for i in 0..d {
            h[[i, i]] += self.lambda;
        }
        let cross = xs.sum_axis(ndarray::Axis(0)) / nf;
        h.slice_mut(s![..d, d]).assign(&cross);
        h.slice_mut(s![d, ..d]).assign(&cross);
        h[[d, d]] = s.sum() / nf;
        (g, h)
    }
}

/// Minimizes mean binary cross-entropy plus `(λ/2)‖w‖²`; the bias is not
/// penalized. Iterates until the gradient norm is at most `1e-6`.
pub fn fit_logistic_l2(x: ArrayView2<f64>, y: &[bool], lambda_l2: f64) -> Result<LogisticModel> {
    if !(lambda_l2 > 0.0) {
        return Err(Error::config("lambda_l2 must be positive"));
    }
    if x.nrows() != y.len() {
        return Err(Error::data("logistic: row and label counts differ"));
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::data("logistic regression requires both classes"));
    }
    let d = x.ncols();
    let prob = Problem {
        x,
        y: y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
        lambda: lambda_l2,
    };
    let base = positives as f64 / y.len() as f64;
    let mut w = Array1::zeros(d);
    let mut b = (base / (1.0 - base)).ln();
    let mut f = prob.objective(&w, b);
    let mut grad_norm = f64::INFINITY;

    for it in 0..MAX_NEWTON_ITERS {
        let (g, mut h) = prob.derivatives(&w, b);
        grad_norm = g.dot(&g).sqrt();
        if grad_norm <= GRAD_TOL {
            return Ok(LogisticModel {
                weights: w,
                bias: b,
                iterations: it,
                grad_norm,
            });
        }
        let mut damping = 0.0;
        let step = loop {
            match solve_spd(&h, &g) {
                Ok(step) => break step,
                Err(_) => {
                    let add = if damping == 0.0 { 1e-10 } else { damping * 9.0 };
                    damping += add;
                    for i in 0..=d {
                        h[[i, i]] += add;
                    }
                    if damping > 1e6 {
                        return Err(Error::numeric("logistic Hessian could not be factorized"));
                    }
                }
            }
        };
        let decrease = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let w_new = &w - &(step.slice(s![..d]).to_owned() * t);
            let b_new = b - t * step[d];
            let f_new = prob.objective(&w_new, b_new);
            if f_new <= f - 1e-4 * t * decrease {
                w = w_new;
                b = b_new;
                f = f_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // At the floating-point floor; accept if the gradient is close enough.
            break;
        }
    }
    let (g, _) = prob.derivatives(&w, b);
    grad_norm = grad_norm.min(g.dot(&g).sqrt());
    if grad_norm <= GRAD_TOL {
        return Ok(LogisticModel {
            weights: w,
            bias: b,
            iterations: MAX_NEWTON_ITERS,
            grad_norm,
        });
    }
    Err(Error::numeric(format!(
        "logistic regression did not converge: final gradient norm {grad_norm:.3e}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separable_1d_sign() {
        let x = array![[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]];
        let y = [false, false, false, true, true, true];
        let m = fit_logistic_l2(x.view(), &y, 1e-3).unwrap();
        assert!(m.weights[0] > 0.0);
        let y_rev: Vec<bool> = y.iter().map(|v| !v).collect();
        let m = fit_logistic_l2(x.view(), &y_rev, 1e-3).unwrap();
        assert!(m.weights[0] < 0.0);
    }

    #[test]
    fn heavy_regularization_limit() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0], [-1.0, 3.0]];
        let y = [true, false, false, false, true];
        let m = fit_logistic_l2(x.view(), &y, 1e8).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-6));
        assert!((m.bias - (0.4f64 / 0.6).ln()).abs() < 1e-6);
    }

    #[test]
    fn single_class_rejected() {
        let x = array![[1.0], [2.0]];
        assert!(fit_logistic_l2(x.view(), &[true, true], 1.0).is_err());
    }
}
