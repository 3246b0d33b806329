//! Probit maximum likelihood by Newton–Raphson.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::linalg::solve_spd;
use crate::stats::{inv_mills, log_norm_cdf};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbitOptions {
    /// Prepend a column of ones to the design.
    pub intercept: bool,
    pub max_iter: usize,
    /// Convergence when the gradient max-norm falls below this.
    pub tol: f64,
}

impl Default for ProbitOptions {
    fn default() -> Self {
        Self {
            intercept: true,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbitFit {
    /// Intercept first when fitted with one.
    pub coefficients: Array1<f64>,
    pub intercept: bool,
    pub converged: bool,
    /// Set when the likelihood has no finite maximizer (one class, or
    /// fitted probabilities saturating at 0 or 1).
    pub separation: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl ProbitFit {
    /// Linear index `x β` for each row of the (intercept-free) design.
    pub fn linear_predictor(&self, x: ArrayView2<f64>) -> Array1<f64> {
        if self.intercept {
            x.dot(&self.coefficients.slice(ndarray::s![1..])) + self.coefficients[0]
        } else {
            x.dot(&self.coefficients)
        }
    }
}

fn log_lik(x: &Array2<f64>, q: &Array1<f64>, beta: &Array1<f64>) -> f64 {
    x.dot(beta).iter().zip(q).map(|(eta, q)| log_norm_cdf(q * eta)).sum()
}

// Linear index beyond which Φ(±η) is numerically 0 or 1.
const SATURATION: f64 = 30.0;

fn separated(q: &Array1<f64>, eta: &Array1<f64>) -> bool {
    q.iter().zip(eta).all(|(q, e)| q * e > 0.0)
}

pub fn fit_probit(x: ArrayView2<f64>, y: ArrayView1<f64>, opts: &ProbitOptions) -> Result<ProbitFit> {
    let n = x.nrows();
    if n != y.len() {
        return Err(Error::Invalid("probit: X and y lengths differ".into()));
    }
    if !y.iter().all(|&v| v == 0.0 || v == 1.0) {
        return Err(Error::Invalid("probit: response must be 0/1".into()));
    }
    let design = if opts.intercept {
        concatenate(Axis(1), &[Array2::ones((n, 1)).view(), x]).unwrap()
    } else {
        x.to_owned()
    };
    let p = design.ncols();
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Ok(ProbitFit {
            coefficients: Array1::zeros(p),
            intercept: opts.intercept,
            converged: false,
            separation: true,
            iterations: 0,
            log_likelihood: 0.0,
        });
    }
    // q = 2y - 1 folds both classes into log Φ(q η).
    let q = y.mapv(|v| 2.0 * v - 1.0);
    let mut beta = Array1::zeros(p);
    let mut ll = log_lik(&design, &q, &beta);
    let mut converged = false;
    
    let mut iterations = 0;
    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let eta = design.dot(&beta);
        let mut grad = Array1::<f64>::zeros(p);
        let mut info = Array2::<f64>::zeros((p, p));
        let mut w = Array1::<f64>::zeros(n);
        for i in 0..n {
            let a = q[i] * eta[i];
            let lambda = inv_mills(a);
            grad.scaled_add(q[i] * lambda, &design.row(i));
            w[i] = lambda * (lambda + a);
        }
        if grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs())) < opts.tol {
            converged = true;
            break;
        }
        let weighted = &design * &w.view().insert_axis(Axis(1));
        info += &design.t().dot(&weighted);
        let step = solve_spd(&info, &grad, "probit information matrix")?;
        // Step halving keeps every iterate an ascent step.
        let mut scale = 1.0;
        loop {
            let cand = &beta + &(&step * scale);
            let cand_ll = log_lik(&design, &q, &cand);
            if cand_ll >= ll - 1e-12 || scale < 1e-10 {
                beta = cand;
                ll = cand_ll;
                break;
            }
            scale *= 0.5;
        }
        let eta = design.dot(&beta);
        if separated(&q, &eta) && eta.iter().any(|e| e.abs() > SATURATION) {
            break;
        }
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("probit iteration"));
    }
    // A finite maximizer cannot classify every unit correctly.
    let separation = separated(&q, &design.dot(&beta));
    Ok(ProbitFit {
        coefficients: beta,
        intercept: opts.intercept,
        converged: converged && !separation,
        separation,
        iterations,
        log_likelihood: ll,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn intercept_only_half_ones() {
        let x = Array2::<f64>::zeros((10, 0));
        let y = Array1::from_iter((0..10).map(|i| (i % 2) as f64));
        let fit = fit_probit(x.view(), y.view(), &ProbitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[0].abs() < 1e-8);
    }

    #[test]
    fn intercept_only_matches_quantile() {
        // Φ⁻¹(0.3) for 3 ones in 10.
        let x = Array2::<f64>::zeros((10, 0));
        let y = Array1::from_iter((0..10).map(|i| if i < 3 { 1.0 } else { 0.0 }));
        let fit = fit_probit(x.view(), y.view(), &ProbitOptions::default()).unwrap();
        assert!((fit.coefficients[0] + 0.524_400_512_708_041).abs() < 1e-7);
    }

    #[test]
    fn all_ones_flags_separation() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64);
        let y = Array1::ones(20);
        let fit = fit_probit(x.view(), y.view(), &ProbitOptions::default()).unwrap();
        assert!(!fit.converged && fit.separation);
    }

    #[test]
    fn perfectly_separated_slope_flags_separation() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64 - 19.5);
        let y = Array1::from_iter((0..40).map(|i| if i >= 20 { 1.0 } else { 0.0 }));
        let fit = fit_probit(x.view(), y.view(), &ProbitOptions::default()).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn collinear_design_is_singular() {
        let mut r = rng::seeded(2);
        let x = Array2::from_shape_fn((50, 2), |(i, _)| (i % 7) as f64);
        let y = Array1::from_iter((0..50).map(|_| rng::bernoulli(&mut r, 0.5)));
        assert!(matches!(
            fit_probit(x.view(), y.view(), &ProbitOptions::default()),
            Err(Error::Singular(_))
        ));
    }
}
