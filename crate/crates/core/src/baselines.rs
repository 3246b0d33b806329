//! Linear structural-equation estimators, a penalized logistic classifier and
//! the demographic-disparity metric.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, VarKind};
use crate::linalg::{least_squares, solve_spd};
use crate::stats::{clamp_prob, sigmoid};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Array1<f64>,
    /// `RSS / (n − p)`.
    pub residual_variance: f64,
    pub std_errors: Array1<f64>,
}

/// Least squares of `y` on the columns of `x` (include an intercept column
/// yourself).
pub fn fit_ols(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<OlsFit> {
    let (coef, diag) = least_squares(x, y)?;
    let resid = &y - &x.dot(&coef);
    let dof = (x.nrows() - x.ncols()) as f64;
    let s2 = resid.dot(&resid) / dof;
    Ok(OlsFit {
        std_errors: diag.mapv(|d| (d * s2).sqrt()),
        coefficients: coef,
        residual_variance: s2,
    })
}

pub fn with_intercept(cols: &[ArrayView2<f64>]) -> Array2<f64> {
    let n = cols[0].nrows();
    let ones = Array2::ones((n, 1));
    let mut all = vec![ones.view()];
    all.extend_from_slice(cols);
    concatenate(Axis(1), &all).expect("row counts agree")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsemResult {
    /// `m ~ 1 + t + x`: `(γ₀, γ₁, γ…)`.
    pub mediator: OlsFit,
    /// `y ~ 1 + t + m [+ t·m] + x`: `(θ₀, θ₁, θ₂, [θ₃,] θ…)`.
    pub outcome: OlsFit,
    pub interaction: bool,
    pub acme_treated: f64,
    pub acde_control: f64,
    pub ate: f64,
    /// Delta-method standard error of the product `γ₁θ₂` (no-interaction model only).
    pub acme_se: Option<f64>,
}

fn lsem(data: &Dataset, interaction: bool) -> Result<LsemResult> {
    if data.mediator_kind() != VarKind::Continuous || data.outcome_kind() != VarKind::Continuous {
        return Err(Error::Schema("linear mediation models need a continuous mediator and outcome".into()));
    }
    let xd = data.covariate_design();
    let t = data.t().insert_axis(Axis(1));
    let m = data.m().insert_axis(Axis(1));
    let med = fit_ols(with_intercept(&[t, xd.view()]).view(), data.m())?;
    let tm = (&data.t() * &data.m()).insert_axis(Axis(1));
    let design = if interaction {
        with_intercept(&[t, m, tm.view(), xd.view()])
    } else {
        with_intercept(&[t, m, xd.view()])
    };
    let out = fit_ols(design.view(), data.y())?;
    let (g1, th1, th2) = (med.coefficients[1], out.coefficients[1], out.coefficients[2]);
    let (acme, acde, se) = if interaction {
        let th3 = out.coefficients[3];
        // mean fitted mediator under control: γ₀ + γᵀx averaged over units
        let gx = med.coefficients.slice(ndarray::s![2..]);
        let m0 = med.coefficients[0] + xd.dot(&gx).mean().unwrap_or(0.0);
        (g1 * (th2 + th3), th1 + th3 * m0, None)
    } else {
        let se = (th2 * th2 * med.std_errors[1].powi(2) + g1 * g1 * out.std_errors[2].powi(2)).sqrt();
        (g1 * th2, th1, Some(se))
    };
    Ok(LsemResult {
        mediator: med,
        outcome: out,
        interaction,
        acme_treated: acme,
        acde_control: acde,
        ate: acme + acde,
        acme_se: se,
    })
}

/// Product-of-coefficients mediation: `δ̄(1) = γ₁θ₂`, `ζ̄(0) = θ₁`.
pub fn lsem_effects(data: &Dataset) -> Result<LsemResult> {
    lsem(data, false)
}

/// Adds a treatment–mediator interaction: `δ̄(1) = γ₁(θ₂ + θ₃)`,
/// `ζ̄(0) = θ₁ + θ₃·mean(γ₀ + γᵀx)`.
pub fn lsem_i_effects(data: &Dataset) -> Result<LsemResult> {
    lsem(data, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticOptions {
    /// Penalty `l2·‖β‖²`, not applied to the intercept.
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub intercept: bool,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            max_iter: 100,
            tol: 1e-8,
            intercept: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Intercept first when fitted with one.
    pub coefficients: Array1<f64>,
    pub intercept: bool,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticFit {
    fn design(&self, x: ArrayView2<f64>) -> Array2<f64> {
        if self.intercept {
            with_intercept(&[x])
        } else {
            x.to_owned()
        }
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.design(x).dot(&self.coefficients).mapv(|a| clamp_prob(sigmoid(a)))
    }

    /// Hard labels at probability 0.5.
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.predict_proba(x).mapv(|p| if p >= 0.5 { 1.0 } else { 0.0 })
    }

    /// Coefficient of feature column `j` of `x` (intercept excluded).
    pub fn feature_coef(&self, j: usize) -> f64 {
        self.coefficients[j + usize::from(self.intercept)]
    }
}

/// Penalized maximum likelihood by Newton's method.
pub fn fit_logistic(x: ArrayView2<f64>, y: ArrayView1<f64>, opts: &LogisticOptions) -> Result<LogisticFit> {
    let n = y.len();
    if n == 0 || x.nrows() != n {
        return Err(Error::Invalid("logistic regression needs matching nonempty X and y".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Invalid("logistic labels must be 0 or 1".into()));
    }
    let pos = y.sum();
    if pos == 0.0 || pos == n as f64 {
        return Err(Error::Invalid("logistic regression needs both classes present".into()));
    }
    let xd = if opts.intercept { with_intercept(&[x]) } else { x.to_owned() };
    let p = xd.ncols();
    let pen = Array1::from_shape_fn(p, |j| if opts.intercept && j == 0 { 0.0 } else { opts.l2 });
    let objective = |b: &Array1<f64>| {
        let eta = xd.dot(b);
        let ll: f64 = eta
            .iter()
            .zip(y)
            .map(|(&e, &v)| crate::stats::bernoulli_logit_ln(v, e))
            .sum();
        ll - (&pen * &(b * b)).sum()
    };
    let mut beta = Array1::zeros(p);
    let mut current = objective(&beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let prob = xd.dot(&beta).mapv(sigmoid);
        let grad = xd.t().dot(&(&y - &prob)) - &(&pen * &beta) * 2.0;
        let w = prob.mapv(|q| q * (1.0 - q));
        let xw = &xd * &w.view().insert_axis(Axis(1));
        let mut h = xd.t().dot(&xw);
        for j in 0..p {
            h[[j, j]] += 2.0 * pen[j] + 1e-12;
        }
        let step = solve_spd(&h, &grad, "logistic Hessian")?;
        let mut scale = 1.0;
        let mut next = &beta + &step;
        let mut value = objective(&next);
        while value < current - 1e-12 && scale > 1e-8 {
            scale *= 0.5;
            next = &beta + &(&step * scale);
            value = objective(&next);
        }
        let moved = (&next - &beta).iter().fold(0.0f64, |a, d| a.max(d.abs()));
        beta = next;
        current = value;
        if moved < opts.tol {
            converged = true;
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        converged = false;
    }
    Ok(LogisticFit {
        coefficients: beta,
        intercept: opts.intercept,
        converged,
        iterations,
    })
}

/// `|P(ŷ = 1 | t = 1) − P(ŷ = 1 | t = 0)|`.
pub fn demographic_disparity(y_hat: ArrayView1<f64>, t: ArrayView1<f64>) -> Result<f64> {
    if y_hat.len() != t.len() {
        return Err(Error::Invalid("predictions and groups differ in length".into()));
    }
    let mut counts = [(0.0, 0.0); 2];
    for (&y, &g) in y_hat.iter().zip(t) {
        let slot = &mut counts[usize::from(g == 1.0)];
        slot.0 += y;
        slot.1 += 1.0;
    }
    if counts.iter().any(|c| c.1 == 0.0) {
        return Err(Error::Invalid("demographic disparity needs both groups nonempty".into()));
    }
    Ok((counts[1].0 / counts[1].1 - counts[0].0 / counts[0].1).abs())
}
