//! Stand-in base tables for workflows whose reference data is not shipped.
//!
//! [`jobs_like`] mimics a job-training field experiment: 17 pre-treatment
//! covariates of mixed kinds, a randomized treatment, a job-search
//! self-efficacy mediator on a 1–5 scale and a depressive-symptoms outcome on
//! a 1–5 scale. [`census_like`] mimics an income-audit table with a binary
//! sensitive attribute, a binary occupation mediator and a binary income
//! outcome.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, ColumnRole, ColumnSpec, Dataset};
use crate::rng::{self, SimRng};
use crate::stats::sigmoid;
use crate::Result;

fn categorical(r: &mut SimRng, probs: &[f64]) -> usize {
    let u = rng::uniform(r);
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

fn clipped_normal(r: &mut SimRng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    (mean + sd * rng::normal(r)).clamp(lo, hi)
}

/// Name of the pre-treatment depression covariate used as the hidden confounder
/// in the proxy-noise protocol.
pub const JOBS_CONFOUNDER: &str = "pre_depress";

const OCCP: [f64; 7] = [0.16, 0.11, 0.14, 0.22, 0.13, 0.15, 0.09];
const MARITAL: [f64; 5] = [0.26, 0.38, 0.12, 0.19, 0.05];
const EDUC: [f64; 5] = [0.09, 0.33, 0.27, 0.19, 0.12];
const INCOME: [f64; 5] = [0.21, 0.24, 0.22, 0.19, 0.14];

pub fn jobs_schema() -> Vec<ColumnSpec> {
    use ColumnKind::*;
    let cov = ColumnSpec::covariate;
    vec![
        ColumnSpec::new("treat", Binary, ColumnRole::Treatment),
        cov("age", Continuous),
        cov("econ_hard", Continuous),
        cov(JOBS_CONFOUNDER, Continuous),
        cov("sex", Binary),
        cov("nonwhite", Binary),
        cov("occp", Categorical(OCCP.len())),
        cov("marital", Categorical(MARITAL.len())),
        cov("educ", Categorical(EDUC.len())),
        cov("income", Categorical(INCOME.len())),
        cov("work_prior", Binary),
        cov("children", Binary),
        cov("health", Continuous),
        cov("prior_training", Binary),
        cov("tenure_years", Continuous),
        cov("urban", Binary),
        cov("self_esteem", Continuous),
        cov("social_support", Continuous),
        ColumnSpec::new("job_seek", Continuous, ColumnRole::Mediator),
        ColumnSpec::new("depress2", Continuous, ColumnRole::Outcome),
    ]
}

/// Draws a job-training-style base table.
pub fn jobs_like(n: usize, seed: u64) -> Result<Dataset> {
    let schema = jobs_schema();
    let width: usize = 13 + OCCP.len() + MARITAL.len() + EDUC.len() + INCOME.len();
    let mut r = rng::seeded(seed);
    let mut x = Array2::zeros((n, width));
    let mut t = Array1::zeros(n);
    let mut m = Array1::zeros(n);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let age = clipped_normal(&mut r, 37.0, 10.0, 18.0, 70.0);
        let econ = clipped_normal(&mut r, 3.0, 1.0, 1.0, 5.0);
        let pre = clipped_normal(&mut r, 1.9 + 0.15 * (econ - 3.0), 0.7, 1.0, 5.0);
        let sex = rng::bernoulli(&mut r, 0.54);
        let nonwhite = rng::bernoulli(&mut r, 0.19);
        let occp = categorical(&mut r, &OCCP);
        let marital = categorical(&mut r, &MARITAL);
        let educ = categorical(&mut r, &EDUC);
        let income = categorical(&mut r, &INCOME);
        let work_prior = rng::bernoulli(&mut r, 0.6);
        let children = rng::bernoulli(&mut r, 0.5);
        let health = clipped_normal(&mut r, 3.5 - 0.3 * (pre - 1.9), 0.8, 1.0, 5.0);
        let prior_training = rng::bernoulli(&mut r, 0.2);
        let tenure = (5.0 + 4.0 * rng::normal(&mut r)).abs();
        let urban = rng::bernoulli(&mut r, 0.7);
        let esteem = clipped_normal(&mut r, 3.3 - 0.2 * (pre - 1.9), 0.6, 1.0, 5.0);
        let support = clipped_normal(&mut r, 3.0, 0.7, 1.0, 5.0);

        let treat = rng::bernoulli(&mut r, 0.68);
        let seek = clipped_normal(
            &mut r,
            3.67 + 0.1 * treat - 0.25 * (pre - 1.9) + 0.15 * (esteem - 3.3) + 0.05 * (educ as f64 - 2.0),
            0.7,
            1.0,
            5.0,
        );
        let depress = clipped_normal(
            &mut r,
            1.1 + 0.45 * pre + 0.08 * (econ - 3.0) - 0.05 * (seek - 3.67) - 0.04 * treat
                - 0.1 * (health - 3.5)
                - 0.08 * (support - 3.0),
            0.5,
            1.0,
            5.0,
        );

        let mut j = 0;
        let mut put = |row: &mut ndarray::ArrayViewMut1<f64>, v: f64| {
            row[j] = v;
            j += 1;
        };
        let mut row = x.row_mut(i);
        put(&mut row, age);
        put(&mut row, econ);
        put(&mut row, pre);
        put(&mut row, sex);
        put(&mut row, nonwhite);
        for (levels, val) in [(OCCP.len(), occp), (MARITAL.len(), marital), (EDUC.len(), educ), (INCOME.len(), income)] {
            for l in 0..levels {
                put(&mut row, if l == val { 1.0 } else { 0.0 });
            }
        }
        for v in [work_prior, children, health, prior_training, tenure, urban, esteem, support] {
            put(&mut row, v);
        }
        t[i] = treat;
        m[i] = seek;
        y[i] = depress;
    }
    Dataset::new(schema, x, t, m, y)
}

/// Causal structure of the census-like table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensusScenario {
    /// Direct and mediated dependence of income on the sensitive attribute.
    #[default]
    Mixed,
    /// Income depends on covariates only.
    Null,
    /// Occupation is independent of the attribute; only the direct path exists.
    DirectOnly,
}

pub fn census_schema() -> Vec<ColumnSpec> {
    use ColumnKind::*;
    vec![
        ColumnSpec::covariate("age", Continuous),
        ColumnSpec::covariate("education_years", Continuous),
        ColumnSpec::covariate("hours_per_week", Continuous),
        ColumnSpec::covariate("marital", Categorical(3)),
        ColumnSpec::covariate("nonwhite", Binary),
        ColumnSpec::new("gender", Binary, ColumnRole::Treatment),
        ColumnSpec::new("white_collar", Binary, ColumnRole::Mediator),
        ColumnSpec::new("income_gt_50k", Binary, ColumnRole::Outcome),
    ]
}

/// Draws a census-style audit table; covariates are independent of the
/// sensitive attribute in every scenario.
pub fn census_like(n: usize, seed: u64, scenario: CensusScenario) -> Result<Dataset> {
    let mut r = rng::seeded(seed);
    let mut x = Array2::zeros((n, 7));
    let mut t = Array1::zeros(n);
    let mut m = Array1::zeros(n);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let age = clipped_normal(&mut r, 38.0, 13.0, 17.0, 90.0);
        let edu = clipped_normal(&mut r, 10.0, 2.5, 1.0, 16.0);
        let hours = clipped_normal(&mut r, 40.0, 12.0, 1.0, 99.0);
        let marital = categorical(&mut r, &[0.47, 0.33, 0.20]);
        let nonwhite = rng::bernoulli(&mut r, 0.15);
        let (a, e, h) = ((age - 38.0) / 13.0, (edu - 10.0) / 2.5, (hours - 40.0) / 12.0);
        let married = if marital == 0 { 1.0 } else { 0.0 };
        let gender = match scenario {
            CensusScenario::Mixed => rng::bernoulli(&mut r, 0.67),
            _ => rng::bernoulli(&mut r, 0.5),
        };
        let occ_logit = match scenario {
            CensusScenario::Mixed => -0.3 + 0.5 * gender + 0.8 * e,
            CensusScenario::Null => -0.2 + 0.6 * gender + 0.8 * e,
            CensusScenario::DirectOnly => -0.2 + 0.8 * e,
        };
        let occ = rng::bernoulli(&mut r, sigmoid(occ_logit));
        let inc_logit = match scenario {
            CensusScenario::Mixed => {
                -1.6 + 0.7 * gender + 0.9 * occ + 0.6 * e + 0.4 * h + 0.3 * a + 0.8 * married
            }
            CensusScenario::Null => -0.8 + 0.8 * e + 0.5 * h + 0.3 * a + 0.6 * married,
            CensusScenario::DirectOnly => -1.4 + 1.6 * gender + 0.8 * occ + 0.6 * e + 0.4 * h + 0.6 * married,
        };
        let inc = rng::bernoulli(&mut r, sigmoid(inc_logit));
        let mut row = x.row_mut(i);
        row[0] = age;
        row[1] = edu;
        row[2] = hours;
        row[3 + marital] = 1.0;
        row[6] = nonwhite;
        t[i] = gender;
        m[i] = occ;
        y[i] = inc;
    }
    Dataset::new(census_schema(), x, t, m, y)
}
