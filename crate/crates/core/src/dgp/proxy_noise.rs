//! Replaces a confounder column by noisy binary proxies and re-simulates
//! treatment through it.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, ColumnRole, ColumnSpec, Dataset};
use crate::rng;
use crate::stats::sigmoid;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProxyNoiseConfig {
    /// Independent flip probability of each proxy bit.
    pub p_c: f64,
    pub bins: usize,
    pub replications: usize,
    /// `w_x ~ N(mean, variance)`, drawn per covariate dimension.
    pub w_x: (f64, f64),
    /// `w_z ~ N(mean, variance)`.
    pub w_z: (f64, f64),
    pub seed: u64,
}

impl Default for ProxyNoiseConfig {
    fn default() -> Self {
        Self {
            p_c: 0.1,
            bins: 3,
            replications: 3,
            w_x: (0.0, 0.1),
            w_z: (5.0, 0.1),
            seed: 0,
        }
    }
}

impl ProxyNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.p_c) {
            return Err(Error::Config(format!("p_c {} not in [0, 0.5]", self.p_c)));
        }
        if self.bins < 2 || self.replications == 0 {
            return Err(Error::Config("need at least 2 bins and 1 replication".into()));
        }
        if self.w_x.1 < 0.0 || self.w_z.1 < 0.0 {
            return Err(Error::Config("weight variances must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ProxyNoisy {
    pub data: Dataset,
    /// Equal-count bin of the confounder for each unit.
    pub true_bins: Vec<usize>,
    pub w_x: Vec<f64>,
    pub w_z: f64,
}

/// Equal-count bins by rank; ties are ordered by value, then row index.
fn equal_count_bins(z: &[f64], bins: usize) -> Result<Vec<usize>> {
    let mut distinct = z.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if bins > distinct.len() {
        return Err(Error::Invalid(format!(
            "cannot form {bins} bins from {} distinct confounder values",
            distinct.len()
        )));
    }
    let n = z.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * bins / n;
    }
    Ok(out)
}

pub fn inject_proxy_noise(base: &Dataset, confounder: &str, cfg: &ProxyNoiseConfig) -> Result<ProxyNoisy> {
    cfg.validate()?;
    let block = base
        .block(confounder)
        .ok_or_else(|| Error::MissingColumn(confounder.to_string()))?
        .clone();
    if block.kind != ColumnKind::Continuous {
        return Err(Error::Invalid(format!("confounder `{confounder}` must be continuous")));
    }
    let n = base.n();
    let z: Vec<f64> = base.x().column(block.offset).to_vec();
    let rest: Vec<usize> = (0..base.x_dim()).filter(|&j| j != block.offset).collect();
    let mut x_rest = base.x().select(Axis(1), &rest);
    // the treatment index sees continuous covariates on a unit scale
    for (k, &j) in rest.iter().enumerate() {
        let continuous = base
            .blocks()
            .iter()
            .any(|b| b.kind == ColumnKind::Continuous && b.offset == j);
        if continuous {
            let mut col = x_rest.column_mut(k);
            let mean = col.mean().unwrap_or(0.0);
            let sd = col.mapv(|v| (v - mean) * (v - mean)).mean().unwrap_or(0.0).sqrt();
            col.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { v - mean });
        }
    }

    let mut r = rng::seeded(cfg.seed);
    let w_x: Vec<f64> = (0..rest.len())
        .map(|_| cfg.w_x.0 + cfg.w_x.1.sqrt() * rng::normal(&mut r))
        .collect();
    let w_z = cfg.w_z.0 + cfg.w_z.1.sqrt() * rng::normal(&mut r);
    let lin = x_rest.dot(&Array1::from(w_x.clone()));
    let t = Array1::from_iter(
        (0..n).map(|i| rng::bernoulli(&mut r, sigmoid(lin[i] + w_z * (z[i] / 3.0 - 0.3)))),
    );

    let true_bins = equal_count_bins(&z, cfg.bins)?;
    let width = cfg.bins * cfg.replications;
    let mut proxies = Array2::zeros((n, width));
    for i in 0..n {
        for rep in 0..cfg.replications {
            for b in 0..cfg.bins {
                let clean = if true_bins[i] == b { 1.0 } else { 0.0 };
                let flip = rng::uniform(&mut r) < cfg.p_c;
                proxies[[i, rep * cfg.bins + b]] = if flip { 1.0 - clean } else { clean };
            }
        }
    }

    // Rebuild X with the proxy block spliced in where the confounder sat.
    let mut schema = Vec::new();
    let mut cols: Vec<Array2<f64>> = Vec::new();
    for c in base.schema() {
        if c.role == ColumnRole::Covariate && c.name == confounder {
            for rep in 0..cfg.replications {
                for b in 0..cfg.bins {
                    schema.push(ColumnSpec::covariate(
                        format!("{confounder}_r{rep}_b{b}"),
                        ColumnKind::Binary,
                    ));
                }
            }
            cols.push(proxies.clone());
        } else {
            schema.push(c.clone());
            if c.role == ColumnRole::Covariate {
                let b = base.block(&c.name).unwrap();
                cols.push(base.x().slice(ndarray::s![.., b.offset..b.offset + b.width]).to_owned());
            }
        }
    }
    let views: Vec<_> = cols.iter().map(|c| c.view()).collect();
    let x = ndarray::concatenate(Axis(1), &views).unwrap();
    let data = Dataset::new(schema, x, t, base.m().to_owned(), base.y().to_owned())?;
    Ok(ProxyNoisy {
        data,
        true_bins,
        w_x,
        w_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_are_equal_count() {
        let z: Vec<f64> = (0..9).rev().map(|v| v as f64).collect();
        let b = equal_count_bins(&z, 3).unwrap();
        assert_eq!(b, vec![2, 2, 2, 1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn too_many_bins() {
        assert!(equal_count_bins(&[1.0, 1.0, 2.0], 3).is_err());
    }
}
