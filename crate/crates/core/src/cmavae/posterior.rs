//! Posterior draws of `z` from proxies alone, chaining the auxiliary
//! predictors into the treatment-specific encoder.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::model::{col, hcat, row, Arm, CmavaeModel, Dist1, Net};
use crate::rng;
use crate::stats::{clamp_prob, sigmoid};

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDraw {
    pub z: Array1<f64>,
    pub t: f64,
    pub m: f64,
    pub y: f64,
}

/// Draws for many units at once. Row `i * draws + l` holds draw `l` of unit `i`.
#[derive(Clone, Debug)]
pub struct PosteriorBatch {
    pub draws: usize,
    pub z: Array2<f64>,
    pub t: Array1<f64>,
    pub m: Array1<f64>,
    pub y: Array1<f64>,
}

/// `L` draws of `(t, m, y, z)` for a single unit.
pub fn sample_posterior_z<R: Rng + ?Sized>(
    model: &CmavaeModel,
    x: ArrayView1<f64>,
    draws: usize,
    r: &mut R,
) -> Vec<PosteriorDraw> {
    let b = sample_posterior_batch(model, row(x).view(), draws, r);
    (0..draws)
        .map(|l| PosteriorDraw {
            z: b.z.row(l).to_owned(),
            t: b.t[l],
            m: b.m[l],
            y: b.y[l],
        })
        .collect()
}

/// Samples `t ~ q(t|x)`, `m ~ q(m|x,t)`, `y ~ q(y|x,m,t)` and then
/// `z ~ q(z|x,m,y,t)`, each stage drawn for all rows before the next.
pub fn sample_posterior_batch<R: Rng + ?Sized>(
    model: &CmavaeModel,
    x: ArrayView2<f64>,
    draws: usize,
    r: &mut R,
) -> PosteriorBatch {
    assert!(draws >= 1, "need at least one posterior draw");
    let cfg = model.config();
    let a = &cfg.arch;
    let n = x.nrows();
    let rows = n * draws;
    let unit: Vec<usize> = (0..rows).map(|k| k / draws).collect();
    let x_rep = x.select(Axis(0), &unit);

    let pt = model.forward(Net::AuxTreatment, x);
    let t = Array1::from_iter(unit.iter().map(|&i| rng::bernoulli(r, clamp_prob(sigmoid(pt[[i, 0]])))));

    let med: Vec<Array2<f64>> = Arm::BOTH.iter().map(|&arm| model.forward(Net::AuxMediator(arm), x)).collect();
    let m = Array1::from_iter(unit.iter().zip(&t).map(|(&i, &tv)| {
        let head = med[Arm::of(tv).index()][[i, 0]];
        Dist1::from_head(cfg.mediator_kind, head, a.aux_mediator_var).sample(r)
    }));

    let xm = hcat(&[x_rep.view(), col(&m)]);
    let heads = model.forward_paired(Net::AuxOutcome, xm.view(), t.view());
    let y = Array1::from_iter(
        heads
            .column(0)
            .iter()
            .map(|&h| Dist1::from_head(cfg.outcome_kind, h, a.aux_outcome_var).sample(r)),
    );

    let enc_in = hcat(&[x_rep.view(), col(&y), col(&m)]);
    let out = model.forward_paired(Net::Posterior, enc_in.view(), t.view());
    let dz = a.z_dim;
    let mut z = out.slice(s![.., ..dz]).to_owned();
    for (mut zr, lv) in z.rows_mut().into_iter().zip(out.slice(s![.., dz..]).rows()) {
        for (zj, &l) in zr.iter_mut().zip(lv) {
            *zj += (0.5 * l).exp() * rng::normal(r);
        }
    }
    PosteriorBatch { draws, z, t, m, y }
}
