//! The training objective and its analytic gradient.
//!
//! With `ε` fixed the objective is a deterministic function of the parameters,
//! so the gradient below is checked against finite differences at fixed noise.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use super::model::{col, hcat, Arm, CmavaeModel};
use crate::dataset::{Dataset, VarKind};
use crate::nn::Trace;
use crate::rng;
use crate::stats::{bernoulli_logit_ln, normal_ln, sigmoid};
use crate::{Error, Result};

/// Rows of `(x, t, m, y)` fed to one objective evaluation.
#[derive(Clone, Debug)]
pub struct Batch {
    pub x: Array2<f64>,
    pub t: Array1<f64>,
    pub m: Array1<f64>,
    pub y: Array1<f64>,
}

impl Batch {
    pub fn new(x: Array2<f64>, t: Array1<f64>, m: Array1<f64>, y: Array1<f64>) -> Self {
        assert!(x.nrows() == t.len() && t.len() == m.len() && m.len() == y.len());
        Self { x, t, m, y }
    }

    pub fn from_dataset(data: &Dataset) -> Self {
        Self::new(data.x().to_owned(), data.t().to_owned(), data.m().to_owned(), data.y().to_owned())
    }

    pub fn rows(data: &Dataset, idx: &[usize]) -> Self {
        Self::new(
            data.x().select(Axis(0), idx),
            data.t().select(Axis(0), idx),
            data.m().select(Axis(0), idx),
            data.y().select(Axis(0), idx),
        )
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Each term summed over the batch. Log-likelihood terms are positive-sense
/// (higher is better); `kl` is the divergence that the ELBO subtracts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveTerms {
    pub proxy: f64,
    pub treatment: f64,
    pub mediator: f64,
    pub outcome: f64,
    pub kl: f64,
    pub aux_treatment: f64,
    pub aux_mediator: f64,
    pub aux_outcome: f64,
}

impl ObjectiveTerms {
    pub fn elbo(&self) -> f64 {
        self.proxy + self.treatment + self.mediator + self.outcome - self.kl
    }

    pub fn auxiliary(&self) -> f64 {
        self.aux_treatment + self.aux_mediator + self.aux_outcome
    }

    /// The maximized objective: ELBO plus auxiliary log-likelihoods.
    pub fn total(&self) -> f64 {
        self.elbo() + self.auxiliary()
    }

    fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("log p(x|z)", self.proxy),
            ("log p(t|z)", self.treatment),
            ("log p(m|z,t)", self.mediator),
            ("log p(y|m,z,t)", self.outcome),
            ("KL(q(z)||p(z))", self.kl),
            ("log q(t|x)", self.aux_treatment),
            ("log q(m|x,t)", self.aux_mediator),
            ("log q(y|x,m,t)", self.aux_outcome),
        ]
    }

    fn check(self) -> Result<Self> {
        match self.named().into_iter().find(|(_, v)| !v.is_finite()) {
            Some((term, _)) => Err(Error::NonFinite {
                term: term.to_string(),
                step: 0,
            }),
            None => Ok(self),
        }
    }

    fn scaled(self, k: f64) -> Self {
        Self {
            proxy: self.proxy * k,
            treatment: self.treatment * k,
            mediator: self.mediator * k,
            outcome: self.outcome * k,
            kl: self.kl * k,
            aux_treatment: self.aux_treatment * k,
            aux_mediator: self.aux_mediator * k,
            aux_outcome: self.aux_outcome * k,
        }
    }

    fn add(&mut self, o: &Self) {
        self.proxy += o.proxy;
        self.treatment += o.treatment;
        self.mediator += o.mediator;
        self.outcome += o.outcome;
        self.kl += o.kl;
        self.aux_treatment += o.aux_treatment;
        self.aux_mediator += o.aux_mediator;
        self.aux_outcome += o.aux_outcome;
    }
}

/// `KL(N(μ, diag e^lv) ‖ N(0, I))`.
pub fn gaussian_kl(mu: ArrayView1<f64>, log_var: ArrayView1<f64>) -> f64 {
    Zip::from(mu)
        .and(log_var)
        .fold(0.0, |acc, &m, &lv| acc + 0.5 * (m * m + lv.exp() - 1.0 - lv))
}

/// Log-likelihood of one column head and `∂(−ll)/∂head`.
fn head_terms(kind: VarKind, var: f64, head: ArrayView1<f64>, obs: ArrayView1<f64>) -> (f64, Array2<f64>) {
    let mut g = Array2::zeros((head.len(), 1));
    let mut ll = 0.0;
    for (i, (&h, &o)) in head.iter().zip(obs).enumerate() {
        match kind {
            VarKind::Continuous => {
                ll += normal_ln(o, h, var);
                g[[i, 0]] = (h - o) / var;
            }
            VarKind::Binary => {
                ll += bernoulli_logit_ln(o, h);
                g[[i, 0]] = sigmoid(h) - o;
            }
        }
    }
    (ll, g)
}

struct Head {
    trace: Trace,
    grad: Array2<f64>,
}

fn draw_noise<R: Rng + ?Sized>(r: &mut R, n: usize, dz: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, dz), || rng::normal(r))
}

/// Evaluates every term at fixed noise `eps` (one row per batch unit) and,
/// if `grad` is given, accumulates `∂(−ℱ)/∂θ` into it.
fn run(model: &CmavaeModel, batch: &Batch, eps: ArrayView2<f64>, grad: Option<&mut [f64]>) -> ObjectiveTerms {
    let cfg = model.config();
    let a = &cfg.arch;
    let nets = &model.nets;
    let p = model.params();
    let dz = a.z_dim;
    let n = batch.len();
    assert_eq!(eps.dim(), (n, dz), "noise must be batch × z_dim");

    // Control rows first, then treated, so each paired head sees one slice.
    let mut order: Vec<usize> = (0..n).filter(|&i| batch.t[i] != 1.0).collect();
    let n0 = order.len();
    order.extend((0..n).filter(|&i| batch.t[i] == 1.0));
    let ranges = [0..n0, n0..n];
    let x = batch.x.select(Axis(0), &order);
    let t = batch.t.select(Axis(0), &order);
    let m = batch.m.select(Axis(0), &order);
    let y = batch.y.select(Axis(0), &order);
    let eps = eps.select(Axis(0), &order);
    let arms = || Arm::BOTH.into_iter().filter(|a| !ranges[a.index()].is_empty());

    let mut terms = ObjectiveTerms::default();

    let enc_in = hcat(&[x.view(), col(&y), col(&m)]);
    let mut mu = Array2::zeros((n, dz));
    let mut lv = Array2::zeros((n, dz));
    let mut enc: [Option<Trace>; 2] = [None, None];
    for arm in arms() {
        let r = ranges[arm.index()].clone();
        let tr = nets.posterior[arm.index()].forward_trace(p, enc_in.slice(s![r.clone(), ..]).to_owned());
        mu.slice_mut(s![r.clone(), ..]).assign(&tr.output().slice(s![.., ..dz]));
        lv.slice_mut(s![r, ..]).assign(&tr.output().slice(s![.., dz..]));
        enc[arm.index()] = Some(tr);
    }
    let sd = lv.mapv(|v| (0.5 * v).exp());
    let z = &mu + &(&sd * &eps);
    terms.kl = Zip::from(&mu)
        .and(&lv)
        .fold(0.0, |acc, &m, &l| acc + 0.5 * (m * m + l.exp() - 1.0 - l));

    // p(x | z)
    let proxy_tr = nets.proxy.forward_trace(p, z.clone());
    let mut proxy_g = Array2::zeros((n, cfg.x_dim()));
    for (j, &kind) in cfg.x_kinds.iter().enumerate() {
        let (ll, g) = head_terms(kind, 1.0, proxy_tr.output().column(j), x.column(j));
        terms.proxy += ll;
        proxy_g.column_mut(j).assign(&g.column(0));
    }
    let proxy = Head {
        trace: proxy_tr,
        grad: proxy_g,
    };

    // p(t | z)
    let tr = nets.treatment.forward_trace(p, z.clone());
    let (ll, g) = head_terms(VarKind::Binary, 1.0, tr.output().column(0), t.view());
    terms.treatment = ll;
    let treat = Head { trace: tr, grad: g };

    // p(m | z, t) and p(y | m, z, t)
    let mut med: [Option<Head>; 2] = [None, None];
    let mut out: [Option<Head>; 2] = [None, None];
    for arm in arms() {
        let r = ranges[arm.index()].clone();
        let zr = z.slice(s![r.clone(), ..]);
        let tr = nets.mediator[arm.index()].forward_trace(p, zr.to_owned());
        let (ll, g) = head_terms(cfg.mediator_kind, a.decoder_mediator_var, tr.output().column(0), m.slice(s![r.clone()]));
        terms.mediator += ll;
        med[arm.index()] = Some(Head { trace: tr, grad: g });

        let input = hcat(&[zr, col(&m).slice(s![r.clone(), ..])]);
        let tr = nets.outcome[arm.index()].forward_trace(p, input);
        let (ll, g) = head_terms(cfg.outcome_kind, a.decoder_outcome_var, tr.output().column(0), y.slice(s![r]));
        terms.outcome += ll;
        out[arm.index()] = Some(Head { trace: tr, grad: g });
    }

    // Auxiliary predictors at the observed values.
    let tr = nets.aux_treatment.forward_trace(p, x.clone());
    let (ll, g) = head_terms(VarKind::Binary, 1.0, tr.output().column(0), t.view());
    terms.aux_treatment = ll;
    let aux_treat = Head { trace: tr, grad: g };
    let mut aux_med: [Option<Head>; 2] = [None, None];
    let mut aux_out: [Option<Head>; 2] = [None, None];
    for arm in arms() {
        let r = ranges[arm.index()].clone();
        let xr = x.slice(s![r.clone(), ..]);
        let tr = nets.aux_mediator[arm.index()].forward_trace(p, xr.to_owned());
        let (ll, g) = head_terms(cfg.mediator_kind, a.aux_mediator_var, tr.output().column(0), m.slice(s![r.clone()]));
        terms.aux_mediator += ll;
        aux_med[arm.index()] = Some(Head { trace: tr, grad: g });

        let input = hcat(&[xr, col(&m).slice(s![r.clone(), ..])]);
        let tr = nets.aux_outcome[arm.index()].forward_trace(p, input);
        let (ll, g) = head_terms(cfg.outcome_kind, a.aux_outcome_var, tr.output().column(0), y.slice(s![r]));
        terms.aux_outcome += ll;
        aux_out[arm.index()] = Some(Head { trace: tr, grad: g });
    }

    let Some(g) = grad else {
        return terms;
    };

    let mut dz_acc = nets.proxy.backward(p, &proxy.trace, proxy.grad, g, true).unwrap();
    dz_acc += &nets.treatment.backward(p, &treat.trace, treat.grad, g, true).unwrap();
    for arm in arms() {
        let k = arm.index();
        let r = ranges[k].clone();
        let h = med[k].take().unwrap();
        let d = nets.mediator[k].backward(p, &h.trace, h.grad, g, true).unwrap();
        let mut slot = dz_acc.slice_mut(s![r.clone(), ..]);
        slot += &d;
        let h = out[k].take().unwrap();
        let d = nets.outcome[k].backward(p, &h.trace, h.grad, g, true).unwrap();
        slot += &d.slice(s![.., ..dz]);
    }

    // Through the reparameterization and the closed-form KL.
    let dmu = &dz_acc + &mu;
    let mut dlv = &dz_acc * &(&sd * &eps) * 0.5;
    Zip::from(&mut dlv).and(&lv).for_each(|d, &l| *d += 0.5 * (l.exp() - 1.0));
    for arm in arms() {
        let k = arm.index();
        let r = ranges[k].clone();
        let go = hcat(&[dmu.slice(s![r.clone(), ..]), dlv.slice(s![r, ..])]);
        nets.posterior[k].backward(p, enc[k].as_ref().unwrap(), go, g, false);
    }

    nets.aux_treatment.backward(p, &aux_treat.trace, aux_treat.grad, g, false);
    for arm in arms() {
        let k = arm.index();
        let h = aux_med[k].take().unwrap();
        nets.aux_mediator[k].backward(p, &h.trace, h.grad, g, false);
        let h = aux_out[k].take().unwrap();
        nets.aux_outcome[k].backward(p, &h.trace, h.grad, g, false);
    }
    terms
}

/// All terms at fixed reparameterization noise.
pub fn objective_terms(model: &CmavaeModel, batch: &Batch, eps: ArrayView2<f64>) -> Result<ObjectiveTerms> {
    run(model, batch, eps, None).check()
}

/// `−ℱ` at fixed noise and its gradient with respect to every parameter.
pub fn neg_objective_grad(model: &CmavaeModel, batch: &Batch, eps: ArrayView2<f64>) -> Result<(f64, Vec<f64>)> {
    let mut g = vec![0.0; model.n_params()];
    let terms = run(model, batch, eps, Some(&mut g)).check()?;
    Ok((-terms.total(), g))
}

fn mc_terms<R: Rng + ?Sized>(model: &CmavaeModel, batch: &Batch, mc_samples: usize, r: &mut R) -> Result<ObjectiveTerms> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if mc_samples == 0 {
        return Err(Error::Invalid("need at least one Monte-Carlo sample".into()));
    }
    let mut acc = ObjectiveTerms::default();
    for _ in 0..mc_samples {
        let eps = draw_noise(r, batch.len(), model.config().arch.z_dim);
        acc.add(&objective_terms(model, batch, eps.view())?);
    }
    Ok(acc.scaled(1.0 / mc_samples as f64))
}

/// Monte-Carlo ELBO summed over the batch.
pub fn elbo<R: Rng + ?Sized>(model: &CmavaeModel, batch: &Batch, mc_samples: usize, r: &mut R) -> Result<f64> {
    Ok(mc_terms(model, batch, mc_samples, r)?.elbo())
}

/// Monte-Carlo estimate of `ℱ` (ELBO plus auxiliary terms), summed over the batch.
pub fn total_objective<R: Rng + ?Sized>(
    model: &CmavaeModel,
    batch: &Batch,
    mc_samples: usize,
    r: &mut R,
) -> Result<f64> {
    Ok(mc_terms(model, batch, mc_samples, r)?.total())
}

pub(crate) fn noise<R: Rng + ?Sized>(r: &mut R, n: usize, dz: usize) -> Array2<f64> {
    draw_noise(r, n, dz)
}
