//! Network layout and single-unit inference for the mediation VAE.
//!
//! Paired heads are indexed by [`Arm`]; a unit with `t = 1` is routed through
//! the `Treated` head of every pair, encoder included.
//!
//! | network                    | maps            | role                |
//! |----------------------------|-----------------|---------------------|
//! | `Proxy`                    | z → x           | p(x \| z)           |
//! | `Treatment`                | z → logit       | f₁, p(t \| z)       |
//! | `Mediator(Treated/Control)`| z → m           | f₂ / f₃             |
//! | `Outcome(Treated/Control)` | z∘m → y         | f₄ / f₅             |
//! | `Posterior(Control/Treated)`| x∘y∘m → (μ, log σ²) | g₁ / g₂        |
//! | `AuxTreatment`             | x → logit       | g₃, q(t \| x)       |
//! | `AuxMediator(Treated/Control)` | x → m       | g₄ / g₅             |
//! | `AuxOutcome(Treated/Control)`  | x∘m → y     | g₆ / g₇             |

use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::dataset::VarKind;
use crate::nn::{LayoutBuilder, Mlp};
use crate::rng;
use crate::stats::{clamp_prob, sigmoid};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Control = 0,
    Treated = 1,
}

impl Arm {
    pub fn of(t: f64) -> Arm {
        if t == 1.0 {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Net {
    Proxy,
    Treatment,
    Mediator(Arm),
    Outcome(Arm),
    Posterior(Arm),
    AuxTreatment,
    AuxMediator(Arm),
    AuxOutcome(Arm),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Networks {
    pub proxy: Mlp,
    pub treatment: Mlp,
    pub mediator: [Mlp; 2],
    pub outcome: [Mlp; 2],
    pub posterior: [Mlp; 2],
    pub aux_treatment: Mlp,
    pub aux_mediator: [Mlp; 2],
    pub aux_outcome: [Mlp; 2],
    pub n_params: usize,
}

impl Networks {
    fn build(cfg: &ModelConfig) -> Self {
        let a = &cfg.arch;
        let (dx, dz) = (cfg.x_dim(), a.z_dim);
        let dims = |input: usize, hidden: usize, out: usize| {
            let mut d = vec![input];
            d.extend(std::iter::repeat_n(a.layer_size, hidden));
            d.push(out);
            d
        };
        let h = a.hidden_layers;
        let ht = a.treatment_hidden_layers;
        let mut lb = LayoutBuilder::default();
        let proxy = lb.mlp(dims(dz, h, dx));
        let treatment = lb.mlp(dims(dz, ht, 1));
        let mediator = [lb.mlp(dims(dz, h, 1)), lb.mlp(dims(dz, h, 1))];
        let outcome = [lb.mlp(dims(dz + 1, h, 1)), lb.mlp(dims(dz + 1, h, 1))];
        let posterior = [lb.mlp(dims(dx + 2, h, 2 * dz)), lb.mlp(dims(dx + 2, h, 2 * dz))];
        let aux_treatment = lb.mlp(dims(dx, ht, 1));
        let aux_mediator = [lb.mlp(dims(dx, h, 1)), lb.mlp(dims(dx, h, 1))];
        let aux_outcome = [lb.mlp(dims(dx + 1, h, 1)), lb.mlp(dims(dx + 1, h, 1))];
        Self {
            proxy,
            treatment,
            mediator,
            outcome,
            posterior,
            aux_treatment,
            aux_mediator,
            aux_outcome,
            n_params: lb.len(),
        }
    }

    pub fn get(&self, net: Net) -> &Mlp {
        match net {
            Net::Proxy => &self.proxy,
            Net::Treatment => &self.treatment,
            Net::Mediator(a) => &self.mediator[a.index()],
            Net::Outcome(a) => &self.outcome[a.index()],
            Net::Posterior(a) => &self.posterior[a.index()],
            Net::AuxTreatment => &self.aux_treatment,
            Net::AuxMediator(a) => &self.aux_mediator[a.index()],
            Net::AuxOutcome(a) => &self.aux_outcome[a.index()],
        }
    }

    pub fn all(&self) -> Vec<(Net, &Mlp)> {
        let mut v = vec![(Net::Proxy, &self.proxy), (Net::Treatment, &self.treatment)];
        for arm in Arm::BOTH {
            v.push((Net::Mediator(arm), &self.mediator[arm.index()]));
            v.push((Net::Outcome(arm), &self.outcome[arm.index()]));
            v.push((Net::Posterior(arm), &self.posterior[arm.index()]));
            v.push((Net::AuxMediator(arm), &self.aux_mediator[arm.index()]));
            v.push((Net::AuxOutcome(arm), &self.aux_outcome[arm.index()]));
        }
        v.push((Net::AuxTreatment, &self.aux_treatment));
        v
    }
}

/// A univariate predictive distribution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dist1 {
    Normal { mean: f64, var: f64 },
    Bernoulli { p: f64 },
}

impl Dist1 {
    pub(crate) fn from_head(kind: VarKind, head: f64, var: f64) -> Self {
        match kind {
            VarKind::Continuous => Dist1::Normal { mean: head, var },
            VarKind::Binary => Dist1::Bernoulli {
                p: clamp_prob(sigmoid(head)),
            },
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Dist1::Normal { mean, .. } => mean,
            Dist1::Bernoulli { p } => p,
        }
    }

    pub fn ln_prob(&self, v: f64) -> f64 {
        match *self {
            Dist1::Normal { mean, var } => crate::stats::normal_ln(v, mean, var),
            Dist1::Bernoulli { p } => {
                if v == 1.0 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, r: &mut R) -> f64 {
        match *self {
            Dist1::Normal { mean, var } => mean + var.sqrt() * rng::normal(r),
            Dist1::Bernoulli { p } => rng::bernoulli(r, p),
        }
    }
}

/// Diagonal Gaussian over the latent confounder.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagNormal {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl DiagNormal {
    /// `KL(self ‖ N(0, I))`.
    pub fn kl_to_standard(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.var)
            .map(|(m, v)| 0.5 * (m * m + v - 1.0 - v.ln()))
            .sum()
    }
}

/// Auxiliary predictions for one unit at a given mediator value.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxPrediction {
    /// `q(t = 1 | x)`.
    pub treatment: f64,
    /// `q(m | x, t)` indexed by arm.
    pub mediator: [Dist1; 2],
    /// `q(y | x, m, t)` indexed by arm.
    pub outcome: [Dist1; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmavaeModel {
    config: ModelConfig,
    pub(crate) nets: Networks,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    params: Vec<f64>,
}

const CHECKPOINT_FORMAT: &str = "cmavae-checkpoint";

pub(crate) fn row(v: ArrayView1<f64>) -> Array2<f64> {
    v.to_owned().insert_axis(Axis(0))
}

pub(crate) fn hcat(parts: &[ArrayView2<f64>]) -> Array2<f64> {
    concatenate(Axis(1), parts).expect("row counts agree")
}

pub(crate) fn col(v: &Array1<f64>) -> ArrayView2<'_, f64> {
    v.view().insert_axis(Axis(1))
}

impl CmavaeModel {
    /// A freshly initialized model.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, r: &mut R) -> Result<Self> {
        config.validate()?;
        let nets = Networks::build(&config);
        let mut params = vec![0.0; nets.n_params];
        for (_, mlp) in nets.all() {
            mlp.init(&mut params, r);
        }
        Ok(Self { config, nets, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let nets = Networks::build(&config);
        if params.len() != nets.n_params {
            return Err(Error::Invalid(format!(
                "expected {} parameters for this configuration, got {}",
                nets.n_params,
                params.len()
            )));
        }
        Ok(Self { config, nets, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn network(&self, net: Net) -> &Mlp {
        self.nets.get(net)
    }

    /// Weight matrix and bias of one layer of one network.
    pub fn layer_mut(&mut self, net: Net, layer: usize) -> (ArrayViewMut2<'_, f64>, ArrayViewMut1<'_, f64>) {
        self.nets.get(net).layer_mut(&mut self.params, layer)
    }

    /// Zeroes every parameter of one network.
    pub fn zero_network(&mut self, net: Net) {
        let range = self.nets.get(net).range();
        self.params[range].fill(0.0);
    }

    /// Copies the parameters of `from` onto `to`; both must share a shape.
    pub fn copy_network(&mut self, from: Net, to: Net) {
        let (a, b) = (self.nets.get(from).clone(), self.nets.get(to).clone());
        assert_eq!(a.dims(), b.dims(), "networks differ in shape");
        let src: Vec<f64> = self.params[a.range()].to_vec();
        self.params[b.range()].copy_from_slice(&src);
    }

    pub fn sum_squared_params(&self) -> f64 {
        self.params.iter().map(|p| p * p).sum()
    }

    pub(crate) fn forward(&self, net: Net, input: ArrayView2<f64>) -> Array2<f64> {
        self.nets.get(net).forward(&self.params, input)
    }

    /// Runs a paired network, routing each row through the head of its arm.
    pub(crate) fn forward_paired(
        &self,
        make: fn(Arm) -> Net,
        input: ArrayView2<f64>,
        t: ArrayView1<f64>,
    ) -> Array2<f64> {
        let width = self.nets.get(make(Arm::Control)).output_dim();
        let mut out = Array2::zeros((input.nrows(), width));
        for arm in Arm::BOTH {
            let idx: Vec<usize> = (0..t.len()).filter(|&i| Arm::of(t[i]) == arm).collect();
            if idx.is_empty() {
                continue;
            }
            let res = self.forward(make(arm), input.select(Axis(0), &idx).view());
            for (k, &i) in idx.iter().enumerate() {
                out.row_mut(i).assign(&res.row(k));
            }
        }
        out
    }

    /// `p(t = 1 | z)`, clamped away from 0 and 1.
    pub fn decode_treatment_prob(&self, z: ArrayView1<f64>) -> f64 {
        clamp_prob(sigmoid(self.forward(Net::Treatment, row(z).view())[[0, 0]]))
    }

    /// `p(m | z, t)`.
    pub fn decode_mediator(&self, z: ArrayView1<f64>, t: f64) -> Dist1 {
        let head = self.forward(Net::Mediator(Arm::of(t)), row(z).view())[[0, 0]];
        Dist1::from_head(self.config.mediator_kind, head, self.config.arch.decoder_mediator_var)
    }

    /// `p(y | m, z, t)`.
    pub fn decode_outcome(&self, z: ArrayView1<f64>, m: f64, t: f64) -> Dist1 {
        let input = row(z);
        let input = hcat(&[input.view(), Array2::from_elem((1, 1), m).view()]);
        let head = self.forward(Net::Outcome(Arm::of(t)), input.view())[[0, 0]];
        Dist1::from_head(self.config.outcome_kind, head, self.config.arch.decoder_outcome_var)
    }

    /// Proxy heads of `p(x | z)`: Gaussian means or Bernoulli logits per column.
    pub fn decode_proxies(&self, z: ArrayView1<f64>) -> Array1<f64> {
        self.forward(Net::Proxy, row(z).view()).row(0).to_owned()
    }

    /// `q(z | x, m, y, t)`.
    pub fn encode_posterior(&self, x: ArrayView1<f64>, m: f64, y: f64, t: f64) -> DiagNormal {
        let dz = self.config.arch.z_dim;
        let input = hcat(&[row(x).view(), Array2::from_elem((1, 1), y).view(), Array2::from_elem((1, 1), m).view()]);
        let out = self.forward(Net::Posterior(Arm::of(t)), input.view());
        DiagNormal {
            mean: out.slice(s![0, ..dz]).to_owned(),
            var: out.slice(s![0, dz..]).mapv(f64::exp),
        }
    }

    pub fn aux_predict(&self, x: ArrayView1<f64>, m: f64) -> AuxPrediction {
        let cfg = &self.config;
        let xr = row(x);
        let xm = hcat(&[xr.view(), Array2::from_elem((1, 1), m).view()]);
        let treatment = clamp_prob(sigmoid(self.forward(Net::AuxTreatment, xr.view())[[0, 0]]));
        let med = |arm| {
            let h = self.forward(Net::AuxMediator(arm), xr.view())[[0, 0]];
            Dist1::from_head(cfg.mediator_kind, h, cfg.arch.aux_mediator_var)
        };
        let out = |arm| {
            let h = self.forward(Net::AuxOutcome(arm), xm.view())[[0, 0]];
            Dist1::from_head(cfg.outcome_kind, h, cfg.arch.aux_outcome_var)
        };
        AuxPrediction {
            treatment,
            mediator: [med(Arm::Control), med(Arm::Treated)],
            outcome: [out(Arm::Control), out(Arm::Treated)],
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            config: self.config.clone(),
            params: self.params.clone(),
        };
        let file = std::fs::File::create(path).map_err(|source| Error::Output {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::to_writer(std::io::BufWriter::new(file), &ck)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Invalid(format!("not a model checkpoint: format `{}`", ck.format)));
        }
        Self::from_params(ck.config, ck.params)
    }
}

#[cfg(test)]
mod tests {
    use super::super::Architecture;
    use super::*;
    use ndarray::array;

    pub(crate) fn tiny_config(mk: VarKind, yk: VarKind) -> ModelConfig {
        ModelConfig {
            x_kinds: vec![VarKind::Continuous, VarKind::Binary],
            mediator_kind: mk,
            outcome_kind: yk,
            arch: Architecture {
                z_dim: 2,
                hidden_layers: 1,
                layer_size: 3,
                treatment_hidden_layers: 1,
                ..Architecture::default()
            },
        }
    }

    fn model() -> CmavaeModel {
        let cfg = tiny_config(VarKind::Continuous, VarKind::Continuous);
        CmavaeModel::new(cfg, &mut rng::seeded(11)).unwrap()
    }

    #[test]
    fn zero_treatment_net_gives_half() {
        let mut m = model();
        m.zero_network(Net::Treatment);
        assert_eq!(m.decode_treatment_prob(array![0.3, -2.0].view()), 0.5);
    }

    #[test]
    fn saturated_treatment_is_clamped() {
        let mut m = model();
        m.zero_network(Net::Treatment);
        let last = m.network(Net::Treatment).n_layers() - 1;
        m.layer_mut(Net::Treatment, last).1.fill(1e3);
        let p = m.decode_treatment_prob(array![0.0, 0.0].view());
        assert_eq!(p, 1.0 - 1e-7);
    }

    #[test]
    fn treatment_prob_matches_manual_forward() {
        let m = model();
        let z = array![0.4, -0.9];
        let mlp = m.network(Net::Treatment);
        let (w1, b1) = mlp.layer(m.params(), 0);
        let (w2, b2) = mlp.layer(m.params(), 1);
        let mut logit = b2[0];
        for j in 0..3 {
            let pre = z[0] * w1[[0, j]] + z[1] * w1[[1, j]] + b1[j];
            let h = if pre > 0.0 { pre } else { pre.exp() - 1.0 };
            logit += h * w2[[j, 0]];
        }
        let want = 1.0 / (1.0 + (-logit).exp());
        assert!((m.decode_treatment_prob(z.view()) - want).abs() < 1e-14);
    }

    #[test]
    fn shared_heads_make_arm_irrelevant() {
        let mut m = model();
        let z = array![0.1, 0.7];
        m.copy_network(Net::Mediator(Arm::Treated), Net::Mediator(Arm::Control));
        assert_eq!(m.decode_mediator(z.view(), 1.0), m.decode_mediator(z.view(), 0.0));
        m.copy_network(Net::Outcome(Arm::Treated), Net::Outcome(Arm::Control));
        assert_eq!(m.decode_outcome(z.view(), 0.3, 1.0), m.decode_outcome(z.view(), 0.3, 0.0));
        let x = array![1.0, 0.0];
        m.copy_network(Net::Posterior(Arm::Treated), Net::Posterior(Arm::Control));
        assert_eq!(m.encode_posterior(x.view(), 0.2, 1.0, 1.0), m.encode_posterior(x.view(), 0.2, 1.0, 0.0));
        m.copy_network(Net::AuxMediator(Arm::Treated), Net::AuxMediator(Arm::Control));
        let aux = m.aux_predict(x.view(), 0.5);
        assert_eq!(aux.mediator[0], aux.mediator[1]);
    }

    #[test]
    fn treated_arm_ignores_control_head() {
        let mut m = model();
        let z = array![0.5, -0.5];
        let before = m.decode_mediator(z.view(), 1.0);
        m.zero_network(Net::Mediator(Arm::Control));
        assert_eq!(before, m.decode_mediator(z.view(), 1.0));
    }

    #[test]
    fn outcome_invariant_to_mediator_when_slice_zeroed() {
        let mut m = model();
        let dz = m.config().arch.z_dim;
        for arm in Arm::BOTH {
            m.layer_mut(Net::Outcome(arm), 0).0.row_mut(dz).fill(0.0);
        }
        let z = array![0.2, 0.1];
        assert_eq!(m.decode_outcome(z.view(), -3.0, 1.0), m.decode_outcome(z.view(), 5.0, 1.0));
    }

    #[test]
    fn single_layer_heads_match_matrix_arithmetic() {
        let mut cfg = tiny_config(VarKind::Continuous, VarKind::Binary);
        cfg.arch.hidden_layers = 0;
        let mut m = CmavaeModel::new(cfg, &mut rng::seeded(3)).unwrap();
        {
            let (mut w, mut b) = m.layer_mut(Net::Mediator(Arm::Control), 0);
            w.assign(&array![[2.0], [-1.0]]);
            b[0] = 0.5;
        }
        {
            let (mut w, mut b) = m.layer_mut(Net::Outcome(Arm::Treated), 0);
            w.assign(&array![[1.0], [0.0], [3.0]]);
            b[0] = -1.0;
        }
        let z = array![0.25, 1.5];
        assert_eq!(m.decode_mediator(z.view(), 0.0), Dist1::Normal { mean: 2.0 * 0.25 - 1.5 + 0.5, var: 1.0 });
        let logit: f64 = 0.25 + 3.0 * 0.4 - 1.0;
        let p = 1.0 / (1.0 + (-logit).exp());
        match m.decode_outcome(z.view(), 0.4, 1.0) {
            Dist1::Bernoulli { p: got } => assert!((got - p).abs() < 1e-15),
            other => panic!("expected Bernoulli, got {other:?}"),
        }
        {
            let (mut w, mut b) = m.layer_mut(Net::Posterior(Arm::Treated), 0);
            w.fill(0.0);
            w[[0, 0]] = 1.0; // μ₁ = x₀
            w[[2, 3]] = 0.5; // log σ²₂ = 0.5 y
            b.fill(0.0);
            b[1] = -2.0;
        }
        let q = m.encode_posterior(array![0.7, 1.0].view(), 9.0, 2.0, 1.0);
        assert_eq!(q.mean, array![0.7, -2.0]);
        assert!((q.var[0] - 1.0).abs() < 1e-15);
        assert!((q.var[1] - 1.0f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn prior_posterior_has_zero_kl() {
        let mut m = model();
        m.zero_network(Net::Posterior(Arm::Control));
        let q = m.encode_posterior(array![1.0, 0.0].view(), 0.0, 0.0, 0.0);
        assert_eq!(q.mean, array![0.0, 0.0]);
        assert_eq!(q.var, array![1.0, 1.0]);
        assert_eq!(q.kl_to_standard(), 0.0);
        let shifted = DiagNormal {
            mean: array![0.1, 0.0],
            var: array![1.0, 0.9],
        };
        assert!(shifted.kl_to_standard() > 0.0);
    }

    #[test]
    fn aux_zero_treatment_head() {
        let mut m = model();
        m.zero_network(Net::AuxTreatment);
        assert_eq!(m.aux_predict(array![3.0, 1.0].view(), 0.0).treatment, 0.5);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        m.save_json(&p).unwrap();
        let back = CmavaeModel::load_json(&p).unwrap();
        assert_eq!(back, m);
        let z = array![0.123456789, -1.5];
        assert_eq!(
            back.decode_outcome(z.view(), 0.3, 1.0).mean().to_bits(),
            m.decode_outcome(z.view(), 0.3, 1.0).mean().to_bits()
        );
    }
}
