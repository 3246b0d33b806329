//! Mediation effects from a trained model, and their errors against truth.
//!
//! For every evaluation unit, `z` is drawn from the proxy-only posterior. The
//! decoder then supplies mediator draws under each treatment arm and outcome
//! means under each arm. ACME under treatment contrasts the mediator arms at
//! `t = 1`; ACDE under control contrasts the outcome arms at the control
//! mediator. The ATE is their sum.

use ndarray::{concatenate, s, Array1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmavae::{sample_posterior_batch, Arm, CmavaeModel, Dist1, Net};
use crate::dgp::TrueEffects;
use crate::stats;
use crate::{Error, Result};

/// Default number of posterior draws per unit.
pub const DEFAULT_DRAWS: usize = 100;

/// Rows pushed through the networks at once.
const ROWS_PER_CHUNK: usize = 50_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    /// δ̄(1).
    pub acme_treated: f64,
    /// ζ̄(0).
    pub acde_control: f64,
    pub ate: f64,
    /// Posterior draws per unit.
    pub samples: usize,
    pub n_eval: usize,
    /// Standard errors that treat every draw as independent.
    pub acme_mc_se: f64,
    pub acde_mc_se: f64,
}

impl EffectEstimate {
    /// Maps effects on a rescaled outcome back to its original units.
    pub fn rescaled(self, scale: f64) -> EffectEstimate {
        let (acme_treated, acde_control) = (self.acme_treated * scale, self.acde_control * scale);
        EffectEstimate {
            acme_treated,
            acde_control,
            ate: acme_treated + acde_control,
            acme_mc_se: self.acme_mc_se * scale.abs(),
            acde_mc_se: self.acde_mc_se * scale.abs(),
            ..self
        }
    }
}

#[derive(Default)]
struct Moments {
    n: f64,
    sum: f64,
    sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sq += v * v;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n
    }

    fn se(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        let var = (self.sq - self.sum * self.sum / self.n) / (self.n - 1.0);
        (var.max(0.0) / self.n).sqrt()
    }
}

fn check_inputs(model: &CmavaeModel, x: ArrayView2<f64>, draws: usize) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if draws == 0 {
        return Err(Error::Invalid("need at least one posterior draw per unit".into()));
    }
    if x.ncols() != model.config().x_dim() {
        return Err(Error::Schema(format!(
            "evaluation covariates have {} columns, model expects {}",
            x.ncols(),
            model.config().x_dim()
        )));
    }
    Ok(())
}

struct Mediators {
    m1: Array1<f64>,
    m0: Array1<f64>,
}

fn sample_mediators<R: Rng + ?Sized>(model: &CmavaeModel, z: ArrayView2<f64>, r: &mut R) -> Mediators {
    let cfg = model.config();
    let var = cfg.arch.decoder_mediator_var;
    let mut draw = |arm| {
        let heads = model.forward(Net::Mediator(arm), z);
        heads.column(0).mapv(|h| Dist1::from_head(cfg.mediator_kind, h, var).sample(r))
    };
    let m1 = draw(Arm::Treated);
    let m0 = draw(Arm::Control);
    Mediators { m1, m0 }
}

/// Decoder outcome means `E[y | m, z, t]` with every row sent to arm `arm`.
fn outcome_mean(model: &CmavaeModel, z: ArrayView2<f64>, m: &Array1<f64>, arm: Arm) -> Array1<f64> {
    let cfg = model.config();
    let input = concatenate(Axis(1), &[z, m.view().insert_axis(Axis(1))]).unwrap();
    let heads = model.forward(Net::Outcome(arm), input.view());
    heads
        .column(0)
        .mapv(|h| Dist1::from_head(cfg.outcome_kind, h, cfg.arch.decoder_outcome_var).mean())
}

/// Runs `f` on posterior draws for successive chunks of units.
fn for_chunks<R: Rng + ?Sized>(
    model: &CmavaeModel,
    x: ArrayView2<f64>,
    draws: usize,
    r: &mut R,
    mut f: impl FnMut(ArrayView2<f64>, &mut R),
) {
    let units = (ROWS_PER_CHUNK / draws).max(1);
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + units).min(x.nrows());
        let post = sample_posterior_batch(model, x.slice(s![start..end, ..]), draws, r);
        f(post.z.view(), r);
        start = end;
    }
}

/// `E[y | M(t′=1), z, t] − E[y | M(t′=0), z, t]` averaged over draws and units.
pub fn estimate_acme<R: Rng + ?Sized>(
    model: &CmavaeModel,
    x: ArrayView2<f64>,
    t: f64,
    draws: usize,
    r: &mut R,
) -> Result<f64> {
    check_inputs(model, x, draws)?;
    let arm = Arm::of(t);
    let mut acc = Moments::default();
    for_chunks(model, x, draws, r, |z, r| {
        let med = sample_mediators(model, z, r);
        let hi = outcome_mean(model, z, &med.m1, arm);
        let lo = outcome_mean(model, z, &med.m0, arm);
        for (a, b) in hi.iter().zip(&lo) {
            acc.push(a - b);
        }
    });
    Ok(acc.mean())
}

/// `E[y | do(t′=1), M(t), z] − E[y | do(t′=0), M(t), z]` averaged over draws and units.
pub fn estimate_acde<R: Rng + ?Sized>(
    model: &CmavaeModel,
    x: ArrayView2<f64>,
    t: f64,
    draws: usize,
    r: &mut R,
) -> Result<f64> {
    check_inputs(model, x, draws)?;
    let cfg = model.config();
    let mut acc = Moments::default();
    for_chunks(model, x, draws, r, |z, r| {
        let heads = model.forward(Net::Mediator(Arm::of(t)), z);
        let m = heads
            .column(0)
            .mapv(|h| Dist1::from_head(cfg.mediator_kind, h, cfg.arch.decoder_mediator_var).sample(r));
        let hi = outcome_mean(model, z, &m, Arm::Treated);
        let lo = outcome_mean(model, z, &m, Arm::Control);
        for (a, b) in hi.iter().zip(&lo) {
            acc.push(a - b);
        }
    });
    Ok(acc.mean())
}

/// δ̄(1) and ζ̄(0) from shared posterior and mediator draws; τ̄ is their sum.
pub fn estimate_effects<R: Rng + ?Sized>(
    model: &CmavaeModel,
    x: ArrayView2<f64>,
    draws: usize,
    r: &mut R,
) -> Result<EffectEstimate> {
    check_inputs(model, x, draws)?;
    let mut acme = Moments::default();
    let mut acde = Moments::default();
    for_chunks(model, x, draws, r, |z, r| {
        let med = sample_mediators(model, z, r);
        let y11 = outcome_mean(model, z, &med.m1, Arm::Treated);
        let y10 = outcome_mean(model, z, &med.m0, Arm::Treated);
        let y00 = outcome_mean(model, z, &med.m0, Arm::Control);
        for i in 0..y11.len() {
            acme.push(y11[i] - y10[i]);
            acde.push(y10[i] - y00[i]);
        }
    });
    let (d, z) = (acme.mean(), acde.mean());
    Ok(EffectEstimate {
        acme_treated: d,
        acde_control: z,
        ate: d + z,
        samples: draws,
        n_eval: x.nrows(),
        acme_mc_se: acme.se(),
        acde_mc_se: acde.se(),
    })
}

/// Absolute errors of one estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AbsErrors {
    pub acme: f64,
    pub acde: f64,
    pub ate: f64,
}

impl AbsErrors {
    pub fn between(acme: f64, acde: f64, ate: f64, truth: &TrueEffects) -> Self {
        Self {
            acme: (acme - truth.acme_treated).abs(),
            acde: (acde - truth.acde_control).abs(),
            ate: (ate - truth.ate).abs(),
        }
    }

    pub fn of(est: &EffectEstimate, truth: &TrueEffects) -> Self {
        Self::between(est.acme_treated, est.acde_control, est.ate, truth)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub per_rep: Vec<AbsErrors>,
    pub mean: AbsErrors,
    /// Sample standard deviation (divisor `reps − 1`); zero for one replication.
    pub std: AbsErrors,
    pub reps: usize,
    pub single_rep: bool,
}

impl ErrorReport {
    pub fn from_errors(per_rep: Vec<AbsErrors>) -> Result<Self> {
        if per_rep.is_empty() {
            return Err(Error::Invalid("error report needs at least one replication".into()));
        }
        let pick = |f: fn(&AbsErrors) -> f64| per_rep.iter().map(f).collect::<Vec<_>>();
        let (a, d, t) = (pick(|e| e.acme), pick(|e| e.acde), pick(|e| e.ate));
        let reps = per_rep.len();
        Ok(Self {
            mean: AbsErrors {
                acme: stats::mean(&a),
                acde: stats::mean(&d),
                ate: stats::mean(&t),
            },
            std: AbsErrors {
                acme: stats::sample_std(&a),
                acde: stats::sample_std(&d),
                ate: stats::sample_std(&t),
            },
            per_rep,
            reps,
            single_rep: reps == 1,
        })
    }
}

pub fn error_report(estimates: &[EffectEstimate], truth: &TrueEffects) -> Result<ErrorReport> {
    ErrorReport::from_errors(estimates.iter().map(|e| AbsErrors::of(e, truth)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmavae::{Architecture, ModelConfig};
    use crate::dataset::VarKind;
    use crate::rng;
    use ndarray::{array, Array2};

    fn linear_model(seed: u64, yk: VarKind) -> CmavaeModel {
        let cfg = ModelConfig {
            x_kinds: vec![VarKind::Continuous, VarKind::Continuous],
            mediator_kind: VarKind::Continuous,
            outcome_kind: yk,
            arch: Architecture {
                z_dim: 1,
                hidden_layers: 0,
                treatment_hidden_layers: 0,
                ..Architecture::default()
            },
        };
        CmavaeModel::new(cfg, &mut rng::seeded(seed)).unwrap()
    }

    fn xs() -> Array2<f64> {
        array![[0.3, -1.0], [1.2, 0.4], [-0.6, 2.0]]
    }

    #[test]
    fn outcome_ignoring_mediator_gives_zero_acme() {
        let mut m = linear_model(1, VarKind::Continuous);
        for arm in Arm::BOTH {
            m.layer_mut(Net::Outcome(arm), 0).0.row_mut(1).fill(0.0);
        }
        let x = xs();
        assert_eq!(estimate_acme(&m, x.view(), 1.0, 50, &mut rng::seeded(2)).unwrap(), 0.0);
        let est = estimate_effects(&m, x.view(), 50, &mut rng::seeded(2)).unwrap();
        assert_eq!(est.acme_treated, 0.0);
    }

    #[test]
    fn identical_outcome_heads_give_zero_acde() {
        for kind in [VarKind::Continuous, VarKind::Binary] {
            let mut m = linear_model(3, kind);
            m.copy_network(Net::Outcome(Arm::Treated), Net::Outcome(Arm::Control));
            let x = xs();
            assert_eq!(estimate_acde(&m, x.view(), 0.0, 40, &mut rng::seeded(4)).unwrap(), 0.0);
            let est = estimate_effects(&m, x.view(), 40, &mut rng::seeded(4)).unwrap();
            assert_eq!(est.acde_control, 0.0);
        }
    }

    #[test]
    fn both_trivial_constructions_give_all_zero() {
        let mut m = linear_model(5, VarKind::Continuous);
        m.copy_network(Net::Outcome(Arm::Treated), Net::Outcome(Arm::Control));
        for arm in Arm::BOTH {
            m.layer_mut(Net::Outcome(arm), 0).0.row_mut(1).fill(0.0);
        }
        let est = estimate_effects(&m, xs().view(), 30, &mut rng::seeded(6)).unwrap();
        assert_eq!((est.acme_treated, est.acde_control, est.ate), (0.0, 0.0, 0.0));
    }

    #[test]
    fn shared_mediator_heads_give_acme_within_mc_error() {
        let mut m = linear_model(7, VarKind::Continuous);
        m.copy_network(Net::Mediator(Arm::Treated), Net::Mediator(Arm::Control));
        let x = array![[0.5, 0.5]];
        let est = estimate_effects(&m, x.view(), 1000, &mut rng::seeded(8)).unwrap();
        assert!(est.acme_treated.abs() <= 3.0 * est.acme_mc_se, "{est:?}");
    }

    #[test]
    fn linear_model_matches_closed_form() {
        let mut m = linear_model(9, VarKind::Continuous);
        // constant posterior mean mu0 for both encoder arms
        let mu0 = 0.8;
        for arm in Arm::BOTH {
            let (mut w, mut b) = m.layer_mut(Net::Posterior(arm), 0);
            w.fill(0.0);
            b[0] = mu0;
            b[1] = -1.0;
        }
        let set = |m: &mut CmavaeModel, net, w: &[f64], c: f64| {
            let (mut wm, mut b) = m.layer_mut(net, 0);
            for (k, v) in w.iter().enumerate() {
                wm[[k, 0]] = *v;
            }
            b[0] = c;
        };
        let (a2, c2, a3, c3) = (1.5, 0.2, -0.5, 0.7);
        let (a4, b4, c4, a5, b5, c5) = (0.9, 1.3, -0.4, 0.1, 0.6, 0.3);
        set(&mut m, Net::Mediator(Arm::Treated), &[a2], c2);
        set(&mut m, Net::Mediator(Arm::Control), &[a3], c3);
        set(&mut m, Net::Outcome(Arm::Treated), &[a4, b4], c4);
        set(&mut m, Net::Outcome(Arm::Control), &[a5, b5], c5);
        let acme = b4 * ((a2 - a3) * mu0 + c2 - c3);
        let acde = (a4 - a5) * mu0 + (b4 - b5) * (a3 * mu0 + c3) + c4 - c5;
        let x = xs();
        let est = estimate_effects(&m, x.view(), 2000, &mut rng::seeded(10)).unwrap();
        assert!((est.acme_treated - acme).abs() < 3.0 * est.acme_mc_se, "{est:?} vs {acme}");
        assert!((est.acde_control - acde).abs() < 3.0 * est.acde_mc_se, "{est:?} vs {acde}");
        assert!((est.ate - (est.acme_treated + est.acde_control)).abs() <= 1e-12);
        assert_eq!(est.samples, 2000);
        assert_eq!(est.n_eval, 3);
    }

    #[test]
    fn binary_outcome_effects_are_bounded() {
        let m = linear_model(11, VarKind::Binary);
        let est = estimate_effects(&m, xs().view(), 100, &mut rng::seeded(1)).unwrap();
        for v in [est.acme_treated, est.acde_control, est.ate] {
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let m = linear_model(12, VarKind::Continuous);
        let a = estimate_effects(&m, xs().view(), 20, &mut rng::seeded(3)).unwrap();
        let b = estimate_effects(&m, xs().view(), 20, &mut rng::seeded(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = linear_model(13, VarKind::Continuous);
        assert!(estimate_effects(&m, Array2::zeros((0, 2)).view(), 10, &mut rng::seeded(1)).is_err());
        assert!(estimate_effects(&m, xs().view(), 0, &mut rng::seeded(1)).is_err());
        assert!(estimate_effects(&m, Array2::zeros((2, 3)).view(), 10, &mut rng::seeded(1)).is_err());
    }

    #[test]
    fn report_hand_values() {
        let truth = TrueEffects::zero();
        let est = |v: f64| EffectEstimate {
            acme_treated: v,
            acde_control: -v,
            ate: 0.0,
            samples: 1,
            n_eval: 1,
            acme_mc_se: 0.0,
            acde_mc_se: 0.0,
        };
        let r = error_report(&[est(0.1), est(0.3)], &truth).unwrap();
        assert!((r.mean.acme - 0.2).abs() < 1e-15);
        assert!((r.std.acme - 0.141_421_356_237_309_5).abs() < 1e-12);
        assert!((r.mean.acde - 0.2).abs() < 1e-15);
        assert_eq!(r.reps, 2);

        let one = error_report(&[est(0.0)], &truth).unwrap();
        assert_eq!(one.mean, AbsErrors::default());
        assert_eq!(one.std, AbsErrors::default());
        assert!(one.single_rep);
        assert!(error_report(&[], &truth).is_err());
    }
}
