//! Training objective: classification, reconstruction and KL terms.
//!
//! The functions here recompute each term from a [`DialogueTrace`] using
//! plain value arithmetic in the same order as the tape, so a recomputed
//! breakdown matches the one recorded during the forward pass.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dialogue, DialogueTrace, GaussianNoise, LatentKind, Model};
use crate::numerics::{
    grad_check, kl_diag, softmax_cross_entropy, GradCheckConfig, GradCheckReport,
};

/// Nonnegative weights on the three loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub cls: f64,
    pub recon: f64,
    pub kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cls: 1.0,
            recon: 1.0,
            kl: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(cls: f64, recon: f64, kl: f64) -> Result<Self> {
        let w = Self { cls, recon, kl };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("cls", self.cls), ("recon", self.recon), ("kl", self.kl)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::Config(format!(
                    "loss weight {name} must be finite and nonnegative, got {x}"
                )));
            }
        }
        Ok(())
    }

    /// `cls·c + recon·(ru + rf) + kl·Σ kls`.
    pub fn combine(&self, cls: f64, recon_u: f64, recon_f: f64, kls: &[f64]) -> f64 {
        let mut kl = 0.0;
        for &k in kls {
            kl += k;
        }
        let mut total = 0.0;
        total += self.cls * cls;
        total += self.recon * (recon_u + recon_f);
        total += self.kl * kl;
        total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub cls: f64,
    pub recon_u: f64,
    pub recon_f: f64,
    /// One entry per latent chain.
    pub kl: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub recon_u: f64,
    pub recon_f: f64,
    pub kl: Vec<(LatentKind, f64)>,
    pub total: f64,
    pub steps: Vec<StepLosses>,
}

impl LossBreakdown {
    pub fn kl_of(&self, kind: LatentKind) -> Option<f64> {
        self.kl.iter().find(|(k, _)| *k == kind).map(|(_, v)| *v)
    }

    pub fn kl_sum(&self) -> f64 {
        let mut acc = 0.0;
        for (_, k) in &self.kl {
            acc += k;
        }
        acc
    }

    pub fn kl_values(&self) -> Vec<f64> {
        self.kl.iter().map(|(_, v)| *v).collect()
    }
}

fn check_len(trace: &DialogueTrace, d: &Dialogue) -> Result<()> {
    if trace.len() != d.len() {
        return Err(Error::dim("elbo", &[trace.len()], &[d.len()]));
    }
    Ok(())
}

fn half_sq_dist(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("half_sq_dist", &[a.len()], &[b.len()]));
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(0.5 * s)
}

fn sum_steps(xs: impl Iterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    for x in xs {
        acc += x;
    }
    acc
}

fn recon_steps(trace: &DialogueTrace, d: &Dialogue) -> Result<Vec<(f64, f64)>> {
    check_len(trace, d)?;
    trace
        .steps
        .iter()
        .zip(&d.turns)
        .map(|(s, turn)| {
            let ru = half_sq_dist(&s.u_hat, &turn.u)?;
            let rf = match (&s.f_hat, &s.f) {
                (Some(f_hat), Some(f)) => half_sq_dist(f_hat, f)?,
                _ => 0.0,
            };
            Ok((ru, rf))
        })
        .collect()
}

/// Unit-variance Gaussian negative log-likelihood of `U` and projected `F`,
/// constants dropped, summed over turns.
pub fn recon_loss(trace: &DialogueTrace, d: &Dialogue) -> Result<(f64, f64)> {
    let steps = recon_steps(trace, d)?;
    Ok((
        sum_steps(steps.iter().map(|s| s.0)),
        sum_steps(steps.iter().map(|s| s.1)),
    ))
}

/// Per-chain `Σ_t KL(q_t ‖ p_t)`.
pub fn kl_loss(trace: &DialogueTrace) -> Result<Vec<(LatentKind, f64)>> {
    let Some(first) = trace.steps.first() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::with_capacity(first.latents.len());
    for (c, l) in first.latents.iter().enumerate() {
        let mut acc = 0.0;
        for s in &trace.steps {
            acc += kl_diag(&s.latents[c].posterior, &s.latents[c].prior)?;
        }
        out.push((l.kind, acc));
    }
    Ok(out)
}

/// `Σ_t −log softmax(logits_t)[E_t]`.
pub fn cls_loss(trace: &DialogueTrace, d: &Dialogue) -> Result<f64> {
    check_len(trace, d)?;
    let mut acc = 0.0;
    for (s, turn) in trace.steps.iter().zip(&d.turns) {
        acc += softmax_cross_entropy(&s.logits, turn.label)?;
    }
    Ok(acc)
}

/// Full breakdown recomputed from a trace.
pub fn total_loss(trace: &DialogueTrace, d: &Dialogue, w: &LossWeights) -> Result<LossBreakdown> {
    w.validate()?;
    let recon = recon_steps(trace, d)?;
    let mut steps = Vec::with_capacity(trace.len());
    for ((s, turn), &(ru, rf)) in trace.steps.iter().zip(&d.turns).zip(&recon) {
        steps.push(StepLosses {
            cls: softmax_cross_entropy(&s.logits, turn.label)?,
            recon_u: ru,
            recon_f: rf,
            kl: s
                .latents
                .iter()
                .map(|l| kl_diag(&l.posterior, &l.prior))
                .collect::<Result<_>>()?,
        });
    }
    let cls = cls_loss(trace, d)?;
    let (recon_u, recon_f) = recon_loss(trace, d)?;
    let kl = kl_loss(trace)?;
    let kls: Vec<f64> = kl.iter().map(|(_, v)| *v).collect();
    let total = w.combine(cls, recon_u, recon_f, &kls);
    Ok(LossBreakdown {
        cls,
        recon_u,
        recon_f,
        kl,
        total,
        steps,
    })
}

/// Finite-difference check of the full single-dialogue loss. The noise is
/// regenerated from `noise_seed` for every evaluation, so it stays frozen.
pub fn check_gradients(
    model: &Model,
    d: &Dialogue,
    noise_seed: u64,
    w: &LossWeights,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let noise = || GaussianNoise(ChaCha8Rng::seed_from_u64(noise_seed));
    let (_, analytic) = model.loss_and_grad(d, &mut noise(), w)?;
    grad_check(
        &model.params,
        &analytic,
        |p| Ok(model.loss_with(p, d, &mut noise(), w)?.total),
        cfg,
    )
}
