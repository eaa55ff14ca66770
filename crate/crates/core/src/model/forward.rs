//! Per-dialogue forward pass recorded on a tape.

use std::collections::HashMap;

use crate::cells::{gaussian_head, gru_step, lstm_step};
use crate::elbo::{LossBreakdown, LossWeights, StepLosses};
use crate::error::Result;
use crate::numerics::{Bound, GaussianDiag, GaussianVar, Tape, Tensor, Var};

use super::config::ModelConfig;
use super::dialogue::Dialogue;
use super::noise::NoiseSource;
use super::params::{LatentKind, ModelParams, TopicParams};

/// Prior, posterior and sample of one latent at one step.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub kind: LatentKind,
    pub prior: GaussianDiag,
    pub posterior: GaussianDiag,
    pub eps: Vec<f64>,
    pub sample: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    pub latents: Vec<LatentState>,
    /// Personal attributes `P_t`.
    pub p: Vec<f64>,
    /// Projected topic features `F_t`; `None` without a topic source.
    pub f: Option<Vec<f64>>,
    pub u_hat: Vec<f64>,
    pub f_hat: Option<Vec<f64>>,
    pub logits: Vec<f64>,
}

/// Everything computed for one dialogue.
#[derive(Clone, Debug, PartialEq)]
pub struct DialogueTrace {
    pub steps: Vec<StepTrace>,
    pub losses: LossBreakdown,
}

impl DialogueTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub(crate) struct Ctx<'a> {
    pub cfg: &'a ModelConfig,
    pub layout: &'a ModelParams,
    pub p: &'a Bound,
}

pub(crate) struct LatentVars {
    pub prior: GaussianVar,
    pub posterior: GaussianVar,
    pub eps: Vec<f64>,
    pub sample: Var,
}

pub(crate) struct StepVars {
    pub latents: Vec<LatentVars>,
    pub p: Var,
    pub f: Option<Var>,
    pub u_hat: Var,
    pub f_hat: Option<Var>,
    pub logits: Var,
    pub cls: Var,
    pub recon_u: Var,
    pub recon_f: Option<Var>,
    pub kl: Vec<Var>,
}

pub(crate) struct Graph {
    pub steps: Vec<StepVars>,
    pub cls: Var,
    pub recon_u: Var,
    pub recon_f: Var,
    pub kl: Vec<Var>,
    pub total: Var,
}

impl Ctx<'_> {
    /// Projected topic features per turn, or `None` when topics are off.
    pub fn topics_on(&self, tape: &mut Tape, d: &Dialogue, u: &[Var]) -> Result<Option<Vec<Var>>> {
        match &self.layout.topic {
            TopicParams::None => Ok(None),
            TopicParams::External(proj) => {
                let mut out = Vec::with_capacity(d.len());
                for turn in &d.turns {
                    let x = tape.constant(Tensor::vector(turn.f_raw.clone()));
                    out.push(proj.forward(tape, self.p, x)?);
                }
                Ok(Some(out))
            }
            TopicParams::Recurrent(cell) => {
                let mut h = tape.constant(Tensor::zeros(&[cell.hidden]));
                let mut c = tape.constant(Tensor::zeros(&[cell.hidden]));
                let mut out = Vec::with_capacity(d.len());
                for &x in u {
                    (h, c) = lstm_step(cell, tape, self.p, h, c, x)?;
                    out.push(h);
                }
                Ok(Some(out))
            }
        }
    }

    /// `P_t` per turn: the LSTM state after the speaker's own earlier turns.
    pub fn attributes_on(&self, tape: &mut Tape, d: &Dialogue, u: &[Var]) -> Result<Vec<Var>> {
        let Some(attr) = &self.layout.attributes else {
            let zero = tape.constant(Tensor::zeros(&[self.cfg.p_dim]));
            return Ok(vec![zero; d.len()]);
        };
        // speaker -> (h, c, turn not yet consumed)
        let mut state: HashMap<&str, (Var, Var, Option<usize>)> = HashMap::new();
        let mut out = Vec::with_capacity(d.len());
        for (t, turn) in d.turns.iter().enumerate() {
            let entry = state.entry(turn.speaker.as_str()).or_insert((
                self.p.var(attr.h0),
                self.p.var(attr.c0),
                None,
            ));
            if let Some(j) = entry.2.take() {
                let (h, c) = lstm_step(&attr.lstm, tape, self.p, entry.0, entry.1, u[j])?;
                entry.0 = h;
                entry.1 = c;
            }
            out.push(entry.0);
            entry.2 = Some(t);
        }
        Ok(out)
    }

    pub fn initial_latents(&self) -> Vec<Var> {
        self.layout
            .chains
            .iter()
            .map(|c| self.p.var(c.init))
            .collect()
    }

    pub fn prior_on(&self, tape: &mut Tape, prev: &[Var], p_t: Var) -> Result<Vec<GaussianVar>> {
        let mut out = Vec::with_capacity(prev.len());
        for (chain, &h) in self.layout.chains.iter().zip(prev) {
            let g = gru_step(&chain.prior_gru, tape, self.p, h, p_t)?;
            out.push(gaussian_head(&chain.prior_head, tape, self.p, g)?);
        }
        Ok(out)
    }

    pub fn posterior_on(
        &self,
        tape: &mut Tape,
        prev: &[Var],
        u: Var,
        f: Option<Var>,
        p_t: Var,
    ) -> Result<Vec<GaussianVar>> {
        let mut out = Vec::with_capacity(prev.len());
        for chain in &self.layout.chains {
            let unit = &chain.posterior_unit;
            let mut parts = vec![prev[unit.prev_chain], u];
            if unit.reads_topic {
                if let Some(f) = f {
                    parts.push(f);
                } else {
                    parts.push(tape.constant(Tensor::zeros(&[self.cfg.f_dim])));
                }
            }
            parts.push(p_t);
            let x = tape.concat(&parts)?;
            let h = tape.affine(x, self.p.var(unit.w), self.p.var(unit.b))?;
            out.push(gaussian_head(&chain.posterior_head, tape, self.p, h)?);
        }
        Ok(out)
    }

    fn gather(
        &self,
        tape: &mut Tape,
        samples: &[Var],
        keep: impl Fn(usize) -> bool,
    ) -> Result<Var> {
        let parts: Vec<Var> = samples
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, &v)| v)
            .collect();
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            tape.concat(&parts)
        }
    }

    /// `(Û_t, F̂_t)`: utterance from every latent, topic from the topic latents.
    pub fn generate_on(&self, tape: &mut Tape, samples: &[Var]) -> Result<(Var, Var)> {
        let chains = &self.layout.chains;
        let all = self.gather(tape, samples, |_| true)?;
        let u_hat = self.layout.decoder_u.forward(tape, self.p, all)?;
        let topic = self.gather(tape, samples, |i| chains[i].feeds_topic)?;
        let f_hat = self.layout.decoder_f.forward(tape, self.p, topic)?;
        Ok((u_hat, f_hat))
    }

    pub fn classify_on(&self, tape: &mut Tape, samples: &[Var]) -> Result<Var> {
        let chains = &self.layout.chains;
        let x = self.gather(tape, samples, |i| chains[i].feeds_label)?;
        self.layout.emotion_posterior().forward(tape, self.p, x)
    }

    pub fn run(
        &self,
        tape: &mut Tape,
        d: &Dialogue,
        noise: &mut dyn NoiseSource,
        w: &LossWeights,
    ) -> Result<Graph> {
        d.validate(self.cfg.u_dim, self.cfg.f_raw_dim, self.cfg.n_classes)?;
        let u: Vec<Var> = d
            .turns
            .iter()
            .map(|t| tape.constant(Tensor::vector(t.u.clone())))
            .collect();
        let f = self.topics_on(tape, d, &u)?;
        let p = self.attributes_on(tape, d, &u)?;

        let mut prev = self.initial_latents();
        let mut steps = Vec::with_capacity(d.len());
        for (t, turn) in d.turns.iter().enumerate() {
            let f_t = f.as_ref().map(|f| f[t]);
            let priors = self.prior_on(tape, &prev, p[t])?;
            let posteriors = self.posterior_on(tape, &prev, u[t], f_t, p[t])?;

            let mut latents = Vec::with_capacity(priors.len());
            let mut samples = Vec::with_capacity(priors.len());
            let mut kl = Vec::with_capacity(priors.len());
            for (chain, (prior, posterior)) in self
                .layout
                .chains
                .iter()
                .zip(priors.into_iter().zip(posteriors))
            {
                let mut eps = vec![0.0; chain.dim];
                noise.fill(&mut eps);
                let sample = tape.reparam(posterior, &eps)?;
                kl.push(tape.kl_diag(posterior, prior)?);
                samples.push(sample);
                latents.push(LatentVars {
                    prior,
                    posterior,
                    eps,
                    sample,
                });
            }

            let (u_hat, f_hat) = self.generate_on(tape, &samples)?;
            let logits = self.classify_on(tape, &samples)?;
            let cls = tape.softmax_cross_entropy(logits, turn.label)?;
            let recon_u = tape.half_sq_dist(u_hat, u[t])?;
            let (f_hat, recon_f) = match f_t {
                Some(f_t) => (Some(f_hat), Some(tape.half_sq_dist(f_hat, f_t)?)),
                None => (None, None),
            };
            steps.push(StepVars {
                latents,
                p: p[t],
                f: f_t,
                u_hat,
                f_hat,
                logits,
                cls,
                recon_u,
                recon_f,
                kl,
            });
            prev = samples;
        }

        let cls = tape.sum(&steps.iter().map(|s| s.cls).collect::<Vec<_>>())?;
        let recon_u = tape.sum(&steps.iter().map(|s| s.recon_u).collect::<Vec<_>>())?;
        let recon_f = if f.is_some() {
            tape.sum(&steps.iter().filter_map(|s| s.recon_f).collect::<Vec<_>>())?
        } else {
            tape.constant(Tensor::scalar(0.0))
        };
        let n_chains = self.layout.chains.len();
        let mut kl = Vec::with_capacity(n_chains);
        for c in 0..n_chains {
            kl.push(tape.sum(&steps.iter().map(|s| s.kl[c]).collect::<Vec<_>>())?);
        }

        let kl_total = tape.sum(&kl)?;
        let a = tape.scale(cls, w.cls)?;
        let recon = tape.add(recon_u, recon_f)?;
        let r = tape.scale(recon, w.recon)?;
        let k = tape.scale(kl_total, w.kl)?;
        let total = tape.sum(&[a, r, k])?;

        Ok(Graph {
            steps,
            cls,
            recon_u,
            recon_f,
            kl,
            total,
        })
    }
}

fn values(tape: &Tape, v: Var) -> Vec<f64> {
    tape.value(v).data().to_vec()
}

fn scalar(tape: &Tape, v: Var) -> f64 {
    tape.value(v).data()[0]
}

fn gaussian(tape: &Tape, g: GaussianVar) -> GaussianDiag {
    GaussianDiag {
        mean: values(tape, g.mean),
        logvar: values(tape, g.logvar),
    }
}

impl Graph {
    pub fn losses(&self, tape: &Tape, layout: &ModelParams) -> LossBreakdown {
        let kinds = layout.latent_kinds();
        LossBreakdown {
            cls: scalar(tape, self.cls),
            recon_u: scalar(tape, self.recon_u),
            recon_f: scalar(tape, self.recon_f),
            kl: kinds
                .iter()
                .zip(&self.kl)
                .map(|(&k, &v)| (k, scalar(tape, v)))
                .collect(),
            total: scalar(tape, self.total),
            steps: self
                .steps
                .iter()
                .map(|s| StepLosses {
                    cls: scalar(tape, s.cls),
                    recon_u: scalar(tape, s.recon_u),
                    recon_f: s.recon_f.map_or(0.0, |v| scalar(tape, v)),
                    kl: s.kl.iter().map(|&v| scalar(tape, v)).collect(),
                })
                .collect(),
        }
    }

    pub fn trace(&self, tape: &Tape, layout: &ModelParams) -> DialogueTrace {
        let steps = self
            .steps
            .iter()
            .map(|s| StepTrace {
                latents: layout
                    .chains
                    .iter()
                    .zip(&s.latents)
                    .map(|(c, l)| LatentState {
                        kind: c.kind,
                        prior: gaussian(tape, l.prior),
                        posterior: gaussian(tape, l.posterior),
                        eps: l.eps.clone(),
                        sample: values(tape, l.sample),
                    })
                    .collect(),
                p: values(tape, s.p),
                f: s.f.map(|v| values(tape, v)),
                u_hat: values(tape, s.u_hat),
                f_hat: s.f_hat.map(|v| values(tape, v)),
                logits: values(tape, s.logits),
            })
            .collect();
        DialogueTrace {
            steps,
            losses: self.losses(tape, layout),
        }
    }
}
