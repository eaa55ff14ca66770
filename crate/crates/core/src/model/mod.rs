//! The sequential latent-variable model: personal attributes, topic
//! features, prior and posterior chains, decoders and the emotion classifier.

mod config;
mod dialogue;
mod forward;
mod noise;
mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{ModelConfig, Switches, TopicSource};
pub use dialogue::{Dialogue, Turn};
pub use forward::{DialogueTrace, LatentState, StepTrace};
pub use noise::{GaussianNoise, NoiseSource, ReplayNoise, ZeroNoise};
pub use params::{
    AttributeParams, ChainParams, LatentKind, ModelParams, PosteriorUnit, TopicParams,
};

use crate::elbo::{LossBreakdown, LossWeights};
use crate::error::{Error, Result};
use crate::numerics::{argmax, Bound, GaussianDiag, ParamSet, Tape, Tensor, Var};
use forward::Ctx;

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub layout: ModelParams,
    pub params: ParamSet,
}

impl Model {
    /// Freshly initialised model; deterministic in `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let layout = ModelParams::build(&config, &mut params, &mut rng);
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    fn ctx<'a>(&'a self, bound: &'a Bound) -> Ctx<'a> {
        Ctx {
            cfg: &self.config,
            layout: &self.layout,
            p: bound,
        }
    }

    /// Total latent dimension across chains.
    pub fn latent_dim(&self) -> usize {
        self.layout.chains.iter().map(|c| c.dim).sum()
    }

    pub fn forward(
        &self,
        d: &Dialogue,
        noise: &mut dyn NoiseSource,
        w: &LossWeights,
    ) -> Result<DialogueTrace> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        let graph = self.ctx(&bound).run(&mut tape, d, noise, w)?;
        Ok(graph.trace(&tape, &self.layout))
    }

    /// Loss for one dialogue and its gradient for every parameter.
    pub fn loss_and_grad(
        &self,
        d: &Dialogue,
        noise: &mut dyn NoiseSource,
        w: &LossWeights,
    ) -> Result<(LossBreakdown, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let graph = self.ctx(&bound).run(&mut tape, d, noise, w)?;
        let grads = tape.backward(graph.total)?;
        Ok((
            graph.losses(&tape, &self.layout),
            bound.collect(&self.params, &grads),
        ))
    }

    /// Loss evaluated under substitute parameter values with this layout.
    pub fn loss_with(
        &self,
        params: &ParamSet,
        d: &Dialogue,
        noise: &mut dyn NoiseSource,
        w: &LossWeights,
    ) -> Result<LossBreakdown> {
        if params.len() != self.params.len() {
            return Err(Error::dim(
                "loss_with",
                &[self.params.len()],
                &[params.len()],
            ));
        }
        let mut tape = Tape::new();
        let bound = params.bind_frozen(&mut tape);
        let graph = self.ctx(&bound).run(&mut tape, d, noise, w)?;
        Ok(graph.losses(&tape, &self.layout))
    }

    /// Zero-noise forward pass, i.e. every latent at its posterior mean.
    pub fn infer(&self, d: &Dialogue) -> Result<DialogueTrace> {
        self.forward(d, &mut ZeroNoise, &LossWeights::default())
    }

    pub fn predict(&self, d: &Dialogue) -> Result<Vec<usize>> {
        Ok(self
            .infer(d)?
            .steps
            .iter()
            .map(|s| argmax(&s.logits))
            .collect())
    }

    /// Per-turn posterior means, chains concatenated in layout order.
    pub fn posterior_means(&self, d: &Dialogue) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .infer(d)?
            .steps
            .iter()
            .map(|s| {
                s.latents
                    .iter()
                    .flat_map(|l| l.posterior.mean.iter().copied())
                    .collect()
            })
            .collect())
    }

    fn frozen<T>(&self, f: impl FnOnce(&Ctx, &mut Tape) -> Result<T>) -> Result<T> {
        let mut tape = Tape::new();
        let bound = self.params.bind_frozen(&mut tape);
        f(&self.ctx(&bound), &mut tape)
    }

    fn inputs(tape: &mut Tape, xs: &[Vec<f64>]) -> Vec<Var> {
        xs.iter()
            .map(|x| tape.constant(Tensor::vector(x.clone())))
            .collect()
    }

    /// `P_t` for every turn.
    pub fn personal_attributes(&self, d: &Dialogue) -> Result<Vec<Vec<f64>>> {
        d.validate(
            self.config.u_dim,
            self.config.f_raw_dim,
            self.config.n_classes,
        )?;
        self.frozen(|ctx, tape| {
            let u: Vec<Var> = d
                .turns
                .iter()
                .map(|t| tape.constant(Tensor::vector(t.u.clone())))
                .collect();
            let p = ctx.attributes_on(tape, d, &u)?;
            Ok(p.iter().map(|&v| tape.value(v).data().to_vec()).collect())
        })
    }

    /// Projects one raw topic vector; fails unless topics are external.
    pub fn topic_project(&self, f_raw: &[f64]) -> Result<Vec<f64>> {
        let TopicParams::External(proj) = &self.layout.topic else {
            return Err(Error::Config(
                "topic projection requires topic = external".into(),
            ));
        };
        if f_raw.len() != self.config.f_raw_dim {
            return Err(Error::dim(
                "topic_project",
                &[self.config.f_raw_dim],
                &[f_raw.len()],
            ));
        }
        self.frozen(|ctx, tape| {
            let x = tape.constant(Tensor::vector(f_raw.to_vec()));
            let y = proj.forward(tape, ctx.p, x)?;
            Ok(tape.value(y).data().to_vec())
        })
    }

    /// Learned initial latents, one vector per chain.
    pub fn initial_latents(&self) -> Vec<Vec<f64>> {
        self.layout
            .chains
            .iter()
            .map(|c| self.params.get(c.init).data().to_vec())
            .collect()
    }

    /// `p(α_t | α_{t-1}, P_t)` for every chain.
    pub fn prior_step(&self, prev: &[Vec<f64>], p_t: &[f64]) -> Result<Vec<GaussianDiag>> {
        self.check_chains("prior_step", prev)?;
        self.frozen(|ctx, tape| {
            let prev = Self::inputs(tape, prev);
            let p = tape.constant(Tensor::vector(p_t.to_vec()));
            let out = ctx.prior_on(tape, &prev, p)?;
            Ok(out.into_iter().map(|g| to_diag(tape, g)).collect())
        })
    }

    /// `q(α_t | α_{t-1}, U_t, F_t, P_t)` for every chain. `f_t` is the
    /// projected topic vector.
    pub fn posterior_step(
        &self,
        prev: &[Vec<f64>],
        u_t: &[f64],
        f_t: Option<&[f64]>,
        p_t: &[f64],
    ) -> Result<Vec<GaussianDiag>> {
        self.check_chains("posterior_step", prev)?;
        self.frozen(|ctx, tape| {
            let prev = Self::inputs(tape, prev);
            let u = tape.constant(Tensor::vector(u_t.to_vec()));
            let f = f_t.map(|f| tape.constant(Tensor::vector(f.to_vec())));
            let p = tape.constant(Tensor::vector(p_t.to_vec()));
            let out = ctx.posterior_on(tape, &prev, u, f, p)?;
            Ok(out.into_iter().map(|g| to_diag(tape, g)).collect())
        })
    }

    /// `(Û_t, F̂_t)` from one sample per chain.
    pub fn generate(&self, samples: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_chains("generate", samples)?;
        self.frozen(|ctx, tape| {
            let s = Self::inputs(tape, samples);
            let (u, f) = ctx.generate_on(tape, &s)?;
            Ok((tape.value(u).data().to_vec(), tape.value(f).data().to_vec()))
        })
    }

    /// Emotion logits from one sample per chain; only label chains are read.
    pub fn classify(&self, samples: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_chains("classify", samples)?;
        self.frozen(|ctx, tape| {
            let s = Self::inputs(tape, samples);
            let logits = ctx.classify_on(tape, &s)?;
            Ok(tape.value(logits).data().to_vec())
        })
    }

    fn check_chains(&self, op: &'static str, xs: &[Vec<f64>]) -> Result<()> {
        let want: Vec<usize> = self.layout.chains.iter().map(|c| c.dim).collect();
        let got: Vec<usize> = xs.iter().map(|x| x.len()).collect();
        if want != got {
            return Err(Error::dim(op, &want, &got));
        }
        Ok(())
    }
}

fn to_diag(tape: &Tape, g: crate::numerics::GaussianVar) -> GaussianDiag {
    GaussianDiag {
        mean: tape.value(g.mean).data().to_vec(),
        logvar: tape.value(g.logvar).data().to_vec(),
    }
}
