//! Parameter layout of the model, partitioned into disjoint groups.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{
    uniform_init, uniform_vec, GaussianHeadParams, GruCellParams, LstmCellParams, Mlp,
};
use crate::numerics::{ParamGroup, ParamId, ParamSet, Tensor};

use super::config::{ModelConfig, TopicSource};

/// Which latent a chain represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LatentKind {
    /// Emotion-related, drives the utterance.
    S,
    /// Emotion-related, drives the topic.
    V,
    /// Emotion-irrelevant.
    Z,
    /// Single undivided latent used when disentanglement is switched off.
    Joint,
}

impl LatentKind {
    pub fn name(self) -> &'static str {
        match self {
            LatentKind::S => "s",
            LatentKind::V => "v",
            LatentKind::Z => "z",
            LatentKind::Joint => "h",
        }
    }
}

/// Posterior unit: `W·[α_{t-1}, U_t, (F_t,) P_t] + b`.
#[derive(Clone, Debug)]
pub struct PosteriorUnit {
    pub w: ParamId,
    pub b: ParamId,
    /// Chain whose previous sample this unit reads.
    pub prev_chain: usize,
    pub reads_topic: bool,
}

/// Prior and posterior machinery for one latent.
#[derive(Clone, Debug)]
pub struct ChainParams {
    pub kind: LatentKind,
    pub dim: usize,
    /// Learned `α_0`.
    pub init: ParamId,
    pub prior_gru: GruCellParams,
    pub prior_head: GaussianHeadParams,
    pub posterior_unit: PosteriorUnit,
    pub posterior_head: GaussianHeadParams,
    /// Sample feeds the emotion classifier.
    pub feeds_label: bool,
    /// Sample feeds the topic decoder.
    pub feeds_topic: bool,
}

#[derive(Clone, Debug)]
pub struct AttributeParams {
    pub lstm: LstmCellParams,
    pub h0: ParamId,
    pub c0: ParamId,
}

#[derive(Clone, Debug)]
pub enum TopicParams {
    None,
    Recurrent(LstmCellParams),
    External(Mlp),
}

/// Layout of every learnable tensor. Each field owns one parameter group.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub chains: Vec<ChainParams>,
    pub decoder_u: Mlp,
    pub decoder_f: Mlp,
    classifier: Mlp,
    pub attributes: Option<AttributeParams>,
    pub topic: TopicParams,
}

impl ModelParams {
    pub fn build(cfg: &ModelConfig, params: &mut ParamSet, rng: &mut impl Rng) -> Self {
        let kinds: Vec<(LatentKind, usize)> = if cfg.switches.disentangle {
            vec![
                (LatentKind::S, cfg.s_dim),
                (LatentKind::V, cfg.v_dim),
                (LatentKind::Z, cfg.z_dim),
            ]
        } else {
            vec![(LatentKind::Joint, cfg.s_dim + cfg.v_dim + cfg.z_dim)]
        };

        let mut chains: Vec<ChainParams> = Vec::with_capacity(kinds.len());
        for (idx, &(kind, dim)) in kinds.iter().enumerate() {
            let n = kind.name();
            let init = params.add(
                format!("prior.{n}.init"),
                ParamGroup::Prior,
                Tensor::zeros(&[dim]),
            );
            let prior_gru = GruCellParams::new(
                params,
                &format!("prior.{n}.gru"),
                ParamGroup::Prior,
                dim,
                cfg.p_dim,
                rng,
            );
            let prior_head = GaussianHeadParams::new(
                params,
                &format!("prior.{n}.head"),
                ParamGroup::Prior,
                dim,
                dim,
                rng,
            );

            let literal_z = cfg.literal_z_posterior && kind == LatentKind::Z;
            let reads_topic = !matches!(kind, LatentKind::Z);
            let prev_chain = if literal_z { 0 } else { idx };
            let prev_dim = kinds[prev_chain].1;
            let in_dim = prev_dim + cfg.u_dim + if reads_topic { cfg.f_dim } else { 0 } + cfg.p_dim;
            let w = params.add(
                format!("posterior.{n}.unit.w"),
                ParamGroup::Posterior,
                uniform_init(rng, dim, in_dim, in_dim),
            );
            let b = if literal_z {
                chains[0].posterior_unit.b
            } else {
                params.add(
                    format!("posterior.{n}.unit.b"),
                    ParamGroup::Posterior,
                    uniform_vec(rng, dim, in_dim),
                )
            };
            let posterior_head = GaussianHeadParams::new(
                params,
                &format!("posterior.{n}.head"),
                ParamGroup::Posterior,
                dim,
                dim,
                rng,
            );

            chains.push(ChainParams {
                kind,
                dim,
                init,
                prior_gru,
                prior_head,
                posterior_unit: PosteriorUnit {
                    w,
                    b,
                    prev_chain,
                    reads_topic,
                },
                posterior_head,
                feeds_label: matches!(kind, LatentKind::S | LatentKind::V | LatentKind::Joint),
                feeds_topic: matches!(kind, LatentKind::V | LatentKind::Joint),
            });
        }

        let total: usize = chains.iter().map(|c| c.dim).sum();
        let topic_in: usize = chains.iter().filter(|c| c.feeds_topic).map(|c| c.dim).sum();
        let label_in: usize = chains.iter().filter(|c| c.feeds_label).map(|c| c.dim).sum();

        let decoder_u = Mlp::new(
            params,
            "generator.u",
            ParamGroup::Generator,
            (total, cfg.dec_hidden, cfg.u_dim),
            rng,
        );
        let decoder_f = Mlp::new(
            params,
            "generator.f",
            ParamGroup::Generator,
            (topic_in, cfg.dec_hidden, cfg.f_dim),
            rng,
        );
        let classifier = Mlp::new(
            params,
            "classifier",
            ParamGroup::Classifier,
            (label_in, cfg.cls_hidden, cfg.n_classes),
            rng,
        );

        let attributes = cfg.switches.attributes.then(|| AttributeParams {
            lstm: LstmCellParams::new(
                params,
                "attribute.lstm",
                ParamGroup::Attribute,
                cfg.p_dim,
                cfg.u_dim,
                rng,
            ),
            h0: params.add(
                "attribute.h0",
                ParamGroup::Attribute,
                Tensor::zeros(&[cfg.p_dim]),
            ),
            c0: params.add(
                "attribute.c0",
                ParamGroup::Attribute,
                Tensor::zeros(&[cfg.p_dim]),
            ),
        });

        let topic = match cfg.switches.topic {
            TopicSource::None => TopicParams::None,
            TopicSource::Recurrent => TopicParams::Recurrent(LstmCellParams::new(
                params,
                "topic.lstm",
                ParamGroup::Topic,
                cfg.f_dim,
                cfg.u_dim,
                rng,
            )),
            TopicSource::External => TopicParams::External(Mlp::new(
                params,
                "topic.proj",
                ParamGroup::Topic,
                (cfg.f_raw_dim, cfg.topic_hidden, cfg.f_dim),
                rng,
            )),
        };

        Self {
            chains,
            decoder_u,
            decoder_f,
            classifier,
            attributes,
            topic,
        }
    }

    /// `p_ψ(E | s, v)`.
    pub fn emotion_prior(&self) -> &Mlp {
        &self.classifier
    }

    /// `q_φ(E | s, v)`; the same parameters as [`Self::emotion_prior`], so
    /// their log-ratio term in the objective is identically zero.
    pub fn emotion_posterior(&self) -> &Mlp {
        &self.classifier
    }

    pub fn chain(&self, kind: LatentKind) -> Option<&ChainParams> {
        self.chains.iter().find(|c| c.kind == kind)
    }

    pub fn latent_kinds(&self) -> Vec<LatentKind> {
        self.chains.iter().map(|c| c.kind).collect()
    }
}
