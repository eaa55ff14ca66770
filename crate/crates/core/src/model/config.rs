use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where topic features `F_t` come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopicSource {
    /// No topic input; `F_t` is zero and not reconstructed.
    None,
    /// A learned LSTM over the dialogue's utterance features.
    Recurrent,
    /// Precomputed topic embeddings projected by two linear layers.
    External,
}

impl TopicSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TopicSource::None => "none",
            TopicSource::Recurrent => "recurrent",
            TopicSource::External => "external",
        }
    }
}

impl std::str::FromStr for TopicSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TopicSource::None),
            "recurrent" | "lstm" => Ok(TopicSource::Recurrent),
            "external" | "llm" => Ok(TopicSource::External),
            other => Err(Error::Config(format!("unknown topic source {other:?}"))),
        }
    }
}

/// Ablation switches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Switches {
    pub topic: TopicSource,
    pub attributes: bool,
    pub disentangle: bool,
}

impl Default for Switches {
    fn default() -> Self {
        Self {
            topic: TopicSource::External,
            attributes: true,
            disentangle: true,
        }
    }
}

impl std::fmt::Display for Switches {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "topic={} attributes={} disentangle={}",
            self.topic.as_str(),
            if self.attributes { "on" } else { "off" },
            if self.disentangle { "on" } else { "off" }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub u_dim: usize,
    pub f_raw_dim: usize,
    /// Projected topic dimension.
    pub f_dim: usize,
    pub topic_hidden: usize,
    /// Personal-attribute (LSTM hidden) dimension.
    pub p_dim: usize,
    pub s_dim: usize,
    pub v_dim: usize,
    pub z_dim: usize,
    pub dec_hidden: usize,
    pub cls_hidden: usize,
    pub n_classes: usize,
    pub switches: Switches,
    /// Use the z posterior unit exactly as printed: it reads `s_{t-1}` and
    /// shares the s unit's bias.
    pub literal_z_posterior: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            u_dim: 768,
            f_raw_dim: 768,
            f_dim: 64,
            topic_hidden: 256,
            p_dim: 64,
            s_dim: 64,
            v_dim: 64,
            z_dim: 64,
            dec_hidden: 128,
            cls_hidden: 64,
            n_classes: 6,
            switches: Switches::default(),
            literal_z_posterior: false,
        }
    }
}

impl ModelConfig {
    /// Tiny dimensions for gradient checks and unit tests.
    pub fn toy() -> Self {
        Self {
            u_dim: 6,
            f_raw_dim: 5,
            f_dim: 3,
            topic_hidden: 4,
            p_dim: 3,
            s_dim: 2,
            v_dim: 2,
            z_dim: 2,
            dec_hidden: 4,
            cls_hidden: 4,
            n_classes: 3,
            switches: Switches::default(),
            literal_z_posterior: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("u_dim", self.u_dim),
            ("f_raw_dim", self.f_raw_dim),
            ("f_dim", self.f_dim),
            ("topic_hidden", self.topic_hidden),
            ("p_dim", self.p_dim),
            ("s_dim", self.s_dim),
            ("v_dim", self.v_dim),
            ("z_dim", self.z_dim),
            ("dec_hidden", self.dec_hidden),
            ("cls_hidden", self.cls_hidden),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.n_classes < 2 {
            return Err(Error::Config("n_classes must be at least 2".into()));
        }
        if self.literal_z_posterior {
            if !self.switches.disentangle {
                return Err(Error::Config(
                    "literal_z_posterior requires disentangle = on".into(),
                ));
            }
            if self.s_dim != self.z_dim {
                return Err(Error::Config(
                    "literal_z_posterior shares the s bias, so s_dim must equal z_dim".into(),
                ));
            }
        }
        Ok(())
    }
}
