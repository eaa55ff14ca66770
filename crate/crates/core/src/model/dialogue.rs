use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One utterance with its features and emotion label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub u: Vec<f64>,
    pub f_raw: Vec<f64>,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Checks feature dimensions and labels.
    pub fn validate(&self, u_dim: usize, f_raw_dim: usize, n_classes: usize) -> Result<()> {
        let bad = |msg: String| Error::InvalidDialogue {
            id: self.id.clone(),
            msg,
        };
        if self.turns.is_empty() {
            return Err(bad("no turns".into()));
        }
        for (t, turn) in self.turns.iter().enumerate() {
            if turn.u.len() != u_dim {
                return Err(bad(format!(
                    "turn {t}: u has length {}, expected {u_dim}",
                    turn.u.len()
                )));
            }
            if turn.f_raw.len() != f_raw_dim {
                return Err(bad(format!(
                    "turn {t}: f_raw has length {}, expected {f_raw_dim}",
                    turn.f_raw.len()
                )));
            }
            if turn.label >= n_classes {
                return Err(bad(format!(
                    "turn {t}: label {} outside {n_classes} classes",
                    turn.label
                )));
            }
            if turn.u.iter().chain(&turn.f_raw).any(|x| !x.is_finite()) {
                return Err(bad(format!("turn {t}: non-finite feature")));
            }
        }
        Ok(())
    }
}
