//! Mini-batch training with checkpointing and resume.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{Checkpoint, RngState};
use crate::elbo::{LossBreakdown, LossWeights};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::model::{Dialogue, GaussianNoise, LatentKind, Model, ModelConfig};
use crate::numerics::{Adam, AdamState, ParamSet, Tensor};

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LOG_FILE: &str = "train_log.jsonl";

/// Configuration echo stored inside every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub run: RunConfig,
    pub model: ModelConfig,
}

impl CheckpointConfig {
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::CheckpointCorrupt(format!("config echo: {e}")))
    }
}

/// Rebuilds the model stored in a checkpoint.
pub fn model_from_checkpoint(ckpt: &Checkpoint) -> Result<(RunConfig, Model)> {
    let cc = CheckpointConfig::from_text(&ckpt.config)?;
    let mut model = Model::new(cc.model, 0)?;
    model.params.load_from(&ckpt.params)?;
    Ok((cc.run, model))
}

/// Per-dialogue means of the training loss terms over one epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub total: f64,
    pub cls: f64,
    pub recon_u: f64,
    pub recon_f: f64,
    pub kl: Vec<(LatentKind, f64)>,
    pub dialogues: usize,
}

impl LossSummary {
    fn add(&mut self, b: &LossBreakdown) {
        if self.kl.is_empty() {
            self.kl = b.kl.iter().map(|(k, _)| (*k, 0.0)).collect();
        }
        self.total += b.total;
        self.cls += b.cls;
        self.recon_u += b.recon_u;
        self.recon_f += b.recon_f;
        for (acc, (_, v)) in self.kl.iter_mut().zip(&b.kl) {
            acc.1 += v;
        }
        self.dialogues += 1;
    }

    fn finish(mut self) -> Self {
        let n = self.dialogues.max(1) as f64;
        self.total /= n;
        self.cls /= n;
        self.recon_u /= n;
        self.recon_f /= n;
        for kv in &mut self.kl {
            kv.1 /= n;
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValSummary {
    pub accuracy: f64,
    pub weighted_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: u64,
    pub train: LossSummary,
    pub val: Option<ValSummary>,
    pub best: bool,
}

pub struct Trainer {
    pub run: RunConfig,
    pub model: Model,
    optimizer: Adam,
    weights: LossWeights,
    adam: AdamState,
    rng: ChaCha8Rng,
    epoch: u64,
    best_val: f64,
    best_params: ParamSet,
}

impl Trainer {
    /// Fresh trainer; model initialisation and the shuffle/noise stream
    /// both derive from `run.seed`.
    pub fn new(run: RunConfig, model_config: ModelConfig) -> Result<Self> {
        run.validate()?;
        let model = Model::new(model_config, run.seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
        rng.set_stream(1);
        Ok(Self {
            optimizer: run.optimizer(),
            weights: run.loss_weights()?,
            adam: AdamState::new(&model.params),
            best_params: model.params.clone(),
            best_val: f64::NEG_INFINITY,
            epoch: 0,
            rng,
            model,
            run,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    /// `best` supplies the best-so-far parameters when available.
    pub fn resume(last: Checkpoint, best: Option<&Checkpoint>) -> Result<Self> {
        let (run, model) = model_from_checkpoint(&last)?;
        run.validate()?;
        let best_params = match best {
            Some(b) => {
                let mut p = model.params.clone();
                p.load_from(&b.params)?;
                p
            }
            None => model.params.clone(),
        };
        Ok(Self {
            optimizer: run.optimizer(),
            weights: run.loss_weights()?,
            adam: last.adam,
            rng: last.rng.restore(),
            epoch: last.epoch,
            best_val: last.best_val,
            best_params,
            model,
            run,
        })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn best_val(&self) -> f64 {
        self.best_val
    }

    pub fn best_params(&self) -> &ParamSet {
        &self.best_params
    }

    /// The model carrying the best validation parameters seen so far.
    pub fn best_model(&self) -> Result<Model> {
        let mut m = Model::new(self.model.config.clone(), 0)?;
        m.params.load_from(&self.best_params)?;
        Ok(m)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.checkpoint_with(self.model.params.clone())
    }

    fn checkpoint_with(&self, params: ParamSet) -> Checkpoint {
        let echo = CheckpointConfig {
            run: self.run.clone(),
            model: self.model.config.clone(),
        };
        Checkpoint {
            config: echo.to_text(),
            epoch: self.epoch,
            best_val: self.best_val,
            rng: RngState::capture(&self.rng),
            params,
            adam: self.adam.clone(),
        }
    }

    /// One pass over `train` in a freshly shuffled order. Gradients are
    /// averaged over each batch of dialogues before the optimizer step.
    pub fn train_epoch(&mut self, train: &[Dialogue]) -> Result<LossSummary> {
        if train.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut summary = LossSummary::default();
        for batch in order.chunks(self.run.batch_size) {
            let mut acc: Vec<Tensor> = self.model.params.zeros_like();
            for &i in batch {
                let mut noise = GaussianNoise(&mut self.rng);
                let (loss, grads) =
                    self.model
                        .loss_and_grad(&train[i], &mut noise, &self.weights)?;
                if !loss.total.is_finite() {
                    return Err(Error::NonFinite {
                        op: "training loss",
                    });
                }
                summary.add(&loss);
                for (a, g) in acc.iter_mut().zip(&grads) {
                    for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                        *x += y;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for a in &mut acc {
                for x in a.data_mut() {
                    *x *= scale;
                }
            }
            self.optimizer
                .step(&mut self.model.params, &acc, &mut self.adam)?;
        }
        Ok(summary.finish())
    }

    /// Trains one epoch, scores `val` and updates the best parameters by
    /// validation weighted F1. Without validation data the latest
    /// parameters always count as best.
    pub fn step_epoch(&mut self, train: &[Dialogue], val: &[Dialogue]) -> Result<EpochRecord> {
        let loss = self.train_epoch(train)?;
        self.epoch += 1;
        let val_summary = if val.is_empty() {
            None
        } else {
            let r = self.evaluate(val)?;
            Some(ValSummary {
                accuracy: r.metrics.accuracy,
                weighted_f1: r.metrics.weighted_f1,
            })
        };
        let score = val_summary
            .as_ref()
            .map_or(f64::INFINITY, |v| v.weighted_f1);
        let best = score > self.best_val || val_summary.is_none();
        if best {
            self.best_val = score;
            self.best_params = self.model.params.clone();
        }
        Ok(EpochRecord {
            epoch: self.epoch,
            train: loss,
            val: val_summary,
            best,
        })
    }

    pub fn evaluate(&self, dialogues: &[Dialogue]) -> Result<EvalReport> {
        evaluate(
            &self.model,
            dialogues,
            (self.run.time_batch, self.run.time_batch_max),
        )
    }

    /// Runs the remaining epochs. With an output directory every epoch
    /// appends to the log and rewrites `last.ckpt`, and `best.ckpt` follows
    /// each improvement.
    pub fn fit(
        &mut self,
        train: &[Dialogue],
        val: &[Dialogue],
        out: Option<&Path>,
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<Vec<EpochRecord>> {
        if let Some(dir) = out {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        }
        let mut records = Vec::new();
        while self.epoch < self.run.epochs {
            let rec = self.step_epoch(train, val)?;
            if let Some(dir) = out {
                self.persist(dir, &rec)?;
            }
            log::info!(
                "epoch {} loss {:.4} val {:?}",
                rec.epoch,
                rec.train.total,
                rec.val.as_ref().map(|v| v.weighted_f1)
            );
            on_epoch(&rec);
            records.push(rec);
        }
        Ok(records)
    }

    fn persist(&self, dir: &Path, rec: &EpochRecord) -> Result<()> {
        let log_path = dir.join(LOG_FILE);
        let mut log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(log_path.display().to_string(), e))?;
        let line = serde_json::to_string(rec).expect("record serialises");
        writeln!(log, "{line}").map_err(|e| Error::io(log_path.display().to_string(), e))?;
        self.checkpoint().save(&dir.join(LAST_CHECKPOINT))?;
        if rec.best {
            self.checkpoint_with(self.best_params.clone())
                .save(&dir.join(BEST_CHECKPOINT))?;
        }
        Ok(())
    }
}

/// Paths of the checkpoints inside a run directory.
pub fn checkpoint_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join(LAST_CHECKPOINT), dir.join(BEST_CHECKPOINT))
}
