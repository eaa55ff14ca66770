//! Metrics, evaluation protocols, ablations and latent export.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{DatasetManifest, Splits};
use crate::error::{Error, Result};
use crate::model::{Dialogue, Model, Switches, TopicSource};
use crate::train::Trainer;

/// Rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::Config("confusion matrix must be square".into()));
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.n_classes();
        if truth >= k || predicted >= k {
            return Err(Error::LabelOutOfRange {
                label: truth.max(predicted),
                n_classes: k,
            });
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: Vec<f64>,
    pub recall: Vec<f64>,
    pub weighted_f1: f64,
    pub support: Vec<u64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, per-class F1 and recall, and support-weighted F1. Undefined
/// precision or recall makes that class's F1 zero.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let k = cm.n_classes();
    let diag: u64 = (0..k).map(|i| cm.counts[i][i]).sum();
    let mut f1 = Vec::with_capacity(k);
    let mut recall = Vec::with_capacity(k);
    let mut support = Vec::with_capacity(k);
    let mut weighted = 0.0;
    for c in 0..k {
        let tp = cm.counts[c][c];
        let predicted: u64 = (0..k).map(|r| cm.counts[r][c]).sum();
        let sup = cm.support(c);
        let p = ratio(tp, predicted);
        let r = ratio(tp, sup);
        let f = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        weighted += sup as f64 * f;
        f1.push(f);
        recall.push(r);
        support.push(sup);
    }
    Ok(Metrics {
        accuracy: diag as f64 / total as f64,
        f1,
        recall,
        weighted_f1: weighted / total as f64,
        support,
    })
}

/// Window of positions `[start, end)` (0-based) and its accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeBatchPoint {
    pub start: usize,
    pub end: usize,
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

/// Accuracy per consecutive window of `batch_size` turn positions within
/// the first `max_t` turns of every dialogue.
pub fn time_batch_accuracy(
    predictions: &[Vec<usize>],
    dialogues: &[Dialogue],
    batch_size: usize,
    max_t: usize,
) -> Result<Vec<TimeBatchPoint>> {
    if batch_size == 0 {
        return Err(Error::Config("time batch size must be at least 1".into()));
    }
    if predictions.len() != dialogues.len() {
        return Err(Error::dim(
            "time_batch_accuracy",
            &[dialogues.len()],
            &[predictions.len()],
        ));
    }
    let n_points = max_t.div_ceil(batch_size);
    let mut points: Vec<TimeBatchPoint> = (0..n_points)
        .map(|i| TimeBatchPoint {
            start: i * batch_size,
            end: ((i + 1) * batch_size).min(max_t),
            correct: 0,
            total: 0,
            accuracy: 0.0,
        })
        .collect();
    for (pred, d) in predictions.iter().zip(dialogues) {
        if pred.len() != d.len() {
            return Err(Error::dim("time_batch_accuracy", &[d.len()], &[pred.len()]));
        }
        for (t, (&p, turn)) in pred.iter().zip(&d.turns).enumerate().take(max_t) {
            let pt = &mut points[t / batch_size];
            pt.total += 1;
            pt.correct += u64::from(p == turn.label);
        }
    }
    for pt in &mut points {
        pt.accuracy = ratio(pt.correct, pt.total);
    }
    Ok(points)
}

/// Window settings for the two benchmark corpora.
pub const IEMOCAP_TIME_BATCH: (usize, usize) = (5, 40);
pub const MELD_TIME_BATCH: (usize, usize) = (1, 8);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub time_batches: Vec<TimeBatchPoint>,
}

pub fn predict_all(model: &Model, dialogues: &[Dialogue]) -> Result<Vec<Vec<usize>>> {
    dialogues.iter().map(|d| model.predict(d)).collect()
}

pub fn confusion(
    predictions: &[Vec<usize>],
    dialogues: &[Dialogue],
    n_classes: usize,
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(n_classes);
    for (pred, d) in predictions.iter().zip(dialogues) {
        for (&p, turn) in pred.iter().zip(&d.turns) {
            cm.add(turn.label, p)?;
        }
    }
    Ok(cm)
}

/// Zero-noise predictions scored against the labels of `dialogues`.
pub fn evaluate(
    model: &Model,
    dialogues: &[Dialogue],
    time_batch: (usize, usize),
) -> Result<EvalReport> {
    let predictions = predict_all(model, dialogues)?;
    let cm = confusion(&predictions, dialogues, model.config.n_classes)?;
    Ok(EvalReport {
        metrics: metrics(&cm)?,
        confusion: cm,
        time_batches: time_batch_accuracy(&predictions, dialogues, time_batch.0, time_batch.1)?,
    })
}

/// Tab-separated posterior means, one row per utterance, with a header
/// naming each latent coordinate and a final `label` column.
pub fn latents_table(model: &Model, dialogues: &[Dialogue]) -> Result<String> {
    let mut out = String::new();
    let header: Vec<String> = model
        .layout
        .chains
        .iter()
        .flat_map(|c| (0..c.dim).map(move |i| format!("{}{i}", c.kind.name())))
        .chain(std::iter::once("label".to_string()))
        .collect();
    out.push_str(&header.join("\t"));
    out.push('\n');
    for d in dialogues {
        for (row, turn) in model.posterior_means(d)?.iter().zip(&d.turns) {
            for x in row {
                write!(out, "{x}\t").expect("write to string");
            }
            writeln!(out, "{}", turn.label).expect("write to string");
        }
    }
    Ok(out)
}

pub fn export_latents(model: &Model, dialogues: &[Dialogue], path: &Path) -> Result<()> {
    let table = latents_table(model, dialogues)?;
    std::fs::write(path, table).map_err(|e| Error::io(path.display().to_string(), e))
}

/// One configuration of the component ablation grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: &'static str,
    pub switches: Switches,
}

/// The six component combinations compared in the ablation study, in order.
pub const ABLATION_GRID: [AblationRow; 6] = [
    AblationRow {
        label: "external-topic, attributes, no disentanglement",
        switches: Switches {
            topic: TopicSource::External,
            attributes: true,
            disentangle: false,
        },
    },
    AblationRow {
        label: "disentanglement only",
        switches: Switches {
            topic: TopicSource::None,
            attributes: false,
            disentangle: true,
        },
    },
    AblationRow {
        label: "recurrent-topic, disentanglement",
        switches: Switches {
            topic: TopicSource::Recurrent,
            attributes: false,
            disentangle: true,
        },
    },
    AblationRow {
        label: "attributes, disentanglement",
        switches: Switches {
            topic: TopicSource::None,
            attributes: true,
            disentangle: true,
        },
    },
    AblationRow {
        label: "recurrent-topic, attributes, disentanglement",
        switches: Switches {
            topic: TopicSource::Recurrent,
            attributes: true,
            disentangle: true,
        },
    },
    AblationRow {
        label: "full model",
        switches: Switches {
            topic: TopicSource::External,
            attributes: true,
            disentangle: true,
        },
    },
];

/// Outcome of one training run under an ablation setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub label: String,
    pub switches: Switches,
    pub seed: u64,
    pub epochs: u64,
    pub best_val: f64,
    pub test: EvalReport,
}

/// Trains from scratch under `switches` and scores the best-validation
/// parameters on the test split.
pub fn ablation_run(
    label: &str,
    switches: Switches,
    run: &RunConfig,
    manifest: &DatasetManifest,
    splits: &Splits,
) -> Result<AblationResult> {
    let mut run = run.clone();
    run.set_switches(switches);
    let mut trainer = Trainer::new(run.clone(), run.model_config_for(manifest))?;
    trainer.fit(&splits.train, &splits.val, None, |_| {})?;
    let best = trainer.best_model()?;
    Ok(AblationResult {
        label: label.to_string(),
        switches,
        seed: run.seed,
        epochs: run.epochs,
        best_val: trainer.best_val(),
        test: evaluate(&best, &splits.test, (run.time_batch, run.time_batch_max))?,
    })
}

/// Every row of [`ABLATION_GRID`] for each seed, rows outermost.
pub fn ablation_grid(
    run: &RunConfig,
    manifest: &DatasetManifest,
    splits: &Splits,
    seeds: &[u64],
) -> Result<Vec<AblationResult>> {
    let mut out = Vec::new();
    for row in &ABLATION_GRID {
        for &seed in seeds {
            let cfg = RunConfig {
                seed,
                ..run.clone()
            };
            out.push(ablation_run(
                row.label,
                row.switches,
                &cfg,
                manifest,
                splits,
            )?);
        }
    }
    Ok(out)
}

/// Tab-separated summary, one line per result.
pub fn ablation_table(results: &[AblationResult]) -> String {
    let mut out =
        String::from("label\ttopic\tattributes\tdisentangle\tseed\taccuracy\tweighted_f1\n");
    for r in results {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}",
            r.label,
            r.switches.topic.as_str(),
            r.switches.attributes,
            r.switches.disentangle,
            r.seed,
            r.test.metrics.accuracy,
            r.test.metrics.weighted_f1
        )
        .expect("write to string");
    }
    out
}

/// Median of a non-empty slice; the mean of the middle pair for even length.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
