//! Linear-Gaussian causal generator with known latents, and the probes used
//! to measure how much label information a set of latents carries.
//!
//! Per dialogue, each speaker has a persistent attribute vector; per turn
//!
//! ```text
//! P_t = √(1−κ²)·a_speaker + κ·ξ_t
//! s_t = A_s s_{t−1} + B_s P_t + ε      v_t = A_v v_{t−1} + B_v P_t + ε
//! z_t = A_z z_{t−1} + B_z P_t + ε
//! U_t = C [s; v; z] + ε                F_t = Q (D v_t + ε)
//! E_t = argmax G [s; v]
//! ```
//!
//! `B_s`, `B_v` read the first half of `P` and `B_z` the second, so `z` is
//! independent of `s`, `v` and the labels. `Q` is a fixed isometry into the
//! raw topic dimension.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    load_latents, write_jsonl, Dataset, DatasetManifest, LatentRecord, SplitCounts, LATENTS_FILE,
};
use crate::error::{Error, Result};
use crate::model::{Dialogue, LatentKind, Model, ModelConfig, Turn};
use crate::numerics::{argmax, Adam, AdamState, ParamGroup, ParamSet, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub s_dim: usize,
    pub v_dim: usize,
    pub z_dim: usize,
    pub p_dim: usize,
    pub u_dim: usize,
    pub f_dim: usize,
    pub f_raw_dim: usize,
    pub n_classes: usize,
    /// Standard deviation of the latent transition noise.
    pub latent_noise: f64,
    /// Standard deviation of the noise on emitted `U` and `F`.
    pub emission_noise: f64,
    /// Spectral norm each transition matrix is rescaled to.
    pub transition_norm: f64,
    /// Per-turn innovation weight of the attribute process.
    pub attr_innovation: f64,
    /// Gain applied to the attribute input maps.
    pub attr_gain: f64,
    /// Gain applied to the utterance columns of `z`.
    pub z_gain: f64,
    pub speakers: usize,
    pub turns: usize,
    pub train_dialogues: usize,
    pub test_dialogues: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            s_dim: 8,
            v_dim: 8,
            z_dim: 8,
            p_dim: 8,
            u_dim: 16,
            f_dim: 8,
            f_raw_dim: 32,
            n_classes: 4,
            latent_noise: 0.1,
            emission_noise: 0.7,
            transition_norm: 0.3,
            attr_innovation: 0.2,
            attr_gain: 1.0,
            z_gain: 1.0,
            speakers: 2,
            turns: 12,
            train_dialogues: 200,
            test_dialogues: 50,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// A generator whose observed dimensions and class count match `model`,
    /// with the smallest latent sizes that keep the emission maps valid.
    pub fn matching(model: &ModelConfig) -> Self {
        let k = model
            .u_dim
            .div_ceil(3)
            .max(model.n_classes.div_ceil(2))
            .max(1);
        Self {
            s_dim: k,
            v_dim: k,
            z_dim: k,
            p_dim: k,
            u_dim: model.u_dim,
            f_dim: k.min(model.f_raw_dim),
            f_raw_dim: model.f_raw_dim,
            n_classes: model.n_classes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("s_dim", self.s_dim),
            ("v_dim", self.v_dim),
            ("z_dim", self.z_dim),
            ("u_dim", self.u_dim),
            ("f_dim", self.f_dim),
            ("speakers", self.speakers),
            ("turns", self.turns),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::Config(format!(
                    "synthetic {name} must be at least 1"
                )));
            }
        }
        if self.p_dim < 2 {
            return Err(Error::Config("synthetic p_dim must be at least 2".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Config(
                "synthetic n_classes must be at least 2".into(),
            ));
        }
        if self.f_raw_dim < self.f_dim {
            return Err(Error::Config(
                "synthetic f_raw_dim must be at least f_dim".into(),
            ));
        }
        if self.u_dim > self.s_dim + self.v_dim + self.z_dim {
            return Err(Error::Config(
                "synthetic u_dim cannot exceed the total latent dimension".into(),
            ));
        }
        if self.n_classes > self.s_dim + self.v_dim || self.f_dim > self.v_dim {
            return Err(Error::Config(
                "synthetic emission maps must have full row rank".into(),
            ));
        }
        if !(0.0..0.95).contains(&self.transition_norm) {
            return Err(Error::Config(
                "synthetic transition_norm must lie in [0, 0.95)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.attr_innovation)
            || !(self.latent_noise >= 0.0 && self.emission_noise >= 0.0)
        {
            return Err(Error::Config(
                "synthetic noise settings out of range".into(),
            ));
        }
        Ok(())
    }
}

/// A sampled structural model.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub config: SyntheticConfig,
    /// Transition maps for s, v, z.
    pub a: [DMatrix<f64>; 3],
    /// Attribute input maps for s, v, z (each `dim × p_dim`).
    pub b: [DMatrix<f64>; 3],
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// Isometric embedding of `F` into the raw topic dimension.
    pub q: DMatrix<f64>,
}

/// Ground-truth latents of one turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueLatents {
    pub p: Vec<f64>,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledLatents {
    pub dialogue: Dialogue,
    pub latents: Vec<TrueLatents>,
}

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gauss_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| gauss(rng)) / (cols as f64).sqrt()
}

fn gauss_vector(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * gauss(rng))
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Numerical rank from singular values.
pub fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let tol = sv.max() * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    sv.iter().filter(|&&x| x > tol).count()
}

fn full_row_rank(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    loop {
        let m = gauss_matrix(rng, rows, cols);
        if rank(&m) == rows {
            return m;
        }
    }
}

/// Draws a structural model; deterministic in `cfg.seed`.
pub fn sample_spec(cfg: &SyntheticConfig) -> Result<SyntheticSpec> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = [cfg.s_dim, cfg.v_dim, cfg.z_dim];
    let a = dims.map(|d| {
        let m = gauss_matrix(&mut rng, d, d);
        let norm = spectral_norm(&m);
        m * (cfg.transition_norm / norm)
    });
    let half = cfg.p_dim / 2;
    let b = [0, 1, 2].map(|i| {
        let (lo, width) = if i < 2 {
            (0, half)
        } else {
            (half, cfg.p_dim - half)
        };
        let block = gauss_matrix(&mut rng, dims[i], width) * cfg.attr_gain;
        let mut m = DMatrix::zeros(dims[i], cfg.p_dim);
        m.view_mut((0, lo), (dims[i], width)).copy_from(&block);
        m
    });
    let total = cfg.s_dim + cfg.v_dim + cfg.z_dim;
    let mut c = full_row_rank(&mut rng, cfg.u_dim, total);
    c.columns_mut(cfg.s_dim + cfg.v_dim, cfg.z_dim)
        .scale_mut(cfg.z_gain);
    let d = full_row_rank(&mut rng, cfg.f_dim, cfg.v_dim);
    let mut g = full_row_rank(&mut rng, cfg.n_classes, cfg.s_dim + cfg.v_dim);
    for mut row in g.row_iter_mut() {
        let n = row.norm();
        row /= n;
    }
    let q = gauss_matrix(&mut rng, cfg.f_raw_dim, cfg.f_dim)
        .qr()
        .q()
        .columns(0, cfg.f_dim)
        .into_owned();
    Ok(SyntheticSpec {
        config: cfg.clone(),
        a,
        b,
        c,
        d,
        g,
        q,
    })
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

impl SyntheticSpec {
    /// `argmax G [s; v]`.
    pub fn label(&self, s: &[f64], v: &[f64]) -> usize {
        let sv = DVector::from_iterator(s.len() + v.len(), s.iter().chain(v).copied());
        let logits = &self.g * sv;
        argmax(logits.as_slice())
    }

    /// One latent transition. Reads only the previous state and the
    /// current attributes and noise.
    pub fn step(&self, prev: &TrueLatents, p: &[f64], rng: &mut impl Rng) -> TrueLatents {
        let cfg = &self.config;
        let pv = DVector::from_column_slice(p);
        let mut next = |i: usize, prev: &[f64]| {
            let x = &self.a[i] * DVector::from_column_slice(prev) + &self.b[i] * &pv;
            to_vec(&(x + gauss_vector(rng, prev.len(), cfg.latent_noise)))
        };
        let s = next(0, &prev.s);
        let v = next(1, &prev.v);
        let z = next(2, &prev.z);
        TrueLatents {
            p: p.to_vec(),
            s,
            v,
            z,
        }
    }

    /// Observed features for a latent state.
    pub fn emit(&self, lat: &TrueLatents, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
        let cfg = &self.config;
        let all = DVector::from_iterator(
            cfg.s_dim + cfg.v_dim + cfg.z_dim,
            lat.s.iter().chain(&lat.v).chain(&lat.z).copied(),
        );
        let u = &self.c * all + gauss_vector(rng, cfg.u_dim, cfg.emission_noise);
        let f = &self.d * DVector::from_column_slice(&lat.v)
            + gauss_vector(rng, cfg.f_dim, cfg.emission_noise);
        (to_vec(&u), to_vec(&(&self.q * f)))
    }

    pub fn generate_dialogue(
        &self,
        id: String,
        turns: usize,
        rng: &mut impl Rng,
    ) -> Result<LabeledLatents> {
        if turns == 0 {
            return Err(Error::Config("dialogue needs at least one turn".into()));
        }
        let cfg = &self.config;
        let keep = (1.0 - cfg.attr_innovation * cfg.attr_innovation).sqrt();
        let attrs: Vec<DVector<f64>> = (0..cfg.speakers)
            .map(|_| gauss_vector(rng, cfg.p_dim, 1.0))
            .collect();
        let mut prev = TrueLatents {
            p: vec![0.0; cfg.p_dim],
            s: vec![0.0; cfg.s_dim],
            v: vec![0.0; cfg.v_dim],
            z: vec![0.0; cfg.z_dim],
        };
        let mut out = LabeledLatents {
            dialogue: Dialogue {
                id,
                turns: Vec::with_capacity(turns),
            },
            latents: Vec::with_capacity(turns),
        };
        for _ in 0..turns {
            let who = rng.random_range(0..cfg.speakers);
            let p = &attrs[who] * keep + gauss_vector(rng, cfg.p_dim, cfg.attr_innovation);
            let lat = self.step(&prev, p.as_slice(), rng);
            let (u, f_raw) = self.emit(&lat, rng);
            out.dialogue.turns.push(Turn {
                speaker: format!("spk{who}"),
                u,
                f_raw,
                label: self.label(&lat.s, &lat.v),
                text: None,
            });
            out.latents.push(lat.clone());
            prev = lat;
        }
        Ok(out)
    }

    /// `count` dialogues; dialogue `i` uses its own RNG stream, so the
    /// corpus is reproducible and each dialogue independent of the others.
    pub fn generate_corpus(
        &self,
        prefix: &str,
        count: usize,
        stream_offset: u64,
    ) -> Result<Vec<LabeledLatents>> {
        (0..count)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
                rng.set_stream(1 + stream_offset + i as u64);
                self.generate_dialogue(format!("{prefix}{i:04}"), self.config.turns, &mut rng)
            })
            .collect()
    }

    /// Train and test corpora of the configured sizes.
    pub fn generate_splits(&self) -> Result<(Vec<LabeledLatents>, Vec<LabeledLatents>)> {
        let train = self.generate_corpus("train-", self.config.train_dialogues, 0)?;
        let test = self.generate_corpus(
            "test-",
            self.config.test_dialogues,
            self.config.train_dialogues as u64,
        )?;
        Ok((train, test))
    }
}

/// A generated corpus as a dataset directory plus its true latents.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    pub latents: Vec<LatentRecord>,
}

impl SyntheticSpec {
    pub fn manifest(&self) -> DatasetManifest {
        let cfg = &self.config;
        DatasetManifest {
            name: "synthetic".into(),
            u_dim: cfg.u_dim,
            f_raw_dim: cfg.f_raw_dim,
            n_classes: cfg.n_classes,
            class_names: (0..cfg.n_classes).map(|c| format!("class{c}")).collect(),
            splits: SplitCounts {
                train_val: cfg.train_dialogues,
                test: cfg.test_dialogues,
            },
            utterances: Some(SplitCounts {
                train_val: cfg.train_dialogues * cfg.turns,
                test: cfg.test_dialogues * cfg.turns,
            }),
        }
    }

    pub fn corpus(&self) -> Result<SyntheticCorpus> {
        let (train, test) = self.generate_splits()?;
        let items: Vec<LabeledLatents> = train.into_iter().chain(test).collect();
        Ok(SyntheticCorpus {
            dataset: Dataset {
                manifest: self.manifest(),
                dialogues: items.iter().map(|l| l.dialogue.clone()).collect(),
            },
            latents: items
                .into_iter()
                .map(|l| LatentRecord {
                    id: l.dialogue.id,
                    latents: l.latents,
                })
                .collect(),
        })
    }
}

impl SyntheticCorpus {
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.dataset.save(dir)?;
        write_jsonl(&dir.join(LATENTS_FILE), &self.latents)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let dataset = Dataset::load(dir)?;
        let latents = load_latents(&dir.join(LATENTS_FILE))?;
        let corpus = Self { dataset, latents };
        corpus.labeled()?;
        Ok(corpus)
    }

    /// Dialogues paired with their latents; ids and lengths must agree.
    pub fn labeled(&self) -> Result<Vec<LabeledLatents>> {
        if self.latents.len() != self.dataset.dialogues.len() {
            return Err(Error::Config(format!(
                "{} latent records for {} dialogues",
                self.latents.len(),
                self.dataset.dialogues.len()
            )));
        }
        self.dataset
            .dialogues
            .iter()
            .zip(&self.latents)
            .map(|(d, r)| {
                if r.id != d.id || r.latents.len() != d.len() {
                    return Err(Error::InvalidDialogue {
                        id: d.id.clone(),
                        msg: format!("latent record {} does not match", r.id),
                    });
                }
                Ok(LabeledLatents {
                    dialogue: d.clone(),
                    latents: r.latents.clone(),
                })
            })
            .collect()
    }

    /// The held-out part, with latents.
    pub fn test_labeled(&self) -> Result<Vec<LabeledLatents>> {
        let mut all = self.labeled()?;
        Ok(all.split_off(self.dataset.manifest.splits.train_val))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    /// Fraction of rows used to fit the probe.
    pub train_fraction: f64,
    pub iterations: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            iterations: 1000,
            lr: 0.05,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub accuracy: f64,
    /// Held-out accuracy of always predicting the fitting set's majority class.
    pub chance: f64,
    pub n_fit: usize,
    pub n_eval: usize,
}

/// Fits a softmax regression on a seeded random split and reports held-out
/// accuracy.
pub fn probe(
    features: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    if features.len() != labels.len() {
        return Err(Error::dim("probe", &[features.len()], &[labels.len()]));
    }
    let mut idx: Vec<usize> = (0..features.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let cut = ((features.len() as f64) * cfg.train_fraction).round() as usize;
    let (fit, eval) = idx.split_at(cut.min(features.len()));
    let pick = |ix: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            ix.iter().map(|&i| features[i].clone()).collect(),
            ix.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (fx, fy) = pick(fit);
    let (ex, ey) = pick(eval);
    probe_split(&fx, &fy, &ex, &ey, n_classes, cfg)
}

/// Fits on one set and evaluates on another.
pub fn probe_split(
    fit_x: &[Vec<f64>],
    fit_y: &[usize],
    eval_x: &[Vec<f64>],
    eval_y: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    if fit_x.is_empty() || eval_x.is_empty() {
        return Err(Error::Empty("probe"));
    }
    if let Some(&bad) = fit_y.iter().chain(eval_y).find(|&&y| y >= n_classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            n_classes,
        });
    }
    let mut counts = vec![0usize; n_classes];
    for &y in fit_y {
        counts[y] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Config(
            "probe needs at least two classes in the fitting set".into(),
        ));
    }
    let dim = fit_x[0].len();
    if fit_x.iter().chain(eval_x).any(|x| x.len() != dim) {
        return Err(Error::dim("probe", &[dim], &[]));
    }

    // Standardise with fitting-set statistics.
    let n = fit_x.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|j| fit_x.iter().map(|x| x[j]).sum::<f64>() / n)
        .collect();
    let sd: Vec<f64> = (0..dim)
        .map(|j| {
            (fit_x.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n)
                .sqrt()
                .max(1e-8)
        })
        .collect();
    let standardise = |xs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        xs.iter()
            .map(|x| (0..dim).map(|j| (x[j] - mean[j]) / sd[j]).collect())
            .collect()
    };
    let fx = standardise(fit_x);
    let ex = standardise(eval_x);

    let mut params = ParamSet::new();
    let w = params.add(
        "probe.w",
        ParamGroup::Other,
        Tensor::zeros(&[n_classes, dim]),
    );
    let b = params.add("probe.b", ParamGroup::Other, Tensor::zeros(&[n_classes]));
    let adam = Adam {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..Adam::default()
    };
    let mut state = AdamState::new(&params);
    let logits = |params: &ParamSet, x: &[f64]| -> Vec<f64> {
        let (wd, bd) = (params.get(w).data(), params.get(b).data());
        (0..n_classes)
            .map(|k| bd[k] + (0..dim).map(|j| wd[k * dim + j] * x[j]).sum::<f64>())
            .collect()
    };
    for _ in 0..cfg.iterations {
        let mut gw = vec![0.0; n_classes * dim];
        let mut gb = vec![0.0; n_classes];
        for (x, &y) in fx.iter().zip(fit_y) {
            let p = crate::numerics::softmax(&logits(&params, x));
            for k in 0..n_classes {
                let d = (p[k] - if k == y { 1.0 } else { 0.0 }) / n;
                gb[k] += d;
                for j in 0..dim {
                    gw[k * dim + j] += d * x[j];
                }
            }
        }
        let grads = [Tensor::matrix(n_classes, dim, gw)?, Tensor::vector(gb)];
        adam.step(&mut params, &grads, &mut state)?;
    }

    let correct = ex
        .iter()
        .zip(eval_y)
        .filter(|(x, &y)| argmax(&logits(&params, x)) == y)
        .count();
    let majority = argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
    let chance = eval_y.iter().filter(|&&y| y == majority).count() as f64 / eval_y.len() as f64;
    Ok(ProbeResult {
        accuracy: correct as f64 / eval_y.len() as f64,
        chance,
        n_fit: fit_x.len(),
        n_eval: eval_x.len(),
    })
}

/// The six latent subsets compared in the disentanglement report.
pub const PROBE_SUBSETS: [&[LatentKind]; 6] = [
    &[LatentKind::Z],
    &[LatentKind::V],
    &[LatentKind::S],
    &[LatentKind::S, LatentKind::Z],
    &[LatentKind::V, LatentKind::Z],
    &[LatentKind::S, LatentKind::V],
];

pub fn subset_name(kinds: &[LatentKind]) -> String {
    let names: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
    format!("{{{}}}", names.join(","))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub subset: String,
    pub kinds: Vec<LatentKind>,
    pub accuracy: f64,
    pub chance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisentanglementReport {
    pub learned: Vec<ProbeRow>,
    pub ground_truth: Vec<ProbeRow>,
}

impl DisentanglementReport {
    pub fn learned_row(&self, kinds: &[LatentKind]) -> Option<&ProbeRow> {
        self.learned.iter().find(|r| r.kinds == kinds)
    }

    /// `{s,v}` strictly above every subset that contains `z`.
    pub fn relevant_beats_irrelevant(&self) -> bool {
        let Some(sv) = self.learned_row(&[LatentKind::S, LatentKind::V]) else {
            return false;
        };
        self.learned
            .iter()
            .filter(|r| r.kinds.contains(&LatentKind::Z))
            .all(|r| sv.accuracy > r.accuracy)
    }
}

fn select(columns: &[(LatentKind, Vec<Vec<f64>>)], kinds: &[LatentKind], row: usize) -> Vec<f64> {
    kinds
        .iter()
        .flat_map(|k| {
            columns
                .iter()
                .find(|(c, _)| c == k)
                .map(|(_, rows)| rows[row].clone())
                .unwrap_or_default()
        })
        .collect()
}

fn probe_rows(
    columns: &[(LatentKind, Vec<Vec<f64>>)],
    labels: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<Vec<ProbeRow>> {
    PROBE_SUBSETS
        .iter()
        .map(|kinds| {
            let xs: Vec<Vec<f64>> = (0..labels.len())
                .map(|i| select(columns, kinds, i))
                .collect();
            let r = probe(&xs, labels, n_classes, cfg)?;
            Ok(ProbeRow {
                subset: subset_name(kinds),
                kinds: kinds.to_vec(),
                accuracy: r.accuracy,
                chance: r.chance,
            })
        })
        .collect()
}

/// Probe accuracies for the learned posterior means and for the true
/// latents, over every turn of `data`.
pub fn disentanglement_report(
    model: &Model,
    data: &[LabeledLatents],
    cfg: &ProbeConfig,
) -> Result<DisentanglementReport> {
    if model.layout.chain(LatentKind::S).is_none() {
        return Err(Error::Config(
            "disentanglement report needs separate s, v, z latents".into(),
        ));
    }
    let kinds = model.layout.latent_kinds();
    let mut learned: Vec<(LatentKind, Vec<Vec<f64>>)> =
        kinds.iter().map(|&k| (k, Vec::new())).collect();
    let mut truth: Vec<(LatentKind, Vec<Vec<f64>>)> = [LatentKind::S, LatentKind::V, LatentKind::Z]
        .iter()
        .map(|&k| (k, Vec::new()))
        .collect();
    let mut labels = Vec::new();
    for item in data {
        let trace = model.infer(&item.dialogue)?;
        for (step, (turn, lat)) in trace
            .steps
            .iter()
            .zip(item.dialogue.turns.iter().zip(&item.latents))
        {
            for (col, l) in learned.iter_mut().zip(&step.latents) {
                col.1.push(l.posterior.mean.clone());
            }
            truth[0].1.push(lat.s.clone());
            truth[1].1.push(lat.v.clone());
            truth[2].1.push(lat.z.clone());
            labels.push(turn.label);
        }
    }
    let n_classes = model.config.n_classes;
    Ok(DisentanglementReport {
        learned: probe_rows(&learned, &labels, n_classes, cfg)?,
        ground_truth: probe_rows(&truth, &labels, n_classes, cfg)?,
    })
}
