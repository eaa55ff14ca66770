//! Dataset files, splits and checkpoints.
//!
//! A dataset directory holds `manifest.json` and `dialogues.jsonl` (one
//! [`Dialogue`] per line). The first `splits.train_val` dialogues form the
//! training-and-validation pool and the remaining `splits.test` the test set.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dialogue;
use crate::numerics::{AdamState, ParamGroup, ParamSet, Tensor};
use crate::synthetic::TrueLatents;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIALOGUES_FILE: &str = "dialogues.jsonl";
pub const LATENTS_FILE: &str = "latents.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub u_dim: usize,
    pub f_raw_dim: usize,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    /// Dialogue counts.
    pub splits: SplitCounts,
    /// Utterance counts, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterances: Option<SplitCounts>,
}

impl DatasetManifest {
    pub fn iemocap(u_dim: usize) -> Self {
        Self {
            name: "iemocap".into(),
            u_dim,
            f_raw_dim: 768,
            n_classes: 6,
            class_names: ["happy", "sad", "neutral", "angry", "excited", "frustrated"]
                .map(String::from)
                .to_vec(),
            splits: SplitCounts {
                train_val: 120,
                test: 31,
            },
            utterances: Some(SplitCounts {
                train_val: 5810,
                test: 1623,
            }),
        }
    }

    pub fn meld(u_dim: usize) -> Self {
        Self {
            name: "meld".into(),
            u_dim,
            f_raw_dim: 768,
            n_classes: 7,
            class_names: [
                "anger", "disgust", "fear", "joy", "neutral", "sadness", "surprise",
            ]
            .map(String::from)
            .to_vec(),
            splits: SplitCounts {
                train_val: 1152,
                test: 280,
            },
            utterances: Some(SplitCounts {
                train_val: 11098,
                test: 2610,
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.u_dim == 0 || self.f_raw_dim == 0 {
            return Err(Error::Config(
                "manifest dimensions must be at least 1".into(),
            ));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("manifest needs at least two classes".into()));
        }
        if !self.class_names.is_empty() && self.class_names.len() != self.n_classes {
            return Err(Error::Config(format!(
                "manifest lists {} class names for {} classes",
                self.class_names.len(),
                self.n_classes
            )));
        }
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path.display().to_string(), e)
}

/// Parses one dialogue per non-blank line.
pub fn load_dialogues(path: &Path) -> Result<Vec<Dialogue>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let d: Dialogue = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(d);
    }
    if out.is_empty() {
        log::warn!("{}: no dialogues", path.display());
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)
            .map_err(|e| Error::io(path.display().to_string(), e.into()))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_dialogues(path: &Path, dialogues: &[Dialogue]) -> Result<()> {
    write_jsonl(path, dialogues)
}

/// Per-dialogue ground-truth latents written next to synthetic corpora.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub id: String,
    pub latents: Vec<TrueLatents>,
}

pub fn load_latents(path: &Path) -> Result<Vec<LatentRecord>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub dialogues: Vec<Dialogue>,
}

impl Dataset {
    /// Loads and validates a dataset directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: mpath.clone(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let dialogues = load_dialogues(&dir.join(DIALOGUES_FILE))?;
        let ds = Self {
            manifest,
            dialogues,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mpath = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises");
        std::fs::write(&mpath, text + "\n").map_err(io_err(&mpath))?;
        write_dialogues(&dir.join(DIALOGUES_FILE), &self.dialogues)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        m.validate()?;
        let expected = m.splits.train_val + m.splits.test;
        if expected != self.dialogues.len() {
            return Err(Error::Config(format!(
                "manifest declares {expected} dialogues, file holds {}",
                self.dialogues.len()
            )));
        }
        for d in &self.dialogues {
            d.validate(m.u_dim, m.f_raw_dim, m.n_classes)?;
        }
        if let Some(u) = m.utterances {
            let (tv, test) = self.dialogues.split_at(m.splits.train_val);
            let count = |ds: &[Dialogue]| ds.iter().map(Dialogue::len).sum::<usize>();
            if count(tv) != u.train_val || count(test) != u.test {
                return Err(Error::Config(format!(
                    "manifest declares {}/{} utterances, files hold {}/{}",
                    u.train_val,
                    u.test,
                    count(tv),
                    count(test)
                )));
            }
        }
        Ok(())
    }

    pub fn train_val(&self) -> &[Dialogue] {
        &self.dialogues[..self.manifest.splits.train_val]
    }

    pub fn test(&self) -> &[Dialogue] {
        &self.dialogues[self.manifest.splits.train_val..]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Vec<Dialogue>,
    pub val: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
}

/// Dialogue-level partition: the train-and-val pool is shuffled with
/// `seed` and its last `val_fraction` becomes validation.
pub fn split(
    dialogues: &[Dialogue],
    counts: SplitCounts,
    val_fraction: f64,
    seed: u64,
) -> Result<Splits> {
    if counts.train_val + counts.test > dialogues.len() {
        return Err(Error::Config(format!(
            "split counts {}+{} exceed {} dialogues",
            counts.train_val,
            counts.test,
            dialogues.len()
        )));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!(
            "val_fraction must lie in [0, 1), got {val_fraction}"
        )));
    }
    let mut pool: Vec<Dialogue> = dialogues[..counts.train_val].to_vec();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((pool.len() as f64) * val_fraction).round() as usize;
    let val = pool.split_off(pool.len() - n_val);
    Ok(Splits {
        train: pool,
        val,
        test: dialogues[counts.train_val..counts.train_val + counts.test].to_vec(),
    })
}

/// Resumable state of a ChaCha RNG.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything needed to resume training bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Echo of the run configuration.
    pub config: String,
    /// Number of completed epochs.
    pub epoch: u64,
    pub best_val: f64,
    pub rng: RngState,
    pub params: ParamSet,
    pub adam: AdamState,
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DCDMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, x: u64) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u64(&mut out, self.config.len() as u64);
        out.extend_from_slice(self.config.as_bytes());
        put_u64(&mut out, self.epoch);
        put_f64s(&mut out, &[self.best_val]);
        out.extend_from_slice(&self.rng.seed);
        put_u64(&mut out, self.rng.stream);
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        put_u64(&mut out, self.adam.step);
        put_u64(&mut out, self.params.len() as u64);
        for (i, e) in self.params.entries().iter().enumerate() {
            put_u32(&mut out, e.name.len() as u32);
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.group.code());
            put_u32(&mut out, e.value.rank() as u32);
            for &d in e.value.shape() {
                put_u64(&mut out, d as u64);
            }
            put_f64s(&mut out, e.value.data());
            put_f64s(&mut out, self.adam.m[i].data());
            put_f64s(&mut out, self.adam.v[i].data());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::CheckpointVersion("missing checkpoint header".into()));
        }
        r.pos = 8;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion(format!(
                "version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let len = r.u64()? as usize;
        let config = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::CheckpointCorrupt("config echo is not UTF-8".into()))?;
        let epoch = r.u64()?;
        let best_val = r.f64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let step = r.u64()?;
        let n = r.u64()? as usize;
        let mut params = ParamSet::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for _ in 0..n {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::CheckpointCorrupt("parameter name is not UTF-8".into()))?;
            let code = r.take(1)?[0];
            let group = ParamGroup::from_code(code).ok_or_else(|| {
                Error::CheckpointCorrupt(format!("unknown parameter group {code}"))
            })?;
            let rank = r.u32()? as usize;
            if rank > 2 {
                return Err(Error::CheckpointCorrupt(format!("{name}: rank {rank}")));
            }
            let shape: Vec<usize> = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<_>>()?;
            let numel: usize = shape.iter().product();
            let mut tensor = || -> Result<Tensor> {
                let data = r.f64s(numel)?;
                Tensor::new(shape.clone(), data)
                    .map_err(|e| Error::CheckpointCorrupt(format!("{name}: {e}")))
            };
            let value = tensor()?;
            m.push(tensor()?);
            v.push(tensor()?);
            params.add(name, group, value);
        }
        if r.pos != bytes.len() {
            return Err(Error::CheckpointCorrupt(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            config,
            epoch,
            best_val,
            rng: RngState {
                seed,
                stream,
                word_pos,
            },
            params,
            adam: AdamState { m, v, step },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(io_err(path))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::CheckpointCorrupt(format!("unexpected end of file at byte {}", self.pos))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::CheckpointCorrupt("size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
