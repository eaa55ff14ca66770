//! `dcd`: train, evaluate and inspect dialogue emotion models.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dcd_core::config::{apply_overrides, load_toml};
use dcd_core::data::{split, Checkpoint, Dataset, LATENTS_FILE};
use dcd_core::elbo::check_gradients;
use dcd_core::eval::{
    ablation_run, ablation_table, evaluate, export_latents, median, EvalReport, ABLATION_GRID,
};
use dcd_core::model::{LatentKind, Model, ModelConfig};
use dcd_core::numerics::GradCheckConfig;
use dcd_core::synthetic::{
    disentanglement_report, sample_spec, ProbeConfig, SyntheticConfig, SyntheticCorpus,
};
use dcd_core::train::{checkpoint_paths, model_from_checkpoint, Trainer};
use dcd_core::RunConfig;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "dcd",
    version,
    about = "Causal disentanglement VAE for dialogue emotion detection"
)]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named starting configuration: default or synthetic.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Override a configuration key, e.g. `--set epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with known latents.
    Synth(SynthArgs),
    /// Train a model and keep the best-validation checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Train every ablation setting and tabulate test scores.
    Ablate(AblateArgs),
    /// Finite-difference check of the full objective's gradients.
    Gradcheck(GradcheckArgs),
    /// Write per-utterance posterior means for external plotting.
    ExportLatents(ExportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Generator configuration file (TOML).
    #[arg(long)]
    generator: Option<PathBuf>,
    /// Override a generator key, e.g. `--param turns=20`.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    param: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from the checkpoints in `--out`.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Score every dialogue instead of the test split.
    #[arg(long)]
    all: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated seeds; each row is trained once per seed.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// 1-based grid rows to run; all six by default.
    #[arg(long, value_delimiter = ',')]
    rows: Vec<usize>,
    /// Write per-run JSON results here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Check on this dataset's first dialogue at the configured sizes
    /// instead of a small generated one.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Entries checked per parameter (all by default).
    #[arg(long)]
    max_entries: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    all: bool,
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let base = match (&cli.config, &cli.preset) {
        (Some(_), Some(_)) => bail!(dcd_core::Error::Config(
            "--config and --preset are exclusive".into()
        )),
        (Some(path), None) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => RunConfig::default(),
    };
    let mut run = base.apply_overrides(&cli.set)?;
    if let Some(seed) = cli.seed {
        run.seed = seed;
    }
    run.validate()?;
    Ok(run)
}

fn data_dir(arg: &Option<PathBuf>, run: &RunConfig) -> Result<PathBuf> {
    match arg.clone().or_else(|| run.data.clone()) {
        Some(p) => Ok(p),
        None => bail!(dcd_core::Error::Config(
            "no dataset given (--data or `data` in the config)".into()
        )),
    }
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let base: SyntheticConfig = match &args.generator {
        Some(p) => load_toml(p)?,
        None => SyntheticConfig::default(),
    };
    let mut cfg = apply_overrides(&base, &args.param)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let corpus = sample_spec(&cfg)?.corpus()?;
    corpus.save(&args.out)?;
    eprintln!(
        "wrote {} dialogues ({} test) to {}",
        corpus.dataset.dialogues.len(),
        cfg.test_dialogues,
        args.out.display()
    );
    Ok(())
}

fn train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let (last_path, best_path) = checkpoint_paths(&args.out);
    let mut trainer = if args.resume {
        let last = Checkpoint::load(&last_path)?;
        let best = if best_path.exists() {
            Some(Checkpoint::load(&best_path)?)
        } else {
            None
        };
        let mut trainer = Trainer::resume(last, best.as_ref())?;
        let mut wanted = trainer.run.apply_overrides(&cli.set)?;
        wanted.seed = cli.seed.unwrap_or(wanted.seed);
        if (RunConfig {
            epochs: trainer.run.epochs,
            ..wanted.clone()
        }) != trainer.run
        {
            bail!(dcd_core::Error::Config(
                "only `epochs` can change when resuming".into()
            ));
        }
        wanted.validate()?;
        trainer.run = wanted;
        trainer
    } else {
        let run = run_config(cli)?;
        let data = data_dir(&args.data, &run)?;
        let ds = Dataset::load(&data)?;
        Trainer::new(run.clone(), run.model_config_for(&ds.manifest))?
    };
    let run = trainer.run.clone();
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("config.toml"), run.to_toml())?;
    let data = data_dir(&args.data, &run)?;
    let ds = Dataset::load(&data)?;
    let splits = split(
        &ds.dialogues,
        ds.manifest.splits,
        run.val_fraction,
        run.seed,
    )?;
    eprintln!(
        "training on {} dialogues, validating on {}, {} parameters",
        splits.train.len(),
        splits.val.len(),
        trainer.model.params.num_scalars()
    );
    trainer.fit(&splits.train, &splits.val, Some(&args.out), |r| {
        eprintln!(
            "epoch {:>3}  loss {:>10.4}  val wF1 {}",
            r.epoch,
            r.train.total,
            r.val
                .as_ref()
                .map_or("-".into(), |v| format!("{:.4}", v.weighted_f1))
        );
    })?;
    let best = trainer.best_model()?;
    if !splits.test.is_empty() {
        let report = evaluate(&best, &splits.test, (run.time_batch, run.time_batch_max))?;
        eprintln!(
            "test accuracy {:.4}  weighted F1 {:.4}",
            report.metrics.accuracy, report.metrics.weighted_f1
        );
        write_json(
            Some(&args.out.join("test_report.json")),
            &serde_json::to_value(&report)?,
        )?;
    }
    Ok(())
}

fn check_compatible(model: &Model, ds: &Dataset) -> Result<()> {
    let (m, c) = (&ds.manifest, &model.config);
    if (m.u_dim, m.f_raw_dim, m.n_classes) != (c.u_dim, c.f_raw_dim, c.n_classes) {
        bail!(dcd_core::Error::Config(format!(
            "checkpoint expects u_dim {}, f_raw_dim {}, {} classes; dataset has {}, {}, {}",
            c.u_dim, c.f_raw_dim, c.n_classes, m.u_dim, m.f_raw_dim, m.n_classes
        )));
    }
    Ok(())
}

fn report_json(report: &EvalReport, class_names: &[String]) -> serde_json::Value {
    let m = &report.metrics;
    let classes: Vec<serde_json::Value> = (0..m.f1.len())
        .map(|c| {
            json!({
                "class": class_names.get(c).cloned().unwrap_or_else(|| c.to_string()),
                "f1": m.f1[c],
                "recall": m.recall[c],
                "support": m.support[c],
            })
        })
        .collect();
    json!({
        "accuracy": m.accuracy,
        "weighted_f1": m.weighted_f1,
        "classes": classes,
        "confusion": report.confusion.counts,
        "time_batches": report.time_batches,
    })
}

fn eval(args: &EvalArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let (run, model) = model_from_checkpoint(&ckpt)?;
    let ds = Dataset::load(&args.data)?;
    check_compatible(&model, &ds)?;
    let dialogues = if args.all {
        &ds.dialogues[..]
    } else {
        ds.test()
    };
    let report = evaluate(&model, dialogues, (run.time_batch, run.time_batch_max))?;
    let mut out = report_json(&report, &ds.manifest.class_names);

    if args.data.join(LATENTS_FILE).exists() && model.layout.chain(LatentKind::S).is_some() {
        let corpus = SyntheticCorpus::load(&args.data)?;
        let labeled = if args.all {
            corpus.labeled()?
        } else {
            corpus.test_labeled()?
        };
        let probes = disentanglement_report(&model, &labeled, &ProbeConfig::default())?;
        out["probes"] = serde_json::to_value(&probes)?;
    }
    write_json(args.out.as_deref(), &out)
}

fn ablate(cli: &Cli, args: &AblateArgs) -> Result<()> {
    let run = run_config(cli)?;
    let ds = Dataset::load(&data_dir(&args.data, &run)?)?;
    let splits = split(
        &ds.dialogues,
        ds.manifest.splits,
        run.val_fraction,
        run.seed,
    )?;
    let rows: Vec<usize> = if args.rows.is_empty() {
        (1..=ABLATION_GRID.len()).collect()
    } else {
        args.rows.clone()
    };
    let mut results = Vec::new();
    for &r in &rows {
        let Some(row) = r.checked_sub(1).and_then(|i| ABLATION_GRID.get(i)) else {
            bail!(dcd_core::Error::Config(format!("no ablation row {r}")));
        };
        let mut scores = Vec::new();
        for &seed in &args.seeds {
            let cfg = RunConfig {
                seed,
                ..run.clone()
            };
            let res = ablation_run(row.label, row.switches, &cfg, &ds.manifest, &splits)?;
            eprintln!(
                "row {r} seed {seed}: weighted F1 {:.4}",
                res.test.metrics.weighted_f1
            );
            scores.push(res.test.metrics.weighted_f1);
            results.push(res);
        }
        eprintln!(
            "row {r} ({}): median weighted F1 {:.4}",
            row.label,
            median(&scores).unwrap_or(f64::NAN)
        );
    }
    print!("{}", ablation_table(&results));
    if let Some(p) = &args.out {
        write_json(Some(p), &serde_json::to_value(&results)?)?;
    }
    Ok(())
}

/// Returns whether every parameter passed.
fn gradcheck(cli: &Cli, args: &GradcheckArgs) -> Result<bool> {
    let seed = cli.seed.unwrap_or(0);
    let (model, dialogue, weights) = match &args.data {
        Some(dir) => {
            let run = run_config(cli)?;
            let ds = Dataset::load(dir)?;
            let Some(d) = ds.dialogues.first().cloned() else {
                bail!(dcd_core::Error::Empty("dataset"));
            };
            let model = Model::new(run.model_config_for(&ds.manifest), seed)?;
            (model, d, run.loss_weights()?)
        }
        None => {
            let cfg = ModelConfig::toy();
            let synth = SyntheticConfig {
                turns: 4,
                seed,
                ..SyntheticConfig::matching(&cfg)
            };
            let d = sample_spec(&synth)?
                .generate_corpus("gc", 1, 0)?
                .remove(0)
                .dialogue;
            (Model::new(cfg, seed)?, d, Default::default())
        }
    };
    let gc = GradCheckConfig {
        tol: args.tol,
        max_entries: args.max_entries,
        ..GradCheckConfig::default()
    };
    let report = check_gradients(&model, &dialogue, seed, &weights, &gc)?;
    for (group, err) in report.by_group() {
        println!("{:<12} max relative error {:.3e}", group.name(), err);
    }
    for f in report.failures() {
        println!(
            "FAILED {} [{}]: analytic {:.6e} numeric {:.6e}",
            f.name, f.worst_index, f.analytic, f.numeric
        );
    }
    println!(
        "{}",
        if report.passed() {
            "gradient check passed"
        } else {
            "gradient check failed"
        }
    );
    Ok(report.passed())
}

fn export(args: &ExportArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let (_, model) = model_from_checkpoint(&ckpt)?;
    let ds = Dataset::load(&args.data)?;
    check_compatible(&model, &ds)?;
    let dialogues = if args.all {
        &ds.dialogues[..]
    } else {
        ds.test()
    };
    export_latents(&model, dialogues, &args.out)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a).map(|_| true),
        Command::Train(a) => train(cli, a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Ablate(a) => ablate(cli, a).map(|_| true),
        Command::Gradcheck(a) => gradcheck(cli, a),
        Command::ExportLatents(a) => export(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            let invalid = e
                .downcast_ref::<dcd_core::Error>()
                .is_some_and(dcd_core::Error::is_validation);
            ExitCode::from(if invalid { 2 } else { 1 })
        }
    }
}
