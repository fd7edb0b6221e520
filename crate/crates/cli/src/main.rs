use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tempgnn::data::{
    parse_duration_ms, parse_log, prepare, synth_corpus, write_log, ColumnRef, Corpus, LabeledInstance, LogFormat,
    PrepareOptions, SynthSpec,
};
use tempgnn::model::{load_checkpoint, save_checkpoint, TempGnn};
use tempgnn::train::{
    ablate, ablation_tsv, evaluate, full_grid, run_gradcheck, save_metrics_csv, sweep_buckets, sweep_csv, train,
    AblationCell, EvalReport, GradCheckSpec, RunConfig, SweepTarget, METHODS,
};
use tempgnn::{Error, Result};

#[derive(Parser)]
#[command(name = "tempgnn", version, about = "Temporal session-graph recommender")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, split and expand a raw click log into a corpus directory.
    Preprocess(PreprocessArgs),
    /// Write a synthetic click log.
    Synth(SynthArgs),
    /// Train a model and save the best-validation checkpoint.
    Train(TrainArgs),
    /// Rank a corpus split with a checkpoint.
    Evaluate(EvaluateArgs),
    /// Train and evaluate a grid of temporal variants.
    Ablate(AblateArgs),
    /// Train and evaluate one model per bucket count.
    SweepBuckets(SweepArgs),
    /// Compare model gradients with central differences on tiny problems.
    Gradcheck(GradcheckArgs),
    /// Write the learned TN/TE bucket vectors as CSV.
    DumpEmbeddings(DumpArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    min_item_count: usize,
    /// Sessions ending within this window of the newest click form the test set.
    #[arg(long, default_value = "1d")]
    test_window: String,
    #[arg(long, default_value_t = 10)]
    max_len: usize,
    #[arg(long, default_value_t = 1.0)]
    keep_last_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// The log has no header row; columns are then addressed by position.
    #[arg(long)]
    no_header: bool,
    /// Column name or zero-based index [default: session_id, or 0 without a header]
    #[arg(long)]
    session_col: Option<String>,
    /// [default: timestamp, or 1 without a header]
    #[arg(long)]
    time_col: Option<String>,
    /// [default: item_id, or 2 without a header]
    #[arg(long)]
    item_col: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    items: usize,
    #[arg(long, default_value_t = 1000)]
    sessions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    temporal_signal: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Run configuration: defaults, then `--config`, then named flags, then `--set`.
#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory written by `preprocess`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// TN variant: none, position, constant, bucket, q, q+a, q+g, q+a+g.
    #[arg(long)]
    tn: Option<String>,
    #[arg(long)]
    te: Option<String>,
    #[arg(long)]
    tn_buckets: Option<usize>,
    #[arg(long)]
    te_buckets: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Any config key, as `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let named: [(&str, Option<String>); 12] = [
            ("data", self.data.as_ref().map(|p| p.display().to_string())),
            ("dim", self.dim.map(|v| v.to_string())),
            ("layers", self.layers.map(|v| v.to_string())),
            ("tau", self.tau.map(|v| v.to_string())),
            ("tn_variant", self.tn.clone()),
            ("te_variant", self.te.clone()),
            ("tn_buckets", self.tn_buckets.map(|v| v.to_string())),
            ("te_buckets", self.te_buckets.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (k, v) in named {
            if let Some(v) = v {
                c.set(k, &v)?;
            }
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
            c.set(k, v)?;
        }
        Ok(c)
    }
}

fn corpus_of(run: &RunConfig) -> Result<Corpus> {
    let dir = run
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no corpus directory (use --data or data = ...)".into()))?;
    Corpus::load(dir)
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory for model.ckpt, metrics.csv and run.cfg.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// test, valid or train.
    #[arg(long, default_value = "test")]
    split: String,
    /// Print the session graphs of the first N instances.
    #[arg(long, value_name = "N")]
    dump_graphs: Option<usize>,
    /// Write one `session_id,target,rank` line per instance.
    #[arg(long)]
    ranks: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated methods; defaults to all eight.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Explicit cells as method:TN:TE with on/off flags, e.g. q+a+g:on:off.
    #[arg(long, value_delimiter = ',')]
    cells: Vec<String>,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    counts: Vec<usize>,
    /// tn or te; the other embedding is disabled.
    #[arg(long, default_value = "tn")]
    embedding: String,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    h: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    items: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    buckets: usize,
    #[arg(long, default_value_t = 5)]
    max_len: usize,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn print_report(report: &EvalReport) {
    println!("instances\t{}", report.len());
    for m in report.metrics() {
        println!("R@{}\t{:.2}", m.k, 100.0 * m.recall);
        println!("M@{}\t{:.2}", m.k, 100.0 * m.mrr);
    }
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<()> {
    if !a.delimiter.is_ascii() {
        return Err(Error::Config("delimiter must be a single ASCII character".into()));
    }
    let defaults = if a.no_header {
        LogFormat::positional(a.delimiter as u8)
    } else {
        LogFormat {
            delimiter: a.delimiter as u8,
            ..LogFormat::default()
        }
    };
    let column = |raw: &Option<String>, fallback: ColumnRef| -> Result<ColumnRef> {
        let col = raw.as_deref().map(str::parse).transpose()?.unwrap_or(fallback);
        if a.no_header && matches!(col, ColumnRef::Name(_)) {
            return Err(Error::Config(format!("column {col:?} needs a header; give an index")));
        }
        Ok(col)
    };
    let format = LogFormat {
        session: column(&a.session_col, defaults.session.clone())?,
        timestamp: column(&a.time_col, defaults.timestamp.clone())?,
        item: column(&a.item_col, defaults.item.clone())?,
        ..defaults.clone()
    };
    let sessions = parse_log(&a.input, &format)?;
    let opts = PrepareOptions {
        min_item_count: a.min_item_count,
        test_window_ms: parse_duration_ms(&a.test_window)?,
        keep_last_fraction: a.keep_last_fraction,
        validation_fraction: a.validation_fraction,
        max_len: a.max_len,
    };
    let corpus = prepare(sessions, &opts)?;
    corpus.save(&a.out)?;
    println!(
        "items {} train {} valid {} test {}",
        corpus.vocab.len(),
        corpus.train.len(),
        corpus.validation.len(),
        corpus.test.len()
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    if a.items < 4 || a.sessions == 0 {
        return Err(Error::Config("synth needs at least 4 items and 1 session".into()));
    }
    let spec = SynthSpec::new(a.items, a.sessions, a.seed, a.temporal_signal);
    write_log(&a.out, &synth_corpus(&spec))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let run = a.run.resolve()?;
    let out = a
        .out
        .clone()
        .or_else(|| run.out.clone())
        .ok_or_else(|| Error::Config("no output directory (use --out)".into()))?;
    let corpus = corpus_of(&run)?;
    let model_config = run.model_config(corpus.vocab.len())?;
    let tc = run.train_config()?;
    let init = TempGnn::from_training(model_config, &corpus.train, run.seed)?;
    log::info!("{} parameters", init.parameter_count());
    let outcome = train(init, &corpus.train, &corpus.validation, &tc)?;

    fs::create_dir_all(&out).map_err(io_err(&out))?;
    save_checkpoint(&out.join("model.ckpt"), &outcome.model)?;
    save_metrics_csv(&out.join("metrics.csv"), &outcome.logs)?;
    fs::write(out.join("run.cfg"), run.to_text()).map_err(io_err(&out))?;
    match outcome.best_epoch {
        Some(e) => println!("best epoch {e}"),
        None => println!("kept last epoch"),
    }
    if !corpus.test.is_empty() {
        print_report(&evaluate(&outcome.model, &corpus.test)?);
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let corpus = Corpus::load(&a.data)?;
    if corpus.vocab.len() != model.config.n_items {
        return Err(Error::Config(format!(
            "checkpoint has {} items, corpus vocabulary {}",
            model.config.n_items,
            corpus.vocab.len()
        )));
    }
    let instances: &[LabeledInstance] = match a.split.as_str() {
        "test" => &corpus.test,
        "valid" => &corpus.validation,
        "train" => &corpus.train,
        other => return Err(Error::Config(format!("unknown split {other:?}"))),
    };
    if let Some(n) = a.dump_graphs {
        for inst in instances.iter().take(n) {
            println!("# session {} target {}", inst.prefix.id, inst.target);
            print!("{}", model.graph(inst)?.dump());
        }
    }
    let report = evaluate(&model, instances)?;
    if let Some(path) = &a.ranks {
        let mut text = String::from("session_id,target,rank\n");
        for (inst, r) in instances.iter().zip(&report.ranks) {
            text.push_str(&format!("{},{},{r}\n", inst.prefix.id, inst.target));
        }
        fs::write(path, text).map_err(io_err(path))?;
    }
    print_report(&report);
    Ok(())
}

fn parse_cell(raw: &str) -> Result<AblationCell> {
    let parts: Vec<&str> = raw.split(':').collect();
    let flag = |s: &str| match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(Error::Config(format!("cell flag must be on or off, got {other:?}"))),
    };
    match parts.as_slice() {
        [m] => Ok(AblationCell::new(m, true, true)),
        [m, tn, te] => Ok(AblationCell::new(m, flag(tn)?, flag(te)?)),
        _ => Err(Error::Config(format!("malformed cell {raw:?}"))),
    }
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let run = a.run.resolve()?;
    let corpus = corpus_of(&run)?;
    let grid = if !a.cells.is_empty() {
        let cells = a.cells.iter().map(|c| parse_cell(c)).collect::<Result<Vec<_>>>()?;
        for c in &cells {
            c.variants(run.tn_buckets, run.te_buckets)?;
        }
        cells
    } else if a.methods.is_empty() {
        full_grid(&METHODS)?
    } else {
        full_grid(&a.methods.iter().map(String::as_str).collect::<Vec<_>>())?
    };
    let rows = ablate(&run, &corpus, &grid, a.replicates)?;
    write_output(a.output.as_deref(), &ablation_tsv(&rows))
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let run = a.run.resolve()?;
    let target: SweepTarget = a.embedding.parse()?;
    let corpus = corpus_of(&run)?;
    let rows = sweep_buckets(&run, &corpus, &a.counts, target, a.replicates)?;
    write_output(a.output.as_deref(), &sweep_csv(&rows))
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    if a.seeds == 0 {
        return Err(Error::Config("need at least one seed".into()));
    }
    let spec = GradCheckSpec {
        dim: a.dim,
        n_items: a.items,
        layers: a.layers,
        buckets: a.buckets,
        max_len: a.max_len,
        h: a.h,
        ..GradCheckSpec::default()
    };
    let mut worst: f64 = 0.0;
    for seed in a.first_seed..a.first_seed + a.seeds {
        let o = run_gradcheck(&spec, seed)?;
        worst = worst.max(o.report.max_rel_error);
        println!(
            "seed {seed}\trel {:.3e}\t{}\tabs {:.3e}\tfloor {:.3e}\t{}",
            o.report.max_rel_error,
            o.worst_param.unwrap_or("-"),
            o.worst_abs_error,
            o.rounding_floor,
            if o.passes(a.tol) { "ok" } else { "over" }
        );
    }
    println!("max rel error {worst:.3e} (tolerance {:.1e})", a.tol);
    if worst > a.tol {
        return Err(Error::Degenerate {
            op: "gradcheck",
            detail: format!("max relative error {worst:.3e} exceeds {:.1e}", a.tol),
        });
    }
    Ok(())
}

fn cmd_dump(a: DumpArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let mut text = String::from("embedding,bucket,lower_ms,upper_ms");
    for j in 0..model.config.dim {
        text.push_str(&format!(",v{j}"));
    }
    text.push('\n');
    let mut any = false;
    for (node, name, enc) in [(true, "tn", &model.tn), (false, "te", &model.te)] {
        let Some(vectors) = model.bucket_vectors(node)? else {
            continue;
        };
        any = true;
        let b = enc.bucketizer.boundaries();
        for (k, v) in vectors.iter().enumerate() {
            let lower = if k == 0 { String::new() } else { b[k - 1].to_string() };
            let upper = b.get(k).map(i64::to_string).unwrap_or_default();
            text.push_str(&format!("{name},{k},{lower},{upper}"));
            for x in v.data() {
                text.push_str(&format!(",{x}"));
            }
            text.push('\n');
        }
    }
    if !any {
        log::warn!("neither encoder has a bucket table; writing the header only");
    }
    let mut f = fs::File::create(&a.out).map_err(io_err(&a.out))?;
    f.write_all(text.as_bytes()).map_err(io_err(&a.out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::SweepBuckets(a) => cmd_sweep(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::DumpEmbeddings(a) => cmd_dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
