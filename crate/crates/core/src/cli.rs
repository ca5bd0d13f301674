//! Command-line surface: `prepare`, `train`, `evaluate` and `ablate`.
//!
//! Configuration comes from an optional flat `key = value` file; flags
//! override file values, and the effective configuration is echoed to
//! standard error before any work starts.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::dataset::{leave_one_out_split, BehaviorRegistry, Dataset, DatasetStats, Split};
use crate::error::{Error, Result};
use crate::eval::{self, EvalOptions, EvalReport};
use crate::training::{fmt_f64, EpochStats, PretrainStrategy, TrainConfig, Trainer};

#[derive(Debug, Parser)]
#[command(
    name = "bcipm",
    version,
    about = "Multi-behavior recommendation with behavior-contextualized item preferences"
)]
pub struct Cli {
    /// off, error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a TSV log, split leave-one-out and write a reusable snapshot.
    Prepare(PrepareArgs),
    /// Train a model on a prepared split.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a prepared split.
    Evaluate(EvaluateArgs),
    /// Train a list of ablation variants and tabulate HR@10 / NDCG@10.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated behavior names, target behavior last.
    #[arg(long)]
    pub behaviors: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the dataset summary as JSON here instead of standard output.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

/// Overrides for every configuration key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub pretrain_layers: Option<usize>,
    #[arg(long)]
    pub enhance_layers: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `inverse-count` or `fixed:<value>`.
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub no_pretrain: bool,
    #[arg(long)]
    pub no_enhancement: bool,
    #[arg(long)]
    pub no_bipn: bool,
    #[arg(long)]
    pub no_prefilter: bool,
    #[arg(long)]
    pub no_postfilter: bool,
    /// `agg` or `sep`.
    #[arg(long)]
    pub pretrain_strategy: Option<String>,
    #[arg(long)]
    pub no_aux_in_pretrain: bool,
    #[arg(long)]
    pub no_aux_in_bipn: bool,
    #[arg(long)]
    pub detach_enhancement: bool,
    #[arg(long)]
    pub dense_updates: bool,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Comma-separated cutoffs, e.g. `5,10,20`.
    #[arg(long)]
    pub cutoffs: Option<String>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub sampled_candidates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Where the best-HR@10 checkpoint is written.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Where the checkpoint of the final epoch is written.
    #[arg(long)]
    pub save_last: Option<PathBuf>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub metrics_file: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Also write `user<TAB>rank` lines here.
    #[arg(long)]
    pub per_user: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Comma-separated variants, e.g. `full,wo-enh,wo-net`.
    #[arg(long)]
    pub variants: String,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// Everything a run needs: training configuration plus paths and
/// evaluation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub metrics_file: Option<PathBuf>,
    pub cutoffs: Vec<usize>,
    pub eval_interval: usize,
    /// Epochs without HR improvement before stopping; 0 disables.
    pub patience: usize,
    pub threads: Option<usize>,
    pub sampled_candidates: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            data: None,
            split: None,
            checkpoint: None,
            metrics_file: None,
            cutoffs: vec![10],
            eval_interval: 5,
            patience: 0,
            threads: None,
            sampled_candidates: None,
        }
    }
}

fn parse_cutoffs(s: &str) -> Result<Vec<usize>> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("invalid cutoffs {s:?}")))?;
    if v.is_empty() || v.contains(&0) {
        return Err(Error::Config("cutoffs must be positive".into()));
    }
    Ok(v)
}

fn parse_val<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.train.set(key, value)? {
            return Ok(());
        }
        let path = || Some(PathBuf::from(value.trim()));
        match key {
            "data" => self.data = path(),
            "split" => self.split = path(),
            "checkpoint" => self.checkpoint = path(),
            "metrics_file" => self.metrics_file = path(),
            "cutoffs" => self.cutoffs = parse_cutoffs(value)?,
            "eval_interval" => self.eval_interval = parse_val(key, value)?,
            "patience" => self.patience = parse_val(key, value)?,
            "threads" => self.threads = Some(parse_val(key, value)?),
            "sampled_candidates" => self.sampled_candidates = Some(parse_val(key, value)?),
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected `key = value`", n + 1))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Config file (if any), then flags.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(o)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        let t = &mut self.train;
        macro_rules! take {
            ($($field:ident),*) => {$( if let Some(v) = o.$field { t.$field = v; } )*};
        }
        take!(
            dim,
            pretrain_layers,
            enhance_layers,
            batch_size,
            negatives,
            lr,
            beta,
            gamma,
            epochs,
            seed,
            clip_norm
        );
        if let Some(l) = &o.lambda {
            t.lambda = l.parse()?;
        }
        if let Some(s) = &o.pretrain_strategy {
            t.pretrain_strategy = s.parse::<PretrainStrategy>()?;
        }
        t.no_pretrain |= o.no_pretrain;
        t.no_enhancement |= o.no_enhancement;
        t.no_bipn |= o.no_bipn;
        t.no_prefilter |= o.no_prefilter;
        t.no_postfilter |= o.no_postfilter;
        t.aux_in_pretrain &= !o.no_aux_in_pretrain;
        t.aux_in_bipn &= !o.no_aux_in_bipn;
        t.detach_enhancement |= o.detach_enhancement;
        t.dense_updates |= o.dense_updates;
        if let Some(c) = &o.cutoffs {
            self.cutoffs = parse_cutoffs(c)?;
        }
        if let Some(v) = o.eval_interval {
            self.eval_interval = v;
        }
        if let Some(v) = o.patience {
            self.patience = v;
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        if o.sampled_candidates.is_some() {
            self.sampled_candidates = o.sampled_candidates;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }

    /// Effective configuration as `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = self.train.to_text();
        let mut put = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        for (k, p) in [
            ("data", &self.data),
            ("split", &self.split),
            ("checkpoint", &self.checkpoint),
            ("metrics_file", &self.metrics_file),
        ] {
            if let Some(p) = p {
                put(k, p.display().to_string());
            }
        }
        let cutoffs: Vec<String> = self.cutoffs.iter().map(ToString::to_string).collect();
        put("cutoffs", cutoffs.join(","));
        put("eval_interval", self.eval_interval.to_string());
        put("patience", self.patience.to_string());
        if let Some(t) = self.threads {
            put("threads", t.to_string());
        }
        if let Some(n) = self.sampled_candidates {
            put("sampled_candidates", n.to_string());
        }
        s
    }

    fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            cutoffs: self.cutoffs.clone(),
            sampled_candidates: self.sampled_candidates,
            seed: self.train.seed,
        }
    }

    /// Cutoff used for model selection: 10 when requested, otherwise the
    /// first one.
    pub fn selection_cutoff(&self) -> usize {
        if self.cutoffs.contains(&10) {
            10
        } else {
            self.cutoffs[0]
        }
    }

    fn split_path(&self) -> Result<&Path> {
        self.split
            .as_deref()
            .ok_or_else(|| Error::Config("a split path is required (--split)".into()))
    }
}

/// Runs `f` on a pool capped at `threads` workers.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn cmd_prepare(data: &Path, behaviors: &str, out: &Path) -> Result<(Split, DatasetStats)> {
    let registry = BehaviorRegistry::parse(behaviors)?;
    let dataset = Dataset::load(data, &registry)?;
    let stats = dataset.stats();
    let split = leave_one_out_split(&dataset);
    split.save(out)?;
    Ok((split, stats))
}

/// One metrics-stream record.
pub fn metrics_line(stats: &EpochStats, report: Option<&EvalReport>) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("epoch".into(), stats.epoch.into());
    obj.insert("loss_total".into(), stats.loss_total.into());
    obj.insert("loss_bce".into(), stats.loss_bce.into());
    obj.insert("loss_bpr".into(), stats.loss_bpr.into());
    if let Some(r) = report {
        for m in &r.metrics {
            obj.insert(format!("hr@{}", m.k), m.hr.into());
            obj.insert(format!("ndcg@{}", m.k), m.ndcg.into());
        }
    }
    serde_json::Value::Object(obj).to_string()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochStats>,
    pub metrics: Vec<String>,
    pub best: Option<EvalReport>,
    pub last: Option<EvalReport>,
}

/// Trains on `split`, streaming one JSON line per epoch to `metrics`.
/// Evaluates every `eval_interval` epochs and at the final epoch, keeps
/// the best checkpoint by HR at the selection cutoff, and optionally
/// resumes from `resume`.
pub fn run_training(
    cfg: &RunConfig,
    split: &Split,
    resume: Option<&Path>,
    save_last: Option<&Path>,
    metrics: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut trainer = match resume {
        Some(p) => Checkpoint::load(p)?.restore(&split.train, Some(&cfg.train))?,
        None => Trainer::new(&split.train, cfg.train.clone())?,
    };
    let sel = cfg.selection_cutoff();
    let opts = cfg.eval_options();
    let mut out = TrainOutcome {
        epochs: Vec::new(),
        metrics: Vec::new(),
        best: None,
        last: None,
    };
    let mut since_best = 0;
    while trainer.epoch < cfg.train.epochs {
        let stats = trainer.train_epoch()?;
        log::info!(
            "epoch {} loss {:.6} (bce {:.6}, bpr {:.6}) |g| {:.3} clipped {} in {:.2}s",
            stats.epoch,
            stats.loss_total,
            stats.loss_bce,
            stats.loss_bpr,
            stats.grad_norm,
            stats.clipped,
            stats.seconds
        );
        let due = stats.epoch % cfg.eval_interval == 0 || stats.epoch == cfg.train.epochs;
        let report = if due && !split.test.is_empty() {
            Some(eval::evaluate_with(&trainer.state, split, &opts)?)
        } else {
            None
        };
        let line = metrics_line(&stats, report.as_ref());
        writeln!(metrics, "{line}").map_err(|e| Error::io("<metrics>", e))?;
        out.metrics.push(line);
        out.epochs.push(stats);
        if let Some(r) = report {
            let improved = match &out.best {
                None => true,
                Some(b) => r.hr(sel) > b.hr(sel),
            };
            if improved {
                if let Some(p) = &cfg.checkpoint {
                    trainer.save_checkpoint(p)?;
                }
                out.best = Some(r.clone());
                since_best = 0;
            } else {
                since_best += cfg.eval_interval;
            }
            out.last = Some(r);
            if cfg.patience > 0 && since_best >= cfg.patience {
                log::info!("no improvement for {since_best} epochs, stopping");
                break;
            }
        }
    }
    if let Some(p) = save_last {
        trainer.save_checkpoint(p)?;
    }
    Ok(out)
}

/// Loads a checkpoint and evaluates it on `split`. With `expected`, the
/// checkpoint's configuration hash must match.
pub fn run_evaluation(
    checkpoint: &Path,
    split: &Split,
    expected: Option<&TrainConfig>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let trainer = Checkpoint::load(checkpoint)?.restore(&split.train, expected)?;
    eval::evaluate_with(&trainer.state, split, opts)
}

/// Named configuration variants for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    WithoutPretrain,
    WithoutEnhancement,
    WithoutNetwork,
    RemovePrefilter,
    RemovePostfilter,
    RemoveAllFilters,
    BothRemoved,
    NetworkRemoved,
    Separate,
    Aggregated,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Variant::Full,
        Variant::WithoutPretrain,
        Variant::WithoutEnhancement,
        Variant::WithoutNetwork,
        Variant::RemovePrefilter,
        Variant::RemovePostfilter,
        Variant::RemoveAllFilters,
        Variant::BothRemoved,
        Variant::NetworkRemoved,
        Variant::Separate,
        Variant::Aggregated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WithoutPretrain => "wo-pre",
            Variant::WithoutEnhancement => "wo-enh",
            Variant::WithoutNetwork => "wo-net",
            Variant::RemovePrefilter => "r-pr",
            Variant::RemovePostfilter => "r-po",
            Variant::RemoveAllFilters => "r-al",
            Variant::BothRemoved => "b-r",
            Variant::NetworkRemoved => "n-r",
            Variant::Separate => "sep",
            Variant::Aggregated => "agg",
        }
    }

    /// Applies the variant on top of `base`.
    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        match self {
            Variant::Full => {}
            Variant::WithoutPretrain => c.no_pretrain = true,
            Variant::WithoutEnhancement => c.no_enhancement = true,
            Variant::WithoutNetwork => c.no_bipn = true,
            Variant::RemovePrefilter => c.no_prefilter = true,
            Variant::RemovePostfilter => c.no_postfilter = true,
            Variant::RemoveAllFilters => {
                c.no_prefilter = true;
                c.no_postfilter = true;
            }
            Variant::BothRemoved => {
                c.aux_in_pretrain = false;
                c.aux_in_bipn = false;
            }
            Variant::NetworkRemoved => c.aux_in_bipn = false,
            Variant::Separate => c.pretrain_strategy = PretrainStrategy::Sep,
            Variant::Aggregated => c.pretrain_strategy = PretrainStrategy::Agg,
        }
        c
    }

    pub fn parse_list(s: &str) -> Result<Vec<Variant>> {
        s.split(',').map(|v| v.trim().parse()).collect()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// Trains one configuration from scratch and evaluates the final model.
pub fn run_variant(split: &Split, cfg: &TrainConfig, opts: &EvalOptions) -> Result<EvalReport> {
    let mut trainer = Trainer::new(&split.train, cfg.clone())?;
    while trainer.epoch < cfg.epochs {
        trainer.train_epoch()?;
    }
    eval::evaluate_with(&trainer.state, split, opts)
}

/// TSV with one row per variant: `variant<TAB>hr@10<TAB>ndcg@10`.
pub fn cmd_ablate(cfg: &RunConfig, split: &Split, variants: &[Variant]) -> Result<String> {
    cfg.validate()?;
    let mut opts = cfg.eval_options();
    if !opts.cutoffs.contains(&10) {
        opts.cutoffs.push(10);
    }
    let mut out = String::from("variant\thr@10\tndcg@10\n");
    for &v in variants {
        let vc = v.configure(&cfg.train);
        let report = run_variant(split, &vc, &opts)?;
        log::info!("variant {v}: {}", report.to_json());
        out.push_str(&format!(
            "{v}\t{}\t{}\n",
            fmt_f64(report.hr(10).unwrap_or(0.0)),
            fmt_f64(report.ndcg(10).unwrap_or(0.0))
        ));
    }
    Ok(out)
}

fn echo(cfg: &RunConfig) {
    eprintln!("# effective configuration");
    eprint!("{}", cfg.to_text());
}

fn open_out(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => {
            let (split, stats) = cmd_prepare(&a.data, &a.behaviors, &a.out)?;
            let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
            match &a.stats {
                Some(p) => fs::write(p, json + "\n").map_err(|e| Error::io(p, e))?,
                None => println!("{json}"),
            }
            eprintln!(
                "wrote {} ({} held-out users)",
                a.out.display(),
                split.test.len()
            );
            Ok(())
        }
        Command::Train(a) => {
            let mut cfg = RunConfig::resolve(&a.overrides)?;
            if a.split.is_some() {
                cfg.split = a.split.clone();
            }
            if a.checkpoint.is_some() {
                cfg.checkpoint = a.checkpoint.clone();
            }
            if a.metrics_file.is_some() {
                cfg.metrics_file = a.metrics_file.clone();
            }
            cfg.validate()?;
            echo(&cfg);
            let split = Split::load(cfg.split_path()?)?;
            let threads = cfg.threads;
            with_threads(threads, || {
                let mut sink: Box<dyn Write + Send> = match &cfg.metrics_file {
                    Some(p) => Box::new(open_out(p)?),
                    None => Box::new(io::stdout()),
                };
                let outcome = run_training(
                    &cfg,
                    &split,
                    a.resume.as_deref(),
                    a.save_last.as_deref(),
                    &mut sink,
                )?;
                sink.flush().map_err(|e| Error::io("<metrics>", e))?;
                if let Some(best) = outcome.best {
                    eprintln!("best: {}", best.to_json());
                }
                Ok(())
            })?
        }
        Command::Evaluate(a) => {
            let mut cfg = RunConfig::resolve(&a.overrides)?;
            if a.split.is_some() {
                cfg.split = a.split.clone();
            }
            let expected = a.overrides.config.as_ref().map(|_| cfg.train.clone());
            let split = Split::load(cfg.split_path()?)?;
            let opts = cfg.eval_options();
            let report = with_threads(cfg.threads, || {
                run_evaluation(&a.checkpoint, &split, expected.as_ref(), &opts)
            })??;
            println!("{}", report.to_json());
            if let Some(p) = &a.per_user {
                let mut w = open_out(p)?;
                report
                    .write_per_user_tsv(&split.train, &mut w)
                    .and_then(|_| w.flush())
                    .map_err(|e| Error::io(p, e))?;
            }
            Ok(())
        }
        Command::Ablate(a) => {
            let variants = Variant::parse_list(&a.variants)?;
            let mut cfg = RunConfig::resolve(&a.overrides)?;
            if a.split.is_some() {
                cfg.split = a.split.clone();
            }
            cfg.validate()?;
            echo(&cfg);
            let split = Split::load(cfg.split_path()?)?;
            let table = with_threads(cfg.threads, || cmd_ablate(&cfg, &split, &variants))??;
            print!("{table}");
            Ok(())
        }
    }
}

/// Entry point for the binary. Exit codes: 0 success, 1 usage,
/// 2 data error, 3 numeric abort.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
