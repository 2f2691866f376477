use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qfpred::model::HeadMode;

mod commands;
mod config;
mod selftest;

use config::RunConfig;

/// Marks errors caused by how the tool was invoked (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "qf", version, about = "Reference-free image quality from predicted JPEG quality factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a QF predictor on a manifest.
    Train(Common),
    /// Print the mean predicted QF of each image.
    Infer(Common),
    /// Write dense QF maps and heatmaps.
    QfMap(Common),
    /// Fixed-patch corruption sweep with a correlation curve.
    CorruptEval(Common),
    /// Score every image of a corpus.
    ScoreDataset(Common),
    /// Train restorers with a frozen QF predictor as perceptual loss.
    DemoLoss(Common),
    /// Generate the procedural corpus and its manifest.
    MakeCorpus(Common),
    /// Check gradients, codec properties and receptive-field locality.
    Selftest(Common),
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    images: Vec<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `qf-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<HeadMode>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    channels: Option<u8>,
    #[arg(long)]
    patch: Option<usize>,
    /// Corruption sweep as `kind:level,level,...`, e.g. `blur:0,0.5,1,2,4`.
    #[arg(long)]
    sweep: Option<String>,
    /// One lambda or a comma-separated sweep.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long)]
    threads: Option<usize>,
    /// Training steps.
    #[arg(long)]
    steps: Option<u64>,
    /// Fixed locations per image (corrupt-eval).
    #[arg(long)]
    locations: Option<usize>,
    /// Random patches per image (score-dataset); whole images when omitted.
    #[arg(long)]
    patches: Option<usize>,
    /// Number of images (make-corpus).
    #[arg(long)]
    count: Option<usize>,
}

fn parse_mode(s: &str) -> Result<HeadMode, String> {
    s.parse().map_err(|e: qfpred::Error| e.to_string())
}

impl Common {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            manifest: self.manifest.clone(),
            model: self.model.clone(),
            images: self.images.clone(),
            out: self.out.clone(),
            mode: self.mode,
            channels: self.channels.map(usize::from),
            seed: self.seed,
            patch: self.patch,
            threads: self.threads,
            sweep: self.sweep.clone(),
            locations: self.locations,
            patches: self.patches,
            lambda: self.lambda.clone(),
            count: self.count,
            ..Default::default()
        };
        if flags.channels == Some(2) {
            return Err(UsageError("--channels must be 1 or 3".into()).into());
        }
        let mut merged = base.merge(flags);
        if let Some(steps) = self.steps {
            merged.train.get_or_insert_with(Default::default).steps = steps;
        }
        Ok(merged)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (name, common) = match &cli.command {
        Command::Train(c) => ("train", c),
        Command::Infer(c) => ("infer", c),
        Command::QfMap(c) => ("qf-map", c),
        Command::CorruptEval(c) => ("corrupt-eval", c),
        Command::ScoreDataset(c) => ("score-dataset", c),
        Command::DemoLoss(c) => ("demo-loss", c),
        Command::MakeCorpus(c) => ("make-corpus", c),
        Command::Selftest(c) => ("selftest", c),
    };
    let mut cfg = common.resolve()?;
    match cli.command {
        Command::Train(_) => commands::train(&mut cfg)?,
        Command::Infer(_) => commands::infer(&mut cfg)?,
        Command::QfMap(_) => commands::qf_map(&mut cfg)?,
        Command::CorruptEval(_) => commands::corrupt_eval(&mut cfg)?,
        Command::ScoreDataset(_) => commands::score_dataset(&mut cfg)?,
        Command::DemoLoss(_) => commands::demo_loss(&mut cfg)?,
        Command::MakeCorpus(_) => commands::make_corpus(&mut cfg)?,
        Command::Selftest(_) => selftest::run(&mut cfg)?,
    }
    cfg.write(name)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
