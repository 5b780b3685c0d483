//! `vocablab` command line: dataset synthesis, training, evaluation,
//! metric reports, ratio sweeps, and mutual-learning runs.
//!
//! Exit code 0 on success; on failure a machine-readable JSON error line
//! is printed to stderr. `VOCABLAB_THREADS` caps worker parallelism.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vocablab_core::corpus::{bundled_reserve_vocabulary, bundled_train_vocabulary, Vocabulary};
use vocablab_core::harness::{
    run_eval, run_mutual, run_report_dir, run_sweep, run_synth, run_train, HarnessError,
    MutualRunConfig, SweepConfig, SynthKind, TrainConfig,
};
use vocablab_core::models::{CntxKind, PredKind};
use vocablab_core::render::StyleParams;

#[derive(Parser)]
#[command(name = "vocablab", version, about = "Vocabulary-reliance laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Ls,
    Rs,
    Ms,
}

#[derive(Clone, Copy, ValueEnum)]
enum PredArg {
    Ctc,
    Attn,
    Seg,
}

#[derive(Clone, Copy, ValueEnum)]
enum CntxArg {
    None,
    Blstm,
    Ppm,
}

impl From<PredArg> for PredKind {
    fn from(p: PredArg) -> Self {
        match p {
            PredArg::Ctc => PredKind::Ctc,
            PredArg::Attn => PredKind::Attn,
            PredArg::Seg => PredKind::Seg,
        }
    }
}

impl From<CntxArg> for CntxKind {
    fn from(c: CntxArg) -> Self {
        match c {
            CntxArg::None => CntxKind::None,
            CntxArg::Blstm => CntxKind::Blstm,
            CntxArg::Ppm => CntxKind::Ppm,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    pred: PredArg,
    #[arg(long, value_enum, default_value = "none")]
    cntx: CntxArg,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 3000)]
    steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Test set to evaluate after training, as NAME=DIR; repeatable.
    #[arg(long = "test", value_parser = parse_named_dir)]
    tests: Vec<(String, PathBuf)>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset: PGM images plus a JSON-lines manifest.
    Synth {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// RS fraction for MS datasets.
        #[arg(long, default_value_t = 0.5)]
        ratio: f64,
        #[arg(long, default_value_t = 20000)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Word list, one word per line; defaults to the bundled
        /// training vocabulary.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Use the bundled held-out list instead of the training list.
        #[arg(long, default_value_t = false)]
        reserve: bool,
    },
    /// Train one module combination for a fixed step budget.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset, writing predictions.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble the metric report from a directory of runs.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train across a list of mixing ratios and trace the gap curves.
    Sweep {
        /// Comma-separated ratios in [0,1].
        #[arg(long)]
        ratios: String,
        #[arg(long, value_enum)]
        pred: PredArg,
        #[arg(long, value_enum, default_value = "none")]
        cntx: CntxArg,
        #[arg(long, default_value_t = 20000)]
        count: u64,
        #[arg(long = "test-count", default_value_t = 1000)]
        test_count: u64,
        #[arg(long, default_value_t = 3000)]
        steps: u64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long = "reserve-vocab")]
        reserve_vocab: Option<PathBuf>,
    },
    /// Jointly train the attention/segmentation pair with KL coupling.
    Mutual {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3000)]
        steps: u64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long = "kl-weight", default_value_t = 1.0)]
        kl_weight: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "test", value_parser = parse_named_dir)]
        tests: Vec<(String, PathBuf)>,
    },
    /// Export a normalized vocabulary word list.
    Vocab {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = false)]
        reserve: bool,
        /// Normalize an external list instead of the bundled one.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

fn parse_named_dir(s: &str) -> Result<(String, PathBuf), String> {
    let (name, dir) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=DIR, got {s:?}"))?;
    Ok((name.to_string(), PathBuf::from(dir)))
}

fn load_vocab(path: &Option<PathBuf>, reserve: bool) -> Result<Vocabulary, HarnessError> {
    match path {
        Some(p) => Ok(Vocabulary::from_path(p, &p.display().to_string())?),
        None if reserve => Ok(bundled_reserve_vocabulary()),
        None => Ok(bundled_train_vocabulary()),
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Synth {
            kind,
            ratio,
            count,
            seed,
            out,
            vocab,
            reserve,
        } => {
            let kind = match kind {
                KindArg::Ls => SynthKind::Ls,
                KindArg::Rs => SynthKind::Rs,
                KindArg::Ms => SynthKind::Ms,
            };
            let vocab = load_vocab(&vocab, reserve)?;
            let records = run_synth(
                kind,
                ratio,
                count,
                seed,
                &out,
                &vocab,
                &StyleParams::default(),
            )?;
            println!(
                "{}",
                serde_json::json!({"written": records.len(), "dir": out})
            );
        }
        Command::Train(args) => {
            let cfg = TrainConfig {
                pred: args.pred.into(),
                cntx: args.cntx.into(),
                data_dir: args.data,
                steps: args.steps,
                batch_size: args.batch,
                lr: args.lr,
                seed: args.seed,
            };
            let record = run_train(&cfg, &args.out, &args.tests)?;
            println!("{}", serde_json::to_string(&record.accuracies)?);
        }
        Command::Eval { ckpt, data, out } => {
            let summary = run_eval(&ckpt, &data, &out)?;
            println!(
                "{}",
                serde_json::json!({"accuracy": summary.accuracy, "count": summary.count})
            );
        }
        Command::Report { runs, out } => {
            let bundle = run_report_dir(&runs, &out)?;
            println!("{}", serde_json::to_string(&bundle)?);
        }
        Command::Sweep {
            ratios,
            pred,
            cntx,
            count,
            test_count,
            steps,
            batch,
            lr,
            seed,
            out,
            vocab,
            reserve_vocab,
        } => {
            let ratios: Vec<f64> = ratios
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| HarnessError::BadArgument(format!("bad ratio {s:?}")))
                })
                .collect::<Result<_, _>>()?;
            let cfg = SweepConfig {
                ratios,
                pred: pred.into(),
                cntx: cntx.into(),
                train_count: count,
                test_count,
                steps,
                batch_size: batch,
                lr,
                seed,
            };
            let train_vocab = load_vocab(&vocab, false)?;
            let reserve = match &reserve_vocab {
                Some(p) => Vocabulary::from_path(p, &p.display().to_string())?,
                None => bundled_reserve_vocabulary(),
            };
            let rows = run_sweep(&cfg, &train_vocab, &reserve, &out)?;
            println!("{}", serde_json::to_string(&rows)?);
        }
        Command::Mutual {
            data,
            out,
            steps,
            batch,
            lr,
            kl_weight,
            seed,
            tests,
        } => {
            let cfg = MutualRunConfig {
                data_dir: data,
                steps,
                batch_size: batch,
                lr,
                kl_weight,
                seed,
            };
            let (r1, r2) = run_mutual(&cfg, &out, &tests)?;
            println!(
                "{}",
                serde_json::json!({
                    "theta1": r1.accuracies,
                    "theta2": r2.accuracies,
                })
            );
        }
        Command::Vocab { out, reserve, from } => {
            let vocab = load_vocab(&from, reserve)?;
            let mut f = std::fs::File::create(&out)?;
            vocab.export(&mut f)?;
            println!("{}", serde_json::json!({"words": vocab.len(), "file": out}));
        }
    }
    Ok(())
}

fn main() {
    vocablab_core::parallel::init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!(
            "{}",
            serde_json::json!({"error": e.kind(), "message": e.to_string()})
        );
        std::process::exit(1);
    }
}
