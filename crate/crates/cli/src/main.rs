use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use seqlearn::corpus::{load_pairs, split, tokenize, write_pairs, SentencePair};
use seqlearn::gradcheck::gradcheck;
use seqlearn::trainer::{
    self, load_init_checkpoint, load_model, parse_grid, sweep_csv, synth_corpus, Phase, SynthTask,
};
use seqlearn::{PresetName, ScheduleSpec, TrainConfig};

#[derive(Parser)]
#[command(
    name = "seqlearn",
    version,
    about = "Pointer-generator training with scheduled sampling, DAgger and REINFORCE"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// MLE pre-training from scratch
    Pretrain(TrainArgs),
    /// Fine-tune a pre-trained checkpoint with one of the presets
    Finetune {
        #[arg(long)]
        preset: PresetName,
        #[arg(long)]
        alpha: Option<ScheduleSpec>,
        #[arg(long)]
        beta: Option<ScheduleSpec>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score a checkpoint on a test file
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 8)]
        beam: usize,
    },
    /// Decode every line of a file
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// One source sentence per line; text after a tab is ignored
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 8)]
        beam: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a synthetic paraphrase corpus
    Synth {
        #[arg(long)]
        task: SynthTask,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        vocab: usize,
        #[arg(long, default_value_t = 10)]
        max_len: usize,
        /// Write train/val/test.tsv into this directory instead of stdout
        #[arg(long, requires = "split")]
        out_dir: Option<PathBuf>,
        /// Split sizes as TRAIN,VAL,TEST
        #[arg(long, value_delimiter = ',')]
        split: Option<Vec<usize>>,
    },
    /// Fine-tune once per grid line and tabulate test scores
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "DAGGER")]
        preset: PresetName,
        /// CSV destination; stdout if absent
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Compare analytic and finite-difference gradients on a tiny model
    Gradcheck {
        #[arg(long, default_value_t = 3)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Output checkpoint
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Checkpoint to fine-tune from
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    max_iterations: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// RunRecord CSV destination
    #[arg(long)]
    records: Option<PathBuf>,
    /// Extra overrides, applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl TrainArgs {
    fn resolve(&self, phase: Phase) -> Result<TrainConfig> {
        let mut cfg = TrainConfig {
            phase,
            ..TrainConfig::default()
        };
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
            cfg.phase = phase;
        }
        let paths = [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
            ("checkpoint", &self.checkpoint),
            ("init_checkpoint", &self.init),
            ("records", &self.records),
        ];
        for (key, value) in paths {
            if let Some(p) = value {
                cfg.set(key, &p.to_string_lossy())?;
            }
        }
        if let Some(n) = self.max_iterations {
            cfg.max_iterations = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read_split(path: Option<&PathBuf>, what: &str) -> Result<Vec<SentencePair>> {
    let path = path.with_context(|| format!("no {what} file given"))?;
    Ok(load_pairs(path, None)?.pairs)
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Pretrain(args) => {
            let cfg = args.resolve(Phase::Pretrain)?;
            let path = trainer::pretrain(&cfg)?;
            println!("{}", path.display());
        }
        Command::Finetune {
            preset,
            alpha,
            beta,
            train,
        } => {
            let mut cfg = train.resolve(Phase::Finetune)?;
            cfg.preset = preset;
            cfg.alpha = alpha.or(cfg.alpha);
            cfg.beta = beta.or(cfg.beta);
            cfg.validate()?;
            let path = trainer::finetune(&cfg)?;
            println!("{}", path.display());
        }
        Command::Evaluate { checkpoint, test, beam } => {
            let pairs = load_pairs(&test, None)?.pairs;
            let report = trainer::evaluate(&checkpoint, &pairs, beam)?;
            println!("{report}");
        }
        Command::Generate {
            checkpoint,
            input,
            beam,
            output,
        } => {
            let (params, vocab) = load_model(&checkpoint)?;
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let sources: Vec<Vec<String>> = text
                .lines()
                .map(|l| tokenize(l.split('\t').next().unwrap_or("")))
                .collect();
            let lines = trainer::generate(&params, &vocab, &sources, beam)?;
            let mut out = String::new();
            for l in lines {
                out.push_str(&l.join(" "));
                out.push('\n');
            }
            emit(output.as_deref(), &out)?;
        }
        Command::Synth {
            task,
            size,
            seed,
            vocab,
            max_len,
            out_dir,
            split: sizes,
        } => {
            let pairs = synth_corpus(task, vocab, size, max_len, seed)?;
            match (out_dir, sizes) {
                (Some(dir), Some(sizes)) => {
                    if sizes.len() != 3 {
                        bail!("--split takes exactly three sizes, got {}", sizes.len());
                    }
                    let s = split(&pairs, sizes[0], sizes[1], sizes[2], seed)?;
                    fs::create_dir_all(&dir)?;
                    write_pairs(dir.join("train.tsv"), &s.train)?;
                    write_pairs(dir.join("val.tsv"), &s.val)?;
                    write_pairs(dir.join("test.tsv"), &s.test)?;
                }
                (None, Some(_)) => bail!("--split needs --out-dir"),
                _ => {
                    let mut out = io::stdout().lock();
                    for p in &pairs {
                        writeln!(out, "{}\t{}", p.source.join(" "), p.target.join(" "))?;
                    }
                }
            }
        }
        Command::Sweep {
            grid,
            preset,
            output,
            train,
        } => {
            let mut cfg = train.resolve(Phase::Finetune)?;
            cfg.preset = preset;
            let text = fs::read_to_string(&grid).with_context(|| format!("reading {}", grid.display()))?;
            let points = parse_grid(&text)?;
            let (base, vocab) = load_init_checkpoint(&cfg)?;
            let train_pairs = read_split(cfg.train_path.as_ref(), "training")?;
            let val = read_split(cfg.val_path.as_ref(), "validation")?;
            let test = read_split(cfg.test_path.as_ref(), "test")?;
            let rows = trainer::sweep(&cfg, &base, &vocab, [&train_pairs, &val, &test], &points)?;
            emit(output.as_deref(), &sweep_csv(&rows))?;
        }
        Command::Gradcheck { seed, tolerance } => {
            let report = gradcheck(seed)?;
            println!("{:<12} {:>14} {:>14} {:>10}", "group", "analytic", "numeric", "rel_err");
            for g in &report.groups {
                println!(
                    "{:<12} {:>14.6e} {:>14.6e} {:>10.2e}",
                    g.name, g.analytic_norm, g.numeric_norm, g.rel_error
                );
            }
            let worst = report.max_rel_error();
            if worst > tolerance {
                bail!("max relative error {worst:.3e} exceeds {tolerance:e}");
            }
            println!("max relative error {worst:.3e}");
        }
    }
    Ok(())
}
