use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use typespan::app::{
    load_checkpoint, load_dataset, load_run_config, load_score_tables, load_synth_spec, model_gradcheck,
    save_checkpoint, save_dataset, save_score_tables, synth_dataset, write_json, write_jsonl, DatasetRecord, Lineage,
    RunConfig, SynthSpec,
};
use typespan::decoder::{decode, DecodeConfig, DecodeMode};
use typespan::evaluation::score;
use typespan::model::ModelConfig;
use typespan::tokenizer::split_words;
use typespan::trainer::{dataset_types, fit, TrainingExample};

#[derive(Parser)]
#[command(name = "typespan", version, about = "Open-type span NER: train, predict, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DecodeFlags {
    /// flat or nested
    #[arg(long, default_value = "flat")]
    mode: DecodeMode,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

impl DecodeFlags {
    fn config(&self) -> DecodeConfig {
        DecodeConfig::new(self.mode, self.threshold)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint, loss trace and dev report
    Train {
        /// TOML run configuration
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training set (defaults to the synthetic generator)
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        /// Maximum span width
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        neg_ratio: Option<f64>,
        #[arg(long)]
        drop_prob: Option<f64>,
        #[arg(long)]
        max_types: Option<usize>,
        /// Output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract entities from a dataset file or raw text
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset file whose sentences are tagged
        #[arg(long, conflicts_with = "text")]
        input: Option<PathBuf>,
        /// Raw sentence, split into words internally
        #[arg(long)]
        text: Option<String>,
        /// Comma-separated entity types (defaults to the input's gold types)
        #[arg(long, value_delimiter = ',')]
        types: Vec<String>,
        /// Types per forward pass; longer lists are chunked
        #[arg(long)]
        max_types: Option<usize>,
        #[command(flatten)]
        decode: DecodeFlags,
        /// Also export every score table to this file
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Prediction file (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against gold
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode an exported score-table file
    DecodeScores {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        decode: DecodeFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare autodiff gradients with finite differences
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds to check
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Coordinates sampled per parameter tensor
        #[arg(long, default_value_t = 6)]
        coords: usize,
        #[arg(long, default_value_t = 1e-3)]
        tol_f32: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol_f64: f64,
    },
    /// Generate synthetic train/dev dataset files
    SynthData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Train { config, train, dev, seed, steps, k, neg_ratio, drop_prob, max_types, out } => {
            let mut run = match &config {
                Some(p) => load_run_config(p)?,
                None => RunConfig::default(),
            };
            let t = &mut run.training;
            run.seed = seed.unwrap_or(run.seed);
            t.steps = steps.unwrap_or(t.steps);
            t.model.heads.max_width = k.unwrap_or(t.model.heads.max_width);
            t.neg_ratio = neg_ratio.unwrap_or(t.neg_ratio);
            t.drop_prob = drop_prob.unwrap_or(t.drop_prob);
            t.model.max_types = max_types.unwrap_or(t.model.max_types);
            run.train = train.or(run.train);
            run.dev = dev.or(run.dev);
            run.out = out.unwrap_or(run.out);
            train_cmd(&run)
        }
        Command::Predict { checkpoint, input, text, types, max_types, decode, scores, out } => {
            let (mut model, _) = load_checkpoint(&checkpoint)?;
            if let Some(m) = max_types {
                model.config.max_types = m;
            }
            let examples = match (input, text) {
                (Some(p), None) => load_dataset(&p)?,
                (None, Some(t)) => vec![TrainingExample::new("text", split_words(&t), Vec::new())?],
                _ => bail!("give exactly one of --input or --text"),
            };
            let types = if types.is_empty() { dataset_types(&[&examples]) } else { types };
            if types.is_empty() {
                bail!("no entity types: pass --types");
            }
            let cfg = decode.config();
            let mut records = Vec::with_capacity(examples.len());
            let mut tables = Vec::new();
            for ex in &examples {
                let table = model.score_table(&ex.words, &types).map_err(|e| e.for_example(&ex.id))?;
                let mentions = typespan::decoder::decode(&table, &cfg)?.mentions;
                records.push(DatasetRecord::from_prediction(&ex.id, &ex.words, &mentions));
                if scores.is_some() {
                    tables.push(table);
                }
            }
            if let Some(p) = scores {
                save_score_tables(&p, &tables)?;
            }
            emit_jsonl(out.as_deref(), &records)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { pred, gold, out } => {
            let (p, g) = (load_dataset(&pred)?, load_dataset(&gold)?);
            if let Some((a, b)) = p.iter().zip(&g).find(|(a, b)| a.words != b.words) {
                bail!("[app] prediction `{}` and gold `{}` have different words", a.id, b.id);
            }
            let report = score(
                &p.iter().map(|e| e.gold.clone()).collect::<Vec<_>>(),
                &g.iter().map(|e| e.gold.clone()).collect::<Vec<_>>(),
            )?;
            match out {
                Some(path) => write_json(&path, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::DecodeScores { input, decode: flags, out } => {
            let cfg = flags.config();
            let records = load_score_tables(&input)?
                .iter()
                .map(|t| decode(t, &cfg).map(|d| d.mentions))
                .collect::<typespan::Result<Vec<_>>>()?;
            emit_jsonl(out.as_deref(), &records)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { config, seed, seeds, coords, tol_f32, tol_f64 } => {
            let model_cfg = match &config {
                Some(p) => load_run_config(p)?.training.model,
                None => ModelConfig::default(),
            };
            let mut ok = true;
            println!("{:<6} {:<28} {:>8} {:>8} {:>12} {:>12}", "seed", "parameter", "checked", "kinks", "rel_err_f64", "rel_err_f32");
            for s in seed..seed + seeds {
                let start = Instant::now();
                let r = model_gradcheck(&model_cfg, s, coords)?;
                for (a, b) in r.f64.params.iter().zip(&r.f32.params) {
                    println!(
                        "{s:<6} {:<28} {:>8} {:>8} {:>12.3e} {:>12.3e}",
                        a.name, a.checked, a.kink_excluded, a.max_rel_err, b.max_rel_err
                    );
                }
                let pass = r.passes(tol_f32, tol_f64);
                println!(
                    "seed {s}: max f64 {:.3e} (tol {tol_f64:e}), max f32 {:.3e} (tol {tol_f32:e}), {:.1}s, {}",
                    r.f64.max_rel_err(),
                    r.f32.max_rel_err(),
                    start.elapsed().as_secs_f64(),
                    if pass { "pass" } else { "FAIL" }
                );
                ok &= pass;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::SynthData { config, seed, k, out } => {
            let mut spec = match &config {
                Some(p) => load_synth_spec(p)?,
                None => SynthSpec::default(),
            };
            spec.max_width = k.unwrap_or(spec.max_width);
            let (train, dev) = synth_dataset(&spec, seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            save_dataset(&out.join("train.jsonl"), &train)?;
            save_dataset(&out.join("dev.jsonl"), &dev)?;
            eprintln!("wrote {} train and {} dev sentences to {}", train.len(), dev.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn train_cmd(run: &RunConfig) -> Result<ExitCode> {
    let (train, dev) = match &run.train {
        Some(p) => {
            let train = load_dataset(p)?;
            let dev = match &run.dev {
                Some(d) => load_dataset(d)?,
                None => Vec::new(),
            };
            (train, dev)
        }
        None => synth_dataset(&run.synth, run.seed)?,
    };
    fs::create_dir_all(&run.out).with_context(|| format!("creating {}", run.out.display()))?;
    let start = Instant::now();
    let result = fit(&train, &dev, &run.training, run.seed)?;
    log::info!("trained {} steps in {:.1}s", run.training.steps, start.elapsed().as_secs_f64());
    let lineage = Lineage { seed: run.seed, steps: run.training.steps };
    save_checkpoint(&run.out.join("model.ckpt"), &result.model, &lineage)?;
    write_jsonl(&run.out.join("trace.jsonl"), &result.trace)?;
    if !dev.is_empty() {
        let types = dataset_types(&[&train, &dev]);
        let report = typespan::trainer::evaluate(&result.model, &dev, &types, &run.training.decode)?;
        write_json(&run.out.join("dev_report.json"), &report)?;
        println!("dev precision {:.4} recall {:.4} f1 {:.4}", report.precision, report.recall, report.f1);
    }
    if result.filtered_spans > 0 {
        log::warn!("{} gold spans wider than k were skipped during training", result.filtered_spans);
    }
    Ok(ExitCode::SUCCESS)
}

fn emit_jsonl<T: serde::Serialize>(out: Option<&Path>, records: &[T]) -> Result<()> {
    match out {
        Some(p) => write_jsonl(p, records)?,
        None => {
            for r in records {
                println!("{}", serde_json::to_string(r)?);
            }
        }
    }
    Ok(())
}
