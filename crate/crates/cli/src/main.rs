use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use optigan::config::TrainConfig;
use optigan::datasets::{
    grammar_corpus, load_trajectories_with, read_sentences, synth_stern_conversion, write_sentences,
    write_trajectories, SternConversionParams, TrajectoryRecord,
};
use optigan::discriminator::{Discriminator, DiscriminatorConfig};
use optigan::generator::{Generator, GeneratorConfig, OutputMode};
use optigan::harness::{
    bleu_reward, bleu_suite, evaluate_mcgrew, evaluate_nll_gen, evaluate_nll_real, mcgrew_reward, pretrain_mle,
    sample_real_records, sample_sentences, train_adversarial, Checkpoint, Dataset, HarnessConfig, Normalizer,
    OptimizerKind,
};
use optigan::objectives::{divergence_form, plugged_objective, FiniteDistribution};
use optigan::rewards::{corpus_bleu_percent, trajectory_mcgrew, McGrewParams};
use optigan::rng::rng_from;
use optigan::sequence::{RealSequence, TokenSequence};
use optigan::vocab::{build_vocab, decode, encode, Vocabulary};
use optigan::Error;

#[derive(Parser)]
#[command(name = "optigan", version, about = "Sequence GANs with goal-directed policy gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Training configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Text,
    Trajectory,
}

#[derive(Subcommand)]
enum Command {
    /// Builds a model for a dataset and fits it by maximum likelihood.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Sentences (one per line) or trajectory CSV.
        #[arg(long)]
        data: PathBuf,
        /// Output checkpoint.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        /// Adam learning rate for pretraining.
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        hidden: usize,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        #[arg(long, default_value_t = 16)]
        embed: usize,
        /// Text: padded sentence length.
        #[arg(long, default_value_t = 20)]
        seq_len: usize,
        /// Text: most frequent words kept.
        #[arg(long, default_value_t = 5000)]
        vocab_size: usize,
        /// Trajectory: steps per trajectory in the CSV.
        #[arg(long, default_value_t = 40)]
        steps: usize,
        /// Trajectory: seconds per step.
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
        /// Per-epoch metrics, JSON lines.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Adversarial training from a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        /// Text: BLEU order of the training reward.
        #[arg(long, default_value_t = 3)]
        bleu_order: usize,
        /// Text: reference sentences for the reward (defaults to the training data);
        /// only the first 500 are used.
        #[arg(long)]
        references: Option<PathBuf>,
        /// Metrics log, JSON lines (appended).
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Samples sentences or trajectories from a checkpoint.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Held-out NLL and goal scores of a checkpoint, printed as JSON.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Held-out sentences or trajectory CSV.
        #[arg(long)]
        data: PathBuf,
        /// Samples drawn for BLEU or the engagement score.
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Goal scores of existing samples, printed as JSON.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        input: PathBuf,
        /// Text: reference sentences.
        #[arg(long)]
        references: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        steps: usize,
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
    },
    /// Checks the divergence identity of the plugged-in objective on random distributions.
    VerifyTheory {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long, default_value_t = 8)]
        support: usize,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Writes a synthetic corpus or trajectory set.
    SynthData {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        steps: usize,
    },
}

const REWARD_REFERENCES: usize = 500;

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn invalid(e: impl Display) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

fn runtime(e: impl Display) -> Failure {
    Failure {
        code: 2,
        message: e.to_string(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(common: &Common) -> CliResult<TrainConfig> {
    if !common.config.is_file() {
        return Err(invalid(format!("config file not found: {}", common.config.display())));
    }
    let mut cfg = TrainConfig::load(&common.config).map_err(invalid)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{what} not found: {}", path.display())))
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint<f64>> {
    require_file(path, "checkpoint")?;
    Checkpoint::<f64>::load(path).map_err(invalid)
}

fn checkpoint_vocab(ck: &Checkpoint<f64>) -> Option<&Vocabulary> {
    match ck.generator_config.mode {
        OutputMode::Discrete { .. } => ck.vocab.as_ref(),
        OutputMode::Real { .. } => None,
    }
}

fn real_context(ck: &Checkpoint<f64>) -> CliResult<(Normalizer, f64)> {
    match (&ck.normalizer, ck.dt) {
        (Some(n), Some(dt)) => Ok((n.clone(), dt)),
        _ => Err(invalid("trajectory checkpoint lacks normalizer or dt")),
    }
}

fn load_sentences(path: &Path) -> CliResult<Vec<Vec<String>>> {
    require_file(path, "data file")?;
    read_sentences(path).map_err(invalid)
}

fn load_records(path: &Path, steps: usize, dt: f64) -> CliResult<Vec<TrajectoryRecord>> {
    require_file(path, "data file")?;
    let records = load_trajectories_with(path, steps, dt).map_err(invalid)?;
    if records.is_empty() {
        return Err(invalid(Error::EmptyCorpus));
    }
    Ok(records)
}

fn normalized(records: &[TrajectoryRecord], norm: &Normalizer) -> CliResult<Dataset<f64>> {
    let seqs = records
        .iter()
        .map(|r| norm.apply::<f64>(&r.to_joint()))
        .collect::<Result<Vec<RealSequence<f64>>, _>>()
        .map_err(invalid)?;
    Ok(Dataset::Real(seqs))
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Pretrain {
            common,
            kind,
            data,
            out,
            epochs,
            batch_size,
            lr,
            hidden,
            layers,
            embed,
            seq_len,
            vocab_size,
            steps,
            dt,
            metrics,
        } => {
            let cfg = load_config(&common)?;
            let harness = HarnessConfig {
                batch_size,
                generator_optimizer: OptimizerKind::adam(lr),
                ..HarnessConfig::default()
            };
            harness.validate().map_err(invalid)?;
            let mut rng = rng_from(cfg.seed);
            let (mut gen, disc, dataset, vocab, norm, dt) = match kind {
                Kind::Text => {
                    let sentences = load_sentences(&data)?;
                    let vocab = build_vocab(&sentences, vocab_size).map_err(invalid)?;
                    let seqs: Vec<TokenSequence> = sentences.iter().map(|s| encode(s, &vocab, seq_len)).collect();
                    let mut gcfg = GeneratorConfig::text(vocab.len(), vocab.pad_id(), vocab.start_id(), seq_len);
                    gcfg.hidden = hidden;
                    gcfg.layers = layers;
                    gcfg.embed_dim = embed;
                    let dcfg = DiscriminatorConfig {
                        embed_dim: embed,
                        hidden,
                        ..DiscriminatorConfig::text(vocab.len(), seq_len)
                    };
                    let gen = Generator::<f64>::new(gcfg, &mut rng).map_err(invalid)?;
                    let disc = Discriminator::<f64>::new(dcfg, &mut rng).map_err(invalid)?;
                    (gen, disc, Dataset::Tokens(seqs), Some(vocab), None, None)
                }
                Kind::Trajectory => {
                    let records = load_records(&data, steps, dt)?;
                    let joint: Vec<RealSequence<f64>> = records.iter().map(|r| r.to_joint()).collect();
                    let norm = Normalizer::fit(&joint).map_err(invalid)?;
                    let width = joint[0].features();
                    let mut gcfg = GeneratorConfig::trajectory(width, steps);
                    gcfg.hidden = hidden;
                    gcfg.layers = layers;
                    let dcfg = DiscriminatorConfig {
                        embed_dim: embed,
                        hidden,
                        ..DiscriminatorConfig::trajectory(width, steps)
                    };
                    let gen = Generator::<f64>::new(gcfg, &mut rng).map_err(invalid)?;
                    let disc = Discriminator::<f64>::new(dcfg, &mut rng).map_err(invalid)?;
                    let dataset = normalized(&records, &norm)?;
                    (gen, disc, dataset, None, Some(norm), Some(dt))
                }
            };
            let rows = pretrain_mle(&mut gen, &dataset, epochs, &cfg, &harness).map_err(runtime)?;
            if let Some(path) = metrics {
                let mut text = String::new();
                for r in &rows {
                    text.push_str(&r.to_json_line().map_err(runtime)?);
                    text.push('\n');
                }
                write_text(&path, &text)?;
            }
            let mut ck = Checkpoint::new(&gen, Some(&disc), cfg);
            ck.vocab = vocab;
            ck.normalizer = norm;
            ck.dt = dt;
            ck.save(&out).map_err(runtime)?;
            info!("pretrained {} epochs on {} sequences", epochs, dataset.len());
            println!("{}", json!({ "checkpoint": out, "epochs": epochs, "sequences": dataset.len() }));
            Ok(())
        }
        Command::Train {
            common,
            checkpoint,
            data,
            out,
            steps,
            batch_size,
            bleu_order,
            references,
            metrics,
        } => {
            let cfg = load_config(&common)?;
            let ck = load_checkpoint(&checkpoint)?;
            let mut gen = ck.generator().map_err(invalid)?;
            let mut disc = ck
                .discriminator()
                .map_err(invalid)?
                .ok_or_else(|| invalid("checkpoint has no discriminator"))?;
            let harness = HarnessConfig {
                batch_size,
                ..HarnessConfig::default()
            };
            harness.validate().map_err(invalid)?;
            let (dataset, mut reward) = if let Some(vocab) = checkpoint_vocab(&ck) {
                let seq_len = gen.seq_len();
                let train: Vec<TokenSequence> =
                    load_sentences(&data)?.iter().map(|s| encode(s, vocab, seq_len)).collect();
                let mut refs: Vec<TokenSequence> = match &references {
                    Some(p) => load_sentences(p)?.iter().map(|s| encode(s, vocab, seq_len)).collect(),
                    None => train.clone(),
                };
                refs.truncate(REWARD_REFERENCES);
                (Dataset::Tokens(train), bleu_reward(&refs, bleu_order).map_err(invalid)?)
            } else {
                let (norm, dt) = real_context(&ck)?;
                let records = load_records(&data, gen.seq_len(), dt)?;
                let dataset = normalized(&records, &norm)?;
                (dataset, mcgrew_reward(McGrewParams::default(), norm, dt).map_err(invalid)?)
            };
            let manifest =
                train_adversarial(&mut gen, &mut disc, &dataset, &cfg, &harness, &mut reward, steps).map_err(runtime)?;
            if let Some(path) = metrics {
                manifest.append_metrics(&path).map_err(runtime)?;
            }
            let mut next = Checkpoint::new(&gen, Some(&disc), cfg);
            next.vocab = ck.vocab.clone();
            next.normalizer = ck.normalizer.clone();
            next.dt = ck.dt;
            next.step = ck.step + steps;
            next.save(&out).map_err(runtime)?;
            let last = manifest.rows.last();
            println!(
                "{}",
                json!({
                    "checkpoint": out,
                    "steps": steps,
                    "total_step": next.step,
                    "last_total_loss": last.map(|r| r.total),
                    "last_mean_reward": last.map(|r| r.mean_reward),
                })
            );
            Ok(())
        }
        Command::Generate {
            common,
            checkpoint,
            count,
            out,
        } => {
            let cfg = load_config(&common)?;
            let ck = load_checkpoint(&checkpoint)?;
            let gen = ck.generator().map_err(invalid)?;
            let mut rng = rng_from(cfg.seed);
            if let Some(vocab) = checkpoint_vocab(&ck) {
                let samples = sample_sentences(&gen, count, &mut rng).map_err(runtime)?;
                let sentences = samples
                    .iter()
                    .map(|s| decode(s, vocab))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(runtime)?;
                write_sentences(&out, &sentences).map_err(runtime)?;
            } else {
                let (norm, dt) = real_context(&ck)?;
                let records = sample_real_records(&gen, count, cfg.sigma_sample, &norm, dt, &mut rng).map_err(runtime)?;
                write_trajectories(&out, &records).map_err(runtime)?;
            }
            println!("{}", json!({ "out": out, "count": count }));
            Ok(())
        }
        Command::Evaluate {
            common,
            checkpoint,
            data,
            count,
        } => {
            let cfg = load_config(&common)?;
            let ck = load_checkpoint(&checkpoint)?;
            let gen = ck.generator().map_err(invalid)?;
            let mut rng = rng_from(cfg.seed);
            let report = if let Some(vocab) = checkpoint_vocab(&ck) {
                let test: Vec<TokenSequence> =
                    load_sentences(&data)?.iter().map(|s| encode(s, vocab, gen.seq_len())).collect();
                let nll = evaluate_nll_gen(&gen, &test).map_err(runtime)?;
                let samples = sample_sentences(&gen, count, &mut rng).map_err(runtime)?;
                let bleu = bleu_suite(&samples, &test).map_err(runtime)?;
                json!({ "nll_gen": nll, "bleu_2": bleu[0], "bleu_3": bleu[1], "bleu_4": bleu[2], "bleu_5": bleu[3] })
            } else {
                let (norm, dt) = real_context(&ck)?;
                let records = load_records(&data, gen.seq_len(), dt)?;
                let Dataset::Real(seqs) = normalized(&records, &norm)? else {
                    unreachable!()
                };
                let nll = evaluate_nll_real(&gen, &seqs, cfg.sigma_train, &mut rng).map_err(runtime)?;
                let params = McGrewParams::default();
                let score =
                    evaluate_mcgrew(&gen, count, cfg.sigma_sample, &norm, dt, &params, &mut rng).map_err(runtime)?;
                let data_score = records.iter().map(|r| trajectory_mcgrew(r, &params).reported()).sum::<f64>()
                    / records.len() as f64;
                json!({ "nll_real": nll, "mcgrew": score, "mcgrew_data": data_score })
            };
            println!("{report}");
            Ok(())
        }
        Command::Score {
            common,
            kind,
            input,
            references,
            steps,
            dt,
        } => {
            load_config(&common)?;
            let report = match kind {
                Kind::Text => {
                    let refs_path = references.ok_or_else(|| invalid("--references is required for text scoring"))?;
                    let samples = load_sentences(&input)?;
                    let refs = load_sentences(&refs_path)?;
                    let mut out = serde_json::Map::new();
                    for n in 2..=5 {
                        out.insert(
                            format!("bleu_{n}"),
                            json!(corpus_bleu_percent(&samples, &refs, n).map_err(invalid)?),
                        );
                    }
                    serde_json::Value::Object(out)
                }
                Kind::Trajectory => {
                    let records = load_records(&input, steps, dt)?;
                    let params = McGrewParams::default();
                    let scores: Vec<f64> = records.iter().map(|r| trajectory_mcgrew(r, &params).reported()).collect();
                    json!({ "mcgrew": scores.iter().sum::<f64>() / scores.len() as f64, "trajectories": scores.len() })
                }
            };
            println!("{report}");
            Ok(())
        }
        Command::VerifyTheory {
            common,
            pairs,
            support,
            tolerance,
        } => {
            let cfg = load_config(&common)?;
            if support < 2 || pairs == 0 {
                return Err(invalid("need --support >= 2 and --pairs >= 1"));
            }
            let mut rng = rng_from(cfg.seed);
            let mut worst: f64 = 0.0;
            for _ in 0..pairs {
                let pd = FiniteDistribution::<f64>::random(support, &mut rng);
                let pg = FiniteDistribution::<f64>::random(support, &mut rng);
                let lhs = plugged_objective(&pd, &pg).map_err(runtime)?;
                let rhs = divergence_form(&pd, &pg).map_err(runtime)?;
                worst = worst.max((lhs - rhs).abs());
            }
            println!("{}", json!({ "pairs": pairs, "support": support, "max_residual": worst }));
            if worst > tolerance {
                return Err(runtime(format!("identity residual {worst:e} exceeds {tolerance:e}")));
            }
            Ok(())
        }
        Command::SynthData {
            common,
            kind,
            count,
            out,
            steps,
        } => {
            let cfg = load_config(&common)?;
            match kind {
                Kind::Text => {
                    let corpus = grammar_corpus(count, &mut rng_from(cfg.seed));
                    write_sentences(&out, &corpus).map_err(runtime)?;
                }
                Kind::Trajectory => {
                    let params = SternConversionParams {
                        seed: cfg.seed,
                        steps,
                        ..SternConversionParams::default()
                    };
                    params.validate().map_err(invalid)?;
                    let records = synth_stern_conversion(&params, count).map_err(runtime)?;
                    write_trajectories(&out, &records).map_err(runtime)?;
                }
            }
            println!("{}", json!({ "out": out, "count": count }));
            Ok(())
        }
    }
}
