//! Command-line surface for the fact-to-biography pipeline. All real work
//! lives in the library; this binary parses flags, applies optional
//! `key=value` config files, and maps errors onto exit codes:
//! 0 success, 1 usage, 2 data error, 3 numeric failure.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use biogen::commands::{
    cmd_eval, cmd_generate, cmd_lm_ppl, cmd_lm_train, cmd_prepare, cmd_report, cmd_train,
    load_config_file, EvalOpts, GenerateOpts, GenerationSource, LmPplOpts, LmTrainOpts,
    PrepareOpts, ReportOpts, TrainOpts,
};
use biogen::corpus::DatasetConfig;
use biogen::model::{Hyperparams, TrainMode};
use biogen::ngram::TemplatingScheme;

#[derive(Parser)]
#[command(name = "biogen", version, about = "Fact-to-biography generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, split and index a raw fact/sentence corpus.
    Prepare(PrepareArgs),
    /// Train a seq2seq model (plain or with the autoencoding objective).
    Train(TrainArgs),
    /// Generate sentences for a split with the baseline or a checkpoint.
    Generate(GenerateArgs),
    /// Train a Kneser-Ney n-gram language model on a templated split.
    LmTrain(LmTrainArgs),
    /// Perplexity of a saved language model on a templated split.
    LmPpl(LmPplArgs),
    /// Score hypotheses against references: BLEU, intervals, fact metrics.
    Eval(EvalArgs),
    /// Combine eval reports and preference votes into one summary.
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Flat key=value config file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<BTreeMap<String, String>, biogen::Error> {
        match &self.config {
            Some(path) => load_config_file(path),
            None => Ok(BTreeMap::new()),
        }
    }
}

fn pick<T: std::str::FromStr>(
    flag: Option<T>,
    map: &BTreeMap<String, String>,
    key: &str,
    default: T,
) -> Result<T, biogen::Error> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match map.get(key) {
        Some(raw) => raw.parse().map_err(|_| {
            biogen::Error::Invalid(format!("config key {key}: cannot parse {raw:?}"))
        }),
        None => Ok(default),
    }
}

#[derive(Args)]
struct PrepareArgs {
    /// Raw JSON-lines corpus: {"title", "facts": [{"slot", "value"}], "sentence"}.
    #[arg(long)]
    raw: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    min_len: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    min_facts: Option<usize>,
    #[arg(long)]
    top_k_slots: Option<usize>,
    /// Comma-separated train,dev,test fractions.
    #[arg(long)]
    split_ratios: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    copy_budget: Option<usize>,
    #[arg(long)]
    max_vocab: Option<usize>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset_dir: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Training objective: s2s or s2s_ae.
    #[arg(long, default_value = "s2s_ae")]
    mode: TrainMode,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    ae_weight: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    max_decode_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate dev loss every N steps (0 disables early stopping).
    #[arg(long)]
    eval_every: Option<u64>,
    /// Stop after this many evaluations without dev improvement.
    #[arg(long)]
    patience: Option<usize>,
    /// Disable attention in the backward (reconstruction) network.
    #[arg(long)]
    no_backward_attention: bool,
    /// Resume from an existing checkpoint (hyperparameters come from it).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Training log TSV (default: checkpoint path with .log.tsv).
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct GenerateSource {
    /// Use the deterministic template baseline.
    #[arg(long)]
    baseline: bool,
    /// Use a trained checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    dataset_dir: PathBuf,
    #[arg(long, default_value = "dev")]
    split: String,
    #[command(flatten)]
    source: GenerateSource,
    /// Output TSV: id <TAB> sentence.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LmTrainArgs {
    #[arg(long)]
    dataset_dir: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
    /// Templating scheme: none, title or full.
    #[arg(long, default_value = "none")]
    scheme: TemplatingScheme,
    #[arg(long, default_value_t = 5)]
    order: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LmPplArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset_dir: PathBuf,
    #[arg(long, default_value = "dev")]
    split: String,
    #[arg(long, default_value = "none")]
    scheme: TemplatingScheme,
}

#[derive(Args)]
struct EvalArgs {
    /// Hypotheses TSV from `generate`.
    #[arg(long)]
    hyps: PathBuf,
    /// References: a split .jsonl (enables fact metrics) or a TSV.
    #[arg(long)]
    refs: PathBuf,
    /// Fact-mention annotations (JSON lines).
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// System name for annotation lookup (default: hypotheses header).
    #[arg(long)]
    system: Option<String>,
    /// Annotated system treated as the reference side.
    #[arg(long, default_value = "wiki")]
    reference_system: String,
    /// Report path prefix (writes .json and .tsv).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Flag fact-count groups smaller than this.
    #[arg(long, default_value_t = 5)]
    min_group: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Eval report .json files.
    #[arg(long, required = true, num_args = 1..)]
    evals: Vec<PathBuf>,
    /// Preference votes (JSON lines).
    #[arg(long)]
    preferences: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_ratios(raw: &str) -> Result<[f64; 3], biogen::Error> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| biogen::Error::Invalid(format!("bad split ratios {raw:?}")))?;
    if parts.len() != 3 {
        return Err(biogen::Error::Invalid(
            "split ratios need exactly three fractions".into(),
        ));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn run(cli: Cli) -> Result<(), biogen::Error> {
    match cli.command {
        Command::Prepare(args) => {
            let map = args.config.load()?;
            let defaults = DatasetConfig::default();
            let ratios = match (&args.split_ratios, map.get("split_ratios")) {
                (Some(raw), _) => parse_ratios(raw)?,
                (None, Some(raw)) => parse_ratios(raw)?,
                (None, None) => defaults.split_ratios,
            };
            let opts = PrepareOpts {
                raw: args.raw,
                out_dir: args.out_dir,
                cfg: DatasetConfig {
                    min_len: pick(args.min_len, &map, "min_len", defaults.min_len)?,
                    max_len: pick(args.max_len, &map, "max_len", defaults.max_len)?,
                    min_facts: pick(args.min_facts, &map, "min_facts", defaults.min_facts)?,
                    top_k_slots: pick(args.top_k_slots, &map, "top_k_slots", defaults.top_k_slots)?,
                    split_ratios: ratios,
                    seed: pick(args.seed, &map, "seed", defaults.seed)?,
                },
                copy_budget: pick(args.copy_budget, &map, "copy_budget", 4)?,
                max_vocab: pick(args.max_vocab, &map, "max_vocab", 100_000)?,
            };
            let manifest = cmd_prepare(&opts)?;
            println!(
                "prepared {} train / {} dev / {} test (input {}, dropped: {} short, {} long, {} few-facts)",
                manifest.counts.train,
                manifest.counts.dev,
                manifest.counts.test,
                manifest.stats.input,
                manifest.stats.dropped_short,
                manifest.stats.dropped_long,
                manifest.stats.dropped_few_facts
            );
            println!("vocab {} tokens, hash {}", manifest.max_vocab.min(usize::MAX), &manifest.vocab_hash[..12]);
            Ok(())
        }
        Command::Train(args) => {
            let map = args.config.load()?;
            let d = Hyperparams::default();
            let hp = Hyperparams {
                vocab_size: d.vocab_size, // resolved from the dataset vocabulary
                embed_dim: pick(args.embed_dim, &map, "embed_dim", d.embed_dim)?,
                hidden_dim: pick(args.hidden_dim, &map, "hidden_dim", d.hidden_dim)?,
                layers: pick(args.layers, &map, "layers", d.layers)?,
                batch_size: pick(args.batch_size, &map, "batch_size", d.batch_size)?,
                learning_rate: pick(args.learning_rate, &map, "learning_rate", d.learning_rate)?,
                max_decode_len: pick(args.max_decode_len, &map, "max_decode_len", d.max_decode_len)?,
                ae_weight: pick(args.ae_weight, &map, "ae_weight", d.ae_weight)?,
                clip_norm: pick(args.clip_norm, &map, "clip_norm", d.clip_norm)?,
                backward_attention: !args.no_backward_attention,
                seed: pick(args.seed, &map, "seed", d.seed)?,
            };
            let opts = TrainOpts {
                dataset_dir: args.dataset_dir,
                out: args.out,
                log: args.log,
                mode: args.mode,
                hp,
                steps: pick(args.steps, &map, "steps", 1000)?,
                eval_every: pick(args.eval_every, &map, "eval_every", 0)?,
                patience: pick(args.patience, &map, "patience", 3)?,
                resume: args.resume,
            };
            let summary = cmd_train(&opts)?;
            println!(
                "trained {} steps (now at step {}): forward {:.4}, reconstruction {:.4}, total {:.4}{}",
                summary.steps_run,
                summary.final_step,
                summary.forward_loss,
                summary.reconstruction_loss,
                summary.total,
                if summary.stopped_early { " (early stop)" } else { "" }
            );
            Ok(())
        }
        Command::Generate(args) => {
            let source = if args.source.baseline {
                GenerationSource::Baseline
            } else {
                GenerationSource::Checkpoint(
                    args.source.checkpoint.expect("clap group guarantees one"),
                )
            };
            let n = cmd_generate(&GenerateOpts {
                dataset_dir: args.dataset_dir,
                split: args.split,
                source,
                out: args.out.clone(),
            })?;
            println!("wrote {n} sentences to {}", args.out.display());
            Ok(())
        }
        Command::LmTrain(args) => {
            let summary = cmd_lm_train(&LmTrainOpts {
                dataset_dir: args.dataset_dir,
                split: args.split,
                scheme: args.scheme,
                order: args.order,
                out: args.out,
            })?;
            for o in &summary.fallback_orders {
                eprintln!("warning: order {o} fell back to absolute discounting (degenerate count-of-counts)");
            }
            println!(
                "trained {}-gram model on {} sentences ({} prediction tokens)",
                args.order, summary.sentences, summary.vocab
            );
            Ok(())
        }
        Command::LmPpl(args) => {
            let ppl = cmd_lm_ppl(&LmPplOpts {
                model: args.model,
                dataset_dir: args.dataset_dir,
                split: args.split.clone(),
                scheme: args.scheme,
            })?;
            println!("perplexity({}, {}) = {:.4}", args.split, args.scheme, ppl);
            Ok(())
        }
        Command::Eval(args) => {
            let report = cmd_eval(&EvalOpts {
                hyps: args.hyps,
                refs: args.refs,
                annotations: args.annotations,
                system: args.system,
                reference_system: args.reference_system,
                out: args.out,
                seed: args.seed,
                samples: args.samples,
                min_group: args.min_group,
            })?;
            println!(
                "{}: BLEU {:.2} (95% CI {:.2}-{:.2}) over {} instances",
                report.system, report.bleu, report.bleu_ci.0, report.bleu_ci.1, report.instances
            );
            if let Some(prf) = report.content {
                println!(
                    "content selection P {:.3} R {:.3} F1 {:.3}",
                    prf.precision, prf.recall, prf.f1
                );
            }
            if let Some(prf) = report.hallucination {
                println!(
                    "hallucination P {:.3} R {:.3} F1 {:.3}",
                    prf.precision, prf.recall, prf.f1
                );
            }
            Ok(())
        }
        Command::Report(args) => {
            cmd_report(&ReportOpts {
                evals: args.evals,
                preferences: args.preferences,
                out: args.out.clone(),
            })?;
            println!("wrote {}", args.out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print to stdout and exit 0; real usage errors
            // exit 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
