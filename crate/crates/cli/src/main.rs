//! `relcue`: simulate two-speaker reverberant mixtures, label relative and
//! independent cues, generate text prompts, and run the two-stage
//! target-speaker classification harness.
//!
//! Exit codes: 0 success, 1 usage, 2 data/input error, 3 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use relcue_core::analysis::{accuracy_by_cue, group_crosstab, logistic_curves, Provenance, Report};
use relcue_core::classifier::{load_head, save_head, save_trace, train_projection, ProjectionHead};
use relcue_core::config::PipelineConfig;
use relcue_core::error::Result;
use relcue_core::manifest::Manifest;
use relcue_core::pipeline::{
    build_provider, build_training_set, classify_mixture, evaluate, generate_prompts, label_cues,
    load_eval_rows, save_eval_rows, simulate, Dataset,
};

#[derive(Parser)]
#[command(
    name = "relcue",
    version,
    about = "Relative-cue mixture simulation and two-stage text-guided target-speech evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration file (TOML); defaults apply when omitted.
    #[arg(long, env = "RELCUE_CONFIG")]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, env = "RELCUE_SEED")]
    seed: Option<u64>,
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, env = "RELCUE_JOBS", default_value_t = 0)]
    jobs: usize,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render mixtures from a manifest into a dataset directory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Utterance manifest (JSON Lines).
        #[arg(long, env = "RELCUE_MANIFEST")]
        manifest: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Mixture count (defaults to the split's configured count).
        #[arg(long)]
        count: Option<usize>,
        /// Manifest split to draw sources from.
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Extract per-utterance attribute vectors from a manifest.
    Attributes {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "RELCUE_MANIFEST")]
        manifest: PathBuf,
        /// Output JSON-Lines file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit quantizers and write cue labels into dataset metadata.
    Cues {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Generate prompt records for every labeled mixture.
    Prompts {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Include or drop similar/Same cues (overrides config).
        #[arg(long)]
        filter_similar: Option<bool>,
    },
    /// Train the prompt projection head on a dataset split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Head checkpoint output path; the loss trace lands next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        /// Embedding provider override: "oracle" or "store".
        #[arg(long, env = "RELCUE_PROVIDER")]
        provider: Option<String>,
    },
    /// Classify the prompts of one mixture and print the decisions.
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Mixture id (e.g. mix_000003).
        #[arg(long)]
        mixture: String,
        /// Trained head checkpoint (identity head when omitted).
        #[arg(long)]
        head: Option<PathBuf>,
        #[arg(long, env = "RELCUE_PROVIDER")]
        provider: Option<String>,
    },
    /// Classify every prompt of every mixture into an evaluation-row CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        head: Option<PathBuf>,
        #[arg(long, env = "RELCUE_PROVIDER")]
        provider: Option<String>,
    },
    /// Aggregate evaluation rows into report tables.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Evaluation rows CSV from `evaluate`.
        #[arg(long)]
        rows: PathBuf,
        /// Report output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are not errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn apply_provider_override(config: &mut PipelineConfig, provider: &Option<String>) {
    if let Some(kind) = provider {
        config.provider.kind = kind.clone();
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            common,
            manifest,
            out,
            count,
            split,
        } => {
            let config = common.load()?;
            let manifest = Manifest::load(&manifest)?;
            let count = count.unwrap_or(match split.as_str() {
                "valid" => config.dataset.valid_count,
                "test" => config.dataset.test_count,
                _ => config.dataset.train_count,
            });
            let dataset = simulate(&manifest, &config, &split, count, &out, common.jobs)?;
            println!(
                "simulated {} mixtures into {}",
                dataset.index.mixtures.len(),
                out.display()
            );
            Ok(())
        }
        Command::Attributes {
            common,
            manifest,
            out,
        } => {
            let config = common.load()?;
            let manifest = Manifest::load(&manifest)?;
            let mut lines = String::new();
            for entry in &manifest.entries {
                let wav = relcue_core::wave::read_wav(&entry.wav_path)?;
                let trimmed = relcue_core::mixer::trim_silence(&wav, &entry.meta)?;
                let meta = entry.meta.rebased(trimmed.start_s, trimmed.end_s);
                let av = relcue_core::attributes::extract_all(
                    &trimmed.buffer,
                    &meta,
                    None,
                    &config.attributes,
                )?;
                let row = serde_json::json!({
                    "id": entry.meta.utterance_id,
                    "speaker": entry.meta.speaker_id,
                    "attributes": av,
                });
                lines.push_str(&serde_json::to_string(&row)?);
                lines.push('\n');
            }
            std::fs::write(&out, lines)?;
            println!("wrote attributes for {} utterances", manifest.entries.len());
            Ok(())
        }
        Command::Cues { common, dataset } => {
            let config = common.load()?;
            let dataset = Dataset::load(&dataset)?;
            label_cues(&dataset, &config)?;
            println!("labeled {} mixtures", dataset.index.mixtures.len());
            Ok(())
        }
        Command::Prompts {
            common,
            dataset,
            filter_similar,
        } => {
            let mut config = common.load()?;
            if let Some(f) = filter_similar {
                config.prompts.filter_similar = f;
            }
            let dataset = Dataset::load(&dataset)?;
            generate_prompts(&dataset, &config)?;
            println!(
                "generated prompts for {} mixtures",
                dataset.index.mixtures.len()
            );
            Ok(())
        }
        Command::Train {
            common,
            dataset,
            out,
            split,
            provider,
        } => {
            let mut config = common.load()?;
            apply_provider_override(&mut config, &provider);
            let dataset = Dataset::load(&dataset)?;
            let provider = build_provider(&dataset, &config)?;
            let samples = build_training_set(&dataset, &config, &provider, &split)?;
            let mut rng = relcue_core::rng::stream_rng(config.seed, "head-init", 0);
            let head = ProjectionHead::random(provider.dimension(), provider.dimension(), &mut rng);
            let (head, trace) =
                train_projection(&samples, head, &config.classifier, &config.training)?;
            save_head(&out, &head)?;
            let trace_path = out.with_extension("trace.csv");
            save_trace(&trace_path, &trace)?;
            let final_loss = trace.last().map_or(f64::NAN, |t| t.loss);
            println!(
                "trained on {} samples, final batch loss {final_loss:.6}, head at {}",
                samples.len(),
                out.display()
            );
            Ok(())
        }
        Command::Classify {
            common,
            dataset,
            mixture,
            head,
            provider,
        } => {
            let mut config = common.load()?;
            apply_provider_override(&mut config, &provider);
            let dataset = Dataset::load(&dataset)?;
            let provider = build_provider(&dataset, &config)?;
            let head = head.map(|p| load_head(&p)).transpose()?;
            let decisions =
                classify_mixture(&dataset, &config, &provider, head.as_ref(), &mixture)?;
            for (prompt, decision) in decisions {
                let cues: Vec<&str> = prompt.cue_types.iter().map(|a| a.id()).collect();
                println!(
                    "{mixture} [{}] pred_channel={} prob={:.4} sim1={:.4} sim2={:.4} target={} \"{}\"",
                    cues.join("+"),
                    decision.pred_index,
                    decision.prob,
                    decision.sim1,
                    decision.sim2,
                    prompt.target_index,
                    prompt.text
                );
            }
            Ok(())
        }
        Command::Evaluate {
            common,
            dataset,
            out,
            head,
            provider,
        } => {
            let mut config = common.load()?;
            apply_provider_override(&mut config, &provider);
            let dataset = Dataset::load(&dataset)?;
            let provider = build_provider(&dataset, &config)?;
            let head = head.map(|p| load_head(&p)).transpose()?;
            let rows = evaluate(&dataset, &config, &provider, head.as_ref(), common.jobs)?;
            save_eval_rows(&out, &rows)?;
            let correct = rows.iter().filter(|r| r.correct()).count();
            println!(
                "evaluated {} prompts, accuracy {:.4}",
                rows.len(),
                correct as f64 / rows.len().max(1) as f64
            );
            Ok(())
        }
        Command::Analyze {
            common,
            dataset,
            rows,
            out,
        } => {
            let config = common.load()?;
            let dataset = Dataset::load(&dataset)?;
            let rows = load_eval_rows(&rows)?;
            let quantizers = dataset.quantizers().unwrap_or_default();
            let report = Report {
                provenance: Provenance {
                    dataset_hash: dataset.content_hash()?,
                    config_hash: config.content_hash()?,
                    seed: config.seed,
                },
                accuracy: accuracy_by_cue(&rows),
                logistic: logistic_curves(&rows),
                crosstabs: group_crosstab(&rows, &quantizers),
            };
            relcue_core::analysis::export_report(&report, &out)?;
            println!("report written to {}", out.display());
            Ok(())
        }
    }
}
