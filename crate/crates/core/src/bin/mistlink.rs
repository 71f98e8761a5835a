use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mistlink::encoder::{EncoderSpec, FeatureEncoder, DEFAULT_FEATURE_DIM, DEFAULT_HASH_SEED};
use mistlink::pipeline::{self, PipelineConfig};
use mistlink::synthetic::{planted_corpus, PlantedSpec};
use mistlink::{Error, ModelKind, Mode, Result};

#[derive(Parser)]
#[command(name = "mistlink", version, about = "Misinformation target detection by link prediction")]
struct Cli {
    /// TOML pipeline config; supplies defaults for every command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// all | prototypical
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Model kind for train and run; model file for calibrate, predict and predict-bc.
    #[arg(long, global = true)]
    model: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Remove near-duplicate tweets.
    Dedup {
        #[arg(long = "in", alias = "input")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// BM25 candidates per target, pooled over the expanded query.
    Retrieve {
        /// Deduplicated tweets to index.
        #[arg(long = "index-from", alias = "tweets")]
        tweets: PathBuf,
        #[arg(long)]
        mists: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Split judgments into train/dev/test by tweet.
    Split {
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long)]
        tweets: PathBuf,
        #[arg(long)]
        mists: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Seed FCGs from dev, extend with train, write graph.json.
    BuildGraph {
        /// Target list; defaults to the targets named in the judgments.
        #[arg(long)]
        mists: Option<PathBuf>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a link-prediction model.
    Train {
        #[arg(long)]
        graph: PathBuf,
        /// Defaults to the config's tweets input.
        #[arg(long)]
        tweets: Option<PathBuf>,
        /// Defaults to the config's targets input.
        #[arg(long)]
        mists: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Dev judgments; when given, the saved model is also calibrated.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the binary-classification baseline.
    TrainBc {
        #[command(flatten)]
        encoder: EncoderArgs,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        tweets: PathBuf,
        #[arg(long)]
        mists: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Freeze embeddings and calibrate thresholds on dev.
    Calibrate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        tweets: PathBuf,
        #[arg(long)]
        mists: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict targets for tweets with a calibrated model.
    Predict {
        /// Accepted for symmetry; the calibrated model carries its graph.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        tweets: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict targets with the binary baseline.
    PredictBc {
        #[arg(long)]
        tweets: PathBuf,
        #[arg(long)]
        mists: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Micro P/R/F1 and per-target report.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline from the config file.
    Run {
        #[command(flatten)]
        encoder: EncoderArgs,
        /// Rerun stages even if their outputs exist.
        #[arg(long)]
        force: bool,
    },
    /// Write a planted synthetic corpus.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(clap::Args)]
struct EncoderArgs {
    /// hashed | precomputed
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    features_dim: Option<usize>,
    /// JSONL of {"id", "vector"} for the precomputed encoder.
    #[arg(long)]
    embeddings_file: Option<PathBuf>,
}

impl EncoderArgs {
    fn apply(&self, spec: &EncoderSpec) -> Result<EncoderSpec> {
        let kind = match (&self.encoder, spec) {
            (Some(k), _) => k.to_ascii_lowercase(),
            (None, EncoderSpec::Hashed { .. }) => "hashed".into(),
            (None, EncoderSpec::Precomputed { .. }) => "precomputed".into(),
        };
        match kind.as_str() {
            "hashed" => {
                let (dim, seed) = match spec {
                    EncoderSpec::Hashed { dim, seed } => (*dim, *seed),
                    _ => (DEFAULT_FEATURE_DIM, DEFAULT_HASH_SEED),
                };
                Ok(EncoderSpec::Hashed {
                    dim: self.features_dim.unwrap_or(dim),
                    seed,
                })
            }
            "precomputed" => {
                let path = match (&self.embeddings_file, spec) {
                    (Some(p), _) => p.clone(),
                    (None, EncoderSpec::Precomputed { path, .. }) => path.clone(),
                    _ => return Err(Error::Config("--encoder precomputed needs --embeddings-file".into())),
                };
                let dim = FeatureEncoder::precomputed(&path)?.dim();
                if let Some(d) = self.features_dim {
                    if d != dim {
                        return Err(Error::Config(format!("--features-dim {d} but embeddings have {dim}")));
                    }
                }
                Ok(EncoderSpec::Precomputed { path, dim })
            }
            other => Err(Error::Config(format!("unknown encoder {other:?}"))),
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    Ok(cfg)
}

fn model_kind(arg: &Option<String>) -> Result<Option<ModelKind>> {
    arg.as_deref().map(str::parse).transpose()
}

fn model_file(arg: &Option<String>) -> Result<PathBuf> {
    arg.as_ref()
        .map(PathBuf::from)
        .ok_or_else(|| Error::Config("--model <FILE> is required".into()))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let model = &cli.model;
    match cli.command {
        Command::Dedup {
            input,
            out,
            threshold,
            permutations,
        } => {
            let mut d = cfg.dedup.clone();
            d.threshold = threshold.unwrap_or(d.threshold);
            d.permutations = permutations.unwrap_or(d.permutations);
            let (n, kept) = pipeline::dedup_file(&input, &out, &d, cfg.seed)?;
            println!("kept {kept} of {n} documents");
        }
        Command::Retrieve { tweets, mists, out, k } => {
            let mut r = cfg.retrieval.clone();
            r.k = k.unwrap_or(r.k);
            let n = pipeline::retrieve_file(&tweets, &mists, &out, &r)?;
            println!("wrote {n} candidates");
        }
        Command::Split {
            judgments,
            tweets,
            mists,
            out_dir,
        } => {
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            let s = pipeline::split_file(&judgments, &tweets, &mists, &out_dir, &cfg.split, cfg.seed)?;
            println!("train {} / dev {} / test {} judgments", s.train.len(), s.dev.len(), s.test.len());
        }
        Command::BuildGraph { mists, train, dev, out } => {
            let g = pipeline::build_graph_file(mists.as_deref(), &train, &dev, &out)?;
            println!("{} nodes, {} edges", g.node_count(), g.total_edges());
        }
        Command::Train {
            graph,
            tweets,
            mists,
            epochs,
            dev,
            encoder,
            out,
        } => {
            let mut tc = cfg.effective_train();
            tc.epochs = epochs.unwrap_or(tc.epochs);
            let kind = model_kind(model)?.unwrap_or(cfg.model);
            let spec = encoder.apply(&cfg.encoder)?;
            let tweets = tweets.unwrap_or(cfg.inputs.tweets.clone());
            let mists = mists.unwrap_or(cfg.inputs.mists.clone());
            let r = pipeline::train_file(&graph, &tweets, &mists, &spec, kind, &tc, &out)?;
            if let Some(dev) = dev {
                pipeline::calibrate_file(&out, &graph, &tweets, &mists, &dev, &out)?;
            }
            match (r.epoch_losses.first(), r.epoch_losses.last()) {
                (Some(a), Some(b)) => println!("{kind}: {} triples, loss {a:.4} -> {b:.4}", r.triples),
                _ => println!("{kind}: no training needed"),
            }
        }
        Command::TrainBc {
            encoder,
            train,
            dev,
            tweets,
            mists,
            out,
        } => {
            let spec = encoder.apply(&cfg.encoder)?;
            let m = pipeline::train_bc_file(&train, &dev, &tweets, &mists, &spec, &cfg.effective_train(), &out)?;
            println!("threshold {}", m.threshold);
        }
        Command::Calibrate {
            graph,
            tweets,
            mists,
            dev,
            out,
        } => pipeline::calibrate_file(&model_file(model)?, &graph, &tweets, &mists, &dev, &out)?,
        Command::Predict { tweets, out, .. } => {
            let p = pipeline::predict_file(&model_file(model)?, &tweets, cfg.mode, &out)?;
            println!("{} predictions", p.len());
        }
        Command::PredictBc { tweets, mists, out } => {
            let p = pipeline::predict_bc_file(&model_file(model)?, &tweets, &mists, &out)?;
            println!("{} predictions", p.len());
        }
        Command::Eval { pred, gold, graph, out } => {
            let r = pipeline::eval_file(&pred, &gold, &graph, &out)?;
            print!("{}", mistlink::eval::format_report(&r));
        }
        Command::Run { encoder, force } => {
            if let Some(m) = model_kind(model)? {
                cfg.model = m;
            }
            cfg.encoder = encoder.apply(&cfg.encoder)?;
            let m = pipeline::run_pipeline(&cfg, force)?;
            if let Some(s) = m.metrics {
                println!("{} {}: P={:.1} R={:.1} F1={:.1}", m.model, m.mode, s.precision, s.recall, s.f1);
            }
        }
        Command::Synth { out_dir } => {
            planted_corpus(&PlantedSpec::default(), cfg.seed).write(&out_dir)?;
            println!("wrote planted corpus to {}", out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
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
