use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use termnorm::corpus::{
    generate_synthetic, load_corpus, load_mentions, save_corpus, tfidf_fit, KeywordVocab, KnowledgeBase,
    MentionRecord, SyntheticSpec,
};
use termnorm::eval::{
    accuracy_of, bench_throughput, delimiter_class, edit_distance_top1, implication_accuracy, majority_class,
    tfidf_top1,
};
use termnorm::fusion::{save_results, NormalizationResult, Pipeline};
use termnorm::kar::{save_pairs, KarModel};
use termnorm::mtcg::{KbIndex, MtcgModel};
use termnorm::negatives::{initial_assignment, sample_online, NegativeStrategy, SamplingInputs};
use termnorm::run::{
    cross_validate, default_ks, evaluate_results, train_kar_stage, train_mtcg_stage, RunConfig,
};

#[derive(Parser)]
#[command(name = "termnorm", version, about = "Medical terminology normalization: recall, rank and fuse")]
struct Cli {
    /// Seed for every stochastic stage (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding trained models.
    #[arg(long, global = true, default_value = "model")]
    model_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic KB, corpus and keyword vocabulary.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// JSON generator spec; defaults are used when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train the candidate generator and index the KB.
    TrainMtcg {
        #[command(flatten)]
        data: TrainData,
        #[arg(long, value_parser = parse_strategy)]
        neg_strategy: Option<NegativeStrategy>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Write a negative assignment for the training corpus.
    MineNegatives {
        #[command(flatten)]
        data: TrainData,
        #[arg(long, value_parser = parse_strategy)]
        strategy: NegativeStrategy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the keyword-attentive ranker on the generator's candidates.
    TrainKar {
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Normalize a JSON-lines file of mentions.
    Normalize {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a results file against gold codes.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        /// Also score string-similarity and implication baselines (needs --train).
        #[arg(long)]
        baselines: bool,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure normalization throughput.
    Bench {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-fold cross-validation of the full pipeline.
    Cv {
        #[command(flatten)]
        data: TrainData,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainData {
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    keywords: Option<PathBuf>,
}

impl TrainData {
    fn load(&self) -> Result<(KnowledgeBase, Vec<MentionRecord>, Option<KeywordVocab>)> {
        let kb = load_kb(&self.kb)?;
        let train = load_corpus(&self.train, &kb).with_context(|| format!("loading {}", self.train.display()))?;
        let keywords = self
            .keywords
            .as_deref()
            .map(|p| KeywordVocab::load(p).with_context(|| format!("loading {}", p.display())))
            .transpose()?;
        Ok((kb, train, keywords))
    }
}

fn parse_strategy(s: &str) -> std::result::Result<NegativeStrategy, String> {
    s.parse().map_err(|e: termnorm::Error| e.to_string())
}

fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::load(path).with_context(|| format!("loading KB {}", path.display()))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

struct Dirs {
    root: PathBuf,
}

impl Dirs {
    fn mtcg(&self) -> PathBuf {
        self.root.join("mtcg")
    }
    fn index(&self) -> PathBuf {
        self.root.join("index")
    }
    fn kar(&self) -> PathBuf {
        self.root.join("kar")
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    cfg = cfg.with_seed(seed);
    let dirs = Dirs { root: cli.model_dir.clone() };

    match cli.command {
        Command::GenData { out, spec } => {
            let mut spec = match spec {
                Some(p) => SyntheticSpec::load(&p)?,
                None => SyntheticSpec::default(),
            };
            if cli.seed.is_some() {
                spec.seed = seed;
            }
            let data = generate_synthetic(&spec)?;
            fs::create_dir_all(&out)?;
            data.kb.save(&out.join("kb.tsv"))?;
            save_corpus(&out.join("train.jsonl"), &data.train)?;
            save_corpus(&out.join("test.jsonl"), &data.test)?;
            data.keywords.save(&out.join("keywords.tsv"))?;
            write_json(&spec, Some(&out.join("spec.json")))?;
            eprintln!(
                "wrote {} terminologies, {} train and {} test mentions to {}",
                data.kb.len(),
                data.train.len(),
                data.test.len(),
                out.display()
            );
        }
        Command::TrainMtcg {
            data,
            neg_strategy,
            epochs,
        } => {
            let (kb, train, keywords) = data.load()?;
            if let Some(s) = neg_strategy {
                cfg.negative_strategy = s;
            }
            if let Some(e) = epochs {
                cfg.mtcg.epochs = e;
            }
            cfg.validate()?;
            let mut log = String::new();
            let (model, _) = train_mtcg_stage(&cfg, &kb, &train, keywords.as_ref(), |s, _, _| {
                log.push_str(&serde_json::to_string(s).expect("stats serialize"));
                log.push('\n');
            })?;
            model.save(&dirs.mtcg(), serde_json::to_value(&cfg)?)?;
            KbIndex::build(&model, &kb)?.save(&dirs.index())?;
            fs::write(dirs.root.join("mtcg_epochs.jsonl"), log)?;
            cfg.save(&dirs.root.join("run.json"))?;
            eprintln!("saved generator and KB index under {}", dirs.root.display());
        }
        Command::MineNegatives { data, strategy, out } => {
            let (kb, train, keywords) = data.load()?;
            let assignment = if strategy == NegativeStrategy::Online {
                let model = MtcgModel::load(&dirs.mtcg()).context("online mining needs a trained generator")?;
                sample_online(&model, &train, &kb, cfg.mtcg.k_n)?
            } else {
                let tfidf = match strategy {
                    NegativeStrategy::Tfidf => Some(tfidf_fit(&kb)?),
                    _ => None,
                };
                let inputs = SamplingInputs {
                    kb: &kb,
                    records: &train,
                    k_n: cfg.mtcg.k_n,
                    seed,
                    tfidf: tfidf.as_ref(),
                    keywords: keywords.as_ref(),
                };
                initial_assignment(strategy, inputs)?
            };
            assignment.save(&out)?;
        }
        Command::TrainKar { data, epochs } => {
            let (kb, train, keywords) = data.load()?;
            let Some(keywords) = keywords else {
                bail!("train-kar needs --keywords");
            };
            if let Some(e) = epochs {
                cfg.kar.epochs = e;
            }
            let mtcg = MtcgModel::load(&dirs.mtcg()).context("loading the trained generator")?;
            let index = KbIndex::load(&dirs.index(), &kb)?;
            let mut log = String::new();
            let (kar, pairs, _) = train_kar_stage(&cfg, &mtcg, &index, &kb, &train, &keywords, |s, _| {
                log.push_str(&serde_json::to_string(s).expect("stats serialize"));
                log.push('\n');
            })?;
            kar.save(&dirs.kar(), serde_json::to_value(&cfg)?)?;
            save_pairs(&pairs, &dirs.root.join("kar_pairs.jsonl"))?;
            fs::write(dirs.root.join("kar_epochs.jsonl"), log)?;
            eprintln!("saved ranker under {}", dirs.kar().display());
        }
        Command::Normalize { kb, input, out } => {
            let kb = load_kb(&kb)?;
            let mentions = load_mentions(&input).with_context(|| format!("reading {}", input.display()))?;
            let mtcg = MtcgModel::load(&dirs.mtcg())?;
            let kar = KarModel::load(&dirs.kar())?;
            let index = KbIndex::load(&dirs.index(), &kb)?;
            let pipeline = Pipeline {
                mtcg: &mtcg,
                kar: &kar,
                kb: &kb,
                index: &index,
                config: cfg.fusion,
            };
            let results = pipeline.normalize_all(&mentions)?;
            save_results(&results, &out)?;
        }
        Command::Eval {
            results,
            gold,
            kb,
            baselines,
            train,
            out,
        } => {
            let kb = load_kb(&kb)?;
            let gold = load_corpus(&gold, &kb)?;
            let results = load_results(&results)?;
            let mut report = serde_json::to_value(evaluate_results(&results, &gold, &default_ks(cfg.fusion.k_c))?)?;
            if baselines {
                let Some(train) = train else {
                    bail!("--baselines needs --train for the majority class");
                };
                let train = load_corpus(&train, &kb)?;
                let mentions: Vec<&str> = gold.iter().map(|r| r.mention.as_str()).collect();
                let tfidf = tfidf_fit(&kb)?;
                let majority = majority_class(&train)?;
                let delimiter: Vec<_> = mentions.iter().map(|m| delimiter_class(m)).collect();
                report["baselines"] = serde_json::json!({
                    "tfidf": accuracy_of(&tfidf_top1(&tfidf, &kb, &mentions)?, &gold)?,
                    "edit_distance": accuracy_of(&edit_distance_top1(&kb, &mentions)?, &gold)?,
                    "implication_majority": implication_accuracy(&vec![majority; gold.len()], &gold)?,
                    "implication_delimiter": implication_accuracy(&delimiter, &gold)?,
                });
            }
            write_json(&report, out.as_deref())?;
        }
        Command::Bench {
            kb,
            input,
            warmup,
            repetitions,
            out,
        } => {
            let kb = load_kb(&kb)?;
            let mentions = load_mentions(&input)?;
            let mtcg = MtcgModel::load(&dirs.mtcg())?;
            let kar = KarModel::load(&dirs.kar())?;
            let index = KbIndex::load(&dirs.index(), &kb)?;
            let pipeline = Pipeline {
                mtcg: &mtcg,
                kar: &kar,
                kb: &kb,
                index: &index,
                config: cfg.fusion,
            };
            let single = bench_throughput(&pipeline, &mentions, warmup, repetitions, 1)?;
            let multi = bench_throughput(&pipeline, &mentions, warmup, repetitions, 0)?;
            write_json(&serde_json::json!({ "single_thread": single, "multi_thread": multi }), out.as_deref())?;
        }
        Command::Cv { data, folds, out } => {
            let (kb, train, keywords) = data.load()?;
            let Some(keywords) = keywords else {
                bail!("cv needs --keywords");
            };
            if let Some(k) = folds {
                cfg.cv_folds = k;
            }
            write_json(&cross_validate(&cfg, &kb, &train, &keywords)?, out.as_deref())?;
        }
    }
    Ok(())
}

fn load_results(path: &Path) -> Result<Vec<NormalizationResult>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), n + 1)))
        .collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
