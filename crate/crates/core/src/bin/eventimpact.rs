use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use eventimpact::config::Config;
use eventimpact::corpus::{ingest_jsonl, Corpus, Platform, SeriesOptions, SeriesVariant};
use eventimpact::events::{dedupe_same_week, load_events};
use eventimpact::impact::parse_report_csv;
use eventimpact::lexicon::{expand_candidates, load_lexicon, merge, write_candidates_csv, write_lexicon_csv, Lexicon, TermSource};
use eventimpact::pipeline::{self, ImpactInputs, SeriesStore};
use eventimpact::series::DateDay;
use eventimpact::taxonomy::load_annotations;
use eventimpact::{Error, Result};

#[derive(Parser)]
#[command(name = "eventimpact", version, about = "Counterfactual impact of events on term-frequency series")]
struct Cli {
    /// Engine configuration (TOML). Defaults apply to anything not set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, expand, merge and label term lists.
    #[command(subcommand)]
    Lexicon(LexiconCmd),
    /// Build the daily series store from corpora.
    Series(SeriesArgs),
    /// Estimate event impact on every stored term series.
    Impact(ImpactArgs),
    /// Average relative effects per taxonomy category.
    Aggregate(AggregateArgs),
    /// Run the simulation harness and report calibration statistics.
    Calibrate(CalibrateArgs),
    /// Render per-task plots and a markdown summary from impact outputs.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum LexiconCmd {
    /// Normalize a term list into a lexicon CSV.
    Normalize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "bootstrap")]
        source: TermSource,
    },
    /// Export frequent n-grams of matched messages as candidates.
    Expand {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long = "corpus", required = true)]
        corpora: Vec<PathBuf>,
        #[arg(long, default_value = "twitter_like")]
        platform: Platform,
    },
    /// Merge lexicons, term lists and reviewed candidates.
    Merge {
        /// `SOURCE=PATH`; SOURCE applies to plain term lists, CSV inputs carry their own.
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
    },
    /// Apply majority-vote annotations to a lexicon.
    Resolve {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Corpora mapping message-level frame annotations to terms.
        #[arg(long = "corpus")]
        corpora: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct SeriesArgs {
    #[arg(long = "corpus", required = true)]
    corpora: Vec<PathBuf>,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    from: DateDay,
    #[arg(long)]
    to: DateDay,
    /// Restrict to these variants (default: all defined for each platform).
    #[arg(long = "variant")]
    variants: Vec<SeriesVariant>,
    /// Restrict to these platforms (default: those present in the corpora).
    #[arg(long = "platform")]
    platforms: Vec<Platform>,
}

#[derive(Args)]
struct ImpactArgs {
    /// Series store directory written by `series`.
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// `ID=PATH` daily series used as covariates.
    #[arg(long = "exogenous")]
    exogenous: Vec<String>,
    /// Required when the store holds more than one platform.
    #[arg(long)]
    platform: Option<Platform>,
    /// Keep events that fall in the same week as a larger one.
    #[arg(long)]
    no_dedupe: bool,
}

#[derive(Args)]
struct AggregateArgs {
    /// `impact.csv` written by `impact`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// Only aggregate this series variant.
    #[arg(long)]
    variant: Option<SeriesVariant>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Overrides `sim.lift`.
    #[arg(long)]
    lift: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding `impact.csv` and `paths.jsonl`.
    #[arg(long)]
    impact: PathBuf,
}

fn load_corpus(paths: &[PathBuf]) -> Result<Corpus> {
    let mut records = Vec::new();
    for p in paths {
        let ing = ingest_jsonl(p)?;
        info!("{}: {} records ({} malformed)", p.display(), ing.records.len(), ing.malformed);
        records.extend(ing.records);
    }
    Ok(Corpus::new(records))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    pipeline::write_file(path, bytes)
}

fn run(cli: &Cli, cfg: &Config) -> Result<()> {
    let out = &cli.out;
    let fold = cfg.lexicon.fold_plurals;
    match &cli.command {
        Command::Lexicon(cmd) => match cmd {
            LexiconCmd::Normalize { input, source } => {
                let lex: Lexicon = pipeline::load_terms(input, *source, fold)?.into_iter().collect();
                let mut buf = Vec::new();
                write_lexicon_csv(&lex, &mut buf)?;
                write(&out.join("lexicon.csv"), &buf)
            }
            LexiconCmd::Expand { lexicon, corpora, platform } => {
                let lex = load_lexicon(lexicon, fold)?;
                let corpus = load_corpus(corpora)?;
                let texts = pipeline::matched_texts(&corpus, &lex, *platform);
                info!("{} matched messages on {platform}", texts.len());
                let cands = expand_candidates(&texts, &cfg.lexicon.expansion(*platform), &lex)?;
                let mut buf = Vec::new();
                write_candidates_csv(&cands, &mut buf).map_err(|e| Error::Io { path: out.clone(), source: e })?;
                write(&out.join("candidates.csv"), &buf)
            }
            LexiconCmd::Merge { inputs } => {
                let mut lists = Vec::new();
                for spec in inputs {
                    let (src, path) = spec
                        .split_once('=')
                        .ok_or_else(|| Error::Validation(format!("merge input `{spec}` must be SOURCE=PATH")))?;
                    let source: TermSource = src.parse()?;
                    let terms = pipeline::load_terms(Path::new(path), source, fold)?;
                    lists.push(terms);
                }
                let mut buf = Vec::new();
                write_lexicon_csv(&merge(&lists), &mut buf)?;
                write(&out.join("lexicon.csv"), &buf)
            }
            LexiconCmd::Resolve { lexicon, annotations, corpora } => {
                let lex = load_lexicon(lexicon, fold)?;
                let ann = load_annotations(annotations)?;
                let corpus = if corpora.is_empty() { None } else { Some(load_corpus(corpora)?) };
                let r = pipeline::resolve_lexicon(&lex, &ann, corpus.as_ref(), &cfg.taxonomy)?;
                pipeline::write_resolved(&r, out)
            }
        },
        Command::Series(a) => {
            let lex = load_lexicon(&a.lexicon, fold)?;
            let corpus = load_corpus(&a.corpora)?;
            let platforms = if a.platforms.is_empty() { corpus.platforms() } else { a.platforms.clone() };
            if platforms.is_empty() {
                return Err(Error::InsufficientData("corpora contain no records".into()));
            }
            let variants = (!a.variants.is_empty()).then_some(a.variants.as_slice());
            let opts = SeriesOptions { parent_only: cfg.corpus.parent_only };
            let store = pipeline::build_series_store(&corpus, &lex, a.from, a.to, &platforms, variants, &opts)?;
            store.save(out)?;
            info!("wrote {} series to {}", store.index.entries.len(), out.display());
            Ok(())
        }
        Command::Impact(a) => {
            let store = SeriesStore::load(&a.store)?;
            let platforms = store.platforms();
            let platform = match a.platform {
                Some(p) => p,
                None if platforms.len() == 1 => *platforms.iter().next().expect("one platform"),
                None => {
                    return Err(Error::Validation(
                        "series store holds several platforms; pass --platform".into(),
                    ))
                }
            };
            let mut events = load_events(&a.events)?;
            if !a.no_dedupe {
                events = dedupe_same_week(&events);
            }
            let exogenous = pipeline::load_exogenous(&a.exogenous)?;
            let inputs = ImpactInputs { store: &store, platform, events: &events, exogenous: &exogenous };
            let run = pipeline::run_impact(&inputs, cfg, cfg.seed)?;
            pipeline::warn_skipped(&run);
            pipeline::write_impact_outputs(&run, out)?;
            pipeline::write_sidecar(
                out,
                "impact",
                cfg,
                serde_json::json!({ "tasks": run.estimates.len(), "skipped": run.skipped.len(), "jobs": cli.jobs }),
            )
        }
        Command::Aggregate(a) => {
            let text = std::fs::read_to_string(&a.report).map_err(|e| Error::Io { path: a.report.clone(), source: e })?;
            let rows = parse_report_csv(&text, &a.report.display().to_string())?;
            let estimates: Vec<_> = rows.iter().map(Into::into).collect();
            let lex = load_lexicon(&a.lexicon, fold)?;
            let events = load_events(&a.events)?;
            let run = pipeline::run_aggregate(
                &estimates,
                &lex,
                &events,
                a.variant.map(SeriesVariant::as_str),
                cfg.impact.n_boot,
                cfg.seed,
            )?;
            pipeline::write_aggregate_outputs(&run, out)
        }
        Command::Calibrate(a) => {
            let mut cfg = cfg.clone();
            if let Some(l) = a.lift {
                cfg.sim.lift = l;
            }
            cfg.validate()?;
            let report = pipeline::run_calibrate(&cfg, a.trials, cfg.seed)?;
            let text = serde_json::to_string_pretty(&report).expect("json") + "\n";
            write(&out.join("calibration.json"), text.as_bytes())?;
            pipeline::write_sidecar(out, "calibrate", &cfg, serde_json::json!({ "lift": cfg.sim.lift }))
        }
        Command::Report(a) => {
            let csv_path = a.impact.join("impact.csv");
            let text = std::fs::read_to_string(&csv_path).map_err(|e| Error::Io { path: csv_path.clone(), source: e })?;
            let rows = parse_report_csv(&text, &csv_path.display().to_string())?;
            let paths = pipeline::read_paths(&a.impact.join("paths.jsonl"))?;
            pipeline::write_report(&paths, &rows, out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = (|| {
        let mut cfg = match &cli.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
        pool.install(|| run(&cli, &cfg))
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
