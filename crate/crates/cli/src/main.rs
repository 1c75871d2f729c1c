use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use photobook::analytics::{read_tags, stats_report, AnnotatedDescription, WordVectors};
use photobook::chains::{chain_statistics, extract, split_chains, ChainsFile, ImageCatalog, SplitFractions};
use photobook::gameset::{build_image_sets, derive_variants, group_similar_images, read_annotations, GameSetFile};
use photobook::logstore::{import_corpus, verify_log, write_corpus, FieldMap};
use photobook::text::Stopwords;
use photobook::{GameLog, LogStore, MatchConfig};
use photobook_server::{serve, AppState, ServerConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "photobook", version, about = "PhotoBook game server and corpus tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build image sets and their game variants from annotations.
    Gameset(GamesetArgs),
    /// Run the matchmaking and game server.
    Serve(ServeArgs),
    /// Export, import or verify game logs.
    Logstore {
        #[command(subcommand)]
        command: LogstoreCommand,
    },
    /// Segment dialogues into reference chains.
    Chains {
        #[command(subcommand)]
        command: ChainsCommand,
    },
    /// Corpus statistics report.
    Stats(StatsArgs),
}

#[derive(Args)]
struct GamesetArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = photobook::gameset::DEFAULT_SET_COUNT)]
    sets: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "PB_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "PB_HOST", default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "PB_GAMESETS")]
    gamesets: PathBuf,
    #[arg(long, env = "PB_LOG_DIR")]
    log_dir: PathBuf,
    #[arg(long, env = "PB_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "PB_MAX_GAMES", default_value_t = 5)]
    max_games: u32,
    /// Seconds a returning worker waits for a sibling-variant partner.
    #[arg(long, env = "PB_PATIENCE_S", default_value_t = 120)]
    patience_s: u64,
    #[arg(long, env = "PB_IMAGES_DIR")]
    images_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LogstoreCommand {
    /// Write closed games as canonical JSON documents.
    Export {
        #[arg(long)]
        log_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Export only this game.
        #[arg(long)]
        game: Option<String>,
    },
    /// Import a released corpus or exported logs and print the report.
    Import {
        #[arg(long)]
        path: PathBuf,
        /// JSON file overriding released-corpus field names.
        #[arg(long)]
        fields: Option<PathBuf>,
        /// Write the imported games here in our format.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay every log and compare with its stored state.
    Verify {
        #[arg(long)]
        logs: PathBuf,
    },
}

#[derive(Subcommand)]
enum ChainsCommand {
    Extract {
        #[arg(long)]
        logs: PathBuf,
        /// Game sets file; supplies image sources and categories.
        #[arg(long)]
        gamesets: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    Stats {
        #[arg(long, default_value = "chains.json")]
        chains: PathBuf,
    },
    Split {
        #[arg(long, default_value = "chains.json")]
        chains: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.70)]
        train: f64,
        #[arg(long, default_value_t = 0.15)]
        val: f64,
        #[arg(long, default_value_t = 0.15)]
        test: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    logs: PathBuf,
    /// Word vectors in text format, one word and its floats per line.
    #[arg(long, requires = "annotated")]
    vectors: Option<PathBuf>,
    /// JSON array of annotated first and last descriptions.
    #[arg(long, requires = "vectors")]
    annotated: Option<PathBuf>,
    /// JSONL of POS-tagged utterances.
    #[arg(long)]
    tags: Option<PathBuf>,
    /// Stopword list, one per line. Defaults to the built-in English list.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("PB_LOG").unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Gameset(a) => gameset(a),
        Command::Serve(a) => run_server(a),
        Command::Logstore { command } => logstore(command),
        Command::Chains { command } => chains(command),
        Command::Stats(a) => stats(a),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn gameset(a: GamesetArgs) -> Result<()> {
    let file = fs::File::open(&a.annotations).with_context(|| format!("opening {}", a.annotations.display()))?;
    let records = read_annotations(BufReader::new(file))?;
    let groups = group_similar_images(&records);
    eprintln!(
        "{} annotations, {} category groups, excluded {:?}",
        records.len(),
        groups.groups.len(),
        groups.excluded
    );
    let sets = build_image_sets(&groups, a.seed, a.sets)?;
    let out = GameSetFile::new(a.seed, sets.iter().map(derive_variants).collect());
    write_json(&a.out, &out)?;
    eprintln!("wrote {} sets to {}", out.sets.len(), a.out.display());
    Ok(())
}

fn run_server(a: ServeArgs) -> Result<()> {
    let catalog: GameSetFile = serde_json::from_str(&read(&a.gamesets)?).context("parsing game sets")?;
    let store = LogStore::open(&a.log_dir)?;
    let config = ServerConfig {
        seed: a.seed,
        match_config: MatchConfig { max_games: a.max_games, patience_ms: a.patience_s * 1000 },
        images_dir: a.images_dir,
        match_interval: Duration::from_secs(1),
    };
    let app = AppState::new(catalog, store, config)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        serve(listener, Arc::clone(&app)).await?;
        Ok(())
    })
}

fn logstore(command: LogstoreCommand) -> Result<()> {
    match command {
        LogstoreCommand::Export { log_dir, out, game } => {
            let store = LogStore::open(&log_dir)?;
            let ids: Vec<String> = match game {
                Some(g) => vec![g],
                None => store.index().games.keys().cloned().collect(),
            };
            fs::create_dir_all(&out)?;
            for id in &ids {
                fs::write(out.join(format!("{id}.json")), store.export_game(id)?)?;
            }
            eprintln!("exported {} games to {}", ids.len(), out.display());
            Ok(())
        }
        LogstoreCommand::Import { path, fields, out } => {
            let fields = match fields {
                Some(f) => serde_json::from_str(&read(&f)?).context("parsing field map")?,
                None => FieldMap::default(),
            };
            let (logs, report) = import_corpus(&path, &fields);
            if let Some(out) = out {
                write_corpus(&out, &logs)?;
            }
            print_json(&report)
        }
        LogstoreCommand::Verify { logs } => {
            let (games, report) = import_corpus(&logs, &FieldMap::default());
            let mut bad = report.failures.len();
            for f in &report.failures {
                eprintln!("{}: {}", f.file, f.error);
            }
            for log in &games {
                if let Err(e) = verify_log(log) {
                    bad += 1;
                    eprintln!("{}: {e}", log.game_id);
                }
            }
            println!("{} games verified, {} failures", games.len(), bad);
            if bad > 0 {
                bail!("{bad} logs failed verification");
            }
            Ok(())
        }
    }
}

fn load_logs(dir: &Path) -> Result<Vec<GameLog>> {
    let (logs, report) = import_corpus(dir, &FieldMap::default());
    for f in &report.failures {
        tracing::warn!(file = %f.file, error = %f.error, "skipped");
    }
    Ok(logs)
}

fn load_chains(path: &Path) -> Result<ChainsFile> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn chains(command: ChainsCommand) -> Result<()> {
    match command {
        ChainsCommand::Extract { logs, gamesets, out } => {
            let logs = load_logs(&logs)?;
            let mut catalog = match gamesets {
                Some(g) => ImageCatalog::from_gamesets(&serde_json::from_str(&read(&g)?).context("parsing game sets")?),
                None => ImageCatalog::default(),
            };
            catalog.add_log_sources(&logs);
            let file = extract(&logs, &catalog);
            write_json(&out, &file)?;
            eprintln!(
                "{} games, {} segments, {} chains -> {}",
                file.games,
                file.segments.len(),
                file.chains.len(),
                out.display()
            );
            Ok(())
        }
        ChainsCommand::Stats { chains } => {
            let file = load_chains(&chains)?;
            print_json(&chain_statistics(&file.chains, &file.segments))
        }
        ChainsCommand::Split { chains, seed, train, val, test, out } => {
            let file = load_chains(&chains)?;
            let split = split_chains(&file.chains, SplitFractions { train, val, test }, seed)?;
            write_json(&out, &split)?;
            print_json(&split.counts(&file.chains, &file.segments))
        }
    }
}

fn stats(a: StatsArgs) -> Result<()> {
    let logs = load_logs(&a.logs)?;
    let stopwords = match &a.stopwords {
        Some(p) => Stopwords::parse(&read(p)?),
        None => Stopwords::english(),
    };
    let descriptions = match (&a.annotated, &a.vectors) {
        (Some(ann), Some(vec)) => {
            let ann: Vec<AnnotatedDescription> = serde_json::from_str(&read(ann)?).context("parsing annotations")?;
            Some((ann, WordVectors::parse(&read(vec)?)?))
        }
        _ => None,
    };
    let tags = a.tags.as_deref().map(|p| read(p).and_then(|t| Ok(read_tags(&t)?))).transpose()?;
    let report = stats_report(
        &logs,
        &stopwords,
        descriptions.as_ref().map(|(d, v)| (d.as_slice(), v)),
        tags.as_deref(),
    );
    write_json(&a.report, &report)?;
    eprintln!("{} games -> {}", report.games, a.report.display());
    Ok(())
}
