use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rolesearch_core::engine::{attach_structure, run_etl, train_topics, Engine, EtlConfig, Index};
use rolesearch_core::entities::{convert_geonames, load_structure, Exclusions};
use rolesearch_core::etl::{load_corpus, VocabularyConfig};
use rolesearch_core::eval::{load_qrels, load_queries, run_benchmark, Strategy, DEFAULT_K};
use rolesearch_core::keyword::DEFAULT_MU;
use rolesearch_core::lda::{LdaConfig, TopicModel};
use rolesearch_core::synth::{generate, SynthSpec};
use rolesearch_core::text::StopWords;

mod define;

#[derive(Parser)]
#[command(name = "rolesearch", version, about = "Role-relevance document search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from a directory of *.jsonl / *.txt documents.
    Etl {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// One stop word per line; the shipped English list by default.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        core_size: usize,
        #[arg(long, default_value_t = 100_000)]
        keyword_size: usize,
        #[arg(long, default_value_t = 0.15)]
        phrase_frac: f64,
        #[arg(long, default_value_t = DEFAULT_MU)]
        mu: f64,
    },
    /// Label indexed documents against a knowledge structure.
    Entities {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        structure: PathBuf,
        #[command(flatten)]
        exclusions: ExclusionArgs,
    },
    /// Add GeoNames cities to a structure of regions and countries.
    ConvertGeonames {
        /// Structure file holding the regions and countries.
        #[arg(long)]
        base: PathBuf,
        /// GeoNames dump or `name<TAB>country<TAB>population` table.
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30_000)]
        min_population: u64,
        #[command(flatten)]
        exclusions: ExclusionArgs,
    },
    /// Train the topic model of an index.
    Train {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value_t = 100)]
        topics: usize,
        /// Defaults to 50 / topics.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        beta: f64,
        #[arg(long, default_value_t = 500)]
        sweeps: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        quiet: bool,
    },
    /// Inspect trained model topics.
    Topics {
        #[command(subcommand)]
        command: TopicsCommand,
    },
    /// Keyword or role search.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value = "")]
        query: String,
        #[arg(long)]
        role: Option<String>,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        /// Print the full JSON response instead of tab-separated lines.
        #[arg(long)]
        json: bool,
    },
    /// Define a user topic interactively on the terminal.
    DefineTopic {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long, required = true)]
        seed: Vec<String>,
        /// Suggestions shown per round.
        #[arg(long, default_value_t = 10)]
        suggestions: usize,
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        /// Boundary documents shown per calibration pass.
        #[arg(long, default_value_t = 10)]
        band: usize,
    },
    /// Manage roles.
    Role {
        #[command(subcommand)]
        command: RoleCommand,
    },
    /// Mean precision@k of search strategies over judged queries.
    Eval {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Comma-separated: keyword, keyword+location, keyword+entity, role.
        #[arg(long, value_delimiter = ',', default_value = "keyword,keyword+location,keyword+entity")]
        strategies: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        /// Also write one JSON record per query and strategy.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Static files served for paths outside the API.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Write a synthetic corpus with planted topics, regions and judgments.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        topics: usize,
        #[arg(long, default_value_t = 3)]
        regions: usize,
        #[arg(long, default_value_t = 40)]
        docs_per_cell: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum TopicsCommand {
    /// Most frequent terms of each model topic.
    Show {
        #[arg(long, required_unless_present = "model")]
        index: Option<PathBuf>,
        /// A model file; its index is the directory holding it.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
}

#[derive(Subcommand)]
enum RoleCommand {
    Create {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        name: String,
        /// Knowledge-structure node id or name.
        #[arg(long)]
        entity: Option<String>,
        /// User topic id or name.
        #[arg(long)]
        topic: Option<String>,
        #[arg(long)]
        lambda1: Option<f64>,
        #[arg(long)]
        lambda2: Option<f64>,
    },
    List {
        #[arg(long)]
        index: PathBuf,
    },
}

#[derive(Args)]
struct ExclusionArgs {
    /// Replace the shipped list of place names that are also common words.
    #[arg(long, conflicts_with = "no_exclusions")]
    exclusions: Option<PathBuf>,
    #[arg(long)]
    no_exclusions: bool,
}

impl ExclusionArgs {
    fn load(&self) -> Result<Exclusions> {
        Ok(match (&self.exclusions, self.no_exclusions) {
            (Some(path), _) => Exclusions::parse(&read(path)?),
            (None, true) => Exclusions::none(),
            (None, false) => Exclusions::shipped(),
        })
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Etl {
            corpus,
            out: dir,
            stopwords,
            core_size,
            keyword_size,
            phrase_frac,
            mu,
        } => {
            let stop = match stopwords {
                Some(p) => StopWords::parse(&read(&p)?),
                None => StopWords::english(),
            };
            let docs = load_corpus(&corpus)?;
            let config = EtlConfig {
                vocabulary: VocabularyConfig {
                    core_size,
                    keyword_size,
                },
                phrase_fraction: phrase_frac,
                mu,
            };
            let m = run_etl(docs, &stop, &config, &dir)?;
            writeln!(
                out,
                "indexed {} documents ({} empty), {} tokens; core {} words, keyword {} words, {} phrases",
                m.n_docs, m.empty_docs, m.n_tokens, m.core_len, m.keyword_len, m.n_phrases
            )?;
        }
        Command::Entities {
            index,
            structure,
            exclusions,
        } => {
            let ks = load_structure(&structure, &exclusions.load()?)?;
            let m = attach_structure(&index, &ks)?;
            let s = m.structure.expect("structure attached");
            writeln!(
                out,
                "{} nodes, {} edges; {} of {} documents mention an entity",
                s.nodes, s.edges, s.labeled_docs, m.n_docs
            )?;
        }
        Command::ConvertGeonames {
            base,
            table,
            out: path,
            min_population,
            exclusions,
        } => {
            let exclusions = exclusions.load()?;
            let base = load_structure(&base, &exclusions)?;
            let (ks, r) = convert_geonames(&base, &read(&table)?, &exclusions, min_population)?;
            ks.save(&path)?;
            writeln!(
                out,
                "added {} cities; skipped {} below population, {} unknown country, {} name collisions, {} excluded",
                r.added, r.below_population, r.unknown_country, r.name_collisions, r.excluded
            )?;
        }
        Command::Train {
            index,
            topics,
            alpha,
            beta,
            sweeps,
            seed,
            quiet,
        } => {
            let mut config = LdaConfig::with_topics(topics);
            config.alpha = alpha.unwrap_or(config.alpha);
            config.beta = beta;
            config.n_sweeps = sweeps;
            config.seed = seed;
            let every = (sweeps / 10).max(1);
            let m = train_topics(&index, &config, |i, stats| {
                if !quiet && ((i + 1) % every == 0 || i + 1 == sweeps) {
                    eprintln!("sweep {}/{sweeps}: {} of {} tokens reassigned", i + 1, stats.reassigned, stats.tokens);
                }
            })?;
            let info = m.model.expect("model trained");
            writeln!(
                out,
                "trained {} topics over {} terms and {} tokens",
                info.config.n_topics, info.n_terms, info.n_tokens
            )?;
        }
        Command::Topics {
            command: TopicsCommand::Show { index, model, top },
        } => {
            let mut idx = match (&index, &model) {
                (Some(dir), _) => Index::load(dir)?,
                (None, Some(file)) => Index::load(file.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")))?,
                (None, None) => unreachable!("clap requires one"),
            };
            if let Some(file) = &model {
                idx.model = Some(TopicModel::load(file)?);
            }
            for (j, words) in idx.model_topics(top)?.iter().enumerate() {
                writeln!(out, "{j}\t{}", words.join(" "))?;
            }
        }
        Command::Search {
            index,
            query,
            role,
            k,
            json,
        } => {
            let engine = Engine::open(&index)?;
            let res = engine.search(&query, role.as_deref(), k)?;
            if !res.out_of_vocabulary.is_empty() {
                eprintln!("warning: not in the vocabulary: {}", res.out_of_vocabulary.join(", "));
            }
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&res)?)?;
            } else {
                for h in &res.hits {
                    writeln!(out, "{}\t{}\t{}\t{}", h.rank, h.hit.doc_id, h.hit.combined, h.title)?;
                }
            }
        }
        Command::DefineTopic {
            index,
            name,
            seed,
            suggestions,
            rounds,
            band,
        } => {
            let engine = Engine::open(&index)?;
            let stdin = io::stdin();
            let options = define::Options {
                suggestions,
                rounds,
                band,
            };
            define::run(&engine, &name, &seed, options, &mut stdin.lock(), &mut out)?;
        }
        Command::Role {
            command:
                RoleCommand::Create {
                    index,
                    name,
                    entity,
                    topic,
                    lambda1,
                    lambda2,
                },
        } => {
            let engine = Engine::open(&index)?;
            let topic = match topic {
                Some(t) => Some(resolve_topic(&engine, &t)?),
                None => None,
            };
            let role = engine.create_role(&name, entity.as_deref(), topic.as_deref(), lambda1, lambda2, None)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&role)?)?;
        }
        Command::Role {
            command: RoleCommand::List { index },
        } => {
            let engine = Engine::open(&index)?;
            for r in engine.registry().roles() {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    r.role_id,
                    r.name,
                    r.entity_target.as_deref().unwrap_or("-"),
                    r.user_topic.as_deref().unwrap_or("-"),
                    r.lambda1,
                    r.lambda2
                )?;
            }
        }
        Command::Eval {
            index,
            qrels,
            queries,
            strategies,
            k,
            records,
        } => {
            let engine = Engine::open(&index)?;
            let qrels = load_qrels(&qrels)?;
            let queries = load_queries(&queries)?;
            let built = strategies.iter().map(|s| engine.strategy(s.trim())).collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&dyn Strategy> = built.iter().map(|s| s as &dyn Strategy).collect();
            let report = run_benchmark(&refs, &queries, &qrels, k)?;
            write!(out, "{}", report.to_table())?;
            if let Some(path) = records {
                std::fs::write(&path, report.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Serve { index, addr, ui_dir } => {
            let engine = Arc::new(Engine::open(&index)?);
            let runtime = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}");
            runtime
                .block_on(rolesearch_server::serve(engine, addr, ui_dir))
                .with_context(|| format!("serving on {addr}"))?;
        }
        Command::Synth {
            out: dir,
            topics,
            regions,
            docs_per_cell,
            seed,
        } => {
            if topics == 0 || docs_per_cell == 0 {
                bail!("--topics and --docs-per-cell must be at least 1");
            }
            let spec = SynthSpec {
                n_topics: topics,
                n_regions: regions,
                docs_per_cell,
                seed,
                ..SynthSpec::default()
            };
            let corpus = generate(&spec);
            corpus.write_to(&dir)?;
            writeln!(
                out,
                "wrote {} documents and {} queries to {}",
                corpus.documents.len(),
                corpus.queries.len(),
                dir.display()
            )?;
        }
    }
    Ok(())
}

fn resolve_topic(engine: &Engine, id_or_name: &str) -> Result<String> {
    let reg = engine.registry();
    if let Ok(t) = reg.topic(id_or_name) {
        return Ok(t.topic_id.clone());
    }
    let matches: Vec<_> = reg.topics().filter(|t| t.name == id_or_name).collect();
    match matches.as_slice() {
        [t] => Ok(t.topic_id.clone()),
        [] => bail!("no topic with id or name {id_or_name:?}"),
        _ => bail!("several topics are named {id_or_name:?}; use the topic id"),
    }
}
