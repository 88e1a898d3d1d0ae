use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kidaudit_core::comments::{self, KMeansConfig, PreprocessConfig};
use kidaudit_core::fixtures::{write_demo_corpus, CorpusApp, CorpusSpec};
use kidaudit_core::netflow::{self, DeviceProfile};
use kidaudit_core::policy::Audience;
use kidaudit_core::rating::{self, AgeGroupTable};
use kidaudit_core::report::{self, Format, ScanConfig, EXIT_OK, EXIT_USAGE};
use kidaudit_core::signatures::{self, MatchMode, SignatureDatabase};
use num_rational::Ratio;
use serde_json::json;

#[derive(Parser)]
#[command(name = "kidaudit", version, about = "Privacy and content audit for children's apps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit a corpus directory and print a report.
    Scan(ScanArgs),
    /// Score rating inconsistencies, or print the full level matrix.
    Ratings(RatingsArgs),
    /// Detect personal data in captured traffic.
    Flows(FlowsArgs),
    /// Cluster and categorize user comments.
    #[command(subcommand)]
    Comments(CommentsCommand),
    /// Re-render a saved structured report.
    Report(ReportArgs),
    /// Write the demo corpus, or a bulk corpus for timing.
    Fixtures(FixturesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Table,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Json => Format::Structured,
            OutputFormat::Table => Format::Table,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AudienceArg {
    Family,
    Children,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchArg {
    Prefix,
    Substring,
}

#[derive(Args)]
struct ScanArgs {
    /// Corpus directory with apks/, metadata/, flows/, ratings/, comments/.
    corpus: PathBuf,
    #[arg(long)]
    signatures: Option<PathBuf>,
    #[arg(long)]
    age_table: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Defaults to <corpus>/device_profile.json.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, short = 'j')]
    parallelism: Option<usize>,
    #[arg(long)]
    exclude_google_facebook: bool,
    /// Only audit apps with this audience.
    #[arg(long, value_enum)]
    audience: Option<AudienceArg>,
    #[arg(long, value_enum, default_value = "prefix")]
    match_mode: MatchArg,
    #[arg(long, default_value_t = rating::DEFAULT_THRESHOLD)]
    threshold: u32,
    #[arg(long, default_value_t = comments::DEFAULT_MAX_STARS)]
    max_stars: u8,
    #[arg(long, default_value_t = kidaudit_core::policy::DEFAULT_EXCESSIVE_TRACKERS)]
    excessive_threshold: usize,
    #[arg(long, value_enum, default_value = "table")]
    format: OutputFormat,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RatingsArgs {
    /// Rating files or directories of them.
    files: Vec<PathBuf>,
    #[arg(long)]
    age_table: Option<PathBuf>,
    #[arg(long, default_value_t = rating::DEFAULT_THRESHOLD)]
    threshold: u32,
    /// Print the label-by-label level matrix as CSV.
    #[arg(long)]
    matrix: bool,
}

#[derive(Args)]
struct FlowsArgs {
    /// Flow files or directories of them.
    files: Vec<PathBuf>,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    signatures: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CommentsCommand {
    /// Pick k and cluster low-star comments.
    Cluster(ClusterArgs),
    #[command(subcommand)]
    Rules(RulesCommand),
}

#[derive(Args)]
struct TextArgs {
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    emoji: Option<PathBuf>,
    #[arg(long, default_value_t = comments::DEFAULT_MAX_STARS)]
    max_stars: u8,
}

impl TextArgs {
    fn config(&self) -> Result<PreprocessConfig> {
        let mut cfg = PreprocessConfig::default().with_max_stars(self.max_stars);
        if let Some(p) = &self.stopwords {
            cfg = cfg.load_stopwords(p)?;
        }
        if let Some(p) = &self.emoji {
            cfg = cfg.load_emoji(p)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct ClusterArgs {
    /// Comment files or directories of them.
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    text: TextArgs,
    /// Precomputed embeddings, a JSON object from comment id to vector.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Fixed k; otherwise k is chosen over --grid.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = comments::DEFAULT_RESTARTS)]
    restarts: usize,
    /// Representatives and keywords shown per cluster.
    #[arg(long, default_value_t = 20)]
    top: usize,
}

#[derive(Subcommand)]
enum RulesCommand {
    /// Derive rules from labeled comments and keyword sets.
    Induce(InduceArgs),
    /// Tag comments with the topics their rules match.
    Apply(ApplyArgs),
}

#[derive(Args)]
struct InduceArgs {
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long)]
    keywords: PathBuf,
    #[arg(long, default_value_t = 20)]
    max_distance: u32,
    /// Drop rules whose error on this labeled set is too high.
    #[arg(long)]
    pilot: Option<PathBuf>,
    /// Maximum pilot error as a fraction, e.g. 1/10.
    #[arg(long, default_value = "1/10")]
    max_error: Ratio<u64>,
    #[command(flatten)]
    text: TextArgs,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ApplyArgs {
    inputs: Vec<PathBuf>,
    /// Rules CSV; the starter rules are used when absent.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[command(flatten)]
    text: TextArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// A report written by `scan --format json`.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: OutputFormat,
}

#[derive(Args)]
struct FixturesArgs {
    out: PathBuf,
    /// Write this many padded APKs instead of the demo corpus.
    #[arg(long)]
    bulk: Option<usize>,
    /// DEX padding per bulk APK in bytes.
    #[arg(long, default_value_t = 1_000_000)]
    padding: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(EXIT_USAGE as u8)
        }
    }
}

/// The error chain, skipping causes a message already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg = format!("{msg}: {c}");
        }
    }
    msg
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Scan(a) => scan(a),
        Command::Ratings(a) => ratings(a),
        Command::Flows(a) => flows(a),
        Command::Comments(CommentsCommand::Cluster(a)) => cluster(a),
        Command::Comments(CommentsCommand::Rules(RulesCommand::Induce(a))) => induce(a),
        Command::Comments(CommentsCommand::Rules(RulesCommand::Apply(a))) => apply(a),
        Command::Report(a) => rerender(a),
        Command::Fixtures(a) => fixtures(a),
    }
}

fn write_or_print(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn scan(a: ScanArgs) -> Result<i32> {
    let mut cfg = ScanConfig::new(&a.corpus);
    cfg.signature_db = a.signatures;
    cfg.age_table = a.age_table;
    cfg.rules = a.rules;
    cfg.device_profile = a.profile;
    if let Some(p) = a.parallelism {
        cfg.parallelism = p;
    }
    cfg.exclude_google_facebook = a.exclude_google_facebook;
    cfg.audience = a.audience.map(|a| match a {
        AudienceArg::Family => Audience::FamilyDesigned,
        AudienceArg::Children => Audience::IncludesChildren,
    });
    cfg.match_mode = match a.match_mode {
        MatchArg::Prefix => MatchMode::Prefix,
        MatchArg::Substring => MatchMode::Substring,
    };
    cfg.rating_threshold = a.threshold;
    cfg.max_stars = a.max_stars;
    cfg.excessive_threshold = a.excessive_threshold;
    let r = report::scan(&cfg)?;
    write_or_print(a.output.as_deref(), &report::emit(&r, a.format.into()))?;
    Ok(r.exit_code())
}

fn age_table(path: Option<&Path>) -> Result<AgeGroupTable> {
    Ok(match path {
        Some(p) => AgeGroupTable::load(p)?,
        None => AgeGroupTable::bundled(),
    })
}

fn ratings(a: RatingsArgs) -> Result<i32> {
    if a.threshold == 0 {
        bail!("threshold must be at least 1");
    }
    let table = age_table(a.age_table.as_deref())?;
    if a.matrix {
        print!("{}", rating::build_matrix(&table, a.threshold).to_csv());
        return Ok(EXIT_OK);
    }
    let mut records = Vec::new();
    for f in json_files(&a.files)? {
        records.extend(rating::load_ratings(&f)?);
    }
    let reports = rating::group_by_package(records)
        .values()
        .map(|r| rating::app_inconsistency(r, &table, a.threshold))
        .collect::<Result<Vec<_>, _>>()?;
    print!("{}", pretty(&reports));
    Ok(EXIT_OK)
}

fn signature_db(path: Option<&Path>) -> Result<SignatureDatabase> {
    Ok(match path {
        Some(p) => signatures::load_database(p)?,
        None => SignatureDatabase::bundled(),
    })
}

fn flows(a: FlowsArgs) -> Result<i32> {
    let profile = DeviceProfile::load(&a.profile)?;
    profile.validate().map_err(|e| anyhow::anyhow!("{}: {e}", a.profile.display()))?;
    let db = signature_db(a.signatures.as_deref())?;
    let mut records = Vec::new();
    for f in json_files(&a.files)? {
        records.extend(netflow::ingest_flows(&f)?);
    }
    print!("{}", pretty(&netflow::audit_flows(&records, &profile, &db)));
    Ok(EXIT_OK)
}

/// Expands directories to the `.json` files inside, sorted.
fn json_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        bail!("no input files given");
    }
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "json"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_kept(inputs: &[PathBuf], cfg: &PreprocessConfig) -> Result<Vec<comments::Comment>> {
    let mut raw = Vec::new();
    for f in json_files(inputs)? {
        raw.extend(comments::load_comments(&f)?);
    }
    Ok(comments::preprocess_all(&raw, cfg))
}

fn cluster(a: ClusterArgs) -> Result<i32> {
    let cfg = a.text.config()?;
    let kept = load_kept(&a.inputs, &cfg)?;
    let (vectors, vocabulary) = match &a.vectors {
        Some(p) => (comments::dense_for_comments::<f64>(&kept, &comments::load_dense_vectors(p)?)?, None),
        None => {
            let t = comments::vectorize::<f64>(&kept)?;
            (t.vectors, Some(t.vocabulary))
        }
    };
    let kcfg = KMeansConfig { restarts: a.restarts.max(1), ..KMeansConfig::default() };
    let (model, scores) = match a.k {
        Some(k) => (comments::cluster(&vectors, k, a.seed, &kcfg)?, Vec::new()),
        None => {
            let grid = a.grid.unwrap_or_else(comments::default_k_grid);
            let sel = comments::select_k(&vectors, &grid, a.seed, &kcfg)?;
            (sel.model, sel.scores)
        }
    };
    let reps = comments::representatives(&model, &vectors, a.top);
    let keywords = vocabulary.map(|v| comments::cluster_keywords(&model, &vectors, &v, a.top));
    let sizes = model.sizes();
    let clusters: Vec<_> = (0..model.k)
        .map(|c| {
            json!({
                "cluster": c,
                "size": sizes[c],
                "keywords": keywords.as_ref().map(|k| k[c].iter().map(|(w, _)| w.clone()).collect::<Vec<_>>()),
                "representatives": reps[c].iter().map(|&i| json!({"id": kept[i].id, "text": kept[i].text})).collect::<Vec<_>>(),
            })
        })
        .collect();
    let out = json!({
        "comments": kept.len(),
        "k": model.k,
        "summarization_metric": comments::summarization_metric(&model),
        "scores": scores,
        "clusters": clusters,
    });
    print!("{}", pretty(&out));
    Ok(EXIT_OK)
}

fn induce(a: InduceArgs) -> Result<i32> {
    let cfg = a.text.config()?;
    let labeled = comments::load_labeled(&a.labeled, &cfg)?;
    let sets = comments::load_keyword_sets(&a.keywords)?;
    let induced = comments::induce_rules(&labeled, &sets, 1..=a.max_distance)?;
    let mut rules: Vec<_> = induced.into_iter().map(|r| r.rule).collect();
    if let Some(p) = &a.pilot {
        let pilot = comments::load_labeled(p, &cfg)?;
        rules = comments::validate_rules(&rules, &pilot, a.max_error);
    }
    write_or_print(a.output.as_deref(), &comments::rules_to_csv(&rules))?;
    Ok(EXIT_OK)
}

fn apply(a: ApplyArgs) -> Result<i32> {
    let cfg = a.text.config()?;
    let rules = match &a.rules {
        Some(p) => comments::load_rules(p)?,
        None => comments::starter_rules(),
    };
    let catalog = comments::TopicCatalog::default();
    catalog.check(&rules)?;
    let kept = load_kept(&a.inputs, &cfg)?;
    let tagged: Vec<_> = kept
        .iter()
        .map(|c| json!({"id": c.id, "app_package": c.app_package, "topics": comments::apply_rules(c, &rules)}))
        .collect();
    let out = json!({
        "comments": tagged,
        "categories": comments::categorize_corpus(&kept, &rules, &catalog),
    });
    print!("{}", pretty(&out));
    Ok(EXIT_OK)
}

fn rerender(a: ReportArgs) -> Result<i32> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let r = report::parse_structured(&text).with_context(|| format!("parsing {}", a.input.display()))?;
    print!("{}", report::emit(&r, a.format.into()));
    Ok(EXIT_OK)
}

fn fixtures(a: FixturesArgs) -> Result<i32> {
    let spec = match a.bulk {
        None => CorpusSpec::demo(),
        Some(n) => CorpusSpec {
            apps: (0..n)
                .map(|i| CorpusApp {
                    dex_padding: a.padding,
                    ..CorpusApp::new(&format!("com.bulk.app{i:04}"), Some(Audience::FamilyDesigned))
                        .class("com/unity3d/ads/UnityAds")
                        .class("com/flurry/android/FlurryAgent")
                })
                .collect(),
            profile: None,
        },
    };
    let corpus = write_demo_corpus(&a.out, &spec).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} apps to {}", corpus.packages.len(), corpus.root.display());
    Ok(EXIT_OK)
}
