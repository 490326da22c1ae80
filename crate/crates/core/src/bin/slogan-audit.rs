//! `slogan-audit`: generate, count, and statistically audit slogan corpora.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 generation
//! failure, 4 analysis failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use slogan_audit::bias::{bias_table, DenominatorScope};
use slogan_audit::config::{AuditConfig, BackendConfig, DEFAULT_ENDPOINT};
use slogan_audit::corpus::{load_corpus, save_corpus, TargetGroup};
use slogan_audit::error::{Error, Result};
use slogan_audit::generate::{PlantedPlan, DEFAULT_KEY_ENV};
use slogan_audit::lexicon::{count_corpus, CountsTable};
use slogan_audit::report::{self, BIAS_FILE, CDF_FILE, CORPUS_FILE, COUNTS_FILE, KS_FILE};
use slogan_audit::stats::{cdf_export, compare_to_baseline, PMethod};

#[derive(Parser)]
#[command(name = "slogan-audit", version, about = "Audit demographic bias in generated marketing slogans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a slogan corpus for every target group
    Generate(RunArgs),
    /// Count dictionary terms per slogan
    Analyze(RunArgs),
    /// Relative bias table from a counts file
    Bias(RunArgs),
    /// KS tests of each target group against the baseline
    Ks(RunArgs),
    /// Full pipeline: generate or load, count, bias, KS, reports
    Audit(RunArgs),
    /// Inspect the term dictionaries
    Lexicon {
        #[command(subcommand)]
        action: LexiconAction,
    },
}

#[derive(Subcommand)]
enum LexiconAction {
    /// Print every category and its phrases
    Show {
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Print the lexicon file format instead of a listing
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Http,
    Replay,
    Synthetic,
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Slogan corpus (JSON Lines); also the replay source
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Counts file for `bias` and `ks` (default: <out>/counts.json)
    #[arg(long)]
    counts: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Baseline group id (default: the taxonomy's baseline)
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long, value_parser = DenominatorScope::from_str)]
    denominator_scope: Option<DenominatorScope>,
    /// Report baseline rows in the bias table
    #[arg(long)]
    include_baseline: bool,
    #[arg(long, value_parser = PMethod::from_str)]
    p_method: Option<PMethod>,
    #[arg(long)]
    permutation_rounds: Option<usize>,
    /// Adds a `significant` column (p < alpha) to ks_results.csv
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_per_group: Option<usize>,
    #[arg(long)]
    model: Option<String>,
    /// Chat-completions endpoint for the HTTP backend
    #[arg(long)]
    endpoint: Option<String>,
    /// Environment variable holding the API key
    #[arg(long)]
    key_env: Option<String>,
    /// Planted-insertion plan (JSON) for the synthetic backend
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<AuditConfig> {
        let mut c = match &self.config {
            Some(p) => AuditConfig::load(p)?,
            None => AuditConfig::default(),
        };
        if let Some(v) = &self.out {
            c.out_dir = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.lexicon {
            c.lexicon_path = Some(v.clone());
        }
        if let Some(v) = &self.baseline {
            c.baseline = Some(v.clone());
        }
        if let Some(v) = self.denominator_scope {
            c.denominator_scope = v;
        }
        if self.include_baseline {
            c.include_baseline = true;
        }
        if let Some(v) = self.p_method {
            c.p_method = v;
        }
        if let Some(v) = self.permutation_rounds {
            c.permutation_rounds = v;
        }
        if let Some(v) = self.alpha {
            c.alpha = Some(v);
        }
        if let Some(v) = self.n_per_group {
            c.n_per_group = v;
        }
        if let Some(v) = &self.model {
            c.generation.model = Some(v.clone());
        }
        if let Some(v) = &self.cache_dir {
            c.generation.cache_dir = Some(v.clone());
        }
        if let Some(v) = self.max_in_flight {
            c.generation.max_in_flight = v;
        }

        match self.backend {
            Some(BackendArg::Http) => {
                c.generation.backend = BackendConfig::HttpApi {
                    endpoint: DEFAULT_ENDPOINT.to_string(),
                    key_env: DEFAULT_KEY_ENV.to_string(),
                }
            }
            Some(BackendArg::Replay) => {
                let corpus_path = self
                    .corpus
                    .clone()
                    .ok_or_else(|| Error::config("--backend replay needs --corpus"))?;
                c.generation.backend = BackendConfig::Replay { corpus_path };
            }
            Some(BackendArg::Synthetic) => {
                c.generation.backend = BackendConfig::Synthetic { plan: None }
            }
            None => {}
        }
        if let BackendConfig::HttpApi { endpoint, key_env } = &mut c.generation.backend {
            if let Some(v) = &self.endpoint {
                *endpoint = v.clone();
            }
            if let Some(v) = &self.key_env {
                *key_env = v.clone();
            }
        }
        if let Some(p) = &self.plan {
            let BackendConfig::Synthetic { plan } = &mut c.generation.backend else {
                return Err(Error::config("--plan only applies to the synthetic backend"));
            };
            let raw = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            *plan = Some(serde_json::from_str::<PlantedPlan>(&raw).map_err(|e| Error::Parse {
                path: p.clone(),
                line: e.line(),
                message: e.to_string(),
            })?);
        }
        c.validate()?;
        Ok(c)
    }

    fn counts_path(&self, config: &AuditConfig) -> PathBuf {
        self.counts
            .clone()
            .unwrap_or_else(|| config.out_dir.join(COUNTS_FILE))
    }
}

fn progress(group: &TargetGroup, n: usize) {
    eprintln!("  generated {n:>4} slogans for {}", group.id);
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn read_counts(path: &Path) -> Result<CountsTable> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CountsTable::from_json(&raw)
}

fn cmd_generate(args: &RunArgs) -> Result<()> {
    let config = args.resolve()?;
    let lexicon = config.lexicon()?;
    eprintln!(
        "generating {} slogans per group for {} groups",
        config.n_per_group,
        config.groups.len()
    );
    let corpus = report::run_generate(&config, &lexicon, &progress)?;
    report::ensure_dir(&config.out_dir)?;
    let path = config.out_dir.join(CORPUS_FILE);
    save_corpus(&corpus, &path)?;
    println!("{} slogans", corpus.len());
    print_written(&[path]);
    Ok(())
}

fn cmd_analyze(args: &RunArgs) -> Result<()> {
    let config = args.resolve()?;
    let corpus_path = args
        .corpus
        .clone()
        .or_else(|| config.corpus_path.clone())
        .ok_or_else(|| Error::config("analyze needs --corpus"))?;
    let taxonomy = config.taxonomy();
    let lexicon = config.lexicon()?;
    let corpus = load_corpus(&corpus_path, &taxonomy)?;
    let counts = count_corpus(&corpus, &lexicon).align_to(&taxonomy)?;

    for (ci, cat) in counts.categories().iter().enumerate() {
        let total: u64 = counts.groups().iter().map(|g| g.raw_count(ci)).sum();
        println!("{cat:<22} {total:>8}");
    }
    report::ensure_dir(&config.out_dir)?;
    let path = config.out_dir.join(COUNTS_FILE);
    report::write_file(&path, &counts.to_json())?;
    print_written(&[path]);
    Ok(())
}

fn cmd_bias(args: &RunArgs) -> Result<()> {
    let config = args.resolve()?;
    let taxonomy = config.taxonomy();
    let lexicon = config.lexicon()?;
    let counts = read_counts(&args.counts_path(&config))?;
    let table = bias_table(&counts, &lexicon, &taxonomy, config.bias_options())?;
    print!("{}", report::console_grid(&table, &taxonomy, &lexicon));
    report::ensure_dir(&config.out_dir)?;
    let path = config.out_dir.join(BIAS_FILE);
    report::write_file(&path, &report::bias_csv(&table))?;
    print_written(&[path]);
    Ok(())
}

fn print_ks_summary(results: &[slogan_audit::stats::KsResult]) {
    let max = results
        .iter()
        .max_by(|a, b| a.d_statistic.total_cmp(&b.d_statistic));
    println!("{} KS comparisons against the baseline", results.len());
    if let Some(r) = max {
        println!(
            "largest D: {}/{} D={:.6} p={:.6}",
            r.group_id, r.category, r.d_statistic, r.p_value
        );
    }
}

fn cmd_ks(args: &RunArgs) -> Result<()> {
    let config = args.resolve()?;
    let taxonomy = config.taxonomy();
    let counts = read_counts(&args.counts_path(&config))?;
    let results = compare_to_baseline(&counts, &taxonomy, config.baseline.as_deref(), &config.ks_options())?;
    let cdf = cdf_export(&counts, &taxonomy, config.baseline.as_deref())?;
    print_ks_summary(&results);
    report::ensure_dir(&config.out_dir)?;
    let ks_path = config.out_dir.join(KS_FILE);
    let cdf_path = config.out_dir.join(CDF_FILE);
    report::write_file(&ks_path, &report::ks_csv(&results, config.alpha))?;
    report::write_file(&cdf_path, &report::to_json_pretty(&cdf))?;
    print_written(&[ks_path, cdf_path]);
    Ok(())
}

fn cmd_audit(args: &RunArgs) -> Result<()> {
    let mut config = args.resolve()?;
    if let Some(c) = &args.corpus {
        config.corpus_path = Some(c.clone());
    }
    let outputs = report::run_audit(&config, &progress)?;
    let lexicon = config.lexicon()?;
    print!(
        "{}",
        report::console_grid(&outputs.bias, &config.taxonomy(), &lexicon)
    );
    print_ks_summary(&outputs.ks);
    let written = report::write_outputs(&outputs, config.alpha, &config.out_dir)?;
    print_written(&written);
    Ok(())
}

fn cmd_lexicon_show(path: Option<&Path>, json: bool) -> Result<()> {
    let lexicon = match path {
        Some(p) => slogan_audit::lexicon::Lexicon::load(p)?,
        None => slogan_audit::lexicon::Lexicon::default(),
    };
    if json {
        print!("{}", report::to_json_pretty(&lexicon.to_json_map()));
        return Ok(());
    }
    for d in lexicon.dictionaries() {
        println!("{} [{}] ({} terms)", d.category.display_name, d.category.id, d.len());
        println!("  {}", d.phrases().join(", "));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Bias(a) => cmd_bias(a),
        Command::Ks(a) => cmd_ks(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Lexicon {
            action: LexiconAction::Show { lexicon, json },
        } => cmd_lexicon_show(lexicon.as_deref(), *json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
