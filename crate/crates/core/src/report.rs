//! Pipeline orchestration and report files.
//!
//! Output formatting is fixed so that identical inputs give byte-identical
//! files: LF line endings, fixed column order, percentages with 2 decimals
//! and D / p with 6 decimals in CSV, shortest round-trip floats in JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bias::{bias_table, BiasTable};
use crate::config::AuditConfig;
use crate::corpus::{load_corpus, save_corpus, Corpus, Taxonomy};
use crate::error::{Error, Result};
use crate::generate::{Generator, SloganCache};
use crate::lexicon::{count_corpus, CountsTable, Lexicon};
use crate::stats::{cdf_export, compare_to_baseline, CdfExport, KsResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const COUNTS_FILE: &str = "counts.json";
pub const BIAS_FILE: &str = "bias_table.csv";
pub const KS_FILE: &str = "ks_results.csv";
pub const CDF_FILE: &str = "cdf_export.json";
pub const REPORT_FILE: &str = "report.json";

pub const BIAS_COLUMNS: [&str; 7] = [
    "demographic_category",
    "target_group",
    "term_category",
    "raw_count",
    "dict_size",
    "normalized_count",
    "relative_bias_pct",
];

pub const KS_COLUMNS: [&str; 8] = [
    "demographic_category",
    "target_group",
    "term_category",
    "n_target",
    "n_baseline",
    "d_statistic",
    "p_value",
    "p_method",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub tool_version: String,
    pub corpus_digest: String,
    pub taxonomy_digest: String,
    pub lexicon_digest: String,
    pub n_slogans: usize,
    pub bias_table: BiasTable,
    pub ks_results: Vec<KsResult>,
    pub config: AuditConfig,
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is UTF-8")
}

pub fn bias_csv(table: &BiasTable) -> String {
    let mut w = csv_writer();
    w.write_record(BIAS_COLUMNS).expect("in-memory write");
    for c in &table.cells {
        w.write_record([
            c.demographic_category.clone(),
            c.group_id.clone(),
            c.category.clone(),
            c.raw_count.to_string(),
            c.dict_size.to_string(),
            c.normalized_count.to_string(),
            format!("{:.2}", c.relative_bias_pct),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// With `alpha`, a trailing `significant` column reports `p_value < alpha`.
pub fn ks_csv(results: &[KsResult], alpha: Option<f64>) -> String {
    let mut w = csv_writer();
    let mut header: Vec<&str> = KS_COLUMNS.to_vec();
    if alpha.is_some() {
        header.push("significant");
    }
    w.write_record(&header).expect("in-memory write");
    for r in results {
        let mut row = vec![
            r.demographic_category.clone(),
            r.group_id.clone(),
            r.category.clone(),
            r.n_target.to_string(),
            r.n_baseline.to_string(),
            format!("{:.6}", r.d_statistic),
            format!("{:.6}", r.p_value),
            r.p_method.to_string(),
        ];
        if let Some(a) = alpha {
            row.push((r.p_value < a).to_string());
        }
        w.write_record(&row).expect("in-memory write");
    }
    finish(w)
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}

/// Wide relative-bias grid: one row per reported group, one column per term
/// category, percentages to 2 decimals.
pub fn console_grid(table: &BiasTable, taxonomy: &Taxonomy, lexicon: &Lexicon) -> String {
    let mut header = vec!["Category".to_string(), "Target Group".to_string()];
    header.extend(table.categories.iter().map(|c| {
        lexicon
            .dictionary(c)
            .map_or_else(|| c.clone(), |d| d.category.display_name.clone())
    }));

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut last_category = None;
    for gid in &table.groups {
        let group = taxonomy.group(gid).expect("table groups come from the taxonomy");
        let cat_label = if last_category == Some(&group.category) {
            String::new()
        } else {
            taxonomy
                .category(&group.category)
                .map_or_else(|| group.category.clone(), |c| c.display_name.clone())
        };
        last_category = Some(&group.category);
        let mut row = vec![cat_label, group.descriptor.clone()];
        for c in &table.categories {
            let pct = table.cell(gid, c).map_or(0.0, |cell| cell.relative_bias_pct);
            row.push(format!("{pct:.2}%"));
        }
        rows.push(row);
    }

    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            rows.iter()
                .map(|r| r[i].chars().count())
                .chain(std::iter::once(header[i].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let render = |cells: &[String]| -> String {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i < 2 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = render(&header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in &rows {
        out.push_str(&render(r));
        out.push('\n');
    }
    out
}

/// Everything an audit run produces.
#[derive(Debug, Clone)]
pub struct AuditOutputs {
    pub corpus: Corpus,
    pub counts: CountsTable,
    pub bias: BiasTable,
    pub ks: Vec<KsResult>,
    pub cdf: CdfExport,
    pub report: AuditReport,
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Generates a corpus from the configured backend.
pub fn run_generate(
    config: &AuditConfig,
    lexicon: &Lexicon,
    progress: &(dyn Fn(&crate::corpus::TargetGroup, usize) + Sync),
) -> Result<Corpus> {
    config.validate()?;
    let taxonomy = config.taxonomy();
    let params = config.generation_params()?;
    let mut generator = Generator::from_kind(&config.backend_kind(), &taxonomy, lexicon)?
        .with_max_in_flight(config.generation.max_in_flight);
    if let Some(dir) = config.effective_cache_dir() {
        generator = generator.with_cache(SloganCache::new(dir)?);
    }
    generator.generate_all(&taxonomy, &params, &config.prompt_spec(), progress)
}

/// Counts, bias table, KS comparisons and CDF export for an existing corpus.
pub fn run_analysis(config: &AuditConfig, lexicon: &Lexicon, corpus: Corpus) -> Result<AuditOutputs> {
    let taxonomy = config.taxonomy();
    let counts = count_corpus(&corpus, lexicon).align_to(&taxonomy)?;
    let bias = bias_table(&counts, lexicon, &taxonomy, config.bias_options())?;
    let ks = compare_to_baseline(&counts, &taxonomy, config.baseline.as_deref(), &config.ks_options())?;
    let cdf = cdf_export(&counts, &taxonomy, config.baseline.as_deref())?;
    let report = AuditReport {
        tool_version: TOOL_VERSION.to_string(),
        corpus_digest: corpus.digest(),
        taxonomy_digest: taxonomy.digest(),
        lexicon_digest: lexicon.digest(),
        n_slogans: corpus.len(),
        bias_table: bias.clone(),
        ks_results: ks.clone(),
        config: config.clone(),
    };
    Ok(AuditOutputs {
        corpus,
        counts,
        bias,
        ks,
        cdf,
        report,
    })
}

/// Loads `corpus_path` when set, otherwise generates, then analyzes.
pub fn run_audit(
    config: &AuditConfig,
    progress: &(dyn Fn(&crate::corpus::TargetGroup, usize) + Sync),
) -> Result<AuditOutputs> {
    config.validate()?;
    let lexicon = config.lexicon()?;
    let corpus = match &config.corpus_path {
        Some(p) => load_corpus(p, &config.taxonomy())?,
        None => run_generate(config, &lexicon, progress)?,
    };
    run_analysis(config, &lexicon, corpus)
}

/// Writes all six output files; returns their paths in a fixed order.
pub fn write_outputs(outputs: &AuditOutputs, alpha: Option<f64>, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let corpus_path = dir.join(CORPUS_FILE);
    save_corpus(&outputs.corpus, &corpus_path)?;
    let files = [
        (COUNTS_FILE, outputs.counts.to_json()),
        (BIAS_FILE, bias_csv(&outputs.bias)),
        (KS_FILE, ks_csv(&outputs.ks, alpha)),
        (CDF_FILE, to_json_pretty(&outputs.cdf)),
        (REPORT_FILE, to_json_pretty(&outputs.report)),
    ];
    let mut written = vec![corpus_path];
    for (name, contents) in files {
        let p = dir.join(name);
        write_file(&p, &contents)?;
        written.push(p);
    }
    Ok(written)
}
