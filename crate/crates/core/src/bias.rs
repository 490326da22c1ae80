//! Relative bias of term usage across target groups.
//!
//! A group's raw hit count for a category is divided by the dictionary size
//! (normalized count), then by the sum of normalized counts over the groups in
//! the denominator scope, and finally scaled to a percentage.
//!
//! Because the dictionary size is shared by every group of a category, the
//! relative bias equals the group's share of the raw hits in its scope; the
//! normalization only matters when comparing across categories.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::Taxonomy;
use crate::error::{Error, Result};
use crate::lexicon::{CountsTable, Lexicon};

/// Which groups share a denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorScope {
    /// Every group, baseline included.
    #[default]
    All,
    /// Groups of the same demographic category share a denominator.
    PerCategory,
    /// Every group except the baseline.
    TargetsOnly,
}

impl fmt::Display for DenominatorScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenominatorScope::All => "all",
            DenominatorScope::PerCategory => "per_category",
            DenominatorScope::TargetsOnly => "targets_only",
        })
    }
}

impl FromStr for DenominatorScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(DenominatorScope::All),
            "per_category" => Ok(DenominatorScope::PerCategory),
            "targets_only" => Ok(DenominatorScope::TargetsOnly),
            other => Err(Error::config(format!(
                "unknown denominator scope '{other}' (expected all, per_category or targets_only)"
            ))),
        }
    }
}

pub fn normalized_count(raw: u64, dict_size: usize) -> Result<f64> {
    if dict_size == 0 {
        return Err(Error::config("dictionary is empty; cannot normalize"));
    }
    Ok(raw as f64 / dict_size as f64)
}

/// A group's share of the scope total. `no_detections` is set, and `value` is
/// zero, when nothing in the scope was detected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Share {
    pub value: f64,
    pub no_detections: bool,
}

pub fn relative_bias(norms: &IndexMap<String, f64>, group: &str) -> Result<Share> {
    let own = *norms
        .get(group)
        .ok_or_else(|| Error::analysis(format!("group '{group}' is not in the denominator scope")))?;
    let total: f64 = norms.values().sum();
    if total == 0.0 {
        return Ok(Share {
            value: 0.0,
            no_detections: true,
        });
    }
    Ok(Share {
        value: own / total,
        no_detections: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCell {
    pub demographic_category: String,
    pub group_id: String,
    pub category: String,
    pub raw_count: u64,
    pub dict_size: usize,
    pub normalized_count: f64,
    pub relative_bias: f64,
    pub relative_bias_pct: f64,
    pub no_detections: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasOptions {
    pub scope: DenominatorScope,
    /// Whether baseline cells are reported (they may still count towards the
    /// denominator, depending on `scope`).
    pub include_baseline: bool,
}

impl Default for BiasOptions {
    fn default() -> Self {
        BiasOptions {
            scope: DenominatorScope::All,
            include_baseline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTable {
    pub scope: DenominatorScope,
    pub include_baseline: bool,
    /// Term categories in lexicon order.
    pub categories: Vec<String>,
    /// Reported groups in taxonomy order.
    pub groups: Vec<String>,
    /// Denominator partitions: each inner list shares one denominator.
    pub partitions: Vec<Vec<String>>,
    /// Group-major, then category order.
    pub cells: Vec<BiasCell>,
}

impl BiasTable {
    pub fn cell(&self, group: &str, category: &str) -> Option<&BiasCell> {
        self.cells
            .iter()
            .find(|c| c.group_id == group && c.category == category)
    }
}

fn partitions(taxonomy: &Taxonomy, scope: DenominatorScope) -> Vec<Vec<String>> {
    match scope {
        DenominatorScope::All => vec![taxonomy.groups.iter().map(|g| g.id.clone()).collect()],
        DenominatorScope::TargetsOnly => vec![taxonomy.targets().map(|g| g.id.clone()).collect()],
        DenominatorScope::PerCategory => taxonomy
            .categories
            .iter()
            .map(|c| {
                taxonomy
                    .groups
                    .iter()
                    .filter(|g| g.category == c.id)
                    .map(|g| g.id.clone())
                    .collect::<Vec<_>>()
            })
            .filter(|p| !p.is_empty())
            .collect(),
    }
}

pub fn bias_table(
    counts: &CountsTable,
    lexicon: &Lexicon,
    taxonomy: &Taxonomy,
    options: BiasOptions,
) -> Result<BiasTable> {
    let lex_ids = lexicon.category_ids();
    if counts.categories() != lex_ids.as_slice() {
        return Err(Error::Validation {
            issues: vec![format!(
                "counts categories {:?} do not match lexicon categories {:?}",
                counts.categories(),
                lex_ids
            )],
        });
    }
    let counts = counts.align_to(taxonomy)?;
    let parts = partitions(taxonomy, options.scope);
    let baseline = taxonomy.baseline().id.clone();

    let mut by_cell: IndexMap<(String, String), BiasCell> = IndexMap::new();
    for part in &parts {
        for (ci, cat) in lex_ids.iter().enumerate() {
            let dict_size = lexicon.dictionaries()[ci].len();
            let mut norms = IndexMap::new();
            for g in part {
                let raw = counts.group(g).expect("aligned counts cover taxonomy").raw_count(ci);
                norms.insert(g.clone(), normalized_count(raw, dict_size)?);
            }
            for g in part {
                if *g == baseline && !options.include_baseline {
                    continue;
                }
                let share = relative_bias(&norms, g)?;
                let raw = counts.group(g).expect("aligned").raw_count(ci);
                let group = taxonomy.group(g).expect("partition built from taxonomy");
                by_cell.insert(
                    (g.clone(), cat.clone()),
                    BiasCell {
                        demographic_category: group.category.clone(),
                        group_id: g.clone(),
                        category: cat.clone(),
                        raw_count: raw,
                        dict_size,
                        normalized_count: norms[g],
                        relative_bias: share.value,
                        relative_bias_pct: 100.0 * share.value,
                        no_detections: share.no_detections,
                    },
                );
            }
        }
    }

    // Emit in taxonomy order regardless of partition layout.
    let mut groups = Vec::new();
    let mut cells = Vec::new();
    for g in &taxonomy.groups {
        let mut any = false;
        for cat in &lex_ids {
            if let Some(cell) = by_cell.shift_remove(&(g.id.clone(), cat.clone())) {
                cells.push(cell);
                any = true;
            }
        }
        if any {
            groups.push(g.id.clone());
        }
    }

    Ok(BiasTable {
        scope: options.scope,
        include_baseline: options.include_baseline,
        categories: lex_ids,
        groups,
        partitions: parts,
        cells,
    })
}
